"""Command-line entry point: ``ctmdp <command> --model FILE [options]``.

Exit codes: 0 success, 1 usage, 2 validation or certification failure,
3 infeasible constrained problem, 4 internal numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import errors
from .conditions import (
    check_condition2,
    check_condition5,
    check_transformed_drift,
    certificates_from_json,
    condition5_to_condition2,
    trivial_lyapunov,
)
from .model import family_from_dict, read_json, read_model_file, validate_model
from .policies import policy_from_json, policy_to_json
from .reduction import build_dtmdp, survival_factor
from .simulate import estimate_discounted_cost, trajectories_csv
from .solver import extract_greedy_policy, policy_evaluation, solve_constrained_lp, value_iteration
from .transform import back_transform_value, build_w_transform
from .transition import QFunction, honesty_defect, kc_residual, truncated_qfunction

log = logging.getLogger("ctmdp")

EXIT_USAGE, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_NUMERIC = 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _clean(obj):
    """Make values JSON-safe: infinities become strings, numpy scalars plain."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(payload, out: str | None) -> None:
    text = json.dumps(_clean(payload), indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(args):
    if not args.model:
        raise _Usage("--model is required for this command")
    model, block = read_model_file(args.model, args.truncation)
    if args.cert:
        block = read_json(args.cert)
    return model, block


class _Usage(Exception):
    pass


def _per_state(values, labels) -> dict:
    return {str(lab): v for lab, v in zip(labels, values)}


def cmd_validate(args) -> int:
    data = read_json(args.model) if args.model else None
    if data is None:
        raise _Usage("--model is required")
    try:
        model, _ = read_model_file(args.model, args.truncation)
    except errors.ValidationError as exc:
        _emit({"valid": False, "violations": exc.violations}, args.out)
        return EXIT_INVALID
    except errors.SchemaError as exc:
        _emit({"valid": False, "violations": [str(exc)]}, args.out)
        return EXIT_INVALID
    report = validate_model(model)
    _emit(
        {
            "valid": report.ok,
            "violations": report.violations,
            "states": model.n_states,
            "actions": model.n_actions,
            "constraints": model.n_costs - 1,
        },
        args.out,
    )
    return 0 if report.ok else EXIT_INVALID


def cmd_certify(args) -> int:
    model, block = _load(args)
    cert1, lyap, c5 = certificates_from_json(block, model)
    labels = model.labels
    out = {"condition1": {**cert1.to_json(labels), "rho_attained": cert1.rho_attained, "L_attained": cert1.L_attained, "passed": True}}
    ok = True
    if c5 is not None:
        rep5 = check_condition5(model, cert1, c5)
        out["condition5"] = rep5.to_json()
        ok &= rep5.passed
        if rep5.passed and lyap is None:
            lyap = condition5_to_condition2(c5, cert1, model)
            out["lyapunov_from_condition5"] = lyap.to_json(labels)
    if lyap is None:
        lyap = trivial_lyapunov(model, cert1)
    rep2 = check_condition2(model, cert1, lyap)
    out["condition2"] = rep2.to_json()
    repd = check_transformed_drift(model, cert1, lyap)
    out["transformed_drift"] = repd.to_json()
    ok &= rep2.passed and repd.passed
    out["passed"] = ok
    _emit(out, args.out)
    return 0 if ok else EXIT_INVALID


def cmd_transform(args) -> int:
    model, block = _load(args)
    cert1, _, _ = certificates_from_json(block, model)
    _emit(build_w_transform(model, cert1).to_dict(), args.out)
    return 0


def _reduced(args):
    model, block = _load(args)
    cert1, _, _ = certificates_from_json(block, model)
    return model, cert1, build_dtmdp(build_w_transform(model, cert1))


def cmd_reduce(args) -> int:
    _, _, d = _reduced(args)
    _emit(d.to_dict(), args.out)
    return 0


def cmd_solve(args) -> int:
    model, cert, d = _reduced(args)
    V, report = value_iteration(d, args.eps)
    policy = extract_greedy_policy(d, V)
    ctmdp = V.ctmdp(d)
    x0 = model.initial
    _emit(
        {
            "states": list(model.labels),
            "values": {"dtmdp": V.values[: model.n_states + 1], "ctmdp": ctmdp},
            "initial_value": {"dtmdp": V.values[x0], "ctmdp": ctmdp[x0]},
            "policy": policy_to_json(policy, model.labels),
            "report": report.to_json(),
        },
        args.out,
    )
    return 0


def cmd_solve_constrained(args) -> int:
    model, cert, d = _reduced(args)
    x0 = model.initial if args.x0 is None else model.index_of(args.x0)
    policy, occ, report = solve_constrained_lp(d, d.scaled_bounds(x0), x0)
    scale = lambda v: float(cert.w[x0] * (v + d.shift / d.residual_discount))  # noqa: E731
    reeval = [float(policy_evaluation(d, policy, i).values[x0]) for i in range(d.n_costs)]
    occupation = {}
    for x, a in zip(*np.nonzero(occ.mu > 0)):
        occupation.setdefault(d.labels[x], {})[str(a)] = occ.mu[x, a]
    _emit(
        {
            "initial": model.labels[x0],
            "objective": {"dtmdp": report.objective, "ctmdp": scale(report.objective)},
            "constraints": {
                "dtmdp": report.constraint_values,
                "ctmdp": [scale(v) for v in report.constraint_values],
                "bounds": list(model.bounds),
            },
            "policy_values": {"dtmdp": reeval, "ctmdp": [scale(v) for v in reeval]},
            "policy": policy_to_json(policy, model.labels),
            "occupation_measure": occupation,
            "report": report.to_json(),
        },
        args.out,
    )
    return 0


def cmd_simulate(args) -> int:
    model, block = _load(args)
    cert1, _, _ = certificates_from_json(block, model)
    if args.policy:
        policy = policy_from_json(read_json(args.policy), model.labels, model.n_actions)
    else:
        d = build_dtmdp(build_w_transform(model, cert1))
        policy = extract_greedy_policy(d, value_iteration(d, args.eps)[0])
    x0 = model.initial if args.x0 is None else model.index_of(args.x0)
    est = estimate_discounted_cost(
        model, policy, x0, args.cost_index, n_traj=args.ntraj, horizon=args.horizon, seed=args.seed, cert=cert1
    )
    if args.dump_trajectories:
        Path(args.dump_trajectories).write_text(
            trajectories_csv(model, policy, x0, est.horizon, args.seed, min(args.ntraj, args.dump_count))
        )
    _emit(est.to_json(), args.out)
    return 0


def cmd_verify(args) -> int:
    from .corpus import standard_corpus
    from .verify import verify_model

    if args.model:
        model, block = _load(args)
        cert1, lyap, c5 = certificates_from_json(block, model)
        if lyap is None and c5 is not None:
            lyap = condition5_to_condition2(c5, cert1, model)
        cases = [(Path(args.model).stem, model, cert1, lyap)]
    else:
        cases = [(name, m, c, None) for name, m, c in standard_corpus()]
    results = {}
    ok = True
    for name, m, cert, lyap in cases:
        rows = verify_model(m, cert, lyap, seed=args.seed, n_traj=args.ntraj, n_max=args.nmax)
        results[name] = rows
        ok &= all(r["passed"] for r in rows)
        for r in rows:
            log.info("%s %s %s", name, r["check"], "PASS" if r["passed"] else "FAIL")
    _emit({"passed": ok, "results": results}, args.out)
    return 0 if ok else EXIT_INVALID


def cmd_diagnose(args) -> int:
    """CSV rows ``x, t, defect, kc_residual`` for the model chain."""
    model, block = _load(args)
    data = read_json(args.model)
    if args.leaky:
        if "family" not in data:
            raise _Usage("--leaky needs a model file with a family block")
        q = truncated_qfunction(family_from_dict(data["family"], args.truncation), leaky=True)
    else:
        cert1, _, _ = certificates_from_json(block, model)
        d = build_dtmdp(build_w_transform(model, cert1))
        policy = extract_greedy_policy(d, value_iteration(d, args.eps)[0])
        q = QFunction.from_generator(model.generator(policy))
    lines = ["x,t,defect,kc_residual"]
    for t in args.times:
        defect = honesty_defect(q, t, n_max=args.nmax)
        kc = kc_residual(q, 0.0, t / 2.0, t, n_max=args.nmax)
        for x, lab in enumerate(model.labels):
            lines.append(f"{lab},{float(t)!r},{float(defect[x])!r},{float(kc)!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "certify": cmd_certify,
    "transform": cmd_transform,
    "reduce": cmd_reduce,
    "solve": cmd_solve,
    "solve-constrained": cmd_solve_constrained,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "diagnose": cmd_diagnose,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctmdp", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--model", help="model JSON file")
    parser.add_argument("--cert", help="certificate JSON file (overrides an embedded block)")
    parser.add_argument("--out", help="output path (default: stdout)")
    parser.add_argument("--eps", type=float, default=1e-9, help="value-iteration accuracy")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--ntraj", type=int, default=10_000)
    parser.add_argument("--horizon", type=float, default=None)
    parser.add_argument("--nmax", type=int, default=64, help="Feller series terms")
    parser.add_argument("--truncation", type=int, default=None, help="override the family truncation level")
    parser.add_argument("--leaky", action="store_true", help="leaky boundary for family diagnostics")
    parser.add_argument("--policy", help="policy JSON for simulate")
    parser.add_argument("--x0", help="initial state label")
    parser.add_argument("--cost-index", type=int, default=0)
    parser.add_argument("--dump-trajectories", help="write per-trajectory CSV here")
    parser.add_argument("--dump-count", type=int, default=100)
    parser.add_argument("--times", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (_Usage, FileNotFoundError) as exc:
        print(f"ctmdp: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except errors.Infeasible as exc:
        print(f"ctmdp: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (
        errors.ParseError,
        errors.SchemaError,
        errors.ValidationError,
        errors.FamilyError,
        errors.DomainError,
        errors.DriftViolation,
        errors.NegativeDeltaMass,
    ) as exc:
        print(f"ctmdp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except errors.CtmdpError as exc:
        print(f"ctmdp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
