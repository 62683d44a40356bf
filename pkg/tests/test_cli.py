import json
from pathlib import Path

import pytest

from ctmdp.cli import run

MODELS = Path(__file__).resolve().parent.parent / "models"


def call(tmp_path, *argv, name="out.json"):
    out = tmp_path / name
    code = run([*argv, "--out", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() and name.endswith(".json") else None)


def test_certify_pure_birth_echoes_rho(tmp_path):
    code, data = call(tmp_path, "certify", "--model", str(MODELS / "pure_birth_m4.json"), "--cert", str(MODELS / "pure_birth_cert.json"))
    assert code == 0
    assert data["condition1"]["rho"] == 1.0
    assert data["passed"]


def test_certify_embedded_lyapunov(tmp_path):
    code, data = call(tmp_path, "certify", "--model", str(MODELS / "pure_birth_m8.json"))
    assert code == 0
    assert data["condition2"]["ratio_profile"][:3] == [2.0, 3.0, 4.0]
    assert data["transformed_drift"]["passed"]


def test_certify_failure_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    data = json.loads((MODELS / "pure_birth_m4.json").read_text())
    data["certificate"] = {"w": 1, "rho": 1, "lyapunov": {"w_prime": [1, 2, 30, 4], "rho_prime": 2}}
    bad.write_text(json.dumps(data))
    code, out = call(tmp_path, "certify", "--model", str(bad))
    assert code == 2
    assert not out["passed"]


def test_drift_violation_exit_code(tmp_path):
    m = tmp_path / "m.json"
    m.write_text(json.dumps({
        "states": ["a", "b"], "actions": [[0], [0]], "rates": [["a", 0, "b", 3]],
        "costs": [[]], "alpha": 1, "certificate": {"w": [1, 10]},
    }))
    assert run(["certify", "--model", str(m)]) == 2


def test_solve_single_state(tmp_path):
    code, data = call(tmp_path, "solve", "--model", str(MODELS / "single_state.json"))
    assert code == 0
    assert data["values"]["ctmdp"] == [pytest.approx(5.0, abs=1e-9)]
    assert data["initial_value"]["ctmdp"] == pytest.approx(5.0, abs=1e-9)


def test_reduce_pure_birth_row(tmp_path):
    code, data = call(tmp_path, "reduce", "--model", str(MODELS / "pure_birth_m4.json"), "--cert", str(MODELS / "pure_birth_cert.json"))
    assert code == 0
    row = {y: p for x, a, y, p in data["kernel"] if x == 1}
    assert row == {2: 0.5, "delta": 0.25, "x_inf": 0.25}


def test_transform_output_loads_back(tmp_path):
    from ctmdp.model import load_model

    code, _ = call(tmp_path, "transform", "--model", str(MODELS / "two_state.json"))
    assert code == 0
    assert load_model(tmp_path / "out.json").n_states == 3


def test_solve_constrained(tmp_path):
    code, data = call(tmp_path, "solve-constrained", "--model", str(MODELS / "lp_example.json"))
    assert code == 0
    assert data["objective"]["ctmdp"] == pytest.approx(0.5, abs=1e-9)
    assert data["constraints"]["ctmdp"] == [pytest.approx(1.0, abs=1e-9)]
    assert data["policy"] == {"s": {"0": pytest.approx(0.5), "1": pytest.approx(0.5)}}


def test_infeasible_exit_code(tmp_path):
    m = json.loads((MODELS / "lp_example.json").read_text())
    m["bounds"] = [-1]
    p = tmp_path / "m.json"
    p.write_text(json.dumps(m))
    assert run(["solve-constrained", "--model", str(p)]) == 3


def test_simulate_with_policy_file(tmp_path):
    pol = tmp_path / "p.json"
    pol.write_text(json.dumps({"a": 0, "b": 0}))
    csv = tmp_path / "traj.csv"
    code, data = call(
        tmp_path, "simulate", "--model", str(MODELS / "two_state.json"), "--policy", str(pol),
        "--ntraj", "3000", "--seed", "4", "--dump-trajectories", str(csv),
    )
    assert code == 0
    assert set(data) >= {"mean", "stderr", "tail_bound", "n", "seed"}
    # (alpha I - Q)^{-1} c at a: (1 + 3 * 1/2) / 3
    assert abs(data["mean"] - 5 / 6) <= 4 * data["stderr"] + data["tail_bound"]
    assert csv.read_text().startswith("trajectory,t,state,action\n")


def test_outputs_are_byte_identical(tmp_path):
    for cmd in (["solve"], ["simulate", "--ntraj", "300"], ["reduce"], ["certify"]):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        base = [*cmd, "--model", str(MODELS / "pure_birth_m8.json")]
        assert run([*base, "--out", str(a)]) == 0
        assert run([*base, "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


def test_validate(tmp_path):
    code, data = call(tmp_path, "validate", "--model", str(MODELS / "pure_birth_m8.json"))
    assert code == 0 and data["valid"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"states": ["a"], "actions": [[0]], "rates": [], "costs": [[["a", 2, 1]]], "alpha": 1}))
    code, data = call(tmp_path, "validate", "--model", str(bad))
    assert code == 2 and data["violations"]


def test_usage_errors(tmp_path, capsys):
    assert run(["solve"]) == 1
    assert run(["solve", "--model", str(tmp_path / "missing.json")]) == 1
    with pytest.raises(SystemExit) as exc:
        run(["no-such-command"])
    assert exc.value.code == 1


def test_parse_error_exit(tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{")
    assert run(["validate", "--model", str(p)]) == 2


def test_verify_single_model(tmp_path):
    code, data = call(tmp_path, "verify", "--model", str(MODELS / "two_state.json"), "--ntraj", "500")
    assert code == 0
    rows = data["results"]["two_state"]
    assert {r["check"] for r in rows} >= {"lemma3_residual", "honesty_defect", "kc_residual", "vi_vs_bruteforce", "mc_vs_resolvent"}
    assert all(r["passed"] for r in rows)


def test_diagnose_csv(tmp_path):
    out = tmp_path / "diag.csv"
    code = run(["diagnose", "--model", str(MODELS / "pure_birth_m4.json"), "--leaky", "--times", "1.0", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x,t,defect,kc_residual"
    assert len(lines) == 5
    defect_1 = float(lines[1].split(",")[2])
    assert defect_1 == pytest.approx((1 - 2.718281828459045 ** -2) ** 4, abs=1e-9)


def test_truncation_override(tmp_path):
    code, data = call(tmp_path, "validate", "--model", str(MODELS / "pure_birth_m4.json"), "--truncation", "6")
    assert code == 0 and data["states"] == 6


def test_verify_bundled_corpus(tmp_path):
    code, data = call(tmp_path, "verify", "--ntraj", "500")
    assert code == 0
    assert set(data["results"]) == {"single_state", "two_state", "pure_birth_2x_M8", "random_0", "random_1", "random_2"}
