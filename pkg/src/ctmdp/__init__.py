"""Discounted continuous-time MDPs with cost rates bounded below by a drift function.

Pipeline: ``model`` -> ``conditions`` (drift certificate) -> ``transform``
(w-transformed generator) -> ``reduction`` (total-cost DTMDP) -> ``solver``.
``transition`` and ``simulate`` provide independent oracles.
"""

from .conditions import (
    CheckReport,
    Condition5Certificate,
    DriftCertificate,
    LyapunovCertificate,
    check_condition1,
    check_condition2,
    check_condition5,
    check_transformed_drift,
    condition5_to_condition2,
)
from .model import CtmdpModel, ModelFamily, RateKernel, build_family, load_model, validate_model
from .policies import DeterministicPolicy, StationaryPolicy
from .reduction import DtmdpModel, build_dtmdp, reduce_model
from .simulate import estimate_discounted_cost, simulate_trajectory
from .solver import (
    enumerate_bruteforce,
    extract_greedy_policy,
    policy_evaluation,
    solve_constrained_lp,
    value_iteration,
)
from .transform import TransformedModel, back_transform_value, build_w_transform, verify_lemma3
from .transition import QFunction, feller_series, honesty_defect, kc_residual, uniformization

__version__ = "0.1.0"
