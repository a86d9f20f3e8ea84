"""Claim-by-claim verification harness."""

from .decide import implied_constant, isotonic_residual, one_sided, trend, two_sided
from .runner import VerificationReport, environment, run_claim, run_claims, run_suite
from .scenarios import REGISTRY, ScenarioResult
from .suite import ClaimSpec, builtin_suite_path, load_suite, parse_suite

__all__ = [
    "REGISTRY", "ClaimSpec", "ScenarioResult", "VerificationReport", "builtin_suite_path", "environment",
    "implied_constant", "isotonic_residual", "load_suite", "one_sided", "parse_suite", "run_claim", "run_claims",
    "run_suite", "trend", "two_sided",
]
