"""Runs claims, applies decision rules and assembles reports."""

from __future__ import annotations

import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
import scipy

from .. import __version__, kernels
from ..errors import MsdeError, ScenarioError
from ..fields import atomic_write
from . import decide
from .scenarios import REGISTRY, ScenarioResult
from .suite import ClaimSpec, load_suite

ROW_KEYS = ("id", "lhs", "rhs", "std_error", "implied_constant", "pass")


def _finite_or_none(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def _decide(spec: ClaimSpec, res: ScenarioResult):
    if spec.decision == "trend":
        series = res.series if res.series is not None else [res.lhs]
        ses = res.series_std_errors or [res.std_error] * len(series)
        resid, ok = decide.trend(series, ses, spec.tolerance)
        return ok, {"isotonic_residual": resid, "series": list(series)}
    if res.rhs is None:
        # no configured constant: the implied constant is the finding
        c = decide.implied_constant(res.lhs, res.rhs_unit)
        return bool(c is not None and math.isfinite(c)), {}
    if spec.decision == "one-sided":
        return decide.one_sided(res.lhs, res.rhs, res.std_error), {}
    return decide.two_sided(res.lhs, res.rhs, res.std_error, spec.tolerance), {}


def run_claim(spec: ClaimSpec, workers: int = 1) -> dict:
    """One report row; scenario failures become rows with an ``error`` field and pass = false."""
    start = time.perf_counter()
    row = {"id": spec.id, "scenario": spec.scenario, "decision": spec.decision, "tolerance": spec.tolerance,
           "seed": spec.seed, "lhs": None, "rhs": None, "std_error": None, "implied_constant": None,
           "pass": False}
    fn = REGISTRY.get(spec.scenario)
    try:
        if fn is None:
            raise ScenarioError(f"unknown scenario {spec.scenario!r}")
        res = fn(spec.params, spec.budget, spec.seed, workers)
        ok, extra = _decide(spec, res)
        unit = res.rhs_unit
        if unit is None and spec.decision == "one-sided" and res.rhs is not None:
            unit = res.rhs
        row.update({
            "lhs": _finite_or_none(res.lhs), "rhs": _finite_or_none(res.rhs), "std_error": float(res.std_error),
            "implied_constant": _finite_or_none(decide.implied_constant(res.lhs, unit))
            if spec.decision == "one-sided" else None,
            "pass": ok,
        })
        if extra or res.extras:
            row["details"] = _jsonable({**res.extras, **extra})
    except MsdeError as exc:
        row["error"] = {"type": type(exc).__name__, "message": str(exc)}
    row["wall_time"] = time.perf_counter() - start
    return row


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj


@dataclass
class VerificationReport:
    rows: list
    environment: dict
    wall_time: float
    suite: Optional[str] = None

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.rows)

    def to_json(self) -> dict:
        return {"suite": self.suite, "rows": self.rows, "environment": self.environment,
                "wall_time": self.wall_time, "pass": self.passed}

    def table(self) -> str:
        head = ("id", "lhs", "rhs", "std_error", "implied_C", "pass")
        body = []
        for r in self.rows:
            def fmt(v):
                return "-" if v is None else (f"{v:.6g}" if isinstance(v, float) else str(v))
            status = "PASS" if r["pass"] else ("ERROR" if "error" in r else "FAIL")
            body.append((r["id"], fmt(r["lhs"]), fmt(r["rhs"]), fmt(r["std_error"]), fmt(r["implied_constant"]),
                         status))
        widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(head)]
        lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths))]
        lines.append("  ".join("-" * w for w in widths))
        lines += ["  ".join(c.ljust(w) for c, w in zip(b, widths)) for b in body]
        return "\n".join(lines)

    def write(self, json_path: str, table_path: Optional[str] = None) -> None:
        atomic_write(json_path, json.dumps(self.to_json(), indent=2).encode())
        if table_path:
            atomic_write(table_path, (self.table() + "\n").encode())


def environment(seed_note: Optional[dict] = None) -> dict:
    env = {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
           "msde": __version__, "kernel_backend": kernels.BACKEND}
    if seed_note:
        env["seeds"] = seed_note
    return env


def run_claims(claims: list, workers: int = 1, claim_workers: int = 1) -> list:
    """Rows in suite order; claims may run concurrently, each with ``workers`` inner threads."""
    if claim_workers <= 1 or len(claims) <= 1:
        return [run_claim(c, workers) for c in claims]
    with ThreadPoolExecutor(max_workers=claim_workers) as pool:
        return list(pool.map(lambda c: run_claim(c, workers), claims))


def run_suite(path: str, workers: int = 1, claim_workers: int = 1) -> VerificationReport:
    start = time.perf_counter()
    claims = load_suite(path)
    rows = run_claims(claims, workers, claim_workers)
    return VerificationReport(rows, environment({c.id: c.seed for c in claims}), time.perf_counter() - start,
                              path)
