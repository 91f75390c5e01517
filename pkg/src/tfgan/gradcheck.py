"""Central-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class GradCheckReport:
    name: str
    passed: bool
    max_rel_error: float
    n_checked: int
    worst_index: tuple | None = None
    analytic: float | None = None
    numeric: float | None = None
    skipped: list = field(default_factory=list)
    reason: str = ""

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        line = f"{status} {self.name}: max rel err {self.max_rel_error:.3e} over {self.n_checked} coords"
        if self.skipped:
            line += f" ({len(self.skipped)} skipped at kinks)"
        if not self.passed and self.worst_index is not None:
            line += f"; worst {self.worst_index}: analytic {self.analytic!r} numeric {self.numeric!r}"
        if self.reason:
            line += f" [{self.reason}]"
        return line


def grad_check(
    f: Callable[[Tensor], Tensor],
    x,
    eps: float = 1e-5,
    tol: float = 1e-4,
    *,
    name: str = "f",
    max_coords: int | None = None,
    seed: int = 0,
    kink_tol: float = 1e-1,
    min_scale: float = 1e-6,
) -> GradCheckReport:
    """Compare the backward-pass gradient of scalar ``f`` at ``x`` with central differences.

    Evaluation happens in float64. Relative error per coordinate is
    ``|a - n| / max(|a|, |n|, min_scale)``. A coordinate where the one-sided
    slopes disagree by more than ``kink_tol`` (relative) sits on a kink of a
    piecewise-linear op and is reported as skipped. ``max_coords`` limits the
    check to a random subset of coordinates.
    """
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)

    try:
        xt = Tensor(x0.copy(), requires_grad=True)
        y = f(xt)
        y.backward()
        analytic = xt.grad if xt.grad is not None else np.zeros_like(x0)
        f0 = float(y.data)
    except (FloatingPointError, ValueError, ZeroDivisionError) as exc:
        return GradCheckReport(name, False, float("inf"), 0, reason=f"analytic pass failed: {exc}")
    if not np.all(np.isfinite(analytic)) or not np.isfinite(f0):
        return GradCheckReport(name, False, float("inf"), 0, reason="non-finite analytic gradient or value")

    coords = np.arange(x0.size)
    if max_coords is not None and x0.size > max_coords:
        coords = np.sort(np.random.default_rng(seed).choice(x0.size, max_coords, replace=False))

    def evaluate(arr: np.ndarray) -> float:
        with no_grad():
            return float(f(Tensor(arr)).data)

    worst = (-1.0, None, None, None)
    skipped = []
    checked = 0
    xp = x0.copy()
    for flat in coords:
        idx = np.unravel_index(int(flat), x0.shape)
        orig = xp[idx]
        try:
            xp[idx] = orig + eps
            fp = evaluate(xp)
            xp[idx] = orig - eps
            fm = evaluate(xp)
        except (FloatingPointError, ValueError, ZeroDivisionError) as exc:
            return GradCheckReport(name, False, float("inf"), checked, idx, reason=f"evaluation failed: {exc}")
        finally:
            xp[idx] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            return GradCheckReport(name, False, float("inf"), checked, idx, reason="non-finite function value")
        numeric = (fp - fm) / (2 * eps)
        slope_gap = abs((fp - f0) - (f0 - fm)) / eps
        if slope_gap > kink_tol * max(1.0, abs(numeric)):
            skipped.append(tuple(int(i) for i in idx))
            continue
        a = float(analytic[idx])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), min_scale)
        checked += 1
        if rel > worst[0]:
            worst = (rel, tuple(int(i) for i in idx), a, numeric)

    max_rel = max(worst[0], 0.0)
    return GradCheckReport(
        name=name,
        passed=max_rel <= tol,
        max_rel_error=max_rel,
        n_checked=checked,
        worst_index=worst[1],
        analytic=worst[2],
        numeric=worst[3],
        skipped=skipped,
    )
