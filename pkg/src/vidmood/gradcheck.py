"""Finite-difference verification of reverse-mode gradients.

Central differences in float64: perturb one coordinate at a time by h,
re-evaluate the scalar objective, and compare the quotient against the
analytic gradient. Relative error uses max(1, |a|, |n|) in the
denominator so tiny gradients don't inflate the ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, no_grad

__all__ = ["GradCheckResult", "gradcheck", "numeric_gradient"]


@dataclass
class GradCheckResult:
    """Outcome of a finite-difference sweep over one or more tensors."""

    max_rel_error: float
    per_input: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4
    checked: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"gradcheck {status}: max rel err {self.max_rel_error:.3e}"
            f" over {self.checked} coordinates (tol {self.tolerance:.1e})"
        )


def numeric_gradient(fn, x: Tensor, h: float = 1e-5, coords=None) -> np.ndarray:
    """Central-difference gradient of scalar ``fn()`` wrt tensor ``x``.

    ``fn`` must read ``x.data`` afresh on every call. ``coords`` optionally
    restricts the sweep to a subset of flat indices.
    """
    if x.data.dtype != np.float64:
        raise ValueError("finite differences need float64 inputs")
    flat = x.data.reshape(-1)
    grad = np.zeros_like(flat)
    indices = range(flat.size) if coords is None else coords
    with no_grad():
        for i in indices:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(fn().data)
            flat[i] = orig - h
            fm = float(fn().data)
            flat[i] = orig
            grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)


def gradcheck(
    fn,
    inputs: dict[str, Tensor],
    h: float = 1e-5,
    tolerance: float = 1e-4,
    max_coords_per_input: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckResult:
    """Compare analytic and numeric gradients of scalar ``fn()``.

    ``inputs`` maps names to float64 tensors with ``requires_grad=True``
    that ``fn`` closes over. Large tensors can be spot-checked by sampling
    ``max_coords_per_input`` coordinates.
    """
    for name, t in inputs.items():
        if t.data.dtype != np.float64:
            raise ValueError(f"input {name!r} must be float64 for gradcheck")
        t.zero_grad()

    out = fn()
    out.backward()
    analytic = {}
    for name, t in inputs.items():
        if t.grad is None:
            raise ValueError(f"no gradient reached input {name!r}")
        analytic[name] = t.grad.copy()
        t.zero_grad()

    result = GradCheckResult(max_rel_error=0.0, tolerance=tolerance)
    for name, t in inputs.items():
        n = t.data.size
        if max_coords_per_input is not None and n > max_coords_per_input:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(n, size=max_coords_per_input, replace=False)
        else:
            coords = np.arange(n)
        num = numeric_gradient(fn, t, h=h, coords=coords).reshape(-1)
        ana = analytic[name].reshape(-1)
        errs = np.abs(ana[coords] - num[coords]) / np.maximum(
            1.0, np.maximum(np.abs(ana[coords]), np.abs(num[coords]))
        )
        worst = float(errs.max()) if len(coords) else 0.0
        result.per_input[name] = worst
        result.max_rel_error = max(result.max_rel_error, worst)
        result.checked += len(coords)
    return result
