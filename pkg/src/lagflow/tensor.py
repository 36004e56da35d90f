"""Small dense tensors, index contraction and finite-difference derivatives.

Everything here works on plain numpy arrays with leading "batch" axes so
that a single call can evaluate a field at many chart points at once.
Index conventions used throughout the package:

* ``gamma[..., a, b, c]`` is the Christoffel symbol with upper index ``a``,
  derivative (direction) index ``b`` and field index ``c``.
* ``riemann[..., a, d, b, e]`` is ``(R(d_b, d_e) d_d)^a``.
* Derivative indices produced by :func:`fd_derivative` are appended last.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import FdEvaluationError, NonFiniteError, SingularMatrixError, VarianceError

__all__ = [
    "DenseTensor",
    "FdScheme",
    "contract",
    "fd_derivative",
    "matrix_inverse",
    "require_finite",
]

MAX_RANK = 5


def require_finite(x, what="input"):
    """Return ``x`` as a float array, raising if it holds NaN or Inf."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}")
    return arr


@dataclass(frozen=True)
class DenseTensor:
    """A dense tensor with an upper/lower tag per index.

    ``variance`` is a string such as ``"ull"`` with one character per index,
    ``'u'`` for upper and ``'l'`` for lower.
    """

    entries: np.ndarray
    variance: str

    def __post_init__(self):
        entries = require_finite(self.entries, "tensor entries")
        object.__setattr__(self, "entries", entries)
        if len(self.variance) != entries.ndim:
            raise VarianceError(
                f"variance {self.variance!r} does not match rank {entries.ndim}"
            )
        if set(self.variance) - {"u", "l"}:
            raise VarianceError(f"variance tags must be 'u' or 'l', got {self.variance!r}")
        if entries.ndim > MAX_RANK:
            raise VarianceError(f"rank {entries.ndim} exceeds the supported maximum {MAX_RANK}")

    @property
    def rank(self) -> int:
        return self.entries.ndim

    @property
    def dims(self) -> tuple[int, ...]:
        return self.entries.shape


def contract(a: DenseTensor, b: DenseTensor, pairs: Sequence[tuple[int, int]]) -> DenseTensor:
    """Einstein-sum ``a`` against ``b`` over the given ``(index_in_a, index_in_b)`` pairs.

    Each pair must join one upper and one lower index of equal dimension.  The
    result carries the uncontracted indices of ``a`` followed by those of ``b``.
    """
    ia = [p[0] for p in pairs]
    ib = [p[1] for p in pairs]
    if len(set(ia)) != len(ia) or len(set(ib)) != len(ib):
        raise VarianceError("an index may be contracted at most once")
    for i, j in pairs:
        if not (0 <= i < a.rank and 0 <= j < b.rank):
            raise VarianceError(f"index pair {(i, j)} out of range")
        if a.dims[i] != b.dims[j]:
            raise VarianceError(f"dimension mismatch {a.dims[i]} != {b.dims[j]} in pair {(i, j)}")
        if a.variance[i] == b.variance[j]:
            raise VarianceError(f"pair {(i, j)} joins two {a.variance[i]!r} indices")
    out = np.tensordot(a.entries, b.entries, axes=(ia, ib))
    variance = "".join(v for k, v in enumerate(a.variance) if k not in ia)
    variance += "".join(v for k, v in enumerate(b.variance) if k not in ib)
    return DenseTensor(np.asarray(out, dtype=float), variance)


@dataclass(frozen=True)
class FdScheme:
    """Central finite-difference settings.

    ``step`` is the chart-coordinate step used when differentiating fields on
    the ambient chart.  ``order`` and ``richardson`` are shared by the chart
    derivatives and the periodic grid derivatives of the submanifold module.
    """

    step: float = 1e-4
    order: int = 4
    richardson: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.step) and self.step > 0):
            raise ValueError(f"FD step must be positive, got {self.step}")
        if self.order not in (2, 4):
            raise ValueError(f"FD order must be 2 or 4, got {self.order}")

    @property
    def effective_order(self) -> int:
        """Convergence order of the combined stencil (Richardson adds two)."""
        return self.order + 2 if self.richardson else self.order

    @property
    def radius(self) -> float:
        """Largest offset from the evaluation point touched by the stencil."""
        return self.step * (2 if self.order == 4 else 1)

    def with_step(self, step: float) -> "FdScheme":
        return FdScheme(step=step, order=self.order, richardson=self.richardson)


# offsets and weights (to be divided by the step)
_FIRST = {
    2: (np.array([-1.0, 1.0]), np.array([-0.5, 0.5])),
    4: (np.array([-2.0, -1.0, 1.0, 2.0]), np.array([1.0, -8.0, 8.0, -1.0]) / 12.0),
}


def _stencil(scheme: FdScheme):
    """Offsets and weights of the full (possibly extrapolated) first-derivative stencil."""
    offs, wts = _FIRST[scheme.order]
    h = scheme.step
    if not scheme.richardson:
        return offs * h, wts / h
    f = 2.0 ** scheme.order
    # D = (f * D(h/2) - D(h)) / (f - 1)
    offsets = np.concatenate([offs * h / 2, offs * h])
    weights = np.concatenate([wts / (h / 2) * f, -wts / h]) / (f - 1.0)
    return offsets, weights


@dataclass(frozen=True)
class _Stacked:
    entries: np.ndarray
    variance: str


def _pointwise(field: Callable, pts) -> _Stacked:
    batch = pts.shape[:-1]
    first = field(pts[(0,) * len(batch)])
    if not isinstance(first, DenseTensor):
        raise VarianceError("field rejected batched points but does not return a DenseTensor")
    out = np.empty(batch + first.dims)
    for idx in np.ndindex(*batch):
        out[idx] = field(pts[idx]).entries
    return _Stacked(out, first.variance)


def fd_derivative(field: Callable, at, scheme: FdScheme | None = None):
    """Partial derivatives of ``field`` at the chart points ``at``.

    ``field`` maps an array of points with shape ``(..., d)`` to values of
    shape ``(..., *tshape)`` and must broadcast over leading axes.  The result
    has shape ``(..., *tshape, d)``: the derivative index is appended last.
    If ``field`` returns :class:`DenseTensor` the result is a DenseTensor with
    one extra lower index.
    """
    scheme = scheme or FdScheme()
    at = require_finite(at, "evaluation point")
    d = at.shape[-1]
    offsets, weights = _stencil(scheme)
    m = len(offsets)
    # every (direction, offset) pair in one batched evaluation
    shift = np.zeros((d, m, d))
    for k in range(d):
        shift[k, :, k] = offsets
    pts = at[None, None, ...] + shift.reshape(d, m, *([1] * (at.ndim - 1)), d)
    try:
        try:
            raw = field(pts)
        except VarianceError:
            # a DenseTensor field built for single points: evaluate node by node
            raw = _pointwise(field, pts)
    except (ValueError, FloatingPointError, ArithmeticError) as exc:
        raise FdEvaluationError(f"field evaluation failed inside the stencil: {exc}") from exc
    wrapped = isinstance(raw, (DenseTensor, _Stacked))
    vals = raw.entries if wrapped else np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise FdEvaluationError("non-finite field value inside the stencil")
    deriv = np.tensordot(weights, vals, axes=([0], [1]))  # (d, ..., *tshape)
    deriv = np.moveaxis(deriv, 0, -1)
    if wrapped:
        return DenseTensor(deriv, raw.variance + "l")
    return deriv


def matrix_inverse(a, max_condition: float = 1e12):
    """Inverse of a square matrix (or a stack of them, batched over leading axes).

    Raises :class:`SingularMatrixError` when any matrix is singular or its
    2-norm condition number exceeds ``max_condition``.
    """
    wrapped = isinstance(a, DenseTensor)
    arr = a.entries if wrapped else require_finite(a, "matrix")
    if arr.ndim < 2 or arr.shape[-1] != arr.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {arr.shape}")
    cond = np.linalg.cond(arr)
    if not np.all(np.isfinite(cond)) or np.any(cond > max_condition):
        worst = float(np.max(np.where(np.isfinite(cond), cond, np.inf)))
        raise SingularMatrixError(f"matrix condition number {worst:.3e} exceeds {max_condition:.1e}")
    inv = np.linalg.inv(arr)
    if wrapped:
        flipped = "".join("l" if v == "u" else "u" for v in a.variance)
        return DenseTensor(inv, flipped)
    return inv
