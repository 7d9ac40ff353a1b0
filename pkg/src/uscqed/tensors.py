"""Dense complex tensor algebra: pairwise contraction and truncated SVD.

Conventions used throughout the package:

* tensors are numpy ``complex128`` arrays in row-major (C) order,
* axis lists refer to positions in ``tensor.shape``,
* SVD truncation uses a cutoff on the relative squared singular-value
  weight, never on absolute values, so it is scale invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericError, ShapeError

# Singular values closer than this (relatively) count as one degenerate
# multiplet; the cutoff never splits such a group.
DEGENERACY_RTOL = 1e-12


@dataclass(frozen=True)
class SvdResult:
    """Truncated SVD of a tensor split into a left and a right axis group."""

    left_isometry: np.ndarray    # left extents + (rank,)
    singular_values: np.ndarray  # descending, >= 0
    right_isometry: np.ndarray   # (rank,) + right extents
    discarded_weight: float      # dropped squared weight / total squared weight

    @property
    def rank(self) -> int:
        return int(self.singular_values.size)


def _check_axes(axes, ndim: int, name: str) -> list[int]:
    axes = [int(ax) for ax in axes]
    norm = [ax % ndim if -ndim <= ax < ndim else ax for ax in axes]
    for ax in norm:
        if not 0 <= ax < ndim:
            raise ValueError(f"{name}: axis {ax} out of range for rank-{ndim} tensor")
    if len(set(norm)) != len(norm):
        raise ValueError(f"{name}: repeated axis in {axes}")
    return norm


def contract(a: np.ndarray, axes_a, b: np.ndarray, axes_b) -> np.ndarray:
    """Contract ``a`` with ``b`` over the paired axis lists.

    The result carries the uncontracted axes of ``a`` first, then those of
    ``b``, each in their original order.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    axes_a = _check_axes(axes_a, a.ndim, "axes_a")
    axes_b = _check_axes(axes_b, b.ndim, "axes_b")
    if len(axes_a) != len(axes_b):
        raise ValueError("axes_a and axes_b must have equal length")
    for ax_a, ax_b in zip(axes_a, axes_b):
        if a.shape[ax_a] != b.shape[ax_b]:
            raise ShapeError(
                f"cannot contract axis {ax_a} (extent {a.shape[ax_a]}) of shape "
                f"{a.shape} with axis {ax_b} (extent {b.shape[ax_b]}) of shape {b.shape}")
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def _svd(m: np.ndarray):
    # gesdd is fast but occasionally fails on ill-conditioned input; fall
    # back to the slower, more robust gesvd.
    try:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesdd")
    except scipy.linalg.LinAlgError:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")


def truncation_rank(s: np.ndarray, max_rank: int, cutoff: float) -> int:
    """Kept rank under the relative squared-weight cutoff.

    Keeps every value with ``s_i^2 / sum(s^2)`` strictly above ``cutoff``
    (at least one), extends the kept set so a degenerate multiplet is never
    split by the cutoff, then caps at ``max_rank``.  The cap is hard: it may
    split a multiplet, and the discarded weight accounts for that honestly.

    Values below ``s[0] * 1e-14`` are numerical noise and are never kept,
    regardless of cutoff; their relative weight is below 1e-28.
    """
    total = float(np.sum(s * s))
    if total == 0.0:
        return min(1, max_rank, s.size) if s.size else 0
    nonzero = max(int(np.sum(s > s[0] * 1e-14)), 1)
    keep = int(np.sum(s * s > cutoff * total))
    keep = max(keep, 1)
    while keep < nonzero and s[keep] >= s[keep - 1] * (1.0 - DEGENERACY_RTOL):
        keep += 1
    return min(keep, nonzero, max_rank)


def split_matrix(m: np.ndarray, max_rank: int, cutoff: float):
    """Truncated SVD of a matrix; returns ``(u, s, vh, discarded_weight)``."""
    if max_rank < 1:
        raise ValueError(f"max_rank must be >= 1, got {max_rank}")
    if cutoff < 0.0:
        raise ValueError(f"cutoff must be >= 0, got {cutoff}")
    if not np.all(np.isfinite(m)):
        raise NumericError("input to SVD contains non-finite entries")
    u, s, vh = _svd(m)
    keep = truncation_rank(s, max_rank, cutoff)
    total = float(np.sum(s * s))
    discarded = float(np.sum(s[keep:] ** 2)) / total if total > 0.0 else 0.0
    return u[:, :keep], s[:keep], vh[:keep], discarded


def svd_split(t: np.ndarray, left_axes, max_rank: int, cutoff: float = 0.0) -> SvdResult:
    """Split ``t`` across the bipartition selected by ``left_axes``.

    ``left_axes`` must be a nonempty strict subset of the axes of ``t``.
    The returned isometries carry the original extents of their axis group
    plus the kept-rank bond.
    """
    t = np.asarray(t, dtype=complex)
    left_axes = _check_axes(left_axes, t.ndim, "left_axes")
    if not left_axes or len(left_axes) >= t.ndim:
        raise ValueError("left_axes must be a nonempty strict subset of the tensor axes")
    right_axes = [ax for ax in range(t.ndim) if ax not in left_axes]
    lshape = tuple(t.shape[ax] for ax in left_axes)
    rshape = tuple(t.shape[ax] for ax in right_axes)
    m = t.transpose(left_axes + right_axes).reshape(
        int(np.prod(lshape)), int(np.prod(rshape)))
    u, s, vh, discarded = split_matrix(m, max_rank, cutoff)
    keep = s.size
    return SvdResult(
        left_isometry=np.ascontiguousarray(u.reshape(lshape + (keep,))),
        singular_values=s,
        right_isometry=np.ascontiguousarray(vh.reshape((keep,) + rshape)),
        discarded_weight=discarded,
    )
