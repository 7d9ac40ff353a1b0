"""Matrix product states and operators on an open chain.

Site tensors are rank 3 with axes ``(left bond, physical, right bond)``;
MPO tensors are rank 4 with axes ``(left bond, phys out, phys in, right
bond)``.  Boundary bonds have extent 1.  Overall normalization is tracked
in a ``log_norm`` accumulator instead of rescaling tensors, so imaginary
time flows never underflow.

All public functions treat states as immutable and return new objects;
tensors of unchanged sites are shared, not copied.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import ConfigError, ResourceError, ShapeError
from .tensors import split_matrix

# Hard ceiling on one intermediate tensor during MPO application (bytes).
ZIPUP_BYTE_BUDGET = 512 * 2**20

ORTHO_NONE = 0xFFFFFFFFFFFFFFFF  # checkpoint sentinel for ortho_center=None


class MPS:
    """Open-chain matrix product state."""

    __slots__ = ("sites", "ortho_center", "log_norm")

    def __init__(self, sites: Sequence[np.ndarray], ortho_center=None,
                 log_norm: float = 0.0):
        sites = [np.asarray(a, dtype=complex) for a in sites]
        if not sites:
            raise ValueError("an MPS needs at least one site")
        if sites[0].shape[0] != 1 or sites[-1].shape[2] != 1:
            raise ShapeError("boundary bonds must have extent 1")
        for i, a in enumerate(sites):
            if a.ndim != 3:
                raise ShapeError(f"site {i} is rank {a.ndim}, expected 3")
            if i and sites[i - 1].shape[2] != a.shape[0]:
                raise ShapeError(
                    f"bond mismatch between sites {i - 1} and {i}: "
                    f"{sites[i - 1].shape[2]} vs {a.shape[0]}")
        if ortho_center is not None and not 0 <= ortho_center < len(sites):
            raise ValueError(f"ortho_center {ortho_center} out of range")
        self.sites = sites
        self.ortho_center = ortho_center
        self.log_norm = float(log_norm)

    @property
    def L(self) -> int:
        return len(self.sites)

    @property
    def local_dims(self) -> list[int]:
        return [a.shape[1] for a in self.sites]

    @property
    def bond_dims(self) -> list[int]:
        return [a.shape[2] for a in self.sites[:-1]]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)

    def copy(self) -> "MPS":
        return MPS(list(self.sites), self.ortho_center, self.log_norm)


class MPO:
    """Open-chain matrix product operator."""

    __slots__ = ("sites",)

    def __init__(self, sites: Sequence[np.ndarray]):
        sites = [np.asarray(w, dtype=complex) for w in sites]
        if sites[0].shape[0] != 1 or sites[-1].shape[3] != 1:
            raise ShapeError("boundary bonds must have extent 1")
        for i, w in enumerate(sites):
            if w.ndim != 4:
                raise ShapeError(f"MPO site {i} is rank {w.ndim}, expected 4")
            if w.shape[1] != w.shape[2]:
                raise ShapeError(f"MPO site {i} is not square in its physical axes")
            if i and sites[i - 1].shape[3] != w.shape[0]:
                raise ShapeError(f"MPO bond mismatch at sites {i - 1}/{i}")
        self.sites = sites

    @property
    def L(self) -> int:
        return len(self.sites)

    @property
    def local_dims(self) -> list[int]:
        return [w.shape[1] for w in self.sites]

    @property
    def max_bond(self) -> int:
        return max((w.shape[3] for w in self.sites[:-1]), default=1)


# ---------------------------------------------------------------------------
# construction

def product_state(local_dims: Sequence[int], occupations: Sequence[int]) -> MPS:
    """Bond-1 basis state with the given occupation index per site."""
    if len(local_dims) != len(occupations):
        raise ValueError("local_dims and occupations differ in length")
    sites = []
    for d, n in zip(local_dims, occupations):
        if not 0 <= n < d:
            raise ValueError(f"occupation {n} out of range for local dimension {d}")
        a = np.zeros((1, d, 1), dtype=complex)
        a[0, n, 0] = 1.0
        sites.append(a)
    return MPS(sites, ortho_center=0, log_norm=0.0)


def identity_mpo(local_dims: Sequence[int]) -> MPO:
    return MPO([np.eye(d, dtype=complex).reshape(1, d, d, 1) for d in local_dims])


def wavepacket_mpo(phi: np.ndarray, local_dims: Sequence[int],
                   creation_ops=None) -> MPO:
    """Bond-2 MPO for the packet creation operator ``sum_x phi_x adag_x``.

    ``creation_ops`` optionally overrides the local creation matrix per site
    (dict site -> matrix), needed where the photon mode is fused with the
    scatterer.  Elsewhere the truncated Fock-space ``adag`` is built from
    ``local_dims``.
    """
    phi = np.asarray(phi, dtype=complex)
    L = len(local_dims)
    if phi.shape != (L,):
        raise ShapeError(f"phi has shape {phi.shape}, expected ({L},)")
    total = float(np.sum(np.abs(phi) ** 2))
    if abs(total - 1.0) > 1e-10:
        raise ValueError(f"packet coefficients not normalized: sum |phi|^2 = {total}")
    creation_ops = creation_ops or {}

    def adag_at(x):
        if x in creation_ops:
            return np.asarray(creation_ops[x], dtype=complex)
        d = local_dims[x]
        op = np.zeros((d, d), dtype=complex)
        for n in range(d - 1):
            op[n + 1, n] = math.sqrt(n + 1)
        return op

    sites = []
    for x in range(L):
        d = local_dims[x]
        ad = adag_at(x)
        if ad.shape != (d, d):
            raise ShapeError(f"creation operator at site {x} must be {d}x{d}")
        eye = np.eye(d, dtype=complex)
        if L == 1:
            w = (phi[0] * ad).reshape(1, d, d, 1)
        elif x == 0:
            w = np.zeros((1, d, d, 2), dtype=complex)
            w[0, :, :, 0] = phi[x] * ad
            w[0, :, :, 1] = eye
        elif x == L - 1:
            w = np.zeros((2, d, d, 1), dtype=complex)
            w[0, :, :, 0] = eye
            w[1, :, :, 0] = phi[x] * ad
        else:
            w = np.zeros((2, d, d, 2), dtype=complex)
            w[0, :, :, 0] = eye
            w[1, :, :, 0] = phi[x] * ad
            w[1, :, :, 1] = eye
        sites.append(w)
    return MPO(sites)


# ---------------------------------------------------------------------------
# canonical form

def _qr_step(sites, i):
    """Left-orthogonalize site i, absorbing the remainder into site i+1."""
    l, d, r = sites[i].shape
    q, rm = np.linalg.qr(sites[i].reshape(l * d, r))
    sites[i] = q.reshape(l, d, -1)
    sites[i + 1] = np.tensordot(rm, sites[i + 1], axes=(1, 0))


def _rq_step(sites, i):
    """Right-orthogonalize site i, absorbing the remainder into site i-1."""
    l, d, r = sites[i].shape
    rm, q = scipy.linalg.rq(sites[i].reshape(l, d * r), mode="economic")
    sites[i] = q.reshape(-1, d, r)
    sites[i - 1] = np.tensordot(sites[i - 1], rm, axes=(2, 0))


def canonicalize(state: MPS, center: int) -> MPS:
    """Move the orthogonality center to ``center`` without truncation."""
    L = state.L
    if not 0 <= center < L:
        raise ValueError(f"center {center} out of range for L={L}")
    sites = list(state.sites)
    c0 = state.ortho_center
    left_from = 0 if (c0 is None or c0 > center) else c0
    right_from = L - 1 if (c0 is None or c0 < center) else c0
    for i in range(left_from, center):
        _qr_step(sites, i)
    for i in range(right_from, center, -1):
        _rq_step(sites, i)
    return MPS(sites, ortho_center=center, log_norm=state.log_norm)


def norm(state: MPS) -> float:
    """Norm including the log_norm prefactor."""
    if state.ortho_center is not None:
        raw = np.linalg.norm(state.sites[state.ortho_center])
    else:
        raw = math.sqrt(max(overlap(state, state).real, 0.0) *
                        math.exp(-2.0 * state.log_norm))
    return raw * math.exp(state.log_norm)


def normalize(state: MPS, center: int = None) -> MPS:
    """Unit-norm copy with log_norm reset to zero."""
    if center is None:
        center = state.ortho_center if state.ortho_center is not None else 0
    out = canonicalize(state, center)
    sites = list(out.sites)
    raw = np.linalg.norm(sites[center])
    if raw == 0.0:
        raise ValueError("cannot normalize a zero state")
    sites[center] = sites[center] / raw
    return MPS(sites, ortho_center=center, log_norm=0.0)


# ---------------------------------------------------------------------------
# expectation values and overlaps

def _transfer(env, bra_site, ket_site, op=None):
    """env (bl, kl) -> (br, kr), optionally with a local operator inserted."""
    t = np.tensordot(env, ket_site, axes=(1, 0))           # bl d kr
    if op is not None:
        t = np.tensordot(t, op.T, axes=(1, 0))             # bl kr d'
        t = t.transpose(0, 2, 1)                           # bl d' kr
    return np.tensordot(bra_site.conj(), t, axes=((0, 1), (0, 1)))  # br kr


def overlap(a: MPS, b: MPS) -> complex:
    """<a|b> including both accumulated log_norm factors."""
    if a.L != b.L:
        raise ShapeError("states have different lengths")
    if a.local_dims != b.local_dims:
        raise ShapeError("states have different local dimensions")
    env = np.ones((1, 1), dtype=complex)
    for sa, sb in zip(a.sites, b.sites):
        env = _transfer(env, sa, sb)
    return complex(env[0, 0]) * math.exp(a.log_norm + b.log_norm)


def expectation_local(state: MPS, op: np.ndarray, site: int) -> complex:
    """Normalized single-site expectation value."""
    op = np.asarray(op)
    d = state.local_dims[site]
    if op.shape != (d, d):
        raise ShapeError(f"operator shape {op.shape} does not match local dim {d}")
    s = canonicalize(state, site)
    c = s.sites[site]
    num = np.tensordot(np.tensordot(c.conj(), op, axes=(1, 0)),
                       c, axes=((0, 2, 1), (0, 1, 2)))
    den = np.vdot(c, c)
    return complex(num / den)


def site_expectations(state: MPS, ops: Sequence[np.ndarray]) -> np.ndarray:
    """Normalized ``<op_x>`` for one operator per site, in one O(L D^3) sweep."""
    if len(ops) != state.L:
        raise ShapeError("need exactly one operator per site")
    s = canonicalize(state, 0)
    sites = list(s.sites)
    out = np.empty(state.L, dtype=complex)
    for i in range(state.L):
        c = sites[i]
        num = np.tensordot(np.tensordot(c.conj(), ops[i], axes=(1, 0)),
                           c, axes=((0, 2, 1), (0, 1, 2)))
        den = np.vdot(c, c)
        out[i] = num / den
        if i + 1 < state.L:
            _qr_step(sites, i)
    return out


def product_expectation(state: MPS, ops: Sequence[np.ndarray]) -> complex:
    """Normalized expectation of a product operator (one factor per site)."""
    if len(ops) != state.L:
        raise ShapeError("need exactly one operator per site")
    env = np.ones((1, 1), dtype=complex)
    envn = np.ones((1, 1), dtype=complex)
    for a, op in zip(state.sites, ops):
        env = _transfer(env, a, a, op)
        envn = _transfer(envn, a, a)
    return complex(env[0, 0] / envn[0, 0])


def correlator(state: MPS, op_i: np.ndarray, site_i: int,
               op_j: np.ndarray, site_j: int) -> complex:
    """Normalized two-point function ``<op_i op_j>`` at distinct sites."""
    if site_i == site_j:
        raise ValueError("correlator sites must differ")
    env = np.ones((1, 1), dtype=complex)
    envn = np.ones((1, 1), dtype=complex)
    for x, a in enumerate(state.sites):
        op = op_i if x == site_i else op_j if x == site_j else None
        env = _transfer(env, a, a, op)
        envn = _transfer(envn, a, a)
    return complex(env[0, 0] / envn[0, 0])


def correlator_matrix(state: MPS, a_ops: Sequence[np.ndarray]) -> np.ndarray:
    """Hermitian matrix ``C[x, y] = <adag_x a_y>`` for the given lowering ops."""
    L = state.L
    s = normalize(state, 0)
    sites = list(s.sites)
    C = np.zeros((L, L), dtype=complex)
    for x in range(L):
        a_x = np.asarray(a_ops[x])
        c = sites[x]
        n_x = a_x.conj().T @ a_x
        C[x, x] = np.tensordot(np.tensordot(c.conj(), n_x, axes=(1, 0)),
                               c, axes=((0, 2, 1), (0, 1, 2)))
        # with the center at x, the chain right of y closes to the identity
        env = _transfer(np.eye(c.shape[0], dtype=complex), c, c, a_x.conj().T)
        for y in range(x + 1, L):
            val = _transfer(env, sites[y], sites[y], a_ops[y])
            C[x, y] = np.trace(val)
            C[y, x] = np.conj(C[x, y])
            if y + 1 < L:
                env = _transfer(env, sites[y], sites[y])
        if x + 1 < L:
            _qr_step(sites, x)
    return C


def local_matrix_elements(bra: MPS, ket: MPS, ops: Sequence[np.ndarray]) -> np.ndarray:
    """Unnormalized ``<bra| op_x |ket>`` for each site x, including log_norms."""
    L = bra.L
    if ket.L != L or bra.local_dims != ket.local_dims:
        raise ShapeError("bra and ket are incompatible")
    lefts = [np.ones((1, 1), dtype=complex)]
    for i in range(L - 1):
        lefts.append(_transfer(lefts[-1], bra.sites[i], ket.sites[i]))
    right = np.ones((1, 1), dtype=complex)
    scale = math.exp(bra.log_norm + ket.log_norm)
    out = np.empty(L, dtype=complex)
    for i in range(L - 1, -1, -1):
        mid = _transfer(lefts[i], bra.sites[i], ket.sites[i], ops[i])
        out[i] = np.tensordot(mid, right, axes=((0, 1), (0, 1))) * scale
        t = np.tensordot(ket.sites[i], right, axes=(2, 1))     # kl d br
        right = np.tensordot(bra.sites[i].conj(), t, axes=((1, 2), (1, 2)))
    return out


# ---------------------------------------------------------------------------
# arithmetic and compression

def add(a: MPS, b: MPS, coeff_a: complex = 1.0, coeff_b: complex = 1.0) -> MPS:
    """Direct-sum superposition ``coeff_a |a> + coeff_b |b>``.

    The log_norm prefactors are folded into the first tensor, so they should
    be moderate (normalized inputs are the intended use).
    """
    if a.local_dims != b.local_dims:
        raise ShapeError("cannot add states with different local dimensions")
    L = a.L
    ca = coeff_a * math.exp(a.log_norm)
    cb = coeff_b * math.exp(b.log_norm)
    if L == 1:
        return MPS([ca * a.sites[0] + cb * b.sites[0]], ortho_center=0)
    sites = []
    for i in range(L):
        ta, tb = a.sites[i], b.sites[i]
        la, d, ra = ta.shape
        lb, _, rb = tb.shape
        if i == 0:
            w = np.zeros((1, d, ra + rb), dtype=complex)
            w[:, :, :ra] = ca * ta
            w[:, :, ra:] = cb * tb
        elif i == L - 1:
            w = np.zeros((la + lb, d, 1), dtype=complex)
            w[:la] = ta
            w[la:] = tb
        else:
            w = np.zeros((la + lb, d, ra + rb), dtype=complex)
            w[:la, :, :ra] = ta
            w[la:, :, ra:] = tb
        sites.append(w)
    return MPS(sites, ortho_center=None, log_norm=0.0)


def compress(state: MPS, max_rank: int, cutoff: float):
    """Truncate every bond to ``max_rank`` under the relative cutoff.

    Returns ``(state, truncation_error)`` with the error defined as the
    total lost squared weight, ``1 - prod(1 - w_bond)``.
    """
    s = canonicalize(state, state.L - 1)
    sites = list(s.sites)
    kept = 1.0
    for i in range(state.L - 1, 0, -1):
        l, d, r = sites[i].shape
        u, sv, vh, w = split_matrix(sites[i].reshape(l, d * r), max_rank, cutoff)
        kept *= 1.0 - w
        sites[i] = vh.reshape(-1, d, r)
        sites[i - 1] = np.tensordot(sites[i - 1], u * sv, axes=(2, 0))
    return MPS(sites, ortho_center=0, log_norm=state.log_norm), 1.0 - kept


def mpo_expectation(state: MPS, op: MPO) -> complex:
    """Normalized ``<psi|O|psi>``."""
    if op.local_dims != state.local_dims:
        raise ShapeError("operator and state local dimensions differ")
    env = np.ones((1, 1, 1), dtype=complex)    # (bra, mpo, ket)
    envn = np.ones((1, 1), dtype=complex)
    for a, w in zip(state.sites, op.sites):
        t = np.tensordot(env, a, axes=(2, 0))            # bl wl d kr
        t = np.tensordot(w, t, axes=((0, 2), (1, 2)))    # o wr bl kr
        env = np.tensordot(a.conj(), t, axes=((0, 1), (2, 0)))  # br wr kr
        envn = _transfer(envn, a, a)
    return complex(env[0, 0, 0] / envn[0, 0])


def _zipup(state: MPS, op: MPO, max_rank: int, cutoff: float):
    """Left-to-right zip-up application with per-bond truncation."""
    L = state.L
    m = np.ones((1, 1, 1), dtype=complex)      # (new left, mpo left, state left)
    sites = []
    kept = 1.0
    for i in range(L):
        a, w = state.sites[i], op.sites[i]
        nl = m.shape[0]
        need = nl * w.shape[1] * w.shape[3] * a.shape[2] * 16
        if need > ZIPUP_BYTE_BUDGET:
            raise ResourceError(
                f"MPO application explodes at bond {i}: "
                f"intermediate tensor of {need} bytes exceeds the budget")
        t = np.tensordot(m, a, axes=(2, 0))              # nl wl d ar
        t = np.tensordot(t, w, axes=((1, 2), (0, 2)))    # nl ar o wr
        t = t.transpose(0, 2, 3, 1)                      # nl o wr ar
        if i == L - 1:
            sites.append(t.reshape(nl, t.shape[1], 1))
            break
        sh = t.shape
        u, sv, vh, wgt = split_matrix(t.reshape(sh[0] * sh[1], sh[2] * sh[3]),
                                      max_rank, cutoff)
        kept *= 1.0 - wgt
        sites.append(u.reshape(sh[0], sh[1], -1))
        m = (sv[:, None] * vh).reshape(-1, sh[2], sh[3])
    return MPS(sites, ortho_center=L - 1, log_norm=state.log_norm), 1.0 - kept


def _fit_sweep(fit_sites, state: MPS, op: MPO):
    """One two-way variational sweep maximizing overlap with ``O|state>``.

    ``fit_sites`` must enter left-canonicalized with the center at the last
    site; it leaves in the same gauge.
    """
    L = state.L
    lefts = [np.ones((1, 1, 1), dtype=complex)]  # (fit, mpo, state)
    for i in range(L - 1):
        t = np.tensordot(lefts[-1], state.sites[i], axes=(2, 0))   # f wl d ar
        t = np.tensordot(t, op.sites[i], axes=((1, 2), (0, 2)))    # f ar o wr
        env = np.tensordot(fit_sites[i].conj(), t, axes=((0, 1), (0, 2)))
        lefts.append(env.transpose(0, 2, 1))                       # fr wr ar
    right = np.ones((1, 1, 1), dtype=complex)                      # (f, w, state)
    for i in range(L - 1, -1, -1):
        t = np.tensordot(state.sites[i], right, axes=(2, 2))       # al d fr wr
        t = np.tensordot(op.sites[i], t, axes=((2, 3), (1, 3)))    # wl o al fr
        b = np.tensordot(lefts[i], t, axes=((1, 2), (0, 2)))       # fl o fr
        if i > 0:
            l, d, r = b.shape
            _, q = scipy.linalg.rq(b.reshape(l, d * r), mode="economic")
            fit_sites[i] = q.reshape(-1, d, r)
            right = np.tensordot(t, fit_sites[i].conj(),
                                 axes=((1, 3), (1, 2))).transpose(2, 0, 1)
        else:
            fit_sites[i] = b
    # sweep back to restore the left-canonical gauge with center at L-1
    for i in range(L - 1):
        l, d, r = fit_sites[i].shape
        q, rm = np.linalg.qr(fit_sites[i].reshape(l * d, r))
        fit_sites[i] = q.reshape(l, d, -1)
        fit_sites[i + 1] = np.tensordot(rm, fit_sites[i + 1], axes=(1, 0))


def apply_mpo(state: MPS, op: MPO, max_rank: int, cutoff: float):
    """Apply an MPO with zip-up truncation; returns ``(state, truncation_error)``.

    A variational fitting sweep polishes the result when the zip-up pass
    truncated more than 1e-8 of the weight; the reported error is the
    accumulated discarded weight of the truncating passes (an upper bound
    after polishing).
    """
    if op.local_dims != state.local_dims:
        raise ShapeError("operator and state local dimensions differ")
    # zip up with some intermediate headroom, then compress to the target rank
    mid_rank = max_rank + max(4, max_rank // 2)
    out, err1 = _zipup(state, op, mid_rank, cutoff)
    out, err2 = compress(out, max_rank, cutoff)
    err = 1.0 - (1.0 - err1) * (1.0 - err2)
    if err > 1e-8:
        sites = list(canonicalize(out, out.L - 1).sites)
        _fit_sweep(sites, state, op)
        out = MPS(sites, ortho_center=out.L - 1, log_norm=state.log_norm)
    return canonicalize(out, 0), err


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"MPS1"


def save_mps(state: MPS, path) -> None:
    """Binary checkpoint: magic, L, per-site header+data, log_norm, center."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        np.array([state.L], dtype="<u8").tofile(f)
        for a in state.sites:
            l, d, r = a.shape
            np.array([d, l, r], dtype="<u8").tofile(f)
            np.ascontiguousarray(a).astype("<c16", copy=False).tofile(f)
        np.array([state.log_norm], dtype="<f8").tofile(f)
        oc = ORTHO_NONE if state.ortho_center is None else state.ortho_center
        np.array([oc], dtype="<u8").tofile(f)


def load_mps(path) -> MPS:
    """Read a checkpoint written by :func:`save_mps` (bit-exact round trip)."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ConfigError(f"{path}: not an MPS checkpoint (magic {magic!r})")
        (L,) = np.fromfile(f, dtype="<u8", count=1)
        sites = []
        for _ in range(int(L)):
            d, l, r = (int(v) for v in np.fromfile(f, dtype="<u8", count=3))
            data = np.fromfile(f, dtype="<c16", count=l * d * r)
            if data.size != l * d * r:
                raise ConfigError(f"{path}: truncated checkpoint")
            sites.append(data.astype(complex).reshape(l, d, r))
        (log_norm,) = np.fromfile(f, dtype="<f8", count=1)
        (oc,) = np.fromfile(f, dtype="<u8", count=1)
    center = None if int(oc) == ORTHO_NONE else int(oc)
    return MPS(sites, ortho_center=center, log_norm=float(log_norm))
