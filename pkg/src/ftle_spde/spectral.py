"""Spectral-Galerkin model descriptions with quadratic mode coupling.

A model is a finite set of orthonormal basis modes, a diagonal linear
operator ``A`` acting as ``-lambda_k`` on mode ``k`` (eigenvalues are stored
as the nonnegative ``lambda_k``), and a quadratic form ``B(u, v)`` given by a
sparse mode-coupling table.  The basis splits into a kernel part ``N``
(``lambda_k == 0``) and a stable part ``S`` (``lambda_k >= mu > 0``).

Two presets are provided:

* ``burgers_model``: ``[0, pi]`` with Dirichlet conditions, orthonormal sine
  basis ``e_k = sqrt(2/pi) sin(kx)``, ``lambda_k = k^2 - 1`` and
  ``B(u, v) = 0.5 * d/dx (u v)``.  Mode 1 spans the kernel.
* ``ks_model``: ``[0, 2pi]`` periodic, real Fourier basis (constant plus
  cosine/sine pairs), ``lambda = w^4`` for wavenumber ``w`` and
  ``B(u, v) = u_x v_x``.  The constant mode spans the kernel.

Custom models are built by passing eigenvalues and an explicit coupling
table to ``ModelSpec`` directly.

Coupling tables store coordinates ``(m, j, k, c)`` meaning
``B(u, v)_m += c * u_j * v_k``; application is a gather-multiply followed by
a segmented sum, so the summation order is fixed and results do not depend
on batching.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "NonStableInput",
    "SpectralField",
    "CouplingTable",
    "ModelSpec",
    "burgers_model",
    "ks_model",
    "apply_A",
    "apply_As_inverse",
    "bilinear_B",
    "project_c",
    "project_s",
]

# Projection weight of a product of two orthonormal sine modes on [0, pi]
# back onto the sine basis: (1/(2*pi)) * sqrt(pi/2) = 1/sqrt(8*pi).
SINE_PRODUCT_WEIGHT = 1.0 / np.sqrt(8.0 * np.pi)


class NonStableInput(ValueError):
    """Raised when an operation restricted to the stable subspace receives
    a vector with a nonzero kernel component."""


@dataclass(frozen=True)
class SpectralField:
    """Coefficient vector in a model's orthonormal basis.

    ``coeffs`` has shape ``(n_modes,)``.  Fields returned by the public
    operations are always finite; constructing one from non-finite data
    raises immediately.
    """

    coeffs: np.ndarray
    basis: str

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=float)
        if arr.ndim != 1:
            raise ValueError(f"coeffs must be 1-d, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite coefficients in SpectralField")
        object.__setattr__(self, "coeffs", arr)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


class CouplingTable:
    """Sparse quadratic coupling ``B(u, v)_m = sum_r c_r u_{j_r} v_{k_r}``.

    Entries are canonically sorted by ``(m, j, k)`` and duplicates are
    merged at construction, so the floating-point summation order is fixed.
    A second layout sorted by ``(m, k)`` supports assembling the Jacobian
    ``L(u) = 2 B(u, .)`` as a dense matrix in one segmented sum.
    """

    def __init__(self, n_modes: int, m, j, k, coeff):
        m = np.asarray(m, dtype=np.intp).ravel()
        j = np.asarray(j, dtype=np.intp).ravel()
        k = np.asarray(k, dtype=np.intp).ravel()
        c = np.asarray(coeff, dtype=float).ravel()
        if not (m.shape == j.shape == k.shape == c.shape):
            raise ValueError("coordinate arrays must have equal length")
        if m.size and (m.min() < 0 or j.min() < 0 or k.min() < 0
                       or max(m.max(), j.max(), k.max()) >= n_modes):
            raise ValueError("coupling index out of range")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coupling coefficient")

        # Merge duplicates on the linearised (m, j, k) key, then sort.
        lin = (m * n_modes + j) * n_modes + k
        lin_u, inv = np.unique(lin, return_inverse=True)
        c_u = np.bincount(inv, weights=c, minlength=lin_u.size)
        keep = c_u != 0.0
        lin_u, c_u = lin_u[keep], c_u[keep]

        self.n_modes = int(n_modes)
        self.m_idx = lin_u // (n_modes * n_modes)
        self.j_idx = (lin_u // n_modes) % n_modes
        self.k_idx = lin_u % n_modes
        self.coeff = c_u

        self._m_present, counts = np.unique(self.m_idx, return_counts=True)
        self._seg_starts = np.concatenate(([0], np.cumsum(counts[:-1]))).astype(np.intp)

        # Jacobian layout: sorted by q = m * n + k, coefficients doubled
        # because L(u) b = B(u, b) + B(b, u) contracts u into both slots.
        q = self.m_idx * n_modes + self.k_idx
        order = np.lexsort((self.j_idx, q))
        self._q_sorted = q[order]
        self._jq = self.j_idx[order]
        self._cq = 2.0 * self.coeff[order]
        qp = self.m_idx * n_modes + self.j_idx
        order_p = np.lexsort((self.k_idx, qp))
        self._qp_sorted = qp[order_p]
        self._kq = self.k_idx[order_p]
        self._cqp = 2.0 * self.coeff[order_p]
        self._q_present, q_counts = np.unique(self._q_sorted, return_counts=True)
        self._q_starts = np.concatenate(([0], np.cumsum(q_counts[:-1]))).astype(np.intp)
        self._qp_present, qp_counts = np.unique(self._qp_sorted, return_counts=True)
        self._qp_starts = np.concatenate(([0], np.cumsum(qp_counts[:-1]))).astype(np.intp)

    @property
    def n_entries(self) -> int:
        return self.coeff.size

    def bilinear(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Apply ``B`` to coefficient arrays of shape ``(..., n_modes)``."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        out = np.zeros(np.broadcast_shapes(u.shape, v.shape), dtype=float)
        if self.coeff.size == 0:
            return out
        terms = self.coeff * u[..., self.j_idx] * v[..., self.k_idx]
        sums = np.add.reduceat(terms, self._seg_starts, axis=-1)
        out[..., self._m_present] = sums
        return out

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        """Dense ``L(u)`` with ``L(u) b = 2 B(u, b)`` for symmetric use in
        tangent dynamics: ``L[..., m, k] = sum_j (C[m,j,k] + C[m,k,j]) u_j``.
        """
        u = np.asarray(u, dtype=float)
        n = self.n_modes
        flat = np.zeros(u.shape[:-1] + (n * n,), dtype=float)
        if self.coeff.size:
            terms = self._cq * u[..., self._jq]
            halves = np.add.reduceat(terms, self._q_starts, axis=-1)
            flat[..., self._q_present] += 0.5 * halves
            terms_p = self._cqp * u[..., self._kq]
            halves_p = np.add.reduceat(terms_p, self._qp_starts, axis=-1)
            flat[..., self._qp_present] += 0.5 * halves_p
        return flat.reshape(u.shape[:-1] + (n, n))

    def dense_tensor(self) -> np.ndarray:
        """Full ``(n, n, n)`` array with ``T[m, j, k] = C_{mjk}``; for small
        models and cross-checks only."""
        n = self.n_modes
        t = np.zeros((n, n, n))
        t[self.m_idx, self.j_idx, self.k_idx] = self.coeff
        return t


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A spectral model: basis label, eigenvalues, kernel indices, coupling.

    Invariants checked at construction: eigenvalues are finite and
    nonnegative, exactly the kernel modes have eigenvalue zero, the stable
    eigenvalues are bounded below by the spectral gap ``mu > 0``.
    """

    basis: str
    eigenvalues: np.ndarray
    kernel: np.ndarray
    coupling: CouplingTable
    # smoothing exponent of the semigroup against the roughness of B
    # (metadata used in rate predictions, not in the arithmetic)
    alpha: float = 0.5
    stable: np.ndarray = field(init=False)
    mu: float = field(init=False)

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        ker = np.asarray(self.kernel, dtype=np.intp)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("eigenvalues must be a nonempty 1-d array")
        if not np.all(np.isfinite(lam)) or lam.min() < 0:
            raise ValueError("eigenvalues must be finite and >= 0")
        if ker.ndim != 1 or ker.size == 0:
            raise ValueError("kernel must list at least one mode index")
        if np.unique(ker).size != ker.size or ker.min() < 0 or ker.max() >= lam.size:
            raise ValueError("kernel indices must be distinct and in range")
        if np.any(lam[ker] != 0.0):
            raise ValueError("kernel modes must have eigenvalue zero")
        stable = np.setdiff1d(np.arange(lam.size), ker)
        if stable.size == 0:
            raise ValueError("model needs at least one stable mode")
        if np.any(lam[stable] <= 0.0):
            raise ValueError("zero eigenvalue outside the declared kernel")
        if self.coupling.n_modes != lam.size:
            raise ValueError("coupling table size does not match eigenvalues")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "kernel", np.sort(ker))
        object.__setattr__(self, "stable", stable)
        object.__setattr__(self, "mu", float(lam[stable].min()))

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def kernel_dim(self) -> int:
        return self.kernel.size

    def field(self, coeffs) -> SpectralField:
        arr = np.zeros(self.n_modes)
        arr[: len(np.atleast_1d(coeffs))] = coeffs
        return SpectralField(arr, self.basis)

    def check(self, u: SpectralField) -> np.ndarray:
        if u.basis != self.basis:
            raise ValueError(f"field basis {u.basis!r} != model basis {self.basis!r}")
        if u.coeffs.size != self.n_modes:
            raise ValueError("field size does not match model")
        return u.coeffs


def _wrap(m: ModelSpec, coeffs: np.ndarray) -> SpectralField:
    if not np.all(np.isfinite(coeffs)):
        raise FloatingPointError("operation produced non-finite coefficients")
    return SpectralField(coeffs, m.basis)


def apply_A(m: ModelSpec, u: SpectralField) -> SpectralField:
    """Linear operator ``A u``; acts as ``-lambda_k`` on mode ``k``."""
    return _wrap(m, -m.eigenvalues * m.check(u))


def apply_As_inverse(m: ModelSpec, u: SpectralField) -> SpectralField:
    """Solve ``A_s x = u`` on the stable subspace.

    The input must lie in the stable subspace; a kernel component above
    roundoff raises ``NonStableInput`` because ``A`` is not invertible there.
    """
    c = m.check(u)
    ker_mag = np.abs(c[m.kernel]).max() if m.kernel.size else 0.0
    scale = max(1.0, float(np.abs(c).max()))
    if ker_mag > 1e-14 * scale:
        raise NonStableInput(
            f"kernel component {ker_mag:.3e} exceeds tolerance; "
            "A is singular on the kernel")
    out = np.zeros_like(c)
    out[m.stable] = -c[m.stable] / m.eigenvalues[m.stable]
    return _wrap(m, out)


def bilinear_B(m: ModelSpec, u: SpectralField, v: SpectralField) -> SpectralField:
    return _wrap(m, m.coupling.bilinear(m.check(u), m.check(v)))


def project_c(m: ModelSpec, u: SpectralField) -> SpectralField:
    """Orthogonal projection onto the kernel modes."""
    c = m.check(u)
    out = np.zeros_like(c)
    out[m.kernel] = c[m.kernel]
    return _wrap(m, out)


def project_s(m: ModelSpec, u: SpectralField) -> SpectralField:
    """Orthogonal projection onto the stable modes."""
    c = m.check(u)
    out = np.zeros_like(c)
    out[m.stable] = c[m.stable]
    return _wrap(m, out)


def burgers_model(n_modes: int = 32) -> ModelSpec:
    """Sine-basis model on ``[0, pi]``: ``lambda_k = k^2 - 1``,
    ``B(u, v) = 0.5 (u v)_x``.

    For orthonormal modes the product rule
    ``sin(jx) sin(kx) -> cos((j-k)x) - cos((j+k)x)`` gives
    ``B(u, v)_m = g m (sum_{j+k=m} u_j v_k - sum_{|j-k|=m} u_j v_k)`` with
    ``g = 1/sqrt(8 pi)``.
    """
    if n_modes < 2:
        raise ValueError("need at least two modes")
    g = SINE_PRODUCT_WEIGHT
    mm, jj, kk, cc = [], [], [], []
    for m in range(1, n_modes + 1):
        for j in range(1, m):
            mm.append(m - 1); jj.append(j - 1); kk.append(m - j - 1)
            cc.append(g * m)
        for j in range(1, n_modes - m + 1):
            # ordered pairs (j, j+m) and (j+m, j) both carry -g*m
            mm.append(m - 1); jj.append(j - 1); kk.append(j + m - 1)
            cc.append(-g * m)
            mm.append(m - 1); jj.append(j + m - 1); kk.append(j - 1)
            cc.append(-g * m)
    lam = np.array([k * k - 1.0 for k in range(1, n_modes + 1)])
    table = CouplingTable(n_modes, mm, jj, kk, cc)
    return ModelSpec("sine_dirichlet_0_pi", lam, np.array([0]), table)


def _ks_mode_list(n_modes: int):
    # index 0: constant; index 2w-1: cos(wx)/sqrt(pi); index 2w: sin(wx)/sqrt(pi)
    modes = [(0, "c")]
    for i in range(1, n_modes):
        w = (i + 1) // 2
        modes.append((w, "c" if i % 2 == 1 else "s"))
    return modes


def ks_model(n_modes: int = 33) -> ModelSpec:
    """Real-Fourier model on ``[0, 2pi]``: ``lambda = w^4``,
    ``B(u, v) = u_x v_x``.

    ``n_modes`` must be odd so every retained wavenumber keeps both its
    cosine and sine partner; the derivative then maps the span to itself and
    the coupling table equals the exact projected product.
    """
    if n_modes < 3 or n_modes % 2 == 0:
        raise ValueError("n_modes must be odd and >= 3 (constant plus full "
                         "cos/sin pairs)")
    modes = _ks_mode_list(n_modes)
    wmax = (n_modes - 1) // 2

    # Derivative map on basis indices: c_w -> -w s_w, s_w -> +w c_w.
    dcoef = np.zeros(n_modes)
    dtarget = np.zeros(n_modes, dtype=int)
    for i, (w, kind) in enumerate(modes):
        if w == 0:
            continue
        dcoef[i] = -w if kind == "c" else w
        dtarget[i] = 2 * w if kind == "c" else 2 * w - 1

    half = 0.5 / np.sqrt(np.pi)        # cos/sin product onto a cos/sin mode
    onto_const = 1.0 / np.sqrt(2.0 * np.pi)  # cos(0) content onto the constant

    mm, jj, kk, cc = [], [], [], []

    def emit(m_index, i, l, c):
        mm.append(m_index); jj.append(i); kk.append(l); cc.append(c)

    for i in range(n_modes):
        if dcoef[i] == 0.0:
            continue
        wa, kind_a = modes[dtarget[i]]
        for l in range(n_modes):
            if dcoef[l] == 0.0:
                continue
            wb, kind_b = modes[dtarget[l]]
            amp = dcoef[i] * dcoef[l]
            s, d = wa + wb, abs(wa - wb)
            if kind_a == "c" and kind_b == "c":
                if s <= wmax:
                    emit(2 * s - 1, i, l, amp * half)
                if d == 0:
                    emit(0, i, l, amp * onto_const)
                else:
                    emit(2 * d - 1, i, l, amp * half)
            elif kind_a == "s" and kind_b == "s":
                if s <= wmax:
                    emit(2 * s - 1, i, l, -amp * half)
                if d == 0:
                    emit(0, i, l, amp * onto_const)
                else:
                    emit(2 * d - 1, i, l, amp * half)
            else:
                # one sine, one cosine: only sine outputs
                if kind_a == "s":
                    w_s, w_c = wa, wb
                else:
                    w_s, w_c = wb, wa
                if s <= wmax:
                    emit(2 * s, i, l, amp * half)
                dd = w_s - w_c
                if dd > 0:
                    emit(2 * dd, i, l, amp * half)
                elif dd < 0:
                    emit(-2 * dd, i, l, -amp * half)
    lam = np.array([float(w) ** 4 for w, _ in modes])
    table = CouplingTable(n_modes, mm, jj, kk, cc)
    return ModelSpec("fourier_periodic_0_2pi", lam, np.array([0]), table)


def basis_matrix(m: ModelSpec, x: np.ndarray) -> np.ndarray:
    """Evaluate all basis functions at points ``x``: shape ``(n_modes, len(x))``.
    Intended for demos and plotting, not for the hot loops."""
    x = np.asarray(x, dtype=float)
    if m.basis == "sine_dirichlet_0_pi":
        k = np.arange(1, m.n_modes + 1)[:, None]
        return np.sqrt(2.0 / np.pi) * np.sin(k * x[None, :])
    if m.basis == "fourier_periodic_0_2pi":
        rows = []
        for w, kind in _ks_mode_list(m.n_modes):
            if w == 0:
                rows.append(np.full_like(x, 1.0 / np.sqrt(2.0 * np.pi)))
            elif kind == "c":
                rows.append(np.cos(w * x) / np.sqrt(np.pi))
            else:
                rows.append(np.sin(w * x) / np.sqrt(np.pi))
        return np.array(rows)
    raise ValueError(f"no pointwise basis defined for {m.basis!r}")
