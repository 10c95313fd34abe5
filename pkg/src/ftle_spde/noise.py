"""Keyed Gaussian noise streams and exact Ornstein-Uhlenbeck updates.

Draws come from the Philox counter-based generator.  A stream is keyed by
``(seed, stream_id)`` and laid out in fixed blocks of ``CHUNK_STEPS`` steps;
block ``c`` sets the third 64-bit counter word to ``c``.  The value drawn
for ``(step, mode)`` therefore depends only on the key and the step index,
never on how many paths run together, which worker produced it, or how much
of the stream was materialised.  Everything downstream (Brownian
increments, OU updates) scales these unit normals, so the same key replayed
with the same ``dt`` reproduces a path bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CHUNK_STEPS",
    "NoiseSpec",
    "NoisePath",
    "EnsembleNoise",
    "InsufficientPathError",
    "default_alphas",
    "normal_block",
    "sample_path",
    "ou_factors",
    "ou_exact_step",
    "rescale_slow",
    "coarsen_increments",
]

# Steps per Philox counter block.  Fixed: it is part of the reproducibility
# contract (changing it would re-map step indices to different draws).
CHUNK_STEPS = 1024

_MASK64 = (1 << 64) - 1


class InsufficientPathError(ValueError):
    """Raised when a requested horizon exceeds the sampled path."""


def default_alphas(n_modes: int) -> np.ndarray:
    """Per-mode noise amplitudes ``alpha_k = 1/k``; mode numbering starts
    at 1 so the first (kernel-side) mode has unit amplitude."""
    return 1.0 / np.arange(1, n_modes + 1, dtype=float)


@dataclass(frozen=True)
class NoiseSpec:
    """Noise description: per-mode amplitudes plus the stream key."""

    alphas: np.ndarray
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("alphas must be a nonempty 1-d array")
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ValueError("alphas must be finite and >= 0")
        object.__setattr__(self, "alphas", a)

    @property
    def n_modes(self) -> int:
        return self.alphas.size

    def with_stream(self, stream_id: int) -> "NoiseSpec":
        return NoiseSpec(self.alphas, self.seed, stream_id)


def normal_block(seed: int, stream_id: int, chunk: int, n_modes: int) -> np.ndarray:
    """Unit normals for one counter block, shape ``(CHUNK_STEPS, n_modes)``."""
    key = np.array([seed & _MASK64, stream_id & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, chunk & _MASK64, 0], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key, counter=counter))
    return gen.standard_normal((CHUNK_STEPS, n_modes))


def draws_for_steps(seed: int, stream_id: int, n_steps: int, n_modes: int) -> np.ndarray:
    """Unit normals for steps ``0..n_steps-1`` of one stream."""
    n_chunks = -(-n_steps // CHUNK_STEPS)
    blocks = [normal_block(seed, stream_id, c, n_modes) for c in range(n_chunks)]
    return np.concatenate(blocks, axis=0)[:n_steps]


class EnsembleNoise:
    """Per-step access to many streams at once.

    ``draws(step)`` returns shape ``(n_streams, n_modes)``.  Blocks are
    cached per chunk; each stream's values are generated from its own key,
    so membership and ordering of the ensemble cannot change any draw.
    """

    def __init__(self, seed: int, stream_ids, n_modes: int):
        self.seed = int(seed)
        self.stream_ids = np.asarray(stream_ids, dtype=np.int64)
        self.n_modes = int(n_modes)
        self._chunk = -1
        self._cache = None

    def draws(self, step: int) -> np.ndarray:
        chunk, offset = divmod(step, CHUNK_STEPS)
        if chunk != self._chunk:
            self._cache = np.stack([
                normal_block(self.seed, int(s), chunk, self.n_modes)
                for s in self.stream_ids])
            self._chunk = chunk
        return self._cache[:, offset, :]


@dataclass(frozen=True)
class NoisePath:
    """Materialised single-path stream: unit draws plus scaled increments."""

    spec: NoiseSpec
    dt: float
    xi: np.ndarray  # (n_steps, n_modes) unit normals

    @property
    def n_steps(self) -> int:
        return self.xi.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def increments(self) -> np.ndarray:
        """Brownian increments ``dW = alpha * sqrt(dt) * xi``."""
        return self.spec.alphas * np.sqrt(self.dt) * self.xi

    def brownian(self) -> np.ndarray:
        w = np.zeros((self.n_steps + 1, self.spec.n_modes))
        np.cumsum(self.increments(), axis=0, out=w[1:])
        return w


def sample_path(spec: NoiseSpec, dt: float, n_steps: int) -> NoisePath:
    if dt <= 0 or n_steps < 1:
        raise ValueError("need dt > 0 and n_steps >= 1")
    xi = draws_for_steps(spec.seed, spec.stream_id, n_steps, spec.n_modes)
    return NoisePath(spec, float(dt), xi)


def coarsen_increments(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive fine increments into coarse ones (same Brownian
    path at a coarser resolution, for step-doubling checks)."""
    n = increments.shape[0]
    if n % factor != 0:
        raise ValueError("step count not divisible by coarsening factor")
    shape = (n // factor, factor) + increments.shape[1:]
    return increments.reshape(shape).sum(axis=1)


def ou_factors(rate, dt):
    """Exact one-step factors for ``dz = rate * z dt + s dW``.

    Returns ``(decay, var_factor)`` with ``decay = exp(rate dt)`` and
    ``var_factor = (exp(2 rate dt) - 1) / (2 rate)`` (limit ``dt`` at
    ``rate == 0``), so the update ``z' = decay z + s sqrt(var_factor) xi``
    has the exact transition distribution for any step size.
    """
    rate = np.asarray(rate, dtype=float)
    decay = np.exp(rate * dt)
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.where(rate == 0.0, dt, np.expm1(2.0 * rate * dt) / (2.0 * rate))
    return decay, var


def ou_exact_step(z, rate, dt, noise_amp, xi):
    """One exact OU transition; ``noise_amp`` is the diffusion coefficient
    in front of the driving Brownian motion (per mode)."""
    decay, var = ou_factors(rate, dt)
    return decay * z + noise_amp * np.sqrt(var) * xi


def rescale_slow(times_fast, values, eps, horizon=None):
    """Slow-scale view of a fast-time path: ``(eps^2 t, eps * value)``.

    With ``horizon`` given, the fast path must cover slow time ``horizon``
    (else ``InsufficientPathError``) and the output is cropped to it.
    ``eps == 1`` is an identity resampling.
    """
    t = np.asarray(times_fast, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.ndim != 1 or v.shape[0] != t.size:
        raise ValueError("times and values must align on the first axis")
    t_slow = eps * eps * t
    v_slow = eps * v
    if horizon is not None:
        if t_slow[-1] < horizon - 1e-12:
            raise InsufficientPathError(
                f"fast path ends at slow time {t_slow[-1]:.6g} < requested "
                f"horizon {horizon:.6g}")
        keep = t_slow <= horizon + 1e-12
        t_slow, v_slow = t_slow[keep], v_slow[keep]
    return t_slow, v_slow
