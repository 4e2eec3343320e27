"""Symmetric stable process model and exact increment samplers.

The process is specified by its characteristic exponent psi: increments over a
time step dt have characteristic function exp(-dt * psi(lam)).  Two families
are supported:

    isotropic:  psi(lam) = c * |lam|^beta
    separable:  psi(lam) = sum_i c_i * |lam_i|^beta

Sampling is exact in distribution (no Euler error): one dimension uses the
Chambers-Mallows-Stuck transform, isotropic d >= 2 subordinates a Brownian
motion by an independent one-sided beta/2-stable clock (the factor-2 time
change B(2 S) carries no hidden constant), beta = 2 is plain Gaussian with
per-coordinate variance 2 c dt.  The separable family samples coordinates
independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gamma as _gamma_fn

__all__ = [
    "GateError",
    "StableSpec",
    "PathSample",
    "psi_eval",
    "sample_path",
    "substream",
    "density_at_zero",
    "c_psi",
]

_FAMILIES = ("isotropic", "separable")


class GateError(ValueError):
    """Raised when an operation's validity window excludes the given spec."""


@dataclass(frozen=True)
class StableSpec:
    """Immutable description of a symmetric stable process.

    coeffs has one entry for the isotropic family and dim entries for the
    separable family; all entries must be positive and finite.
    """

    dim: int
    beta: float
    family: str = "isotropic"
    coeffs: tuple = (1.0,)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not (0.0 < self.beta <= 2.0) or not math.isfinite(self.beta):
            raise ValueError(f"beta must lie in (0, 2], got {self.beta}")
        if self.family not in _FAMILIES:
            raise ValueError(f"family must be one of {_FAMILIES}, got {self.family!r}")
        coeffs = tuple(float(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        want = 1 if self.family == "isotropic" else self.dim
        if len(coeffs) != want:
            raise ValueError(
                f"{self.family} family in dim {self.dim} needs {want} coeffs, got {len(coeffs)}"
            )
        if not all(math.isfinite(c) and c > 0.0 for c in coeffs):
            raise ValueError(f"coeffs must be positive and finite, got {coeffs}")

    # Eq-style sandwich constants, derived, never inputs.  For beta <= 2 the
    # beta-norm dominates the 2-norm, which gives the lower constant; the
    # upper one is the crude d * max bound.
    @property
    def psi_lower_const(self) -> float:
        return min(self.coeffs)

    @property
    def psi_upper_const(self) -> float:
        return self.dim * max(self.coeffs)

    @property
    def supports_alpha(self) -> bool:
        """Mutual intersection local time exists for d/2 < beta <= d."""
        return self.dim / 2 < self.beta <= self.dim

    @property
    def supports_gamma(self) -> bool:
        """Renormalized self-intersection needs 2d/3 < beta <= d."""
        return 2 * self.dim / 3 < self.beta <= self.dim

    def require_alpha(self):
        if not self.supports_alpha:
            raise GateError(
                f"mutual intersection local time needs d/2 < beta <= d, "
                f"got beta={self.beta}, d={self.dim}"
            )

    def require_gamma(self):
        if not self.supports_gamma:
            raise GateError(
                f"renormalized self-intersection needs 2d/3 < beta <= d, "
                f"got beta={self.beta}, d={self.dim}"
            )

    def key(self) -> tuple:
        return (self.dim, self.beta, self.family, self.coeffs)

    def to_config_block(self) -> dict:
        return {
            "dim": self.dim,
            "beta": self.beta,
            "family": self.family,
            "coeffs": list(self.coeffs),
        }

    @classmethod
    def from_config_block(cls, block: dict) -> "StableSpec":
        extra = set(block) - {"dim", "beta", "family", "coeffs"}
        if extra:
            raise ValueError(f"unknown spec keys: {sorted(extra)}")
        return cls(
            dim=int(block["dim"]),
            beta=float(block["beta"]),
            family=block.get("family", "isotropic"),
            coeffs=tuple(block.get("coeffs", (1.0,))),
        )


def psi_eval(spec: StableSpec, lam) -> np.ndarray:
    """Characteristic exponent at frequencies lam, shape (..., dim).

    For dim 1 a bare scalar or 1-d array is accepted.  Output drops the last
    axis.  psi is even and homogeneous of degree beta by construction.
    """
    lam = np.asarray(lam, dtype=float)
    if spec.dim == 1 and (lam.ndim == 0 or lam.shape[-1] != 1):
        lam = lam[..., None]
    if lam.shape[-1] != spec.dim:
        raise ValueError(f"last axis of lam must equal dim={spec.dim}, got shape {lam.shape}")
    if spec.family == "isotropic":
        r = np.sqrt(np.sum(lam * lam, axis=-1))
        return spec.coeffs[0] * r ** spec.beta
    c = np.asarray(spec.coeffs)
    return np.sum(c * np.abs(lam) ** spec.beta, axis=-1)


def substream(seed: int, stream_id: int) -> np.random.Generator:
    """Deterministic generator for (seed, stream_id); replicates never share state."""
    if seed < 0 or stream_id < 0:
        raise ValueError("seed and stream_id must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream_id])))


def _cms_symmetric(rng: np.random.Generator, alpha: float, size) -> np.ndarray:
    """Standard symmetric alpha-stable variates, char. function exp(-|lam|^alpha).

    Chambers-Mallows-Stuck with skew 0.  Draw order is fixed: uniforms, then
    exponentials; replicate determinism depends on it.
    """
    u = (rng.random(size) - 0.5) * np.pi
    w = rng.standard_exponential(size)
    if alpha == 1.0:
        return np.tan(u)
    t = np.sin(alpha * u) / np.cos(u) ** (1.0 / alpha)
    return t * (np.cos((1.0 - alpha) * u) / w) ** ((1.0 - alpha) / alpha)


def _one_sided_stable(rng: np.random.Generator, alpha: float, size) -> np.ndarray:
    """Positive alpha-stable variates with Laplace transform exp(-u^alpha), alpha < 1.

    Kanter's form of the CMS transform.  The degenerate alpha -> 1 clock (beta = 2
    routed through the subordinator) is rejected; that case is Gaussian and must
    use the direct branch.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"one-sided stable clock needs alpha in (0, 1), got {alpha}")
    u = np.pi * (1.0 - rng.random(size))  # in (0, pi]
    w = rng.standard_exponential(size)
    s = np.sin(alpha * u) / np.sin(u) ** (1.0 / alpha)
    return s * (np.sin((1.0 - alpha) * u) / w) ** ((1.0 - alpha) / alpha)


def _increments(spec: StableSpec, dt: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """n exact increments over step dt, shape (n, dim)."""
    d, beta = spec.dim, spec.beta
    if spec.family == "separable":
        out = np.empty((n, d))
        if beta == 2.0:
            for i, c in enumerate(spec.coeffs):
                out[:, i] = rng.normal(0.0, math.sqrt(2.0 * c * dt), n)
        else:
            for i, c in enumerate(spec.coeffs):
                out[:, i] = (c * dt) ** (1.0 / beta) * _cms_symmetric(rng, beta, n)
        return out
    c = spec.coeffs[0]
    if beta == 2.0:
        # char. function exp(-dt c |lam|^2) means variance 2 c dt per coordinate
        return rng.normal(0.0, math.sqrt(2.0 * c * dt), (n, d))
    if d == 1:
        return (c * dt) ** (1.0 / beta) * _cms_symmetric(rng, beta, n)[:, None]
    # subordinated Brownian motion: X = B(2 S) with S a beta/2 clock
    s = (c * dt) ** (2.0 / beta) * _one_sided_stable(rng, beta / 2.0, n)
    z = rng.standard_normal((n, d))
    return np.sqrt(2.0 * s)[:, None] * z


@dataclass(frozen=True)
class PathSample:
    """Path positions on the uniform grid k * dt, k = 0..n_steps.

    positions has shape (n_steps + 1, dim), positions[0] is the start point,
    and the array is frozen read-only.
    """

    spec: StableSpec
    t_end: float
    n_steps: int
    seed: int
    stream_id: int
    positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        pos = self.positions
        if pos.shape != (self.n_steps + 1, self.spec.dim):
            raise ValueError(
                f"positions shape {pos.shape} != {(self.n_steps + 1, self.spec.dim)}"
            )
        pos.setflags(write=False)

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    def restricted(self, t: float) -> "PathSample":
        """The same path cut at time t <= t_end; t must sit on the grid."""
        k = t / self.dt
        ki = int(round(k))
        if not (0 < ki <= self.n_steps) or abs(k - ki) > 1e-9:
            raise ValueError(f"t={t} does not land on the sample grid (dt={self.dt})")
        return PathSample(self.spec, ki * self.dt, ki, self.seed, self.stream_id,
                          self.positions[: ki + 1])


def sample_path(
    spec: StableSpec,
    t_end: float,
    n_steps: int,
    seed: int,
    stream_id: int = 0,
    start: Optional[Sequence[float]] = None,
) -> PathSample:
    """Exact path sample on a uniform grid; bit-identical for identical arguments."""
    if not (t_end > 0.0 and math.isfinite(t_end)):
        raise ValueError(f"t_end must be positive and finite, got {t_end}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    rng = substream(seed, stream_id)
    inc = _increments(spec, t_end / n_steps, n_steps, rng)
    pos = np.empty((n_steps + 1, spec.dim))
    pos[0] = 0.0 if start is None else np.asarray(start, dtype=float)
    np.cumsum(inc, axis=0, out=pos[1:])
    pos[1:] += pos[0]
    return PathSample(spec, t_end, n_steps, seed, stream_id, pos)


_GL512 = leggauss(512)


def _density_1d(beta: float, c: float) -> float:
    # (1/pi) int_0^R exp(-c r^beta) dr with r = R v^4 smoothing the beta < 1 cusp;
    # R fixed so the dropped tail is below 1e-16.
    x, w = _GL512
    v = 0.5 * (x + 1.0)
    wv = 0.5 * w
    R = (37.0 / c) ** (1.0 / beta)
    r = R * v ** 4
    return float(np.sum(np.exp(-c * r ** beta) * 4.0 * R * v ** 3 * wv) / np.pi)


def density_at_zero(spec: StableSpec, t: float) -> float:
    """Transition density at the origin, p_t(0) = t^(-d/beta) p_1(0).

    Isotropic uses the closed radial reduction; separable multiplies the
    per-coordinate one-dimensional values obtained by quadrature.
    """
    if not (t > 0.0 and math.isfinite(t)):
        raise ValueError(f"t must be positive and finite, got {t}")
    d, beta = spec.dim, spec.beta
    if spec.family == "isotropic":
        c = spec.coeffs[0]
        sigma = 2.0 * math.pi ** (d / 2.0) / _gamma_fn(d / 2.0)
        p1 = sigma * _gamma_fn(d / beta) / (beta * (2.0 * math.pi) ** d * c ** (d / beta))
    else:
        p1 = 1.0
        for c in spec.coeffs:
            p1 *= _density_1d(beta, c)
    return t ** (-d / beta) * p1


def c_psi(spec: StableSpec) -> float:
    """Constant in the closed-form mean of the mutual intersection time.

    Defined only in the strict window d/2 < beta < d where d/beta lies in (1, 2).
    """
    k = spec.dim / spec.beta
    if not (1.0 < k < 2.0):
        raise GateError(
            f"c_psi needs d/2 < beta < d strictly, got beta={spec.beta}, d={spec.dim}"
        )
    return density_at_zero(spec, 1.0) / ((k - 1.0) * (2.0 - k))
