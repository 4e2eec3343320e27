"""Intersection local time estimators on discretized stable paths.

Mollified occupation pair sums, their exact continuum expectations by
Fourier quadrature, dyadic decompositions of the renormalized self
intersection field, and the epsilon extrapolation that strips
mollification bias.

Conventions used throughout:

* The mollifier is the Gaussian bump
  f_eps(x) = (2 pi)^(-d/2) eps^(-d) exp(-|x|^2 / (2 eps^2)), an
  approximate identity whose transform under the estimator-side pairing
  int f(x) exp(i p.x) dx equals exp(-eps^2 |p|^2 / 2). It factors as a
  self convolution of a narrower Gaussian, so every mollified pair sum
  below is nonnegative definite in the pairing argument.

* Sample k of a path with mesh dt represents the time cell
  ((k - 1) dt, k dt]. Interval index sets follow this half open
  convention, which is what makes the dyadic pair partition exact at the
  index level rather than merely up to boundary terms.

* The self sum runs over strict pairs i < j of the samples 1..n and so
  excludes the diagonal band {|u - s| < dt} of the continuum domain; its
  expectation is matched by the same exclusion on the quadrature side
  being deliberately *not* applied, i.e. the estimator carries a known
  O(dt * eps^-d) deficit that shrinks under mesh refinement. Centering
  therefore uses the full continuum expectation, never a per-path
  correction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gamma as _gamma_fn

from ._pairs import cross_pairs, pair_sq_dists, self_pairs
from .stable import PathSample, StableSpec

__all__ = [
    "CUTOFF_IN_EPS",
    "DyadicCell",
    "DyadicDecomposition",
    "EpsExtrapolation",
    "Mollifier",
    "ResolutionWarning",
    "covered_area",
    "dyadic_cells",
    "dyadic_decompose",
    "expected_mutual_ilt",
    "expected_self_ilt",
    "extrapolate_epsilon",
    "gamma_on_cell",
    "gamma_regularized",
    "mutual_ilt",
    "mutual_ilt_limit",
    "self_ilt_raw",
]

# Gaussian bump relative to peak at the cutoff: exp(-8^2 / 2) ~ 1.3e-14.
CUTOFF_IN_EPS = 8.0

# Mollifier mass beyond the quadrature edge: exp(-9^2 / 2) ~ 2.6e-18.
_TAIL_WIDTHS = 9.0

_RADIAL_NODES = 1024
_AXIS_NODES = {1: 1024, 2: 384, 3: 128}


class ResolutionWarning(UserWarning):
    """Mollifier width below the typical one-step displacement."""


# --------------------------------------------------------------------------
# mollifier


@dataclass(frozen=True)
class Mollifier:
    """Gaussian approximate identity of width eps in dimension dim."""

    dim: int
    eps: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def peak(self) -> float:
        return (2.0 * math.pi) ** (-self.dim / 2.0) * self.eps ** (-self.dim)

    def at_sq_dist(self, sqd):
        return self.peak * np.exp(np.asarray(sqd, dtype=float) / (-2.0 * self.eps**2))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            if self.dim == 1:
                x = x.reshape(x.shape + (1,))
            else:
                raise ValueError("trailing axis must match dim")
        return self.at_sq_dist(np.sum(x * x, axis=-1))

    def fourier(self, p):
        """Transform under the pairing int f(x) exp(i p . x) dx."""
        p = np.asarray(p, dtype=float)
        if p.ndim and p.shape[-1] == self.dim:
            sq = np.sum(p * p, axis=-1)
        else:
            sq = p * p
        return np.exp(-0.5 * self.eps**2 * sq)


# --------------------------------------------------------------------------
# Fourier quadrature of expectations

_GL_CACHE: dict = {}
_GRID_CACHE: dict = {}


def _gl01(m):
    hit = _GL_CACHE.get(m)
    if hit is None:
        v, w = leggauss(m)
        hit = (0.5 * (v + 1.0), 0.5 * w)
        _GL_CACHE[m] = hit
    return hit


def _axis_nodes(radius, m):
    # substitution r = R v^4 clusters nodes at the origin where |p|^beta
    # has a cusp for beta < 1; jacobian 4 R v^3
    v, w = _gl01(m)
    r = radius * v**4
    jac = 4.0 * radius * v**3 * w
    return r, jac


def _quad_grid(spec: StableSpec, eps: float):
    """Shared mode grid (psi values, mollified weights) for one (spec, eps).

    Every expectation below is a plain dot product against this grid, so
    identities that hold pointwise in the mode variable (such as the
    dyadic partition of the triangle kernel) survive in floating point to
    roundoff instead of quadrature tolerance.
    """
    key = (spec.key(), float(eps))
    hit = _GRID_CACHE.get(key)
    if hit is not None:
        return hit
    d = spec.dim
    radius = _TAIL_WIDTHS / eps
    if spec.family == "isotropic":
        r, w = _axis_nodes(radius, _RADIAL_NODES)
        sigma = 2.0 * math.pi ** (d / 2.0) / _gamma_fn(d / 2.0)
        weight = w * sigma * r ** (d - 1) * np.exp(-0.5 * (eps * r) ** 2)
        weight /= (2.0 * math.pi) ** d
        psi = spec.coeffs[0] * r**spec.beta
    else:
        r, w = _axis_nodes(radius, _AXIS_NODES[d])
        axis_w = w * np.exp(-0.5 * (eps * r) ** 2)
        psi = np.zeros((len(r),) * d)
        weight = np.ones((len(r),) * d)
        for ax in range(d):
            shape = [1] * d
            shape[ax] = len(r)
            psi = psi + spec.coeffs[ax] * (r**spec.beta).reshape(shape)
            weight = weight * axis_w.reshape(shape)
        psi = psi.ravel()
        weight = weight.ravel() * 2.0**d / (2.0 * math.pi) ** d
    hit = (psi, weight)
    _GRID_CACHE[key] = hit
    return hit


def _triangle_kernel(t, psi):
    # int_0^t (t - tau) exp(-tau psi) dtau, stable for t psi -> 0
    z = t * psi
    out = np.empty_like(psi)
    small = z < 1e-4
    zs = z[small]
    out[small] = t * t * (0.5 - zs / 6.0 + zs * zs / 24.0)
    zb = z[~small]
    out[~small] = (zb + np.expm1(-zb)) / psi[~small] ** 2
    return out


def _rectangle_kernel(len_s, len_u, gap, psi):
    # int over [0, len_s] x [gap + len_s, gap + len_s + len_u] of
    # exp(-(u - s) psi); expm1 keeps full precision as psi -> 0
    return (
        np.expm1(-len_s * psi)
        * np.expm1(-len_u * psi)
        * np.exp(-gap * psi)
        / psi**2
    )


def _ladder(eps):
    arr = np.atleast_1d(np.asarray(eps, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("eps must be a positive scalar or 1-d sequence")
    if not np.all(arr > 0):
        raise ValueError("eps values must be positive")
    return arr, np.isscalar(eps) or getattr(eps, "ndim", 1) == 0


def _unwrap(values, scalar):
    return float(values[0]) if scalar else values


def expected_self_ilt(spec: StableSpec, t: float, eps):
    """Continuum expectation of the mollified self intersection mass.

    Computed as the mode integral of the triangle kernel
    int_0^t (t - tau) exp(-tau psi(p)) dtau against the mollifier
    transform. Valid for every spec; no gate applies because the object
    is finite at fixed eps regardless of the intersection regime.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    arr, scalar = _ladder(eps)
    out = np.empty_like(arr)
    for k, e in enumerate(arr):
        psi, w = _quad_grid(spec, e)
        out[k] = w @ _triangle_kernel(t, psi)
    return _unwrap(out, scalar)


def expected_mutual_ilt(spec: StableSpec, s: float, t: float, eps):
    """Expectation of the mollified mutual mass of two independent copies
    run for times s and t from a common start."""
    if not (s > 0 and t > 0):
        raise ValueError("s and t must be positive")
    arr, scalar = _ladder(eps)
    out = np.empty_like(arr)
    for k, e in enumerate(arr):
        psi, w = _quad_grid(spec, e)
        out[k] = w @ (np.expm1(-s * psi) * np.expm1(-t * psi) / psi**2)
    return _unwrap(out, scalar)


def mutual_ilt_limit(spec: StableSpec, s: float, t: float) -> float:
    """Sharp-mollifier limit of the expected mutual mass.

    Requires the mutual regime d/2 < beta <= d. Below the boundary the
    limit is a difference of fractional powers, on it a logarithmic
    expression; both follow from integrating the transition density at
    the origin over the time rectangle.
    """
    spec.require_alpha()
    if not (s > 0 and t > 0):
        raise ValueError("s and t must be positive")
    from .stable import c_psi, density_at_zero

    if spec.beta == spec.dim:
        p10 = density_at_zero(spec, 1.0)
        return p10 * (
            (s + t) * math.log(s + t) - s * math.log(s) - t * math.log(t)
        )
    a = 2.0 - spec.dim / spec.beta
    return c_psi(spec) * (s**a + t**a - (s + t) ** a)


# --------------------------------------------------------------------------
# pair-sum estimators


def _check_resolution(spec: StableSpec, dt: float, eps_min: float):
    step = (max(spec.coeffs) * dt) ** (1.0 / spec.beta)
    if eps_min < step:
        warnings.warn(
            f"mollifier width {eps_min:g} is below the one-step displacement "
            f"scale {step:g}; refine the grid or widen eps",
            ResolutionWarning,
            stacklevel=3,
        )


def mutual_ilt(path_x: PathSample, path_y: PathSample, eps):
    """Mollified mutual intersection mass of two discretized paths.

    Cross sum over sample pairs with split endpoint weights
    w_ij = (1{i >= 1, j <= n-1} + 1{i <= m-1, j >= 1}) / 2,
    which realizes the two dimensional midpoint product rule in
    expectation because the expected kernel depends on the time indices
    only through their sum.
    """
    if path_x.spec != path_y.spec:
        raise ValueError("paths must share one process spec")
    spec = path_x.spec
    spec.require_alpha()
    arr, scalar = _ladder(eps)
    _check_resolution(spec, max(path_x.dt, path_y.dt), float(arr.min()))
    m, n = path_x.n_steps, path_y.n_steps
    cutoff = CUTOFF_IN_EPS * float(arr.max())
    i, j = cross_pairs(path_x.positions, path_y.positions, cutoff)
    w = 0.5 * (((i >= 1) & (j <= n - 1)).astype(float))
    w += 0.5 * (((i <= m - 1) & (j >= 1)).astype(float))
    keep = w > 0
    i, j, w = i[keep], j[keep], w[keep]
    sqd = pair_sq_dists(path_x.positions, path_y.positions, i, j)
    scale = path_x.dt * path_y.dt
    out = np.empty_like(arr)
    for k, e in enumerate(arr):
        out[k] = scale * float(w @ Mollifier(spec.dim, e).at_sq_dist(sqd))
    return _unwrap(out, scalar)


def self_ilt_raw(path: PathSample, eps):
    """Uncentered mollified self intersection mass, strict pairs i < j of
    the samples 1..n, scaled by dt^2."""
    arr, scalar = _ladder(eps)
    _check_resolution(path.spec, path.dt, float(arr.min()))
    pos = path.positions[1:]
    cutoff = CUTOFF_IN_EPS * float(arr.max())
    i, j = self_pairs(pos, cutoff)
    sqd = pair_sq_dists(pos, pos, i, j)
    scale = path.dt * path.dt
    out = np.empty_like(arr)
    for k, e in enumerate(arr):
        out[k] = scale * float(np.sum(Mollifier(path.spec.dim, e).at_sq_dist(sqd)))
    return _unwrap(out, scalar)


def gamma_regularized(path: PathSample, eps):
    """Renormalized self intersection mass: raw pair sum minus its
    continuum expectation. Requires the renormalization regime
    2 d / 3 < beta <= d."""
    path.spec.require_gamma()
    arr, scalar = _ladder(eps)
    raw = np.atleast_1d(np.asarray(self_ilt_raw(path, arr)))
    exp_ = np.atleast_1d(np.asarray(expected_self_ilt(path.spec, path.t_end, arr)))
    return _unwrap(raw - exp_, scalar)


# --------------------------------------------------------------------------
# time cells and dyadic decomposition


def _slice_bounds(path: PathSample, a: float, b: float):
    # samples k with a < k dt <= b; endpoints must sit on the grid
    dt = path.dt
    lo_f, hi_f = a / dt, b / dt
    lo, hi = round(lo_f), round(hi_f)
    if abs(lo_f - lo) > 1e-9 * max(1.0, abs(lo_f)) or abs(hi_f - hi) > 1e-9 * max(
        1.0, abs(hi_f)
    ):
        raise ValueError(f"interval ({a}, {b}] is not aligned with the sample grid")
    if not (0 <= lo < hi <= path.n_steps):
        raise ValueError(f"interval ({a}, {b}] falls outside [0, t_end]")
    return int(lo), int(hi)


def gamma_on_cell(path: PathSample, s_interval, u_interval, eps):
    """Centered mollified pair mass over a product time cell.

    Equal intervals give the triangle {s < u} within the square; a
    strictly ordered pair of intervals (s block left of u block) gives
    the full rectangle. Both sides center with the same cached mode grid
    used by the whole-path expectation, so sums of cell values cancel
    against whole-path values to roundoff.
    """
    path.spec.require_gamma()
    arr, scalar = _ladder(eps)
    a, b = float(s_interval[0]), float(s_interval[1])
    c, d = float(u_interval[0]), float(u_interval[1])
    if not (a < b and c < d):
        raise ValueError("intervals must be nondegenerate")
    cutoff = CUTOFF_IN_EPS * float(arr.max())
    moll_dim = path.spec.dim
    scale = path.dt * path.dt
    if (a, b) == (c, d):
        lo, hi = _slice_bounds(path, a, b)
        pos = path.positions[lo + 1 : hi + 1]
        i, j = self_pairs(pos, cutoff)
        sqd = pair_sq_dists(pos, pos, i, j)
        out = np.empty_like(arr)
        for k, e in enumerate(arr):
            psi, w = _quad_grid(path.spec, e)
            raw = scale * float(np.sum(Mollifier(moll_dim, e).at_sq_dist(sqd)))
            out[k] = raw - float(w @ _triangle_kernel(b - a, psi))
        return _unwrap(out, scalar)
    if not b <= c:
        raise ValueError("cell intervals must be equal or strictly ordered")
    lo_s, hi_s = _slice_bounds(path, a, b)
    lo_u, hi_u = _slice_bounds(path, c, d)
    pos_s = path.positions[lo_s + 1 : hi_s + 1]
    pos_u = path.positions[lo_u + 1 : hi_u + 1]
    i, j = cross_pairs(pos_s, pos_u, cutoff)
    sqd = pair_sq_dists(pos_s, pos_u, i, j)
    out = np.empty_like(arr)
    for k, e in enumerate(arr):
        psi, w = _quad_grid(path.spec, e)
        raw = scale * float(np.sum(Mollifier(moll_dim, e).at_sq_dist(sqd)))
        out[k] = raw - float(w @ _rectangle_kernel(b - a, d - c, c - b, psi))
    return _unwrap(out, scalar)


@dataclass(frozen=True)
class DyadicCell:
    """Off diagonal dyadic cell of the unit triangle {0 < s < u <= 1}.

    Cell (level n, index k) pairs the two children of the k-th interval
    at level n - 1: s in ((2k-2) 2^-n, (2k-1) 2^-n], u in the right
    sibling. Every ordered pair of distinct times lands in exactly one
    cell across levels, or in a diagonal block at the chosen depth.
    """

    level: int
    index: int

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("level must be >= 1")
        if not 1 <= self.index <= 2 ** (self.level - 1):
            raise ValueError("index out of range for level")

    @property
    def s_interval(self) -> Tuple[Fraction, Fraction]:
        h = Fraction(1, 2**self.level)
        return ((2 * self.index - 2) * h, (2 * self.index - 1) * h)

    @property
    def u_interval(self) -> Tuple[Fraction, Fraction]:
        h = Fraction(1, 2**self.level)
        return ((2 * self.index - 1) * h, (2 * self.index) * h)

    @property
    def area(self) -> Fraction:
        return Fraction(1, 4**self.level)


def dyadic_cells(level: int) -> Tuple[DyadicCell, ...]:
    return tuple(DyadicCell(level, k) for k in range(1, 2 ** (level - 1) + 1))


def covered_area(max_level: int) -> Fraction:
    """Exact total area of all cells through max_level; the complementary
    diagonal band carries the rest of the half square."""
    total = Fraction(0)
    for n in range(1, max_level + 1):
        total += 2 ** (n - 1) * Fraction(1, 4**n)
    return total


@dataclass(frozen=True)
class DyadicDecomposition:
    eps: Tuple[float, ...]
    max_level: int
    cells: Tuple[DyadicCell, ...]
    cell_values: np.ndarray  # (n_cells, n_eps)
    band_values: np.ndarray  # (2^max_level, n_eps)
    full: np.ndarray  # (n_eps,)

    def reassembled(self) -> np.ndarray:
        return self.cell_values.sum(axis=0) + self.band_values.sum(axis=0)

    def gap(self) -> np.ndarray:
        return self.reassembled() - self.full


def dyadic_decompose(path: PathSample, max_level: int, eps) -> DyadicDecomposition:
    """Split the renormalized self intersection mass over dyadic cells.

    Returns per-cell centered values for every level through max_level
    plus the residual diagonal band, whose triangle blocks reuse the
    same strict-pair convention as the whole-path sum. The pair sets
    partition exactly at the index level and the expectations cancel
    pointwise on the shared mode grid, so reassembled() matches the
    whole-path value to floating point roundoff.
    """
    if max_level < 1:
        raise ValueError("max_level must be >= 1")
    t = path.t_end
    if path.n_steps % 2**max_level:
        raise ValueError("n_steps must be divisible by 2**max_level")
    arr, _ = _ladder(eps)
    full = np.atleast_1d(np.asarray(gamma_regularized(path, arr)))
    cells = []
    for n in range(1, max_level + 1):
        cells.extend(dyadic_cells(n))
    cell_values = np.empty((len(cells), arr.size))
    for idx, cell in enumerate(cells):
        s_iv = tuple(t * float(q) for q in cell.s_interval)
        u_iv = tuple(t * float(q) for q in cell.u_interval)
        cell_values[idx] = np.atleast_1d(
            np.asarray(gamma_on_cell(path, s_iv, u_iv, arr))
        )
    blocks = 2**max_level
    h = t / blocks
    band_values = np.empty((blocks, arr.size))
    for b in range(blocks):
        iv = (b * h, (b + 1) * h)
        band_values[b] = np.atleast_1d(np.asarray(gamma_on_cell(path, iv, iv, arr)))
    return DyadicDecomposition(
        eps=tuple(float(e) for e in arr),
        max_level=max_level,
        cells=tuple(cells),
        cell_values=cell_values,
        band_values=band_values,
        full=full,
    )


# --------------------------------------------------------------------------
# epsilon extrapolation


@dataclass(frozen=True)
class EpsExtrapolation:
    """Power-law fit value_k ~ limit + amplitude * eps_k^rho."""

    limit: float
    amplitude: float
    rho: float
    rho_source: str  # pinned | estimated | constant | fallback
    residual: float
    flags: Tuple[str, ...]


def _power_fit(eps, values, rho):
    design = np.column_stack([np.ones_like(eps), eps**rho])
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    fitted = design @ coef
    residual = float(np.sqrt(np.mean((fitted - values) ** 2)))
    return float(coef[0]), float(coef[1]), residual


def extrapolate_epsilon(eps, values, rho: Optional[float] = None) -> EpsExtrapolation:
    """Extrapolate a ladder of estimates to eps -> 0.

    With rho pinned by the caller this is a plain two parameter least
    squares fit and never flags. Otherwise rho is estimated from the
    log ratio of consecutive ladder differences, which needs a geometric
    ladder of at least three rungs; a non monotone ladder or a
    nonpositive estimated rho falls back to the smallest-eps value with
    an explanatory flag rather than producing a wild extrapolation.
    """
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    if eps.ndim != 1 or eps.shape != values.shape:
        raise ValueError("eps and values must be matching 1-d sequences")
    if not np.all(eps > 0):
        raise ValueError("eps must be positive")
    if not np.all(np.diff(eps) < 0):
        raise ValueError("eps ladder must be strictly decreasing")
    if rho is not None:
        if eps.size < 2:
            raise ValueError("pinned-rho fit needs at least two rungs")
        limit, amp, res = _power_fit(eps, values, float(rho))
        return EpsExtrapolation(limit, amp, float(rho), "pinned", res, ())
    if eps.size < 3:
        raise ValueError("rho estimation needs at least three rungs")
    ratios = eps[1:] / eps[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError("rho estimation needs a geometric ladder")
    diffs = values[:-1] - values[1:]
    scale = max(1.0, float(np.max(np.abs(values))))
    if np.all(np.abs(diffs) < 1e-12 * scale):
        return EpsExtrapolation(
            float(values.mean()), 0.0, math.nan, "constant", 0.0, ()
        )
    if np.any(diffs == 0.0) or len(set(np.sign(diffs))) > 1:
        return EpsExtrapolation(
            float(values[-1]), math.nan, math.nan, "fallback", math.nan,
            ("non-monotone-ladder",),
        )
    rho_hat = float(np.mean(np.log(diffs[1:] / diffs[:-1]) / math.log(ratios[0])))
    if rho_hat <= 0:
        return EpsExtrapolation(
            float(values[-1]), math.nan, rho_hat, "fallback", math.nan,
            ("rho-nonpositive",),
        )
    limit, amp, res = _power_fit(eps, values, rho_hat)
    return EpsExtrapolation(limit, amp, rho_hat, "estimated", res, ())
