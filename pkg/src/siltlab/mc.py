"""Monte Carlo laboratory for intersection functionals.

Deterministic replicate ensembles of the centered self intersection
functional, plus the analyses built on top of them: closed form moment
checks, a distributional scaling test, survival curve tail fits, and
iterated logarithm trajectory diagnostics.  Every replicate is a pure
function of (plan, replicate index), so ensembles reproduce bit exactly
for any worker count and for any subset of replicate ids.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from itertools import repeat
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .silt import (
    expected_mutual_ilt,
    expected_self_ilt,
    extrapolate_epsilon,
    gamma_regularized,
    mutual_ilt,
    mutual_ilt_limit,
)
from .stable import StableSpec, density_at_zero, sample_path

__all__ = [
    "DEFAULT_EPS_LADDER",
    "SURVIVAL_LEVELS",
    "MIN_TAIL_COUNT",
    "MIN_TAIL_POINTS",
    "RunPlan",
    "Ensemble",
    "run_gamma_ensemble",
    "ensemble_csv",
    "parse_ensemble_csv",
    "TailFit",
    "tail_slope_fit",
    "upper_tail_fit",
    "lower_tail_fit",
    "tail_quantile_witness",
    "MeanCheck",
    "mean_check_alpha",
    "ScalingReport",
    "scaling_test",
    "upper_normalizer",
    "lower_normalizer",
    "TrajectoryReport",
    "lil_trajectory",
]

DEFAULT_EPS_LADDER = (0.32, 0.16, 0.08, 0.04)

# empirical survival levels probed by the tail fits
SURVIVAL_LEVELS = (0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001)
MIN_TAIL_COUNT = 20
MIN_TAIL_POINTS = 4


# --------------------------------------------------------------------------
# ensemble plans and replicates


@dataclass(frozen=True)
class RunPlan:
    """Complete description of one gamma ensemble.

    The plan is the provenance unit: its canonical JSON block is hashed
    into artifact headers, and together with a replicate id it fully
    determines a replicate.
    """

    spec: StableSpec
    t_end: float = 1.0
    n_steps: int = 512
    eps_ladder: Tuple[float, ...] = DEFAULT_EPS_LADDER
    n_reps: int = 1000
    seed: int = 0

    def __post_init__(self):
        self.spec.require_gamma()
        if not (self.t_end > 0.0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be positive and finite, got {self.t_end}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        if int(self.n_reps) != self.n_reps or self.n_reps < 0:
            raise ValueError(f"n_reps must be a nonnegative integer, got {self.n_reps}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed}")
        ladder = tuple(float(e) for e in self.eps_ladder)
        if not ladder:
            raise ValueError("eps_ladder must not be empty")
        if any(not (e > 0.0 and math.isfinite(e)) for e in ladder):
            raise ValueError("eps_ladder entries must be positive and finite")
        if any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("eps_ladder must be strictly decreasing")
        object.__setattr__(self, "t_end", float(self.t_end))
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "eps_ladder", ladder)
        object.__setattr__(self, "n_reps", int(self.n_reps))
        object.__setattr__(self, "seed", int(self.seed))

    def config_block(self) -> dict:
        return {
            "spec": self.spec.to_config_block(),
            "t_end": self.t_end,
            "n_steps": self.n_steps,
            "eps_ladder": list(self.eps_ladder),
            "n_reps": self.n_reps,
            "seed": self.seed,
        }

    @classmethod
    def from_config_block(cls, block: dict) -> "RunPlan":
        return cls(
            spec=StableSpec.from_config_block(block["spec"]),
            t_end=block["t_end"],
            n_steps=block["n_steps"],
            eps_ladder=tuple(block["eps_ladder"]),
            n_reps=block["n_reps"],
            seed=block["seed"],
        )

    def config_hash(self) -> str:
        payload = json.dumps(self.config_block(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def _ladder_row(plan: RunPlan, k: int):
    """Replicate k of a plan: one path, the centered value at every rung.

    Pure in (plan, k).  Failures are reported as data, not raised, so a
    bad replicate cannot abort a long ensemble.
    """
    try:
        path = sample_path(plan.spec, plan.t_end, plan.n_steps, plan.seed, stream_id=k)
        row = np.atleast_1d(
            np.asarray(gamma_regularized(path, np.asarray(plan.eps_ladder)), dtype=float)
        )
        return k, row, None
    except Exception as exc:
        return k, np.full(len(plan.eps_ladder), np.nan), f"{type(exc).__name__}: {exc}"


@dataclass(frozen=True)
class Ensemble:
    """Replicate by rung table of centered self intersection values.

    Row k holds replicate k at every epsilon of the plan ladder, in
    ladder order (largest epsilon first).  Failed replicates appear as
    NaN rows plus an entry in `failures`.
    """

    plan: RunPlan
    ladder_values: np.ndarray
    failures: Tuple[Tuple[int, str], ...] = ()

    def __post_init__(self):
        vals = np.asarray(self.ladder_values, dtype=float)
        want = (self.plan.n_reps, len(self.plan.eps_ladder))
        if vals.shape != want:
            raise ValueError(f"ladder_values must have shape {want}, got {vals.shape}")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "ladder_values", vals)
        object.__setattr__(self, "failures", tuple(self.failures))

    @property
    def n_reps(self) -> int:
        return self.plan.n_reps

    @property
    def eps_ladder(self) -> Tuple[float, ...]:
        return self.plan.eps_ladder

    @property
    def ok_mask(self) -> np.ndarray:
        return np.isfinite(self.ladder_values).all(axis=1)

    def rung_values(self, rung: int) -> np.ndarray:
        """Finite replicate values at one ladder rung."""
        col = self.ladder_values[:, rung]
        return col[np.isfinite(col)]

    def rung_mean_se(self, rung: int) -> Tuple[float, float]:
        vals = self.rung_values(rung)
        if vals.size < 2:
            raise ValueError("need at least two finite replicates for a mean and SE")
        return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))

    @cached_property
    def _limit_data(self) -> Tuple[np.ndarray, Tuple[str, ...]]:
        eps = np.asarray(self.eps_ladder)
        n, m = self.ladder_values.shape
        out = np.full(n, np.nan)
        sources = []
        ratios = eps[1:] / eps[:-1] if m >= 2 else np.empty(0)
        geometric = m >= 3 and np.allclose(ratios, ratios[0], rtol=1e-9)
        for k in range(n):
            row = self.ladder_values[k]
            if not np.isfinite(row).all():
                sources.append("failed")
                continue
            if geometric:
                fit = extrapolate_epsilon(eps, row)
                out[k] = fit.limit
                sources.append(fit.rho_source)
            else:
                # too few rungs to see the rate; the finest rung stands in
                out[k] = row[-1]
                sources.append("smallest-eps")
        out.setflags(write=False)
        return out, tuple(sources)

    @property
    def limits(self) -> np.ndarray:
        """Per replicate small-epsilon values (NaN where the replicate failed).

        Ladders with at least three geometric rungs are extrapolated per
        replicate; shorter ladders report the finest rung.
        """
        return self._limit_data[0]

    @property
    def limit_sources(self) -> Tuple[str, ...]:
        return self._limit_data[1]

    def finite_limits(self) -> np.ndarray:
        vals = self.limits
        return vals[np.isfinite(vals)]


def _checkpoint_header(plan: RunPlan) -> list:
    cfg = json.dumps(plan.config_block(), sort_keys=True, separators=(",", ":"))
    return [f"# config_hash={plan.config_hash()}", f"# config={cfg}", _CSV_HEADER]


def _load_checkpoint(plan: RunPlan, path: Path, rows: np.ndarray) -> int:
    """Validate a partial artifact, fill `rows` with its complete replicates
    and rewrite it to canonical bytes; returns the first replicate to run."""
    header = _checkpoint_header(plan)
    if not path.exists():
        path.write_text("\n".join(header) + "\n", newline="\n")
        return 0
    lines = path.read_text().split("\n")
    if lines[:3] != header:
        raise ValueError(
            f"checkpoint {path} does not belong to this plan "
            "(header or provenance hash mismatch)"
        )
    m = len(plan.eps_ladder)
    good = []
    for pos, line in enumerate(lines[3:]):
        fields = line.split(",")
        if len(fields) != 4:
            break
        try:
            k, value, j, steps = int(fields[0]), float(fields[1]), int(fields[2]), int(fields[3])
        except ValueError:
            break
        if k != pos // m or j != pos % m or steps != plan.n_steps or k >= plan.n_reps:
            break
        good.append((k, value))
    start = len(good) // m
    for pos, (k, value) in enumerate(good[: start * m]):
        rows[k, pos % m] = value
    body = [f"{k},{float(rows[k, j])!r},{j},{plan.n_steps}"
            for k in range(start) for j in range(m)]
    path.write_text("\n".join(header + body) + "\n", newline="\n")
    return start


def run_gamma_ensemble(
    plan: RunPlan,
    workers: int = 1,
    checkpoint: Optional[Union[str, Path]] = None,
) -> Ensemble:
    """Run every replicate of the plan and collect the ladder table.

    Replicates are independent work items; results are reduced in
    replicate order, so the ensemble is identical for any worker count.
    n_reps = 0 is a valid empty run.

    With `checkpoint`, rows stream to that file as replicates finish,
    and a rerun pointing at the same file resumes after the last
    complete replicate; the finished file is byte identical to
    ensemble_csv of the returned ensemble.
    """
    if int(workers) != workers or workers < 1:
        raise ValueError(f"workers must be a positive integer, got {workers}")
    workers = int(workers)
    n, m = plan.n_reps, len(plan.eps_ladder)
    rows = np.empty((n, m), dtype=float)
    failures = []
    start = 0
    handle = None
    if checkpoint is not None:
        path = Path(checkpoint)
        start = _load_checkpoint(plan, path, rows)
        for k in range(start):
            if not np.isfinite(rows[k]).all():
                failures.append((k, "recorded failure (non-finite row)"))
        handle = path.open("a", newline="\n")
    try:
        todo = range(start, n)
        if workers == 1 or len(todo) <= 1:
            for k, row, err in map(_ladder_row, repeat(plan), todo):
                rows[k] = row
                if err is not None:
                    failures.append((k, err))
                if handle is not None:
                    for j in range(m):
                        handle.write(f"{k},{float(row[j])!r},{j},{plan.n_steps}\n")
                    handle.flush()
        else:
            chunk = max(1, len(todo) // (8 * workers))
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for k, row, err in pool.map(_ladder_row, repeat(plan), todo, chunksize=chunk):
                    rows[k] = row
                    if err is not None:
                        failures.append((k, err))
                    if handle is not None:
                        for j in range(m):
                            handle.write(f"{k},{float(row[j])!r},{j},{plan.n_steps}\n")
                        handle.flush()
    finally:
        if handle is not None:
            handle.close()
    failures.sort()
    return Ensemble(plan, rows, tuple(failures))


# --------------------------------------------------------------------------
# ensemble artifact format

_CSV_HEADER = "stream_id,value,epsilon_ladder_id,n_steps"


def ensemble_csv(ens: Ensemble) -> str:
    """Serialize an ensemble: hash line, config echo, one row per rung value.

    Floats print via repr (shortest round trip), so identical ensembles
    serialize to identical bytes.
    """
    cfg = json.dumps(ens.plan.config_block(), sort_keys=True, separators=(",", ":"))
    lines = [
        f"# config_hash={ens.plan.config_hash()}",
        f"# config={cfg}",
        _CSV_HEADER,
    ]
    n_steps = ens.plan.n_steps
    for k in range(ens.n_reps):
        for j in range(len(ens.eps_ladder)):
            lines.append(f"{k},{float(ens.ladder_values[k, j])!r},{j},{n_steps}")
    return "\n".join(lines) + "\n"


def parse_ensemble_csv(text: str) -> Ensemble:
    """Rebuild an ensemble from its artifact; provenance mismatches are errors."""
    lines = text.strip("\n").split("\n")
    if len(lines) < 3 or not lines[0].startswith("# config_hash=") or not lines[1].startswith("# config="):
        raise ValueError("malformed ensemble artifact: missing provenance header")
    stored_hash = lines[0][len("# config_hash="):]
    plan = RunPlan.from_config_block(json.loads(lines[1][len("# config="):]))
    if plan.config_hash() != stored_hash:
        raise ValueError("provenance hash mismatch: artifact config does not hash to its header")
    if lines[2] != _CSV_HEADER:
        raise ValueError(f"malformed ensemble artifact: expected column row {_CSV_HEADER!r}")
    n, m = plan.n_reps, len(plan.eps_ladder)
    body = lines[3:]
    if len(body) != n * m:
        raise ValueError(f"expected {n * m} rows, found {len(body)}")
    rows = np.empty((n, m), dtype=float)
    for pos, line in enumerate(body):
        fields = line.split(",")
        if len(fields) != 4:
            raise ValueError(f"malformed row: {line!r}")
        k, j = int(fields[0]), int(fields[2])
        if k != pos // m or j != pos % m or int(fields[3]) != plan.n_steps:
            raise ValueError(f"row out of order or inconsistent: {line!r}")
        rows[k, j] = float(fields[1])
    failures = tuple(
        (k, "recorded failure (non-finite row)")
        for k in range(n)
        if not np.isfinite(rows[k]).all()
    )
    return Ensemble(plan, rows, failures)


# --------------------------------------------------------------------------
# tail fits


@dataclass(frozen=True)
class TailFit:
    """Weighted fit of -log survival against a transform of the threshold."""

    kind: str
    transform: str
    slope: float
    band: Tuple[float, float]
    intercept: float
    power: float
    scale: float
    levels: Tuple[float, ...]
    thresholds: np.ndarray
    counts: np.ndarray
    survival_low: np.ndarray
    survival_high: np.ndarray
    n_total: int

    def __post_init__(self):
        for name in ("thresholds", "counts", "survival_low", "survival_high"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _wilson_interval(counts: np.ndarray, n: int, z: float = 1.96):
    """Wilson score interval for binomial proportions, vectorized."""
    p = counts / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    return center - half, center + half


def tail_slope_fit(
    samples,
    *,
    kind: str = "upper",
    power: float = 1.0,
    scale: Optional[float] = None,
    levels: Sequence[float] = SURVIVAL_LEVELS,
) -> TailFit:
    """Fit the survival curve of `samples` on its upper tail.

    Thresholds sit at the empirical quantiles of `levels`.  The response
    is -log(empirical survival); the regressor is threshold**power, or
    exp(threshold / scale) when `scale` is given.  Points with fewer
    than MIN_TAIL_COUNT exceedances are dropped, and fewer than
    MIN_TAIL_POINTS survivors raises (insufficient tail mass).  Weights
    and the reported 2 sigma slope band come from Wilson intervals on
    each survival point.
    """
    x = np.asarray(samples, dtype=float).ravel()
    x = x[np.isfinite(x)]
    n = x.size
    levels = tuple(sorted((float(q) for q in levels), reverse=True))
    if not levels or levels[0] >= 1.0 or levels[-1] <= 0.0:
        raise ValueError("levels must be survival probabilities in (0, 1)")
    if n < MIN_TAIL_COUNT:
        raise ValueError("insufficient tail mass: too few finite samples")
    thresholds = np.quantile(x, 1.0 - np.asarray(levels))
    counts = np.array([(x >= h).sum() for h in thresholds])
    usable = counts >= MIN_TAIL_COUNT
    if scale is None:
        transform = "power"
        usable &= thresholds > 0.0
        regressor = np.where(thresholds > 0.0, thresholds, 1.0) ** power
    else:
        transform = "exponential"
        if not (scale > 0.0 and math.isfinite(scale)):
            raise ValueError(f"scale must be positive and finite, got {scale}")
        regressor = np.exp(thresholds / scale)
    # ties between quantile levels carry no extra information
    usable &= np.concatenate(([True], np.diff(thresholds) > 0.0))
    if usable.sum() < MIN_TAIL_POINTS:
        raise ValueError(
            f"insufficient tail mass: {int(usable.sum())} usable points, "
            f"need {MIN_TAIL_POINTS}"
        )
    h = thresholds[usable]
    t = regressor[usable]
    c = counts[usable]
    p_lo, p_hi = _wilson_interval(c, n)
    y = -np.log(c / n)
    sigma = (np.log(p_hi) - np.log(p_lo)) / (2.0 * 1.96)
    w = 1.0 / sigma**2
    design = np.stack([np.ones_like(t), t], axis=1)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
    cov = np.linalg.inv(design.T @ (design * w[:, None]))
    se = math.sqrt(cov[1, 1])
    slope = float(coef[1])
    return TailFit(
        kind=kind,
        transform=transform,
        slope=slope,
        band=(slope - 2.0 * se, slope + 2.0 * se),
        intercept=float(coef[0]),
        power=float(power) if scale is None else math.nan,
        scale=float(scale) if scale is not None else math.nan,
        levels=tuple(np.asarray(levels)[usable]),
        thresholds=h,
        counts=c,
        survival_low=p_lo,
        survival_high=p_hi,
        n_total=n,
    )


def upper_tail_fit(ens: Ensemble) -> TailFit:
    """Upper tail rate of the centered functional: -log P(gamma >= h) vs h^(beta/d)."""
    spec = ens.plan.spec
    return tail_slope_fit(
        ens.finite_limits(), kind="upper", power=spec.beta / spec.dim
    )


def lower_tail_fit(ens: Ensemble) -> TailFit:
    """Lower tail rate: -log P(-gamma >= h) against the regime regressor.

    For beta < d the regressor is h^(beta/(d-beta)); at the critical
    index beta = d it is exp(h / p_1(0)), the reparameterization that
    turns the logarithmic lower tail into a linear fit.
    """
    spec = ens.plan.spec
    samples = -ens.finite_limits()
    if spec.beta < spec.dim:
        return tail_slope_fit(
            samples, kind="lower", power=spec.beta / (spec.dim - spec.beta)
        )
    return tail_slope_fit(samples, kind="lower", scale=density_at_zero(spec, 1.0))


def tail_quantile_witness(ens: Ensemble, level: float = 1e-3) -> Tuple[float, float]:
    """Matched extreme quantiles (upper of gamma, upper of -gamma).

    The first exceeding the second witnesses the upper/lower tail
    asymmetry at this sample size.
    """
    if not 0.0 < level < 0.5:
        raise ValueError(f"level must be in (0, 0.5), got {level}")
    vals = ens.finite_limits()
    if vals.size < 10:
        raise ValueError("need at least 10 finite replicates")
    up = float(np.quantile(vals, 1.0 - level))
    lo = float(np.quantile(-vals, 1.0 - level))
    return up, lo


# --------------------------------------------------------------------------
# closed form mean check for the mutual functional


@dataclass(frozen=True)
class MeanCheck:
    """Monte Carlo mean of the mutual mass against its closed form limit."""

    spec: StableSpec
    s: float
    t: float
    n_reps: int
    n_steps: int
    eps_ladder: Tuple[float, ...]
    seed: int
    rung_means: np.ndarray
    rung_ses: np.ndarray
    rung_expected: np.ndarray
    estimate: float
    se: float
    closed_form: float
    z: float

    def __post_init__(self):
        for name in ("rung_means", "rung_ses", "rung_expected"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def mean_check_alpha(
    spec: StableSpec,
    s: float,
    t: float,
    n_reps: int,
    seed: int,
    *,
    n_steps: int = 512,
    eps_ladder: Sequence[float] = (0.04, 0.02, 0.01),
) -> MeanCheck:
    """Estimate E(alpha(s, t)) by simulation and compare to the closed form.

    Replicate k draws an independent pair of paths started together at
    the origin and evaluates the mutual mass on a common epsilon ladder
    (shared paths across rungs).  The finite-epsilon bias of the mean is
    known exactly from the spectral quadrature, so the reported estimate
    is the finest rung corrected by that deterministic bias; z measures
    the corrected estimate against the epsilon -> 0 closed form.
    """
    spec.require_alpha()
    if int(n_reps) != n_reps or n_reps < 2:
        raise ValueError(f"n_reps must be an integer >= 2, got {n_reps}")
    ladder = np.asarray(sorted((float(e) for e in eps_ladder), reverse=True))
    if ladder.size == 0 or not np.all(ladder > 0.0):
        raise ValueError("eps_ladder entries must be positive")
    rows = np.empty((int(n_reps), ladder.size))
    for k in range(int(n_reps)):
        px = sample_path(spec, s, n_steps, seed, stream_id=2 * k)
        py = sample_path(spec, t, n_steps, seed, stream_id=2 * k + 1)
        rows[k] = np.atleast_1d(np.asarray(mutual_ilt(px, py, ladder), dtype=float))
    means = rows.mean(axis=0)
    ses = rows.std(axis=0, ddof=1) / math.sqrt(rows.shape[0])
    expected = np.atleast_1d(
        np.asarray(expected_mutual_ilt(spec, s, t, ladder), dtype=float)
    )
    closed = float(mutual_ilt_limit(spec, s, t))
    # exact bias correction: E(estimate at eps) - limit is deterministic
    estimate = float(means[-1] - (expected[-1] - closed))
    se = float(ses[-1])
    z = (estimate - closed) / se
    return MeanCheck(
        spec=spec,
        s=float(s),
        t=float(t),
        n_reps=int(n_reps),
        n_steps=int(n_steps),
        eps_ladder=tuple(ladder),
        seed=int(seed),
        rung_means=means,
        rung_ses=ses,
        rung_expected=expected,
        estimate=estimate,
        se=se,
        closed_form=closed,
        z=float(z),
    )


# --------------------------------------------------------------------------
# distributional scaling test


@dataclass(frozen=True)
class ScalingReport:
    """Two sample KS comparison of gamma at horizon t against its scaled copy."""

    spec: StableSpec
    t: float
    n_reps: int
    n_steps: int
    eps_base: float
    exponent: float
    statistic: float
    pvalue: float
    seed: int
    arm_scaled: np.ndarray
    arm_reference: np.ndarray

    def __post_init__(self):
        for name in ("arm_scaled", "arm_reference"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def scaling_test(
    spec: StableSpec,
    t: float,
    n_reps: int,
    seed: int,
    *,
    n_steps: int = 512,
    eps_base: float = 0.05,
    exponent: Optional[float] = None,
) -> ScalingReport:
    """KS test of the dilation identity for the centered functional.

    Arm one evaluates gamma at horizon t with the matched regularization
    eps_base * t^(1/beta); arm two evaluates gamma at horizon 1 with
    eps_base and multiplies by t**exponent.  Under the true exponent
    2 - d/beta the two discrete laws coincide exactly, so the test is
    valid at any step count; a wrong exponent separates the arms.
    """
    spec.require_gamma()
    if not (t > 0.0 and math.isfinite(t)):
        raise ValueError(f"t must be positive and finite, got {t}")
    if int(n_reps) != n_reps or n_reps < 2:
        raise ValueError(f"n_reps must be an integer >= 2, got {n_reps}")
    if not (eps_base > 0.0):
        raise ValueError(f"eps_base must be positive, got {eps_base}")
    if exponent is None:
        exponent = 2.0 - spec.dim / spec.beta
    n_reps = int(n_reps)
    eps_t = eps_base * t ** (1.0 / spec.beta)
    factor = t ** float(exponent)
    arm_scaled = np.empty(n_reps)
    arm_reference = np.empty(n_reps)
    for k in range(n_reps):
        path_t = sample_path(spec, t, n_steps, seed, stream_id=k)
        arm_scaled[k] = gamma_regularized(path_t, eps_t)
        path_1 = sample_path(spec, 1.0, n_steps, seed, stream_id=n_reps + k)
        arm_reference[k] = factor * gamma_regularized(path_1, eps_base)
    ks = stats.ks_2samp(arm_scaled, arm_reference)
    return ScalingReport(
        spec=spec,
        t=float(t),
        n_reps=n_reps,
        n_steps=int(n_steps),
        eps_base=float(eps_base),
        exponent=float(exponent),
        statistic=float(ks.statistic),
        pvalue=float(ks.pvalue),
        seed=int(seed),
        arm_scaled=arm_scaled,
        arm_reference=arm_reference,
    )


# --------------------------------------------------------------------------
# iterated logarithm trajectory diagnostics


def upper_normalizer(spec: StableSpec, t) -> np.ndarray:
    """limsup normalizer t^(2 - d/beta) (log log t)^(d/beta); needs t > e."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= math.e):
        raise ValueError("upper normalizer needs t > e")
    ratio = spec.dim / spec.beta
    return t ** (2.0 - ratio) * np.log(np.log(t)) ** ratio


def lower_normalizer(spec: StableSpec, t) -> np.ndarray:
    """liminf normalizer: t^(2 - d/beta) (log log t)^(d/beta - 1) below the
    critical index, t log log log t at beta = d (needs t > e^e there)."""
    t = np.asarray(t, dtype=float)
    ratio = spec.dim / spec.beta
    if spec.beta < spec.dim:
        if np.any(t <= math.e):
            raise ValueError("lower normalizer needs t > e")
        return t ** (2.0 - ratio) * np.log(np.log(t)) ** (ratio - 1.0)
    if np.any(t <= math.exp(math.e)):
        raise ValueError("critical lower normalizer needs t > e^e")
    return t * np.log(np.log(np.log(t)))


@dataclass(frozen=True)
class TrajectoryReport:
    """One path's centered values at geometric checkpoints, with normalizers."""

    spec: StableSpec
    t_max: float
    n_steps: int
    eps_base: float
    seed: int
    times: np.ndarray
    values: np.ndarray
    upper_norm: np.ndarray
    lower_norm: np.ndarray

    def __post_init__(self):
        for name in ("times", "values", "upper_norm", "lower_norm"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def normalized_upper(self) -> np.ndarray:
        return self.values / self.upper_norm

    def normalized_lower(self) -> np.ndarray:
        return self.values / self.lower_norm


def lil_trajectory(
    spec: StableSpec,
    t_max: float,
    n_checkpoints: int,
    seed: int,
    *,
    n_steps: Optional[int] = None,
    eps_base: float = 0.05,
    t_min: float = 16.0,
) -> TrajectoryReport:
    """Centered functional along one path at geometric time checkpoints.

    Each checkpoint evaluates the path prefix with the dilation matched
    regularization eps_base * t^(1/beta), so every checkpoint sees the
    same resolution relative to its own diffusive scale.  Purely
    diagnostic: values are reported against the growth normalizers, no
    convergence is asserted at finite horizon.
    """
    spec.require_gamma()
    if not (t_max > t_min > math.exp(math.e)):
        raise ValueError(f"need t_max > t_min > e^e, got t_min={t_min}, t_max={t_max}")
    if int(n_checkpoints) != n_checkpoints or n_checkpoints < 2:
        raise ValueError(f"n_checkpoints must be an integer >= 2, got {n_checkpoints}")
    if n_steps is None:
        n_steps = max(256, int(round(16.0 * t_max)))
    path = sample_path(spec, float(t_max), int(n_steps), seed)
    dt = path.dt
    targets = np.geomspace(float(t_min), float(t_max), int(n_checkpoints))
    idx = np.unique(np.clip(np.round(targets / dt).astype(int), 1, int(n_steps)))
    idx = idx[idx * dt >= t_min * (1.0 - 1e-12)]
    times = idx * dt
    values = np.empty(times.size)
    for i, t_c in enumerate(times):
        prefix = path.restricted(float(t_c))
        eps_c = eps_base * float(t_c) ** (1.0 / spec.beta)
        values[i] = gamma_regularized(prefix, eps_c)
    return TrajectoryReport(
        spec=spec,
        t_max=float(t_max),
        n_steps=int(n_steps),
        eps_base=float(eps_base),
        seed=int(seed),
        times=times,
        values=values,
        upper_norm=upper_normalizer(spec, times),
        lower_norm=lower_normalizer(spec, times),
    )
