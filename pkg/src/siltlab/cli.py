"""Config-driven experiment runner.

A thin shell over the library: parse one TOML config describing a single
experiment, dispatch to the module operation it names, write CSV/JSON
artifacts plus a run manifest, and print a summary table.  Every number
in any output is produced by a library call; the CLI only formats.

Data artifacts embed the resolved config (command, spec, run, solver
sections) and its hash, so a run is reproducible from any artifact
header.  The output section (where files land, which formats) is kept
out of that echo: moving a run to a different directory must not change
the data bytes.  Worker count never enters any artifact either, since
replicate reduction order is fixed upstream.

Exit codes: 0 success, 1 validation error (bad config, unknown key,
unsatisfied operation gate), 2 numerical non-convergence; a code 2 run
leaves a manifest marked incomplete.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import __version__
from .mc import (
    Ensemble,
    RunPlan,
    TailFit,
    TrajectoryReport,
    lil_trajectory,
    lower_tail_fit,
    mean_check_alpha,
    run_gamma_ensemble,
    scaling_test,
    tail_quantile_witness,
    upper_tail_fit,
)
from .stable import StableSpec, sample_path
from .variational import ConvergenceError, SpectralGrid, default_grid, maximize_M

__all__ = ["ExperimentConfig", "ConfigError", "parse_config", "run", "report", "main"]

COMMANDS = (
    "sample",
    "alpha-mean",
    "gamma-ensemble",
    "tails",
    "scaling-test",
    "variational",
    "lil",
    "all",
)

_SECTIONS = {
    "spec": ("dim", "beta", "family", "coeffs"),
    "run": ("t_end", "n_steps", "eps_ladder", "n_reps", "seed"),
    "solver": ("L", "N", "lambda", "tol", "max_iter"),
    "output": ("out_dir", "formats"),
}

_FORMATS = ("csv", "svg")

LIL_CHECKPOINTS = 12


class ConfigError(ValueError):
    """Raised for malformed or unknown config content."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment, fully resolved: every field has a concrete value.

    Solver L = 0 / N = 0 mean "use the tabulated default grid for the
    spec"; any other values select an explicit box.
    """

    command: str = "sample"
    spec: StableSpec = StableSpec(dim=1, beta=1.0)
    t_end: float = 1.0
    n_steps: int = 512
    eps_ladder: Tuple[float, ...] = (0.32, 0.16, 0.08, 0.04)
    n_reps: int = 100
    seed: int = 0
    grid_L: float = 0.0
    grid_N: int = 0
    lam: float = 1.0
    tol: float = 1e-6
    max_iter: int = 20000
    out_dir: str = "runs"
    formats: Tuple[str, ...] = ("csv", "svg")

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(
                f"unknown command {self.command!r}; choose one of {', '.join(COMMANDS)}"
            )
        if not (self.t_end > 0.0 and math.isfinite(self.t_end)):
            raise ConfigError(f"run.t_end must be positive and finite, got {self.t_end}")
        if self.n_steps < 1:
            raise ConfigError(f"run.n_steps must be >= 1, got {self.n_steps}")
        if self.n_reps < 0:
            raise ConfigError(f"run.n_reps must be >= 0, got {self.n_reps}")
        if self.seed < 0:
            raise ConfigError(f"run.seed must be >= 0, got {self.seed}")
        ladder = tuple(float(e) for e in self.eps_ladder)
        if not ladder or any(not (e > 0.0) for e in ladder) or any(
            b >= a for a, b in zip(ladder, ladder[1:])
        ):
            raise ConfigError("run.eps_ladder must be strictly decreasing and positive")
        if self.grid_L < 0.0 or self.grid_N < 0:
            raise ConfigError("solver.L and solver.N must be >= 0 (0 = default grid)")
        if (self.grid_L == 0.0) != (self.grid_N == 0):
            raise ConfigError("solver.L and solver.N must be set together")
        if not (self.lam > 0.0):
            raise ConfigError(f"solver.lambda must be positive, got {self.lam}")
        if not (0.0 < self.tol < 1.0):
            raise ConfigError(f"solver.tol must be in (0, 1), got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError(f"solver.max_iter must be >= 1, got {self.max_iter}")
        fmts = tuple(self.formats)
        bad = [f for f in fmts if f not in _FORMATS]
        if bad or len(set(fmts)) != len(fmts):
            raise ConfigError(
                f"output.formats entries must be unique members of {_FORMATS}, got {list(fmts)}"
            )
        if "csv" not in fmts:
            raise ConfigError('output.formats must include "csv" (primary data format)')
        object.__setattr__(self, "eps_ladder", ladder)
        object.__setattr__(self, "formats", fmts)

    # ---------------- canonical blocks, hash, serialization

    def data_block(self) -> dict:
        """The part of the config that determines artifact bytes."""
        return {
            "command": self.command,
            "spec": self.spec.to_config_block(),
            "run": {
                "t_end": self.t_end,
                "n_steps": self.n_steps,
                "eps_ladder": list(self.eps_ladder),
                "n_reps": self.n_reps,
                "seed": self.seed,
            },
            "solver": {
                "L": self.grid_L,
                "N": self.grid_N,
                "lambda": self.lam,
                "tol": self.tol,
                "max_iter": self.max_iter,
            },
        }

    def to_block(self) -> dict:
        block = self.data_block()
        block["output"] = {"out_dir": self.out_dir, "formats": list(self.formats)}
        return block

    def config_hash(self) -> str:
        payload = json.dumps(self.data_block(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()

    @classmethod
    def from_block(cls, block: dict) -> "ExperimentConfig":
        if not isinstance(block, dict):
            raise ConfigError("config must be a table of sections")
        known_top = ("command",) + tuple(_SECTIONS)
        for key in block:
            if key not in known_top:
                raise ConfigError(f'unknown config key "{key}"')
        for section, fields in _SECTIONS.items():
            sub = block.get(section, {})
            if not isinstance(sub, dict):
                raise ConfigError(f'config section "{section}" must be a table')
            for key in sub:
                if key not in fields:
                    raise ConfigError(f'unknown config key "{section}.{key}"')
        spec_block = dict(block.get("spec", {}))
        spec = StableSpec(
            dim=_as_int("spec.dim", spec_block.get("dim", 1)),
            beta=_as_float("spec.beta", spec_block.get("beta", 1.0)),
            family=spec_block.get("family", "isotropic"),
            coeffs=tuple(
                _as_float("spec.coeffs[]", c) for c in spec_block.get("coeffs", (1.0,))
            ),
        )
        run_block = dict(block.get("run", {}))
        solver_block = dict(block.get("solver", {}))
        out_block = dict(block.get("output", {}))
        return cls(
            command=block.get("command", "sample"),
            spec=spec,
            t_end=_as_float("run.t_end", run_block.get("t_end", 1.0)),
            n_steps=_as_int("run.n_steps", run_block.get("n_steps", 512)),
            eps_ladder=tuple(
                _as_float("run.eps_ladder[]", e)
                for e in run_block.get("eps_ladder", (0.32, 0.16, 0.08, 0.04))
            ),
            n_reps=_as_int("run.n_reps", run_block.get("n_reps", 100)),
            seed=_as_int("run.seed", run_block.get("seed", 0)),
            grid_L=_as_float("solver.L", solver_block.get("L", 0.0)),
            grid_N=_as_int("solver.N", solver_block.get("N", 0)),
            lam=_as_float("solver.lambda", solver_block.get("lambda", 1.0)),
            tol=_as_float("solver.tol", solver_block.get("tol", 1e-6)),
            max_iter=_as_int("solver.max_iter", solver_block.get("max_iter", 20000)),
            out_dir=str(out_block.get("out_dir", "runs")),
            formats=tuple(out_block.get("formats", ("csv", "svg"))),
        )

    def to_toml(self) -> str:
        def value(v):
            if isinstance(v, bool):
                raise TypeError("no boolean config fields")
            if isinstance(v, (int, np.integer)):
                return str(int(v))
            if isinstance(v, float):
                return repr(v)
            if isinstance(v, str):
                return json.dumps(v)
            if isinstance(v, (list, tuple)):
                return "[" + ", ".join(value(x) for x in v) + "]"
            raise TypeError(f"unsupported config value {v!r}")

        block = self.to_block()
        lines = [f"command = {value(block['command'])}"]
        for section in _SECTIONS:
            lines.append("")
            lines.append(f"[{section}]")
            for key in _SECTIONS[section]:
                lines.append(f"{key} = {value(block[section][key])}")
        return "\n".join(lines) + "\n"


def _as_float(name, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"config key {name} must be a number, got {v!r}")
    return float(v)


def _as_int(name, v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"config key {name} must be an integer, got {v!r}")
    return int(v)


def parse_config(text: str) -> ExperimentConfig:
    """Parse TOML config text; unknown keys are hard errors naming the key."""
    try:
        block = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    return ExperimentConfig.from_block(block)


# --------------------------------------------------------------------------
# artifact helpers


def _echo_lines(cfg: ExperimentConfig) -> list:
    data = json.dumps(cfg.data_block(), sort_keys=True, separators=(",", ":"))
    return [f"# config_hash={cfg.config_hash()}", f"# config={data}"]


def _write_text(out_dir: Path, name: str, text: str, artifacts: list) -> None:
    (out_dir / name).write_text(text, newline="\n")
    artifacts.append(name)


def _write_json(out_dir: Path, name: str, payload: dict, artifacts: list) -> None:
    _write_text(out_dir, name, json.dumps(payload, sort_keys=True, indent=2) + "\n", artifacts)


def _fit_block(fit: TailFit) -> dict:
    return {
        "kind": fit.kind,
        "transform": fit.transform,
        "slope": fit.slope,
        "band": list(fit.band),
        "intercept": fit.intercept,
        "power": fit.power,
        "scale": fit.scale,
        "levels": list(fit.levels),
        "thresholds": fit.thresholds.tolist(),
        "counts": fit.counts.tolist(),
        "survival_low": fit.survival_low.tolist(),
        "survival_high": fit.survival_high.tolist(),
        "n_total": fit.n_total,
    }


# --------------------------------------------------------------------------
# minimal static SVG figures

_W, _H, _PAD = 360, 300, 46


def _panel(points, title, line=None, bars=None) -> list:
    """One scatter panel in local coordinates [0, _W] x [0, _H]."""
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    if bars:
        ys = ys + [b for pair in bars for b in pair[1:]]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def sx(x):
        return _PAD + (x - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def sy(y):
        return _H - _PAD - (y - y0) / (y1 - y0) * (_H - 2 * _PAD)

    out = [
        f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" '
        'fill="none" stroke="#888" stroke-width="1"/>',
        f'<text x="{_W / 2:.1f}" y="{_PAD - 14}" font-size="12" text-anchor="middle">{title}</text>',
        f'<text x="{_PAD:.1f}" y="{_H - 10}" font-size="10">{x0:.3g}</text>',
        f'<text x="{_W - _PAD:.1f}" y="{_H - 10}" font-size="10" text-anchor="end">{x1:.3g}</text>',
        f'<text x="{_PAD - 4:.1f}" y="{sy(y0):.1f}" font-size="10" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{_PAD - 4:.1f}" y="{sy(y1) + 8:.1f}" font-size="10" text-anchor="end">{y1:.3g}</text>',
    ]
    if line is not None:
        a, b = line
        out.append(
            f'<line x1="{sx(x0):.1f}" y1="{sy(a + b * x0):.1f}" '
            f'x2="{sx(x1):.1f}" y2="{sy(a + b * x1):.1f}" stroke="#c33" stroke-width="1.5"/>'
        )
    for i, (x, y) in enumerate(points):
        if bars:
            out.append(
                f'<line x1="{sx(x):.1f}" y1="{sy(bars[i][1]):.1f}" '
                f'x2="{sx(x):.1f}" y2="{sy(bars[i][2]):.1f}" stroke="#36c" stroke-width="1"/>'
            )
        out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.5" fill="#36c"/>')
    return out


def _svg(width, height, body: list) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">'
    )
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>'] + body + ["</svg>"]) + "\n"


def _tail_figure(up: TailFit, lo: TailFit) -> str:
    panels = []
    for i, fit in enumerate((up, lo)):
        if fit.transform == "power":
            xs = fit.thresholds**fit.power
            xlabel = f"h^{fit.power:.3g}"
        else:
            xs = np.exp(fit.thresholds / fit.scale)
            xlabel = f"exp(h/{fit.scale:.3g})"
        surv = fit.counts / fit.n_total
        pts = list(zip(xs.tolist(), (-np.log(surv)).tolist()))
        bars = [
            (x, -math.log(hi), -math.log(lo_))
            for x, lo_, hi in zip(xs.tolist(), fit.survival_low, fit.survival_high)
        ]
        title = f"{fit.kind}: slope {fit.slope:.4g} vs {xlabel}"
        body = _panel(pts, title, line=(fit.intercept, fit.slope), bars=bars)
        panels.append(f'<g transform="translate({i * _W},0)">' + "".join(body) + "</g>")
    return _svg(2 * _W, _H, panels)


def _trajectory_figure(traj: TrajectoryReport) -> str:
    xs = np.log(traj.times).tolist()
    up = traj.normalized_upper().tolist()
    lo = traj.normalized_lower().tolist()
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(up + lo), max(up + lo)
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def sx(x):
        return _PAD + (x - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def sy(y):
        return _H - _PAD - (y - y0) / (y1 - y0) * (_H - 2 * _PAD)

    body = [
        f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" '
        'fill="none" stroke="#888" stroke-width="1"/>',
        f'<text x="{_W / 2:.1f}" y="{_PAD - 14}" font-size="12" text-anchor="middle">'
        "normalized trajectory vs log t</text>",
        f'<text x="{_PAD:.1f}" y="{_H - 10}" font-size="10">{x0:.3g}</text>',
        f'<text x="{_W - _PAD:.1f}" y="{_H - 10}" font-size="10" text-anchor="end">{x1:.3g}</text>',
        f'<text x="{_PAD - 4:.1f}" y="{sy(y0):.1f}" font-size="10" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{_PAD - 4:.1f}" y="{sy(y1) + 8:.1f}" font-size="10" text-anchor="end">{y1:.3g}</text>',
    ]
    if y0 < 0.0 < y1:
        body.append(
            f'<line x1="{_PAD}" y1="{sy(0.0):.1f}" x2="{_W - _PAD}" y2="{sy(0.0):.1f}" '
            'stroke="#ccc" stroke-width="1"/>'
        )
    for series, color in ((up, "#36c"), (lo, "#393")):
        poly = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, series))
        body.append(
            f'<polyline points="{poly}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
    body.append(
        f'<text x="{_W - _PAD}" y="{_PAD + 12}" font-size="10" text-anchor="end">'
        "blue: upper norm, green: lower norm</text>"
    )
    return _svg(_W, _H, body)


# --------------------------------------------------------------------------
# command implementations


def _grid_for(cfg: ExperimentConfig):
    if cfg.grid_N == 0:
        return default_grid(cfg.spec)
    return SpectralGrid(d=cfg.spec.dim, L=cfg.grid_L, N=cfg.grid_N)


def _plan_for(cfg: ExperimentConfig) -> RunPlan:
    return RunPlan(
        spec=cfg.spec,
        t_end=cfg.t_end,
        n_steps=cfg.n_steps,
        eps_ladder=cfg.eps_ladder,
        n_reps=cfg.n_reps,
        seed=cfg.seed,
    )


def _cmd_sample(cfg: ExperimentConfig, out_dir: Path, artifacts: list) -> None:
    dim = cfg.spec.dim
    cols = "stream_id,step,t," + ",".join(f"x{i}" for i in range(dim))
    lines = _echo_lines(cfg) + [cols]
    for k in range(cfg.n_reps):
        path = sample_path(cfg.spec, cfg.t_end, cfg.n_steps, cfg.seed, stream_id=k)
        for step in range(cfg.n_steps + 1):
            coords = ",".join(repr(float(v)) for v in path.positions[step])
            lines.append(f"{k},{step},{float(step * path.dt)!r},{coords}")
    _write_text(out_dir, "paths.csv", "\n".join(lines) + "\n", artifacts)


def _cmd_alpha_mean(cfg: ExperimentConfig, out_dir: Path, artifacts: list) -> None:
    chk = mean_check_alpha(
        cfg.spec,
        cfg.t_end,
        cfg.t_end,
        cfg.n_reps,
        cfg.seed,
        n_steps=cfg.n_steps,
        eps_ladder=cfg.eps_ladder,
    )
    payload = {
        "config_hash": cfg.config_hash(),
        "config": cfg.data_block(),
        "s": chk.s,
        "t": chk.t,
        "n_reps": chk.n_reps,
        "closed_form": chk.closed_form,
        "estimate": chk.estimate,
        "se": chk.se,
        "z": chk.z,
        "rungs": [
            {"eps": e, "mean": m, "se": s, "expected": q}
            for e, m, s, q in zip(
                chk.eps_ladder, chk.rung_means, chk.rung_ses, chk.rung_expected
            )
        ],
    }
    _write_json(out_dir, "alpha_mean.json", payload, artifacts)


def _gamma_summary(cfg: ExperimentConfig, ens: Ensemble) -> dict:
    payload = {
        "config_hash": cfg.config_hash(),
        "config": cfg.data_block(),
        "plan_hash": ens.plan.config_hash(),
        "n_reps": ens.n_reps,
        "n_failures": len(ens.failures),
        "rungs": [],
        "limits": None,
    }
    if int(ens.ok_mask.sum()) >= 2:
        for j, e in enumerate(ens.eps_ladder):
            mean, se = ens.rung_mean_se(j)
            payload["rungs"].append(
                {"eps": e, "mean": mean, "se": se, "n": int(ens.rung_values(j).size)}
            )
        lims = ens.finite_limits()
        payload["limits"] = {
            "n": int(lims.size),
            "mean": float(lims.mean()),
            "se": float(lims.std(ddof=1) / math.sqrt(lims.size)),
            "min": float(lims.min()),
            "max": float(lims.max()),
            "sources": {
                s: ens.limit_sources.count(s) for s in sorted(set(ens.limit_sources))
            },
        }
    return payload


def _cmd_gamma(cfg: ExperimentConfig, out_dir: Path, artifacts: list, workers: int) -> Ensemble:
    ens = run_gamma_ensemble(_plan_for(cfg), workers=workers, checkpoint=out_dir / "ensemble.csv")
    artifacts.append("ensemble.csv")
    _write_json(out_dir, "gamma_summary.json", _gamma_summary(cfg, ens), artifacts)
    return ens


def _cmd_tails(
    cfg: ExperimentConfig,
    out_dir: Path,
    artifacts: list,
    workers: int,
    ens: Optional[Ensemble] = None,
) -> None:
    if ens is None:
        ens = run_gamma_ensemble(
            _plan_for(cfg), workers=workers, checkpoint=out_dir / "ensemble.csv"
        )
        artifacts.append("ensemble.csv")
    up = upper_tail_fit(ens)
    lo = lower_tail_fit(ens)
    witness_up, witness_lo = tail_quantile_witness(ens)
    sol = maximize_M(
        cfg.spec, lam=1.0, grid=_grid_for(cfg), tol=cfg.tol, max_iter=cfg.max_iter
    )
    if not sol.converged:
        raise ConvergenceError(
            f"tail report needs the variational constant; ascent stopped at "
            f"gradient norm {sol.grad_norm:.3e}"
        )
    payload = {
        "config_hash": cfg.config_hash(),
        "config": cfg.data_block(),
        "upper": _fit_block(up),
        "lower": _fit_block(lo),
        "witness": {"upper_quantile": witness_up, "lower_quantile": witness_lo},
        "a_value": sol.a_value,
        "slope_over_a": (up.slope / sol.a_value) if sol.a_value else None,
    }
    _write_json(out_dir, "tails.json", payload, artifacts)
    if "svg" in cfg.formats:
        _write_text(out_dir, "tails.svg", _tail_figure(up, lo), artifacts)


def _cmd_scaling(cfg: ExperimentConfig, out_dir: Path, artifacts: list) -> None:
    rep = scaling_test(
        cfg.spec,
        cfg.t_end,
        cfg.n_reps,
        cfg.seed,
        n_steps=cfg.n_steps,
        eps_base=cfg.eps_ladder[-1],
    )
    lines = _echo_lines(cfg) + ["stream_id,value_scaled,value_reference"]
    for k in range(rep.n_reps):
        lines.append(
            f"{k},{float(rep.arm_scaled[k])!r},{float(rep.arm_reference[k])!r}"
        )
    _write_text(out_dir, "scaling_arms.csv", "\n".join(lines) + "\n", artifacts)
    payload = {
        "config_hash": cfg.config_hash(),
        "config": cfg.data_block(),
        "t": rep.t,
        "exponent": rep.exponent,
        "statistic": rep.statistic,
        "pvalue": rep.pvalue,
        "n_reps": rep.n_reps,
        "eps_base": rep.eps_base,
    }
    _write_json(out_dir, "scaling.json", payload, artifacts)


def _cmd_variational(cfg: ExperimentConfig, out_dir: Path, artifacts: list) -> None:
    sol = maximize_M(
        cfg.spec, lam=cfg.lam, grid=_grid_for(cfg), tol=cfg.tol, max_iter=cfg.max_iter
    )
    payload = {
        "config_hash": cfg.config_hash(),
        "config": cfg.data_block(),
        **sol.record(),
    }
    if not sol.converged:
        payload["incomplete"] = True
        _write_json(out_dir, "constants.json", payload, artifacts)
        raise ConvergenceError(
            f"ascent stopped at gradient norm {sol.grad_norm:.3e} "
            f"after {sol.iterations} iterations"
        )
    _write_json(out_dir, "constants.json", payload, artifacts)


def _cmd_lil(cfg: ExperimentConfig, out_dir: Path, artifacts: list) -> None:
    traj = lil_trajectory(
        cfg.spec,
        cfg.t_end,
        LIL_CHECKPOINTS,
        cfg.seed,
        eps_base=cfg.eps_ladder[-1],
    )
    lines = _echo_lines(cfg) + [
        "t,value,upper_norm,lower_norm,normalized_upper,normalized_lower"
    ]
    nu, nl = traj.normalized_upper(), traj.normalized_lower()
    for i in range(traj.times.size):
        lines.append(
            ",".join(
                repr(float(v))
                for v in (
                    traj.times[i],
                    traj.values[i],
                    traj.upper_norm[i],
                    traj.lower_norm[i],
                    nu[i],
                    nl[i],
                )
            )
        )
    _write_text(out_dir, "trajectory.csv", "\n".join(lines) + "\n", artifacts)
    if "svg" in cfg.formats:
        _write_text(out_dir, "trajectory.svg", _trajectory_figure(traj), artifacts)


# --------------------------------------------------------------------------
# run and report


def _all_skip_reason(cfg: ExperimentConfig, command: str) -> Optional[str]:
    spec = cfg.spec
    if command == "alpha-mean" and not spec.supports_alpha:
        return "skipped: spec outside the mutual-mass window (beta <= d/2)"
    if command in ("gamma-ensemble", "tails", "scaling-test", "lil") and not spec.supports_gamma:
        return "skipped: spec outside the renormalization window (beta <= 2d/3)"
    if command == "variational" and not 2.0 * spec.beta > spec.dim:
        return "skipped: variational problem degenerate (2 beta <= d)"
    if command == "lil" and not cfg.t_end > 16.0:
        return "skipped: t_end <= 16 leaves no usable iterated-logarithm window"
    if command == "tails" and cfg.n_reps < 20_000:
        return "skipped: tail fits need >= 20000 replicates for the probed levels"
    return None


def run(cfg: ExperimentConfig, workers: Optional[int] = None) -> int:
    """Execute the configured experiment; returns the process exit code."""
    if workers is None:
        workers = os.cpu_count() or 1
    if int(workers) != workers or workers < 1:
        raise ConfigError(f"workers must be a positive integer, got {workers}")
    workers = int(workers)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.monotonic()
    artifacts: list = []
    statuses = {}
    code = 0
    commands = [c for c in COMMANDS if c != "all"] if cfg.command == "all" else [cfg.command]
    ens_cache = None
    try:
        for command in commands:
            if cfg.command == "all":
                reason = _all_skip_reason(cfg, command)
                if reason is not None:
                    statuses[command] = reason
                    continue
            if command == "sample":
                _cmd_sample(cfg, out_dir, artifacts)
            elif command == "alpha-mean":
                _cmd_alpha_mean(cfg, out_dir, artifacts)
            elif command == "gamma-ensemble":
                ens_cache = _cmd_gamma(cfg, out_dir, artifacts, workers)
            elif command == "tails":
                _cmd_tails(cfg, out_dir, artifacts, workers, ens=ens_cache)
            elif command == "scaling-test":
                _cmd_scaling(cfg, out_dir, artifacts)
            elif command == "variational":
                _cmd_variational(cfg, out_dir, artifacts)
            elif command == "lil":
                _cmd_lil(cfg, out_dir, artifacts)
            statuses[command] = "ok"
    except ConvergenceError as exc:
        statuses[commands[len(statuses)]] = f"incomplete: {exc}"
        code = 2
    manifest = {
        "config_hash": cfg.config_hash(),
        "command": cfg.command,
        "started_at": started,
        "elapsed_s": round(time.monotonic() - t0, 3),
        "artifact_list": sorted(set(artifacts)),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "siltlab": __version__,
        },
        "config": cfg.to_block(),
        "statuses": statuses,
        "incomplete": code == 2,
    }
    _write_json(out_dir, "manifest.json", manifest, [])
    return code


def _fmt(v, width=13) -> str:
    if isinstance(v, float):
        return f"{v:<{width}.6g}"
    return f"{v!s:<{width}}"


def _report_alpha(out_dir: Path, lines: list) -> None:
    data = json.loads((out_dir / "alpha_mean.json").read_text())
    lines.append("closed_form   estimate      se            z")
    lines.append(
        _fmt(data["closed_form"]) + " " + _fmt(data["estimate"]) + " "
        + _fmt(data["se"]) + " " + f"{data['z']:+.2f}"
    )


def _report_gamma(out_dir: Path, lines: list) -> None:
    data = json.loads((out_dir / "gamma_summary.json").read_text())
    if not data["rungs"]:
        lines.append(f"n=0 (empty ensemble, {data['n_reps']} replicates)")
        return
    lines.append("eps           mean          se            n")
    for rung in data["rungs"]:
        lines.append(
            _fmt(rung["eps"]) + " " + _fmt(rung["mean"]) + " "
            + _fmt(rung["se"]) + " " + str(rung["n"])
        )
    lim = data["limits"]
    lines.append(
        f"small-eps values: n={lim['n']} mean={lim['mean']:.6g} se={lim['se']:.6g}"
    )
    if data["n_failures"]:
        lines.append(f"failures: {data['n_failures']}")


def _report_tails(out_dir: Path, lines: list) -> None:
    data = json.loads((out_dir / "tails.json").read_text())
    lines.append("tail    slope         band_low      band_high     transform")
    for kind in ("upper", "lower"):
        fit = data[kind]
        lines.append(
            f"{kind:<7} " + _fmt(fit["slope"]) + " " + _fmt(fit["band"][0]) + " "
            + _fmt(fit["band"][1]) + " " + fit["transform"]
        )
    lines.append(
        f"variational a = {data['a_value']:.6g}; fitted/exact ratio = "
        f"{data['slope_over_a']:.3f}"
    )
    w = data["witness"]
    lines.append(
        f"asymmetry witness: q(gamma) = {w['upper_quantile']:.6g} vs "
        f"q(-gamma) = {w['lower_quantile']:.6g}"
    )


def _report_scaling(out_dir: Path, lines: list) -> None:
    data = json.loads((out_dir / "scaling.json").read_text())
    lines.append("KS statistic  pvalue        exponent      n_reps")
    lines.append(
        _fmt(data["statistic"]) + " " + _fmt(data["pvalue"]) + " "
        + _fmt(data["exponent"]) + " " + str(data["n_reps"])
    )


def _report_variational(out_dir: Path, lines: list) -> None:
    data = json.loads((out_dir / "constants.json").read_text())
    for key in ("lambda", "M_value", "kappa", "K_value", "a_value", "grad_norm"):
        val = data.get(key)
        lines.append(f"{key:<10} = " + ("none" if val is None else f"{val:.9g}"))
    lines.append(f"grid L={data['L']} N={data['N']}")
    if data.get("incomplete"):
        lines.append("INCOMPLETE: ascent did not reach tolerance")


def _report_lil(out_dir: Path, lines: list) -> None:
    rows = [
        line.split(",")
        for line in (out_dir / "trajectory.csv").read_text().strip("\n").split("\n")
        if not line.startswith("#")
    ][1:]
    t = [float(r[0]) for r in rows]
    nu = [float(r[4]) for r in rows]
    nl = [float(r[5]) for r in rows]
    lines.append(f"checkpoints: {len(t)} over t in [{t[0]:.6g}, {t[-1]:.6g}]")
    lines.append(f"max |normalized upper| = {max(abs(v) for v in nu):.6g}")
    lines.append(f"max |normalized lower| = {max(abs(v) for v in nl):.6g}")


def _report_sample(out_dir: Path, lines: list) -> None:
    body = [
        line
        for line in (out_dir / "paths.csv").read_text().strip("\n").split("\n")
        if not line.startswith("#")
    ]
    n_rows = len(body) - 1
    if n_rows <= 0:
        lines.append("n=0 (no paths)")
        return
    n_paths = len({row.split(",", 1)[0] for row in body[1:]})
    lines.append(f"{n_paths} paths, {n_rows} samples")


_REPORTERS = {
    "sample": (_report_sample, ("paths.csv",)),
    "alpha-mean": (_report_alpha, ("alpha_mean.json",)),
    "gamma-ensemble": (_report_gamma, ("gamma_summary.json",)),
    "tails": (_report_tails, ("tails.json",)),
    "scaling-test": (_report_scaling, ("scaling.json",)),
    "variational": (_report_variational, ("constants.json",)),
    "lil": (_report_lil, ("trajectory.csv",)),
}


def report(out_dir) -> str:
    """Summary tables rebuilt from the artifacts of a completed run."""
    out_dir = Path(out_dir)
    manifest_path = out_dir / "manifest.json"
    if not manifest_path.exists():
        return f"no manifest found in {out_dir}\n"
    manifest = json.loads(manifest_path.read_text())
    lines = [
        f"run {manifest['config_hash'][:12]} command={manifest['command']} "
        f"elapsed={manifest['elapsed_s']}s"
    ]
    if manifest.get("incomplete"):
        lines.append("INCOMPLETE RUN")
    for command, status in manifest["statuses"].items():
        lines.append("")
        lines.append(f"== {command} ==")
        if status != "ok":
            lines.append(status)
            continue
        reporter, needed = _REPORTERS[command]
        missing = [n for n in needed if not (out_dir / n).exists()]
        if missing:
            lines.append(f"artifact missing: {', '.join(missing)}")
            continue
        reporter(out_dir, lines)
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# entry point


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="siltlab",
        description="Run one configured intersection-functional experiment.",
    )
    parser.add_argument("--config", required=True, help="path to a TOML experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override run.seed")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: available cores)")
    parser.add_argument("--out-dir", default=None, help="override output.out_dir")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(Path(args.config).read_text())
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        out_dir = args.out_dir or os.environ.get("SILTLAB_OUT_DIR")
        if out_dir is not None:
            overrides["out_dir"] = out_dir
        if overrides:
            block = cfg.to_block()
            block["run"]["seed"] = overrides.get("seed", block["run"]["seed"])
            block["output"]["out_dir"] = overrides.get("out_dir", block["output"]["out_dir"])
            cfg = ExperimentConfig.from_block(block)
        workers = args.workers
        if workers is None and "SILTLAB_WORKERS" in os.environ:
            workers = int(os.environ["SILTLAB_WORKERS"])
        code = run(cfg, workers=workers)
        sys.stdout.write(report(cfg.out_dir))
        return code
    except ConvergenceError as exc:
        sys.stderr.write(f"error: did not converge: {exc}\n")
        return 2
    except (ConfigError, ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
