"""Command-line front end.

Each subcommand runs one experiment, writes a CSV and prints a run manifest::

    momentum-equiv lms-equiv --config run.cfg --set trials=100 --seed 3 --out lms.csv

Configuration is a flat ``key = value`` text file (``#`` starts a comment)
plus repeatable ``--set key=value`` overrides applied in order.  Exit status
is 0 on success, 2 when the configuration is invalid and 1 on I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
import time
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .data_stream import random_diagonal_covariance
from .experiments import (
    d_max_d_ss,
    default_steps,
    fit_slope,
    moment_sweep,
    scaling_sweep,
    simulate,
    stability_reports,
)
from .optimizers import (
    BetaStairSchedule,
    DecayingStepScale,
    MomentumConfig,
    SgdConfig,
    equivalent_stepsize,
    validate_momentum_config,
)
from .problems import lms_problem, logistic_problem
from .risk_models import QuadraticRiskSpec

KINDS = ("lms-equiv", "logistic-equiv", "scaling", "stability", "diminishing", "msd-sweep")


class ConfigError(ValueError):
    """Invalid experiment configuration (exit status 2)."""


# --------------------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    kind: str = "lms-equiv"
    # risk
    risk: str = "quadratic"
    dim: int = 10
    covariance: str = "random"
    r_low: float = 0.5
    r_high: float = 2.0
    r_scale: float = 1.0
    covariance_seed: int = 0
    w_star_seed: int = 0
    noise_var: float = 0.01
    rho: float = 0.1
    mean_scale: float = 1.5
    dataset_size: int = 20000
    # algorithms
    variant: str = "heavy_ball"
    beta: float = 0.9
    beta1: Optional[float] = None
    beta2: Optional[float] = None
    epsilon: float = 0.05
    mu_m: float = 0.0003
    mu: Optional[float] = None
    step_profile: tuple = ()
    mu_grid: tuple = ()
    stair_T: int = 100
    stair_alpha: float = 0.3
    divergence_factor: float = 1e6
    # run
    trials: int = 300
    steps: Optional[int] = 800
    horizon: float = 10.0
    seed: int = 0
    workers: int = 1
    ss_window_fraction: float = 0.2
    out: str = ""

    # ---- serialization

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_format_value(getattr(self, f.name))}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str, base: Optional["ExperimentConfig"] = None) -> "ExperimentConfig":
        cfg = base if base is not None else cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            cfg = cfg.with_value(key, value)
        return cfg

    def with_value(self, key: str, value: str) -> "ExperimentConfig":
        types = {f.name: f.type for f in fields(self)}
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            parsed = _parse_value(types[key], value)
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {value!r} ({exc})") from None
        return dataclasses.replace(self, **{key: parsed})

    # ---- derived quantities

    @property
    def betas(self) -> tuple[float, float]:
        """``(beta1, beta2)``: explicit values if given, else from ``variant`` and ``beta``."""
        if self.beta1 is not None or self.beta2 is not None:
            return (self.beta1 or 0.0, self.beta2 or 0.0)
        if self.variant == "heavy_ball":
            return (0.0, self.beta)
        if self.variant == "nesterov":
            return (self.beta, 0.0)
        raise ConfigError(f"variant must be heavy_ball or nesterov, got {self.variant!r}")

    @property
    def equivalence_mode(self) -> bool:
        """SGD step derived as ``mu_m / (1 - beta)`` when ``mu`` is left on auto."""
        return self.mu is None

    def resolved_mu(self) -> float:
        if self.mu is not None:
            return self.mu
        b1, b2 = self.betas
        return float(equivalent_stepsize(self.mu_m, b1 + b2))


def _format_value(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    return str(v)


def _parse_value(typ, text: str):
    text = text.strip()
    optional = typ.startswith("Optional")
    if optional and text.lower() in ("auto", "none", ""):
        return None
    base = typ.replace("Optional[", "").rstrip("]")
    if base == "int":
        return int(text)
    if base == "float":
        return float(text)
    if base == "tuple":
        return tuple(float(x) for x in text.split(",") if x.strip())
    return text


def _preset(kind: str) -> ExperimentConfig:
    base = ExperimentConfig(kind=kind)
    presets = {
        "lms-equiv": {},
        "logistic-equiv": dict(risk="logistic", mu_m=0.001, trials=100, steps=2000),
        "scaling": dict(
            mu_grid=tuple(10.0 ** e for e in (-2.0, -2.5, -3.0, -3.5, -4.0)), trials=50, steps=None
        ),
        "stability": dict(
            dim=5, covariance="identity", r_scale=0.5, variant="nesterov", beta=0.5,
            mu_m=0.4, mu=0.4, trials=1000, steps=200,
        ),
        "diminishing": dict(mu_m=0.003, mu=0.003, steps=None),
        "msd-sweep": dict(mu_grid=(3e-3, 1e-3, 3e-4, 1e-4), trials=50, steps=None),
    }
    return dataclasses.replace(base, **presets[kind])


def validate(cfg: ExperimentConfig) -> None:
    """Raise :class:`ConfigError` naming the first violated invariant."""
    if cfg.kind not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}")
    if cfg.risk not in ("quadratic", "logistic"):
        raise ConfigError("risk must be quadratic or logistic")
    if cfg.covariance not in ("random", "identity"):
        raise ConfigError("covariance must be random or identity")
    if cfg.dim < 1:
        raise ConfigError("dim must be >= 1")
    if not 0 < cfg.r_low <= cfg.r_high or cfg.r_scale <= 0:
        raise ConfigError("covariance entries must be positive (0 < r_low <= r_high, r_scale > 0)")
    if cfg.noise_var < 0:
        raise ConfigError("noise_var must be >= 0")
    if cfg.trials < 1:
        raise ConfigError("trials must be >= 1")
    if cfg.steps is not None and cfg.steps < 1:
        raise ConfigError("steps must be >= 1")
    if not 0 < cfg.ss_window_fraction < 1:
        raise ConfigError("ss_window_fraction must lie in (0, 1)")
    if cfg.mu_m <= 0 or (cfg.mu is not None and cfg.mu <= 0):
        raise ConfigError("step sizes must be > 0")
    if cfg.seed < 0:
        raise ConfigError("seed must be >= 0")
    if cfg.kind == "diminishing":
        try:
            BetaStairSchedule(cfg.beta, cfg.stair_T, cfg.stair_alpha)
        except ValueError as exc:
            raise ConfigError(f"stair schedule: {exc}") from None
    else:
        b1, b2 = cfg.betas
        try:
            MomentumConfig(cfg.mu_m, b1, b2, cfg.epsilon)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if cfg.kind in ("scaling", "msd-sweep"):
        if not cfg.mu_grid or min(cfg.mu_grid) <= 0:
            raise ConfigError("mu_grid needs at least one value, all > 0")
    if cfg.step_profile:
        if len(cfg.step_profile) != cfg.dim or min(cfg.step_profile) <= 0:
            raise ConfigError("step_profile needs dim positive entries")
    if cfg.risk == "logistic" and (cfg.rho <= 0 or cfg.dataset_size < 2 or cfg.dataset_size % 2):
        raise ConfigError("logistic risk needs rho > 0 and an even dataset_size >= 2")


def build_spec(cfg: ExperimentConfig):
    if cfg.covariance == "identity":
        r = np.full(cfg.dim, cfg.r_scale)
    else:
        r = cfg.r_scale * random_diagonal_covariance(cfg.dim, cfg.r_low, cfg.r_high, cfg.covariance_seed)
    if cfg.risk == "logistic":
        return logistic_problem(rho=cfg.rho, mean_scale=cfg.mean_scale, dataset_size=cfg.dataset_size, r_diag=r)
    return lms_problem(noise_var=cfg.noise_var, w_star_seed=cfg.w_star_seed, r_diag=r)


def _momentum(cfg: ExperimentConfig, step_m=None) -> MomentumConfig:
    b1, b2 = cfg.betas
    return MomentumConfig(cfg.mu_m if step_m is None else step_m, b1, b2, cfg.epsilon)


# --------------------------------------------------------------------------- CSV


@dataclass
class CsvTable:
    columns: list
    rows: list = field(default_factory=list)
    footer: list = field(default_factory=list)


def format_number(x) -> str:
    """Shortest round-trip text; ``-inf`` for the logarithm of zero."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def db(x) -> float:
    """``10 log10(x)`` with ``-inf`` at zero and ``nan`` for negative or non-finite input."""
    x = float(x)
    if x == 0:
        return -math.inf
    if not x > 0 or math.isinf(x):
        return math.nan if not x > 0 else math.inf
    return 10.0 * math.log10(x)


def emit_csv(table: CsvTable, path: str) -> None:
    lines = [",".join(table.columns)]
    lines += [",".join(format_number(v) for v in row) for row in table.rows]
    lines += ["# " + line for line in table.footer]
    text = "\n".join(lines) + "\n"
    try:
        with open(path, "w", encoding="ascii", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write CSV {path!r}: {exc.strerror or exc}") from exc


def read_csv(path: str) -> CsvTable:
    """Parse a file written by :func:`emit_csv`; numeric cells come back as floats."""
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    table = CsvTable(lines[0].split(","))
    for line in lines[1:]:
        if line.startswith("#"):
            table.footer.append(line[2:])
        else:
            table.rows.append([float(v) if v != "" else math.nan for v in line.split(",")])
    return table


def _curve_columns(table: CsvTable, names_curves: list) -> None:
    for i in range(len(names_curves[0][1])):
        row = [i]
        for _, curve in names_curves:
            row += [curve[i], db(curve[i])]
        table.rows.append(row)


# --------------------------------------------------------------------------- experiments


def _run_equiv(cfg, spec, manifest):
    mom = _momentum(cfg)
    mu = cfg.resolved_mu()
    sgd = SgdConfig(mu if not cfg.step_profile else mu * np.asarray(cfg.step_profile))
    steps = cfg.steps or default_steps(spec, mu, cfg.horizon)
    manifest["steps_resolved"] = steps
    stats = simulate(
        spec, {"sgd": sgd, "momentum": mom}, steps, cfg.trials, cfg.seed,
        diff_pair=("momentum", "sgd"), workers=cfg.workers,
    )
    cols = ["iter", "msd_sgd", "msd_sgd_db", "msd_momentum", "msd_momentum_db", "gap", "gap_db", "diff_db"]
    table = CsvTable(cols)
    for i in range(steps):
        a, b, g = stats.msd["sgd"][i], stats.msd["momentum"][i], stats.diff_sq[i]
        table.rows.append([i, a, db(a), b, db(b), g, db(g), db(b) - db(a)])
    tail = lambda c: d_max_d_ss(c, cfg.ss_window_fraction)[1]
    table.footer.append(f"msd_ss_sgd_db={format_number(db(tail(stats.msd['sgd'])))}")
    table.footer.append(f"msd_ss_momentum_db={format_number(db(tail(stats.msd['momentum'])))}")
    return table


def _run_scaling(cfg, spec, manifest):
    b1, b2 = cfg.betas
    variant = "nesterov" if b1 > 0 else "heavy_ball"
    profile = cfg.step_profile or None
    points = scaling_sweep(
        spec, b1 + b2, cfg.mu_grid, cfg.steps, cfg.trials, cfg.seed, variant,
        cfg.ss_window_fraction, profile, cfg.horizon, cfg.workers,
    )
    manifest["mu_m_resolved"] = ",".join(repr(float(mu * (1.0 - b1 - b2))) for mu in cfg.mu_grid)
    manifest["steps_resolved"] = ",".join(
        str(cfg.steps or default_steps(spec, mu * min(cfg.step_profile or (1.0,)), cfg.horizon))
        for mu in cfg.mu_grid
    )
    table = CsvTable(["mu", "log10_mu", "d_max_db", "d_ss_db", "d_max", "d_ss"])
    for p in points:
        table.rows.append([p.mu, math.log10(p.mu), p.d_max_db, p.d_ss_db, p.d_max, p.d_ss])
    ok = [p for p in points if not p.diverged]
    if len(ok) >= 2:
        s_max, _ = fit_slope([(math.log10(p.mu), p.d_max_db) for p in ok])
        s_ss, _ = fit_slope([(math.log10(p.mu), p.d_ss_db) for p in ok])
        spread = ok[0].d_max_db - ok[-1].d_max_db
        table.footer.append(
            f"slope_d_max_db_per_decade={format_number(s_max)},slope_d_ss_db_per_decade={format_number(s_ss)}"
            f",d_max_db_first_minus_last={format_number(spread)}"
        )
    return table


def _run_stability(cfg, spec, manifest):
    mu = cfg.resolved_mu()
    algs = {"sgd": SgdConfig(mu), "momentum": _momentum(cfg)}
    steps = cfg.steps or default_steps(spec, mu, cfg.horizon)
    manifest["steps_resolved"] = steps
    stats = simulate(
        spec, algs, steps, cfg.trials, cfg.seed, divergence_threshold=-cfg.divergence_factor, workers=cfg.workers
    )
    reports = stability_reports(stats, algs)
    table = CsvTable(["iter", "msd_sgd", "msd_sgd_db", "msd_momentum", "msd_momentum_db"])
    _curve_columns(table, [("sgd", stats.msd["sgd"]), ("momentum", stats.msd["momentum"])])
    for name, r in reports.items():
        table.footer.append(
            f"{name}:diverged_fraction={format_number(r.diverged_fraction)}"
            f",final_msd_median={format_number(r.final_msd_median)}"
        )
    return table


def _run_diminishing(cfg, spec, manifest):
    stair = BetaStairSchedule(cfg.beta, cfg.stair_T, cfg.stair_alpha)
    mu = cfg.mu_m
    b1, b2 = cfg.betas
    mom = MomentumConfig(mu, stair, 0.0) if b1 > 0 else MomentumConfig(mu, 0.0, stair)
    steps = cfg.steps or default_steps(spec, mu, cfg.horizon)
    manifest["steps_resolved"] = steps
    algs = {
        "momentum_stair": mom,
        "sgd_decaying": SgdConfig(mu, DecayingStepScale(stair)),
        "sgd_constant": SgdConfig(cfg.resolved_mu()),
    }
    bad = validate_momentum_config(mom, steps)
    if bad is not None:
        raise ConfigError(str(bad))
    stats = simulate(spec, algs, steps, cfg.trials, cfg.seed, diff_pair=("momentum_stair", "sgd_decaying"), workers=cfg.workers)
    cols = ["iter", "beta"]
    for a in algs:
        cols += [f"msd_{a}", f"msd_{a}_db"]
    cols += ["gap", "gap_db", "diff_db"]
    table = CsvTable(cols)
    for i in range(steps):
        row = [i, 0.0 if i == 0 else stair(i)]
        for a in algs:
            row += [stats.msd[a][i], db(stats.msd[a][i])]
        row += [stats.diff_sq[i], db(stats.diff_sq[i]), db(stats.msd["momentum_stair"][i]) - db(stats.msd["sgd_decaying"][i])]
        table.rows.append(row)
    tail = lambda c: d_max_d_ss(c, cfg.ss_window_fraction)[1]
    for a in algs:
        table.footer.append(f"msd_ss_{a}_db={format_number(db(tail(stats.msd[a])))}")
    return table


def _run_msd_sweep(cfg, spec, manifest):
    if not isinstance(spec, QuadraticRiskSpec):
        raise ConfigError("msd-sweep uses the quadratic risk")
    b1, b2 = cfg.betas
    variant = "nesterov" if b1 > 0 else "heavy_ball"
    rows = moment_sweep(spec, b1 + b2, cfg.mu_grid, cfg.trials, cfg.seed, variant, cfg.ss_window_fraction, cfg.horizon, cfg.workers)
    manifest["steps_resolved"] = ",".join(str(default_steps(spec, mu, cfg.horizon)) for mu in cfg.mu_grid)
    keys = ["msd_ss", "msd4_ss", "momentum_msd_ss", "w_hat_sq_ss", "w_check_sq_ss"]
    cols = ["mu", "log10_mu"]
    for k in keys:
        cols += [k, k + "_db"]
    table = CsvTable(cols)
    for r in rows:
        row = [r["mu"], math.log10(r["mu"])]
        for k in keys:
            row += [r[k], db(r[k])]
        table.rows.append(row)
    if len(rows) >= 2:
        fits = []
        for k in keys:
            s, _ = fit_slope([(math.log10(r["mu"]), db(r[k])) for r in rows])
            fits.append(f"slope_{k}_db_per_decade={format_number(s)}")
        table.footer.append(",".join(fits))
    return table


RUNNERS = {
    "lms-equiv": _run_equiv,
    "logistic-equiv": _run_equiv,
    "scaling": _run_scaling,
    "stability": _run_stability,
    "diminishing": _run_diminishing,
    "msd-sweep": _run_msd_sweep,
}


def run(cfg: ExperimentConfig, stream=None) -> int:
    """Validate, run, write the CSV and print the manifest.  Returns the exit status."""
    stream = sys.stdout if stream is None else stream
    try:
        validate(cfg)
        spec = build_spec(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = cfg.out or f"{cfg.kind}.csv"
    manifest = {}
    t0 = time.perf_counter()
    try:
        table = RUNNERS[cfg.kind](cfg, spec, manifest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        emit_csv(table, out)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    wall = time.perf_counter() - t0
    print(cfg.to_text(), end="", file=stream)
    if cfg.kind != "diminishing":
        b1, b2 = cfg.betas
        print(f"beta1_resolved = {b1!r}", file=stream)
        print(f"beta2_resolved = {b2!r}", file=stream)
    if cfg.equivalence_mode and cfg.kind not in ("scaling", "msd-sweep"):
        print(f"mu_resolved = {cfg.resolved_mu()!r}  # mu_m / (1 - beta)", file=stream)
    for k, v in manifest.items():
        print(f"{k} = {v}", file=stream)
    print(f"output = {out}", file=stream)
    print(f"wall_time_s = {wall:.3f}", file=stream)
    print(f"{cfg.kind}: wrote {len(table.rows)} rows to {out}", file=stream)
    return 0


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="momentum-equiv", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="CSV output path")
    return parser


def load_config(kind: str, config_path=None, overrides=(), seed=None, out=None) -> ExperimentConfig:
    """Preset for ``kind``, then the config file, then overrides (ConfigError / OSError on failure)."""
    cfg = _preset(kind)
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise OSError(f"cannot read config {config_path!r}: {exc.strerror or exc}") from exc
        cfg = ExperimentConfig.from_text(text, cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg = cfg.with_value(key.strip(), value)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    if out is not None:
        cfg = dataclasses.replace(cfg, out=out)
    if cfg.kind != kind:
        raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand {kind!r}")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.kind, args.config, args.set, args.seed, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
