"""Monte Carlo harness for coupled SGD / momentum-SGD runs.

All algorithms of one run consume the same per-trial sample stream: the k-th
sample feeds the k-th SGD update and, for momentum, the initialization step
(k = 0) or momentum step k.  Trials are advanced together as a batch along a
leading axis; batches have a fixed size so the trial-sum reduction order, and
hence every output bit, does not depend on how many worker processes run.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .data_stream import StreamSeed, make_logistic_dataset, make_logistic_stream, make_regression_stream
from .optimizers import (
    BetaStairSchedule,
    DecayingStepScale,
    MomentumConfig,
    SgdConfig,
    equivalent_stepsize,
    momentum_init,
    momentum_step,
    sgd_step,
    validate_momentum_config,
)
from .risk_models import LogisticRiskSpec, QuadraticRiskSpec, RiskSpec, compute_minimizer, hessian_bounds
from .transform import to_transformed

__all__ = [
    "TrajectoryStats",
    "ScalingPoint",
    "StabilityReport",
    "simulate",
    "run_coupled_pair",
    "msd_curve",
    "d_max_d_ss",
    "to_db",
    "fit_slope",
    "default_steps",
    "scaling_sweep",
    "moment_sweep",
    "stability_probe",
    "stability_reports",
    "diminishing_momentum_experiment",
    "first_crossing",
]

TRIAL_BATCH = 50
CHUNK = 1024

AlgConfig = Union[SgdConfig, MomentumConfig]


@dataclass
class TrajectoryStats:
    """Trial-averaged per-iteration curves.

    ``msd[name][k]`` is the mean of ``||w_star - w||^2`` after ``k + 1``
    samples.  ``moments`` holds other per-algorithm curves keyed
    ``"<name>:<moment>"`` (``msd4``, ``w_hat_sq``, ``w_check_sq``).
    """

    msd: dict
    diff_sq: Optional[np.ndarray]
    trials: int
    steps: int
    moments: dict = field(default_factory=dict)
    diverged: dict = field(default_factory=dict)
    final_sq: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScalingPoint:
    mu: float
    d_max_db: float
    d_ss_db: float
    d_max: float = math.nan
    d_ss: float = math.nan
    diverged: bool = False


@dataclass(frozen=True)
class StabilityReport:
    mu: float
    diverged_fraction: float
    final_msd_median: float


def to_db(x: float) -> float:
    """``10 log10(x)``."""
    if not x > 0:
        raise ValueError("dB conversion needs a positive value")
    return 10.0 * math.log10(x)


def _db_array(x):
    with np.errstate(divide="ignore", invalid="ignore"):
        return 10.0 * np.log10(np.asarray(x, dtype=float))


def d_max_d_ss(diff_curve, ss_window_fraction: float = 0.2) -> tuple[float, float]:
    """Maximum of the curve and the mean of its trailing window."""
    curve = np.asarray(diff_curve, dtype=float)
    if curve.size == 0:
        raise ValueError("empty curve")
    if not 0 < ss_window_fraction < 1:
        raise ValueError("ss_window_fraction must lie in (0, 1)")
    window = max(1, int(round(ss_window_fraction * curve.size)))
    return float(curve.max()), float(curve[-window:].mean())


def fit_slope(points) -> tuple[float, float]:
    """Least-squares line through ``(log10_mu, value_db)`` pairs: ``(slope, intercept)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or np.unique(pts[:, 0]).size < 2:
        raise ValueError("need at least two distinct abscissae")
    slope, intercept = np.polyfit(pts[:, 0], pts[:, 1], 1)
    return float(slope), float(intercept)


def first_crossing(curve_db, level_db: float) -> Optional[int]:
    """First index at which the curve is at or below ``level_db``."""
    hits = np.flatnonzero(np.asarray(curve_db) <= level_db)
    return int(hits[0]) if hits.size else None


def default_steps(spec: RiskSpec, mu: float, horizon: float = 10.0, minimum: int = 800) -> int:
    """``max(minimum, horizon / (mu nu))``: enough iterations to pass the transient."""
    nu, _ = hessian_bounds(spec)
    return max(minimum, int(math.ceil(horizon / (mu * nu))))


# --------------------------------------------------------------------------- engine


def _batch_streams(spec, master_seed, trial_ids):
    if isinstance(spec, QuadraticRiskSpec):
        return [make_regression_stream(spec, StreamSeed(master_seed, t)) for t in trial_ids], None
    datasets = [make_logistic_dataset(spec, StreamSeed(master_seed, t)) for t in trial_ids]
    streams = [make_logistic_stream(spec, StreamSeed(master_seed, t), ds) for t, ds in zip(trial_ids, datasets)]
    return streams, datasets


def _stack_chunk(streams, n):
    parts = [s.take(n) for s in streams]
    cls = type(parts[0])
    a, b = (np.stack([getattr(p, f) for p in parts], axis=0) for f in cls.__dataclass_fields__)
    return cls(a, b)


def _simulate_batch(spec, algs, steps, trial_ids, master_seed, w_init, want, diff_pair, threshold):
    names = list(algs)
    streams, datasets = _batch_streams(spec, master_seed, trial_ids)
    b = len(trial_ids)
    m = spec.dim
    need_star = bool(want & {"msd", "msd4", "transformed"}) or threshold is not None
    if need_star:
        if datasets is None:
            w_star = np.broadcast_to(spec.w_star, (b, m))
        else:
            w_star = np.stack([compute_minimizer(spec, ds) for ds in datasets])
    x0 = np.broadcast_to(np.asarray(w_init, dtype=float), (b, m)).copy()

    sums = {}
    for a in names:
        if "msd" in want:
            sums[a] = np.zeros(steps)
        if "msd4" in want:
            sums[a + ":msd4"] = np.zeros(steps)
        if "transformed" in want and isinstance(algs[a], MomentumConfig) and not algs[a].is_scheduled:
            sums[a + ":w_hat_sq"] = np.zeros(steps)
            sums[a + ":w_check_sq"] = np.zeros(steps)
    diff = np.zeros(steps) if diff_pair else None
    diverged = {a: np.zeros(b, dtype=bool) for a in names}
    if threshold is not None:
        sq0 = np.sum((w_star - x0) ** 2, axis=-1)
        limit = np.full(b, float(threshold)) if threshold > 0 else -threshold * sq0
    states = {a: x0 for a in names}
    last_sq = {a: np.zeros(b) for a in names}

    with np.errstate(over="ignore", invalid="ignore"):
        k = 0
        while k < steps:
            n = min(CHUNK, steps - k)
            chunk = _stack_chunk(streams, n)
            for j in range(n):
                sample = chunk.select((slice(None), j))
                cur = {}
                for a in names:
                    cfg = algs[a]
                    st = states[a]
                    if isinstance(cfg, SgdConfig):
                        st = sgd_step(st, sample, cfg, spec, k)
                        w = st
                    elif k == 0:
                        st = momentum_init(st, sample, cfg, spec)
                        w = st.w_cur
                    else:
                        st = momentum_step(st, sample, cfg, spec)
                        w = st.w_cur
                    states[a] = st
                    cur[a] = w
                    if need_star:
                        err = w_star - w
                        sq = np.sum(err * err, axis=-1)
                        if a in sums:
                            sums[a][k] = np.sum(sq)
                        if a + ":msd4" in sums:
                            sums[a + ":msd4"][k] = np.sum(sq * sq)
                        if a + ":w_hat_sq" in sums:
                            pair = to_transformed(err, w_star - st.w_prev, cfg.beta)
                            sums[a + ":w_hat_sq"][k] = np.sum(pair.w_hat * pair.w_hat)
                            sums[a + ":w_check_sq"][k] = np.sum(pair.w_check * pair.w_check)
                        if threshold is not None:
                            diverged[a] |= ~np.isfinite(sq) | (sq > limit)
                        last_sq[a] = sq
                if diff is not None:
                    g = cur[diff_pair[0]] - cur[diff_pair[1]]
                    diff[k] = np.sum(g * g)
                k += 1
    return sums, diff, diverged, last_sq


def _param_block(p, ks, m):
    """Per-step values of a constant/vector/scheduled parameter as ``(len(ks), m)``."""
    if callable(p):
        vals = np.asarray([p(k) for k in ks], dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        return np.broadcast_to(vals, (len(ks), m))
    return np.broadcast_to(np.asarray(p, dtype=float), (len(ks), m))


def _simulate_batch_fast(spec, algs, steps, trial_ids, master_seed, w_init, want, diff_pair, threshold):
    from . import _fastpath as fp

    names = list(algs)
    streams, datasets = _batch_streams(spec, master_seed, trial_ids)
    b = len(trial_ids)
    m = spec.dim
    n_alg = len(names)
    need_star = bool(want & {"msd", "msd4", "transformed"}) or threshold is not None
    w_star = np.zeros((b, m))
    if need_star:
        if datasets is None:
            w_star[:] = spec.w_star
        else:
            w_star = np.stack([compute_minimizer(spec, ds) for ds in datasets])
    x0 = np.broadcast_to(np.asarray(w_init, dtype=float), (b, m))
    X = np.array(np.broadcast_to(x0, (n_alg, b, m)))
    Wp = X.copy()
    Pp = X.copy()

    alg_type = np.array([fp.SGD if isinstance(algs[a], SgdConfig) else fp.MOMENTUM for a in names], dtype=np.int64)
    transformed = np.array(
        [
            "transformed" in want and isinstance(algs[a], MomentumConfig) and not algs[a].is_scheduled
            for a in names
        ]
    )
    beta_t = np.zeros((n_alg, m))
    mom_step = np.zeros((n_alg, m))
    for idx, a in enumerate(names):
        cfg = algs[a]
        if isinstance(cfg, MomentumConfig):
            mom_step[idx] = cfg.step_m
            if transformed[idx]:
                beta_t[idx] = cfg.beta
    sums = np.zeros((n_alg, 4, steps))
    diff = np.zeros(steps)
    da, db = (names.index(diff_pair[0]), names.index(diff_pair[1])) if diff_pair else (-1, -1)
    diverged = np.zeros((n_alg, b), dtype=np.bool_)
    last_sq = np.zeros((n_alg, b))
    if threshold is not None:
        sq0 = np.sum((w_star - x0) ** 2, axis=-1)
        limit = np.full(b, float(threshold)) if threshold > 0 else -threshold * sq0
    else:
        limit = np.full(b, np.inf)
    kind = 0 if isinstance(spec, QuadraticRiskSpec) else 1
    rho = float(getattr(spec, "rho", 0.0))

    k = 0
    while k < steps:
        n = min(CHUNK, steps - k)
        chunk = _stack_chunk(streams, n)
        ks = range(k, k + n)
        sgd_mu = np.zeros((n_alg, n, m))
        b1 = np.zeros((n_alg, n, m))
        b2 = np.zeros((n_alg, n, m))
        for idx, a in enumerate(names):
            cfg = algs[a]
            if isinstance(cfg, SgdConfig):
                sgd_mu[idx] = _param_block(cfg.step_at, ks, m)
            else:
                # momentum parameters are used from k = 1 onward
                ki = range(max(k, 1), k + n)
                off = n - len(ki)
                if len(ki):
                    b1[idx, off:] = _param_block(cfg.beta1 if not callable(cfg.beta1) else cfg.beta1_at, ki, m)
                    b2[idx, off:] = _param_block(cfg.beta2 if not callable(cfg.beta2) else cfg.beta2_at, ki, m)
        fp.advance(
            kind, rho, np.ascontiguousarray(chunk.u if kind == 0 else chunk.h),
            np.ascontiguousarray(chunk.d if kind == 0 else chunk.gamma, dtype=float), k,
            alg_type, sgd_mu, mom_step, b1, b2,
            X, Wp, Pp,
            need_star, w_star, "msd" in want, "msd4" in want, transformed, beta_t,
            sums[:, :, k : k + n], diff[k : k + n], da, db,
            threshold is not None, limit, diverged, last_sq,
        )
        k += n

    out = {}
    for idx, a in enumerate(names):
        if "msd" in want:
            out[a] = sums[idx, 0]
        if "msd4" in want:
            out[a + ":msd4"] = sums[idx, 1]
        if transformed[idx]:
            out[a + ":w_hat_sq"] = sums[idx, 2]
            out[a + ":w_check_sq"] = sums[idx, 3]
    return (
        out,
        diff if diff_pair else None,
        {a: diverged[idx].copy() for idx, a in enumerate(names)},
        {a: last_sq[idx].copy() for idx, a in enumerate(names)},
    )


def _run_task(args):
    backend, rest = args[0], args[1:]
    if backend == "numba":
        return _simulate_batch_fast(*rest)
    return _simulate_batch(*rest)


def _default_backend():
    try:
        import numba  # noqa: F401
    except ImportError:  # pragma: no cover
        return "numpy"
    return "numba"


def simulate(
    spec: RiskSpec,
    algs: dict,
    steps: int,
    trials: int,
    master_seed: int = 0,
    w_init=None,
    want: Sequence[str] = ("msd",),
    diff_pair: Optional[tuple] = None,
    divergence_threshold=None,
    workers: int = 1,
    backend: Optional[str] = None,
) -> TrajectoryStats:
    """Drive every algorithm in ``algs`` on shared per-trial streams.

    ``divergence_threshold``: ``None`` disables divergence tracking, a
    positive value is an absolute MSD limit, and a negative value ``-f``
    means ``f`` times the initial MSD.  ``backend`` is ``"numpy"`` (the
    reference path built on :mod:`optimizers`) or ``"numba"`` (compiled
    loop, default when numba is installed).
    """
    backend = backend or _default_backend()
    if backend not in ("numpy", "numba"):
        raise ValueError(f"unknown backend {backend!r}")
    if trials < 1 or steps < 1:
        raise ValueError("trials and steps must be >= 1")
    for name, cfg in algs.items():
        if isinstance(cfg, MomentumConfig):
            bad = validate_momentum_config(cfg, steps)
            if bad is not None:
                raise ValueError(f"{name}: {bad}")
    want = set(want)
    w_init = np.zeros(spec.dim) if w_init is None else np.asarray(w_init, dtype=float)
    batches = [list(range(s, min(s + TRIAL_BATCH, trials))) for s in range(0, trials, TRIAL_BATCH)]
    tasks = [
        (backend, spec, algs, steps, ids, master_seed, w_init, want, diff_pair, divergence_threshold)
        for ids in batches
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]

    # fixed batch order keeps the reduction deterministic
    total = {key: np.zeros(steps) for key in results[0][0]}
    diff = np.zeros(steps) if diff_pair else None
    diverged = {a: [] for a in algs}
    final_sq = {a: [] for a in algs}
    for sums, d, div, last in results:
        for key, val in sums.items():
            total[key] += val
        if diff is not None:
            diff += d
        for a in algs:
            diverged[a].append(div[a])
            final_sq[a].append(last[a])
    msd = {a: total[a] / trials for a in algs if a in total}
    moments = {key: val / trials for key, val in total.items() if ":" in key}
    return TrajectoryStats(
        msd=msd,
        diff_sq=None if diff is None else diff / trials,
        trials=trials,
        steps=steps,
        moments=moments,
        diverged={a: np.concatenate(v) for a, v in diverged.items()},
        final_sq={a: np.concatenate(v) for a, v in final_sq.items()},
    )


# --------------------------------------------------------------------------- experiments


def _equivalent_sgd(cfg: MomentumConfig) -> SgdConfig:
    return SgdConfig(equivalent_stepsize(cfg.step_m, cfg.beta))


def run_coupled_pair(
    spec: RiskSpec,
    momentum_cfg: MomentumConfig,
    steps: int,
    trials: int,
    master_seed: int = 0,
    w_init=None,
    want: Sequence[str] = ("msd",),
    workers: int = 1,
) -> TrajectoryStats:
    """Momentum SGD against plain SGD with step ``mu_m / (1 - beta)`` on shared streams."""
    algs = {"sgd": _equivalent_sgd(momentum_cfg), "momentum": momentum_cfg}
    return simulate(spec, algs, steps, trials, master_seed, w_init, want, ("momentum", "sgd"), workers=workers)


def msd_curve(
    spec: RiskSpec,
    algorithm_cfg: AlgConfig,
    steps: int,
    trials: int,
    master_seed: int = 0,
    w_init=None,
    workers: int = 1,
) -> TrajectoryStats:
    """MSD, fourth moment and (momentum) transformed second moments of one algorithm."""
    want = ("msd", "msd4", "transformed")
    return simulate(spec, {"alg": algorithm_cfg}, steps, trials, master_seed, w_init, want, workers=workers)


def _momentum_for(mu, beta, variant, profile=None):
    step = mu if profile is None else mu * np.asarray(profile, dtype=float)
    step_m = step * (1.0 - beta)
    if variant == "heavy_ball":
        return MomentumConfig.heavy_ball(step_m, beta)
    if variant == "nesterov":
        return MomentumConfig.nesterov(step_m, beta)
    raise ValueError(f"unknown momentum variant {variant!r}")


def scaling_sweep(
    spec: RiskSpec,
    beta: float,
    mu_grid: Sequence[float],
    steps: Optional[int] = None,
    trials: int = 50,
    master_seed: int = 0,
    variant: str = "heavy_ball",
    ss_window_fraction: float = 0.2,
    step_profile=None,
    horizon: float = 10.0,
    workers: int = 1,
) -> list[ScalingPoint]:
    """Coupled-gap ``d_max``/``d_ss`` for each ``mu`` with ``mu_m = (1 - beta) mu``.

    ``steps=None`` picks :func:`default_steps` per ``mu`` (using the smallest
    diagonal step when ``step_profile`` is given).  ``step_profile``
    turns ``mu`` into the diagonal step ``mu * profile`` (``mu`` is then the
    largest entry when ``max(profile) == 1``).
    """
    points = []
    for mu in mu_grid:
        slowest = mu if step_profile is None else mu * float(np.min(step_profile))
        n = steps if steps is not None else default_steps(spec, slowest, horizon)
        cfg = _momentum_for(mu, beta, variant, step_profile)
        stats = run_coupled_pair(spec, cfg, n, trials, master_seed, want=(), workers=workers)
        if not np.all(np.isfinite(stats.diff_sq)):
            points.append(ScalingPoint(mu, math.nan, math.nan, diverged=True))
            continue
        d_max, d_ss = d_max_d_ss(stats.diff_sq, ss_window_fraction)
        points.append(ScalingPoint(mu, to_db(d_max), to_db(d_ss), d_max, d_ss))
    return points


def moment_sweep(
    spec: QuadraticRiskSpec,
    beta: float,
    mu_grid: Sequence[float],
    trials: int = 50,
    master_seed: int = 0,
    variant: str = "heavy_ball",
    ss_window_fraction: float = 0.2,
    horizon: float = 10.0,
    workers: int = 1,
) -> list[dict]:
    """Steady-state second/fourth moments of SGD and transformed momentum errors per ``mu``."""
    rows = []
    for mu in mu_grid:
        n = default_steps(spec, mu, horizon)
        cfg = _momentum_for(mu, beta, variant)
        algs = {"sgd": SgdConfig(mu), "momentum": cfg}
        stats = simulate(spec, algs, n, trials, master_seed, want=("msd", "msd4", "transformed"), workers=workers)
        tail = lambda c: d_max_d_ss(c, ss_window_fraction)[1]
        rows.append(
            {
                "mu": mu,
                "msd_ss": tail(stats.msd["sgd"]),
                "msd4_ss": tail(stats.moments["sgd:msd4"]),
                "momentum_msd_ss": tail(stats.msd["momentum"]),
                "w_hat_sq_ss": tail(stats.moments["momentum:w_hat_sq"]),
                "w_check_sq_ss": tail(stats.moments["momentum:w_check_sq"]),
            }
        )
    return rows


def stability_probe(
    spec: RiskSpec,
    sgd_cfg: SgdConfig,
    momentum_cfg: MomentumConfig,
    steps: int,
    trials: int,
    divergence_threshold: Optional[float] = None,
    master_seed: int = 0,
    w_init=None,
    workers: int = 1,
) -> tuple[StabilityReport, StabilityReport]:
    """Fractions of diverging trials for both algorithms on shared streams.

    A trial diverges once any iterate is non-finite or its squared error
    exceeds ``divergence_threshold`` (default: ``1e6`` times the initial
    squared error).
    """
    if divergence_threshold is not None and not divergence_threshold > 0:
        raise ValueError("divergence_threshold must be > 0")
    thr = -1e6 if divergence_threshold is None else divergence_threshold
    algs = {"sgd": sgd_cfg, "momentum": momentum_cfg}
    stats = simulate(spec, algs, steps, trials, master_seed, w_init, want=(), divergence_threshold=thr, workers=workers)
    reports = stability_reports(stats, algs)
    return reports["sgd"], reports["momentum"]


def stability_reports(stats: TrajectoryStats, algs: dict) -> dict:
    """Per-algorithm :class:`StabilityReport` from a run with divergence tracking."""
    reports = {}
    for a, cfg in algs.items():
        mu = cfg.step if isinstance(cfg, SgdConfig) else cfg.step_m
        finals = stats.final_sq[a]
        median = float(np.median(np.where(np.isfinite(finals), finals, np.inf)))
        reports[a] = StabilityReport(float(np.max(mu)), float(stats.diverged[a].mean()), median)
    return reports


def diminishing_momentum_experiment(
    spec: RiskSpec,
    mu: float,
    stair: BetaStairSchedule,
    steps: int,
    trials: int,
    master_seed: int = 0,
    variant: str = "heavy_ball",
    w_init=None,
    workers: int = 1,
) -> TrajectoryStats:
    """Stair-scheduled momentum SGD (step ``mu``) against SGD with ``mu / (1 - beta(i))``.

    The result also carries constant-step SGD at ``mu`` as the ``sgd_constant``
    reference; ``diff_sq`` is the coupled gap between the first two.
    """
    if variant == "heavy_ball":
        mom = MomentumConfig(mu, 0.0, stair)
    elif variant == "nesterov":
        mom = MomentumConfig(mu, stair, 0.0)
    else:
        raise ValueError(f"unknown momentum variant {variant!r}")
    algs = {
        "momentum_stair": mom,
        "sgd_decaying": SgdConfig(mu, DecayingStepScale(stair)),
        "sgd_constant": SgdConfig(mu),
    }
    return simulate(spec, algs, steps, trials, master_seed, w_init, ("msd",), ("momentum_stair", "sgd_decaying"), workers=workers)
