"""Multi-path experiments: run an ensemble, aggregate fields and marker
tracks, and assemble a front report against the closed-form prediction.

Paths are keyed by stream id 0..P-1 and may run on parallel workers;
aggregation is a single deterministic reduction over sorted stream ids, so
summaries are bitwise reproducible for a given (seed, config) regardless of
scheduling.  Scalar-kernel experiments measure on the normalized route
(pathwise markers on monotone profiles); correlated-noise experiments
measure on the raw dynamics through the expectation marker of the ensemble
mean.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dataclass_field, replace

import numpy as np

from .errors import (
    ExperimentFailure,
    InstabilityError,
    InsufficientDomainError,
    LevelNotAttainedError,
    MisuseError,
)
from .grid import Field, GridSpec, log_gradient
from .logistic import simulate_v
from .markers import (
    EXPECTATION,
    PATHWISE,
    FrontReport,
    MarkerTrack,
    a_marker,
    decay_estimate,
    expectation_marker,
    speed_estimate,
)
from .noise import CONSTANT, ITO, STRATONOVICH
from .solver import KppParams, run_path
from .stats import Estimate, combine_path_values
from .theory import (
    ITO_CORRELATED,
    ITO_SCALAR,
    STRATONOVICH_SCALAR,
    TheoryPrediction,
    prediction_for,
)

logger = logging.getLogger(__name__)

NORMALIZED = "normalized"
SPDE = "spde"

# floor applied inside log-averages so an underflowed tail node cannot poison
# the geometric mean
_LOG_FLOOR = 1e-300

# fraction of paths that must survive for a summary to be reported
SURVIVOR_FRACTION = 0.8


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one ensemble experiment."""

    params: KppParams
    grid: GridSpec
    T: float
    paths: int
    marker_levels: tuple[float, ...] = (0.25, 0.5, 0.75)
    snapshot_stride: float = 1.0
    speed_window: tuple[float, float] = (0.4, 0.9)
    decay_offsets: tuple[float, float] = (5.0, 15.0)
    route: str = "auto"
    late_snapshots: int = 10
    a_star_offset: float = 30.0

    def __post_init__(self):
        if not self.T > 0:
            raise MisuseError(f"horizon must be positive, got {self.T}")
        if self.paths < 1:
            raise MisuseError(f"need at least one path, got {self.paths}")
        for a in self.marker_levels:
            if not 0 < a < 1:
                raise MisuseError(f"marker level {a} outside (0, 1)")
        if self.route not in ("auto", NORMALIZED, SPDE):
            raise MisuseError(f"unknown route {self.route!r}")

    def resolved_route(self) -> str:
        if self.route != "auto":
            return self.route
        return NORMALIZED if self.params.noise.kernel.kind == CONSTANT else SPDE

    def regime(self) -> str:
        if self.params.noise.kernel.kind == CONSTANT:
            if self.params.noise.interpretation == STRATONOVICH:
                return STRATONOVICH_SCALAR
            return ITO_SCALAR
        return ITO_CORRELATED

    def prediction(self) -> TheoryPrediction:
        return prediction_for(self.regime(), self.params.kappa,
                              self.params.epsilon, self.params.N)


@dataclass
class EnsembleSummary:
    """Aggregated output of one experiment."""

    config: ExperimentConfig
    route: str
    snapshot_times: np.ndarray
    mean_fields: list[Field]
    mean_log_fields: list[Field] | None
    tracks: list[MarkerTrack]
    report: FrontReport
    a_star: Estimate | None
    w_cov: list[tuple[float, float, float]] | None  # (lag, cov, se)
    failed_streams: list[int]
    late_times: np.ndarray
    late_fields: dict[int, np.ndarray]  # stream id -> (n_late, n) values

    def expectation_tracks(self) -> list[MarkerTrack]:
        return [t for t in self.tracks if t.kind == EXPECTATION]


def _run_one(config: ExperimentConfig, stream_id: int) -> dict:
    """Worker body: simulate one path and return compact per-path arrays."""
    params = config.params.with_stream(stream_id)
    route = config.resolved_route()
    steps = int(round(config.T / params.dt))
    late = _late_indices(config)
    if route == NORMALIZED:
        v = simulate_v(params.epsilon, params.noise.interpretation, 1.0,
                       params.dt, steps, params.noise)
        run = run_path(params, config.grid, config.T, v_path=v,
                       snapshot_stride=config.snapshot_stride,
                       marker_levels=config.marker_levels, collect_fields=True)
    else:
        run = run_path(params, config.grid, config.T,
                       snapshot_stride=config.snapshot_stride,
                       marker_levels=(), collect_fields=True)
    values = np.stack([f.values for f in run.fields])
    out = {
        "stream_id": stream_id,
        "times": run.times,
        "sum": values,
        "log_sum": np.log(np.maximum(values, _LOG_FLOOR)),
        "tracks": run.tracks,
        "late": values[late],
    }
    return out


def _late_indices(config: ExperimentConfig) -> np.ndarray:
    n_snap = int(round(config.T / config.params.dt)) // max(
        1, int(round(config.snapshot_stride / config.params.dt)))
    k = min(config.late_snapshots, n_snap)
    return np.arange(n_snap - k, n_snap)


def _worker(payload):
    config, stream_id = payload
    try:
        return _run_one(config, stream_id)
    except InstabilityError as exc:
        return {"stream_id": stream_id, "failed": str(exc)}


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> EnsembleSummary:
    """Run P paths, aggregate, and build the front report.

    Deterministic for a given (seed, config): stream ids are fixed, and the
    reduction runs over sorted stream ids whatever the completion order.
    """
    payloads = [(config, sid) for sid in range(config.paths)]
    if jobs > 1 and config.paths > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_worker, payloads))
    else:
        results = [_worker(p) for p in payloads]
    results.sort(key=lambda r: r["stream_id"])

    failed = [r["stream_id"] for r in results if "failed" in r]
    ok = [r for r in results if "failed" not in r]
    if failed:
        logger.warning("paths failed with instabilities: streams %s", failed)
    if len(ok) < SURVIVOR_FRACTION * config.paths or not ok:
        raise ExperimentFailure(
            f"only {len(ok)}/{config.paths} paths survived; refusing to summarize"
        )

    route = config.resolved_route()
    times = ok[0]["times"]
    sum_values = np.zeros_like(ok[0]["sum"])
    sum_log = np.zeros_like(ok[0]["log_sum"])
    for r in ok:
        sum_values += r["sum"]
        sum_log += r["log_sum"]
    mean_values = sum_values / len(ok)
    mean_log = sum_log / len(ok)

    mean_fields = [Field(config.grid, mean_values[i], time=t)
                   for i, t in enumerate(times)]
    mean_log_fields = [Field(config.grid, np.exp(mean_log[i]), time=t)
                       for i, t in enumerate(times)]

    late_idx = _late_indices(config)
    late_fields = {r["stream_id"]: r["late"] for r in ok}

    tracks: list[MarkerTrack] = []
    if route == NORMALIZED:
        for lev in config.marker_levels:
            for r in ok:
                tracks.append(MarkerTrack(lev, times, r["tracks"][lev], PATHWISE,
                                          stream_id=r["stream_id"]))
    else:
        for lev in config.marker_levels:
            pos = np.full(times.size, np.nan)
            for i, f in enumerate(mean_fields):
                try:
                    pos[i] = expectation_marker(f, lev)
                except LevelNotAttainedError:
                    pass
            tracks.append(MarkerTrack(lev, times, pos, EXPECTATION))

    report = _front_report(config, route, tracks, mean_log_fields, ok)
    a_star = w_cov = None
    if route == SPDE:
        summary_stub = EnsembleSummary(
            config, route, times, mean_fields, mean_log_fields, tracks, report,
            None, None, failed, times[late_idx], late_fields)
        try:
            a_star = _a_star_from(summary_stub, config.a_star_offset)
        except (InsufficientDomainError, LevelNotAttainedError) as exc:
            logger.warning("plateau estimate unavailable: %s", exc)
        return replace_summary(summary_stub, a_star=a_star)

    return EnsembleSummary(config, route, times, mean_fields, mean_log_fields,
                           tracks, report, a_star, w_cov, failed,
                           times[late_idx], late_fields)


def replace_summary(s: EnsembleSummary, **kw) -> EnsembleSummary:
    data = dict(
        config=s.config, route=s.route, snapshot_times=s.snapshot_times,
        mean_fields=s.mean_fields, mean_log_fields=s.mean_log_fields,
        tracks=s.tracks, report=s.report, a_star=s.a_star, w_cov=s.w_cov,
        failed_streams=s.failed_streams, late_times=s.late_times,
        late_fields=s.late_fields)
    data.update(kw)
    return EnsembleSummary(**data)


def _reference_level(config: ExperimentConfig) -> float:
    levels = config.marker_levels
    return 0.5 if 0.5 in levels else levels[len(levels) // 2]


def _front_report(config, route, tracks, mean_log_fields, ok) -> FrontReport:
    ref = _reference_level(config)
    window = (config.speed_window[0] * config.T, config.speed_window[1] * config.T)

    if route == NORMALIZED:
        ref_tracks = [t for t in tracks if t.a == ref]
        slopes = [speed_estimate(t, config.speed_window) for t in ref_tracks]
        if len(slopes) == 1:
            speed = slopes[0]
        else:
            speed = combine_path_values([s.value for s in slopes])
        decays = []
        for r in ok:
            marker = r["tracks"][ref][-1]
            if not np.isfinite(marker):
                continue
            f = Field(config.grid, r["sum"][-1], time=r["times"][-1])
            decays.append(decay_estimate(f, marker, config.decay_offsets).value)
        decay = combine_path_values(decays)
    else:
        ref_track = next(t for t in tracks if t.a == ref)
        speed = speed_estimate(ref_track, config.speed_window)
        # tail decay of the mean-log profile, averaged over the late snapshots
        vals = []
        late = _late_indices(config)
        for i in late:
            f = mean_log_fields[i]
            marker = ref_track.positions[i]
            if not np.isfinite(marker):
                continue
            vals.append(decay_estimate(f, marker, config.decay_offsets).value)
        if not vals:
            raise ExperimentFailure("no late snapshot offered a usable decay window")
        decay = combine_path_values(vals)

    return FrontReport(speed.value, speed.half_width, decay.value,
                       decay.half_width, window, config.prediction())


def _final_marker(summary: EnsembleSummary) -> float:
    """Reference-level expectation marker of the final mean field.

    Falls back to the relative half-maximum level when the absolute level
    sits at or above the plateau (flagged in the log).
    """
    config = summary.config
    ref = _reference_level(config)
    final = summary.mean_fields[-1]
    try:
        return expectation_marker(final, ref)
    except LevelNotAttainedError:
        rel = 0.5 * float(np.max(final.values))
        logger.warning(
            "level %.3g is above the plateau; using the relative half-maximum %.3g",
            ref, rel)
        return expectation_marker(final, rel)


def _a_star_from(summary: EnsembleSummary, behind_offset: float) -> Estimate:
    config = summary.config
    marker = _final_marker(summary)
    x = config.grid.coords()
    plateau = x <= marker - behind_offset
    if plateau.sum() < 5:
        raise InsufficientDomainError(
            f"plateau region behind {marker - behind_offset:g} has {int(plateau.sum())} nodes"
        )
    per_path = [fields[:, plateau].mean() for fields in summary.late_fields.values()]
    return combine_path_values(per_path)


def estimate_a_star(config: ExperimentConfig, behind_offset: float | None = None,
                    summary: EnsembleSummary | None = None,
                    jobs: int = 1) -> Estimate:
    """Stationary plateau level behind the front, from the late-time ensemble."""
    if summary is None:
        summary = run_experiment(config, jobs=jobs)
    return _a_star_from(summary, config.a_star_offset if behind_offset is None
                        else behind_offset)


def estimate_w_covariance(config: ExperimentConfig, offsets, tail_window=(5.0, 20.0),
                          summary: EnsembleSummary | None = None,
                          jobs: int = 1) -> list[tuple[float, float, float]]:
    """Ensemble covariance of the tail log-slope w = -(log u)_x at given lags.

    w is computed per path in the frame of the expectation marker and
    restricted to `tail_window` ahead of it; the covariance across paths is
    averaged over window positions and late snapshot times.  Returns
    (lag, covariance, standard error) rows.
    """
    if summary is None:
        summary = run_experiment(config, jobs=jobs)
    if summary.route != SPDE:
        raise MisuseError("tail log-slope statistics require the raw-dynamics route")
    grid = config.grid
    dx = grid.dx
    x = grid.coords()
    ref = _reference_level(config)
    track = next(t for t in summary.expectation_tracks() if t.a == ref)
    late_ids = sorted(summary.late_fields)
    snap_index = {t: i for i, t in enumerate(summary.snapshot_times)}
    lag_cells = [int(round(off / dx)) for off in offsets]
    max_lag = max(lag_cells)

    # tail log-slopes per (stream, late time); a stream is kept only if its
    # tail stays positive at every analysed time, so paths remain aligned
    rows: dict[int, list[np.ndarray]] = {sid: [] for sid in late_ids}
    bad = set()
    used_times = 0
    for j, t in enumerate(summary.late_times):
        marker = track.positions[snap_index[t]]
        if not np.isfinite(marker):
            continue
        lo, hi = marker + tail_window[0], marker + tail_window[1] + max_lag * dx
        keep = (x >= lo) & (x <= hi)
        if keep.sum() < max_lag + 5:
            raise InsufficientDomainError("tail window does not fit inside the grid")
        used_times += 1
        for sid in late_ids:
            vals = summary.late_fields[sid][j][keep]
            if np.any(vals <= 0):
                bad.add(sid)
                continue
            logv = np.log(vals)
            w = np.empty(logv.size)
            w[1:-1] = -(logv[2:] - logv[:-2]) / (2 * dx)
            w[0] = -(logv[1] - logv[0]) / dx
            w[-1] = -(logv[-1] - logv[-2]) / dx
            rows[sid].append(w)
    if used_times == 0:
        raise InsufficientDomainError("no usable late-time tail windows")
    if bad:
        logger.warning("dropping %d paths with nonpositive tail values", len(bad))
    if len(bad) > 0.5 * len(late_ids):
        raise ExperimentFailure(
            f"{len(bad)}/{len(late_ids)} paths had nonpositive tail windows")
    survivors = [sid for sid in late_ids if sid not in bad]
    if len(survivors) < 2:
        raise InsufficientDomainError("need at least two surviving paths")
    stacks = [np.stack([rows[sid][k] for sid in survivors]) for k in range(used_times)]

    out = []
    P = len(survivors)
    scale = P / (P - 1)
    for off, j in zip(offsets, lag_cells):
        per_path = np.zeros(P)
        for W in stacks:
            L = W.shape[1]
            base = W[:, : L - j] if j else W
            shifted = W[:, j:] if j else W
            dev_b = base - base.mean(axis=0)
            dev_s = shifted - shifted.mean(axis=0)
            per_path += (dev_b * dev_s).mean(axis=1)
        per_path /= len(stacks)
        cov = scale * per_path.mean()
        se = scale * per_path.std(ddof=1) / np.sqrt(P)
        out.append((float(off), float(cov), float(se)))
    return out
