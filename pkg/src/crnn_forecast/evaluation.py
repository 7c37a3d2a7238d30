"""Metrics and the experiment harness.

``run_experiment`` reproduces the evaluation protocol end to end for one
method: chronological split, train-only normalization, sliding-window
training cases, held-out test windows, and RMSE/MAPE in original units.
``robustness_experiment`` compares the two network models when the second
input series is helpful, absent, or pure noise.

For synthetic sources each seed regenerates the dataset (seed k uses data
seed base+k), so seeds act as independent trials; CSV sources are fixed and
seeds vary only the model initialization and batch order.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .baselines import train_recurrent_baseline
from .data import (CorrelatedSet, CsvLayout, DataError, Normalizer, SyntheticConfig,
                   TimeSeries, generate_synthetic, ingest_csv, make_uncorrelated,
                   segment, split, stack_samples, train_val_split)
from .models import ModelConfig, build_model
from .training import TrainConfig, train

__all__ = [
    "ExperimentSpec",
    "MetricReport",
    "RobustnessReport",
    "WindowResult",
    "mape",
    "mape_detailed",
    "rmse",
    "robustness_experiment",
    "run_experiment",
]

MAPE_EPSILON = 1e-8


def rmse(pred, truth) -> float:
    """Root mean square error, in whatever units the inputs carry."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape or p.size == 0:
        raise ValueError(f"rmse needs equal non-empty sequences, got {p.shape} vs {t.shape}")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def mape_detailed(pred, truth, epsilon: float = MAPE_EPSILON) -> tuple[float, int]:
    """Mean absolute percentage error plus the count of skipped terms.

    Terms whose true value is below ``epsilon`` in magnitude are skipped
    instead of blowing up the average; the caller sees how many were dropped.
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape or p.size == 0:
        raise ValueError(f"mape needs equal non-empty sequences, got {p.shape} vs {t.shape}")
    keep = np.abs(t) >= epsilon
    skipped = int(p.size - keep.sum())
    if skipped == p.size:
        raise ValueError("mape: every true value is below the epsilon guard")
    value = float(100.0 * np.mean(np.abs(p[keep] - t[keep]) / np.abs(t[keep])))
    return value, skipped


def mape(pred, truth, epsilon: float = MAPE_EPSILON) -> float:
    """Mean absolute percentage error as a percentage."""
    return mape_detailed(pred, truth, epsilon)[0]


@dataclass(frozen=True)
class WindowResult:
    """Metrics for one held-out window, with the raw predictions kept for
    independent recomputation."""

    seed: int
    offset: int
    rmse: float
    mape: float
    mape_skipped: int
    predicted: np.ndarray
    truth: np.ndarray


@dataclass
class ExperimentSpec:
    """One experiment cell: a method, a problem setting, and a data source."""

    method: str
    num_series: int
    input_length: int
    horizon: int
    data: SyntheticConfig | None = None
    csv_path: str | None = None
    csv_layout: CsvLayout | None = None
    seeds: tuple[int, ...] = (0,)
    train_frac: float = 0.84
    val_fraction: float = 0.15
    eval_stride: int | None = None      # default: non-overlapping (l + p)
    train: TrainConfig = field(default_factory=TrainConfig)
    conv_pool_stages: int = 1
    filters_per_layer: int = 2
    filter_size: int = 3
    rnn_hidden: int = 4
    cell_kind: str = "rnn"
    rnn_layout: str = "sequence"
    conv_activation: str = "linear"
    ewma_smoothing: float = 0.3
    baseline_features: str = "all"

    _METHODS = ("yesterday", "ewma", "rnn", "lstm", "crnn", "aecrnn")

    def __post_init__(self):
        if self.method not in self._METHODS:
            raise ValueError(f"unknown method {self.method!r}; pick one of {self._METHODS}")
        self.seeds = tuple(self.seeds)
        if not self.seeds:
            raise ValueError("experiment needs at least one seed")

    @property
    def repetitions(self) -> int:
        return len(self.seeds)


@dataclass
class MetricReport:
    """Aggregated metrics for an experiment cell.

    The pooled mean/std run over every (seed, window) pair; the *_seed_std
    values measure spread across per-seed means instead.
    """

    method: str
    num_series: int
    input_length: int
    horizon: int
    seeds: tuple[int, ...]
    windows: list[WindowResult]
    rmse_mean: float
    rmse_std: float
    mape_mean: float
    mape_std: float
    seed_rmse: dict[int, float]
    seed_mape: dict[int, float]
    rmse_seed_std: float
    mape_seed_std: float
    degenerate_std: bool
    notes: str

    TABLE_HEADER = ("method\tnum_series\tl\tp\trmse_mean\trmse_std\t"
                    "mape_mean\tmape_std\tseeds\tnotes")

    @classmethod
    def from_windows(cls, spec: ExperimentSpec, windows: list[WindowResult]) -> "MetricReport":
        if not windows:
            raise DataError("experiment produced no evaluation windows")
        rmses = np.array([w.rmse for w in windows])
        mapes = np.array([w.mape for w in windows])
        seed_rmse = {}
        seed_mape = {}
        for s in spec.seeds:
            rows = [w for w in windows if w.seed == s]
            seed_rmse[s] = float(np.mean([w.rmse for w in rows]))
            seed_mape[s] = float(np.mean([w.mape for w in rows]))
        degenerate = len(windows) == 1
        skips = sum(w.mape_skipped for w in windows)
        notes = []
        if degenerate:
            notes.append("single-window:std=0")
        if skips:
            notes.append(f"mape_skipped={skips}")
        return cls(
            method=spec.method,
            num_series=spec.num_series,
            input_length=spec.input_length,
            horizon=spec.horizon,
            seeds=spec.seeds,
            windows=windows,
            rmse_mean=float(rmses.mean()),
            rmse_std=float(rmses.std()),
            mape_mean=float(mapes.mean()),
            mape_std=float(mapes.std()),
            seed_rmse=seed_rmse,
            seed_mape=seed_mape,
            rmse_seed_std=float(np.std(list(seed_rmse.values()))),
            mape_seed_std=float(np.std(list(seed_mape.values()))),
            degenerate_std=degenerate,
            notes=";".join(notes) or "-",
        )

    def table_row(self) -> str:
        return ("%s\t%d\t%d\t%d\t%.6g\t%.6g\t%.6g\t%.6g\t%s\t%s"
                % (self.method, self.num_series, self.input_length, self.horizon,
                   self.rmse_mean, self.rmse_std, self.mape_mean, self.mape_std,
                   ",".join(str(s) for s in self.seeds), self.notes))


def _load_data(spec: ExperimentSpec, seed: int) -> CorrelatedSet:
    if spec.csv_path is not None:
        cset = ingest_csv(spec.csv_path, spec.csv_layout)
    elif spec.data is not None:
        cfg = dataclasses.replace(spec.data, seed=spec.data.seed + seed)
        cset = generate_synthetic(cfg)
    else:
        raise ValueError("experiment needs a synthetic config or a csv path")
    if cset.num_series < spec.num_series:
        raise DataError(
            f"data offers {cset.num_series} series but the spec needs {spec.num_series}")
    return cset.take(spec.num_series)


def _ewma_predictor(smoothing: float, horizon: int) -> Callable[[np.ndarray], np.ndarray]:
    def predict(x: np.ndarray) -> np.ndarray:
        level = x[:, 0, 0].copy()
        for t in range(1, x.shape[2]):
            level = smoothing * x[:, 0, t] + (1.0 - smoothing) * level
        return np.repeat(level[:, None], horizon, axis=1)
    return predict


def _fit_forecaster(spec: ExperimentSpec, train_windows, val_windows,
                    seed: int) -> Callable[[np.ndarray], np.ndarray]:
    """Return a batched window -> forecast function for the chosen method."""
    if spec.method == "yesterday":
        return lambda x: np.repeat(x[:, 0, -1:], spec.horizon, axis=1)
    if spec.method == "ewma":
        return _ewma_predictor(spec.ewma_smoothing, spec.horizon)
    train_cfg = dataclasses.replace(spec.train, seed=seed)
    if spec.method in ("crnn", "aecrnn"):
        config = ModelConfig(
            num_series=spec.num_series,
            input_length=spec.input_length,
            horizon=spec.horizon,
            conv_pool_stages=spec.conv_pool_stages,
            filters_per_layer=spec.filters_per_layer,
            filter_size=spec.filter_size,
            rnn_hidden=spec.rnn_hidden,
            cell_kind=spec.cell_kind,
            rnn_layout=spec.rnn_layout,
            conv_activation=spec.conv_activation,
            seed=seed,
        )
        model = build_model(spec.method, config)
        train(model, train_windows, train_cfg, val_samples=val_windows)
        return model.batch_forecast
    model, _ = train_recurrent_baseline(
        spec.method, train_windows, train_cfg, hidden=spec.rnn_hidden,
        features=spec.baseline_features, val_samples=val_windows, seed=seed)
    return model.batch_forecast


def _evaluate_on_set(cset: CorrelatedSet, spec: ExperimentSpec,
                     seed: int) -> list[WindowResult]:
    """Run the full protocol on one prepared series set for one seed."""
    train_set, test_set = split(cset, spec.train_frac)
    norm = Normalizer.fit(train_set)
    train_windows = segment(norm.transform(train_set), spec.input_length,
                            spec.horizon, stride=1)
    stride = spec.eval_stride or (spec.input_length + spec.horizon)
    test_windows = segment(norm.transform(test_set), spec.input_length,
                           spec.horizon, stride=stride)
    if not test_windows:
        raise DataError("test segment is too short for a single evaluation window")
    needs_training = spec.method not in ("yesterday", "ewma")
    if needs_training:
        if not train_windows:
            raise DataError("training segment is too short for a single window")
        tr, val = train_val_split(train_windows, spec.val_fraction)
    else:
        tr, val = train_windows, []
    forecaster = _fit_forecaster(spec, tr, val, seed)
    x_test, y_test = stack_samples(test_windows)
    preds = norm.inverse_target(forecaster(x_test))
    truths = norm.inverse_target(y_test)
    results = []
    for i, w in enumerate(test_windows):
        m_value, m_skipped = mape_detailed(preds[i], truths[i])
        results.append(WindowResult(seed=seed, offset=w.offset,
                                    rmse=rmse(preds[i], truths[i]),
                                    mape=m_value, mape_skipped=m_skipped,
                                    predicted=preds[i], truth=truths[i]))
    return results


def _write_dumps(out_dir: Path, windows: Sequence[WindowResult]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    by_seed: dict[int, list[WindowResult]] = {}
    for w in windows:
        by_seed.setdefault(w.seed, []).append(w)
    for seed, rows in sorted(by_seed.items()):
        path = out_dir / f"predictions_seed{seed}.tsv"
        lines = ["window_offset\tstep\tpredicted\ttruth"]
        for w in rows:
            for step in range(w.predicted.size):
                lines.append("%d\t%d\t%.17g\t%.17g"
                             % (w.offset, step + 1, w.predicted[step], w.truth[step]))
        path.write_text("\n".join(lines) + "\n", encoding="ascii")


def run_experiment(spec: ExperimentSpec, out_dir: str | Path | None = None) -> MetricReport:
    """Train and evaluate one experiment cell across its seeds.

    When ``out_dir`` is given, per-window prediction dumps and the report row
    are persisted there.
    """
    windows: list[WindowResult] = []
    for seed in spec.seeds:
        cset = _load_data(spec, seed)
        windows.extend(_evaluate_on_set(cset, spec, seed))
    report = MetricReport.from_windows(spec, windows)
    if out_dir is not None:
        out_path = Path(out_dir)
        _write_dumps(out_path, windows)
        (out_path / "report.tsv").write_text(
            MetricReport.TABLE_HEADER + "\n" + report.table_row() + "\n",
            encoding="ascii")
    return report


ROBUSTNESS_ROWS = ("single", "correlated", "uncorrelated")
ROBUSTNESS_MODELS = ("crnn", "aecrnn")


@dataclass
class RobustnessReport:
    """MAPE of both models when the companion series is absent, informative,
    or deliberately uncorrelated noise."""

    mape: dict[tuple[str, str], float]
    per_seed: dict[tuple[str, str], dict[int, float]]
    seeds: tuple[int, ...]

    def degradation(self, model: str, seed: int) -> float:
        """MAPE increase caused by swapping in the uncorrelated series."""
        return (self.per_seed[("uncorrelated", model)][seed]
                - self.per_seed[("single", model)][seed])

    def table(self) -> str:
        lines = ["input\tcrnn_mape\taecrnn_mape"]
        for row in ROBUSTNESS_ROWS:
            lines.append("%s\t%.6g\t%.6g"
                         % (row, self.mape[(row, "crnn")], self.mape[(row, "aecrnn")]))
        return "\n".join(lines) + "\n"


def robustness_experiment(target: TimeSeries, correlated: TimeSeries,
                          seeds: Sequence[int] | int, *,
                          input_length: int = 50, horizon: int = 25,
                          conv_pool_stages: int = 1, filters_per_layer: int = 2,
                          filter_size: int = 3, rnn_hidden: int = 4,
                          train_config: TrainConfig | None = None,
                          uncorrelated_seed_base: int = 7000) -> RobustnessReport:
    """Evaluate CRNN and AECRNN under three companion-series regimes.

    Rows: the target alone, the target with the genuinely correlated series,
    and the target with a phase-randomized surrogate that matches the
    target's moments but carries no information about it.
    """
    seed_list = (seeds,) if isinstance(seeds, int) else tuple(seeds)
    train_cfg = train_config or TrainConfig()
    per_seed: dict[tuple[str, str], dict[int, float]] = {
        (row, model): {} for row in ROBUSTNESS_ROWS for model in ROBUSTNESS_MODELS}
    for seed in seed_list:
        companions = {
            "single": None,
            "correlated": correlated,
            "uncorrelated": make_uncorrelated(target, uncorrelated_seed_base + seed),
        }
        for row, companion in companions.items():
            series = (target,) if companion is None else (target, companion)
            cset = CorrelatedSet(series)
            for model in ROBUSTNESS_MODELS:
                spec = ExperimentSpec(
                    method=model,
                    num_series=cset.num_series,
                    input_length=input_length,
                    horizon=horizon,
                    seeds=(seed,),
                    train=train_cfg,
                    conv_pool_stages=conv_pool_stages,
                    filters_per_layer=filters_per_layer,
                    filter_size=filter_size,
                    rnn_hidden=rnn_hidden,
                )
                windows = _evaluate_on_set(cset, spec, seed)
                per_seed[(row, model)][seed] = float(
                    np.mean([w.mape for w in windows]))
    pooled = {key: float(np.mean(list(vals.values())))
              for key, vals in per_seed.items()}
    return RobustnessReport(mape=pooled, per_seed=per_seed, seeds=seed_list)
