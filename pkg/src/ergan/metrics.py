"""Fidelity metrics comparing a synthetic dataset with real profiles."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np


def _matrix(dataset) -> np.ndarray:
    X = np.asarray(getattr(dataset, "values", dataset), dtype=np.float64)
    return X.reshape(-1, X.shape[-1]) if X.ndim else X


@dataclass(frozen=True, eq=False)
class StatProfileSet:
    mean: np.ndarray
    variance: np.ndarray
    q1: np.ndarray
    q3: np.ndarray


class L1Distances(NamedTuple):
    mean: float
    variance: float
    q1: float
    q3: float


def hourly_profiles(dataset) -> StatProfileSet:
    """Per-hour mean, population variance and linear-interpolation quartiles."""
    X = _matrix(dataset)
    if X.shape[0] == 0:
        raise ValueError("cannot summarise an empty dataset")
    q1, q3 = np.quantile(X, [0.25, 0.75], axis=0, method="linear")
    return StatProfileSet(X.mean(axis=0), X.var(axis=0), q1, q3)


def l1_distance(real: StatProfileSet, synth: StatProfileSet) -> L1Distances:
    return L1Distances(
        float(np.abs(real.mean - synth.mean).sum()),
        float(np.abs(real.variance - synth.variance).sum()),
        float(np.abs(real.q1 - synth.q1).sum()),
        float(np.abs(real.q3 - synth.q3).sum()),
    )


def autocorrelation(values, max_lag: int = 23) -> np.ndarray:
    """Biased sample ACF; entry 0 is 1 by construction."""
    x = np.asarray(values, dtype=np.float64)
    if not 0 <= max_lag < len(x):
        raise ValueError(f"max_lag must lie in [0, {len(x) - 1}]")
    d = x - x.mean()
    denom = float(d @ d)
    if denom == 0.0:
        raise ValueError("autocorrelation undefined for a constant series")
    n = len(x)
    return np.array([1.0] + [float(d[:n - lag] @ d[lag:]) / denom for lag in range(1, max_lag + 1)])


def mean_autocorrelation(dataset, max_lag: int = 23) -> np.ndarray:
    """Pointwise mean of per-profile ACFs over non-constant profiles."""
    curves = [autocorrelation(row, max_lag) for row in _matrix(dataset) if np.ptp(row) > 0]
    if not curves:
        raise ValueError("no non-constant profiles")
    return np.mean(curves, axis=0)


def histogram(dataset, n_bins: int = 50) -> np.ndarray:
    """Share of all pooled values in equal-width bins over [0, 1] (last bin closed)."""
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    values = _matrix(dataset).ravel()
    counts, _ = np.histogram(values, bins=n_bins, range=(0.0, 1.0))
    return counts / counts.sum()


class BoxStats(NamedTuple):
    low_whisker: np.ndarray
    q1: np.ndarray
    median: np.ndarray
    q3: np.ndarray
    high_whisker: np.ndarray
    outliers: np.ndarray


def boxplot_stats(dataset) -> BoxStats:
    """Tukey box statistics per hour; whiskers reach the most extreme points
    within 1.5 IQR of the quartiles."""
    X = _matrix(dataset)
    if X.shape[0] == 0:
        raise ValueError("cannot summarise an empty dataset")
    q1, med, q3 = np.quantile(X, [0.25, 0.5, 0.75], axis=0, method="linear")
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = (X >= lo_fence) & (X <= hi_fence)
    low = np.where(inside, X, np.inf).min(axis=0)
    high = np.where(inside, X, -np.inf).max(axis=0)
    return BoxStats(low, q1, med, q3, high, (~inside).sum(axis=0))


def nearest_match(real, synth) -> tuple[int, float]:
    """Index of and Euclidean distance to the closest synthetic profile."""
    r = np.asarray(getattr(real, "values", real), dtype=np.float64)
    S = _matrix(synth)
    if S.shape[0] == 0:
        raise ValueError("synthetic dataset is empty")
    d = np.sqrt(np.sum((S - r) ** 2, axis=1))
    i = int(np.argmin(d))
    return i, float(d[i])


# -- reporting ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EvalReport:
    l1: L1Distances
    real_stats: StatProfileSet
    synth_stats: StatProfileSet
    bin_edges: np.ndarray
    real_hist: np.ndarray
    synth_hist: np.ndarray
    real_acf: np.ndarray
    synth_acf: np.ndarray
    real_box: BoxStats
    synth_box: BoxStats

    @property
    def l1_mean(self) -> float:
        return self.l1.mean

    @property
    def l1_variance(self) -> float:
        return self.l1.variance

    @property
    def l1_q1(self) -> float:
        return self.l1.q1

    @property
    def l1_q3(self) -> float:
        return self.l1.q3


def evaluate(real, synth, bins: int = 50, max_lag: int = 23) -> EvalReport:
    R, S = _matrix(real), _matrix(synth)
    if R.shape[1:] != (24,) or S.shape[1:] != (24,):
        raise ValueError(f"datasets must have 24 columns, got {R.shape} and {S.shape}")
    real_stats, synth_stats = hourly_profiles(R), hourly_profiles(S)
    return EvalReport(
        l1=l1_distance(real_stats, synth_stats),
        real_stats=real_stats,
        synth_stats=synth_stats,
        bin_edges=np.linspace(0.0, 1.0, bins + 1),
        real_hist=histogram(R, bins),
        synth_hist=histogram(S, bins),
        real_acf=mean_autocorrelation(R, max_lag),
        synth_acf=mean_autocorrelation(S, max_lag),
        real_box=boxplot_stats(R),
        synth_box=boxplot_stats(S),
    )


def _fmt(x) -> str:
    return f"{float(x):.9g}"


def write_l1_report(rows: dict[str, L1Distances], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("Model,Mean L1,Variance L1,Q1 L1,Q3 L1\n")
        for name, d in rows.items():
            fh.write(",".join([name, *(_fmt(v) for v in d)]) + "\n")


def write_reports(report: EvalReport, out_dir, model: str = "ERGAN", svg: bool = False) -> list[Path]:
    """Write the CSV reports (and optional SVG figures) into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "l1_report.csv"
    write_l1_report({model: report.l1}, path)
    written.append(path)

    path = out / "hourly_stats.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("hour,real_mean,synth_mean,real_variance,synth_variance,"
                 "real_q1,synth_q1,real_q3,synth_q3\n")
        r, s = report.real_stats, report.synth_stats
        for t in range(24):
            vals = (r.mean[t], s.mean[t], r.variance[t], s.variance[t], r.q1[t], s.q1[t],
                    r.q3[t], s.q3[t])
            fh.write(f"{t}," + ",".join(_fmt(v) for v in vals) + "\n")
    written.append(path)

    path = out / "histogram.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("bin_low,bin_high,real,synthetic\n")
        e = report.bin_edges
        for i in range(len(report.real_hist)):
            fh.write(",".join(_fmt(v) for v in (e[i], e[i + 1], report.real_hist[i],
                                                 report.synth_hist[i])) + "\n")
    written.append(path)

    path = out / "acf.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("lag,real,synthetic\n")
        for lag, (a, b) in enumerate(zip(report.real_acf, report.synth_acf)):
            fh.write(f"{lag},{_fmt(a)},{_fmt(b)}\n")
    written.append(path)

    path = out / "boxplot.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("source,hour,low_whisker,q1,median,q3,high_whisker,outliers\n")
        for label, box in (("real", report.real_box), ("synthetic", report.synth_box)):
            for t in range(24):
                vals = [box.low_whisker[t], box.q1[t], box.median[t], box.q3[t],
                        box.high_whisker[t]]
                fh.write(f"{label},{t}," + ",".join(_fmt(v) for v in vals)
                         + f",{int(box.outliers[t])}\n")
    written.append(path)

    if svg:
        written.extend(_write_svgs(report, out))
    return written


def _write_svgs(report: EvalReport, out: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "ergan"
    meta = {"Date": None}
    paths = []

    fig, ax = plt.subplots(figsize=(6, 3.5))
    centers = 0.5 * (report.bin_edges[:-1] + report.bin_edges[1:])
    width = report.bin_edges[1] - report.bin_edges[0]
    ax.bar(centers, report.real_hist, width=width, alpha=0.5, label="real")
    ax.bar(centers, report.synth_hist, width=width, alpha=0.5, label="synthetic")
    ax.set_xlabel("normalized load")
    ax.set_ylabel("share")
    ax.legend()
    paths.append(out / "histogram.svg")
    fig.savefig(paths[-1], format="svg", metadata=meta)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    lags = np.arange(len(report.real_acf))
    ax.plot(lags, report.real_acf, marker="o", label="real")
    ax.plot(lags, report.synth_acf, marker="s", label="synthetic")
    ax.set_xlabel("lag (hours)")
    ax.set_ylabel("autocorrelation")
    ax.legend()
    paths.append(out / "acf.svg")
    fig.savefig(paths[-1], format="svg", metadata=meta)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(10, 4))
    hours = np.arange(24)
    for offset, box, color in ((-0.2, report.real_box, "C0"), (0.2, report.synth_box, "C1")):
        ax.vlines(hours + offset, box.low_whisker, box.high_whisker, color=color)
        ax.bar(hours + offset, box.q3 - box.q1, bottom=box.q1, width=0.35, color=color,
               alpha=0.6)
        ax.hlines(box.median, hours + offset - 0.17, hours + offset + 0.17, color="k")
    ax.set_xlabel("hour")
    ax.set_ylabel("normalized load")
    paths.append(out / "boxplot.svg")
    fig.savefig(paths[-1], format="svg", metadata=meta)
    plt.close(fig)
    return paths
