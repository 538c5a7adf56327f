"""Dataset-level summaries: distributions, Pearson matrix, group-pair
aggregates, category bins and per-channel image statistics.

Undefined label values (``None``) are excluded per target and counted, never
imputed.  Standard deviations are population (ddof=0) throughout and
quantiles use linear interpolation between closest ranks.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import LABEL_TARGETS, N_CHANNELS, ScalarLabels
from .toy_params import GROUPS

BOND_BINS = ((2.0, 3.0), ("short", "medium", "long"))  # Angstrom
DIPOLE_BINS = ((1.0, 5.0), ("weak", "moderate", "strong"))  # Debye


class NoDataError(ValueError):
    """A summary was requested over zero values."""


@dataclass(frozen=True)
class Summary:
    count: int
    mean: float
    std: float
    min: float
    q1: float
    median: float
    q3: float
    max: float


def summarize(values) -> Summary:
    x = np.asarray([v for v in values if v is not None], dtype=float)
    if x.size == 0:
        raise NoDataError("no data to summarize")
    x = np.sort(x)
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], method="linear")
    return Summary(int(x.size), float(x.mean()), float(x.std()), float(x[0]),
                   float(q1), float(med), float(q3), float(x[-1]))


@dataclass
class PearsonResult:
    names: list[str]
    matrix: np.ndarray
    zero_variance: list[str] = field(default_factory=list)
    too_few: list[str] = field(default_factory=list)


def _pearson(x, y) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    den = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if den == 0:
        return math.nan
    return max(-1.0, min(1.0, float(dx @ dy) / den))


def pearson_matrix(table: dict[str, list]) -> PearsonResult:
    """Pearson coefficients between targets whose values are aligned by record.

    Each pair uses the records where both targets are defined.  Targets that
    are constant or have fewer than two defined values are excluded and
    reported.
    """
    names, columns, zero_var, too_few = [], [], [], []
    for name, values in table.items():
        col = np.array([np.nan if v is None else float(v) for v in values])
        defined = col[~np.isnan(col)]
        if defined.size < 2:
            too_few.append(name)
        elif defined.min() == defined.max():
            zero_var.append(name)
        else:
            names.append(name)
            columns.append(col)
    n = len(names)
    mat = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            ok = ~np.isnan(columns[i]) & ~np.isnan(columns[j])
            r = _pearson(columns[i][ok], columns[j][ok]) if ok.sum() >= 2 else math.nan
            mat[i, j] = mat[j, i] = r
    return PearsonResult(names, mat, zero_var, too_few)


@dataclass(frozen=True)
class GroupStats:
    count: int
    mean_gap: float | None
    mean_bond_r: float


class UnknownElementError(KeyError):
    pass


def group_key(ga: str, gb: str) -> str:
    a, b = sorted((ga, gb), key=lambda g: GROUPS.index(g) if g in GROUPS else len(GROUPS))
    return f"{a}|{b}"


def group_aggregate(rows, groups: dict[str, str]) -> dict[str, GroupStats]:
    """Counts and mean gap / bond length per unordered element-group pair.

    ``rows`` need ``elem_a``, ``elem_b``, ``e_g`` and ``bond_r`` attributes.
    Gaps that are undefined are left out of the mean.
    """
    buckets: dict[str, list] = {}
    for row in rows:
        for sym in (row.elem_a, row.elem_b):
            if sym not in groups:
                raise UnknownElementError(f"element {sym!r} has no group assignment")
        key = group_key(groups[row.elem_a], groups[row.elem_b])
        buckets.setdefault(key, []).append(row)
    out = {}
    for key in sorted(buckets):
        rows_k = buckets[key]
        gaps = [r.e_g for r in rows_k if r.e_g is not None]
        out[key] = GroupStats(len(rows_k), float(np.mean(gaps)) if gaps else None,
                              float(np.mean([r.bond_r for r in rows_k])))
    return out


def bin_counts(values, edges, labels) -> dict[str, int]:
    """Half-open bins (-inf, e0), [e0, e1), ..., [e_last, +inf)."""
    edges = [float(e) for e in edges]
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bin edges must be strictly increasing")
    if len(labels) != len(edges) + 1:
        raise ValueError(f"need {len(edges) + 1} labels for {len(edges)} edges")
    counts = dict.fromkeys(labels, 0)
    for v in values:
        if v is None:
            continue
        idx = int(np.searchsorted(edges, v, side="right"))
        counts[labels[idx]] += 1
    return counts


class ChannelAccumulator:
    """Streaming per-channel mean and population variance.

    Each tensor contributes its exact per-channel mean and sum of squared
    deviations, merged with the pairwise update of Chan et al., so the result
    does not depend on the order tensors arrive in.
    """

    def __init__(self, n_channels: int = N_CHANNELS):
        self.count = 0
        self.mean = np.zeros(n_channels)
        self.m2 = np.zeros(n_channels)

    def add(self, channels):
        x = np.asarray(channels, dtype=np.float64).reshape(len(self.mean), -1)
        n_b = x.shape[1]
        mean_b = x.mean(axis=1)
        m2_b = ((x - mean_b[:, None]) ** 2).sum(axis=1)
        self.merge(n_b, mean_b, m2_b)

    def merge(self, n_b, mean_b, m2_b):
        n_a = self.count
        n = n_a + n_b
        delta = mean_b - self.mean
        self.mean = self.mean + delta * (n_b / n)
        self.m2 = self.m2 + m2_b + delta**2 * (n_a * n_b / n)
        self.count = n

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.m2 / self.count) if self.count else np.zeros_like(self.m2)


def channel_statistics(tensors) -> tuple[np.ndarray, np.ndarray]:
    acc = ChannelAccumulator()
    for t in tensors:
        acc.add(getattr(t, "channels", t))
    if acc.count == 0:
        raise NoDataError("no tensors")
    return acc.mean.copy(), acc.std


@dataclass
class StatsReport:
    summaries: dict[str, Summary | None]
    excluded_counts: dict[str, int]
    pearson: PearsonResult
    bins: dict[str, dict[str, int]]
    group_pairs: dict[str, GroupStats] | None = None
    channel_stats: dict[str, dict[str, float]] | None = None

    def to_dict(self) -> dict:
        out = {
            "n_records": max((s.count + self.excluded_counts[k] for k, s in self.summaries.items()
                              if s is not None), default=0),
            "summaries": {k: (asdict(v) if v else None) for k, v in self.summaries.items()},
            "excluded_counts": self.excluded_counts,
            "pearson": {
                "targets": self.pearson.names,
                "matrix": [[None if math.isnan(x) else x for x in row]
                           for row in self.pearson.matrix.tolist()],
                "excluded_zero_variance": self.pearson.zero_variance,
                "excluded_insufficient": self.pearson.too_few,
            },
            "bins": self.bins,
        }
        if self.group_pairs is not None:
            out["group_pairs"] = {k: asdict(v) for k, v in self.group_pairs.items()}
        if self.channel_stats is not None:
            out["channel_stats"] = self.channel_stats
        return out


def build_report(labels: list[ScalarLabels], tensors=None, groups: dict[str, str] | None = None,
                 channel_names: dict[int, str] | None = None) -> StatsReport:
    table = {t: [getattr(row, t) for row in labels] for t in LABEL_TARGETS}
    summaries, excluded = {}, {}
    for name, values in table.items():
        excluded[name] = sum(v is None for v in values)
        try:
            summaries[name] = summarize(values)
        except NoDataError:
            summaries[name] = None
    bins = {
        "bond_r": bin_counts(table["bond_r"], *BOND_BINS),
        "mu_norm": bin_counts(table["mu_norm"], *DIPOLE_BINS),
    }
    report = StatsReport(summaries, excluded, pearson_matrix(table), bins)
    if groups is not None:
        report.group_pairs = group_aggregate(labels, groups)
    if tensors is not None:
        mean, std = channel_statistics(tensors)
        names = channel_names or {k: str(k) for k in range(len(mean))}
        report.channel_stats = {names[k]: {"mean": float(mean[k]), "std": float(std[k])}
                                for k in range(len(mean))}
    return report
