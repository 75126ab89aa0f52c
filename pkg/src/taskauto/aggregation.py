"""Roll task decisions up to occupations and the economy.

Also imputes fine firm-size distributions from coarse size bins: closed
bins are split into log-uniform sub-bins and the open top bin is extended
with a Zipf (slope -1) tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import EmptyBins, InvalidMaxSize, MissingSubsector, OutOfRange, ParseError, ZeroDenominator
from .io import read_csv_checked
from .task_optimizer import AutomationDecision, FeasibilityFlags, Regime, TaskEconomics

STANDARD_BIN_EDGES = ((1, 4), (5, 9), (10, 19), (20, 99), (100, 499), (500, 999),
                      (1000, 2499), (2500, 4999), (5000, 9999), (10000, None))
Z_CLASSES = ("full_opt", "partial_opt_both_feasible", "partial_opt_full_infeasible")

DEFAULT_MAX_FIRM_SIZE = 2e6


# ---------------------------------------------------------------------------
# firm sizes


@dataclass(frozen=True)
class CoarseFirmSizeBins:
    """Firm counts in ascending, non-overlapping size bins.

    ``upper`` holds ``inf`` for the open top bin, which must come last.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    counts: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.lower) == len(self.upper) == len(self.counts)):
            raise OutOfRange("lower, upper and counts must have equal length")
        if len(self.lower) == 0:
            raise EmptyBins("no size bins")
        prev_hi = 0.0
        for i, (lo, hi, c) in enumerate(zip(self.lower, self.upper, self.counts)):
            if not (lo >= 1 and hi >= lo):
                raise OutOfRange(f"bin {i}: need 1 <= lower <= upper, got ({lo}, {hi})")
            if lo <= prev_hi:
                raise OutOfRange(f"bin {i} overlaps or is out of order")
            if math.isinf(hi) and i != len(self.lower) - 1:
                raise OutOfRange("only the last bin may be open")
            if not (c >= 0 and math.isfinite(c)):
                raise OutOfRange(f"bin {i}: count must be finite and >= 0, got {c}")
            prev_hi = hi
        if math.fsum(self.counts) <= 0:
            raise EmptyBins("all bin counts are zero")

    @classmethod
    def standard(cls, counts: Sequence[float]) -> "CoarseFirmSizeBins":
        """Bins with the standard edges 1-4, 5-9, ..., 10000+."""
        if len(counts) != len(STANDARD_BIN_EDGES):
            raise OutOfRange(f"expected {len(STANDARD_BIN_EDGES)} counts, got {len(counts)}")
        lower = tuple(float(lo) for lo, _ in STANDARD_BIN_EDGES)
        upper = tuple(math.inf if hi is None else float(hi) for _, hi in STANDARD_BIN_EDGES)
        return cls(lower, upper, tuple(float(c) for c in counts))

    @classmethod
    def from_csv(cls, path) -> "CoarseFirmSizeBins":
        """Read ``bin_lower,bin_upper,firm_count``; a blank upper marks the open bin."""
        df = read_csv_checked(path, ["bin_lower", "bin_upper", "firm_count"],
                              numeric=["bin_lower", "firm_count"], optional_numeric=["bin_upper"])
        upper = tuple(math.inf if math.isnan(u) else float(u) for u in df["bin_upper"])
        try:
            return cls(tuple(df["bin_lower"].astype(float)), upper, tuple(df["firm_count"].astype(float)))
        except OutOfRange as exc:
            raise ParseError(str(exc)) from exc

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "bin_lower": self.lower,
            "bin_upper": [np.nan if math.isinf(u) else u for u in self.upper],
            "firm_count": self.counts,
        })


@dataclass(frozen=True)
class FineFirmSizeDistribution:
    """Firm counts at discrete firm sizes (employees).

    ``source_bin`` maps each point to the coarse bin it came from, or -1
    when the distribution is not tied to coarse bins.
    """

    sizes: np.ndarray
    counts: np.ndarray
    source_bin: np.ndarray | None = None

    def __post_init__(self):
        sizes = np.asarray(self.sizes, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if sizes.shape != counts.shape or sizes.ndim != 1:
            raise OutOfRange("sizes and counts must be 1-D arrays of equal length")
        if np.any(sizes <= 0) or np.any(counts < 0):
            raise OutOfRange("sizes must be positive and counts non-negative")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "counts", counts)
        if self.source_bin is not None:
            object.__setattr__(self, "source_bin", np.asarray(self.source_bin, dtype=int))

    @property
    def total(self) -> float:
        return math.fsum(self.counts)

    def bin_totals(self) -> dict[int, float]:
        if self.source_bin is None:
            return {-1: self.total}
        return {int(b): math.fsum(self.counts[self.source_bin == b]) for b in np.unique(self.source_bin)}

    def rescaled(self, factor: float) -> "FineFirmSizeDistribution":
        """Every firm's headcount multiplied by ``factor``; counts unchanged."""
        if not factor > 0:
            raise OutOfRange("scale factor must be positive")
        return FineFirmSizeDistribution(self.sizes * factor, self.counts.copy(), self.source_bin)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"size": self.sizes, "firm_count": self.counts})


def impute_fine_sizes(coarse: CoarseFirmSizeBins, max_size: float = DEFAULT_MAX_FIRM_SIZE,
                      sub_bins: int = 10, tail_points: int = 30) -> FineFirmSizeDistribution:
    """Split closed bins log-uniformly and extend the open bin with a Zipf tail.

    A closed bin ``[lo, hi]`` gets ``sub_bins`` sub-bins with log-spaced edges
    from ``lo`` to ``hi + 1``, each holding ``count / sub_bins`` firms at its
    geometric midpoint. The open bin becomes ``tail_points`` log-spaced sizes
    from its lower edge to ``max_size`` with counts proportional to
    ``1 / size``, normalised to the bin's count.

    Raises
    ------
    InvalidMaxSize
        If ``max_size`` does not exceed the open bin's lower edge.
    """
    sizes, counts, source = [], [], []
    for i, (lo, hi, c) in enumerate(zip(coarse.lower, coarse.upper, coarse.counts)):
        if math.isinf(hi):
            if not max_size > lo:
                raise InvalidMaxSize(f"max_size {max_size} must exceed the open bin's lower edge {lo}")
            pts = np.geomspace(lo, max_size, tail_points)
            w = 1.0 / pts
            sizes.append(pts)
            counts.append(c * w / math.fsum(w))
        else:
            edges = np.geomspace(lo, hi + 1.0, sub_bins + 1)
            sizes.append(np.sqrt(edges[:-1] * edges[1:]))
            counts.append(np.full(sub_bins, c / sub_bins))
        source.append(np.full(len(sizes[-1]), i))
    return FineFirmSizeDistribution(np.concatenate(sizes), np.concatenate(counts), np.concatenate(source))


class FirmSizeImputer(TransformerMixin, BaseEstimator):
    """Transformer wrapper around :func:`impute_fine_sizes`.

    ``transform`` takes a frame with ``bin_lower, bin_upper, firm_count``
    and returns one with ``size, firm_count``.
    """

    def __init__(self, max_size: float = DEFAULT_MAX_FIRM_SIZE, sub_bins: int = 10, tail_points: int = 30):
        self.max_size = max_size
        self.sub_bins = sub_bins
        self.tail_points = tail_points

    def fit(self, X=None, y=None):
        if not self.max_size > 1:
            raise InvalidMaxSize("max_size must exceed 1")
        self.fitted_ = True
        return self

    def transform(self, X) -> pd.DataFrame:
        df = pd.DataFrame(X)
        upper = tuple(math.inf if pd.isna(u) else float(u) for u in df["bin_upper"])
        coarse = CoarseFirmSizeBins(tuple(df["bin_lower"].astype(float)), upper, tuple(df["firm_count"].astype(float)))
        return impute_fine_sizes(coarse, self.max_size, self.sub_bins, self.tail_points).to_frame()


def _sum_on_union(sizes: np.ndarray, counts: np.ndarray):
    order = np.argsort(sizes, kind="stable")
    sizes, counts = sizes[order], counts[order]
    uniq, start = np.unique(sizes, return_index=True)
    bounds = list(start) + [len(sizes)]
    summed = np.array([math.fsum(counts[a:b]) for a, b in zip(bounds[:-1], bounds[1:])])
    return uniq, summed


def _sum_on_log_grid(sizes, counts, max_size, n_grid):
    grid = np.geomspace(1.0, max_size, n_grid)
    lg = np.log(grid)
    x = np.clip(np.log(sizes), lg[0], lg[-1])
    j = np.clip(np.searchsorted(lg, x, side="right") - 1, 0, n_grid - 2)
    frac = (x - lg[j]) / (lg[j + 1] - lg[j])
    parts = [[] for _ in range(n_grid)]
    for jj, f, c in zip(j, frac, counts):
        parts[jj].append(c * (1.0 - f))
        parts[jj + 1].append(c * f)
    return grid, np.array([math.fsum(p) for p in parts])


def occupation_size_distribution(subsector_dists: Mapping[str, FineFirmSizeDistribution],
                                 l_i: Mapping[str, float], l_oi: Mapping[str, float],
                                 grid: str | None = None, max_size: float = DEFAULT_MAX_FIRM_SIZE,
                                 n_grid: int = 200) -> FineFirmSizeDistribution:
    """Firm-size distribution of one occupation's headcount.

    Each subsector's size axis is scaled by the occupation's employment share
    ``l_oi / l_i`` and the counts are summed over subsectors.

    Parameters
    ----------
    grid : {None, "log"}
        ``None`` sums on the union of rescaled sizes (exact). ``"log"`` uses
        ``n_grid`` log-spaced sizes from 1 to ``max_size`` and splits each
        point's count between its two neighbouring grid sizes in proportion
        to log distance.
    """
    sizes, counts = [], []
    for key, l_occ in l_oi.items():
        if key not in subsector_dists:
            raise MissingSubsector(key)
        if key not in l_i:
            raise MissingSubsector(f"no subsector employment for {key!r}")
        total = l_i[key]
        if not (0 <= l_occ <= total and total > 0):
            raise OutOfRange(f"{key}: need 0 <= l_oi <= l_i and l_i > 0")
        if l_occ == 0:
            continue
        scaled = subsector_dists[key].rescaled(l_occ / total)
        sizes.append(scaled.sizes)
        counts.append(scaled.counts)
    if not sizes:
        raise EmptyBins("occupation has no employment in any listed subsector")
    sizes, counts = np.concatenate(sizes), np.concatenate(counts)
    if grid is None:
        s, c = _sum_on_union(sizes, counts)
    elif grid == "log":
        s, c = _sum_on_log_grid(sizes, counts, max_size, n_grid)
    else:
        raise ValueError(f"grid must be None or 'log', got {grid!r}")
    return FineFirmSizeDistribution(s, c)


# ---------------------------------------------------------------------------
# task-level outcomes and rollups


@dataclass(frozen=True)
class TaskOutcome:
    """A decided task instance with the weights aggregation needs.

    ``total_benefit`` is this instance's own benefit; for pooled deployment
    ``r`` and ``regime`` come from the pool's decision.
    """

    occupation: str
    regime: Regime
    r: float
    total_benefit: float
    wage: float
    employees: float
    time_share: float
    vision_share: float
    flags: FeasibilityFlags

    @classmethod
    def from_decision(cls, occupation: str, t: TaskEconomics, d: AutomationDecision,
                      total_benefit: float | None = None) -> "TaskOutcome":
        tb = d.total_benefit if total_benefit is None else total_benefit
        return cls(occupation, d.regime, d.r, tb, t.wage, t.employees, t.time_share, t.vision_share,
                   d.feasibility_flags)

    @property
    def compensation(self) -> float:
        """Annual pay attributable to the task: ``w N tau``."""
        return self.wage * self.employees * self.time_share


def condition_class(o: TaskOutcome) -> str | None:
    """Reporting class of a decided task, or None when it is not automated."""
    if o.regime is Regime.FULL:
        return "full_opt"
    if o.regime is Regime.PARTIAL:
        return "partial_opt_both_feasible" if o.flags.full_feasible else "partial_opt_full_infeasible"
    return None


def occupation_benefit(outcomes: Iterable[TaskOutcome], condition: str) -> dict[str, float]:
    """Sum of ``TB * r`` per occupation over tasks in ``condition``.

    Every occupation present in ``outcomes`` appears in the result, with 0
    when none of its tasks fall in the class.
    """
    if condition not in Z_CLASSES:
        raise ValueError(f"condition must be one of {Z_CLASSES}, got {condition!r}")
    parts: dict[str, list[float]] = {}
    for o in outcomes:
        bucket = parts.setdefault(o.occupation, [])
        if condition_class(o) == condition:
            bucket.append(o.total_benefit * o.r)
    return {k: math.fsum(v) for k, v in parts.items()}


def automation_rate(outcomes: Sequence[TaskOutcome], tau_weighted: bool = False) -> float:
    """Compensation-weighted share of work replaced.

    ``sum r N w tau / sum N w``; with ``tau_weighted`` the denominator is
    ``sum N w tau`` instead.

    Raises
    ------
    ZeroDenominator
        If the denominator is zero.
    """
    if len(outcomes) == 0:
        raise ZeroDenominator("no outcomes to aggregate")
    num = math.fsum(o.r * o.employees * o.wage * o.time_share for o in outcomes)
    if tau_weighted:
        den = math.fsum(o.employees * o.wage * o.time_share for o in outcomes)
    else:
        den = math.fsum(o.employees * o.wage for o in outcomes)
    if den == 0:
        raise ZeroDenominator("zero compensation base")
    return num / den


def residual_decomposition(outcomes: Iterable[TaskOutcome]) -> dict[str, float]:
    """Split task compensation ``w N tau`` into saved and residual parts.

    Returns absolute amounts for ``non_automatable`` (the ``1 - delta``
    share), ``not_adopted`` (automatable work in tasks left unautomated),
    ``partial_residual`` (the ``1 - r`` share of partially automated work)
    and ``realized_saving``, plus ``base``. The four parts sum to ``base``.
    """
    non_auto, not_adopted, partial, saved, base = [], [], [], [], []
    for o in outcomes:
        comp = o.compensation
        auto = o.vision_share * comp
        base.append(comp)
        non_auto.append(comp - auto)
        if o.regime is Regime.NONE:
            not_adopted.append(auto)
        elif o.regime is Regime.PARTIAL:
            partial.append((1.0 - o.r) * auto)
            saved.append(o.r * auto)
        else:
            saved.append(auto)
    return {
        "non_automatable": math.fsum(non_auto),
        "not_adopted": math.fsum(not_adopted),
        "partial_residual": math.fsum(partial),
        "realized_saving": math.fsum(saved),
        "base": math.fsum(base),
    }


def residual_shares(outcomes: Iterable[TaskOutcome]) -> dict[str, float]:
    """:func:`residual_decomposition` as fractions of the compensation base."""
    parts = residual_decomposition(outcomes)
    base = parts.pop("base")
    if base == 0:
        raise ZeroDenominator("zero compensation base")
    return {k: v / base for k, v in parts.items()}


def occupation_rollups(outcomes: Sequence[TaskOutcome], tau_weighted: bool = False) -> pd.DataFrame:
    """One row per occupation: the three class sums, base compensation and rate."""
    by_occ: dict[str, list[TaskOutcome]] = {}
    for o in outcomes:
        by_occ.setdefault(o.occupation, []).append(o)
    rows = []
    for occ in sorted(by_occ):
        group = by_occ[occ]
        row = {"soc_code": occ}
        for z in Z_CLASSES:
            row[z] = occupation_benefit(group, z)[occ]
        row["base_compensation"] = math.fsum(o.compensation for o in group)
        try:
            row["automation_rate"] = automation_rate(group, tau_weighted)
            row["automation_rate_tau_weighted"] = automation_rate(group, True)
        except ZeroDenominator:
            row["automation_rate"] = row["automation_rate_tau_weighted"] = 0.0
        rows.append(row)
    columns = ["soc_code", *Z_CLASSES, "base_compensation", "automation_rate", "automation_rate_tau_weighted"]
    return pd.DataFrame(rows, columns=columns)


def firm_level_outcomes(occupation: str, t: TaskEconomics, sizes: FineFirmSizeDistribution,
                        decide) -> list[TaskOutcome]:
    """Decide the task separately for every firm size.

    ``t`` describes one employee's task (its ``employees`` is replaced by
    each firm's headcount times its firm count for weighting); ``decide``
    maps a :class:`TaskEconomics` to an :class:`AutomationDecision`.
    """
    if t.employees <= 0:
        raise OutOfRange("template task must have positive employees")
    unit = t.scaled(1.0 / t.employees)
    out = []
    for size, count in zip(sizes.sizes, sizes.counts):
        if count <= 0:
            continue
        per_firm = unit.scaled(size)
        d = decide(per_firm)
        firms = unit.scaled(size * count)
        out.append(TaskOutcome(occupation, d.regime, d.r, d.total_benefit * count, firms.wage,
                               firms.employees, firms.time_share, firms.vision_share, d.feasibility_flags))
    return out
