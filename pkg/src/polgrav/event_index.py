"""Coverage-normalized political-distance observation series from coded events.

Raw event aggregates arrive as per (pair, month) sums of Goldstein scores
together with event counts.  This module normalizes them by media coverage,
aggregates to coarser frequencies, enforces the coverage threshold used to
select usable pairs, and applies the sign convention expected by the
regression stage (higher = more distant).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

# Goldstein scale bounds for a single event; monthly normalized scores
# inherit them.  Annual sums use the conventional [-120, 96] envelope for
# twelve months of scores.
SCALE_MIN = -10.0
SCALE_MAX = 8.3
ANNUAL_MIN = -120.0
ANNUAL_MAX = 96.0

# Default sample window: January 1980 - December 2024, 540 months.
WINDOW_START = (1980, 1)
WINDOW_END = (2024, 12)
WINDOW_MONTHS = 540

# Coverage thresholds: 50% and 60% of the 540-month window.
COVERAGE_BASELINE = 270
COVERAGE_STRICT = 324

_BOUNDS_EPS = 1e-9

EVENTS_COLUMNS = [
    "pair_id",
    "year",
    "month",
    "goldstein_sum",
    "event_count_pair",
    "event_count_either",
]


class SignConventionError(ValueError):
    """Raised when a series is negated twice."""


def month_index(year: int, month: int) -> int:
    """Serial month number (year*12 + month-1), comparable across years."""
    return int(year) * 12 + int(month) - 1


def split_month_index(idx: int) -> tuple[int, int]:
    return idx // 12, idx % 12 + 1


@dataclass
class EventPanel:
    """Per (pair, month) Goldstein sums and event counts.

    ``data`` holds one row per observed (pair_id, month); months with no
    events are simply absent.  ``event_count_either`` is the total number
    of events mentioning either country that month and is the normalization
    denominator (the pair-only count is retained but never divides).
    """

    data: pd.DataFrame

    def __post_init__(self):
        missing = [c for c in EVENTS_COLUMNS if c not in self.data.columns]
        if missing:
            raise ValueError(f"EventPanel missing columns: {missing}")
        d = self.data
        if (d["event_count_pair"] > d["event_count_either"]).any():
            raise ValueError("event_count_pair exceeds event_count_either")
        if (d["event_count_pair"] < 0).any() or (d["event_count_either"] < 0).any():
            raise ValueError("negative event counts")

    @classmethod
    def from_csv(cls, path) -> "EventPanel":
        return cls(pd.read_csv(path, comment="#"))


@dataclass
class DistanceSeries:
    """A per-pair political-distance time series on a fixed period grid.

    ``values`` uses NaN for missing periods (no observed signal).  For
    monthly series built from events, ``event_counts`` carries the
    normalization denominators needed downstream by the filter.
    """

    pair_id: str
    frequency: str  # "monthly" | "quarterly" | "annual"
    periods: np.ndarray  # serial month/quarter index, or year
    values: np.ndarray
    coverage_months: int = 0
    filtered: bool = False
    sign_convention: str = "raw"  # "raw" | "negated"
    event_counts: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.periods = np.asarray(self.periods, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.periods.shape != self.values.shape:
            raise ValueError("periods and values must align")
        if self.frequency not in ("monthly", "quarterly", "annual"):
            raise ValueError(f"unknown frequency {self.frequency!r}")
        if self.sign_convention not in ("raw", "negated"):
            raise ValueError(f"unknown sign convention {self.sign_convention!r}")

    def n_observed(self) -> int:
        return int(np.isfinite(self.values).sum())


def normalize_month(goldstein_sum: float, event_count_either: int) -> float:
    """Coverage-normalized monthly score: sum of scores over total events.

    A month with zero events carries no signal and maps to NaN rather
    than zero.  A normalized value outside the per-event scale bounds can
    only come from corrupt input and is rejected.
    """
    if event_count_either < 0:
        raise ValueError("event count must be nonnegative")
    if event_count_either == 0:
        return math.nan
    value = goldstein_sum / event_count_either
    if not (SCALE_MIN - _BOUNDS_EPS <= value <= SCALE_MAX + _BOUNDS_EPS):
        raise ValueError(
            f"normalized score {value:.4f} outside [{SCALE_MIN}, {SCALE_MAX}]: "
            "corrupt input"
        )
    return value


def build_monthly_series(
    panel: EventPanel,
    window_start: tuple[int, int] = WINDOW_START,
    window_end: tuple[int, int] = WINDOW_END,
) -> dict[str, DistanceSeries]:
    """Normalize an event panel into per-pair monthly DistanceSeries.

    Every pair gets the full window grid; months absent from the panel or
    with zero events are NaN.  coverage_months counts months with a
    present, non-zero normalized value.
    """
    lo = month_index(*window_start)
    hi = month_index(*window_end)
    if hi < lo:
        raise ValueError("window end precedes window start")
    grid = np.arange(lo, hi + 1)
    out: dict[str, DistanceSeries] = {}
    for pair_id, grp in panel.data.groupby("pair_id", sort=True):
        values = np.full(grid.shape, np.nan)
        counts = np.zeros(grid.shape, dtype=np.int64)
        for _, row in grp.iterrows():
            m = month_index(row["year"], row["month"])
            if m < lo or m > hi:
                continue
            k = m - lo
            counts[k] = int(row["event_count_either"])
            values[k] = normalize_month(row["goldstein_sum"], counts[k])
        coverage = int(np.sum(np.isfinite(values) & (values != 0.0)))
        out[str(pair_id)] = DistanceSeries(
            pair_id=str(pair_id),
            frequency="monthly",
            periods=grid,
            values=values,
            coverage_months=coverage,
            event_counts=counts,
        )
    return out


def aggregate_period(
    series: DistanceSeries, target: str, mode: str = "sum"
) -> DistanceSeries:
    """Aggregate a monthly series to quarterly or annual frequency.

    ``sum`` adds monthly values treating missing months as 0 (a period with
    no observed months aggregates to 0.0 and is flagged by zero coverage).
    ``first_month`` copies the first month of each period, NaN if that
    month is missing.
    """
    if series.frequency != "monthly":
        raise ValueError("aggregation input must be monthly")
    if series.sign_convention != "raw":
        raise ValueError("aggregate before negation")
    if target not in ("quarterly", "annual"):
        raise ValueError(f"unknown target frequency {target!r}")
    if mode not in ("sum", "first_month"):
        raise ValueError(f"unknown aggregation mode {mode!r}")

    width = 3 if target == "quarterly" else 12
    keys = series.periods // width
    uniq = np.unique(keys)
    values = np.empty(uniq.shape)
    for i, k in enumerate(uniq):
        sel = series.values[keys == k]
        if mode == "sum":
            values[i] = np.nansum(sel)
        else:
            months = series.periods[keys == k]
            values[i] = sel[np.argmin(months)]
    if target == "annual" and mode == "sum":
        bad = np.isfinite(values) & (
            (values < ANNUAL_MIN - _BOUNDS_EPS) | (values > ANNUAL_MAX + _BOUNDS_EPS)
        )
        if bad.any():
            raise ValueError("annual sum outside scale bounds: corrupt input")
    return DistanceSeries(
        pair_id=series.pair_id,
        frequency=target,
        periods=uniq,
        values=values,
        coverage_months=series.coverage_months,
        filtered=series.filtered,
        sign_convention="raw",
    )


def apply_coverage_threshold(
    panel: dict[str, DistanceSeries], min_nonzero_months: int
) -> tuple[dict[str, DistanceSeries], float]:
    """Retain pairs with coverage_months >= threshold; also reports the
    retention fraction."""
    if min_nonzero_months < 0:
        raise ValueError("threshold must be nonnegative")
    kept = {
        k: s for k, s in panel.items() if s.coverage_months >= min_nonzero_months
    }
    fraction = len(kept) / len(panel) if panel else 1.0
    return kept, fraction


def negate_for_regression(series: DistanceSeries) -> DistanceSeries:
    """Flip the sign so higher values mean greater political distance.

    One-shot by construction: the raw index counts cooperation as positive,
    and negating an already-negated series indicates pipeline misuse.
    """
    if series.sign_convention != "raw":
        raise SignConventionError(f"series {series.pair_id} already negated")
    return replace(series, values=-series.values, sign_convention="negated")


def ihs(x):
    """Inverse hyperbolic sine, ln(x + sqrt(x^2+1)); log-like but defined
    for all reals and order-preserving."""
    return np.arcsinh(x)


def series_to_frame(panel: dict[str, DistanceSeries]) -> pd.DataFrame:
    """Flatten DistanceSeries into the CSV emission schema."""
    rows = []
    for s in panel.values():
        for p, v in zip(s.periods, s.values):
            if s.frequency == "monthly":
                year, month = split_month_index(int(p))
                period_cols = {"year": year, "month": month}
            elif s.frequency == "quarterly":
                period_cols = {"year": int(p) // 4, "quarter": int(p) % 4 + 1}
            else:
                period_cols = {"year": int(p)}
            row = {
                "pair_id": s.pair_id,
                "frequency": s.frequency,
                **period_cols,
                "value": v,
                "coverage_months": s.coverage_months,
                "filtered": int(s.filtered),
                "sign_convention": s.sign_convention,
            }
            if s.event_counts is not None:
                row["event_count"] = int(s.event_counts[np.where(s.periods == p)[0][0]])
            rows.append(row)
    if not rows:
        return pd.DataFrame(
            columns=["pair_id", "frequency", "year", "month", "value",
                     "coverage_months", "filtered", "sign_convention",
                     "event_count"]
        )
    return pd.DataFrame(rows)


def frame_to_series(df: pd.DataFrame) -> dict[str, DistanceSeries]:
    """Inverse of series_to_frame for monthly frames."""
    out: dict[str, DistanceSeries] = {}
    for pair_id, grp in df.groupby("pair_id", sort=True):
        freq = grp["frequency"].iloc[0] if "frequency" in grp else "monthly"
        if freq == "monthly":
            periods = np.array(
                [month_index(y, m) for y, m in zip(grp["year"], grp["month"])]
            )
        elif freq == "quarterly":
            periods = (grp["year"].to_numpy() * 4 + grp["quarter"].to_numpy() - 1)
        else:
            periods = grp["year"].to_numpy()
        order = np.argsort(periods)
        counts = None
        if "event_count" in grp:
            counts = grp["event_count"].to_numpy()[order].astype(np.int64)
        values = grp["value"].to_numpy()[order]
        coverage = (
            int(grp["coverage_months"].iloc[0])
            if "coverage_months" in grp
            else int(np.sum(np.isfinite(values) & (values != 0.0)))
        )
        out[str(pair_id)] = DistanceSeries(
            pair_id=str(pair_id),
            frequency=freq,
            periods=periods[order],
            values=values,
            coverage_months=coverage,
            filtered=bool(grp["filtered"].iloc[0]) if "filtered" in grp else False,
            sign_convention=(
                str(grp["sign_convention"].iloc[0])
                if "sign_convention" in grp
                else "raw"
            ),
            event_counts=counts,
        )
    return out
