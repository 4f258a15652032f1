"""48-week calendar, series transforms and mixed-frequency panel assembly.

Every month owns exactly four weeks, so a year has 48 of them.  Within a
month, days 1-7 fall in the first week, 8-14 in the second, 15-21 in the
third and everything from the 22nd on in the fourth.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass, field
from functools import total_ordering
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

WEEKS_PER_YEAR = 48
WEEKS_PER_MONTH = 4

FREQUENCIES = ("daily", "weekly", "monthly")
TRANSFORMS = ("yoy_difference", "none")
ROLES = ("monthly_block", "policy", "weekly_block")
YOY_MODES = ("log_difference", "arithmetic_difference")


class IngestError(ValueError):
    """Raised when raw series cannot be turned into a valid panel."""


@total_ordering
@dataclass(frozen=True)
class WeekStamp:
    year: int
    week: int

    def __post_init__(self) -> None:
        if not 1 <= int(self.week) <= WEEKS_PER_YEAR:
            raise IngestError(f"week must be in 1..{WEEKS_PER_YEAR}, got {self.week}")

    @property
    def month(self) -> int:
        return math.ceil(self.week / WEEKS_PER_MONTH)

    @property
    def is_month_end(self) -> bool:
        return self.week % WEEKS_PER_MONTH == 0

    @property
    def ordinal(self) -> int:
        """Number of weeks since week 1 of year 0."""
        return self.year * WEEKS_PER_YEAR + self.week - 1

    @classmethod
    def from_ordinal(cls, n: int) -> "WeekStamp":
        year, w = divmod(int(n), WEEKS_PER_YEAR)
        return cls(year, w + 1)

    def shift(self, weeks: int) -> "WeekStamp":
        return WeekStamp.from_ordinal(self.ordinal + weeks)

    def __lt__(self, other: "WeekStamp") -> bool:
        return (self.year, self.week) < (other.year, other.week)

    def __str__(self) -> str:
        return f"{self.year}-W{self.week:02d}"


@dataclass(frozen=True)
class SeriesSpec:
    name: str
    frequency: str
    transform: str = "none"
    role: str = "weekly_block"
    yoy_mode: str = "log_difference"
    file: str | None = None

    def __post_init__(self) -> None:
        if self.frequency not in FREQUENCIES:
            raise IngestError(f"{self.name}: unknown frequency {self.frequency!r}")
        if self.transform not in TRANSFORMS:
            raise IngestError(f"{self.name}: unknown transform {self.transform!r}")
        if self.role not in ROLES:
            raise IngestError(f"{self.name}: unknown role {self.role!r}")
        if self.yoy_mode not in YOY_MODES:
            raise IngestError(f"{self.name}: unknown yoy_mode {self.yoy_mode!r}")
        if self.role == "monthly_block" and self.frequency != "monthly":
            raise IngestError(f"{self.name}: monthly_block series must be monthly")
        if self.role != "monthly_block" and self.frequency == "monthly":
            raise IngestError(f"{self.name}: {self.role} series cannot be monthly")


@dataclass
class MixedPanel:
    """Observation matrix on the 48-week calendar.

    Columns are ordered monthly variables first, then the policy variable,
    then the remaining weekly variables.  Missing entries are NaN.  Monthly
    columns carry observations only in the last week of a month.
    """

    values: np.ndarray
    stamps: list[WeekStamp]
    names: list[str]
    n_monthly: int
    frequencies: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        self.stamps = list(self.stamps)
        self.names = list(self.names)
        if not self.frequencies:
            self.frequencies = ["monthly"] * self.n_monthly + ["weekly"] * (
                len(self.names) - self.n_monthly
            )
        T, M = self.values.shape
        if len(self.stamps) != T:
            raise IngestError(f"{len(self.stamps)} stamps for {T} rows")
        if len(self.names) != M or len(self.frequencies) != M:
            raise IngestError("names/frequencies do not match the number of columns")
        if len(set(self.names)) != M:
            raise IngestError("duplicate variable names")
        if not 0 <= self.n_monthly < M:
            raise IngestError("panel needs at least one weekly (policy) variable")
        for a, b in zip(self.stamps, self.stamps[1:]):
            if b.ordinal != a.ordinal + 1:
                raise IngestError(f"calendar is not contiguous between {a} and {b}")
        month_end = np.array([s.is_month_end for s in self.stamps])
        stray = ~np.isnan(self.values[~month_end, : self.n_monthly])
        if stray.any():
            raise IngestError("monthly column observed outside a month-end week")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.values.shape[1]

    @property
    def M_L(self) -> int:
        return self.n_monthly

    @property
    def M_H(self) -> int:
        return self.M - self.n_monthly

    @property
    def policy_index(self) -> int:
        """Zero-based column of the policy variable."""
        return self.n_monthly

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def index_of(self, stamp: WeekStamp) -> int:
        i = stamp.ordinal - self.stamps[0].ordinal
        if not 0 <= i < self.T:
            raise IngestError(f"{stamp} is outside the sample {self.stamps[0]}..{self.stamps[-1]}")
        return i

    def column(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise IngestError(f"unknown variable {name!r}; have {self.names}") from None


def build_calendar(start: WeekStamp, end: WeekStamp) -> list[WeekStamp]:
    if end < start:
        raise IngestError(f"calendar end {end} precedes start {start}")
    return [WeekStamp.from_ordinal(n) for n in range(start.ordinal, end.ordinal + 1)]


def date_to_week(d: dt.date) -> WeekStamp:
    offset = min(math.ceil(d.day / 7), WEEKS_PER_MONTH)
    return WeekStamp(d.year, WEEKS_PER_MONTH * (d.month - 1) + offset)


def map_dates_to_weeks(dates: Iterable[dt.date]) -> list[WeekStamp]:
    return [date_to_week(d) for d in dates]


def weekly_average(daily_values: Iterable[tuple[dt.date, float]]) -> list[tuple[WeekStamp, float]]:
    """Average the non-missing values falling into each calendar week.

    The output spans every week between the first and last date; weeks with
    no usable value are NaN.
    """
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for d, v in daily_values:
        key = date_to_week(d).ordinal
        sums.setdefault(key, 0.0)
        counts.setdefault(key, 0)
        if v is None or not np.isfinite(v):
            continue
        sums[key] += float(v)
        counts[key] += 1
    if not sums:
        return []
    out = []
    for n in range(min(sums), max(sums) + 1):
        c = counts.get(n, 0)
        out.append((WeekStamp.from_ordinal(n), sums[n] / c if c else math.nan))
    return out


def yoy_transform(
    series: Sequence[tuple[WeekStamp, float]], mode: str = "log_difference"
) -> list[tuple[WeekStamp, float]]:
    """Year-on-year difference on the 48-week calendar.

    ``log_difference`` returns ``100 * (log v_t - log v_{t-48})``;
    ``arithmetic_difference`` returns ``v_t - v_{t-48}``.  Lags that fall
    before the series start, or are missing, give NaN.
    """
    if mode not in YOY_MODES:
        raise IngestError(f"unknown yoy mode {mode!r}")
    by_ordinal = {s.ordinal: float(v) for s, v in series}
    out = []
    for s, v in series:
        prev = by_ordinal.get(s.ordinal - WEEKS_PER_YEAR, math.nan)
        if mode == "log_difference":
            with np.errstate(divide="ignore", invalid="ignore"):
                val = 100.0 * (np.log(v) - np.log(prev))
        else:
            val = v - prev
        out.append((s, float(val)))
    return out


def to_weekly(spec: SeriesSpec, raw: Sequence[tuple[dt.date, float]]) -> list[tuple[WeekStamp, float]]:
    """Put one raw series on the calendar (before any transform).

    Monthly observations land in the last week of their month; daily and
    weekly data are averaged within each calendar week.
    """
    if spec.frequency == "monthly":
        out: dict[int, float] = {}
        for d, v in raw:
            stamp = WeekStamp(d.year, WEEKS_PER_MONTH * d.month)
            if stamp.ordinal in out:
                raise IngestError(f"{spec.name}: two observations for month {d.year}-{d.month:02d}")
            out[stamp.ordinal] = math.nan if v is None else float(v)
        return [(WeekStamp.from_ordinal(n), out[n]) for n in sorted(out)]
    return weekly_average(raw)


def _observed_span(series: Sequence[tuple[WeekStamp, float]]) -> tuple[int, int] | None:
    obs = [s.ordinal for s, v in series if np.isfinite(v)]
    if not obs:
        return None
    return min(obs), max(obs)


def assemble_panel(
    specs: Sequence[SeriesSpec],
    raw: Mapping[str, Sequence[tuple[dt.date, float]]],
    start: WeekStamp | None = None,
    end: WeekStamp | None = None,
) -> MixedPanel:
    """Transform, align and order the raw series into a :class:`MixedPanel`.

    Without explicit bounds the sample is the overlap of all transformed
    series: it begins where every series has started and ends at the last
    week any series is observed, so that later-ending series leave a ragged
    edge of trailing NaNs.
    """
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise IngestError(f"duplicate series names: {dup}")
    policy = [s for s in specs if s.role == "policy"]
    if len(policy) != 1:
        raise IngestError(f"exactly one policy series required, found {len(policy)}")
    missing = [n for n in names if n not in raw]
    if missing:
        raise IngestError(f"no data supplied for {missing}")

    ordered = (
        [s for s in specs if s.role == "monthly_block"]
        + policy
        + [s for s in specs if s.role == "weekly_block"]
    )
    weekly = {}
    for s in ordered:
        w = to_weekly(s, raw[s.name])
        if s.transform == "yoy_difference":
            w = yoy_transform(w, s.yoy_mode)
        weekly[s.name] = w

    spans = {}
    for s in ordered:
        span = _observed_span(weekly[s.name])
        if span is None:
            raise IngestError(f"{s.name}: no usable observations after transform")
        spans[s.name] = span
    if start is None:
        # monthly series start at a month end; back up to the month's first week
        first = max(
            sp[0] - (WEEKS_PER_MONTH - 1 if s.frequency == "monthly" else 0)
            for s, sp in ((s, spans[s.name]) for s in ordered)
        )
        start = WeekStamp.from_ordinal(first)
        if start.week % WEEKS_PER_MONTH != 1:
            start = WeekStamp.from_ordinal(first + (-start.week % WEEKS_PER_MONTH) + 1)
    if end is None:
        end = WeekStamp.from_ordinal(max(sp[1] for sp in spans.values()))
    if end < start or any(sp[1] < start.ordinal or sp[0] > end.ordinal for sp in spans.values()):
        raise IngestError("series samples do not overlap")

    stamps = build_calendar(start, end)
    values = np.full((len(stamps), len(ordered)), np.nan)
    for j, s in enumerate(ordered):
        for stamp, v in weekly[s.name]:
            i = stamp.ordinal - start.ordinal
            if 0 <= i < len(stamps):
                values[i, j] = v
    n_monthly = sum(s.role == "monthly_block" for s in ordered)
    return MixedPanel(
        values=values,
        stamps=stamps,
        names=[s.name for s in ordered],
        n_monthly=n_monthly,
        frequencies=["monthly" if s.frequency == "monthly" else "weekly" for s in ordered],
    )


# --- file formats ---------------------------------------------------------


def read_series_csv(path: str | Path) -> list[tuple[dt.date, float]]:
    """Read a ``date,value`` CSV; empty or ``.`` values are missing."""
    path = Path(path)
    if not path.exists():
        raise IngestError(f"series file not found: {path}")
    rows = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip().lower() for f in reader.fieldnames[:2]] != ["date", "value"]:
            raise IngestError(f"{path}: expected header 'date,value'")
        key_d, key_v = reader.fieldnames[0], reader.fieldnames[1]
        for line in reader:
            raw = (line[key_v] or "").strip()
            val = float(raw) if raw not in ("", ".") else math.nan
            rows.append((dt.date.fromisoformat(line[key_d].strip()), val))
    rows.sort(key=lambda r: r[0])
    return rows


def _load_toml(path: Path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    with path.open("rb") as fh:
        return tomllib.load(fh)


def _parse_stamp(value) -> WeekStamp:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return WeekStamp(int(value[0]), int(value[1]))
    if isinstance(value, str) and "-W" in value:
        y, w = value.split("-W")
        return WeekStamp(int(y), int(w))
    raise IngestError(f"cannot parse week stamp {value!r}; use [year, week] or 'YYYY-Www'")


def load_manifest(path: str | Path) -> tuple[list[SeriesSpec], WeekStamp | None, WeekStamp | None]:
    """Parse a panel manifest.

    Example::

        [sample]
        start = [2011, 1]
        end = [2020, 24]

        [[series]]
        name = "CPIAUCSL"
        file = "CPIAUCSL.csv"
        frequency = "monthly"
        transform = "yoy_difference"
        yoy_mode = "log_difference"
        role = "monthly_block"

    Relative file paths resolve against the manifest's directory.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"manifest not found: {path}")
    doc = _load_toml(path)
    sample = doc.get("sample", {})
    start = _parse_stamp(sample["start"]) if "start" in sample else None
    end = _parse_stamp(sample["end"]) if "end" in sample else None
    specs = []
    for entry in doc.get("series", []):
        entry = dict(entry)
        if "file" in entry:
            f = Path(entry["file"])
            entry["file"] = str(f if f.is_absolute() else path.parent / f)
        try:
            specs.append(SeriesSpec(**entry))
        except TypeError as exc:
            raise IngestError(f"bad series entry {entry}: {exc}") from None
    if not specs:
        raise IngestError(f"{path}: no [[series]] tables")
    return specs, start, end


def ingest_manifest(path: str | Path) -> MixedPanel:
    specs, start, end = load_manifest(path)
    raw = {}
    for s in specs:
        if s.file is None:
            raise IngestError(f"{s.name}: manifest entry has no file")
        raw[s.name] = read_series_csv(s.file)
    return assemble_panel(specs, raw, start, end)


def _fmt(v: float) -> str:
    return "" if not np.isfinite(v) else repr(float(v))


def format_panel_csv(panel: MixedPanel) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["year", "week", *panel.names])
    for stamp, row in zip(panel.stamps, panel.values):
        w.writerow([stamp.year, stamp.week, *(_fmt(v) for v in row)])
    return buf.getvalue()


def write_panel_csv(panel: MixedPanel, path: str | Path) -> None:
    Path(path).write_text(format_panel_csv(panel))


def read_panel_csv(path: str | Path, n_monthly: int) -> MixedPanel:
    """Read a panel written by :func:`write_panel_csv`.

    The file does not record frequencies, so the caller states how many
    leading columns are monthly.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"panel file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["year", "week"]:
            raise IngestError(f"{path}: expected header starting with 'year,week'")
        stamps, rows = [], []
        for line in reader:
            stamps.append(WeekStamp(int(line[0]), int(line[1])))
            rows.append([float(c) if c.strip() else math.nan for c in line[2:]])
    return MixedPanel(
        values=np.array(rows, dtype=float).reshape(len(rows), len(header) - 2),
        stamps=stamps,
        names=header[2:],
        n_monthly=n_monthly,
    )
