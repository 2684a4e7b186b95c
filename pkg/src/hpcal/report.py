"""Level deviations from nominal and their summary tables."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field
from importlib import resources

CSV_COLUMNS = ("track_id", "L_nom", "L_ocv", "L_hats", "D_ocv", "D_hats")
GOLDEN_TABLE = "table2.v1.csv"
METHODS = ("ocv", "hats")


@dataclass(frozen=True)
class TrackLevels:
    track_id: str
    nominal_dba: float
    ocv_dba: float | None = None
    hats_dba: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.nominal_dba):
            raise ValueError(f"{self.track_id}: nominal level must be finite")
        if self.ocv_dba is None and self.hats_dba is None:
            raise ValueError(f"{self.track_id}: at least one measured level is required")


def delta(measured: float, nominal: float) -> float:
    """Signed deviation of a reproduced level from its nominal level."""
    if not (math.isfinite(measured) and math.isfinite(nominal)):
        raise ValueError("levels must be finite")
    return measured - nominal


@dataclass(frozen=True)
class DeltaRow:
    levels: TrackLevels
    delta_ocv: float | None
    delta_hats: float | None

    @property
    def track_id(self) -> str:
        return self.levels.track_id

    @property
    def sign_marker(self) -> str:
        """Figure-style suffix for the sign of the OCV deviation."""
        d = self.delta_ocv if self.delta_ocv is not None else self.delta_hats
        if d is None or round(d, 2) == 0:
            return ""
        return "(+)" if d > 0 else "(−)"


@dataclass(frozen=True)
class MethodStats:
    count: int
    min: float
    max: float
    mean: float
    std: float  # sample standard deviation, nan for a single value


def abs_stats(values) -> MethodStats | None:
    vals = [abs(v) for v in values]
    if not vals:
        return None
    std = statistics.stdev(vals) if len(vals) > 1 else math.nan
    return MethodStats(len(vals), min(vals), max(vals), statistics.fmean(vals), std)


@dataclass(frozen=True)
class DeltaReport:
    rows: tuple
    exclusions: dict = field(default_factory=dict)  # track_id -> reason

    def _deltas(self, method, include_excluded):
        attr = f"delta_{method}"
        return [
            getattr(r, attr)
            for r in self.rows
            if getattr(r, attr) is not None and (include_excluded or r.track_id not in self.exclusions)
        ]

    def stats(self, method: str, include_excluded: bool = True) -> MethodStats | None:
        """|delta| statistics for ``method`` ("ocv" or "hats"), recomputed from rows."""
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        return abs_stats(self._deltas(method, include_excluded))

    def sorted_rows(self) -> list:
        """Rows ordered by ascending |delta_ocv|, ties broken by track_id.

        Rows without an OCV level follow, ordered by |delta_hats|.
        """
        def key(r):
            d = r.delta_ocv if r.delta_ocv is not None else r.delta_hats
            # the rounding absorbs float noise so printed ties really tie
            return (r.delta_ocv is None, round(abs(d), 9), r.track_id)

        return sorted(self.rows, key=key)


def summarize(rows, exclusions=None) -> DeltaReport:
    """Compute per-track deviations.

    ``exclusions`` maps track_id to a reason (a plain list of ids is also
    accepted). Statistics are available with and without excluded tracks.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no tracks to summarize")
    if exclusions is None:
        exclusions = {}
    elif not isinstance(exclusions, dict):
        exclusions = {track_id: "excluded" for track_id in exclusions}
    ids = [r.track_id for r in rows]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate track_id in rows")
    unknown = set(exclusions) - set(ids)
    if unknown:
        raise ValueError(f"cannot exclude unknown tracks: {sorted(unknown)}")
    if set(ids) <= set(exclusions):
        raise ValueError("every track is excluded; nothing left to summarize")
    out = []
    for r in rows:
        d_ocv = None if r.ocv_dba is None else delta(r.ocv_dba, r.nominal_dba)
        d_hats = None if r.hats_dba is None else delta(r.hats_dba, r.nominal_dba)
        out.append(DeltaRow(r, d_ocv, d_hats))
    return DeltaReport(tuple(out), dict(exclusions))


def format_level(value) -> str:
    """Two-decimal fixed point; never prints a negative zero."""
    text = f"{value:.2f}"
    return "0.00" if text == "-0.00" else text


def _fmt(value) -> str:
    return "" if value is None else format_level(value)


def render(report: DeltaReport, fmt: str = "csv") -> str:
    if fmt == "csv":
        return render_csv(report)
    if fmt in ("md", "markdown"):
        return render_markdown(report)
    raise ValueError(f"unknown format {fmt!r}")


def render_csv(report: DeltaReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in report.sorted_rows():
        lv = r.levels
        writer.writerow(
            [r.track_id, _fmt(lv.nominal_dba), _fmt(lv.ocv_dba), _fmt(lv.hats_dba),
             _fmt(r.delta_ocv), _fmt(r.delta_hats)]
        )
    return buf.getvalue()


def _stats_line(label, st):
    if st is None:
        return f"| {label} | 0 | | | | |"
    std = "" if math.isnan(st.std) else f"{st.std:.3f}"
    return f"| {label} | {st.count} | {st.min:.2f} | {st.max:.2f} | {st.mean:.3f} | {std} |"


def render_markdown(report: DeltaReport) -> str:
    lines = [
        "| Track | L_nom | L_ocv | L_hats | D_ocv | D_hats |",
        "|:--|--:|--:|--:|--:|--:|",
    ]
    for r in report.sorted_rows():
        lv = r.levels
        label = f"{r.track_id} {r.sign_marker}".rstrip()
        cells = [label, _fmt(lv.nominal_dba), _fmt(lv.ocv_dba), _fmt(lv.hats_dba),
                 _fmt(r.delta_ocv), _fmt(r.delta_hats)]
        lines.append("| " + " | ".join(cells) + " |")
    lines += ["", "| abs deviation | n | min | max | mean | std |", "|:--|--:|--:|--:|--:|--:|"]
    for method in METHODS:
        lines.append(_stats_line(f"{method}, all tracks", report.stats(method)))
        if report.exclusions:
            lines.append(_stats_line(f"{method}, without excluded", report.stats(method, False)))
    if report.exclusions:
        lines.append("")
        for track_id, reason in sorted(report.exclusions.items()):
            lines.append(f"- excluded {track_id}: {reason}")
    return "\n".join(lines) + "\n"


def _opt_float(text):
    text = (text or "").strip()
    return float(text) if text else None


def parse_levels_csv(text: str) -> list[TrackLevels]:
    """Parse a levels CSV. Deviation columns, if present, are ignored."""
    reader = csv.DictReader(io.StringIO(text))
    missing = {"track_id", "L_nom"} - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"levels CSV lacks columns {sorted(missing)}")
    return [
        TrackLevels(
            row["track_id"],
            float(row["L_nom"]),
            _opt_float(row.get("L_ocv")),
            _opt_float(row.get("L_hats")),
        )
        for row in reader
    ]


def golden_table_text() -> str:
    return resources.files("hpcal.data").joinpath(GOLDEN_TABLE).read_text(encoding="utf-8")


def golden_rows() -> list[dict]:
    """The published table with its printed deviation columns, as floats."""
    reader = csv.DictReader(io.StringIO(golden_table_text()))
    return [
        {k: (v if k == "track_id" else float(v)) for k, v in row.items()}
        for row in reader
    ]


def golden_levels() -> list[TrackLevels]:
    return parse_levels_csv(golden_table_text())


def levels_from_session(session, ocv_levels=None) -> list[TrackLevels]:
    """Track levels from a calibration session.

    The reproduced level is the mean measured level over runs, skipping
    clipped measurements. ``ocv_levels`` optionally maps track_id to an
    OCV-measured level.
    """
    ocv_levels = ocv_levels or {}
    out = []
    for track_id in session.track_ids:
        runs = session.runs_for(track_id)
        usable = [r.measured_dba for r in runs if not r.clipped]
        hats = statistics.fmean(usable) if usable else None
        ocv = ocv_levels.get(track_id)
        if hats is None and ocv is None:
            continue
        out.append(TrackLevels(track_id, runs[0].target_dba, ocv, hats))
    return out
