"""Figure-of-merit computation and comparison against the published survey.

The shipped dataset mirrors the comparison table's raw columns; FOMs are
recomputed from raw inputs on load so a transcription error in a stored
figure is caught rather than propagated.
"""

from __future__ import annotations

import csv
import importlib.resources
import json
import math
from dataclasses import dataclass, field

from .errors import InconsistentEntry, InvalidParameter

FOM_RECOMPUTE_TOL = 0.02   # stored vs recomputed, fraction


@dataclass(frozen=True)
class FomInputs:
    """Raw inputs in the survey's units."""

    gbw_mhz: float
    sr_v_per_us: float | None
    cl_max_pf: float
    power_uw: float

    def __post_init__(self):
        for name in ("gbw_mhz", "cl_max_pf", "power_uw"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidParameter(name, v, "must be > 0")
        if self.sr_v_per_us is not None and self.sr_v_per_us <= 0:
            raise InvalidParameter("sr_v_per_us", self.sr_v_per_us, "must be > 0")


def fom_small(inputs: FomInputs) -> float:
    """Small-signal power efficiency, MHz * pF / uW."""
    return inputs.gbw_mhz * inputs.cl_max_pf / inputs.power_uw


def fom_large(inputs: FomInputs) -> float:
    """Large-signal power efficiency, (V/us) * pF / uW."""
    if inputs.sr_v_per_us is None:
        raise InvalidParameter("sr_v_per_us", None, "slew rate missing")
    return inputs.sr_v_per_us * inputs.cl_max_pf / inputs.power_uw


@dataclass(frozen=True)
class BenchEntry:
    label: str
    technology_nm: float
    n_stages: int
    vdd_v: float
    inputs: FomInputs
    fom_s: float | None = None        # stored figure, None if unpublished
    fom_l: float | None = None
    load_ratio: float | None = None
    gain_db: float | None = None
    extras: dict = field(default_factory=dict)

    def recomputed_fom_s(self) -> float:
        return fom_small(self.inputs)

    def recomputed_fom_l(self) -> float | None:
        return None if self.inputs.sr_v_per_us is None else fom_large(self.inputs)


def entry_from_dict(doc: dict) -> BenchEntry:
    inputs = FomInputs(gbw_mhz=doc["gbw_mhz"], sr_v_per_us=doc.get("sr_v_per_us"),
                       cl_max_pf=doc["cl_max_pf"], power_uw=doc["power_uw"])
    return BenchEntry(label=doc["label"], technology_nm=doc["technology_nm"],
                      n_stages=doc["n_stages"], vdd_v=doc["vdd_v"], inputs=inputs,
                      fom_s=doc.get("fom_s"), fom_l=doc.get("fom_l"),
                      load_ratio=doc.get("load_ratio"), gain_db=doc.get("gain_db"),
                      extras=doc.get("extras", {}))


def load_dataset(path=None) -> list[BenchEntry]:
    """Load the shipped survey table (or a user file of the same schema)."""
    if path is None:
        source = importlib.resources.files("otastab").joinpath("data/benchmark.json")
        doc = json.loads(source.read_text(encoding="utf-8"))
    else:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    return [entry_from_dict(row) for row in doc["entries"]]


def verify_entry(entry: BenchEntry) -> None:
    """Check stored FOMs against values recomputed from raw inputs."""
    pairs = [("fom_s", entry.fom_s, entry.recomputed_fom_s())]
    if entry.fom_l is not None:
        pairs.append(("fom_l", entry.fom_l, entry.recomputed_fom_l()))
    for name, stored, recomputed in pairs:
        if stored is None:
            continue
        if abs(recomputed / stored - 1.0) > FOM_RECOMPUTE_TOL:
            raise InconsistentEntry(
                f"{entry.label}: stored {name} = {stored} vs recomputed {recomputed:.4g}")


@dataclass(frozen=True)
class BenchmarkReport:
    entries: tuple[BenchEntry, ...]          # candidate first, then dataset
    ranking_fom_s: tuple[str, ...]           # labels, best first
    ranking_fom_l: tuple[str, ...]
    best_fom_s: str
    best_fom_l: str
    candidate_label: str | None
    improvement_fom_l_vs_4stage: float | None
    improvement_fom_s_vs_4stage: float | None
    improvement_fom_s_vs_sub1v: float | None
    improvement_fom_l_vs_sub1v: float | None


def benchmark_report(dataset, candidate: BenchEntry | None = None) -> BenchmarkReport:
    """Rank all rows by recomputed FOMs and score the candidate.

    Improvement ratios compare the candidate against the best prior
    four-stage row and, separately, the best sub-1 V multi-stage
    (two or more stages) row. Rows whose stored FOMs disagree with their
    raw inputs beyond 2 percent raise InconsistentEntry.
    """
    rows = list(dataset)
    for entry in rows:
        verify_entry(entry)
    if candidate is not None:
        verify_entry(candidate)
        rows = [candidate] + [r for r in rows if r.label != candidate.label]

    def fs(e):
        return e.recomputed_fom_s()

    def fl(e):
        return e.recomputed_fom_l()

    ranked_s = sorted(rows, key=fs, reverse=True)
    with_l = [r for r in rows if fl(r) is not None]
    ranked_l = sorted(with_l, key=fl, reverse=True)

    imp = dict.fromkeys(("l4", "s4", "s_sub1v", "l_sub1v"))
    if candidate is not None:
        others = [r for r in rows if r.label != candidate.label]
        four_stage = [r for r in others if r.n_stages == 4]
        sub1v = [r for r in others if r.vdd_v < 1.0 and r.n_stages >= 2]
        if four_stage:
            best = max(fs(r) for r in four_stage)
            imp["s4"] = fs(candidate) / best
            l_vals = [fl(r) for r in four_stage if fl(r) is not None]
            if l_vals and fl(candidate) is not None:
                imp["l4"] = fl(candidate) / max(l_vals)
        if sub1v:
            imp["s_sub1v"] = fs(candidate) / max(fs(r) for r in sub1v)
            l_vals = [fl(r) for r in sub1v if fl(r) is not None]
            if l_vals and fl(candidate) is not None:
                imp["l_sub1v"] = fl(candidate) / max(l_vals)

    return BenchmarkReport(
        entries=tuple(rows),
        ranking_fom_s=tuple(r.label for r in ranked_s),
        ranking_fom_l=tuple(r.label for r in ranked_l),
        best_fom_s=ranked_s[0].label if ranked_s else "",
        best_fom_l=ranked_l[0].label if ranked_l else "",
        candidate_label=candidate.label if candidate is not None else None,
        improvement_fom_l_vs_4stage=imp["l4"],
        improvement_fom_s_vs_4stage=imp["s4"],
        improvement_fom_s_vs_sub1v=imp["s_sub1v"],
        improvement_fom_l_vs_sub1v=imp["l_sub1v"],
    )


# ---------------------------------------------------------------------------
# report rendering

_COLUMNS = ("label", "technology_nm", "n_stages", "vdd_v", "power_uw", "gain_db",
            "cl_max_pf", "load_ratio", "gbw_mhz", "sr_v_per_us", "fom_s", "fom_l")


def _row_values(entry: BenchEntry):
    fl = entry.recomputed_fom_l()
    return (entry.label, entry.technology_nm, entry.n_stages, entry.vdd_v,
            entry.inputs.power_uw, entry.gain_db, entry.inputs.cl_max_pf,
            entry.load_ratio, entry.inputs.gbw_mhz, entry.inputs.sr_v_per_us,
            entry.recomputed_fom_s(), fl)


def write_comparison_csv(report: BenchmarkReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_COLUMNS)
        for entry in report.entries:
            writer.writerow(["" if v is None else v for v in _row_values(entry)])


def format_comparison_table(report: BenchmarkReport) -> str:
    """Aligned text table, best FOMs flagged with an asterisk."""
    rows = [list(_COLUMNS)]
    for entry in report.entries:
        vals = []
        for name, v in zip(_COLUMNS, _row_values(entry)):
            if v is None:
                vals.append("n/a")
            elif isinstance(v, float):
                vals.append(f"{v:.4g}")
            else:
                vals.append(str(v))
        if entry.label == report.best_fom_s:
            vals[_COLUMNS.index("fom_s")] += "*"
        if entry.label == report.best_fom_l:
            vals[_COLUMNS.index("fom_l")] += "*"
        rows.append(vals)
    widths = [max(len(r[i]) for r in rows) for i in range(len(_COLUMNS))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    out = "\n".join(lines)
    notes = []
    if report.improvement_fom_l_vs_4stage is not None:
        notes.append(f"FOM_L vs best prior 4-stage: {report.improvement_fom_l_vs_4stage:.2f}x")
    if report.improvement_fom_s_vs_4stage is not None:
        notes.append(f"FOM_S vs best prior 4-stage: {report.improvement_fom_s_vs_4stage:.2f}x")
    if report.improvement_fom_s_vs_sub1v is not None:
        notes.append(f"FOM_S vs best sub-1V multi-stage: {report.improvement_fom_s_vs_sub1v:.2f}x")
    if report.improvement_fom_l_vs_sub1v is not None:
        notes.append(f"FOM_L vs best sub-1V multi-stage: {report.improvement_fom_l_vs_sub1v:.2f}x")
    if notes:
        out += "\n\n" + "\n".join(notes)
    return out + "\n"


def report_to_dict(report: BenchmarkReport) -> dict:
    return {
        "candidate": report.candidate_label,
        "best_fom_s": report.best_fom_s,
        "best_fom_l": report.best_fom_l,
        "ranking_fom_s": list(report.ranking_fom_s),
        "ranking_fom_l": list(report.ranking_fom_l),
        "improvements": {
            "fom_l_vs_4stage": report.improvement_fom_l_vs_4stage,
            "fom_s_vs_4stage": report.improvement_fom_s_vs_4stage,
            "fom_s_vs_sub1v": report.improvement_fom_s_vs_sub1v,
            "fom_l_vs_sub1v": report.improvement_fom_l_vs_sub1v,
        },
        "entries": [
            {
                "label": e.label,
                "fom_s": e.recomputed_fom_s(),
                "fom_l": e.recomputed_fom_l(),
            }
            for e in report.entries
        ],
    }
