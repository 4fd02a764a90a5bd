"""Four-stage OTA macromodel: value types, validity checks, calibration.

The amplifier is abstracted to four transconductance stages (gm, Ro, Co),
a single Miller capacitor from the first-stage output to the output node,
a series RC branch on the third-stage output, and an optional feed-forward
transconductance driving the output from the first-stage output.

Sign convention: every stage inverts, so the cascaded DC gain from the
differential input to the output is positive and the Miller capacitor
closes a negative-feedback path. The feed-forward source inverts as well,
adding to (never fighting) the fourth-stage current.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

from .errors import CalibrationInfeasible, InvalidParameter, ParseError
from .units import parse_value

TWO_PI = 2.0 * math.pi

#: Stage and feed-forward polarities of the supported topology.
SIGN_CONVENTION = ("inv", "inv", "inv", "inv", "inv-ff")


@dataclass(frozen=True)
class StageParams:
    """Small-signal equivalent of one gain stage."""

    gm: float   # transconductance, S
    ro: float   # output resistance, ohm
    co: float   # lumped output capacitance, F


@dataclass(frozen=True)
class CompensationParams:
    """Miller capacitor plus the series RC branch on the third stage."""

    cm: float   # Miller capacitance, F
    ra: float   # branch resistance, ohm
    ca: float   # branch capacitance, F


@dataclass(frozen=True)
class LoadCondition:
    """Capacitive load at the output node."""

    cl: float   # F

    def __post_init__(self):
        if not (math.isfinite(self.cl) and self.cl > 0):
            raise InvalidParameter("cl", self.cl, "load capacitance must be > 0")


@dataclass(frozen=True)
class OtaMacromodel:
    """Validated parameter set of the full macromodel."""

    stages: tuple[StageParams, StageParams, StageParams, StageParams]
    comp: CompensationParams
    gmf: float
    polarity: tuple[str, ...] = SIGN_CONVENTION
    power_dq: float | None = None   # quiescent power, W (metadata)
    vdd: float | None = None        # supply, V (metadata)

    def replace(self, **kw) -> "OtaMacromodel":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class CalibrationTargets:
    """Published figures the reference reconstruction must reproduce."""

    gbw_hz: float
    a0_db: float
    cm: float
    ra: float
    ca: float
    power_dq: float
    vdd: float


def paper_targets() -> CalibrationTargets:
    """Measured targets of the fabricated design."""
    return CalibrationTargets(gbw_hz=192e3, a0_db=119.3, cm=10.5e-12,
                              ra=200e3, ca=1.2e-12, power_dq=1.65e-6, vdd=0.6)


def _require(name, value, *, positive=True, allow_zero=False):
    if not isinstance(value, (int, float)) or not math.isfinite(value):
        raise InvalidParameter(name, value, "must be a finite number")
    if positive and value <= 0 and not (allow_zero and value == 0):
        raise InvalidParameter(name, value,
                               "must be >= 0" if allow_zero else "must be > 0")
    return float(value)


def build_model(stage_params, comp_params, gmf, power_dq=None, vdd=None) -> OtaMacromodel:
    """Validate raw parameters and assemble a macromodel.

    ``stage_params`` is a sequence of exactly four (gm, ro, co) triples or
    StageParams. Rejects non-finite and non-positive values; stage co and
    gmf may be zero.
    """
    stages = []
    if len(stage_params) != 4:
        raise InvalidParameter("stages", len(stage_params), "exactly 4 stages required")
    for i, sp in enumerate(stage_params, start=1):
        if not isinstance(sp, StageParams):
            sp = StageParams(*sp)
        stages.append(StageParams(
            gm=_require(f"gm{i}", sp.gm),
            ro=_require(f"ro{i}", sp.ro),
            co=_require(f"co{i}", sp.co, allow_zero=True),
        ))
    if not isinstance(comp_params, CompensationParams):
        comp_params = CompensationParams(*comp_params)
    comp = CompensationParams(
        cm=_require("cm", comp_params.cm),
        ra=_require("ra", comp_params.ra),
        ca=_require("ca", comp_params.ca),
    )
    gmf = _require("gmf", gmf, allow_zero=True)
    if power_dq is not None:
        power_dq = _require("power_dq", power_dq)
    if vdd is not None:
        vdd = _require("vdd", vdd)
    return OtaMacromodel(stages=tuple(stages), comp=comp, gmf=gmf,
                         power_dq=power_dq, vdd=vdd)


# ---------------------------------------------------------------------------
# validity report

@dataclass(frozen=True)
class ValidityCheck:
    name: str
    ratio: float
    threshold: float
    passed: bool


@dataclass(frozen=True)
class ValidityReport:
    checks: tuple[ValidityCheck, ...]
    margin: float
    passed: bool

    def ratio(self, name: str) -> float:
        for c in self.checks:
            if c.name == name:
                return c.ratio
        raise KeyError(name)


def check_validity(model: OtaMacromodel, load: LoadCondition, margin: float = 10.0) -> ValidityReport:
    """Check the small-signal dominance assumptions behind the closed forms.

    Each check reports the achieved ratio and a pass flag. Gain and
    capacitor dominance ratios (gm*ro, CL/Cm, Ca/Co) must reach ``margin``.
    The resistor ratio Ro/Ra and the two frequency separations use
    sqrt(margin), i.e. half a decade when margin is one decade: the
    published component values sit near 3.5x on those two ratios while the
    design demonstrably works, so a full-decade gate there would reject
    the reference design itself.
    """
    if margin < 1:
        raise InvalidParameter("margin", margin, "must be >= 1")
    half = math.sqrt(margin)
    c = model.comp
    w_gbw = model.stages[0].gm / c.cm
    checks = []

    def add(name, ratio, threshold):
        checks.append(ValidityCheck(name, float(ratio), float(threshold),
                                    bool(ratio >= threshold)))

    for i, st in enumerate(model.stages, start=1):
        add(f"gm{i}_ro{i}", st.gm * st.ro, margin)
    add("cl_over_cm", load.cl / c.cm, margin)
    for i, st in enumerate(model.stages, start=1):
        add(f"ro{i}_over_ra", st.ro / c.ra, half)
    for i, st in enumerate(model.stages, start=1):
        if st.co > 0:
            add(f"ca_over_co{i}", c.ca / st.co, margin)
        else:
            add(f"ca_over_co{i}", math.inf, margin)
    # separation of the fast real pole and of the branch doublet from crossover
    b4 = model.stages[2].co * c.ra
    add("b4_sep", math.inf if b4 == 0 else 1.0 / (b4 * w_gbw), half)
    add("doublet_sep", 1.0 / (c.ra * c.ca * w_gbw), half)
    return ValidityReport(checks=tuple(checks), margin=float(margin),
                          passed=all(ch.passed for ch in checks))


# ---------------------------------------------------------------------------
# calibration

#: Reconstruction defaults for the values the measurements do not pin down.
#: Chosen (by numerical design-space search) so the calibrated model meets
#: every published figure at once: exact DC gain and GBW, pole/zero
#: cancellation of the branch doublet, damping >= 0.5 at 10 pF, 45-degree
#: phase margin beyond 1 nF, and strictly left-half-plane poles over the
#: whole 10 fF..1 nF load range. All overridable by keyword.
CAL_DEFAULTS = dict(
    ro2=0.8e6, ro3=680e3, ro4=680e3,
    co1=110e-15, co2=0.03e-15, co3=4.5e-15, co4=110e-15,
    gmf_over_gm4=1.0,
)


def calibrate_reference(targets: CalibrationTargets, **overrides) -> OtaMacromodel:
    """Build a reference macromodel reproducing the published figures.

    Per-stage gains are set equal at the fourth root of the DC-gain target.
    gm1 starts from the first-order estimate 2*pi*GBW*Cm and is then
    iterated until the exact unity-gain crossover under a 1 nF load equals
    the GBW target (the non-dominant dynamics shift the crossover by a few
    percent, so the first-order value alone cannot close the loop).

    Raises CalibrationInfeasible if the result fails the validity check at
    margin 10 under 1 nF, or if the crossover iteration does not converge.
    """
    from . import analysis, engine  # deferred: engine depends on this module

    d = dict(CAL_DEFAULTS)
    unknown = set(overrides) - set(d)
    if unknown:
        raise InvalidParameter("overrides", sorted(unknown), "unknown calibration override")
    d.update(overrides)

    gain = (10.0 ** (targets.a0_db / 20.0)) ** 0.25
    cal_load = LoadCondition(1e-9)

    def build_with(gm1):
        stages = (
            StageParams(gm=gm1, ro=gain / gm1, co=d["co1"]),
            StageParams(gm=gain / d["ro2"], ro=d["ro2"], co=d["co2"]),
            StageParams(gm=gain / d["ro3"], ro=d["ro3"], co=d["co3"]),
            StageParams(gm=gain / d["ro4"], ro=d["ro4"], co=d["co4"]),
        )
        comp = CompensationParams(cm=targets.cm, ra=targets.ra, ca=targets.ca)
        gmf = d["gmf_over_gm4"] * stages[3].gm
        return build_model(stages, comp, gmf, power_dq=targets.power_dq, vdd=targets.vdd)

    gm1 = TWO_PI * targets.gbw_hz * targets.cm
    model = build_with(gm1)
    converged = False
    for _ in range(40):
        sys_open = engine.assemble_descriptor(model, cal_load, loop_closed=False)
        try:
            gbw = analysis.unity_crossover_hz(sys_open, rel_tol=1e-15)
        except Exception as exc:
            raise CalibrationInfeasible(f"no unity-gain crossover during calibration: {exc}")
        if abs(gbw / targets.gbw_hz - 1.0) < 1e-13:
            converged = True
            break
        gm1 *= targets.gbw_hz / gbw
        model = build_with(gm1)
    if not converged:
        raise CalibrationInfeasible("GBW closure iteration did not converge")

    report = check_validity(model, cal_load, margin=10.0)
    if not report.passed:
        failed = [c.name for c in report.checks if not c.passed]
        raise CalibrationInfeasible(f"calibrated defaults violate validity: {failed}")
    return model


def reference_model() -> OtaMacromodel:
    """Calibrated reconstruction of the fabricated design."""
    return calibrate_reference(paper_targets())


# ---------------------------------------------------------------------------
# model file I/O

_STAGE_KEYS = {"gm", "ro", "co"}
_COMP_KEYS = {"cm", "ra", "ca"}
_TOP_KEYS = {"stages", "comp", "gmf", "power_dq", "vdd"}


def model_from_dict(doc: dict) -> OtaMacromodel:
    """Build a model from the JSON-schema dictionary (strict keys)."""
    if not isinstance(doc, dict):
        raise ParseError("model document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ParseError(f"unknown keys {sorted(unknown)}; allowed: {sorted(_TOP_KEYS)}")
    for key in ("stages", "comp", "gmf"):
        if key not in doc:
            raise ParseError(f"missing required key {key!r}")
    raw_stages = doc["stages"]
    if not isinstance(raw_stages, list) or len(raw_stages) != 4:
        raise ParseError("exactly 4 stages required", context="stages")
    stages = []
    for i, entry in enumerate(raw_stages, start=1):
        ctx = f"stages[{i}]"
        if not isinstance(entry, dict) or set(entry) != _STAGE_KEYS:
            raise ParseError(f"stage object must have keys {sorted(_STAGE_KEYS)}", ctx)
        stages.append(StageParams(gm=parse_value(entry["gm"], f"{ctx}.gm"),
                                  ro=parse_value(entry["ro"], f"{ctx}.ro"),
                                  co=parse_value(entry["co"], f"{ctx}.co")))
    raw_comp = doc["comp"]
    if not isinstance(raw_comp, dict) or set(raw_comp) != _COMP_KEYS:
        raise ParseError(f"comp object must have keys {sorted(_COMP_KEYS)}", "comp")
    comp = CompensationParams(cm=parse_value(raw_comp["cm"], "comp.cm"),
                              ra=parse_value(raw_comp["ra"], "comp.ra"),
                              ca=parse_value(raw_comp["ca"], "comp.ca"))
    gmf = parse_value(doc["gmf"], "gmf")
    power_dq = parse_value(doc["power_dq"], "power_dq") if "power_dq" in doc else None
    vdd = parse_value(doc["vdd"], "vdd") if "vdd" in doc else None
    try:
        return build_model(stages, comp, gmf, power_dq=power_dq, vdd=vdd)
    except InvalidParameter as exc:
        raise ParseError(str(exc)) from exc


def model_to_dict(model: OtaMacromodel) -> dict:
    doc = {
        "stages": [{"gm": st.gm, "ro": st.ro, "co": st.co} for st in model.stages],
        "comp": {"cm": model.comp.cm, "ra": model.comp.ra, "ca": model.comp.ca},
        "gmf": model.gmf,
    }
    if model.power_dq is not None:
        doc["power_dq"] = model.power_dq
    if model.vdd is not None:
        doc["vdd"] = model.vdd
    return doc


def parse_model_file(path) -> OtaMacromodel:
    """Load and validate a model JSON file. Unknown keys are rejected."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read model file: {exc}", context=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", context=f"{path}:{exc.lineno}") from exc
    return model_from_dict(doc)


def write_model_file(model: OtaMacromodel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")
