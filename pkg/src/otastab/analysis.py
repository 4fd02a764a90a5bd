"""Closed-form stability expressions, exact metrics, and load-range solvers.

The closed forms give the dominant pole, DC gain, the branch doublet time
constant, the non-dominant quadratic, and the phase margin; the exact side
re-derives every metric from the assembled network so the two can be
cross-validated against each other.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from . import engine
from .errors import (InvalidParameter, NoCrossover, NoSolution, NoValidRange,
                     ValidityViolated)
from .macromodel import LoadCondition, OtaMacromodel, check_validity

TWO_PI = 2.0 * math.pi

# bisection policy for load solvers: covers every practical load
CL_BRACKET = (1e-15, 1e-3)
MAX_BISECT = 120


# ---------------------------------------------------------------------------
# closed forms

@dataclass(frozen=True)
class ApproxCoeffs:
    """Transfer-function coefficients of the factored low-order form."""

    w_d: float     # dominant pole, rad/s
    a0: float      # DC gain, dimensionless
    a1: float      # numerator time constant (branch zero), s
    b1: float      # cancelling pole time constant, s
    b2: float      # quadratic linear coefficient, s
    b3: float      # quadratic coefficient, s^2
    b4: float      # fast real pole time constant, s
    w_gbw: float   # unity-gain estimate a0 * w_d = gm1/cm, rad/s


def approx_coeffs(model: OtaMacromodel, load: LoadCondition) -> ApproxCoeffs:
    s1, s2, s3, s4 = model.stages
    c = model.comp
    g234 = s2.gm * s3.gm * s4.gm
    r_all = s1.ro * s2.ro * s3.ro * s4.ro
    w_d = 1.0 / (g234 * r_all * c.cm)
    a0 = s1.gm * g234 * r_all
    a1 = c.ra * c.ca
    b2 = load.cl / (g234 * c.ra * s2.ro)
    b3 = load.cl * s2.co / (g234 * c.ra)
    b4 = s3.co * c.ra
    return ApproxCoeffs(w_d=w_d, a0=a0, a1=a1, b1=a1, b2=b2, b3=b3, b4=b4,
                        w_gbw=s1.gm / c.cm)


@dataclass(frozen=True)
class SecondOrderParams:
    w0: float   # natural frequency of the non-dominant pair, rad/s
    xi: float   # damping factor


def second_order_params(coeffs: ApproxCoeffs) -> SecondOrderParams:
    if coeffs.b2 <= 0 or coeffs.b3 <= 0:
        raise InvalidParameter("coeffs", (coeffs.b2, coeffs.b3), "b2, b3 must be > 0")
    return SecondOrderParams(w0=1.0 / math.sqrt(coeffs.b3),
                             xi=coeffs.b2 / (2.0 * math.sqrt(coeffs.b3)))


@dataclass(frozen=True)
class PhaseMarginApprox:
    full_deg: float      # 180 - atan(w/wd) - atan2 form
    simple_deg: float    # 90-degree dominant-pole limit


def phase_margin_approx(model: OtaMacromodel, load: LoadCondition) -> PhaseMarginApprox:
    """Closed-form phase margin at the w_gbw crossover estimate.

    The non-dominant term uses atan2 so it passes continuously through 90
    degrees where b3*w^2 reaches 1; the printed arctangent form would jump
    there.
    """
    c = approx_coeffs(model, load)
    w = c.w_gbw
    nondom = math.atan2(c.b2 * w, 1.0 - c.b3 * w * w)
    full = 180.0 - math.degrees(math.atan(w / c.w_d)) - math.degrees(nondom)
    simple = 90.0 - math.degrees(nondom)
    return PhaseMarginApprox(full_deg=full, simple_deg=simple)


def approx_transfer_at(coeffs: ApproxCoeffs, freq_hz: float) -> complex:
    """Evaluate the factored approximate transfer function at one frequency."""
    s = 2j * math.pi * freq_hz
    num = coeffs.a0 * (1.0 + coeffs.a1 * s)
    den = ((1.0 + s / coeffs.w_d) * (1.0 + coeffs.b1 * s)
           * (1.0 + coeffs.b2 * s + coeffs.b3 * s * s) * (1.0 + coeffs.b4 * s))
    return num / den


# ---------------------------------------------------------------------------
# exact metrics

def dc_gain(system: engine.DescriptorSystem) -> float:
    x = np.linalg.solve(-system.a, system.b)
    return float(system.c_out @ x)


def unity_crossover_hz(system: engine.DescriptorSystem, scan=None, rel_tol: float = 1e-4) -> float:
    """First unity-magnitude crossing, log-bisection refined to ``rel_tol``."""
    if scan is None:
        scan = engine.default_grid(1e-2, 1e8, 40)
    resp = engine.ac_response(system, scan)
    mags = np.abs(resp.h)
    below = np.flatnonzero(mags < 1.0)
    if below.size == 0 or below[0] == 0:
        raise NoCrossover("magnitude does not cross unity on the scan grid")
    i = below[0]
    lo, hi = float(scan[i - 1]), float(scan[i])
    while hi / lo - 1.0 > rel_tol:
        mid = math.sqrt(lo * hi)
        if abs(engine.transfer_at(system, mid)) > 1.0:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


@dataclass(frozen=True)
class StabilityReport:
    a0_db: float
    gbw_hz: float
    pm_deg: float
    gm_db: float | None       # None when phase never reaches -180 degrees
    peaking_db: float
    source: str               # "exact" | "approx"


def _metrics_from_response(freq, h, crossover_hz, h_at):
    pm = 180.0 + math.degrees(cmath.phase(h_at(crossover_hz)))
    phase = np.degrees(np.unwrap(np.angle(h)))
    gm_db = None
    crossings = np.flatnonzero((phase[:-1] > -180.0) & (phase[1:] <= -180.0))
    if crossings.size:
        i = crossings[0]
        t = (-180.0 - phase[i]) / (phase[i + 1] - phase[i])
        f180 = freq[i] * (freq[i + 1] / freq[i]) ** t
        gm_db = -20.0 * math.log10(abs(h_at(float(f180))))
    hcl = h / (1.0 + h)
    peaking_db = 20.0 * math.log10(np.abs(hcl).max() / abs(hcl[0]))
    return pm, gm_db, peaking_db


def stability_metrics_exact(system: engine.DescriptorSystem, grid=None) -> StabilityReport:
    """Crossover metrics of an open-loop system from the exact sweep.

    GBW is the first unity-magnitude crossing refined to 1e-4 relative,
    PM the phase distance from -180 degrees there, GM the magnitude
    deficit at the first -180 degree phase crossing (when one exists), and
    peaking the unity-feedback closed-loop maximum relative to DC.
    """
    if system.loop_closed:
        raise InvalidParameter("system", "loop_closed", "open-loop system required")
    if grid is None:
        grid = engine.default_grid()
    resp = engine.ac_response(system, grid)
    gbw = unity_crossover_hz(system, scan=grid, rel_tol=1e-4)
    pm, gm_db, peaking_db = _metrics_from_response(
        resp.freq, resp.h, gbw, lambda f: engine.transfer_at(system, f))
    try:
        a0_db = 20.0 * math.log10(abs(dc_gain(system)))
    except np.linalg.LinAlgError:
        a0_db = math.inf   # integrator-like system, no finite DC gain
    return StabilityReport(a0_db=a0_db, gbw_hz=gbw, pm_deg=pm,
                           gm_db=gm_db, peaking_db=peaking_db, source="exact")


def stability_metrics_approx(model: OtaMacromodel, load: LoadCondition,
                             grid=None) -> StabilityReport:
    """Same crossover metrics evaluated on the factored approximate form."""
    coeffs = approx_coeffs(model, load)
    if grid is None:
        grid = engine.default_grid()
    h = np.array([approx_transfer_at(coeffs, f) for f in grid])
    mags = np.abs(h)
    below = np.flatnonzero(mags < 1.0)
    if below.size == 0 or below[0] == 0:
        raise NoCrossover("approximate magnitude does not cross unity on the grid")
    i = below[0]
    lo, hi = float(grid[i - 1]), float(grid[i])
    while hi / lo - 1.0 > 1e-4:
        mid = math.sqrt(lo * hi)
        if abs(approx_transfer_at(coeffs, mid)) > 1.0:
            lo = mid
        else:
            hi = mid
    gbw = math.sqrt(lo * hi)
    pm, gm_db, peaking_db = _metrics_from_response(
        grid, h, gbw, lambda f: approx_transfer_at(coeffs, f))
    return StabilityReport(a0_db=20.0 * math.log10(coeffs.a0), gbw_hz=gbw,
                           pm_deg=pm, gm_db=gm_db, peaking_db=peaking_db,
                           source="approx")


def exact_pair_damping(model: OtaMacromodel, load: LoadCondition) -> tuple[float, float | None]:
    """Damping of the lowest-frequency underdamped pole pair.

    Returns (xi, w0). With no complex pair every mode is real, i.e. fully
    damped; that case reports (inf, None). An unstable pair comes back
    with negative xi.
    """
    system = engine.assemble_descriptor(model, load, loop_closed=False)
    pz = engine.poles_zeros(system)
    upper = pz.poles[pz.poles.imag > np.abs(pz.poles) * 1e-9]
    if upper.size == 0:
        return math.inf, None
    p = upper[np.argmin(np.abs(upper))]
    w0 = abs(p)
    return float(-p.real / w0), float(w0)


# ---------------------------------------------------------------------------
# load-range solvers

def cl_min_approx(model: OtaMacromodel, xi_target: float) -> float:
    """Smallest load keeping the closed-form damping at ``xi_target``.

    Direct inversion of the damping expression: CL scales with the square
    of the damping target.
    """
    if xi_target <= 0:
        raise InvalidParameter("xi_target", xi_target, "must be > 0")
    s2, s3, s4 = model.stages[1], model.stages[2], model.stages[3]
    return ((2.0 * xi_target * s2.ro) ** 2
            * s2.gm * s3.gm * s4.gm * model.comp.ra * s2.co)


def cl_max_approx(model: OtaMacromodel, pm_target_deg: float) -> float:
    """Largest load keeping the closed-form phase margin at the target.

    The closed-form margin decreases strictly with CL (both quadratic
    coefficients scale linearly with the load), so a log bisection on the
    bracket suffices. The bracket starts at the full solver range and is
    never expanded beyond 1 mF.
    """
    if not (0.0 < pm_target_deg < 90.0):
        raise InvalidParameter("pm_target_deg", pm_target_deg, "must be in (0, 90)")

    def pm(cl):
        return phase_margin_approx(model, LoadCondition(cl)).full_deg

    lo, hi = CL_BRACKET
    if pm(hi) > pm_target_deg:
        raise NoSolution(f"phase margin stays above {pm_target_deg} deg up to 1 mF")
    if pm(lo) < pm_target_deg:
        raise NoSolution(f"phase margin below {pm_target_deg} deg even at 1 fF")
    for _ in range(MAX_BISECT):
        mid = math.sqrt(lo * hi)
        if pm(mid) >= pm_target_deg:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1.0 < 1e-9:
            break
    return lo


@dataclass(frozen=True)
class LoadRangeResult:
    cl_min: float
    cl_max: float
    xi_target: float
    pm_target_deg: float
    method: str      # "approx" | "exact"

    @property
    def ratio(self) -> float:
        return self.cl_max / self.cl_min


def load_range_exact(model: OtaMacromodel, xi_target: float = 0.5,
                     pm_target_deg: float = 45.0, rel_tol: float = 0.01) -> LoadRangeResult:
    """Drivable load window from the exact network.

    The light-load edge is the smallest load whose lowest underdamped pole
    pair reaches ``xi_target``; the heavy edge is the largest load keeping
    the exact phase margin at ``pm_target_deg``. Both bisections run over
    log CL in [1 fF, 1 mF] and refine the edge to ``rel_tol`` relative.
    """
    if xi_target <= 0:
        raise InvalidParameter("xi_target", xi_target, "must be > 0")
    if not (0.0 < pm_target_deg < 90.0):
        raise InvalidParameter("pm_target_deg", pm_target_deg, "must be in (0, 90)")

    def damping(cl):
        return exact_pair_damping(model, LoadCondition(cl))[0]

    def pm(cl):
        system = engine.assemble_descriptor(model, LoadCondition(cl))
        try:
            gbw = unity_crossover_hz(system)
        except NoCrossover:
            return -180.0
        return 180.0 + math.degrees(cmath.phase(engine.transfer_at(system, gbw)))

    lo, hi = CL_BRACKET
    # light edge: expand upward in decades until damping reaches the target
    if damping(lo) >= xi_target:
        cl_min = lo
    else:
        probe = lo
        while probe < hi and damping(probe) < xi_target:
            probe *= 10.0
        if probe >= hi and damping(hi) < xi_target:
            raise NoValidRange(f"damping never reaches {xi_target} up to 1 mF")
        a, b = probe / 10.0, min(probe, hi)
        for _ in range(MAX_BISECT):
            mid = math.sqrt(a * b)
            if damping(mid) < xi_target:
                a = mid
            else:
                b = mid
            if b / a - 1.0 < rel_tol:
                break
        cl_min = b

    # heavy edge: phase margin decreases with load
    if pm(hi) >= pm_target_deg:
        cl_max = hi
    elif pm(cl_min) < pm_target_deg:
        raise NoValidRange(f"phase margin below {pm_target_deg} deg already at the light edge")
    else:
        a, b = cl_min, hi
        for _ in range(MAX_BISECT):
            mid = math.sqrt(a * b)
            if pm(mid) >= pm_target_deg:
                a = mid
            else:
                b = mid
            if b / a - 1.0 < rel_tol:
                break
        cl_max = a

    if cl_min >= cl_max:
        raise NoValidRange(f"empty window: cl_min {cl_min} >= cl_max {cl_max}")
    return LoadRangeResult(cl_min=cl_min, cl_max=cl_max, xi_target=xi_target,
                           pm_target_deg=pm_target_deg, method="exact")


def load_range_result_to_dict(result: LoadRangeResult) -> dict:
    return {
        "cl_min": result.cl_min,
        "cl_max": result.cl_max,
        "ratio": result.ratio,
        "criteria": {"xi_target": result.xi_target, "pm_target_deg": result.pm_target_deg},
        "method": result.method,
    }


# ---------------------------------------------------------------------------
# exact-vs-approx cross validation

@dataclass(frozen=True)
class CrossValidation:
    """Relative deviations of the closed forms against the exact network."""

    rel_a0: float
    rel_w_d: float
    rel_w0: float | None     # None when the exact pair is fully damped
    rel_xi: float | None
    d_pm_deg: float
    rel_gbw: float
    exact_pair_found: bool


def cross_validate(model: OtaMacromodel, load: LoadCondition,
                   margin: float = 10.0) -> CrossValidation:
    """Compare closed-form metrics to the exact engine on one model/load.

    Requires the validity assumptions to hold at ``margin``; deviations of
    the low-order form are meaningless outside that regime.
    """
    report = check_validity(model, load, margin=margin)
    if not report.passed:
        failed = [c.name for c in report.checks if not c.passed]
        raise ValidityViolated(f"validity checks failed at margin {margin}: {failed}")

    coeffs = approx_coeffs(model, load)
    pm_a = phase_margin_approx(model, load).full_deg
    pair_a = second_order_params(coeffs)

    system = engine.assemble_descriptor(model, load)
    a0_e = abs(dc_gain(system))
    pz = engine.poles_zeros(system)
    w_d_e = float(np.min(np.abs(pz.poles)))
    gbw_e = unity_crossover_hz(system)
    pm_e = 180.0 + math.degrees(cmath.phase(engine.transfer_at(system, gbw_e)))

    xi_e, w0_e = exact_pair_damping(model, load)
    if w0_e is None:
        rel_w0 = rel_xi = None
        found = False
    else:
        rel_w0 = w0_e / pair_a.w0 - 1.0
        rel_xi = xi_e / pair_a.xi - 1.0
        found = True
    return CrossValidation(
        rel_a0=a0_e / coeffs.a0 - 1.0,
        rel_w_d=w_d_e / coeffs.w_d - 1.0,
        rel_w0=rel_w0,
        rel_xi=rel_xi,
        d_pm_deg=pm_e - pm_a,
        rel_gbw=gbw_e / (coeffs.w_gbw / TWO_PI) - 1.0,
        exact_pair_found=found,
    )
