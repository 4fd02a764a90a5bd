"""Closed-loop step responses and slew-rate modeling.

Linear steps integrate the descriptor system with an A-stable trapezoidal
scheme (backward-Euler startup, step-doubling error control). The
slew-limited path runs the same integrator with every stage's controlled
source hard-clamped to its maximum output current; the fourth-stage clamp
may be asymmetric to model the class-AB push of the feed-forward branch.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from . import engine
from .errors import IntegratorStall, InvalidParameter
from .macromodel import LoadCondition, OtaMacromodel


@dataclass(frozen=True)
class StageCurrents:
    """Maximum (dis)charge currents available at each stage output."""

    i1: float
    i2: float
    i3: float
    i4: float

    def __post_init__(self):
        for name in ("i1", "i2", "i3", "i4"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidParameter(name, v, "stage current must be > 0")


def calibrate_currents(model: OtaMacromodel, sr_heavy: float = 118.5e3,
                       cl_heavy: float = 1e-9, sr_light: float = 128e3) -> StageCurrents:
    """Size stage currents from the published slew figures.

    The output current is what the heavy-load slew demands (sr * CL); the
    first-stage current is sized so the internal, compensation-limited
    slew equals the light-load figure. Second and third stage currents
    reuse the first-stage value, which leaves their terms far from binding.
    """
    i4 = sr_heavy * cl_heavy
    i1 = sr_light * (model.comp.cm + model.stages[0].co)
    return StageCurrents(i1=i1, i2=i1, i3=i1, i4=i4)


# ---------------------------------------------------------------------------
# slew-rate predictors

@dataclass(frozen=True)
class SlewEstimate:
    sr: float                   # V/s
    limiting_stage: int         # 1..4
    terms: tuple[float, float, float, float]
    alt_third_term_sr: float | None = None   # printed simplified variant
    warnings: tuple[str, ...] = ()


def slew_rate_full(model: OtaMacromodel, currents: StageCurrents,
                   load: LoadCondition) -> SlewEstimate:
    """Slew rate as the slowest of the four per-stage charge limits.

    The third-stage term charges the branch capacitor through the divider
    formed by the branch and the stage output, giving the effective
    capacitance ca * (ro3*co3) / (ra*ca + ro3*co3).
    """
    s1, _s2, s3, _s4 = model.stages
    c = model.comp
    eff3 = c.ca * (s3.ro * s3.co) / (c.ra * c.ca + s3.ro * s3.co)
    terms = (
        currents.i1 / (c.cm + s1.co),
        currents.i2 / model.stages[1].co if model.stages[1].co > 0 else math.inf,
        currents.i3 / eff3 if eff3 > 0 else math.inf,
        currents.i4 / load.cl,
    )
    stage = int(np.argmin(terms)) + 1
    return SlewEstimate(sr=float(min(terms)), limiting_stage=stage, terms=terms)


def slew_rate_simplified(model: OtaMacromodel, currents: StageCurrents,
                         load: LoadCondition) -> SlewEstimate:
    """Simplified slew limits, valid when the branch and Miller caps dominate.

    The third term uses (ro3/ra)*co3, the limit of the full expression
    under ra*ca >> ro3*co3. A printed variant of the simplification uses
    (ro3/ra)*ca instead; it is inconsistent with that limit but is
    computed alongside for comparison. Preconditions that fail attach
    warnings rather than raising.
    """
    s1, s2, s3, _s4 = model.stages
    c = model.comp
    warnings = []
    if c.ra * c.ca < 10.0 * s3.ro * s3.co:
        warnings.append("ra*ca is not >= 10x ro3*co3; simplified form degraded")
    if c.cm < 10.0 * s1.co:
        warnings.append("cm is not >= 10x co1; simplified form degraded")
    den3 = (s3.ro / c.ra) * s3.co
    terms = (
        currents.i1 / c.cm,
        currents.i2 / s2.co if s2.co > 0 else math.inf,
        currents.i3 / den3 if den3 > 0 else math.inf,
        currents.i4 / load.cl,
    )
    stage = int(np.argmin(terms)) + 1
    alt_third = currents.i3 / ((s3.ro / c.ra) * c.ca)
    alt_terms = terms[:2] + (alt_third,) + terms[3:]
    return SlewEstimate(sr=float(min(terms)), limiting_stage=stage, terms=terms,
                        alt_third_term_sr=float(min(alt_terms)),
                        warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# step responses

@dataclass(frozen=True)
class StepResponse:
    t: np.ndarray
    v: np.ndarray
    final_value: float
    metrics: dict

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if t.shape != v.shape or t.ndim != 1 or np.any(np.diff(t) <= 0):
            raise InvalidParameter("t", None, "time grid must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)


def compute_step_metrics(t: np.ndarray, v: np.ndarray, final_value: float) -> dict:
    """Settling, overshoot, and ramp-rate metrics from stored samples.

    The 1 percent band is relative to the final value; settling time is
    the last departure from the band (interpolated to the band edge).
    Overshoot is the excursion beyond the final value in the step
    direction, as a fraction of the step size.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    step = final_value - v[0]
    band = 0.01 * abs(final_value) if final_value != 0 else 0.01 * abs(step)
    err = np.abs(v - final_value)
    outside = np.flatnonzero(err > band)
    if outside.size == 0:
        settle = 0.0
    elif outside[-1] == len(t) - 1:
        settle = float(t[-1])
    else:
        i = outside[-1]
        frac = (err[i] - band) / (err[i] - err[i + 1])
        settle = float(t[i] + frac * (t[i + 1] - t[i]))
    direction = 1.0 if step >= 0 else -1.0
    peak = np.max(direction * (v - final_value))
    overshoot = float(max(peak, 0.0) / abs(step)) if step != 0 else 0.0
    dv = np.diff(v) / np.diff(t)
    sr_rising = float(dv.max()) if dv.size else 0.0
    sr_falling = float(-dv.min()) if dv.size else 0.0
    return {
        "settling_time_1pct": settle,
        "overshoot_fraction": overshoot,
        "sr_rising": sr_rising,
        "sr_falling": sr_falling,
    }


def mid_ramp_slope(t: np.ndarray, v: np.ndarray, final_value: float,
                   lo: float = 0.3, hi: float = 0.7) -> float:
    """Average slope while the output transits the 30..70 percent window."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    step = final_value - v[0]
    frac = (v - v[0]) / step
    inside = np.flatnonzero((frac >= lo) & (frac <= hi))
    if inside.size < 2:
        raise InvalidParameter("window", (lo, hi), "too few samples in the ramp window")
    i0, i1 = inside[0], inside[-1]
    return float((v[i1] - v[i0]) / (t[i1] - t[i0]))


def _settle_horizon(system: engine.DescriptorSystem) -> float:
    pz = engine.poles_zeros(system)
    stable = pz.poles[pz.poles.real < 0]
    if stable.size == 0:
        raise InvalidParameter("system", None, "no stable poles; cannot pick a horizon")
    slowest = np.min(-stable.real)
    return 25.0 / float(slowest)


def _integrate(system: engine.DescriptorSystem, rhs_current, jac_extra, u: float,
               t_end: float, rtol: float, atol: float):
    """Trapezoidal integration with step doubling.

    ``rhs_current`` maps the state to the nonlinear injected currents
    (clamped sources); ``jac_extra`` returns their Jacobian. The linear
    path passes None for both. First step is backward Euler so an
    inconsistent algebraic start (singular E at t=0+) is damped.
    """
    e, a, b = system.e, system.a, system.b
    n = system.order
    x = np.zeros(n)

    def f(xv):
        base = b * u
        if rhs_current is None:
            return a @ xv + base
        return a @ xv + base + rhs_current(xv)

    def step_implicit(x0, h, theta):
        # theta = 1: backward Euler; theta = 0.5: trapezoid
        rhs_const = e @ x0 + (1.0 - theta) * h * f(x0)
        xk = x0.copy()
        for _ in range(30):
            jac = e - theta * h * (a + (jac_extra(xk) if jac_extra is not None else 0.0))
            res = e @ xk - theta * h * f(xk) - rhs_const
            try:
                dx = np.linalg.solve(jac, res)
            except np.linalg.LinAlgError:
                return None
            xk = xk - dx
            scale = atol + rtol * np.abs(xk).max()
            if np.abs(dx).max() < 1e-3 * scale:
                return xk
        return None

    ts = [0.0]
    xs = [x.copy()]
    t = 0.0
    h = t_end * 1e-6
    h_min = t_end * 1e-13
    first = True
    while t < t_end:
        h = min(h, t_end - t)
        if h < h_min:
            raise IntegratorStall(f"step size underflow at t = {t}")
        theta = 1.0 if first else 0.5
        full = step_implicit(x, h, theta)
        half1 = step_implicit(x, 0.5 * h, theta)
        half2 = step_implicit(half1, 0.5 * h, theta) if half1 is not None else None
        if full is None or half2 is None:
            h *= 0.25
            continue
        err = np.abs(full - half2).max()
        scale = atol + rtol * max(np.abs(half2).max(), np.abs(x).max())
        if err > scale and h > h_min:
            h *= max(0.2, 0.8 * (scale / err) ** 0.5)
            continue
        x = half2
        t += h
        ts.append(t)
        xs.append(x.copy())
        first = False
        if err < 0.25 * scale:
            h *= min(2.0, 0.9 * (scale / max(err, 1e-300)) ** 0.5)
    return np.array(ts), np.array(xs)


def linear_step(system_closed: engine.DescriptorSystem, amplitude: float,
                t_end: float | None = None, rtol: float = 1e-7,
                atol: float = 1e-12) -> StepResponse:
    """Small-signal step response of a closed-loop system from rest.

    The input steps from zero to ``amplitude`` at t = 0 with the state at
    zero; the recorded final value is the closed-loop DC solution.
    """
    if not system_closed.loop_closed:
        raise InvalidParameter("system_closed", False, "loop_closed system required")
    if amplitude == 0:
        raise InvalidParameter("amplitude", 0.0, "step amplitude must be nonzero")
    if t_end is None:
        t_end = _settle_horizon(system_closed)
    ts, xs = _integrate(system_closed, None, None, amplitude, t_end, rtol,
                        atol * max(1.0, abs(amplitude)))
    v = xs @ system_closed.c_out
    final = float(system_closed.c_out @ np.linalg.solve(-system_closed.a,
                                                        system_closed.b * amplitude))
    return StepResponse(t=ts, v=v, final_value=final,
                        metrics=compute_step_metrics(ts, v, final))


def slew_limited_step(model: OtaMacromodel, currents: StageCurrents,
                      load: LoadCondition, amplitude: float = 0.3,
                      t_end: float | None = None, i4_source: float | None = None,
                      i4_sink: float | None = None, rtol: float = 1e-7,
                      atol: float = 1e-12) -> StepResponse:
    """Unity-gain step with per-stage output-current clamps.

    Each controlled source saturates hard at its stage current. The
    fourth-stage injection (cascade plus feed-forward) clamps at
    ``i4_source`` upward and ``i4_sink`` downward, both defaulting to
    currents.i4; an excess sourcing limit models the class-AB branch.
    The passive network stays linear, so with clamps never engaged the
    trajectory reduces to the linear step.
    """
    system = engine.assemble_descriptor(model, load, loop_closed=True)
    st = model.stages
    gm1, gm2, gm3, gm4 = (s.gm for s in st)
    gmf = model.gmf
    i4_up = currents.i4 if i4_source is None else float(i4_source)
    i4_dn = currents.i4 if i4_sink is None else float(i4_sink)
    if i4_up <= 0 or i4_dn <= 0:
        raise InvalidParameter("i4", (i4_up, i4_dn), "clamp limits must be > 0")
    v1, v2, v3, _va, vout = range(5)

    # linear part of the network: strip the stamps of the clamped sources
    a_lin = system.a.copy()
    a_lin[v2, v1] += gm2
    a_lin[v3, v2] += gm3
    a_lin[vout, v3] += gm4
    a_lin[vout, v1] += gmf
    a_lin[v1, vout] -= gm1     # closed-loop input stamp is part of stage 1
    b_lin = np.zeros(5)
    lin = engine.DescriptorSystem(e=system.e, a=a_lin, b=b_lin, c_out=system.c_out,
                                  labels=system.labels, loop_closed=True)

    limits = (currents.i1, currents.i2, currents.i3)

    def currents_of(x, u):
        drives = (gm1 * (u - x[vout]), gm2 * x[v1], gm3 * x[v2],
                  gm4 * x[v3] + gmf * x[v1])
        out = np.zeros(5)
        out[v1] = -_clip(drives[0], limits[0], limits[0])
        out[v2] = -_clip(drives[1], limits[1], limits[1])
        out[v3] = -_clip(drives[2], limits[2], limits[2])
        # injected current is minus the drive: sourcing (+ injection) caps at i4_up
        out[vout] = _clip(-drives[3], i4_dn, i4_up)
        return out

    def jac_of(x, u):
        j = np.zeros((5, 5))
        if abs(gm1 * (u - x[vout])) < limits[0]:
            j[v1, vout] = gm1
        if abs(gm2 * x[v1]) < limits[1]:
            j[v2, v1] = -gm2
        if abs(gm3 * x[v2]) < limits[2]:
            j[v3, v2] = -gm3
        d4 = -(gm4 * x[v3] + gmf * x[v1])
        if -i4_dn < d4 < i4_up:
            j[vout, v3] = -gm4
            j[vout, v1] = -gmf
        return j

    if t_end is None:
        t_end = max(_settle_horizon(system),
                    4.0 * abs(amplitude) / slew_rate_full(model, currents, load).sr)
    u = float(amplitude)
    ts, xs = _integrate(lin, lambda x: currents_of(x, u), lambda x: jac_of(x, u),
                        0.0, t_end, rtol, atol * max(1.0, abs(amplitude)))
    v = xs @ system.c_out
    final = float(system.c_out @ np.linalg.solve(-system.a, system.b * amplitude))
    return StepResponse(t=ts, v=v, final_value=final,
                        metrics=compute_step_metrics(ts, v, final))


def _clip(value, lim_dn, lim_up):
    return min(max(value, -lim_dn), lim_up)


# ---------------------------------------------------------------------------
# exports

def write_step_csv(resp: StepResponse, path) -> None:
    """Step export: t_s, v_out_v rows, LF endings."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t_s", "v_out_v"])
        for t, v in zip(resp.t, resp.v):
            writer.writerow([repr(float(t)), repr(float(v))])


def read_step_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t_s", "v_out_v"]:
        raise InvalidParameter("header", rows[0] if rows else None, "bad step CSV header")
    data = np.array([[float(x) for x in row] for row in rows[1:]], dtype=float)
    return data[:, 0], data[:, 1]


def write_step_metrics_json(resp: StepResponse, path) -> None:
    doc = dict(resp.metrics)
    doc["final_value"] = resp.final_value
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
