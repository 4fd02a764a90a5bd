"""Independent oracles the implementation under test must agree with.

Everything here is deliberately written from scratch against the circuit
description, not by calling back into the package's assembly path:
a per-frequency complex admittance solve, resistive DC analysis, textbook
second-order step formulas, and a generator of random models that satisfy
the small-signal validity assumptions with an underdamped load.
"""

from __future__ import annotations

import math

import numpy as np

from otastab import (CompensationParams, LoadCondition, StageParams,
                     assemble_descriptor, build_model, poles_zeros)


def direct_nodal_gain(model, cl, freq_hz, closed=False):
    """Open/closed-loop gain by direct complex nodal analysis at one frequency.

    Builds the 5x5 admittance matrix entry by entry from the component
    values; shares no code with the descriptor assembly.
    """
    s = 2j * math.pi * freq_hz
    st = model.stages
    c = model.comp
    y = np.zeros((5, 5), dtype=complex)
    rhs = np.zeros(5, dtype=complex)
    V1, V2, V3, VA, VO = range(5)
    # self admittances
    y[V1, V1] = 1 / st[0].ro + s * (st[0].co + c.cm)
    y[V2, V2] = 1 / st[1].ro + s * st[1].co
    y[V3, V3] = 1 / st[2].ro + s * st[2].co + 1 / c.ra
    y[VA, VA] = 1 / c.ra + s * c.ca
    y[VO, VO] = 1 / st[3].ro + s * (st[3].co + cl + c.cm)
    # coupling branches
    y[V1, VO] += -s * c.cm
    y[VO, V1] += -s * c.cm
    y[V3, VA] += -1 / c.ra
    y[VA, V3] += -1 / c.ra
    # inverting controlled sources (current -gm*v_ctrl into the node)
    y[V2, V1] += st[1].gm
    y[V3, V2] += st[2].gm
    y[VO, V3] += st[3].gm
    y[VO, V1] += model.gmf
    rhs[V1] = -st[0].gm
    if closed:
        y[V1, VO] += -st[0].gm
    v = np.linalg.solve(y, rhs)
    return complex(v[VO])


def dc_gain_resistive(model):
    """DC gain of the open loop from the resistive network alone."""
    st = model.stages
    v1 = -st[0].gm * st[0].ro
    v2 = -st[1].gm * st[1].ro * v1
    v3 = -st[2].gm * st[2].ro * v2
    return -st[3].ro * (st[3].gm * v3 + model.gmf * v1)


def two_pole_phase_margin_deg(xi):
    """Crossover phase margin of w0^2 / (s * (s + 2*xi*w0))."""
    wc_over_w0 = math.sqrt(math.sqrt(1.0 + 4.0 * xi ** 4) - 2.0 * xi * xi)
    return math.degrees(math.atan(2.0 * xi / wc_over_w0))


def second_order_overshoot(xi):
    return math.exp(-math.pi * xi / math.sqrt(1.0 - xi * xi))


def first_order_settling(pole_rad_s, band=0.01):
    return math.log(1.0 / band) / pole_rad_s


# Separations enforced by the random family so the low-order form is honest:
# the fast branch pole at least 8x above the pair, the branch doublet at
# least 15x below it. Derived once by an oracle run over this generator
# (seed 20260811): max deviations observed were 0.085% on DC gain, 0.088%
# on the dominant pole, 9.4% on the pair frequency, 11.9% on damping and
# 0.47 degrees on phase margin.
B4_PAIR_SEP = 8.0
DOUBLET_PAIR_SEP = 15.0


def random_valid_model(rng) -> tuple:
    """Random macromodel passing every margin-10 validity check, loaded
    where its non-dominant pair is cleanly underdamped and every exact
    pole is in the left half plane.

    Stage gains 20..120 and output resistances 1..20 M are sampled first;
    the branch resistor sits at least a decade below every stage
    resistance. The load comes from inverting the closed-form damping at
    a target in 0.35..0.75 (bumped to 12x the Miller capacitor when
    needed). The third-stage and branch capacitors are then sampled
    inside the windows that keep the fast branch pole and the doublet
    clear of the pair, and the Miller capacitor keeps the crossover a
    decade below the doublet.
    """
    while True:
        gains = np.exp(rng.uniform(np.log(20.0), np.log(120.0), 4))
        ros = np.exp(rng.uniform(np.log(1e6), np.log(2e7), 4))
        gms = gains / ros
        co1, co2, co4 = np.exp(rng.uniform(np.log(1e-15), np.log(2e-14), 3))
        ra = np.exp(rng.uniform(np.log(2e4), np.log(ros.min() / 10.0)))
        g234 = gms[1] * gms[2] * gms[3]
        xi_t = rng.uniform(0.35, 0.75)
        cl = (2.0 * xi_t * ros[1]) ** 2 * g234 * ra * co2
        w0 = math.sqrt(g234 * ra / (cl * co2))
        co3_hi = min(2e-14, 1.0 / (B4_PAIR_SEP * w0 * ra))
        if co3_hi < 1e-15:
            continue
        co3 = np.exp(rng.uniform(np.log(1e-15), np.log(co3_hi)))
        ca_lo = max(12.0 * max(co1, co2, co3, co4), DOUBLET_PAIR_SEP / (w0 * ra))
        if ca_lo > 3e-12:
            continue
        ca = np.exp(rng.uniform(np.log(ca_lo), np.log(3e-12)))
        cm_floor = 12.0 * gms[0] * ra * max(ca, co3)
        cm = max(np.exp(rng.uniform(np.log(2e-12), np.log(3e-11))), cm_floor)
        if cl < 12.0 * cm:
            cl = 12.0 * cm
            if 0.5 * math.sqrt(cl / (g234 * ra * ros[1] ** 2 * co2)) > 0.85:
                continue
            w0 = math.sqrt(g234 * ra / (cl * co2))
            if w0 * ra * ca < DOUBLET_PAIR_SEP or 1.0 / (ra * co3) < B4_PAIR_SEP * w0:
                continue
        w_gbw = gms[0] / cm
        if w0 < 3.0 * w_gbw:
            continue
        b2 = cl / (g234 * ra * ros[1])
        b3 = cl * co2 / (g234 * ra)
        pm = 90.0 - math.degrees(math.atan2(b2 * w_gbw, 1.0 - b3 * w_gbw ** 2))
        if pm < 25.0:
            continue
        gmf = rng.uniform(0.0, gms[3])
        model = build_model(
            [StageParams(gms[0], ros[0], co1), StageParams(gms[1], ros[1], co2),
             StageParams(gms[2], ros[2], co3), StageParams(gms[3], ros[3], co4)],
            CompensationParams(cm=cm, ra=ra, ca=ca), gmf)
        load = LoadCondition(cl)
        pz = poles_zeros(assemble_descriptor(model, load))
        if np.any(pz.poles.real >= 0):
            continue
        return model, load
