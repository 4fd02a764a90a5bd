import math

import numpy as np
import pytest

import otastab as o
from otastab import (CompensationParams, DescriptorSystem, LoadCondition,
                     OtaMacromodel, PoleZeroSet, SingularAtFrequency,
                     StageParams)
from oracles import dc_gain_resistive, direct_nodal_gain

CL_1N = LoadCondition(1e-9)
CL_10P = LoadCondition(10e-12)


def test_stamp_structure(reference):
    sys5 = o.assemble_descriptor(reference, CL_1N)
    st = reference.stages
    c = reference.comp
    e = sys5.e
    # five capacitive self-stamps plus the floating Miller couplings
    assert e[0, 0] == pytest.approx(st[0].co + c.cm, rel=1e-15)
    assert e[1, 1] == pytest.approx(st[1].co, rel=1e-15)
    assert e[2, 2] == pytest.approx(st[2].co, rel=1e-15)
    assert e[3, 3] == pytest.approx(c.ca, rel=1e-15)
    assert e[4, 4] == pytest.approx(st[3].co + 1e-9 + c.cm, rel=1e-15)
    assert e[0, 4] == pytest.approx(-c.cm, rel=1e-15)
    assert e[4, 0] == pytest.approx(-c.cm, rel=1e-15)
    off = e.copy()
    off[np.diag_indices(5)] = 0.0
    off[0, 4] = off[4, 0] = 0.0
    assert np.all(off == 0.0)
    assert sys5.labels == ("v1", "v2", "v3", "va", "vout")


def test_dc_gain_product_formula(w1_model):
    model = w1_model.replace(gmf=0.0)
    sys5 = o.assemble_descriptor(model, CL_1N)
    gain = o.analysis.dc_gain(sys5)
    # product of four inverting stages: (10u * 10M)^4 = 1e8, positive
    assert gain == pytest.approx(1e8, rel=1e-12)
    assert gain == pytest.approx(dc_gain_resistive(model), rel=1e-12)


def test_gmf_adds_isolated_feedforward_gain(w1_model):
    with_ff = o.analysis.dc_gain(o.assemble_descriptor(w1_model, CL_1N))
    without = o.analysis.dc_gain(o.assemble_descriptor(w1_model.replace(gmf=0.0), CL_1N))
    st = w1_model.stages
    expected = st[0].gm * st[0].ro * w1_model.gmf * st[3].ro
    assert with_ff - without == pytest.approx(expected, rel=1e-12)


def test_single_capacitor_degenerate_single_pole():
    # every stage capacitor and the branch capacitor removed: the Miller
    # capacitor leaves exactly one finite mode, at the closed-form
    # dominant-pole location (1e-2 rad/s for this parameter set)
    stages = tuple(StageParams(10e-6, 10e6, 0.0) for _ in range(4))
    model = OtaMacromodel(stages=stages,
                          comp=CompensationParams(cm=10e-12, ra=200e3, ca=0.0),
                          gmf=0.0)
    sys5 = o.assemble_descriptor(model, LoadCondition(1e-30))
    pz = o.poles_zeros(sys5)
    assert len(pz.poles) == 1
    assert abs(pz.poles[0]) == pytest.approx(1e-2, rel=1e-6)
    assert pz.poles[0].real < 0
    # no zeros anywhere near the pole: first-order behavior at low frequency
    if len(pz.zeros):
        assert np.min(np.abs(pz.zeros)) > 1e6 * abs(pz.poles[0])


def test_dual_path_ac_oracle(reference):
    rng = np.random.default_rng(42)
    freqs = 10.0 ** rng.uniform(-2, 8, 50)
    for closed in (False, True):
        sys5 = o.assemble_descriptor(reference, CL_1N, loop_closed=closed)
        for f in freqs:
            mine = o.engine.transfer_at(sys5, float(f))
            ref = direct_nodal_gain(reference, 1e-9, float(f), closed=closed)
            assert abs(mine - ref) <= 1e-9 * abs(ref)


def test_ac_response_matches_pointwise_solve(reference):
    sys5 = o.assemble_descriptor(reference, CL_10P)
    grid = o.default_grid(1e0, 1e7, 10)
    resp = o.ac_response(sys5, grid)
    for i in (0, len(grid) // 2, len(grid) - 1):
        assert resp.h[i] == pytest.approx(o.engine.transfer_at(sys5, grid[i]), rel=1e-12)


def test_closed_loop_equals_unity_feedback_algebra(reference):
    grid = o.default_grid(1e1, 1e7, 5)
    h_open = o.ac_response(o.assemble_descriptor(reference, CL_1N), grid).h
    h_closed = o.ac_response(
        o.assemble_descriptor(reference, CL_1N, loop_closed=True), grid).h
    np.testing.assert_allclose(h_closed, h_open / (1.0 + h_open), rtol=1e-9)


def test_singular_at_frequency():
    # undamped resonator: the sweep matrix is exactly singular at 1 Hz
    w0 = 2.0 * math.pi
    sys2 = DescriptorSystem(e=np.eye(2), a=np.array([[0.0, 1.0], [-w0 * w0, 0.0]]),
                            b=np.array([0.0, 1.0]), c_out=np.array([1.0, 0.0]),
                            labels=("x1", "x2"))
    with pytest.raises(SingularAtFrequency):
        o.ac_response(sys2, np.array([0.5, 1.0, 2.0]))


def test_poles_left_half_plane_over_load_range(reference):
    for cl in np.logspace(math.log10(10e-15), math.log10(1e-9), 13):
        pz = o.poles_zeros(o.assemble_descriptor(reference, LoadCondition(cl)))
        assert np.all(pz.poles.real < 0), f"unstable pole at CL={cl}"


def test_conjugate_pairing(reference):
    pz = o.poles_zeros(o.assemble_descriptor(reference, LoadCondition(0.5e-12)))
    cplx = pz.poles[np.abs(pz.poles.imag) > 0]
    assert len(cplx) % 2 == 0
    for p in cplx:
        assert np.conj(p) in cplx


def test_pz_gain_reconstruction_matches_ac(reference):
    sys5 = o.assemble_descriptor(reference, CL_1N)
    pz = o.poles_zeros(sys5)
    h0 = o.analysis.dc_gain(sys5)
    k = h0 * np.prod(-pz.poles) / np.prod(-pz.zeros)
    rng = np.random.default_rng(7)
    freqs = 10.0 ** rng.uniform(-1, 8, 20)
    for f in freqs:
        s = 2j * math.pi * f
        rec = k * np.prod(s - pz.zeros) / np.prod(s - pz.poles)
        ref = o.engine.transfer_at(sys5, float(f))
        assert abs(abs(rec) / abs(ref) - 1.0) < 1e-6


def test_resonant_peaking_is_local_maximum(reference):
    # light load: ringing pair well below critical damping
    sys5 = o.assemble_descriptor(reference, LoadCondition(0.5e-12))
    pz = o.poles_zeros(sys5)
    upper = pz.poles[pz.poles.imag > 0]
    for p in upper:
        xi = -p.real / abs(p)
        if xi >= 0.3:
            continue
        f0 = abs(p) / (2.0 * math.pi)
        mag = [abs(o.engine.transfer_at(sys5, f)) for f in (f0 / 2, f0, 2 * f0)]
        assert mag[1] > mag[0]
        assert mag[1] > mag[2]


# ---------------------------------------------------------------------------
# doublets

def test_reference_doublet_near_branch_frequency(reference):
    sys5 = o.assemble_descriptor(reference, CL_10P)
    pz = o.detect_doublets(o.poles_zeros(sys5), rel_tol=0.05)
    w_branch = 1.0 / (reference.comp.ra * reference.comp.ca)
    near = [d for d in pz.doublets
            if w_branch / 3 <= abs(pz.poles[d.pole_index]) <= 3 * w_branch]
    assert len(near) == 1
    d = near[0]
    pole = pz.poles[d.pole_index]
    zero = pz.zeros[d.zero_index]
    assert abs(pole - zero) / abs(pole) < 0.01
    assert abs(abs(pole) - w_branch) / w_branch < 0.05
    assert abs(abs(zero) - w_branch) / w_branch < 0.05
    assert abs(pole) / (2 * math.pi) == pytest.approx(663e3, rel=0.05)


def test_doublet_no_zeros_gives_empty():
    pz = PoleZeroSet(poles=np.array([-1.0 + 0j, -5.0 + 0j]), zeros=np.array([]))
    assert o.detect_doublets(pz).doublets == ()


def test_doublet_identical_pair_distance_zero():
    pz = PoleZeroSet(poles=np.array([-3.0 + 0j]), zeros=np.array([-3.0 + 0j]))
    out = o.detect_doublets(pz, rel_tol=0.05)
    assert len(out.doublets) == 1
    assert out.doublets[0].rel_distance == 0.0


def test_doublet_each_used_once():
    pz = PoleZeroSet(poles=np.array([-1.0 + 0j, -1.01 + 0j]),
                     zeros=np.array([-1.005 + 0j]))
    out = o.detect_doublets(pz, rel_tol=0.05)
    assert len(out.doublets) == 1


def test_doublet_rel_tol_validation(reference):
    pz = o.poles_zeros(o.assemble_descriptor(reference, CL_10P))
    with pytest.raises(o.InvalidParameter):
        o.detect_doublets(pz, rel_tol=1.5)


# ---------------------------------------------------------------------------
# exports

def test_bode_csv_round_trip(tmp_path, reference):
    sys5 = o.assemble_descriptor(reference, CL_10P)
    resp = o.ac_response(sys5, o.default_grid(1e0, 1e6, 5))
    path = tmp_path / "bode.csv"
    o.engine.write_bode_csv(resp, path)
    f, m, p = o.engine.read_bode_csv(path)
    np.testing.assert_array_equal(f, resp.freq)
    np.testing.assert_array_equal(m, resp.mag_db())
    np.testing.assert_array_equal(p, resp.phase_deg_unwrapped())
    assert b"\r" not in path.read_bytes()


def test_pz_json_round_trip(tmp_path, reference):
    pz = o.detect_doublets(o.poles_zeros(o.assemble_descriptor(reference, CL_10P)))
    path = tmp_path / "pz.json"
    o.engine.write_pz_json(pz, path)
    again = o.engine.read_pz_json(path)
    np.testing.assert_array_equal(again.poles, pz.poles)
    np.testing.assert_array_equal(again.zeros, pz.zeros)
    assert again.doublets == pz.doublets
