"""Exact linear analysis of the macromodel network.

Assembles the five-node small-signal circuit (stage outputs v1..v3, the
RC-branch internal node va, and vout) into implicit state-space form
E*dx/dt = A*x + B*u with node voltages as states, then provides frequency
sweeps, pole/zero extraction via generalized eigenvalue problems, and
pole-zero doublet detection.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import EigensolverFailure, InvalidParameter, SingularAtFrequency
from .macromodel import LoadCondition, OtaMacromodel

NODE_LABELS = ("v1", "v2", "v3", "va", "vout")

#: Generalized eigenvalues beyond this multiple of the slowest finite mode
#: are artifacts of a singular capacitance matrix and are discarded.
INFINITE_MODE_RATIO = 1e15


@dataclass(frozen=True)
class DescriptorSystem:
    """Implicit linear dynamics E*dx/dt = A*x + B*u, y = C_out*x."""

    e: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c_out: np.ndarray
    labels: tuple[str, ...]
    loop_closed: bool = False

    def __post_init__(self):
        e = np.asarray(self.e, dtype=float)
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        c = np.asarray(self.c_out, dtype=float).reshape(-1)
        n = a.shape[0]
        if a.shape != (n, n) or e.shape != (n, n) or b.shape != (n,) or c.shape != (n,):
            raise InvalidParameter("shape", (e.shape, a.shape, b.shape, c.shape),
                                   "inconsistent system dimensions")
        if len(self.labels) != n:
            raise InvalidParameter("labels", self.labels, f"need {n} labels")
        if not np.all(np.isfinite(a)) or not np.all(np.isfinite(e)):
            raise InvalidParameter("matrix", None, "non-finite entries")
        if not np.allclose(e, e.T, rtol=0, atol=1e-30 + 1e-12 * np.abs(e).max()):
            raise InvalidParameter("e", None, "capacitance matrix must be symmetric")
        w = np.linalg.eigvalsh(0.5 * (e + e.T))
        if w.min() < -1e-9 * max(w.max(), 1e-300):
            raise InvalidParameter("e", float(w.min()),
                                   "capacitance matrix must be positive semi-definite")
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c_out", c)

    @property
    def order(self) -> int:
        return self.a.shape[0]


def assemble_descriptor(model: OtaMacromodel, load: LoadCondition,
                        loop_closed: bool = False) -> DescriptorSystem:
    """Stamp the macromodel into a descriptor system.

    States are the node voltages (v1, v2, v3, va, vout). Stage output
    resistances and capacitances shunt their nodes, the Miller capacitor
    floats between v1 and vout, the branch resistor connects v3 to the
    internal node va whose capacitor goes to ground, and the load adds to
    the output node. Controlled sources stamp with inverting polarity.
    With ``loop_closed`` the inverting input is wired to the output
    (unity-gain configuration); the input then drives the non-inverting
    side only.
    """
    st = model.stages
    c = model.comp
    n = 5
    v1, v2, v3, va, vout = range(n)
    stage_nodes = (v1, v2, v3, vout)

    G = np.zeros((n, n))
    C = np.zeros((n, n))
    b = np.zeros(n)

    for node, stg in zip(stage_nodes, st):
        G[node, node] += 1.0 / stg.ro
        C[node, node] += stg.co
    ga = 1.0 / c.ra
    G[v3, v3] += ga
    G[va, va] += ga
    G[v3, va] -= ga
    G[va, v3] -= ga
    C[va, va] += c.ca
    C[v1, v1] += c.cm
    C[vout, vout] += c.cm
    C[v1, vout] -= c.cm
    C[vout, v1] -= c.cm
    C[vout, vout] += load.cl

    # inverting controlled sources: injected current -gm * v_ctrl
    G[v2, v1] += st[1].gm
    G[v3, v2] += st[2].gm
    G[vout, v3] += st[3].gm
    G[vout, v1] += model.gmf
    b[v1] = -st[0].gm
    if loop_closed:
        G[v1, vout] -= st[0].gm

    c_out = np.zeros(n)
    c_out[vout] = 1.0
    return DescriptorSystem(e=C, a=-G, b=b, c_out=c_out,
                            labels=NODE_LABELS, loop_closed=loop_closed)


# ---------------------------------------------------------------------------
# frequency response

@dataclass(frozen=True)
class FrequencyResponse:
    freq: np.ndarray          # Hz, strictly increasing
    h: np.ndarray             # complex gain samples

    def __post_init__(self):
        freq = np.asarray(self.freq, dtype=float)
        h = np.asarray(self.h, dtype=complex)
        if freq.shape != h.shape or freq.ndim != 1:
            raise InvalidParameter("freq/h", (freq.shape, h.shape), "length mismatch")
        if freq.size and (np.any(freq <= 0) or np.any(np.diff(freq) <= 0)):
            raise InvalidParameter("freq", None, "grid must be positive and strictly increasing")
        object.__setattr__(self, "freq", freq)
        object.__setattr__(self, "h", h)

    def mag_db(self) -> np.ndarray:
        return 20.0 * np.log10(np.abs(self.h))

    def phase_deg_unwrapped(self) -> np.ndarray:
        return np.degrees(np.unwrap(np.angle(self.h)))


def default_grid(fmin: float = 1e-2, fmax: float = 1e8, points_per_decade: int = 200) -> np.ndarray:
    """Logarithmic frequency grid, fmin..fmax, fixed point density."""
    if not (0 < fmin < fmax) or points_per_decade < 1:
        raise InvalidParameter("grid", (fmin, fmax, points_per_decade), "bad grid spec")
    decades = math.log10(fmax / fmin)
    npts = max(2, int(round(decades * points_per_decade)) + 1)
    return np.logspace(math.log10(fmin), math.log10(fmax), npts)


def transfer_at(system: DescriptorSystem, freq_hz: float) -> complex:
    """Single-point transfer evaluation h = C (j*2*pi*f*E - A)^-1 B."""
    s = 2j * math.pi * freq_hz
    m = s * system.e - system.a
    try:
        x = np.linalg.solve(m, system.b.astype(complex))
    except np.linalg.LinAlgError:
        raise SingularAtFrequency(freq_hz) from None
    if not np.all(np.isfinite(x)):
        raise SingularAtFrequency(freq_hz)
    return complex(system.c_out @ x)


def ac_response(system: DescriptorSystem, grid: np.ndarray) -> FrequencyResponse:
    """Sweep the transfer function over ``grid`` (Hz).

    Solves the full complex system at each point; the capacitance matrix
    never needs to be inverted, so singular E (capacitor-free nodes) is
    handled naturally. Points are independent, solved as one stacked
    batch, and land in grid order regardless of evaluation order.
    """
    grid = np.asarray(grid, dtype=float)
    s = 2j * np.pi * grid
    m = s[:, None, None] * system.e - system.a
    rhs = np.broadcast_to(system.b.astype(complex), (grid.size, system.order))
    try:
        x = np.linalg.solve(m, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        # localize the offending frequency for the error report
        for f in grid:
            transfer_at(system, float(f))
        raise
    h = x @ system.c_out.astype(complex)
    if not np.all(np.isfinite(h)):
        bad = grid[~np.isfinite(h)][0]
        raise SingularAtFrequency(float(bad))
    return FrequencyResponse(freq=grid, h=h)


# ---------------------------------------------------------------------------
# poles, zeros, doublets

@dataclass(frozen=True)
class Doublet:
    pole_index: int
    zero_index: int
    rel_distance: float


@dataclass(frozen=True)
class PoleZeroSet:
    poles: np.ndarray
    zeros: np.ndarray
    doublets: tuple[Doublet, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "poles", _enforce_conjugate_pairs(self.poles, "poles"))
        object.__setattr__(self, "zeros", _enforce_conjugate_pairs(self.zeros, "zeros"))


def _enforce_conjugate_pairs(values, what: str) -> np.ndarray:
    """Sort eigenvalues and symmetrize complex conjugate pairs exactly."""
    vals = np.sort_complex(np.asarray(values, dtype=complex))
    out = list(vals)
    used = [False] * len(out)
    for i, v in enumerate(out):
        if used[i] or abs(v.imag) <= 1e-9 * abs(v):
            if not used[i]:
                out[i] = complex(v.real, 0.0)
                used[i] = True
            continue
        best, best_d = None, math.inf
        for j in range(len(out)):
            if j == i or used[j]:
                continue
            d = abs(out[j] - v.conjugate())
            if d < best_d:
                best, best_d = j, d
        if best is None or best_d > 1e-6 * abs(v):
            raise EigensolverFailure(f"unpaired complex value among {what}: {v}")
        mean = 0.5 * (v + out[best].conjugate())
        out[i] = mean
        out[best] = mean.conjugate()
        used[i] = used[best] = True
    return np.sort_complex(np.array(out, dtype=complex))


def _finite_eigenvalues(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    scale = np.abs(beta).max()
    if scale == 0:
        return np.array([], dtype=complex)
    finite = np.abs(beta) > 1e-12 * scale
    lam = alpha[finite] / beta[finite]
    lam = lam[np.isfinite(lam)]
    if lam.size == 0:
        return lam
    nonzero = np.abs(lam)[np.abs(lam) > 0]
    if nonzero.size:
        lam = lam[np.abs(lam) <= INFINITE_MODE_RATIO * nonzero.min()]
    return lam


def poles_zeros(system: DescriptorSystem) -> PoleZeroSet:
    """Finite poles and zeros of the assembled system.

    Poles are the finite generalized eigenvalues of (A, E). Zeros come
    from the input/output-augmented pencil ([A B; C 0], [E 0; 0 0]).
    Values returned in rad/s with conjugate pairing enforced.
    """
    try:
        w_p = scipy.linalg.eig(system.a, system.e, right=False, homogeneous_eigvals=True)
        poles = _finite_eigenvalues(w_p[0], w_p[1])
        n = system.order
        pencil = np.zeros((n + 1, n + 1))
        pencil[:n, :n] = system.a
        pencil[:n, n] = system.b
        pencil[n, :n] = system.c_out
        mass = np.zeros((n + 1, n + 1))
        mass[:n, :n] = system.e
        w_z = scipy.linalg.eig(pencil, mass, right=False, homogeneous_eigvals=True)
        zeros = _finite_eigenvalues(w_z[0], w_z[1])
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise EigensolverFailure(str(exc)) from exc
    return PoleZeroSet(poles=poles, zeros=zeros)


def detect_doublets(pz: PoleZeroSet, rel_tol: float = 0.05) -> PoleZeroSet:
    """Annotate near-cancelling pole/zero pairs.

    Candidate pairs are ranked by relative Euclidean distance
    |p - z| / |p| (ties by absolute distance); greedy matching uses each
    pole and zero at most once, keeping pairs below ``rel_tol``.
    """
    if not (0.0 < rel_tol < 1.0):
        raise InvalidParameter("rel_tol", rel_tol, "must be in (0, 1)")
    pairs = []
    for pi, p in enumerate(pz.poles):
        for zi, z in enumerate(pz.zeros):
            dist = abs(p - z)
            rel = dist / abs(p) if abs(p) > 0 else (0.0 if dist == 0 else math.inf)
            pairs.append((rel, dist, pi, zi))
    pairs.sort(key=lambda t: (t[0], t[1]))
    used_p, used_z = set(), set()
    doublets = []
    for rel, _dist, pi, zi in pairs:
        if rel >= rel_tol or pi in used_p or zi in used_z:
            continue
        used_p.add(pi)
        used_z.add(zi)
        doublets.append(Doublet(pole_index=pi, zero_index=zi, rel_distance=float(rel)))
    doublets.sort(key=lambda d: d.pole_index)
    return replace(pz, doublets=tuple(doublets))


# ---------------------------------------------------------------------------
# exports (CSV / JSON data files)

def write_bode_csv(response: FrequencyResponse, path) -> None:
    """Bode export: freq_hz, mag_db, phase_deg (unwrapped), LF line endings."""
    mag = response.mag_db()
    phase = response.phase_deg_unwrapped()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["freq_hz", "mag_db", "phase_deg"])
        for f, m, p in zip(response.freq, mag, phase):
            writer.writerow([repr(float(f)), repr(float(m)), repr(float(p))])


def read_bode_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["freq_hz", "mag_db", "phase_deg"]:
        raise InvalidParameter("header", rows[0] if rows else None, "bad bode CSV header")
    data = np.array([[float(x) for x in row] for row in rows[1:]], dtype=float)
    return data[:, 0], data[:, 1], data[:, 2]


def pz_to_dict(pz: PoleZeroSet) -> dict:
    return {
        "poles": [{"re": v.real, "im": v.imag} for v in pz.poles],
        "zeros": [{"re": v.real, "im": v.imag} for v in pz.zeros],
        "doublets": [{"pole_index": d.pole_index, "zero_index": d.zero_index,
                      "rel_distance": d.rel_distance} for d in pz.doublets],
    }


def pz_from_dict(doc: dict) -> PoleZeroSet:
    poles = np.array([complex(e["re"], e["im"]) for e in doc["poles"]], dtype=complex)
    zeros = np.array([complex(e["re"], e["im"]) for e in doc["zeros"]], dtype=complex)
    doublets = tuple(Doublet(d["pole_index"], d["zero_index"], d["rel_distance"])
                     for d in doc.get("doublets", []))
    return PoleZeroSet(poles=poles, zeros=zeros, doublets=doublets)


def write_pz_json(pz: PoleZeroSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(pz_to_dict(pz), fh, indent=2)
        fh.write("\n")


def read_pz_json(path) -> PoleZeroSet:
    with open(path, "r", encoding="utf-8") as fh:
        return pz_from_dict(json.load(fh))
