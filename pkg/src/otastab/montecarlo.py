"""Seeded Monte-Carlo sampling of model parameters and metric statistics.

Sample i is drawn from its own child stream of the seed, so results are
bit-identical for a given (seed, i) no matter how many samples run, in
what order, or on how many threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import InvalidParameter
from .macromodel import CompensationParams, OtaMacromodel, StageParams, build_model


@dataclass(frozen=True)
class SigmaSpec:
    """Relative standard deviation per parameter class."""

    gm: float = 0.0
    ro: float = 0.0
    co: float = 0.0
    cm: float = 0.0
    ra: float = 0.0
    ca: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and 0.0 <= v < 0.5):
                raise InvalidParameter(f.name, v, "sigma must be in [0, 0.5)")


def _perturb(rng, base: float, sigma: float) -> float:
    """base * (1 + sigma * z), redrawing until the factor is positive."""
    if sigma == 0.0 or base == 0.0:
        return base
    while True:
        factor = 1.0 + sigma * rng.standard_normal()
        if factor > 0.0:
            return base * factor


def sample_model(base: OtaMacromodel, sigma: SigmaSpec, seed: int, index: int) -> OtaMacromodel:
    """Draw sample ``index`` of the perturbed model. Depends only on (seed, index)."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))
    stages = tuple(
        StageParams(gm=_perturb(rng, st.gm, sigma.gm),
                    ro=_perturb(rng, st.ro, sigma.ro),
                    co=_perturb(rng, st.co, sigma.co))
        for st in base.stages
    )
    comp = CompensationParams(cm=_perturb(rng, base.comp.cm, sigma.cm),
                              ra=_perturb(rng, base.comp.ra, sigma.ra),
                              ca=_perturb(rng, base.comp.ca, sigma.ca))
    gmf = _perturb(rng, base.gmf, sigma.gm)
    return build_model(stages, comp, gmf, power_dq=base.power_dq, vdd=base.vdd)


def sample_models(base: OtaMacromodel, sigma: SigmaSpec, n: int, seed: int) -> list[OtaMacromodel]:
    if n < 1:
        raise InvalidParameter("n", n, "need at least one sample")
    return [sample_model(base, sigma, seed, i) for i in range(n)]


@dataclass(frozen=True)
class MetricStats:
    mean: float
    sigma_over_mu: float
    min: float
    max: float
    n: int
    failures: tuple[tuple[int, str], ...] = ()


@dataclass(frozen=True)
class McReport:
    metrics: dict
    n_samples: int
    seed: int | None = None


def mc_statistics(metric_fns, models, seed=None) -> McReport:
    """Evaluate metrics over sampled models and summarize spread.

    ``metric_fns`` is either a single callable or a {name: callable} dict.
    A metric that raises on sample i is recorded as a failure for that
    sample and excluded from the statistics; the failure count travels
    with the report.
    """
    if len(models) < 2:
        raise InvalidParameter("models", len(models), "need at least two samples")
    if callable(metric_fns):
        metric_fns = {"metric": metric_fns}
    out = {}
    for name, fn in metric_fns.items():
        values = []
        failures = []
        for i, m in enumerate(models):
            try:
                values.append(float(fn(m)))
            except Exception as exc:
                failures.append((i, str(exc)))
        if len(values) < 2:
            raise InvalidParameter(name, len(values), "fewer than two metric values survived")
        arr = np.asarray(values)
        mean = float(arr.mean())
        std = float(arr.std(ddof=1))
        som = std / abs(mean) if mean != 0 else math.inf if std > 0 else 0.0
        out[name] = MetricStats(mean=mean, sigma_over_mu=som, min=float(arr.min()),
                                max=float(arr.max()), n=len(values),
                                failures=tuple(failures))
    return McReport(metrics=out, n_samples=len(models), seed=seed)


def mc_report_to_dict(report: McReport) -> dict:
    return {
        "seed": report.seed,
        "n_samples": report.n_samples,
        "metrics": {
            name: {
                "mean": st.mean,
                "sigma_over_mu": st.sigma_over_mu,
                "min": st.min,
                "max": st.max,
                "n": st.n,
                "failures": [{"index": i, "error": msg} for i, msg in st.failures],
            }
            for name, st in report.metrics.items()
        },
    }
