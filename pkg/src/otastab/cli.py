"""Command-line front end.

Data goes to --out (or stdout), diagnostics to stderr. Exit codes:
0 success, 1 analysis error, 2 usage error, 3 model parse error.
Repeated runs with the same configuration produce byte-identical data.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, benchmark, engine, montecarlo, transient
from .errors import OtaError, ParseError
from .macromodel import (LoadCondition, check_validity, model_to_dict,
                         parse_model_file)
from .units import format_si, parse_value

SCHEMA_VERSION = 1
EXIT_OK, EXIT_ANALYSIS, EXIT_USAGE, EXIT_PARSE = 0, 1, 2, 3

#: Default load: the smallest value the measurements could reach.
DEFAULT_CL = "10p"


def _value(text):
    try:
        return parse_value(text)
    except ParseError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _positive_value(text):
    v = _value(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"value must be positive, got {text!r}")
    return v


def _grid_spec(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("grid spec must be fmin:fmax:points_per_decade")
    fmin, fmax = _positive_value(parts[0]), _positive_value(parts[1])
    try:
        ppd = int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"points per decade must be an integer, got {parts[2]!r}")
    if not (fmin < fmax and ppd >= 1):
        raise argparse.ArgumentTypeError("grid spec requires fmin < fmax and ppd >= 1")
    return fmin, fmax, ppd


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otastab",
        description="Stability, load-range and slew analysis for the "
                    "four-stage single-Miller OTA macromodel.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, model=True, cl=True):
        p = sub.add_parser(name, help=help_)
        if model:
            p.add_argument("--model", required=True, help="model JSON file")
        if cl:
            p.add_argument("--cl", action="append", type=_positive_value,
                           metavar="FARAD", help=f"load capacitance, engineering "
                           f"suffixes allowed (default {DEFAULT_CL})")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=None,
                       help="output format where both make sense")
        return p

    p = add("check", "validity-assumption report")
    p.add_argument("--margin", type=float, default=10.0)

    p = add("approx", "closed-form coefficients and margins")

    p = add("ac", "frequency sweep (bode CSV or JSON)")
    p.add_argument("--grid", type=_grid_spec, default=None, metavar="FMIN:FMAX:PPD")
    p.add_argument("--closed", action="store_true", help="unity-gain closed loop")

    p = add("poles", "pole/zero extraction with doublet annotations")
    p.add_argument("--closed", action="store_true")
    p.add_argument("--rel-tol", type=float, default=0.05, help="doublet detection tolerance")

    p = add("xvalidate", "closed forms vs exact engine deviations")
    p.add_argument("--margin", type=float, default=10.0)

    p = add("loadrange", "drivable load window", cl=False)
    p.add_argument("--xi", type=float, default=0.5, help="light-load damping target")
    p.add_argument("--pm", type=float, default=45.0, help="heavy-load phase margin target, deg")

    p = add("step", "closed-loop step response (CSV plus metrics JSON)")
    p.add_argument("--amplitude", type=_value, default=0.025, help="step size, V")
    p.add_argument("--t-end", type=_positive_value, default=None)
    p.add_argument("--slew", action="store_true", help="clamp stage currents")

    p = add("slew", "slew-rate predictions")

    p = add("mc", "Monte-Carlo variability statistics")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--sigma", type=float, default=0.02,
                   help="relative sigma applied to every parameter class")

    p = sub.add_parser("fom", help="figures of merit and survey comparison")
    p.add_argument("--gbw", type=float, required=True, help="MHz")
    p.add_argument("--sr", type=float, required=True, help="V/us")
    p.add_argument("--clmax", type=float, required=True, help="pF")
    p.add_argument("--power", type=float, required=True, help="uW")
    p.add_argument("--label", default="candidate")
    p.add_argument("--dataset", default=None, help="survey JSON (default: shipped table)")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default=None)

    p = add("report", "full analysis bundle with figures into a directory", cl=True)
    p.add_argument("--seed", type=int, default=0)

    return parser


def _loads(args) -> list[LoadCondition]:
    values = args.cl if getattr(args, "cl", None) else [parse_value(DEFAULT_CL)]
    return [LoadCondition(v) for v in values]


def _emit(args, payload: dict | str) -> None:
    """Write the data product to --out or stdout."""
    if isinstance(payload, dict):
        text = json.dumps(payload, indent=2) + "\n"
    else:
        text = payload
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _wrap(args, results: dict) -> dict:
    inputs = {k: v for k, v in sorted(vars(args).items())
              if k not in ("command", "func") and v is not None}
    for key, value in list(inputs.items()):
        if isinstance(value, tuple):
            inputs[key] = list(value)
    return {"schema_version": SCHEMA_VERSION, "command": args.command,
            "inputs": inputs, "results": results}


def _cmd_check(args):
    model = parse_model_file(args.model)
    results = {}
    for load in _loads(args):
        rep = check_validity(model, load, margin=args.margin)
        results[f"cl={load.cl!r}"] = {
            "passed": rep.passed,
            "margin": rep.margin,
            "checks": [{"name": c.name, "ratio": c.ratio, "threshold": c.threshold,
                        "passed": c.passed} for c in rep.checks],
        }
    _emit(args, _wrap(args, results))
    return EXIT_OK


def _cmd_approx(args):
    model = parse_model_file(args.model)
    results = {}
    for load in _loads(args):
        c = analysis.approx_coeffs(model, load)
        pair = analysis.second_order_params(c)
        pm = analysis.phase_margin_approx(model, load)
        results[f"cl={load.cl!r}"] = {
            "w_d_rad_s": c.w_d, "a0": c.a0, "a1_s": c.a1, "b1_s": c.b1,
            "b2_s": c.b2, "b3_s2": c.b3, "b4_s": c.b4, "w_gbw_rad_s": c.w_gbw,
            "w0_rad_s": pair.w0, "xi": pair.xi,
            "pm_full_deg": pm.full_deg, "pm_simple_deg": pm.simple_deg,
        }
    _emit(args, _wrap(args, results))
    return EXIT_OK


def _grid_from(args):
    if args.grid is None:
        return engine.default_grid()
    fmin, fmax, ppd = args.grid
    return engine.default_grid(fmin, fmax, ppd)


def _cmd_ac(args):
    model = parse_model_file(args.model)
    grid = _grid_from(args)
    loads = _loads(args)
    fmt = args.format or "csv"
    responses = []
    for load in loads:
        system = engine.assemble_descriptor(model, load, loop_closed=args.closed)
        responses.append((load, engine.ac_response(system, grid)))
    if fmt == "csv":
        if args.out and len(loads) > 1:
            for load, resp in responses:
                stem = Path(args.out)
                path = stem.with_name(f"{stem.stem}_cl{format_si(load.cl).replace(' ', '')}{stem.suffix}")
                engine.write_bode_csv(resp, path)
        elif args.out:
            engine.write_bode_csv(responses[0][1], args.out)
        else:
            import io

            for load, resp in responses:
                buf = io.StringIO()
                _write_bode_to(buf, resp)
                sys.stdout.write(buf.getvalue())
    else:
        results = {f"cl={load.cl!r}": {
            "freq_hz": [float(f) for f in resp.freq],
            "mag_db": [float(m) for m in resp.mag_db()],
            "phase_deg": [float(p) for p in resp.phase_deg_unwrapped()],
        } for load, resp in responses}
        _emit(args, _wrap(args, results))
    return EXIT_OK


def _write_bode_to(buf, resp):
    import csv as _csv

    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow(["freq_hz", "mag_db", "phase_deg"])
    for f, m, p in zip(resp.freq, resp.mag_db(), resp.phase_deg_unwrapped()):
        writer.writerow([repr(float(f)), repr(float(m)), repr(float(p))])


def _cmd_poles(args):
    model = parse_model_file(args.model)
    results = {}
    for load in _loads(args):
        system = engine.assemble_descriptor(model, load, loop_closed=args.closed)
        pz = engine.detect_doublets(engine.poles_zeros(system), rel_tol=args.rel_tol)
        results[f"cl={load.cl!r}"] = engine.pz_to_dict(pz)
    _emit(args, _wrap(args, results))
    return EXIT_OK


def _cmd_xvalidate(args):
    model = parse_model_file(args.model)
    results = {}
    for load in _loads(args):
        xv = analysis.cross_validate(model, load, margin=args.margin)
        results[f"cl={load.cl!r}"] = {
            "rel_a0": xv.rel_a0, "rel_w_d": xv.rel_w_d, "rel_w0": xv.rel_w0,
            "rel_xi": xv.rel_xi, "d_pm_deg": xv.d_pm_deg, "rel_gbw": xv.rel_gbw,
            "exact_pair_found": xv.exact_pair_found,
        }
    _emit(args, _wrap(args, results))
    return EXIT_OK


def _cmd_loadrange(args):
    model = parse_model_file(args.model)
    result = analysis.load_range_exact(model, xi_target=args.xi, pm_target_deg=args.pm)
    _emit(args, _wrap(args, analysis.load_range_result_to_dict(result)))
    return EXIT_OK


def _cmd_step(args):
    model = parse_model_file(args.model)
    loads = _loads(args)
    for load in loads:
        if args.slew:
            currents = transient.calibrate_currents(model)
            resp = transient.slew_limited_step(model, currents, load,
                                               amplitude=args.amplitude, t_end=args.t_end)
        else:
            system = engine.assemble_descriptor(model, load, loop_closed=True)
            resp = transient.linear_step(system, args.amplitude, t_end=args.t_end)
        if args.out:
            base = Path(args.out)
            if len(loads) > 1:
                base = base.with_name(f"{base.stem}_cl{format_si(load.cl).replace(' ', '')}{base.suffix}")
            transient.write_step_csv(resp, base)
            transient.write_step_metrics_json(resp, base.with_suffix(".metrics.json"))
        else:
            doc = dict(resp.metrics)
            doc["final_value"] = resp.final_value
            _emit(args, _wrap(args, {f"cl={load.cl!r}": doc}))
    return EXIT_OK


def _cmd_slew(args):
    model = parse_model_file(args.model)
    currents = transient.calibrate_currents(model)
    results = {}
    for load in _loads(args):
        full = transient.slew_rate_full(model, currents, load)
        simple = transient.slew_rate_simplified(model, currents, load)
        results[f"cl={load.cl!r}"] = {
            "currents_a": {"i1": currents.i1, "i2": currents.i2,
                           "i3": currents.i3, "i4": currents.i4},
            "full": {"sr_v_per_s": full.sr, "limiting_stage": full.limiting_stage,
                     "terms_v_per_s": list(full.terms)},
            "simplified": {"sr_v_per_s": simple.sr, "limiting_stage": simple.limiting_stage,
                           "terms_v_per_s": list(simple.terms),
                           "alt_third_term_sr_v_per_s": simple.alt_third_term_sr,
                           "warnings": list(simple.warnings)},
        }
    _emit(args, _wrap(args, results))
    return EXIT_OK


def _cmd_mc(args):
    model = parse_model_file(args.model)
    sigma = montecarlo.SigmaSpec(gm=args.sigma, ro=args.sigma, co=args.sigma,
                                 cm=args.sigma, ra=args.sigma, ca=args.sigma)
    samples = montecarlo.sample_models(model, sigma, args.n, args.seed)
    loads = _loads(args)
    load = loads[0]

    def a0_db(m):
        system = engine.assemble_descriptor(m, load)
        return 20.0 * np.log10(abs(analysis.dc_gain(system)))

    def gbw_hz(m):
        system = engine.assemble_descriptor(m, load)
        return analysis.unity_crossover_hz(system)

    report = montecarlo.mc_statistics({"a0_db": a0_db, "gbw_hz": gbw_hz},
                                      samples, seed=args.seed)
    _emit(args, _wrap(args, montecarlo.mc_report_to_dict(report)))
    return EXIT_OK


def _cmd_fom(args):
    inputs = benchmark.FomInputs(gbw_mhz=args.gbw, sr_v_per_us=args.sr,
                                 cl_max_pf=args.clmax, power_uw=args.power)
    candidate = benchmark.BenchEntry(label=args.label, technology_nm=0.0,
                                     n_stages=4, vdd_v=0.0, inputs=inputs)
    dataset = benchmark.load_dataset(args.dataset)
    report = benchmark.benchmark_report(dataset, candidate)
    fmt = args.format or "json"
    if fmt == "json":
        doc = benchmark.report_to_dict(report)
        doc["candidate_fom_s"] = benchmark.fom_small(inputs)
        doc["candidate_fom_l"] = benchmark.fom_large(inputs)
        _emit(args, _wrap(args, doc))
    else:
        if args.out:
            benchmark.write_comparison_csv(report, args.out)
        else:
            sys.stdout.write(benchmark.format_comparison_table(report))
    return EXIT_OK


def _cmd_report(args):
    from . import reporting

    model = parse_model_file(args.model)
    outdir = Path(args.out or "report")
    outdir.mkdir(parents=True, exist_ok=True)
    summary = {}
    for load in _loads(args):
        tag = format_si(load.cl).replace(" ", "")
        system = engine.assemble_descriptor(model, load)
        resp = engine.ac_response(system, engine.default_grid())
        engine.write_bode_csv(resp, outdir / f"bode_{tag}.csv")
        reporting.save_bode_figure(resp, outdir / f"bode_{tag}.png",
                                   title=f"Open loop, CL = {format_si(load.cl, 'F')}")
        pz = engine.detect_doublets(engine.poles_zeros(system))
        engine.write_pz_json(pz, outdir / f"poles_{tag}.json")
        reporting.save_pz_figure(pz, outdir / f"poles_{tag}.png",
                                 title=f"Poles and zeros, CL = {format_si(load.cl, 'F')}")
        closed = engine.assemble_descriptor(model, load, loop_closed=True)
        step = transient.linear_step(closed, 0.025)
        transient.write_step_csv(step, outdir / f"step_{tag}.csv")
        transient.write_step_metrics_json(step, outdir / f"step_{tag}.metrics.json")
        reporting.save_step_figure(step, outdir / f"step_{tag}.png",
                                   title=f"25 mV step, CL = {format_si(load.cl, 'F')}")
        metrics = analysis.stability_metrics_exact(system)
        summary[f"cl={load.cl!r}"] = {
            "a0_db": metrics.a0_db, "gbw_hz": metrics.gbw_hz,
            "pm_deg": metrics.pm_deg, "gm_db": metrics.gm_db,
            "peaking_db": metrics.peaking_db,
            "settling_time_1pct_s": step.metrics["settling_time_1pct"],
        }
    lr = analysis.load_range_exact(model)
    summary["load_range"] = analysis.load_range_result_to_dict(lr)
    if model.power_dq is not None:
        sr = transient.slew_rate_full(model, transient.calibrate_currents(model),
                                      LoadCondition(1e-9)).sr
        inputs = benchmark.FomInputs(
            gbw_mhz=summary[list(summary)[0]]["gbw_hz"] / 1e6 if args.cl else 0.192,
            sr_v_per_us=sr / 1e6, cl_max_pf=1000.0, power_uw=model.power_dq * 1e6)
        summary["fom"] = {"fom_s": benchmark.fom_small(inputs),
                          "fom_l": benchmark.fom_large(inputs)}
    (outdir / "summary.json").write_text(
        json.dumps(_wrap(args, summary), indent=2) + "\n", encoding="utf-8")
    (outdir / "model.json").write_text(
        json.dumps(model_to_dict(model), indent=2) + "\n", encoding="utf-8")
    sys.stderr.write(f"report written to {outdir}\n")
    return EXIT_OK


_COMMANDS = {
    "check": _cmd_check,
    "approx": _cmd_approx,
    "ac": _cmd_ac,
    "poles": _cmd_poles,
    "xvalidate": _cmd_xvalidate,
    "loadrange": _cmd_loadrange,
    "step": _cmd_step,
    "slew": _cmd_slew,
    "mc": _cmd_mc,
    "fom": _cmd_fom,
    "report": _cmd_report,
}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OtaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
