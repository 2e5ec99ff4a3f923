"""Command line front end.

Subcommands: ``analyze`` (classification and assumption reports),
``design`` (gain synthesis with feasibility intervals), ``simulate``
(closed network run with trace and metrics), ``report`` (all of the
above plus plots bundled under one index).

Exit codes: 0 success, 2 invalid model or arguments, 3 failed structural
assumptions, 4 infeasible or unverifiable gain design, 5 runtime
divergence.  Every toolkit failure writes ``failure.json`` into the
output directory naming the failing agents, modes, or step.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .errors import (
    AssumptionError,
    DistObsError,
    DivergenceError,
    EigensolverError,
    GainSynthesisError,
    InfeasibleGainError,
    ModelFormatError,
)
from .gains import design_gains
from .model import InputSpec, SimConfig, load_model
from .sim import error_metrics, run
from .structure import analyze_network, build_network_structure

_EXIT_CODES = (
    (ModelFormatError, 2),
    (AssumptionError, 3),
    (InfeasibleGainError, 4),
    (GainSynthesisError, 4),
    (EigensolverError, 4),
    (DivergenceError, 5),
)


@dataclasses.dataclass(frozen=True)
class CommandOutcome:
    """Process exit code plus every file the command wrote."""

    exit_code: int
    report_paths: tuple


def _mode_key(mode):
    return f"{mode[0]},{mode[1]}"


def _parse_mode_key(key):
    parts = str(key).split(",")
    if len(parts) != 2:
        raise ModelFormatError(f"gain key '{key}' is not of the form 'l,h'")
    try:
        return (int(parts[0].strip()), int(parts[1].strip()))
    except ValueError:
        raise ModelFormatError(f"gain key '{key}' is not of the form 'l,h'") from None


def _load_gain_overrides(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ModelFormatError(f"cannot read gains file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"gains file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("gains file must be a JSON object of 'l,h' -> k")
    overrides = {}
    for key, val in doc.items():
        mode = _parse_mode_key(key)
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise ModelFormatError(f"gain for mode {key} is not a number")
        overrides[mode] = float(val)
    return overrides


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return str(path)


def _set_text(members):
    return "{" + ", ".join(str(m) for m in sorted(members)) + "}"


# ---------------------------------------------------------------------------
# analyze stage
# ---------------------------------------------------------------------------


def _analysis_doc(model, analysis):
    classification = {}
    for i, cls in analysis.classifications.items():
        entry = {}
        for mode in analysis.mode_sets.modes:
            group = cls.group_of(*mode)
            entry[_mode_key(mode)] = {
                "group": group,
                "t_index": cls.t_index.get(mode) if group == 2 else None,
            }
        classification[str(i)] = entry
    sets = {}
    for mode in analysis.mode_sets.modes:
        sets[_mode_key(mode)] = {
            "v1": sorted(analysis.mode_sets.v1[mode]),
            "v2": sorted(analysis.mode_sets.v2[mode]),
            "v3": sorted(analysis.mode_sets.v3[mode]),
        }
    det = analysis.detectability
    independence = {
        str(i): {
            "holds": rep.holds,
            "failing": list(rep.failing),
            "details": {str(ell): list(v) for ell, v in rep.details.items()},
        }
        for i, rep in analysis.independence.items()
    }
    return {
        "n": model.n,
        "agents": len(analysis.classifications),
        "modes": [list(m) for m in analysis.mode_sets.modes],
        "unstable_modes": [list(m) for m in model.unstable_modes()],
        "classification": classification,
        "mode_sets": sets,
        "detectability": {
            "holds": det.holds,
            "ranks": {str(ell): r for ell, r in det.ranks.items()},
            "deficient": list(det.deficient),
            "empty_v3_modes": [list(m) for m in det.empty_v3_modes],
        },
        "independence": independence,
        "assumptions_hold": analysis.holds,
    }


def _print_analysis(model, analysis, out):
    modes = analysis.mode_sets.modes
    headers = [f"({l},{h})" for l, h in modes]
    cells = {}
    for i, cls in analysis.classifications.items():
        row = []
        for mode in modes:
            g = cls.group_of(*mode)
            row.append(f"2(t={cls.t_index[mode]})" if g == 2 else str(g))
        cells[i] = row
    widths = [
        max(len(h), max(len(cells[i][k]) for i in cells))
        for k, h in enumerate(headers)
    ]
    print("classification (group per agent and miniblock):", file=out)
    print(
        "agent | " + " ".join(h.rjust(w) for h, w in zip(headers, widths)),
        file=out,
    )
    for i in sorted(cells):
        print(
            f"{i:5d} | "
            + " ".join(c.rjust(w) for c, w in zip(cells[i], widths)),
            file=out,
        )
    print("", file=out)
    for mode in model.unstable_modes():
        l, h = mode
        print(
            f"V1({l},{h}) = {_set_text(analysis.mode_sets.v1[mode])}  "
            f"V2({l},{h}) = {_set_text(analysis.mode_sets.v2[mode])}  "
            f"V3({l},{h}) = {_set_text(analysis.mode_sets.v3[mode])}",
            file=out,
        )
    det = analysis.detectability
    print("", file=out)
    print(
        f"joint detectability: {'holds' if det.holds else 'FAILS'} "
        f"(ranks {dict(det.ranks)} of {det.n}"
        + (f"; deficient {list(det.deficient)}" if det.deficient else "")
        + (
            f"; unobserved modes {[tuple(m) for m in det.empty_v3_modes]}"
            if det.empty_v3_modes
            else ""
        )
        + ")",
        file=out,
    )
    for i, rep in sorted(analysis.independence.items()):
        status = (
            "holds" if rep.holds else f"FAILS for eigenvalue(s) {list(rep.failing)}"
        )
        print(f"independence, agent {i}: {status}", file=out)


def _analyze_stage(args, out_dir, stdout, paths):
    """Load, analyze, print, and persist; raise when assumptions fail."""
    model, sensors, graph, config = load_model(args.model)
    analysis = analyze_network(model, sensors)
    _print_analysis(model, analysis, stdout)
    paths.append(_write_json(out_dir / "analysis.json", _analysis_doc(model, analysis)))
    if not analysis.holds:
        det = analysis.detectability
        bad_agents = tuple(
            i for i, r in analysis.independence.items() if not r.holds
        )
        raise AssumptionError(
            "structural assumptions fail: "
            f"detectability {'holds' if det.holds else 'fails'}"
            + (f" (deficient eigenvalues {list(det.deficient)})" if det.deficient else "")
            + (
                f" (unobserved modes {[tuple(m) for m in det.empty_v3_modes]})"
                if det.empty_v3_modes
                else ""
            )
            + (f"; independence fails for agents {list(bad_agents)}" if bad_agents else ""),
            agents=bad_agents,
            modes=det.empty_v3_modes,
        )
    return model, sensors, graph, config, analysis


# ---------------------------------------------------------------------------
# design stage
# ---------------------------------------------------------------------------


def _gains_doc(plan):
    intervals = {}
    for mode, iv in plan.intervals.items():
        intervals[_mode_key(mode)] = {
            "lower": iv.lower,
            "upper": iv.upper,
            "empty": iv.empty,
            "unconstrained": iv.unconstrained,
            "per_eigen": [
                {
                    "mu_re": c.mu.real,
                    "mu_im": c.mu.imag,
                    "feasible": c.feasible,
                    "reason": c.reason,
                    "lower": c.lower,
                    "upper": c.upper,
                }
                for c in iv.per_eigen
            ],
        }
    return {
        "intervals": intervals,
        "coupling": {_mode_key(m): k for m, k in plan.coupling.items()},
        "mode_radii": {_mode_key(m): r for m, r in plan.mode_radii.items()},
        "injections": {
            str(i): {
                "L": np.asarray(inj.L).tolist(),
                "radius": inj.radius,
                "iterations": inj.iterations,
            }
            for i, inj in plan.injections.items()
        },
        "verified": plan.verified,
    }


def _print_plan(model, plan, out):
    for mode, iv in plan.intervals.items():
        l, h = mode
        rho = model.eig_of(l).modulus
        if iv.unconstrained:
            span = "unconstrained"
        else:
            span = f"({iv.lower:.6g}, {iv.upper:.6g})"
        print(
            f"mode ({l},{h}): rho={rho:.10g} interval {span} "
            f"-> k={plan.coupling[mode]:.10g} radius={plan.mode_radii[mode]:.10g}",
            file=out,
        )
    for i, inj in sorted(plan.injections.items()):
        print(
            f"agent {i}: injection gain {inj.L.shape[0]}x{inj.L.shape[1]}, "
            f"closed-loop radius {inj.radius:.10g} "
            f"({inj.iterations} iterations)",
            file=out,
        )


def _design_stage(args, out_dir, stdout, paths, model, sensors, graph,
                  analysis, persist=True):
    overrides = _load_gain_overrides(args.gains) if args.gains else None
    structure = build_network_structure(model, sensors, analysis)
    plan = design_gains(
        model, sensors, graph, overrides=overrides,
        analysis=analysis, structure=structure,
    )
    _print_plan(model, plan, stdout)
    if persist:
        paths.append(_write_json(out_dir / "gains.json", _gains_doc(plan)))
    return structure, plan


# ---------------------------------------------------------------------------
# simulate stage
# ---------------------------------------------------------------------------


def _resolve_config(config, args, model):
    if config is None:
        if args.horizon is None:
            raise ModelFormatError(
                "model has no simulation section; pass --horizon to simulate"
            )
        config = SimConfig(
            horizon=args.horizon,
            x0=np.zeros(model.n),
            inputs=tuple([InputSpec(kind="zero")] * model.m),
            observer_init="random",
            seed=0,
        )
    if args.horizon is not None:
        config = dataclasses.replace(config, horizon=args.horizon)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if config.horizon < 1:
        raise ModelFormatError("simulation horizon must be at least 1")
    return config


def _write_trace_csv(path, trace, original):
    header = ["t", "agent", "err_norm"] + [
        f"err_mode_{l}_{h}" for l, h in trace.modes
    ]
    err = trace.error_norms_original() if original else trace.error_norms
    lines = [",".join(header)]
    T1, N = err.shape
    n_modes = len(trace.modes)
    for t in range(T1):
        for a in range(N):
            row = [str(t), str(a + 1), f"{err[t, a]:.17g}"]
            row.extend(
                f"{trace.mode_error_norms[t, a, kk]:.17g}" for kk in range(n_modes)
            )
            lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
    return str(path)


def _metrics_doc(trace, original):
    if original:
        err = trace.error_norms_original()
        T = trace.horizon
        t0 = T // 2
        final, peak, decay = {}, {}, {}
        for i in range(1, trace.N + 1):
            e = err[:, i - 1]
            final[str(i)] = float(e[-1])
            peak[str(i)] = float(np.max(e))
            if e[t0] > 0.0 and e[-1] > 0.0 and T > t0:
                decay[str(i)] = float((e[-1] / e[t0]) ** (1.0 / (T - t0)))
            else:
                decay[str(i)] = 0.0
        return {
            "horizon": T,
            "coordinates": "original",
            "final": final,
            "peak": peak,
            "decay": decay,
            "worst_final": max(final.values()),
        }
    metrics = error_metrics(trace)
    return {
        "horizon": metrics.horizon,
        "coordinates": "model",
        "final": {str(i): v for i, v in metrics.final.items()},
        "peak": {str(i): v for i, v in metrics.peak.items()},
        "decay": {str(i): v for i, v in metrics.decay.items()},
        "worst_final": metrics.worst_final,
    }


def _write_plots(out_dir, trace, original):
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "distobs"
    import matplotlib.pyplot as plt

    paths = []
    if original:
        states = trace.states_original()
        estimates = trace.estimates_original()
    else:
        states = trace.states
        estimates = trace.estimates
    n = states.shape[1]
    entries = list(range(min(4, n)))
    t = trace.times
    for i in range(1, trace.N + 1):
        fig, axes = plt.subplots(
            len(entries), 1, figsize=(7.0, 1.9 * len(entries)), sharex=True
        )
        if len(entries) == 1:
            axes = [axes]
        for ax, e in zip(axes, entries):
            ax.plot(t, states[:, e], lw=1.2, label=f"state {e + 1}")
            ax.plot(
                t, estimates[:, i - 1, e], lw=1.0, ls="--",
                label=f"estimate {e + 1}",
            )
            ax.legend(loc="upper right", fontsize=7)
        axes[-1].set_xlabel("step")
        fig.suptitle(f"agent {i}: states and estimates")
        path = out_dir / f"agent_{i}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(str(path))

    err = trace.error_norms_original() if original else trace.error_norms
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for i in range(1, trace.N + 1):
        e = np.maximum(err[:, i - 1], 1e-300)
        ax.semilogy(t, e, lw=1.0, label=f"agent {i}")
    ax.set_xlabel("step")
    ax.set_ylabel("estimation error norm")
    ax.legend(loc="upper right", fontsize=7)
    path = out_dir / "error_norms.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    paths.append(str(path))
    return paths


def _simulate_stage(args, out_dir, stdout, paths, model, sensors, graph,
                    config, structure, plan, plot):
    if args.original_coords and model.T is None:
        raise ModelFormatError(
            "--original-coords requires a model with a 'transform'"
        )
    config = _resolve_config(config, args, model)
    trace = run(model, sensors, graph, plan, config, structure=structure)
    paths.append(
        _write_trace_csv(out_dir / "trace.csv", trace, args.original_coords)
    )
    metrics = _metrics_doc(trace, args.original_coords)
    paths.append(_write_json(out_dir / "metrics.json", metrics))
    if plot:
        paths.extend(_write_plots(out_dir, trace, args.original_coords))
    print(
        f"simulated {trace.horizon} steps for {trace.N} agents; "
        f"worst final error {metrics['worst_final']:.6g}",
        file=stdout,
    )


# ---------------------------------------------------------------------------
# command drivers
# ---------------------------------------------------------------------------


def _cmd_analyze(args, out_dir, stdout, paths):
    _analyze_stage(args, out_dir, stdout, paths)


def _cmd_design(args, out_dir, stdout, paths):
    model, sensors, graph, _config = load_model(args.model)
    analysis = analyze_network(model, sensors)
    _design_stage(args, out_dir, stdout, paths, model, sensors, graph, analysis)


def _cmd_simulate(args, out_dir, stdout, paths):
    model, sensors, graph, config = load_model(args.model)
    analysis = analyze_network(model, sensors)
    structure, plan = _design_stage(
        args, out_dir, stdout, paths, model, sensors, graph, analysis,
        persist=False,
    )
    _simulate_stage(
        args, out_dir, stdout, paths, model, sensors, graph, config,
        structure, plan, plot=args.plot,
    )


def _cmd_report(args, out_dir, stdout, paths):
    model, sensors, graph, config, analysis = _analyze_stage(
        args, out_dir, stdout, paths
    )
    structure, plan = _design_stage(
        args, out_dir, stdout, paths, model, sensors, graph, analysis
    )
    _simulate_stage(
        args, out_dir, stdout, paths, model, sensors, graph, config,
        structure, plan, plot=True,
    )
    index = {
        "model": str(args.model),
        "artifacts": sorted(Path(p).name for p in paths),
        "verified": plan.verified,
        "coupling": {_mode_key(m): k for m, k in plan.coupling.items()},
    }
    paths.append(_write_json(out_dir / "report.json", index))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="distobs",
        description=(
            "Design and verify distributed state observers for a Jordan-form "
            "plant watched by a network of sensors."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "analyze": "classify agents and check the structural assumptions",
        "design": "synthesize and verify injection and coupling gains",
        "simulate": "run the closed network and record traces",
        "report": "run analyze, design, and simulate into one bundle",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("model", help="model JSON file")
        p.add_argument(
            "--out", default="distobs_out", help="output directory (created)"
        )
        if name in ("design", "simulate", "report"):
            p.add_argument(
                "--gains",
                default=None,
                help="JSON file of coupling overrides, keys 'l,h'",
            )
        if name in ("simulate", "report"):
            p.add_argument(
                "--horizon", type=int, default=None,
                help="override the simulated step count",
            )
            p.add_argument(
                "--seed", type=int, default=None,
                help="override the observer initialization seed",
            )
            p.add_argument(
                "--original-coords", action="store_true",
                help="report errors and plots in original coordinates",
            )
            p.add_argument(
                "--plot", action="store_true",
                help="write per-agent SVG plots (report always plots)",
            )
    return parser


def _failure_doc(exc, exit_code):
    doc = {
        "error": type(exc).__name__,
        "message": str(exc),
        "exit_code": exit_code,
    }
    if isinstance(exc, AssumptionError):
        doc["agents"] = list(exc.agents)
        doc["modes"] = [list(m) for m in exc.modes]
    if isinstance(exc, InfeasibleGainError):
        doc["modes"] = [list(m) for m in exc.modes]
        if exc.diagnostics:
            doc["diagnostics"] = {
                _mode_key(mode): {
                    "reachable": rep.reachable,
                    "orphaned": list(rep.orphaned),
                    "reached": list(rep.reached),
                }
                for mode, rep in exc.diagnostics.items()
            }
    if isinstance(exc, GainSynthesisError) and exc.agent is not None:
        doc["agents"] = [exc.agent]
    if isinstance(exc, DivergenceError):
        doc["step"] = exc.step
    return doc


_COMMANDS = {
    "analyze": _cmd_analyze,
    "design": _cmd_design,
    "simulate": _cmd_simulate,
    "report": _cmd_report,
}


def run_command(argv=None):
    """Parse and execute one command, capturing the outcome."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 2
        return CommandOutcome(exit_code=code, report_paths=())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    try:
        _COMMANDS[args.command](args, out_dir, sys.stdout, paths)
    except DistObsError as exc:
        exit_code = 1
        for klass, code in _EXIT_CODES:
            if isinstance(exc, klass):
                exit_code = code
                break
        paths.append(
            _write_json(out_dir / "failure.json", _failure_doc(exc, exit_code))
        )
        print(f"error: {exc}", file=sys.stderr)
        return CommandOutcome(exit_code=exit_code, report_paths=tuple(paths))
    return CommandOutcome(exit_code=0, report_paths=tuple(paths))


def main(argv=None):
    return run_command(argv).exit_code


if __name__ == "__main__":
    sys.exit(main())
