"""Time the jitted kernels against the pure numpy fallbacks.

The package picks the jitted path automatically when numba imports;
``DISTOBS_DISABLE_NUMBA=1`` forces the fallback.  Here we time both
implementations in one process: ``kernels.affine_iterate`` (whatever the
environment selected) against the underscore-prefixed pure functions it
wraps.  Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --horizon 20000 --repeat 5
"""

import argparse
import time
from pathlib import Path

import numpy as np

from distobs import (
    build_input_matrix,
    build_network_operator,
    build_network_structure,
    design_gains,
    initial_observer_states,
    load_model,
)
from distobs import kernels

FIXTURE = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "pendubot.json"


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_affine(args):
    model, sensors, graph, config = load_model(args.model)
    structure = build_network_structure(model, sensors)
    plan = design_gains(model, sensors, graph, structure=structure)
    op = build_network_operator(model, sensors, graph, plan, structure)
    if args.horizon is not None:
        import dataclasses

        config = dataclasses.replace(config, horizon=args.horizon)
    U = build_input_matrix(config, model.m)
    O = initial_observer_states(config, sensors.N, model.n)
    parts = [np.asarray(config.x0, dtype=float)]
    for i in range(1, sensors.N + 1):
        parts.append(O[i - 1][structure.subsystems[i].index_map])
        parts.append(O[i - 1][structure.partitions[i].index_map])
    s0 = np.concatenate(parts)
    M = np.ascontiguousarray(op.M)
    W = np.ascontiguousarray(op.W)
    U = np.ascontiguousarray(U)

    print(f"affine_iterate: {M.shape[0]}x{M.shape[0]} operator, "
          f"{U.shape[0]} steps")
    if kernels.NUMBA_ENABLED:
        t0 = time.perf_counter()
        kernels.affine_iterate(M, W, U[:2], s0, 1e12)
        print(f"  jit warmup (compile or cache load): "
              f"{time.perf_counter() - t0:.3f}s")
    t_sel, (out_sel, _) = best_of(
        lambda: kernels.affine_iterate(M, W, U, s0, 1e12), args.repeat
    )
    t_pure, (out_pure, _) = best_of(
        lambda: kernels._affine_iterate(M, W, U, s0, 1e12), args.repeat
    )
    label = "numba" if kernels.NUMBA_ENABLED else "numpy (fallback selected)"
    print(f"  {label:<28s} {t_sel:8.4f}s")
    print(f"  {'pure numpy':<28s} {t_pure:8.4f}s")
    if kernels.NUMBA_ENABLED:
        print(f"  speedup {t_pure / t_sel:.2f}x")
    print(f"  max |difference| {np.max(np.abs(out_sel - out_pure)):.3g}")
    return structure


def bench_dare(args, structure):
    sub = max(
        (structure.subsystems[i] for i in structure.subsystems),
        key=lambda s: s.dim,
    )
    F = np.ascontiguousarray(sub.F)
    H = np.ascontiguousarray(sub.H)
    print(f"dare_fixed_point: {F.shape[0]}x{F.shape[0]} subsystem, "
          f"{H.shape[0]} outputs")
    if kernels.NUMBA_ENABLED:
        kernels.dare_fixed_point(F, H, 1e-10, 5)
    t_sel, (P_sel, it, _) = best_of(
        lambda: kernels.dare_fixed_point(F, H, 1e-10, 100000), args.repeat
    )
    t_pure, (P_pure, _, _) = best_of(
        lambda: kernels._dare_fixed_point(F, H, 1e-10, 100000), args.repeat
    )
    label = "numba" if kernels.NUMBA_ENABLED else "numpy (fallback selected)"
    print(f"  {label:<28s} {t_sel:8.4f}s  ({it} iterations)")
    print(f"  {'pure numpy':<28s} {t_pure:8.4f}s")
    if kernels.NUMBA_ENABLED:
        print(f"  speedup {t_pure / t_sel:.2f}x")
    print(f"  max |difference| {np.max(np.abs(P_sel - P_pure)):.3g}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--model", default=str(FIXTURE), help="model JSON")
    parser.add_argument("--horizon", type=int, default=None)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    print(f"numba available and selected: {kernels.NUMBA_ENABLED}")
    structure = bench_affine(args)
    bench_dare(args, structure)


if __name__ == "__main__":
    main()
