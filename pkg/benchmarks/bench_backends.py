#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Runs the EM fit and the K=2 NLL grid scan with both implementations and
prints wall times plus speedups. The numpy path is what the package uses
when OSLS_DISABLE_NUMBA=1 is set or numba is unavailable.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from osls import _kernels
from osls.core import SourceLabelModel
from osls.simulate import ShiftSpec, make_scenario, ring_config


def _time(fn, *args, repeats=3):
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=100_000, help="EM target size")
    parser.add_argument("--k", type=int, default=10, help="EM class count")
    parser.add_argument("--iters", type=int, default=100)
    parser.add_argument("--grid-n", type=int, default=300, help="grid-scan target size")
    parser.add_argument("--grid-side", type=int, default=1001)
    args = parser.parse_args()

    if not _kernels.HAVE_NUMBA:
        print("numba unavailable or disabled; nothing to compare")
        return 1

    cfg = ring_config(
        args.k, radius=3.0, scale=1.0, n_source=1000, n_target=args.n,
        n_ood_ref=1000, shift=ShiftSpec.ordered_lt(10), r=1.0, seed=0,
    )
    _, target, _, _ = make_scenario(cfg)
    source = SourceLabelModel(cfg.c, cfg.rho_s)
    fe = np.ascontiguousarray(target.records.extended_f())
    ce = np.ascontiguousarray(source.extended().entries)
    pi0 = np.ascontiguousarray(source.c.entries)

    rows = []

    em_args = (fe, ce, pi0, source.rho_s, args.iters, 0.0)
    _kernels.em_fit_mle_nb(*em_args)  # compile before timing
    t_nb, out_nb = _time(_kernels.em_fit_mle_nb, *em_args)
    t_py, out_py = _time(_kernels.em_fit_mle_py, *em_args)
    assert np.allclose(out_nb[0], out_py[0]) and abs(out_nb[1] - out_py[1]) < 1e-12
    rows.append((f"em_fit_mle (N={args.n}, K={args.k}, {args.iters} iters)", t_nb, t_py))

    cfg2 = ring_config(
        2, radius=3.0, scale=1.0, n_source=100, n_target=args.grid_n,
        n_ood_ref=100, shift=ShiftSpec.ordered_lt(10), r=1.0, seed=0,
    )
    _, target2, _, _ = make_scenario(cfg2)
    source2 = SourceLabelModel(cfg2.c, cfg2.rho_s)
    fe2 = np.ascontiguousarray(target2.records.extended_f())
    ce2 = np.ascontiguousarray(source2.extended().entries)

    grid_args = (fe2, ce2, args.grid_side)
    _kernels.nll_grid_k2_nb(*grid_args)  # compile before timing
    t_nb, g_nb = _time(_kernels.nll_grid_k2_nb, *grid_args)
    t_py, g_py = _time(_kernels.nll_grid_k2_py, *grid_args)
    assert np.allclose(g_nb, g_py)
    rows.append((f"nll_grid_k2 (N={args.grid_n}, {args.grid_side}^2 grid)", t_nb, t_py))

    print(f"{'kernel':52s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, t_nb, t_py in rows:
        print(f"{name:52s} {t_nb:9.3f}s {t_py:9.3f}s {t_py / t_nb:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
