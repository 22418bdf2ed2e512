"""Compare the numba and numpy triplet kernels used in operator assembly.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends run on the same inputs; the script checks that their triplet
streams are identical before timing them.
"""

import argparse
import time

import numpy as np

from pnkit import _kernels
from pnkit.discretization import _face_entries, _volume_entries, trace_maps
from pnkit.mesh import build_grid, dof_layout
from pnkit.moments import flux_set

CASES = [
    ("slab P3", "slab", 3, (3200,)),
    ("planeparallel P3", "planeparallel", 3, (40, 40)),
    ("planeparallel P3", "planeparallel", 3, (80, 80)),
    ("planeparallel P7", "planeparallel", 7, (40, 40)),
]


def _inputs(scheme, geometry, N, cells):
    flux = flux_set(geometry, N)
    grid = build_grid(len(cells), *cells)
    layout = dof_layout(scheme, flux.basis, grid)
    own = layout.own_offsets()
    idx, w = trace_maps(layout)
    nc = np.arange(grid.n_cells, dtype=np.int64)
    faces = [(nc, grid.neighbors(d, +1).astype(np.int64), own, idx, w, *_face_entries(layout, flux, d))
             for d in range(grid.dimension)]
    return faces, (own, *_volume_entries(layout, flux))


def _run(face_fn, vol_fn, faces, vol):
    out = [face_fn(*f) for f in faces]
    out.append(vol_fn(*vol))
    return out


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scheme", default="DgQ1")
    args = ap.parse_args()
    if not _kernels.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed")

    print(f"{'case':<20}{'cells':>10}{'triplets':>12}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>9}")
    for name, geometry, N, cells in CASES:
        faces, vol = _inputs(args.scheme, geometry, N, cells)
        a = _run(_kernels.face_triplets_numpy, _kernels.volume_triplets_numpy, faces, vol)
        b = _run(_kernels.face_triplets_numba, _kernels.volume_triplets_numba, faces, vol)  # compiles
        for x, y in zip(a, b):
            for u, v in zip(x, y):
                np.testing.assert_array_equal(u, v)
        count = sum(x[0].size for x in a)
        t_np = _best(lambda: _run(_kernels.face_triplets_numpy, _kernels.volume_triplets_numpy,
                                  faces, vol), args.repeat)
        t_nb = _best(lambda: _run(_kernels.face_triplets_numba, _kernels.volume_triplets_numba,
                                  faces, vol), args.repeat)
        shape = "x".join(map(str, cells))
        print(f"{name:<20}{shape:>10}{count:>12}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.2f}")


if __name__ == "__main__":
    main()
