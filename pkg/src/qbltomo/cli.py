"""Command-line entry point (``qbltomo`` or ``python3 -m qbltomo``)."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from . import harness, io, ordering, phantom, qbl, tomo
from .core import FormatError, derive_seed, sample_sorted_uniform

BUILTIN = "builtin"


def _auto_float(s: str):
    return None if s == "auto" else float(s)


def _auto_int(s: str):
    return None if s == "auto" else int(s)


def _load_image(path):
    return phantom.default_phantom() if path == BUILTIN else io.read_image(path)


def cmd_project(a) -> int:
    img = _load_image(a.image)
    bins = a.bins or img.shape[0]
    angles = harness.trial_angles(a.n, a.angles_seed)
    s = tomo.radon(img, angles, bins)
    if a.noise > 0:
        s = tomo.add_projection_noise(s, a.noise, derive_seed(a.angles_seed, 2))
    out = io.write_sinogram(a.out, s)
    print(f"wrote {s.num_projections}x{s.num_bins} sinogram to {out}")
    return 0


def _order_for(a, s) -> ordering.Permutation:
    n = s.num_projections
    if a.order == "nn":
        return ordering.nn_order(s.data, 0)
    if a.order == "file":
        if not a.order_file:
            raise SystemExit("--order file needs --order-file")
        m = io.read_permutation(a.order_file)
        return ordering.Permutation(m, anchor_fixed=bool(m) and m[0] == 1)
    if s.angles_known is None:
        return ordering.Permutation.identity(n)
    m = np.argsort(np.mod(s.angles_known, 2 * np.pi), kind="stable") + 1
    return ordering.Permutation(m, anchor_fixed=m[0] == 1)


def cmd_reconstruct(a) -> int:
    s = io.read_sinogram(a.sinogram)
    cfg = tomo.ReconstructionConfig(
        nu0=a.nu0, k0=a.k0, M=a.m, grid=a.grid, pixel_size=a.pixel_size, oversample=a.oversample
    )
    order = _order_for(a, s)
    img = tomo.reconstruct_unknown_angles(s, cfg, order)
    out = io.write_image(a.out, img)
    msg = f"wrote {img.shape[0]}x{img.shape[1]} image to {out}"
    if a.order == "nn" and ordering.looks_reversed(order):
        msg += " (order looks reversed: image is likely mirrored)"
    print(msg)
    return 0


def cmd_fst_check(a) -> int:
    img = _load_image(a.image)
    angles = np.pi * np.arange(a.angles) / a.angles
    err = tomo.fst_check(img, angles, a.bins or img.shape[0])
    for th, e in zip(angles, err):
        print(f"theta={th:.4f} rel_l2={e:.3e}")
    print(f"max rel_l2={err.max():.3e}")
    return 0 if err.max() <= a.tol else 1


def cmd_order(a) -> int:
    s = io.read_sinogram(a.sinogram)
    perm = ordering.nn_order(s.data, a.start)
    io.write_permutation(a.out, perm.tolist())
    print(f"wrote order of {perm.n} projections to {a.out}" + (" (looks reversed)" if ordering.looks_reversed(perm) else ""))
    return 0


def cmd_perturb(a) -> int:
    if a.synth is not None:
        db, nd = a.synth
        perm = ordering.synth_good_map(a.n, db, nd, a.seed)
    else:
        perm = ordering.Permutation(io.read_permutation(a.perm)) if a.perm else ordering.Permutation.identity(a.n)
        if a.shuffle is not None:
            perm = ordering.perturb_shuffle(perm, a.shuffle, a.seed)
        if a.shift is not None:
            perm = ordering.perturb_shift(perm, *a.shift)
    io.write_permutation(a.out, perm.tolist())
    print(f"wrote permutation of {perm.n} to {a.out}")
    return 0


def cmd_goodness(a) -> int:
    m = io.read_permutation(a.perm)
    perm = ordering.Permutation(m, anchor_fixed=bool(m) and m[0] == 1)
    for d in a.delta:
        print(f"delta_bar={d} n_delta={ordering.measure_goodness(perm, d).n_delta}")
    print(f"reversed={int(ordering.looks_reversed(perm))}")
    return 0


def cmd_qbl_sweep(a) -> int:
    """Monte-Carlo error of the 1D estimator for a_k = d*exp(-gamma*|k|)."""
    rows = []
    g = qbl.exp_decay_signal(a.gamma, a.d)
    params = qbl.QblParams(0, a.gamma, a.d)
    for n in a.n:
        errs = []
        for t in range(a.trials):
            ts = sample_sorted_uniform(n, 0.0, 1.0, derive_seed(a.seed, n, t))
            samples = qbl.OrderedSampleSet(g(ts))
            if a.sigma > 0:
                samples = qbl.add_sample_noise(samples, qbl.NoiseSpec(a.sigma), derive_seed(a.seed, n, t, 1))
            est = qbl.reconstruct_p3(samples, params)
            errs.append(qbl.exp_decay_error(est, a.gamma, a.d))
        rows.append({"N": n, "k0": qbl.choose_k0(n, a.gamma), "mean_err": float(np.mean(errs)),
                     "std_err": float(np.std(errs))})
        print(f"N={n} k0={rows[-1]['k0']} mean_err={rows[-1]['mean_err']:.4e}")
    if len(a.n) >= 3:
        print(f"slope={harness.slope_fit([r['mean_err'] for r in rows], a.n):.3f}")
    if a.out:
        io.write_results_csv(a.out, rows, ("N", "k0", "mean_err", "std_err"))
    return 0


def cmd_experiment(a) -> int:
    spec = harness.ExperimentSpec.load(a.spec).with_profile(a.profile)
    if a.seed is not None:
        spec = replace(spec, seed=a.seed)
    res = harness.run_experiment(spec, workers=a.workers)
    res.write_csv(a.out)
    for row in res.aggregates():
        print(f"{row['setting']:>22} N={row['N']:<6} mean_E={row['mean_E']:.4e} "
              f"median_E={row['median_E']:.4e} reversed={row['reversed']}")
    if a.summary:
        with open(a.summary, "w") as fh:
            json.dump({"spec": spec.to_dict(), "aggregates": res.aggregates()}, fh, indent=2)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qbltomo", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    q = sub.add_parser("project", help="project an image at random angles")
    q.add_argument("--image", default=BUILTIN, help=f"image header path or '{BUILTIN}'")
    q.add_argument("--angles-seed", type=int, default=0)
    q.add_argument("--n", type=int, required=True, help="number of projections")
    q.add_argument("--bins", type=int, default=None, help="offset bins (default: image width)")
    q.add_argument("--noise", type=float, default=0.0, help="noise std relative to mean |projection|")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_project)

    q = sub.add_parser("reconstruct", help="reconstruct from a sinogram with unknown angles")
    q.add_argument("--sinogram", required=True)
    q.add_argument("--order", choices=("nn", "file", "true"), default="nn")
    q.add_argument("--order-file", default=None)
    q.add_argument("--nu0", type=_auto_float, default=None, help="'auto' or a radius")
    q.add_argument("--k0", type=_auto_int, default=None, help="'auto' or an integer")
    q.add_argument("--m", type=_auto_int, default=None, help="'auto' or number of spokes")
    q.add_argument("--grid", type=int, default=128)
    q.add_argument("--pixel-size", type=float, default=None)
    q.add_argument("--oversample", type=int, default=4)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_reconstruct)

    q = sub.add_parser("fst-check", help="compare projection spectra with slices of the 2D transform")
    q.add_argument("--image", default=BUILTIN)
    q.add_argument("--angles", type=int, default=8)
    q.add_argument("--bins", type=int, default=None)
    q.add_argument("--tol", type=float, default=0.05)
    q.set_defaults(func=cmd_fst_check)

    q = sub.add_parser("order", help="nearest-neighbour ordering of a sinogram's projections")
    q.add_argument("--sinogram", required=True)
    q.add_argument("--start", type=int, default=0)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_order)

    q = sub.add_parser("perturb", help="corrupt an ordering")
    q.add_argument("--n", type=int, default=None)
    q.add_argument("--perm", default=None, help="input permutation (default: identity of size --n)")
    q.add_argument("--shuffle", type=int, default=None, metavar="K")
    q.add_argument("--shift", type=int, nargs=3, default=None, metavar=("START", "LEN", "AT"))
    q.add_argument("--synth", type=int, nargs=2, default=None, metavar=("DELTA_BAR", "N_DELTA"))
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_perturb)

    q = sub.add_parser("goodness", help="count positions displaced by more than delta_bar")
    q.add_argument("--perm", required=True)
    q.add_argument("--delta", type=int, nargs="+", default=[4])
    q.set_defaults(func=cmd_goodness)

    q = sub.add_parser("qbl-sweep", help="1D error decay versus number of samples")
    q.add_argument("--gamma", type=float, default=0.8)
    q.add_argument("--d", type=float, default=1.0)
    q.add_argument("--n", type=int, nargs="+", default=[2**k for k in range(9, 15)])
    q.add_argument("--trials", type=int, default=50)
    q.add_argument("--sigma", type=float, default=0.0)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_qbl_sweep)

    q = sub.add_parser("experiment", help="run an experiment spec and write a CSV")
    q.add_argument("--spec", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--profile", choices=tuple(harness.PROFILES), default=None)
    q.add_argument("--seed", type=int, default=None, help="override the spec seed")
    q.add_argument("--workers", type=int, default=1)
    q.add_argument("--summary", default=None, help="optional JSON file for aggregates")
    q.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(a, "cmd", None) == "perturb" and a.synth is None and a.perm is None and a.n is None:
        print("perturb needs --n or --perm", file=sys.stderr)
        return 2
    try:
        return a.func(a)
    except (FormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
