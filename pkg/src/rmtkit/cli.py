"""Command-line interface.

Every subcommand writes its outputs plus a ``manifest.json`` capturing the
fully resolved options and seed, sufficient to re-run the command; with a
fixed seed the outputs are byte-identical across runs.  Exit codes: 0 on
success, 2 on validation/input errors, 3 on numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _configure_threads():
    cap = os.environ.get("RMT_THREADS")
    if cap:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _load_measure(arg: str):
    from .measures import measure_from_json
    if arg.lstrip().startswith("{"):
        return measure_from_json(arg)
    with open(arg) as fh:
        return measure_from_json(json.load(fh))


def _read_spectrum(path):
    import numpy as np
    vals = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "eigenvalue":
            raise ValueError(f"{path}: expected a one-column 'eigenvalue' CSV")
        for line in fh:
            line = line.strip()
            if line:
                vals.append(float(line))
    return np.asarray(vals)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(c) if isinstance(c, float) else str(c)
                              for c in row) + "\n")


def _write_manifest(outdir, command, options):
    payload = {"command": command, "options": options, "tool": "rmtkit 0.1.0"}
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest_options(args, skip=("func",)):
    return {k: v for k, v in sorted(vars(args).items())
            if k not in skip and not k.startswith("_")}


def _derive_seed(seed_seq) -> int:
    import numpy as np
    return int(seed_seq.generate_state(1, dtype=np.uint64)[0])


# -- subcommands -------------------------------------------------------------


def _cmd_sample(args) -> int:
    import numpy as np
    from .eigs import full_eigh, spectrum_histogram
    from .ensembles import EnsembleSpec, SymmetricMatrix, sample

    os.makedirs(args.out, exist_ok=True)
    master = np.random.SeedSequence(args.seed)
    pooled = []
    for child in master.spawn(args.count):
        base_ss, plus_ss = child.spawn(2)
        spec = EnsembleSpec(args.kind, args.n, m=args.m, d=args.d,
                            seed=_derive_seed(base_ss))
        mat = sample(spec).array * args.scale
        if args.plus_kind:
            plus_spec = EnsembleSpec(args.plus_kind, args.n, m=args.plus_m,
                                     d=args.plus_d, seed=_derive_seed(plus_ss))
            mat = mat + sample(plus_spec).array * args.plus_scale
        pooled.append(full_eigh(SymmetricMatrix(mat)).eigenvalues)
    pooled = np.concatenate(pooled)
    _write_rows(os.path.join(args.out, "spectra.csv"), ["eigenvalue"],
                [(float(v),) for v in pooled])
    edges, counts, density = spectrum_histogram(pooled, args.bins)
    _write_rows(os.path.join(args.out, "histogram.csv"),
                ["bin_left", "bin_right", "count", "density"],
                [(float(edges[i]), float(edges[i + 1]), int(counts[i]),
                  float(density[i])) for i in range(len(counts))])
    _write_manifest(args.out, "sample", _manifest_options(args))
    return 0


def _cmd_convolve(args) -> int:
    import numpy as np
    from .freeconv import (convolve_general, convolve_sc_mp_cubic,
                           convolve_semicircles, default_grid)
    from .measures import MarchenkoPastur, Semicircle

    os.makedirs(args.out, exist_ok=True)
    mu = _load_measure(args.mu)
    nu = _load_measure(args.nu)
    if args.grid_lo is not None and args.grid_hi is not None:
        grid = np.linspace(args.grid_lo, args.grid_hi, args.grid_points)
    else:
        grid = default_grid(mu, nu, points=args.grid_points)

    if args.method == "closed":
        if not (isinstance(mu, Semicircle) and isinstance(nu, Semicircle)):
            raise ValueError("closed-form method needs two semicircles")
        out = convolve_semicircles(mu.variance, nu.variance)
        density = np.asarray(out.density_at(grid))
    elif args.method == "cubic":
        pair = {type(mu), type(nu)}
        if pair != {Semicircle, MarchenkoPastur}:
            raise ValueError("cubic method needs one semicircle and one "
                             "Marchenko-Pastur measure")
        sc, mp = (mu, nu) if isinstance(mu, Semicircle) else (nu, mu)
        if abs(sc.radius - np.sqrt(2.0)) > 1e-9 or abs(mp.scale - 1.0) > 1e-9:
            raise ValueError("the cubic is specific to SC(radius sqrt 2) and "
                             "MP(scale 1)")
        density = np.asarray(convolve_sc_mp_cubic(mp.ratio, grid))
    else:
        result = convolve_general(mu, nu, grid, eta=args.eta)
        density = result.measure.density_at(grid)
    _write_rows(os.path.join(args.out, "density.csv"), ["x", "density"],
                [(float(x), float(d)) for x, d in zip(grid, density)])
    _write_manifest(args.out, "convolve", _manifest_options(args))
    return 0


def _cmd_outlier_predict(args) -> int:
    from .outliers import predict_fixed_rank, predict_subordination

    os.makedirs(args.out, exist_ok=True)
    mu = _load_measure(args.measure)
    spikes = [float(s) for s in args.spikes.split(",") if s.strip()]
    if not spikes:
        raise ValueError("no spikes given")
    rows = []
    if args.mode == "subordination":
        if args.nu is None:
            raise ValueError("subordination mode needs --nu")
        nu = _load_measure(args.nu)
        from .freeconv import convolve_general, default_grid
        conv = convolve_general(mu, nu, default_grid(mu, nu), eta=args.eta)
        for theta in spikes:
            p = predict_subordination(mu, nu, theta, conv=conv)
            rows.append((theta, p.location, p.detached))
    else:
        for theta in spikes:
            p = predict_fixed_rank(mu, theta)
            rows.append((theta, p.location, p.detached))
    _write_rows(os.path.join(args.out, "outliers.csv"),
                ["theta", "prediction", "detached"], rows)
    _write_manifest(args.out, "outlier-predict", _manifest_options(args))
    return 0


def _parse_grid_spec(text: str):
    import numpy as np
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError("--upsilon-grid must look like lo:hi:step")
    lo, hi, step = (float(p) for p in parts)
    if step <= 0 or hi < lo:
        raise ValueError("bad upsilon grid bounds")
    return tuple(np.round(np.arange(lo, hi + step / 2, step), 12))


def _cmd_outlier_fit(args) -> int:
    from .fitting import FitConfig, OutlierDataset, sweep_upsilon

    os.makedirs(args.out, exist_ok=True)
    data = OutlierDataset.from_csv(args.data)
    config = FitConfig(learning_rate=args.lr, max_iters=args.max_iters,
                       penalty_weight=args.penalty_weight, tol=args.tol)
    report = sweep_upsilon(data, config, grid=_parse_grid_spec(args.upsilon_grid))
    with open(os.path.join(args.out, "fit.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(args.out, "outlier-fit", _manifest_options(args))
    return 0


def _cmd_qq(args) -> int:
    from .analysis import qq_compare

    os.makedirs(args.out, exist_ok=True)
    a = _read_spectrum(args.a)
    b = _read_spectrum(args.b)
    qq = qq_compare(a, b)
    _write_rows(os.path.join(args.out, "qq.csv"), ["x_quantile", "y_quantile"],
                [(float(x), float(y)) for x, y in zip(qq.x_quantiles, qq.y_quantiles)])
    with open(os.path.join(args.out, "qq_summary.json"), "w") as fh:
        json.dump({"slope": qq.slope, "intercept": qq.intercept,
                   "r_squared": qq.r_squared}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(args.out, "qq", _manifest_options(args))
    return 0


def _cmd_potential(args) -> int:
    from .analysis import potential_from_measure

    os.makedirs(args.out, exist_ok=True)
    mu = _load_measure(args.measure)
    pot = potential_from_measure(mu, n_grid=args.points)
    _write_rows(os.path.join(args.out, "potential.csv"), ["x", "V"],
                [(float(x), float(v)) for x, v in zip(pot.grid, pot.values)])
    with open(os.path.join(args.out, "potential.json"), "w") as fh:
        json.dump({"support": list(pot.support),
                   "left_quad": list(pot.left_quad),
                   "right_quad": list(pot.right_quad),
                   "junction_residuals": [float(r) for r in pot.junction_residuals]},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(args.out, "potential", _manifest_options(args))
    return 0


def _cmd_complexity(args) -> int:
    from .analysis import kac_rice_exponent
    from .measures import measure_from_json

    os.makedirs(args.out, exist_ok=True)
    with open(args.family) as fh:
        entries = json.load(fh)
    if not isinstance(entries, list) or not entries:
        raise ValueError("family file must be a nonempty JSON list")
    table = [(float(e["u"]), measure_from_json(e["measure"])) for e in entries]
    lookup = dict(table)
    grid = [u for u, _ in table]
    rows = []
    for u, mu in table:
        feasible = mu.cdf(0.0) <= args.eps_index
        val = mu.log_abs_integral() - args.alpha * u * u if feasible else float("nan")
        rows.append((u, feasible, val))
    sup, argmax = kac_rice_exponent(lambda u: lookup[u], grid, args.alpha,
                                    args.eps_index)
    _write_rows(os.path.join(args.out, "complexity.csv"),
                ["u", "feasible", "value"], rows)
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump({"sup_value": sup, "argmax_u": argmax}, fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    _write_manifest(args.out, "complexity", _manifest_options(args))
    return 0


def _cmd_diagnostics(args) -> int:
    import numpy as np
    from .analysis import diag_local_law_error, measure_quantiles, rigidity_check

    os.makedirs(args.out, exist_ok=True)
    eigs = np.sort(_read_spectrum(args.spectrum))
    mu = _load_measure(args.measure)
    n = eigs.size
    qs = measure_quantiles(mu, n)
    fraction = rigidity_check(eigs, mu, args.rigidity_c, quantiles=qs)
    j = np.arange(1, n + 1)
    bound = args.rigidity_c * np.minimum(j, n - j + 1) ** (-1 / 3) * n ** (-2 / 3)
    _write_rows(os.path.join(args.out, "rigidity.csv"),
                ["j", "eigenvalue", "quantile", "bound", "within"],
                [(int(jj), float(e), float(q), float(bb), bool(abs(e - q) <= bb))
                 for jj, e, q, bb in zip(j, eigs, qs, bound)])
    summary = {"rigidity_fraction": fraction, "n": int(n)}
    if args.z is not None:
        re_im = [float(p) for p in args.z.split(",")]
        z = complex(re_im[0], re_im[1] if len(re_im) > 1 else 0.0)
        err, scale = diag_local_law_error(eigs, mu, z, quantiles=qs)
        summary["local_law_error"] = err
        summary["local_law_scale"] = scale
    with open(os.path.join(args.out, "diagnostics.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(args.out, "diagnostics", _manifest_options(args))
    return 0


# -- parser ------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmtkit",
        description="Random-matrix spectra: sampling, free convolution, "
                    "outlier prediction, scaling fits, diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample an ensemble and emit spectra")
    p.add_argument("--kind", required=True,
                   choices=["goe", "uwig", "gammawig", "uwish", "wish", "regular"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--plus-kind", default=None,
                   choices=["goe", "uwig", "gammawig", "uwish", "wish", "regular"])
    p.add_argument("--plus-m", type=int, default=None)
    p.add_argument("--plus-d", type=int, default=None)
    p.add_argument("--plus-scale", type=float, default=1.0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--bins", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("convolve", help="free additive convolution density")
    p.add_argument("--mu", required=True, help="measure JSON (inline or path)")
    p.add_argument("--nu", required=True)
    p.add_argument("--method", default="subordination",
                   choices=["closed", "cubic", "subordination"])
    p.add_argument("--grid-points", type=int, default=2048)
    p.add_argument("--grid-lo", type=float, default=None)
    p.add_argument("--grid-hi", type=float, default=None)
    p.add_argument("--eta", type=float, default=1e-4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_convolve)

    p = sub.add_parser("outlier-predict", help="theoretical spike outlier locations")
    p.add_argument("--measure", required=True)
    p.add_argument("--spikes", required=True, help="comma-separated spike list")
    p.add_argument("--mode", default="fixed-rank",
                   choices=["fixed-rank", "subordination"])
    p.add_argument("--nu", default=None)
    p.add_argument("--eta", type=float, default=1e-4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_outlier_predict)

    p = sub.add_parser("outlier-fit", help="fit the outlier batch-size scaling model")
    p.add_argument("--data", required=True, help="CSV: outlier_index,seed,batch_size,value")
    p.add_argument("--upsilon-grid", default="0.1:0.9:0.1")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--penalty-weight", type=float, default=1e6)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_outlier_fit)

    p = sub.add_parser("qq", help="quantile-quantile comparison of two spectra")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_qq)

    p = sub.add_parser("potential", help="equilibrium potential of a measure")
    p.add_argument("--measure", required=True)
    p.add_argument("--points", type=int, default=2049)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_potential)

    p = sub.add_parser("complexity", help="landscape complexity exponent on a grid")
    p.add_argument("--family", required=True,
                   help='JSON list [{"u": ..., "measure": {...}}, ...]')
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--eps-index", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_complexity)

    p = sub.add_parser("diagnostics", help="rigidity / local-law diagnostics")
    p.add_argument("--spectrum", required=True)
    p.add_argument("--measure", required=True)
    p.add_argument("--rigidity-c", type=float, default=10.0)
    p.add_argument("--z", default=None, help="evaluation point 're,im'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_diagnostics)

    return parser


def main(argv=None) -> int:
    _configure_threads()
    parser = _build_parser()
    args = parser.parse_args(argv)
    from .errors import NonConvergenceError, RmtError
    try:
        return args.func(args)
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (RmtError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
