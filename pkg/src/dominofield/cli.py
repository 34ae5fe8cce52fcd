"""Command-line interface and experiment orchestration.

Subcommands: validate, build, count, sample, heights, harmonic, riemann,
predict, verify, render, run.  `run` executes the full pipeline: region
build, exact sampling across a worker pool, height statistics, continuum
predictions, verification gates, figures, and a hashed manifest.  Exit code
0 means every gate passed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

from . import __version__
from .config import ExperimentConfig, load_config
from .dgauss import covariance as dg_covariance
from .errors import DominofieldError
from .height import (
    designated_hole_vertices,
    expected_height_field,
    height_field,
    height_field_to_csv,
    nearest_vertex,
)
from .kasteleyn import build_system, count_tilings, sample_exact, tiling_from_text, tiling_to_text
from .predictions import build_bundle, gof_hole_law, moment_suite
from .region import build_temperleyan, region_to_text, validate_region
from .riemann import ThetaParams, theta_eval


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# parallel sampling

_CTX = {}


def _sample_stats(idx):
    ctx = _CTX
    seed = np.random.SeedSequence(ctx["seed"], spawn_key=(idx,))
    limiter = threadpool_limits(1) if threadpool_limits else None
    try:
        tiling = sample_exact(ctx["system"], seed)
    finally:
        if limiter is not None:
            limiter.restore_original_limits()
    field = height_field(ctx["region"], tiling)
    exp = ctx["expected"]
    Z = np.array([field[v] - exp[v] for v in ctx["zverts"]])
    H = np.array(
        [field[v] - exp[v] - Z @ ctx["fq"][:, k] for k, v in enumerate(ctx["qverts"])]
    )
    return idx, Z, H


def generate_samples(region, system, expected, fields, query_points, n, seed,
                     threads=1):
    """Z (N, genus) and h-tilde (N, Q) for n independent exact samples.

    Sample i uses the spawned seed (seed, i), so results are identical for
    any worker count.
    """
    qverts = [nearest_vertex(region, p) for p in query_points]
    zverts = designated_hole_vertices(region)
    g = region.genus
    fq = np.zeros((g, len(qverts)))
    for j in range(g):
        for k, v in enumerate(qverts):
            x, y = region.vertex_to_continuum(v)
            fq[j, k] = fields[j].interpolate(x, y)
    _CTX.update(
        region=region, system=system, expected=expected, seed=seed,
        qverts=qverts, zverts=zverts, fq=fq,
    )
    results = []
    if threads <= 1:
        for i in range(n):
            results.append(_sample_stats(i))
    else:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(processes=threads) as pool:
            for res in pool.imap_unordered(_sample_stats, range(n), chunksize=4):
                results.append(res)
    results.sort(key=lambda t: t[0])
    Z = np.array([r[1] for r in results]).reshape(n, g)
    H = np.array([r[2] for r in results])
    return Z, H


def samples_to_csv(Z, H) -> str:
    g, Q = Z.shape[1], H.shape[1]
    header = ["sample"] + [f"Z{j + 1}" for j in range(g)] + [f"htilde_q{k}" for k in range(Q)]
    lines = [",".join(header)]
    for i in range(Z.shape[0]):
        row = [str(i)] + [repr(float(v)) for v in Z[i]] + [repr(float(v)) for v in H[i]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def samples_from_csv(text):
    lines = text.strip().splitlines()
    header = lines[0].split(",")
    g = sum(1 for c in header if c.startswith("Z"))
    rows = [[float(v) for v in ln.split(",")[1:]] for ln in lines[1:]]
    arr = np.array(rows)
    return arr[:, :g], arr[:, g:]


# ---------------------------------------------------------------------------
# experiment pipeline

def run_experiment(config: ExperimentConfig, threads=1, eps_index=None,
                   out_dir=None):
    """Full pipeline; returns (manifest dict, overall pass flag)."""
    from .render import render_gof, render_tiling, render_trend, render_zscores

    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    gates = config.gates
    all_pass = True
    eps_list = sorted(config.eps_list, reverse=True)  # coarse to fine
    if eps_index is not None:
        eps_list = [sorted(config.eps_list, reverse=True)[eps_index]]

    bundle = build_bundle(config.spec, config.mesh_h, config.query_points)
    surf = {"config_hash": config.config_hash}
    if bundle.surface is not None:
        surf.update(bundle.surface.to_dict())
        surf["cov_X"] = bundle.cov_X.tolist()
    surf["greens_at_queries"] = [
        [None if math.isnan(v) else v for v in row] for row in bundle.greens
    ]
    surf["f_at_queries"] = bundle.f_at_queries.tolist()
    _write(out / "surface.json", _json_dump(surf))
    files["surface.json"] = None

    tv_by_eps = []
    for k, eps in enumerate(eps_list):
        region = build_temperleyan(config.spec, eps)
        diag = validate_region(region)
        if not diag.passed:
            raise DominofieldError(f"region at eps={eps} failed validation:\n{diag}")
        _write(out / f"region_eps{k}.txt", region_to_text(region) + "\n")
        files[f"region_eps{k}.txt"] = None

        system = build_system(region)
        expected = expected_height_field(system, region)
        Z, H = generate_samples(
            region, system, expected, bundle.fields, config.query_points,
            config.samples, config.seed, threads=threads,
        )
        _write(out / f"samples_eps{k}.csv", samples_to_csv(Z, H))
        files[f"samples_eps{k}.csv"] = None

        report = moment_suite(Z, H, bundle, gate=gates["z_score"],
                              min_samples=min(500, config.samples))
        _write(out / f"moment_report_eps{k}.json", _json_dump(report.as_dict()))
        _write(out / f"moment_report_eps{k}.txt", report.table() + "\n")
        files[f"moment_report_eps{k}.json"] = None
        files[f"moment_report_eps{k}.txt"] = None
        render_zscores(report, out / f"zscores_eps{k}.svg")
        files[f"zscores_eps{k}.svg"] = None
        all_pass &= report.passed

        if region.genus >= 1:
            gof = gof_hole_law(Z, bundle.dg_params,
                               min_samples=min(200, config.samples))
            gd = gof.as_dict()
            gd["tv_gate"] = gates["tv_distance"]
            gd["tv_pass"] = bool(gof.tv_distance < gates["tv_distance"])
            gd["chi2_gate"] = gates["chi2_pvalue"]
            gd["chi2_pass"] = bool(gof.chi2_pvalue > gates["chi2_pvalue"])
            _write(out / f"gof_eps{k}.json", _json_dump(gd))
            files[f"gof_eps{k}.json"] = None
            render_gof(gof, out / f"gof_eps{k}.svg", title=f"eps={eps:g}")
            files[f"gof_eps{k}.svg"] = None
            tv_by_eps.append((eps, gof.tv_distance))
            all_pass &= gd["tv_pass"] and gd["chi2_pass"] and gof.support_pass

        seed0 = np.random.SeedSequence(config.seed, spawn_key=(0,))
        render_tiling(region, sample_exact(system, seed0),
                      out / f"tiling_eps{k}.svg")
        files[f"tiling_eps{k}.svg"] = None

    if len(tv_by_eps) >= 2:
        eps_sorted = [e for e, _ in tv_by_eps]
        tvs = [t for _, t in tv_by_eps]
        trend_pass = bool(tvs[-1] <= tvs[0] + 0.01)  # finest vs coarsest
        _write(out / "trend.json", _json_dump(
            {"eps": eps_sorted, "tv": tvs, "trend_pass": trend_pass}))
        files["trend.json"] = None
        render_trend(eps_sorted, tvs, out / "trend.svg")
        files["trend.svg"] = None
        all_pass &= trend_pass

    manifest = {
        "tool": f"dominofield {__version__}",
        "config_hash": config.config_hash,
        "seed": config.seed,
        "gates": gates,
        "all_gates_passed": bool(all_pass),
        "files": {},
    }
    for name in sorted(files):
        manifest["files"][name] = _sha256(out / name)
    _write(out / "manifest.json", _json_dump(manifest))
    return manifest, all_pass


# ---------------------------------------------------------------------------
# subcommands

def _add_common(p):
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--seed", type=int, default=None, help="override master seed")
    p.add_argument("--out", default=None, help="override output directory")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--eps-index", type=int, default=None,
                   help="run only this lattice scale (coarse-first index)")


def _config_from_args(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        raw = dict(cfg.raw)
        raw["seed"] = args.seed
        from .config import parse_config

        cfg = parse_config(raw)
    return cfg


def _region_from_args(args, cfg):
    eps_list = sorted(cfg.eps_list, reverse=True)
    idx = args.eps_index if args.eps_index is not None else len(eps_list) - 1
    return build_temperleyan(cfg.spec, eps_list[idx])


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="dominofield",
        description="uniform domino tilings of Temperleyan polyominoes, "
                    "with verified height-fluctuation statistics",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, hlp in [
        ("validate", "build the region and report diagnostics"),
        ("build", "write the region text dump"),
        ("count", "tiling count via the Kasteleyn determinant"),
        ("sample", "draw exact uniform tilings"),
        ("heights", "sample one tiling and export its height field CSV"),
        ("harmonic", "solve the continuum fields and export surface data"),
        ("predict", "export predictions at the query points"),
        ("verify", "recompute gates from stored samples"),
        ("render", "render a tiling to SVG"),
        ("run", "full pipeline with manifest"),
    ]:
        p = sub.add_parser(name, help=hlp)
        _add_common(p)
        if name == "sample":
            p.add_argument("--n", type=int, default=1)
        if name == "render":
            p.add_argument("--tiling", default=None, help="tiling text file")
            p.add_argument("--height-overlay", action="store_true")
    pr = sub.add_parser("riemann", help="theta evaluation for debugging")
    pr.add_argument("--json", default="-", help="JSON input path or - for stdin")

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except DominofieldError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 2


def _dispatch(args):
    if args.command == "riemann":
        text = sys.stdin.read() if args.json == "-" else Path(args.json).read_text()
        req = json.loads(text)
        B = np.array(req["B_real"]) + 1j * np.array(req["B_imag"])
        z = np.array(req.get("z_real", [0.0] * len(B))) + 1j * np.array(
            req.get("z_imag", [0.0] * len(B))
        )
        alpha = tuple(req.get("alpha", [0] * len(B)))
        val = theta_eval(ThetaParams(B=B), z, alpha=alpha)
        print(json.dumps({"value": [val.real, val.imag]}))
        return 0

    cfg = _config_from_args(args)
    out = Path(args.out or cfg.out_dir)

    if args.command == "validate":
        region = _region_from_args(args, cfg)
        diag = validate_region(region)
        print(diag)
        return 0 if diag.passed else 1

    if args.command == "build":
        region = _region_from_args(args, cfg)
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "region.txt", region_to_text(region) + "\n")
        print(f"wrote {out / 'region.txt'} ({len(region.squares)} squares, "
              f"genus {region.genus})")
        return 0

    if args.command == "count":
        region = _region_from_args(args, cfg)
        res = count_tilings(build_system(region))
        if res.exact is not None:
            print(f"tilings: {res.exact} (log {res.log_count:.6f})")
        else:
            print(f"log tilings: {res.log_count:.6f}")
        return 0

    if args.command == "sample":
        region = _region_from_args(args, cfg)
        system = build_system(region)
        out.mkdir(parents=True, exist_ok=True)
        for i in range(args.n):
            seed = np.random.SeedSequence(cfg.seed, spawn_key=(i,))
            t = sample_exact(system, seed)
            _write(out / f"tiling_{i:04d}.txt", tiling_to_text(t) + "\n")
        print(f"wrote {args.n} tiling(s) to {out}")
        return 0

    if args.command == "heights":
        region = _region_from_args(args, cfg)
        system = build_system(region)
        t = sample_exact(system, np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
        field = height_field(region, t)
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "heights.csv", height_field_to_csv(region, field))
        exp = expected_height_field(system, region)
        _write(out / "expected_heights.csv", height_field_to_csv(region, exp))
        print(f"wrote height CSVs to {out}")
        return 0

    if args.command == "harmonic":
        bundle = build_bundle(cfg.spec, cfg.mesh_h, cfg.query_points)
        out.mkdir(parents=True, exist_ok=True)
        surf = {"config_hash": cfg.config_hash}
        if bundle.surface is not None:
            surf.update(bundle.surface.to_dict())
            surf["cov_X"] = bundle.cov_X.tolist()
        _write(out / "surface.json", _json_dump(surf))
        print(f"wrote {out / 'surface.json'}")
        return 0

    if args.command == "predict":
        bundle = build_bundle(cfg.spec, cfg.mesh_h, cfg.query_points)
        out.mkdir(parents=True, exist_ok=True)
        pred = {
            "query_points": [list(q) for q in bundle.query_points],
            "greens": [[None if math.isnan(v) else v for v in row]
                       for row in bundle.greens],
            "f_at_queries": bundle.f_at_queries.tolist(),
            "gff_covariance": [
                [None if i == j else (16.0 / math.pi) * bundle.greens[i, j]
                 for j in range(len(bundle.query_points))]
                for i in range(len(bundle.query_points))
            ],
        }
        if bundle.dg_params is not None:
            pred["tau"] = bundle.dg_params.tau.tolist()
            pred["e"] = bundle.dg_params.e.tolist()
            pred["cov_X"] = dg_covariance(bundle.dg_params).tolist()
        _write(out / "predictions.json", _json_dump(pred))
        print(f"wrote {out / 'predictions.json'}")
        return 0

    if args.command == "verify":
        bundle = build_bundle(cfg.spec, cfg.mesh_h, cfg.query_points)
        ok = True
        k = 0
        found = False
        while (out / f"samples_eps{k}.csv").exists():
            found = True
            Z, H = samples_from_csv((out / f"samples_eps{k}.csv").read_text())
            report = moment_suite(Z, H, bundle, gate=cfg.gates["z_score"],
                                  min_samples=min(500, Z.shape[0]))
            print(f"== eps index {k} ==")
            print(report.table())
            ok &= report.passed
            if cfg.spec.genus >= 1:
                gof = gof_hole_law(Z, bundle.dg_params,
                                   min_samples=min(200, Z.shape[0]))
                print(f"TV={gof.tv_distance:.4f} chi2 p={gof.chi2_pvalue:.4g} "
                      f"support offset={gof.support_offset:.4f}")
                ok &= (gof.tv_distance < cfg.gates["tv_distance"]
                       and gof.chi2_pvalue > cfg.gates["chi2_pvalue"]
                       and gof.support_pass)
            k += 1
        if not found:
            print(f"no samples_eps*.csv under {out}", file=sys.stderr)
            return 2
        print("verification:", "pass" if ok else "FAIL")
        return 0 if ok else 1

    if args.command == "render":
        from .render import render_tiling

        region = _region_from_args(args, cfg)
        if args.tiling:
            t = tiling_from_text(Path(args.tiling).read_text())
        else:
            t = sample_exact(build_system(region),
                             np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
        out.mkdir(parents=True, exist_ok=True)
        path = out / "tiling.svg"
        render_tiling(region, t, path, height_overlay=args.height_overlay)
        print(f"wrote {path}")
        return 0

    if args.command == "run":
        manifest, ok = run_experiment(cfg, threads=args.threads,
                                      eps_index=args.eps_index,
                                      out_dir=args.out)
        print(f"manifest: {len(manifest['files'])} artifacts, "
              f"gates {'passed' if ok else 'FAILED'}")
        return 0 if ok else 1

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
