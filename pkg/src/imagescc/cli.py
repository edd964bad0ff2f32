"""Command-line entry point.

Commands: ``fit``, ``scc one``, ``scc two``, ``simulate coverage|power|detect``
and ``select-tri``. Exit codes: 0 success, 2 bad input, 3 numerical failure,
4 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .data import FIXTURES, fixture_paths, load_fixture
from .errors import ConfigError, InputError, NumericError, SccError
from .estimator import fit_mean
from .fpca import fpca
from .geometry import load_mesh, mesh_stats
from .io import (RunConfig, band_summary, load_images, parse_rho, write_band_csv, write_exceedance_csv,
                 write_json, write_report, write_surface_csv)
from .parallel import default_threads
from .pipeline import FitConfig, eta_system, mean_system
from .scc import BASIC, TwoSampleContext, scc_one_multi, scc_two_multi

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_CONFIG = 0, 2, 3, 4


class _Stage:
    name = "startup"


@contextmanager
def stage(tracker: _Stage, name: str):
    tracker.name = name
    yield


# ---------------------------------------------------------------------- argument helpers


def _add_mesh_args(p, prefix="mesh", required=True, help_role="mean"):
    g = p.add_argument_group(f"{help_role} mesh")
    g.add_argument(f"--{prefix}", help=f"fixture name ({', '.join(FIXTURES)}) for the {help_role} mesh")
    g.add_argument(f"--{prefix}-v", help="vertex CSV (id,z1,z2)")
    g.add_argument(f"--{prefix}-t", help="triangle CSV (id,v1,v2,v3)")
    p.set_defaults(**{f"_{prefix.replace('-', '_')}_required": required})


def _mesh_spec(args, prefix="mesh"):
    key = prefix.replace("-", "_")
    name, v, t = getattr(args, key), getattr(args, f"{key}_v"), getattr(args, f"{key}_t")
    if name and (v or t):
        raise ConfigError(f"give either --{prefix} or --{prefix}-v/--{prefix}-t, not both")
    if name:
        try:
            fixture_paths(name)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        return {"fixture": name}
    if v or t:
        if not (v and t):
            raise ConfigError(f"--{prefix}-v and --{prefix}-t must be given together")
        return {"vertices": v, "triangles": t}
    if getattr(args, f"_{key}_required"):
        raise ConfigError(f"a mesh is required (--{prefix} or --{prefix}-v/--{prefix}-t)")
    return None


def load_mesh_spec(spec):
    if spec is None:
        return None
    if "fixture" in spec:
        return load_fixture(spec["fixture"])
    for key in ("vertices", "triangles"):
        if not Path(spec[key]).exists():
            raise InputError(f"{spec[key]}: no such file")
    return load_mesh(spec["vertices"], spec["triangles"])


def _add_space_args(p):
    p.add_argument("--degree", type=int, default=5)
    p.add_argument("--smoothness", type=int, default=1)
    p.add_argument("--eta-degree", type=int, default=2)
    p.add_argument("--eta-smoothness", type=int, default=1)
    p.add_argument("--rho", default="auto", help="'auto' (GCV) or a nonnegative value")
    p.add_argument("--rho-eta", default="auto")


def _add_band_args(p):
    p.add_argument("--alpha", type=float, nargs="+", default=[0.05])
    p.add_argument("--B", type=int, default=1000, help="Monte Carlo draws for the quantile")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", choices=["basic", "adjusted"], default=BASIC)
    p.add_argument("--kappa", default="fve:0.95", help="fve:<tau> or k:<int>")


def _threads(args) -> int:
    return default_threads() if args.threads is None else args.threads


def _config(args, command, images=(), meshes=None, alphas=None, **extra) -> RunConfig:
    cfg = RunConfig(
        command=command,
        images=[str(p) for p in images],
        meshes=meshes or {},
        degree=getattr(args, "degree", 5),
        smoothness=getattr(args, "smoothness", 1),
        eta_degree=getattr(args, "eta_degree", 2),
        eta_smoothness=getattr(args, "eta_smoothness", 1),
        rho=parse_rho(getattr(args, "rho", "auto")),
        rho_eta=parse_rho(getattr(args, "rho_eta", "auto")),
        alphas=list(alphas if alphas is not None else getattr(args, "alpha", [0.05])),
        B=getattr(args, "B", 1000),
        seed=getattr(args, "seed", 0),
        variant=getattr(args, "variant", BASIC),
        kappa=getattr(args, "kappa", "fve:0.95"),
        out=str(args.out),
        extra=extra,
        threads=_threads(args),
    )
    return cfg.validate()


def _fit_config(cfg: RunConfig) -> FitConfig:
    return FitConfig(cfg.degree, cfg.smoothness, cfg.eta_degree, cfg.eta_smoothness, cfg.rho, cfg.rho_eta,
                     cfg.kappa)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _afmt(a: float) -> str:
    return f"{a:g}"


# ---------------------------------------------------------------------- commands


def cmd_fit(args, st: _Stage) -> int:
    with stage(st, "configuration"):
        spec = _mesh_spec(args)
        cfg = _config(args, "fit", [args.images], {"mean": spec})
    with stage(st, "loading mesh"):
        mesh = load_mesh_spec(spec)
    with stage(st, "loading images"):
        stack = load_images(args.images, mesh)
    with stage(st, "building spline space"):
        system = mean_system(mesh, _fit_config(cfg))
    with stage(st, "fitting mean"):
        fit = fit_mean(stack, system, cfg.rho)
    with stage(st, "writing outputs"):
        out = _outdir(cfg)
        write_report(out / "fit.json", {
            "n": fit.n, "N": stack.N, "mesh": mesh_stats(mesh),
            "rho": fit.rho, "gcv_value": fit.gcv_value, "hat_trace": fit.hat_trace,
            "gcv_curve": {"rho": fit.gcv_rhos, "gcv": fit.gcv_curve},
            "theta": fit.theta, "gamma": fit.gamma,
        }, cfg)
        write_surface_csv(out / "fitted.csv", stack.coords, fit.fitted, "fitted")
    print(f"fit: n={fit.n} N={stack.N} rho={fit.rho:.6g} -> {out}")
    return EXIT_OK


def _prior_fit(path):
    """Mean-space settings recorded by an earlier ``fit`` run."""
    p = Path(path)
    if not p.exists():
        raise InputError(f"{p}: no such file")
    try:
        rep = json.loads(p.read_text(encoding="utf-8"))
        c = rep["provenance"]["config"]
        return c["meshes"]["mean"], c["degree"], c["smoothness"], float(rep["rho"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"{p}: not a fit report ({exc})") from None


def _group_models(stack, sys_mu, sys_eta, fcfg, area):
    fit = fit_mean(stack, sys_mu, fcfg.rho)
    model = fpca(stack, fit, sys_eta, fcfg.rho_eta, fcfg.kappa, domain_area=area)
    return fit, model


def _group_info(fit, model) -> dict:
    return {"n": fit.n, "rho": fit.rho, "rho_eta": model.rho_eta, "kappa": model.kappa,
            "eigenvalues": model.eigenvalues[: max(model.kappa, 5)]}


def cmd_scc(args, st: _Stage) -> int:
    two = args.which == "two"
    with stage(st, "configuration"):
        if two and not args.images2:
            raise ConfigError("scc two needs --images2")
        if args.fit:
            spec, deg, smo, rho = _prior_fit(args.fit)
            args.degree, args.smoothness, args.rho = deg, smo, repr(rho)
        else:
            spec = _mesh_spec(args)
            if spec is None:
                raise ConfigError("a mesh is required (--mesh, --mesh-v/--mesh-t or --fit)")
        eta_spec = _mesh_spec(args, "eta-mesh") or spec
        images = [args.images] + ([args.images2] if two else [])
        cfg = _config(args, f"scc {args.which}", images, {"mean": spec, "eta": eta_spec},
                      fit=str(args.fit) if args.fit else None)
        fcfg = _fit_config(cfg)
    with stage(st, "loading mesh"):
        mesh = load_mesh_spec(spec)
        mesh_eta = load_mesh_spec(eta_spec)
    with stage(st, "loading images"):
        stacks = [load_images(p, mesh) for p in images]
        for s in stacks[1:]:
            if s.coords.shape != stacks[0].coords.shape or not np.array_equal(s.coords, stacks[0].coords):
                raise InputError("the two image files list different pixels")
        for s in stacks:
            s.check_domain(mesh_eta)
    with stage(st, "building spline spaces"):
        sys_mu, sys_eta = mean_system(mesh, fcfg), eta_system(mesh_eta, fcfg)
    groups = []
    for gi, s in enumerate(stacks, start=1):
        with stage(st, f"fitting group {gi}"):
            groups.append(_group_models(s, sys_mu, sys_eta, fcfg, mesh.area))
    with stage(st, "simultaneous bands"):
        if two:
            ctx = TwoSampleContext(groups[0][0], groups[0][1], groups[1][0], groups[1][1])
            bands = scc_two_multi(ctx, cfg.alphas, cfg.B, cfg.seed, cfg.variant)
        else:
            bands = scc_one_multi(groups[0][0], groups[0][1], cfg.alphas, cfg.B, cfg.seed, cfg.variant)
    with stage(st, "writing outputs"):
        out = _outdir(cfg)
        for a, band in bands.items():
            write_band_csv(out / f"band_alpha{_afmt(a)}.csv", band)
            write_exceedance_csv(out / f"exceedance_alpha{_afmt(a)}.csv", band)
        write_report(out / "summary.json", {
            "groups": [_group_info(f, m) for f, m in groups],
            "bands": {_afmt(a): band_summary(b) for a, b in bands.items()},
        }, cfg)
    for a, b in bands.items():
        print(f"scc {args.which}: alpha={a:g} q={b.quantile:.4f} mean width={b.mean_width:.4f} "
              f"excludes zero={b.excludes_zero()}")
    return EXIT_OK


def _sim_common(p):
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--grid", type=int, default=40, help="lattice points along z1")
    p.add_argument("--grid2", type=int, default=None, help="lattice points along z2 (default: --grid)")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--alpha", type=float, nargs="+", default=None)
    p.add_argument("--B", type=int, default=1000)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--variant", choices=["basic", "adjusted"], default=BASIC)
    p.add_argument("--domain", default="brain_d1", help="fixture whose domain masks the lattice")
    p.add_argument("--kappa", default="fve:0.95")
    p.add_argument("--full", action="store_true", help="full-scale replicate count (1000)")


def _sim_design(args, name, **kw):
    from .simulation import named_design

    over = dict(n=args.n, grid=args.grid, grid2=args.grid2, seed=args.seed, domain=args.domain, **kw)
    if args.alpha:
        over["alphas"] = tuple(args.alpha)
    d = named_design(name, **over)
    reps = 1000 if args.full else (args.reps if args.reps is not None else d.reps)
    if reps < 1:
        raise ConfigError("reps must be positive")
    return d.with_(reps=reps)


def _write_table(out: Path, stem: str, table, cfg: RunConfig):
    (out / f"{stem}.csv").write_text(table.to_csv(), encoding="utf-8", newline="\n")
    (out / f"{stem}.txt").write_text(table.to_text(), encoding="utf-8", newline="\n")
    write_report(out / f"{stem}.json", {"table": table.as_dict()}, cfg)
    print(table.to_text())


def cmd_simulate(args, st: _Stage) -> int:
    from .experiments import run_coverage, run_detection, run_power

    with stage(st, "configuration"):
        for m in args.mesh:
            try:
                fixture_paths(m)
            except KeyError as exc:
                raise ConfigError(str(exc.args[0])) from None
        sigma = args.sigma
        if sigma != "hetero":
            try:
                sigma = float(sigma)
            except ValueError:
                raise ConfigError("--sigma must be 'hetero' or a number") from None
        if args.which == "coverage":
            design = _sim_design(args, "one_sample", mean_id=args.mean, sigma=sigma)
        elif args.which == "power":
            design = _sim_design(args, "two_sample", mean_id=args.mean, sigma=sigma, n2=args.n2)
        else:
            design = _sim_design(args, "detection", sigma=sigma)
        design.mean_fn()
        cfg = _config(args, f"simulate {args.which}", [], {"mean": {"fixtures": args.mesh}}, alphas=design.alphas,
                      design={k: v for k, v in vars(design).items() if k != "custom_mean"},
                      deltas=getattr(args, "delta", None), thresholds=getattr(args, "thresholds", None),
                      n_flip=getattr(args, "n_flip", None))
        fcfg = FitConfig(kappa=cfg.kappa)
        out = _outdir(cfg)
    with stage(st, f"simulating {args.which}"):
        th = cfg.threads
        if args.which == "coverage":
            table = run_coverage(design, args.mesh, design.alphas, design.reps, cfg.B, cfg.variant, fcfg, threads=th)
        elif args.which == "power":
            table = run_power(design, args.delta, args.mesh, design.alphas, design.reps, cfg.B, cfg.variant, fcfg,
                              threads=th)
        else:
            table = run_detection(design, args.mesh[0], design.alphas[0], tuple(args.thresholds), design.reps,
                                  cfg.B, args.n_flip, cfg.variant, fcfg, threads=th)
    with stage(st, "writing outputs"):
        _write_table(out, args.which, table, cfg)
    return EXIT_OK


def _candidate(text: str):
    if ":" in text:
        v, t = text.split(":", 1)
        return {"vertices": v, "triangles": t}
    try:
        fixture_paths(text)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    return {"fixture": text}


def cmd_select(args, st: _Stage) -> int:
    from .tri_select import select_triangulations

    with stage(st, "configuration"):
        specs = [_candidate(c) for c in args.candidate]
        eta_specs = [_candidate(c) for c in args.eta_candidate] if args.eta_candidate else specs
        if args.k < 2:
            raise ConfigError("k must be at least 2")
        if not 0 < args.delta < min(args.alpha[0], 1 - args.alpha[0]):
            raise ConfigError("delta must be positive and keep [alpha - delta, alpha + delta] inside (0, 1)")
        cfg = _config(args, "select-tri", [args.images], {"mean_candidates": specs, "eta_candidates": eta_specs},
                      k=args.k, delta=args.delta, B_boot=args.B_boot, reselect_rho=not args.freeze_rho)
        fcfg = _fit_config(cfg)
    with stage(st, "loading meshes"):
        mus = [load_mesh_spec(s) for s in specs]
        etas = [load_mesh_spec(s) for s in eta_specs]
    with stage(st, "loading images"):
        stack = load_images(args.images)
    with stage(st, "triangulation selection"):
        rep = select_triangulations(stack, mus, etas, k=args.k, B=args.B_boot, alpha=cfg.alphas[0], delta=args.delta,
                                    seed=cfg.seed, cfg=fcfg, B_scc=cfg.B, variant=cfg.variant,
                                    reselect_rho=not args.freeze_rho, domain_area=mus[0].area,
                                    threads=cfg.threads)
    with stage(st, "writing outputs"):
        out = _outdir(cfg)
        write_report(out / "selection.json", {"selection": rep.as_dict()}, cfg)
    print(f"select-tri: mean mesh {rep.chosen_mu}, covariance mesh {rep.chosen_eta}")
    return EXIT_OK


# ---------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="imagescc", description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="penalized spline fit of the mean image")
    p.add_argument("--images", required=True)
    _add_mesh_args(p)
    _add_space_args(p)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("scc", help="simultaneous confidence corridors")
    p.add_argument("which", choices=["one", "two"])
    p.add_argument("--images", required=True)
    p.add_argument("--images2")
    p.add_argument("--fit", help="reuse mesh, spline space and rho from a fit.json")
    _add_mesh_args(p, required=False)
    _add_mesh_args(p, "eta-mesh", required=False, help_role="covariance")
    _add_space_args(p)
    _add_band_args(p)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_scc)

    p = sub.add_parser("simulate", help="Monte Carlo studies")
    p.add_argument("which", choices=["coverage", "power", "detect"])
    _sim_common(p)
    p.add_argument("--mean", default="quadratic")
    p.add_argument("--mesh", nargs="+", default=["brain_d1"], help="fixture meshes for the mean fit")
    p.add_argument("--sigma", default=None, help="'hetero' or a constant (default depends on the study)")
    p.add_argument("--delta", type=float, nargs="+", default=[0.0, 0.1, 0.2, 0.3], help="power study shifts")
    p.add_argument("--n2", type=int, default=None)
    p.add_argument("--thresholds", type=float, nargs="+", default=[0.10, 0.05, 0.01], help="cluster p thresholds")
    p.add_argument("--n-flip", type=int, default=100)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("select-tri", help="data-driven triangulation choice")
    p.add_argument("--images", required=True)
    p.add_argument("--candidate", nargs="+", required=True, help="fixture names or VERTICES.csv:TRIANGLES.csv")
    p.add_argument("--eta-candidate", nargs="+", default=None)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--B-boot", type=int, default=100, help="wild bootstrap replicates")
    p.add_argument("--delta", type=float, default=0.005)
    p.add_argument("--freeze-rho", action="store_true", help="keep the original rho in bootstrap refits")
    _add_space_args(p)
    _add_band_args(p)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_select)
    return ap


def _default_sigma(args):
    if getattr(args, "command", None) == "simulate" and args.sigma is None:
        args.sigma = "0.1" if args.which == "power" else "hetero"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _default_sigma(args)
    st = _Stage()
    try:
        return args.func(args, st)
    except ConfigError as exc:
        print(f"imagescc: configuration error during {st.name}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, OSError) as exc:
        print(f"imagescc: input error during {st.name}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"imagescc: numerical failure during {st.name}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SccError as exc:
        print(f"imagescc: error during {st.name}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"imagescc: configuration error during {st.name}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
