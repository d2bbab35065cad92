"""Command-line entry point: ``nlslab <subcommand> ...``.

Exit codes: 0 success, 2 usage, 3 configuration, 4 failed precondition,
5 numerical failure.  Errors are also printed to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import warnings
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .dynamics import SolverConfig, evolve, pseudoconformal_report
from .exponents import PhysParams, exponent_report
from .fitting import fit_power_law
from .io import ConfigError, RunTimer, dump_json, load_config, write_field, write_manifest
from .lab import SweepConfig, holder_probe, quotient_blowup_test, run_scaling_sweep, scalar_model
from .scattering import (
    ConvergenceError,
    ScatteringConfig,
    born_term,
    build_mesh,
    expansion_error,
    mesh_spacetime_norm,
    scattering_state,
    wave_operator,
)
from .spectral import Grid, NonIntegrableTailError, l2_norm, make_profile, sigma_norm, zeros

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_NUMERICAL = 0, 2, 3, 4, 5
COMMANDS = ("exponents", "simulate", "born", "scatter", "wave", "expand", "sweep", "fit", "probe")

log = logging.getLogger("scatterlab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nlslab", description="Scattering maps and scaling experiments for the defocusing NLS.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--out", help="output directory (default runs/<command>)")
        p.add_argument("--d", type=int, help="spatial dimension (overrides config)")
        p.add_argument("--p", type=float, help="nonlinearity power (overrides config)")
        p.add_argument("-v", "--verbose", action="store_true")

    e = sub.add_parser("exponents", help="closed-form exponents as JSON")
    common(e, config=False)
    e.add_argument("--eta", type=float, default=1.0)
    e.add_argument("--nu", type=float, default=1.0)

    s = sub.add_parser("simulate", help="Strang evolution with conservation report")
    common(s)
    s.add_argument("--snapshots", action="store_true", help="write every sampled field")

    for name, desc in (("born", "Born term B(φ)"), ("scatter", "scattering state S(φ)"), ("wave", "wave operator W(ψ)")):
        c = sub.add_parser(name, help=desc)
        common(c)

    x = sub.add_parser("expand", help="expansion T(φ) = φ ± iB(φ) + e(φ)")
    common(x)
    x.add_argument("--map", choices=["S", "W"])
    x.add_argument("--dump-fields", action="store_true")

    w = sub.add_parser("sweep", help="(eps, sigma) sweep with quotient fits")
    common(w)

    f = sub.add_parser("fit", help="power-law fit of two CSV columns")
    f.add_argument("csv", help="input CSV; '# key=value' comment lines are read as metadata")
    f.add_argument("--x", default="x")
    f.add_argument("--y", default="y")
    f.add_argument("--out")
    f.add_argument("-v", "--verbose", action="store_true")

    pr = sub.add_parser("probe", help="pointwise Hölder probe")
    common(pr)
    pr.add_argument("--model", choices=["scalar", "S", "W"])
    pr.add_argument("--s", type=float)
    return ap


# --- config assembly -------------------------------------------------------

def _cfg(args) -> dict:
    cfg = load_config(args.config) if getattr(args, "config", None) else {}
    phys = cfg.setdefault("physics", {})
    if getattr(args, "d", None) is not None:
        phys["d"] = args.d
    if getattr(args, "p", None) is not None:
        phys["p"] = args.p
    return cfg


def _build(fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _params(cfg) -> PhysParams:
    ph = cfg.get("physics", {})
    if "d" not in ph or "p" not in ph:
        raise ConfigError("physics.d and physics.p are required")
    return _build(PhysParams, ph["d"], ph["p"])


def _grid(cfg, d) -> Grid:
    g = cfg.get("grid", {})
    return _build(Grid, d, g.get("n", 512), g.get("L", 64.0))


def _profile(cfg, grid):
    pr = cfg.get("profile", {})
    base = _build(make_profile, pr.get("name", "gaussian"), grid, width=pr.get("width", 1.0))
    return base * pr.get("amplitude", 0.05)


def _scattering(cfg, params, grid) -> ScatteringConfig:
    sc = {k: v for k, v in cfg.get("scattering", {}).items() if k != "map"}
    return _build(ScatteringConfig, params, grid, **sc)


def _out(args) -> Path:
    return Path(args.out or Path("runs") / args.command)


# --- commands --------------------------------------------------------------

def cmd_exponents(args, cfg, out, outputs):
    params = _params(cfg)
    rep = _build(exponent_report, params, args.eta, args.nu).as_dict()
    path = out / "exponents.json"
    dump_json(rep, path)
    outputs.append(path)
    return rep


def cmd_simulate(args, cfg, out, outputs):
    params = _params(cfg)
    grid = _grid(cfg, params.d)
    phi = _profile(cfg, grid)
    so = dict(cfg.get("solver", {}))
    so.setdefault("dt", 0.01)
    so.setdefault("T", 10.0)
    sc = cfg.get("scattering", {})
    scfg = _build(SolverConfig, grid=grid, params=params, smallness=sc.get("smallness", 0.1), **so)
    traj = evolve(phi, scfg)
    rep = pseudoconformal_report(traj)
    path = out / "report.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "mass", "energy", "e", "U", "lp2_norm"])
        for i, t in enumerate(rep.times):
            wr.writerow([repr(t), repr(rep.mass[i]), repr(rep.energy[i]), repr(rep.e[i]), repr(rep.U[i]),
                         repr(rep.potential[i] ** (1.0 / (params.p + 2)))])
    outputs.append(path)
    summary = {"mass_drift": rep.mass_drift, "energy_drift": rep.energy_drift, "gronwall_ok": rep.gronwall_ok,
               "decay_fit": rep.decay_fit.as_dict() if rep.decay_fit else None,
               "decay_expected": rep.decay_expected, "max_phase": traj.max_phase, "notes": rep.notes}
    dump_json(rep.as_dict(), out / "report.json")
    outputs.append(out / "report.json")
    write_field(out / "final.nlsf", traj.final)
    outputs.append(out / "final.nlsf")
    if args.snapshots:
        for i, (t, u) in enumerate(traj):
            p = out / f"snapshot_{i:04d}.nlsf"
            write_field(p, u)
            outputs.append(p)
    return summary


def _maps_setup(cfg):
    params = _params(cfg)
    grid = _grid(cfg, params.d)
    return params, grid, _profile(cfg, grid), _scattering(cfg, params, grid)


def cmd_born(args, cfg, out, outputs):
    params, grid, phi, scfg = _maps_setup(cfg)
    mesh = build_mesh(phi, scfg)
    B = born_term(phi, scfg, mesh)
    st = mesh_spacetime_norm(phi, mesh, params.p + 2)
    pairing = float(np.real(np.sum(np.conj(phi.values) * B.values)) * grid.cell)
    write_field(out / "born.nlsf", B)
    outputs.append(out / "born.nlsf")
    return {"born_norm": l2_norm(B), "pairing": pairing, "spacetime_norm": st,
            "duality_relative_gap": abs(pairing - st) / st if st else 0.0, "steps": len(mesh), "t_switch": mesh.t_switch}


def cmd_scatter(args, cfg, out, outputs):
    params, grid, phi, scfg = _maps_setup(cfg)
    r = scattering_state(phi, scfg)
    write_field(out / "state.nlsf", r.value)
    outputs.append(out / "state.nlsf")
    return {"increment_norm": l2_norm(r.increment), "phi_sigma": sigma_norm(phi), **r.meta}


def cmd_wave(args, cfg, out, outputs):
    params, grid, psi, scfg = _maps_setup(cfg)
    r = wave_operator(psi, scfg)
    write_field(out / "wave.nlsf", r.value)
    outputs.append(out / "wave.nlsf")
    return {"increment_norm": l2_norm(r.increment), "psi_sigma": sigma_norm(psi), **r.meta}


def cmd_expand(args, cfg, out, outputs):
    params, grid, phi, scfg = _maps_setup(cfg)
    which = args.map or cfg.get("scattering", {}).get("map", "S")
    rep = expansion_error(phi, which, scfg)
    summary = rep.summary()
    if args.dump_fields:
        for name, f in (("value", rep.value), ("born", rep.born), ("error", rep.error)):
            p = out / f"{name}.nlsf"
            write_field(p, f)
            outputs.append(p)
    dump_json(summary, out / "expansion.json")
    outputs.append(out / "expansion.json")
    return summary


def cmd_sweep(args, cfg, out, outputs):
    params = _params(cfg)
    sw = dict(cfg.get("sweep", {}))
    g = cfg.get("grid", {})
    sc = cfg.get("scattering", {})
    width = sw.pop("width", 4.0)
    kw = dict(d=params.d, p=params.p, profile=sw.pop("profile", "gaussian"), profile_params={"width": width},
              n=g.get("n", 2048), L=g.get("L", 1024.0), **sw)
    for k in ("steps", "smallness", "tol"):
        if k in sc:
            kw[k] = sc[k]
    scfg = _build(SweepConfig, **kw)
    path = out / "sweep.csv"
    records = run_scaling_sweep(scfg, output=str(path))
    outputs.append(path)
    dat = out / "sweep_quotient.dat"
    with open(dat, "w") as fh:
        fh.write("# sigma sigma_quotient\n")
        for r in records:
            fh.write(f"{r.sigma!r} {r.sigma_quotient!r}\n")
    outputs.append(dat)
    failed = [r.status for r in records if not r.ok]
    verdicts = {}
    if len(records) - len(failed) >= 4:
        verdicts["sigma_s"] = quotient_blowup_test(records, params, scfg.j, s=scfg.s).as_dict()
        verdicts["sigma_critical"] = quotient_blowup_test(records, params, scfg.j, s=1 + params.p).as_dict()
        beta = params.p if scfg.beta is None else scfg.beta
        verdicts["l2"] = quotient_blowup_test(records, params, scfg.j, beta=beta).as_dict()
    summary = {"records": len(records), "failed": failed, "config_hash": scfg.config_hash(),
               "main_dominates": all(r.main_dominates for r in records if r.ok), "verdicts": verdicts}
    dump_json(summary, out / "verdict.json")
    outputs.append(out / "verdict.json")
    return summary


def read_columns(path, xcol, ycol):
    meta, rows = {}, []
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                for tok in line[1:].split():
                    k, sep, v = tok.partition("=")
                    if sep and k and v:
                        meta[k] = v
            elif line.strip():
                lines.append(line)
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or xcol not in reader.fieldnames or ycol not in reader.fieldnames:
        raise ConfigError(f"CSV needs columns {xcol!r} and {ycol!r}")
    for row in reader:
        try:
            rows.append((float(row[xcol]), float(row[ycol])))
        except (TypeError, ValueError):
            raise ConfigError(f"non-numeric entry in {path}: {row}") from None
    x, y = map(np.array, zip(*rows)) if rows else (np.array([]), np.array([]))
    return x, y, meta


def cmd_fit(args, cfg, out, outputs):
    if not Path(args.csv).exists():
        raise ConfigError(f"input file not found: {args.csv}")
    x, y, meta = read_columns(args.csv, args.x, args.y)
    fit = fit_power_law(x, y)
    res = {"fit": fit.as_dict(), "metadata": meta}
    if "slope" in meta:
        expected = float(meta["slope"])
        res["expected_slope"] = expected
        res["slope_error"] = abs(fit.slope - expected)
    dump_json(res, out / "fit.json")
    outputs.append(out / "fit.json")
    return res


def cmd_probe(args, cfg, out, outputs):
    pc = cfg.get("probe", {})
    model = args.model or pc.get("model", "scalar")
    s = args.s if args.s is not None else pc.get("s", 4.5)
    if model == "scalar":
        cfg.setdefault("physics", {}).setdefault("d", 1)
    params = _params(cfg)
    if model == "scalar":
        eps = np.geomspace(pc.get("eps_min", 1e-3), pc.get("eps_max", 1e-1), pc.get("count", 12))
        fit = holder_probe(scalar_model(params.p), 0.0, 1.0, s, eps, base="0", direction="1")
    else:
        grid = _grid(cfg, params.d)
        scfg = _scattering(cfg, params, grid)
        h = _build(make_profile, cfg.get("profile", {}).get("name", "gaussian"), grid,
                   width=cfg.get("profile", {}).get("width", 1.0))
        h = h * (1.0 / sigma_norm(h))
        G = (lambda x: scattering_state(x, scfg).value) if model == "S" else (lambda x: wave_operator(x, scfg).value)
        eps = np.geomspace(pc.get("eps_min", 1e-2), pc.get("eps_max", 0.5), pc.get("count", 8))
        fit = holder_probe(G, zeros(grid), h, s, eps, base="0", direction="unit-Sigma profile")
    res = fit.as_dict()
    dump_json(res, out / "probe.json")
    outputs.append(out / "probe.json")
    return res


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def _fail(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail(EXIT_USAGE, exc)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return _fail(EXIT_USAGE, UsageError("a subcommand is required"))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    timer = RunTimer()
    out = _out(args)
    outputs: list = []
    cfg: dict = {}
    caught: list = []
    code, status, result = EXIT_OK, "ok", None
    try:
        cfg = _cfg(args) if args.command != "fit" else {}
        out.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result = HANDLERS[args.command](args, cfg, out, outputs)
    except ConfigError as exc:
        code, status = _fail(EXIT_CONFIG, exc), "config_error"
    except (NonIntegrableTailError, ConvergenceError, FloatingPointError) as exc:
        code, status = _fail(EXIT_NUMERICAL, exc), "numerical_error"
    except ValueError as exc:
        code, status = _fail(EXIT_PRECONDITION, exc), "precondition_failed"
    timer.mark("done")
    msgs = [f"{w.category.__name__}: {w.message}" for w in caught or []]
    for m in msgs:
        print(m, file=sys.stderr)
    seed = cfg.get("run", {}).get("seed") if cfg else None
    try:
        write_manifest(out, args.command, argv, cfg, timer, outputs, status, seed=seed, extra={"warnings": msgs})
    except OSError as exc:
        log.error("could not write manifest: %s", exc)
    if result is not None:
        print(dump_json(result))
    return code


cli_main = main


if __name__ == "__main__":
    sys.exit(main())
