"""Command-line experiment runner.

Subcommands::

    geowave run          --config cfg.json --out DIR [--seed S] [--threads K] [--diag a,b]
    geowave convergence  --config cfg.json --axis {dt,h,m} [--levels 3 | --levels 1e2,1e3,...]
    geowave noise-test   [--config cfg.json] [--out DIR]
    geowave geometry-test [--config cfg.json] [--samples N]
    geowave energy-check --config cfg.json [--out DIR]

Exit status: 0 success, 1 a check ran but did not pass, 2 invalid
configuration or arguments, 3 numerical failure (non-finite values,
stiffness or blow-up).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import checks
from . import manifold as mf
from . import noise as nz
from . import solver as sv
from .config import ConfigError, ExperimentConfig, load_config
from .diagnostics import energy as en
from .diagnostics import residuals as rs
from .diagnostics.decay import DecayConfig, is_geometric, loglog_slope, penalty_decay_study
from .diagnostics.momentum import reconstruct_velocity
from .grid import laplacian

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3


def _write_csv(path: Path, columns: dict):
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names]) if names else np.empty((0, 0))
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def _write_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


# ----------------------------------------------------------------------------
# run
# ----------------------------------------------------------------------------


def _make_recorders(cfg: ExperimentConfig, names, spec):
    stride = cfg.doc["time"]["stride"]
    recs = {}
    if "energy" in names:
        recs["energy"] = sv.EnergyRecorder(stride)
    if "momentum" in names and spec is not None:
        recs["momentum"] = sv.MomentumRecorder(spec, stride)
    if "constraint" in names and spec is not None:
        recs["constraint"] = sv.ConstraintRecorder(spec, stride)
    if "reconstruction" in names and spec is not None and cfg.doc["scheme"]["type"] == "projected":
        recs["reconstruction"] = sv.FunctionRecorder(
            lambda st, p: np.atleast_1d(_reconstruction_error(st, spec)), "reconstruction_error", stride)
    if "local_energy" in names:
        win = _window(cfg)
        s2 = en.s_squared(cfg.raw_coefficients())

        def local(st, p):
            try:
                return np.atleast_1d(en.local_energy(st, win, p.grid, s2, spec))
            except ValueError:  # past the horizon or the ball has emptied
                return np.full(st.U.shape[0], np.nan)

        recs["local_energy"] = sv.FunctionRecorder(local, "local_energy", stride)
    if "weak_residual" in names:
        recs["trajectory"] = sv.TrajectoryRecorder(1)
    return recs


def _reconstruction_error(state, spec):
    U, V = state.U, state.V
    out = []
    for j in range(U.shape[0]):
        _, rep = reconstruct_velocity(sv.State(U[j], V[j], state.t), spec)
        out.append(rep.reconstruction_error)
    return np.array(out)


def _window(cfg: ExperimentConfig) -> en.EnergyWindow:
    w = cfg.doc["diagnostics"].get("window", {})
    L = cfg.doc["grid"]["L"]
    center = w.get("center", [L / 2] * cfg.doc["grid"]["d"])
    horizon = float(w.get("horizon", cfg.doc["time"]["horizon"]))
    m = cfg.doc["scheme"]["m"]
    return en.EnergyWindow(tuple(center), horizon, penalty=m > 0, penalty_strength=m)


def _run_chunk(cfg: ExperimentConfig, params, members, names):
    spec = params.manifold
    recs = _make_recorders(cfg, names, spec)
    init = cfg.initial_state(members)
    res = sv.simulate(init, params, cfg.n_steps, list(recs.values()), members=members)
    return recs, res


def _merge_columns(chunks):
    """Concatenate per-member columns of chunked recorders, keyed by member index."""
    merged = {}
    for members, recs in chunks:
        for name, rec in recs.items():
            if name == "trajectory":
                continue
            cols = rec.columns()
            out = merged.setdefault(name, {"step": cols["step"], "time": cols["time"]})
            for key, val in cols.items():
                if key in ("step", "time"):
                    continue
                base, sep, idx = key.rpartition("_")
                if sep and idx.isdigit() and int(idx) < len(members):
                    out[f"{base}_{members[int(idx)]}"] = val
                else:
                    out[f"{key}_{members[0]}"] = val

    def order(key):
        base, _, idx = key.rpartition("_")
        return (base, int(idx))

    # canonical column order, independent of how members were chunked
    return {name: {"step": cols["step"], "time": cols["time"],
                   **{k: cols[k] for k in sorted((k for k in cols if k not in ("step", "time")), key=order)}}
            for name, cols in merged.items()}


def _summarize(name, cols):
    vals = {k: np.asarray(v) for k, v in cols.items() if k not in ("step", "time")}
    if name == "momentum":
        drift = 0.0
        for v in vals.values():
            scale = max(np.max(np.abs(v)), 1e-300)
            drift = max(drift, float(np.max(np.abs(v - v[0])) / scale))
        return {"max_relative_drift": drift}
    if name == "energy":
        e = {k: v for k, v in vals.items() if k.startswith("energy")}
        me = {k: v for k, v in vals.items() if k.startswith("modified")}
        rel = lambda d: max((float(np.max(np.abs(v - v[0])) / max(abs(v[0]), 1e-300)) for v in d.values()), default=0.0)  # noqa: E731
        return {"max_relative_energy_change": rel(e), "max_relative_modified_energy_change": rel(me)}
    if name == "constraint":
        return {"max_distance": max(float(np.max(v)) for k, v in vals.items() if k.startswith("distance")),
                "max_penalty_mass": max(float(np.max(v)) for k, v in vals.items() if k.startswith("penalty_mass"))}
    if name == "reconstruction":
        return {"max_reconstruction_error": max(float(np.max(v)) for v in vals.values())}
    if name == "local_energy":
        return {"max_over_initial": max(float(np.nanmax(v / v[0])) for v in vals.values())}
    return {}


def cmd_run(args) -> int:
    cfg = _load(args)
    names = _diag_names(args, cfg)
    params = cfg.params()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    B = cfg.doc["ensemble"]
    threads = max(1, int(args.threads))
    chunk_ids = [list(c) for c in np.array_split(np.arange(B), min(threads, B)) if len(c)]
    if threads == 1:
        results = [_run_chunk(cfg, params, ids, names) for ids in chunk_ids]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda ids: _run_chunk(cfg, params, ids, names), chunk_ids))
    merged = _merge_columns([(ids, recs) for ids, (recs, _) in zip(chunk_ids, results)])
    for name, cols in merged.items():
        _write_csv(out / f"{name}.csv", cols)
    diag = {"config_hash": cfg.hash, "scheme": cfg.doc["scheme"], "ensemble": B, "steps": cfg.n_steps,
            "dt": params.dt, "h": params.grid.h, "diagnostics": {k: _summarize(k, v) for k, v in merged.items()}}
    if "weak_residual" in names:
        res_u, res_v = [], []
        for ids, (recs, _) in zip(chunk_ids, results):
            tr = recs["trajectory"].trajectory(params)
            phi = rs.bump_test_function(params.grid)
            ru, rv = rs.weak_form_residual(tr, phi)
            res_u += list(np.atleast_1d(ru))
            res_v += list(np.atleast_1d(rv))
        diag["diagnostics"]["weak_residual"] = {"U": res_u, "V": res_v}
    _write_json(out / "config.json", cfg.doc)
    (out / "config_hash.txt").write_text(cfg.hash + "\n")
    _write_json(out / "diagnostics.json", diag)
    print(f"wrote {out} (config {cfg.hash[:12]})")
    return EXIT_OK


# ----------------------------------------------------------------------------
# convergence
# ----------------------------------------------------------------------------


def _parse_levels(text, axis):
    if text is None:
        text = "3"
    if "," not in text and text.strip().isdigit():
        k = int(text)
        if k < 3:
            raise ConfigError("--levels", "need at least 3 levels")
        return k, None
    vals = [float(v) for v in text.split(",")]
    if len(vals) < 3 or not is_geometric(vals):
        raise ConfigError("--levels", f"levels must be a geometric sequence of length >= 3, got {vals}")
    return len(vals), vals


def _final_state(cfg: ExperimentConfig):
    params = cfg.params()
    res = sv.simulate(cfg.initial_state(), params, cfg.n_steps)
    return res.state, params


def _reference(cfg: ExperimentConfig, state, params, axis="h"):
    name = cfg.doc["initial"]["preset"]
    if name == "standing_wave":
        mode = int(cfg.doc["initial"].get("mode", 1))
        if axis == "dt":
            # exact solution of the spatially discrete system, so only the time error remains
            g = params.grid
            k = 2.0 * np.pi * mode / g.length
            w_h = 2.0 / g.h * np.sin(0.5 * k * g.h)
            return cfg.initial_state().U[0] * np.cos(w_h * state.t)
        return sv.standing_wave_exact(params.grid, state.t, n=state.U.shape[-1], mode=mode)
    if name == "great_circle" and params.scheme == "projected" and (params.coefficients is None or params.coefficients.is_zero):
        w = float(cfg.doc["initial"].get("omega", 1.0))
        ref = np.zeros_like(state.U)
        ref[..., 0] = np.cos(w * state.t)
        ref[..., 1] = np.sin(w * state.t)
        return ref
    return None


def cmd_convergence(args) -> int:
    cfg = _load(args)
    nlev, values = _parse_levels(args.levels, args.axis)
    if args.axis == "m" and nlev < 4:
        if args.levels is not None:
            raise ConfigError("--levels", "the m axis needs at least 4 levels")
        nlev = 4
    rows = []
    if args.axis == "m":
        spec = cfg.manifold()
        if spec is None:
            raise ConfigError("manifold", "the m axis needs a manifold")
        m_list = values or [float(cfg.doc["scheme"]["m"] or 100.0) * 10.0 ** j for j in range(nlev)]
        params = cfg.params()
        dt = min(params.dt, 0.5 / np.sqrt(8.0 * max(m_list)))
        dcfg = DecayConfig(grid=params.grid, manifold=spec, initial=lambda: cfg.initial_state(),
                           horizon=cfg.doc["time"]["horizon"], dt=dt, coefficients=params.coefficients,
                           measure=params.measure, seed=cfg.doc["seed"], stride=cfg.doc["time"]["stride"])
        rep = penalty_decay_study(dcfg, m_list, 1)
        for m, dist, mass in zip(rep.m_list, rep.sup_distance, rep.sup_penalty_mass):
            rows.append({"m": m, "error": dist, "penalty_mass": mass})
        fitted = rep.slope
        kind = "distance-slope"
    else:
        if cfg.measure() is not None:
            raise ConfigError("noise", "dt/h refinement compares paths and needs a noise-free configuration")
        factors = values if values is not None else [2.0 ** -j for j in range(nlev)]
        if values is not None:
            factors = [v / values[0] for v in values]
        states, lap_errs, sizes = [], [], []
        for f in factors:
            over = {"time": {"dt": cfg.doc["time"]["dt"] * f}}
            if args.axis == "h":
                over["grid"] = {"P": int(round(cfg.doc["grid"]["P"] / f))}
            c = cfg.with_overrides(**over)
            st, p = _final_state(c)
            ref = _reference(c, st, p, args.axis)
            states.append((st, p, ref))
            sizes.append(p.dt if args.axis == "dt" else p.grid.h)
            if args.axis == "h" and c.doc["initial"]["preset"] == "standing_wave":
                u0 = c.initial_state().U
                k = 2 * np.pi * int(c.doc["initial"].get("mode", 1)) / p.grid.length
                lap_errs.append(float(np.max(np.abs(laplacian(u0, p.grid) + k * k * u0))))
        if all(r is not None for _, _, r in states):
            errs = [float(np.max(np.abs(st.U - ref))) for st, _, ref in states]
            kind = "analytic"
        else:
            # successive differences on the common coarse nodes
            errs = []
            for (a, pa, _), (b, pb, _) in zip(states[:-1], states[1:]):
                stride = pb.grid.points // pa.grid.points
                sub = b.U[(Ellipsis,) + (slice(None, None, stride),) * pa.grid.dim + (slice(None),)] if stride > 1 else b.U
                errs.append(float(np.max(np.abs(a.U - sub))))
            sizes = sizes[:-1]
            kind = "richardson"
        for j, e in enumerate(errs):
            row = {args.axis: sizes[j], "error": e}
            if lap_errs:
                row["laplacian_error"] = lap_errs[j]
            rows.append(row)
        fitted = loglog_slope(sizes, errs)
    table = {k: [r[k] for r in rows] for k in rows[0]}
    out = Path(args.out) if args.out else None
    report = {"axis": args.axis, "reference": kind, "fitted_order": fitted, "rows": rows, "config_hash": cfg.hash}
    if rows and "laplacian_error" in rows[0]:
        report["laplacian_order"] = loglog_slope(table[args.axis], table["laplacian_error"])
    if out:
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / f"convergence_{args.axis}.csv", table)
        _write_json(out / "convergence.json", report)
    for r in rows:
        print("  ".join(f"{k}={v:.6g}" for k, v in r.items()))
    print(f"fitted {'slope' if args.axis == 'm' else 'order'}: {fitted:.4f} ({kind})")
    return EXIT_OK


# ----------------------------------------------------------------------------
# checks
# ----------------------------------------------------------------------------


def cmd_noise_test(args) -> int:
    measures = {}
    if args.config:
        cfg = _load(args)
        if cfg.measure() is not None:
            measures["config"] = cfg.measure()
    if not measures:
        for name in nz.PRESET_MEASURES:
            measures[name] = nz.preset_measure(name, args.dim, wavenumber=3.0)
    results = {name: checks.noise_law(m, draws=args.draws, seed=args.seed or 0) for name, m in measures.items()}
    return _report(args, "noise", results)


def cmd_geometry_test(args) -> int:
    results = {}
    if args.config:
        spec = _load(args).manifold()
        if spec is not None and not spec.is_sphere:
            rep = mf.validate_axioms(spec, args.samples, args.seed)
            results["custom"] = {"violations": rep.violations, "failures": rep.failures(), "passed": rep.ok}
        elif spec is not None:
            results[f"sphere:{spec.ambient_dim}"] = checks.geometry_identities(spec.ambient_dim, args.samples, args.seed or 0)
    if not results:
        for n in (2, 3, 5):
            results[f"sphere:{n}"] = checks.geometry_identities(n, args.samples, args.seed or 0)
    return _report(args, "geometry", results)


def cmd_energy_check(args) -> int:
    cfg = _load(args)
    B = cfg.doc["ensemble"]
    if B < en.MIN_MEMBERS:
        raise ConfigError("ensemble", f"energy-check needs at least {en.MIN_MEMBERS} members, got {B}")
    params = cfg.params()
    spec = params.manifold
    window = _window(cfg)
    s2 = en.s_squared(cfg.raw_coefficients())
    E, t = checks.energy_paths(params, cfg.initial_state(), window, s2, stride=cfg.doc["time"]["stride"])
    mask = en.ball_mask(params.grid, window.center, window.horizon)
    hnorm = np.sqrt(en.h_norm_sq(cfg.initial_state(), params.grid, mask))
    threshold = cfg.doc["diagnostics"].get("event_threshold")
    results = {}
    for L in (en.L_identity, en.L_sqrt):
        rep = en.energy_inequality_mc(E, t, L, hnorm, threshold, seed=cfg.doc["seed"])
        half = en.energy_inequality_mc(E[: B // 2], t, L, hnorm[: B // 2], threshold, seed=cfg.doc["seed"]) \
            if B // 2 >= en.MIN_MEMBERS else None
        d = rep.to_dict()
        d["holds"] = rep.holds()
        if half is not None:
            d["C_half_ensemble"] = half.fitted_C
        d["passed"] = bool(np.isfinite(rep.fitted_C) and rep.holds())
        results[L.name] = d
    results["config_hash"] = cfg.hash
    del spec
    return _report(args, "energy", results)


def _report(args, name, results) -> int:
    ok = all(v.get("passed", True) for v in results.values() if isinstance(v, dict))
    for key, val in results.items():
        if isinstance(val, dict):
            print(f"{name} {key}: {'PASS' if val.get('passed', True) else 'FAIL'}")
    if getattr(args, "out", None):
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / f"{name}_report.json", results)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ----------------------------------------------------------------------------
# plumbing
# ----------------------------------------------------------------------------


def _load(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config", "a configuration file or preset name is required")
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(seed=int(args.seed))
    return cfg


def _diag_names(args, cfg):
    if args.diag:
        names = [n for n in args.diag.split(",") if n]
        cfg_names = cfg.with_overrides(diagnostics={"names": names})
        return cfg_names.doc["diagnostics"]["names"]
    return cfg.doc["diagnostics"]["names"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geowave", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="JSON config file or built-in preset name")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads for ensemble members")
        p.add_argument("--diag", default=None, help="comma-separated diagnostics")

    p = sub.add_parser("run", help="simulate a configuration and write recorder output")
    common(p, True)
    p.set_defaults(func=cmd_run, out_required=True)
    p = sub.add_parser("convergence", help="error table and fitted order along one refinement axis")
    common(p, True)
    p.add_argument("--axis", choices=("dt", "h", "m"), required=True)
    p.add_argument("--levels", default=None, help="number of levels or explicit geometric list")
    p.set_defaults(func=cmd_convergence)
    p = sub.add_parser("noise-test", help="empirical covariance and Hilbert-Schmidt checks")
    common(p)
    p.add_argument("--draws", type=int, default=10_000)
    p.add_argument("--dim", type=int, default=1)
    p.set_defaults(func=cmd_noise_test)
    p = sub.add_parser("geometry-test", help="geometric identities of the target manifold")
    common(p)
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(func=cmd_geometry_test)
    p = sub.add_parser("energy-check", help="Monte-Carlo energy inequality for L = id and sqrt")
    common(p, True)
    p.set_defaults(func=cmd_energy_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    if getattr(args, "out_required", False) and not args.out:
        print("error: --out: required for run", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (sv.NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ConfigError as exc:
        code = EXIT_NUMERICAL if getattr(exc, "numerical", False) else EXIT_INVALID
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return code
    except (ValueError, KeyError, TypeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
