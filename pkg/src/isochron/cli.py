"""Command-line driver: ``isochron <subcommand> [--config PATH] [flags]``.

Every subcommand reads an optional JSON config; flags override config keys.
Outputs are CSV (header row, LF) or JSON, with floats written in shortest
round-trip form so identical configs give byte-identical files.

Exit codes: 0 ok, 2 usage or config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from math import gcd

import numpy as np

from .classify import (DEFAULT_AMP_GRID, DEFAULT_C_GRID, DEFAULT_Q_GRID,
                       bertrand_scan, classify_family)
from .errors import IsochronError
from .orbits import apsidal_report, integrate_cartesian, state_from_apsis
from .period import period as period_at, period_curve, samples_to_csv
from .potentials import (counterexample_family, find_equilibria, force_from_config,
                         potential_from_config, power_family)
from .urabe import UrabeData, extract_S, forward_map, reconstruct_potential

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(Exception):
    pass


def _finite(doc):
    # strict JSON: non-finite floats become null
    if isinstance(doc, dict):
        return {k: _finite(v) for k, v in doc.items()}
    if isinstance(doc, (list, tuple)):
        return [_finite(v) for v in doc]
    if isinstance(doc, (float, np.floating)):
        return float(doc) if math.isfinite(doc) else None
    return doc


def _json(doc) -> str:
    return json.dumps(_finite(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _floats(v, name):
    if v is None:
        return None
    if isinstance(v, str):
        v = [s for s in v.replace(",", " ").split() if s]
    try:
        return [float(x) for x in v]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected a list of numbers") from exc


def _get(cfg, args, key, default=None):
    """Flag value if given, else config value, else ``default``."""
    v = getattr(args, key, None)
    if v is not None:
        return v
    return cfg.get(key, default)


def _spec(v, name):
    if v is None:
        raise ConfigError(f"missing {name} spec")
    if isinstance(v, str):
        try:
            v = json.loads(v)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{name}: invalid JSON ({exc})") from exc
    if not isinstance(v, dict):
        raise ConfigError(f"{name} spec must be an object")
    return v


def _build(fn, *a):
    try:
        return fn(*a)
    except IsochronError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{fn.__name__}: {exc}") from exc


def _center(p, cfg):
    if cfg.get("x_star") is not None:
        return float(cfg["x_star"])
    lo, hi = p.domain
    scan = cfg.get("scan")
    if scan is None:
        lo = lo if math.isfinite(lo) else -100.0
        hi = hi if math.isfinite(hi) else 100.0
        w = hi - lo
        scan = (lo + 1e-9 * w, hi - 1e-9 * w)
    eq = find_equilibria(p, scan=tuple(scan), n_seeds=4096)
    centers = [r for r, t in zip(eq.roots, eq.tags) if t == "center-candidate"]
    if len(centers) != 1:
        raise ConfigError(f"cannot infer x_star: {len(centers)} centers found; set x_star")
    return centers[0]


# ---------------------------------------------------------------------------
# subcommands


def cmd_period(cfg, args):
    p = _build(potential_from_config, _spec(_get(cfg, args, "potential"), "potential"))
    x_star = _center(p, cfg)
    x0 = _floats(cfg.get("x0"), "x0")
    amps = _floats(_get(cfg, args, "amplitudes"), "amplitudes")
    if x0 is None and amps is None:
        n_rand = cfg.get("random_amplitudes")
        if n_rand is None:
            raise ConfigError("need x0 or amplitudes")
        lo, hi = cfg.get("random_range", (0.01, 0.5))
        rng = np.random.default_rng(_get(cfg, args, "seed", 0))
        amps = sorted(rng.uniform(lo, hi, int(n_rand)).tolist())
    if x0 is None:
        x0 = [x_star + a for a in amps]
    tol = float(_get(cfg, args, "tol", 1e-9))
    samples = period_curve(p, x_star, x0, tol, jobs=int(_get(cfg, args, "jobs", 1)))
    failed = [s for s in samples if not s.ok]
    if failed:
        raise IsochronError(f"sample x0={failed[0].x0!r}: {failed[0].diagnostic}")
    if args.format == "json":
        return _json({"x_star": x_star, "samples": [
            {"x0": s.x0, "turning": s.turning, "theta": s.theta, "est_error": s.est_error}
            for s in samples]})
    return samples_to_csv(samples)


def _roundtrip_error(p_centered, rec, frac=0.8):
    lo, hi = rec.domain
    w = hi - lo
    xs = np.linspace(lo + 0.5 * (1 - frac) * w, hi - 0.5 * (1 - frac) * w, 2001)
    return float(np.max(np.abs(rec.V(xs) - p_centered.V(xs))))


def cmd_urabe(cfg, args):
    mode = _get(cfg, args, "mode", "extract")
    n = int(cfg.get("n", 2001))
    X_max = float(cfg.get("X_max", 10.0))
    if mode == "reconstruct":
        data = cfg.get("data")
        if data is None:
            raise ConfigError("reconstruct needs 'data' (UrabeData JSON object)")
        s = _build(UrabeData.from_json, json.dumps(data))
        s.check()
        rec = reconstruct_potential(s, X_max=X_max)
        lo, hi = rec.domain
        xs = np.linspace(lo, hi, int(cfg.get("n_out", 201)))
        V, dV = rec.V(xs), rec.dV(xs)
        if args.format == "csv":
            return _csv(["x", "V", "dV"], zip(xs.tolist(), V.tolist(), dV.tolist()))
        return _json({"domain": [lo, hi], "samples": [[a, b] for a, b in zip(xs.tolist(), V.tolist())]})
    if mode not in ("extract", "roundtrip"):
        raise ConfigError(f"unknown urabe mode {mode!r}")
    p = _build(potential_from_config, _spec(_get(cfg, args, "potential"), "potential"))
    if cfg.get("T") is None:
        raise ConfigError("missing T")
    T = float(cfg["T"])
    if not T > 0:
        raise ConfigError("T must be positive")
    umap = forward_map(p, cfg.get("x_star"), cfg.get("v_bar"))
    s = extract_S(umap.potential, T, n=n, X_max=X_max, umap=umap)
    diag = {"odd_residual": s.odd_residual, "sup_abs_S": float(np.max(np.abs(s.S_samples))),
            "v_bar": None if math.isinf(s.v_bar) else s.v_bar}
    if mode == "extract":
        if args.format == "csv":
            return s.to_csv()
        doc = json.loads(s.to_json())
        doc["diagnostics"] = diag
        return _json(doc)
    rec = reconstruct_potential(s, X_max=X_max)
    err = _roundtrip_error(umap.potential, rec)
    print(f"roundtrip sup-norm error: {err!r}", file=sys.stderr)
    doc = {"T": T, "sup_error": err, "domain": list(rec.domain), **diag}
    if args.format == "csv":
        return _csv(["T", "sup_error"], [(T, err)])
    return _json(doc)


def _family(spec):
    kind = spec.get("kind", "power-law")
    if kind == "power-law":
        return power_family(float(spec["a"]), float(spec.get("K", -1.0)))
    if kind == "counterexample":
        return counterexample_family(int(spec.get("n_min", -2)), int(spec.get("n_max", 4)))
    raise ValueError(f"unknown family kind {kind!r}")


def cmd_classify(cfg, args):
    f = _build(_family, _spec(_get(cfg, args, "family"), "family"))
    lams = _floats(cfg.get("lambda_grid", [0.5, 1.0, 2.0]), "lambda_grid")
    amps = _floats(_get(cfg, args, "amplitudes", [0.05, 0.2, 0.4]), "amplitudes")
    if not lams or not amps:
        raise ConfigError("grids must be nonempty")
    v = classify_family(f, lams, amps, tol=float(_get(cfg, args, "tol", 1e-6)))
    if args.format == "csv":
        return _csv(["lambda", "x_eq", "T", "max_deviation"], v.evidence)
    return _json({"kind": v.kind, "a": v.a, "K": v.K, "T": v.T, "a_fit": v.a_fit,
                  "T_spread": v.T_spread,
                  "evidence": [dict(zip(("lambda", "x_eq", "T", "max_deviation"), e))
                               for e in v.evidence]})


def cmd_bertrand(cfg, args):
    q_grid = _floats(_get(cfg, args, "q_grid", list(DEFAULT_Q_GRID)), "q_grid")
    C_grid = _floats(cfg.get("C_grid", list(DEFAULT_C_GRID)), "C_grid")
    amps = _floats(_get(cfg, args, "amplitudes", list(DEFAULT_AMP_GRID)), "amplitudes")
    if not q_grid or not C_grid or not amps:
        raise ConfigError("q_grid, C_grid and amplitudes must be nonempty")
    scan = _build(bertrand_scan, q_grid, C_grid, amps, float(_get(cfg, args, "tol", 1e-10)),
                  int(cfg.get("qmax", 8)), float(cfg.get("K", -1.0)),
                  float(cfg.get("amp_tol", 1e-6)), float(cfg.get("C_tol", 1e-6)),
                  float(cfg.get("commens_tol", 1e-6)), int(_get(cfg, args, "jobs", 1)))
    if args.format == "csv":
        return scan.to_csv()
    return _json(scan.summary())


def _closing_angle(comm):
    """Polar angle after which an orbit with ``Theta = (p/q) pi`` retraces itself."""
    p, q = comm
    k = 2 * q // gcd(p, 2 * q)
    return k * p * math.pi / q


def cmd_orbit(cfg, args):
    spec = _spec(_get(cfg, args, "force"), "force")
    force = _build(force_from_config, spec)
    C = float(cfg.get("C", spec.get("C", 1.0)))
    tol = float(_get(cfg, args, "tol", 1e-12))
    amps = _floats(_get(cfg, args, "amplitudes", [0.01, 0.1, 0.2]), "amplitudes")
    rep = apsidal_report(force, C, amps, tol=max(tol, 1e-12) * 100, qmax=int(cfg.get("qmax", 8)))
    if cfg.get("rho0") is not None:
        rho0 = float(cfg["rho0"])
    else:
        rho0 = rep.rho_star * (1.0 + float(cfg.get("amplitude", 0.1)))
    if not rho0 > 0:
        raise ConfigError("rho0 must be positive")
    s0 = state_from_apsis(rho0, C)
    comm = rep.commensurable
    theta_end = _closing_angle(comm) if comm else float(cfg.get("theta_end", 4 * math.pi))
    traj = integrate_cartesian(force.with_C(C), s0, theta_end=theta_end, tol=tol)
    if args.format == "csv":
        return traj.to_csv()
    end = traj.y[:4, -1]
    closure = float(np.linalg.norm(end - s0.as_array())) if comm else None
    doc = json.loads(rep.to_json())
    doc.update({"rho0_orbit": rho0, "closing_angle": theta_end if comm else None,
                "closure_residual": closure, "energy_drift": traj.energy_drift,
                "momentum_drift": traj.momentum_drift})
    return _json(doc)


def cmd_counterexample(cfg, args):
    f = counterexample_family(int(cfg.get("n_min", -2)), int(cfg.get("n_max", 4)))
    lams = _floats(cfg.get("lambdas", [1.5, 3.0, 6.0, 2.0]), "lambdas")
    amp = float(cfg.get("amplitude", 1e-3))
    tol = float(_get(cfg, args, "tol", 1e-10))
    rows = []
    for lam in lams:
        p = _build(f.materialize, lam)
        eq = find_equilibria(p, scan=f.scan, n_seeds=4096, geometric=True)
        for r, c, t in zip(eq.roots, eq.curvatures, eq.tags):
            T = period_at(p, r * (1 + amp), r, tol).theta if t == "center-candidate" else math.nan
            rows.append((lam, len(eq.roots), r, c, t, T))
    if args.format == "csv":
        return _csv(["lambda", "n_equilibria", "x", "d2V", "tag", "local_period"], rows)
    return _json({"rows": [dict(zip(("lambda", "n_equilibria", "x", "d2V", "tag", "local_period"), r))
                           for r in rows],
                  "multiple_equilibria": sorted({r[0] for r in rows if r[1] > 1})})


COMMANDS = {
    "period": (cmd_period, "period curve of a 1-D potential (CSV of samples)"),
    "urabe": (cmd_urabe, "extract S, reconstruct V, or round-trip"),
    "classify": (cmd_classify, "classify a family x^2/2 + lambda*Phi(x)"),
    "bertrand": (cmd_bertrand, "apsidal scan over power-law central forces"),
    "orbit": (cmd_orbit, "planar orbit, apsidal report and closure residual"),
    "counterexample": (cmd_counterexample, "equilibria of the non-unique family"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="isochron", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--config", help="JSON config file; flags override its keys")
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default=None, help="output format")
        sp.add_argument("--tol", type=float, help="numerical tolerance for the main computation")
        sp.add_argument("--seed", type=int, help="seed for randomized grids")
        sp.add_argument("--jobs", type=int, help="worker threads for independent grid cells")
        if name in ("period", "classify", "bertrand", "orbit"):
            sp.add_argument("--amplitudes", help="comma-separated amplitude grid")
        if name in ("period", "urabe"):
            sp.add_argument("--potential", help="potential spec as a JSON object")
        if name == "urabe":
            sp.add_argument("--mode", choices=("extract", "reconstruct", "roundtrip"))
        if name == "classify":
            sp.add_argument("--family", help="family spec as a JSON object")
        if name == "bertrand":
            sp.add_argument("--q-grid", dest="q_grid", help="comma-separated exponents q")
        if name == "orbit":
            sp.add_argument("--force", help="force spec as a JSON object")
    return ap


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)  # argparse exits 2 on usage errors
    fn = COMMANDS[args.command][0]
    try:
        cfg = _load_config(args.config)
        if args.format is None:
            args.format = cfg.get("format", "csv")
        text = fn(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IsochronError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
