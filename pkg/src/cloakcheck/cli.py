"""Command-line runner for the cloaking experiments.

Every experiment is described by a JSON config::

    {"experiment": "SpectrumCompare",
     "parameters": {"scenario": "cloak3d", "reference": "homogeneous", "n_max": 20},
     "output_path": "compare"}

validated against ``schemas/config.schema.json`` before anything runs.
Subcommands build such a config from flags (or load one with ``--config``),
run it, and write a CSV, JSON or text artifact.

Exit status: 0 for Pass or Informational, 1 for Fail (or a numerical error
inside a module), 2 for usage errors and invalid configs.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import CloakCheckError, ConfigInvalid
from .expr import Expression
from .fem2d import build_disk_mesh, invariance_experiment
from .radial_dtn import (
    DEFAULT_NMAX,
    INVISIBILITY_DELTAS,
    analytic_near_cloak_mu,
    analytic_truncated_mu,
    closed_form_mu,
    compare_spectra,
    dtn_spectrum,
    interior_invisibility_test,
    load_scenario,
    near_cloak_scenario,
    recognize_family,
    solve_mode,
)
from .tensor_core import SymmetricTensorField, cartesian_to_spherical
from .transform import (
    RadialMap,
    check_jacobian_conditions,
    map_from_config,
    push_forward,
    push_forward_radial_coefficients,
)
from .wos import (
    Ball,
    HittingQuery,
    concentric_hitting,
    constant_data,
    dipole_data,
    hitting_probability,
    loglog_slope,
    wos_harmonic,
)

PASS, FAIL, INFO = "Pass", "Fail", "Informational"
SPECTRUM_COLUMNS = ("degree", "mu", "reference", "abs_diff", "rel_diff")

SUBCOMMANDS = {
    "spectrum": "RadialSpectrum",
    "compare": "SpectrumCompare",
    "nearcloak": "NearCloakSweep",
    "invisibility": "InteriorInvisibility",
    "fem-invariance": "FemInvariance",
    "wos": "WosHitting",
    "pushforward-check": "PushforwardCheck",
}
SLUGS = {
    "RadialSpectrum": "spectrum", "SpectrumCompare": "compare", "NearCloakSweep": "nearcloak",
    "InteriorInvisibility": "invisibility", "FemInvariance": "fem_invariance",
    "WosHitting": "wos_hitting", "WosKakutani": "wos_kakutani",
    "PushforwardCheck": "pushforward_check",
}


def _schema(name):
    return json.loads(resources.files("cloakcheck").joinpath("schemas", name).read_text())


def _path_str(parts):
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def validate_config(cfg):
    """Raise ``ConfigInvalid`` naming the offending field."""
    if not isinstance(cfg, dict):
        raise ConfigInvalid("config must be a JSON object")
    validator = jsonschema.Draft202012Validator(_schema("config.schema.json"))
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(e.absolute_path), e.message))
    if errors:
        # the deepest error points at the actual field
        err = max(errors, key=lambda e: len(e.absolute_path))
        raise ConfigInvalid(err.message, _path_str(err.absolute_path))
    return cfg


@dataclass
class RunReport:
    config: dict
    columns: tuple
    rows: list
    verdict: str
    wall_time: float = 0.0
    tool_version: str = __version__
    summary: dict = field(default_factory=dict)

    def to_dict(self):
        # wall_time stays out of artifacts so identical runs give identical files
        return {"config": _clean(self.config), "columns": list(self.columns),
                "rows": [_clean({c: r.get(c) for c in self.columns}) for r in self.rows],
                "verdict": self.verdict, "tool_version": self.tool_version,
                "summary": _clean(self.summary)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["config"], tuple(d["columns"]), list(d["rows"]), d["verdict"],
                   0.0, d["tool_version"], dict(d.get("summary", {})))

    @property
    def exit_code(self):
        return 1 if self.verdict == FAIL else 0


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ""
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def render(report: RunReport, fmt):
    """Serialize a report; identical reports give identical text."""
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=False) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(report.columns)
        for r in report.rows:
            w.writerow([_fmt(r.get(c)) for c in report.columns])
        return buf.getvalue()
    if fmt == "text":
        lines = [f"experiment: {report.config['experiment']}", f"verdict: {report.verdict}"]
        for k, v in report.summary.items():
            lines.append(f"{k}: {_fmt(v) if not isinstance(v, dict) else json.dumps(_clean(v))}")
        table = [list(report.columns)] + [[_fmt(r.get(c)) for c in report.columns]
                                          for r in report.rows]
        widths = [max(len(row[i]) for row in table) for i in range(len(report.columns))]
        for row in table:
            lines.append("  ".join(s.rjust(wd) for s, wd in zip(row, widths)).rstrip())
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def emit_report(report: RunReport, fmt, out_dir):
    """Write the artifact for ``fmt`` into ``out_dir``; returns its path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = report.config.get("output_path") or SLUGS[report.config["experiment"]]
    ext = {"json": "json", "csv": "csv", "text": "txt"}[fmt]
    path = out / f"{Path(stem).name}.{ext}"
    path.write_text(render(report, fmt))
    return path


# -- experiment runners -----------------------------------------------------------

def _scenario(name, params, where):
    try:
        return load_scenario(name, **(params or {}))
    except KeyError as exc:
        raise ConfigInvalid(str(exc.args[0]), where) from exc
    except (OSError, ValueError) as exc:
        raise ConfigInvalid(str(exc), where) from exc


def _spectrum_rows(spec, ref):
    rows = []
    for i, (n, mu) in enumerate(spec.rows()):
        r = {"degree": n, "mu": mu, "reference": None, "abs_diff": None, "rel_diff": None}
        if ref is not None:
            d = abs(mu - ref[i])
            r.update(reference=ref[i], abs_diff=d,
                     rel_diff=d / abs(ref[i]) if ref[i] != 0 else (0.0 if d == 0 else math.inf))
        rows.append(r)
    return rows


def run_spectrum(p, threads):
    s = _scenario(p["scenario"], p.get("params"), "parameters.scenario")
    n_max = p.get("n_max", DEFAULT_NMAX)
    spec = dtn_spectrum(s, n_max, p.get("tol", 1e-10), p.get("method", "auto"), threads)
    fam = recognize_family(s)
    ref = [closed_form_mu(fam[0], fam[1], n) for n in range(n_max + 1)] if fam else None
    summary = {"scenario": s.name, "method": spec.method,
               "family": fam[0] if fam else None}
    return SPECTRUM_COLUMNS, _spectrum_rows(spec, ref), INFO, summary


def run_compare(p, threads):
    a = _scenario(p["scenario"], p.get("params"), "parameters.scenario")
    b = _scenario(p.get("reference", "homogeneous"), p.get("reference_params"),
                  "parameters.reference")
    n_max, tol = p.get("n_max", DEFAULT_NMAX), p.get("tol", 1e-6)
    stol, method = p.get("solver_tol", 1e-10), p.get("method", "auto")
    sa = dtn_spectrum(a, n_max, stol, method, threads)
    sb = dtn_spectrum(b, n_max, stol, method, threads)
    cmp_ = compare_spectra(sa, sb, tol)
    expect = p.get("expect", "equal")
    verdict = PASS if cmp_.verdict == expect else FAIL
    summary = {"scenario": a.name, "reference": b.name, "max_rel_diff": cmp_.max_rel_diff,
               "tol": tol, "relation": cmp_.verdict, "expect": expect,
               "method": [sa.method, sb.method]}
    return SPECTRUM_COLUMNS, cmp_.rows(), verdict, summary


def run_nearcloak(p, threads):
    eps = sorted(p["epsilon"], reverse=True)
    interior = p.get("interior", [1.0, 1.0])
    degrees = p.get("degrees", [1])
    tol, otol = p.get("tol", 1e-10), p.get("oracle_tol", 1e-8)
    rows, ok = [], True
    for n in degrees:
        prev = math.inf
        for e in eps:
            mu = solve_mode(near_cloak_scenario(e, interior), n, tol).mu
            oracle = analytic_near_cloak_mu(e, interior, n)
            d = abs(mu - n / 2)
            rows.append({"epsilon": e, "degree": n, "mu": mu, "reference": n / 2, "abs_diff": d,
                         "oracle": oracle, "oracle_diff": abs(mu - oracle)})
            ok &= d < prev and abs(mu - oracle) <= otol
            prev = d
    cols = ("epsilon", "degree", "mu", "reference", "abs_diff", "oracle", "oracle_diff")
    return cols, rows, PASS if ok else FAIL, {"interior": interior, "oracle_tol": otol}


def run_invisibility(p, threads):
    s = _scenario(p.get("scenario", "cloak3d"), p.get("params"), "parameters.scenario")
    fills = [tuple(f) if isinstance(f, list) else f for f in p.get("fills", [0.1, 1.0, 10.0])]
    deltas = tuple(p.get("deltas", INVISIBILITY_DELTAS))
    degrees = tuple(p.get("degrees", [1]))
    thr, otol = p.get("threshold", 1e-4), p.get("oracle_tol", 1e-8)
    rep = interior_invisibility_test(s, fills, deltas, degrees, p.get("tol", 1e-10))
    fam = recognize_family(s)
    rows = []
    for r in rep.rows:
        oracle = (analytic_truncated_mu(fam[0], fam[1], r["delta"], r["fill"], r["degree"])
                  if fam and fam[0] in ("cloak", "cylinder") else None)
        rows.append(dict(r, fill=list(r["fill"]), oracle=oracle))
    ok = True
    spreads = {}
    for n in degrees:
        seq = rep.spread_sequence(n)
        ok &= rep.decreasing(n) and seq[-1] < thr
        for d, sp in zip(deltas, seq):
            mus = [r["oracle"] for r in rows if r["delta"] == d and r["degree"] == n]
            osp = max(mus) - min(mus) if None not in mus else None
            spreads[f"n={n},delta={d!r}"] = {"spread": sp, "oracle_spread": osp}
            if osp is not None:
                ok &= abs(sp - osp) <= otol
    cols = ("delta", "degree", "fill", "mu", "oracle")
    summary = {"scenario": s.name, "threshold": thr, "oracle_tol": otol, "spreads": spreads}
    return cols, rows, PASS if ok else FAIL, summary


def _sigma2(entries):
    if entries is None:
        return SymmetricTensorField.identity(2)
    return SymmetricTensorField.from_expressions([[str(v) for v in row] for row in entries])


def run_fem(p, threads):
    try:
        F = map_from_config(p["map"])
    except (KeyError, ValueError) as exc:
        raise ConfigInvalid(str(exc), "parameters.map") from exc
    if F.dim != 2:
        raise ConfigInvalid("FEM invariance needs a 2D map", "parameters.map")
    rings = p.get("n_rings", [12, 24, 48, 96])
    max_err, min_ratio = p.get("max_error", 2e-2), p.get("min_ratio", 2.0)
    rep = invariance_experiment(_sigma2(p.get("sigma")), F, [build_disk_mesh(n) for n in rings],
                                modes=p.get("modes"), quadrature=p.get("quadrature", 3))
    rows = []
    for i, n in enumerate(rings):
        rows.append({"n_rings": n, "h": rep.h[i], "error": rep.errors[i],
                     "ratio": rep.ratios[i - 1] if i else None})
    ok = rep.errors[-1] <= max_err and all(r <= 1 / min_ratio for r in rep.ratios)
    summary = {"map": p["map"], "order": rep.order, "max_error": max_err, "min_ratio": min_ratio,
               "norm": "full" if p.get("modes") is None else f"fourier<= {p['modes']}"}
    return ("n_rings", "h", "error", "ratio"), rows, PASS if ok else FAIL, summary


WALK_COLUMNS = ("case", "mean", "stderr", "n", "seed", "eps_shell", "exact", "z")


def _walk_row(case, est, exact):
    z = abs(est.mean - exact) / est.stderr if est.stderr > 0 else (
        0.0 if est.mean == exact else math.inf)
    return {"case": case, "mean": est.mean, "stderr": est.stderr, "n": est.n_samples,
            "seed": est.seed, "eps_shell": est.eps_shell, "exact": exact, "z": z}


def run_hitting(p, threads):
    radii = p.get("target_radius", 0.1)
    sweep = isinstance(radii, list)
    radii = radii if sweep else [radii]
    b, d = p.get("outer_radius", 2.0), p.get("start_distance", 0.5)
    n, seed = p.get("n", 100_000), p.get("seed", 0)
    if not all(a < b for a in radii) or not d < b:
        raise ConfigInvalid("target and start must lie inside the outer ball",
                            "parameters.target_radius")
    rows, ok = [], True
    for i, a in enumerate(radii):
        eps = p.get("eps_shell", p.get("shell_ratio", 1e-3) * a if sweep else None)
        q = HittingQuery((d, 0.0, 0.0), Ball((0.0, 0.0, 0.0), a), Ball((0.0, 0.0, 0.0), b), eps)
        est = hitting_probability(q, n, seed + i, threads)
        row = _walk_row(f"a={a!r}", est, concentric_hitting(a, b, d))
        rows.append(row)
        ok &= row["z"] <= 3.0
    summary = {"outer_radius": b, "start_distance": d}
    if sweep:
        slope = loglog_slope(radii, [r["mean"] for r in rows])
        tol = p.get("slope_tol", 0.1)
        summary.update(slope=slope, slope_tol=tol)
        ok &= abs(slope - 1.0) <= tol
    return WALK_COLUMNS, rows, PASS if ok else FAIL, summary


KAKUTANI_CASES = {
    # name: (domain, data factory, start point)
    "constant": (Ball((0.0, 0.0), 1.0), lambda D: constant_data(1.0), (0.3, 0.2)),
    "disk_dipole": (Ball((0.0, 0.0), 1.0), dipole_data, (0.0, 0.0)),
    "ball_dipole": (Ball((0.0, 0.0, 0.0), 2.0), dipole_data, (1.0, 0.0, 0.0)),
}


def run_kakutani(p, threads):
    cases = p.get("cases", list(KAKUTANI_CASES))
    n, seed = p.get("n", 100_000), p.get("seed", 0)
    rows, ok = [], True
    for i, name in enumerate(cases):
        dom, make, x = KAKUTANI_CASES[name]
        f = make(dom)
        eps = p.get("eps_shell", 1e-4 * dom.radius)
        est = wos_harmonic(dom, f, x, n, seed + i, eps, threads)
        half = wos_harmonic(dom, f, x, n, seed + i, eps / 2, threads)
        exact = float(f.extension(np.asarray([x]))[0])
        row = _walk_row(name, est, exact)
        shift = abs(half.mean - est.mean)
        row.update(mean_half_shell=half.mean, shift=shift)
        rows.append(row)
        ok &= row["z"] <= 3.0 and (shift < est.stderr or shift == 0.0)
    cols = WALK_COLUMNS + ("mean_half_shell", "shift")
    return cols, rows, PASS if ok else FAIL, {}


def _annulus_points(F, n, seed):
    rng = np.random.default_rng(seed)
    lo, hi = F.codomain.r_in, F.codomain.r_out
    r = lo + (hi - lo) * rng.uniform(1e-3, 1 - 1e-3, n)
    u = rng.standard_normal((n, 3))
    return r[:, None] * u / np.linalg.norm(u, axis=1, keepdims=True)


def run_pushforward(p, threads):
    try:
        F = map_from_config(p.get("map", {"map": "blow_up"}))
    except (KeyError, ValueError) as exc:
        raise ConfigInvalid(str(exc), "parameters.map") from exc
    if not isinstance(F, RadialMap) or F.dim != 3:
        raise ConfigInvalid("pushforward-check supports radial 3D maps", "parameters.map")
    tol = p.get("tol", 1e-10)
    pts = _annulus_points(F, p.get("n_points", 100), p.get("seed", 0))
    got = cartesian_to_spherical(push_forward(F, SymmetricTensorField.identity(3)))(pts)
    a_t, b_t = push_forward_radial_coefficients(F, Expression("r^2"), Expression("1"))
    r = np.linalg.norm(pts, axis=1)
    sth = np.hypot(pts[:, 0], pts[:, 1]) / r
    want = np.zeros_like(got)
    want[:, 0, 0] = a_t.radial(r) * sth
    want[:, 1, 1] = b_t.radial(r) * sth
    want[:, 2, 2] = b_t.radial(r) / sth
    err = np.abs(got - want).max(axis=(1, 2)) / np.abs(want).max(axis=(1, 2))
    rows = [{"x": pt[0], "y": pt[1], "z": pt[2], "r": ri, "rel_err": e}
            for pt, ri, e in zip(pts, r, err)]
    jc = check_jacobian_conditions(F, (0.0, 0.0, 0.0), p.get("jacobian_samples", 2000),
                                   p.get("seed", 0))
    summary = {"alpha": a_t.source, "beta": b_t.source, "max_rel_err": float(err.max()),
               "tol": tol, "c0_estimate": jc.c0_estimate, "c1_estimate": jc.c1_estimate,
               "jacobian_ok": jc.ok}
    ok = err.max() <= tol and jc.ok
    return ("x", "y", "z", "r", "rel_err"), rows, PASS if ok else FAIL, summary


RUNNERS = {
    "RadialSpectrum": run_spectrum, "SpectrumCompare": run_compare,
    "NearCloakSweep": run_nearcloak, "InteriorInvisibility": run_invisibility,
    "FemInvariance": run_fem, "WosHitting": run_hitting, "WosKakutani": run_kakutani,
    "PushforwardCheck": run_pushforward,
}


def run(config, threads=1) -> RunReport:
    """Validate ``config`` and run its experiment."""
    validate_config(config)
    cfg = {"experiment": config["experiment"], "parameters": dict(config.get("parameters", {}))}
    if "output_path" in config:
        cfg["output_path"] = config["output_path"]
    t0 = time.perf_counter()
    cols, rows, verdict, summary = RUNNERS[cfg["experiment"]](cfg["parameters"], threads)
    return RunReport(cfg, tuple(cols), rows, verdict, time.perf_counter() - t0,
                     summary=summary)


# -- argument parsing -------------------------------------------------------------

def _kv(text):
    k, sep, v = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    return k, float(v)


def _common():
    c = argparse.ArgumentParser(add_help=False)
    s = argparse.SUPPRESS
    c.add_argument("--config", metavar="PATH", default=s, help="JSON run configuration")
    c.add_argument("--out", metavar="DIR", default=s, help="artifact directory (default .)")
    c.add_argument("--format", choices=("csv", "json", "text"), default=s,
                   help="artifact format (default json)")
    c.add_argument("--seed", type=int, default=s, help="seed for randomized experiments")
    c.add_argument("--threads", type=int, default=s, help="worker threads (default 1)")
    return c


def build_parser():
    common = _common()
    ap = argparse.ArgumentParser(prog="cloakcheck", parents=[common],
                                 description="Numerical checks of conductivity cloaking.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectrum", parents=[common], help="DtN spectrum of a radial scenario")
    sp.add_argument("--scenario")
    sp.add_argument("--param", type=_kv, action="append", metavar="NAME=VALUE")
    sp.add_argument("--n-max", type=int)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--method", choices=("auto", "numeric", "closed"))

    sp = sub.add_parser("compare", parents=[common], help="compare two DtN spectra")
    sp.add_argument("--scenario")
    sp.add_argument("--param", type=_kv, action="append", metavar="NAME=VALUE")
    sp.add_argument("--reference")
    sp.add_argument("--n-max", type=int)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--method", choices=("auto", "numeric", "closed"))
    sp.add_argument("--expect", choices=("equal", "distinct"))

    sp = sub.add_parser("nearcloak", parents=[common], help="near-cloak epsilon sweep")
    sp.add_argument("--epsilon", type=float, nargs="+")
    sp.add_argument("--degrees", type=int, nargs="+")

    sp = sub.add_parser("invisibility", parents=[common], help="interior fill invariance")
    sp.add_argument("--scenario")
    sp.add_argument("--fills", type=float, nargs="+")
    sp.add_argument("--deltas", type=float, nargs="+")
    sp.add_argument("--degrees", type=int, nargs="+")

    sp = sub.add_parser("fem-invariance", parents=[common], help="FEM push-forward invariance")
    sp.add_argument("--map", choices=("twist", "radial"))
    sp.add_argument("--n-rings", type=int, nargs="+")
    sp.add_argument("--modes", type=int)

    sp = sub.add_parser("wos", parents=[common], help="walk-on-spheres checks")
    sp.add_argument("--mode", choices=("hitting", "kakutani"), default="hitting")
    sp.add_argument("--n", type=int)
    sp.add_argument("--target-radius", type=float, nargs="+")

    sp = sub.add_parser("pushforward-check", parents=[common],
                        help="push-forward of the unit conductivity by a radial map")
    sp.add_argument("--map", choices=("blow_up", "near_cloak"))
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--n-points", type=int)
    return ap


# preset maps for fem-invariance
FEM_MAPS = {
    "twist": ({"map": "twist2d", "tau": "1-r"}, None),
    "radial": ({"map": "radial", "profile": "r+0.2*r*(1-r)"}, [["1+x^2", 0], [0, 2]]),
}


def config_from_args(ns):
    """Merge ``--config`` (if any) with subcommand flags."""
    experiment = SUBCOMMANDS[ns.command]
    if ns.command == "wos" and ns.mode == "kakutani":
        experiment = "WosKakutani"
    cfg = {"experiment": experiment, "parameters": {}}
    if getattr(ns, "config", None):
        try:
            with open(ns.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config: {exc}", "config") from exc
        if not isinstance(cfg, dict):
            raise ConfigInvalid("config must be a JSON object")
        if cfg.get("experiment") not in (experiment, None) and ns.command != "wos":
            raise ConfigInvalid(f"config runs {cfg.get('experiment')!r}, not {experiment!r}",
                                "experiment")
        cfg.setdefault("experiment", experiment)
        cfg.setdefault("parameters", {})
    p = cfg["parameters"] if isinstance(cfg.get("parameters"), dict) else {}
    cfg["parameters"] = p

    def put(key, value):
        if value is not None:
            p[key] = value

    g = lambda name: getattr(ns, name, None)  # noqa: E731
    cmd = ns.command
    if cmd in ("spectrum", "compare", "invisibility"):
        put("scenario", g("scenario"))
    if cmd in ("spectrum", "compare"):
        put("params", dict(g("param")) if g("param") else None)
        put("n_max", g("n_max"))
        put("method", g("method"))
        if cmd == "spectrum":
            put("tol", g("tol"))
        else:
            put("reference", g("reference"))
            put("tol", g("tol"))
            put("expect", g("expect"))
        p.setdefault("scenario", "cloak3d")
    if cmd == "nearcloak":
        put("epsilon", g("epsilon"))
        put("degrees", g("degrees"))
        p.setdefault("epsilon", [0.4, 0.2, 0.1, 0.05])
    if cmd == "invisibility":
        put("fills", g("fills"))
        put("deltas", g("deltas"))
        put("degrees", g("degrees"))
    if cmd == "fem-invariance":
        if g("map") or "map" not in p:
            mcfg, sigma = FEM_MAPS[g("map") or "twist"]
            p["map"] = mcfg
            if sigma is not None:
                p.setdefault("sigma", sigma)
        put("n_rings", g("n_rings"))
        put("modes", g("modes"))
    if cmd == "wos":
        put("n", g("n"))
        tr = g("target_radius")
        if tr is not None:
            put("target_radius", tr[0] if len(tr) == 1 else tr)
    if cmd == "pushforward-check":
        if g("map") == "near_cloak":
            p["map"] = {"map": "near_cloak", "epsilon": g("epsilon") or 0.1}
        elif g("map"):
            p["map"] = {"map": g("map")}
        put("n_points", g("n_points"))
    if g("seed") is not None and cfg["experiment"] in ("WosHitting", "WosKakutani",
                                                        "PushforwardCheck"):
        p["seed"] = g("seed")
    return cfg


def main(argv=None):
    ap = build_parser()
    ns = ap.parse_args(argv)
    fmt = getattr(ns, "format", "json")
    out = getattr(ns, "out", ".")
    threads = getattr(ns, "threads", 1)
    try:
        cfg = config_from_args(ns)
        report = run(cfg, threads)
    except ConfigInvalid as exc:
        print(f"cloakcheck: invalid config: {exc}", file=sys.stderr)
        return 2
    except CloakCheckError as exc:
        print(f"cloakcheck: {ns.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    path = emit_report(report, fmt, out)
    print(f"{report.config['experiment']}: {report.verdict} "
          f"({report.wall_time:.2f} s) -> {path}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
