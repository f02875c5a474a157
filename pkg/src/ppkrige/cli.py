"""Command-line entry point: ``ppkrige {ingest,fit,krige,predict,simulate}``.

Options may also come from a ``key = value`` config file (``--config``);
flags given on the command line win. Exit status is 0 on success, 1 on a
numerical failure and 2 on a usage or input error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .basis import TimeDomain, gram_matrix, make_spatial_basis, make_time_basis, roughness_matrix, spatial_gram
from .data import DataFormatError, PointPattern, SiteSet, count_function, ingest_events, ingest_trips
from .data import read_sites, write_events, write_sites
from .krige import KrigingError, count_prediction_error, predict_counts, solve_kriging
from .moments import estimate_moments
from .simulate import GRIDS, StudyConfig, run_study, study_table, write_study_table
from .spatial import SingularSystemError, default_xi_grid, fit_surfaces, predict_cov_at, predict_mean_at

MANIFEST = "manifest.json"


class UsageError(Exception):
    """Bad arguments or unusable input files (exit status 2)."""


class NumericalError(Exception):
    """A numerical step failed (exit status 1)."""


# -- config and small parsers ------------------------------------------------------

def read_config(path) -> dict:
    """``key = value`` lines (``#`` comments allowed) as a dict of strings."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from None
    return {k.replace("-", "_"): v.strip() for k, v in parser["run"].items()}


def _floats(text, count: Optional[int] = None, name: str = "value") -> list:
    try:
        vals = [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{name}: cannot parse numbers from {text!r}") from None
    if count is not None and len(vals) != count:
        raise UsageError(f"{name}: expected {count} comma-separated numbers, got {text!r}")
    return vals


def _ints(text, name: str) -> list:
    vals = _floats(text, None, name)
    if any(v != int(v) for v in vals):
        raise UsageError(f"{name}: expected integers, got {text!r}")
    return [int(v) for v in vals]


class Options:
    """Merged view of command-line flags over config-file values over defaults."""

    def __init__(self, args: argparse.Namespace, defaults: dict):
        self._args = vars(args)
        self._cfg = read_config(args.config) if getattr(args, "config", None) else {}
        self._defaults = defaults

    def get(self, key, required: bool = False):
        val = self._args.get(key)
        if val is None:
            val = self._cfg.get(key)
        if val is None:
            val = self._defaults.get(key)
        if required and val is None:
            raise UsageError(f"missing required option --{key.replace('_', '-')}")
        return val

    def path(self, key, must_exist: bool = True, required: bool = True) -> Optional[Path]:
        val = self.get(key, required)
        if val is None:
            return None
        p = Path(val)
        if must_exist and not p.exists():
            raise UsageError(f"--{key.replace('_', '-')}: file not found: {p}")
        return p


FIT_DEFAULTS = dict(domain="0,1", time_order="4", time_knots="5", space_order="4", space_knots="6",
                    xi_lo="1e-6", xi_hi="1e6", xi_per_decade="25", threshold_M="0.9",
                    threshold_Sigma="0.9", grid_points="241")


def _xi_grid(opt: Options) -> np.ndarray:
    lo, hi = float(opt.get("xi_lo")), float(opt.get("xi_hi"))
    per = int(float(opt.get("xi_per_decade")))
    if not (0 < lo < hi) or per < 1:
        raise UsageError("penalty grid needs 0 < xi-lo < xi-hi and xi-per-decade >= 1")
    return default_xi_grid(lo, hi, per)


def _threshold(opt: Options, key) -> float:
    th = float(opt.get(key))
    if not 0.0 < th <= 1.0:
        raise UsageError(f"--{key.replace('_', '-')} must lie in (0, 1], got {th}")
    return th


# -- labeled matrices ---------------------------------------------------------------

def write_matrix(path, M, row_labels, col_labels) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + [str(c) for c in col_labels])
        for lab, row in zip(row_labels, M):
            w.writerow([str(lab)] + [repr(float(x)) for x in row])


def read_matrix(path):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"missing artifact: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path}: empty matrix file")
    cols = rows[0][1:]
    labels = [r[0] for r in rows[1:]]
    try:
        M = np.array([[float(x) for x in r[1:]] for r in rows[1:]], dtype=float).reshape(len(labels), len(cols))
    except ValueError:
        raise UsageError(f"{path}: malformed matrix entries") from None
    return M, labels, cols


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"missing artifact: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None


# -- commands -------------------------------------------------------------------------

def _load_pattern(opt: Options, domain: TimeDomain, region=None) -> PointPattern:
    sites = read_sites(opt.path("sites"), region)
    return ingest_events(opt.path("events"), domain, sites)


def _domain(opt: Options) -> TimeDomain:
    a, b = _floats(opt.get("domain"), 2, "domain")
    if not a < b:
        raise UsageError(f"domain needs a < b, got [{a}, {b}]")
    return TimeDomain(a, b)


def _region(opt: Options, sites: SiteSet):
    text = opt.get("region")
    if text is None:
        return sites.region if sites.region is not None else sites.bounding_box()
    x0, x1, y0, y1 = _floats(text, 4, "region")
    if not (x0 < x1 and y0 < y1):
        raise UsageError("region must be x0,x1,y0,y1 with x0 < x1 and y0 < y1")
    return (x0, x1, y0, y1)


def cmd_ingest(args) -> int:
    opt = Options(args, {"domain": None})
    out = opt.path("out", must_exist=False)
    if opt.get("trips") is not None:
        pattern = ingest_trips(opt.path("trips"), opt.path("sites"), opt.path("calendar"))
    else:
        if opt.get("events") is None:
            raise UsageError("ingest needs --trips/--calendar or --events")
        pattern = _load_pattern(opt, _domain(Options(args, FIT_DEFAULTS)))
    write_events(pattern, out)
    if opt.get("sites_out") is not None:
        write_sites(pattern.sites, opt.get("sites_out"))
    print(f"wrote {out}: n={pattern.n} replicates, d={pattern.d} sites, "
          f"domain [{pattern.domain.a:g}, {pattern.domain.b:g}]")
    return 0


def _basis_config(opt: Options, domain: TimeDomain, region) -> dict:
    return {
        "domain": [domain.a, domain.b],
        "time_order": int(opt.get("time_order")),
        "time_knots": int(opt.get("time_knots")),
        "space_order": int(opt.get("space_order")),
        "space_knots": int(opt.get("space_knots")),
        "region": [float(x) for x in region],
    }


def cmd_fit(args) -> int:
    opt = Options(args, FIT_DEFAULTS)
    domain = _domain(opt)
    pattern = _load_pattern(opt, domain)
    holdout = [s for s in str(opt.get("holdout") or "").split(",") if s.strip()]
    if holdout:
        missing = [s for s in holdout if s not in pattern.sites.ids]
        if missing:
            raise UsageError(f"hold-out sites not in the site file: {', '.join(missing)}")
        keep = [j for j, sid in enumerate(pattern.sites.ids) if sid not in holdout]
        pattern = pattern.select_sites(keep)
    if pattern.d < 2:
        raise UsageError("fitting needs at least two sites")
    region = _region(opt, pattern.sites)
    cfg = _basis_config(opt, domain, region)
    tb = make_time_basis(domain, cfg["time_order"], cfg["time_knots"])
    sb = make_spatial_basis(tuple(region), cfg["space_order"], cfg["space_knots"])
    if not np.all(sb.contains(pattern.sites.coords)):
        raise UsageError(f"some sites fall outside the region {tuple(region)}")
    grid = _xi_grid(opt)
    est = estimate_moments(pattern, tb)
    J = roughness_matrix(sb)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fits = fit_surfaces(est.A, est.Sigma, sb, pattern.sites.coords, J, grid, grid)
    out = opt.path("out", must_exist=False)
    out.mkdir(parents=True, exist_ok=True)
    ids = list(pattern.sites.ids)
    pl = [f"b{i + 1}" for i in range(tb.dim)]
    ql = [f"g{i + 1}" for i in range(sb.dim)]
    write_sites(pattern.sites, out / "sites.csv")
    write_matrix(out / "A.csv", est.A, pl, ids)
    write_matrix(out / "M.csv", est.M, ids, ids)
    write_matrix(out / "Sigma.csv", est.Sigma, ids, ids)
    write_matrix(out / "B.csv", fits.B, pl, ql)
    write_matrix(out / "C.csv", fits.C, ql, ql)
    for name, res in (("gcv_B.csv", fits.gcv_B), ("gcv_C.csv", fits.gcv_C)):
        write_matrix(out / name, res.curve(), range(1, res.grid.size + 1), ["xi", "df", "gcv"])
    manifest = {
        "kind": "fit",
        "basis": cfg,
        "n": pattern.n,
        "sites": ids,
        "holdout": holdout,
        "xi_B": fits.xi_B, "xi_C": fits.xi_C, "df_B": fits.df_B, "df_C": fits.df_C,
        "p": tb.dim, "q": sb.dim,
    }
    _write_json(out / MANIFEST, manifest)
    print(f"fit: n={pattern.n}, d={pattern.d}, p={tb.dim}, q={sb.dim}; "
          f"xi_B={fits.xi_B:.4g} (df {fits.df_B:.3f}), xi_C={fits.xi_C:.4g} (df {fits.df_C:.3f})")
    return 0


def _check_basis(opt: Options, manifest: dict) -> None:
    cfg = manifest["basis"]
    for key in ("time_order", "time_knots", "space_order", "space_knots"):
        given = opt.get(key)
        if given is not None and int(given) != cfg[key]:
            raise UsageError(f"--{key.replace('_', '-')}={given} does not match the fitted basis ({cfg[key]})")
    if opt.get("domain") is not None and _floats(opt.get("domain"), 2, "domain") != cfg["domain"]:
        raise UsageError(f"domain {opt.get('domain')} does not match the fitted basis {cfg['domain']}")


def _load_fit(fit_dir: Path):
    manifest = _read_json(fit_dir / MANIFEST)
    if manifest.get("kind") != "fit":
        raise UsageError(f"{fit_dir}: not a fit artifact directory")
    cfg = manifest["basis"]
    domain = TimeDomain(*cfg["domain"])
    tb = make_time_basis(domain, cfg["time_order"], cfg["time_knots"])
    sb = make_spatial_basis(tuple(cfg["region"]), cfg["space_order"], cfg["space_knots"])
    mats = {k: read_matrix(fit_dir / f"{k}.csv")[0] for k in ("A", "M", "Sigma", "B", "C")}
    d = len(manifest["sites"])
    want = {"A": (tb.dim, d), "M": (d, d), "Sigma": (d, d), "B": (tb.dim, sb.dim), "C": (sb.dim, sb.dim)}
    for k, shape in want.items():
        if mats[k].shape != shape:
            raise UsageError(f"{fit_dir / (k + '.csv')}: shape {mats[k].shape} does not match the manifest basis {shape}")
    sites = read_sites(fit_dir / "sites.csv", tuple(cfg["region"]))
    if list(sites.ids) != manifest["sites"]:
        raise UsageError(f"{fit_dir}: site list differs from the manifest")
    return manifest, tb, sb, sites, mats


def _time_grid(opt: Options, domain: TimeDomain) -> np.ndarray:
    m = int(float(opt.get("grid_points")))
    if m < 2:
        raise UsageError("--grid-points must be at least 2")
    return np.linspace(domain.a, domain.b, m)


def _predict_and_score(opt: Options, weights, fit_ids: Sequence[str], domain: TimeDomain, out: Path,
                       target_site: Optional[str]) -> Optional[float]:
    """Predicted count functions for each replicate of ``--events``; hold-out error if observed."""
    all_sites = read_sites(opt.path("sites"))
    pattern = ingest_events(opt.path("events"), domain, all_sites)
    idx = []
    for sid in fit_ids:
        if sid not in all_sites.ids:
            raise UsageError(f"site {sid!r} of the fit is missing from {opt.get('sites')}")
        idx.append(all_sites.index(sid))
    sub = pattern.select_sites(idx)
    grid = _time_grid(opt, domain)
    clamp = bool(opt.get("clamp"))
    preds = [predict_counts(sub, weights, i) for i in range(sub.n)]
    with (out / "counts.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replicate"] + [repr(float(t)) for t in grid])
        for lab, f in zip(sub.replicate_labels, preds):
            vals = f(grid)
            if clamp:
                vals = np.maximum(vals, 0.0)
            w.writerow([lab] + [repr(float(v)) for v in vals])
    if target_site is None or target_site not in all_sites.ids:
        return None
    j0 = all_sites.index(target_site)
    observed = [count_function(pattern, i, j0) for i in range(pattern.n)]
    return count_prediction_error(observed, preds)


def cmd_krige(args) -> int:
    opt = Options(args, FIT_DEFAULTS | {"domain": None, "grid_points": "241"})
    fit_dir = opt.path("fit")
    manifest, tb, sb, sites, mats = _load_fit(fit_dir)
    _check_basis(opt, manifest)
    target_site = opt.get("target_site")
    if opt.get("target") is not None:
        s0 = np.array(_floats(opt.get("target"), 2, "target"))
    elif target_site is not None:
        all_sites = read_sites(opt.path("sites"))
        if target_site not in all_sites.ids:
            raise UsageError(f"target site {target_site!r} not found in {opt.get('sites')}")
        s0 = all_sites.coords[all_sites.index(target_site)]
    else:
        raise UsageError("krige needs --target x,y or --target-site ID")
    if not sb.contains(s0)[0]:
        raise UsageError(f"target ({s0[0]:g}, {s0[1]:g}) lies outside the fitted region {tuple(manifest['basis']['region'])}")
    G = gram_matrix(tb)
    Gamma = sb.evaluate(sites.coords)
    _, m0 = predict_mean_at(mats["B"], G, mats["A"], sb, s0)
    sigma0, sigma00 = predict_cov_at(mats["C"], Gamma, sb, s0)
    at_site = np.flatnonzero(np.all(np.abs(sites.coords - s0) <= 1e-12 * max(1.0, np.abs(s0).max()), axis=1))
    if at_site.size:
        # a fitted site: its own empirical moments, nugget included, replace the smoothed ones
        j = int(at_site[0])
        m0, sigma0 = mats["M"][:, j].copy(), mats["Sigma"][:, j].copy()
        sigma00 = float(mats["Sigma"][j, j])
    thM, thS = _threshold(opt, "threshold_M"), _threshold(opt, "threshold_Sigma")
    sol = solve_kriging(mats["Sigma"], mats["M"], sigma0, m0, thM, thS, sigma00)
    out = opt.path("out", must_exist=False)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "weights.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site", "weight"])
        for sid, c in zip(sites.ids, sol.c_star):
            w.writerow([sid, repr(float(c))])
    domain = TimeDomain(*manifest["basis"]["domain"])
    grid = _time_grid(opt, domain)
    lam = tb.evaluate(grid) @ (mats["A"] @ sol.c_star)
    if opt.get("clamp"):
        lam = np.maximum(lam, 0.0)
    write_matrix(out / "intensity.csv", lam[:, None], [repr(float(t)) for t in grid], ["intensity"])
    summary = {
        "kind": "krige",
        "fit": str(fit_dir),
        "basis": manifest["basis"],
        "target": [float(s0[0]), float(s0[1])],
        "target_site": target_site,
        "target_is_fitted_site": sites.ids[int(at_site[0])] if at_site.size else None,
        "rank_M": sol.rank_M, "rank_Sigma": sol.rank_Sigma,
        "threshold_M": thM, "threshold_Sigma": thS,
        "spe_estimate": sol.spe_estimate,
        "sigma00_smooth_proxy": sigma00,
        "sites": list(sites.ids),
    }
    if opt.get("events") is not None:
        err = _predict_and_score(opt, sol.c_star, sites.ids, domain, out, target_site)
        if err is not None:
            summary["count_prediction_error"] = err
            print(f"root average squared count error at {target_site}: {err:.6g}")
    _write_json(out / MANIFEST, summary)
    print(f"krige: rank_M={sol.rank_M}, rank_Sigma={sol.rank_Sigma}, spe_estimate={sol.spe_estimate:.6g}, "
          f"sum of weights={sol.c_star.sum():.6g}")
    return 0


def cmd_predict(args) -> int:
    opt = Options(args, {"grid_points": "241"})
    kdir = opt.path("krige")
    summary = _read_json(kdir / MANIFEST)
    if summary.get("kind") != "krige":
        raise UsageError(f"{kdir}: not a krige artifact directory")
    W, labels, _ = read_matrix_weights(kdir / "weights.csv")
    if labels != summary["sites"]:
        raise UsageError(f"{kdir}: weights do not match the recorded site list")
    domain = TimeDomain(*summary["basis"]["domain"])
    if opt.get("domain") is not None and _floats(opt.get("domain"), 2, "domain") != summary["basis"]["domain"]:
        raise UsageError("domain does not match the fitted basis")
    out = opt.path("out", must_exist=False)
    out.mkdir(parents=True, exist_ok=True)
    err = _predict_and_score(opt, W, labels, domain, out, opt.get("observed_site"))
    if err is not None:
        _write_json(out / "error.json", {"observed_site": opt.get("observed_site"),
                                         "count_prediction_error": err})
        print(f"root average squared count error at {opt.get('observed_site')}: {err:.6g}")
    print(f"predict: wrote {out / 'counts.csv'}")
    return 0


def read_matrix_weights(path):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"missing artifact: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["site", "weight"]:
        raise UsageError(f"{path}: expected header 'site,weight'")
    try:
        return np.array([float(r[1]) for r in rows[1:]]), [r[0] for r in rows[1:]], None
    except (ValueError, IndexError):
        raise UsageError(f"{path}: malformed weight rows") from None


STUDY_DEFAULTS = dict(grids="ii", models="2", ns="50,200", mc_reps="200", seed="20240601",
                      threshold_M="0.9", threshold_Sigma="0.9", xi_lo="1e-6", xi_hi="1e6",
                      xi_per_decade="25", time_order="4", time_knots="5", space_order="4", space_knots="6")


def cmd_simulate(args) -> int:
    opt = Options(args, STUDY_DEFAULTS)
    grids = tuple(g.strip() for g in str(opt.get("grids")).split(",") if g.strip())
    bad = [g for g in grids if g not in GRIDS]
    if bad:
        raise UsageError(f"unknown grid(s) {bad}; choose from {sorted(GRIDS)}")
    models = tuple(_ints(opt.get("models"), "models"))
    if any(m not in (1, 2) for m in models):
        raise UsageError("models must be 1 and/or 2")
    ns = tuple(_ints(opt.get("ns"), "ns"))
    if not ns or min(ns) < 1:
        raise UsageError("n values must be positive")
    reps = int(float(opt.get("mc_reps")))
    if reps < 2:
        raise UsageError("--mc-reps must be at least 2")
    grid = _xi_grid(opt)
    cfg = StudyConfig(grids=grids, models=models, ns=ns, mc_reps=reps, seed=int(float(opt.get("seed"))),
                      threshold_M=_threshold(opt, "threshold_M"),
                      threshold_Sigma=_threshold(opt, "threshold_Sigma"),
                      time_order=int(opt.get("time_order")), time_knots=int(opt.get("time_knots")),
                      space_order=int(opt.get("space_order")), space_knots=int(opt.get("space_knots")),
                      xi_grid_B=grid, xi_grid_C=grid)
    out = opt.path("out", must_exist=False)
    cells = run_study(cfg)
    write_study_table(cells, out)
    header, rows = study_table(cells)
    print(",".join(header))
    for r in rows:
        print(",".join(str(x) for x in r))
    failed = [c for c in cells if c.error]
    for c in failed:
        print(f"cell grid={c.grid} model={c.model} n={c.n} failed: {c.error}", file=sys.stderr)
    return 1 if failed and len(failed) == len(cells) else 0


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ppkrige", description="Kriging of replicated spatial point processes.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value file; command-line flags override it")

    def basis_flags(sp):
        sp.add_argument("--domain", help="time domain a,b (default 0,1)")
        sp.add_argument("--time-order", dest="time_order")
        sp.add_argument("--time-knots", dest="time_knots", help="interior knots of the temporal basis")
        sp.add_argument("--space-order", dest="space_order")
        sp.add_argument("--space-knots", dest="space_knots", help="interior knots per spatial axis")

    sp = sub.add_parser("ingest", help="convert trip records or raw events into Event CSV")
    common(sp)
    sp.add_argument("--trips")
    sp.add_argument("--calendar")
    sp.add_argument("--events")
    sp.add_argument("--sites")
    sp.add_argument("--domain")
    sp.add_argument("--out")
    sp.add_argument("--sites-out", dest="sites_out")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("fit", help="estimate moments and fit mean/covariance surfaces")
    common(sp)
    basis_flags(sp)
    sp.add_argument("--events")
    sp.add_argument("--sites")
    sp.add_argument("--region", help="x0,x1,y0,y1 (default: the sites' bounding box)")
    sp.add_argument("--holdout", help="comma-separated site ids to leave out of the fit")
    sp.add_argument("--xi-lo", dest="xi_lo")
    sp.add_argument("--xi-hi", dest="xi_hi")
    sp.add_argument("--xi-per-decade", dest="xi_per_decade")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("krige", help="kriging weights and predictions at a target location")
    common(sp)
    basis_flags(sp)
    sp.add_argument("--fit", help="directory written by 'fit'")
    sp.add_argument("--target", help="x,y")
    sp.add_argument("--target-site", dest="target_site", help="site id whose coordinates are the target")
    sp.add_argument("--threshold-M", dest="threshold_M")
    sp.add_argument("--threshold-Sigma", dest="threshold_Sigma")
    sp.add_argument("--events", help="events to predict counts for (optional)")
    sp.add_argument("--sites", help="site file covering --events")
    sp.add_argument("--grid-points", dest="grid_points")
    sp.add_argument("--clamp", action="store_true", default=None, help="clip predictions at zero")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_krige)

    sp = sub.add_parser("predict", help="apply saved kriging weights to new replicates")
    common(sp)
    sp.add_argument("--krige", help="directory written by 'krige'")
    sp.add_argument("--events")
    sp.add_argument("--sites")
    sp.add_argument("--domain")
    sp.add_argument("--observed-site", dest="observed_site", help="site whose counts score the predictions")
    sp.add_argument("--grid-points", dest="grid_points")
    sp.add_argument("--clamp", action="store_true", default=None)
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("simulate", help="Monte Carlo study on log-Gaussian Cox processes")
    common(sp)
    sp.add_argument("--grids", help="comma list of i, ii, iii")
    sp.add_argument("--models", help="comma list of 1, 2")
    sp.add_argument("--ns", help="comma list of replicate counts")
    sp.add_argument("--mc-reps", dest="mc_reps")
    sp.add_argument("--seed")
    sp.add_argument("--threshold-M", dest="threshold_M")
    sp.add_argument("--threshold-Sigma", dest="threshold_Sigma")
    sp.add_argument("--xi-lo", dest="xi_lo")
    sp.add_argument("--xi-hi", dest="xi_hi")
    sp.add_argument("--xi-per-decade", dest="xi_per_decade")
    sp.add_argument("--time-order", dest="time_order")
    sp.add_argument("--time-knots", dest="time_knots")
    sp.add_argument("--space-order", dest="space_order")
    sp.add_argument("--space-knots", dest="space_knots")
    sp.add_argument("--out", help="CSV table path")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, DataFormatError, FileNotFoundError) as exc:
        print(f"ppkrige {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (KrigingError, SingularSystemError, NumericalError, np.linalg.LinAlgError) as exc:
        print(f"ppkrige {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"ppkrige {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
