"""Batch front door: validate and execute JSON-configured runs, emitting
CSV/JSON/field artifacts with a manifest.

Exit codes: 0 success, 2 validation error, 3 numerical failure (partial
artifacts are kept and flagged in the manifest).  The only environment
variables consulted are MFE_NUM_THREADS (kernel thread cap) and MFE_NUMBA
(backend selection; results are bit-identical either way).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__, continuation, diagnostics, fieldio, variational
from .core import Params, newton_solve, residual
from .grid import DomainError, Field, build_domain, zero_field

COMMANDS = ("solve", "branch", "diagnose", "minimize", "family", "thresholds")


# ---------------------------------------------------------------------------
# config loading and validation


def load_config(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _params_from_config(cfg: dict) -> Params:
    blk = cfg.get("params", {})
    if "tau" in blk:
        from .core import convert_tau_form
        return convert_tau_form(float(blk["tau"]), float(blk["lambda_tilde"]),
                                float(blk.get("gamma", 0.0)))
    return Params(lam=float(blk.get("lambda", 0.0)),
                  sigma=float(blk.get("sigma", 0.0)),
                  gamma=float(blk.get("gamma", 0.0)))


def validate_config(cfg: dict, base_dir: str = ".") -> list[str]:
    """Collect every violated constraint; performs no numerics."""
    errs: list[str] = []
    cmd = cfg.get("command")
    if cmd not in COMMANDS:
        errs.append(f"command must be one of {COMMANDS}, got {cmd!r}")

    blk = cfg.get("params", {})
    if "tau" in blk:
        tau = blk.get("tau")
        if not (isinstance(tau, (int, float)) and 0.0 < tau <= 1.0):
            errs.append(f"params.tau out of (0,1]: {tau!r}")
        lt = blk.get("lambda_tilde")
        if not (isinstance(lt, (int, float)) and lt >= 0.0):
            errs.append(f"params.lambda_tilde must be nonnegative: {lt!r}")
    else:
        lam = blk.get("lambda", 0.0)
        sigma = blk.get("sigma", 0.0)
        if not (isinstance(lam, (int, float)) and lam >= 0.0):
            errs.append(f"params.lambda must be nonnegative: {lam!r}")
        if not (isinstance(sigma, (int, float)) and sigma >= 0.0):
            errs.append(f"params.sigma must be nonnegative: {sigma!r}")
    gamma = blk.get("gamma", 0.0)
    if not (isinstance(gamma, (int, float)) and -1.0 <= gamma < 1.0):
        errs.append("gamma out of [-1,1)")

    if cmd != "thresholds":
        dom_spec = cfg.get("domain")
        if not isinstance(dom_spec, dict):
            errs.append("domain block missing")
        else:
            try:
                build_domain(dom_spec)
            except DomainError as exc:
                errs.append(f"domain: {exc}")
            except (KeyError, TypeError, ValueError) as exc:
                errs.append(f"domain spec invalid: {exc}")

    if cmd == "branch":
        b = cfg.get("branch", {})
        try:
            continuation.BranchConfig(
                lambda_start=float(b.get("lambda_start", 1.0)),
                lambda_target=float(b.get("lambda_target", 8.0 * math.pi)),
                ds0=float(b.get("ds0", 0.5)),
                ds_min=float(b.get("ds_min", 1e-6)),
                ds_max=float(b.get("ds_max", 2.0)),
            )
        except (ValueError, TypeError) as exc:
            errs.append(f"branch: {exc}")
    if cmd == "family":
        f = cfg.get("family", {})
        eps = f.get("epsilon", 0.5)
        if not (isinstance(eps, (int, float)) and 0.0 < eps < 1.0):
            errs.append(f"family.epsilon out of (0,1): {eps!r}")
        rv = f.get("r_values", [])
        if rv and not all(0.0 <= r < 1.0 for r in rv):
            errs.append("family.r_values must lie in [0,1)")
    if cmd == "diagnose":
        d = cfg.get("diagnose", {})
        fpath = d.get("field")
        if fpath and not os.path.exists(os.path.join(base_dir, fpath)):
            errs.append(f"diagnose.field does not exist: {fpath}")

    seed = cfg.get("seed", 0)
    if not isinstance(seed, int):
        errs.append(f"seed must be an integer: {seed!r}")
    return errs


# ---------------------------------------------------------------------------
# artifact plumbing


class _Artifacts:
    def __init__(self, outdir: str):
        self.outdir = outdir
        self.files: list[str] = []
        os.makedirs(outdir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.outdir, name)

    def write_text(self, name: str, text: str):
        self._atomic(name, text)
        self.files.append(name)

    def write_json(self, name: str, obj):
        self._atomic(name, json.dumps(obj, indent=2, allow_nan=True) + "\n")
        self.files.append(name)

    def add_existing(self, name: str):
        self.files.append(name)

    def _atomic(self, name: str, text: str):
        fd, tmp = tempfile.mkstemp(dir=self.outdir, prefix=name, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, self.path(name))

    def atomic_file(self, name: str, writer):
        """Write through a callback receiving a temp path, then rename."""
        fd, tmp = tempfile.mkstemp(dir=self.outdir, prefix=name, suffix=".tmp")
        os.close(fd)
        writer(tmp)
        os.replace(tmp, self.path(name))
        self.files.append(name)


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _manifest(art: _Artifacts, cfg: dict, status: str, error: str | None = None):
    art.write_json("manifest.json", {
        "tool": "mfe",
        "version": __version__,
        "command": cfg.get("command"),
        "config_sha256": _config_hash(cfg),
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "status": status,
        "error": error,
        "files": sorted(set(art.files)),
    })


def _newton_report_dict(rep) -> dict:
    return {"converged": rep.converged, "iterations": rep.iterations,
            "final_residual_norm": rep.final_residual_norm,
            "damping_history": list(rep.damping_history), "message": rep.message}


# ---------------------------------------------------------------------------
# command execution


def _initial_field(cfg: dict, dom, rng) -> Field:
    u0_spec = cfg.get("u0", "zero")
    if u0_spec == "zero":
        return zero_field(dom)
    if u0_spec == "random":
        return Field(dom, 0.5 * rng.standard_normal(dom.n))
    if isinstance(u0_spec, dict) and "file" in u0_spec:
        dump = fieldio.load_field_dump(u0_spec["file"])
        return fieldio.attach_to_domain(dump, dom)
    if isinstance(u0_spec, dict) and "family" in u0_spec:
        fam = u0_spec["family"]
        curve, eps0_auto = variational.default_family_curve(dom)
        eps0 = float(fam.get("eps0", eps0_auto))
        return variational.build_family_field(dom, curve(float(fam.get("theta", 0.0))),
                                              eps0, float(fam["r"]))
    raise ValueError(f"unknown u0 spec: {u0_spec!r}")


def _run_solve(cfg, p, dom, art, rng):
    blk = cfg.get("solve", {})
    u0 = _initial_field(blk, dom, rng)
    u, rep = newton_solve(u0, p, tol=float(blk.get("tol", 1e-10)),
                          max_iter=int(blk.get("max_iter", 30)))
    art.atomic_file("u.field", lambda tmp: fieldio.dump_field(u, tmp))
    art.write_json("solve_report.json", _newton_report_dict(rep))
    if not rep.converged:
        raise RuntimeError(f"newton solve failed: {rep.message}")


def _branch_config(cfg) -> continuation.BranchConfig:
    b = cfg.get("branch", {})
    return continuation.BranchConfig(
        lambda_start=float(b.get("lambda_start", 1.0)),
        lambda_target=float(b.get("lambda_target", 8.0 * math.pi)),
        ds0=float(b.get("ds0", 0.5)),
        ds_min=float(b.get("ds_min", 1e-6)),
        ds_max=float(b.get("ds_max", 2.0)),
        arclength=bool(b.get("arclength", True)),
        u_max_cutoff=float(b.get("u_max_cutoff", 25.0)),
        thin_stride=int(b.get("thin_stride", 10)),
        newton_tol=float(b.get("newton_tol", 1e-10)),
        newton_max_iter=int(b.get("newton_max_iter", 20)),
        max_points=int(b.get("max_points", 2000)),
    )


def _bm_assumption(p: Params, lam_max: float) -> dict:
    """Boundedness assumption for the negative-part control:
    lam (1 + sigma |gamma|) < 4 pi / |gamma|."""
    if p.gamma >= 0.0:
        return {"applicable": False}
    bound = 4.0 * math.pi / abs(p.gamma)
    value = lam_max * (1.0 + p.sigma * abs(p.gamma))
    return {"applicable": True, "lambda_max": lam_max,
            "value": value, "bound": bound, "satisfied": bool(value < bound)}


def _run_branch(cfg, p, dom, art, rng):
    bcfg = _branch_config(cfg)
    result = continuation.trace_branch(p, dom, bcfg)
    art.atomic_file("branch.csv",
                    lambda tmp: continuation.write_branch_csv(result.points, tmp))
    for pt in result.points:
        if pt.u_ref is not None:
            name = f"u_step_{pt.step:04d}.field"
            art.atomic_file(name, lambda tmp, f=pt.u_ref: fieldio.dump_field(f, tmp))
    quant = diagnostics.quantization_check(result)
    lam_max = max(pt.lam for pt in result.points)
    report = {
        "termination": result.termination,
        "n_points": len(result.points),
        "lambda_first": result.points[0].lam,
        "lambda_last": result.points[-1].lam,
        "u_max_last": result.points[-1].u_max,
        "fold_indices": result.fold_indices,
        "exp_gamma_integral_min": result.monitors.get("exp_gamma_integral_min"),
        "exp_gamma_integral_floor": 1e-6 * dom.area,
        "u_minus_sup_first": result.points[0].u_minus_sup,
        "u_minus_sup_max": max((pt.u_minus_sup for pt in result.points
                                if not math.isnan(pt.u_minus_sup)), default=math.nan),
        "min_peak_boundary_distance": min(
            (pt.min_peak_boundary_distance for pt in result.points
             if not math.isnan(pt.min_peak_boundary_distance)), default=math.nan),
        "negative_part_assumption": _bm_assumption(p, lam_max),
        "quantization": quant,
    }
    art.write_json("branch_report.json", report)
    art.write_json("diagnostics.json", _diagnostics_payload(
        cfg, p.with_lam(result.points[-1].lam), dom,
        result.points[-1].u_ref, quant))


def _diagnostics_payload(cfg, p, dom, u, quant=None) -> dict:
    d = cfg.get("diagnose", {})
    radii = d.get("radii") or [0.05 * dom.diameter, 0.1 * dom.diameter,
                               0.2 * dom.diameter, 0.5 * dom.diameter, dom.diameter]
    thr = diagnostics.thresholds(p.gamma, p.sigma)
    peaks = diagnostics.find_peaks(u, p, cutoff=d.get("cutoff"))
    payload = {
        "thresholds": {
            "gamma": thr.gamma, "sigma": thr.sigma,
            "sigma_gamma": thr.sigma_gamma, "lambda_bar": thr.lambda_bar,
            "lambda_bar_P_scaled": thr.lambda_bar_P_scaled,
            "admissible": thr.admissible, "window": list(thr.window),
        },
        "peaks": [{"x": pk.x, "y": pk.y, "height": pk.height,
                   "negative": pk.negative, "radius_used": pk.radius_used,
                   "local_mass_1": pk.local_mass_1,
                   "local_mass_gamma": pk.local_mass_gamma,
                   "plateau_ok": pk.plateau_ok} for pk in peaks],
        "quantization": quant if quant is not None else
            {"conclusive": False, "verdict": "inconclusive",
             "reason": "single-solution diagnose run (no traced branch)"},
        "concentration": {"radii": list(radii),
                          "values": diagnostics.concentration_function(u, radii)},
        "center_of_mass": list(diagnostics.center_of_mass(u)),
        "boundary_distance_of_peaks": diagnostics.boundary_distance_of_peaks(peaks, dom),
    }
    mb = d.get("membership")
    if mb:
        wit = variational.improved_mt_membership(u, float(mb["a0"]), float(mb["d0"]))
        payload["membership"] = None if wit is None else {
            "rect_a": list(wit.rect_a), "rect_b": list(wit.rect_b),
            "mass_a": wit.mass_a, "mass_b": wit.mass_b, "distance": wit.distance}
    return payload


def _run_diagnose(cfg, p, dom, art, rng):
    d = cfg.get("diagnose", {})
    if d.get("field"):
        dump = fieldio.load_field_dump(d["field"])
        u = fieldio.attach_to_domain(dump, dom)
    else:
        u0 = _initial_field(d, dom, rng)
        u, rep = newton_solve(u0, p, tol=float(d.get("tol", 1e-10)),
                              max_iter=int(d.get("max_iter", 30)))
        if not rep.converged:
            raise RuntimeError(f"diagnose solve failed: {rep.message}")
    art.write_json("diagnostics.json", _diagnostics_payload(cfg, p, dom, u))


def _run_minimize(cfg, p, dom, art, rng):
    blk = cfg.get("minimize", {})
    u0 = _initial_field(blk, dom, rng)
    res = variational.gradient_flow_minimize(
        u0, p, tol=float(blk.get("tol", 1e-8)),
        max_iter=int(blk.get("max_iter", 5000)),
        step0=float(blk.get("step0", 1.0)),
        j_floor=blk.get("j_floor"))
    art.atomic_file("minimize_trace.csv",
                    lambda tmp: variational.write_flow_csv(res, tmp))
    art.atomic_file("u_min.field", lambda tmp: fieldio.dump_field(res.u, tmp))
    art.write_json("minimize_report.json", {
        "certificate": res.certificate, "iterations": res.iterations,
        "final_J": res.final_J, "final_grad_norm": res.final_grad_norm,
        "j_floor": res.j_floor,
        "pde_residual_sup": residual(res.u, p).sup_norm,
        "message": res.message,
    })


def _run_family(cfg, p, dom, art, rng):
    f = cfg.get("family", {})
    curve, eps0_auto = variational.default_family_curve(dom)
    eps0 = float(f.get("eps0", eps0_auto))
    r_values = f.get("r_values") or list(np.linspace(0.9, 0.98, 9))
    if "theta_values" in f:
        theta_values = f["theta_values"]
    else:
        k = int(f.get("theta_count", 8))
        theta_values = list(np.linspace(0.0, 2.0 * math.pi, k, endpoint=False))
    scan = variational.family_scan(p, dom, curve, eps0, r_values, theta_values,
                                   epsilon=float(f.get("epsilon", 0.5)))
    art.atomic_file("family.csv", lambda tmp: variational.write_family_csv(scan, tmp))
    art.write_json("family_report.json", {
        "eps0": eps0, "slope": scan.slope, "intercept": scan.intercept,
        "slope_theory": scan.slope_theory, "sup_J": scan.sup_J,
    })


def _run_thresholds(cfg, p, dom, art, rng):
    thr = diagnostics.thresholds(p.gamma, p.sigma)
    art.write_json("thresholds.json", {
        "gamma": thr.gamma, "sigma": thr.sigma, "sigma_gamma": thr.sigma_gamma,
        "lambda_bar": thr.lambda_bar, "lambda_bar_P_scaled": thr.lambda_bar_P_scaled,
        "admissible": thr.admissible, "window": list(thr.window),
        "case_candidates": list(thr.case_candidates),
    })


_RUNNERS = {
    "solve": _run_solve,
    "branch": _run_branch,
    "diagnose": _run_diagnose,
    "minimize": _run_minimize,
    "family": _run_family,
    "thresholds": _run_thresholds,
}


def run_config(cfg: dict, outdir: str) -> int:
    errs = validate_config(cfg)
    if errs:
        for e in errs:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    art = _Artifacts(outdir)
    p = _params_from_config(cfg)
    dom = build_domain(cfg["domain"]) if cfg["command"] != "thresholds" else None
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    try:
        _RUNNERS[cfg["command"]](cfg, p, dom, art, rng)
    except Exception as exc:  # numerical failure: keep partial artifacts, flag them
        _manifest(art, cfg, "failed", error=f"{type(exc).__name__}: {exc}")
        print(f"run failed at stage {cfg['command']!r}: {exc}", file=sys.stderr)
        return 3
    _manifest(art, cfg, "ok")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mfe",
        description="Two-intensity mean field equation laboratory")
    sub = parser.add_subparsers(dest="mode", required=True)
    p_run = sub.add_parser("run", help="validate and execute a config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory "
                       "(default: config output_dir or '.')")
    p_val = sub.add_parser("validate", help="validate a config without running")
    p_val.add_argument("config")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config {args.config}: {exc}", file=sys.stderr)
        return 2

    if args.mode == "validate":
        errs = validate_config(cfg, base_dir=os.path.dirname(args.config) or ".")
        if errs:
            for e in errs:
                print(f"violation: {e}")
            return 2
        print("config ok")
        return 0

    outdir = args.out or cfg.get("output_dir") or "."
    return run_config(cfg, outdir)


if __name__ == "__main__":
    sys.exit(main())
