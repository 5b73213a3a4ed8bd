"""Command-line entry point: ``fbma <command> [flags]``.

Exit status: 0 success, 1 numerical failure (divergence, refusal, failed
check), 2 configuration error. Every run writes ``run.json`` into ``--out``.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, curvelab, diagnostics, liouville, rebuild, weierstrass
from .catenoid import critical_catenoid
from .errors import ConfigurationError, FBMAError
from .geomkit import (AnnulusSpec, RigidMotion, SlabSpec, fit_rigid_motion, read_field_csv, read_obj,
                      read_points_csv, write_field_csv, write_points_csv)

log = logging.getLogger("fbma")

COMMANDS = ("solve-liouville", "rebuild", "certify-sphere", "weierstrass-eval", "diagnose",
            "pipeline-catenoid", "sweep")

# parameter name -> (type, default)
_COMMON = {"out": (str, "out")}
_SOLVE = {"R": (float, None), "C0": (float, None), "n_r": (int, 129), "n_theta": (int, 256),
          "tol": (float, liouville.DEFAULT_TOL), "max_iter": (int, liouville.DEFAULT_MAX_ITER),
          "initial": (str, "symmetric"), "order": (int, 2)}
PARAMS = {
    "solve-liouville": dict(_SOLVE),
    "rebuild": {"solution": (str, None), "C0": (float, None), "copies": (int, 2), "order": (int, 2)},
    "certify-sphere": {"curve": (str, None), "patch": (str, None), "row": (int, 0),
                       "closed": (str, "true"), "rel_tol": (float, curvelab.REL_TOL)},
    "weierstrass-eval": {"preset": (str, None), "g": (str, None), "omega": (str, None),
                         "R": (float, None), "n_r": (int, 65), "n_theta": (int, 128),
                         "chart": (str, "annulus")},
    "diagnose": {"patch": (str, None), "hopf": (bool, False), "injectivity": (bool, False),
                 "kappa_g": (bool, False), "C0": (float, None)},
    "pipeline-catenoid": {"n_r": (int, 129), "n_theta": (int, 256), "tol": (float, liouville.DEFAULT_TOL),
                          "max_iter": (int, liouville.DEFAULT_MAX_ITER), "initial": (str, "symmetric"),
                          "copies": (int, 2), "order": (int, 4)},
    "sweep": {"R_list": (str, None), "C0_list": (str, None), "n_r": (int, 33), "n_theta": (int, 64),
              "tol": (float, liouville.DEFAULT_TOL), "max_iter": (int, liouville.DEFAULT_MAX_ITER),
              "initial": (str, "symmetric"), "order": (int, 2)},
}
for _p in PARAMS.values():
    _p.update(_COMMON)


def tolerances() -> dict:
    """Every tolerance and threshold used by the modules."""
    return {
        "weierstrass": {"pole_threshold": weierstrass.POLE_THRESHOLD,
                        "zero_threshold": weierstrass.ZERO_THRESHOLD},
        "curvelab": {"kappa_floor": curvelab.KAPPA_FLOOR, "tau_floor": curvelab.TAU_FLOOR,
                     "rel_tol": curvelab.REL_TOL, "flat_fraction": curvelab.FLAT_FRACTION,
                     "condition_fraction": curvelab.CONDITION_FRACTION,
                     "sign_tie_ratio": curvelab.SIGN_TIE_RATIO},
        "liouville": {"tol": liouville.DEFAULT_TOL, "max_iter": liouville.DEFAULT_MAX_ITER,
                      "damping_floor": liouville.DAMPING_FLOOR, "v_cap": liouville.V_CAP},
        "rebuild": {"compat_tol": rebuild.COMPAT_TOL, "n_max": rebuild.N_MAX,
                    "angle_tol": rebuild.ANGLE_TOL, "identity_tol": rebuild.IDENTITY_TOL,
                    "c_tol": rebuild.C_TOL},
        "diagnostics": {"conformal_tol": diagnostics.CONFORMAL_TOL,
                        "defect_tol": diagnostics.DEFECT_TOL, "gz_floor": diagnostics.GZ_FLOOR},
    }


@dataclass
class RunConfig:
    command: str
    parameters: dict
    output_dir: Path
    artifacts: list = field(default_factory=list)

    def get(self, key):
        return self.parameters.get(key)

    def require(self, *keys):
        missing = [k for k in keys if self.parameters.get(k) is None]
        if missing:
            raise ConfigurationError(f"{self.command}: missing parameter(s) {', '.join(missing)}")

    def write_json(self, name: str, payload) -> Path:
        path = self.output_dir / name
        path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")
        self.artifacts.append(name)
        return path

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.output_dir / name


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _convert(key: str, typ, raw):
    if raw is None:
        return None
    if typ is bool:
        if isinstance(raw, bool):
            return raw
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from exc


def read_config_file(path) -> dict:
    """Flat ``key = value`` text; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def build_config(command: str, flags: dict, config_path=None) -> RunConfig:
    """Defaults, then config file, then flags. Unknown keys are rejected."""
    spec = PARAMS[command]
    values = {k: d for k, (_, d) in spec.items()}
    if config_path:
        for k, v in read_config_file(config_path).items():
            if k not in spec:
                raise ConfigurationError(f"unknown config key {k!r} for {command}")
            values[k] = _convert(k, spec[k][0], v)
    for k, v in flags.items():
        if v is None:
            continue
        if k not in spec:
            raise ConfigurationError(f"unknown parameter {k!r} for {command}")
        values[k] = _convert(k, spec[k][0], v)
    _validate(command, values)
    return RunConfig(command, values, Path(values["out"]))


def _validate(command: str, p: dict) -> None:
    if p.get("R") is not None and not p["R"] > 1.0:
        raise ConfigurationError(f"R must exceed 1, got {p['R']}")
    if p.get("n_r") is not None and p["n_r"] < 3:
        raise ConfigurationError("n_r must be at least 3")
    if p.get("n_theta") is not None and p["n_theta"] < 4:
        raise ConfigurationError("n_theta must be at least 4")
    if p.get("tol") is not None and not p["tol"] > 0:
        raise ConfigurationError("tol must be positive")
    if p.get("max_iter") is not None and p["max_iter"] < 1:
        raise ConfigurationError("max_iter must be positive")
    if p.get("copies") is not None and p["copies"] < 1:
        raise ConfigurationError("copies must be positive")
    if p.get("order") is not None and p["order"] not in (2, 4):
        raise ConfigurationError("order must be 2 or 4")
    if command in ("solve-liouville",) and p.get("C0") == 0:
        raise ConfigurationError("C0 = 0 is rejected")
    init = p.get("initial")
    if init is not None and init not in ("symmetric", "constant"):
        try:
            float(init)
        except ValueError:
            raise ConfigurationError(f"initial must be symmetric, constant or a number, got {init!r}")


def _initial(value: str):
    return value if value in ("symmetric", "constant") else float(value)


# ---------------------------------------------------------------------------
# commands


def cmd_solve_liouville(cfg: RunConfig) -> dict:
    cfg.require("R", "C0")
    p = cfg.parameters
    problem = liouville.LiouvilleProblem.build(p["R"], p["C0"], p["n_r"], p["n_theta"],
                                               tol=p["tol"], max_iter=p["max_iter"], order=p["order"])
    try:
        sol = liouville.solve_full(problem, _initial(p["initial"]))
    except liouville.ConvergenceError as exc:
        cfg.write_json("solution.json", {"converged": False, "error": str(exc), "newton_trace": exc.trace})
        raise
    write_field_csv(cfg.path("solution.csv"), problem.grid, sol.v)
    lhs, rhs, gap = liouville.area_perimeter_check(sol)
    report = sol.report()
    report["area_perimeter"] = {"lhs": lhs, "rhs": rhs, "gap": gap}
    cfg.write_json("solution.json", report)
    return {"iterations": sol.iterations, "area_gap": gap}


def _load_solution(path, C0: float, order: int = 2) -> liouville.LiouvilleSolution:
    spec, values, _ = read_field_csv(path)
    if spec is None or np.iscomplexobj(values):
        raise ConfigurationError(f"{path}: expected a real annulus field (t,theta,value)")
    problem = liouville.LiouvilleProblem(spec.R, C0, spec, order=order)
    ri, rb = liouville.evaluate(values, problem)
    return liouville.LiouvilleSolution(problem, values, ri, rb, [], True)


def _rebuild(cfg: RunConfig, sol: liouville.LiouvilleSolution, C0: float, copies: int) -> dict:
    slab, vt = liouville.lift_to_slab(sol, periods=max(copies, 1))
    frame = rebuild.frame_integrate(vt, slab, C0)
    out = {"drift": frame.drift, "gram_residual": frame.gram_residual(),
           "condition_1_residual": rebuild.verify_condition_1(sol, frame)}
    try:
        spheres = rebuild.find_spheres(frame)
        if spheres.concentric:
            # put the common center at the origin before anything is exported
            frame = frame.transformed(RigidMotion(translation=-spheres.O1))
            spheres = rebuild.find_spheres(frame)
        out["spheres"] = {"O1": spheres.O1, "O2": spheres.O2, "radii": spheres.radii,
                          "concentric": spheres.concentric, "separation": spheres.separation,
                          "residuals": spheres.residuals()}
        center = spheres.O1 if spheres.concentric else None
    except FBMAError as exc:
        out["spheres"] = {"error": str(exc)}
        spheres, center = None, None
    if copies >= 2:
        dec = rebuild.decompose(frame, center=center)
        out["decomposition"] = dec.to_dict()
    piece = frame.patch(slice(0, slab.n_re))
    piece.export_obj(cfg.path("piece.obj"), comment="fundamental piece")
    frame.patch().export_obj(cfg.path("surface.obj"), comment=f"{copies} copies")
    origin = spheres.O1 if spheres is not None else np.zeros(3)
    out["flux"] = rebuild.flux_and_torque(piece, origin=origin,
                                          concentric=bool(spheres and spheres.concentric))
    return out


def cmd_rebuild(cfg: RunConfig) -> dict:
    cfg.require("solution", "C0")
    p = cfg.parameters
    sol = _load_solution(p["solution"], p["C0"], p["order"])
    report = _rebuild(cfg, sol, p["C0"], p["copies"])
    cfg.write_json("rebuild.json", report)
    return {"classification": report.get("decomposition", {}).get("classification")}


def _load_patch(prefix: str) -> tuple[weierstrass.SurfacePatch, np.ndarray | None]:
    """Patch from ``prefix.obj`` (positions, normals, grid header) and the
    optional Gauss-map field ``prefix.csv``."""
    base = prefix[:-4] if prefix.endswith((".obj", ".csv")) else prefix
    verts, norms, comments = read_obj(base + ".obj")
    head = next((c for c in comments if c.startswith("grid ")), None)
    if head is None:
        raise ConfigurationError(f"{base}.obj lacks a grid header")
    tok = head.split()
    n0, n1, R, chart = int(tok[1]), int(tok[2]), float(tok[4]), tok[6]
    if chart == "annulus":
        spec = AnnulusSpec(R, n0, n1)
    else:
        n_re = int(tok[8]) if len(tok) > 8 else n1
        if (n1 - 1) % (n_re - 1):
            raise ConfigurationError(f"{base}.obj: slab window is not a whole number of periods")
        spec = SlabSpec(R, n0, n_re, periods=(n1 - 1) // (n_re - 1))
    if spec.shape != (n0, n1) or len(verts) != n0 * n1:
        raise ConfigurationError(f"{base}.obj does not match its grid header")
    patch = weierstrass.SurfacePatch.from_positions(spec, verts.reshape(n0, n1, 3))
    if norms is not None:
        patch.normal = norms.reshape(n0, n1, 3)
    g = None
    if Path(base + ".csv").exists():
        _, g, _ = read_field_csv(base + ".csv")
    return patch, g


def cmd_certify_sphere(cfg: RunConfig) -> dict:
    p = cfg.parameters
    if p.get("curve"):
        pts = read_points_csv(p["curve"])
        closed = _convert("closed", bool, p["closed"])
        curve = curvelab.frenet_analyze(pts, closed)
        verdict = curvelab.spherical_criterion(curve, p["rel_tol"])
        report = {"verdict": verdict.verdict, "radius": verdict.radius, "deviation": verdict.deviation}
        if verdict.verdict == "spherical":
            _, center, spread = curvelab.sphere_normal_field(curve, verdict.radius)
            report.update(center=center, center_spread=spread)
        cfg.write_json("certificate.json", report)
        return report
    if p.get("patch"):
        patch, _ = _load_patch(p["patch"])
        spec = patch.spec
        row = p["row"] % spec.shape[0]
        if patch.is_annulus:
            path = np.c_[np.full(spec.n_theta, spec.t[row]), spec.theta]
            closed = True
        else:
            path = np.c_[spec.x, np.full(spec.n_cols, spec.y[row])]
            closed = False
        gamma = curvelab.curve_on_surface(patch, path, closed=closed)
        cert = curvelab.certify_orthogonal_sphere(gamma, rel_tol=p["rel_tol"])
        nodes = cfg.path("certificate_nodes.csv")
        curvelab.write_certificate_nodes(nodes, gamma, cert)
        report = cert.to_dict(per_node_path=nodes.name)
        cfg.write_json("certificate.json", report)
        return {"branch": cert.branch}
    raise ConfigurationError("certify-sphere needs --curve or --patch")


def _safe_expr(text: str):
    allowed = {k: getattr(np, k) for k in ("exp", "log", "sqrt", "sin", "cos", "tan", "sinh",
                                          "cosh", "tanh", "pi", "conj", "ones_like", "zeros_like")}
    allowed["e"] = math.e
    allowed["j"] = 1j
    code = compile(text, "<expr>", "eval")
    for name in code.co_names:
        if name not in allowed and name not in ("z", "xi"):
            raise ConfigurationError(f"name {name!r} not allowed in expression {text!r}")

    def fn(z):
        out = eval(code, {"__builtins__": {}}, {**allowed, "z": z, "xi": z})
        return np.broadcast_to(np.asarray(out, dtype=complex), np.shape(z))
    return fn


def cmd_weierstrass_eval(cfg: RunConfig) -> dict:
    p = cfg.parameters
    cat = critical_catenoid()
    R = p["R"] if p["R"] is not None else cat.R
    if p["chart"] == "annulus":
        spec = AnnulusSpec(R, p["n_r"], p["n_theta"])
    elif p["chart"] == "slab":
        spec = SlabSpec(R, p["n_r"], p["n_theta"] + 1)
    else:
        raise ConfigurationError("chart must be annulus or slab")
    if p["preset"]:
        data, hints = weierstrass.preset_data(p["preset"], spec)
    elif p["g"] and p["omega"]:
        data = weierstrass.WeierstrassData.from_functions(spec, _safe_expr(p["g"]), _safe_expr(p["omega"]))
        hints = {}
    else:
        raise ConfigurationError("weierstrass-eval needs --preset or both --g and --omega")
    patch = weierstrass.integrate_immersion(data, **hints)
    patch.export_obj(cfg.path("patch.obj"))
    write_field_csv(cfg.path("patch.csv"), spec, data.g.values)
    report = {"conformality": weierstrass.conformality_residual(patch),
              "harmonicity": weierstrass.harmonicity_residual(patch),
              "normal": weierstrass.normal_residual(patch), **patch.diagnostics}
    cfg.write_json("weierstrass.json", report)
    return report


def cmd_diagnose(cfg: RunConfig) -> dict:
    cfg.require("patch")
    p = cfg.parameters
    patch, g = _load_patch(p["patch"])
    report = {}
    if not (p["hopf"] or p["injectivity"] or p["kappa_g"]):
        raise ConfigurationError("diagnose needs at least one of --hopf, --injectivity, --kappa-g")
    C0 = p["C0"]
    if p["hopf"] or (p["kappa_g"] and C0 is None):
        hopf = diagnostics.hopf_extract(patch)
        report["hopf"] = hopf.to_dict()
        report["hopf"]["holomorphy_residual"] = hopf.holomorphy_residual()
        C0 = C0 if C0 is not None else hopf.C0_est
    if p["injectivity"] or p["kappa_g"]:
        if g is None:
            raise ConfigurationError("Gauss-map CSV (prefix.csv) is required")
        if not patch.is_annulus:
            raise ConfigurationError("injectivity and kappa-g need an annulus patch")
    if p["injectivity"]:
        data = weierstrass.WeierstrassData(
            weierstrass.ComplexField(patch.spec, g), weierstrass.ComplexField(patch.spec, np.ones_like(g)))
        rep = diagnostics.injectivity_report(data)
        report["injectivity"] = rep.to_dict()
    if p["kappa_g"]:
        spec = patch.spec
        rows = {}
        for name, row in (("inner", 0), ("outer", spec.n_r - 1)):
            prof = diagnostics.remark42_kappa_g(g[row], C0)
            gamma = curvelab.curve_on_surface(patch, np.c_[np.full(spec.n_theta, spec.t[row]), spec.theta])
            rows[name] = {"kappa_g_min": prof.kappa_g.min(), "kappa_g_max": prof.kappa_g.max(),
                          "g_theta_modulus_spread": prof.modulus_spread,
                          "max_gap_to_surface": float(np.max(np.abs(
                              np.abs(prof.kappa_g) - np.abs(gamma.geodesic_curvature))))}
        report["kappa_g"] = {"c": C0, **rows}
    cfg.write_json("diagnose.json", report)
    return report


def cmd_pipeline_catenoid(cfg: RunConfig) -> dict:
    p = cfg.parameters
    cat = critical_catenoid()
    problem = liouville.LiouvilleProblem.build(cat.R, cat.C0, p["n_r"], p["n_theta"], tol=p["tol"],
                                               max_iter=p["max_iter"], order=p["order"])
    sol = liouville.solve_full(problem, _initial(p["initial"]))
    write_field_csv(cfg.path("solution.csv"), problem.grid, sol.v)
    copies = max(p["copies"], 2)
    out = {"catenoid": {"s0": cat.s0, "a": cat.a, "R": cat.R}, "solve": sol.report()}
    out["solve"]["area_perimeter_gap"] = liouville.area_perimeter_check(sol)[2]
    out.update(_rebuild(cfg, sol, cat.C0, copies))
    slab = SlabSpec.from_annulus(problem.grid)
    Y, X = slab.mesh()
    piece = weierstrass.SurfacePatch.from_positions(slab, cat.surface(X, Y))
    verts, _, _ = read_obj(cfg.output_dir / "piece.obj")
    _, rms = fit_rigid_motion(verts, piece.positions.reshape(-1, 3))
    out["alignment_rms_vs_analytic"] = rms
    sph = out.get("spheres", {})
    at_origin = sph.get("concentric") is True and float(np.linalg.norm(sph["O1"])) < 1e-4
    ok = at_origin and out.get("decomposition", {}).get("classification") == "identity"
    out["checks_passed"] = bool(ok)
    cfg.write_json("pipeline.json", out)
    if not ok:
        raise FBMAError("catenoid pipeline checks failed; see pipeline.json")
    return {"checks_passed": ok}


def _sweep_one(args) -> dict:
    R, C0, n_r, n_theta, tol, max_iter, initial, order = args
    rec = {"R": R, "C0": C0}
    try:
        problem = liouville.LiouvilleProblem.build(R, C0, n_r, n_theta, tol=tol, max_iter=max_iter,
                                                   order=order)
        try:
            sym = liouville.solve_symmetric(problem)
            rec["symmetric"] = {"alpha": sym.alpha, "t0": sym.t0}
        except FBMAError:
            rec["symmetric"] = None
        sol = liouville.solve_full(problem, _initial(initial))
        rec.update(status="converged", iterations=sol.iterations,
                   residual_interior=sol.residual_interior, residual_boundary=sol.residual_boundary,
                   area_perimeter_gap=liouville.area_perimeter_check(sol)[2],
                   theta_spread=float(np.max(np.ptp(sol.v, axis=1))))
    except FBMAError as exc:
        rec.update(status="divergent", error=str(exc))
    return rec


def _float_list(text, key) -> list[float]:
    if text is None:
        raise ConfigurationError(f"sweep needs --{key.replace('_', '-')}")
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"{key}: expected comma-separated numbers") from exc


def cmd_sweep(cfg: RunConfig) -> dict:
    p = cfg.parameters
    Rs, Cs = _float_list(p["R_list"], "R_list"), _float_list(p["C0_list"], "C0_list")
    for R in Rs:
        if not R > 1:
            raise ConfigurationError(f"R must exceed 1, got {R}")
    if any(c == 0 for c in Cs):
        raise ConfigurationError("C0 = 0 is rejected")
    jobs = [(R, C, p["n_r"], p["n_theta"], p["tol"], p["max_iter"], p["initial"], p["order"])
            for R in Rs for C in Cs]
    workers = max(1, min(int(os.environ.get("FBMA_THREADS", os.cpu_count() or 1)), len(jobs)))
    if workers == 1:
        results = [_sweep_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    cfg.write_json("sweep.json", {"pairs": results})
    return {"pairs": len(results), "divergent": sum(r["status"] != "converged" for r in results)}


HANDLERS = {
    "solve-liouville": cmd_solve_liouville, "rebuild": cmd_rebuild,
    "certify-sphere": cmd_certify_sphere, "weierstrass-eval": cmd_weierstrass_eval,
    "diagnose": cmd_diagnose, "pipeline-catenoid": cmd_pipeline_catenoid, "sweep": cmd_sweep,
}


def run(cfg: RunConfig) -> int:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    status, summary, error = 0, None, None
    try:
        summary = HANDLERS[cfg.command](cfg)
    except ConfigurationError as exc:
        status, error = 2, str(exc)
    except FBMAError as exc:
        status, error = 1, str(exc)
    except FloatingPointError as exc:
        status, error = 1, str(exc)
    manifest = {"command": cfg.command, "version": __version__, "parameters": cfg.parameters,
                "tolerances": tolerances(), "artifacts": sorted(set(cfg.artifacts)),
                "status": status, "error": error, "summary": summary}
    (cfg.output_dir / "run.json").write_text(json.dumps(_clean(manifest), indent=2, sort_keys=True) + "\n")
    if error:
        print(f"fbma {cfg.command}: {error}", file=sys.stderr)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fbma", description="Free boundary minimal annulus toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value file; flags override it")
        for key, (typ, default) in PARAMS[name].items():
            flag = "--" + key.replace("_", "-")
            names = [flag] if key not in ("n_r", "n_theta") else [flag, "--" + key]
            if typ is bool:
                sp.add_argument(*names, dest=key, action="store_const", const=True, default=None)
            else:
                sp.add_argument(*names, dest=key, default=None,
                                help=f"default: {default}" if default is not None else None)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FBMA_LOG", "WARNING"))
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = build_config(args.command, flags, args.config)
    except ConfigurationError as exc:
        print(f"fbma {args.command}: {exc}", file=sys.stderr)
        out = Path(flags.get("out") or "out")
        try:
            out.mkdir(parents=True, exist_ok=True)
            manifest = {"command": args.command, "version": __version__, "parameters": flags,
                        "tolerances": tolerances(), "artifacts": [], "status": 2,
                        "error": str(exc), "summary": None}
            (out / "run.json").write_text(json.dumps(_clean(manifest), indent=2, sort_keys=True) + "\n")
        except OSError:
            pass
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
