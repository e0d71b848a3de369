"""carpet-dyn command line."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CarpetDynError, DegreeError, NotSubhyperbolicError
from .jsonio import dumps, load_map, point, write_json
from .raster import RasterGrid, Window, carpet_verdict, rasterize, trace_all
from .sphere import MoebiusMap, RationalMap, is_inf

# numba probes for an optional TBB layer and warns when it is too old; irrelevant here
warnings.filterwarnings("ignore", message="The TBB threading layer")

EXIT_OK, EXIT_ERROR, EXIT_VERDICT = 0, 1, 2


@dataclass
class RunConfig:
    map: str | None = None
    resolution: int = 512
    window: str | None = None
    max_iter: int = 500
    root_tol: float = 1e-12
    cycle_tol: float = 1e-9
    tol_px: float = 2.0
    seed: int = 1
    samples: int = 10_000
    elevator_samples: int = 100
    landmarks: int = 6
    budget: int = 256
    max_exp: int = 4
    out: str | None = None
    out_dir: str | None = None
    png: bool = False

    def validate(self) -> None:
        for name in ("root_tol", "cycle_tol", "tol_px"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.resolution < 8:
            raise ValueError("resolution must be at least 8")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")

    @property
    def window_obj(self) -> Window:
        return Window.parse(self.window) if self.window else Window()

    def record(self) -> dict:
        d = asdict(self)
        d.pop("out", None)
        d.pop("out_dir", None)
        return d


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ERROR)


def _common(p: argparse.ArgumentParser, *names: str) -> None:
    opts = {
        "res": dict(dest="resolution", type=int, help="raster resolution N (N x N pixels)"),
        "window": dict(help="window as cx,cy,hw"),
        "max-iter": dict(dest="max_iter", type=int, help="iteration budget per pixel"),
        "seed": dict(type=int, help="random seed"),
        "samples": dict(type=int, help="sample count"),
        "tol-px": dict(dest="tol_px", type=float, help="Hausdorff tolerance in pixels"),
        "out": dict(help="output path"),
    }
    for n in names:
        p.add_argument(f"--{n}", default=None, **opts[n])


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="carpet-dyn", description="Dynamics and carpet geometry of rational maps.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="JSON run configuration; flags override its values")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    s = sub.add_parser("orbits", help="critical orbits and postcritical set")
    s.add_argument("map")
    _common(s, "out")

    s = sub.add_parser("render", help="raster image of basins and julia pixels")
    s.add_argument("map")
    _common(s, "res", "window", "max-iter", "out")
    s.add_argument("--components", help="write the component table as JSON")
    s.add_argument("--png", action="store_true", default=None, help="also write a PNG next to the PPM")

    s = sub.add_parser("geometry", help="carpet geometry estimators")
    s.add_argument("map")
    _common(s, "res", "window", "max-iter", "samples", "seed", "out")

    s = sub.add_parser("elevator", help="conformal elevator and distortion statistics")
    s.add_argument("map")
    _common(s, "res", "samples", "seed", "out")

    s = sub.add_parser("boettcher", help="Böttcher charts and component basepoints")
    s.add_argument("map")
    _common(s, "res", "window", "samples", "seed", "out")

    s = sub.add_parser("symmetries", help="Möbius symmetry group of the Julia set")
    s.add_argument("map")
    _common(s, "res", "window", "max-iter", "tol-px", "out")
    s.add_argument("--landmarks", type=int, default=None)
    s.add_argument("--budget", type=int, default=None)

    s = sub.add_parser("verify-eq", help="search relations g^m' o xi = g^m o xi o f^n")
    s.add_argument("f_map")
    s.add_argument("g_map")
    s.add_argument("--xi", required=True, help="a,b,c,d[,conj] with complex entries such as 1j or 0.5+2j")
    s.add_argument("--max-exp", dest="max_exp", type=int, default=None)
    _common(s, "res", "window", "tol-px", "seed", "out")

    s = sub.add_parser("report", help="full pipeline, one consolidated JSON plus images")
    s.add_argument("map")
    _common(s, "res", "window", "max-iter", "samples", "seed", "tol-px")
    s.add_argument("--out-dir", dest="out_dir", default=None)
    return p


def make_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("config must be a JSON object")
        known = {f.name for f in fields(RunConfig)}
        for k, v in data.items():
            if k not in known:
                raise ValueError(f"unknown config key {k!r}")
            setattr(cfg, k, v)
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            if f.name == "samples" and args.command == "elevator":
                cfg.elevator_samples = v
            else:
                setattr(cfg, f.name, v)
    if getattr(args, "map", None):
        cfg.map = args.map
    cfg.validate()
    return cfg


def parse_xi(text: str) -> MoebiusMap:
    parts = [t.strip() for t in text.split(",")]
    conj = False
    if len(parts) == 5:
        flag = parts.pop().lower()
        if flag not in ("conj", "1", "true"):
            raise ValueError(f"bad orientation flag {flag!r}")
        conj = True
    if len(parts) != 4:
        raise ValueError("xi needs four coefficients a,b,c,d")
    return MoebiusMap(*(complex(p.replace("i", "j")) for p in parts), conjugate=conj)


# -- images ---------------------------------------------------------------------------

_PALETTE = np.array(
    [[70, 130, 200], [240, 200, 80], [120, 190, 120], [200, 110, 160], [160, 160, 230], [230, 140, 90]],
    dtype=np.uint8,
)


def grid_image(grid: RasterGrid) -> np.ndarray:
    """RGB image: basin label colors, julia pixels black, unresolved pixels gray."""
    lab = grid.labels
    img = _PALETTE[np.mod(lab, len(_PALETTE))].copy()
    img[lab < 0] = (128, 128, 128)
    img[grid.julia] = 0
    return img


def write_ppm(path, img: np.ndarray) -> None:
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def write_png(path, img: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(img, "RGB").save(path)


# -- subcommands --------------------------------------------------------------------------


def _raster(cfg: RunConfig, f: RationalMap, resolution: int | None = None) -> RasterGrid:
    return rasterize(f, cfg.window_obj, resolution or cfg.resolution, max_iter=cfg.max_iter)


def do_orbits(cfg: RunConfig, f: RationalMap) -> tuple[dict, int]:
    from .orbits import postcritical_report

    rep = postcritical_report(f, tol=cfg.cycle_tol)
    out = {"command": "orbits", "config": cfg.record(), "report": rep.to_json()}
    return out, EXIT_OK if rep.is_pcf else EXIT_VERDICT


def do_render(cfg: RunConfig, f: RationalMap, components: str | None = None) -> tuple[dict, int]:
    grid = _raster(cfg, f)
    path = Path(cfg.out or "render.ppm")
    img = grid_image(grid)
    write_ppm(path, img)
    if cfg.png:
        write_png(path.with_suffix(".png"), img)
    table = grid.components
    summary = {
        "command": "render",
        "config": cfg.record(),
        "julia_pixels": grid.julia_count,
        "components": len(table),
    }
    if components:
        from .raster import chordal_diameter

        rows = []
        for comp in table:
            mask = table.ids[comp.bbox[0] : comp.bbox[2], comp.bbox[1] : comp.bbox[3]] == comp.id
            r, c = np.nonzero(mask)
            pts = grid.to_sphere_point(grid.pixel_center(r + comp.bbox[0], c + comp.bbox[1]))
            rows.append(
                {
                    "id": comp.id,
                    "pixels": comp.pixels,
                    "diameter": chordal_diameter(pts),
                    "bbox": list(comp.bbox),
                    "basin": comp.basin,
                    "touches_edge": comp.touches_edge,
                }
            )
        write_json(components, {"config": cfg.record(), "components": rows})
    return summary, EXIT_OK


def do_geometry(cfg: RunConfig, f: RationalMap) -> tuple[dict, int]:
    from .geometry import geometry_report

    areas = []
    grid = None
    for n in (cfg.resolution // 4, cfg.resolution // 2, cfg.resolution):
        grid = _raster(cfg, f, n)
        areas.append((n, grid.julia_count))
    curves = trace_all(grid)
    rep = geometry_report(grid, curves, cfg.samples, cfg.seed, julia_area=areas)
    verdict = carpet_verdict(grid, curves)
    ratios = [b[1] / a[1] for a, b in zip(areas, areas[1:]) if a[1] > 0]
    body = rep.to_json()
    body["julia_area_ratios"] = ratios
    body["carpet_verdict"] = verdict.label
    return {"command": "geometry", "config": cfg.record(), "geometry": body}, EXIT_OK


def do_elevator(cfg: RunConfig, f: RationalMap) -> tuple[dict, int]:
    from .elevator import branch_consistency, distortion_stats, normalize

    ctx = normalize(f, resolution=cfg.resolution, seed=cfg.seed)
    stats = distortion_stats(ctx, n_samples=cfg.elevator_samples, rng_seed=cfg.seed)
    props = [
        {"i": r.inside_half(), "k_le_N": r.k <= ctx.N, "iv": r.diameter >= ctx.delta0}
        for r in stats.results
    ]
    cons = branch_consistency(ctx)
    ok = all(all(p.values()) for p in props) and all(c["ok"] for c in cons)
    gamma_ok = bool(np.isfinite(stats.gamma) and stats.gamma >= 1.0 / ctx.N)
    body = {
        "context": ctx.to_json(),
        "distortion": stats.to_json(),
        "gamma_at_least_1_over_N": gamma_ok,
        "results": [
            {
                "p": point(r.p),
                "r": r.r,
                "n": r.n,
                "q": point(r.q),
                "target_radius": r.radius,
                "postcritical_case": r.postcritical_case,
                "k": r.k,
                "diameter": r.diameter,
                **pr,
            }
            for r, pr in zip(stats.results, props)
        ],
        "branch_consistency": [dict(c, radii=list(c["radii"]), n=list(c["n"])) for c in cons],
        "all_properties_hold": ok,
    }
    return {"command": "elevator", "config": cfg.record(), "elevator": body}, EXIT_OK if ok and gamma_ok else EXIT_VERDICT


def _superattracting_fixed(cfg: RunConfig, f: RationalMap) -> list[complex]:
    from .orbits import postcritical_report

    rep = postcritical_report(f, tol=cfg.cycle_tol)
    return [c.points[0] for c in rep.cycles if c.period == 1 and c.kind == "superattracting"]


def do_boettcher(cfg: RunConfig, f: RationalMap) -> tuple[dict, int]:
    from .boettcher import basin_samples, boettcher_chart, component_records

    grid = _raster(cfg, f)
    recs = component_records(f, grid)
    charts = []
    worst = 0.0
    for p in _superattracting_fixed(cfg, f):
        comp = next((r.id for r in recs if r.level == 0 and (is_inf(p) and is_inf(r.basepoint) or abs(r.basepoint - p) < 1e-8)), None)
        if comp is None:
            continue
        n = min(cfg.samples, 200)
        z = basin_samples(grid, comp, n, cfg.seed)
        ch = boettcher_chart(f, p, z)
        worst = max(worst, ch.max_residual)
        charts.append(
            {
                "fixed_point": point(p),
                "local_degree": ch.k,
                "derivative": point(ch.lam),
                "component": comp,
                "max_residual": ch.max_residual,
                "flagged_rows": int(ch.flagged.sum()),
                "table": [[point(a), point(b)] for a, b in zip(ch.z, ch.psi)],
                "confidence": ch.confidence.tolist(),
            }
        )
    body = {"charts": charts, "components": recs.to_json()}
    return {"command": "boettcher", "config": cfg.record(), "boettcher": body}, EXIT_OK if charts else EXIT_VERDICT


def symmetry_group(cfg: RunConfig, f: RationalMap, grid: RasterGrid | None = None):
    from .boettcher import component_records
    from .rigidity import basepoint_landmarks, candidate_symmetries, group_closure, verify_invariance

    grid = grid or _raster(cfg, f)
    curves = trace_all(grid)
    try:
        landmarks = basepoint_landmarks(component_records(f, grid), curves, cfg.landmarks)
    except CarpetDynError:
        landmarks = None
    if landmarks is not None and len(landmarks) < 3:
        landmarks = None
    cands = candidate_symmetries(curves, cfg.landmarks, landmarks=landmarks)
    accepted = [m for m in cands if verify_invariance(m, grid, cfg.tol_px).accepted]
    group = group_closure(accepted or [MoebiusMap.identity()], grid, budget=cfg.budget, tol_pixels=cfg.tol_px)
    return group, len(cands), grid


def do_symmetries(cfg: RunConfig, f: RationalMap) -> tuple[dict, int]:
    group, ncand, _ = symmetry_group(cfg, f)
    body = group.to_json()
    body["candidates"] = ncand
    return {"command": "symmetries", "config": cfg.record(), "group": body}, EXIT_OK if group.closed else EXIT_VERDICT


def do_verify_eq(cfg: RunConfig, f: RationalMap, g: RationalMap, xi: MoebiusMap) -> tuple[dict, int]:
    from .rigidity import functional_equation_search, reduced_form

    grid_g = _raster(cfg, g)
    grid_f = grid_g if f is g else _raster(cfg, f)
    pts = grid_f.julia_points
    rng = np.random.default_rng(cfg.seed)
    z = pts[np.sort(rng.choice(pts.size, size=min(1000, pts.size), replace=False))]
    rels = functional_equation_search(f, g, xi, z, cfg.max_exp, tol_pixels=cfg.tol_px, g_cloud=grid_g)
    body = {
        "xi": xi.to_json(),
        "samples": int(z.size),
        "relations": [r.to_json() for r in rels],
        "reduced_l": reduced_form(rels),
    }
    return {"command": "verify-eq", "config": cfg.record(), "functional_equation": body}, EXIT_OK if rels else EXIT_VERDICT


def do_report(cfg: RunConfig, f: RationalMap) -> tuple[dict, int]:
    out_dir = Path(cfg.out_dir or "report")
    out_dir.mkdir(parents=True, exist_ok=True)
    sections: dict = {"command": "report", "config": cfg.record()}
    code = EXIT_OK
    orb, c = do_orbits(cfg, f)
    sections["orbits"] = orb["report"]
    code = max(code, c)
    grid = _raster(cfg, f)
    write_ppm(out_dir / "render.ppm", grid_image(grid))
    if cfg.png:
        write_png(out_dir / "render.png", grid_image(grid))
    geo, c = do_geometry(cfg, f)
    sections["geometry"] = geo["geometry"]
    code = max(code, c)
    for name, fn in (("elevator", do_elevator), ("boettcher", do_boettcher)):
        try:
            body, c = fn(cfg, f)
            sections[name] = body[name]
        except CarpetDynError as exc:
            sections[name] = {"error": type(exc).__name__, "message": str(exc)}
            c = EXIT_VERDICT
        code = max(code, c)
    group, ncand, _ = symmetry_group(cfg, f, grid)
    sections["symmetries"] = dict(group.to_json(), candidates=ncand)
    if not group.closed:
        code = max(code, EXIT_VERDICT)
    eqs = []
    if group.closed:
        for e in group.elements[1:]:
            body, _ = do_verify_eq(cfg, f, f, e)
            eqs.append(body["functional_equation"])
    sections["functional_equations"] = eqs
    write_json(out_dir / "report.json", sections)
    return {"command": "report", "out_dir": str(out_dir), "exit": code}, code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = make_config(args)
        if args.command == "verify-eq":
            f = load_map(args.f_map)
            g = load_map(args.g_map)
            result, code = do_verify_eq(cfg, f, g, parse_xi(args.xi))
        else:
            f = load_map(cfg.map)
            handler = {
                "orbits": do_orbits,
                "geometry": do_geometry,
                "elevator": do_elevator,
                "boettcher": do_boettcher,
                "symmetries": do_symmetries,
                "report": do_report,
            }.get(args.command)
            if args.command == "render":
                result, code = do_render(cfg, f, args.components)
            else:
                result, code = handler(cfg, f)
    except (DegreeError, NotSubhyperbolicError) as exc:
        _emit_error(args, exc)
        return EXIT_VERDICT
    except (CarpetDynError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        _emit_error(args, exc)
        return EXIT_ERROR
    if args.command == "render":
        print(json.dumps(result, sort_keys=True))
    elif args.command == "report":
        print(json.dumps(result, sort_keys=True))
    else:
        out = getattr(args, "out", None)
        try:
            if out:
                write_json(out, result)
            else:
                sys.stdout.write(dumps(result))
        except OSError as exc:
            _emit_error(args, exc)
            return EXIT_ERROR
    return code


def _emit_error(args, exc: Exception) -> None:
    err = {"error": type(exc).__name__, "message": str(exc), "command": getattr(args, "command", None)}
    print(json.dumps(err), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())

