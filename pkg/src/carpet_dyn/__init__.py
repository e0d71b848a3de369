"""Dynamics and carpet geometry of rational maps on the Riemann sphere."""

__version__ = "0.1.0"

from .boettcher import boettcher_chart, component_records, rotation_solve
from .elevator import distortion_stats, elevate, normalize
from .geometry import geometry_report
from .orbits import postcritical_report
from .raster import Window, carpet_verdict, rasterize, trace_all
from .rigidity import candidate_symmetries, functional_equation_search, group_closure, verify_invariance
from .sphere import INF, MoebiusMap, RationalMap, chordal_distance, example_map, power_map

__all__ = [
    "INF",
    "MoebiusMap",
    "RationalMap",
    "Window",
    "boettcher_chart",
    "candidate_symmetries",
    "carpet_verdict",
    "chordal_distance",
    "component_records",
    "distortion_stats",
    "elevate",
    "example_map",
    "functional_equation_search",
    "geometry_report",
    "group_closure",
    "normalize",
    "postcritical_report",
    "power_map",
    "rasterize",
    "rotation_solve",
    "trace_all",
    "verify_invariance",
]
