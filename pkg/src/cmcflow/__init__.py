"""Forced mean curvature flow toward constant mean curvature slices in multiply warped cosmologies."""

__version__ = "0.1.0"

from .spacetime import FiberSpec, MultiWarpedSpacetime, load_model  # noqa: E402
from .hypersurface import GraphSurface, PeriodicGrid  # noqa: E402
from .flow import FlowConfig, Verdict, flow_run  # noqa: E402

__all__ = [
    "__version__",
    "FiberSpec",
    "MultiWarpedSpacetime",
    "load_model",
    "GraphSurface",
    "PeriodicGrid",
    "FlowConfig",
    "Verdict",
    "flow_run",
]
