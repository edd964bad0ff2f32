"""Bivariate penalized splines over triangulations and simultaneous confidence corridors for mean images."""

__version__ = "0.1.0"

from .basis import SplineBasisSystem, build_system, eval_basis, eval_basis_deriv  # noqa: E402
from .errors import ConfigError, InputError, NumericError, SccError  # noqa: E402
from .estimator import ImageStack, MeanFitResult, fit_mean, gcv_select  # noqa: E402
from .fpca import CovarianceModel, fpca  # noqa: E402
from .geometry import PixelGrid, TriangulationMesh, lattice_grid, load_mesh, square_mesh  # noqa: E402
from .pipeline import FitConfig, analyze, systems_for  # noqa: E402
from .scc import SccBand, TwoSampleContext, build_scc_one, build_scc_two, exceedance_map  # noqa: E402
from .simulation import SimDesign, generate_stack, named_design  # noqa: E402

__all__ = [
    "__version__",
    "SplineBasisSystem", "build_system", "eval_basis", "eval_basis_deriv",
    "ConfigError", "InputError", "NumericError", "SccError",
    "ImageStack", "MeanFitResult", "fit_mean", "gcv_select",
    "CovarianceModel", "fpca",
    "PixelGrid", "TriangulationMesh", "lattice_grid", "load_mesh", "square_mesh",
    "FitConfig", "analyze", "systems_for",
    "SccBand", "TwoSampleContext", "build_scc_one", "build_scc_two", "exceedance_map",
    "SimDesign", "generate_stack", "named_design",
]
