"""Field-road diffusion: a 2D field coupled to a 1D road network.

P1 finite elements for the coupled operator, its smallest eigenpairs,
explicit coercivity and eigenvalue bounds, time stepping, and a search for
roads that speed up or slow down the decay relative to the road-free field.
"""

__version__ = "0.1.0"

from .analysis import (
    ConstantsReport,
    EfficiencyReport,
    alpha_root,
    classify,
    coercivity_constant,
    constants_report,
    efficiency_report,
    elementary_inequality_check,
    lambda1_lower_bound,
    poincare_constant,
    trace_constant,
    trinomial,
)
from .assembly import CouplingParams, FemSystem, build_system
from .config import RunConfig, parse_config, read_config, serialize_config
from .errors import (
    AssemblyError,
    ConfigurationError,
    ConvergenceError,
    DomainError,
    GeometryError,
    NumericalError,
    RoadFieldError,
    SearchError,
)
from .evolution import State, decay_rate_fit, implicit_euler, project_initial, spectral_propagate
from .meshing import DomainGeometry, Mesh, mesh_quality, refine, triangulate
from .network import (
    NetworkFunction,
    RoadNetwork,
    ahlfors_upper_constant,
    geodesic_distance,
    holder_embedding_check,
    linfty_bound_check,
    lower_ahlfors_check,
    total_length,
    validate_network,
)
from .optimize import (
    GammaCache,
    RoadFamilySpec,
    SearchResult,
    enumerate_candidates,
    evaluate_candidate,
    local_search,
    rank,
    search,
)
from .spectral import Spectrum, dense_reference_eigen, dirichlet_gamma, generalized_eigenpairs, smallest_eigenpairs

__all__ = sorted(n for n, v in globals().items() if not n.startswith("_") and not isinstance(v, type(__import__("sys"))))
