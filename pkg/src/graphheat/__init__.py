"""Laplacian spectra on compact metric graphs and bilinear heat-equation control."""

from .control_op import ControlOperator, Profile, coupling, coupling_matrix, couplings, verify_spreading
from .errors import GraphHeatError, NumericalError, ValidationError
from .metric_graph import (
    GraphFunction,
    MetricGraph,
    build_graph,
    inner_product,
    interval_graph,
    load_graph,
    star_graph,
    tadpole_graph,
)
from .moment import (
    ControlSignal,
    MomentProblem,
    control_cost,
    finite_biorthogonal,
    fit_cost_blowup,
    solve_moment,
)
from .simulate import evolve_bilinear, evolve_linearized, free_evolution
from .spectral import compute_spectrum, discretize_oracle, gap_report
from .steer import SteeringSetup, semiglobal_steer, steer_to_eigensolution, wait_time

__version__ = "0.1.0"
