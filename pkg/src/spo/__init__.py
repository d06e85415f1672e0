"""Spectral optimisation of compactly supported Schroedinger potentials."""

from .costs import (
    CostSpecG,
    CostSpecH,
    HypothesisReport,
    check_hypotheses,
    eval_cost_g,
    eval_cost_h,
    gap_cost,
    indicator_cost,
    jth_cost,
    power_cost,
)
from .grid import (
    DiscreteHamiltonian,
    GridDomain,
    PotentialField,
    SupportRegion,
    build_domain,
    build_hamiltonian,
    lp_norm_p,
    project_box,
    project_support,
    retract_lp_ball,
)
from .inequalities import ConstantsRegistry, RatioReport, clr_ratio, keller_ratio, lt_ratio, negative_part_norm
from .optimize import (
    AdmissibleSet,
    Objective,
    OptimizerConfig,
    RunRecord,
    anneal_bang_bang,
    brute_force,
    cost_gradient,
    eigen_gradient,
    projected_descent,
    weak_convergence_probe,
)
from .spectrum import (
    EigenvalueMeasure,
    NegativeSpectrum,
    PhiSequence,
    cluster_multiplicities,
    count_below,
    negative_eigenpairs,
    phi_map,
)

__version__ = "0.1.0"
