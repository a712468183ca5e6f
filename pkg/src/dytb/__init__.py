"""Desk-scale toolkit for dyadic stopping times, adapted martingale
differences, randomly shifted grids and Carleson-type diagnostics on
discretized measures over a dyadic cube."""

from dytb.lattice import (
    AlignmentError,
    Cube,
    Grid,
    GoodnessRecord,
    build_grid,
    cube_distance,
    goodness_class,
    is_bad,
    skeleton_distance,
)
from dytb.measure import (
    AtomicMeasure,
    Canvas,
    DominatingFunction,
    doubling_constant,
    lambda_model,
    maximal_function,
    symmetrize,
    verify_upper_doubling,
)
from dytb.operator import (
    KernelModel,
    OperatorMatrix,
    assemble,
    kernel_model,
    testing_constants,
    verify_standard_kernel,
)
from dytb.accretive import (
    AccretiveSystem,
    counterexample_system,
    random_bounded_system,
    t1_system,
    validate,
)
from dytb.stopping import (
    CarlesonReport,
    StoppingForest,
    build_l2,
    build_linf,
    carleson_constant,
    embedding_ratio,
    packing_ratio,
    usfe_value,
)
from dytb.martingale import (
    AccretivityError,
    MartingaleCoefficients,
    counterexample_dual_growth,
    decompose,
    delta,
    delta_adjoint,
    gcar_sequence,
    phi_split,
    restricted_dual_ratio,
    shu_split,
    square_function_ratio,
)
from dytb.pairing import (
    PairingLedger,
    SchurMatrix,
    ar_br_sequences,
    badness_probability_mc,
    boundary_mass_mc,
    exact_badness_probability,
    exact_boundary_probability,
    long_range_ratio,
    paraproduct_collapse,
    schur_matrix,
    schur_norm,
    split_pairing,
)

__version__ = "0.1.0"
