"""Binary attribute representations of sparse ratings matrices.

Viewers get compact bit vectors, movies get real weight vectors, and a
rating is explained as movie mean + viewer mean + bits . weights.  Bits are
trained on a high-error movie subset by a divide-and-concur projection
iteration; weights for the remaining movies follow from per-movie least
squares.
"""

from .datasets import (
    DataFormatError,
    RatingsDataset,
    load_csv,
    load_netflix,
    write_csv,
)
from .centering import (
    BaselineRanking,
    CenteredRatings,
    TrainingView,
    center,
    full_view,
    rank_baseline,
    restrict,
    select_subset,
)
from .synth import SyntheticSpec, synthesize
from .projection import ProjectionError, project_band_batch, project_edge
from .solver import (
    DENSE,
    SPARSE,
    IterationStats,
    ReplicaState,
    SolveResult,
    SolverConfig,
    concurred_weights,
    initialize,
    project_A,
    project_B,
    round_bits,
    rrr_step,
    solve,
    state_rmse,
    write_stats_csv,
)
from .model import (
    BarModel,
    EvalReport,
    assemble,
    config_hash,
    evaluate,
    export_bits_csv,
    export_weights_csv,
    fit_weights,
    predict,
)
from .interpret import (
    AttributeReport,
    attribute_report,
    bit_prevalence,
    histogram,
    match_attributes,
    rank_attribute,
)
from .serialize import (
    build_cache,
    load_cache,
    load_dataset,
    load_model,
    load_solve_result,
    model_kind,
    save_cache,
    save_dataset,
    save_model,
    save_solve_result,
)

__version__ = "0.1.0"
