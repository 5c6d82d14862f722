"""Fair subset selection for tabular data.

Pick rows from real and/or synthetic data so that positive-label rates
agree across the groups of a protected attribute.
"""
from .dataset import (
    ColumnRoles,
    DatasetView,
    EncodedDataset,
    EncodeOptions,
    GroupStats,
    Schema,
    concat,
    encode_frame,
    group_stats,
    load_csv,
    write_csv,
)
from .errors import (
    DataError,
    DegenerateColumn,
    DegeneratePopulation,
    EmptyAfterCleaning,
    FairmaskError,
    IoFailure,
    LengthMismatch,
    MissingColumn,
    MissingGroupWarning,
    MissingSynthetic,
    NonBinaryLabel,
    PoolTooLarge,
    SchemaMismatch,
    SingleGroup,
    UndefinedRate,
)
from .heuristics import Selection, SolverConfig, SolverKind, SolverReport, solve
from .measures import (
    BUILTIN_MEASURES,
    Measure,
    available_measures,
    evaluate,
    evaluate_all,
    get_measure,
    positive_rates,
    register_measure,
    sdp_avg,
    sdp_max,
    sdp_sum,
)
from .objective import ObjectiveSpec, PoolMode, build_pool, fitness, fitness_batch, materialize
from .synth import CopulaModel, fit, generate, ks_statistics, sample

__version__ = "0.1.0"
