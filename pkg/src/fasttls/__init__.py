"""Fast total least squares via sketching."""
from .data import (
    Instance,
    gen_gaussian_family,
    gen_identity_family,
    gen_small_gaussian,
    gen_toy,
    gen_toy_appendix,
    load_csv,
    read_instance,
    write_instance,
)
from .errors import (
    BoostingError,
    CorruptedStateError,
    DegenerateInputError,
    DimensionError,
    FactorizationError,
    FastTLSError,
    IngestionError,
    IrreparableRankError,
)
from .ftls import (
    FactoredLowRank,
    FtlsConfig,
    FtlsResult,
    SplitResult,
    estimate_cost,
    evaluate,
    ftls_boosted,
    ftls_solve,
    split,
)
from .rank_constrained import rank_constrained_solve, regularized_rank_solve, ridge_solve
from .rftls import RftlsConfig, RftlsResult, rftls_solve
from .tls_exact import LsSolution, TlsSolution, ls_solve, tls_cost, tls_solve

__version__ = "0.1.0"
