"""dsmx: min-max noise transfer function design for delta-sigma modulators."""

from .lti import (
    FirFilter,
    StateSpace,
    FrequencyGrid,
    freq_response,
    l1_norm,
    companion_realization,
    impulse_response,
    fir_multiply,
    fir_power,
    ntf_of,
    cascade_error_filter,
    max_magnitude_on_band,
    band_max,
    hinf_norm,
)
from .lmi import AffineMatrixExpr, LmiProblem, StandardSdp, VarRef, dump_standard_sdp
from .sdp import (
    INFEASIBLE,
    ITERATION_LIMIT,
    NUMERICAL_TROUBLE,
    OPTIMAL,
    SdpSolution,
    SolverOptions,
    solve,
)
from .design import (
    BandSpec,
    DesignResult,
    DesignSpec,
    ZeroAssignment,
    design,
    load_design,
    save_design,
)
from .stability import (
    QuantizerSpec,
    StabilityReport,
    beta_envelope,
    build_report,
    impulse_l1,
    input_bound,
    lee_check,
    sufficient_condition,
)
from .sim import (
    SimTrace,
    UniformQuantizer,
    read_trace_csv,
    simulate,
    simulate_cascade,
    simulate_cascade_linear,
    write_trace_csv,
)
from .metrics import (
    SnrSweep,
    Spectrum,
    n_average,
    n_worst,
    snr_pp,
    snr_power,
    snr_sweep,
    spectrum,
    worst_error,
    worst_snr,
)

__version__ = "0.1.0"
