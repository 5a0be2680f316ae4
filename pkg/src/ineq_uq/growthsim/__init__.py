from .envelope import (
    DEFAULT_DELTA_MU,
    PUF_1973,
    SCF_1973,
    CalibrationInput,
    Envelope,
    Experiment,
    calibrate_shock,
    draw_etas,
    load_calibration,
    mc_envelope,
    run_path,
)
from .kfe import (
    DensityState,
    Grid,
    Transition,
    simulate_transition,
    steady_state,
    tail_slope,
    top_share_from_density,
)
from .params import (
    KFE_CONSISTENT,
    PAPER_LITERAL,
    GrowthModelParams,
    eta_from_shares,
    muH_from_eta,
    xi_from_muH,
)
