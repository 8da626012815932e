"""Event-driven simulation and Lyapunov certificates for PID control under Coulomb friction."""

from .certificates import (
    CertificateReport,
    IssEnvelope,
    PMatrix,
    StabilityConstants,
    VhatGains,
    audit_decrease,
    audit_stability,
    iss_envelope,
    lyap_V,
    lyap_Vhat,
    lyap_Vk,
    pick_vhat_gains,
    region_R,
    stability_constants,
    vhat_directional_check,
)
from .config import ExperimentConfig, load_config
from .model import (
    CASE_A,
    CASE_B,
    PRESETS,
    Interval,
    Params,
    StateX,
    StateZ,
    classical_accel,
    deadzone,
    dist_to_attractor_x,
    dist_to_attractor_z,
    pid_accel,
    sgn_inflated,
    sgn_set,
    to_x,
    to_z,
    validate_params,
)
from .modes import (
    AffineFlow,
    Mode,
    affine_flow,
    classify_mode,
    slip_exit_time,
    stick_exit_time,
)
from .simulator import (
    SimOptions,
    StribeckSelection,
    Trajectory,
    detect_phases,
    simulate,
    simulate_perturbed,
    simulate_regularized,
    trajectory_diff,
)

__version__ = "0.1.0"
