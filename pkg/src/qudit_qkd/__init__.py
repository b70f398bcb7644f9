"""Simulator for 4-level polarization x time-bin single-photon QKD."""

__version__ = "0.1.0"

from .bases import (  # noqa: E402
    ALL_BASES,
    CHI1,
    CHI2,
    CHI3,
    CHI_BASES,
    PSI1,
    PSI2,
    PSI3,
    PSI4,
    PSI5,
    PSI_BASES,
    BasisId,
    Family,
    StateId,
    basis_states,
    completion_solver,
    verify_all_families,
    verify_orthonormal,
    verify_unbiased,
)
from .core import (  # noqa: E402
    DetectionEvent,
    Detector,
    Pol,
    PolTimeState,
    TimeGatedOp,
    DelayOp,
    apply_delay,
    apply_gated,
    inner_product,
    outcome_distribution,
    sample_outcome,
    state_from_amplitudes,
)
from .optics import (  # noqa: E402
    build_chain,
    convention_search,
    decode,
    paper_detection_map,
    run_chain,
    transmit,
    transmit_physical,
)
from .protocol import SessionConfig, SessionStats, run_session  # noqa: E402
