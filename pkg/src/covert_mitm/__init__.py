"""Covert man-in-the-middle attacks on a water-treatment control loop, and
the PASAD / CUSUM detectors that try to catch them."""

__version__ = "0.1.0"

from .lti import ContinuousTransferFunction, DiscreteLinearSystem, discretize_zoh  # noqa: E402
from .plant import PidParams, SmithController, make_plant, make_pid, make_internal_model  # noqa: E402
from .attacker import AttackerConfig, CovertAgent, identified_model  # noqa: E402
from .detectors import PasadModel, CusumModel, pasad_train, cusum_init, detect  # noqa: E402
from .experiments import (  # noqa: E402
    SimulationConfig,
    DetectorParams,
    calibrate_detectors,
    evaluate,
    run_closed_loop,
    run_single,
    run_grid,
    alpha_grid,
    noise_grid,
)
