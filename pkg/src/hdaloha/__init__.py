"""Two-node half-duplex slotted ALOHA with mutually exclusive arrivals.

Closed-form stationary distribution, stability region and delay
(:mod:`hdaloha.analytic`), an executable check of the product form against
the slot kernel (:mod:`hdaloha.chain`), and a seeded slot simulator
(:mod:`hdaloha.sim`).
"""
__version__ = "0.1.0"

from .core import (  # noqa: E402
    MovementVector,
    NetworkParams,
    NetworkState,
    ParameterError,
    PreconditionError,
    apply_movement,
    movement,
    movement_class,
    movement_set,
    validate_params,
)
from .analytic import (  # noqa: E402
    InstabilityError,
    average_delay,
    fd_region_area,
    hd_boundary_lambda2,
    hd_region_area,
    is_stable,
    joint_pmf,
    marginal_pmf,
    utilization,
)
