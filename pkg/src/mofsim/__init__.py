"""Mirror-oscillator-field simulation toolkit.

Closed-form scattering for mirrors built from an internal oscillator coupled
to a 1+1-D massless scalar field, cavity modes, radiation-pressure cooling
dynamics, a lattice time-domain solver and quantum Brownian motion exports.

Units: c = 1 throughout, so positions and lengths carry time units.
"""

from mofsim.core import (
    DriveParams,
    MiroscParams,
    MirrorConfig,
    ParameterError,
    NumericalError,
    ScatterResult,
    bc_gamma,
    plasma_frequency,
    rp_index,
)

__version__ = "0.1.0"

__all__ = [
    "DriveParams",
    "MiroscParams",
    "MirrorConfig",
    "ParameterError",
    "NumericalError",
    "ScatterResult",
    "bc_gamma",
    "plasma_frequency",
    "rp_index",
    "__version__",
]
