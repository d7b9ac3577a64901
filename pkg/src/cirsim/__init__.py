"""Classical and quantum quasi-1D scattering under 2D harmonic confinement."""

from cirsim.model import (
    PotentialKind,
    PotentialSpec,
    ScatterParams,
    UnitSystem,
    hamiltonian_rel,
    potential_value,
    transverse_energy,
)

__version__ = "0.1.0"

__all__ = [
    "PotentialKind",
    "PotentialSpec",
    "ScatterParams",
    "UnitSystem",
    "hamiltonian_rel",
    "potential_value",
    "transverse_energy",
    "__version__",
]
