"""Model parameters for the dissipative modified kicked rotator.

The kick potential is V(q) = k [cos q + (a/2) cos(2q + phi)] applied once
per period tau, and friction contracts momentum by gamma = exp(-2 nu) per
period.  tau doubles as the effective Planck constant of the quantized
model, so the derived quantities are

    nu = -ln(gamma) / 2      friction rate
    g  = sqrt(2 nu)          dissipative coupling
    K  = k * tau             rescaled kick strength
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError

DEFAULT_A = 0.5
DEFAULT_PHI = math.pi / 2

HBAR_PRESETS = (0.412, 0.137, 0.046)


@dataclass(frozen=True)
class ModelParams:
    """All map and friction constants; gamma in [0, 1], tau > 0."""

    k: float
    gamma: float
    tau: float
    a: float = DEFAULT_A
    phi: float = DEFAULT_PHI
    diffusion_D: float = 0.0  # thermal diffusion constant, unused by default

    def __post_init__(self):
        for name in ("k", "gamma", "tau", "a", "phi", "diffusion_D"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(f"parameter {name} must be a finite number")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.tau <= 0.0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.diffusion_D < 0.0:
            raise ConfigError("diffusion_D must be nonnegative")

    @property
    def nu(self) -> float:
        """Friction rate; +inf at gamma = 0 (maximum friction)."""
        if self.gamma == 0.0:
            return math.inf
        return -0.5 * math.log(self.gamma)

    @property
    def g(self) -> float:
        """Dissipative coupling, g^2 = 2 nu."""
        return math.sqrt(2.0 * self.nu)

    @property
    def K(self) -> float:
        """Derived product K = k tau."""
        return self.k * self.tau

    @property
    def bare_kick(self) -> float:
        """Kick amplitude at the level of the unrescaled momentum, k / tau.

        k itself is calibrated in the rescaled momentum p = tau n, so the
        classical dynamics depends on (k, gamma) only; the quantum kick
        unitary carries k / hbar_eff.
        """
        return self.k / self.tau

    @property
    def hbar_eff(self) -> float:
        """Effective Planck constant, identical to the kick period."""
        return self.tau
