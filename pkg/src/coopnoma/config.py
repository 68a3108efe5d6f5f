"""Network and protocol parameters shared by the analytic, simulation and OMA paths."""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass


class InterferenceMode(str, enum.Enum):
    CORRELATED = "correlated"
    INDEPENDENT = "independent"  # field and fading redrawn every round, per user
    NONE = "none"


class PhiMode(str, enum.Enum):
    EXACT = "exact"
    APPROX = "approx"


# The default path-loss exponent is a calibration choice, see README.
DEFAULT_ALPHA = 3.0
MAX_ROUNDS = 8


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


def path_loss(d, alpha):
    return d ** (-alpha)


@dataclass(frozen=True)
class NetworkConfig:
    """Physical and protocol parameters of the two-user NOMA link.

    Only the transmit SNR ``p_over_sigma2`` enters the model; P and sigma^2
    are never needed separately.
    """

    lam: float = 5e-5
    alpha: float = DEFAULT_ALPHA
    p_over_sigma2: float = 1e3
    d1: float = 5.0
    d2: float = 10.0
    d_inter: float = 10.0
    beta2: float = 0.3
    r1: float = 2.0
    r2: float = 0.5
    k_max: int = 4
    cooperative: bool = True
    interference_mode: InterferenceMode = InterferenceMode.CORRELATED

    def __post_init__(self):
        object.__setattr__(self, "interference_mode", InterferenceMode(self.interference_mode))
        if not self.alpha > 2:
            raise ValueError(f"alpha must exceed 2, got {self.alpha}")
        if not 0 < self.d1 < self.d2:
            raise ValueError(f"need 0 < d1 < d2, got d1={self.d1}, d2={self.d2}")
        if not self.d_inter >= 0:
            raise ValueError("d_inter must be non-negative")
        if not self.lam >= 0:
            raise ValueError("lam must be non-negative")
        if not self.p_over_sigma2 > 0:
            raise ValueError("p_over_sigma2 must be positive")
        if int(self.k_max) != self.k_max or not 1 <= self.k_max <= MAX_ROUNDS:
            raise ValueError(f"k_max must be an integer in [1, {MAX_ROUNDS}], got {self.k_max}")
        object.__setattr__(self, "k_max", int(self.k_max))
        if self.r1 < 0 or self.r2 < 0:
            raise ValueError("rates must be non-negative")
        self._check_beta2()

    def _check_beta2(self):
        if not 0 <= self.beta2 <= 1:
            raise ValueError(f"beta2 must lie in [0, 1], got {self.beta2}")

    @property
    def noise(self) -> float:
        """sigma^2 / P."""
        return 1.0 / self.p_over_sigma2

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.p_over_sigma2)

    @property
    def noma_feasible(self) -> bool:
        """Whether user 1 can strip s2 at all, i.e. 1 - 2^R2 beta^2 > 0."""
        return self.r2 == 0 or 1.0 - 2.0 ** self.r2 * self.beta2 > 0

    def replace(self, **changes) -> "NetworkConfig":
        if "snr_db" in changes:
            changes["p_over_sigma2"] = db_to_linear(changes.pop("snr_db"))
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["interference_mode"] = self.interference_mode.value
        return d


@dataclass(frozen=True)
class OmaConfig(NetworkConfig):
    """Same fields; ``beta2`` is the orthogonal resource share of user 1.

    A share of exactly 0 or 1 is allowed only when the starved user's rate is 0.
    """

    def _check_beta2(self):
        if not 0 <= self.beta2 <= 1:
            raise ValueError(f"beta2 must lie in [0, 1], got {self.beta2}")
        if self.beta2 == 0 and self.r1 > 0:
            raise ValueError("beta2 = 0 starves user 1; requires r1 = 0")
        if self.beta2 == 1 and self.r2 > 0:
            raise ValueError("beta2 = 1 starves user 2; requires r2 = 0")

    @property
    def noma_feasible(self) -> bool:
        return True
