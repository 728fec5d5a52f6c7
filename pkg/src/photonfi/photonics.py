"""Functional microring device physics.

A microring resonator (MR) imprints a scalar in [0, 1] onto one WDM carrier
by modulating its transmission amplitude.  The model implemented here is:

    resonance            lambda = 2*pi*R*n_eff / m
    thermo-optic shift   d_lambda = Gamma_Si * (dn_Si/dT) * (lambda / n_g) * dT

Carriers sit on an evenly spaced wavelength comb.  Channel index 0 is placed
at the red (long-wavelength) end and indices ascend toward shorter
wavelengths, so a temperature rise (which always red-shifts the resonance)
moves a ring from slot k onto slot k-1, and off the comb entirely from
slot 0.  A ring re-locks onto whichever channel its shifted resonance is
nearest to, provided it is strictly within half a channel spacing; exact
half-spacing ties resolve to the lower index, and anything further is
"unsupported": the ring no longer imprints anywhere.

Heater-driven hotspots are modeled as a steady-state isotropic Gaussian
temperature kernel per heater, superposed linearly:

    dT(x) = sum_h  P_h * kappa * exp(-|x - pos_h|^2 / (2 * sigma_t^2))

with kappa in K/mW and sigma_t in um.  This is a deliberately simple stand-in
for a full thermal solver; it preserves the two properties the attack
analysis needs: locality around the compromised heater and spillover into
neighboring banks.

Units throughout: wavelengths in nm, chip coordinates in um, temperature
deltas in K, heater power in mW.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class MRPhysical:
    """Geometry and material parameters of a single microring.

    radius_um : ring radius in um
    resonance_order : azimuthal mode number m (>= 1)
    n_eff : effective index of the guided mode (> 1 for a guided Si mode)
    position_um : (x, y) chip coordinate of the ring
    """

    radius_um: float
    resonance_order: int
    n_eff: float
    position_um: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.radius_um <= 0:
            raise DomainError(f"ring radius must be positive, got {self.radius_um}")
        if self.resonance_order < 1:
            raise DomainError(
                f"resonance order must be a positive integer, got {self.resonance_order}"
            )
        if self.n_eff <= 1.0:
            raise DomainError(f"effective index must exceed 1, got {self.n_eff}")


@dataclass(frozen=True)
class ThermoOpticParams:
    """Thermo-optic response of a silicon ring.

    Defaults are standard values for an Si-core ring: confinement factor
    0.8, dn/dT = 1.86e-4 / K, group index 4.2.
    """

    gamma_si: float = 0.8
    dn_dT: float = 1.86e-4
    n_g: float = 4.2

    def __post_init__(self) -> None:
        for name in ("gamma_si", "dn_dT", "n_g"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be strictly positive")

    @property
    def shift_per_k_per_nm(self) -> float:
        """Resonance shift per kelvin, per nm of nominal wavelength."""
        return self.gamma_si * self.dn_dT / self.n_g


def resonant_wavelength(phys: MRPhysical) -> float:
    """Resonant wavelength of a ring in nm: 2*pi*R*n_eff / m."""
    # radius in um -> wavelength in nm (x1000)
    return 2.0 * np.pi * phys.radius_um * phys.n_eff / phys.resonance_order * 1e3


def thermal_shift(lambda_mr_nm: float, delta_t_k: float,
                  params: ThermoOpticParams = ThermoOpticParams()) -> float:
    """Thermo-optic resonance shift in nm for a temperature rise of delta_t_k.

    Strictly linear in both the nominal wavelength and the temperature delta.
    Cooling (negative delta) is not a supported attack and raises.
    """
    if delta_t_k < 0:
        raise DomainError(f"temperature delta must be >= 0, got {delta_t_k}")
    return params.shift_per_k_per_nm * lambda_mr_nm * delta_t_k


@dataclass(frozen=True)
class ChannelGrid:
    """Evenly spaced WDM carrier comb of a bank waveguide.

    ``base_wavelength_nm`` is the channel-0 carrier; channel j sits at
    ``base - j * spacing`` (see module docstring for why index ascends
    toward the blue end).
    """

    base_wavelength_nm: float = 1550.0
    spacing_nm: float = 0.8
    channel_count: int = 20

    def __post_init__(self) -> None:
        if self.spacing_nm <= 0:
            raise ConfigError(f"channel spacing must be positive, got {self.spacing_nm}")
        if self.channel_count < 1:
            raise ConfigError(f"channel count must be >= 1, got {self.channel_count}")
        if self.base_wavelength_nm <= 0:
            raise ConfigError("base wavelength must be positive")

    def wavelength(self, channel: int) -> float:
        """Carrier wavelength of a channel index."""
        if not 0 <= channel < self.channel_count:
            raise DomainError(f"channel {channel} outside grid of {self.channel_count}")
        return self.base_wavelength_nm - channel * self.spacing_nm

    def wavelengths(self) -> np.ndarray:
        return self.base_wavelength_nm - np.arange(self.channel_count) * self.spacing_nm


def snap_to_channel(effective_lambda_nm: float, grid: ChannelGrid) -> Optional[int]:
    """Channel index a shifted resonance locks onto, or None if unsupported.

    A wavelength locks onto channel j when it is strictly within half a
    spacing of the carrier; an exact half-spacing tie resolves to the lower
    index; otherwise the ring operates on an unsupported wavelength.
    """
    s = grid.spacing_nm
    x = (grid.base_wavelength_nm - effective_lambda_nm) / s
    # candidate below and above in index space; tie at .5 -> lower index
    j = int(np.ceil(x - 0.5))
    if not 0 <= j < grid.channel_count:
        return None
    if abs(effective_lambda_nm - grid.wavelength(j)) > s / 2:
        return None
    return j


def snap_channels(nominal: np.ndarray, delta_t_k: float, grid: ChannelGrid,
                  params: ThermoOpticParams) -> np.ndarray:
    """Vectorized snap for every nominal channel of a bank at uniform dT.

    Returns an int array of effective channel indices, -1 where the shifted
    resonance left the comb.  Rings whose shift stays strictly below half a
    spacing keep their nominal channel (the tuning circuit absorbs minor
    fluctuations), which the nearest-channel rule already guarantees.
    """
    lam = grid.base_wavelength_nm - nominal * grid.spacing_nm
    shifted = lam + params.shift_per_k_per_nm * lam * delta_t_k
    x = (grid.base_wavelength_nm - shifted) / grid.spacing_nm
    j = np.ceil(x - 0.5).astype(np.int64)
    dist = np.abs(shifted - (grid.base_wavelength_nm - j * grid.spacing_nm))
    ok = (j >= 0) & (j < grid.channel_count) & (dist <= grid.spacing_nm / 2)
    return np.where(ok, j, -1)


@dataclass(frozen=True)
class Heater:
    """A compromised heater: position on chip and dissipated power."""

    position_um: tuple[float, float]
    power_mw: float

    def __post_init__(self) -> None:
        if self.power_mw <= 0:
            raise DomainError(f"heater power must be positive, got {self.power_mw}")


@dataclass(frozen=True)
class ChipBounds:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def contains(self, position: tuple[float, float]) -> bool:
        x, y = position
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class ThermalKernel:
    """Gaussian steady-state spread of one mW of heater power."""

    kappa_k_per_mw: float = 0.5
    sigma_um: float = 100.0

    def __post_init__(self) -> None:
        if self.kappa_k_per_mw <= 0 or self.sigma_um <= 0:
            raise DomainError("thermal kernel parameters must be positive")


class TemperatureField:
    """Superposition of per-heater Gaussian kernels over the chip.

    ``at`` evaluates the continuous field exactly at arbitrary points;
    ``rasterize`` samples it on a uniform grid (for heatmap dumps).
    """

    def __init__(self, heaters: Sequence[Heater], bounds: ChipBounds,
                 kernel: ThermalKernel):
        self.heaters = tuple(heaters)
        self.bounds = bounds
        self.kernel = kernel
        for h in self.heaters:
            if not bounds.contains(h.position_um):
                raise ConfigError(f"heater at {h.position_um} outside chip bounds {bounds}")
        self._pos = np.array([h.position_um for h in self.heaters], dtype=np.float64)
        self._pow = np.array([h.power_mw for h in self.heaters], dtype=np.float64)

    def at(self, points: np.ndarray) -> np.ndarray:
        """Temperature delta (K) at an (N, 2) array of chip coordinates."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n = points.shape[0]
        if len(self.heaters) == 0:
            return np.zeros(n)
        k = self.kernel
        out = np.empty(n)
        # chunk the pairwise distance matrix to bound memory
        step = max(1, 4_000_000 // max(1, len(self.heaters)))
        for lo in range(0, n, step):
            p = points[lo:lo + step]
            d2 = ((p[:, None, :] - self._pos[None, :, :]) ** 2).sum(axis=2)
            contrib = self._pow[None, :] * k.kappa_k_per_mw * np.exp(-d2 / (2.0 * k.sigma_um ** 2))
            out[lo:lo + step] = contrib.sum(axis=1)
        return out

    def at_point(self, position: tuple[float, float]) -> float:
        return float(self.at(np.array([position]))[0])

    def rasterize(self, resolution_um: float) -> np.ndarray:
        """Sample the field on a uniform grid; row 0 at y_min."""
        if resolution_um <= 0:
            raise ConfigError("grid resolution must be positive")
        b = self.bounds
        xs = np.arange(b.x_min, b.x_max + resolution_um, resolution_um)
        ys = np.arange(b.y_min, b.y_max + resolution_um, resolution_um)
        gx, gy = np.meshgrid(xs, ys)
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        return self.at(pts).reshape(len(ys), len(xs))


def compute_temperature_field(heaters: Iterable[Heater], bounds: ChipBounds,
                              kernel: ThermalKernel) -> TemperatureField:
    """Build the additive temperature field for a set of compromised heaters."""
    return TemperatureField(list(heaters), bounds, kernel)


@dataclass(frozen=True)
class MRFaultState:
    """Fault/tune state of one ring.

    ``effective_channel`` is where the ring currently imprints: its nominal
    channel when healthy, a neighboring index after a thermal shift, or None
    when shifted onto an unsupported wavelength (it then contributes
    nowhere).  ``off_resonance`` marks an actuation fault: the ring stops
    imprinting and its through-port passes ``off_resonance_value`` on the
    nominal channel instead (1.0 models the full-amplitude pass of an
    all-pass ring knocked off resonance); ``effective_channel`` is ignored
    for such rings.
    """

    nominal_channel: int
    effective_channel: Optional[int] = None
    off_resonance: bool = False
    off_resonance_value: float = 1.0

    @classmethod
    def healthy(cls, channel: int) -> "MRFaultState":
        return cls(nominal_channel=channel, effective_channel=channel)


def mr_transmission(state: MRFaultState, imprint_value: float) -> float:
    """Multiplicand a ring applies on the channel it is resonant with.

    Healthy rings imprint their programmed value; actuation-faulted rings
    pass their configured off-resonance transmission regardless of the
    programmed value.  For thermally shifted rings the returned value rides
    on ``state.effective_channel`` (nowhere if that is None).
    """
    if not 0.0 <= imprint_value <= 1.0:
        raise DomainError(f"imprint value must lie in [0, 1], got {imprint_value}")
    if state.off_resonance:
        return state.off_resonance_value
    return imprint_value
