"""Link channels for the AP -> RIS -> user downlink and the combined SNR.

Channels follow a Rician model scaled by the free-space amplitude gain.
RIS-side LoS parts are uniform-planar-array steering vectors; the AP-user
link is blocked and therefore pure NLoS.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LINK_TAGS = ("A-U", "A-R", "R-U")
K_FACTOR_CAP = 1e9


@dataclass(frozen=True)
class LinkGeometry:
    distance: float
    elevation: float = 0.0
    azimuth: float = 0.0
    tag: str = "A-R"

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError(f"link distance must be positive, got {self.distance}")
        if not -np.pi / 2 - 1e-12 <= self.elevation <= np.pi / 2 + 1e-12:
            raise ValueError(f"elevation {self.elevation} outside [-pi/2, pi/2]")
        if not -np.pi < self.azimuth <= np.pi:
            raise ValueError(f"azimuth {self.azimuth} outside (-pi, pi]")
        if self.tag not in LINK_TAGS:
            raise ValueError(f"unknown link tag {self.tag!r}")


@dataclass(frozen=True)
class ArraySpec:
    """Uniform planar array; elements are indexed z-major (k * n_y + m)."""

    n_y: int = 30
    n_z: int = 25
    d_y: float = 0.45 * 5e-3
    d_z: float = 0.45 * 5e-3
    wavelength: float = 5e-3

    def __post_init__(self):
        if self.n_y < 1 or self.n_z < 1:
            raise ValueError("array needs at least one element per direction")
        if not (self.d_y > 0 and self.d_z > 0 and self.wavelength > 0):
            raise ValueError("spacings and wavelength must be positive")

    @property
    def n(self) -> int:
        return self.n_y * self.n_z

    @property
    def wavenumber(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def eta(self) -> float:
        """RIS aperture gain factor sqrt(4 pi d_y d_z) / lambda."""
        return float(np.sqrt(4 * np.pi * self.d_y * self.d_z) / self.wavelength)


@dataclass(frozen=True)
class LinkChannel:
    h: np.ndarray
    gain: float
    k_factor: float
    nlos: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError("large-scale gain must be positive")
        if not np.all(np.isfinite(self.h)):
            raise ValueError("channel has non-finite entries")
        self.h.setflags(write=False)


def path_gain(d, wavelength):
    """Free-space amplitude gain lambda / (4 pi d)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0) or wavelength <= 0:
        raise ValueError("distance and wavelength must be positive")
    g = wavelength / (4 * np.pi * d)
    return float(g) if g.ndim == 0 else g


def steering_vector(spec: ArraySpec, theta: float, phi: float) -> np.ndarray:
    kappa = spec.wavenumber
    a_z = np.exp(1j * kappa * spec.d_z * np.arange(spec.n_z) * np.sin(theta))
    a_y = np.exp(1j * kappa * spec.d_y * np.arange(spec.n_y) * np.sin(phi) * np.cos(theta))
    return np.kron(a_z, a_y)


def sample_nlos(length: int, variance: float, rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. CN(0, variance) entries."""
    if variance < 0:
        raise ValueError(f"NLoS variance must be non-negative, got {variance}")
    scale = np.sqrt(variance / 2)
    z = rng.standard_normal((2, length))
    return scale * (z[0] + 1j * z[1])


def build_channel(
    geom: LinkGeometry,
    spec: ArraySpec,
    k_factor: float,
    nlos_variance: float,
    rng: np.random.Generator,
    prev_nlos: np.ndarray | None = None,
    correlation: float = 0.0,
) -> LinkChannel:
    """Rician channel for one link and one slot.

    With ``correlation`` > 0 and a previous NLoS draw, the diffuse part evolves
    as a first-order Gauss-Markov process instead of being redrawn.
    """
    if k_factor < 0:
        raise ValueError(f"K-factor must be non-negative, got {k_factor}")
    if not 0.0 <= correlation < 1.0:
        raise ValueError("correlation must lie in [0, 1)")
    k = min(float(k_factor), K_FACTOR_CAP)
    g = path_gain(geom.distance, spec.wavelength)

    if geom.tag == "A-U":
        length, k = 1, 0.0
        los = np.zeros(1, dtype=complex)
    else:
        length = spec.n
        los = steering_vector(spec, geom.elevation, geom.azimuth)

    fresh = sample_nlos(length, nlos_variance, rng)
    if prev_nlos is not None and correlation > 0:
        nlos = correlation * prev_nlos + np.sqrt(1 - correlation**2) * fresh
    else:
        nlos = fresh

    h = g * (np.sqrt(k / (k + 1)) * los + np.sqrt(1 / (k + 1)) * nlos)
    return LinkChannel(h=h, gain=g, k_factor=k, nlos=nlos)


def effective_channel(h_ar, h_ru, phases, spec: ArraySpec) -> complex:
    """eta * sum_n h_RU[n] exp(j w_n) h_AR[n]."""
    h_ar = getattr(h_ar, "h", h_ar)
    h_ru = getattr(h_ru, "h", h_ru)
    phases = np.asarray(phases, dtype=float)
    if not (len(h_ar) == len(h_ru) == len(phases)):
        raise ValueError(
            f"length mismatch: h_AR {len(h_ar)}, h_RU {len(h_ru)}, phases {len(phases)}"
        )
    return complex(spec.eta * np.sum(h_ru * np.exp(1j * phases) * h_ar))


def combined_gain(h_au, h_eff) -> float:
    h_au = complex(np.ravel(getattr(h_au, "h", h_au))[0])
    return float(abs(h_au + h_eff) ** 2)


def snr(h_au, h_eff, p_tx: float, noise: float) -> float:
    """Linear SNR P_t |h_AU + h_eff|^2 / sigma^2."""
    if p_tx <= 0 or noise <= 0:
        raise ValueError("transmit and noise power must be positive")
    return p_tx * combined_gain(h_au, h_eff) / noise


def coherent_bound(h_au, h_ar, h_ru, spec: ArraySpec) -> float:
    """Upper bound |h_AU| + eta sum |h_RU||h_AR| on the combined amplitude."""
    h_au = np.ravel(getattr(h_au, "h", h_au))[0]
    h_ar = getattr(h_ar, "h", h_ar)
    h_ru = getattr(h_ru, "h", h_ru)
    return float(abs(h_au) + spec.eta * np.sum(np.abs(h_ru) * np.abs(h_ar)))


def db(x):
    return 10 * np.log10(x)


def from_db(x):
    return 10 ** (np.asarray(x, dtype=float) / 10)


@dataclass(frozen=True)
class ChannelConfig:
    """Link-budget and fading parameters shared by all links."""

    p_tx_dbw: float = 30.0
    noise_dbw: float = -130.0
    bandwidth: float = 200e6
    k_au: float = 0.0
    k_ar: float = 20.0
    k_ru: float = 20.0
    nlos_variance: float = 1.0
    # the direct path is treated as fully blocked; None -> same as the RIS links
    nlos_variance_au: float | None = 0.0
    correlation: float = 0.0
    wavelength: float = 5e-3
    n_y: int = 30
    n_z: int = 25
    spacing_wl: float = 0.45

    @property
    def p_tx(self) -> float:
        return float(from_db(self.p_tx_dbw))

    @property
    def noise(self) -> float:
        return float(from_db(self.noise_dbw))

    @property
    def au_variance(self) -> float:
        return self.nlos_variance if self.nlos_variance_au is None else self.nlos_variance_au

    def array(self) -> ArraySpec:
        d = self.spacing_wl * self.wavelength
        return ArraySpec(n_y=self.n_y, n_z=self.n_z, d_y=d, d_z=d, wavelength=self.wavelength)
