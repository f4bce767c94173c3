"""Per-link channel realizations and per-beam SNR.

SNR composition per beam: transmit power + array gain + receive gain
- free-space path loss + correlated shadowing - receiver noise power.
Small-scale fading is an elevation-dependent Rician mixture living in the
transmit array domain (so different beams see different fading); shadowing is
an AR(1) chain in dB along each (UE, satellite) visibility track.

Randomness is addressable: every (link-track, step) owns one substream, and
the draw order inside it is fixed (2*n_elem normals for the diffuse vector,
then one normal for the shadowing innovation), which makes exact replay of
any stored sample possible without rerunning the full simulation loop.
"""

import math
from dataclasses import dataclass

import numpy as np

from .codebook import array_gains_db, steering_vector
from .errors import ConfigError
from .seeding import substream

SPEED_OF_LIGHT = 299792458.0
THERMAL_NOISE_DBM_PER_HZ = -174.0


@dataclass
class ChannelParams:
    carrier_freq_hz: float = 2e9
    bandwidth_hz: float = 20e6
    tx_power_dbm: float = 40.0
    rx_gain_dbi: float = 5.0
    noise_figure_db: float = 7.0
    k_at_min_db: float = 0.0        # Rician K at theta_min
    k_at_zenith_db: float = 25.0
    sigma_at_min_db: float = 4.0    # shadowing std at theta_min
    sigma_at_zenith_db: float = 1.0
    decorrelation_time_s: float = 30.0

    def __post_init__(self):
        bad = []
        if self.bandwidth_hz <= 0:
            bad.append("bandwidth_hz must be positive")
        if self.k_at_zenith_db < self.k_at_min_db:
            bad.append("k_at_zenith_db < k_at_min_db")
        if self.sigma_at_zenith_db > self.sigma_at_min_db:
            bad.append("sigma_at_zenith_db > sigma_at_min_db")
        if self.decorrelation_time_s <= 0:
            bad.append("decorrelation_time_s must be positive")
        if self.carrier_freq_hz <= 0:
            bad.append("carrier_freq_hz must be positive")
        if bad:
            raise ConfigError("invalid channel params: " + "; ".join(bad))

    @property
    def noise_power_dbm(self) -> float:
        return (
            THERMAL_NOISE_DBM_PER_HZ
            + 10.0 * math.log10(self.bandwidth_hz)
            + self.noise_figure_db
        )


def path_loss_db(distance_m: float, freq_hz: float) -> float:
    """Free-space path loss 20*log10(4 pi d f / c) in dB."""
    if distance_m <= 0 or freq_hz <= 0:
        raise ValueError(f"need positive distance/frequency, got {distance_m}, {freq_hz}")
    return 20.0 * math.log10(4.0 * math.pi * distance_m * freq_hz / SPEED_OF_LIGHT)


def _interp_elevation(elevation_deg, lo_value, hi_value, theta_min_deg):
    if np.any(np.asarray(elevation_deg) < theta_min_deg - 1e-9):
        raise ValueError(
            f"elevation {elevation_deg} below minimum {theta_min_deg}"
        )
    frac = (np.asarray(elevation_deg, dtype=float) - theta_min_deg) / (90.0 - theta_min_deg)
    return lo_value + frac * (hi_value - lo_value)


def rician_k_db(elevation_deg, params: ChannelParams, theta_min_deg: float):
    """Rician K factor in dB, linear in elevation between the two anchors."""
    return _interp_elevation(
        elevation_deg, params.k_at_min_db, params.k_at_zenith_db, theta_min_deg
    )


def shadowing_sigma_db(elevation_deg, params: ChannelParams, theta_min_deg: float):
    """Shadowing standard deviation in dB, interpolated like the K factor."""
    return _interp_elevation(
        elevation_deg, params.sigma_at_min_db, params.sigma_at_zenith_db, theta_min_deg
    )


def shadowing_step(
    prev_db,
    dt_s: float,
    elevation_deg: float,
    params: ChannelParams,
    rng,
    theta_min_deg: float,
    z: float = None,
):
    """One AR(1) update of a link's shadowing chain in dB.

    ``prev_db=None`` starts a fresh chain at sigma(theta)*z. The innovation
    ``z`` may be passed explicitly (replay path); otherwise it is drawn from
    ``rng``.
    """
    if dt_s <= 0:
        raise ValueError("dt_s must be positive")
    if z is None:
        z = float(rng.standard_normal())
    sigma = float(shadowing_sigma_db(elevation_deg, params, theta_min_deg))
    if prev_db is None:
        return sigma * z
    rho = math.exp(-dt_s / params.decorrelation_time_s)
    return rho * prev_db + sigma * math.sqrt(1.0 - rho * rho) * z


def los_vector(link, cb) -> np.ndarray:
    """Transmit steering vector toward the link's beam-frame direction."""
    return steering_vector(
        link.beam_az_off_deg,
        link.beam_el_off_deg,
        cb.element_spacing_wl,
        cb.n_elem_x,
        cb.n_elem_y,
    )


def mix_channel(a: np.ndarray, g: np.ndarray, k_linear: float) -> np.ndarray:
    """Rician mixture sqrt(K/(K+1))*a + sqrt(1/(K+1))*g (both unit mean power)."""
    return math.sqrt(k_linear / (k_linear + 1.0)) * a + math.sqrt(
        1.0 / (k_linear + 1.0)
    ) * g


def diffuse_from_normals(z: np.ndarray, n_elem: int) -> np.ndarray:
    """Circularly-symmetric Gaussian vector with E||g||^2 = 1 from 2*n normals."""
    return (z[:n_elem] + 1j * z[n_elem : 2 * n_elem]) / math.sqrt(2.0 * n_elem)


def link_step_draws(master_seed: int, ue_id: int, sat_id: int, epoch: int, step: int, n_elem: int):
    """All randomness of one (track, step): diffuse vector and shadow innovation."""
    rng = substream(master_seed, "channel", ue_id, sat_id, epoch, step)
    z = rng.standard_normal(2 * n_elem + 1)
    return diffuse_from_normals(z, n_elem), float(z[2 * n_elem])


def sample_channel(link, cb, params: ChannelParams, rng, theta_min_deg: float) -> np.ndarray:
    """Draw the array-domain channel vector for one visible link."""
    k_db = float(rician_k_db(link.elevation_deg, params, theta_min_deg))
    k_lin = 10.0 ** (k_db / 10.0)
    a = los_vector(link, cb)
    z = rng.standard_normal(2 * cb.n_elements)
    g = diffuse_from_normals(z, cb.n_elements)
    return mix_channel(a, g, k_lin)


def snr_per_beam_db(link, h: np.ndarray, shadowing_db: float, cb, params: ChannelParams) -> np.ndarray:
    """SNR of every codebook beam on channel ``h`` for this link, in dB."""
    gains = array_gains_db(cb.weights, h[None, :])[0]
    pl = path_loss_db(link.slant_range_m, params.carrier_freq_hz)
    return (
        params.tx_power_dbm
        + gains
        + params.rx_gain_dbi
        - pl
        + shadowing_db
        - params.noise_power_dbm
    )
