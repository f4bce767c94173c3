"""Uniform planar array beam codebook and the beam-neighbor graph.

The transmit array is a 4x4 UPA at half-wavelength spacing; beams steer to a
regular grid of (azimuth, elevation) offsets around boresight. Gains are
referenced to a single isotropic element, so a matched boresight beam yields
10*log10(n_elements) dB exactly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

GAIN_FLOOR_DB = -200.0


class DegenerateChannelError(ValueError):
    """Channel vector has zero norm; array gain is undefined."""


def _direction_cosines(az_off_deg, el_off_deg):
    """Array-frame direction cosines (ux along x, uy along y) of an offset."""
    az = np.radians(az_off_deg)
    el = np.radians(el_off_deg)
    return np.sin(az) * np.cos(el), np.sin(el)


def steering_vector(
    az_off_deg: float,
    el_off_deg: float,
    spacing_wl: float = 0.5,
    n_x: int = 4,
    n_y: int = 4,
) -> np.ndarray:
    """Unit-norm UPA response for a plane wave from the given offset.

    Element (m, n) carries phase 2*pi*spacing*(m*ux + n*uy); the vector is
    flattened x-major and scaled to unit L2 norm.
    """
    ux, uy = _direction_cosines(az_off_deg, el_off_deg)
    m = np.arange(n_x)[:, None]
    n = np.arange(n_y)[None, :]
    phase = 2.0 * np.pi * spacing_wl * (m * ux + n * uy)
    return (np.exp(1j * phase) / np.sqrt(n_x * n_y)).ravel()


@dataclass
class BeamCodebook:
    n_az: int
    n_el: int
    steer_offsets: np.ndarray      # (n_beams, 2): (az_off_deg, el_off_deg)
    weights: np.ndarray            # (n_beams, n_elements) complex, unit norm
    element_spacing_wl: float
    n_elem_x: int
    n_elem_y: int
    fov_az_deg: float
    fov_el_deg: float

    @property
    def n_beams(self) -> int:
        return self.n_az * self.n_el

    @property
    def n_elements(self) -> int:
        return self.n_elem_x * self.n_elem_y


def build_codebook(
    n_az: int = 4,
    n_el: int = 4,
    fov_az_deg: float = 100.0,
    fov_el_deg: float = 100.0,
    spacing_wl: float = 0.5,
    n_elem_x: int = 4,
    n_elem_y: int = 4,
) -> BeamCodebook:
    """Codebook whose offsets tile the field of view at grid-cell centers.

    Beam index b = i_el * n_az + i_az (azimuth scans fastest).
    """
    if n_az < 1 or n_el < 1:
        raise ConfigError(f"codebook grid {n_az}x{n_el} must be >= 1 per axis")
    az_offs = (np.arange(n_az) + 0.5 - n_az / 2.0) * (fov_az_deg / n_az)
    el_offs = (np.arange(n_el) + 0.5 - n_el / 2.0) * (fov_el_deg / n_el)
    offsets = np.empty((n_az * n_el, 2))
    weights = np.empty((n_az * n_el, n_elem_x * n_elem_y), dtype=complex)
    for i_el, el in enumerate(el_offs):
        for i_az, az in enumerate(az_offs):
            b = i_el * n_az + i_az
            offsets[b] = (az, el)
            weights[b] = steering_vector(az, el, spacing_wl, n_elem_x, n_elem_y)
    return BeamCodebook(
        n_az=n_az,
        n_el=n_el,
        steer_offsets=offsets,
        weights=weights,
        element_spacing_wl=spacing_wl,
        n_elem_x=n_elem_x,
        n_elem_y=n_elem_y,
        fov_az_deg=fov_az_deg,
        fov_el_deg=fov_el_deg,
    )


def array_gain_db(w: np.ndarray, h: np.ndarray) -> float:
    """Transmit array gain of beam ``w`` on channel ``h`` in dB.

    Referenced to a single isotropic element: 10*log10(N * |w^H h|^2 / ||h||^2)
    with N the element count, floored at GAIN_FLOOR_DB for orthogonal pairs.
    """
    hn2 = float(np.vdot(h, h).real)
    if hn2 <= 0.0:
        raise DegenerateChannelError("channel vector has zero norm")
    num = abs(np.vdot(w, h)) ** 2
    g = w.shape[0] * num / hn2
    if g <= 10.0 ** (GAIN_FLOOR_DB / 10.0):
        return GAIN_FLOOR_DB
    return float(10.0 * np.log10(g))


def array_gains_db(weights: np.ndarray, h_rows: np.ndarray) -> np.ndarray:
    """Vectorized gain table: rows of ``h_rows`` x all beams -> (L, n_beams) dB."""
    hn2 = np.sum(np.abs(h_rows) ** 2, axis=1)
    if np.any(hn2 <= 0.0):
        raise DegenerateChannelError("channel vector has zero norm")
    num = np.abs(h_rows @ weights.conj().T) ** 2
    g = weights.shape[1] * num / hn2[:, None]
    return 10.0 * np.log10(np.maximum(g, 10.0 ** (GAIN_FLOOR_DB / 10.0)))


@dataclass
class BeamGraph:
    adjacency: np.ndarray             # (n_beams, n_beams) bool, zero diagonal
    normalized_adjacency: np.ndarray  # D^-1/2 (A + I) D^-1/2


def beam_graph(cb: BeamCodebook) -> BeamGraph:
    """4-connectivity of the beam index grid plus the normalized propagation matrix."""
    nb = cb.n_beams
    adj = np.zeros((nb, nb), dtype=bool)
    for i_el in range(cb.n_el):
        for i_az in range(cb.n_az):
            b = i_el * cb.n_az + i_az
            if i_az + 1 < cb.n_az:
                adj[b, b + 1] = adj[b + 1, b] = True
            if i_el + 1 < cb.n_el:
                adj[b, b + cb.n_az] = adj[b + cb.n_az, b] = True
    a_hat = adj.astype(float) + np.eye(nb)
    d_inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    norm = a_hat * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
    return BeamGraph(adjacency=adj, normalized_adjacency=norm)
