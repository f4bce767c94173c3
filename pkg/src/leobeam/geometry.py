"""Constellation propagation, UE placement and per-snapshot link geometry.

Model: spherical Earth, circular Keplerian orbits propagated in the inertial
frame and rotated into ECEF at the sidereal rate; UEs are static in ECEF.
Angles are degrees at every interface and radians internally. This module is
RNG-free apart from the explicit UE sampler, so identical configs give
byte-identical geometry.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateGeometryError

EARTH_RADIUS_M = 6378.137e3
MU_EARTH = 3.986004418e14          # m^3/s^2
EARTH_ROTATION_RATE = 7.2921159e-5  # rad/s

ALTITUDE_RANGE_KM = (1015.0, 1325.0)


def spaced_altitudes_km(num_planes: int) -> list:
    """Plane altitudes uniformly spaced across the allowed shell.

    Plane p gets lo + p*(hi-lo)/(P-1); a single plane sits at the midpoint.
    """
    lo, hi = ALTITUDE_RANGE_KM
    if num_planes == 1:
        return [0.5 * (lo + hi)]
    return [lo + p * (hi - lo) / (num_planes - 1) for p in range(num_planes)]


@dataclass
class ConstellationConfig:
    num_planes: int = 6
    sats_per_plane: int = 11
    plane_altitudes_km: list = None
    inclination_deg: float = 86.4
    raan_spacing_deg: float = None      # default 180/P (Walker-star-like)
    phase_offset_deg: float = None      # per-plane phasing, default 360/(P*S)
    earth_radius_km: float = EARTH_RADIUS_M / 1e3
    mu: float = MU_EARTH
    sim_duration_s: float = 7200.0
    num_snapshots: int = 1000

    def __post_init__(self):
        if self.num_planes < 1 or self.sats_per_plane < 1:
            raise ConfigError(
                f"need num_planes >= 1 and sats_per_plane >= 1, got "
                f"{self.num_planes}, {self.sats_per_plane}"
            )
        if self.plane_altitudes_km is None:
            self.plane_altitudes_km = spaced_altitudes_km(self.num_planes)
        if self.raan_spacing_deg is None:
            self.raan_spacing_deg = 180.0 / self.num_planes
        if self.phase_offset_deg is None:
            self.phase_offset_deg = 360.0 / (self.num_planes * self.sats_per_plane)
        self.validate()

    def validate(self):
        bad = []
        if self.num_planes < 1:
            bad.append(f"num_planes={self.num_planes} (need >= 1)")
        if self.sats_per_plane < 1:
            bad.append(f"sats_per_plane={self.sats_per_plane} (need >= 1)")
        if self.num_snapshots < 2:
            bad.append(f"num_snapshots={self.num_snapshots} (need >= 2)")
        if len(self.plane_altitudes_km) != self.num_planes:
            bad.append("plane_altitudes_km length != num_planes")
        lo, hi = ALTITUDE_RANGE_KM
        for alt in self.plane_altitudes_km:
            if not lo <= alt <= hi:
                bad.append(f"altitude {alt} km outside [{lo}, {hi}]")
        if not 0.0 <= self.inclination_deg <= 180.0:
            bad.append(f"inclination_deg={self.inclination_deg} outside [0, 180]")
        if self.sim_duration_s <= 0:
            bad.append("sim_duration_s must be positive")
        if bad:
            raise ConfigError("invalid constellation config: " + "; ".join(bad))

    @property
    def snapshot_dt_s(self) -> float:
        return self.sim_duration_s / self.num_snapshots

    @property
    def num_satellites(self) -> int:
        return self.num_planes * self.sats_per_plane


@dataclass
class SatelliteState:
    plane_id: int
    sat_id: int                 # global index: plane_id * sats_per_plane + slot
    ecef_position: np.ndarray   # meters, shape (3,)
    ecef_velocity: np.ndarray   # m/s, shape (3,); inertial speed in rotated axes
    snapshot: int


@dataclass
class UeState:
    ue_id: int
    latitude: float     # degrees
    longitude: float    # degrees
    altitude: float     # meters
    ecef_position: np.ndarray = field(default=None)

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ConfigError(f"UE latitude {self.latitude} outside [-90, 90]")
        if self.ecef_position is None:
            self.ecef_position = geodetic_to_ecef(
                self.latitude, self.longitude, self.altitude
            )


@dataclass
class LinkGeometry:
    ue_id: int
    sat_id: int
    plane_id: int
    snapshot: int
    azimuth_deg: float        # clockwise from local north, [0, 360)
    elevation_deg: float      # above the UE horizon plane, (-90, 90]
    slant_range_m: float
    sat_heading_deg: float    # ground-track direction at sub-satellite point
    # Link direction seen from the satellite's beam frame (boresight = nadir,
    # x along-track): the quantities the codebook steers against.
    beam_az_off_deg: float
    beam_el_off_deg: float


def geodetic_to_ecef(lat_deg: float, lon_deg: float, alt_m: float = 0.0) -> np.ndarray:
    """Spherical-Earth geodetic to ECEF conversion, meters."""
    lat = np.radians(lat_deg)
    lon = np.radians(lon_deg)
    r = EARTH_RADIUS_M + alt_m
    return np.array(
        [
            r * np.cos(lat) * np.cos(lon),
            r * np.cos(lat) * np.sin(lon),
            r * np.sin(lat),
        ]
    )


def make_ues(count, lat_range, lon_range, altitude_m, rng) -> list:
    """Sample static UEs uniformly in a lat/lon box (the region of interest)."""
    lats = rng.uniform(lat_range[0], lat_range[1], count)
    lons = rng.uniform(lon_range[0], lon_range[1], count)
    return [UeState(i, float(lats[i]), float(lons[i]), altitude_m) for i in range(count)]


def _propagate_arrays(config: ConstellationConfig, t: float):
    """ECEF positions/velocities of all satellites at time ``t`` seconds.

    Returns (plane_ids, sat_ids, pos (N,3), vel (N,3)) with N = P*S, ordered
    plane-major so sat_id == row index.
    """
    P, S = config.num_planes, config.sats_per_plane
    incl = np.radians(config.inclination_deg)
    raan_step = np.radians(config.raan_spacing_deg)
    phase_step = np.radians(config.phase_offset_deg)

    plane_ids = np.repeat(np.arange(P), S)
    slot = np.tile(np.arange(S), P)
    r = (config.earth_radius_km + np.asarray(config.plane_altitudes_km)) * 1e3
    r_sat = r[plane_ids]
    omega = np.sqrt(config.mu / r_sat**3)

    u = 2.0 * np.pi * slot / S + phase_step * plane_ids + omega * t
    raan = raan_step * plane_ids

    cos_u, sin_u = np.cos(u), np.sin(u)
    cos_O, sin_O = np.cos(raan), np.sin(raan)
    cos_i, sin_i = np.cos(incl), np.sin(incl)

    # Perifocal (circular) -> inertial via Rz(raan)·Rx(incl).
    x = cos_O * cos_u - sin_O * cos_i * sin_u
    y = sin_O * cos_u + cos_O * cos_i * sin_u
    z = sin_i * sin_u
    pos_i = np.stack([r_sat * x, r_sat * y, r_sat * z], axis=1)

    v = r_sat * omega
    vx = -cos_O * sin_u - sin_O * cos_i * cos_u
    vy = -sin_O * sin_u + cos_O * cos_i * cos_u
    vz = sin_i * cos_u
    vel_i = np.stack([v * vx, v * vy, v * vz], axis=1)

    # Rotate inertial -> ECEF (Earth angle zero at t = 0). Velocity axes are
    # rotated without the transport term, so |v| stays the inertial sqrt(mu/r).
    theta = EARTH_ROTATION_RATE * t
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    pos = pos_i @ rot.T
    vel = vel_i @ rot.T

    sat_ids = plane_ids * S + slot
    return plane_ids, sat_ids, pos, vel


def propagate(config: ConstellationConfig, snapshot: int) -> list:
    """All satellite states at the given snapshot index."""
    if not 0 <= snapshot < config.num_snapshots:
        raise IndexError(
            f"snapshot {snapshot} out of range [0, {config.num_snapshots})"
        )
    t = snapshot * config.snapshot_dt_s
    plane_ids, sat_ids, pos, vel = _propagate_arrays(config, t)
    return [
        SatelliteState(int(plane_ids[i]), int(sat_ids[i]), pos[i], vel[i], snapshot)
        for i in range(len(sat_ids))
    ]


def _local_enu(points: np.ndarray):
    """East/north/up unit vectors of the local horizon at each ECEF point."""
    up = points / np.linalg.norm(points, axis=-1, keepdims=True)
    z_axis = np.array([0.0, 0.0, 1.0])
    east = np.cross(np.broadcast_to(z_axis, up.shape), up)
    norm = np.linalg.norm(east, axis=-1, keepdims=True)
    # At the poles east is ill-defined; any horizontal direction works.
    polar = norm[..., 0] < 1e-12
    if np.any(polar):
        east = east.copy()
        east[polar] = np.array([0.0, 1.0, 0.0])
        norm = np.linalg.norm(east, axis=-1, keepdims=True)
    east = east / norm
    north = np.cross(up, east)
    return east, north, up


def look_angles(ue: UeState, sat: SatelliteState):
    """(azimuth_deg, elevation_deg, slant_range_m) of the UE->satellite ray."""
    d = sat.ecef_position - ue.ecef_position
    rng_m = float(np.linalg.norm(d))
    if rng_m < 1.0:
        raise DegenerateGeometryError(
            f"satellite {sat.sat_id} coincident with UE {ue.ue_id}"
        )
    east, north, up = _local_enu(ue.ecef_position)
    e, n, u = float(d @ east), float(d @ north), float(d @ up)
    elevation = np.degrees(np.arcsin(np.clip(u / rng_m, -1.0, 1.0)))
    azimuth = np.degrees(np.arctan2(e, n)) % 360.0
    return float(azimuth), float(elevation), rng_m


def _sat_frames(pos: np.ndarray, vel: np.ndarray):
    """Beam-frame axes per satellite: z to nadir, x along-track, y completes."""
    z_b = -pos / np.linalg.norm(pos, axis=-1, keepdims=True)
    v_h = vel - np.sum(vel * z_b, axis=-1, keepdims=True) * z_b
    x_b = v_h / np.linalg.norm(v_h, axis=-1, keepdims=True)
    y_b = np.cross(z_b, x_b)
    return x_b, y_b, z_b


def _sat_headings(pos: np.ndarray, vel: np.ndarray) -> np.ndarray:
    """Ground-track heading (deg clockwise from north) at the sub-satellite point."""
    east, north, _ = _local_enu(pos)
    h = np.degrees(np.arctan2(np.sum(vel * east, axis=-1), np.sum(vel * north, axis=-1)))
    return h % 360.0


def visible_links(sats: list, ues: list, theta_min_deg: float) -> list:
    """Every UE-satellite pair with elevation strictly above ``theta_min_deg``.

    All states must share one snapshot index. Returns LinkGeometry records
    carrying the full ground-frame and beam-frame geometry.
    """
    if not sats or not ues:
        return []
    snapshots = {s.snapshot for s in sats}
    if len(snapshots) != 1:
        raise ValueError(f"satellite states span snapshots {sorted(snapshots)}")
    snapshot = snapshots.pop()

    sat_pos = np.stack([s.ecef_position for s in sats])
    sat_vel = np.stack([s.ecef_velocity for s in sats])
    ue_pos = np.stack([u.ecef_position for u in ues])

    east, north, up = _local_enu(ue_pos)
    d = sat_pos[None, :, :] - ue_pos[:, None, :]          # (U, N, 3)
    slant = np.linalg.norm(d, axis=2)
    sin_el = np.einsum("unk,uk->un", d, up) / slant
    elev = np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))
    mask = elev > theta_min_deg
    if not np.any(mask):
        return []

    iu, isat = np.nonzero(mask)
    dm = d[iu, isat]
    rng_m = slant[iu, isat]
    az = np.degrees(
        np.arctan2(
            np.einsum("lk,lk->l", dm, east[iu]),
            np.einsum("lk,lk->l", dm, north[iu]),
        )
    ) % 360.0

    x_b, y_b, z_b = _sat_frames(sat_pos, sat_vel)
    headings = _sat_headings(sat_pos, sat_vel)
    dn = -dm / rng_m[:, None]                              # satellite -> UE
    ux = np.einsum("lk,lk->l", dn, x_b[isat])
    uy = np.einsum("lk,lk->l", dn, y_b[isat])
    uz = np.einsum("lk,lk->l", dn, z_b[isat])
    beam_el = np.degrees(np.arcsin(np.clip(uy, -1.0, 1.0)))
    beam_az = np.degrees(np.arctan2(ux, uz))

    links = []
    for k in range(len(iu)):
        links.append(
            LinkGeometry(
                ue_id=ues[iu[k]].ue_id,
                sat_id=sats[isat[k]].sat_id,
                plane_id=sats[isat[k]].plane_id,
                snapshot=snapshot,
                azimuth_deg=float(az[k]),
                elevation_deg=float(elev[iu[k], isat[k]]),
                slant_range_m=float(rng_m[k]),
                sat_heading_deg=float(headings[isat[k]]),
                beam_az_off_deg=float(beam_az[k]),
                beam_el_off_deg=float(beam_el[k]),
            )
        )
    return links


def max_slant_range_m(altitude_km: float, theta_min_deg: float) -> float:
    """Slant range at the minimum elevation angle for a circular-orbit shell."""
    eps = np.radians(theta_min_deg)
    ratio = 1.0 + altitude_km * 1e3 / EARTH_RADIUS_M
    return EARTH_RADIUS_M * (np.sqrt(ratio**2 - np.cos(eps) ** 2) - np.sin(eps))
