#!/usr/bin/env python3
"""Walk through the constellation geometry: propagation, visibility, passes.

Propagates the default 6-plane / 66-satellite constellation, drops 50 static
UEs into the region of interest, and prints how visibility evolves over the
two-hour window.
"""

import numpy as np

from leobeam import geometry
from leobeam.seeding import substream

cfg = geometry.ConstellationConfig()
print("Constellation:")
print(f"  {cfg.num_planes} planes x {cfg.sats_per_plane} satellites")
print(f"  altitudes {cfg.plane_altitudes_km[0]:.0f}..{cfg.plane_altitudes_km[-1]:.0f} km,"
      f" inclination {cfg.inclination_deg} deg, RAAN step {cfg.raan_spacing_deg:.0f} deg")
print(f"  {cfg.num_snapshots} snapshots over {cfg.sim_duration_s:.0f} s"
      f" (dt = {cfg.snapshot_dt_s:.1f} s)")

sats = geometry.propagate(cfg, 0)
radii = [np.linalg.norm(s.ecef_position) / 1e3 for s in sats]
speeds = [np.linalg.norm(s.ecef_velocity) / 1e3 for s in sats]
print(f"\nSnapshot 0: orbit radius {min(radii):.0f}..{max(radii):.0f} km,"
      f" speed {min(speeds):.2f}..{max(speeds):.2f} km/s")

ues = geometry.make_ues(50, (35, 55), (0, 30), 0.0, substream(20260811, "ue"))
print(f"{len(ues)} UEs in lat [35, 55] x lon [0, 30]")

print("\nVisible links (elevation > 10 deg) across the window:")
for t in range(0, cfg.num_snapshots, 200):
    links = geometry.visible_links(geometry.propagate(cfg, t), ues, 10.0)
    elev = [lk.elevation_deg for lk in links]
    print(f"  t={t:4d}: {len(links):4d} links, elevation"
          f" {min(elev):5.1f}..{max(elev):5.1f} deg")

# Follow one UE-satellite pass: elevation rises then falls while the beam-frame
# direction sweeps across the satellite's field of view.
print("\nOne link track (UE 0, first visible satellite):")
track_sat = None
for t in range(cfg.num_snapshots):
    links = geometry.visible_links(geometry.propagate(cfg, t), ues[:1], 10.0)
    if track_sat is None and links:
        track_sat = links[0].sat_id
    row = next((lk for lk in links if lk.sat_id == track_sat), None)
    if track_sat is not None and row is None and t > 0:
        break
    if row and t % 10 == 0:
        print(f"  t={t:4d}  elev {row.elevation_deg:5.1f} deg  range"
              f" {row.slant_range_m/1e3:6.0f} km  beam-frame offsets"
              f" ({row.beam_az_off_deg:+6.1f}, {row.beam_el_off_deg:+6.1f}) deg")
