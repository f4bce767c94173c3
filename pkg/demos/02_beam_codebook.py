#!/usr/bin/env python3
"""Inspect the 4x4 UPA codebook: steering grid, gain patterns, beam graph."""

import numpy as np

from leobeam import codebook

cb = codebook.build_codebook()
print(f"{cb.n_beams} beams on a {cb.n_az}x{cb.n_el} grid,"
      f" FOV +-{cb.fov_az_deg/2:.0f} deg, {cb.n_elements} elements")
print("Steering offsets (az, el) in degrees:")
for i_el in range(cb.n_el):
    row = cb.steer_offsets[i_el * cb.n_az : (i_el + 1) * cb.n_az]
    print("  " + "  ".join(f"({a:+5.1f},{e:+5.1f})" for a, e in row))

print(f"\nMatched-beam gain: {codebook.array_gain_db(cb.weights[5], cb.weights[5]):.3f} dB"
      f" (= 10 log10({cb.n_elements}))")

# Sweep a pure line-of-sight direction across azimuth at el = 0 and show which
# beam wins and by how much.
print("\nAzimuth sweep at el=0 (gain of best vs second beam):")
for az in range(-50, 51, 10):
    h = codebook.steering_vector(az, 0.0)
    gains = codebook.array_gains_db(cb.weights, h[None, :])[0]
    order = np.argsort(-gains)
    print(f"  az {az:+3d} deg: beam {order[0]:2d} at {gains[order[0]]:6.2f} dB,"
          f" margin {gains[order[0]] - gains[order[1]]:5.2f} dB over beam {order[1]}")

g = codebook.beam_graph(cb)
deg = g.adjacency.sum(axis=1)
print(f"\nBeam graph: degrees corner/edge/interior ="
      f" {deg.min()}/{int(np.median(deg))}/{deg.max()}")
ev = np.linalg.eigvalsh(g.normalized_adjacency)
print(f"Normalized adjacency eigenvalues in [{ev.min():.3f}, {ev.max():.3f}]")
