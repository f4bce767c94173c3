#!/usr/bin/env python3
"""Channel model walk-through: link budget, fading statistics, shadowing."""

import numpy as np

from leobeam import channel, codebook
from leobeam.geometry import LinkGeometry, max_slant_range_m

p = channel.ChannelParams()
cb = codebook.build_codebook()
theta_min = 10.0

print("Link budget vs elevation (matched beam, 1170 km shell):")
print(f"  tx {p.tx_power_dbm} dBm, rx {p.rx_gain_dbi} dBi,"
      f" B {p.bandwidth_hz/1e6:.0f} MHz, NF {p.noise_figure_db} dB,"
      f" noise {p.noise_power_dbm:.1f} dBm")
print(f"  {'elev':>5} {'range km':>9} {'FSPL dB':>8} {'K dB':>6} {'sigma dB':>8} {'SNR dB':>7}")
rng = np.random.default_rng(0)
for elev in (10, 20, 30, 45, 60, 75, 90):
    # Slant range for a 1170 km shell at this elevation.
    r_e, h = 6378.137e3, 1170e3
    ratio = 1 + h / r_e
    eps = np.radians(elev)
    rng_m = r_e * (np.sqrt(ratio**2 - np.cos(eps) ** 2) - np.sin(eps))
    link = LinkGeometry(0, 0, 0, 0, 0.0, float(elev), float(rng_m), 0.0, -12.5, -12.5)
    k_db = float(channel.rician_k_db(elev, p, theta_min))
    sig = float(channel.shadowing_sigma_db(elev, p, theta_min))
    h_vec = channel.sample_channel(link, cb, p, rng, theta_min)
    snr = channel.snr_per_beam_db(link, h_vec, 0.0, cb, p)
    print(f"  {elev:5d} {rng_m/1e3:9.0f} "
          f"{channel.path_loss_db(rng_m, p.carrier_freq_hz):8.2f} {k_db:6.1f}"
          f" {sig:8.1f} {snr.max():7.2f}")

print(f"\nMax slant range at theta_min: {max_slant_range_m(1325.0, theta_min)/1e3:.0f} km")

# How often does fading move the best beam away from the geometric choice?
print("\nFading-induced label flips (1000 draws per elevation):")
link_geo = LinkGeometry(0, 0, 0, 0, 0.0, 50.0, 1.5e6, 0.0, -20.0, 5.0)
for elev in (10, 30, 50, 70, 90):
    link = LinkGeometry(0, 0, 0, 0, 0.0, float(elev), 1.5e6, 0.0, -20.0, 5.0)
    a = channel.los_vector(link, cb)
    geo_best = int(np.argmax(np.abs(cb.weights.conj() @ a)))
    flips = 0
    for _ in range(1000):
        h_vec = channel.sample_channel(link, cb, p, rng, theta_min)
        if int(np.argmax(np.abs(cb.weights.conj() @ h_vec))) != geo_best:
            flips += 1
    print(f"  elev {elev:2d}: best beam differs from geometric in {flips/10:.1f}% of draws")

# Shadowing chain: temporal correlation over one visibility track.
print("\nShadowing AR(1) chain (dt = 7.2 s, tau = 30 s):")
val = None
chain = []
for step in range(20):
    val = channel.shadowing_step(val, 7.2, 40.0, p, rng, theta_min)
    chain.append(val)
print("  " + " ".join(f"{v:+5.2f}" for v in chain))
print(f"  correlation factor per step: {np.exp(-7.2/30):.3f}")
