#!/usr/bin/env python3
"""End-to-end mini study: train both models, compare metrics and switching."""

import time

import numpy as np

from leobeam import cli, config as config_mod, dataset, evaluate, federated

cfg = config_mod.RunConfig()
cfg.constellation.num_snapshots = 200
cfg.ue.count = 20
cfg.fl.rounds = 3
cfg.fl.local_epochs = 40
cfg.validate()

ds = dataset.generate(cfg)
shards = dataset.partition(ds, cfg.dataset.test_fraction)
reports = {}
for kind in ("mlp", "gnn"):
    arch = cli._arch_for(cfg, kind, ds.n_beams)
    clients = cli.build_client_data(ds, shards, cfg, arch)
    t0 = time.perf_counter()
    params, _ = federated.run_federated(clients, arch, cfg.fl, cfg.master_seed)
    reports[kind] = evaluate.build_report(
        params, ds, shards, cfg, train_time_s=time.perf_counter() - t0
    )

print("Side-by-side comparison:")
for row in evaluate.comparison_rows(reports["mlp"], reports["gnn"]):
    name, a, b = row.split(",")
    print(f"  {name:38s} {a:>22s} {b:>22s}")

print("\nTop-1 accuracy by elevation bin:")
print(f"  {'bin':>9} {'n':>6} {'mlp':>7} {'gnn':>7}")
for (lo, hi, am, n), (_, _, ag, _) in zip(
    reports["mlp"].elevation_bins, reports["gnn"].elevation_bins
):
    fm = "   --" if am is None else f"{am:7.3f}"
    fg = "   --" if ag is None else f"{ag:7.3f}"
    print(f"  [{lo:3.0f},{hi:3.0f}) {n:6d} {fm} {fg}")

print("\nBeam switching rate by elevation bin (model vs oracle):")
print(f"  {'bin':>9} {'mlp':>7} {'gnn':>7} {'oracle':>7}")
for (lo, hi, mm, om, n), (_, _, mg, _, _) in zip(
    reports["mlp"].switching, reports["gnn"].switching
):
    if om is None:
        continue
    print(f"  [{lo:3.0f},{hi:3.0f}) {mm:7.3f} {mg:7.3f} {om:7.3f}")

for kind, rep in reports.items():
    dev = np.mean([abs(m - o) for _, _, m, o, _ in rep.switching
                   if m is not None and o is not None])
    print(f"mean |{kind} - oracle| switching deviation: {dev:.4f}")
