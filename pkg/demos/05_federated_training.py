#!/usr/bin/env python3
"""Federated training loop on a reduced scene: per-round losses and accuracy."""

import numpy as np

from leobeam import cli, config as config_mod, dataset, federated

cfg = config_mod.RunConfig()
cfg.constellation.num_snapshots = 200
cfg.ue.count = 20
cfg.fl.rounds = 4
cfg.fl.local_epochs = 30
cfg.validate()

ds = dataset.generate(cfg)
shards = dataset.partition(ds, cfg.dataset.test_fraction)
print(f"{len(ds)} samples across {len(shards)} plane-clients")

for kind in ("mlp", "gnn"):
    arch = cli._arch_for(cfg, kind, ds.n_beams)
    clients = cli.build_client_data(ds, shards, cfg, arch)
    params, history = federated.run_federated(clients, arch, cfg.fl, cfg.master_seed)
    print(f"\n{kind.upper()} ({params.param_count} parameters), "
          f"{cfg.fl.rounds} rounds x {cfg.fl.local_epochs} local epochs:")
    for rec in history.records:
        losses = " ".join(
            f"p{p}:{rec.client_loss[p]:.3f}" for p in sorted(rec.client_loss)
        )
        mean_top1 = np.mean(list(rec.client_top1.values()))
        print(f"  round {rec.round_index}: local losses {losses}"
              f" | mean client top-1 {mean_top1:.3f}"
              f" | global hash {rec.global_hash[:8]}")
