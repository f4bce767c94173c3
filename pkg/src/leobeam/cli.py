"""Command-line pipeline: simulate -> train -> eval, plus config and checks.

Exit codes: 0 success, 2 configuration/validation error, 3 numeric failure
(divergence or a failed gradient check).
"""

import os

# Single-threaded BLAS keeps every reduction order fixed (bit-reproducible
# outputs) and avoids oversubscription when clients train in parallel.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import argparse
import math
import sys
import time

import numpy as np
import yaml

from . import config as config_mod
from . import dataset as dataset_mod
from . import evaluate as evaluate_mod
from . import federated, nn
from .errors import ConfigError, DataFormatError, DivergenceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _load_config(args) -> config_mod.RunConfig:
    if args.config:
        cfg = config_mod.load_config(args.config)
    else:
        cfg = config_mod.RunConfig()
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.out_dir is not None:
        cfg.paths.out_dir = args.out_dir
    cfg.validate()
    return cfg


def _dataset_path(cfg, override=None):
    if override:
        return override
    return os.path.join(cfg.paths.out_dir, cfg.paths.dataset)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out_path = _dataset_path(cfg, args.out)
    os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
    t0 = time.perf_counter()
    ds = dataset_mod.generate(cfg)
    dataset_mod.save(ds, out_path)
    dt = time.perf_counter() - t0
    print(f"wrote {len(ds)} samples to {out_path} in {dt:.1f}s")
    print("per-plane sample counts:")
    for plane in np.unique(ds.plane_id):
        print(f"  plane {plane}: {int(np.sum(ds.plane_id == plane))}")
    return EXIT_OK


def _arch_for(cfg, kind, n_beams):
    if kind == "mlp":
        return nn.ArchMLP(dataset_mod.N_FEATURES, tuple(cfg.model.mlp_hidden), n_beams)
    return nn.ArchGNN(
        4, tuple(cfg.model.gnn_hidden), n_beams, cfg.codebook.n_az, cfg.codebook.n_el
    )


def build_client_data(ds, shards, cfg, arch):
    """Kernel-ready per-plane tensors (see federated.ClientData)."""
    if arch.kind == "mlp":
        inputs_raw = ds.features
        inputs_train = inputs_raw
    else:
        inputs_raw = dataset_mod.gnn_node_features(ds, cfg)
        inputs_train = np.matmul(arch.a_hat, inputs_raw)
    clients = []
    for shard in shards:
        clients.append(
            federated.ClientData(
                plane_id=shard.plane_id,
                x_train=np.ascontiguousarray(inputs_train[shard.train_idx]),
                y_train=ds.label[shard.train_idx].astype(np.int64),
                x_test=np.ascontiguousarray(inputs_raw[shard.test_idx]),
                y_test=ds.label[shard.test_idx].astype(np.int64),
            )
        )
    return clients


def _checkpoint_path(cfg, kind):
    return os.path.join(cfg.paths.out_dir, cfg.paths.checkpoints_dir, f"{kind}.bfl1")


def cmd_train(args) -> int:
    cfg = _load_config(args)
    kind = args.model or cfg.model.kind
    ds_path = _dataset_path(cfg, args.dataset)
    ds = dataset_mod.load(ds_path, expected_config_hash=config_mod.config_hash(cfg))
    shards = dataset_mod.partition(ds, cfg.dataset.test_fraction)
    arch = _arch_for(cfg, kind, ds.n_beams)
    clients = build_client_data(ds, shards, cfg, arch)

    t0 = time.perf_counter()
    params, history = federated.run_federated(clients, arch, cfg.fl, cfg.master_seed)
    train_time = time.perf_counter() - t0

    ckpt = _checkpoint_path(cfg, kind)
    os.makedirs(os.path.dirname(ckpt), exist_ok=True)
    nn.save_checkpoint(params, ckpt)
    history.save(os.path.join(cfg.paths.out_dir, cfg.paths.checkpoints_dir,
                              f"history_{kind}.csv"))
    with open(ckpt + ".train.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(
            {
                "model": kind,
                "train_time_s": float(train_time),
                "rounds": cfg.fl.rounds,
                "local_epochs": cfg.fl.local_epochs,
                "dataset_hash": ds.meta.get("config_fnv1a"),
            },
            fh,
            sort_keys=True,
        )
    final = history.records[-1]
    mean_top1 = float(np.mean(list(final.client_top1.values())))
    print(
        f"trained {kind} for {cfg.fl.rounds} rounds x {cfg.fl.local_epochs} epochs "
        f"in {train_time:.1f}s; mean client top-1 {mean_top1:.3f}"
    )
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    ds_path = _dataset_path(cfg, args.dataset)
    ds = dataset_mod.load(ds_path, expected_config_hash=config_mod.config_hash(cfg))
    shards = dataset_mod.partition(ds, cfg.dataset.test_fraction)

    reports = {}
    for ckpt_path in args.checkpoints:
        params = nn.load_checkpoint(ckpt_path)
        kind = params.arch.kind
        train_time = math.nan
        meta_path = ckpt_path + ".train.yaml"
        if os.path.exists(meta_path):
            with open(meta_path, "r", encoding="utf-8") as fh:
                train_time = float(yaml.safe_load(fh).get("train_time_s", math.nan))
        report = evaluate_mod.build_report(
            params, ds, shards, cfg, train_time_s=train_time,
            bin_width_deg=args.bin_width,
        )
        out_dir = os.path.join(cfg.paths.out_dir, cfg.paths.reports_dir, kind)
        evaluate_mod.write_reports(report, out_dir)
        reports[kind] = report
        print(
            f"{kind}: top-1 {report.top1:.4f}  top-3 {report.top3:.4f}  "
            f"mean client top-1 {report.mean_client_top1:.4f}  "
            f"reports in {out_dir}"
        )

    if len(args.checkpoints) == 2 and set(reports) == {"mlp", "gnn"}:
        rows = evaluate_mod.comparison_rows(reports["mlp"], reports["gnn"])
        cmp_path = os.path.join(cfg.paths.out_dir, cfg.paths.reports_dir, "comparison.csv")
        with open(cmp_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(rows) + "\n")
        print(f"comparison: {cmp_path}")
    return EXIT_OK


def cmd_print_default_config(args) -> int:
    sys.stdout.write(config_mod.canonical_yaml(config_mod.RunConfig()))
    return EXIT_OK


def cmd_grad_check(args) -> int:
    cfg = _load_config(args)
    rng = np.random.default_rng(cfg.master_seed)
    n_beams = cfg.codebook.n_az * cfg.codebook.n_el
    batch = 16
    worst = {}
    mlp_arch = _arch_for(cfg, "mlp", n_beams)
    x = rng.uniform(-1, 1, (batch, mlp_arch.input_dim))
    y = rng.integers(0, n_beams, batch)
    worst["mlp"] = nn.grad_check(mlp_arch, cfg.master_seed, x, y)
    gnn_arch = _arch_for(cfg, "gnn", n_beams)
    xg = rng.uniform(-1, 1, (batch, n_beams, gnn_arch.node_in))
    worst["gnn"] = nn.grad_check(gnn_arch, cfg.master_seed, xg, y)
    ok = True
    for kind, err in worst.items():
        status = "ok" if err < 1e-4 else "FAIL"
        ok &= err < 1e-4
        print(f"{kind}: max relative gradient error {err:.3e} [{status}]")
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leobeam",
        description="LEO constellation beam-prediction pipeline",
    )
    parser.add_argument("--config", help="YAML run config (defaults when omitted)")
    parser.add_argument("--seed", type=int, help="override master_seed")
    parser.add_argument("--out-dir", help="override paths.out_dir")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate the labeled dataset")
    p.add_argument("--out", help="dataset CSV path (default from config paths)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="federated training on the dataset")
    p.add_argument("--model", choices=("mlp", "gnn"))
    p.add_argument("--dataset", help="dataset CSV path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints, write report CSVs")
    p.add_argument("checkpoints", nargs="+", metavar="CHECKPOINT")
    p.add_argument("--dataset", help="dataset CSV path")
    p.add_argument("--bin-width", type=float, default=10.0,
                   help="elevation bin width in degrees")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("print-default-config", help="dump the canonical defaults")
    p.set_defaults(func=cmd_print_default_config)

    p = sub.add_parser("grad-check", help="verify gradients against finite differences")
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
