"""Hierarchical federated training with orbital planes as logical clients.

Each round: broadcast the global parameter vector, let every client run a
fixed number of local epochs of mini-batch Adam on its own shard, then
aggregate with sample-count-weighted FedAvg in ascending plane order (fixed
summation order keeps runs bitwise reproducible).

Clients are stateful across rounds: the Adam moments and the shuffle stream
continue, so a single-client federated run is arithmetically identical to one
continuous centralized run of rounds*epochs epochs.
"""

import math
import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ConfigError, DivergenceError
from .seeding import fnv1a_64, substream

MODEL_KIND_IDS = {"mlp": 0, "gnn": 1}


@dataclass
class FLConfig:
    rounds: int = 5
    local_epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0          # extra offset mixed into init/shuffle substreams
    n_workers: int = 2     # 0/1 = serial; >1 = client-parallel processes

    def validate(self):
        bad = []
        if self.rounds < 1:
            bad.append(f"fl.rounds={self.rounds} (need >= 1)")
        if self.local_epochs < 1:
            bad.append(f"fl.local_epochs={self.local_epochs} (need >= 1)")
        if self.batch_size < 1:
            bad.append(f"fl.batch_size={self.batch_size} (need >= 1)")
        if self.learning_rate < 0:
            bad.append(f"fl.learning_rate={self.learning_rate} (need >= 0)")
        if self.n_workers < 0:
            bad.append(f"fl.n_workers={self.n_workers} (need >= 0)")
        if bad:
            raise ConfigError("; ".join(bad))


@dataclass
class ClientData:
    """Kernel-ready tensors for one plane-client.

    ``x_train`` is the training input in the form the compiled kernel eats
    (plain features for the MLP, pre-aggregated node features for the GNN);
    ``x_test`` stays in the raw form `nn.forward` expects.
    """

    plane_id: int
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray

    @property
    def n_train(self):
        return len(self.y_train)


@dataclass
class ClientState:
    plane_id: int
    flat: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    adam_t: int
    rng: np.random.Generator


def _make_client_state(plane_id, arch, master_seed, kind_id, fl_seed):
    n = nn.param_count(arch)
    return ClientState(
        plane_id=plane_id,
        flat=np.zeros(n),
        adam_m=np.zeros(n),
        adam_v=np.zeros(n),
        adam_t=0,
        rng=substream(master_seed, "shuffle", plane_id, kind_id, fl_seed),
    )


def _run_epochs(state: ClientState, data: ClientData, arch, flcfg: FLConfig, epochs: int):
    """Run ``epochs`` local epochs in place; returns the last epoch's mean loss."""
    from . import kernels

    loss = math.nan
    bs = min(flcfg.batch_size, data.n_train)
    for _ in range(epochs):
        perm = state.rng.permutation(data.n_train).astype(np.int64)
        if arch.kind == "mlp":
            h1, h2 = arch.hidden
            loss, state.adam_t = kernels.mlp_epoch(
                data.x_train, data.y_train, perm, bs, state.flat,
                state.adam_m, state.adam_v, state.adam_t,
                flcfg.learning_rate, 0.9, 0.999, 1e-8,
                arch.input_dim, h1, h2, arch.n_beams,
            )
        else:
            ai, aj, av = _adjacency_cache(arch)
            c1, c2 = arch.hidden
            loss, state.adam_t = kernels.gnn_epoch(
                data.x_train, data.y_train, perm, bs, state.flat,
                state.adam_m, state.adam_v, state.adam_t,
                flcfg.learning_rate, 0.9, 0.999, 1e-8,
                ai, aj, av, arch.n_beams, arch.node_in, c1, c2,
            )
        if not math.isfinite(loss):
            break
    return loss


_ADJ_CACHE = {}


def _adjacency_cache(arch):
    key = (arch.grid_az, arch.grid_el)
    if key not in _ADJ_CACHE:
        from .kernels import adjacency_triplets

        _ADJ_CACHE[key] = adjacency_triplets(arch.a_hat)
    return _ADJ_CACHE[key]


def local_train(state: ClientState, global_flat: np.ndarray, epochs: int,
                flcfg: FLConfig, data: ClientData, arch):
    """One client's round: adopt the broadcast, run local epochs.

    Returns (params, n_train, last_epoch_loss); the client state (Adam
    moments, shuffle stream) persists for the next round.
    """
    if data.n_train == 0:
        raise ValueError(f"client {state.plane_id} has an empty train shard")
    state.flat = global_flat.copy()
    if epochs == 0:
        return state.flat, data.n_train, math.nan
    loss = _run_epochs(state, data, arch, flcfg, epochs)
    return state.flat, data.n_train, loss


def fedavg(updates):
    """Sample-count-weighted mean of parameter vectors, fixed summation order."""
    if not updates:
        raise ValueError("fedavg needs at least one update")
    length = len(updates[0][0])
    total = 0.0
    for params, n in updates:
        if len(params) != length:
            raise ValueError(
                f"parameter length mismatch: {len(params)} != {length}"
            )
        total += n
    if total <= 0:
        raise ValueError("fedavg needs positive total sample count")
    acc = np.zeros(length)
    for params, n in updates:
        acc += (n / total) * params
    return acc


@dataclass
class RoundRecord:
    round_index: int
    client_loss: dict
    client_top1: dict
    global_hash: str


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def csv_rows(self):
        rows = ["round,client,local_loss,local_top1"]
        for rec in self.records:
            for plane in sorted(rec.client_loss):
                rows.append(
                    f"{rec.round_index},{plane},{rec.client_loss[plane]!r},"
                    f"{rec.client_top1.get(plane)!r}"
                )
        return rows

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.csv_rows()) + "\n")


def predict(params: nn.ModelParams, inputs: np.ndarray, chunk: int = 8192) -> np.ndarray:
    """Argmax-beam predictions in evaluation form (ties to the lower index)."""
    out = np.empty(len(inputs), dtype=np.int64)
    for lo in range(0, len(inputs), chunk):
        logits = nn.forward(params, inputs[lo : lo + chunk])
        out[lo : lo + chunk] = np.argmax(logits, axis=1)
    return out


def top1_accuracy(params, inputs, labels) -> float:
    if len(labels) == 0:
        return math.nan
    return float(np.mean(predict(params, inputs) == labels))


def _train_task(payload):
    state, global_flat, epochs, flcfg, data, arch = payload
    flat, n, loss = local_train(state, global_flat, epochs, flcfg, data, arch)
    return state, flat, n, loss


def run_federated(clients: list, arch, flcfg: FLConfig, master_seed: int):
    """Full federated schedule over the given plane-clients.

    Deterministic under (clients, arch, flcfg, master_seed): client order is
    ascending plane_id, each client owns named RNG substreams, and FedAvg
    sums in a fixed order.
    """
    flcfg.validate()
    clients = sorted(clients, key=lambda c: c.plane_id)
    usable = [c for c in clients if c.n_train > 0]
    if not usable:
        raise ValueError("run_federated needs at least one nonempty train shard")
    plane_ids = [c.plane_id for c in usable]
    if len(set(plane_ids)) != len(plane_ids):
        raise ValueError(f"duplicate plane ids among clients: {plane_ids}")
    kind_id = MODEL_KIND_IDS[arch.kind]
    init_seed = int(
        substream(master_seed, "init", kind_id, flcfg.seed).integers(0, 2**63)
    )
    global_params = nn.init(arch, init_seed)
    states = {
        c.plane_id: _make_client_state(c.plane_id, arch, master_seed, kind_id, flcfg.seed)
        for c in usable
    }

    history = TrainHistory()
    n_workers = min(flcfg.n_workers, len(usable))
    pool = None
    if n_workers > 1:
        from . import kernels

        kernels.warm_up()  # compile before forking so children inherit the JIT
        pool = multiprocessing.get_context("fork").Pool(n_workers)
    try:
        for r in range(flcfg.rounds):
            payloads = [
                (states[c.plane_id], global_params.flat, flcfg.local_epochs, flcfg, c, arch)
                for c in usable
            ]
            if pool is not None:
                # chunksize 1 so unequal shard sizes balance across workers
                results = pool.map(_train_task, payloads, chunksize=1)
            else:
                results = [_train_task(p) for p in payloads]

            updates = []
            losses = {}
            for client, (state, flat, n, loss) in zip(usable, results):
                states[client.plane_id] = state
                state.flat = flat
                if not math.isfinite(loss):
                    err = DivergenceError(
                        f"client {client.plane_id} diverged at round {r}",
                        plane_id=client.plane_id,
                        round_index=r,
                    )
                    err.history = history
                    raise err
                updates.append((flat, n))
                losses[client.plane_id] = loss

            global_params = nn.ModelParams(arch, fedavg(updates))
            top1 = {
                c.plane_id: top1_accuracy(global_params, c.x_test, c.y_test)
                for c in usable
            }
            history.records.append(
                RoundRecord(
                    round_index=r,
                    client_loss=losses,
                    client_top1=top1,
                    global_hash=f"{fnv1a_64(global_params.flat.tobytes()):016x}",
                )
            )
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return global_params, history


def train_centralized(data: ClientData, arch, flcfg: FLConfig, master_seed: int):
    """One continuous run of rounds*epochs epochs on a single data pool.

    Uses the same init and shuffle substreams as a single-client federated
    run with the same plane_id, so the two must agree exactly.
    """
    flcfg.validate()
    kind_id = MODEL_KIND_IDS[arch.kind]
    init_seed = int(
        substream(master_seed, "init", kind_id, flcfg.seed).integers(0, 2**63)
    )
    params = nn.init(arch, init_seed)
    state = _make_client_state(data.plane_id, arch, master_seed, kind_id, flcfg.seed)
    state.flat = params.flat.copy()
    loss = _run_epochs(state, data, arch, flcfg, flcfg.rounds * flcfg.local_epochs)
    if not math.isfinite(loss):
        raise DivergenceError("centralized training diverged", data.plane_id, None)
    return nn.ModelParams(arch, state.flat)
