import math

import numpy as np
import pytest

from leobeam import federated, nn
from leobeam.errors import ConfigError, DivergenceError


def make_data(rng, n=600, plane=0, kind="mlp"):
    if kind == "mlp":
        x = np.ascontiguousarray(rng.uniform(-1, 1, (n, 8)))
        x_test = x[: n // 4]
    else:
        arch = nn.ArchGNN()
        raw = rng.uniform(-1, 1, (n, 16, 4))
        x = np.ascontiguousarray(np.matmul(arch.a_hat, raw))
        x_test = np.ascontiguousarray(raw[: n // 4])
    y = rng.integers(0, 16, n).astype(np.int64)
    return federated.ClientData(plane, x, y, x_test, y[: n // 4])


class TestFLConfig:
    def test_validation(self):
        federated.FLConfig().validate()
        with pytest.raises(ConfigError):
            federated.FLConfig(rounds=0).validate()
        with pytest.raises(ConfigError):
            federated.FLConfig(local_epochs=0).validate()
        with pytest.raises(ConfigError):
            federated.FLConfig(batch_size=0).validate()
        with pytest.raises(ConfigError):
            federated.FLConfig(learning_rate=-1e-3).validate()


class TestLocalTrain:
    def test_zero_epochs_is_noop(self, rng):
        data = make_data(rng)
        arch = nn.ArchMLP()
        state = federated._make_client_state(0, arch, 1, 0, 0)
        global_flat = nn.init(arch, 1).flat
        flat, n, loss = federated.local_train(
            state, global_flat, 0, federated.FLConfig(n_workers=0), data, arch
        )
        assert np.array_equal(flat, global_flat)
        assert n == data.n_train
        assert math.isnan(loss)

    def test_zero_lr_keeps_params(self, rng):
        data = make_data(rng)
        arch = nn.ArchMLP()
        state = federated._make_client_state(0, arch, 1, 0, 0)
        global_flat = nn.init(arch, 1).flat
        flcfg = federated.FLConfig(learning_rate=0.0, n_workers=0)
        flat, _, loss = federated.local_train(state, global_flat, 5, flcfg, data, arch)
        assert np.array_equal(flat, global_flat)
        assert math.isfinite(loss)

    def test_loss_decreases_on_500_sample_shard(self, rng):
        data = make_data(rng, n=500)
        arch = nn.ArchMLP()
        state = federated._make_client_state(0, arch, 1, 0, 0)
        global_flat = nn.init(arch, 1).flat
        flcfg = federated.FLConfig(n_workers=0)
        _, _, first_loss = federated.local_train(state, global_flat.copy(), 1, flcfg, data, arch)
        state2 = federated._make_client_state(0, arch, 1, 0, 0)
        _, _, final_loss = federated.local_train(state2, global_flat, 200, flcfg, data, arch)
        assert final_loss < first_loss

    def test_empty_shard_rejected(self, rng):
        data = make_data(rng, n=4)
        data = federated.ClientData(0, data.x_train[:0], data.y_train[:0],
                                    data.x_test, data.y_test)
        arch = nn.ArchMLP()
        state = federated._make_client_state(0, arch, 1, 0, 0)
        with pytest.raises(ValueError, match="empty"):
            federated.local_train(state, nn.init(arch, 1).flat, 1,
                                  federated.FLConfig(n_workers=0), data, arch)


class TestFedAvg:
    def test_idempotent_on_identical_params(self, rng):
        p = rng.standard_normal(50)
        out = federated.fedavg([(p.copy(), 3), (p.copy(), 9), (p.copy(), 1)])
        assert np.allclose(out, p, atol=1e-15)

    def test_hand_weighted_mean(self):
        out = federated.fedavg([(np.array([1.0, 3.0]), 1), (np.array([3.0, 5.0]), 3)])
        assert np.array_equal(out, np.array([2.5, 4.5]))

    def test_equal_weights_is_plain_mean_and_order_stable(self, rng):
        parts = [rng.standard_normal(64) for _ in range(5)]
        out = federated.fedavg([(p, 7) for p in parts])
        assert np.allclose(out, np.mean(parts, axis=0), atol=1e-12)
        shuffled = [parts[i] for i in (3, 0, 4, 1, 2)]
        out2 = federated.fedavg([(p, 7) for p in shuffled])
        assert np.allclose(out, out2, atol=1e-12)

    def test_scale_equivariance(self, rng):
        parts = [(rng.standard_normal(16), n) for n in (2, 5, 9)]
        base = federated.fedavg(parts)
        scaled = federated.fedavg([(3.5 * p, n) for p, n in parts])
        assert np.allclose(scaled, 3.5 * base, rtol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            federated.fedavg([(np.zeros(3), 1), (np.zeros(4), 1)])

    def test_empty_and_zero_weight(self):
        with pytest.raises(ValueError):
            federated.fedavg([])
        with pytest.raises(ValueError):
            federated.fedavg([(np.zeros(3), 0)])


class TestRunFederated:
    def test_single_client_equals_centralized(self, rng):
        data = make_data(rng, n=400)
        arch = nn.ArchMLP()
        flcfg = federated.FLConfig(rounds=3, local_epochs=4, batch_size=64,
                                   learning_rate=1e-3, n_workers=0)
        fed, _ = federated.run_federated([data], arch, flcfg, master_seed=77)
        cen = federated.train_centralized(data, arch, flcfg, master_seed=77)
        assert np.max(np.abs(fed.flat - cen.flat)) <= 1e-10

    def test_single_client_equals_centralized_gnn(self, rng):
        data = make_data(rng, n=300, kind="gnn")
        arch = nn.ArchGNN()
        flcfg = federated.FLConfig(rounds=2, local_epochs=3, batch_size=64,
                                   learning_rate=1e-3, n_workers=0)
        fed, _ = federated.run_federated([data], arch, flcfg, master_seed=8)
        cen = federated.train_centralized(data, arch, flcfg, master_seed=8)
        assert np.max(np.abs(fed.flat - cen.flat)) <= 1e-10

    def test_average_of_equal_locals_is_the_local(self, rng):
        # Two manual clients sharing one substream and shard: their local
        # results coincide, so the aggregate equals either one.
        data = make_data(rng, n=200)
        arch = nn.ArchMLP()
        flcfg = federated.FLConfig(n_workers=0)
        global_flat = nn.init(arch, 4).flat
        updates = []
        for _ in range(2):
            state = federated._make_client_state(0, arch, 1, 0, 0)
            flat, n, _ = federated.local_train(state, global_flat, 3, flcfg, data, arch)
            updates.append((flat, n))
        assert np.array_equal(updates[0][0], updates[1][0])
        agg = federated.fedavg(updates)
        assert np.allclose(agg, updates[0][0], atol=1e-15)

    def test_round_determinism_and_history(self, rng):
        clients = [make_data(rng, n=300, plane=0), make_data(rng, n=200, plane=1)]
        arch = nn.ArchMLP()
        flcfg = federated.FLConfig(rounds=3, local_epochs=2, batch_size=64,
                                   learning_rate=1e-3, n_workers=0)
        p1, h1 = federated.run_federated(clients, arch, flcfg, master_seed=9)
        p2, h2 = federated.run_federated(clients, arch, flcfg, master_seed=9)
        assert np.array_equal(p1.flat, p2.flat)
        assert [r.global_hash for r in h1.records] == [r.global_hash for r in h2.records]
        assert len(h1.records) == 3
        rows = h1.csv_rows()
        assert rows[0] == "round,client,local_loss,local_top1"
        assert len(rows) == 1 + 3 * 2

    def test_parallel_matches_serial(self, rng):
        clients = [make_data(rng, n=300, plane=0), make_data(rng, n=250, plane=1),
                   make_data(rng, n=200, plane=2)]
        arch = nn.ArchMLP()
        serial = federated.FLConfig(rounds=2, local_epochs=2, batch_size=64,
                                    learning_rate=1e-3, n_workers=0)
        parallel = federated.FLConfig(rounds=2, local_epochs=2, batch_size=64,
                                      learning_rate=1e-3, n_workers=2)
        ps, _ = federated.run_federated(clients, arch, serial, master_seed=3)
        pp, _ = federated.run_federated(clients, arch, parallel, master_seed=3)
        assert np.array_equal(ps.flat, pp.flat)

    def test_divergence_reported_with_context(self, rng):
        clients = [make_data(rng, n=200, plane=0), make_data(rng, n=200, plane=4)]
        arch = nn.ArchMLP()
        flcfg = federated.FLConfig(rounds=2, local_epochs=3, batch_size=32,
                                   learning_rate=1e18, n_workers=0)
        with pytest.raises(DivergenceError) as err:
            federated.run_federated(clients, arch, flcfg, master_seed=1)
        assert err.value.round_index is not None
        assert err.value.plane_id in (0, 4)
        assert hasattr(err.value, "history")

    def test_needs_nonempty_shard(self, rng):
        data = make_data(rng, n=100)
        empty = federated.ClientData(1, data.x_train[:0], data.y_train[:0],
                                     data.x_test, data.y_test)
        with pytest.raises(ValueError):
            federated.run_federated([empty], nn.ArchMLP(),
                                    federated.FLConfig(n_workers=0), 1)

    def test_client_isolation_requires_unique_planes(self, rng):
        a = make_data(rng, n=100, plane=0)
        b = make_data(rng, n=100, plane=0)
        with pytest.raises(ValueError, match="duplicate"):
            federated.run_federated([a, b], nn.ArchMLP(),
                                    federated.FLConfig(n_workers=0), 1)

    def test_lr_zero_flat_history(self, rng):
        clients = [make_data(rng, n=200, plane=0)]
        flcfg = federated.FLConfig(rounds=3, local_epochs=2, batch_size=64,
                                   learning_rate=0.0, n_workers=0)
        _, hist = federated.run_federated(clients, nn.ArchMLP(), flcfg, master_seed=2)
        losses = [r.client_loss[0] for r in hist.records]
        assert losses[0] == pytest.approx(losses[-1], rel=1e-12)
