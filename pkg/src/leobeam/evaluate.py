"""Top-k metrics, elevation-binned accuracy, beam-switching analysis, reports.

All metrics run on the temporal test split. Switching is defined over
link-track transitions: consecutive test snapshots where the same
(UE, satellite) pair stayed visible; the rate in an elevation bin is the
fraction of its transitions whose beam changed, attributed to the earlier
snapshot's elevation. Oracle switching uses the stored labels only, so it is
independent of any model.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import dataset as dataset_mod
from . import nn


def topk_accuracy(logits: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Fraction of rows whose label ranks in the k best logits (stable ties)."""
    if len(logits) == 0:
        raise ValueError("top-k accuracy undefined on empty input")
    if not 1 <= k <= logits.shape[1]:
        raise ValueError(f"k={k} outside [1, {logits.shape[1]}]")
    order = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    return float(np.mean(np.any(order == np.asarray(labels)[:, None], axis=1)))


def batched_logits(params: nn.ModelParams, inputs: np.ndarray, chunk: int = 8192):
    out = []
    for lo in range(0, len(inputs), chunk):
        out.append(nn.forward(params, inputs[lo : lo + chunk]))
    return np.concatenate(out, axis=0)


def model_inputs(ds, cfg, arch) -> np.ndarray:
    """Whole-dataset model inputs: link features (MLP) or node features (GNN)."""
    if arch.kind == "mlp":
        return ds.features
    return dataset_mod.gnn_node_features(ds, cfg)


def per_client_accuracy(params, inputs, labels, shards):
    """Top-1 on each shard's test split plus the unweighted mean.

    Returns (per_plane dict, mean, skipped plane list).
    """
    per_plane = {}
    skipped = []
    for shard in shards:
        if shard.n_test == 0:
            skipped.append(shard.plane_id)
            continue
        idx = shard.test_idx
        logits = batched_logits(params, inputs[idx])
        per_plane[shard.plane_id] = topk_accuracy(logits, labels[idx], 1)
    mean = float(np.mean(list(per_plane.values()))) if per_plane else math.nan
    return per_plane, mean, skipped


def elevation_bins(theta_min_deg: float, bin_width_deg: float):
    """[theta_min, 90] split into width-w bins; the last bin truncates at 90."""
    edges = [theta_min_deg]
    while edges[-1] < 90.0 - 1e-9:
        edges.append(min(edges[-1] + bin_width_deg, 90.0))
    return [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]


def _bin_index(elev, theta_min_deg, bin_width_deg, n_bins):
    idx = np.floor((np.asarray(elev) - theta_min_deg) / bin_width_deg).astype(int)
    return np.clip(idx, 0, n_bins - 1)


def elevation_binned_accuracy(preds, labels, elevations, theta_min_deg, bin_width_deg):
    """Per-bin top-1: list of (lo, hi, accuracy-or-None, n)."""
    bins = elevation_bins(theta_min_deg, bin_width_deg)
    idx = _bin_index(elevations, theta_min_deg, bin_width_deg, len(bins))
    out = []
    hits = np.asarray(preds) == np.asarray(labels)
    for b, (lo, hi) in enumerate(bins):
        sel = idx == b
        n = int(sel.sum())
        acc = float(hits[sel].mean()) if n else None
        out.append((lo, hi, acc, n))
    return out


def track_transitions(ue_id, sat_id, snapshot):
    """Indices (i, j) of consecutive-snapshot pairs on the same link track."""
    order = np.lexsort((snapshot, sat_id, ue_id))
    u, s, t = ue_id[order], sat_id[order], snapshot[order]
    same = (u[1:] == u[:-1]) & (s[1:] == s[:-1]) & (t[1:] == t[:-1] + 1)
    return order[:-1][same], order[1:][same]


def switching_rate(beams, ue_id, sat_id, snapshot, elevations,
                   theta_min_deg, bin_width_deg):
    """Per-bin fraction of track transitions whose beam changed.

    Bins without transitions report None (absent, not zero).
    """
    i, j = track_transitions(ue_id, sat_id, snapshot)
    bins = elevation_bins(theta_min_deg, bin_width_deg)
    out = []
    if len(i) == 0:
        return [(lo, hi, None, 0) for lo, hi in bins]
    changed = np.asarray(beams)[i] != np.asarray(beams)[j]
    bin_idx = _bin_index(elevations[i], theta_min_deg, bin_width_deg, len(bins))
    for b, (lo, hi) in enumerate(bins):
        sel = bin_idx == b
        n = int(sel.sum())
        rate = float(changed[sel].mean()) if n else None
        out.append((lo, hi, rate, n))
    return out


def spearman(x, y) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    def ranks(v):
        v = np.asarray(v, dtype=float)
        order = np.argsort(v, kind="stable")
        r = np.empty(len(v))
        r[order] = np.arange(1, len(v) + 1)
        for val in np.unique(v):
            sel = v == val
            if sel.sum() > 1:
                r[sel] = r[sel].mean()
        return r

    rx, ry = ranks(x), ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float((rx**2).sum() * (ry**2).sum()))
    if denom == 0.0:
        return 0.0
    return float((rx * ry).sum() / denom)


@dataclass
class MetricsReport:
    top1: float
    top3: float
    per_client_top1: dict
    mean_client_top1: float
    elevation_bins: list          # (lo, hi, top1 | None, n)
    switching: list               # (lo, hi, model_rate | None, oracle_rate | None, n)
    train_time_s: float
    param_bytes: int
    n_test: int
    skipped_planes: list = field(default_factory=list)


def build_report(params: nn.ModelParams, ds, shards, cfg,
                 train_time_s: float = math.nan,
                 bin_width_deg: float = 10.0) -> MetricsReport:
    """All Table-style metrics for one trained model on the temporal test split."""
    if params.arch.n_beams != ds.n_beams:
        raise ValueError(
            f"model predicts {params.arch.n_beams} beams, dataset has {ds.n_beams}"
        )
    inputs = model_inputs(ds, cfg, params.arch)
    test_idx = np.concatenate([s.test_idx for s in shards]) if shards else np.array([], int)
    test_idx = np.sort(test_idx)
    if len(test_idx) == 0:
        raise ValueError("no test samples")
    logits = batched_logits(params, inputs[test_idx])
    labels = ds.label[test_idx]
    preds = np.argmax(logits, axis=1)

    per_plane, mean_client, skipped = per_client_accuracy(params, inputs, ds.label, shards)
    elev = ds.elevation_deg[test_idx]
    acc_bins = elevation_binned_accuracy(
        preds, labels, elev, cfg.theta_min_deg, bin_width_deg
    )
    model_sw = switching_rate(
        preds, ds.ue_id[test_idx], ds.sat_id[test_idx], ds.snapshot[test_idx],
        elev, cfg.theta_min_deg, bin_width_deg,
    )
    oracle_sw = switching_rate(
        labels, ds.ue_id[test_idx], ds.sat_id[test_idx], ds.snapshot[test_idx],
        elev, cfg.theta_min_deg, bin_width_deg,
    )
    switching = [
        (lo, hi, m_rate, o_rate, n)
        for (lo, hi, m_rate, n), (_, _, o_rate, _) in zip(model_sw, oracle_sw)
    ]
    return MetricsReport(
        top1=topk_accuracy(logits, labels, 1),
        top3=topk_accuracy(logits, labels, min(3, ds.n_beams)),
        per_client_top1=per_plane,
        mean_client_top1=mean_client,
        elevation_bins=acc_bins,
        switching=switching,
        train_time_s=train_time_s,
        param_bytes=4 * params.param_count,
        n_test=len(test_idx),
        skipped_planes=skipped,
    )


def _fmt(v):
    if v is None:
        return ""
    return repr(float(v))


def write_reports(report: MetricsReport, out_dir):
    """metrics.csv / elevation_accuracy.csv / switching.csv (+ timings.csv).

    Wall-clock timing is kept out of metrics.csv so the three report files
    are byte-reproducible under a fixed config and seed.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    rows = ["metric,value"]
    rows.append(f"top1,{_fmt(report.top1)}")
    rows.append(f"top3,{_fmt(report.top3)}")
    rows.append(f"mean_client_top1,{_fmt(report.mean_client_top1)}")
    for plane in sorted(report.per_client_top1):
        rows.append(f"per_client_top1_plane{plane},{_fmt(report.per_client_top1[plane])}")
    rows.append(f"param_bytes,{report.param_bytes}")
    rows.append(f"n_test,{report.n_test}")
    with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")

    rows = ["bin_lo,bin_hi,top1,n"]
    for lo, hi, acc, n in report.elevation_bins:
        rows.append(f"{_fmt(lo)},{_fmt(hi)},{_fmt(acc)},{n}")
    with open(os.path.join(out_dir, "elevation_accuracy.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")

    rows = ["bin_lo,bin_hi,model_rate,oracle_rate,n"]
    for lo, hi, m_rate, o_rate, n in report.switching:
        rows.append(f"{_fmt(lo)},{_fmt(hi)},{_fmt(m_rate)},{_fmt(o_rate)},{n}")
    with open(os.path.join(out_dir, "switching.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")

    with open(os.path.join(out_dir, "timings.csv"), "w", encoding="utf-8") as fh:
        fh.write("metric,value\n")
        fh.write(f"train_time_s,{_fmt(report.train_time_s)}\n")


COMPARISON_METRICS = (
    "Top-1 Accuracy",
    "Top-3 Accuracy",
    "Top-1 Mean Accuracy across clients",
    "Training Time",
    "Model Size",
)


def comparison_rows(report_mlp: MetricsReport, report_gnn: MetricsReport):
    """Side-by-side comparison rows (fractions, seconds, bytes)."""
    def values(rep):
        return [
            rep.top1,
            rep.top3,
            rep.mean_client_top1,
            rep.train_time_s,
            rep.param_bytes,
        ]

    rows = ["metric,mlp,gnn"]
    for name, a, b in zip(COMPARISON_METRICS, values(report_mlp), values(report_gnn)):
        rows.append(f"{name},{_fmt(a)},{_fmt(b)}")
    return rows
