"""Minimal neural-network engine: dense and graph-convolution forward passes,
softmax cross-entropy, manual backpropagation, Adam, and gradient checking.

Two architectures share one flat-parameter convention so federated averaging
can treat every model as a single vector:

* MLP: affine-rectifier stack over the 8 link features, one logit per beam.
* GNN: beams are graph nodes on the codebook grid; two graph convolutions
  H <- relu(A_hat @ H @ W) followed by a shared per-node affine readout.

Everything here is float64 and deterministic; the compiled training kernels
in `kernels.py` reproduce `loss_and_grad` to floating-point noise and are
tested against it.
"""

import math
from dataclasses import dataclass

import numpy as np


def relu(x):
    return np.maximum(x, 0.0)


def grid_adjacency(n_az: int, n_el: int) -> np.ndarray:
    """4-connectivity of an (az, el) index grid, beam b = i_el * n_az + i_az."""
    nb = n_az * n_el
    adj = np.zeros((nb, nb), dtype=bool)
    for i_el in range(n_el):
        for i_az in range(n_az):
            b = i_el * n_az + i_az
            if i_az + 1 < n_az:
                adj[b, b + 1] = adj[b + 1, b] = True
            if i_el + 1 < n_el:
                adj[b, b + n_az] = adj[b + n_az, b] = True
    return adj


def normalized_adjacency(adj: np.ndarray) -> np.ndarray:
    a_hat = adj.astype(float) + np.eye(adj.shape[0])
    d_inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return a_hat * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


@dataclass
class ArchMLP:
    input_dim: int = 8
    hidden: tuple = (64, 64)
    n_beams: int = 16

    kind = "mlp"

    @property
    def layer_shapes(self):
        dims = [self.input_dim, *self.hidden, self.n_beams]
        shapes = []
        for i in range(len(dims) - 1):
            shapes.append((dims[i], dims[i + 1]))  # weight
            shapes.append((dims[i + 1],))          # bias
        return shapes

    def descriptor(self) -> str:
        hid = ",".join(str(h) for h in self.hidden)
        return f"kind=mlp;in={self.input_dim};hidden={hid};out={self.n_beams}"


@dataclass
class ArchGNN:
    node_in: int = 4
    hidden: tuple = (32, 32)
    n_beams: int = 16
    grid_az: int = 4
    grid_el: int = 4

    kind = "gnn"

    def __post_init__(self):
        if self.grid_az * self.grid_el != self.n_beams:
            raise ValueError(
                f"beam grid {self.grid_az}x{self.grid_el} != n_beams {self.n_beams}"
            )
        if len(self.hidden) != 2:
            raise ValueError("gnn arch expects exactly two conv widths")
        self._a_hat = None

    @property
    def a_hat(self) -> np.ndarray:
        if self._a_hat is None:
            self._a_hat = normalized_adjacency(grid_adjacency(self.grid_az, self.grid_el))
        return self._a_hat

    @property
    def layer_shapes(self):
        return [
            (self.node_in, self.hidden[0]),   # conv 1 weight (no bias)
            (self.hidden[0], self.hidden[1]),  # conv 2 weight (no bias)
            (self.hidden[1],),                 # readout weight
            (1,),                              # readout bias
        ]

    def descriptor(self) -> str:
        hid = ",".join(str(h) for h in self.hidden)
        return (
            f"kind=gnn;node_in={self.node_in};hidden={hid};out={self.n_beams};"
            f"grid={self.grid_az}x{self.grid_el}"
        )


def arch_from_descriptor(desc: str):
    fields = dict(part.split("=", 1) for part in desc.strip().split(";"))
    hidden = tuple(int(x) for x in fields["hidden"].split(","))
    if fields["kind"] == "mlp":
        return ArchMLP(int(fields["in"]), hidden, int(fields["out"]))
    if fields["kind"] == "gnn":
        gaz, gel = fields["grid"].split("x")
        return ArchGNN(int(fields["node_in"]), hidden, int(fields["out"]), int(gaz), int(gel))
    raise ValueError(f"unknown arch kind {fields.get('kind')!r}")


@dataclass
class ModelParams:
    arch: object
    flat: np.ndarray

    @property
    def param_count(self) -> int:
        return len(self.flat)

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, self.flat.copy())


def param_count(arch) -> int:
    return sum(int(np.prod(s)) for s in arch.layer_shapes)


def unflatten(arch, flat: np.ndarray):
    """Views of the flat vector shaped per layer (no copies)."""
    out = []
    pos = 0
    for shape in arch.layer_shapes:
        size = int(np.prod(shape))
        out.append(flat[pos : pos + size].reshape(shape))
        pos += size
    if pos != len(flat):
        raise ValueError(f"flat length {len(flat)} != arch size {pos}")
    return out


def flatten(arch, layers) -> np.ndarray:
    return np.concatenate([np.asarray(a).ravel() for a in layers])


def init(arch, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, reproducible under the seed."""
    rng = np.random.default_rng(seed)
    layers = []
    for shape in arch.layer_shapes:
        if len(shape) == 2:
            fan_in, fan_out = shape
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            layers.append(rng.uniform(-bound, bound, shape))
        elif shape == (arch.hidden[-1],) and arch.kind == "gnn":
            # GNN readout weight: Glorot with fan_out 1.
            bound = math.sqrt(6.0 / (shape[0] + 1))
            layers.append(rng.uniform(-bound, bound, shape))
        else:
            layers.append(np.zeros(shape))
    return ModelParams(arch, flatten(arch, layers))


def forward(params: ModelParams, inputs: np.ndarray) -> np.ndarray:
    """Batch logits; MLP takes (B, input_dim), GNN takes (B, n_beams, node_in)."""
    arch = params.arch
    layers = unflatten(arch, params.flat)
    if arch.kind == "mlp":
        if inputs.ndim != 2 or inputs.shape[1] != arch.input_dim:
            raise ValueError(
                f"mlp layer 1 expects (batch, {arch.input_dim}), got {inputs.shape}"
            )
        h = inputs
        n_layers = len(arch.hidden) + 1
        for i in range(n_layers):
            w, b = layers[2 * i], layers[2 * i + 1]
            h = h @ w + b
            if i < n_layers - 1:
                h = relu(h)
        return h
    # GNN
    if inputs.ndim != 3 or inputs.shape[1] != arch.n_beams or inputs.shape[2] != arch.node_in:
        raise ValueError(
            f"gnn conv 1 expects (batch, {arch.n_beams}, {arch.node_in}), got {inputs.shape}"
        )
    w1, w2, w_read, b_read = layers
    a_hat = arch.a_hat
    x_agg = np.matmul(a_hat, inputs)
    h1 = relu(x_agg @ w1)
    h2 = relu(np.matmul(a_hat, h1 @ w2))
    return h2 @ w_read + b_read[0]


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """(mean loss, dloss/dlogits) with the stable shifted softmax."""
    if len(logits) == 0:
        raise ValueError("empty batch")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    n = len(labels)
    idx = np.arange(n)
    loss = float(-np.mean(z[idx, labels] - np.log(e.sum(axis=1))))
    d = p
    d[idx, labels] -= 1.0
    d /= n
    return loss, d


def loss_and_grad(params: ModelParams, inputs: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy and the gradient in canonical flat order."""
    arch = params.arch
    layers = unflatten(arch, params.flat)
    labels = np.asarray(labels)
    if np.any(labels >= arch.n_beams) or np.any(labels < 0):
        raise ValueError("label out of range")

    if arch.kind == "mlp":
        n_layers = len(arch.hidden) + 1
        acts = [inputs]
        h = inputs
        for i in range(n_layers):
            w, b = layers[2 * i], layers[2 * i + 1]
            h = h @ w + b
            if i < n_layers - 1:
                h = relu(h)
            acts.append(h)
        logits = acts[-1]
        if not np.all(np.isfinite(logits)):
            raise FloatingPointError("non-finite forward activations")
        loss, d = softmax_cross_entropy(logits, labels)
        grads = [None] * (2 * n_layers)
        for i in reversed(range(n_layers)):
            w = layers[2 * i]
            a_prev = acts[i]
            grads[2 * i] = a_prev.T @ d
            grads[2 * i + 1] = d.sum(axis=0)
            if i > 0:
                d = (d @ w.T) * (acts[i] > 0)
        return loss, flatten(arch, grads)

    w1, w2, w_read, b_read = layers
    a_hat = arch.a_hat
    x_agg = np.matmul(a_hat, inputs)              # (B, N, F)
    h1 = relu(x_agg @ w1)                          # (B, N, C1)
    m = h1 @ w2                                    # (B, N, C2)
    h2 = relu(np.matmul(a_hat, m))                 # (B, N, C2)
    logits = h2 @ w_read + b_read[0]               # (B, N)
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite forward activations")
    loss, d = softmax_cross_entropy(logits, labels)

    b, n_nodes, c1 = h1.shape
    c2 = w2.shape[1]
    g_wread = np.einsum("bn,bnc->c", d, h2)
    g_bread = np.array([d.sum()])
    dh2 = d[:, :, None] * w_read[None, None, :]
    dz2 = dh2 * (h2 > 0)
    dm = np.matmul(a_hat, dz2)                     # A_hat is symmetric
    g_w2 = h1.reshape(b * n_nodes, c1).T @ dm.reshape(b * n_nodes, c2)
    dh1 = (dm @ w2.T) * (h1 > 0)
    g_w1 = x_agg.reshape(b * n_nodes, -1).T @ dh1.reshape(b * n_nodes, c1)
    return loss, flatten(arch, [g_w1, g_w2, g_wread, g_bread])


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(
    flat: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One bias-corrected Adam update; mutates ``flat`` and ``state``."""
    if grad.shape != flat.shape:
        raise ValueError(f"grad shape {grad.shape} != params {flat.shape}")
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1**state.t)
    v_hat = state.v / (1.0 - beta2**state.t)
    flat -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return flat, state


def grad_check(
    arch,
    seed: int,
    inputs: np.ndarray,
    labels: np.ndarray,
    n_coords: int = 200,
    step: float = 1e-5,
    corrupt_coord: int = None,
):
    """Max relative error of the analytic gradient vs central differences.

    Checks a seeded random coordinate subset. ``corrupt_coord`` doubles one
    analytic component (and forces it into the subset) as a negative control.
    """
    params = init(arch, seed)
    _, grad = loss_and_grad(params, inputs, labels)
    if corrupt_coord is not None:
        grad = grad.copy()
        grad[corrupt_coord] *= 2.0
    rng = np.random.default_rng(seed + 1)
    n = len(params.flat)
    coords = rng.permutation(n)[: min(n_coords, n)]
    if corrupt_coord is not None and corrupt_coord not in coords:
        coords = np.append(coords[:-1], corrupt_coord)
    worst = 0.0
    flat = params.flat
    for c in coords:
        orig = flat[c]
        flat[c] = orig + step
        lo_plus = loss_and_grad(params, inputs, labels)[0]
        flat[c] = orig - step
        lo_minus = loss_and_grad(params, inputs, labels)[0]
        flat[c] = orig
        numeric = (lo_plus - lo_minus) / (2.0 * step)
        err = abs(numeric - grad[c]) / (abs(numeric) + abs(grad[c]) + 1e-8)
        worst = max(worst, err)
    return worst


CHECKPOINT_MAGIC = b"BFL1"
_DESC_BYTES = 120
HEADER_BYTES = 4 + _DESC_BYTES + 8


def save_checkpoint(params: ModelParams, path: str):
    """Fixed-width header (magic, padded descriptor, u64 count) + float32 params."""
    desc = params.arch.descriptor().encode("ascii")
    if len(desc) > _DESC_BYTES:
        raise ValueError(f"descriptor too long ({len(desc)} > {_DESC_BYTES})")
    header = CHECKPOINT_MAGIC + desc.ljust(_DESC_BYTES, b"\x00")
    header += np.uint64(params.param_count).tobytes()  # little-endian on x86
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(params.flat.astype("<f4").tobytes())


def load_checkpoint(path: str) -> ModelParams:
    from .errors import DataFormatError

    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER_BYTES or blob[:4] != CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path}: not a checkpoint (bad magic or truncated)")
    desc = blob[4 : 4 + _DESC_BYTES].rstrip(b"\x00").decode("ascii")
    count = int(np.frombuffer(blob[4 + _DESC_BYTES : HEADER_BYTES], dtype="<u8")[0])
    body = np.frombuffer(blob[HEADER_BYTES:], dtype="<f4")
    if len(body) != count:
        raise DataFormatError(f"{path}: expected {count} params, found {len(body)}")
    arch = arch_from_descriptor(desc)
    if count != param_count(arch):
        raise DataFormatError(f"{path}: param count {count} != arch {param_count(arch)}")
    return ModelParams(arch, body.astype(np.float64))
