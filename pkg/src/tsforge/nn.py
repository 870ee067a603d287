"""LSTM and dense layers composed into the generator and critic networks.

Both networks are a single LSTM block followed by a time-shared dense
projection. The generator feeds the same noise vector into every
timestep and squashes the per-step projection with tanh, so its output
lives in (-1, 1) to match min-max scaled training windows. The critic
projects each hidden state to one score and averages the scores over
time; there is deliberately no sigmoid, so scores are unbounded.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class ArchitectureSpec:
    """Widths of the networks: noise length, sequence length, data
    features per timestep and LSTM hidden units."""

    noise_len: int = 25
    seq_len: int = 50
    features: int = 1
    lstm_units: int = 50

    def __post_init__(self):
        for field in ("noise_len", "seq_len", "features", "lstm_units"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")


@dataclass
class DenseParams:
    """Weight matrix [in, out] and bias [out] of one dense layer."""

    W: Tensor
    b: Tensor


@dataclass
class LstmParams:
    """Gate weights over the concatenated [h_prev, x_t] and gate biases."""

    W_i: Tensor
    W_f: Tensor
    W_c: Tensor
    W_o: Tensor
    b_i: Tensor
    b_f: Tensor
    b_c: Tensor
    b_o: Tensor

    @property
    def units(self) -> int:
        return self.W_i.shape[1]


class ParamSet:
    """Ordered, named collection of trainable tensors for one network.

    Carries the architecture it was initialized for, so a generator
    knows its own output length.
    """

    def __init__(self, kind: str, params: dict[str, Tensor],
                 arch: ArchitectureSpec | None = None):
        if kind not in ("generator", "critic"):
            raise ValueError(f"unknown network kind {kind!r}")
        if len(set(params)) != len(params):
            raise ValueError("parameter names must be unique")
        self.kind = kind
        self.arch = arch
        self._params = dict(params)

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def count(self) -> int:
        """Total number of scalar parameters."""
        return sum(t.size for t in self._params.values())

    def copy(self) -> "ParamSet":
        return ParamSet(self.kind, {k: Tensor(v.data.copy()) for k, v in self.items()},
                        arch=self.arch)

    @contextlib.contextmanager
    def frozen(self):
        """Treat every parameter as a constant inside the block: ops
        recorded there carry no gradient edge into this network."""
        state = {k: t.requires_grad for k, t in self.items()}
        for t in self._params.values():
            t.requires_grad = False
        try:
            yield self
        finally:
            for k, t in self.items():
                t.requires_grad = state[k]

    def lstm(self) -> LstmParams:
        return LstmParams(*(self[f"lstm.{n}"] for n in
                            ("W_i", "W_f", "W_c", "W_o", "b_i", "b_f", "b_c", "b_o")))

    def proj(self) -> DenseParams:
        return DenseParams(self["proj.W"], self["proj.b"])


def lstm_param_count(units: int, features: int) -> int:
    """Gate parameters of one LSTM block: 4 * ((units+features)*units + units)."""
    return 4 * ((units + features) * units + units)


def init_params(spec: ArchitectureSpec, kind: str, seed: int) -> ParamSet:
    """Glorot-uniform weights, zero biases except the forget bias at 1.

    Deterministic for a given seed; the generator's LSTM consumes the
    noise vector as its per-step features.
    """
    features = spec.noise_len if kind == "generator" else spec.features
    units = spec.lstm_units
    rng = np.random.Generator(np.random.Philox(seed))

    def glorot(rows: int, cols: int) -> Tensor:
        limit = np.sqrt(6.0 / (rows + cols))
        return Tensor(rng.uniform(-limit, limit, size=(rows, cols)))

    params: dict[str, Tensor] = {}
    for gate in ("i", "f", "c", "o"):
        params[f"lstm.W_{gate}"] = glorot(units + features, units)
    for gate in ("i", "f", "c", "o"):
        fill = 1.0 if gate == "f" else 0.0
        params[f"lstm.b_{gate}"] = Tensor(np.full(units, fill))
    params["proj.W"] = glorot(units, 1)
    params["proj.b"] = Tensor(np.zeros(1))
    return ParamSet(kind, params, arch=spec)


def _add_bias(x: Tensor, b: Tensor, ones_col: Tensor) -> Tensor:
    # row-broadcast via ones [n,1] @ b [1,out]; keeps broadcasting explicit
    tiled = T.matmul(ones_col, T.reshape(b, (1, b.size)))
    return T.add(x, tiled)


def _ones_col(n: int) -> Tensor:
    return Tensor(np.ones((n, 1)), requires_grad=False, op="const")


def dense_forward(p: DenseParams, x: Tensor) -> Tensor:
    """x [n, in] -> x W + b, activation left to the caller."""
    x = T._as_tensor(x)
    if x.rank != 2 or x.shape[1] != p.W.shape[0]:
        raise ValueError(f"dense: input {x.shape} incompatible with weights {p.W.shape}")
    return _add_bias(T.matmul(x, p.W), p.b, _ones_col(x.shape[0]))


def lstm_cell_step(p: LstmParams, x_t: Tensor, h_prev: Tensor, c_prev: Tensor,
                   _ones: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """One step of the four-gate cell.

    i = sigmoid(W_i [h, x] + b_i),  c~ = tanh(W_c [h, x] + b_c)
    f = sigmoid(W_f [h, x] + b_f),  o  = sigmoid(W_o [h, x] + b_o)
    c = f * c_prev + i * c~,        h  = o * tanh(c)
    """
    x_t, h_prev, c_prev = map(T._as_tensor, (x_t, h_prev, c_prev))
    hx = T.concat([h_prev, x_t], axis=1)
    if hx.shape[1] != p.W_i.shape[0]:
        raise ValueError(f"lstm: concat width {hx.shape[1]} != gate rows {p.W_i.shape[0]}")
    ones = _ones if _ones is not None else _ones_col(hx.shape[0])

    def gate(W, b, act):
        return act(_add_bias(T.matmul(hx, W), b, ones))

    i_t = gate(p.W_i, p.b_i, T.sigmoid)
    c_tilde = gate(p.W_c, p.b_c, T.tanh)
    f_t = gate(p.W_f, p.b_f, T.sigmoid)
    o_t = gate(p.W_o, p.b_o, T.sigmoid)
    c_t = T.add(T.mul(f_t, c_prev), T.mul(i_t, c_tilde))
    h_t = T.mul(o_t, T.tanh(c_t))
    return h_t, c_t


def _zero_state(batch: int, units: int) -> tuple[Tensor, Tensor]:
    h = Tensor(np.zeros((batch, units)), requires_grad=False, op="const")
    c = Tensor(np.zeros((batch, units)), requires_grad=False, op="const")
    return h, c


def _lstm_scan(p: LstmParams, x_seq: Tensor) -> list[Tensor]:
    """Per-step hidden states, as a list of [batch, units] tensors."""
    if x_seq.rank != 3:
        raise ValueError(f"lstm_forward: expected rank-3 input, got {x_seq.shape}")
    batch, steps, features = x_seq.shape
    if steps < 1:
        raise ValueError("lstm_forward: needs at least one timestep")
    h, c = _zero_state(batch, p.units)
    ones = _ones_col(batch)
    hs = []
    for t in range(steps):
        x_t = T.reshape(T.slice_(x_seq, 1, t, t + 1), (batch, features))
        h, c = lstm_cell_step(p, x_t, h, c, _ones=ones)
        hs.append(h)
    return hs


def lstm_forward(p: LstmParams, x_seq: Tensor) -> Tensor:
    """Iterate the cell over [batch, timesteps, features] with zero
    initial state and shared weights; returns [batch, timesteps, units]."""
    hs = _lstm_scan(p, T._as_tensor(x_seq))
    return T.transpose(T.stack(hs, axis=0), (1, 0, 2))


def _time_shared_dense(p: DenseParams, hs: list[Tensor]) -> Tensor:
    """Apply one dense layer to every step's hidden state at once.

    hs is a list of [batch, units]; returns [steps*batch, out] in
    step-major row order (step 0's batch first).
    """
    return dense_forward(p, _time_shared_dense_input(hs))


def generator_forward(g: ParamSet, z: Tensor) -> Tensor:
    """Noise [batch, noise_len] -> return windows [batch, seq_len, 1].

    The noise vector is the input feature set of every timestep; the
    sequence length is fixed by the projection loop, and tanh keeps the
    output inside (-1, 1).
    """
    z = T._as_tensor(z)
    if g.arch is None:
        raise ValueError("generator ParamSet carries no architecture")
    p = g.lstm()
    noise_features = p.W_i.shape[0] - p.units
    if z.rank != 2 or z.shape[1] != noise_features:
        raise ValueError(f"generator: noise {z.shape} incompatible with gate width "
                         f"{p.W_i.shape[0]} (units {p.units})")
    batch = z.shape[0]
    seq_len = g.arch.seq_len
    h, c = _zero_state(batch, p.units)
    ones = _ones_col(batch)
    hs = []
    for _ in range(seq_len):
        h, c = lstm_cell_step(p, z, h, c, _ones=ones)
        hs.append(h)
    y = T.tanh(_time_shared_dense(g.proj(), hs))      # [seq*batch, 1]
    y = T.reshape(y, (seq_len, batch, 1))
    return T.transpose(y, (1, 0, 2))


def critic_forward(d: ParamSet, x: Tensor) -> Tensor:
    """Windows [batch, seq_len, 1] -> one unbounded score per sample.

    Per-step scores from the time-shared dense head are averaged over
    the timesteps; no sigmoid anywhere.
    """
    x = T._as_tensor(x)
    if x.rank != 3:
        raise ValueError(f"critic: expected [batch, seq_len, features], got {x.shape}")
    batch, steps, _ = x.shape
    hs = _lstm_scan(d.lstm(), x)
    scores = dense_forward(d.proj(), _time_shared_dense_input(hs))  # [steps*batch, 1]
    per_step = T.reshape(scores, (steps, batch))
    return T.reduce("mean", per_step, axis=0)


def _time_shared_dense_input(hs: list[Tensor]) -> Tensor:
    steps = len(hs)
    batch, units = hs[0].shape
    return T.reshape(T.stack(hs, axis=0), (steps * batch, units))
