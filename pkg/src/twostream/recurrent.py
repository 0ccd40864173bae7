"""Recurrent cells (vanilla, LSTM, GRU), sequence unrolling with length
masking, bidirectional wrapping, layer stacking, and exact backpropagation
through time.

Conventions shared by every cell:

* Fused weight matrices act on the concatenation [x_t ; h_prev], input
  columns first. LSTM row blocks are ordered (input, forget, output,
  candidate); GRU gate rows are ordered (update z, reset r). The ordering is
  part of the checkpoint contract.
* Hidden and cell states start at zero.
* Time steps at or past a sample's true length never update state: the state
  is frozen, the emitted output row is zero, and no gradient flows to the
  padded inputs. Appending more padding therefore changes nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError
from .tensor import Rng, default_dtype, sigmoid

_ACTIVATIONS = ("tanh", "sigmoid")


def glorot_uniform(rng: Rng, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


@dataclass
class RnnCellParams:
    """Vanilla recurrent cell: h_t = act(W [x_t ; h_prev] + b)."""

    W: np.ndarray  # [d, i+d]
    b: np.ndarray  # [d]
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")

    @property
    def hidden_dim(self) -> int:
        return self.W.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1] - self.W.shape[0]


@dataclass
class LstmCellParams:
    """LSTM cell; W rows are the fused (i, f, o, candidate) blocks."""

    W: np.ndarray  # [4d, i+d]
    b: np.ndarray  # [4d]

    @property
    def hidden_dim(self) -> int:
        return self.W.shape[0] // 4

    @property
    def input_dim(self) -> int:
        return self.W.shape[1] - self.hidden_dim


@dataclass
class GruCellParams:
    """GRU cell; W_gates rows are the fused (z, r) blocks."""

    W_gates: np.ndarray  # [2d, i+d]
    W_cand: np.ndarray  # [d, i+d]
    b_gates: np.ndarray  # [2d]
    b_cand: np.ndarray  # [d]

    @property
    def hidden_dim(self) -> int:
        return self.W_cand.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_cand.shape[1] - self.W_cand.shape[0]


def init_rnn_cell(input_dim, hidden_dim, rng: Rng, activation="tanh") -> RnnCellParams:
    W = glorot_uniform(rng, hidden_dim, input_dim + hidden_dim)
    b = np.zeros(hidden_dim, dtype=default_dtype())
    return RnnCellParams(W=W, b=b, activation=activation)


def init_lstm_cell(input_dim, hidden_dim, rng: Rng) -> LstmCellParams:
    W = glorot_uniform(rng, 4 * hidden_dim, input_dim + hidden_dim)
    b = np.zeros(4 * hidden_dim, dtype=default_dtype())
    b[hidden_dim : 2 * hidden_dim] = 1.0  # forget-gate bias starts open
    return LstmCellParams(W=W, b=b)


def init_gru_cell(input_dim, hidden_dim, rng: Rng) -> GruCellParams:
    W_gates = glorot_uniform(rng, 2 * hidden_dim, input_dim + hidden_dim)
    W_cand = glorot_uniform(rng, hidden_dim, input_dim + hidden_dim)
    zb = np.zeros(2 * hidden_dim, dtype=default_dtype())
    zb[:hidden_dim] = 1.0  # update gate starts open: same memory head start as
    # the LSTM forget bias, without it a fresh cell halves its state every step
    cb = np.zeros(hidden_dim, dtype=default_dtype())
    return GruCellParams(W_gates=W_gates, W_cand=W_cand, b_gates=zb, b_cand=cb)


def param_count(params) -> int:
    """Total number of scalar parameters (weights and biases) in a cell."""
    total = 0
    for name in vars(params):
        value = getattr(params, name)
        if isinstance(value, np.ndarray):
            total += value.size
    return total


def _check_step_shapes(x_t, h_prev, input_dim, hidden_dim):
    if x_t.ndim != 2 or x_t.shape[1] != input_dim:
        raise DimensionError(f"x_t shape {x_t.shape} does not match input_dim {input_dim}")
    if h_prev.shape != (x_t.shape[0], hidden_dim):
        raise DimensionError(
            f"h_prev shape {h_prev.shape} does not match (n={x_t.shape[0]}, d={hidden_dim})"
        )


def rnn_cell_forward(p: RnnCellParams, x_t, h_prev):
    """One vanilla step: returns (h_t, cache)."""
    _check_step_shapes(x_t, h_prev, p.input_dim, p.hidden_dim)
    xh = np.concatenate([x_t, h_prev], axis=1)
    pre = xh @ p.W.T + p.b
    h_t = np.tanh(pre) if p.activation == "tanh" else sigmoid(pre)
    return h_t, (xh, h_t)


def rnn_cell_backward(p: RnnCellParams, cache, dh):
    xh, h_t = cache
    if p.activation == "tanh":
        dpre = dh * (1.0 - h_t * h_t)
    else:
        dpre = dh * h_t * (1.0 - h_t)
    dW = dpre.T @ xh
    db = dpre.sum(axis=0)
    dxh = dpre @ p.W
    i = p.input_dim
    return dxh[:, :i], dxh[:, i:], [dW, db]


def lstm_cell_forward(p: LstmCellParams, x_t, h_prev, c_prev):
    """One LSTM step: returns (h_t, c_t, cache)."""
    d = p.hidden_dim
    _check_step_shapes(x_t, h_prev, p.input_dim, d)
    if c_prev.shape != h_prev.shape:
        raise DimensionError(f"c_prev shape {c_prev.shape} != h_prev shape {h_prev.shape}")
    xh = np.concatenate([x_t, h_prev], axis=1)
    pre = xh @ p.W.T + p.b
    gi = sigmoid(pre[:, :d])
    gf = sigmoid(pre[:, d : 2 * d])
    go = sigmoid(pre[:, 2 * d : 3 * d])
    cand = np.tanh(pre[:, 3 * d :])
    c_t = gf * c_prev + gi * cand
    tc = np.tanh(c_t)
    h_t = go * tc
    return h_t, c_t, (xh, c_prev, gi, gf, go, cand, tc)


def lstm_cell_backward(p: LstmCellParams, cache, dh, dc):
    xh, c_prev, gi, gf, go, cand, tc = cache
    dgo = dh * tc
    dct = dc + dh * go * (1.0 - tc * tc)
    dgi = dct * cand
    dgf = dct * c_prev
    dcand = dct * gi
    dc_prev = dct * gf
    dpre = np.concatenate(
        [
            dgi * gi * (1.0 - gi),
            dgf * gf * (1.0 - gf),
            dgo * go * (1.0 - go),
            dcand * (1.0 - cand * cand),
        ],
        axis=1,
    )
    dW = dpre.T @ xh
    db = dpre.sum(axis=0)
    dxh = dpre @ p.W
    i = p.input_dim
    return dxh[:, :i], dxh[:, i:], dc_prev, [dW, db]


def gru_cell_forward(p: GruCellParams, x_t, h_prev):
    """One GRU step: returns (h_t, cache).

    The reset gate scales h_prev inside the candidate's affine map; the update
    gate blends h_t = z * h_prev + (1 - z) * candidate.
    """
    d = p.hidden_dim
    _check_step_shapes(x_t, h_prev, p.input_dim, d)
    xh = np.concatenate([x_t, h_prev], axis=1)
    gates = sigmoid(xh @ p.W_gates.T + p.b_gates)
    z = gates[:, :d]
    r = gates[:, d:]
    hr = r * h_prev
    xhr = np.concatenate([x_t, hr], axis=1)
    cand = np.tanh(xhr @ p.W_cand.T + p.b_cand)
    h_t = z * h_prev + (1.0 - z) * cand
    return h_t, (xh, xhr, h_prev, z, r, cand)


def gru_cell_backward(p: GruCellParams, cache, dh):
    xh, xhr, h_prev, z, r, cand = cache
    i = p.input_dim
    dz = dh * (h_prev - cand)
    dcand = dh * (1.0 - z)
    dh_prev = dh * z
    dpre_c = dcand * (1.0 - cand * cand)
    dW_cand = dpre_c.T @ xhr
    db_cand = dpre_c.sum(axis=0)
    dxhr = dpre_c @ p.W_cand
    dx = dxhr[:, :i].copy()
    dhr = dxhr[:, i:]
    dr = dhr * h_prev
    dh_prev = dh_prev + dhr * r
    dpre_g = np.concatenate([dz * z * (1.0 - z), dr * r * (1.0 - r)], axis=1)
    dW_gates = dpre_g.T @ xh
    db_gates = dpre_g.sum(axis=0)
    dxh = dpre_g @ p.W_gates
    dx += dxh[:, :i]
    dh_prev = dh_prev + dxh[:, i:]
    return dx, dh_prev, [dW_gates, dW_cand, db_gates, db_cand]


class RnnCell:
    """Uniform step interface over RnnCellParams. State is the 1-tuple (h,)."""

    param_names = ("W", "b")

    def __init__(self, params: RnnCellParams):
        self.params = params

    @property
    def hidden_dim(self):
        return self.params.hidden_dim

    @property
    def input_dim(self):
        return self.params.input_dim

    def zero_state(self, n):
        return (np.zeros((n, self.hidden_dim), dtype=default_dtype()),)

    def param_arrays(self):
        return [self.params.W, self.params.b]

    def step(self, x_t, state):
        h_t, cache = rnn_cell_forward(self.params, x_t, state[0])
        return h_t, (h_t,), cache

    def step_backward(self, cache, dstate):
        dx, dh_prev, grads = rnn_cell_backward(self.params, cache, dstate[0])
        return dx, (dh_prev,), grads


class LstmCell:
    """Step interface over LstmCellParams. State is (h, c)."""

    param_names = ("W", "b")

    def __init__(self, params: LstmCellParams):
        self.params = params

    @property
    def hidden_dim(self):
        return self.params.hidden_dim

    @property
    def input_dim(self):
        return self.params.input_dim

    def zero_state(self, n):
        z = np.zeros((n, self.hidden_dim), dtype=default_dtype())
        return (z, z.copy())

    def param_arrays(self):
        return [self.params.W, self.params.b]

    def step(self, x_t, state):
        h_t, c_t, cache = lstm_cell_forward(self.params, x_t, state[0], state[1])
        return h_t, (h_t, c_t), cache

    def step_backward(self, cache, dstate):
        dx, dh_prev, dc_prev, grads = lstm_cell_backward(self.params, cache, dstate[0], dstate[1])
        return dx, (dh_prev, dc_prev), grads


class GruCell:
    """Step interface over GruCellParams. State is the 1-tuple (h,)."""

    param_names = ("W_gates", "W_cand", "b_gates", "b_cand")

    def __init__(self, params: GruCellParams):
        self.params = params

    @property
    def hidden_dim(self):
        return self.params.hidden_dim

    @property
    def input_dim(self):
        return self.params.input_dim

    def zero_state(self, n):
        return (np.zeros((n, self.hidden_dim), dtype=default_dtype()),)

    def param_arrays(self):
        return [self.params.W_gates, self.params.W_cand, self.params.b_gates, self.params.b_cand]

    def step(self, x_t, state):
        h_t, cache = gru_cell_forward(self.params, x_t, state[0])
        return h_t, (h_t,), cache

    def step_backward(self, cache, dstate):
        dx, dh_prev, grads = gru_cell_backward(self.params, cache, dstate[0])
        return dx, (dh_prev,), grads


@dataclass
class SequenceBatch:
    """A padded batch of sequences: data [n×T×i] plus the true length of each row.

    Rows are zero-padded past their true length; lengths satisfy 1 <= L <= T.
    """

    data: np.ndarray
    lengths: list = field(default_factory=list)

    def __post_init__(self):
        self.lengths = [int(v) for v in self.lengths]
        if self.data.ndim != 3:
            raise DimensionError(f"sequence batch must be [n,T,i], got {self.data.shape}")
        n, T, _ = self.data.shape
        if len(self.lengths) != n:
            raise DimensionError(f"{len(self.lengths)} lengths for {n} rows")
        for L in self.lengths:
            if not 1 <= L <= T:
                raise DataError(f"length {L} outside [1, {T}]")

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def t_max(self):
        return self.data.shape[1]


def unroll(cell, batch: SequenceBatch, direction="forward"):
    """Run a cell across time. Returns (outputs [n×T×d], last_valid [n×d], cache).

    Forward direction iterates t = 1..T, backward t = T..1; in both cases a
    row's state only updates at steps inside its true length, so last_valid is
    the state at the final true step (forward) or at step 1 (backward).
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward|backward, got {direction!r}")
    x = batch.data
    n, T, _ = x.shape
    lengths = np.asarray(batch.lengths)
    state = cell.zero_state(n)
    outputs = np.zeros((n, T, cell.hidden_dim), dtype=x.dtype)
    steps = []
    order = range(T) if direction == "forward" else range(T - 1, -1, -1)
    for t in order:
        mask = t < lengths
        m = mask[:, None]
        h_t, new_state, cache = cell.step(x[:, t, :], state)
        state = tuple(np.where(m, s_new, s_old) for s_new, s_old in zip(new_state, state))
        outputs[:, t, :] = np.where(m, h_t, 0.0)
        steps.append((t, m, cache))
    return outputs, state[0], (steps, lengths, x.shape)


def unroll_backward(cell, cache, grad_outputs=None, grad_last=None):
    """Exact gradients for `unroll`. Returns (param_grads, grad_input [n×T×i]).

    Either upstream gradient may be None (treated as zero). Gradients at
    padded steps are zero, and state gradients pass straight through frozen
    steps.
    """
    steps, lengths, x_shape = cache
    n, T, _ = x_shape
    d = cell.hidden_dim
    dtype = default_dtype()
    if grad_outputs is None:
        grad_outputs = np.zeros((n, T, d), dtype=dtype)
    dstate = tuple(np.zeros((n, d), dtype=dtype) for _ in cell.zero_state(1))
    if grad_last is not None:
        dstate = (dstate[0] + grad_last,) + dstate[1:]
    param_grads = [np.zeros_like(a) for a in cell.param_arrays()]
    grad_x = np.zeros(x_shape, dtype=dtype)
    for t, m, step_cache in reversed(steps):
        dstate_tot = (dstate[0] + grad_outputs[:, t, :] * m,) + dstate[1:]
        dstate_in = tuple(g * m for g in dstate_tot)
        dx_t, dstate_prev, grads = cell.step_backward(step_cache, dstate_in)
        grad_x[:, t, :] = dx_t * m
        dstate = tuple(dp + dt * (~m) for dp, dt in zip(dstate_prev, dstate_tot))
        for acc, g in zip(param_grads, grads):
            acc += g
    return param_grads, grad_x


def bidirectional(cell_fwd, cell_bwd, batch: SequenceBatch):
    """Run both directions and concatenate: forward features in columns [0,d),
    backward in [d,2d). Returns (outputs [n×T×2d], last_valid [n×2d], cache)."""
    if cell_fwd.hidden_dim != cell_bwd.hidden_dim:
        raise DimensionError(
            f"direction widths differ: {cell_fwd.hidden_dim} vs {cell_bwd.hidden_dim}"
        )
    out_f, last_f, cache_f = unroll(cell_fwd, batch, "forward")
    out_b, last_b, cache_b = unroll(cell_bwd, batch, "backward")
    outputs = np.concatenate([out_f, out_b], axis=2)
    last = np.concatenate([last_f, last_b], axis=1)
    return outputs, last, (cache_f, cache_b, cell_fwd.hidden_dim)


def bidirectional_backward(cell_fwd, cell_bwd, cache, grad_outputs=None, grad_last=None):
    cache_f, cache_b, d = cache
    go_f = go_b = gl_f = gl_b = None
    if grad_outputs is not None:
        go_f, go_b = grad_outputs[:, :, :d], grad_outputs[:, :, d:]
    if grad_last is not None:
        gl_f, gl_b = grad_last[:, :d], grad_last[:, d:]
    grads_f, gx_f = unroll_backward(cell_fwd, cache_f, go_f, gl_f)
    grads_b, gx_b = unroll_backward(cell_bwd, cache_b, go_b, gl_b)
    return grads_f, grads_b, gx_f + gx_b


class RecurrentLayer:
    """A single-direction recurrent layer usable inside a stack."""

    def __init__(self, cell, direction="forward"):
        self.cell = cell
        self.direction = direction

    @property
    def out_dim(self):
        return self.cell.hidden_dim

    @property
    def in_dim(self):
        return self.cell.input_dim

    def param_items(self):
        return list(zip(self.cell.param_names, self.cell.param_arrays()))

    def forward(self, batch):
        return unroll(self.cell, batch, self.direction)

    def backward(self, cache, grad_outputs=None, grad_last=None):
        param_grads, grad_x = unroll_backward(self.cell, cache, grad_outputs, grad_last)
        return grad_x, param_grads


class BidirectionalLayer:
    """Forward and backward cells over the same input, outputs concatenated."""

    def __init__(self, cell_fwd, cell_bwd):
        if cell_fwd.hidden_dim != cell_bwd.hidden_dim:
            raise DimensionError("bidirectional halves must agree on hidden_dim")
        self.cell_fwd = cell_fwd
        self.cell_bwd = cell_bwd

    @property
    def out_dim(self):
        return 2 * self.cell_fwd.hidden_dim

    @property
    def in_dim(self):
        return self.cell_fwd.input_dim

    def param_items(self):
        items = [("fwd." + n, a) for n, a in zip(self.cell_fwd.param_names, self.cell_fwd.param_arrays())]
        items += [("bwd." + n, a) for n, a in zip(self.cell_bwd.param_names, self.cell_bwd.param_arrays())]
        return items

    def forward(self, batch):
        return bidirectional(self.cell_fwd, self.cell_bwd, batch)

    def backward(self, cache, grad_outputs=None, grad_last=None):
        grads_f, grads_b, grad_x = bidirectional_backward(
            self.cell_fwd, self.cell_bwd, cache, grad_outputs, grad_last
        )
        return grad_x, grads_f + grads_b


def stack(layers, batch: SequenceBatch):
    """Run a list of recurrent layers; layer l consumes the full output
    sequence of layer l-1. Returns (per-layer outputs, top last_valid, caches)."""
    outputs = []
    caches = []
    current = batch
    for idx, layer in enumerate(layers):
        if layer.in_dim != current.data.shape[2]:
            raise DimensionError(
                f"layer {idx} expects width {layer.in_dim}, got {current.data.shape[2]}"
            )
        out, last, cache = layer.forward(current)
        outputs.append(out)
        caches.append(cache)
        current = SequenceBatch(out, batch.lengths)
    return outputs, last, caches


def stack_backward(layers, caches, grad_top_outputs=None, grad_top_last=None):
    """Backprop through a stack. Returns (grad wrt the original input sequence,
    per-layer param gradient lists, ordered like `layers`)."""
    per_layer = [None] * len(layers)
    grad_seq = grad_top_outputs
    grad_last = grad_top_last
    for idx in range(len(layers) - 1, -1, -1):
        grad_x, pgrads = layers[idx].backward(caches[idx], grad_seq, grad_last)
        per_layer[idx] = pgrads
        grad_seq = grad_x
        grad_last = None
    return grad_seq, per_layer
