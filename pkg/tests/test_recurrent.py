import math

import numpy as np
import pytest

from twostream import (
    BidirectionalLayer,
    DimensionError,
    GruCell,
    GruCellParams,
    LstmCell,
    LstmCellParams,
    RecurrentLayer,
    RnnCell,
    RnnCellParams,
    Rng,
    SequenceBatch,
    bidirectional,
    gru_cell_forward,
    init_gru_cell,
    init_lstm_cell,
    init_rnn_cell,
    lstm_cell_forward,
    param_count,
    rnn_cell_forward,
    stack,
    unroll,
)
from twostream.recurrent import (
    bidirectional_backward,
    stack_backward,
    unroll_backward,
)

from conftest import central_diff, max_rel_err


# ---------------------------------------------------------------------------
# Straight-line scalar reimplementations (the independent oracle)
# ---------------------------------------------------------------------------


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def scalar_lstm_step(W, b, x_row, h_row, c_row):
    d = len(h_row)
    xh = list(x_row) + list(h_row)
    pre = [sum(W[r][k] * xh[k] for k in range(len(xh))) + b[r] for r in range(4 * d)]
    gi = [_sig(pre[r]) for r in range(d)]
    gf = [_sig(pre[d + r]) for r in range(d)]
    go = [_sig(pre[2 * d + r]) for r in range(d)]
    cand = [math.tanh(pre[3 * d + r]) for r in range(d)]
    c_new = [gf[r] * c_row[r] + gi[r] * cand[r] for r in range(d)]
    h_new = [go[r] * math.tanh(c_new[r]) for r in range(d)]
    return h_new, c_new


def scalar_gru_step(Wg, Wc, bg, bc, x_row, h_row):
    d = len(h_row)
    xh = list(x_row) + list(h_row)
    pre_g = [sum(Wg[r][k] * xh[k] for k in range(len(xh))) + bg[r] for r in range(2 * d)]
    z = [_sig(pre_g[r]) for r in range(d)]
    r_gate = [_sig(pre_g[d + r]) for r in range(d)]
    xhr = list(x_row) + [r_gate[r] * h_row[r] for r in range(d)]
    pre_c = [sum(Wc[r][k] * xhr[k] for k in range(len(xhr))) + bc[r] for r in range(d)]
    cand = [math.tanh(pre_c[r]) for r in range(d)]
    return [z[r] * h_row[r] + (1.0 - z[r]) * cand[r] for r in range(d)]


# ---------------------------------------------------------------------------
# Cell forward behaviour
# ---------------------------------------------------------------------------


class TestRnnCell:
    def test_zero_weights_give_zero_state(self):
        p = RnnCellParams(W=np.zeros((3, 5)), b=np.zeros(3), activation="tanh")
        h, _ = rnn_cell_forward(p, np.random.rand(4, 2), np.random.rand(4, 3))
        assert np.array_equal(h, np.zeros((4, 3)))

    def test_scalar_hand_evaluation(self):
        p = RnnCellParams(W=np.array([[1.0, 0.0]]), b=np.zeros(1), activation="tanh")
        h, _ = rnn_cell_forward(p, np.array([[0.5]]), np.array([[0.0]]))
        assert h[0, 0] == pytest.approx(0.46211715726, abs=1e-9)

    def test_sigmoid_saturates_on_large_recurrent_weight(self):
        p = RnnCellParams(W=np.array([[0.0, 50.0]]), b=np.zeros(1), activation="sigmoid")
        h, _ = rnn_cell_forward(p, np.array([[0.3]]), np.array([[1.0]]))
        assert h[0, 0] > 1.0 - 1e-12

    def test_shape_mismatch_rejected(self, rng):
        p = init_rnn_cell(3, 4, rng)
        with pytest.raises(DimensionError):
            rnn_cell_forward(p, np.zeros((2, 5)), np.zeros((2, 4)))


class TestLstmCell:
    def test_memory_keep_identity(self, rng):
        # forget gate forced open, input gate forced closed
        d = 4
        p = LstmCellParams(W=np.zeros((4 * d, 3 + d)), b=np.zeros(4 * d))
        p.b[:d] = -50.0  # input gate shut
        p.b[d : 2 * d] = 50.0  # forget gate open
        c_prev = rng.normal(size=(5, d))
        _, c_t, _ = lstm_cell_forward(p, rng.normal(size=(5, 3)), rng.normal(size=(5, d)), c_prev)
        assert np.abs(c_t - c_prev).max() <= 1e-12

    def test_closed_output_gate_zeroes_state(self, rng):
        d = 3
        p = LstmCellParams(W=np.zeros((4 * d, 2 + d)), b=np.zeros(4 * d))
        p.b[2 * d : 3 * d] = -50.0
        h_t, _, _ = lstm_cell_forward(
            p, rng.normal(size=(4, 2)), rng.normal(size=(4, d)), rng.normal(size=(4, d))
        )
        assert np.abs(h_t).max() <= 1e-12

    def test_matches_scalar_oracle(self):
        rng = Rng(7)
        n, i, d = 2, 3, 4
        p = init_lstm_cell(i, d, rng)
        p.W[...] = rng.normal(0.0, 0.5, size=p.W.shape)
        p.b[...] = rng.normal(0.0, 0.5, size=p.b.shape)
        x = rng.normal(size=(n, i))
        h0 = rng.normal(size=(n, d))
        c0 = rng.normal(size=(n, d))
        h1, c1, _ = lstm_cell_forward(p, x, h0, c0)
        for row in range(n):
            h_ref, c_ref = scalar_lstm_step(
                p.W.tolist(), p.b.tolist(), x[row].tolist(), h0[row].tolist(), c0[row].tolist()
            )
            assert np.abs(h1[row] - np.array(h_ref)).max() <= 1e-12
            assert np.abs(c1[row] - np.array(c_ref)).max() <= 1e-12


class TestGruCell:
    def test_update_gate_open_passes_state_through(self, rng):
        d = 4
        p = GruCellParams(
            W_gates=np.zeros((2 * d, 3 + d)),
            W_cand=rng.normal(size=(d, 3 + d)),
            b_gates=np.zeros(2 * d),
            b_cand=rng.normal(size=d),
        )
        p.b_gates[:d] = 50.0  # z -> 1
        h_prev = rng.normal(size=(6, d))
        h_t, _ = gru_cell_forward(p, rng.normal(size=(6, 3)), h_prev)
        assert np.abs(h_t - h_prev).max() <= 1e-12

    def test_both_gates_closed_reduces_to_candidate_of_input_only(self, rng):
        d, i = 3, 2
        p = GruCellParams(
            W_gates=np.zeros((2 * d, i + d)),
            W_cand=rng.normal(size=(d, i + d)),
            b_gates=np.full(2 * d, -50.0),  # z -> 0, r -> 0
            b_cand=rng.normal(size=d),
        )
        x = rng.normal(size=(5, i))
        h_t, _ = gru_cell_forward(p, x, rng.normal(size=(5, d)))
        expected = np.tanh(
            np.concatenate([x, np.zeros((5, d))], axis=1) @ p.W_cand.T + p.b_cand
        )
        assert np.abs(h_t - expected).max() <= 1e-10

    def test_matches_scalar_oracle(self):
        rng = Rng(7)
        n, i, d = 2, 3, 4
        p = init_gru_cell(i, d, rng)
        p.b_gates[...] = rng.normal(0.0, 0.3, size=p.b_gates.shape)
        p.b_cand[...] = rng.normal(0.0, 0.3, size=p.b_cand.shape)
        x = rng.normal(size=(n, i))
        h0 = rng.normal(size=(n, d))
        h1, _ = gru_cell_forward(p, x, h0)
        for row in range(n):
            ref = scalar_gru_step(
                p.W_gates.tolist(),
                p.W_cand.tolist(),
                p.b_gates.tolist(),
                p.b_cand.tolist(),
                x[row].tolist(),
                h0[row].tolist(),
            )
            assert np.abs(h1[row] - np.array(ref)).max() <= 1e-12

    def test_gate_identities_hold_for_many_random_states(self, rng):
        d = 3
        p = GruCellParams(
            W_gates=np.zeros((2 * d, 2 + d)),
            W_cand=rng.normal(size=(d, 2 + d)),
            b_gates=np.zeros(2 * d),
            b_cand=np.zeros(d),
        )
        p.b_gates[:d] = 50.0
        for _ in range(25):
            h_prev = rng.normal(0.0, 2.0, size=(3, d))
            h_t, _ = gru_cell_forward(p, rng.normal(size=(3, 2)), h_prev)
            assert np.abs(h_t - h_prev).max() <= 1e-10


class TestParamCount:
    @pytest.mark.parametrize("i,d", [(1, 1), (3, 4), (150, 300), (24, 32)])
    def test_gru_is_exactly_three_quarters_of_lstm(self, i, d, rng):
        gru = init_gru_cell(i, d, rng)
        lstm = init_lstm_cell(i, d, rng)
        assert param_count(gru) * 4 == param_count(lstm) * 3

    def test_counts_include_biases(self, rng):
        lstm = init_lstm_cell(3, 4, rng)
        assert param_count(lstm) == 4 * 4 * (3 + 4) + 4 * 4


# ---------------------------------------------------------------------------
# Unrolling, masking, directions
# ---------------------------------------------------------------------------


def _random_cell(kind, i, d, rng):
    if kind == "rnn":
        return RnnCell(init_rnn_cell(i, d, rng))
    if kind == "lstm":
        return LstmCell(init_lstm_cell(i, d, rng))
    return GruCell(init_gru_cell(i, d, rng))


class TestUnroll:
    def test_length_one_sequence_is_a_single_cell_application(self, rng):
        cell = _random_cell("gru", 3, 4, rng)
        x = rng.normal(size=(2, 5, 3))
        batch = SequenceBatch(x, [1, 1])
        outputs, last, _ = unroll(cell, batch)
        h1, _ = gru_cell_forward(cell.params, x[:, 0, :], np.zeros((2, 4)))
        assert np.array_equal(outputs[:, 0, :], h1)
        assert np.array_equal(last, h1)
        assert np.array_equal(outputs[:, 1:, :], np.zeros((2, 4, 4)))

    def test_zero_weights_zero_input_zero_output(self):
        cell = RnnCell(RnnCellParams(W=np.zeros((2, 5)), b=np.zeros(2)))
        batch = SequenceBatch(np.zeros((3, 4, 3)), [4, 2, 3])
        outputs, last, _ = unroll(cell, batch)
        assert not outputs.any() and not last.any()

    @pytest.mark.parametrize("kind", ["rnn", "lstm", "gru"])
    def test_backward_direction_equals_forward_on_reversed_input(self, kind, rng):
        cell = _random_cell(kind, 3, 4, rng)
        x = rng.normal(size=(3, 6, 3))
        lengths = [6, 4, 5]
        for row, L in enumerate(lengths):
            x[row, L:, :] = 0.0
        batch = SequenceBatch(x, lengths)
        out_bwd, last_bwd, _ = unroll(cell, batch, "backward")
        x_rev = np.zeros_like(x)
        for row, L in enumerate(lengths):
            x_rev[row, :L, :] = x[row, :L, :][::-1]
        out_fwd, last_fwd, _ = unroll(cell, SequenceBatch(x_rev, lengths), "forward")
        for row, L in enumerate(lengths):
            assert np.array_equal(out_bwd[row, :L, :], out_fwd[row, :L, :][::-1])
        assert np.array_equal(last_bwd, last_fwd)

    @pytest.mark.parametrize("kind", ["rnn", "lstm", "gru"])
    def test_padding_invariance_forward_and_backward(self, kind, rng):
        cell = _random_cell(kind, 2, 3, rng)
        x = rng.normal(size=(2, 4, 2))
        lengths = [4, 3]
        x[1, 3:, :] = 0.0
        batch = SequenceBatch(x, lengths)
        out_a, last_a, cache_a = unroll(cell, batch)
        x_padded = np.concatenate([x, np.zeros((2, 3, 2))], axis=1)
        padded = SequenceBatch(x_padded, lengths)
        out_b, last_b, cache_b = unroll(cell, padded)
        assert np.array_equal(out_a, out_b[:, :4, :])
        assert not out_b[:, 4:, :].any()
        assert np.array_equal(last_a, last_b)
        grad_last = rng.normal(size=last_a.shape)
        grads_a, gx_a = unroll_backward(cell, cache_a, None, grad_last)
        grads_b, gx_b = unroll_backward(cell, cache_b, None, grad_last)
        for ga, gb in zip(grads_a, grads_b):
            assert np.array_equal(ga, gb)
        assert np.array_equal(gx_a, gx_b[:, :4, :])
        assert not gx_b[:, 4:, :].any()


class TestBidirectional:
    def test_palindrome_with_shared_weights_gives_symmetric_last_state(self, rng):
        cell = _random_cell("gru", 2, 3, rng)
        half = rng.normal(size=(1, 3, 2))
        x = np.concatenate([half, half[:, ::-1, :]], axis=1)  # palindrome, T=6
        batch = SequenceBatch(x, [6])
        _, last, _ = bidirectional(cell, cell, batch)
        assert np.abs(last[:, :3] - last[:, 3:]).max() <= 1e-12

    def test_output_width_doubles(self, rng):
        cf = _random_cell("gru", 5, 300, rng)
        cb = _random_cell("gru", 5, 300, rng)
        batch = SequenceBatch(rng.normal(size=(2, 4, 5)), [4, 4])
        outputs, last, _ = bidirectional(cf, cb, batch)
        assert outputs.shape == (2, 4, 600)
        assert last.shape == (2, 600)

    def test_zero_weight_cells_zero_output(self):
        cf = RnnCell(RnnCellParams(W=np.zeros((2, 4)), b=np.zeros(2)))
        cb = RnnCell(RnnCellParams(W=np.zeros((2, 4)), b=np.zeros(2)))
        batch = SequenceBatch(np.random.rand(2, 3, 2), [3, 2])
        outputs, last, _ = bidirectional(cf, cb, batch)
        assert not outputs.any() and not last.any()

    def test_width_mismatch_rejected(self, rng):
        with pytest.raises(DimensionError):
            bidirectional(
                _random_cell("gru", 2, 3, rng),
                _random_cell("gru", 2, 4, rng),
                SequenceBatch(np.zeros((1, 2, 2)), [2]),
            )


class TestStack:
    def test_single_layer_stack_equals_unroll(self, rng):
        cell = _random_cell("lstm", 3, 4, rng)
        batch = SequenceBatch(rng.normal(size=(2, 5, 3)), [5, 3])
        outputs, last, _ = stack([RecurrentLayer(cell)], batch)
        ref_out, ref_last, _ = unroll(cell, batch)
        assert np.array_equal(outputs[-1], ref_out)
        assert np.array_equal(last, ref_last)

    def test_two_layer_scalar_oracle(self):
        # n=1, T=3, all dims 1: run the exact recurrence by hand in scalars.
        rng = Rng(3)
        l1 = _random_cell("gru", 1, 1, rng)
        l2 = _random_cell("gru", 1, 1, rng)
        for cell in (l1, l2):
            cell.params.b_gates[...] = rng.normal(0.0, 0.2, size=2)
            cell.params.b_cand[...] = rng.normal(0.0, 0.2, size=1)
        x = rng.normal(size=(1, 3, 1))
        outputs, last, _ = stack([RecurrentLayer(l1), RecurrentLayer(l2)], SequenceBatch(x, [3]))
        h1 = h2 = 0.0
        mids, refs = [], []
        for t in range(3):
            h1 = scalar_gru_step(
                l1.params.W_gates.tolist(), l1.params.W_cand.tolist(),
                l1.params.b_gates.tolist(), l1.params.b_cand.tolist(), [x[0, t, 0]], [h1],
            )[0]
            mids.append(h1)
            h2 = scalar_gru_step(
                l2.params.W_gates.tolist(), l2.params.W_cand.tolist(),
                l2.params.b_gates.tolist(), l2.params.b_cand.tolist(), [h1], [h2],
            )[0]
            refs.append(h2)
        assert np.abs(outputs[0][0, :, 0] - np.array(mids)).max() <= 1e-12
        assert np.abs(outputs[1][0, :, 0] - np.array(refs)).max() <= 1e-12
        assert last[0, 0] == pytest.approx(refs[-1], abs=1e-12)

    def test_two_layer_bidirectional_width(self, rng):
        l1 = BidirectionalLayer(_random_cell("gru", 4, 300, rng), _random_cell("gru", 4, 300, rng))
        l2 = BidirectionalLayer(_random_cell("gru", 600, 300, rng), _random_cell("gru", 600, 300, rng))
        batch = SequenceBatch(rng.normal(size=(1, 3, 4)), [3])
        outputs, last, _ = stack([l1, l2], batch)
        assert outputs[-1].shape == (1, 3, 600)
        assert last.shape == (1, 600)

    def test_dimension_chain_mismatch_rejected(self, rng):
        l1 = RecurrentLayer(_random_cell("gru", 3, 4, rng))
        l2 = RecurrentLayer(_random_cell("gru", 5, 2, rng))
        with pytest.raises(DimensionError, match="layer 1"):
            stack([l1, l2], SequenceBatch(np.zeros((1, 2, 3)), [2]))


# ---------------------------------------------------------------------------
# Backpropagation through time vs central finite differences
# ---------------------------------------------------------------------------


class TestBpttGradients:
    def test_zero_upstream_gradient_gives_zero_grads(self, rng):
        cell = _random_cell("gru", 2, 3, rng)
        batch = SequenceBatch(rng.normal(size=(2, 4, 2)), [4, 2])
        _, _, cache = unroll(cell, batch)
        grads, gx = unroll_backward(cell, cache, None, None)
        assert all(not g.any() for g in grads)
        assert not gx.any()

    @pytest.mark.parametrize("kind,n,t,i,d", [
        ("rnn", 2, 4, 3, 4),
        ("rnn", 3, 5, 2, 2),
        ("lstm", 2, 4, 3, 4),
        ("lstm", 3, 5, 4, 3),
        ("gru", 2, 4, 3, 4),
        ("gru", 3, 5, 2, 3),
    ])
    def test_unroll_gradients_match_finite_differences(self, kind, n, t, i, d):
        rng = Rng(hash((kind, n, t, i, d)) % 2**31)
        cell = _random_cell(kind, i, d, rng)
        x = rng.normal(0.0, 0.8, size=(n, t, i))
        lengths = [t - (row % 2) for row in range(n)]
        for row, L in enumerate(lengths):
            x[row, L:, :] = 0.0
        r_out = rng.normal(size=(n, t, d))
        r_last = rng.normal(size=(n, d))

        def loss():
            out, last, _ = unroll(cell, SequenceBatch(x, lengths))
            return float((out * r_out).sum() + (last * r_last).sum())

        _, _, cache = unroll(cell, SequenceBatch(x, lengths))
        pgrads, gx = unroll_backward(cell, cache, r_out, r_last)
        numeric = central_diff(loss, cell.param_arrays() + [x])
        assert max_rel_err(pgrads + [gx], numeric) <= 1e-4

    def test_bidirectional_gradients_match_finite_differences(self):
        rng = Rng(11)
        cf = _random_cell("gru", 3, 3, rng)
        cb = _random_cell("gru", 3, 3, rng)
        x = rng.normal(0.0, 0.8, size=(2, 4, 3))
        lengths = [4, 3]
        x[1, 3:, :] = 0.0
        r_last = rng.normal(size=(2, 6))

        def loss():
            _, last, _ = bidirectional(cf, cb, SequenceBatch(x, lengths))
            return float((last * r_last).sum())

        _, _, cache = bidirectional(cf, cb, SequenceBatch(x, lengths))
        gf, gb, gx = bidirectional_backward(cf, cb, cache, None, r_last)
        numeric = central_diff(loss, cf.param_arrays() + cb.param_arrays() + [x])
        assert max_rel_err(gf + gb + [gx], numeric) <= 1e-4

    def test_stack_gradients_match_finite_differences(self):
        rng = Rng(13)
        layers = [
            RecurrentLayer(_random_cell("lstm", 2, 3, rng)),
            RecurrentLayer(_random_cell("gru", 3, 2, rng)),
        ]
        x = rng.normal(0.0, 0.8, size=(2, 4, 2))
        lengths = [4, 3]
        x[1, 3:, :] = 0.0
        r_last = rng.normal(size=(2, 2))
        arrays = [a for L in layers for _, a in L.param_items()] + [x]

        def loss():
            _, last, _ = stack(layers, SequenceBatch(x, lengths))
            return float((last * r_last).sum())

        _, _, caches = stack(layers, SequenceBatch(x, lengths))
        gseq, per_layer = stack_backward(layers, caches, None, r_last)
        analytic = [g for pg in per_layer for g in pg] + [gseq]
        assert max_rel_err(analytic, central_diff(loss, arrays)) <= 1e-4

    def test_gru_with_update_gate_forced_open_has_zero_candidate_gradient(self, rng):
        d, i = 3, 2
        p = GruCellParams(
            W_gates=np.zeros((2 * d, i + d)),
            W_cand=rng.normal(size=(d, i + d)),
            b_gates=np.zeros(2 * d),
            b_cand=np.zeros(d),
        )
        p.b_gates[:d] = 50.0  # z == 1 at every step: candidate never used
        cell = GruCell(p)
        batch = SequenceBatch(rng.normal(size=(2, 5, i)), [5, 4])
        _, _, cache = unroll(cell, batch)
        grads, _ = unroll_backward(cell, cache, None, rng.normal(size=(2, d)))
        w_cand_grad = grads[1]
        assert np.abs(w_cand_grad).max() <= 1e-12
