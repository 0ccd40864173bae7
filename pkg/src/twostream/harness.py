"""Training/evaluation loops, feature extraction, fusion orchestration, the
finite-difference gradient checker, and metrics emission."""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DataError, DivergenceError
from .tensor import Rng
from .recurrent import (
    GruCell,
    LstmCell,
    RecurrentLayer,
    RnnCell,
    SequenceBatch,
    init_gru_cell,
    init_lstm_cell,
    init_rnn_cell,
    stack,
    stack_backward,
    unroll,
    unroll_backward,
)
from .normreg import DropoutConfig, batchnorm_backward, batchnorm_forward, dropout, init_batchnorm
from .conv3d import (
    Pool3dSpec,
    clip_average,
    clip_split,
    conv3d_backward,
    conv3d_forward,
    init_conv3d,
    maxpool3d,
    maxpool3d_backward,
)
from .heads import dense_backward, dense_forward, init_dense, softmax_xent
from .optim import RmspropState, SgdHalvingState, rmsprop_step, sgd_halving_step
from .fusion import Prediction, decision_fuse, feature_fuse, search_trust_weights
from .heads import svm_predict, svm_train
from .data import Dataset, Splits, SplitSpec, make_splits, pad_sequences
from .models import ModelSpec, build_model, LADDER_VARIANTS


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    optimizer: str = "rmsprop"  # or "sgd_halving"
    learning_rate: float = 0.001
    decay: float = 0.9
    momentum: float = 0.0
    sgd_patience: int = 3
    eval_every: int = 1
    seed: int = 0


@dataclass
class RunResult:
    """Everything one training/evaluation run produced. The canonical dict
    (and JSON) excludes wall-clock timing so reruns with one seed are
    bit-identical; timing travels separately."""

    model: str
    seed: int
    epoch_losses: list = field(default_factory=list)
    val_accuracies: list = field(default_factory=list)
    eval_every: int = 1
    steps_per_epoch: int = 0
    test_accuracy: float = 0.0
    confusion: np.ndarray = None
    wall_clock_per_step: float = 0.0

    def canonical_dict(self):
        return {
            "model": self.model,
            "seed": self.seed,
            "epoch_losses": [float(v) for v in self.epoch_losses],
            "val_accuracies": [float(v) for v in self.val_accuracies],
            "eval_every": self.eval_every,
            "steps_per_epoch": self.steps_per_epoch,
            "test_accuracy": float(self.test_accuracy),
            "confusion": self.confusion.astype(int).tolist() if self.confusion is not None else None,
        }

    def to_json(self):
        return json.dumps(self.canonical_dict(), sort_keys=True, indent=2)

    @property
    def accuracy_from_confusion(self):
        return float(np.trace(self.confusion)) / float(self.confusion.sum())


def steps_to_threshold(result: RunResult, threshold: float):
    """Optimizer steps until validation accuracy first reached `threshold`,
    or None if it never did."""
    for k, acc in enumerate(result.val_accuracies):
        if acc >= threshold:
            return (k + 1) * result.eval_every * result.steps_per_epoch
    return None


def _skeleton_inputs(dataset: Dataset, indices, t_max):
    seqs = [dataset[i].skeleton for i in indices]
    return pad_sequences(seqs, t_max), dataset.labels(indices)


def _video_clip_table(dataset: Dataset, indices, clip_len=16):
    """All clips of the selected videos plus the owning sample of each clip."""
    clips, owners = [], []
    for pos, i in enumerate(indices):
        for clip in clip_split(dataset[i].video.pixels, clip_len):
            clips.append(clip)
            owners.append(pos)
    return np.stack(clips), np.asarray(owners), dataset.labels(indices)


def _batched_probs(model, inputs, chunk=64):
    if model.stream == "skeleton":
        probs = []
        n = inputs.data.shape[0]
        for s in range(0, n, chunk):
            sub = SequenceBatch(inputs.data[s : s + chunk], inputs.lengths[s : s + chunk])
            probs.append(model.predict_probs(sub))
        return np.concatenate(probs, axis=0)
    probs = []
    for s in range(0, inputs.shape[0], chunk):
        probs.append(model.predict_probs(inputs[s : s + chunk]))
    return np.concatenate(probs, axis=0)


def predict_dataset(model, dataset: Dataset, indices, t_max=None):
    """Per-sample Prediction list; video predictions are clip-averaged."""
    if model.stream == "skeleton":
        t_max = t_max or max(s.skeleton.t_true for s in dataset.samples)
        batch, _ = _skeleton_inputs(dataset, indices, t_max)
        probs = _batched_probs(model, batch)
        return [Prediction.from_probs(p / p.sum()) for p in probs]
    clips, owners, _ = _video_clip_table(dataset, indices, model.clip_len)
    probs = _batched_probs(model, clips, chunk=32)
    preds = []
    for pos in range(len(indices)):
        preds.append(clip_average(probs[owners == pos]))
    return preds


def evaluate(model, dataset: Dataset, indices, t_max=None) -> RunResult:
    """Accuracy and confusion matrix over the given samples (inference mode)."""
    preds = predict_dataset(model, dataset, indices, t_max)
    labels = dataset.labels(indices)
    k = dataset.n_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    for pred, y in zip(preds, labels):
        confusion[y, pred.label] += 1
    result = RunResult(model=getattr(model.spec, "name", "?"), seed=-1)
    result.confusion = confusion
    result.test_accuracy = float(np.trace(confusion)) / max(len(indices), 1)
    return result


def extract_features(model, dataset: Dataset, indices, tap, t_max=None, chunk=32):
    """One feature row per sample: the hidden-layer tap for the skeleton
    stream, the clip-averaged first fully-connected activations for video."""
    if tap not in ("rnn_fc", "cnn_fc6"):
        raise ConfigError(f"unknown tap {tap!r}; expected rnn_fc or cnn_fc6")
    if tap == "rnn_fc":
        if model.stream != "skeleton":
            raise ContractError("rnn_fc tap requires the skeleton-stream model")
        t_max = t_max or max(s.skeleton.t_true for s in dataset.samples)
        batch, _ = _skeleton_inputs(dataset, indices, t_max)
        rows = []
        for s in range(0, batch.data.shape[0], chunk):
            sub = SequenceBatch(batch.data[s : s + chunk], batch.lengths[s : s + chunk])
            rows.append(model.features(sub))
        return np.concatenate(rows, axis=0)
    if model.stream != "video":
        raise ContractError("cnn_fc6 tap requires the video-stream model")
    clips, owners, _ = _video_clip_table(dataset, indices, model.clip_len)
    rows = []
    for s in range(0, clips.shape[0], chunk):
        rows.append(model.features(clips[s : s + chunk]))
    per_clip = np.concatenate(rows, axis=0)
    return np.stack([per_clip[owners == pos].mean(axis=0) for pos in range(len(indices))])


def train(model, dataset: Dataset, splits: Splits, cfg: TrainConfig) -> RunResult:
    """Mini-batch training with per-epoch validation accuracy. Deterministic
    given the seed; aborts with a diagnostic if the loss goes non-finite."""
    shuffle_rng = Rng(cfg.seed).derive(101)
    dropout_rng = Rng(cfg.seed).derive(202)
    params = dict(model.param_items())
    if cfg.optimizer == "rmsprop":
        state = RmspropState(
            learning_rate=cfg.learning_rate, decay=cfg.decay, momentum=cfg.momentum
        )
    elif cfg.optimizer == "sgd_halving":
        state = SgdHalvingState(learning_rate=cfg.learning_rate, patience=cfg.sgd_patience)
    else:
        raise ConfigError(f"unknown optimizer {cfg.optimizer!r}")

    if model.stream == "skeleton":
        t_max = max(s.skeleton.t_true for s in dataset.samples)
        train_batch, train_labels = _skeleton_inputs(dataset, splits.train, t_max)
        val_batch, val_labels = _skeleton_inputs(dataset, splits.val, t_max)

        def slice_inputs(idx):
            return SequenceBatch(train_batch.data[idx], [train_batch.lengths[i] for i in idx])

        n_train = train_batch.data.shape[0]
    else:
        t_max = None
        clips, owners, owner_labels = _video_clip_table(dataset, splits.train, model.clip_len)
        train_labels = owner_labels[owners]

        def slice_inputs(idx):
            return clips[idx]

        n_train = clips.shape[0]

    result = RunResult(model=model.spec.name, seed=cfg.seed, eval_every=cfg.eval_every)
    steps_per_epoch = int(np.ceil(n_train / cfg.batch_size))
    if n_train % cfg.batch_size == 1:  # single-row remainders are skipped
        steps_per_epoch -= 1
    result.steps_per_epoch = steps_per_epoch
    best_val = -1.0
    step_seconds = []
    improved = None
    for epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(n_train)
        losses = []
        for start in range(0, n_train, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            if idx.size < 2:  # batch statistics need at least two rows
                continue
            xb = slice_inputs(idx)
            yb = train_labels[idx]
            tic = time.perf_counter()
            logits, cache = model.forward(xb, mode="train", rng=dropout_rng)
            loss, grad_logits = softmax_xent(logits, yb)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"{model.spec.name}: non-finite loss at epoch {epoch} "
                    f"step {start // cfg.batch_size}"
                )
            grads = model.backward(cache, grad_logits)
            if cfg.optimizer == "rmsprop":
                rmsprop_step(state, params, grads)
            else:
                sgd_halving_step(state, params, grads, improved)
                improved = None
            step_seconds.append(time.perf_counter() - tic)
            losses.append(loss)
        result.epoch_losses.append(float(np.mean(losses)))
        if (epoch + 1) % cfg.eval_every == 0:
            if model.stream == "skeleton":
                probs = _batched_probs(model, val_batch)
                acc = float(np.mean(probs.argmax(axis=1) == val_labels))
            else:
                acc = evaluate(model, dataset, splits.val).test_accuracy
            result.val_accuracies.append(acc)
            improved = acc > best_val + 1e-12
            best_val = max(best_val, acc)
    test = evaluate(model, dataset, splits.test, t_max)
    result.test_accuracy = test.test_accuracy
    result.confusion = test.confusion
    result.wall_clock_per_step = float(np.mean(step_seconds)) if step_seconds else 0.0
    return result


def emit_confusion(confusion, class_names, path):
    """K x K counts as CSV; the header row carries the class names. Accepts a
    RunResult or a bare matrix."""
    confusion = getattr(confusion, "confusion", confusion)
    k = confusion.shape[0]
    if len(class_names) != k:
        raise DataError(f"{len(class_names)} names for a {k}x{k} matrix")
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(str(c) for c in class_names) + "\n")
        for row in confusion:
            fh.write(",".join(str(int(v)) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------


def finite_diff_grads(loss_fn, arrays, h=1e-5):
    """Central finite differences of a scalar function w.r.t. every entry of
    every array (perturbed in place)."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn()
            flat[i] = orig - h
            fm = loss_fn()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


@dataclass
class CheckEntry:
    name: str
    shapes: list
    max_rel_error: float
    worst: str
    passed: bool


@dataclass
class GradcheckReport:
    threshold: float
    entries: list = field(default_factory=list)

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def format(self):
        lines = []
        for e in self.entries:
            status = "ok" if e.passed else "FAIL"
            lines.append(
                f"{status:4s} {e.name:<18s} max_rel={e.max_rel_error:.3e} at {e.worst}"
            )
        lines.append(f"{'PASS' if self.passed else 'FAIL'}: threshold {self.threshold:g}")
        return "\n".join(lines)


def check_gradients(name, loss_fn, arrays, analytic, h=1e-5, threshold=1e-4, floor=1e-4):
    """Compare analytic gradients against central differences; the relative
    error denominator is floored so near-zero coordinates measure sensibly."""
    numeric = finite_diff_grads(loss_fn, arrays, h)
    worst_err, worst_desc = 0.0, "-"
    for a, nmr, arr in zip(analytic, numeric, arrays):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(nmr)), floor)
        rel = np.abs(a - nmr) / denom
        idx = np.unravel_index(int(rel.argmax()), rel.shape) if rel.size else ()
        if rel.size and rel[idx] > worst_err:
            worst_err = float(rel[idx])
            worst_desc = f"shape{arr.shape}[{','.join(map(str, idx))}]"
    return CheckEntry(
        name=name,
        shapes=[a.shape for a in arrays],
        max_rel_error=worst_err,
        worst=worst_desc,
        passed=worst_err <= threshold,
    )


def _weighted_sum_loss(out, weights):
    return float((out * weights).sum())


def _check_unroll(name, cell, rng, n=2, t=4, i=3):
    d = cell[0].hidden_dim if isinstance(cell, tuple) else cell.hidden_dim
    x = rng.normal(0.0, 0.8, size=(n, t, i))
    lengths = [t, t - 1]
    r_out = rng.normal(size=(n, t, 2 * d if isinstance(cell, tuple) else d))
    if isinstance(cell, tuple):  # bidirectional pair
        cf, cb = cell

        def run():
            batch = SequenceBatch(x, lengths)
            out_f, last_f, _ = unroll(cf, batch, "forward")
            out_b, last_b, _ = unroll(cb, batch, "backward")
            out = np.concatenate([out_f, out_b], axis=2)
            last = np.concatenate([last_f, last_b], axis=1)
            return out, last

        r_last = rng.normal(size=(n, 2 * d))
        arrays = cf.param_arrays() + cb.param_arrays() + [x]

        def loss_fn():
            out, last = run()
            return _weighted_sum_loss(out, r_out) + _weighted_sum_loss(last, r_last)

        batch = SequenceBatch(x, lengths)
        _, _, cache_f = unroll(cf, batch, "forward")
        _, _, cache_b = unroll(cb, batch, "backward")
        grads_f, gx_f = unroll_backward(cf, cache_f, r_out[:, :, :d], r_last[:, :d])
        grads_b, gx_b = unroll_backward(cb, cache_b, r_out[:, :, d:], r_last[:, d:])
        analytic = grads_f + grads_b + [gx_f + gx_b]
    else:
        r_last = rng.normal(size=(n, d))
        arrays = cell.param_arrays() + [x]

        def loss_fn():
            batch = SequenceBatch(x, lengths)
            out, last, _ = unroll(cell, batch, "forward")
            return _weighted_sum_loss(out, r_out) + _weighted_sum_loss(last, r_last)

        batch = SequenceBatch(x, lengths)
        _, _, cache = unroll(cell, batch, "forward")
        pgrads, gx = unroll_backward(cell, cache, r_out, r_last)
        analytic = pgrads + [gx]
    return check_gradients(name, loss_fn, arrays, analytic)


def gradcheck_all(rng=None) -> GradcheckReport:
    """Finite-difference checks for every differentiable layer type on small
    randomized shapes. The fixed default seed keeps pool/hinge fixtures away
    from tie points, so the run is deterministic and clean."""
    rng = rng or Rng(2024)
    report = GradcheckReport(threshold=1e-4)
    add = report.entries.append

    # dense + relu
    p = init_dense(4, 3, rng, activation="relu")
    p.W[...] = rng.normal(0.0, 0.7, size=p.W.shape)
    p.b[...] = rng.normal(0.0, 0.3, size=p.b.shape)
    x = rng.normal(size=(5, 4))
    r = rng.normal(size=(5, 3))

    def dense_loss():
        y, _ = dense_forward(p, x)
        return _weighted_sum_loss(y, r)

    y, cache = dense_forward(p, x)
    dW, db, dx = dense_backward(p, cache, r)
    add(check_gradients("dense_relu", dense_loss, [p.W, p.b, x], [dW, db, dx]))

    # softmax cross-entropy
    logits = rng.normal(0.0, 2.0, size=(6, 5))
    labels = rng.integers(0, 5, size=6)

    def xent_loss():
        return softmax_xent(logits, labels)[0]

    _, grad = softmax_xent(logits, labels)
    add(check_gradients("softmax_xent", xent_loss, [logits], [grad], threshold=1e-5))

    # batch normalization (train mode)
    bn = init_batchnorm(4)
    bn.gamma[...] = rng.uniform(0.5, 1.5, size=4)
    bn.beta[...] = rng.normal(size=4)
    xb = rng.normal(1.0, 2.0, size=(6, 4))
    rb = rng.normal(size=(6, 4))

    def bn_loss():
        yb, _ = batchnorm_forward(bn, xb, "train")
        return _weighted_sum_loss(yb, rb)

    _, bcache = batchnorm_forward(bn, xb, "train")
    gx, ggamma, gbeta = batchnorm_backward(bcache, rb)
    add(check_gradients("batchnorm", bn_loss, [bn.gamma, bn.beta, xb], [ggamma, gbeta, gx]))

    # dropout at inference is the identity
    xd = rng.normal(size=(3, 4))
    rd = rng.normal(size=(3, 4))

    def drop_loss():
        yd, _ = dropout(xd, DropoutConfig(keep_prob=0.75, mode="inference"))
        return _weighted_sum_loss(yd, rd)

    add(check_gradients("dropout_off", drop_loss, [xd], [rd.copy()]))

    # recurrent cells through full unrolls (masked lengths included)
    add(_check_unroll("rnn_tanh", RnnCell(init_rnn_cell(3, 4, rng)), rng))
    add(_check_unroll("lstm", LstmCell(init_lstm_cell(3, 4, rng)), rng))
    add(_check_unroll("gru", GruCell(init_gru_cell(3, 4, rng)), rng))
    add(
        _check_unroll(
            "bidirectional_gru",
            (GruCell(init_gru_cell(3, 3, rng)), GruCell(init_gru_cell(3, 3, rng))),
            rng,
        )
    )

    # two-layer stack feeding a classifier-style loss on the last state
    layers = [
        RecurrentLayer(GruCell(init_gru_cell(3, 3, rng))),
        RecurrentLayer(GruCell(init_gru_cell(3, 2, rng))),
    ]
    xs = rng.normal(0.0, 0.8, size=(2, 4, 3))
    rs = rng.normal(size=(2, 2))
    stack_arrays = [a for L in layers for _, a in L.param_items()] + [xs]

    def stack_loss():
        batch = SequenceBatch(xs, [4, 3])
        _, last, _ = stack(layers, batch)
        return _weighted_sum_loss(last, rs)

    _, last, caches = stack(layers, SequenceBatch(xs, [4, 3]))
    gseq, per_layer = stack_backward(layers, caches, None, rs)
    stack_analytic = [g for pgrads in per_layer for g in pgrads] + [gseq]
    add(check_gradients("stacked_gru", stack_loss, stack_arrays, stack_analytic))

    # 3D convolution
    conv = init_conv3d(2, 2, (3, 3, 3), (1, 1, 1), rng)
    conv.kernels[...] = rng.normal(0.0, 0.4, size=conv.kernels.shape)
    conv.bias[...] = rng.normal(0.0, 0.2, size=conv.bias.shape)
    xc = rng.normal(size=(1, 2, 3, 4, 4))
    rc_shape = conv3d_forward(conv, xc)[0].shape
    rc = rng.normal(size=rc_shape)

    def conv_loss():
        yc, _ = conv3d_forward(conv, xc)
        return _weighted_sum_loss(yc, rc)

    _, ccache = conv3d_forward(conv, xc)
    gk, gb, gx = conv3d_backward(ccache, rc)
    add(check_gradients("conv3d", conv_loss, [conv.kernels, conv.bias, xc], [gk, gb, gx]))

    # 3D max pooling (random values sit far from ties)
    spec = Pool3dSpec((2, 2, 2))
    xpool = rng.normal(size=(1, 2, 4, 4, 4))
    rp = rng.normal(size=(1, 2, 2, 2, 2))

    def pool_loss():
        yp, _ = maxpool3d(spec, xpool)
        return _weighted_sum_loss(yp, rp)

    _, pcache = maxpool3d(spec, xpool)
    gxp = maxpool3d_backward(pcache, rp)
    add(check_gradients("maxpool3d", pool_loss, [xpool], [gxp]))

    # linear SVM head: hinge objective at a point with no margin near the kink
    xf = rng.normal(size=(8, 3))
    yf = np.where(rng.uniform(size=8) < 0.5, 1.0, -1.0)
    wf = rng.normal(0.0, 0.5, size=3)
    bf = np.array([0.1])
    c_svm = 2.0
    margins = yf * (xf @ wf + bf[0])
    if np.abs(1.0 - margins).min() < 1e-3:  # keep the checkpoint differentiable
        wf *= 1.1

    def svm_loss():
        m = yf * (xf @ wf + bf[0])
        return 0.5 * float(wf @ wf) + c_svm * float(np.maximum(0.0, 1.0 - m).sum())

    m = yf * (xf @ wf + bf[0])
    viol = m < 1.0
    gw = wf - c_svm * (yf[viol] @ xf[viol])
    gb = np.array([-c_svm * yf[viol].sum()])
    add(check_gradients("svm_hinge", svm_loss, [wf, bf], [gw, gb]))

    return report


# ---------------------------------------------------------------------------
# Fusion runs and the full ladder comparison
# ---------------------------------------------------------------------------


def _confusion_of(pred_labels, labels, k):
    confusion = np.zeros((k, k), dtype=np.int64)
    for p, y in zip(pred_labels, labels):
        confusion[y, p] += 1
    return confusion


def run_decision_fusion(rnn_model, cnn_model, dataset: Dataset, splits: Splits) -> dict:
    """Tune trust weights on validation, vote on the test set."""
    val_r = predict_dataset(rnn_model, dataset, splits.val)
    val_c = predict_dataset(cnn_model, dataset, splits.val)
    weights = search_trust_weights(val_r, val_c, dataset.labels(splits.val))
    test_r = predict_dataset(rnn_model, dataset, splits.test)
    test_c = predict_dataset(cnn_model, dataset, splits.test)
    fused = [decision_fuse(weights, r, c) for r, c in zip(test_r, test_c)]
    labels = dataset.labels(splits.test)
    confusion = _confusion_of([p.label for p in fused], labels, dataset.n_classes)
    return {
        "w_r": weights.w_r,
        "w_c": weights.w_c,
        "test_accuracy": float(np.trace(confusion)) / max(len(labels), 1),
        "confusion": confusion.tolist(),
    }


def run_feature_fusion(rnn_model, cnn_model, dataset: Dataset, splits: Splits, svm_c=8.0) -> dict:
    """Concatenate the per-stream feature taps, L2 normalize, classify with a
    one-vs-rest linear SVM trained on the training split."""
    fuse = lambda idx: feature_fuse(
        extract_features(rnn_model, dataset, idx, "rnn_fc"),
        extract_features(cnn_model, dataset, idx, "cnn_fc6"),
    )
    svm = svm_train(fuse(splits.train), dataset.labels(splits.train), svm_c)
    pred_labels, _ = svm_predict(svm, fuse(splits.test))
    labels = dataset.labels(splits.test)
    confusion = _confusion_of(pred_labels, labels, dataset.n_classes)
    return {
        "svm_c": float(svm_c),
        "test_accuracy": float(np.trace(confusion)) / max(len(labels), 1),
        "confusion": confusion.tolist(),
    }


def train_config_for(model_name, cfg: dict, seed=None) -> TrainConfig:
    """Desk-scale training settings from a parsed config, per stream."""
    seed = cfg["seed"] if seed is None else seed
    if model_name.startswith("C3D"):
        return TrainConfig(
            epochs=cfg["cnn_epochs"],
            batch_size=cfg["cnn_batch_size"],
            optimizer="sgd_halving",
            learning_rate=cfg["cnn_learning_rate"],
            eval_every=cfg["eval_every"],
            seed=seed,
        )
    return TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        optimizer="rmsprop",
        learning_rate=cfg["learning_rate"],
        decay=cfg["decay"],
        eval_every=cfg["eval_every"],
        seed=seed,
    )


def model_spec_for(model_name, cfg: dict, dataset: Dataset) -> ModelSpec:
    return ModelSpec(
        name=model_name,
        input_dim=dataset[0].skeleton.feature_width,
        n_classes=dataset.n_classes,
        hidden_dim=cfg["hidden_dim"],
        keep_prob=cfg["keep_prob"],
        video_shape=cfg["video_shape"],
        cnn_filters=cfg["cnn_filters"],
        cnn_fc_dim=cfg["cnn_fc_dim"],
    )


def train_variant(model_name, dataset: Dataset, splits: Splits, cfg: dict, seed=None):
    """Build and train one ladder variant; returns (model, RunResult)."""
    seed = cfg["seed"] if seed is None else seed
    spec = model_spec_for(model_name, cfg, dataset)
    init_rng = Rng(seed).derive(1000 + LADDER_VARIANTS.index(model_name))
    model = build_model(spec, init_rng)
    result = train(model, dataset, splits, train_config_for(model_name, cfg, seed))
    return model, result


def run_ladder(dataset: Dataset, cfg: dict, out_dir=None):
    """Train every configured ladder variant on one split, then add the two
    fusion rows when both streams are present. Returns (results, timing,
    models, splits); results are canonical dicts, timing stays separate so the
    results file is bit-stable across reruns."""
    splits = make_splits(dataset, SplitSpec(cfg["split_mode"]), Rng(cfg["seed"]).derive(7))
    results, timing, trained = {}, {}, {}
    for name in cfg["ladder_models"]:
        model, res = train_variant(name, dataset, splits, cfg)
        results[name] = res.canonical_dict()
        timing[name] = res.wall_clock_per_step
        trained[name] = model
    cnn_name = next((n for n in ("C3D-DESK", "C3D") if n in trained), None)
    if "BI-GRU2-BN-DP-H" in trained and cnn_name:
        rnn_model, cnn_model = trained["BI-GRU2-BN-DP-H"], trained[cnn_name]
        results["DECISION-FUSION"] = run_decision_fusion(rnn_model, cnn_model, dataset, splits)
        results["FEATURE-FUSION"] = run_feature_fusion(
            rnn_model, cnn_model, dataset, splits, cfg["svm_c"]
        )
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "ladder_results.json"), "w", newline="\n") as fh:
            fh.write(json.dumps(results, sort_keys=True, indent=2))
            fh.write("\n")
        with open(os.path.join(out_dir, "timing.json"), "w", newline="\n") as fh:
            fh.write(json.dumps(timing, sort_keys=True, indent=2))
            fh.write("\n")
        names = list(range(dataset.n_classes))
        for name, res in results.items():
            if res.get("confusion") is not None:
                emit_confusion(
                    np.asarray(res["confusion"]),
                    names,
                    os.path.join(out_dir, f"confusion_{name}.csv"),
                )
    return results, timing, trained, splits
