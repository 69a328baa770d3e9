"""Fusion-MLP training with a decoupled-weight-decay adaptive optimizer.

The loss is a sampled softmax over each training position: the position's
next item is the positive, scored against n_negatives uniform catalog
draws shared across the positions of one sequence.  Only the fusion MLP
receives updates; the backbone is held frozen by construction (its
weights never become tape parameters), which the parameter-hash test
pins down.  Early stopping watches validation NDCG@10.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np

from freqrec.errors import InputError
from freqrec.model.network import (
    FusionMLP,
    RecModel,
    backbone_forward,
    model_tokens,
)
from freqrec.numcore import autodiff as ad
from freqrec.tfm import ButterworthSpec

log = logging.getLogger(__name__)


class AdamW:
    """Adaptive moments with decoupled weight decay:

        m <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
        p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd * p)

    with the usual 1/(1-b^t) bias corrections.  Updates happen in place on
    the parameter arrays."""

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = list(params)
        self.lr = float(lr)
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads):
        if len(grads) != len(self.params):
            raise InputError("gradient list does not match parameter list")
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps) + self.weight_decay * p
            p -= self.lr * update


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4            # protocol grid: {1e-5, 5e-5, 1e-4, 5e-4}
    batch_size: int = 32
    epochs: int = 20
    patience: int = 3
    n_negatives: int = 100
    seed: int = 0
    weight_decay: float = 0.01
    eval_seed: int = 0
    eval_candidates: int = 100


def sequence_loss(model, sequence, negatives, mlp_vars):
    """Mean sampled-softmax loss over the next-item positions of one
    training sequence; negatives are shared across its positions."""
    seq = np.asarray(sequence, dtype=np.intp)
    if seq.size < 2:
        raise InputError("need at least 2 items to form a prediction position")
    negatives = np.asarray(negatives, dtype=np.intp)
    needed = np.concatenate([seq, negatives])
    unique, inverse = np.unique(needed, return_inverse=True)
    local_seq = inverse[:seq.size]
    local_negs = inverse[seq.size:]

    tokens = model_tokens(model, item_ids=unique, mlp_vars=mlp_vars)
    seq_tokens = ad.gather_rows(tokens, local_seq)
    hidden, _ = backbone_forward(model.backbone, seq_tokens)
    h_pred = ad.slice_rows(hidden, 0, seq.size - 1)

    pos_tokens = ad.gather_rows(tokens, local_seq[1:])
    neg_tokens = ad.gather_rows(tokens, local_negs)
    pos_scores = ad.reshape(ad.sum_axis1(ad.mul(h_pred, pos_tokens)), (seq.size - 1, 1))
    neg_scores = ad.matmul(h_pred, ad.transpose(neg_tokens))
    logits = ad.concat_cols([pos_scores, neg_scores])
    return ad.neg(ad.mean_all(ad.take_column(ad.log_softmax(logits), 0)))


@dataclass
class TrainResult:
    entries: list
    best_epoch: int
    best_valid_ndcg: float
    aborted: bool = False

    def write_log(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


def train(model, split, config=TrainConfig(), log_path=None, workers=1):
    """Train the fusion MLP in place; other components never change.

    Each epoch shuffles users, accumulates per-sequence gradients into
    batch means and applies one optimizer step per batch.  Validation
    NDCG@10 drives early stopping, and the best-epoch MLP weights are
    restored at the end.  A non-finite loss aborts with the last good
    weights kept."""
    from freqrec.evalharness import evaluate  # deferred: evalharness scores models

    params = model.mlp.param_arrays()
    opt = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    best = [np.array(p, copy=True) for p in params]
    best_metric = -np.inf
    best_epoch = 0
    entries = []
    stale = 0
    aborted = False

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(split.n_users)
        epoch_loss = 0.0
        n_sequences = 0
        for start in range(0, order.size, config.batch_size):
            batch = order[start:start + config.batch_size]
            grad_sum = [np.zeros_like(p) for p in params]
            used = 0
            for user in batch:
                seq = split.train_items(int(user))
                negs = rng.integers(0, split.n_items, size=config.n_negatives)
                if seq.size < 2:
                    continue
                mlp_vars = model.mlp.make_vars()
                loss = sequence_loss(model, seq, negs, mlp_vars)
                if not np.isfinite(loss.value):
                    aborted = True
                    break
                grads, _ = ad.tape_gradient(loss, mlp_vars)
                for gs, g in zip(grad_sum, grads):
                    gs += g
                epoch_loss += float(loss.value)
                used += 1
            if aborted:
                break
            if used == 0:
                log.warning("epoch %d: skipped a batch with no usable sequences", epoch)
                continue
            opt.step([g / used for g in grad_sum])
            n_sequences += used
        if aborted:
            break
        mean_loss = epoch_loss / max(n_sequences, 1)
        report = evaluate(model, split, phase="valid", seed=config.eval_seed,
                          n_candidates=config.eval_candidates, workers=workers)
        entries.append({"epoch": epoch, "loss": mean_loss,
                        "valid_ndcg10": report.ndcg, "valid_recall10": report.recall,
                        "lr": config.lr})
        if report.ndcg > best_metric:
            best_metric = report.ndcg
            best_epoch = epoch
            best = [np.array(p, copy=True) for p in params]
            stale = 0
        else:
            stale += 1
            if stale > config.patience:
                break

    for p, b in zip(params, best):
        p[...] = b
    result = TrainResult(entries=entries, best_epoch=best_epoch,
                         best_valid_ndcg=(best_metric if np.isfinite(best_metric) else 0.0),
                         aborted=aborted)
    if log_path is not None:
        result.write_log(log_path)
    return result


CHECKPOINT_MAGIC = b"FRQR\x01"


def save_checkpoint(model, path, fingerprint="", extra=None):
    """Versioned binary checkpoint: magic bytes, a JSON config header and the
    raw little-endian float64 fusion-MLP weight blocks.  The frozen
    backbone is reproducible from its config, so only its recipe is
    stored."""
    mlp = model.mlp
    bb = model.backbone
    header = {
        "format": 1,
        "fingerprint": fingerprint,
        "n_items": model.n_items,
        "d_id": model.id_table.dim,
        "d_text": model.text_table.dim,
        "mlp": {"activation": mlp.activation,
                "shapes": [list(a.shape) for a in mlp.param_arrays()]},
        "backbone": {"n_layers": bb.n_layers, "d_model": bb.d_model,
                     "n_heads": bb.n_heads, "seed": bb.seed, "ffn_mult": bb.ffn_mult,
                     "tfm_enabled": bb.tfm_enabled,
                     "tfm_cutoff": bb.tfm_spec.cutoff, "tfm_order": bb.tfm_spec.order,
                     "tfm_residual": bb.tfm_residual,
                     "tfm_causal_safe": bb.tfm_causal_safe},
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for a in mlp.param_arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path, id_table, text_table):
    from freqrec.model.network import init_backbone

    try:
        handle = open(path, "rb")
    except OSError as exc:
        raise InputError(f"cannot read checkpoint {path}: {exc}") from exc
    with handle as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise InputError(f"{path}: not a checkpoint (bad magic bytes)")
        header = json.loads(fh.readline().decode("utf-8"))
        blob = fh.read()
    if header.get("format") != 1:
        raise InputError(f"{path}: unsupported checkpoint format {header.get('format')}")
    if header["n_items"] != id_table.n_items:
        raise InputError(
            f"{path}: checkpoint covers {header['n_items']} items, tables have "
            f"{id_table.n_items}")
    if header["d_id"] != id_table.dim or header["d_text"] != text_table.dim:
        raise InputError(f"{path}: embedding dimensions do not match the tables")
    shapes = [tuple(s) for s in header["mlp"]["shapes"]]
    arrays = []
    offset = 0
    for shape in shapes:
        size = int(np.prod(shape)) * 8
        arrays.append(np.frombuffer(blob[offset:offset + size], dtype="<f8")
                      .reshape(shape).copy())
        offset += size
    if offset != len(blob):
        raise InputError(f"{path}: trailing bytes in weight payload")
    mlp = FusionMLP(w1=arrays[0], b1=arrays[1], w2=arrays[2], b2=arrays[3],
                    activation=header["mlp"]["activation"])
    bb_cfg = header["backbone"]
    backbone = init_backbone(
        n_layers=bb_cfg["n_layers"], d_model=bb_cfg["d_model"],
        n_heads=bb_cfg["n_heads"], seed=bb_cfg["seed"], ffn_mult=bb_cfg["ffn_mult"],
        tfm_enabled=bb_cfg["tfm_enabled"],
        tfm_spec=ButterworthSpec(cutoff=bb_cfg["tfm_cutoff"], order=bb_cfg["tfm_order"]),
        tfm_residual=bb_cfg["tfm_residual"], tfm_causal_safe=bb_cfg["tfm_causal_safe"])
    model = RecModel(id_table=id_table, text_table=text_table, mlp=mlp, backbone=backbone)
    return model, header
