"""Fusion MLP, frozen causal Transformer backbone and scoring.

The backbone is a seeded, randomly initialized pre-normalization stack.
Its weights are plain arrays (never tape parameters), so gradients flow
through it to the fusion MLP but no backbone gradient is ever computed,
which is the freeze contract.  When temporal filtering is enabled it runs
on the full hidden matrix after each layer's residual blocks; the filter
is linear and self-adjoint, so its tape node backpropagates by filtering
the upstream gradient.  Note the full-matrix filter intentionally mixes
information across positions, so strict causality holds only with the
filter disabled (or in the slower causal-safe mode, which filters each
prefix separately).

No positional embeddings: position information enters only through the
causal mask, which is all the spectral instrumentation needs.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from freqrec.errors import InputError
from freqrec.numcore import autodiff as ad
from freqrec.numcore.fourier import dft
from freqrec.tfm import ButterworthSpec, butterworth_gains, make_filter

CAUSAL_MASK_VALUE = -1e9


@dataclass
class FusionMLP:
    """Two affine layers with a nonlinearity between; the only trainable
    component of the model."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: str = "gelu"

    def param_arrays(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def param_names(self):
        return ["mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2"]

    def make_vars(self):
        return [ad.parameter(a, name=n) for a, n in zip(self.param_arrays(), self.param_names())]

    def apply(self, x, mlp_vars):
        w1, b1, w2, b2 = mlp_vars
        h = ad.add(ad.matmul(x, w1), b1)
        if self.activation == "gelu":
            h = ad.gelu(h)
        elif self.activation != "linear":
            raise InputError(f"unknown activation {self.activation!r}")
        return ad.add(ad.matmul(h, w2), b2)

    @property
    def d_in(self):
        return self.w1.shape[0]

    @property
    def d_model(self):
        return self.w2.shape[1]


def init_fusion_mlp(d_in, d_model, hidden=None, seed=0, activation="gelu"):
    hidden = hidden if hidden is not None else 2 * d_model
    rng = np.random.default_rng(seed)
    w1 = rng.standard_normal((d_in, hidden)) / np.sqrt(d_in)
    w2 = rng.standard_normal((hidden, d_model)) / np.sqrt(hidden)
    return FusionMLP(w1=w1, b1=np.zeros(hidden), w2=w2, b2=np.zeros(d_model),
                     activation=activation)


@dataclass
class BackboneLayer:
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    wf1: np.ndarray
    bf1: np.ndarray
    wf2: np.ndarray
    bf2: np.ndarray

    def arrays(self):
        return [self.ln1_g, self.ln1_b, self.wq, self.wk, self.wv, self.wo,
                self.ln2_g, self.ln2_b, self.wf1, self.bf1, self.wf2, self.bf2]


@dataclass
class Backbone:
    layers: list
    d_model: int
    n_heads: int
    seed: int
    ffn_mult: int = 4
    tfm_enabled: bool = False
    tfm_spec: ButterworthSpec = field(default_factory=ButterworthSpec)
    tfm_residual: bool = False
    tfm_causal_safe: bool = False

    @property
    def n_layers(self):
        return len(self.layers)

    def parameter_hash(self):
        digest = hashlib.sha256()
        for layer in self.layers:
            for a in layer.arrays():
                digest.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return digest.hexdigest()


def init_backbone(n_layers=4, d_model=64, n_heads=2, seed=0, ffn_mult=4,
                  tfm_enabled=False, tfm_spec=None, tfm_residual=False,
                  tfm_causal_safe=False):
    if d_model % n_heads != 0:
        raise InputError(f"d_model {d_model} must divide evenly into {n_heads} heads")
    rng = np.random.default_rng(seed)
    hidden = ffn_mult * d_model
    layers = []
    for _ in range(n_layers):
        layers.append(BackboneLayer(
            ln1_g=np.ones(d_model), ln1_b=np.zeros(d_model),
            wq=rng.standard_normal((d_model, d_model)) / np.sqrt(d_model),
            wk=rng.standard_normal((d_model, d_model)) / np.sqrt(d_model),
            wv=rng.standard_normal((d_model, d_model)) / np.sqrt(d_model),
            wo=rng.standard_normal((d_model, d_model)) / np.sqrt(d_model),
            ln2_g=np.ones(d_model), ln2_b=np.zeros(d_model),
            wf1=rng.standard_normal((d_model, hidden)) / np.sqrt(d_model),
            bf1=np.zeros(hidden),
            wf2=rng.standard_normal((hidden, d_model)) / np.sqrt(hidden),
            bf2=np.zeros(d_model),
        ))
    return Backbone(layers=layers, d_model=d_model, n_heads=n_heads, seed=seed,
                    ffn_mult=ffn_mult, tfm_enabled=tfm_enabled,
                    tfm_spec=tfm_spec if tfm_spec is not None else ButterworthSpec(),
                    tfm_residual=tfm_residual, tfm_causal_safe=tfm_causal_safe)


@dataclass
class LayerTrace:
    """Hidden matrices per residual-stream state: index 0 is the fused input,
    index l the state after layer l (including the filter when enabled)."""

    matrices: list

    @property
    def n_layers(self):
        return len(self.matrices) - 1


def _causal_safe_matrix(spec, t_len):
    """Dense operator for prefix-only filtering: row t is row t of the
    length-(t+1) circulant filter, zero-padded.  Linear but not symmetric,
    so the tape node uses the explicit transpose adjoint."""
    m = np.zeros((t_len, t_len))
    m[0, 0] = 1.0
    for t in range(1, t_len):
        n = t + 1
        kernel = dft(butterworth_gains(spec, n).astype(complex), inverse=True).real
        for s in range(n):
            m[t, s] = kernel[(s - t) % n]
    return m


def _attention_block(x, layer, n_heads, mask):
    d_model = layer.wq.shape[0]
    dh = d_model // n_heads
    heads = []
    for h in range(n_heads):
        sl = slice(h * dh, (h + 1) * dh)
        q = ad.matmul(x, layer.wq[:, sl])
        k = ad.matmul(x, layer.wk[:, sl])
        v = ad.matmul(x, layer.wv[:, sl])
        scores = ad.add(ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(dh)), mask)
        heads.append(ad.matmul(ad.softmax(scores), v))
    return ad.matmul(ad.concat_cols(heads), layer.wo)


def backbone_forward(backbone, tokens, capture=False):
    """Run the frozen stack on a T x d_model token node.  Returns the final
    hidden node and, when capture is set, a LayerTrace of value snapshots."""
    t_len = tokens.value.shape[0]
    mask = np.triu(np.full((t_len, t_len), CAUSAL_MASK_VALUE), k=1)
    h = tokens
    snapshots = [h.value.copy()] if capture else None
    if backbone.tfm_enabled:
        if backbone.tfm_causal_safe:
            op_matrix = _causal_safe_matrix(backbone.tfm_spec, t_len)
            op_matrix_t = op_matrix.T.copy()

            def tfm_node(node):
                return ad.linear_operator(node, lambda a: op_matrix @ a,
                                          lambda g: op_matrix_t @ g, name="tfm_causal")
        else:
            filt = make_filter(backbone.tfm_spec, t_len)

            def tfm_node(node):
                return ad.self_adjoint_linear(node, filt, name="tfm")
    for layer in backbone.layers:
        att = _attention_block(ad.layer_norm(h, layer.ln1_g, layer.ln1_b), layer,
                               backbone.n_heads, mask)
        h = ad.add(h, att)
        y = ad.layer_norm(h, layer.ln2_g, layer.ln2_b)
        ff = ad.add(ad.matmul(ad.gelu(ad.add(ad.matmul(y, layer.wf1), layer.bf1)),
                              layer.wf2), layer.bf2)
        h = ad.add(h, ff)
        if backbone.tfm_enabled:
            filtered = tfm_node(h)
            h = ad.add(h, filtered) if backbone.tfm_residual else filtered
        if capture:
            snapshots.append(h.value.copy())
    trace = LayerTrace(snapshots) if capture else None
    return h, trace


@dataclass
class RecModel:
    id_table: "EmbeddingTable"
    text_table: "EmbeddingTable"
    mlp: FusionMLP
    backbone: Backbone
    # optional linear self-adjoint operator over the item axis, applied to the
    # full fused token table (graph filtering at the token stage instead of
    # offline on the ID table); forces full-catalog token computation
    token_filter: object = None

    def __post_init__(self):
        if self.id_table.n_items != self.text_table.n_items:
            raise InputError("ID and text tables cover different item vocabularies")
        if self.mlp.d_in != self.id_table.dim + self.text_table.dim:
            raise InputError(
                f"fusion MLP expects input width {self.mlp.d_in}, tables give "
                f"{self.id_table.dim + self.text_table.dim}")
        if self.mlp.d_model != self.backbone.d_model:
            raise InputError("fusion MLP output width must equal backbone width")

    @property
    def n_items(self):
        return self.id_table.n_items

    def fused_inputs(self):
        return np.concatenate([self.id_table.rows, self.text_table.rows], axis=1)


def fuse(id_table, text_table, mlp, mlp_vars=None, item_ids=None):
    """Token node for the given items (all items by default): concatenate
    (id, text) rows and push them through the fusion MLP."""
    if id_table.n_items != text_table.n_items:
        raise InputError("ID and text tables cover different item vocabularies")
    inputs = np.concatenate([id_table.rows, text_table.rows], axis=1)
    if item_ids is not None:
        ids = np.asarray(item_ids, dtype=np.intp)
        if ids.size and (ids.min() < 0 or ids.max() >= id_table.n_items):
            raise InputError("item index out of range")
        inputs = inputs[ids]
    mlp_vars = mlp_vars if mlp_vars is not None else mlp.make_vars()
    return mlp.apply(ad.constant(inputs), mlp_vars)


def model_tokens(model, item_ids=None, mlp_vars=None):
    """Token node for the model's items, honoring the optional token-stage
    graph filter (which needs the full catalog before any row selection)."""
    if model.token_filter is None:
        return fuse(model.id_table, model.text_table, model.mlp,
                    mlp_vars=mlp_vars, item_ids=item_ids)
    full = fuse(model.id_table, model.text_table, model.mlp, mlp_vars=mlp_vars)
    filtered = ad.self_adjoint_linear(full, model.token_filter, name="token_filter")
    if item_ids is None:
        return filtered
    return ad.gather_rows(filtered, np.asarray(item_ids, dtype=np.intp))


def forward(model, sequence, capture=False, mlp_vars=None):
    """User representation for one item-index sequence: run the fused tokens
    through the backbone and take the last position's final hidden row.

    Returns (user_rep_node, final_hidden_node, trace)."""
    seq = np.asarray(sequence, dtype=np.intp)
    if seq.ndim != 1 or seq.size == 0:
        raise InputError("sequence must be a non-empty 1-D list of item indices")
    if seq.min() < 0 or seq.max() >= model.n_items:
        raise InputError("unknown item index in sequence")
    tokens = model_tokens(model, item_ids=seq, mlp_vars=mlp_vars)
    hidden, trace = backbone_forward(model.backbone, tokens, capture=capture)
    user_rep = ad.slice_rows(hidden, seq.size - 1, seq.size)
    return user_rep, hidden, trace


def score(user_rep, candidate_tokens):
    """Inner-product scores in candidate order."""
    u = np.asarray(user_rep, dtype=float).reshape(-1)
    c = np.asarray(candidate_tokens, dtype=float)
    if c.ndim != 2 or c.shape[1] != u.shape[0]:
        raise InputError(f"candidate tokens {c.shape} do not match user width {u.shape[0]}")
    return c @ u


def all_item_tokens(model):
    """Plain-array token table for every item (no gradients), for scoring."""
    return model_tokens(model).value
