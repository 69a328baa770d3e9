"""Minimal reverse-mode differentiation tape over numpy arrays.

Each operation records a Var node holding its value, its parent nodes and
a backward closure that scatters the upstream gradient to the parents.
Gradients are only propagated into subgraphs that contain a trainable
parameter (requires_grad), so a frozen backbone costs nothing extra on
the backward pass.

The self_adjoint_linear node is the hook for spectral filters: a linear
operator whose matrix is symmetric backpropagates by applying the very
same operator to the upstream gradient.
"""

import numpy as np

from freqrec.errors import InputError, ProtocolError


class Var:
    """One tape node: a value, its provenance and a backward rule."""

    __slots__ = ("value", "grad", "parents", "backward_rule", "requires_grad", "trainable", "name")

    def __init__(self, value, parents=(), backward_rule=None, requires_grad=False,
                 trainable=False, name=""):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.parents = tuple(parents)
        self.backward_rule = backward_rule
        self.requires_grad = bool(requires_grad)
        self.trainable = bool(trainable)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = self.name or "var"
        return f"Var({tag}, shape={self.value.shape}, trainable={self.trainable})"


def constant(value, name=""):
    return Var(value, name=name)


def parameter(value, name=""):
    return Var(value, requires_grad=True, trainable=True, name=name)


def _as_var(x):
    return x if isinstance(x, Var) else Var(x)


def _needs(*vars_):
    return any(v.requires_grad for v in vars_)


def _accumulate(var, g):
    if not var.requires_grad:
        return
    if var.grad is None:
        var.grad = np.array(g, dtype=float, copy=True)
    else:
        var.grad += g


def _unbroadcast(g, shape):
    """Sum gradient g down to the given operand shape after broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def matmul(a, b):
    a, b = _as_var(a), _as_var(b)
    out = Var(a.value @ b.value, (a, b), requires_grad=_needs(a, b))

    def rule(g):
        if a.requires_grad:
            _accumulate(a, g @ b.value.T)
        if b.requires_grad:
            _accumulate(b, a.value.T @ g)

    out.backward_rule = rule
    return out


def transpose(a):
    a = _as_var(a)
    out = Var(a.value.T, (a,), requires_grad=a.requires_grad)
    out.backward_rule = lambda g: _accumulate(a, g.T)
    return out


def add(a, b):
    a, b = _as_var(a), _as_var(b)
    out = Var(a.value + b.value, (a, b), requires_grad=_needs(a, b))

    def rule(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.value.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.value.shape))

    out.backward_rule = rule
    return out


def sub(a, b):
    a, b = _as_var(a), _as_var(b)
    out = Var(a.value - b.value, (a, b), requires_grad=_needs(a, b))

    def rule(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.value.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g, b.value.shape))

    out.backward_rule = rule
    return out


def mul(a, b):
    a, b = _as_var(a), _as_var(b)
    out = Var(a.value * b.value, (a, b), requires_grad=_needs(a, b))

    def rule(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.value, a.value.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.value, b.value.shape))

    out.backward_rule = rule
    return out


def scale(a, c):
    a = _as_var(a)
    c = float(c)
    out = Var(a.value * c, (a,), requires_grad=a.requires_grad)
    out.backward_rule = lambda g: _accumulate(a, g * c)
    return out


_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_K = 0.044715


def gelu(a):
    """Smooth Gaussian-error-style activation (tanh form); the derivative
    below differentiates this exact expression, so gradient checks are
    tight."""
    a = _as_var(a)
    x = a.value
    inner = _GELU_C * (x + _GELU_K * x**3)
    th = np.tanh(inner)
    out = Var(0.5 * x * (1.0 + th), (a,), requires_grad=a.requires_grad)

    def rule(g):
        d_inner = _GELU_C * (1.0 + 3.0 * _GELU_K * x**2)
        local = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th**2) * d_inner
        _accumulate(a, g * local)

    out.backward_rule = rule
    return out


def softmax(a):
    """Row softmax over the last axis, computed with max subtraction."""
    a = _as_var(a)
    z = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Var(y, (a,), requires_grad=a.requires_grad)

    def rule(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        _accumulate(a, y * (g - dot))

    out.backward_rule = rule
    return out


def log_softmax(a):
    a = _as_var(a)
    z = a.value - a.value.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse
    out = Var(y, (a,), requires_grad=a.requires_grad)

    def rule(g):
        _accumulate(a, g - np.exp(y) * g.sum(axis=-1, keepdims=True))

    out.backward_rule = rule
    return out


def layer_norm(a, gain, bias, eps=1e-5):
    """Normalization over the last axis with fixed (non-trainable) gain and
    bias arrays."""
    a = _as_var(a)
    gain = np.asarray(gain, dtype=float)
    bias = np.asarray(bias, dtype=float)
    x = a.value
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    out = Var(xhat * gain + bias, (a,), requires_grad=a.requires_grad)

    def rule(g):
        d = x.shape[-1]
        gx = g * gain
        term = gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).sum(axis=-1, keepdims=True) / d
        _accumulate(a, term * inv)

    out.backward_rule = rule
    return out


def linear_operator(a, op, adjoint, name="linear_operator"):
    """Apply a linear operator with an explicitly supplied adjoint."""
    a = _as_var(a)
    out = Var(op(a.value), (a,), requires_grad=a.requires_grad, name=name)
    out.backward_rule = lambda g: _accumulate(a, adjoint(g))
    return out


def self_adjoint_linear(a, op, name="self_adjoint_linear"):
    """Apply a linear, self-adjoint operator op: ndarray -> ndarray.

    Because the operator equals its own adjoint, the backward pass is one
    more application of op to the upstream gradient.  The caller is
    responsible for the operator actually being linear and symmetric.
    """
    return linear_operator(a, op, op, name=name)


def gather_rows(a, idx):
    a = _as_var(a)
    idx = np.asarray(idx, dtype=np.intp)
    out = Var(a.value[idx], (a,), requires_grad=a.requires_grad)

    def rule(g):
        if a.requires_grad:
            da = np.zeros_like(a.value)
            np.add.at(da, idx, g)
            _accumulate(a, da)

    out.backward_rule = rule
    return out


def slice_rows(a, start, stop):
    a = _as_var(a)
    out = Var(a.value[start:stop], (a,), requires_grad=a.requires_grad)

    def rule(g):
        if a.requires_grad:
            da = np.zeros_like(a.value)
            da[start:stop] = g
            _accumulate(a, da)

    out.backward_rule = rule
    return out


def take_column(a, j):
    a = _as_var(a)
    out = Var(a.value[:, j], (a,), requires_grad=a.requires_grad)

    def rule(g):
        if a.requires_grad:
            da = np.zeros_like(a.value)
            da[:, j] = g
            _accumulate(a, da)

    out.backward_rule = rule
    return out


def concat_cols(parts):
    parts = [_as_var(p) for p in parts]
    widths = [p.value.shape[1] for p in parts]
    out = Var(np.concatenate([p.value for p in parts], axis=1), tuple(parts),
              requires_grad=_needs(*parts))

    def rule(g):
        offset = 0
        for p, w in zip(parts, widths):
            if p.requires_grad:
                _accumulate(p, g[:, offset:offset + w])
            offset += w

    out.backward_rule = rule
    return out


def reshape(a, shape):
    a = _as_var(a)
    out = Var(a.value.reshape(shape), (a,), requires_grad=a.requires_grad)
    out.backward_rule = lambda g: _accumulate(a, g.reshape(a.value.shape))
    return out


def sum_axis1(a):
    a = _as_var(a)
    out = Var(a.value.sum(axis=1), (a,), requires_grad=a.requires_grad)
    out.backward_rule = lambda g: _accumulate(a, np.repeat(g[:, None], a.value.shape[1], axis=1))
    return out


def mean_all(a):
    a = _as_var(a)
    out = Var(np.asarray(a.value.mean()), (a,), requires_grad=a.requires_grad)
    out.backward_rule = lambda g: _accumulate(a, np.full_like(a.value, float(g) / a.value.size))
    return out


def neg(a):
    return scale(a, -1.0)


def _topo_order(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def tape_gradient(loss, params):
    """Reverse-mode gradients of a scalar loss for each trainable parameter.

    Returns (grads, unreachable): one array per parameter, and the names of
    parameters the loss does not depend on (their gradient is zeros).
    """
    if loss.value.size != 1:
        raise InputError(f"loss must be scalar, got shape {loss.value.shape}")
    order = _topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.grad is None or node.backward_rule is None:
            continue
        node.backward_rule(node.grad)
    grads, unreachable = [], []
    for i, p in enumerate(params):
        if p.grad is None:
            grads.append(np.zeros_like(p.value))
            unreachable.append(p.name or f"param{i}")
        else:
            grads.append(p.grad)
    return grads, unreachable


class GradientCheckReport:
    """Worst-case comparison of analytic against central-difference gradients."""

    def __init__(self, per_param):
        self.per_param = per_param
        self.max_relative_error = max((e for _, e, _ in per_param), default=0.0)

    def worst(self):
        name, err, idx = max(self.per_param, key=lambda t: t[1])
        return name, err, idx

    def __repr__(self):
        return f"GradientCheckReport(max_relative_error={self.max_relative_error:.3e})"


def finite_difference_check(loss_fn, params, tape_grads, step=1e-5, rel_floor=1e-6):
    """Central differences (f(p+h)-f(p-h))/2h versus tape gradients.

    loss_fn maps a list of parameter arrays to a float and must be
    deterministic; it is evaluated twice at the base point to verify this.
    The relative error divides by max(|analytic|, |numeric|, floor) where
    the floor is rel_floor times the largest gradient magnitude seen, so a
    parameter with no influence reports exactly zero error.
    """
    values = [np.array(p, dtype=float, copy=True) for p in params]
    base = loss_fn(values)
    again = loss_fn([v.copy() for v in values])
    if base != again:
        raise ProtocolError(
            f"loss_fn is not deterministic: {base!r} vs {again!r} at the same point")

    fd_grads = []
    for i, v in enumerate(values):
        fd = np.zeros_like(v)
        flat = v.reshape(-1)
        fd_flat = fd.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            hi = loss_fn(values)
            flat[j] = orig - step
            lo = loss_fn(values)
            flat[j] = orig
            fd_flat[j] = (hi - lo) / (2.0 * step)
        fd_grads.append(fd)

    scale_ = max(
        max((float(np.max(np.abs(g))) for g in tape_grads), default=0.0),
        max((float(np.max(np.abs(g))) for g in fd_grads), default=0.0),
        1e-12,
    )
    floor = rel_floor * scale_
    report = []
    for i, (ad, fd) in enumerate(zip(tape_grads, fd_grads)):
        denom = np.maximum(np.maximum(np.abs(ad), np.abs(fd)), floor)
        rel = np.abs(ad - fd) / denom
        idx = np.unravel_index(int(np.argmax(rel)), rel.shape) if rel.size else ()
        report.append((f"param{i}", float(rel.max()) if rel.size else 0.0, idx))
    return GradientCheckReport(report)
