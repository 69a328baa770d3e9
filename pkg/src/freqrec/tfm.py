"""Temporal frequency modulation: zero-phase Butterworth low-pass filtering
of hidden-state sequences along the time axis.

Bin k of a length-T DFT maps to the normalized frequency
omega_k = 2 * min(k, T-k) / T in [0, 1] (1 = Nyquist), and receives the
real magnitude gain sqrt(1 / (1 + (omega_k / omega_c)^(2n))).  Conjugate
bin pairs share a gain, so filtering a real matrix returns a real matrix
and introduces no phase shift.  The operator is linear with a symmetric
real spectral multiplier, hence self-adjoint; the autodiff tape
backpropagates through it by applying the filter once more.
"""

from dataclasses import dataclass

import numpy as np

from freqrec.errors import InputError, NumericError
from freqrec.numcore.fourier import dft
from freqrec.numcore.linalg import sym_eigendecompose
from freqrec.spectral import SpectralBasis


@dataclass(frozen=True)
class ButterworthSpec:
    """Cutoff in normalized-frequency units (1 = Nyquist) and filter order."""

    cutoff: float = 0.3
    order: int = 2

    def __post_init__(self):
        if not (0.0 < self.cutoff <= 1.0):
            raise InputError(f"cutoff must lie in (0, 1], got {self.cutoff}")
        if self.order < 1:
            raise InputError(f"order must be a positive integer, got {self.order}")


def bin_frequencies(t_len):
    k = np.arange(t_len)
    return 2.0 * np.minimum(k, t_len - k) / t_len


def butterworth_gains(spec, t_len):
    """Per-bin magnitude gains; DC gain is exactly 1 and gains are monotone
    nonincreasing in the bin frequency."""
    if t_len < 1:
        raise InputError(f"need at least one bin, got T={t_len}")
    omega = bin_frequencies(t_len)
    return np.sqrt(1.0 / (1.0 + (omega / spec.cutoff) ** (2 * spec.order)))


def gain_table_csv(spec, t_len, path):
    gains = butterworth_gains(spec, t_len)
    omega = bin_frequencies(t_len)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k,omega,gain\n")
        for k in range(t_len):
            fh.write(f"{k},{omega[k]!r},{gains[k]!r}\n")


def tfm_apply(h, spec):
    """Filter each column of a T x d real matrix in the temporal frequency
    domain.  T = 1 is the identity; the imaginary residue of the inverse
    transform is asserted negligible and discarded."""
    h = np.asarray(h, dtype=float)
    squeeze = h.ndim == 1
    if squeeze:
        h = h[:, None]
    if not np.all(np.isfinite(h)):
        raise InputError("input contains non-finite entries")
    t_len = h.shape[0]
    if t_len == 0:
        raise InputError("empty input")
    if t_len == 1:
        out = h.copy()
        return out[:, 0] if squeeze else out
    gains = butterworth_gains(spec, t_len)
    spectrum = dft(h)
    spectrum *= gains[:, None]
    result = dft(spectrum, inverse=True)
    residue = float(np.max(np.abs(result.imag)))
    scale = max(1.0, float(np.max(np.abs(result.real))))
    if residue > 1e-10 * scale:
        raise NumericError(f"imaginary residue {residue:.3e} exceeds tolerance")
    out = result.real.copy()
    return out[:, 0] if squeeze else out


def make_filter(spec, t_len):
    """Fixed-length filter closure for use as a tape node (linear and
    self-adjoint by construction)."""
    gains = butterworth_gains(spec, t_len)[:, None]

    def apply(h):
        if h.shape[0] != t_len:
            raise InputError(f"filter built for T={t_len}, got {h.shape[0]} rows")
        if t_len == 1:
            return np.array(h, dtype=float, copy=True)
        return dft(dft(h) * gains, inverse=True).real

    return apply


def ring_graph_laplacian(t_len):
    lap = 2.0 * np.eye(t_len)
    for i in range(t_len):
        lap[i, (i + 1) % t_len] -= 1.0
        lap[(i + 1) % t_len, i] -= 1.0
    return lap


def ring_graph_basis(t_len):
    """Numeric eigendecomposition of the T-node ring's combinatorial
    Laplacian.  Its eigenvalues are 2 - 2cos(2 pi k / T) and its
    eigenspaces are spanned by the cosine/sine pairs of the real DFT
    basis, which is what ties temporal frequencies to graph frequencies."""
    if t_len < 3:
        raise InputError(f"a ring needs at least 3 nodes, got {t_len}")
    w, u = sym_eigendecompose(ring_graph_laplacian(t_len))
    return SpectralBasis(eigenvalues=w, eigenvectors=u)


def ring_eigenvalues_analytic(t_len):
    k = np.arange(t_len)
    return np.sort(2.0 - 2.0 * np.cos(2.0 * np.pi * k / t_len))


def ring_analytic_span(t_len, k):
    """Orthonormal real basis of the ring eigenspace for frequency index
    k (0 <= k <= T/2): the constant vector, the alternating vector at the
    Nyquist index, or a cosine/sine pair otherwise."""
    t = np.arange(t_len)
    if k == 0:
        return np.ones((t_len, 1)) / np.sqrt(t_len)
    if 2 * k == t_len:
        v = np.cos(np.pi * t)
        return (v / np.linalg.norm(v))[:, None]
    c = np.cos(2.0 * np.pi * k * t / t_len)
    s = np.sin(2.0 * np.pi * k * t / t_len)
    basis = np.stack([c / np.linalg.norm(c), s / np.linalg.norm(s)], axis=1)
    return basis
