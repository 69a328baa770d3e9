"""Layer-wise local spectral analysis and the filtering theorem probe.

For each user sequence the targets v_2..v_T define a local graph cut from
the global co-occurrence matrix; the hidden rows that predict those
targets are projected onto the local Laplacian eigenbasis, and per-
frequency energies are binned into rank-quantile bands and summed across
users.  The headline diagnostic is how the low-band energy share moves
with depth.

The theorem probe quantifies the core filtering claim: temporally
low-pass filtering a signal on a graph whose weights favor temporally
close nodes lowers the Laplacian quadratic form and the Rayleigh
quotient.  On ring graphs the temporal and graph frequency orders
coincide exactly, so the Rayleigh quotient can never increase; on
locality graphs the statement is statistical and is gated by a
pre-registered pilot threshold.
"""

import json
from dataclasses import dataclass

import numpy as np

from freqrec.errors import InputError
from freqrec.graph import local_subgraph, normalized_laplacian
from freqrec.model.network import forward
from freqrec.parallel import parallel_map
from freqrec.spectral import band_boundaries, basis_from_matrix, smoothness
from freqrec.tfm import tfm_apply

# Pre-registered acceptance bound for the locality-family Rayleigh-quotient
# violation rate: a pre-build pilot (15,000 dense-oracle trials across
# rho in {0.3, 0.5, 0.8} and five seeds) observed zero violations; 0.005
# is the rule-of-three 95% upper bound rounded up.
THEOREM1_PILOT_THRESHOLD = 0.005


@dataclass
class SpectralProfile:
    raw: np.ndarray          # (n_layers + 1, n_bands) summed energies
    n_bands: int
    user_count: int
    skipped_short: int = 0
    skipped_degenerate: int = 0
    fingerprint: str = ""

    @property
    def n_layers(self):
        return int(self.raw.shape[0]) - 1

    def shares(self):
        totals = self.raw.sum(axis=1, keepdims=True)
        safe = np.where(totals > 0, totals, 1.0)
        return self.raw / safe


def profile_from_trace(trace_matrices, basis, n_bands):
    """Band energies per layer for one user's hidden stack (rows already cut
    to the target positions)."""
    bounds = band_boundaries(basis.size, n_bands)
    out = np.zeros((len(trace_matrices), n_bands))
    for l, h in enumerate(trace_matrices):
        coeffs = basis.eigenvectors.T @ h
        per_freq = np.sum(coeffs * coeffs, axis=1)
        for b in range(n_bands):
            out[l, b] = per_freq[bounds[b]:bounds[b + 1]].sum()
    return out


def trace_spectral_profile(model, sequences, graph, n_bands=4, workers=1,
                           fingerprint=""):
    """Aggregate layer-by-band energies across users.

    Sequences shorter than 3 items are skipped (a 1-node local graph has no
    spectrum), as are sequences whose local graph has no edges at all."""

    def one_user(seq):
        seq = np.asarray(seq, dtype=np.intp)
        if seq.size < 3:
            return ("short", None)
        local = local_subgraph(graph, seq[1:])
        if local.is_degenerate():
            return ("degenerate", None)
        _, _, trace = forward(model, seq, capture=True)
        basis = basis_from_matrix(local.laplacian)
        cut = [h[:-1] for h in trace.matrices]
        return ("ok", profile_from_trace(cut, basis, n_bands))

    results = parallel_map(one_user, list(sequences), workers=workers)
    raw = None
    used = short = degenerate = 0
    for status, mat in results:
        if status == "short":
            short += 1
        elif status == "degenerate":
            degenerate += 1
        else:
            raw = mat if raw is None else raw + mat
            used += 1
    if raw is None:
        raise InputError("no sequence was long enough to analyze")
    return SpectralProfile(raw=raw, n_bands=n_bands, user_count=used,
                           skipped_short=short, skipped_degenerate=degenerate,
                           fingerprint=fingerprint)


@dataclass
class AttenuationReport:
    ratios: list      # final-layer share / input share per band (None if undefined)
    slopes: list      # least-squares slope of share against layer index

    def band_summary(self):
        return [{"band": b, "ratio": self.ratios[b], "slope": self.slopes[b]}
                for b in range(len(self.ratios))]


def attenuation_metric(profile):
    """Per-band final/initial share ratio and share-vs-depth slope."""
    if profile.raw.shape[0] < 2:
        raise InputError("attenuation needs at least 2 layers")
    shares = profile.shares()
    layers = np.arange(shares.shape[0], dtype=float)
    ratios, slopes = [], []
    for b in range(profile.n_bands):
        first, last = shares[0, b], shares[-1, b]
        ratios.append(float(last / first) if first > 0 else None)
        x = layers - layers.mean()
        y = shares[:, b] - shares[:, b].mean()
        slopes.append(float(np.sum(x * y) / np.sum(x * x)))
    return AttenuationReport(ratios=ratios, slopes=slopes)


@dataclass
class Theorem1Report:
    family: str
    rho: float
    trials: int
    t_range: tuple
    seed: int
    cutoff: float
    order: int
    n_columns: int
    violations_rayleigh: int
    violations_quadratic: int
    mean_smoothness_before: float
    mean_smoothness_after: float
    mean_rayleigh_before: float
    mean_rayleigh_after: float
    threshold: float = THEOREM1_PILOT_THRESHOLD

    @property
    def rayleigh_violation_rate(self):
        return self.violations_rayleigh / self.trials if self.trials else 0.0

    def within_threshold(self):
        return self.rayleigh_violation_rate <= self.threshold

    def to_dict(self):
        return {
            "family": self.family, "rho": self.rho, "trials": self.trials,
            "t_range": list(self.t_range), "seed": self.seed,
            "cutoff": self.cutoff, "order": self.order, "n_columns": self.n_columns,
            "violations_rayleigh": self.violations_rayleigh,
            "violations_quadratic": self.violations_quadratic,
            "rayleigh_violation_rate": self.rayleigh_violation_rate,
            "threshold": self.threshold,
            "mean_smoothness_before": self.mean_smoothness_before,
            "mean_smoothness_after": self.mean_smoothness_after,
            "mean_rayleigh_before": self.mean_rayleigh_before,
            "mean_rayleigh_after": self.mean_rayleigh_after,
        }


def _family_adjacency(family, t_len, rho):
    if family == "ring":
        w = np.zeros((t_len, t_len))
        for i in range(t_len):
            w[i, (i + 1) % t_len] = w[(i + 1) % t_len, i] = 1.0
        return w
    if family == "locality":
        idx = np.arange(t_len)
        w = rho ** np.abs(idx[:, None] - idx[None, :])
        np.fill_diagonal(w, 0.0)
        return w
    raise InputError(f"unknown graph family {family!r} (expected 'ring' or 'locality')")


def theorem1_probe(spec, family, rho=0.5, t_range=(8, 64), trials=1000, seed=0,
                   n_columns=8, threshold=THEOREM1_PILOT_THRESHOLD, workers=1):
    """Before/after smoothness statistics of temporal filtering on random
    signals over a graph family.  spec=None runs the identity filter.

    Violations count a trial whose quantity increased beyond a 1e-10
    relative slack; smoothness is taken against the symmetric normalized
    Laplacian (the dense definition, not the spectral shortcut)."""
    if family == "locality" and not (0.0 < rho < 1.0):
        raise InputError(f"locality family needs rho in (0, 1), got {rho}")
    lo, hi = t_range
    if lo < 3 or hi < lo:
        raise InputError(f"bad t_range {t_range}")

    def one_trial(trial_seed):
        rng = np.random.default_rng(trial_seed)
        t_len = int(rng.integers(lo, hi + 1))
        lap = normalized_laplacian(_family_adjacency(family, t_len, rho))
        h = rng.standard_normal((t_len, n_columns))
        out = tfm_apply(h, spec) if spec is not None else h.copy()
        q0 = smoothness(lap, h)
        q1 = smoothness(lap, out)
        r0 = q0 / float(np.sum(h * h))
        r1 = q1 / max(float(np.sum(out * out)), 1e-300)
        viol_q = q1 > q0 + 1e-10 * max(1.0, abs(q0))
        viol_r = r1 > r0 + 1e-10 * max(1.0, abs(r0))
        return q0, q1, r0, r1, viol_q, viol_r

    base = np.random.default_rng(seed).integers(0, 2**63 - 1, size=trials)
    rows = parallel_map(one_trial, [int(s) for s in base], workers=workers)
    q0s, q1s, r0s, r1s, vqs, vrs = zip(*rows)
    return Theorem1Report(
        family=family, rho=(rho if family == "locality" else float("nan")),
        trials=trials, t_range=(lo, hi), seed=seed,
        cutoff=(spec.cutoff if spec is not None else 1.0),
        order=(spec.order if spec is not None else 0),
        n_columns=n_columns,
        violations_rayleigh=int(sum(vrs)), violations_quadratic=int(sum(vqs)),
        mean_smoothness_before=float(np.mean(q0s)),
        mean_smoothness_after=float(np.mean(q1s)),
        mean_rayleigh_before=float(np.mean(r0s)),
        mean_rayleigh_after=float(np.mean(r1s)),
        threshold=threshold)


def emit_report(obj, path, format="csv"):
    """Write a SpectralProfile or Theorem1Report; identical inputs give
    byte-identical files."""
    if format not in ("csv", "json"):
        raise InputError(f"unknown report format {format!r}")
    try:
        if isinstance(obj, SpectralProfile):
            _emit_profile(obj, path, format)
        elif isinstance(obj, Theorem1Report):
            _emit_theorem(obj, path, format)
        else:
            raise InputError(f"cannot emit object of type {type(obj).__name__}")
    except OSError as exc:
        raise InputError(f"cannot write report to {path}: {exc}") from exc
    return path


def _emit_profile(profile, path, format):
    shares = profile.shares()
    if format == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("layer,band,energy,share\n")
            for l in range(profile.raw.shape[0]):
                for b in range(profile.n_bands):
                    fh.write(f"{l},{b},{profile.raw[l, b]!r},{shares[l, b]!r}\n")
    else:
        payload = {
            "n_bands": profile.n_bands,
            "user_count": profile.user_count,
            "skipped_short": profile.skipped_short,
            "skipped_degenerate": profile.skipped_degenerate,
            "fingerprint": profile.fingerprint,
            "raw": [[float(x) for x in row] for row in profile.raw],
            "share": [[float(x) for x in row] for row in shares],
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, sort_keys=True))


def _emit_theorem(report, path, format):
    payload = report.to_dict()
    if format == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("key,value\n")
            for key in sorted(payload):
                fh.write(f"{key},{payload[key]!r}\n")
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, sort_keys=True))


def load_profile_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    profile = SpectralProfile(raw=np.asarray(payload["raw"], dtype=float),
                              n_bands=int(payload["n_bands"]),
                              user_count=int(payload["user_count"]),
                              skipped_short=int(payload["skipped_short"]),
                              skipped_degenerate=int(payload["skipped_degenerate"]),
                              fingerprint=payload.get("fingerprint", ""))
    return profile, payload
