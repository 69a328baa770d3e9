"""Item co-occurrence graph and per-sequence local subgraphs.

The global graph counts, for every item pair (i, j), how many users'
training histories contain both items (set membership by default, raw
products of interaction counts when binarize is off).  The diagonal is
zeroed before degrees are computed: self-pairs carry no neighbor-
difference information and would only inflate degrees.  Storage is a
symmetric coordinate list sorted by a single int64 key, so local T x T
blocks come out of one vectorized searchsorted pass.
"""

import json
from dataclasses import dataclass

import numpy as np

from freqrec.errors import InputError


@dataclass
class CooccurrenceGraph:
    n_items: int
    rows: np.ndarray      # both (i, j) and (j, i) present, sorted by i * n + j
    cols: np.ndarray
    weights: np.ndarray
    degrees: np.ndarray
    fingerprint: str = ""

    @property
    def nnz(self):
        # symmetric entries stored once per direction
        return int(self.rows.shape[0])

    def _keys(self):
        return self.rows.astype(np.int64) * self.n_items + self.cols.astype(np.int64)

    def lookup(self, i, j):
        """Vectorized weight lookup for index arrays i, j (0 where absent)."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        keys = self._keys()
        want = i * self.n_items + j
        pos = np.searchsorted(keys, want)
        pos = np.clip(pos, 0, len(keys) - 1) if len(keys) else np.zeros_like(want)
        out = np.zeros(want.shape, dtype=float)
        if len(keys):
            hit = keys[pos] == want
            out[hit] = self.weights[pos[hit]]
        return out

    def adjacency_matvec(self, x):
        """W @ x for a vector or matrix signal."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[:, None]
        if x.shape[0] != self.n_items:
            raise InputError(f"signal has {x.shape[0]} rows, graph has {self.n_items} items")
        out = np.zeros_like(x)
        np.add.at(out, self.rows, self.weights[:, None] * x[self.cols])
        return out[:, 0] if squeeze else out

    def _dinv_sqrt(self):
        d = self.degrees
        return np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 0.0)

    def laplacian_matvec(self, x):
        """(I - D^{-1/2} W D^{-1/2}) @ x with the zero-degree convention
        D^{-1/2}_ii = 0 for isolated items."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[:, None]
        dh = self._dinv_sqrt()[:, None]
        out = x - dh * self.adjacency_matvec(dh * x)
        return out[:, 0] if squeeze else out

    def dense_adjacency(self):
        w = np.zeros((self.n_items, self.n_items))
        w[self.rows, self.cols] = self.weights
        return w

    def dense_laplacian(self):
        return normalized_laplacian(self.dense_adjacency())


@dataclass
class LocalGraph:
    positions: np.ndarray   # item indices of the target subsequence, in order
    adjacency: np.ndarray   # dense, symmetric, zero diagonal
    laplacian: np.ndarray   # symmetric normalized
    degrees: np.ndarray

    @property
    def size(self):
        return int(self.adjacency.shape[0])

    def is_degenerate(self):
        return not np.any(self.adjacency)


def normalized_laplacian(adjacency):
    """I - D^{-1/2} A D^{-1/2} for a dense symmetric nonnegative adjacency;
    isolated nodes keep an identity row."""
    a = np.asarray(adjacency, dtype=float)
    d = a.sum(axis=1)
    dh = np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 0.0)
    return np.eye(a.shape[0]) - dh[:, None] * a * dh[None, :]


def build_cooccurrence(split, binarize=True):
    """Global item graph from the training views of a SplitDataset.

    W_ij counts users whose training history contains both i and j when
    binarize is set; otherwise each user contributes (count_i * count_j).
    """
    train_views = split.train_views()
    if not any(len(v) for v in train_views.values()):
        raise InputError("split has no training interactions")
    n = split.n_items
    key_chunks = []
    val_chunks = []
    for items in train_views.values():
        if binarize:
            uniq = np.unique(np.asarray(items, dtype=np.int64))
            if uniq.size < 2:
                continue
            ii, jj = np.meshgrid(uniq, uniq, indexing="ij")
            mask = ii < jj
            key_chunks.append(ii[mask] * n + jj[mask])
            val_chunks.append(np.ones(int(mask.sum())))
        else:
            uniq, counts = np.unique(np.asarray(items, dtype=np.int64), return_counts=True)
            if uniq.size < 2:
                continue
            ii, jj = np.meshgrid(uniq, uniq, indexing="ij")
            cc = np.outer(counts, counts).astype(float)
            mask = ii < jj
            key_chunks.append(ii[mask] * n + jj[mask])
            val_chunks.append(cc[mask])
    if key_chunks:
        keys = np.concatenate(key_chunks)
        vals = np.concatenate(val_chunks)
        uniq_keys, inverse = np.unique(keys, return_inverse=True)
        sums = np.bincount(inverse, weights=vals)
        up_r = (uniq_keys // n).astype(np.intp)
        up_c = (uniq_keys % n).astype(np.intp)
        rows = np.concatenate([up_r, up_c])
        cols = np.concatenate([up_c, up_r])
        weights = np.concatenate([sums, sums])
        order = np.argsort(rows.astype(np.int64) * n + cols.astype(np.int64), kind="stable")
        rows, cols, weights = rows[order], cols[order], weights[order]
    else:
        rows = np.zeros(0, dtype=np.intp)
        cols = np.zeros(0, dtype=np.intp)
        weights = np.zeros(0)
    degrees = np.bincount(rows, weights=weights, minlength=n).astype(float)
    return CooccurrenceGraph(n_items=n, rows=rows, cols=cols, weights=weights, degrees=degrees)


def local_subgraph(graph, target_items):
    """Dense local graph over an ordered target subsequence.

    Repeated items occupy distinct nodes; because the global diagonal is
    zero, the weight between two occurrences of the same item is zero.
    """
    items = np.asarray(target_items, dtype=np.int64)
    t_len = items.shape[0]
    if t_len < 2:
        raise InputError(f"local graph needs at least 2 target items, got {t_len}")
    if np.any(items < 0) or np.any(items >= graph.n_items):
        raise InputError("target item index out of range")
    ii, jj = np.meshgrid(items, items, indexing="ij")
    a = graph.lookup(ii.ravel(), jj.ravel()).reshape(t_len, t_len)
    np.fill_diagonal(a, 0.0)
    d = a.sum(axis=1)
    return LocalGraph(positions=items, adjacency=a, laplacian=normalized_laplacian(a), degrees=d)


def save_graph(graph, path):
    """One JSON header line, then one 'i<TAB>j<TAB>weight' line per stored
    upper-triangle entry."""
    mask = graph.rows < graph.cols
    with open(path, "w", encoding="utf-8") as fh:
        header = {"n_items": graph.n_items, "nnz": int(mask.sum()),
                  "fingerprint": graph.fingerprint}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i, j, w in zip(graph.rows[mask], graph.cols[mask], graph.weights[mask]):
            fh.write(f"{int(i)}\t{int(j)}\t{float(w)!r}\n")


def load_graph(path):
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read graph {path}: {exc}") from exc
    with handle as fh:
        try:
            header = json.loads(fh.readline())
            n = int(header["n_items"])
            nnz = int(header["nnz"])
        except (ValueError, KeyError) as exc:
            raise InputError(f"malformed graph header in {path}: {exc}") from exc
        up_r, up_c, up_w = [], [], []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise InputError(f"{path}:{lineno}: expected 3 tab-separated fields")
            try:
                i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
            up_r.append(i)
            up_c.append(j)
            up_w.append(w)
    if len(up_r) != nnz:
        raise InputError(f"{path}: header says nnz={nnz} but found {len(up_r)} triples")
    up_r = np.asarray(up_r, dtype=np.intp)
    up_c = np.asarray(up_c, dtype=np.intp)
    up_w = np.asarray(up_w, dtype=float)
    rows = np.concatenate([up_r, up_c])
    cols = np.concatenate([up_c, up_r])
    weights = np.concatenate([up_w, up_w])
    order = np.argsort(rows.astype(np.int64) * n + cols.astype(np.int64), kind="stable")
    rows, cols, weights = rows[order], cols[order], weights[order]
    degrees = np.bincount(rows, weights=weights, minlength=n).astype(float)
    return CooccurrenceGraph(n_items=n, rows=rows, cols=cols, weights=weights,
                             degrees=degrees, fingerprint=header.get("fingerprint", ""))
