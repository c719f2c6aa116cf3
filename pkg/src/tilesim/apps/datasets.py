"""Input datasets: synthetic power-law graphs, a fixed hand-built graph,
CSR file I/O and dense tensors for the spectral kernel.

Graphs live in compressed sparse row form. Apps that need the reverse
direction (column-wise push) or the undirected closure get them as cached
derived views of the same dataset object.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from ..arch import ConfigError

RMAT_A, RMAT_B, RMAT_C, RMAT_D = 0.57, 0.19, 0.19, 0.05
EDGE_FACTOR = 16

_MAGIC = b"CSRG"
_VERSION = 1


@dataclass
class CsrGraph:
    row_ptr: np.ndarray     # int64, V+1 offsets
    col_idx: np.ndarray     # int32, E column indices
    vals: np.ndarray        # float32, E edge values

    @property
    def V(self) -> int:
        return len(self.row_ptr) - 1

    @property
    def E(self) -> int:
        return len(self.col_idx)

    def validate(self) -> None:
        if self.row_ptr[0] != 0 or self.row_ptr[-1] != self.E:
            raise ConfigError("row_ptr must start at 0 and end at E")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ConfigError("row_ptr must be monotone non-decreasing")
        if self.E and (self.col_idx.min() < 0 or self.col_idx.max() >= self.V):
            raise ConfigError("col_idx entries must be < V")
        if len(self.vals) != self.E:
            raise ConfigError("vals length must equal E")

    def src_of_edges(self) -> np.ndarray:
        return np.repeat(np.arange(self.V, dtype=np.int64),
                         np.diff(self.row_ptr))

    def out_degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr)


def _csr_from_pairs(V: int, src, dst, w) -> CsrGraph:
    """Build a CSR from edge pairs sorted by (src, dst)."""
    row_ptr = np.zeros(V + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=V), out=row_ptr[1:])
    return CsrGraph(row_ptr, dst.astype(np.int32), w.astype(np.float32))


def _dedup(V: int, src, dst, w):
    """Drop self loops and duplicate (src, dst) pairs, keeping the smallest
    value per pair; returns arrays sorted by (src, dst)."""
    keep = src != dst
    src, dst, w = src[keep], dst[keep], w[keep]
    key = src.astype(np.int64) * V + dst
    order = np.lexsort((w, key))
    key, src, dst, w = key[order], src[order], dst[order], w[order]
    first = np.ones(len(key), dtype=bool)
    first[1:] = key[1:] != key[:-1]
    return src[first], dst[first], w[first]


def rmat_generate(scale: int, edge_factor: int = EDGE_FACTOR,
                  seed: int = 1) -> CsrGraph:
    """Recursive-matrix power-law graph: 2^scale vertices, about
    edge_factor * 2^scale directed edges after removing self loops and
    duplicates. Vertex labels are shuffled; edge values are uniform
    integers in [1, 64] stored as float32."""
    if scale < 1:
        raise ConfigError("rmat scale must be >= 1")
    V = 1 << scale
    M = edge_factor << scale
    rng = np.random.default_rng(seed)
    src = np.zeros(M, dtype=np.int64)
    dst = np.zeros(M, dtype=np.int64)
    for k in range(scale):
        r = rng.random(M)
        sb = r >= RMAT_A + RMAT_B
        db = ((r >= RMAT_A) & (r < RMAT_A + RMAT_B)) | (r >= RMAT_A + RMAT_B + RMAT_C)
        src |= sb.astype(np.int64) << k
        dst |= db.astype(np.int64) << k
    perm = rng.permutation(V)
    src, dst = perm[src], perm[dst]
    w0 = np.zeros(len(src), dtype=np.float32)
    src, dst, _ = _dedup(V, src, dst, w0)
    w = rng.integers(1, 65, size=len(src)).astype(np.float32)
    return _csr_from_pairs(V, src, dst, w)


def hand_graph() -> CsrGraph:
    """Fixed 64-vertex graph: a chorded ring (0..39), a hub fanning into a
    chain (40..51) cross-linked back to the ring, plus a cycle, a path and
    two isolated vertices (52..63) unreachable from vertex 0."""
    edges = []
    for i in range(40):
        edges.append((i, (i + 1) % 40))
    for i in range(0, 40, 3):
        edges.append((i, (i + 9) % 40))
    for j in range(40, 52):
        edges.append((7, j))
    for j in range(40, 51):
        edges.append((j, j + 1))
    edges += [(20, 45), (33, 48), (12, 50)]
    for i in range(52, 57):
        edges.append((i, i + 1))
    edges.append((57, 52))
    edges += [(58, 59), (59, 60), (60, 61)]
    src = np.array([e[0] for e in edges], dtype=np.int64)
    dst = np.array([e[1] for e in edges], dtype=np.int64)
    w = (1 + (src * 7 + dst * 13) % 64).astype(np.float32)
    src, dst, w = _dedup(64, src, dst, w)
    return _csr_from_pairs(64, src, dst, w)


# ------------------------------------------------------------- derived views

def transpose_csr(g: CsrGraph) -> CsrGraph:
    """Edges reversed: row j lists the sources that point at j."""
    src = g.src_of_edges()
    order = np.argsort(g.col_idx, kind="stable")
    return _csr_from_pairs(g.V, g.col_idx[order].astype(np.int64),
                           src[order], g.vals[order])


def symmetrize_csr(g: CsrGraph) -> CsrGraph:
    """Undirected closure: both directions of every edge, duplicates keep
    the smallest value."""
    src = g.src_of_edges()
    dst = g.col_idx.astype(np.int64)
    s2 = np.concatenate([src, dst])
    d2 = np.concatenate([dst, src])
    w2 = np.concatenate([g.vals, g.vals])
    s2, d2, w2 = _dedup(g.V, s2, d2, w2)
    return _csr_from_pairs(g.V, s2, d2, w2)


def reachable_mask(g: CsrGraph, root: int) -> np.ndarray:
    """Vertices reachable from root by following g's edges."""
    seen = np.zeros(g.V, dtype=bool)
    seen[root] = True
    frontier = np.array([root], dtype=np.int64)
    while len(frontier):
        nxt = []
        for v in frontier:
            nbrs = g.col_idx[g.row_ptr[v]:g.row_ptr[v + 1]]
            new = nbrs[~seen[nbrs]]
            seen[new] = True
            nxt.append(new.astype(np.int64))
        frontier = np.unique(np.concatenate(nxt)) if nxt else np.empty(0, np.int64)
    return seen


# ----------------------------------------------------------------- file I/O

def save_csr(path: str, g: CsrGraph) -> None:
    g.validate()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IQQ", _VERSION, g.V, g.E))
        f.write(g.row_ptr.astype("<i8").tobytes())
        f.write(g.col_idx.astype("<i4").tobytes())
        f.write(g.vals.astype("<f4").tobytes())


def load_csr(path: str) -> CsrGraph:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise ConfigError(f"{path}: not a CSR graph file (bad magic)")
        ver, V, E = struct.unpack("<IQQ", f.read(20))
        if ver != _VERSION:
            raise ConfigError(f"{path}: unsupported CSR version {ver}")
        row_ptr = np.frombuffer(f.read(8 * (V + 1)), dtype="<i8").copy()
        col_idx = np.frombuffer(f.read(4 * E), dtype="<i4").copy()
        vals = np.frombuffer(f.read(4 * E), dtype="<f4").copy()
    g = CsrGraph(row_ptr, col_idx, vals)
    g.validate()
    return g


def load_edge_list(path: str) -> CsrGraph:
    """Text importer: one `src dst [value]` triple per line, '#' comments.
    Self loops are dropped; duplicate pairs keep the smallest value."""
    src, dst, w = [], [], []
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ConfigError(f"{path}:{lineno}: expected 'src dst [value]'")
            src.append(int(parts[0]))
            dst.append(int(parts[1]))
            w.append(float(parts[2]) if len(parts) == 3 else 1.0)
    if not src:
        raise ConfigError(f"{path}: no edges")
    src = np.array(src, dtype=np.int64)
    dst = np.array(dst, dtype=np.int64)
    w = np.array(w, dtype=np.float32)
    if src.min() < 0 or dst.min() < 0:
        raise ConfigError(f"{path}: negative vertex id")
    V = int(max(src.max(), dst.max())) + 1
    src, dst, w = _dedup(V, src, dst, w)
    return _csr_from_pairs(V, src, dst, w)


# ------------------------------------------------------------------ datasets

@dataclass
class GraphDataset:
    name: str
    csr: CsrGraph
    seed: int = 1
    kind: str = "graph"
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def sym(self) -> CsrGraph:
        if "sym" not in self._cache:
            self._cache["sym"] = symmetrize_csr(self.csr)
        return self._cache["sym"]

    @property
    def transpose(self) -> CsrGraph:
        if "T" not in self._cache:
            self._cache["T"] = transpose_csr(self.csr)
        return self._cache["T"]

    def oracle(self, key, fn):
        """Memoized host reference results, keyed per app/parameters."""
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]


@dataclass
class TensorDataset:
    name: str
    n: int                   # tensor is n x n x n, run on an n x n grid
    data: np.ndarray         # complex128 initial values
    kind: str = "tensor"
    _cache: dict = field(default_factory=dict, repr=False)

    def oracle(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]


_DATASETS: dict = {}


def get_dataset(name: str, seed: int = 1):
    """Resolve a dataset name: `rmat<scale>`, `hand64`, `fft<n>`, or a path
    to a `.csr` binary / edge-list text file. Instances are cached."""
    key = (name, seed)
    if key in _DATASETS:
        return _DATASETS[key]
    if name == "hand64":
        ds = GraphDataset(name, hand_graph(), seed)
    elif name.startswith("rmat") and name[4:].isdigit():
        ds = GraphDataset(name, rmat_generate(int(name[4:]), seed=seed), seed)
    elif name.startswith("fft") and name[3:].isdigit():
        n = int(name[3:])
        if n < 2 or n & (n - 1):
            raise ConfigError("fft size must be a power of two >= 2")
        rng = np.random.default_rng(seed)
        data = (rng.standard_normal((n, n, n))
                + 1j * rng.standard_normal((n, n, n)))
        ds = TensorDataset(name, n, data)
    elif name.endswith(".csr") and os.path.exists(name):
        ds = GraphDataset(os.path.basename(name), load_csr(name), seed)
    elif os.path.exists(name) and not name.startswith("rmat"):
        ds = GraphDataset(os.path.basename(name), load_edge_list(name), seed)
    else:
        raise ConfigError(f"unknown dataset: {name}")
    _DATASETS[key] = ds
    return ds
