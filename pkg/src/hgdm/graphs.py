"""Dataset generation and loading, molecule encoding, validity and VUN metrics."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

GENERIC = "generic"
MOLECULE = "molecule"

# Maximum valences for the "valid without correction" check.
VALENCE = {"C": 4, "N": 3, "O": 2, "F": 1, "P": 5, "S": 6, "Cl": 1, "Br": 1, "I": 1}
QM9_ALPHABET = ("C", "N", "O", "F")


class GraphFormatError(ValueError):
    """Malformed graph file; message names the offending line."""


def _check_adjacency(adj: np.ndarray) -> np.ndarray:
    adj = np.asarray(adj)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency must be square")
    if not np.array_equal(adj, adj.T):
        raise ValueError("adjacency must be symmetric")
    if np.any(np.diag(adj) != 0):
        raise ValueError("adjacency must have a zero diagonal")
    return adj.astype(np.int64)


@dataclass(frozen=True)
class GenericGraph:
    adj: np.ndarray

    def __post_init__(self) -> None:
        adj = _check_adjacency(self.adj)
        if np.any((adj != 0) & (adj != 1)):
            raise ValueError("generic adjacency must be 0/1")
        object.__setattr__(self, "adj", adj)

    @property
    def n(self) -> int:
        return self.adj.shape[0]


@dataclass(frozen=True)
class MoleculeGraph:
    types: tuple[str, ...]
    bonds: np.ndarray

    def __post_init__(self) -> None:
        bonds = _check_adjacency(self.bonds)
        if bonds.shape[0] != len(self.types):
            raise ValueError("types/bonds size mismatch")
        if np.any((bonds < 0) | (bonds > 3)):
            raise ValueError("bond orders must lie in {0,1,2,3}")
        object.__setattr__(self, "bonds", bonds)
        object.__setattr__(self, "types", tuple(self.types))

    @property
    def n(self) -> int:
        return len(self.types)

    @property
    def adj(self) -> np.ndarray:
        return self.bonds


def is_connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    if n == 0:
        return False
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.nonzero(adj[i])[0]:
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    return bool(seen.all())


def gen_community_small(count: int, rng: np.random.Generator) -> list[GenericGraph]:
    """Two p=0.7 Erdos-Renyi halves joined by ceil(0.05*n) random cross edges.

    n is even and uniform on {12..20}; disconnected draws are resampled.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    out: list[GenericGraph] = []
    while len(out) < count:
        n = int(rng.choice([12, 14, 16, 18, 20]))
        half = n // 2
        adj = np.zeros((n, n), dtype=np.int64)
        for lo, hi in ((0, half), (half, n)):
            for i in range(lo, hi):
                for j in range(i + 1, hi):
                    if rng.uniform() < 0.7:
                        adj[i, j] = adj[j, i] = 1
        cross = [(i, j) for i in range(half) for j in range(half, n)]
        k = int(np.ceil(0.05 * n))
        for idx in rng.choice(len(cross), size=k, replace=False):
            i, j = cross[idx]
            adj[i, j] = adj[j, i] = 1
        if is_connected(adj):
            out.append(GenericGraph(adj))
    return out


def gen_grid(rows: int, cols: int) -> GenericGraph:
    """2D lattice graph; rows*cols must lie in [100, 400]."""
    n = rows * cols
    if not 100 <= n <= 400:
        raise ValueError(f"grid size {n} outside [100, 400]")
    adj = np.zeros((n, n), dtype=np.int64)
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                adj[i, i + 1] = adj[i + 1, i] = 1
            if r + 1 < rows:
                adj[i, i + cols] = adj[i + cols, i] = 1
    return GenericGraph(adj)


def gen_grid_set(count: int, rng: np.random.Generator) -> list[GenericGraph]:
    """Random 2D grids with side lengths uniform on {10..20}."""
    return [gen_grid(int(rng.integers(10, 21)), int(rng.integers(10, 21))) for _ in range(count)]


def gen_qm9_fixture(count: int, rng: np.random.Generator) -> list[MoleculeGraph]:
    """Valence-constrained random growth of connected QM9-like molecules.

    Heavy-atom count is uniform on {3..9} over the {C,N,O,F} alphabet with
    bond orders 1..3; every emitted molecule passes check_valence by
    construction (growth never exceeds the free valence on either endpoint,
    plus occasional ring closures).
    """
    out: list[MoleculeGraph] = []
    # Bias toward carbon so higher-valence scaffolds exist to attach to.
    type_p = np.array([0.55, 0.2, 0.15, 0.1])
    while len(out) < count:
        n = int(rng.integers(3, 10))
        types = [str(rng.choice(QM9_ALPHABET, p=type_p))]
        bonds = np.zeros((n, n), dtype=np.int64)
        free = [VALENCE[types[0]]]
        ok = True
        for _ in range(n - 1):
            hosts = [i for i, f in enumerate(free) if f >= 1]
            if not hosts:
                ok = False
                break
            host = int(rng.choice(hosts))
            sym = str(rng.choice(QM9_ALPHABET, p=type_p))
            order = int(rng.integers(1, 1 + min(3, free[host], VALENCE[sym])))
            idx = len(types)
            types.append(sym)
            free.append(VALENCE[sym] - order)
            free[host] -= order
            bonds[host, idx] = bonds[idx, host] = order
        if not ok:
            continue
        pairs = [
            (i, j)
            for i in range(len(types))
            for j in range(i + 1, len(types))
            if bonds[i, j] == 0 and free[i] >= 1 and free[j] >= 1
        ]
        if pairs and rng.uniform() < 0.3:  # occasional ring closure
            i, j = pairs[int(rng.integers(len(pairs)))]
            order = int(rng.integers(1, 1 + min(3, free[i], free[j])))
            bonds[i, j] = bonds[j, i] = order
        m = len(types)
        out.append(MoleculeGraph(tuple(types), bonds[:m, :m]))
    return out


def degree_onehot(graph: GenericGraph, max_degree: int) -> np.ndarray:
    """Row i is one-hot at min(deg(i), max_degree); shape (n, max_degree + 1)."""
    deg = graph.adj.sum(axis=1).clip(max=max_degree)
    out = np.zeros((graph.n, max_degree + 1))
    out[np.arange(graph.n), deg] = 1.0
    return out


def check_valence(mol: MoleculeGraph) -> bool:
    """True iff every atom respects its maximum valence and the graph is connected."""
    for sym in mol.types:
        if sym not in VALENCE:
            raise ValueError(f"unknown atom type {sym!r}")
    sums = mol.bonds.sum(axis=1)
    caps = np.array([VALENCE[s] for s in mol.types])
    if np.any(sums > caps):
        return False
    return is_connected(mol.bonds)


# -- file format ---------------------------------------------------------------
#
# Line-oriented utf-8: per graph a header "g <n> <mode>", a type line
# "t <type_0> ... <type_{n-1}>", one line "e <i> <j> <order>" per undirected
# edge, and a blank separator line.


def save_graphs(path, graphs: list) -> None:
    lines: list[str] = []
    for g in graphs:
        mode = MOLECULE if isinstance(g, MoleculeGraph) else GENERIC
        lines.append(f"g {g.n} {mode}")
        types = g.types if mode == MOLECULE else ["0"] * g.n
        lines.append("t " + " ".join(str(t) for t in types))
        adj = g.adj
        for i in range(g.n):
            for j in range(i + 1, g.n):
                if adj[i, j]:
                    lines.append(f"e {i} {j} {int(adj[i, j])}")
        lines.append("")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines))


def load_graphs(path) -> list:
    with open(path, encoding="utf-8") as f:
        raw = f.read().splitlines()
    graphs: list = []
    i = 0
    while i < len(raw):
        line = raw[i].strip()
        if not line:
            i += 1
            continue
        parts = line.split()
        if parts[0] != "g" or len(parts) != 3:
            raise GraphFormatError(f"line {i + 1}: expected 'g <n> <mode>', got {line!r}")
        try:
            n = int(parts[1])
        except ValueError:
            raise GraphFormatError(f"line {i + 1}: bad node count {parts[1]!r}") from None
        mode = parts[2]
        if mode not in (GENERIC, MOLECULE):
            raise GraphFormatError(f"line {i + 1}: unknown mode {mode!r}")
        i += 1
        if i >= len(raw) or not raw[i].startswith("t"):
            raise GraphFormatError(f"line {i + 1}: expected type line")
        types = raw[i].split()[1:]
        if len(types) != n:
            raise GraphFormatError(f"line {i + 1}: expected {n} types, got {len(types)}")
        i += 1
        adj = np.zeros((n, n), dtype=np.int64)
        while i < len(raw) and raw[i].strip():
            eparts = raw[i].split()
            if eparts[0] == "g":
                break
            if eparts[0] != "e" or len(eparts) != 4:
                raise GraphFormatError(f"line {i + 1}: expected 'e <i> <j> <order>', got {raw[i]!r}")
            try:
                u, v, order = int(eparts[1]), int(eparts[2]), int(eparts[3])
            except ValueError:
                raise GraphFormatError(f"line {i + 1}: non-integer edge fields") from None
            if not (0 <= u < n and 0 <= v < n):
                raise GraphFormatError(f"line {i + 1}: edge endpoint out of range")
            adj[u, v] = adj[v, u] = order
            i += 1
        if mode == MOLECULE:
            graphs.append(MoleculeGraph(tuple(types), adj))
        else:
            graphs.append(GenericGraph(adj))
    return graphs


# -- canonical hashing and VUN metrics ------------------------------------------


def _triangle_counts(adj: np.ndarray) -> np.ndarray:
    a = (adj != 0).astype(np.int64)
    return np.diag(a @ a @ a) // 2


def canonical_hash(graph) -> str:
    """128-bit Weisfeiler-Leman digest with node and edge labels.

    Initial colors contain (label, degree, triangle count) so connected regular
    pairs that plain color refinement cannot separate (e.g. K_3,3 vs the
    triangular prism) hash differently; refinement runs n rounds.
    """
    adj = graph.adj
    n = adj.shape[0]
    labels = graph.types if isinstance(graph, MoleculeGraph) else ("0",) * n
    tri = _triangle_counts(adj)
    deg = (adj != 0).sum(axis=1)
    colors = [f"{labels[i]}|{deg[i]}|{tri[i]}" for i in range(n)]
    neigh = [np.nonzero(adj[i])[0] for i in range(n)]
    for _ in range(n):
        colors = [
            hashlib.blake2b(
                (colors[i] + "#" + ",".join(
                    sorted(f"{adj[i, j]}:{colors[j]}" for j in neigh[i])
                )).encode(),
                digest_size=16,
            ).hexdigest()
            for i in range(n)
        ]
    digest = hashlib.blake2b("|".join(sorted(colors)).encode(), digest_size=16)
    return digest.hexdigest()


def metrics_vun(
    generated: list[MoleculeGraph], training_hashes: set[str]
) -> tuple[float, float, float]:
    """(validity%, uniqueness%, novelty%) over a generated molecule set.

    uniqueness = distinct among valid / valid; novelty = valid-unique hashes
    absent from the training set / valid-unique. Both are 0 when no molecule
    is valid.
    """
    if not generated:
        raise ValueError("generated set is empty")
    valid = [m for m in generated if check_valence(m)]
    validity = 100.0 * len(valid) / len(generated)
    if not valid:
        return validity, 0.0, 0.0
    hashes = {canonical_hash(m) for m in valid}
    uniqueness = 100.0 * len(hashes) / len(valid)
    novel = hashes - set(training_hashes)
    novelty = 100.0 * len(novel) / len(hashes)
    return validity, uniqueness, novelty
