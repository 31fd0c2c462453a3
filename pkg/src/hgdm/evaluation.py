"""Graph-statistics MMD suite: degree, clustering coefficient, 4-node orbits.

MMD uses the unbiased estimator (clipped at zero, square root returned) with a
Gaussian kernel over total-variation distance between normalized histograms,
k(p, q) = exp(-TV(p, q)^2 / (2 sigma^2)), TV = 0.5 * L1.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

# The six connected 4-node graphlets keyed by (edge count, sorted degree
# multiset); values map within-graphlet degree to one of the 11 orbit slots.
_GRAPHLETS: dict[tuple[int, tuple[int, ...]], dict[int, int]] = {
    (3, (1, 1, 2, 2)): {1: 0, 2: 1},          # path P4: ends, middles
    (3, (1, 1, 1, 3)): {1: 2, 3: 3},          # star/claw: leaves, hub
    (4, (2, 2, 2, 2)): {2: 4},                # cycle C4
    (4, (1, 2, 2, 3)): {1: 5, 2: 6, 3: 7},    # paw: tail, triangle rim, junction
    (5, (2, 2, 3, 3)): {2: 8, 3: 9},          # diamond: rim, spine
    (6, (3, 3, 3, 3)): {3: 10},               # K4
}
N_ORBITS = 11
ORBIT_NODE_BOUND = 500


@dataclass(frozen=True)
class StatHistogram:
    """Normalized bin weights for one graph statistic."""

    kind: str
    weights: np.ndarray
    bin_edges: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("histogram weights must be >= 0 and sum to 1")
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class MmdReport:
    degree: float
    clustering: float
    orbit: float

    @property
    def average(self) -> float:
        return (self.degree + self.clustering + self.orbit) / 3.0

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("degree_mmd", self.degree),
            ("clustering_mmd", self.clustering),
            ("orbit_mmd", self.orbit),
            ("average_mmd", self.average),
        ]


def degree_hist(graph) -> StatHistogram:
    """Normalized node-degree histogram with bins 0..max degree."""
    deg = (graph.adj != 0).sum(axis=1)
    counts = np.bincount(deg, minlength=1).astype(np.float64)
    return StatHistogram("degree", counts / counts.sum())


def clustering_coefficients(graph) -> np.ndarray:
    """Local clustering c_i = 2 tri(i) / (deg_i (deg_i - 1)); 0 when deg < 2."""
    a = (graph.adj != 0).astype(np.int64)
    deg = a.sum(axis=1)
    tri = np.diag(a @ a @ a) / 2.0
    denom = deg * (deg - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(denom > 0, 2.0 * tri / np.maximum(denom, 1), 0.0)
    return c


def clustering_hist(graph, bins: int = 100) -> StatHistogram:
    """Normalized histogram of local clustering coefficients on [0, 1]."""
    c = clustering_coefficients(graph)
    counts, _ = np.histogram(c, bins=bins, range=(0.0, 1.0))
    counts = counts.astype(np.float64)
    return StatHistogram("clustering", counts / counts.sum(), (0.0, 1.0))


def orbit_counts(graph) -> np.ndarray:
    """Per-node occurrence counts in the 11 orbits of connected 4-node graphlets.

    Exhaustively enumerates connected induced 4-node subgraphs (ESU), so the
    node count is bounded; larger graphs should be subsampled by the caller.
    """
    adj = (graph.adj != 0).astype(np.int64)
    n = adj.shape[0]
    if n > ORBIT_NODE_BOUND:
        raise ValueError(
            f"orbit_counts enumerates subgraphs exhaustively; n={n} exceeds "
            f"{ORBIT_NODE_BOUND} (sample the graph instead)"
        )
    neigh = [set(np.nonzero(adj[i])[0].tolist()) for i in range(n)]
    counts = np.zeros((n, N_ORBITS), dtype=np.int64)

    def classify(quad: tuple[int, ...]) -> None:
        sub_deg = {u: sum(1 for w in quad if w != u and w in neigh[u]) for u in quad}
        edges = sum(sub_deg.values()) // 2
        key = (edges, tuple(sorted(sub_deg.values())))
        orbit_of = _GRAPHLETS.get(key)
        if orbit_of is None:  # disconnected induced subgraph reached via ESU? never
            return
        for u in quad:
            counts[u, orbit_of[sub_deg[u]]] += 1

    # ESU (FANMOD): grows each connected subgraph exactly once from its
    # minimum-index root using an exclusive extension frontier.
    def extend(sub: list[int], ext: set[int], root: int) -> None:
        if len(sub) == 4:
            classify(tuple(sub))
            return
        ext = set(ext)
        while ext:
            w = ext.pop()
            reach = {u for v in sub for u in neigh[v]}
            new_ext = ext | {u for u in neigh[w] if u > root and u not in reach and u not in sub}
            extend(sub + [w], new_ext, root)

    for v in range(n):
        extend([v], {u for u in neigh[v] if u > v}, v)
    return counts


def mmd(
    hists_a: list[StatHistogram] | list[np.ndarray],
    hists_b: list[StatHistogram] | list[np.ndarray],
    kernel_sigma: float = 1.0,
) -> float:
    """Unbiased-form MMD between two sets of histograms, clipped at 0, sqrt'd.

    Histograms of unequal length are zero-padded to a common support before
    the total-variation distance is taken.
    """
    if not hists_a or not hists_b:
        raise ValueError("mmd requires nonempty histogram sets")

    def to_arr(h):
        return h.weights if isinstance(h, StatHistogram) else np.asarray(h, dtype=np.float64)

    xs = [to_arr(h) for h in hists_a]
    ys = [to_arr(h) for h in hists_b]
    width = max(len(v) for v in xs + ys)
    xs = np.stack([np.pad(v, (0, width - len(v))) for v in xs])
    ys = np.stack([np.pad(v, (0, width - len(v))) for v in ys])

    def gram(u, v):
        tv = 0.5 * np.abs(u[:, None, :] - v[None, :, :]).sum(-1)
        return np.exp(-(tv**2) / (2.0 * kernel_sigma**2))

    m, n = len(xs), len(ys)
    kxx, kyy, kxy = gram(xs, xs), gram(ys, ys), gram(xs, ys)
    term_x = (kxx.sum() - np.trace(kxx)) / (m * (m - 1)) if m > 1 else 0.0
    term_y = (kyy.sum() - np.trace(kyy)) / (n * (n - 1)) if n > 1 else 0.0
    mmd2 = term_x + term_y - 2.0 * kxy.mean()
    return float(np.sqrt(max(mmd2, 0.0)))


def orbit_histograms(
    graphs_a: list, graphs_b: list
) -> tuple[list[list[np.ndarray]], list[list[np.ndarray]]]:
    """Per-orbit normalized histograms of per-node counts, bins shared across sets."""
    counts_a = [orbit_counts(g) for g in graphs_a]
    counts_b = [orbit_counts(g) for g in graphs_b]
    out_a: list[list[np.ndarray]] = [[] for _ in range(N_ORBITS)]
    out_b: list[list[np.ndarray]] = [[] for _ in range(N_ORBITS)]
    for o in range(N_ORBITS):
        top = max(
            [c[:, o].max() for c in counts_a + counts_b if c.shape[0]] or [0]
        )
        for counts, dest in ((counts_a, out_a), (counts_b, out_b)):
            for c in counts:
                h = np.bincount(c[:, o], minlength=int(top) + 1).astype(np.float64)
                dest[o].append(h / h.sum())
    return out_a, out_b


def mmd_report(ref_graphs: list, gen_graphs: list, kernel_sigma: float = 1.0) -> MmdReport:
    """Degree, clustering, and orbit MMD between reference and generated sets.

    The orbit score averages per-orbit MMD over the 11 orbit dimensions.
    """
    deg = mmd([degree_hist(g) for g in ref_graphs], [degree_hist(g) for g in gen_graphs],
              kernel_sigma)
    clus = mmd([clustering_hist(g) for g in ref_graphs], [clustering_hist(g) for g in gen_graphs],
               kernel_sigma)
    orb_a, orb_b = orbit_histograms(ref_graphs, gen_graphs)
    orb = float(np.mean([mmd(orb_a[o], orb_b[o], kernel_sigma) for o in range(N_ORBITS)]))
    return MmdReport(degree=deg, clustering=clus, orbit=orb)
