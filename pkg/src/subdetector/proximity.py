"""Pairwise subsequence distances, the kNN prior graph, and the discord baseline.

Distances are exact; large instances are processed in column blocks so
memory stays O(N*(K + block)) instead of O(N^2). Every selection breaks
ties toward the lower window index, which keeps graph construction
deterministic on series with repeated motifs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .series import SubsequenceSet, scale_lengths

__all__ = [
    "GraphError",
    "ZNORM_STD_FLOOR",
    "znorm",
    "znorm_rows",
    "DistanceProfile",
    "pairwise_distances",
    "PriorGraph",
    "build_prior_graph",
    "pair_distances",
    "DiscordReport",
    "discord_scores",
    "export_edges",
]

ZNORM_STD_FLOOR = 1e-8
DEFAULT_BLOCK = 2048


class GraphError(ValueError):
    """Prior graph cannot be built with the requested parameters."""


def znorm(x: np.ndarray) -> np.ndarray:
    """Zero-mean unit-std copy of x; near-constant input maps to zeros."""
    x = np.asarray(x, dtype=np.float64)
    std = x.std()
    if std < ZNORM_STD_FLOOR:
        return np.zeros_like(x)
    return (x - x.mean()) / std


def znorm_rows(mat: np.ndarray) -> np.ndarray:
    """Row-wise znorm with the same degenerate-std rule."""
    mat = np.asarray(mat, dtype=np.float64)
    mean = mat.mean(axis=1, keepdims=True)
    std = mat.std(axis=1, keepdims=True)
    out = np.where(std < ZNORM_STD_FLOOR, 0.0, (mat - mean) / np.where(std < ZNORM_STD_FLOOR, 1.0, std))
    return out


class DistanceProfile:
    """Euclidean and z-normalized distances at every prefix scale.

    Blocks of the N x N matrices are computed on demand from cached prefix
    norms; nothing quadratic is stored unless :meth:`full` is called.
    """

    def __init__(self, windows: np.ndarray, lengths: list[int]):
        self.windows = np.asarray(windows, dtype=np.float64)
        self.lengths = list(lengths)
        self.count = self.windows.shape[0]
        self._znormed = [znorm_rows(self.windows[:, :l]) for l in self.lengths]
        self._plain_sq = [np.einsum("ij,ij->i", self.windows[:, :l], self.windows[:, :l])
                          for l in self.lengths]
        self._znorm_sq = [np.einsum("ij,ij->i", z, z) for z in self._znormed]

    @property
    def num_scales(self) -> int:
        return len(self.lengths)

    def block(self, kind: str, scale: int, j0: int, j1: int) -> np.ndarray:
        """Distances from every window to windows j0..j1 at one scale."""
        l = self.lengths[scale]
        if kind == "euclidean":
            a = self.windows[:, :l]
            sq = self._plain_sq[scale]
        elif kind == "znorm":
            a = self._znormed[scale]
            sq = self._znorm_sq[scale]
        else:
            raise ValueError(f"unknown distance kind {kind!r}")
        b = a[j0:j1]
        d2 = sq[:, None] + sq[j0:j1][None, :] - 2.0 * (a @ b.T)
        np.maximum(d2, 0.0, out=d2)
        # the gram expansion leaves ~1e-16 residue on self-pairs; pin them
        diag = np.arange(j0, j1)
        d2[diag, diag - j0] = 0.0
        return np.sqrt(d2, out=d2)

    def full(self, kind: str, scale: int) -> np.ndarray:
        return self.block(kind, scale, 0, self.count)

    def measures(self):
        """All 2*(P+1) (kind, scale) pairs, scale-major with euclidean first."""
        for scale in range(self.num_scales):
            yield ("euclidean", scale)
            yield ("znorm", scale)


def pairwise_distances(subseq: SubsequenceSet) -> DistanceProfile:
    if subseq.count < 2:
        raise GraphError(f"need at least 2 windows, got {subseq.count}")
    return DistanceProfile(subseq.windows, scale_lengths(subseq.config))


def _exclusion_mask_block(starts: np.ndarray, window_length: int,
                          j0: int, j1: int) -> np.ndarray:
    """True where the candidate is banned: temporal overlap within L/2."""
    gap = np.abs(starts[:, None] - starts[j0:j1][None, :])
    return gap < window_length / 2.0


def _blocked_topk(profile: DistanceProfile, kind: str, scale: int, k: int,
                  starts: np.ndarray, window_length: int,
                  block: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row k smallest non-excluded distances, ties to the lower index.

    Column blocks arrive in ascending index order and the running pool is
    kept (distance, index)-sorted, so a stable argsort of their
    concatenation realizes exact lexicographic selection.
    """
    n = profile.count
    pool_d = np.full((n, k), np.inf)
    pool_j = np.full((n, k), n, dtype=np.int64)
    for j0 in range(0, n, block):
        j1 = min(j0 + block, n)
        d = profile.block(kind, scale, j0, j1)
        d[_exclusion_mask_block(starts, window_length, j0, j1)] = np.inf
        cand_d = np.concatenate([pool_d, d], axis=1)
        cand_j = np.concatenate(
            [pool_j, np.broadcast_to(np.arange(j0, j1), (n, j1 - j0))], axis=1)
        order = np.argsort(cand_d, axis=1, kind="stable")[:, :k]
        pool_d = np.take_along_axis(cand_d, order, axis=1)
        pool_j = np.take_along_axis(cand_j, order, axis=1)
    return pool_d, pool_j


@dataclass(frozen=True)
class PriorGraph:
    """Directed kNN graph: edge src -> dst means src is a neighbor of dst."""

    dst: np.ndarray
    src: np.ndarray
    attrs: np.ndarray
    neighbor_lists: list
    num_nodes: int
    k: int
    lengths: list

    @property
    def num_edges(self) -> int:
        return self.dst.size

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.num_nodes)


def pair_distances(windows_a: np.ndarray, windows_b: np.ndarray,
                   lengths: list[int]) -> np.ndarray:
    """Per-pair attribute vector: both measures at every scale, each / sqrt(l).

    Rows of ``windows_a`` and ``windows_b`` are aligned pairs. Column
    layout matches DistanceProfile.measures(): scale-major, euclidean
    before z-normalized.
    """
    e = windows_a.shape[0]
    out = np.empty((e, 2 * len(lengths)))
    for p, l in enumerate(lengths):
        a, b = windows_a[:, :l], windows_b[:, :l]
        out[:, 2 * p] = np.sqrt(((a - b) ** 2).sum(axis=1)) / np.sqrt(l)
        za, zb = znorm_rows(a), znorm_rows(b)
        out[:, 2 * p + 1] = np.sqrt(((za - zb) ** 2).sum(axis=1)) / np.sqrt(l)
    return out


def build_prior_graph(subseq: SubsequenceSet, k: int,
                      profile: DistanceProfile | None = None,
                      block: int = DEFAULT_BLOCK) -> PriorGraph:
    """Union of per-measure kNN edges with edge attribute vectors.

    For every node and every (kind, scale) measure, the k nearest
    non-excluded windows contribute an incoming edge; the union over all
    2*(P+1) measures forms the neighbor set, so in-degrees lie in
    [k, 2*(P+1)*k].
    """
    if k < 1:
        raise GraphError(f"k must be >= 1, got {k}")
    profile = profile or pairwise_distances(subseq)
    n = subseq.count
    starts = subseq.starts
    window_length = subseq.length

    candidates = (~_exclusion_mask_block(starts, window_length, 0, n)).sum(axis=1)
    if candidates.min() < k:
        worst = int(candidates.argmin())
        raise GraphError(
            f"node {worst} has only {candidates[worst]} non-excluded candidates "
            f"for k={k}; reduce k or the window length")

    neighbor_sets = [set() for _ in range(n)]
    for kind, scale in profile.measures():
        _, top_j = _blocked_topk(profile, kind, scale, k, starts,
                                 window_length, block)
        for i in range(n):
            neighbor_sets[i].update(int(j) for j in top_j[i] if j < n)

    neighbor_lists = [np.array(sorted(s), dtype=np.int64) for s in neighbor_sets]
    dst = np.concatenate([np.full(len(lst), i, dtype=np.int64)
                          for i, lst in enumerate(neighbor_lists)])
    src = np.concatenate(neighbor_lists)
    attrs = pair_distances(subseq.windows[dst], subseq.windows[src],
                           profile.lengths)
    return PriorGraph(dst=dst, src=src, attrs=attrs,
                      neighbor_lists=neighbor_lists, num_nodes=n, k=k,
                      lengths=profile.lengths)


@dataclass(frozen=True)
class DiscordReport:
    """Distance of every window to its k-th nearest non-overlapping neighbor."""

    scores: np.ndarray
    k: int
    exclusion: float


def discord_scores(subseq: SubsequenceSet, k: int = 1,
                   block: int = DEFAULT_BLOCK) -> DiscordReport:
    """Squared full-length z-normalized distance to the k-th nearest neighbor."""
    if k < 1:
        raise GraphError(f"k must be >= 1, got {k}")
    profile = pairwise_distances(subseq)
    starts = subseq.starts
    window_length = subseq.length
    candidates = (~_exclusion_mask_block(starts, window_length, 0,
                                         subseq.count)).sum(axis=1)
    if candidates.min() < k:
        worst = int(candidates.argmin())
        raise GraphError(
            f"node {worst} has only {candidates[worst]} non-excluded candidates "
            f"for k={k}")
    top_d, _ = _blocked_topk(profile, "znorm", profile.num_scales - 1, k,
                             starts, window_length, block)
    return DiscordReport(scores=top_d[:, k - 1] ** 2, k=k,
                         exclusion=window_length / 2.0)


def export_edges(graph: PriorGraph, path: str,
                 weights: np.ndarray | None = None) -> None:
    """Edge list as text: "dst src attr_1 ... attr_{2(P+1)}" per line.

    Optional per-edge weights are appended as a final column.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for e in range(graph.num_edges):
            cols = [str(int(graph.dst[e])), str(int(graph.src[e]))]
            cols += [repr(float(v)) for v in graph.attrs[e]]
            if weights is not None:
                cols.append(repr(float(weights[e])))
            fh.write(" ".join(cols) + "\n")
