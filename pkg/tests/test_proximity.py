import numpy as np
import pytest

from subdetector import proximity as prox
from subdetector import series as ser


def make_set(values, delta=2, max_scale=2, stride=None):
    ts = ser.TimeSeries(values=np.asarray(values, dtype=float))
    cfg = ser.WindowConfig(delta=delta, max_scale=max_scale,
                           stride=stride or 2 * delta)
    return ser.make_windows(ts, cfg)


def naive_distances(windows, lengths):
    """Double-loop oracle for both measures at every scale."""
    n = windows.shape[0]
    eu = np.zeros((len(lengths), n, n))
    zn = np.zeros((len(lengths), n, n))
    for p, l in enumerate(lengths):
        for i in range(n):
            for j in range(n):
                a, b = windows[i, :l], windows[j, :l]
                eu[p, i, j] = np.linalg.norm(a - b)
                zn[p, i, j] = np.linalg.norm(prox.znorm(a) - prox.znorm(b))
    return eu, zn


class TestZnorm:
    def test_moment_contract(self):
        out = prox.znorm(np.array([1.0, 2.0, 3.0]))
        assert abs(out.mean()) < 1e-12
        assert abs(out.std() - 1.0) < 1e-12

    def test_constant_maps_to_zeros(self):
        assert np.array_equal(prox.znorm(np.array([5.0] * 4)), np.zeros(4))

    def test_affine_invariance(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=16)
        assert np.allclose(prox.znorm(3.0 * x + 7.0), prox.znorm(x), atol=1e-12)


class TestPairwiseDistances:
    def test_identical_windows_have_zero_distance(self):
        base = np.tile(np.array([1.0, 2.0, 3.0, 4.0]), 6)
        subs = make_set(base, delta=2, max_scale=1, stride=4)
        profile = prox.pairwise_distances(subs)
        for kind, scale in profile.measures():
            assert np.allclose(profile.full(kind, scale), 0.0, atol=1e-9)

    def test_scaled_window_znorm_zero(self):
        x = np.array([1.0, -1.0, 2.0, -2.0])  # zero mean
        windows = np.stack([x, 2.0 * x])
        profile = prox.DistanceProfile(windows, [4])
        assert profile.full("znorm", 0)[0, 1] < 1e-9
        assert abs(profile.full("euclidean", 0)[0, 1] - np.linalg.norm(x)) < 1e-9

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(42)
        subs = make_set(rng.normal(size=100), delta=3, max_scale=2, stride=4)
        assert subs.count == 23
        profile = prox.pairwise_distances(subs)
        eu, zn = naive_distances(subs.windows, profile.lengths)
        for p in range(profile.num_scales):
            assert np.allclose(profile.full("euclidean", p), eu[p], atol=1e-9)
            assert np.allclose(profile.full("znorm", p), zn[p], atol=1e-9)

    def test_symmetry_and_identity(self):
        rng = np.random.default_rng(1)
        subs = make_set(rng.normal(size=60), delta=1, max_scale=2)
        profile = prox.pairwise_distances(subs)
        for kind, scale in profile.measures():
            d = profile.full(kind, scale)
            assert np.allclose(d, d.T, atol=1e-9)
            assert np.allclose(np.diag(d), 0.0, atol=1e-9)

    def test_blocked_equals_full(self):
        rng = np.random.default_rng(5)
        subs = make_set(rng.normal(size=120), delta=2, max_scale=1)
        profile = prox.pairwise_distances(subs)
        full = profile.full("znorm", 1)
        blocks = np.concatenate(
            [profile.block("znorm", 1, j, min(j + 7, subs.count))
             for j in range(0, subs.count, 7)], axis=1)
        assert np.allclose(full, blocks, atol=1e-9)


def naive_prior_graph(subs, k):
    """Brute-force union-of-topk oracle with lower-index tie-breaking."""
    lengths = ser.scale_lengths(subs.config)
    eu, zn = naive_distances(subs.windows, lengths)
    n = subs.count
    half = subs.length / 2.0
    sets = [set() for _ in range(n)]
    for mats in (eu, zn):
        for p in range(len(lengths)):
            for i in range(n):
                cand = [(mats[p, i, j], j) for j in range(n)
                        if abs(subs.starts[i] - subs.starts[j]) >= half]
                cand.sort()
                sets[i].update(j for _, j in cand[:k])
    return sets


class TestPriorGraph:
    def test_matches_bruteforce_union(self):
        # delta >= 3 keeps the shortest znorm scale free of structural ties
        rng = np.random.default_rng(7)
        subs = make_set(rng.normal(size=220), delta=3, max_scale=2, stride=4)
        assert subs.count == 53
        graph = prox.build_prior_graph(subs, k=3)
        expected = naive_prior_graph(subs, k=3)
        for i in range(subs.count):
            assert set(graph.neighbor_lists[i].tolist()) == expected[i]

    def test_exact_ties_break_to_lower_index(self):
        # constant windows: the degenerate-std rule yields exact zero
        # znorm distances, so selection must fall back to index order
        windows = np.full((9, 6), 2.5)
        profile = prox.DistanceProfile(windows, [3, 6])
        starts = np.arange(9) * 6
        _, top_j = prox._blocked_topk(profile, "znorm", 1, 3, starts, 6, block=4)
        assert top_j[0].tolist() == [1, 2, 3]
        assert top_j[5].tolist() == [0, 1, 2]

    def test_degree_bounds(self):
        rng = np.random.default_rng(9)
        subs = make_set(rng.normal(size=300), delta=2, max_scale=2, stride=4)
        graph = prox.build_prior_graph(subs, k=2)
        deg = graph.in_degree()
        measures = 2 * (subs.config.max_scale + 1)
        assert deg.min() >= 2
        assert deg.max() <= measures * 2

    def test_exclusion_zone_blocks_overlapping_windows(self):
        rng = np.random.default_rng(3)
        subs = make_set(rng.normal(size=100), delta=2, max_scale=2, stride=2)
        graph = prox.build_prior_graph(subs, k=2)
        half = subs.length / 2.0
        for e in range(graph.num_edges):
            gap = abs(subs.starts[graph.dst[e]] - subs.starts[graph.src[e]])
            assert gap >= half

    def test_no_self_loops(self):
        rng = np.random.default_rng(11)
        subs = make_set(rng.normal(size=150), delta=1, max_scale=1)
        graph = prox.build_prior_graph(subs, k=3)
        assert not np.any(graph.dst == graph.src)

    def test_three_far_windows_union_collapse(self):
        # one dominant nearest neighbor under every measure
        base = np.concatenate([np.zeros(8), np.ones(8) * 50.0, np.zeros(8)])
        subs = make_set(base, delta=2, max_scale=2, stride=8)
        graph = prox.build_prior_graph(subs, k=1)
        measures = 2 * (subs.config.max_scale + 1)
        for i in range(subs.count):
            assert 1 <= len(graph.neighbor_lists[i]) <= measures

    def test_edge_attrs_are_length_normalized_distances(self):
        rng = np.random.default_rng(13)
        subs = make_set(rng.normal(size=64), delta=2, max_scale=1, stride=4)
        graph = prox.build_prior_graph(subs, k=2)
        lengths = graph.lengths
        for e in range(0, graph.num_edges, 5):
            i, j = graph.dst[e], graph.src[e]
            for p, l in enumerate(lengths):
                a, b = subs.windows[i, :l], subs.windows[j, :l]
                want = np.linalg.norm(a - b) / np.sqrt(l)
                assert abs(graph.attrs[e, 2 * p] - want) < 1e-9
                wantz = np.linalg.norm(prox.znorm(a) - prox.znorm(b)) / np.sqrt(l)
                assert abs(graph.attrs[e, 2 * p + 1] - wantz) < 1e-9

    def test_too_few_candidates_raises(self):
        rng = np.random.default_rng(15)
        subs = make_set(rng.normal(size=24), delta=2, max_scale=2, stride=4)
        with pytest.raises(prox.GraphError, match="reduce k"):
            prox.build_prior_graph(subs, k=10)

    def test_export_edge_list(self, tmp_path):
        rng = np.random.default_rng(17)
        subs = make_set(rng.normal(size=80), delta=2, max_scale=1, stride=4)
        graph = prox.build_prior_graph(subs, k=2)
        path = tmp_path / "edges.txt"
        prox.export_edges(graph, str(path))
        lines = path.read_text().splitlines()
        assert len(lines) == graph.num_edges
        first = lines[0].split()
        assert len(first) == 2 + 2 * len(graph.lengths)
        assert int(first[0]) == graph.dst[0] and int(first[1]) == graph.src[0]


def motif_series(n_repeats=30, corrupt_at=12, period=10, rng=None):
    """Repeated motif with one corrupted repetition."""
    rng = rng or np.random.default_rng(0)
    motif = np.sin(2 * np.pi * np.arange(period) / period)
    vals = np.tile(motif, n_repeats) + rng.normal(0, 0.01, n_repeats * period)
    lo = corrupt_at * period
    vals[lo:lo + period] += np.linspace(3.0, -3.0, period)
    return vals, lo


class TestDiscordScores:
    def test_corrupted_motif_attains_max(self):
        vals, lo = motif_series()
        subs = make_set(vals, delta=5, max_scale=1, stride=5)  # L = 10
        report = prox.discord_scores(subs, k=1)
        best = int(report.scores.argmax())
        # the top-scored window overlaps the corrupted stretch
        assert subs.starts[best] + subs.length > lo
        assert subs.starts[best] < lo + 10

    def test_recurring_anomaly_collapses(self):
        rng = np.random.default_rng(2)
        vals, lo = motif_series(rng=rng)
        # plant an identical twin of the corrupted motif far away
        vals[240:250] = vals[lo:lo + 10]
        subs = make_set(vals, delta=5, max_scale=1, stride=5)
        report = prox.discord_scores(subs, k=1)
        twin_a = report.scores[subs.starts.searchsorted(lo)]
        twin_b = report.scores[subs.starts.searchsorted(240)]
        normal_median = np.median(report.scores)
        assert twin_a < 10 * normal_median + 1e-6
        assert twin_b < 10 * normal_median + 1e-6

    def test_identical_windows_score_zero(self):
        base = np.tile(np.arange(4.0), 10)
        subs = make_set(base, delta=2, max_scale=1, stride=4)
        report = prox.discord_scores(subs, k=1)
        assert np.allclose(report.scores, 0.0, atol=1e-12)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(21)
        subs = make_set(rng.normal(size=180), delta=2, max_scale=2, stride=4)
        report = prox.discord_scores(subs, k=1)
        zed = prox.znorm_rows(subs.windows)
        half = subs.length / 2.0
        for i in range(subs.count):
            ds = [np.linalg.norm(zed[i] - zed[j]) ** 2
                  for j in range(subs.count)
                  if abs(subs.starts[i] - subs.starts[j]) >= half]
            assert abs(report.scores[i] - min(ds)) < 1e-9

    def test_too_few_candidates(self):
        rng = np.random.default_rng(23)
        subs = make_set(rng.normal(size=30), delta=2, max_scale=2, stride=2)
        with pytest.raises(prox.GraphError):
            prox.discord_scores(subs, k=50)
