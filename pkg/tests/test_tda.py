import itertools

import numpy as np
import pytest

from topoclust import tda
from conftest import weight_matrix


def filt(n, edges, **kw):
    return tda.wrcf_filtration(weight_matrix(n, edges), **kw)


def diagrams_match_oracle(f: tda.Filtration) -> bool:
    d = tda.compute_persistence(f)
    return all(tda.diagram_from_betti(f, p) == tda.diagram_level_multiset(d, p)
               for p in (0, 1))


class TestWrcfConstruction:
    def test_unit_triangle_single_level(self):
        f = filt(3, [(0, 1, 1), (0, 2, 1), (1, 2, 1)])
        assert f.level_weights == (1.0,)
        by_dim = {d: [s for s in f.simplices if s.dim == d] for d in (0, 1, 2)}
        assert [s.level for s in by_dim[0]] == [0, 0, 0]
        assert [s.level for s in by_dim[1]] == [1, 1, 1]
        assert [s.level for s in by_dim[2]] == [1]

    def test_triangle_entry_at_weakest_edge(self):
        f = filt(3, [(0, 1, 3), (0, 2, 2), (1, 2, 1)])
        assert f.level_weights == (3.0, 2.0, 1.0)
        (tri,) = [s for s in f.simplices if s.dim == 2]
        assert tri.level == 3 and tri.weight == 1.0

    def test_four_cycle_has_no_triangles(self):
        f = filt(4, [(0, 1, 2), (1, 2, 2), (2, 3, 2), (0, 3, 2)])
        assert sum(1 for s in f.simplices if s.dim == 2) == 0
        assert sum(1 for s in f.simplices if s.dim == 1) == 4

    def test_faces_precede_cofaces(self):
        f = filt(5, [(0, 1, 3), (0, 2, 2), (1, 2, 2), (2, 3, 1), (3, 4, 1),
                     (2, 4, 1)])
        f.validate()  # raises on violation

    def test_strict_order_no_duplicates(self):
        f = filt(4, [(0, 1, 1), (2, 3, 1), (1, 2, 1)])
        keys = [s.order_key() for s in f.simplices]
        assert len(set(keys)) == len(keys)
        assert keys == sorted(keys)

    def test_zero_weight_edges_excluded(self):
        f = filt(3, [(0, 1, 0.0), (1, 2, 2.0)])
        assert sum(1 for s in f.simplices if s.dim == 1) == 1

    def test_vertex_only_filtration(self):
        f = tda.wrcf_filtration(np.zeros((3, 3)))
        assert f.num_levels == 0
        d = tda.compute_persistence(f)
        assert len(d.pairs(0)) == 3
        assert all(p.essential for p in d.pairs(0))
        assert d.pairs(1) == []


class TestComputePersistence:
    def test_unit_triangle(self):
        d = tda.compute_persistence(filt(3, [(0, 1, 1), (0, 2, 1), (1, 2, 1)]))
        h0 = d.pairs(0)
        assert sum(p.essential for p in h0) == 1
        finite = [p for p in h0 if not p.essential]
        assert len(finite) == 2
        assert all(p.death_level == 1 and p.death_value == 1.0 for p in finite)
        assert d.pairs(1) == []  # loop filled at its own level: dropped

    def test_four_cycle_essential_loop(self):
        d = tda.compute_persistence(
            filt(4, [(0, 1, 2), (1, 2, 2), (2, 3, 2), (0, 3, 2)]))
        (h1,) = d.pairs(1)
        assert h1.essential
        assert h1.birth_value == 2.0
        assert h1.death == 1.0  # capped coordinate

    def test_two_disjoint_edges(self):
        d = tda.compute_persistence(filt(4, [(0, 1, 1), (2, 3, 1)]))
        essential = [p for p in d.pairs(0) if p.essential]
        assert len(essential) == 2
        assert sum(p.is_global_essential for p in essential) == 1

    def test_weighted_triangle_death_values(self):
        d = tda.compute_persistence(filt(3, [(0, 1, 3), (0, 2, 2), (1, 2, 1)]))
        finite = sorted((p.death_value for p in d.pairs(0) if not p.essential),
                        reverse=True)
        assert finite == [3.0, 2.0]

    def test_h0_count_conservation(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 8))
            w = np.zeros((n, n))
            for i in range(n):
                for j in range(i + 1, n):
                    if rng.random() < 0.5:
                        w[i, j] = w[j, i] = float(rng.integers(1, 5))
            d = tda.compute_persistence(tda.wrcf_filtration(w))
            assert len(d.pairs(0)) == n

    def test_boundary_of_boundary_vanishes(self):
        f = filt(4, [(0, 1, 2), (0, 2, 2), (1, 2, 2), (1, 3, 1), (2, 3, 1)])
        bm = tda.BoundaryMatrix(f)
        pos = {s.vertices: i for i, s in enumerate(f.simplices)}
        for s in f.simplices:
            if s.dim != 2:
                continue
            total = 0
            for face in itertools.combinations(s.vertices, 2):
                total ^= bm.columns[pos[face]]
            assert total == 0

    def test_face_order_violation_detected(self):
        f = filt(3, [(0, 1, 1), (0, 2, 1), (1, 2, 1)])
        f.simplices = list(reversed(f.simplices))
        with pytest.raises(tda.FiltrationError):
            tda.BoundaryMatrix(f)


class TestBettiOracle:
    def test_connected_final_complex(self):
        f = filt(3, [(0, 1, 3), (0, 2, 2), (1, 2, 1)])
        m = f.num_levels
        assert tda.persistent_betti_oracle(f, m, m, 0) == 1
        assert tda.persistent_betti_oracle(f, m, m, 1) == 0

    def test_four_cycle_beta1(self):
        f = filt(4, [(0, 1, 2), (1, 2, 2), (2, 3, 2), (0, 3, 2)])
        assert tda.persistent_betti_oracle(f, 1, 1, 1) == 1

    def test_vertices_only_level(self):
        f = filt(3, [(0, 1, 1)])
        assert tda.persistent_betti_oracle(f, 0, 0, 0) == 3
        assert tda.persistent_betti_oracle(f, 0, 1, 0) == 2

    def test_oracle_equivalence_small_random(self, rng):
        for _ in range(60):
            n = int(rng.integers(2, 7))
            w = np.zeros((n, n))
            for i in range(n):
                for j in range(i + 1, n):
                    if rng.random() < 0.6:
                        w[i, j] = w[j, i] = float(rng.integers(1, 4))
            assert diagrams_match_oracle(tda.wrcf_filtration(w))


class TestInverseMap:
    def test_cycle_birth_attributed_to_last_edge(self):
        # distinct weights: the weakest cycle edge closes the loop
        f = filt(4, [(0, 1, 4), (1, 2, 3), (2, 3, 2), (0, 3, 1)])
        d = tda.compute_persistence(f)
        (h1,) = d.pairs(1)
        assert h1.birth_edge == (0, 3)

    def test_h0_death_attributed_to_merging_edge(self):
        f = filt(3, [(0, 1, 5), (1, 2, 3)])
        d = tda.compute_persistence(f)
        deaths = {p.death_edge for p in d.pairs(0) if not p.essential}
        assert deaths == {(0, 1), (1, 2)}

    def test_h1_death_attributed_to_triangle_min_edge(self):
        # cycle closes at weight 2, triangle (0,1,2) fills when (0,2) arrives
        f = filt(3, [(0, 1, 4), (1, 2, 3), (0, 2, 1)])
        d = tda.compute_persistence(f)
        assert d.pairs(1) == []  # same-level birth/death dropped
        # 4-cycle closes at weight 3; the chord (0,2) arrives later and
        # fills it through two triangles entering at weight 2
        edges = [(0, 1, 5), (1, 2, 4), (2, 3, 4), (0, 3, 3), (0, 2, 2)]
        wmat = weight_matrix(4, edges)
        d = tda.compute_persistence(tda.wrcf_filtration(wmat))
        filled = [p for p in d.pairs(1) if not p.essential]
        assert filled, "expected at least one filled loop"
        for p in filled:
            faces = list(itertools.combinations(p.destroyer.vertices, 2))
            assert p.death_edge in faces
            assert wmat[p.death_edge] == min(wmat[f_] for f_ in faces)

    def test_records_cover_all_pairs(self):
        f = filt(4, [(0, 1, 3), (1, 2, 2), (2, 3, 2), (0, 3, 1)])
        d = tda.compute_persistence(f)
        records = tda.inverse_map(d)
        assert len(records) == len(d.pairs(0)) + len(d.pairs(1))

    def test_perturbing_attributed_edge_moves_value(self, rng):
        edges = [(0, 1, 5.0), (1, 2, 4.0), (2, 3, 3.0), (0, 3, 2.0), (0, 2, 1.0)]
        f = tda.wrcf_filtration(weight_matrix(4, edges))
        d = tda.compute_persistence(f)
        eps = 0.05  # below half the minimum gap between distinct weights
        for pair in d.pairs(0) + d.pairs(1):
            if pair.essential or pair.death_edge is None:
                continue
            u, v = pair.death_edge
            w2 = weight_matrix(4, edges)
            w2[u, v] += eps
            w2[v, u] += eps
            d2 = tda.compute_persistence(tda.wrcf_filtration(w2))
            moved = [p for p in d2.pairs(pair.dim) if p.death_edge == (u, v)]
            assert any(abs(p.death_value - (pair.death_value + eps)) < 1e-12
                       for p in moved)

    def test_stability_under_small_perturbation(self, rng):
        edges = [(0, 1, 5.0), (1, 2, 4.0), (2, 3, 3.0), (0, 3, 2.0)]
        base = weight_matrix(4, edges)
        d1 = tda.compute_persistence(tda.wrcf_filtration(base, weight_scale=10.0))
        eps = 0.4  # gaps are 1.0, so any |delta| <= 0.4 keeps the order
        for trial in range(10):
            delta = rng.uniform(-eps, eps, size=base.shape)
            delta = np.triu(delta, 1) + np.triu(delta, 1).T
            w2 = np.where(base > 0, base + delta, 0.0)
            d2 = tda.compute_persistence(tda.wrcf_filtration(w2, weight_scale=10.0))
            for dim in (0, 1):
                p1 = sorted((p.birth, p.death) for p in d1.pairs(dim))
                p2 = sorted((p.birth, p.death) for p in d2.pairs(dim))
                assert len(p1) == len(p2)
                for (b1, e1), (b2, e2) in zip(p1, p2):
                    assert abs(b1 - b2) <= eps / 10.0 + 1e-12
                    assert abs(e1 - e2) <= eps / 10.0 + 1e-12


class TestCoordinates:
    def test_normalized_scale_for_community_networks(self):
        from topoclust import community
        import topoclust.autodiff as ad
        from topoclust.graphs import SnapshotGraph
        g = SnapshotGraph.from_edges([(0, 1), (1, 2), (2, 3)])
        q = np.zeros((4, 2))
        q[[0, 1], 0] = 1.0
        q[[2, 3], 1] = 1.0
        net = community.community_adjacency(ad.constant(q), g)
        f = tda.wrcf_filtration(net)
        assert f.weight_scale == 1.0
        d = tda.compute_persistence(f)
        finite = [p for p in d.pairs(0) if not p.essential]
        assert finite[0].death == pytest.approx(1.0 - 1.0 / 6.0)

    def test_raw_matrix_scale_defaults_to_max_weight(self):
        f = filt(3, [(0, 1, 4.0), (1, 2, 2.0)])
        assert f.weight_scale == 4.0
        d = tda.compute_persistence(f)
        deaths = sorted(p.death for p in d.pairs(0) if not p.essential)
        assert deaths == [pytest.approx(0.0), pytest.approx(0.5)]

    def test_export_format(self, tmp_path):
        f = filt(4, [(0, 1, 2), (1, 2, 2), (2, 3, 2), (0, 3, 2)])
        d = tda.compute_persistence(f)
        path = tmp_path / "dgm.txt"
        tda.export_diagram(str(path), d, 1)
        (line,) = path.read_text().strip().splitlines()
        parts = line.split()
        assert parts[0] == "1"
        assert parts[2] == "inf"


def exhaustive_oracle_check(n, weights, edge_prob_absent=False):
    pairs = list(itertools.combinations(range(n), 2))
    for assign in itertools.product(weights, repeat=len(pairs)):
        w = np.zeros((n, n))
        for (i, j), x in zip(pairs, assign):
            w[i, j] = w[j, i] = x
        if not diagrams_match_oracle(tda.wrcf_filtration(w)):
            return False
    return True


@pytest.mark.parametrize("n", [2, 3, 4])
def test_oracle_equivalence_exhaustive_small(n):
    assert exhaustive_oracle_check(n, (1, 2, 3))
