import numpy as np
import pytest
from hypothesis import given, strategies as st

from glitchguard.clustering import (
    ClusterResult,
    CurveDescriptor,
    LabelAssignment,
    cluster_curves,
    dbscan,
    default_eps,
    featurize,
    homogeneity,
    label_clusters,
    read_cluster_report,
    write_cluster_report,
)
from glitchguard.scoring import RegularityCurve, regularity_score
from reference import brute_dbscan, brute_homogeneity, canonical_partition


def make_curve(s, video_id="vid"):
    s = np.asarray(s, dtype=np.float64)
    return RegularityCurve(video_id=video_id, e=1.0 - s, s=s)


# --- featurize -----------------------------------------------------------------

def test_featurize_length_128_is_identity_resampling():
    rng = np.random.default_rng(0)
    s = rng.uniform(size=128)
    desc = featurize(make_curve(s), length=128)
    np.testing.assert_allclose(desc.values[:128], s, atol=1e-12)
    assert len(desc) == 128 + 5


def test_featurize_constant_curve_summaries():
    desc = featurize(make_curve(np.ones(50)), length=16)
    np.testing.assert_array_equal(desc.values[:16], np.ones(16))
    minimum, mean, frac_below, n_segments, longest = desc.values[16:]
    assert minimum == 1.0 and mean == 1.0
    assert frac_below == 0.0 and n_segments == 0.0 and longest == 0.0


def test_featurize_linear_interpolation():
    desc = featurize(make_curve([0.0, 1.0]), length=5)
    np.testing.assert_allclose(desc.values[:5], [0.0, 0.25, 0.5, 0.75, 1.0])


def test_featurize_rejects_single_frame():
    with pytest.raises(ValueError, match="at least 2"):
        featurize(make_curve([1.0]))


def test_featurize_time_reparameterization_consistency():
    rng = np.random.default_rng(1)
    s = rng.uniform(size=20)
    # integer upsampling of the piecewise-linear curve is the same function
    fine = np.interp(np.linspace(0, 19, 4 * 19 + 1), np.arange(20), s)
    a = featurize(make_curve(s), length=64).values[:64]
    b = featurize(make_curve(fine), length=64).values[:64]
    np.testing.assert_allclose(a, b, atol=1e-6)


# --- dbscan -----------------------------------------------------------------------

def test_dbscan_trivial_cluster():
    points = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]])
    labels = dbscan(points, eps=0.5, min_pts=2)
    assert labels.tolist() == [0, 0, 0]


def test_dbscan_isolated_point_is_noise():
    points = np.array([[0.0, 0.0], [0.05, 0.0], [9.0, 9.0]])
    labels = dbscan(points, eps=0.5, min_pts=2)
    assert labels.tolist() == [0, 0, -1]


def test_dbscan_ids_follow_discovery_order():
    points = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]])
    labels = dbscan(points, eps=0.5, min_pts=2)
    assert labels.tolist() == [0, 0, 1, 1]


def test_dbscan_matches_brute_force_reference():
    rng = np.random.default_rng(2)
    for trial in range(15):
        points = rng.uniform(-1.0, 1.0, size=(60, 2))
        eps = float(rng.uniform(0.05, 0.4))
        min_pts = int(rng.integers(2, 6))
        got = canonical_partition(dbscan(points, eps, min_pts).tolist())
        want = canonical_partition(brute_dbscan(points, eps, min_pts))
        assert got == want, f"trial {trial} eps={eps} min_pts={min_pts}"


def test_dbscan_duplicate_of_core_point_joins_its_cluster():
    rng = np.random.default_rng(3)
    points = rng.uniform(size=(30, 2))
    eps, min_pts = 0.3, 3
    labels = dbscan(points, eps, min_pts)
    core_idx = next(i for i, l in enumerate(labels) if l != -1)
    extended = np.vstack([points, points[core_idx]])
    labels2 = dbscan(extended, eps, min_pts)
    assert labels2[-1] == labels2[core_idx] != -1


@given(st.lists(st.tuples(st.integers(-30, 30), st.integers(-30, 30)),
                min_size=3, max_size=40, unique=True),
       st.integers(-1000, 1000), st.integers(-1000, 1000))
def test_dbscan_translation_invariance(coords, dx, dy):
    # integer coordinates keep squared distances exact under translation
    points = np.array(coords, dtype=np.float64)
    shifted = points + np.array([dx, dy], dtype=np.float64)
    a = dbscan(points, eps=7.5, min_pts=3)
    b = dbscan(shifted, eps=7.5, min_pts=3)
    assert a.tolist() == b.tolist()


def test_dbscan_validates_inputs():
    with pytest.raises(ValueError, match="eps"):
        dbscan(np.zeros((3, 2)), eps=0.0, min_pts=2)
    with pytest.raises(ValueError, match="mixed dimensions"):
        dbscan([np.zeros(2), np.zeros(3)], eps=1.0, min_pts=1)


def test_default_eps_is_median_knn_distance():
    points = np.array([[0.0], [1.0], [2.0], [3.0], [4.0], [50.0]])
    # 4th-nearest distances: [4, 3, 2, 3, 4, 49] -> median 3.5
    assert default_eps(points, k=4) == pytest.approx(3.5)


# --- cluster labeling -----------------------------------------------------------

def desc(values, video_id="d"):
    return CurveDescriptor(video_id=video_id, values=np.asarray(values,
                                                                dtype=float))


def test_label_clusters_single_exemplar():
    descriptors = [desc([0.0, 0.0], "a"), desc([0.1, 0.0], "b")]
    result = ClusterResult(cluster_ids=np.array([0, 0]), categories={},
                           eps=1.0, min_pts=1)
    got = label_clusters(result, descriptors, [(desc([0.0, 0.1]), "hole")])
    assert got == {0: "hole"}


def test_label_clusters_tie_breaks_lexicographically():
    descriptors = [desc([0.0, 0.0], "a")]
    result = ClusterResult(cluster_ids=np.array([0]), categories={},
                           eps=1.0, min_pts=1)
    exemplars = [(desc([1.0, 0.0]), "b_bug"), (desc([-1.0, 0.0]), "a_bug")]
    got = label_clusters(result, descriptors, exemplars)
    assert got == {0: "a_bug"}


def test_label_clusters_requires_exemplars():
    result = ClusterResult(cluster_ids=np.array([0]), categories={},
                           eps=1.0, min_pts=1)
    with pytest.raises(ValueError, match="exemplar"):
        label_clusters(result, [desc([0.0])], [])


def test_cluster_curves_labels_synthetic_shapes():
    # two families of curves: deep early dip vs broad late dip
    def early(seed):
        s = np.ones(60)
        s[10:16] = 0.02 + 0.001 * seed
        return make_curve(s, f"early_{seed}")

    def late(seed):
        s = np.ones(60)
        s[35:55] = 0.45 + 0.002 * seed
        return make_curve(s, f"late_{seed}")

    descriptors = [featurize(early(i), 32) for i in range(5)] + \
        [featurize(late(i), 32) for i in range(5)]
    exemplars = [(descriptors[0], "black_screen"),
                 (descriptors[5], "texture_corruption")]
    result = cluster_curves(descriptors, exemplars, min_pts=2)
    ids = result.cluster_ids
    assert len(set(ids[:5])) == 1 and len(set(ids[5:])) == 1
    assert ids[0] != ids[5]
    assert result.categories[int(ids[0])] == "black_screen"
    assert result.categories[int(ids[5])] == "texture_corruption"


# --- homogeneity -----------------------------------------------------------------

def test_homogeneity_perfect():
    a = LabelAssignment(classes=(0, 0, 1, 1), clusters=(0, 0, 1, 1))
    assert homogeneity(a) == pytest.approx(1.0, abs=1e-12)


def test_homogeneity_single_cluster_is_zero():
    a = LabelAssignment(classes=(0, 0, 1, 1), clusters=(0, 0, 0, 0))
    assert homogeneity(a) == pytest.approx(0.0, abs=1e-12)


def test_homogeneity_two_thirds_case():
    a = LabelAssignment(classes=(0, 0, 0, 1, 1, 1), clusters=(0, 0, 1, 1, 2, 2))
    assert homogeneity(a) == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert brute_homogeneity((0, 0, 0, 1, 1, 1), (0, 0, 1, 1, 2, 2)) == \
        pytest.approx(2.0 / 3.0, abs=1e-12)


def test_homogeneity_single_class_is_one():
    a = LabelAssignment(classes=("x", "x", "x"), clusters=(0, 1, 1))
    assert homogeneity(a) == 1.0


def test_homogeneity_noise_points_are_singletons():
    a = LabelAssignment(classes=(0, 0, 1, 1), clusters=(0, 0, -1, -1))
    assert homogeneity(a) == pytest.approx(1.0, abs=1e-12)


def test_homogeneity_matches_brute_force_on_random_vectors():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(2, 40))
        classes = tuple(int(v) for v in rng.integers(0, 4, size=n))
        clusters = tuple(int(v) for v in rng.integers(-1, 5, size=n))
        got = homogeneity(LabelAssignment(classes=classes, clusters=clusters))
        want = brute_homogeneity(classes, clusters)
        assert abs(got - want) < 1e-10


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 4)),
                min_size=1, max_size=40))
def test_homogeneity_invariant_under_relabeling(pairs):
    classes = tuple(c for c, _ in pairs)
    clusters = tuple(k for _, k in pairs)
    base = homogeneity(LabelAssignment(classes=classes, clusters=clusters))
    permuted_k = tuple((k * 7 + 3) % 11 for k in clusters)  # injective on 0..4
    permuted_c = tuple((c * 5 + 1) % 13 for c in classes)  # injective on 0..3
    assert homogeneity(LabelAssignment(classes=classes,
                                       clusters=permuted_k)) == \
        pytest.approx(base, abs=1e-12)
    assert homogeneity(LabelAssignment(classes=permuted_c,
                                       clusters=clusters)) == \
        pytest.approx(base, abs=1e-12)


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)),
                min_size=2, max_size=30),
       st.randoms(use_true_random=False))
def test_refining_a_cluster_never_decreases_homogeneity(pairs, rnd):
    classes = tuple(c for c, _ in pairs)
    clusters = [k for _, k in pairs]
    base = homogeneity(LabelAssignment(classes=classes,
                                       clusters=tuple(clusters)))
    target = rnd.choice(sorted(set(clusters)))
    refined = [k if k != target or rnd.random() < 0.5 else 99
               for k in clusters]
    after = homogeneity(LabelAssignment(classes=classes,
                                        clusters=tuple(refined)))
    assert after >= base - 1e-12


def test_label_assignment_validation():
    with pytest.raises(ValueError, match="length"):
        LabelAssignment(classes=(0,), clusters=(0, 1))
    with pytest.raises(ValueError, match="empty"):
        LabelAssignment(classes=(), clusters=())


# --- report ------------------------------------------------------------------------

def test_cluster_report_roundtrip(tmp_path):
    rows = [("vid_a", 0, "black_screen", "black_screen"),
            ("vid_b", -1, "noise", "boundary_hole")]
    path = tmp_path / "report.csv"
    write_cluster_report(path, rows, 0.85)
    back, score = read_cluster_report(path)
    assert back == rows
    assert score == pytest.approx(0.85)
