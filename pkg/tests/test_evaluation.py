import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beetlenet.augment import apply_flip, apply_rotation, balance_dataset
from beetlenet.data import AttackStage
from beetlenet.evaluation import (
    accuracy,
    average_accuracy,
    confusion_matrix,
    group_by_stage,
    joint_probabilities,
    make_synthetic_fixture,
    mean_color_scatter,
    mean_rgb_silhouette,
    render_outputs,
    rgb_histograms,
    tsne_embed,
)
from beetlenet.evaluation.tsne import conditional_probabilities, row_perplexity
from beetlenet.kernels import sq_distances

from conftest import make_patch, random_patches
from helpers import reference_outcome_matrices


# -------------------------------------------------------- confusion ----

def test_confusion_examples():
    truths = np.repeat(np.arange(4), [4, 3, 2, 1])
    m = confusion_matrix(truths, truths)
    assert np.array_equal(m.counts, np.diag([4, 3, 2, 1])) and accuracy(m) == 1.0
    g = confusion_matrix(np.zeros(10, int), truths)
    assert g.counts[:, 0].tolist() == [4, 3, 2, 1] and g.counts[:, 1:].sum() == 0
    with pytest.raises(ValueError):
        confusion_matrix([0, 1], [0])
    with pytest.raises(ValueError):
        accuracy(confusion_matrix([], []))


def test_reference_outcome_arithmetic():
    mats = reference_outcome_matrices()
    assert [m.total for m in mats.values()] == [16, 17, 21, 28, 22]
    assert mats["Jun60"].counts[AttackStage.LEAFLESS, AttackStage.RED] == 1
    rep = average_accuracy(mats)
    assert rep.per_flight["Jun60"] == pytest.approx(0.9375)
    assert rep.macro == pytest.approx(0.9875)
    assert rep.micro == pytest.approx(103 / 104)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=60))
def test_confusion_conservation(pairs):
    p, t = zip(*pairs)
    m = confusion_matrix(p, t)
    assert m.total == len(pairs)
    assert accuracy(m) == sum(a == b for a, b in pairs) / len(pairs)


def test_macro_equals_micro_for_equal_sizes():
    rng = np.random.default_rng(0)
    mats = [confusion_matrix(rng.integers(0, 4, 20), rng.integers(0, 4, 20)) for _ in range(3)]
    rep = average_accuracy(mats)
    assert rep.macro == pytest.approx(rep.micro)
    with pytest.raises(ValueError):
        average_accuracy([])


def test_random_predictions_near_chance():
    rng = np.random.default_rng(1)
    t = np.repeat(np.arange(4), 2500)
    assert abs(accuracy(confusion_matrix(rng.integers(0, 4, t.size), t)) - 0.25) < 0.02


# ------------------------------------------------- colour statistics ----

def test_histogram_examples():
    red = np.zeros((5, 5, 3), np.uint8)
    red[..., 0] = 255
    h = rgb_histograms({0: [make_patch(red)]})[0]
    assert h[0, 255] == 25 and h[1, 0] == 25 and h[2, 0] == 25 and h.sum() == 75
    with pytest.raises(ValueError):
        rgb_histograms({1: []})


def test_histogram_counting_oracle_and_conservation():
    patches = random_patches([3, 2, 0, 1], side=6, seed=2)
    hists = rgb_histograms(group_by_stage(patches))
    assert sorted(hists) == [0, 1, 3]
    for stage, h in hists.items():
        members = [p for p in patches if p.stage == stage]
        naive = np.zeros((3, 256), int)
        for p in members:
            for row in p.pixels:
                for px in row:
                    for c in range(3):
                        naive[c, px[c]] += 1
        assert np.array_equal(h, naive)
        assert np.all(h.sum(axis=1) == 36 * len(members))
        moved = [apply_flip(apply_rotation(p, 90), "vertical") for p in members]
        assert np.array_equal(rgb_histograms({stage: moved})[stage], h)


def test_mean_color_scatter():
    px = np.zeros((4, 4, 3), np.uint8)
    px[:2] = 255
    (c, s), = mean_color_scatter([make_patch(px, stage=2)])
    np.testing.assert_allclose(c, [127.5] * 3)
    assert s == AttackStage.RED
    const = np.full((3, 3, 3), [10, 20, 30], np.uint8)
    np.testing.assert_allclose(mean_color_scatter([make_patch(const)])[0][0], [10, 20, 30])
    patches = random_patches([2, 2, 2, 2], side=7, seed=3)
    for (c, _), p in zip(mean_color_scatter(patches), patches):
        oracle = [sum(float(v) for v in p.pixels[..., ch].ravel()) / 49 for ch in range(3)]
        np.testing.assert_allclose(c, oracle, atol=1e-9)


# ------------------------------------------------------------ t-SNE ----

def test_perplexity_calibration_and_joint_normalization():
    X = np.random.default_rng(4).normal(size=(120, 5))
    Pc, _ = conditional_probabilities(sq_distances(X, X), 30.0)
    assert np.all(np.abs(row_perplexity(Pc) - 30.0) < 1e-3)
    P = joint_probabilities(X, 30.0)
    assert abs(P.sum() - 1.0) < 1e-9 and np.allclose(P, P.T) and np.all(np.diag(P) == 0)


def separation_ratio(points, labels):
    cents = [points[labels == c].mean(axis=0) for c in (0, 1)]
    intra = np.mean([np.linalg.norm(points[labels == c] - cents[c], axis=1).mean() for c in (0, 1)])
    return np.linalg.norm(cents[0] - cents[1]) / intra


def test_two_clusters_separate():
    rng = np.random.default_rng(5)
    X = np.vstack([rng.normal(0, 1, (10, 8)), rng.normal(20, 1, (10, 8))])
    labels = np.repeat([0, 1], 10)
    emb = tsne_embed(X, perplexity=5, iterations=500, seed=0, labels=labels)
    assert separation_ratio(emb.points, labels) > 5
    assert emb.kl_divergence < emb.kl_after_exaggeration
    again = tsne_embed(X, perplexity=5, iterations=500, seed=0, labels=labels)
    assert np.array_equal(emb.points, again.points)


def test_tsne_rejects_infeasible_perplexity():
    with pytest.raises(ValueError):
        tsne_embed(np.zeros((4, 3)), perplexity=2)
    with pytest.raises(ValueError):
        tsne_embed(np.zeros((40, 3)), perplexity=1.0)


# ---------------------------------------------------------- fixture ----

def test_fixture_properties():
    a = make_synthetic_fixture(3, side=24, seed=9)
    b = make_synthetic_fixture(3, side=24, seed=9)
    assert all(np.array_equal(p.pixels, q.pixels) for p, q in zip(a.patches, b.patches))
    assert [int(p.stage) for p in a.patches] == [0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]
    for p, ann in zip(a.patches, a.annotations):
        s = 24 // 2
        crop = a.raster[ann.center_y - s:ann.center_y + s, ann.center_x - s:ann.center_x + s]
        assert np.array_equal(crop, p.pixels) and ann.stage == p.stage
    empty = make_synthetic_fixture(0, side=16)
    assert empty.patches == [] and empty.annotations == []
    with pytest.raises(ValueError):
        make_synthetic_fixture([1, 2, 3])


def test_fixture_colour_clusters_separable():
    fx = make_synthetic_fixture(50, side=32, overlap=0.0, seed=0)
    assert mean_rgb_silhouette(fx.patches) > 0.5


def test_jitter_balancing_blurs_classes_more_than_warp():
    fx = make_synthetic_fixture([68, 34, 24, 25], side=32, overlap=0.1, seed=0)
    warp = mean_rgb_silhouette(balance_dataset(fx.patches, "AffineWarp", seed=0)[0])
    jitter = mean_rgb_silhouette(balance_dataset(fx.patches, "ColorJitter", seed=0)[0])
    assert jitter < warp


# ------------------------------------------------------------ render ----

def test_render_outputs_file_set(tmp_path):
    mats = reference_outcome_matrices()
    patches = random_patches([3, 3, 3, 3], side=4, seed=6)
    X = np.random.default_rng(7).normal(size=(12, 3))
    emb = tsne_embed(X, perplexity=3, iterations=50, labels=np.repeat(np.arange(4), 3))
    written = render_outputs(tmp_path, report=average_accuracy(mats), matrices=mats,
                             histograms=rgb_histograms(group_by_stage(patches)),
                             embeddings={"None": emb}, scatter=mean_color_scatter(patches))
    rel = sorted(str(p.relative_to(tmp_path)) for p in written)
    expected = {"metrics/accuracy.csv", "plots/rgb_scatter.csv", "plots/rgb_scatter.svg",
                "plots/rgb_histograms.csv", "plots/rgb_histograms.svg", "tsne/None.csv", "plots/tsne_None.svg"}
    expected |= {f"metrics/confusion_{f}.csv" for f in mats} | {f"plots/confusion_{f}.svg" for f in mats}
    assert set(rel) == expected
    lines = (tmp_path / "metrics" / "accuracy.csv").read_text().splitlines()
    assert lines[1] == "Jun60,0.937500" and lines[-2] == "macro,0.987500"
    assert (tmp_path / "plots" / "tsne_None.svg").read_text().startswith("<svg")
    assert len((tmp_path / "tsne" / "None.csv").read_text().splitlines()) == 13


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_render_outputs_unwritable(tmp_path):
    tmp_path.chmod(0o500)
    try:
        with pytest.raises(OSError):
            render_outputs(tmp_path / "x")
    finally:
        tmp_path.chmod(0o700)


def test_render_outputs_path_is_a_file(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        render_outputs(blocker)
