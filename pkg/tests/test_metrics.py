import numpy as np
import pytest

from csbmf.metrics import align_frames, balanced_accuracy, score
from csbmf.spectral import StftConfig

CFG = StftConfig(10, 10, "rectangular", 100.0)


def test_constant_truth_has_no_mask():
    ft = align_frames(np.ones((2, 100), int), 100.0, CFG)
    assert not ft.mask.any() and ft.labels.all()
    np.testing.assert_allclose(ft.times, np.arange(10) / 10)


def test_mid_window_boundary_is_masked():
    truth = np.zeros((1, 100), int)
    truth[0, 35:] = 1
    ft = align_frames(truth, 100.0, CFG)
    assert list(np.flatnonzero(ft.mask)) == [3]
    assert list(ft.labels[0]) == [0, 0, 0, 1, 1, 1, 1, 1, 1, 1]  # 35..39 is half the window


def test_boundary_on_frame_start_is_not_masked():
    truth = np.zeros((1, 100), int)
    truth[0, 40:] = 1
    assert not align_frames(truth, 100.0, CFG).mask.any()


def test_scenario_mask_counts_boundaries(clean):
    # 7 intervals give 14 boundaries, none on a frame start, each inside one frame
    assert clean.frame_truth.mask.sum() == 14


def test_identity_scores_one():
    t = np.array([[1, 0, 1, 1, 0], [0, 0, 1, 0, 1]])
    ev = score(t, t)
    assert ev.balanced == [1.0, 1.0] and ev.hamming == 1.0 and ev.exact_match == 1.0
    assert ev.assignment == {0: 0, 1: 1}


def test_permutation_invariance():
    rng = np.random.default_rng(0)
    t = rng.integers(0, 2, (4, 50))
    perm = [2, 0, 3, 1]
    ev = score(t[perm], t)
    assert ev.min_balanced == 1.0
    assert ev.assignment == {i: p for i, p in enumerate(perm)}


def test_inverted_source():
    t = np.array([[1, 1, 0, 0, 1, 0], [0, 1, 1, 0, 0, 1]])
    rec = t.copy()
    rec[1] = 1 - rec[1]
    ev = score(rec, t)
    assert ev.balanced[0] == 1.0 and ev.balanced[1] == 0.0


def test_extra_and_missing_rows():
    t = np.array([[1, 0, 1, 0]])
    ev = score(np.array([[1, 0, 1, 0], [0, 0, 0, 0]]), t)
    assert ev.balanced == [1.0] and ev.extra == [1.0]
    ev = score(np.zeros((0, 4)), np.array([[1, 0, 1, 0], [0, 1, 0, 1]]))
    assert ev.balanced == [0.5, 0.5]
    with pytest.raises(ValueError):
        score(np.zeros((1, 3)), t)


def test_balanced_accuracy_single_class():
    assert balanced_accuracy([1, 1, 0], [1, 1, 1]) == pytest.approx(2 / 3)
    assert balanced_accuracy([0, 0], [0, 0]) == 1.0


def test_mask_never_lowers_accuracy_on_clean_data(clean):
    from csbmf.decomposer import greedy_select, recover_activations
    from csbmf.resync import build_residual_matrix, ResyncConfig
    R = build_residual_matrix(clean.C, 2, 1e4, ResyncConfig(early_exit=True))
    act = recover_activations(greedy_select(R, 1e4), clean.lifted.labels[clean.C.ids])
    ft = clean.frame_truth
    rng = np.random.default_rng(1)
    mask = np.zeros_like(ft.mask)
    prev = score(act, ft.labels, mask).min_balanced
    for m in rng.permutation(np.flatnonzero(ft.mask)):
        mask[m] = True
        cur = score(act, ft.labels, mask).min_balanced
        assert cur >= prev - 1e-12
        prev = cur
    assert prev == 1.0


def test_report_json(tmp_path):
    ev = score(np.array([[1, 0]]), np.array([[1, 0]]))
    ev.to_json(tmp_path / "e.json")
    import json
    d = json.loads((tmp_path / "e.json").read_text())
    assert d["balanced_accuracy"] == [1.0]
