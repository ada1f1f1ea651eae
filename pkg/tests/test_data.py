"""Dataset loading, synthesis, and subsetting contracts."""

import numpy as np
import pytest

from ladderlab.data import (
    Dataset,
    avg_pool_2x2,
    downsample_28_to_8,
    load_digits8,
    load_idx,
    per_class_subset,
    split_dataset,
    synth_blobs,
    write_idx,
)
from ladderlab.errors import (
    BudgetError,
    ConsistencyError,
    ContractError,
    FormatError,
    LengthError,
)


def _tiny_idx(tmp_path, n=6, h=4, w=4, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 256, size=(n, h, w), dtype=np.uint8)
    labels = (np.arange(n) % 3).astype(np.uint8)
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_idx(ip, lp, images, labels)
    return ip, lp, images, labels


def test_idx_round_trip(tmp_path):
    ip, lp, images, labels = _tiny_idx(tmp_path)
    ds = load_idx(ip, lp)
    assert len(ds) == 6 and ds.x.shape == (6, 1, 4, 4)
    # payload bytes survive the scale/unscale round trip exactly
    recovered = np.round(ds.x[:, 0] * 255.0).astype(np.uint8)
    assert np.array_equal(recovered, images)
    assert np.array_equal(ds.y, labels)


def test_idx_scaling_endpoints(tmp_path):
    images = np.array([[[0, 255], [128, 1]]], dtype=np.uint8)
    labels = np.array([0], dtype=np.uint8)
    ip, lp = tmp_path / "i.idx", tmp_path / "l.idx"
    write_idx(ip, lp, images, labels)
    ds = load_idx(ip, lp)
    assert ds.x[0, 0, 0, 0] == 0.0
    assert ds.x[0, 0, 0, 1] == 1.0


def test_idx_wrong_magic(tmp_path):
    ip, lp, _, _ = _tiny_idx(tmp_path)
    blob = bytearray(ip.read_bytes())
    blob[3] = 0x01  # labels magic in the images file
    ip.write_bytes(bytes(blob))
    with pytest.raises(FormatError):
        load_idx(ip, lp)


def test_idx_truncated_image(tmp_path):
    ip, lp, _, _ = _tiny_idx(tmp_path)
    ip.write_bytes(ip.read_bytes()[:-1])
    with pytest.raises(LengthError):
        load_idx(ip, lp)


def test_idx_count_mismatch(tmp_path):
    ip, lp, images, _ = _tiny_idx(tmp_path)
    write_idx(tmp_path / "i2.idx", tmp_path / "l2.idx", images, np.zeros(4, dtype=np.uint8))
    with pytest.raises(ConsistencyError):
        load_idx(tmp_path / "i2.idx", tmp_path / "l2.idx")


def test_blobs_linear_separability_oracle():
    from sklearn.linear_model import LogisticRegression

    ds = synth_blobs(2, 100, 2, 10.0, seed=9)
    clf = LogisticRegression().fit(ds.x, ds.y)
    assert clf.score(ds.x, ds.y) == 1.0


def test_blobs_determinism_and_range():
    a = synth_blobs(3, 20, 4, 5.0, seed=11)
    b = synth_blobs(3, 20, 4, 5.0, seed=11)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert a.x.min() >= 0.0 and a.x.max() <= 1.0


def test_blobs_single_sample_per_class():
    ds = synth_blobs(4, 1, 2, 3.0, seed=2)
    assert len(ds) == 4


def test_blobs_preconditions():
    with pytest.raises(ContractError):
        synth_blobs(1, 10, 2, 5.0, seed=0)
    with pytest.raises(ContractError):
        synth_blobs(2, 0, 2, 5.0, seed=0)
    with pytest.raises(ContractError):
        synth_blobs(2, 10, 2, 0.0, seed=0)


def test_per_class_subset_counts_and_uniqueness():
    ds = synth_blobs(10, 60, 3, 4.0, seed=3)
    sub = per_class_subset(ds, 45, seed=4)
    assert len(sub) == 450
    counts = np.bincount(sub.y, minlength=10)
    assert np.all(counts == 45)
    # no duplicates: each selected sample vector appears once
    flat = sub.x.reshape(len(sub), -1)
    assert len(np.unique(flat, axis=0)) == len(sub)


def test_per_class_subset_full_class_restores_set():
    ds = synth_blobs(2, 15, 2, 5.0, seed=5)
    sub = per_class_subset(ds, 15, seed=6)
    orig = set(map(tuple, ds.x.tolist()))
    got = set(map(tuple, sub.x.tolist()))
    assert orig == got


def test_per_class_subset_budget_error():
    ds = synth_blobs(2, 10, 2, 5.0, seed=7)
    with pytest.raises(BudgetError):
        per_class_subset(ds, 11, seed=8)


def test_pixels_in_unit_interval_everywhere():
    train, test = load_digits8(seed=1, train_per_class=5, test_per_class=2)
    for ds in (train, test):
        assert ds.x.min() >= 0.0 and ds.x.max() <= 1.0
    assert len(train) == 50 and len(test) == 20


def test_digits8_splits_disjoint():
    train, test = load_digits8(seed=1, train_per_class=5, test_per_class=2)
    tr = set(map(tuple, train.x.reshape(len(train), -1).tolist()))
    te = set(map(tuple, test.x.reshape(len(test), -1).tolist()))
    assert not (tr & te)


def test_downsample_28_to_8():
    imgs = np.ones((2, 1, 28, 28), dtype=np.float32)
    out = downsample_28_to_8(imgs)
    assert out.shape == (2, 1, 8, 8)
    # interior windows average ones; zero-padded corners average less
    assert out[0, 0, 3, 3] == 1.0
    assert out[0, 0, 0, 0] == 0.25


def test_avg_pool_values():
    x = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
    out = avg_pool_2x2(x)
    assert out[0, 0, 0, 0] == pytest.approx((0 + 1 + 4 + 5) / 4)


def test_split_dataset_stratified_disjoint():
    ds = synth_blobs(3, 40, 2, 5.0, seed=12)
    train, test = split_dataset(ds, 0.25, seed=13)
    assert len(train) + len(test) == len(ds)
    assert np.all(np.bincount(test.y, minlength=3) == 10)


def test_dataset_label_validation():
    with pytest.raises(ConsistencyError):
        Dataset(np.zeros((2, 3), dtype=np.float32), np.array([0, 5]), class_count=3)
