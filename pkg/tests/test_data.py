import gzip
import struct

import numpy as np
import pytest

from hqfnn import data
from hqfnn.data import BatchPlan, Dataset, add_gaussian_noise, batches, load_csv_features, load_idx, split
from hqfnn.errors import ConsistencyError, FormatError, InvalidArgument


def handmade_idx(tmp_path, n=4, magic=0x803, label_count=None, gz=False):
    pixels = (np.arange(n * 784) % 256).astype(np.uint8)
    pixels[:784] = 0  # first image all black
    img = struct.pack(">IIII", magic, n, 28, 28) + pixels.tobytes()
    labels = bytes(range(label_count if label_count is not None else n))
    lab = struct.pack(">II", 0x801, len(labels)) + labels
    ip, lp = tmp_path / "i.idx", tmp_path / "l.idx"
    if gz:
        ip, lp = tmp_path / "i.idx.gz", tmp_path / "l.idx.gz"
        img, lab = gzip.compress(img), gzip.compress(lab)
    ip.write_bytes(img)
    lp.write_bytes(lab)
    return ip, lp


@pytest.mark.parametrize("gz", [False, True])
def test_load_idx_fixture(tmp_path, gz):
    ds = load_idx(*handmade_idx(tmp_path, gz=gz))
    assert len(ds) == 4 and ds.inputs.shape == (4, 1, 28, 28)
    assert np.all(ds.inputs[0] == -1.0)
    assert ds.inputs.max() == pytest.approx(1.0)
    assert list(ds.labels) == [0, 1, 2, 3]


def test_load_idx_errors(tmp_path):
    with pytest.raises(FormatError, match="0x00000804"):
        load_idx(*handmade_idx(tmp_path, magic=0x804))
    with pytest.raises(ConsistencyError):
        load_idx(*handmade_idx(tmp_path, label_count=3))


def test_noise(tmp_path):
    ds = Dataset(np.zeros((1000, 1, 28, 28)), np.zeros(1000, dtype=int), kind="image")
    assert add_gaussian_noise(ds, 0.0, 1) is ds
    noisy = add_gaussian_noise(ds, 0.05, seed=1)
    assert abs(noisy.inputs.std() - 0.05) < 0.002
    assert np.array_equal(noisy.inputs, add_gaussian_noise(ds, 0.05, seed=1).inputs)
    edge = Dataset(np.ones((10, 1, 28, 28)), np.zeros(10, dtype=int), kind="image")
    out = add_gaussian_noise(edge, 0.5, seed=2).inputs
    assert out.max() <= 1.0 and out.min() >= -1.0


def test_csv(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("label,f0,f1\n0,1.0,5\n1,3.0,5\n2,2.0,5\n")
    ds = load_csv_features(p, 3)
    assert len(ds) == 3 and ds.inputs.shape == (3, 2)
    assert np.allclose(ds.inputs[:, 0], [-1, 1, 0])
    assert np.all(ds.inputs[:, 1] == 0)
    # held-out data reuses training statistics (and is clipped into range)
    q = tmp_path / "b.csv"
    q.write_text("label,f0,f1\n0,2.5,5\n0,9,5\n")
    held = load_csv_features(q, 3, scaling=ds.scaling)
    assert np.allclose(held.inputs[:, 0], [0.5, 1.0])


@pytest.mark.parametrize("body,match", [
    ("label,f0\n0,1\n1\n", "line 3"),
    ("label,f0\n0,abc\n", "non-numeric"),
    ("x,f0\n0,1\n", "header"),
])
def test_csv_format_errors(tmp_path, body, match):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(FormatError, match=match):
        load_csv_features(p, 2)


def test_csv_label_range(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("label,f0\n0,1\n5,2\n")
    with pytest.raises(InvalidArgument, match="line 3"):
        load_csv_features(p, 3)


def _toy(n=10, k=2):
    return Dataset(np.linspace(-1, 1, n)[:, None], np.arange(n) % k, num_classes=k)


def test_split_fraction():
    train, held = split(_toy(10), 0.5, seed=3)
    assert len(train) == len(held) == 5
    assert sorted(np.concatenate([train.inputs[:, 0], held.inputs[:, 0]])) == pytest.approx(
        np.linspace(-1, 1, 10))
    again, _ = split(_toy(10), 0.5, seed=3)
    assert np.array_equal(train.inputs, again.inputs)


def test_split_per_class():
    ds = _toy(9, 3)
    train, held = split(ds, seed=1, per_class=1)
    assert len(train) == 3 and sorted(train.labels) == [0, 1, 2]
    assert len(held) == 6
    with pytest.raises(InvalidArgument):
        split(ds, seed=1, per_class=4)


def test_batches():
    ds = _toy(5)
    plan = BatchPlan(seed=4, batch_size=2)
    out = list(batches(ds, plan, epoch=1))
    assert [len(x) for x, _ in out] == [2, 2, 1]
    seen = np.concatenate([x[:, 0] for x, _ in out])
    assert sorted(seen) == pytest.approx(sorted(ds.inputs[:, 0]))
    assert all(np.all(y.sum(axis=1) == 1) for _, y in out)
    again = list(batches(ds, plan, epoch=1))
    assert all(np.array_equal(a[0], b[0]) for a, b in zip(out, again))


def test_inputs_in_range(idx_fixture, csv_fixture):
    for ds in (load_idx(*idx_fixture), load_csv_features(csv_fixture, 3)):
        assert ds.inputs.min() >= -1 and ds.inputs.max() <= 1
