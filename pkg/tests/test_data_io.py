import struct

import numpy as np
import pytest

from genrkm import nn
from genrkm.data_io import (Dataset, ModelFile, generate_toy_gaussians, image_grid, load_csv,
                            load_idx, load_model, one_hot, save_model, write_csv, write_pnm)
from genrkm.errors import FormatError, ShapeError
from genrkm.generation import fit_gmm
from genrkm.kernels import KernelSpec
from genrkm.subspace import ViewConfig, encode
from genrkm.training import TrainConfig, train_explicit, train_implicit


def test_toy_generator():
    a = generate_toy_gaussians(count=1, seed=3)
    b = generate_toy_gaussians(count=1, seed=3)
    assert np.array_equal(a.views["x"], b.views["x"]) and a.n == 3
    ds = generate_toy_gaussians(count=400, stddev=0.3, seed=0)
    X, means = ds.views["x"], np.array(ds.meta["means"])
    for k in range(3):
        emp = X[ds.labels == k].mean(axis=0)
        assert np.all(np.abs(emp - means[k]) <= 3 * 0.3 / np.sqrt(400))
    assert np.array_equal(ds.views["label"].sum(axis=1), np.ones(1200))


def test_dataset_checks():
    with pytest.raises(ShapeError):
        Dataset({"a": np.ones((3, 2)), "b": np.ones((4, 1))})
    with pytest.raises(ValueError):
        Dataset({"a": np.array([[np.nan]])})


def test_one_hot():
    assert np.array_equal(one_hot([0], 3), [[1, 0, 0]])
    y = np.array([2, 0, 1, 2])
    Y = one_hot(y, 3)
    assert np.array_equal(Y.sum(1), np.ones(4)) and np.array_equal(Y.argmax(1), y)
    with pytest.raises(ValueError):
        one_hot([3], 3)


def test_csv(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("1,2\n3,4\n")
    assert np.array_equal(load_csv(p), [[1, 2], [3, 4]])
    p.write_text("x,y\n1,2\n")
    assert np.array_equal(load_csv(p, has_header=True), [[1, 2]])
    v = 1.2345678901234567e-300
    p.write_text(f"{v!r},{-v!r}\n")
    assert load_csv(p)[0, 0] == v
    p.write_text("1,2\n3\n")
    with pytest.raises(FormatError, match="ragged"):
        load_csv(p)
    p.write_text("1,abc\n")
    with pytest.raises(FormatError):
        load_csv(p)
    p.write_text("1,inf\n")
    with pytest.raises(FormatError):
        load_csv(p)


def test_csv_roundtrip(tmp_path):
    X = np.random.default_rng(0).standard_normal((4, 3))
    write_csv(tmp_path / "x.csv", X, comments=["seed=0"])
    p = tmp_path / "x.csv"
    assert p.read_text().startswith("# seed=0\n")
    body = "\n".join(p.read_text().splitlines()[1:]) + "\n"
    (tmp_path / "y.csv").write_text(body)
    assert np.array_equal(load_csv(tmp_path / "y.csv"), X)


def test_idx(tmp_path):
    img = tmp_path / "img.idx"
    img.write_bytes(struct.pack(">IIII", 0x803, 1, 2, 2) + bytes([0, 255, 128, 64]))
    assert np.array_equal(load_idx(img), [[0.0, 1.0, 128 / 255, 64 / 255]])
    lab = tmp_path / "lab.idx"
    lab.write_bytes(struct.pack(">II", 0x801, 2) + bytes([3, 1]))
    assert load_idx(lab).tolist() == [3, 1]
    bad = tmp_path / "bad.idx"
    bad.write_bytes(struct.pack(">IIII", 0x803, 2, 2, 2) + bytes([1, 2, 3]))
    with pytest.raises(FormatError, match="truncated"):
        load_idx(bad)
    bad.write_bytes(struct.pack(">II", 0x999, 0))
    with pytest.raises(FormatError, match="magic"):
        load_idx(bad)


def test_pnm(tmp_path):
    grid = image_grid(np.array([[0.0, 1.0, 0.5, 0.25]] * 3), (2, 2), 2)
    assert grid.shape == (7, 7)
    write_pnm(tmp_path / "g.pgm", grid, "seed=1")
    lines = (tmp_path / "g.pgm").read_text().splitlines()
    assert lines[:4] == ["P2", "# seed=1", "7 7", "255"]
    assert lines[5].split()[1:3] == ["0", "255"]
    write_pnm(tmp_path / "c.ppm", np.ones((1, 2, 3)))
    assert (tmp_path / "c.ppm").read_text().splitlines()[0] == "P3"


def _implicit():
    ds = generate_toy_gaussians(count=20, seed=2)
    return ds, train_implicit(ds, [KernelSpec("gaussian", 0.5), KernelSpec("laplace", 1.0)], [1.0, 2.0], 3)


def test_model_roundtrip_implicit(tmp_path):
    ds, model = _implicit()
    gmm = fit_gmm(model.H.T, 2, 0)
    p1, p2 = tmp_path / "a.grkm", tmp_path / "b.grkm"
    save_model(p1, ModelFile(model, {"seed": 0, "nr": 4}, gmm))
    mf = load_model(p1)
    save_model(p2, mf)
    assert p1.read_bytes() == p2.read_bytes()
    assert mf.config == {"seed": 0, "nr": 4}
    assert np.array_equal(mf.gmm.means, gmm.means)
    for a, b in zip(model.grams, mf.model.grams):
        assert np.array_equal(a, b)
    inputs = [ds.views["x"][:5] + 0.1, ds.views["label"][:5]]
    assert encode(model, inputs).tobytes() == encode(mf.model, inputs).tobytes()


def test_model_roundtrip_explicit(tmp_path):
    X = np.random.default_rng(1).standard_normal((12, 3))
    views = [ViewConfig("x", 0.7, feature_map=nn.init_params(nn.mlp([3, 5, 3]), 0),
                        preimage_map=nn.init_params(nn.mlp([3, 5, 3], output="sigmoid"), 1))]
    model, _ = train_explicit([X], views, TrainConfig(s=2, epochs=2, learning_rate=1e-2))
    save_model(tmp_path / "e.grkm", ModelFile(model))
    back = load_model(tmp_path / "e.grkm").model
    assert encode(model, [X]).tobytes() == encode(back, [X]).tobytes()
    assert back.views[0].preimage_map.layers == views[0].preimage_map.layers


def test_corruption_detected(tmp_path):
    _, model = _implicit()
    p = tmp_path / "m.grkm"
    save_model(p, ModelFile(model))
    raw = bytearray(p.read_bytes())
    bad = bytearray(raw)
    bad[0:4] = b"XXXX"
    (tmp_path / "bad1").write_bytes(bad)
    with pytest.raises(FormatError):
        load_model(tmp_path / "bad1")
    bad = bytearray(raw)
    bad[len(bad) // 2] ^= 0xFF
    (tmp_path / "bad2").write_bytes(bad)
    with pytest.raises(FormatError, match="checksum"):
        load_model(tmp_path / "bad2")
    bad = bytearray(raw)
    bad[4:8] = struct.pack("<I", 99)
    (tmp_path / "bad3").write_bytes(bad)
    with pytest.raises(FormatError, match="version"):
        load_model(tmp_path / "bad3")
