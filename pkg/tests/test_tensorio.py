import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from multilinop.tensorio import (
    HEADER_SIZE,
    DatasetSplit,
    Grid2D,
    MatrixFormatError,
    SnapshotLabel,
    SnapshotMatrix,
    SplitError,
    filter_snapshots,
    final_time_columns,
    load_dataset,
    read_matrix,
    save_dataset,
    split_by_fire,
    write_matrix,
)


def _labels(counts, conditions=None):
    out = []
    for fire, n in enumerate(counts):
        cond = conditions[fire] if conditions else ""
        out.extend(SnapshotLabel(fire, k, cond) for k in range(n))
    return out


def test_single_zero_matrix_layout(tmp_path):
    p = tmp_path / "a.mlop"
    write_matrix(np.array([[0.0]]), p)
    raw = p.read_bytes()
    assert len(raw) == HEADER_SIZE + 8 == 32
    assert raw[:8] == b"MLOPMAT1"
    assert struct.unpack("<QQ", raw[8:24]) == (1, 1)
    np.testing.assert_array_equal(read_matrix(p), [[0.0]])


def test_two_by_three_row_major(tmp_path):
    p = tmp_path / "b.mlop"
    m = np.arange(1.0, 7.0).reshape(2, 3)
    write_matrix(m, p)
    raw = p.read_bytes()
    assert len(raw) == 24 + 48
    assert struct.unpack("<6d", raw[24:]) == (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    np.testing.assert_array_equal(read_matrix(p), m)


def test_random_roundtrip_bitwise(tmp_path, rng):
    m = rng.standard_normal((100, 50))
    write_matrix(m, tmp_path / "c.mlop")
    back = read_matrix(tmp_path / "c.mlop")
    assert back.tobytes() == m.tobytes()


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(0, 6), st.integers(0, 6)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_roundtrip_property(tmp_path_factory, m):
    p = tmp_path_factory.mktemp("rt") / "m.mlop"
    write_matrix(m, p)
    back = read_matrix(p)
    assert back.shape == m.shape
    assert back.tobytes() == np.ascontiguousarray(m).tobytes()


def test_snapshot_matrix_is_accepted(tmp_path):
    grid = Grid2D(2, 1, 1.0, 1.0)
    sm = SnapshotMatrix(grid, np.ones((2, 1)), (SnapshotLabel(0, 0),))
    write_matrix(sm, tmp_path / "s.mlop")
    np.testing.assert_array_equal(read_matrix(tmp_path / "s.mlop"), np.ones((2, 1)))


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_rejected(tmp_path, bad):
    with pytest.raises(ValueError):
        write_matrix(np.array([[1.0, bad]]), tmp_path / "x.mlop")


def test_bad_magic(tmp_path):
    p = tmp_path / "m.mlop"
    p.write_bytes(b"XXXXXXXX" + struct.pack("<QQ", 1, 1) + struct.pack("<d", 1.0))
    with pytest.raises(MatrixFormatError, match="magic"):
        read_matrix(p)


def test_truncated_payload(tmp_path):
    p = tmp_path / "m.mlop"
    p.write_bytes(b"MLOPMAT1" + struct.pack("<QQ", 10, 10) + np.zeros(50).tobytes())
    with pytest.raises(MatrixFormatError):
        read_matrix(p)


def test_short_header_and_overflow(tmp_path):
    p = tmp_path / "m.mlop"
    p.write_bytes(b"MLOPMAT1" + b"\x00" * 4)
    with pytest.raises(MatrixFormatError):
        read_matrix(p)
    p.write_bytes(b"MLOPMAT1" + struct.pack("<QQ", 2**63, 2**63))
    with pytest.raises(MatrixFormatError):
        read_matrix(p)


def test_trailing_bytes_rejected(tmp_path):
    p = tmp_path / "m.mlop"
    p.write_bytes(b"MLOPMAT1" + struct.pack("<QQ", 1, 1) + np.zeros(2).tobytes())
    with pytest.raises(MatrixFormatError):
        read_matrix(p)


def test_three_fires_one_each():
    s = split_by_fire(_labels([1, 1, 1]), (1 / 3, 1 / 3, 1 / 3), seed=0)
    assert sorted(len(p) for p in (s.train, s.validation, s.test)) == [1, 1, 1]


def test_ten_fires_seed_seven():
    labels = _labels([10] * 10)
    s = split_by_fire(labels, (0.45, 0.10, 0.45), seed=7)
    for got, want in zip((s.train, s.validation, s.test), (45, 10, 45)):
        assert abs(len(got) - want) <= 10
    fire_part = {}
    for name in ("train", "validation", "test"):
        for j in getattr(s, name):
            fire_part.setdefault(labels[j].fire_id, set()).add(name)
    assert all(len(v) == 1 for v in fire_part.values())
    again = split_by_fire(labels, (0.45, 0.10, 0.45), seed=7)
    for name in ("train", "validation", "test"):
        np.testing.assert_array_equal(getattr(s, name), getattr(again, name))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=3, max_size=25), st.integers(0, 2**32 - 1))
def test_split_is_leak_free_partition(counts, seed):
    labels = _labels(counts)
    s = split_by_fire(labels, (0.45, 0.10, 0.45), seed=seed)
    parts = [set(s.train.tolist()), set(s.validation.tolist()), set(s.test.tolist())]
    assert all(parts)
    assert set().union(*parts) == set(range(len(labels)))
    assert sum(len(p) for p in parts) == len(labels)
    owners = {}
    for k, p in enumerate(parts):
        for j in p:
            owners.setdefault(labels[j].fire_id, set()).add(k)
    assert all(len(v) == 1 for v in owners.values())


def test_split_errors():
    with pytest.raises(SplitError):
        split_by_fire(_labels([3, 3]), seed=0)
    with pytest.raises(SplitError):
        split_by_fire(_labels([1, 1, 1]), (0.5, 0.5, 0.5))
    with pytest.raises(SplitError):
        split_by_fire(_labels([1, 1, 1]), (1.0, 0.0, 0.0))


def _matrix(labels):
    n = len(labels)
    return SnapshotMatrix(Grid2D(2, 2, 1.0, 1.0), np.arange(4.0 * n).reshape(4, n), tuple(labels))


def test_filter_examples():
    labels = _labels([2, 3, 1], ["low", "medium", "high"])
    m = _matrix(labels)
    same = filter_snapshots(m, lambda lab: True)
    np.testing.assert_array_equal(same.data, m.data)
    assert same.labels == m.labels
    med = filter_snapshots(m, lambda lab: lab.condition == "medium")
    assert [lab.condition for lab in med.labels] == ["medium"] * 3
    np.testing.assert_array_equal(med.data, m.data[:, 2:5])
    some = filter_snapshots(m, lambda lab: lab.fire_id in {1, 2})
    assert some.n_snapshots == 3 + 1
    assert filter_snapshots(m, lambda lab: False) is None


def test_filter_split_commute():
    labels = _labels([2, 3, 1, 4, 2, 2], ["a", "b", "a", "b", "a", "b"])
    keep = {0, 2, 3, 5}
    pred = lambda lab: lab.fire_id in keep  # noqa: E731
    m = _matrix(labels)
    s = split_by_fire(labels, seed=3)
    # split then filter
    after = [sorted(labels[j].fire_id for j in part if pred(labels[j])) for part in (s.train, s.validation, s.test)]
    # filter then look the columns up in the same fire assignment
    sub = filter_snapshots(m, pred)
    fire_to_part = {labels[j].fire_id: k for k, part in enumerate((s.train, s.validation, s.test)) for j in part}
    before = [[], [], []]
    for lab in sub.labels:
        before[fire_to_part[lab.fire_id]].append(lab.fire_id)
    assert after == [sorted(b) for b in before]


def test_dataset_roundtrip(tmp_path):
    labels = _labels([2, 1, 1], ["low", "high", "low"])
    m = _matrix(labels)
    path = save_dataset(tmp_path / "ds", m, m, {"seed": 4})
    manifest = json.loads(path.read_text())
    assert {"grid", "inputs", "outputs", "labels"} <= set(manifest)
    assert manifest["grid"] == {"nx": 2, "ny": 2, "dx": 1.0, "dy": 1.0}
    f, g = load_dataset(path)
    assert f.labels == m.labels and f.grid == m.grid
    np.testing.assert_array_equal(f.data, m.data)
    np.testing.assert_array_equal(g.data, m.data)


def test_snapshot_matrix_validation():
    grid = Grid2D(2, 2, 1.0, 1.0)
    with pytest.raises(ValueError):
        SnapshotMatrix(grid, np.ones((3, 1)), (SnapshotLabel(0, 0),))
    with pytest.raises(ValueError):
        SnapshotMatrix(grid, np.ones((4, 2)), (SnapshotLabel(0, 0),))
    sm = SnapshotMatrix(grid, np.ones((4, 1)), (SnapshotLabel(0, 0),))
    with pytest.raises(ValueError):
        sm.data[0, 0] = 5.0


def test_final_time_columns():
    labels = [SnapshotLabel(1, 0), SnapshotLabel(0, 3), SnapshotLabel(1, 2), SnapshotLabel(0, 1)]
    np.testing.assert_array_equal(final_time_columns(labels), [1, 2])


def test_split_dict_roundtrip():
    s = DatasetSplit(np.array([0, 1]), np.array([2]), np.array([3, 4]))
    back = DatasetSplit.from_dict(json.loads(json.dumps(s.to_dict())))
    np.testing.assert_array_equal(back.test, s.test)
    np.testing.assert_array_equal(back.part("val"), [2])
    with pytest.raises(KeyError):
        s.part("holdout")
