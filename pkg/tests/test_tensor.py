import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lftk import Entry, SparseTensor, build_tensor
from lftk.tensor import MODES, entry_arrays


def test_single_entry_build():
    t = build_tensor((2, 2, 2), [(0, 0, 0, 1.0)])
    assert t.n_entries == 1
    assert len(t.slice("user", 0)) == 1
    assert len(t.slice("user", 1)) == 0
    assert t.entry(0) == Entry(0, 0, 0, 1.0)


def test_duplicate_triple_rejected_naming_triple():
    with pytest.raises(ValueError, match=r"\(0, 0, 0\)"):
        build_tensor((2, 2, 2), [(0, 0, 0, 1.0), (0, 0, 0, 2.0)])


def test_out_of_range_index_rejected():
    with pytest.raises(ValueError, match="service"):
        build_tensor((2, 2, 2), [(0, 2, 0, 1.0)])
    with pytest.raises(ValueError, match="user"):
        build_tensor((2, 2, 2), [(-1, 0, 0, 1.0)])


def test_bad_values_rejected():
    with pytest.raises(ValueError, match="nonnegative"):
        build_tensor((2, 2, 2), [(0, 0, 0, -1.0)])
    with pytest.raises(ValueError, match="finite"):
        build_tensor((2, 2, 2), [(0, 0, 0, float("nan"))])
    with pytest.raises(ValueError, match="finite"):
        build_tensor((2, 2, 2), [(0, 0, 0, float("inf"))])


def test_slice_examples():
    t = build_tensor((2, 2, 8), [(0, 0, 0, 1.0), (0, 1, 1, 1.0), (1, 0, 0, 1.0)])
    assert len(t.slice("user", 0)) == 2
    assert len(t.slice("service", 1)) == 1
    assert len(t.slice("time", 5)) == 0
    with pytest.raises(IndexError):
        t.slice("time", 8)
    with pytest.raises(ValueError):
        t.slice("column", 0)


def test_dataset_scale_density_arithmetic():
    # density of 30,287,611 known records in a 142 x 4532 x 64 tensor
    density = 30_287_611 / (142 * 4532 * 64)
    assert density == pytest.approx(0.735, abs=0.001)


def test_tensor_is_immutable():
    t = build_tensor((2, 2, 2), [(0, 0, 0, 1.0)])
    with pytest.raises(ValueError):
        t.y[0] = 2.0
    with pytest.raises(ValueError):
        t.slice("user", 0)[0] = 5


@st.composite
def sparse_tensors(draw):
    dims = (
        draw(st.integers(1, 5)),
        draw(st.integers(1, 5)),
        draw(st.integers(1, 5)),
    )
    cells = [(i, j, k) for i in range(dims[0]) for j in range(dims[1]) for k in range(dims[2])]
    chosen = draw(st.lists(st.sampled_from(cells), unique=True, min_size=0, max_size=len(cells)))
    values = draw(
        st.lists(
            st.floats(0, 100, allow_nan=False),
            min_size=len(chosen),
            max_size=len(chosen),
        )
    )
    return dims, [(i, j, k, y) for (i, j, k), y in zip(chosen, values)]


@given(sparse_tensors())
@settings(max_examples=60, deadline=None)
def test_slices_partition_entries(case):
    dims, rows = case
    t = build_tensor(dims, rows)
    for mode in MODES:
        seen = np.concatenate(
            [t.slice(mode, x) for x in range(dims[MODES.index(mode)])]
            or [np.empty(0, dtype=np.int64)]
        )
        # every entry appears exactly once across the mode's slices
        assert sorted(seen.tolist()) == list(range(t.n_entries))
        assert int(t.slice_counts(mode).sum()) == t.n_entries
        for x in range(dims[MODES.index(mode)]):
            pos = t.slice(mode, x)
            assert (t.mode_indices(mode)[pos] == x).all()


@given(sparse_tensors())
@settings(max_examples=30, deadline=None)
def test_user_slices_flatten_to_permutation(case):
    dims, rows = case
    t = build_tensor(dims, rows)
    flat = [t.entry(int(p)) for x in range(dims[0]) for p in t.slice("user", x)]
    assert sorted(flat) == sorted(Entry(*r) for r in rows)


def test_take_preserves_dims_and_values():
    t = build_tensor((3, 3, 3), [(0, 0, 0, 1.0), (1, 1, 1, 2.0), (2, 2, 2, 3.0)])
    sub = t.take([2, 0])
    assert sub.dims == t.dims
    assert sub.entries() == [Entry(2, 2, 2, 3.0), Entry(0, 0, 0, 1.0)]


def test_entry_arrays_accepts_tensor_and_iterables():
    rows = [(0, 0, 0, 1.5), (1, 1, 1, 2.5)]
    t = build_tensor((2, 2, 2), rows)
    for src in (t, rows, [Entry(*r) for r in rows]):
        ii, jj, kk, yy = entry_arrays(src)
        assert yy.tolist() == [1.5, 2.5]
        assert ii.tolist() == [0, 1]


@pytest.mark.slow
def test_dataset_scale_build():
    # full-size construction: 30,287,611 entries in 142 x 4532 x 64
    dims = (142, 4532, 64)
    total = dims[0] * dims[1] * dims[2]
    n = 30_287_611
    rng = np.random.default_rng(0)
    flat = rng.permutation(total)[:n]
    i, rem = np.divmod(flat, dims[1] * dims[2])
    j, k = np.divmod(rem, dims[2])
    y = rng.random(n)
    t = SparseTensor.from_arrays(dims, i, j, k, y)
    assert t.n_entries == n
    assert t.density == pytest.approx(0.735, abs=0.001)
    assert int(t.slice_counts("service").sum()) == n
