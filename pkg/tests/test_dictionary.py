import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ddr import dictionary as dic
from ddr.dictionary import DictionarySpec
from ddr.exceptions import InvalidInputError


def test_cubic_layout_d3():
    spec = DictionarySpec(3)
    assert spec.d_n == 10
    xi = dic.eval(spec, [1.0, 2.0, -1.0])
    np.testing.assert_array_equal(xi, [1, 1, 2, -1, 1, 4, 1, 1, 8, -1])


def test_degree_sets_and_blocks():
    spec = DictionarySpec.from_string(2, "13")
    assert spec.degrees == (1, 3) and spec.d_n == 4 and not spec.has_constant
    assert spec.block(3) == slice(2, 4)
    with pytest.raises(InvalidInputError):
        spec.block(2)
    assert DictionarySpec(4, (3, 0, 1)).degrees == (0, 1, 3)
    assert DictionarySpec.from_string(2, "1,3") == spec


@pytest.mark.parametrize("bad", [(), (4,), (-1, 1)])
def test_rejects_bad_degrees(bad):
    with pytest.raises(InvalidInputError):
        DictionarySpec(3, bad)


def test_rejects_bad_strings_and_dims():
    with pytest.raises(InvalidInputError):
        DictionarySpec.from_string(3, "ab")
    with pytest.raises(InvalidInputError):
        DictionarySpec(0)


def test_wrong_state_length():
    with pytest.raises(InvalidInputError):
        dic.eval(DictionarySpec(3), [1.0, 2.0])


def test_dict_roundtrip():
    spec = DictionarySpec(5, (1, 2))
    assert DictionarySpec.from_dict(spec.to_dict()) == spec
    assert spec.degrees_string() == "12"


def test_jacobian_single_state():
    spec = DictionarySpec(2)
    J = dic.eval_jacobian(spec, [2.0, -1.0])
    expected = np.array([[0, 0], [1, 0], [0, 1], [4, 0], [0, -2], [12, 0], [0, 3]], dtype=float)
    np.testing.assert_array_equal(J, expected)


def test_batch_matches_single():
    spec = DictionarySpec(3)
    H = np.random.default_rng(0).normal(size=(6, 3))
    batch = dic.eval(spec, H)
    for i, h in enumerate(H):
        np.testing.assert_array_equal(batch[i], dic.eval(spec, h))
    jac = dic.eval_jacobian(spec, H)
    assert jac.shape == (6, 10, 3)
    np.testing.assert_array_equal(jac[2], dic.eval_jacobian(spec, H[2]))


degree_sets = st.sets(st.sampled_from([0, 1, 2, 3]), min_size=1).map(tuple)


@settings(max_examples=60, deadline=None)
@given(degrees=degree_sets, h=arrays(np.float64, 3, elements=st.floats(-3, 3)))
def test_jacobian_matches_central_differences(degrees, h):
    spec = DictionarySpec(3, degrees)
    J = dic.eval_jacobian(spec, h)
    step = 1e-6
    for j in range(3):
        e = np.zeros(3)
        e[j] = step
        fd = (dic.eval(spec, h + e) - dic.eval(spec, h - e)) / (2 * step)
        np.testing.assert_allclose(J[:, j], fd, atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(degrees=degree_sets, seed=st.integers(0, 2**16))
def test_vjp_matches_dense_jacobian(degrees, seed):
    rng = np.random.default_rng(seed)
    spec = DictionarySpec(4, degrees)
    H = rng.normal(size=(5, 4))
    V = rng.normal(size=(5, spec.d_n))
    dense = np.einsum("nld,nl->nd", dic.eval_jacobian(spec, H), V)
    np.testing.assert_allclose(dic.vjp_batch(spec, H, V), dense, rtol=1e-12, atol=1e-12)
