import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dense_toeplitz_hash
from qudit_qkd.amplify import (
    array_to_bits,
    bits_to_array,
    privacy_amplify,
    toeplitz_hash,
    toeplitz_seed_bits,
)
from qudit_qkd.errors import EmptyKey

bitstrings = st.text(alphabet="01", min_size=1, max_size=400)


@given(bitstrings, st.floats(0.05, 1.0), st.integers(0, 2**32))
def test_fft_hash_matches_dense_matrix(bits, ratio, seed):
    x = bits_to_array(bits)
    n_out = int(np.floor(ratio * len(x) + 1e-9))
    diag = toeplitz_seed_bits(len(x), n_out, seed)
    assert np.array_equal(toeplitz_hash(x, diag, n_out), dense_toeplitz_hash(x, diag, n_out))


@given(bitstrings, st.floats(0.05, 1.0), st.integers(0, 2**32))
def test_output_length_and_determinism(bits, ratio, seed):
    out = privacy_amplify(bits, ratio, seed)
    assert len(out) == int(np.floor(ratio * len(bits) + 1e-9))
    assert set(out) <= {"0", "1"}
    assert out == privacy_amplify(bits, ratio, seed)


@given(bitstrings, bitstrings, st.integers(0, 2**32))
def test_hash_is_linear(a, b, seed):
    n = min(len(a), len(b))
    x, y = bits_to_array(a[:n]), bits_to_array(b[:n])
    diag = toeplitz_seed_bits(n, n // 2, seed)
    lhs = toeplitz_hash((x + y) % 2, diag, n // 2)
    rhs = (toeplitz_hash(x, diag, n // 2) + toeplitz_hash(y, diag, n // 2)) % 2
    assert np.array_equal(lhs, rhs)


def test_large_key_is_exact():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 2, 20000)
    diag = toeplitz_seed_bits(len(x), 10000, 7)
    fast = toeplitz_hash(x, diag, 10000)
    # spot-check rows against direct dot products
    for i in (0, 1, 4999, 9999):
        row = diag[i + len(x) - 1 - np.arange(len(x))]
        assert fast[i] == int(row @ x) % 2


def test_errors_and_roundtrip():
    with pytest.raises(EmptyKey):
        privacy_amplify("", 0.5, 1)
    with pytest.raises(ValueError):
        privacy_amplify("0101", 0.0, 1)
    with pytest.raises(ValueError):
        bits_to_array("012")
    assert array_to_bits(bits_to_array("10110")) == "10110"
