import numpy as np
import pytest
from scipy import stats

import oracles
from runkey import cipher, sources
from runkey.errors import UnsupportedCipherError


@pytest.mark.parametrize("n", [2, 3, 26, 256])
def test_round_trip_exhaustive(n):
    spec = cipher.additive_cipher(n)
    xs = np.arange(n)[:, None]
    ys = np.arange(n)[None, :]
    assert np.array_equal(spec.decoder[spec.coder[xs, ys], ys], np.broadcast_to(xs, (n, n)))


@pytest.mark.parametrize("n", [2, 3, 26, 256])
def test_per_key_bijectivity(n):
    spec = cipher.additive_cipher(n)
    for y in range(n):
        assert sorted(spec.coder[:, y].tolist()) == list(range(n))


def test_binary_case_is_xor():
    spec = cipher.additive_cipher(2)
    assert spec.coder.tolist() == [[0, 1], [1, 0]]
    assert spec.decoder.tolist() == [[0, 1], [1, 0]]
    assert spec.encrypt([1], [1]).tolist() == [0]


def test_mod26_example():
    assert cipher.additive_cipher(26).encrypt([3], [25]).tolist() == [2]


def test_encrypt_examples():
    spec = cipher.additive_cipher(2)
    assert spec.encrypt([0, 1, 1, 0], [0, 0, 0, 0]).tolist() == [0, 1, 1, 0]
    assert spec.encrypt([0, 1, 1, 0], [1, 1, 1, 1]).tolist() == [1, 0, 0, 1]


def test_round_trip_random_long_words():
    spec = cipher.additive_cipher(26)
    rng = np.random.default_rng(0)
    x = rng.integers(0, 26, 1000)
    y = rng.integers(0, 26, 1000)
    assert np.array_equal(spec.decrypt(spec.encrypt(x, y), y), x)


def test_length_mismatch_rejected():
    spec = cipher.additive_cipher(2)
    with pytest.raises(ValueError):
        spec.encrypt([0, 1], [0])
    with pytest.raises(ValueError):
        spec.decrypt([0], [0, 1])


def test_symbol_range_rejected():
    spec = cipher.additive_cipher(2)
    with pytest.raises(ValueError):
        spec.encrypt([0, 2], [0, 0])


def test_uniform_key_output_uniformity():
    # the mechanism behind perfect secrecy: uniform key, uniform ciphertext
    xm = sources.make_bernoulli([0.8, 0.15, 0.05])
    spec = cipher.additive_cipher(3)
    x = xm.sample(100000, 99)
    y = sources.make_uniform(3).sample(100000, 100)
    counts = np.bincount(spec.encrypt(x, y), minlength=3)
    expected = [len(x) / 3.0] * 3
    assert oracles.chi_square_stat(counts.tolist(), expected) < stats.chi2.ppf(
        1.0 - 1e-3, df=2
    )


def test_arbitrary_valid_table_accepted():
    # a substitution applied after XOR is still per-key bijective
    perm = np.array([1, 0])
    coder = perm[(np.arange(2)[:, None] + np.arange(2)[None, :]) % 2]
    decoder = np.empty((2, 2), dtype=int)
    for z in range(2):
        for y in range(2):
            decoder[z, y] = next(x for x in range(2) if coder[x, y] == z)
    spec = cipher.CipherSpec(2, coder, decoder)
    assert spec.key_table is not None
    x = np.array([0, 1, 1, 0])
    y = np.array([1, 1, 0, 0])
    assert np.array_equal(spec.decrypt(spec.encrypt(x, y), y), x)


def test_invalid_tables_rejected():
    with pytest.raises(ValueError):
        # coder ignores the plaintext: not per-key bijective
        cipher.CipherSpec(2, [[0, 0], [0, 0]], [[0, 0], [0, 0]])
    with pytest.raises(ValueError):
        # decoder does not invert coder
        cipher.CipherSpec(2, [[0, 1], [1, 0]], [[0, 0], [1, 1]])
    with pytest.raises(ValueError):
        cipher.CipherSpec(2, [[0, 2], [1, 0]], [[0, 1], [1, 0]])


def test_identity_cipher_has_no_key_table():
    # c(x, y) = x is valid but the key cannot be recovered from (x, z)
    ident = cipher.CipherSpec(2, [[0, 0], [1, 1]], [[0, 0], [1, 1]])
    assert ident.key_table is None
    with pytest.raises(UnsupportedCipherError):
        ident.key_for([0], [0])


def test_key_for_recovers_additive_key():
    spec = cipher.additive_cipher(26)
    rng = np.random.default_rng(5)
    x = rng.integers(0, 26, 64)
    y = rng.integers(0, 26, 64)
    assert np.array_equal(spec.key_for(x, spec.encrypt(x, y)), y)


def test_encrypt_stream_chunks():
    spec = cipher.additive_cipher(2)
    x_chunks = [np.array([0, 1]), np.array([1, 1, 0])]
    y_chunks = [np.array([1, 1]), np.array([0, 1, 1])]
    out = np.concatenate(list(cipher.encrypt_stream(spec, x_chunks, y_chunks)))
    assert out.tolist() == [1, 0, 1, 0, 1]
    with pytest.raises(ValueError):
        list(cipher.encrypt_stream(spec, [np.array([0])], []))
