import io
import itertools
import math

import numpy as np
import pytest
from scipy import stats

import oracles
from runkey import sources
from runkey.errors import (
    ConvergenceError,
    EnumerationCapError,
    InvalidDistributionError,
    ModelFormatError,
    NotErgodicError,
)

UNIFORM2 = sources.make_uniform(2)
BIASED = sources.make_bernoulli([0.49, 0.51])
MARKOV = sources.make_markov(2, 1, [[0.9, 0.1], [0.2, 0.8]])


def random_model(rng, n, k, concentration=1.0):
    rows = rng.dirichlet(np.full(n, concentration), size=n**k)
    if k == 0:
        return sources.make_bernoulli(rows[0])
    return sources.make_markov(n, k, rows)


# -- constructors ---------------------------------------------------------------


def test_bernoulli_uniform_rate_is_one():
    assert UNIFORM2.entropy_rate() == 1.0


def test_bernoulli_biased_rate_matches_closed_form():
    expected = oracles.binary_entropy(0.49)
    assert abs(BIASED.entropy_rate() - expected) <= 1e-12
    assert abs(BIASED.entropy_rate() - 0.999711) <= 1e-6


def test_bernoulli_deterministic_flagged():
    model = sources.make_bernoulli([1.0, 0.0])
    assert model.entropy_rate() == 0.0
    assert model.deterministic
    assert not BIASED.deterministic


def test_bernoulli_letter_distribution_equals_probs():
    assert np.allclose(BIASED.letter_distribution(), [0.49, 0.51], atol=1e-15)


def test_bernoulli_rejects_bad_distributions():
    with pytest.raises(InvalidDistributionError):
        sources.make_bernoulli([0.5, -0.5, 1.0])
    with pytest.raises(InvalidDistributionError):
        sources.make_bernoulli([0.6, 0.6])


def test_markov_symmetric_stationary():
    model = sources.make_markov(2, 1, [[0.9, 0.1], [0.1, 0.9]])
    assert np.allclose(model.stationary, [0.5, 0.5], atol=1e-10)


def test_markov_memoryless_rows_equal_bernoulli_block_law():
    model = sources.make_markov(2, 1, [[0.5, 0.5], [0.5, 0.5]])
    for t in range(1, 7):
        for word in itertools.product(range(2), repeat=t):
            assert abs(
                model.block_prob(list(word)) - UNIFORM2.block_prob(list(word))
            ) <= 1e-12


def test_markov_asymmetric_stationary_analytic():
    # pi = pi P solved by hand: pi0 * 0.1 = pi1 * 0.2
    assert np.allclose(MARKOV.stationary, [2.0 / 3.0, 1.0 / 3.0], atol=1e-10)


def test_markov_rejects_reducible_chain():
    with pytest.raises(NotErgodicError):
        sources.make_markov(2, 1, [[1.0, 0.0], [0.0, 1.0]])


def test_markov_validates_supplied_initial():
    model = sources.make_markov(2, 1, [[0.9, 0.1], [0.2, 0.8]], initial=[2 / 3, 1 / 3])
    assert np.allclose(model.stationary, [2 / 3, 1 / 3], atol=1e-12)
    with pytest.raises(InvalidDistributionError):
        sources.make_markov(2, 1, [[0.9, 0.1], [0.2, 0.8]], initial=[0.5, 0.5])


# -- stationary_distribution (square chains) --------------------------------------


def test_stationary_distribution_examples():
    assert np.allclose(
        sources.stationary_distribution([[0.9, 0.1], [0.1, 0.9]]), [0.5, 0.5],
        atol=1e-10,
    )
    assert np.allclose(
        sources.stationary_distribution([[0.9, 0.1], [0.2, 0.8]]),
        [2 / 3, 1 / 3],
        atol=1e-10,
    )


def test_stationary_distribution_periodic_chain():
    # the flip chain is periodic; the damped iteration must still settle
    assert np.allclose(
        sources.stationary_distribution([[0.0, 1.0], [1.0, 0.0]]), [0.5, 0.5],
        atol=1e-12,
    )


def test_stationary_distribution_identity_not_ergodic():
    with pytest.raises(NotErgodicError):
        sources.stationary_distribution(np.eye(2))


def test_stationary_distribution_rejects_bad_rows():
    with pytest.raises(InvalidDistributionError):
        sources.stationary_distribution([[0.9, 0.2], [0.1, 0.9]])


# -- block probabilities -----------------------------------------------------------


def test_block_prob_uniform_exact():
    assert UNIFORM2.block_prob([0, 1, 0, 1]) == 1.0 / 16.0


def test_block_prob_single_letter_biased():
    assert abs(BIASED.block_prob([1]) - 0.51) <= 1e-15


def test_block_prob_markov_analytic():
    assert abs(MARKOV.block_prob([0, 1]) - 1.0 / 15.0) <= 1e-10


def test_block_prob_matches_raw_table_oracle():
    rng = np.random.default_rng(11)
    for n, k in ((2, 0), (2, 1), (2, 2), (3, 1)):
        model = random_model(rng, n, k)
        for t in range(1, 5):
            for word in itertools.product(range(n), repeat=t):
                expected = oracles.markov_word_prob(
                    model.stationary.tolist(),
                    model.transition.tolist(),
                    n,
                    k,
                    word,
                )
                assert abs(model.block_prob(list(word)) - expected) <= 1e-13


def test_block_prob_rejects_out_of_range_symbols():
    with pytest.raises(ValueError):
        UNIFORM2.block_prob([0, 2])


def test_block_law_normalisation_and_consistency():
    rng = np.random.default_rng(5)
    for n, k in ((2, 0), (2, 2), (3, 1)):
        model = random_model(rng, n, k)
        for m in range(1, 5):
            law = np.exp2(model.log2_block_prob_array(m))
            assert abs(law.sum() - 1.0) <= 1e-9
            if m >= 2:
                shorter = np.exp2(model.log2_block_prob_array(m - 1))
                right = law.reshape(-1, n).sum(axis=1)
                left = law.reshape(n, -1).sum(axis=0)
                assert np.abs(right - shorter).max() <= 1e-10
                assert np.abs(left - shorter).max() <= 1e-10


# -- entropies ---------------------------------------------------------------------


def test_entropy_rate_markov_closed_form():
    expected = (2 / 3) * oracles.binary_entropy(0.9) + (1 / 3) * oracles.binary_entropy(0.2)
    assert abs(MARKOV.entropy_rate() - expected) <= 1e-10


def test_entropy_rate_equals_block_entropy_difference():
    # for an order-k chain the conditional block entropy is exact at m >= k
    for model in (MARKOV, sources.make_markov(3, 1, np.random.default_rng(3).dirichlet(np.ones(3), size=3))):
        h3 = model.block_entropy(3)
        h2 = model.block_entropy(2)
        conditional = 4 * h3 - 3 * h2
        assert abs(conditional - model.entropy_rate()) <= 1e-10


def test_block_entropy_uniform_is_log_n():
    for m in range(6):
        assert abs(UNIFORM2.block_entropy(m) - 1.0) <= 1e-12


def test_block_entropy_iid_equals_rate():
    for m in range(6):
        assert abs(BIASED.block_entropy(m) - BIASED.entropy_rate()) <= 1e-12


def test_block_entropy_monotone_and_above_rate():
    rng = np.random.default_rng(17)
    for n, k in ((2, 1), (2, 2), (3, 1)):
        model = random_model(rng, n, k)
        values = [model.block_entropy(m) for m in range(6)]
        for a, b in zip(values, values[1:]):
            assert b <= a + 1e-10
        assert all(v >= model.entropy_rate() - 1e-10 for v in values)


def test_block_entropy_cap():
    with pytest.raises(EnumerationCapError):
        UNIFORM2.block_entropy(40)
    # the cap is overridable
    assert abs(UNIFORM2.block_entropy(16, cap=1 << 18) - 1.0) <= 1e-12


def test_entropy_bounds():
    rng = np.random.default_rng(23)
    for n, k in ((2, 0), (3, 1), (4, 1)):
        model = random_model(rng, n, k, concentration=0.4)
        assert 0.0 <= model.entropy_rate() <= math.log2(n)
        assert 0.0 <= model.redundancy() <= math.log2(n)


def test_redundancy_examples():
    assert UNIFORM2.redundancy() == 0.0
    assert abs(BIASED.redundancy() - (1.0 - oracles.binary_entropy(0.49))) <= 1e-12
    assert abs(BIASED.redundancy() - 2.89e-4) <= 1e-6
    assert sources.make_bernoulli([1.0, 0.0]).redundancy() == 1.0


# -- sampling ----------------------------------------------------------------------


def test_sample_deterministic_in_seed():
    for model in (UNIFORM2, MARKOV):
        a = model.sample(200, 42)
        b = model.sample(200, 42)
        c = model.sample(200, 43)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


def test_sample_degenerate_source():
    model = sources.make_bernoulli([1.0, 0.0])
    assert model.sample(5, 0).tolist() == [0, 0, 0, 0, 0]


def test_sample_uniform_frequency_band():
    word = UNIFORM2.sample(100000, 7)
    # binomial 6 sigma band around 0.5 is ~0.0095
    assert abs(word.mean() - 0.5) <= 0.01


def test_sample_markov_transition_frequencies():
    word = MARKOV.sample(100000, 13)
    pairs = np.stack([word[:-1], word[1:]])
    for state in (0, 1):
        mask = pairs[0] == state
        freq = pairs[1][mask].mean()
        assert abs(freq - MARKOV.transition[state, 1]) <= 0.02


def test_sample_block_frequencies_chi_square():
    # goodness of fit of non-overlapping length-3 block counts at 1e-3
    for model in (UNIFORM2, sources.make_bernoulli([0.3, 0.7]), MARKOV):
        word = model.sample(100002, 20240810)
        blocks = word[: word.size - word.size % 3].reshape(-1, 3)
        index = blocks[:, 0] * 4 + blocks[:, 1] * 2 + blocks[:, 2]
        counts = np.bincount(index, minlength=8)
        expected = np.exp2(model.log2_block_prob_array(3)) * counts.sum()
        stat = oracles.chi_square_stat(counts.tolist(), expected.tolist())
        assert stat < stats.chi2.ppf(1.0 - 1e-3, df=7)


# -- training ----------------------------------------------------------------------


def test_train_alternating_stream_is_deterministic_flip():
    model = sources.train_markov(np.tile([0, 1], 500), 2, 1, alpha=0.0)
    assert np.array_equal(model.transition, [[0.0, 1.0], [1.0, 0.0]])
    assert model.deterministic


def test_train_fair_bits_rows_near_half():
    stream = np.random.default_rng(1).integers(0, 2, 10**6)
    model = sources.train_markov(stream, 2, 1, alpha=1.0)
    assert np.abs(model.transition - 0.5).max() <= 0.01


def test_train_smoothing_guarantees_positive_rows():
    stream = np.zeros(50, dtype=int)
    stream[-1] = 1
    model = sources.train_markov(stream, 2, 2, alpha=0.5)
    assert model.transition.min() > 0.0


def test_train_rejects_short_stream():
    with pytest.raises(InvalidDistributionError):
        sources.train_markov([0, 1], 2, 2)
    with pytest.raises(InvalidDistributionError):
        sources.train_markov([], 2, 0)


def test_train_counts_match_manual_count():
    stream = [0, 0, 1, 0, 1, 1, 0, 0]
    model = sources.train_markov(stream, 2, 1, alpha=0.0)
    # transitions from 0: 0->0 twice, 0->1 twice; from 1: 1->0 twice, 1->1 once
    assert np.allclose(model.transition[0], [0.5, 0.5])
    assert np.allclose(model.transition[1], [2 / 3, 1 / 3])


# -- model files -------------------------------------------------------------------


def test_model_file_round_trip_exact():
    for model in (BIASED, MARKOV, sources.make_markov(2, 2, np.array(
            [[0.7, 0.3], [0.4, 0.6], [0.2, 0.8], [0.5, 0.5]]))):
        buf = io.StringIO()
        sources.save_model(model, buf, header_lines=["written by tests"])
        buf.seek(0)
        again = sources.load_model(buf)
        assert again.alphabet_size == model.alphabet_size
        assert again.order == model.order
        assert np.array_equal(again.transition, model.transition)


def test_model_file_rejects_malformed_input():
    cases = [
        "order 1\nrow 0 0.5 0.5\nrow 1 0.5 0.5\n",          # missing n
        "n 2\norder 1\nrow 0 0.5 0.5\n",                     # missing a row
        "n 2\norder 1\nrow 0 0.5 0.5\nrow 0 0.5 0.5\n",      # duplicate row
        "n 2\norder 1\nrow 0 0.5\nrow 1 0.5 0.5\n",          # short row
        "n 2\norder 0\nrow 0 0.5 0.5\n",                     # order-0 label must be '-'
        "n 2\nwat 1\n",                                      # unknown key
    ]
    for text in cases:
        with pytest.raises(ModelFormatError):
            sources.load_model(io.StringIO(text))


def test_power_iteration_convergence_error():
    # an asymmetric nearly-reducible chain mixes far too slowly for 50 steps
    eps = 1e-4
    table = np.array([[1 - eps, eps], [2 * eps, 1 - 2 * eps]])
    with pytest.raises(ConvergenceError):
        sources._power_iteration(lambda pi: pi @ table, 2, 1e-12, 50)
