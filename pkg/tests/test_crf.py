"""CRF core: enumeration and finite-difference oracles, decoding, training,
serialization.

The enumeration oracle scores every one of the L^n label sequences with a
direct formula that shares no code with the forward-backward recursions,
then derives log Z, marginals, and the best path from that exhaustive
table. The gradient oracle is central finite differences through the
public log_likelihood.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_sequence, random_params
from lexattr.corpus import LabeledSequence
from lexattr.crf import (
    MODE_DENSE,
    MODE_SPARSE,
    CrfModel,
    CrfParams,
    TrainConfig,
    deserialize,
    extract_spans,
    forward_table,
    backward_table,
    gradient,
    log_likelihood,
    log_partition,
    logsumexp,
    marginals,
    score_sequence,
    serialize,
    train,
    viterbi,
)
from lexattr.emission import EmbeddingTable
from lexattr.errors import InputError, NumericalError
from lexattr.tags import DEFAULT_TAGS


def enumerate_all(emissions: np.ndarray, params: CrfParams):
    """Exhaustive oracle: (log Z, marginals, best path, best score).

    Scores are computed by direct vectorized lookup, independently of the
    dynamic programs under test.
    """
    n, n_tags = emissions.shape
    paths = np.array(list(itertools.product(range(n_tags), repeat=n)), dtype=np.int64)
    scores = (
        params.start[paths[:, 0]]
        + params.stop[paths[:, -1]]
        + emissions[np.arange(n)[None, :], paths].sum(axis=1)
        + (params.transitions[paths[:, :-1], paths[:, 1:]].sum(axis=1) if n > 1 else 0.0)
    )
    shift = scores.max()
    log_z = shift + np.log(np.exp(scores - shift).sum())
    probs = np.exp(scores - log_z)
    marg = np.zeros((n, n_tags))
    for position in range(n):
        for tag in range(n_tags):
            marg[position, tag] = probs[paths[:, position] == tag].sum()
    best = int(np.argmax(scores))
    return log_z, marg, tuple(paths[best]), float(scores[best])


class TestEnumerationOracle:
    def test_matches_enumeration_on_random_instances(self):
        rng = np.random.default_rng(20240917)
        for _ in range(300):
            n = int(rng.integers(1, 6))
            n_tags = int(rng.integers(2, 5))
            emissions = rng.uniform(-2, 2, (n, n_tags))
            params = random_params(rng, n_tags)
            want_z, want_marg, want_path, want_score = enumerate_all(emissions, params)
            assert log_partition(emissions, params) == pytest.approx(want_z, abs=1e-8)
            np.testing.assert_allclose(marginals(emissions, params), want_marg, atol=1e-8)
            got = viterbi(emissions, params)
            assert got.labels == want_path
            assert got.score == pytest.approx(want_score, abs=1e-8)

    def test_single_token_sequence(self):
        params = CrfParams(np.zeros((3, 3)), np.array([1.0, 0.0, -1.0]), np.array([0.5, 0.0, 0.0]))
        emissions = np.array([[0.0, 2.0, 0.0]])
        want_z, want_marg, want_path, _ = enumerate_all(emissions, params)
        assert log_partition(emissions, params) == pytest.approx(want_z, abs=1e-12)
        np.testing.assert_allclose(marginals(emissions, params), want_marg, atol=1e-12)
        assert viterbi(emissions, params).labels == want_path

    def test_all_zero_parameters_give_uniform_marginals(self):
        n, n_tags = 4, 3
        params = CrfParams.zeros(n_tags)
        emissions = np.zeros((n, n_tags))
        assert log_partition(emissions, params) == pytest.approx(n * np.log(n_tags))
        np.testing.assert_allclose(marginals(emissions, params), np.full((n, n_tags), 1 / 3))

    def test_viterbi_ties_break_toward_lowest_label(self):
        # Every path scores 0, so the decoder's choice is pure tie policy.
        params = CrfParams.zeros(4)
        emissions = np.zeros((5, 4))
        assert viterbi(emissions, params).labels == (0, 0, 0, 0, 0)

    def test_viterbi_two_way_tie(self):
        params = CrfParams.zeros(3)
        emissions = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
        # Labels 0 and 1 tie at the first position; 0 must win.
        assert viterbi(emissions, params).labels[0] == 0


class TestScoreSequence:
    def test_hand_computed_score(self):
        params = CrfParams(
            np.array([[0.1, 0.2], [0.3, 0.4]]),
            np.array([1.0, 2.0]),
            np.array([0.5, 0.25]),
        )
        emissions = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        # start[1] + em[0,1] + trans[1,0] + em[1,0] + trans[0,0] + em[2,0] + stop[0]
        want = 2.0 + 2.0 + 0.3 + 3.0 + 0.1 + 5.0 + 0.5
        assert score_sequence(emissions, params, [1, 0, 0]) == pytest.approx(want)

    def test_label_out_of_range(self):
        params = CrfParams.zeros(2)
        with pytest.raises(InputError, match="out of range"):
            score_sequence(np.zeros((2, 2)), params, [0, 5])

    def test_length_mismatch(self):
        params = CrfParams.zeros(2)
        with pytest.raises(InputError):
            score_sequence(np.zeros((2, 2)), params, [0])

    def test_non_finite_emissions_rejected(self):
        params = CrfParams.zeros(2)
        emissions = np.array([[0.0, np.nan]])
        with pytest.raises(InputError, match="non-finite"):
            score_sequence(emissions, params, [0])


@settings(deadline=None, max_examples=60)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 7), n_tags=st.integers(2, 6))
def test_marginal_rows_sum_to_one(seed, n, n_tags):
    rng = np.random.default_rng(seed)
    emissions = rng.uniform(-3, 3, (n, n_tags))
    params = random_params(rng, n_tags)
    marg = marginals(emissions, params)
    np.testing.assert_allclose(marg.sum(axis=1), np.ones(n), atol=1e-10)
    assert (marg >= 0).all()


@settings(deadline=None, max_examples=60)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 7), n_tags=st.integers(2, 6))
def test_log_partition_bounds_any_path(seed, n, n_tags):
    rng = np.random.default_rng(seed)
    emissions = rng.uniform(-3, 3, (n, n_tags))
    params = random_params(rng, n_tags)
    log_z = log_partition(emissions, params)
    labels = rng.integers(0, n_tags, n)
    assert score_sequence(emissions, params, labels) <= log_z + 1e-9
    assert viterbi(emissions, params).score <= log_z + 1e-9


@settings(deadline=None, max_examples=40)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 6), n_tags=st.integers(2, 5))
def test_forward_backward_agree_on_log_partition(seed, n, n_tags):
    rng = np.random.default_rng(seed)
    emissions = rng.uniform(-3, 3, (n, n_tags))
    params = random_params(rng, n_tags)
    alpha = forward_table(emissions, params)
    beta = backward_table(emissions, params)
    from_alpha = logsumexp(alpha[-1] + params.stop)
    from_beta = logsumexp(params.start + emissions[0] + beta[0])
    assert from_alpha == pytest.approx(from_beta, abs=1e-9)


def test_logsumexp_handles_extreme_values():
    assert logsumexp(np.array([-1e9, -1e9 + np.log(2.0)])) == pytest.approx(-1e9 + np.log(3.0))
    assert logsumexp(np.array([1e4, 1e4])) == pytest.approx(1e4 + np.log(2.0))
    assert logsumexp(np.array([-np.inf, -np.inf])) == -np.inf


# ---------------------------------------------------------------------------
# Gradient oracle


WORDS = ["the", "witness", "saw", "murder", "court", "exhibit", "a", "trial", "riot", "judge"]


def random_instance(rng: np.random.Generator, mode: str):
    """A couple of short sequences plus a matching randomly initialized model."""
    n_tags = len(DEFAULT_TAGS)
    seqs = []
    for index in range(int(rng.integers(1, 3))):
        length = int(rng.integers(1, 5))
        words = [WORDS[int(rng.integers(0, len(WORDS)))] for _ in range(length)]
        labels = [int(rng.integers(0, n_tags)) for _ in range(length)]
        seqs.append(make_sequence("doc", index, words, labels))
    params = CrfParams(
        rng.normal(0, 0.7, (n_tags, n_tags)), rng.normal(0, 0.7, n_tags), rng.normal(0, 0.7, n_tags)
    )
    if mode == MODE_SPARSE:
        dim = 128
        model = CrfModel(DEFAULT_TAGS, params, mode, feature_dim=dim,
                         weights=rng.normal(0, 0.5, (dim, n_tags)))
        return seqs, model, None
    embed_dim = 4
    table = EmbeddingTable(embed_dim, "test")
    for seq in seqs:
        for position in range(len(seq.tokens)):
            table.add(seq.doc_id, seq.sentence_index, position,
                      rng.normal(0, 1, embed_dim).astype(np.float32))
    model = CrfModel(DEFAULT_TAGS, params, mode,
                     projection=rng.normal(0, 0.5, (embed_dim, n_tags)),
                     bias=rng.normal(0, 0.5, n_tags))
    return seqs, model, table


def finite_difference_check(seqs, model, table, rng, l2, h=1e-5, rel_tol=1e-4,
                            samples_per_block=12):
    analytic_ll, grads = gradient(seqs, model, l2, table)
    assert analytic_ll == pytest.approx(log_likelihood(seqs, model, l2, table))
    for array, grad_array in zip(model.parameter_arrays(), grads.arrays()):
        flat = array.ravel()
        grad_flat = grad_array.ravel()
        count = min(samples_per_block, flat.size)
        picks = rng.choice(flat.size, size=count, replace=False)
        for index in picks:
            original = flat[index]
            flat[index] = original + h
            up = log_likelihood(seqs, model, l2, table)
            flat[index] = original - h
            down = log_likelihood(seqs, model, l2, table)
            flat[index] = original
            numeric = (up - down) / (2 * h)
            scale = max(1.0, abs(numeric), abs(grad_flat[index]))
            assert abs(numeric - grad_flat[index]) / scale < rel_tol, (
                f"block shape {array.shape}, coordinate {index}: "
                f"analytic {grad_flat[index]}, numeric {numeric}"
            )


class TestGradientOracle:
    def test_sparse_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        for _ in range(8):
            seqs, model, table = random_instance(rng, MODE_SPARSE)
            finite_difference_check(seqs, model, table, rng, l2=0.01)

    def test_dense_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        for _ in range(8):
            seqs, model, table = random_instance(rng, MODE_DENSE)
            finite_difference_check(seqs, model, table, rng, l2=0.01)

    def test_unregularized_gradient_too(self):
        rng = np.random.default_rng(13)
        seqs, model, table = random_instance(rng, MODE_SPARSE)
        finite_difference_check(seqs, model, table, rng, l2=0.0)

    def test_gradient_zero_at_perfect_fit_limit(self):
        # With emissions strongly favoring the gold labels the residuals,
        # and hence the start/stop/transition gradients, shrink to ~0.
        rng = np.random.default_rng(14)
        seqs, model, _ = random_instance(rng, MODE_SPARSE)
        seq = seqs[0]
        model.params = CrfParams.zeros(len(DEFAULT_TAGS))
        model.weights[:] = 0.0
        emissions = np.full((len(seq.tokens), len(DEFAULT_TAGS)), -50.0)
        for position, label in enumerate(seq.labels):
            emissions[position, label] = 50.0
        marg = marginals(emissions, model.params)
        want = np.zeros_like(marg)
        want[np.arange(len(seq.labels)), list(seq.labels)] = 1.0
        np.testing.assert_allclose(marg, want, atol=1e-12)

    def test_empty_batch_rejected(self):
        rng = np.random.default_rng(15)
        _, model, _ = random_instance(rng, MODE_SPARSE)
        with pytest.raises(InputError):
            gradient([], model)
        with pytest.raises(InputError):
            log_likelihood([], model)


# ---------------------------------------------------------------------------
# Training


def toy_corpus(n_sentences: int, seed: int) -> list[LabeledSequence]:
    """Tiny learnable task: a few words with fixed tags."""
    rng = np.random.default_rng(seed)
    vocab = {
        "witness": 1, "murder": 4, "exhibit": 6,
        "the": 7, "court": 7, "ruled": 7,
    }
    words = list(vocab)
    seqs = []
    for index in range(n_sentences):
        length = int(rng.integers(2, 6))
        chosen = [words[int(rng.integers(0, len(words)))] for _ in range(length)]
        seqs.append(make_sequence(f"d{index // 4}", index % 4, chosen, [vocab[w] for w in chosen]))
    return seqs


class TestTraining:
    def test_learns_toy_task(self):
        seqs = toy_corpus(40, seed=5)
        config = TrainConfig(seed=1, epochs=6, batch_size=4, lr=0.5, l2=1e-4)
        model = train(seqs, None, MODE_SPARSE, config, feature_dim=4096)
        for seq in toy_corpus(10, seed=99):
            assert model.predict(seq).labels == seq.labels

    def test_same_seed_same_model_bytes(self):
        seqs = toy_corpus(20, seed=5)
        config = TrainConfig(seed=7, epochs=3, batch_size=4, lr=0.3)
        a = serialize(train(seqs, None, MODE_SPARSE, config, feature_dim=512))
        b = serialize(train(seqs, None, MODE_SPARSE, config, feature_dim=512))
        assert a == b

    def test_different_seed_differs(self):
        seqs = toy_corpus(20, seed=5)
        a = serialize(train(seqs, None, MODE_SPARSE,
                            TrainConfig(seed=1, epochs=3, batch_size=4, lr=0.3), feature_dim=512))
        b = serialize(train(seqs, None, MODE_SPARSE,
                            TrainConfig(seed=2, epochs=3, batch_size=4, lr=0.3), feature_dim=512))
        assert a != b

    def test_dev_selection_never_worse_than_init(self):
        # Returned parameters must score the dev set at least as well as the
        # zero initialization, because the initial parameters are a candidate.
        seqs = toy_corpus(30, seed=6)
        dev = toy_corpus(10, seed=60)
        config = TrainConfig(seed=3, epochs=4, batch_size=4, lr=1.0)
        model = train(seqs, dev, MODE_SPARSE, config, feature_dim=512)
        zero_model = CrfModel(DEFAULT_TAGS, CrfParams.zeros(8), MODE_SPARSE,
                              feature_dim=512, weights=np.zeros((512, 8)))
        trained_dev = log_likelihood(dev, model) / len(dev)
        zero_dev = log_likelihood(dev, zero_model) / len(dev)
        assert trained_dev >= zero_dev - 1e-9

    def test_unhighlighted_sentences_excluded_by_default(self):
        no_tag = DEFAULT_TAGS.no_tag_index
        blank = [make_sequence("b", i, ["the", "court"], [no_tag, no_tag]) for i in range(5)]
        with pytest.raises(InputError, match="highlighted"):
            train(blank, None, MODE_SPARSE, TrainConfig(seed=1, epochs=1), feature_dim=64)
        model = train(blank, None, MODE_SPARSE,
                      TrainConfig(seed=1, epochs=1, include_unhighlighted=True), feature_dim=64)
        assert model.meta.epochs_run == 1

    def test_patience_requires_dev(self):
        seqs = toy_corpus(10, seed=5)
        with pytest.raises(InputError, match="dev"):
            train(seqs, None, MODE_SPARSE, TrainConfig(seed=1, patience=2), feature_dim=64)

    def test_patience_stops_early(self):
        seqs = toy_corpus(30, seed=6)
        # Dev labels contradict the training data, so every epoch of fitting
        # makes dev worse and the stale counter runs out immediately.
        dev = [s.with_labels(tuple((l + 1) % 7 for l in s.labels)) for s in toy_corpus(8, seed=61)]
        config = TrainConfig(seed=3, epochs=50, batch_size=4, lr=0.5, patience=2)
        model = train(seqs, dev, MODE_SPARSE, config, feature_dim=512)
        assert model.meta.epochs_run == 2

    def test_non_finite_objective_names_epoch_and_batch(self):
        seqs = toy_corpus(8, seed=5)
        # An absurd learning rate with huge l2 drives the parameters to
        # overflow within a couple of updates.
        config = TrainConfig(seed=1, epochs=5, batch_size=2, lr=1e30, l2=1e30, clip=1e30)
        with pytest.raises(NumericalError, match=r"epoch \d+, batch \d+"):
            train(seqs, None, MODE_SPARSE, config, feature_dim=64)

    def test_dense_mode_needs_embeddings(self):
        seqs = toy_corpus(5, seed=5)
        with pytest.raises(InputError, match="embedding"):
            train(seqs, None, MODE_DENSE, TrainConfig(seed=1, epochs=1))

    def test_dense_training_runs(self):
        seqs = toy_corpus(12, seed=8)
        table = EmbeddingTable(6, "test")
        rng = np.random.default_rng(0)
        for seq in seqs:
            for position in range(len(seq.tokens)):
                table.add(seq.doc_id, seq.sentence_index, position,
                          rng.normal(0, 1, 6).astype(np.float32))
        config = TrainConfig(seed=2, epochs=2, batch_size=4, lr=0.2)
        model = train(seqs, None, MODE_DENSE, config, embeddings=table)
        assert model.mode == MODE_DENSE
        assert model.projection.shape == (6, 8)

    def test_config_validation(self):
        with pytest.raises(InputError):
            TrainConfig(seed=1, epochs=0)
        with pytest.raises(InputError):
            TrainConfig(seed=1, lr=-1.0)
        with pytest.raises(InputError):
            TrainConfig(seed=1, patience=0)


# ---------------------------------------------------------------------------
# Serialization


def small_model(seed: int = 0, mode: str = MODE_SPARSE) -> CrfModel:
    rng = np.random.default_rng(seed)
    n_tags = 8
    params = CrfParams(rng.normal(size=(n_tags, n_tags)), rng.normal(size=n_tags), rng.normal(size=n_tags))
    if mode == MODE_SPARSE:
        return CrfModel(DEFAULT_TAGS, params, mode, feature_dim=32,
                        weights=rng.normal(size=(32, n_tags)))
    return CrfModel(DEFAULT_TAGS, params, mode,
                    projection=rng.normal(size=(5, n_tags)), bias=rng.normal(size=n_tags))


class TestSerialization:
    @pytest.mark.parametrize("mode", [MODE_SPARSE, MODE_DENSE])
    def test_round_trip_bit_exact(self, mode):
        model = small_model(3, mode)
        model.meta.seed = 42
        model.meta.epochs_run = 7
        model.meta.final_objective = -1.25
        data = serialize(model)
        back = deserialize(data)
        assert back.mode == model.mode
        assert back.tagset.names == model.tagset.names
        assert (back.meta.seed, back.meta.epochs_run, back.meta.final_objective) == (42, 7, -1.25)
        for a, b in zip(model.parameter_arrays(), back.parameter_arrays()):
            assert a.tobytes() == b.tobytes()
        assert serialize(back) == data

    def test_bad_magic(self):
        data = serialize(small_model())
        with pytest.raises(InputError, match="magic"):
            deserialize(b"XXXXX" + data[5:])

    def test_bad_version(self):
        data = bytearray(serialize(small_model()))
        data[5:7] = (99).to_bytes(2, "little")
        with pytest.raises(InputError, match="version"):
            deserialize(bytes(data))

    def test_truncation(self):
        data = serialize(small_model())
        with pytest.raises(InputError, match="truncated"):
            deserialize(data[: len(data) // 2])

    def test_checksum_detects_corruption(self):
        data = bytearray(serialize(small_model()))
        data[-20] ^= 0xFF  # flip a parameter byte, leave the stored CRC alone
        with pytest.raises(InputError, match="checksum"):
            deserialize(bytes(data))

    def test_trailing_bytes_rejected(self):
        data = serialize(small_model())
        with pytest.raises(InputError, match="trailing"):
            deserialize(data + b"\x00")

    def test_magic_precedes_version_precedes_truncation(self):
        # A file that is wrong in several ways reports the earliest problem.
        with pytest.raises(InputError, match="magic"):
            deserialize(b"XXXXX")
        good = serialize(small_model())
        bad_version = bytearray(good[:7])
        bad_version[5:7] = (99).to_bytes(2, "little")
        with pytest.raises(InputError, match="version"):
            deserialize(bytes(bad_version))
        with pytest.raises(InputError, match="truncated"):
            deserialize(good[:10])


# ---------------------------------------------------------------------------
# Span extraction


class TestExtractSpans:
    def test_runs_become_spans(self):
        labels = (7, 1, 1, 7, 4, 7)
        spans = extract_spans(["The", "star", "witness", "saw", "murder", "happen"], labels)
        assert [(s.tag, s.start, s.end, s.text) for s in spans] == [
            ("Wittest", 1, 3, "star witness"),
            ("Homicide", 4, 5, "murder"),
        ]

    def test_adjacent_different_tags_split(self):
        spans = extract_spans(["a", "b"], (1, 4))
        assert [(s.tag, s.start, s.end) for s in spans] == [("Wittest", 0, 1), ("Homicide", 1, 2)]

    def test_all_no_tag_yields_nothing(self):
        assert extract_spans(["a", "b"], (7, 7)) == []

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            extract_spans(["a"], (7, 7))
