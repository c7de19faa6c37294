import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dialogue
from gradcheck import directional_check
from threadloom.autograd import Tensor
from threadloom.corpus import Utterance
from threadloom.encoder import (BUCKETS, MAX_TOKENS, EncoderParams, PreparedDialogue, distance_bucket,
                                encode_all_pairs, encode_pair, feature_dim, featurize_pair, token_hash)
from threadloom.synth import SynthConfig, generate


def params(buckets, d, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return EncoderParams(Tensor(rng.normal(scale=scale, size=(feature_dim(buckets), d)), requires_grad=True),
                         Tensor(rng.normal(scale=scale, size=d), requires_grad=True))


def test_self_pair():
    u = Utterance(3, "ann", "same words here")
    f = featurize_pair(u, u, buckets=16)
    assert f.same_speaker == 1
    assert BUCKETS[f.bucket] == "self"
    assert f.dense_tail()[4:4 + len(BUCKETS)].sum() == 1


def test_disjoint_vocabulary():
    f = featurize_pair(Utterance(0, "a", "alpha beta"), Utterance(1, "b", "gamma delta"), buckets=16)
    assert f.shared == 0 and f.same_speaker == 0


def test_current_mentions_candidate():
    d = make_dialogue(["sgarrity", "bob"], ["what is firefox", "sgarrity, never heard of"])
    f = featurize_pair(d[0], d[1], d)
    assert f.cur_mentions_cand == 1
    assert f.cand_mentions_cur == 0


def test_shared_ignores_punctuation_tokens():
    f = featurize_pair(Utterance(0, "a", "ok , fine!"), Utterance(1, "b", "fine , sure!"), buckets=32)
    assert f.shared == 1


def test_candidate_after_current_rejected():
    with pytest.raises(ValueError):
        featurize_pair(Utterance(2, "a", "x"), Utterance(1, "b", "y"))


@pytest.mark.parametrize("dist,name", [(0, "self"), (1, "1"), (2, "2"), (3, "3-5"), (5, "3-5"), (6, "6-10"),
                                       (10, "6-10"), (11, "11-20"), (20, "11-20"), (21, "21+"), (400, "21+")])
def test_distance_buckets(dist, name):
    assert BUCKETS[distance_bucket(dist)] == name


def test_hash_is_crc32():
    import zlib
    assert token_hash("hello", 2048) == zlib.crc32(b"hello") % 2048


def test_truncation():
    long = " ".join(f"w{k}" for k in range(MAX_TOKENS + 50))
    f = featurize_pair(Utterance(0, "a", long), Utterance(1, "b", "w0"), buckets=4096)
    assert sum(f.cand_counts.values()) == MAX_TOKENS


def test_zero_params_zero_vector():
    f = featurize_pair(Utterance(0, "a", "x y"), Utterance(1, "b", "y z"), buckets=8)
    p = EncoderParams(Tensor(np.zeros((feature_dim(8), 4))), Tensor(np.zeros(4)))
    assert np.array_equal(encode_pair(f, p).data, np.zeros(4))


def test_identity_projection_reproduces_prefix():
    B = 8
    f = featurize_pair(Utterance(0, "a", "x y y"), Utterance(2, "a", "y"), buckets=B)
    F = feature_dim(B)
    p = EncoderParams(Tensor(np.eye(F)[:, :F]), Tensor(np.zeros(F)))
    np.testing.assert_array_equal(encode_pair(f, p).data, f.dense())
    assert f.dense()[2 * B + 1] == 1.0  # same speaker


def test_dimension_mismatch():
    f = featurize_pair(Utterance(0, "a", "x"), Utterance(1, "b", "y"), buckets=8)
    with pytest.raises(ValueError):
        encode_pair(f, params(16, 3))


def test_deterministic():
    d = make_dialogue(["a", "b", "a"], ["one two", "two three", "three one"])
    p = params(32, 5)
    a = encode_pair(featurize_pair(d[0], d[2], d, buckets=32), p).data
    b = encode_pair(featurize_pair(d[0], d[2], d, buckets=32), p).data
    assert a.tobytes() == b.tobytes()


def test_encode_pair_gradient():
    f = featurize_pair(Utterance(0, "a", "x y"), Utterance(3, "a", "y z"), buckets=8)
    p = params(8, 3, seed=2)
    rng = np.random.default_rng(0)
    w = rng.normal(size=3)
    errs = directional_check(lambda: (encode_pair(f, p) * w).sum(), {"proj": p.proj, "bias": p.bias}, rng)
    assert max(errs.values()) < 1e-6


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_batched_grid_matches_per_pair(seed):
    dialogue, _ = generate(SynthConfig(n_dialogues=1, seed=seed, mention_prob=0.5))[0]
    B = 64
    p = params(B, 4, seed=seed, scale=0.3)
    grid = encode_all_pairs(PreparedDialogue(dialogue, B), p).data
    for c in range(len(dialogue)):
        for i in range(c + 1):
            one = encode_pair(featurize_pair(dialogue[i], dialogue[c], dialogue, buckets=B), p).data
            np.testing.assert_allclose(grid[i, c], one, atol=1e-12)
