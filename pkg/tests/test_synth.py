import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threadloom.corpus import ReplyForest, derive_sessions
from threadloom.graphs import detect_mentions
from threadloom.synth import SynthConfig, generate


def test_thousand_dialogues_validate():
    data = generate(SynthConfig(n_dialogues=1000, seed=1))
    for dialogue, forest in data:
        assert len(dialogue) == len(forest)
        ReplyForest(forest.parent)
        assert [u.index for u in dialogue] == list(range(len(dialogue)))
        k = len(derive_sessions(forest).clusters)
        assert 2 <= k <= 4
    assert len({d.id for d, _ in data}) == 1000


def test_deterministic():
    a = generate(SynthConfig(n_dialogues=5, seed=9))
    b = generate(SynthConfig(n_dialogues=5, seed=9))
    assert [(d.utterances, f.parent) for d, f in a] == [(d.utterances, f.parent) for d, f in b]
    c = generate(SynthConfig(n_dialogues=5, seed=10))
    assert [f.parent for _, f in a] != [f.parent for _, f in c]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_sessions_have_one_root_and_keep_order(seed):
    dialogue, forest = generate(SynthConfig(n_dialogues=1, seed=seed))[0]
    for cluster in derive_sessions(forest).clusters:
        roots = [i for i in cluster if forest[i] == i]
        assert roots == [min(cluster)]
        for i in cluster:
            assert forest[i] <= i


def test_session_count_range():
    cfg = SynthConfig(n_dialogues=50, sessions=(3, 3), session_length=(2, 2), seed=4)
    for d, f in generate(cfg):
        assert len(d) == 6
        assert len(derive_sessions(f).clusters) == 3


def test_mentions_name_the_parent_speaker():
    cfg = SynthConfig(n_dialogues=30, mention_prob=1.0, seed=2)
    for d, f in generate(cfg):
        speakers = {u.speaker for u in d}
        for u in d:
            p = f[u.index]
            if p != u.index and d[p].speaker != u.speaker:
                assert d[p].speaker in detect_mentions(u, speakers)


def test_children_differ_from_parent_speaker():
    for d, f in generate(SynthConfig(n_dialogues=50, seed=3)):
        for c, p in f.pairs():
            if c != p:
                assert d[c].speaker != d[p].speaker


@pytest.mark.parametrize("bad", [dict(sessions=(3, 2)), dict(speakers_per_session=(1, 2)),
                                 dict(speaker_pool=2), dict(mention_prob=1.5), dict(reply_skip_p=0.0)])
def test_invalid_config(bad):
    with pytest.raises(ValueError):
        SynthConfig(**bad)


def test_interleaving_happens():
    crossings = 0
    for d, f in generate(SynthConfig(n_dialogues=50, seed=5)):
        labels = np.asarray(derive_sessions(f).labels())
        crossings += int((labels[1:] != labels[:-1]).sum())
    assert crossings > 100
