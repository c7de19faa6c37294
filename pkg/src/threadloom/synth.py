"""Synthetic entangled dialogues with gold reply forests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Dialogue, ReplyForest, Utterance

_SYLLABLES = ("ka", "lo", "mi", "ne", "ru", "ta", "vo", "zi", "pe", "su", "da", "go", "hi", "ba", "fu", "ya")


@dataclass
class SynthConfig:
    n_dialogues: int = 10
    sessions: tuple[int, int] = (2, 4)
    session_length: tuple[int, int] = (3, 7)
    speaker_pool: int = 30
    speakers_per_session: tuple[int, int] = (3, 4)
    mention_prob: float = 0.3
    reply_skip_p: float = 0.6       # geometric success probability for climbing the thread
    reply_back_prob: float = 0.95   # reply speaker repeats the grandparent speaker
    topic_pool: int = 8
    topic_words: tuple[int, int] = (1, 2)
    filler_words: tuple[int, int] = (3, 6)
    filler_vocab: int = 400
    echo_prob: float = 0.4          # child repeats one word of its parent
    seed: int = 0

    def __post_init__(self):
        for name in ("sessions", "session_length", "speakers_per_session", "topic_words", "filler_words"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} range {lo}-{hi} is empty or negative")
            setattr(self, name, (int(lo), int(hi)))
        if self.sessions[0] < 1 or self.session_length[0] < 1:
            raise ValueError("need at least one session of one utterance")
        if self.speakers_per_session[0] < 2:
            raise ValueError("sessions need at least two speakers")
        if self.speakers_per_session[1] > self.speaker_pool:
            raise ValueError("speaker pool smaller than a session")
        for name in ("mention_prob", "reply_back_prob", "echo_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.reply_skip_p <= 1.0:
            raise ValueError("reply_skip_p must lie in (0, 1]")


def _word(rng: np.random.Generator, n_syl: int) -> str:
    return "".join(_SYLLABLES[i] for i in rng.integers(len(_SYLLABLES), size=n_syl))


def _session(rng, cfg: SynthConfig, speakers: list[str], topic: list[str], filler: list[str]):
    """One session: local parents, speakers and texts."""
    length = int(rng.integers(cfg.session_length[0], cfg.session_length[1] + 1))
    parents, spk, texts = [], [], []
    for k in range(length):
        if k == 0:
            parent = 0
            who = speakers[int(rng.integers(len(speakers)))]
        else:
            parent = k - 1
            for _ in range(int(rng.geometric(cfg.reply_skip_p)) - 1):
                if parents[parent] == parent:
                    break
                parent = parents[parent]
            p_spk = spk[parent]
            gp = parents[parent]
            if gp != parent and rng.random() < cfg.reply_back_prob:
                who = spk[gp]
            else:
                others = [s for s in speakers if s != p_spk]
                who = others[int(rng.integers(len(others)))]
        n_top = int(rng.integers(cfg.topic_words[0], cfg.topic_words[1] + 1))
        n_fill = int(rng.integers(cfg.filler_words[0], cfg.filler_words[1] + 1))
        words = [topic[int(i)] for i in rng.integers(len(topic), size=n_top)]
        words += [filler[int(i)] for i in rng.integers(len(filler), size=n_fill)]
        if k > 0 and rng.random() < cfg.echo_prob:
            pw = [w for w in texts[parent].split() if not w.endswith(":")]
            if pw:
                words.append(pw[int(rng.integers(len(pw)))])
        rng.shuffle(words)
        text = " ".join(words)
        if k > 0 and rng.random() < cfg.mention_prob:
            text = f"{spk[parent]}: {text}"
        parents.append(parent)
        spk.append(who)
        texts.append(text)
    return parents, spk, texts


def generate_one(rng: np.random.Generator, cfg: SynthConfig, dialogue_id: str,
                 filler: list[str]) -> tuple[Dialogue, ReplyForest]:
    pool = [f"user{k}" for k in range(cfg.speaker_pool)]
    n_sess = int(rng.integers(cfg.sessions[0], cfg.sessions[1] + 1))
    sessions = []
    for _ in range(n_sess):
        k = int(rng.integers(cfg.speakers_per_session[0], cfg.speakers_per_session[1] + 1))
        speakers = [pool[int(i)] for i in rng.choice(len(pool), size=k, replace=False)]
        topic = [_word(rng, 3) for _ in range(cfg.topic_pool)]
        sessions.append(_session(rng, cfg, speakers, topic, filler))
    # random merge preserving within-session order
    order = np.concatenate([np.full(len(s[0]), q) for q, s in enumerate(sessions)])
    rng.shuffle(order)
    cursor = [0] * n_sess
    global_idx = [[0] * len(s[0]) for s in sessions]
    utts, parents = [], []
    for pos, q in enumerate(order):
        k = cursor[q]
        cursor[q] += 1
        global_idx[q][k] = pos
        lp, spk, texts = sessions[q]
        parents.append(global_idx[q][lp[k]])
        utts.append(Utterance(pos, spk[k], texts[k]))
    return Dialogue(tuple(utts), id=dialogue_id), ReplyForest(tuple(parents))


def generate(config: SynthConfig, prefix: str = "synth") -> list[tuple[Dialogue, ReplyForest]]:
    rng = np.random.default_rng(config.seed)
    filler = [_word(rng, 2) for _ in range(config.filler_vocab)]
    return [generate_one(rng, config, f"{prefix}-{config.seed}-{k}", filler) for k in range(config.n_dialogues)]
