"""Transcript ingestion, reply forests, sessions and HRL candidate levels."""
from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence


class CorpusError(ValueError):
    """Base class for data errors raised while reading corpora."""


class ParseError(CorpusError):
    def __init__(self, line_no: int, line: str, reason: str = "no speaker token"):
        super().__init__(f"line {line_no}: {reason}: {line!r}")
        self.line_no = line_no


class AnnotationError(CorpusError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"annotation line {line_no}: {message}")
        self.line_no = line_no


class SchemaError(CorpusError):
    def __init__(self, record: int, field_name: str, message: str):
        super().__init__(f"record {record}: field {field_name!r}: {message}")
        self.record = record
        self.field = field_name


class MultipleParentsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Utterance:
    index: int
    speaker: str
    text: str
    timestamp: str | None = None

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("utterance index must be non-negative")
        if not self.speaker:
            raise ValueError(f"utterance {self.index} has an empty speaker")


@dataclass(frozen=True)
class Dialogue:
    utterances: tuple[Utterance, ...]
    id: str = "dialogue"

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))
        for pos, u in enumerate(self.utterances):
            if u.index != pos:
                raise ValueError(f"utterance at position {pos} carries index {u.index}")

    def __len__(self) -> int:
        return len(self.utterances)

    def __getitem__(self, i: int) -> Utterance:
        return self.utterances[i]

    @property
    def speakers(self) -> list[str]:
        return [u.speaker for u in self.utterances]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]], id: str = "dialogue") -> "Dialogue":
        return cls(tuple(Utterance(i, s, t) for i, (s, t) in enumerate(pairs)), id=id)


@dataclass(frozen=True)
class ReplyForest:
    """``parent[c]`` is the index ``c`` replies to; ``parent[c] == c`` starts a session."""

    parent: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "parent", tuple(int(p) for p in self.parent))
        for c, p in enumerate(self.parent):
            if not 0 <= p <= c:
                raise ValueError(f"invalid parent {p} for child {c}")

    def __len__(self) -> int:
        return len(self.parent)

    def __getitem__(self, c: int) -> int:
        return self.parent[c]

    @classmethod
    def from_mapping(cls, mapping: dict[int, int], n: int) -> "ReplyForest":
        missing = [c for c in range(n) if c not in mapping]
        if missing:
            raise ValueError(f"forest is not total; missing children {missing[:5]}")
        return cls(tuple(mapping[c] for c in range(n)))

    def pairs(self) -> set[tuple[int, int]]:
        return {(c, p) for c, p in enumerate(self.parent)}

    def roots(self) -> list[int]:
        return [c for c, p in enumerate(self.parent) if c == p]


@dataclass(frozen=True)
class SessionPartition:
    clusters: frozenset[frozenset[int]]

    @classmethod
    def from_labels(cls, labels: Sequence) -> "SessionPartition":
        groups: dict = {}
        for i, lab in enumerate(labels):
            groups.setdefault(lab, set()).add(i)
        return cls(frozenset(frozenset(g) for g in groups.values()))

    @classmethod
    def from_sets(cls, sets: Iterable[Iterable[int]]) -> "SessionPartition":
        return cls(frozenset(frozenset(s) for s in sets))

    @property
    def n(self) -> int:
        return sum(len(c) for c in self.clusters)

    def labels(self) -> list[int]:
        """Cluster label per index, labels numbered by smallest member."""
        out = [0] * self.n
        for k, cluster in enumerate(sorted(self.clusters, key=min)):
            for i in cluster:
                out[i] = k
        return out

    def cluster_of(self, i: int) -> frozenset[int]:
        for c in self.clusters:
            if i in c:
                return c
        raise KeyError(i)


@dataclass(frozen=True)
class CandidateLevels:
    current: int
    r1: frozenset[int]
    r2: frozenset[int]
    r3: frozenset[int]
    r4: frozenset[int]

    def as_tuple(self):
        return (self.r1, self.r2, self.r3, self.r4)

    def level_of(self, j: int) -> int:
        for k, s in enumerate(self.as_tuple(), start=1):
            if j in s:
                return k
        raise KeyError(j)


# -- IRC ingestion --------------------------------------------------------

_IRC_MSG = re.compile(r"^\[(?P<ts>[^\]]*)\]\s+<(?P<nick>[^>\s]+)>\s?(?P<text>.*)$")
_IRC_ACT = re.compile(r"^\[(?P<ts>[^\]]*)\]\s+\*\s+(?P<nick>\S+)\s?(?P<text>.*)$")


def parse_irc_line(line: str, line_no: int) -> tuple[str | None, str, str]:
    line = line.rstrip("\r\n")
    m = _IRC_MSG.match(line) or _IRC_ACT.match(line)
    if m is None:
        raise ParseError(line_no, line)
    return m.group("ts"), m.group("nick"), m.group("text")


def parse_annotations(annotation_lines: Sequence[str], n: int) -> ReplyForest:
    chosen: dict[int, int] = {}
    for line_no, line in enumerate(annotation_lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        toks = body.split()
        try:
            child, parent = int(toks[0]), int(toks[1])
        except (IndexError, ValueError):
            raise AnnotationError(line_no, f"expected 'child parent', got {line.strip()!r}") from None
        if child < 0 or parent < 0 or child >= n:
            raise AnnotationError(line_no, f"index out of range for {n} utterances")
        if parent > child:
            raise AnnotationError(line_no, f"parent {parent} comes after child {child}")
        if child in chosen and chosen[child] != parent:
            keep = max(chosen[child], parent)
            warnings.warn(
                f"child {child} annotated with parents {chosen[child]} and {parent}; keeping {keep}",
                MultipleParentsWarning, stacklevel=2)
            parent = keep
        chosen[child] = parent
    return ReplyForest(tuple(chosen.get(c, c) for c in range(n)))


def parse_irc(raw_lines: Sequence[str], annotation_lines: Sequence[str],
              dialogue_id: str = "irc") -> tuple[Dialogue, ReplyForest]:
    """Parse ``[ts] <nick> text`` / ``[ts] * nick action`` lines plus ``child parent`` links.

    Blank raw lines are skipped without consuming an index.  Utterances with no
    annotation become session starts.
    """
    utts = []
    for line_no, line in enumerate(raw_lines, start=1):
        if not line.strip():
            continue
        ts, nick, text = parse_irc_line(line, line_no)
        utts.append(Utterance(len(utts), nick, text, ts))
    dialogue = Dialogue(tuple(utts), id=dialogue_id)
    return dialogue, parse_annotations(annotation_lines, len(utts))


# -- canonical JSONL ------------------------------------------------------

_FIELDS = ("dialogue_id", "index", "speaker", "text", "parent", "timestamp")


def _check_record(rec, k: int) -> None:
    if not isinstance(rec, dict):
        raise SchemaError(k, "<record>", "not a JSON object")
    for name in _FIELDS:
        if name not in rec:
            raise SchemaError(k, name, "missing")
    if not isinstance(rec["dialogue_id"], str):
        raise SchemaError(k, "dialogue_id", "must be a string")
    if not isinstance(rec["index"], int) or isinstance(rec["index"], bool) or rec["index"] < 0:
        raise SchemaError(k, "index", "must be a non-negative integer")
    if not isinstance(rec["speaker"], str) or not rec["speaker"]:
        raise SchemaError(k, "speaker", "must be a non-empty string")
    if not isinstance(rec["text"], str):
        raise SchemaError(k, "text", "must be a string")
    p = rec["parent"]
    if p is not None and (not isinstance(p, int) or isinstance(p, bool)):
        raise SchemaError(k, "parent", "must be an integer or null")
    if rec["timestamp"] is not None and not isinstance(rec["timestamp"], str):
        raise SchemaError(k, "timestamp", "must be a string or null")


def records_to_corpus(records: Sequence[dict]) -> list[tuple[Dialogue, ReplyForest | None]]:
    groups: dict[str, list[tuple[int, dict]]] = {}
    for k, rec in enumerate(records, start=1):
        _check_record(rec, k)
        groups.setdefault(rec["dialogue_id"], []).append((k, rec))
    out = []
    for did, items in groups.items():
        items.sort(key=lambda kr: kr[1]["index"])
        for pos, (k, rec) in enumerate(items):
            if rec["index"] != pos:
                raise SchemaError(k, "index", f"dialogue {did!r} has a gap or duplicate at position {pos}")
        utts = tuple(Utterance(r["index"], r["speaker"], r["text"], r["timestamp"]) for _, r in items)
        parents = [r["parent"] for _, r in items]
        if all(p is None for p in parents):
            forest = None
        else:
            for k, rec in items:
                p = rec["parent"]
                if p is None:
                    raise SchemaError(k, "parent", "null inside a dialogue that has other parents")
                if not 0 <= p <= rec["index"]:
                    raise SchemaError(k, "parent", f"parent {p} not in [0, {rec['index']}]")
            forest = ReplyForest(tuple(parents))
        out.append((Dialogue(utts, id=did), forest))
    return out


def corpus_to_records(corpus: Iterable[tuple[Dialogue, ReplyForest | None]]) -> list[dict]:
    recs = []
    for dialogue, forest in corpus:
        if forest is not None and len(forest) != len(dialogue):
            raise ValueError(f"forest size {len(forest)} != dialogue size {len(dialogue)}")
        for u in dialogue.utterances:
            recs.append({
                "dialogue_id": dialogue.id,
                "index": u.index,
                "speaker": u.speaker,
                "text": u.text,
                "parent": None if forest is None else forest[u.index],
                "timestamp": u.timestamp,
            })
    return recs


def read_corpus(path) -> list[tuple[Dialogue, ReplyForest | None]]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for k, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SchemaError(k, "<record>", f"invalid JSON ({exc.msg})") from None
    return records_to_corpus(records)


def write_corpus(corpus: Iterable[tuple[Dialogue, ReplyForest | None]], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in corpus_to_records(corpus):
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_canonical(path) -> tuple[Dialogue, ReplyForest | None]:
    corpus = read_corpus(path)
    if len(corpus) != 1:
        raise CorpusError(f"{path}: expected exactly one dialogue, found {len(corpus)}")
    return corpus[0]


def write_canonical(dialogue: Dialogue, forest: ReplyForest | None, path) -> None:
    write_corpus([(dialogue, forest)], path)


# -- sessions and levels --------------------------------------------------

def derive_sessions(forest: ReplyForest, n: int | None = None) -> SessionPartition:
    n = len(forest) if n is None else n
    if n != len(forest):
        raise ValueError(f"forest covers {len(forest)} utterances, expected {n}")
    # parent <= child, so one forward pass resolves every root
    root = list(range(n))
    for c in range(n):
        root[c] = root[forest[c]] if forest[c] != c else c
    return SessionPartition.from_labels(root)


def ancestors(c: int, forest: ReplyForest) -> list[int]:
    """Strict ancestors of ``c`` walking the reply chain, nearest first."""
    out = []
    node = c
    while forest[node] != node:
        node = forest[node]
        out.append(node)
    return out


def candidate_window(c: int, window: int) -> range:
    return range(max(0, c - window + 1), c + 1)


def candidate_levels(c: int, forest: ReplyForest, partition: SessionPartition | None,
                     window: int) -> CandidateLevels:
    if partition is None:
        partition = derive_sessions(forest)
    cands = set(candidate_window(c, window))
    parent = forest[c]
    r1 = {parent} & cands
    r2 = set(ancestors(parent, forest)) & cands - r1
    session = partition.cluster_of(c)
    # a wrong self-link splits c off its session, so it ranks with outer candidates
    r3 = (set(session) & cands) - r1 - r2 - {c}
    r4 = cands - r1 - r2 - r3
    return CandidateLevels(c, frozenset(r1), frozenset(r2), frozenset(r3), frozenset(r4))
