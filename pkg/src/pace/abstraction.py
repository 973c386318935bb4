"""Abstraction phase: mine candidate sub-sequences, score them by MDL, extend the table.

A candidate is scored by the log-likelihood of the preferred programs under
the extended lexicon, where each program's likelihood is ``exp(-MDL)``.
The score is therefore ``-sum_i MDL(p_i | lexicon + candidate)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .symlang import (
    _END,
    Action,
    Lexicon,
    Pattern,
    Program,
    ProgramTable,
    _trie_insert,
    flat_triples,
    match_edges,
    normalize_triples,
    pattern_key,
    relative_to_first,
    rewrite_with,
    suffix_costs,
)

MAX_CANDIDATE_LENGTH = 6


@dataclass(frozen=True)
class Candidate:
    key: Pattern
    expansion: tuple[tuple[int, tuple[int, int]], ...]
    size: int
    frequency: int
    sources: frozenset[int]

    @property
    def text(self) -> str:
        return pattern_key(self.key)

    def to_action(self, lexicon: Lexicon) -> Action:
        action = lexicon.abstraction(self.expansion)
        assert action.pattern == self.key
        return action


def _as_mapping(preferred) -> dict[int, Program]:
    if isinstance(preferred, Mapping):
        return dict(preferred)
    return dict(enumerate(preferred))


def extract_candidates(
    preferred: Mapping[int, Program] | Sequence[Program],
    lexicon: Lexicon,
    max_length: int = MAX_CANDIDATE_LENGTH,
) -> list[Candidate]:
    """All contiguous runs of 2..max_length actions, merged by flattened shape."""
    found: dict[Pattern, list] = {}
    for scene_id, program in sorted(_as_mapping(preferred).items()):
        spans = []
        for step in program.steps:
            (ac, ar) = step.anchor
            spans.append([(o, c + ac, r + ar) for o, c, r in lexicon[step.action].pattern])
        n = len(program.steps)
        for i in range(n):
            triples = list(spans[i])
            for j in range(i + 1, min(n, i + max_length)):
                triples.extend(spans[j])
                key, (ac, ar) = normalize_triples(triples)
                entry = found.get(key)
                if entry is None:
                    expansion = tuple(
                        (s.action, (s.anchor.col - ac, s.anchor.row - ar))
                        for s in program.steps[i : j + 1]
                    )
                    found[key] = [expansion, 1, {scene_id}]
                else:
                    entry[1] += 1
                    entry[2].add(scene_id)
    return [
        Candidate(key, expansion, len(key), freq, frozenset(sources))
        for key, (expansion, freq, sources) in found.items()
        if lexicon.find(key) is None
    ]


def _extended(lexicon: Lexicon, cand: Candidate) -> Lexicon:
    return lexicon.with_action(cand.to_action(lexicon))


def score_candidate(cand: Candidate, preferred, lexicon: Lexicon) -> float:
    """Log-posterior of the lexicon extended by ``cand`` (uniform library prior)."""
    extended = _extended(lexicon, cand)
    return -float(
        sum(
            suffix_costs(len(seq), match_edges(seq, extended.trie))[0]
            for seq in (flat_triples(p, lexicon) for p in _as_mapping(preferred).values())
        )
    )


class CorpusScorer:
    """Scores many candidates against one corpus without re-parsing unaffected programs."""

    def __init__(self, preferred, lexicon: Lexicon):
        self.lexicon = lexicon
        self.seqs = [flat_triples(p, lexicon) for _, p in sorted(_as_mapping(preferred).items())]
        self.edges = [match_edges(seq, lexicon.trie) for seq in self.seqs]
        self.base = [int(suffix_costs(len(s), e)[0]) for s, e in zip(self.seqs, self.edges)]
        self.baseline = -float(sum(self.base))

    def scores(self, candidates: Sequence[Candidate]) -> list[float]:
        trie: dict = {}
        for idx, cand in enumerate(candidates):
            _trie_insert(trie, relative_to_first(cand.key), idx)
        # hits[cand][prog] -> list of (start, end)
        hits: list[dict[int, list[tuple[int, int]]]] = [{} for _ in candidates]
        for p, seq in enumerate(self.seqs):
            n = len(seq)
            for j in range(n):
                _, c0, r0 = seq[j]
                node = trie
                for i in range(j, n):
                    o, c, r = seq[i]
                    node = node.get((o, c - c0, r - r0))
                    if node is None:
                        break
                    if _END in node:
                        hits[node[_END]].setdefault(p, []).append((j, i + 1))
        out = []
        for per_prog in hits:
            saved = 0
            for p, spans in per_prog.items():
                edges = [list(e) for e in self.edges[p]]
                for j, e in spans:
                    edges[j].append((e, -1))
                saved += self.base[p] - int(suffix_costs(len(self.seqs[p]), edges)[0])
            out.append(self.baseline + saved)
        return out


@dataclass(frozen=True)
class Selection:
    candidate: Candidate | None
    score: float
    baseline: float
    considered: int

    @property
    def improves(self) -> bool:
        return self.candidate is not None and self.score > self.baseline


def rank_candidates(candidates: Sequence[Candidate], preferred, lexicon: Lexicon) -> Selection:
    scorer = CorpusScorer(preferred, lexicon)
    if not candidates:
        return Selection(None, scorer.baseline, scorer.baseline, 0)
    scores = scorer.scores(candidates)
    best = min(
        range(len(candidates)),
        key=lambda i: (-scores[i], -candidates[i].frequency, candidates[i].size, candidates[i].key),
    )
    return Selection(candidates[best], scores[best], scorer.baseline, len(candidates))


def select_abstraction(candidates: Sequence[Candidate], preferred, lexicon: Lexicon) -> Action | None:
    """Best-scoring candidate as a new action, or None if nothing beats the current lexicon."""
    selection = rank_candidates(candidates, preferred, lexicon)
    if not selection.improves:
        return None
    return selection.candidate.to_action(lexicon)


def apply_abstraction(table: ProgramTable, new_action: Action, lexicon: Lexicon) -> ProgramTable:
    """Append each program's rewrite using ``new_action`` to its scene's list.

    ``lexicon`` must already contain ``new_action``.  Originals are kept; a
    rewrite equal to a program already listed is not added twice.
    """
    out: ProgramTable = {}
    for scene, programs in table.items():
        extended = list(programs)
        for program in programs:
            rewritten = rewrite_with(program, new_action, lexicon)
            if rewritten is not None and rewritten not in extended:
                extended.append(rewritten)
        out[scene] = extended
    return out


class AbstractionLog:
    """JSON-lines record of every abstraction phase."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.records: list[dict] = []

    def record(self, step: int, selection: Selection, chosen: bool) -> dict:
        cand = selection.candidate
        rec = {
            "step": step,
            "chosen_key": cand.text if cand is not None and chosen else None,
            "size": cand.size if cand is not None and chosen else None,
            "frequency": cand.frequency if cand is not None and chosen else None,
            "score": selection.score,
            "skipped": not chosen,
        }
        self.records.append(rec)
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return rec
