import json

import numpy as np
import pytest

from oracles import brute_force_mdl, expand_program, naive_frequency, random_lexicon, random_valid_program
from pace.abstraction import (
    AbstractionLog,
    CorpusScorer,
    apply_abstraction,
    extract_candidates,
    rank_candidates,
    score_candidate,
    select_abstraction,
)
from pace.symlang import HORIZ, VERT, Lexicon, Program, execute, mdl


def towers_corpus():
    # three two-tower programs and one odd one out
    progs = [
        Program.of((VERT, (0, 0)), (VERT, (0, 2)), (VERT, (3, 0)), (VERT, (3, 2))),
        Program.of((VERT, (1, 0)), (VERT, (1, 2)), (HORIZ, (3, 0))),
        Program.of((HORIZ, (0, 0)), (VERT, (4, 0)), (VERT, (4, 2))),
        Program.of((HORIZ, (0, 0)), (HORIZ, (0, 1))),
    ]
    return dict(enumerate(progs))


def test_candidates_merge_by_shape():
    cands = {c.text: c for c in extract_candidates(towers_corpus(), Lexicon())}
    tower = cands["V0,0|V0,2"]
    assert tower.frequency == 4
    assert tower.sources == {0, 1, 2}
    assert tower.size == 2
    assert all(2 <= c.size <= 6 for c in cands.values())


def test_frequencies_match_naive_scanner():
    rng = np.random.default_rng(5)
    for _ in range(40):
        sources = [random_valid_program(rng, int(rng.integers(2, 8))) for _ in range(6)]
        lex = random_lexicon(rng, sources, 2)
        from pace.symlang import optimal_parse

        preferred = [optimal_parse(p, lex) for p in sources]
        for cand in extract_candidates(preferred, lex, max_length=4):
            assert cand.frequency == naive_frequency(list(cand.key), preferred, lex, 4)
            assert lex.find(cand.key) is None


def test_scores_match_direct_and_brute_force():
    rng = np.random.default_rng(6)
    for _ in range(15):
        sources = [random_valid_program(rng, int(rng.integers(2, 7))) for _ in range(5)]
        lex = random_lexicon(rng, sources, 1)
        preferred = dict(enumerate(sources))
        cands = extract_candidates(preferred, lex, max_length=3)
        fast = CorpusScorer(preferred, lex).scores(cands)
        for cand, score in zip(cands, fast):
            assert score == score_candidate(cand, preferred, lex)
            extended = lex.with_action(cand.to_action(lex))
            brute = -sum(brute_force_mdl(expand_program(Lexicon(), p), extended) for p in sources)
            assert score == brute


def test_selects_the_tower():
    corpus = towers_corpus()
    action = select_abstraction(extract_candidates(corpus, Lexicon()), corpus, Lexicon())
    assert action.key == "V0,0|V0,2"
    assert action.id == 2


def test_tie_break_prefers_frequency_then_key():
    # the tower and the horizontal stack both save one action; the tower occurs twice
    corpus = {
        0: Program.of((VERT, (0, 0)), (VERT, (0, 2)), (VERT, (0, 4))),
        1: Program.of((HORIZ, (0, 0)), (HORIZ, (0, 1))),
    }
    cands = extract_candidates(corpus, Lexicon(), max_length=2)
    sel = rank_candidates(cands, corpus, Lexicon())
    assert sel.candidate.text == "V0,0|V0,2" and sel.score == -4
    # equal score and frequency: the smaller key wins
    corpus = {0: Program.of((VERT, (0, 0)), (VERT, (0, 2))), 1: Program.of((HORIZ, (0, 0)), (HORIZ, (0, 1)))}
    sel = rank_candidates(extract_candidates(corpus, Lexicon()), corpus, Lexicon())
    assert sel.candidate.text == "H0,0|H0,1"


def test_nothing_to_gain_returns_none():
    corpus = {0: Program.of((HORIZ, (0, 0)))}
    assert select_abstraction(extract_candidates(corpus, Lexicon()), corpus, Lexicon()) is None
    corpus = {0: Program.of((HORIZ, (0, 0)), (VERT, (4, 4)))}
    lex = Lexicon()
    lex = lex.with_action(lex.abstraction([(HORIZ, (0, 0)), (VERT, (4, 4))]))
    assert select_abstraction(extract_candidates(corpus, lex), corpus, lex) is None


def test_apply_appends_rewrites_and_keeps_originals():
    corpus = towers_corpus()
    action = select_abstraction(extract_candidates(corpus, Lexicon()), corpus, Lexicon())
    lex = Lexicon().with_action(action)
    table = {k: [p] for k, p in corpus.items()}
    new = apply_abstraction(table, action, lex)
    assert [len(v) for v in new.values()] == [2, 2, 2, 1]
    for scene, programs in new.items():
        assert programs[0] == corpus[scene]
        for p in programs[1:]:
            assert action.id in p.actions()
            assert execute(p, lex) == execute(corpus[scene], lex)
            assert len(p) == mdl(corpus[scene], lex)
    again = apply_abstraction(new, action, lex)
    assert again == new


def test_log_records_jsonl(tmp_path):
    corpus = towers_corpus()
    sel = rank_candidates(extract_candidates(corpus, Lexicon()), corpus, Lexicon())
    log = AbstractionLog(tmp_path / "abs.jsonl")
    log.record(1, sel, True)
    log.record(2, sel, False)
    lines = [json.loads(x) for x in (tmp_path / "abs.jsonl").read_text().splitlines()]
    assert lines[0]["chosen_key"] == "V0,0|V0,2" and lines[0]["frequency"] == 4
    assert lines[1]["skipped"] is True and lines[1]["chosen_key"] is None
    assert lines[0]["score"] == pytest.approx(sel.score)
