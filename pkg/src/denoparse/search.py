"""Beam search over program states.

Each step expands every beam state by its legal actions and ranks the
children. With lambda = infinity the ranking is lexicographic: partial
reward first (Jaccard of the partial execution against the gold answer),
model score second, serialization as the final tie-break. With finite
lambda the key is lambda * reward + score. When shaping is enabled the
score component becomes score + eta * critique, the log-space equivalent
of multiplying the behavior policy by the critique policy over the beam
pool; stored scores and rewards are never shaped.

Completed programs leave the beam and accumulate into the candidate set,
so a beam at least as wide as the program space collects the whole space.
Scores, rewards and critique values are maintained incrementally per
child; tests cross-check them against the direct featurize/execute path.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from . import programs as P
from .critique import EMPTY_LEXICON, Lexicon
from .scorer import (RECALL_FEATURE, ParamVector, action_features,
                     question_table_tokens)
from .tables import AnswerSet, Example, Table, exact_match

_EMPTY = frozenset()


@dataclass
class SearchConfig:
    beam_size: int = 32
    max_actions: int = 6
    max_conditions: int = 2
    lambda_weight: float = math.inf  # inf: sort by reward, score breaks ties
    shaping_enabled: bool = False
    eta: float = 5.0

    def validate(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.max_actions < 2:
            raise ValueError("max_actions must allow at least a head and Stop")
        if self.lambda_weight != math.inf and (self.lambda_weight < 0
                                               or not math.isfinite(self.lambda_weight)):
            raise ValueError("lambda_weight must be >= 0 or infinity")
        if not math.isfinite(self.eta):
            raise ValueError("eta must be finite")


@dataclass(frozen=True)
class Candidate:
    program: P.Program
    serialization: str
    score: float
    reward: float
    critique: float
    compatible: bool
    answer: AnswerSet


@dataclass
class CandidateSet:
    """Programs found for one example, ordered by the final beam ranking."""
    entries: list[Candidate] = field(default_factory=list)

    @property
    def compatible(self) -> list[Candidate]:
        return [c for c in self.entries if c.compatible]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)


def rank_key(serialization: str, reward: float, score: float, critique: float,
             config: SearchConfig):
    """Sort key: ascending sort yields the declared descending-numeric,
    ascending-serialization order."""
    s = score + config.eta * critique if config.shaping_enabled else score
    if config.lambda_weight == math.inf:
        return (-reward, -s, serialization)
    return (-(config.lambda_weight * reward + s), serialization)


class _Hyp:
    __slots__ = ("actions", "ser", "last_or", "phase", "cond_count", "can_or",
                 "conds_used", "head", "base", "rows", "or_first", "score",
                 "covered", "nonkw", "present", "keywords", "cooccur",
                 "reward", "critique")

    def __init__(self, **kw):
        for k, v in kw.items():
            setattr(self, k, v)


# minimum number of further actions needed to reach Stop from a phase
_MIN_FINISH = {"select_head": 1, "followup_head": 2, "fpcell_head": 1,
               "cond": 1, "or": 2}


def beam_search(example: Example, table: Table, theta: ParamVector,
                lexicon: Lexicon | None, config: SearchConfig,
                prev_answer: AnswerSet | None = None) -> CandidateSet:
    config.validate()
    lexicon = lexicon or EMPTY_LEXICON
    position = example.position
    if position >= 1 and prev_answer is None:
        raise ValueError("prev_answer is required for follow-up positions")
    gold = example.gold_answer
    qtokens = example.question_tokens
    qset = frozenset(qtokens)
    qnumbers = example.question_numbers

    e1 = question_table_tokens(qtokens, table)
    e1_len = len(e1)
    w_recall = theta.get(RECALL_FEATURE)
    use_reward = config.lambda_weight != 0.0 and gold is not None
    gold_values = gold.values if gold is not None else None

    all_rows = frozenset(range(table.row_count))
    col_norm = table.normalized_column_values
    if prev_answer is not None:
        prev_coords = frozenset((r, c) for r, c in (prev_answer.coords or _EMPTY)
                                if r < table.row_count and c < table.col_count)
        prev_rows = frozenset(r for r, _ in prev_coords)
        fp_rows = (frozenset({next(iter(prev_coords))[0]})
                   if len(prev_coords) == 1 else _EMPTY)
    else:
        prev_coords = _EMPTY
        prev_rows = fp_rows = _EMPTY

    # lexicon pairs whose question side fires, bucketed by keyword
    kw_weight: dict[str, int] = {}
    for tok, kw in lexicon.pairs:
        if tok in qset:
            kw_weight[kw] = kw_weight.get(kw, 0) + 1

    heads = P.head_actions(table, position)
    conds = P.condition_actions(table, tuple(qnumbers))

    class _Pre:
        __slots__ = ("action", "dot", "surf_nonkw", "surf_present", "surf_e1",
                     "keywords", "pred", "tokens", "tokens_after_or")

    def prepare(action: P.Action) -> _Pre:
        pre = _Pre()
        pre.action = action
        pre.dot = theta.dot(action_features(action, qtokens, table))
        surf = P.action_surface_tokens(action, table) - P.KEYWORD_WORDS
        pre.surf_nonkw = surf
        pre.surf_present = surf & qset
        pre.surf_e1 = surf & e1
        pre.keywords = P.action_keywords(action)
        if action.kind in (P.EQ, P.NEQ, P.GT, P.LT):
            pre.pred = P.match_rows(action, table, all_rows)
        else:
            pre.pred = None
        pre.tokens = " ".join(P.action_tokens(action, table, after_or=False))
        pre.tokens_after_or = " ".join(P.action_tokens(action, table, after_or=True))
        return pre

    pre_heads = [prepare(a) for a in heads]
    pre_conds = [prepare(a) for a in conds]
    pre_or = prepare(P.Action(P.OR))
    pre_stop = prepare(P.Action(P.STOP))

    def values_of(head, rows: frozenset[int]) -> frozenset[str]:
        if head[0] == "followup":
            return frozenset(col_norm[c][r] for r, c in head[1] if r in rows)
        return frozenset(col_norm[head[1]][r] for r in rows)

    def jaccard_value(values: frozenset[str]) -> float:
        if not values and not gold_values:
            return 1.0
        inter = len(values & gold_values)
        return inter / (len(values) + len(gold_values) - inter)

    def partial_reward(hyp) -> float:
        if hyp.head is None:
            return jaccard_value(_EMPTY) if gold_values is not None else 0.0
        rows = hyp.base if hyp.or_first is not None else hyp.rows
        return jaccard_value(values_of(hyp.head, rows))

    root = _Hyp(actions=(), ser="", last_or=False, phase="empty", cond_count=0,
                can_or=False, conds_used=_EMPTY, head=None, base=all_rows,
                rows=all_rows, or_first=None,
                score=(w_recall if e1_len else 0.0), covered=_EMPTY,
                nonkw=_EMPTY, present=_EMPTY, keywords=_EMPTY, cooccur=0,
                reward=0.0, critique=0.0)

    def make_child(hyp: _Hyp, pre: _Pre) -> _Hyp:
        a = pre.action
        k = a.kind
        new_e1 = pre.surf_e1 - hyp.covered
        score = hyp.score + pre.dot
        if new_e1 and e1_len:
            score -= w_recall * (len(new_e1) / e1_len)
        covered = hyp.covered | new_e1 if new_e1 else hyp.covered
        nonkw = hyp.nonkw | pre.surf_nonkw if pre.surf_nonkw else hyp.nonkw
        present = hyp.present | pre.surf_present if pre.surf_present else hyp.present
        new_kws = pre.keywords - hyp.keywords
        keywords = hyp.keywords | new_kws if new_kws else hyp.keywords
        cooccur = hyp.cooccur + sum(kw_weight.get(x, 0) for x in new_kws)
        head, base, rows, or_first = hyp.head, hyp.base, hyp.rows, hyp.or_first
        cond_count, can_or = hyp.cond_count, hyp.can_or
        if k == P.SELECT:
            head, base, rows, phase = ("select", a.column), all_rows, all_rows, "select_head"
        elif k == P.FOLLOWUP:
            head, base, rows, phase = ("followup", prev_coords), prev_rows, prev_rows, "followup_head"
        elif k == P.FPCELL:
            head, base, rows, phase = ("fpcell", a.column), fp_rows, fp_rows, "fpcell_head"
        elif k == P.OR:
            or_first, phase, can_or = rows, "or", False
        elif k in P.CONDITION_KINDS:
            if or_first is None:
                base = rows  # a fresh clause filters the survivors so far
            sub = (pre.pred & base if pre.pred is not None
                   else P.match_rows(a, table, base))
            if or_first is not None:
                rows = or_first | sub
                or_first, can_or = None, False
            else:
                rows = sub
                can_or = True
            cond_count += 1
            phase = "cond"
        else:  # STOP
            phase = "complete"
        tok = pre.tokens_after_or if hyp.last_or else pre.tokens
        ser = hyp.ser + " " + tok if hyp.ser and tok else (hyp.ser or tok)
        conds_used = (hyp.conds_used | {a} if k in P.CONDITION_KINDS
                      else hyp.conds_used)
        child = _Hyp(actions=hyp.actions + (a,), ser=ser, last_or=(k == P.OR),
                     phase=phase, cond_count=cond_count, can_or=can_or,
                     conds_used=conds_used, head=head, base=base, rows=rows,
                     or_first=or_first, score=score, covered=covered,
                     nonkw=nonkw, present=present, keywords=keywords,
                     cooccur=cooccur, reward=0.0, critique=0.0)
        match = len(present) / len(nonkw) if nonkw else 0.0
        child.critique = match + cooccur
        if use_reward or phase == "complete":
            if gold_values is not None:
                child.reward = partial_reward(child)
        return child

    def expansions(hyp: _Hyp):
        remaining = config.max_actions - len(hyp.actions)
        if hyp.phase == "empty":
            for pre in pre_heads:
                k = pre.action.kind
                need = 1 + _MIN_FINISH["followup_head" if k == P.FOLLOWUP
                                       else "select_head" if k == P.SELECT
                                       else "fpcell_head"]
                if need <= remaining and (k != P.FOLLOWUP or config.max_conditions >= 1):
                    yield pre
            return
        budget = hyp.cond_count < config.max_conditions
        if hyp.phase in ("select_head", "cond"):
            yield pre_stop
        if hyp.phase == "fpcell_head":
            yield pre_stop
            return
        if budget and hyp.phase in ("select_head", "followup_head", "cond", "or"):
            if 1 + _MIN_FINISH["cond"] <= remaining:
                for pre in pre_conds:
                    if pre.action not in hyp.conds_used:
                        yield pre
        if hyp.phase == "cond" and hyp.can_or and budget and 1 + _MIN_FINISH["or"] <= remaining:
            yield pre_or

    pool: dict[str, Candidate] = {}

    def finalize(hyp: _Hyp):
        if hyp.ser in pool:
            return
        program = P.ProgramState(hyp.actions, True)
        rows = hyp.rows
        if hyp.head is None:
            answer = AnswerSet(frozenset(), frozenset())
        elif hyp.head[0] == "followup":
            coords = frozenset((r, c) for r, c in hyp.head[1] if r in rows)
            answer = AnswerSet(frozenset(col_norm[c][r] for r, c in coords), coords)
        else:
            coords = frozenset((r, hyp.head[1]) for r in rows)
            answer = AnswerSet(frozenset(col_norm[hyp.head[1]][r] for r in rows), coords)
        compatible = gold is not None and exact_match(answer, gold)
        pool[hyp.ser] = Candidate(program, hyp.ser, hyp.score, hyp.reward,
                                  hyp.critique, compatible, answer)

    beam = [root]
    for _ in range(config.max_actions):
        children = []
        for hyp in beam:
            for pre in expansions(hyp):
                child = make_child(hyp, pre)
                if child.phase == "complete":
                    finalize(child)
                else:
                    children.append(child)
        if not children:
            break
        beam = heapq.nsmallest(
            config.beam_size, children,
            key=lambda h: rank_key(h.ser, h.reward, h.score, h.critique, config))

    # the candidate set is one beam's worth of completed programs under the
    # final ranking, so shaping governs retention, not just order
    entries = sorted(pool.values(),
                     key=lambda c: rank_key(c.serialization, c.reward, c.score,
                                            c.critique, config))[:config.beam_size]
    return CandidateSet(entries)


def dump_record(example: Example, candidates: CandidateSet) -> dict:
    """JSON-able record of a final beam, for the debug dump."""
    return {
        "sequence_id": example.sequence_id,
        "position": example.position,
        "question": example.question,
        "beam": [
            {"program": c.serialization, "score": c.score, "reward": c.reward,
             "critique": c.critique, "compatible": c.compatible}
            for c in candidates
        ],
    }
