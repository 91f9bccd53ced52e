"""Shared test oracles: an independent row-by-row interpreter, finite
difference gradients, explicit objective functions for the update rules,
and random micro-instance generation. Everything here deliberately avoids
the library's own execution/update code paths.
"""
from __future__ import annotations

import math
import random

from denoparse import programs as P
from denoparse.scorer import ParamVector, featurize
from denoparse.search import Candidate, CandidateSet
from denoparse.tables import AnswerSet, Cell, Table
from denoparse.text import normalize_answer, parse_number


# --- independent interpreter ---------------------------------------------

def _row_passes(cond, row_idx: int, scope: list[int], table: Table) -> bool:
    cell = table.cells[row_idx][cond.column]
    if cond.kind == P.EQ:
        return normalize_answer(cell.raw) == normalize_answer(cond.value)
    if cond.kind == P.NEQ:
        return normalize_answer(cell.raw) != normalize_answer(cond.value)
    if cond.kind in (P.GT, P.LT):
        bound = parse_number(cond.value)
        if bound is None or cell.numeric is None:
            return False
        return cell.numeric > bound if cond.kind == P.GT else cell.numeric < bound
    # MAX / MIN relative to the rows in scope
    best = None
    for r in scope:
        v = table.cells[r][cond.column].numeric
        if v is None:
            continue
        if best is None or (v > best if cond.kind == P.MAX else v < best):
            best = v
    return best is not None and cell.numeric == best


def oracle_execute(program: P.Program, table: Table,
                   prev: AnswerSet | None = None) -> AnswerSet:
    """Reference interpreter: explicit clause grouping, per-row loops."""
    acts = [a for a in program.actions if a.kind != P.STOP]
    head, rest = acts[0], acts[1:]
    clauses: list[list] = []
    k = 0
    while k < len(rest):
        if k + 1 < len(rest) and rest[k + 1].kind == P.OR:
            clauses.append([rest[k], rest[k + 2]])
            k += 3
        else:
            clauses.append([rest[k]])
            k += 1

    if head.kind == P.SELECT:
        rows = list(range(table.row_count))
    elif head.kind == P.FOLLOWUP:
        if prev is None:
            raise P.ExecutionError("needs previous answer")
        rows = sorted({r for r, c in (prev.coords or set())
                       if r < table.row_count and c < table.col_count})
    else:  # FPCELL
        if prev is None:
            raise P.ExecutionError("needs previous answer")
        coords = [rc for rc in (prev.coords or set())
                  if rc[0] < table.row_count and rc[1] < table.col_count]
        rows = [coords[0][0]] if len(coords) == 1 else []

    for clause in clauses:
        scope = list(rows)
        rows = [r for r in scope
                if any(_row_passes(c, r, scope, table) for c in clause)]

    values, coords = set(), set()
    if head.kind in (P.SELECT, P.FPCELL):
        for r in rows:
            values.add(normalize_answer(table.cells[r][head.column].raw))
            coords.add((r, head.column))
    else:
        for r, c in (prev.coords or set()):
            if r in rows and r < table.row_count and c < table.col_count:
                values.add(normalize_answer(table.cells[r][c].raw))
                coords.add((r, c))
    return AnswerSet(frozenset(values), frozenset(coords))


# --- finite differences ---------------------------------------------------

def finite_difference(objective, theta: ParamVector, feature_ids, eps=1e-5):
    grads = {}
    for fid in feature_ids:
        up, dn = theta.copy(), theta.copy()
        up.weights[fid] = up.get(fid) + eps
        dn.weights[fid] = dn.get(fid) - eps
        grads[fid] = (objective(up) - objective(dn)) / (2 * eps)
    return grads


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


# --- explicit update objectives (recomputed from scratch at any theta) ----

def softmax_plain(values):
    m = max(values)
    exps = [math.exp(v - m) for v in values]
    z = sum(exps)
    return [e / z for e in exps]


def candidate_set(programs, question_tokens, table: Table, theta: ParamVector,
                  gold: AnswerSet, prev: AnswerSet | None = None) -> CandidateSet:
    """Build a CandidateSet directly from programs (bypasses beam search)."""
    entries = []
    for prog in programs:
        ser = P.serialize(prog, table)
        answer = P.execute(prog, table, prev)
        from denoparse.tables import exact_match, jaccard
        entries.append(Candidate(
            program=prog, serialization=ser,
            score=theta.dot(featurize(prog, question_tokens, table)),
            reward=jaccard(answer, gold),
            critique=0.0,
            compatible=exact_match(answer, gold),
            answer=answer))
    entries.sort(key=lambda c: c.serialization)
    return CandidateSet(entries)


class Objectives:
    """J_MML, J_MMR, J_MAVER over one candidate set, as explicit functions
    of theta; margin structure (reference, violations) is recomputed at
    every call so finite differences see the true objective."""

    def __init__(self, K: CandidateSet, question_tokens, table: Table):
        self.K = K
        self.q = tuple(question_tokens)
        self.table = table
        self.features = [featurize(c.program, self.q, table) for c in K.entries]
        self.rewards = [c.reward for c in K.entries]
        self.sers = [c.serialization for c in K.entries]
        self.compatible = [i for i, c in enumerate(K.entries) if c.compatible]

    def scores(self, theta: ParamVector):
        return [theta.dot(f) for f in self.features]

    def j_mml(self, theta: ParamVector) -> float:
        p = softmax_plain(self.scores(theta))
        return math.log(sum(p[i] for i in self.compatible))

    def margin_state(self, theta: ParamVector):
        s = self.scores(theta)
        ref = min(self.compatible, key=lambda i: (-s[i], self.sers[i]))
        bar = s[ref] - self.rewards[ref]
        violations = [i for i in range(len(s))
                      if i != ref and s[i] - self.rewards[i] >= bar]
        return s, ref, violations

    def j_mmr(self, theta: ParamVector) -> float:
        s, ref, violations = self.margin_state(theta)
        if not violations:
            return 0.0
        ybar = min(violations, key=lambda i: (-(s[i] - self.rewards[i]), self.sers[i]))
        hinge = s[ybar] - s[ref] + self.rewards[ref] - self.rewards[ybar]
        return -max(0.0, hinge)

    def j_maver(self, theta: ParamVector) -> float:
        s, ref, violations = self.margin_state(theta)
        if not violations:
            return 0.0
        return -sum(s[i] - s[ref] + self.rewards[ref] - self.rewards[i]
                    for i in violations) / len(violations)

    def j_expected_reward(self, theta: ParamVector) -> float:
        p = softmax_plain(self.scores(theta))
        return sum(pi * r for pi, r in zip(p, self.rewards))

    def feature_ids(self):
        out = set()
        for f in self.features:
            out.update(f)
        return sorted(out)


def margin_structure_stable(obj: Objectives, theta: ParamVector, gap=1e-3) -> bool:
    s = obj.scores(theta)
    comp = obj.compatible
    if not comp:
        return False
    ordered = sorted(comp, key=lambda i: -s[i])
    if len(ordered) >= 2 and abs(s[ordered[0]] - s[ordered[1]]) < gap:
        return False
    _, ref, violations = obj.margin_state(theta)
    bar = s[ref] - obj.rewards[ref]
    for i in range(len(s)):
        if i == ref:
            continue
        margin = s[i] - obj.rewards[i] - bar
        if abs(margin) < gap:
            return False
    if violations:
        vio = sorted(violations, key=lambda i: -(s[i] - obj.rewards[i]))
        if len(vio) >= 2 and abs((s[vio[0]] - obj.rewards[vio[0]])
                                 - (s[vio[1]] - obj.rewards[vio[1]])) < gap:
            return False
    return True


# --- random micro instances ------------------------------------------------

_WORDS = ("arc", "bell", "cove", "dune", "fen", "glen", "heath", "isle",
          "knoll", "loch", "mead", "nook")
_COLS = ("Name", "Group", "Points", "Score", "Rank", "Total")


def random_table(rng: random.Random, max_rows=4, max_cols=3) -> Table:
    rows = rng.randint(1, max_rows)
    cols = rng.randint(1, max_cols)
    names = rng.sample(_COLS, cols)
    grid = []
    for r in range(rows):
        row = []
        for c in range(cols):
            if c == 0 and not names[c].lower() in ("points", "score", "rank", "total"):
                row.append(Cell.of(rng.choice(_WORDS)))
            else:
                row.append(Cell.of(str(rng.randint(1, 9))))
        grid.append(tuple(row))
    return Table(f"micro{rng.randint(0, 10**6)}", tuple(names), tuple(grid))


def random_question(rng: random.Random, table: Table) -> tuple[str, ...]:
    pool = sorted(table.all_tokens) + ["which", "had", "most", "more", "than", "not"]
    k = rng.randint(2, 6)
    return tuple(rng.choice(pool) for _ in range(k))


def random_micro_instance(rng: random.Random, require_compatible=True,
                          max_conditions=1):
    """(question_tokens, table, K, theta) with K from full enumeration and a
    gold answer produced by executing a random program."""
    while True:
        table = random_table(rng)
        qtokens = random_question(rng, table)
        numbers = tuple(t for t in qtokens if parse_number(t) is not None)
        programs = P.enumerate_programs(table, 0, max_conditions, numbers, cap=5000)
        gold_prog = rng.choice(programs)
        gold = P.execute(gold_prog, table)
        if not gold.values:
            continue
        theta = ParamVector()
        K = candidate_set(programs, qtokens, table, theta, gold)
        feats = set()
        for prog in programs:
            feats.update(featurize(prog, qtokens, table))
        for f in sorted(feats):
            theta.weights[f] = rng.uniform(-1.0, 1.0)
        K = candidate_set(programs, qtokens, table, theta, gold)
        if require_compatible and not K.compatible:
            continue
        return qtokens, table, K, theta
