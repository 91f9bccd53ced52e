"""Featurized linear scorer over programs.

score(y) = theta . featurize(y), summed from per-action features: the
action kind, exact/overlap token match between the question and the
column or value the action touches, a related-column indicator (some
question token occurs in the column's cells), and a whole-program recall
feature measuring how much of the question's table vocabulary the program
leaves uncovered. Linearity makes the gradient of the score exactly the
feature vector, which the update identities in tests lean on.
"""
from __future__ import annotations

import math

from .programs import KEYWORD_WORDS, ProgramState, program_surface_tokens
from .tables import Table
from .text import tokenize

# A FeatureVector is a plain dict feature_id -> value with no zero entries.
FeatureVector = dict

RECALL_FEATURE = "recall"


def question_table_tokens(question_tokens, table: Table) -> frozenset[str]:
    """Question tokens that also occur somewhere in the table."""
    return frozenset(question_tokens) & table.all_tokens


_NEAR_WINDOW = 2
_ATTACH_DISTANCE = 3


def action_features(action, question_tokens, table: Table) -> FeatureVector:
    """Per-action features; everything in featurize except recall.

    Besides kind indicators and entity match/overlap/related indicators,
    each action gets question-word conjunctions (kind x token, bag level)
    and proximity features anchored at the question position of the
    action's value (or its column, for value-less conditions): an
    attachment indicator when value and column tokens sit close together,
    and kind x nearby-token conjunctions. Proximity is what lets a linear
    model attach "more than 10" to the right column in a two-clause
    question."""
    # iteration over token sets is sorted so feature insertion order, and
    # with it float summation order, is identical across processes
    qset = frozenset(question_tokens)
    feats = {f"act={action.kind}": 1.0}
    for t in sorted(qset):
        feats[f"{action.kind}~{t}"] = 1.0
    col_positions: list[int] = []
    val_positions: list[int] = []
    if action.column is not None:
        ctoks = tokenize(table.column_names[action.column])
        if ctoks:
            inq = [t in qset for t in ctoks]
            if all(inq):
                feats[f"{action.kind}:col_exact"] = 1.0
            if any(inq):
                feats[f"{action.kind}:col_overlap"] = 1.0
            cset = set(ctoks)
            col_positions = [i for i, t in enumerate(question_tokens) if t in cset]
        if table.column_cell_tokens[action.column] & qset:
            feats[f"{action.kind}:col_related"] = 1.0
    if action.value is not None:
        vtoks = tokenize(action.value)
        if vtoks:
            inq = [t in qset for t in vtoks]
            if all(inq):
                feats[f"{action.kind}:val_exact"] = 1.0
            if any(inq):
                feats[f"{action.kind}:val_overlap"] = 1.0
            vset = set(vtoks)
            val_positions = [i for i, t in enumerate(question_tokens) if t in vset]
    if val_positions and col_positions and min(
            abs(i - j) for i in val_positions for j in col_positions) <= _ATTACH_DISTANCE:
        feats[f"{action.kind}:val_near_col"] = 1.0
    anchors = val_positions if action.value is not None else col_positions
    if anchors:
        near = set()
        for p in anchors:
            lo, hi = max(0, p - _NEAR_WINDOW), min(len(question_tokens), p + _NEAR_WINDOW + 1)
            near.update(i for i in range(lo, hi) if i != p)
        for i in sorted(near):
            feats[f"{action.kind}@{question_tokens[i]}"] = 1.0
    return feats


def featurize(state: ProgramState, question_tokens, table: Table) -> FeatureVector:
    question_tokens = tuple(question_tokens)
    feats: dict[str, float] = {}
    for a in state.actions:
        for fid, v in action_features(a, question_tokens, table).items():
            feats[fid] = feats.get(fid, 0.0) + v
    e1 = question_table_tokens(question_tokens, table)
    if e1:
        e2 = program_surface_tokens(state, table) - KEYWORD_WORDS
        uncovered = len(e1 - e2) / len(e1)
        if uncovered:
            feats[RECALL_FEATURE] = uncovered
    return feats


class ParamVector:
    """Sparse weight vector; the only mutable learning state."""

    def __init__(self, weights: dict[str, float] | None = None):
        self.weights: dict[str, float] = dict(weights) if weights else {}

    def get(self, fid: str) -> float:
        return self.weights.get(fid, 0.0)

    def dot(self, feats: FeatureVector) -> float:
        w = self.weights
        return sum(w.get(f, 0.0) * v for f, v in feats.items())

    def add_scaled(self, delta: FeatureVector, scale: float) -> None:
        """theta += scale * delta; refuses to store non-finite weights."""
        w = self.weights
        for f, v in delta.items():
            nv = w.get(f, 0.0) + scale * v
            if not math.isfinite(nv):
                raise ValueError(f"non-finite weight for feature {f!r}: {nv}")
            if nv == 0.0 and f not in w:
                continue
            w[f] = nv

    def copy(self) -> "ParamVector":
        return ParamVector(self.weights)

    def __len__(self) -> int:
        return len(self.weights)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for fid in sorted(self.weights):
                f.write(f"{fid}\t{self.weights[fid]!r}\n")

    @classmethod
    def load(cls, path: str) -> "ParamVector":
        weights = {}
        with open(path, encoding="utf-8") as f:
            for i, line in enumerate(f):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}: line {i + 1}: expected 'feature<TAB>weight'")
                try:
                    weights[parts[0]] = float(parts[1])
                except ValueError:
                    raise ValueError(f"{path}: line {i + 1}: bad weight {parts[1]!r}")
        return cls(weights)


def score(state: ProgramState, question_tokens, table: Table, theta: ParamVector) -> float:
    return theta.dot(featurize(state, question_tokens, table))


def score_gradient(state: ProgramState, question_tokens, table: Table,
                   theta: ParamVector) -> FeatureVector:
    # linear model: the gradient is the feature vector, independent of theta
    return featurize(state, question_tokens, table)


def softmax(values) -> list[float]:
    m = max(values)
    exps = [math.exp(v - m) for v in values]
    z = sum(exps)
    return [e / z for e in exps]


def boltzmann(programs, question_tokens, table: Table, theta: ParamVector) -> list[float]:
    """p(y) proportional to exp(score(y)), normalized over the given programs."""
    if not programs:
        raise ValueError("boltzmann needs at least one program")
    return softmax([score(p, question_tokens, table, theta) for p in programs])
