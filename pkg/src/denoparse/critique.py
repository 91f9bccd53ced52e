"""Critique policy: a cheap prior over programs built from surface-form
match and lexicon co-occurrence, used to shape the search away from
programs that merely happen to produce the right answer.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .programs import (KEYWORD_TOKENS, KEYWORD_WORDS, ProgramState, program_keywords,
                       program_surface_tokens)
from .scorer import softmax
from .tables import Table


class ShapingError(ValueError):
    pass


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class Lexicon:
    """Pairs (question token, program keyword), e.g. ("most", "MAX")."""
    pairs: tuple[tuple[str, str], ...]

    def __post_init__(self):
        seen = set()
        for tok, kw in self.pairs:
            if kw not in KEYWORD_TOKENS:
                raise LexiconError(f"unknown program keyword {kw!r} for token {tok!r}")
            if (tok, kw) in seen:
                raise LexiconError(f"duplicate lexicon pair ({tok!r}, {kw!r})")
            seen.add((tok, kw))

    def __len__(self) -> int:
        return len(self.pairs)


EMPTY_LEXICON = Lexicon(())


def load_lexicon(path: str) -> Lexicon:
    """token<TAB>KEYWORD per line; # starts a comment."""
    pairs = []
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise LexiconError(f"{path}: line {i + 1}: expected 'token<TAB>KEYWORD'")
            pairs.append((parts[0].strip().lower(), parts[1].strip()))
    return Lexicon(tuple(pairs))


def default_lexicon() -> Lexicon:
    """The packaged lexicon: generic superlatives, comparators and negators."""
    text = resources.files("denoparse").joinpath("data/lexicon.txt").read_text("utf-8")
    pairs = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tok, kw = line.split("\t")
            pairs.append((tok.strip().lower(), kw.strip()))
    return Lexicon(tuple(pairs))


def match_score(question_tokens, program: ProgramState, table: Table) -> float:
    """Fraction of the program's distinct non-keyword tokens present in the
    question; 0 for programs with no non-keyword tokens."""
    toks = program_surface_tokens(program, table) - KEYWORD_WORDS
    if not toks:
        return 0.0
    qset = set(question_tokens)
    return sum(1 for t in toks if t in qset) / len(toks)


def co_occur_score(question_tokens, program: ProgramState, lexicon: Lexicon) -> int:
    """Number of lexicon pairs whose token is in the question and whose
    keyword is in the program."""
    qset = set(question_tokens)
    kws = program_keywords(program)
    return sum(1 for tok, kw in lexicon.pairs if tok in qset and kw in kws)


def critique_score(question_tokens, program: ProgramState, table: Table,
                   lexicon: Lexicon) -> float:
    return match_score(question_tokens, program, table) + co_occur_score(
        question_tokens, program, lexicon)


def critique_policy(programs, question_tokens, table: Table, lexicon: Lexicon,
                    eta: float) -> list[float]:
    """Softmax over eta * critique_score; eta = 0 gives the uniform prior."""
    if not programs:
        raise ValueError("critique_policy needs at least one program")
    return softmax([eta * critique_score(question_tokens, p, table, lexicon)
                    for p in programs])


def shape(behavior: list[float], critique: list[float]) -> list[float]:
    """Multiply a behavior policy by a critique policy and renormalize."""
    if len(behavior) != len(critique):
        raise ShapingError("behavior and critique must share a support")
    prod = [b * c for b, c in zip(behavior, critique)]
    z = sum(prod)
    if z <= 0.0:
        raise ShapingError("degenerate shaped policy: all products are zero")
    return [p / z for p in prod]
