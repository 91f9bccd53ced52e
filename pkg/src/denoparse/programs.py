"""The SQL-like program language: actions, partial-program states, legality,
serialization, and deterministic execution.

A program is a head (SELECT column, FOLLOWUP, or FPCELL column) followed by
zero or more filter clauses and a terminating Stop. Each clause is either a
single condition or two conditions joined by OR; clauses AND together, OR
unions the row sets of its two flanking conditions. FOLLOWUP restricts the
starting row set to the rows of the previous answer; FPCELL reads another
column of a single-cell previous answer. Partial states execute all of
their completed clauses, which is what gives incomplete programs a reward
during search.
"""
from __future__ import annotations

import random
import re
from dataclasses import dataclass
from functools import lru_cache

from .tables import EMPTY_ANSWER, AnswerSet, Table
from .text import normalize_answer, parse_number, tokenize

# Action kinds.
SELECT = "SELECT"
FOLLOWUP = "FOLLOWUP"
FPCELL = "FPCELL"
EQ = "EQ"
NEQ = "NEQ"
GT = "GT"
LT = "LT"
MAX = "MAX"
MIN = "MIN"
OR = "OR"
STOP = "STOP"

HEAD_KINDS = (SELECT, FOLLOWUP, FPCELL)
CONDITION_KINDS = (EQ, NEQ, GT, LT, MAX, MIN)
COMPARISON_KINDS = (GT, LT)

_OP_TOKEN = {EQ: "=", NEQ: "!=", GT: ">", LT: "<", MAX: "MAX", MIN: "MIN"}
_TOKEN_OP = {v: k for k, v in _OP_TOKEN.items()}

# Tokens with grammatical meaning in a serialized program. Operators never
# survive tokenization, so the lowercase word forms are what the match and
# recall features must exclude.
KEYWORD_TOKENS = frozenset(
    {"SELECT", "WHERE", "OR", "FOLLOWUP", "FPCELL", "MAX", "MIN", "=", "!=", ">", "<"})
KEYWORD_WORDS = frozenset(t.lower() for t in KEYWORD_TOKENS if t.isalpha())


class IllegalActionError(Exception):
    pass


class ExecutionError(Exception):
    pass


class ParseError(Exception):
    pass


class EnumerationCapError(Exception):
    def __init__(self, count: int, cap: int):
        super().__init__(f"program enumeration exceeded cap {cap}: {count} programs reached")
        self.count = count


@dataclass(frozen=True)
class Action:
    kind: str
    column: int | None = None
    value: str | None = None


@dataclass(frozen=True)
class ProgramState:
    actions: tuple[Action, ...] = ()
    complete: bool = False

    def child(self, action: Action) -> "ProgramState":
        return ProgramState(self.actions + (action,), action.kind == STOP)


EMPTY_STATE = ProgramState()

# Program is just a completed ProgramState; the alias marks intent in
# signatures that require completeness.
Program = ProgramState


def _phase(state: ProgramState):
    """(phase, cond_count, can_or) for a non-complete state."""
    actions = state.actions
    if not actions:
        return "empty", 0, False
    cond_count = sum(1 for a in actions if a.kind in CONDITION_KINDS)
    last = actions[-1].kind
    if last == OR:
        return "or", cond_count, False
    if last in CONDITION_KINDS:
        can_or = len(actions) < 2 or actions[-2].kind != OR
        return "cond", cond_count, can_or
    if last == SELECT:
        return "select_head", 0, False
    if last == FOLLOWUP:
        return "followup_head", 0, False
    return "fpcell_head", 0, False


@lru_cache(maxsize=128)
def condition_actions(table: Table, question_numbers: tuple[str, ...] = ()) -> tuple[Action, ...]:
    """Every condition the table supports, in a deterministic order.

    Equality conditions draw values from the target column's cells; the
    numeric comparisons additionally accept numbers mentioned in the
    question. Comparisons and extrema need at least one numeric cell.
    """
    out: list[Action] = []
    for col in range(table.col_count):
        values = table.distinct_values(col)
        out.extend(Action(EQ, col, v) for v in values)
        out.extend(Action(NEQ, col, v) for v in values)
        if table.has_numeric_cells(col):
            nums = {raw: parse_number(raw) for raw in table.distinct_numeric_values(col)}
            for q in question_numbers:
                if q not in nums:
                    nums[q] = parse_number(q)
            ordered = sorted(nums, key=lambda r: (nums[r], r))
            out.extend(Action(GT, col, v) for v in ordered)
            out.extend(Action(LT, col, v) for v in ordered)
            out.append(Action(MAX, col))
            out.append(Action(MIN, col))
    return tuple(out)


def head_actions(table: Table, position: int) -> tuple[Action, ...]:
    heads = [Action(SELECT, c) for c in range(table.col_count)]
    if position >= 1:
        heads.append(Action(FOLLOWUP))
        heads.extend(Action(FPCELL, c) for c in range(table.col_count))
    return tuple(heads)


def legal_actions(state: ProgramState, table: Table, position: int,
                  max_conditions: int | None = None,
                  question_numbers: tuple[str, ...] = ()) -> list[Action]:
    """Exactly the actions whose application keeps the state syntactically
    valid. FOLLOWUP and FPCELL exist only at position >= 1; an empty program
    cannot Stop; FOLLOWUP needs at least one condition before Stop; a
    condition already in the program cannot repeat."""
    if state.complete:
        return []
    phase, cond_count, can_or = _phase(state)
    if phase == "empty":
        return list(head_actions(table, position))
    budget = max_conditions is None or cond_count < max_conditions
    if budget:
        used = {a for a in state.actions if a.kind in CONDITION_KINDS}
        conds = [a for a in condition_actions(table, tuple(question_numbers))
                 if a not in used]
    else:
        conds = []
    if phase == "select_head":
        return list(conds) + [Action(STOP)]
    if phase == "followup_head":
        return list(conds)
    if phase == "fpcell_head":
        return [Action(STOP)]
    if phase == "cond":
        out = list(conds)
        if can_or and budget:
            out.append(Action(OR))
        out.append(Action(STOP))
        return out
    # phase == "or": the second arm of the disjunction is mandatory
    return list(conds)


def apply_action(state: ProgramState, action: Action, table: Table | None = None,
                 position: int = 0, max_conditions: int | None = None,
                 question_numbers: tuple[str, ...] = (), validate: bool = True) -> ProgramState:
    if validate:
        if table is None:
            raise ValueError("validation requires the table")
        if action not in legal_actions(state, table, position, max_conditions, question_numbers):
            raise IllegalActionError(f"action {action} is illegal for state {state.actions}")
    return state.child(action)


# --- serialization ------------------------------------------------------

_NEEDS_QUOTE = re.compile(r'[\s"\\]')


def _quote(token: str) -> str:
    if token == "" or token in KEYWORD_TOKENS or _NEEDS_QUOTE.search(token):
        return '"' + token.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return token


def action_tokens(action: Action, table: Table, after_or: bool = False) -> list[str]:
    k = action.kind
    if k == SELECT:
        return ["SELECT", _quote(table.column_names[action.column])]
    if k == FOLLOWUP:
        return ["FOLLOWUP"]
    if k == FPCELL:
        return ["FPCELL", _quote(table.column_names[action.column])]
    if k == OR:
        return ["OR"]
    if k == STOP:
        return []
    parts = [] if after_or else ["WHERE"]
    parts.append(_quote(table.column_names[action.column]))
    parts.append(_OP_TOKEN[k])
    if k not in (MAX, MIN):
        parts.append(_quote(action.value))
    return parts


def serialize(state: ProgramState, table: Table) -> str:
    parts: list[str] = []
    prev = None
    for a in state.actions:
        parts.extend(action_tokens(a, table, after_or=(prev == OR)))
        prev = a.kind
    s = " ".join(parts)
    if not state.complete:
        return (s + " ...") if s else "..."
    return s


def _scan(line: str) -> list[tuple[str, bool]]:
    """Split a serialized program into (token, was_quoted) pairs."""
    out = []
    i, n = 0, len(line)
    while i < n:
        if line[i].isspace():
            i += 1
            continue
        if line[i] == '"':
            i += 1
            buf = []
            while i < n and line[i] != '"':
                if line[i] == "\\" and i + 1 < n:
                    buf.append(line[i + 1])
                    i += 2
                else:
                    buf.append(line[i])
                    i += 1
            if i >= n:
                raise ParseError(f"unterminated quote in {line!r}")
            i += 1
            out.append(("".join(buf), True))
        else:
            j = i
            while j < n and not line[j].isspace():
                j += 1
            out.append((line[i:j], False))
            i = j
    return out


def parse(line: str, table: Table) -> ProgramState:
    """Parse one canonical serialization into a complete program."""
    toks = _scan(line)
    col_index = {name: i for i, name in enumerate(table.column_names)}

    def column_at(pos: int) -> int:
        if pos >= len(toks):
            raise ParseError(f"expected column name at end of {line!r}")
        name = toks[pos][0]
        if name not in col_index:
            raise ParseError(f"unknown column {name!r} in {line!r}")
        return col_index[name]

    if not toks:
        raise ParseError("empty program")
    actions: list[Action] = []
    head, head_quoted = toks[0]
    if head_quoted or head not in (SELECT, FOLLOWUP, FPCELL):
        raise ParseError(f"expected a program head, got {head!r}")
    i = 1
    if head == SELECT:
        actions.append(Action(SELECT, column_at(i)))
        i += 1
    elif head == FPCELL:
        actions.append(Action(FPCELL, column_at(i)))
        i += 1
        if i != len(toks):
            raise ParseError(f"trailing tokens after FPCELL in {line!r}")
    else:
        actions.append(Action(FOLLOWUP))

    def parse_condition(pos: int) -> tuple[Action, int]:
        col = column_at(pos)
        pos += 1
        if pos >= len(toks):
            raise ParseError(f"missing operator in {line!r}")
        op, op_quoted = toks[pos]
        if op_quoted or op not in _TOKEN_OP:
            raise ParseError(f"bad operator {op!r} in {line!r}")
        kind = _TOKEN_OP[op]
        pos += 1
        if kind in (MAX, MIN):
            return Action(kind, col), pos
        if pos >= len(toks):
            raise ParseError(f"missing value in {line!r}")
        return Action(kind, col, toks[pos][0]), pos + 1

    if head != FPCELL:
        while i < len(toks):
            kw, kw_quoted = toks[i]
            if kw_quoted or kw != "WHERE":
                raise ParseError(f"expected WHERE, got {kw!r} in {line!r}")
            cond, i = parse_condition(i + 1)
            actions.append(cond)
            if i < len(toks) and toks[i] == ("OR", False):
                actions.append(Action(OR))
                cond, i = parse_condition(i + 1)
                actions.append(cond)
        if head == FOLLOWUP and len(actions) == 1:
            raise ParseError("FOLLOWUP requires at least one condition")
    actions.append(Action(STOP))
    return ProgramState(tuple(actions), True)


# --- execution ----------------------------------------------------------

def match_rows(action: Action, table: Table, rows: frozenset[int]) -> frozenset[int]:
    """Rows of `rows` satisfying one condition. Extrema are taken within
    `rows`, so a MAX after another filter is the maximum of the survivors."""
    col = action.column
    kind = action.kind
    norm = table.normalized_column_values[col]
    if kind == EQ:
        v = normalize_answer(action.value)
        return frozenset(r for r in rows if norm[r] == v)
    if kind == NEQ:
        v = normalize_answer(action.value)
        return frozenset(r for r in rows if norm[r] != v)
    if kind in (GT, LT):
        x = parse_number(action.value)
        if x is None:
            return frozenset()
        if kind == GT:
            return frozenset(r for r in rows
                             if table.cells[r][col].numeric is not None
                             and table.cells[r][col].numeric > x)
        return frozenset(r for r in rows
                         if table.cells[r][col].numeric is not None
                         and table.cells[r][col].numeric < x)
    # MAX / MIN
    numeric = [(table.cells[r][col].numeric, r) for r in rows
               if table.cells[r][col].numeric is not None]
    if not numeric:
        return frozenset()
    pick = max(v for v, _ in numeric) if kind == MAX else min(v for v, _ in numeric)
    return frozenset(r for v, r in numeric if v == pick)


def execute(state: ProgramState, table: Table, prev_answer: AnswerSet | None = None) -> AnswerSet:
    """Deterministic execution; partial states run their completed clauses."""
    all_rows = frozenset(range(table.row_count))
    head = None
    base = rows = all_rows
    or_first: frozenset[int] | None = None
    for a in state.actions:
        k = a.kind
        if k == SELECT:
            head = ("select", a.column)
            base = rows = all_rows
        elif k == FOLLOWUP:
            if prev_answer is None:
                raise ExecutionError("FOLLOWUP requires the previous answer")
            coords = frozenset((r, c) for r, c in (prev_answer.coords or frozenset())
                               if r < table.row_count and c < table.col_count)
            head = ("followup", coords)
            base = rows = frozenset(r for r, _ in coords)
        elif k == FPCELL:
            if prev_answer is None:
                raise ExecutionError("FPCELL requires the previous answer")
            coords = frozenset((r, c) for r, c in (prev_answer.coords or frozenset())
                               if r < table.row_count and c < table.col_count)
            picked = frozenset({next(iter(coords))[0]}) if len(coords) == 1 else frozenset()
            head = ("fpcell", a.column)
            base = rows = picked
        elif k == OR:
            or_first = rows
        elif k in CONDITION_KINDS:
            if or_first is not None:
                rows = or_first | match_rows(a, table, base)
                or_first = None
            else:
                base = rows
                rows = match_rows(a, table, base)
    surviving = base if or_first is not None else rows
    if head is None:
        return EMPTY_ANSWER
    return _project(head, surviving, table)


def _project(head, rows: frozenset[int], table: Table) -> AnswerSet:
    kind = head[0]
    norm = table.normalized_column_values
    if kind == "select" or kind == "fpcell":
        col = head[1]
        coords = frozenset((r, col) for r in rows)
    else:
        coords = frozenset((r, c) for r, c in head[1]
                           if r in rows and r < table.row_count and c < table.col_count)
    values = frozenset(norm[c][r] for r, c in coords)
    return AnswerSet(values, coords)


# --- enumeration and spuriousness ---------------------------------------

def enumerate_programs(table: Table, position: int, max_conditions: int,
                       question_numbers: tuple[str, ...] = (),
                       cap: int = 200_000) -> list[Program]:
    """Every syntactically valid complete program with at most
    `max_conditions` conditions, each exactly once."""
    qn = tuple(question_numbers)
    results: list[Program] = []
    stack = [EMPTY_STATE]
    while stack:
        st = stack.pop()
        for a in legal_actions(st, table, position, max_conditions, qn):
            child = st.child(a)
            if child.complete:
                results.append(child)
                if len(results) > cap:
                    raise EnumerationCapError(len(results), cap)
            else:
                stack.append(child)
    results.reverse()
    return results


def _positional_columns(table: Table) -> list[tuple[int, int]]:
    """Columns whose cells enumerate row positions, as (col, first_value)."""
    out = []
    n = table.row_count
    for c in range(table.col_count):
        nums = [table.cells[r][c].numeric for r in range(n)]
        if all(v is not None for v in nums):
            for base in (0, 1):
                if nums == [float(base + i) for i in range(n)]:
                    out.append((c, base))
                    break
    return out


def permute_rows(table: Table, perm: list[int]) -> Table:
    """Reorder rows by `perm` (new row i = old row perm[i]). Columns that
    enumerate row positions are renumbered so they still do."""
    from .tables import Cell
    positional = dict(_positional_columns(table))
    rows = []
    for i, old in enumerate(perm):
        row = list(table.cells[old])
        for c, base in positional.items():
            row[c] = Cell.of(str(base + i))
        rows.append(tuple(row))
    return Table(table.id, table.column_names, tuple(rows))


def remap_answer(answer: AnswerSet | None, perm: list[int]) -> AnswerSet | None:
    if answer is None or answer.coords is None:
        return answer
    inv = {old: new for new, old in enumerate(perm)}
    coords = frozenset((inv[r], c) for r, c in answer.coords if r in inv)
    return AnswerSet(answer.values, coords)


def is_spurious(program: Program, table: Table, gold: AnswerSet,
                trials: int = 10, rng_seed: int = 0,
                prev_answer: AnswerSet | None = None) -> bool:
    """True when some answer-preserving row permutation (always trying the
    swap of the first two rows) changes the program's answer."""
    n = table.row_count
    if n < 2:
        return False
    base = execute(program, table, prev_answer).values
    swap = list(range(n))
    swap[0], swap[1] = swap[1], swap[0]
    perms = [swap]
    rng = random.Random(rng_seed)
    for _ in range(max(0, trials - 1)):
        p = list(range(n))
        rng.shuffle(p)
        perms.append(p)
    identity = list(range(n))
    for perm in perms:
        if perm == identity:
            continue
        permuted = permute_rows(table, perm)
        cell_values = {normalize_answer(c.raw) for row in permuted.cells for c in row}
        if not gold.values <= cell_values:
            continue
        answer = execute(program, permuted, remap_answer(prev_answer, perm)).values
        if answer != base:
            return True
    return False


# --- token views used by the scorer and the critique ---------------------

def action_surface_tokens(action: Action, table: Table) -> frozenset[str]:
    """Non-keyword tokens an action contributes to the serialized program."""
    toks: set[str] = set()
    if action.column is not None:
        toks.update(tokenize(table.column_names[action.column]))
    if action.value is not None:
        toks.update(tokenize(action.value))
    return frozenset(toks)


def action_keywords(action: Action) -> frozenset[str]:
    k = action.kind
    if k == SELECT:
        return frozenset({"SELECT"})
    if k == FOLLOWUP:
        return frozenset({"FOLLOWUP"})
    if k == FPCELL:
        return frozenset({"FPCELL"})
    if k == OR:
        return frozenset({"OR"})
    if k == STOP:
        return frozenset()
    return frozenset({"WHERE", _OP_TOKEN[k]})


def program_surface_tokens(state: ProgramState, table: Table) -> frozenset[str]:
    out: set[str] = set()
    for a in state.actions:
        out |= action_surface_tokens(a, table)
    return frozenset(out)


def program_keywords(state: ProgramState) -> frozenset[str]:
    out: set[str] = set()
    for a in state.actions:
        out |= action_keywords(a)
    return frozenset(out)
