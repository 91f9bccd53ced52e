import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from denoparse.tables import AnswerSet, Cell, Example, Table


def make_table(table_id, columns, rows):
    return Table(table_id, tuple(columns),
                 tuple(tuple(Cell.of(v) for v in row) for row in rows))


@pytest.fixture
def squad_table():
    """Three-row roster with a text name, text nation and numeric points."""
    return make_table("squad", ("Name", "Nation", "Points"), [
        ("Karen Andrew", "England", "21"),
        ("Jen Kish", "Canada", "12"),
        ("Sara Marchetti", "Italy", "8"),
    ])


@pytest.fixture
def club_table():
    """Toy standings with Losses 25/21/10."""
    return make_table("clubs", ("Club", "Losses"), [
        ("Harlequins", "25"),
        ("Saracens", "21"),
        ("Wasps", "10"),
    ])


@pytest.fixture
def indexed_table():
    """Roster with an explicit position-enumerating Index column."""
    return make_table("indexed", ("Index", "Name", "Nation", "Points"), [
        ("1", "Karen Andrew", "England", "21"),
        ("2", "Jen Kish", "Canada", "12"),
        ("3", "Sara Marchetti", "Italy", "8"),
    ])


def example_for(table, question, gold_values, coords=None, position=0,
                sequence_id="s0/0"):
    return Example(sequence_id, position, question, table.id,
                   AnswerSet.from_texts(gold_values, coords))
