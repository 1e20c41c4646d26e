import pytest

from annosql.meta import (
    ColumnMeta,
    EmbeddingStore,
    PhraseLexicon,
    PhraseTemplate,
    Table,
    TableSchema,
    build_value_stats,
)


def make_schema(table_id, cols):
    return TableSchema(table_id, tuple(ColumnMeta(n, t, i) for i, (n, t) in enumerate(cols)))


@pytest.fixture
def film_awards():
    """Film-nomination table whose question paraphrases two column names."""
    schema = make_schema(
        "film_awards",
        [
            ("Nomination", "text"),
            ("Actor", "text"),
            ("Film_Name", "text"),
            ("Director", "text"),
            ("Nomination Date", "text"),
        ],
    )
    table = Table(
        schema,
        (
            (
                "Best Actor in a Leading Role",
                "Piotr Adamczyk",
                "Chopin: Desire for Love",
                "Jerzy Antczak",
                "2003 August",
            ),
            (
                "Best Actor in a Supporting Role",
                "Levan Uchaneishvili",
                "27 Stolen Kisses",
                "Nana Djordjadze",
                "2003 August",
            ),
        ),
    )
    lexicon = PhraseLexicon({"actor": (PhraseTemplate(("star", "in")),)})
    question = "Which film directed by Jerzy Antczak did Piotr Adamczyk star in ?"
    return schema, table, build_value_stats(table), lexicon, question


@pytest.fixture
def townlands():
    """Townlands table whose question never names the filtered column."""
    schema = make_schema(
        "townlands",
        [
            ("County", "text"),
            ("English_Name", "text"),
            ("Irish_Name", "text"),
            ("Population", "real"),
            ("Irish_Speakers", "text"),
        ],
    )
    table = Table(
        schema,
        (
            ("Mayo", "Carrowteige", "Ceathru Thaidhg", "356", "64%"),
            ("Galway", "Aran Islands", "Oileain Arann", "1225", "79%"),
        ),
    )
    lexicon = PhraseLexicon(
        {
            "population": (
                PhraseTemplate(("how", "many", "people", "live", "in", None)),
                PhraseTemplate(("population", "of", None)),
            )
        }
    )
    question = "How many people live in Mayo which has the English name Carrowteige ?"
    return schema, table, build_value_stats(table), lexicon, question


@pytest.fixture
def actress_emb():
    """Toy vectors making actress~actor close in embedding space only."""
    return EmbeddingStore.from_dict(
        {
            "actor": [1.0, 0.0],
            "actress": [0.9, 0.1],
            "year": [0.0, 1.0],
        }
    )


def levenshtein_oracle(a, b):
    """Independent recursive-with-memo edit distance for cross-checking."""
    from functools import lru_cache

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            d(i - 1, j) + 1,
            d(i, j - 1) + 1,
            d(i - 1, j - 1) + (a[i - 1] != b[j - 1]),
        )

    return d(len(a), len(b))


def matching_oracle(adjacency, n_right):
    """Exhaustive maximum-matching cardinality via bitmask recursion."""
    from functools import lru_cache

    @lru_cache(maxsize=None)
    def best(i, used):
        if i == len(adjacency):
            return 0
        out = best(i + 1, used)
        for r in adjacency[i]:
            bit = 1 << r
            if not used & bit:
                out = max(out, 1 + best(i + 1, used | bit))
        return out

    return best(0, 0)
