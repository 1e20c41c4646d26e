"""Candidate mention detection: column mentions via closeness coverage and
phrase templates, value mentions via cell-value affinity.

All functions are pure over immutable inputs; detection over a corpus can
run in parallel per question.
"""

from dataclasses import dataclass

from .meta import cosine, value_affinity
from .text import is_content_token

COLUMN, VALUE = "column", "value"
COVERAGE, LEXICON, EXACT_VALUE, AFFINITY_VALUE = (
    "coverage",
    "lexicon",
    "exact_value",
    "affinity_value",
)


@dataclass(frozen=True, order=True)
class Span:
    """Half-open token interval [start, end) over the question."""

    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span [{self.start}, {self.end})")

    def __len__(self):
        return self.end - self.start

    def overlaps(self, other):
        return self.start < other.end and other.start < self.end

    def contains(self, other):
        return self.start <= other.start and other.end <= self.end


@dataclass(frozen=True)
class CandidateMention:
    span: Span
    kind: str
    column: object  # ColumnMeta; for VALUE, the column the value likely belongs to
    score: float
    source: str

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.kind == COLUMN and self.source not in (COVERAGE, LEXICON):
            raise ValueError(f"column mention with source {self.source!r}")


@dataclass(frozen=True)
class Thresholds:
    """Detection knobs; tau_* follow the training setup, the rest are ours."""

    tau_ed: float = 0.5
    tau_sim: float = 0.15
    max_value_span: int = 6
    theta_val: float = 0.6


DEFAULT_THRESHOLDS = Thresholds()


def edit_closeness(x, y):
    """Levenshtein distance over the longer length, in [0, 1]."""
    if not x or not y:
        raise ValueError("edit_closeness requires non-empty strings")
    if x == y:
        return 0.0
    prev = list(range(len(y) + 1))
    for i, cx in enumerate(x, start=1):
        cur = [i]
        for j, cy in enumerate(y, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (cx != cy)))
        prev = cur
    return prev[-1] / max(len(x), len(y))


def embedding_closeness(x, y, emb):
    """0.5 * (1 - cosine) of the two word vectors, or None if either is missing."""
    if emb is None:
        return None
    vx, vy = emb.get(x), emb.get(y)
    if vx is None or vy is None:
        return None
    return 0.5 * (1.0 - cosine(vx, vy))


def words_close(x, y, emb, tau_ed, tau_sim):
    """Close iff either metric is under its threshold."""
    if edit_closeness(x, y) < tau_ed:
        return True
    sem = embedding_closeness(x, y, emb)
    return sem is not None and sem < tau_sim


def _close_rows(qtokens, column, emb, thresholds):
    """Per question position: the set of column-word indices it is close to.

    Stop words and punctuation never form pairs, on either side.
    """
    ctoks = [t for t in column.tokens if is_content_token(t)]
    rows = []
    for tok in qtokens:
        if not is_content_token(tok):
            rows.append(frozenset())
            continue
        rows.append(
            frozenset(
                j
                for j, c in enumerate(ctoks)
                if words_close(tok, c, emb, thresholds.tau_ed, thresholds.tau_sim)
            )
        )
    return rows


def coverage_count(span, qtokens, column, emb, thresholds=DEFAULT_THRESHOLDS):
    """Number of close pairs between the span's tokens and the column name's."""
    rows = _close_rows(qtokens, column, emb, thresholds)
    return sum(len(r) for r in rows[span.start : span.end])


def covered_words(span, qtokens, column, emb, thresholds=DEFAULT_THRESHOLDS):
    """Number of distinct column-name words the span covers."""
    rows = _close_rows(qtokens, column, emb, thresholds)
    return len(frozenset().union(*rows[span.start : span.end]))


def _coverage_mention(qtokens, column, emb, thresholds):
    """The best span covering the column effectively and efficiently.

    A span qualifies when (1) no containing span covers more column words
    and (2) every contained span covers fewer; among qualifying spans the
    shortest wins, then the one with more close pairs, then the earliest.
    Word coverage (not raw pair count) drives maximality: "play" pairing
    with column "player" must not stretch a mention that already covers
    the word.
    """
    rows = _close_rows(qtokens, column, emb, thresholds)
    total = frozenset().union(*rows) if rows else frozenset()
    if not total:
        return None
    n = len(rows)
    candidates = []
    for a in range(n):
        if not rows[a]:
            continue
        covered = set()
        end = None
        for b in range(a, n):
            covered |= rows[b]
            if covered == total:
                end = b + 1
                break
        if end is None:
            break  # later starts have even less material
        trimmed = frozenset().union(*rows[a + 1 : end]) if end > a + 1 else frozenset()
        if trimmed != total:  # the first token must be load-bearing
            pairs = sum(len(r) for r in rows[a:end])
            candidates.append((end - a, -pairs, a, end))
    if not candidates:
        return None
    _length, neg_pairs, a, end = min(candidates)
    score = min(1.0, -neg_pairs / len(column.tokens))
    return CandidateMention(Span(a, end), COLUMN, column, score, COVERAGE)


def _match_template_at(template, qtokens, start):
    """Try to match `template` at token `start`.

    Returns (match_end, literal_span) or None. The wildcard slot matches a
    run of 1-4 tokens, shortest first; the literal span omits an edge slot
    so the slot's tokens stay available as a value mention.
    """
    toks = template.tokens
    slot = template.slot
    if slot is None:
        end = start + len(toks)
        if end <= len(qtokens) and toks == tuple(qtokens[start:end]):
            return end, Span(start, end)
        return None
    before, after = toks[:slot], toks[slot + 1 :]
    if tuple(qtokens[start : start + len(before)]) != before:
        return None
    gap_start = start + len(before)
    for gap in range(1, 5):
        rest = gap_start + gap
        end = rest + len(after)
        if end > len(qtokens):
            break
        if tuple(qtokens[rest:end]) == after:
            if not before:  # leading slot: literal part follows the gap
                return end, Span(rest, end)
            if not after:  # trailing slot: literal part precedes the gap
                return end, Span(start, gap_start)
            return end, Span(start, end)  # interior slot: keep the whole match
    return None


def _lexicon_mentions(qtokens, column, lexicon):
    out = []
    seen = set()
    for template in lexicon.templates_for(column):
        pos = 0
        while pos < len(qtokens):
            hit = _match_template_at(template, qtokens, pos)
            if hit is None:
                pos += 1
                continue
            end, span = hit
            if span not in seen:
                seen.add(span)
                out.append(CandidateMention(span, COLUMN, column, 1.0, LEXICON))
            pos = end
    return out


def detect_column_mentions(qtokens, schema, lexicon, emb, thresholds=DEFAULT_THRESHOLDS):
    """Candidate column mentions: maximal coverage spans plus template hits.

    When a coverage span overlaps a template hit for the same column, the
    template wins; curated phrases are higher precision.
    """
    mentions = []
    for column in schema.columns:
        lex = _lexicon_mentions(qtokens, column, lexicon) if lexicon else []
        cov = _coverage_mention(qtokens, column, emb, thresholds)
        if cov is not None and not any(cov.span.overlaps(m.span) for m in lex):
            lex.append(cov)
        mentions.extend(sorted(lex, key=lambda m: (m.span.start, m.span.end)))
    return mentions


def detect_value_mentions(
    qtokens, schema, stats, emb, thresholds=DEFAULT_THRESHOLDS, column_mentions=()
):
    """Candidate value mentions for every column whose affinity clears the bar.

    Spans fully inside an already-accepted column mention are skipped; for
    one column, only maximal-length spans survive among overlapping hits.
    A span may yield mentions for several columns; resolution arbitrates.
    """
    n = len(qtokens)
    col_spans = [m.span for m in column_mentions]
    per_column = {c.position: [] for c in schema.columns}
    for start in range(n):
        for end in range(start + 1, min(start + thresholds.max_value_span, n) + 1):
            span = Span(start, end)
            if any(cs.contains(span) for cs in col_spans):
                continue
            term = qtokens[start:end]
            for column in schema.columns:
                score = value_affinity(term, column, stats, emb)
                if score > thresholds.theta_val:
                    source = EXACT_VALUE if score >= 1.0 else AFFINITY_VALUE
                    per_column[column.position].append(
                        CandidateMention(span, VALUE, column, score, source)
                    )
    out = []
    for position in sorted(per_column):
        kept = []
        for m in sorted(per_column[position], key=lambda m: (-len(m.span), -m.score, m.span.start)):
            if not any(m.span.overlaps(k.span) for k in kept):
                kept.append(m)
        out.extend(kept)
    out.sort(key=lambda m: (m.span.start, m.span.end, m.column.position))
    return out
