"""Text normalization, tokenization, vocabulary, and numeric/date parsing.

All operations are pure. The vocabulary is immutable after construction and
lookups are total: every token maps to either a known id or a deterministic
hashed OOV bucket.
"""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .tables import ColumnType

PAD_ID = 0
EOS_ID = 1
SEP_ID = 2
QNODE_ID = 3
FIRST_WORD_ID = 4

KNOWN_WORD_CAPACITY = 5000
OOV_BUCKET_COUNT = 2000

FNV64_OFFSET = 14695981039346656037
FNV64_PRIME = 1099511628211

# '/', '.' and ',' survive normalization when flanked by digits so dates and
# decimal/grouped numbers stay intact ("02/09/2014", "3.5", "1,200").
_DIGIT_JOINERS = {"/", ".", ","}


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in ("P", "S")


def normalize_tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation/symbol characters, split on whitespace."""
    lowered = text.lower()
    chars: list[str] = []
    n = len(lowered)
    for i, ch in enumerate(lowered):
        if _is_punct(ch):
            if (
                ch in _DIGIT_JOINERS
                and i > 0
                and i + 1 < n
                and lowered[i - 1].isdigit()
                and lowered[i + 1].isdigit()
            ):
                chars.append(ch)
            else:
                chars.append(" ")
        else:
            chars.append(ch)
    return "".join(chars).split()


def normalize_join(text: str) -> str:
    """Normalized text as a single space-joined string (for edit distance)."""
    return " ".join(normalize_tokenize(text))


def fnv1a_64(token: str) -> int:
    """FNV-1a 64-bit hash; bit-exact and dependency-free for OOV bucketing."""
    h = FNV64_OFFSET
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * FNV64_PRIME) % (1 << 64)
    return h


@dataclass
class Vocabulary:
    """Frequency-ranked known words plus deterministic hashed OOV buckets.

    Reserved ids: 0=PAD, 1=EOS, 2=SEP, 3=QNODE. Known words occupy
    [4, 4+capacity), OOV buckets the following ``oov_bucket_count`` ids.
    """

    word_to_id: dict[str, int] = field(default_factory=dict)
    known_capacity: int = KNOWN_WORD_CAPACITY
    oov_bucket_count: int = OOV_BUCKET_COUNT

    @property
    def oov_base(self) -> int:
        return FIRST_WORD_ID + self.known_capacity

    @property
    def total_ids(self) -> int:
        """Size of the id space, i.e. the word embedding table row count."""
        return self.oov_base + self.oov_bucket_count

    def token_id(self, token: str) -> int:
        known = self.word_to_id.get(token)
        if known is not None:
            return known
        return self.oov_base + fnv1a_64(token) % self.oov_bucket_count

    def token_ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.token_id(t) for t in tokens]

    def words_in_id_order(self) -> list[str]:
        return [w for w, _ in sorted(self.word_to_id.items(), key=lambda kv: kv[1])]


def build_vocab(
    corpus: Iterable[str],
    known_capacity: int = KNOWN_WORD_CAPACITY,
    oov_bucket_count: int = OOV_BUCKET_COUNT,
) -> Vocabulary:
    """Rank word types by frequency (ties lexicographic) and assign dense ids.

    ``corpus`` is a stream of already-normalized tokens from the training
    split's questions and table text.
    """
    counts = Counter(corpus)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    word_to_id = {
        word: FIRST_WORD_ID + i for i, (word, _) in enumerate(ranked[:known_capacity])
    }
    return Vocabulary(
        word_to_id=word_to_id,
        known_capacity=known_capacity,
        oov_bucket_count=oov_bucket_count,
    )


def corpus_tokens(questions: Iterable[str], tables: Iterable) -> Iterable[str]:
    """Token stream over question and table text for vocabulary building."""
    for q in questions:
        yield from normalize_tokenize(q)
    for table in tables:
        for name in table.column_names:
            yield from normalize_tokenize(name)
        for row in table.cells:
            for cell in row:
                yield from normalize_tokenize(cell)


@dataclass(frozen=True)
class NumericValue:
    """A parsed number or (possibly partial) date."""

    kind: str  # ColumnType.NUMBER or ColumnType.DATE
    number: Optional[float] = None
    year: Optional[int] = None
    month: Optional[int] = None
    day: Optional[int] = None

    def sort_key(self) -> tuple:
        """Comparison key: dates order by (year, month or 1, day or 1)."""
        if self.kind == ColumnType.NUMBER:
            return (self.number,)
        return (self.year, self.month or 1, self.day or 1)

    def compare(self, other: "NumericValue") -> Optional[int]:
        """-1/0/+1 ordering of self vs other, or None when incomparable.

        Dates are equal only when their present-field patterns match too, so
        a bare year never equals a full date that merely pads to the same key.
        """
        if self.kind != other.kind:
            return None
        a, b = self.sort_key(), other.sort_key()
        if a < b:
            return -1
        if a > b:
            return 1
        if self.kind == ColumnType.DATE:
            same_presence = (self.month is None) == (other.month is None) and (
                self.day is None
            ) == (other.day is None)
            if not same_presence:
                return None
        return 0


@dataclass(frozen=True)
class NumericSpan:
    """A half-open token range [token_start, token_end) carrying a value."""

    token_start: int
    token_end: int
    value: NumericValue


_NUMBER_WORDS = {
    "zero": 0, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
    "first": 1, "second": 2, "third": 3, "fourth": 4, "fifth": 5,
    "sixth": 6, "seventh": 7, "eighth": 8, "ninth": 9, "tenth": 10,
}

_MONTHS = {
    "january": 1, "february": 2, "march": 3, "april": 4, "may": 5, "june": 6,
    "july": 7, "august": 8, "september": 9, "october": 10, "november": 11,
    "december": 12,
    "jan": 1, "feb": 2, "mar": 3, "apr": 4, "jun": 6, "jul": 7, "aug": 8,
    "sep": 9, "oct": 10, "nov": 11, "dec": 12,
}

_GROUPED_RE = re.compile(r"^\d{1,3}(,\d{3})+$")
_DECIMAL_RE = re.compile(r"^\d+\.\d+$")
_INT_RE = re.compile(r"^\d+$")
_SLASH_DATE_RE = re.compile(r"^(\d{1,2})/(\d{1,2})/(\d{4})$")
_YEAR_RANGE_RE = re.compile(r"^\s*([12]\d{3})\s*[-–—]\s*\S.*$")


def _parse_single_token(token: str) -> Optional[NumericValue]:
    if token in _NUMBER_WORDS:
        return NumericValue(kind=ColumnType.NUMBER, number=float(_NUMBER_WORDS[token]))
    m = _SLASH_DATE_RE.match(token)
    if m:
        month, day, year = int(m.group(1)), int(m.group(2)), int(m.group(3))
        if 1 <= month <= 12 and 1 <= day <= 31 and 1000 <= year <= 2999:
            return NumericValue(kind=ColumnType.DATE, year=year, month=month, day=day)
    if _INT_RE.match(token):
        v = int(token)
        if len(token) == 4 and 1000 <= v <= 2999:
            return NumericValue(kind=ColumnType.DATE, year=v)
        return NumericValue(kind=ColumnType.NUMBER, number=float(v))
    if _DECIMAL_RE.match(token):
        return NumericValue(kind=ColumnType.NUMBER, number=float(token))
    if _GROUPED_RE.match(token):
        return NumericValue(kind=ColumnType.NUMBER, number=float(token.replace(",", "")))
    return None


def _try_month_day_year(tokens: list[str], i: int) -> Optional[NumericValue]:
    if i + 2 >= len(tokens):
        return None
    month = _MONTHS.get(tokens[i])
    if month is None:
        return None
    if not _INT_RE.match(tokens[i + 1]) or not _INT_RE.match(tokens[i + 2]):
        return None
    day, year = int(tokens[i + 1]), int(tokens[i + 2])
    if 1 <= day <= 31 and 1000 <= year <= 2999:
        return NumericValue(kind=ColumnType.DATE, year=year, month=month, day=day)
    return None


def parse_numeric_spans(tokens: list[str]) -> list[NumericSpan]:
    """Find numeric/date expressions, leftmost-longest and non-overlapping.

    Recognized: digit literals (plain, decimal, comma-grouped), number words
    zero..ten and ordinals first..tenth, 4-digit years 1000-2999,
    "<month-name> <day> <year>", and "mm/dd/yyyy". Month-day pairs without a
    year are deliberately not dates (they cannot be compared across cells).
    """
    spans: list[NumericSpan] = []
    i = 0
    n = len(tokens)
    while i < n:
        mdy = _try_month_day_year(tokens, i)
        if mdy is not None:
            spans.append(NumericSpan(i, i + 3, mdy))
            i += 3
            continue
        single = _parse_single_token(tokens[i])
        if single is not None:
            spans.append(NumericSpan(i, i + 1, single))
        i += 1
    return spans


def parse_cell_value(text: str) -> Optional[NumericValue]:
    """Parse a cell iff its normalized text is exactly one numeric expression.

    Range cells like "1986-present" or "1986-1990" yield the leading year.
    """
    if not text or not text.strip():
        return None
    range_match = _YEAR_RANGE_RE.match(text.strip())
    if range_match:
        return NumericValue(kind=ColumnType.DATE, year=int(range_match.group(1)))
    tokens = normalize_tokenize(text)
    if not tokens:
        return None
    spans = parse_numeric_spans(tokens)
    if len(spans) == 1 and spans[0].token_start == 0 and spans[0].token_end == len(tokens):
        return spans[0].value
    return None


def infer_column_type(cells: list[str]) -> str:
    """Majority vote over non-empty cell parses; ties break NUMBER > DATE > TEXT."""
    votes = Counter()
    for cell in cells:
        if not cell or not cell.strip():
            continue
        value = parse_cell_value(cell)
        votes[value.kind if value is not None else ColumnType.TEXT] += 1
    if not votes:
        return ColumnType.TEXT
    priority = {ColumnType.NUMBER: 0, ColumnType.DATE: 1, ColumnType.TEXT: 2}
    ranked = sorted(votes.items(), key=lambda kv: (-kv[1], priority[kv[0]]))
    return ranked[0][0]


def annotate_column_types(table) -> None:
    """Fill ``table.column_types`` in place from its cell contents."""
    table.column_types = [
        infer_column_type(table.column_cells(col)) for col in range(table.n_cols)
    ]
