"""Edit-distance error rates over tag-annotated transcripts.

Transcripts carry slot annotations as single special characters: each slot
type has an opener and a closer character, and the enclosed text is the slot
value. The scorer extracts the ordered label sequence (label error rate,
which serves both concept and named-entity scoring) or the ordered
(label, value) pair sequence (concept-value error rate), aligns reference
against hypothesis per line with unit-cost Levenshtein, and reports
100 * (S + I + D) / N over the corpus, N counting reference symbols only.

Tag table file: ``opener<TAB>closer<TAB>label`` lines.
Transcript files: one transcript per line, reference and hypothesis aligned
line by line. Output CSV: ``metric,S,I,D,N,rate``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .corpus import atomic_write_text
from .errors import TagParseError


@dataclass(frozen=True)
class TagRule:
    opener: str
    closer: str
    label: str


class TagTable:
    def __init__(self, rules: list[TagRule]):
        if not rules:
            raise ValueError("tag table must contain at least one rule")
        self.rules = list(rules)
        self._by_opener: dict[str, TagRule] = {}
        closers = set()
        for rule in rules:
            if len(rule.opener) != 1 or len(rule.closer) != 1:
                raise ValueError(f"tag characters must be single characters: {rule}")
            if rule.opener in self._by_opener:
                raise ValueError(f"duplicate opener {rule.opener!r}")
            self._by_opener[rule.opener] = rule
            closers.add(rule.closer)
        self._closers = closers

    def opener(self, ch: str) -> TagRule | None:
        return self._by_opener.get(ch)

    def is_closer(self, ch: str) -> bool:
        return ch in self._closers


def load_tag_table(path: Path) -> TagTable:
    rules = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        opener, closer, label = line.split("\t")
        rules.append(TagRule(opener, closer, label))
    return TagTable(rules)


@dataclass
class TaggedTranscript:
    raw: str
    pairs: list[tuple[str, str]]  # (label, value) in surface order
    untagged: str  # raw text with the tag characters removed


def parse_tagged(text: str, tags: TagTable) -> TaggedTranscript:
    """Extract ordered (label, value) pairs; tags must be balanced, not nested."""
    pairs: list[tuple[str, str]] = []
    plain: list[str] = []
    open_rule: TagRule | None = None
    open_offset = 0
    value: list[str] = []

    for offset, ch in enumerate(text):
        if open_rule is not None:
            if ch == open_rule.closer:
                pairs.append((open_rule.label, "".join(value)))
                plain.append("".join(value))
                open_rule = None
                value = []
            elif tags.opener(ch) is not None or tags.is_closer(ch):
                raise TagParseError(
                    f"tag character {ch!r} inside open {open_rule.label!r} slot", offset
                )
            else:
                value.append(ch)
            continue
        rule = tags.opener(ch)
        if rule is not None:
            open_rule = rule
            open_offset = offset
        elif tags.is_closer(ch):
            raise TagParseError(f"closer {ch!r} without a matching opener", offset)
        else:
            plain.append(ch)

    if open_rule is not None:
        raise TagParseError(f"unclosed {open_rule.label!r} slot", open_offset)
    return TaggedTranscript(text, pairs, "".join(plain))


@dataclass
class ErrorBreakdown:
    substitutions: int
    insertions: int
    deletions: int
    ref_count: int

    @property
    def rate(self) -> float:
        """100 * (S + I + D) / N; may exceed 100 for insertion-heavy output."""
        if self.ref_count < 1:
            raise ValueError("error rate requires at least one reference symbol")
        return (
            100.0
            * (self.substitutions + self.insertions + self.deletions)
            / self.ref_count
        )


def _align_counts(ref: list, hyp: list) -> tuple[int, int, int]:
    """(S, I, D) of one Levenshtein alignment with unit costs.

    Backtrace preference when the alignment is non-unique:
    deletion > insertion > substitution. The total S+I+D is the edit
    distance and is unique regardless of the preference.
    """
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = i
    for j in range(1, m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = d[i - 1][j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1)
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, sub)

    s = ins = dele = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and d[i][j] == d[i - 1][j] + 1:
            dele += 1
            i -= 1
        elif j > 0 and d[i][j] == d[i][j - 1] + 1:
            ins += 1
            j -= 1
        else:
            if ref[i - 1] != hyp[j - 1]:
                s += 1
            i -= 1
            j -= 1
    return s, ins, dele


def edit_breakdown(refs: list[list], hyps: list[list]) -> ErrorBreakdown:
    """Corpus-level S/I/D over aligned (reference, hypothesis) symbol lists."""
    if len(refs) != len(hyps):
        raise ValueError(f"corpus size mismatch: {len(refs)} references vs {len(hyps)} hypotheses")
    s = ins = dele = n = 0
    for ref, hyp in zip(refs, hyps):
        ds, di, dd = _align_counts(list(ref), list(hyp))
        s += ds
        ins += di
        dele += dd
        n += len(ref)
    if n < 1:
        raise ValueError("total reference label count must be >= 1")
    return ErrorBreakdown(s, ins, dele, n)


def label_error_rate(refs: list[list[str]], hyps: list[list[str]]) -> ErrorBreakdown:
    """Edit-distance rate over label sequences (concept or entity labels)."""
    return edit_breakdown(refs, hyps)


def concept_value_error_rate(
    refs: list[list[tuple[str, str]]], hyps: list[list[tuple[str, str]]]
) -> ErrorBreakdown:
    """Same alignment with symbol = exact (label, value) pair."""
    return edit_breakdown(refs, hyps)


def score_files(
    ref_path: Path, hyp_path: Path, tags: TagTable
) -> dict[str, ErrorBreakdown]:
    """Parse aligned transcript files and score labels and label-value pairs."""
    ref_lines = Path(ref_path).read_text(encoding="utf-8").splitlines()
    hyp_lines = Path(hyp_path).read_text(encoding="utf-8").splitlines()
    if len(ref_lines) != len(hyp_lines):
        raise ValueError(
            f"line count mismatch: {len(ref_lines)} references vs {len(hyp_lines)} hypotheses"
        )
    ref_pairs = [parse_tagged(line, tags).pairs for line in ref_lines]
    hyp_pairs = [parse_tagged(line, tags).pairs for line in hyp_lines]
    return {
        "label": edit_breakdown(
            [[label for label, _ in pairs] for pairs in ref_pairs],
            [[label for label, _ in pairs] for pairs in hyp_pairs],
        ),
        "label_value": edit_breakdown(ref_pairs, hyp_pairs),
    }


def write_breakdown_csv(breakdowns: dict[str, ErrorBreakdown], path: Path) -> None:
    lines = ["metric,S,I,D,N,rate"]
    for metric, b in breakdowns.items():
        lines.append(
            f"{metric},{b.substitutions},{b.insertions},{b.deletions},{b.ref_count},{b.rate:.2f}"
        )
    atomic_write_text(Path(path), "\n".join(lines) + "\n")
