"""Counterfactual label derivation and span-level hypothesis edits.

An explanation relates two spans A (drawn from the hypothesis) and B. Under
the label-specific reading of that relation, replacing A with B yields a new
hypothesis whose label is determined in advance:

  E: the relation is an equivalence, so the rewritten hypothesis stays
     entailed.
  C: the relation is a negated equivalence; substituting B for A flips the
     hypothesis onto the side the premise supports, so it becomes entailed.
  N: the relation says A holds while B does not follow. Two edits apply:
     keep the A part and drop B (entailed), or drop A and negate B (still
     neutral, since B's truth value is undetermined either way).

The N-branch surface edits below are best-effort string rules (delete a span
plus its dangling preposition/article, insert a negation before the kept
span). They are validated against the oracle world in tests and are meant to
be replaced wholesale if better rules are available.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .core import Branch, CounterfactualRecord, NLILabel
from .stemmer import stem


class RelationForm(enum.Enum):
    """Logical form an explanation takes for each label class."""

    EQUIVALENCE = "equivalence"  # A and B interchangeable
    NEGATED_EQUIVALENCE = "negated_equivalence"  # A and B exclusive
    NEGATED_IMPLICATION = "negated_implication"  # A holds, B does not follow


_RELATION_FORMS: dict[NLILabel, RelationForm] = {
    NLILabel.E: RelationForm.EQUIVALENCE,
    NLILabel.C: RelationForm.NEGATED_EQUIVALENCE,
    NLILabel.N: RelationForm.NEGATED_IMPLICATION,
}

# (branch, expected counterfactual label) per gold label, in emission order.
DERIVATION_TABLE: dict[NLILabel, tuple[tuple[Branch, NLILabel], ...]] = {
    NLILabel.E: ((Branch.MAIN, NLILabel.E),),
    NLILabel.C: ((Branch.MAIN, NLILabel.E),),
    NLILabel.N: (
        (Branch.A_BRANCH, NLILabel.E),
        (Branch.NEG_B_BRANCH, NLILabel.N),
    ),
}


def relation_form(label: NLILabel) -> RelationForm:
    return _RELATION_FORMS[label]


def derive_counterfactual_labels(
    gold_label: NLILabel,
) -> tuple[tuple[Branch, NLILabel], ...]:
    """Branches to construct for an instance, with their expected labels."""
    return DERIVATION_TABLE[gold_label]


def check_record(gold_label: NLILabel, record: CounterfactualRecord) -> None:
    """Raise if a record's (branch, y_cf) pair is not derivable from gold."""
    expected = dict(DERIVATION_TABLE[gold_label])
    if record.branch not in expected:
        raise ValueError(
            f"branch {record.branch.value} not derived for gold "
            f"label {gold_label.value}"
        )
    if expected[record.branch] != record.y_cf:
        raise ValueError(
            f"branch {record.branch.value} of a {gold_label.value} instance "
            f"must carry y_cf={expected[record.branch].value}, "
            f"got {record.y_cf.value}"
        )


@dataclass(frozen=True)
class SpanPair:
    """The two explanation spans, whitespace-trimmed at construction."""

    a: str
    b: str
    source: str  # "regex" | "fsp" | "manual"
    pattern_id: str | None = None

    _SOURCES = ("regex", "fsp", "manual")

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", self.a.strip())
        object.__setattr__(self, "b", self.b.strip())
        if not self.a or not self.b:
            raise ValueError("span pair requires two non-empty spans")
        if self.source not in self._SOURCES:
            raise ValueError(f"unknown span source {self.source!r}")


class NoMatchError(ValueError):
    """The requested span does not occur in the hypothesis."""


_TOKEN_RE = re.compile(r"[A-Za-z0-9']+")
ARTICLES = frozenset({"a", "an", "the"})
PREPOSITIONS = frozenset(
    {"on", "in", "at", "of", "with", "near", "by", "under", "over", "from", "to", "for"}
)
COPULAS = frozenset({"is", "are", "was", "were", "am", "be", "been", "being"})


@dataclass(frozen=True)
class _Token:
    text: str
    start: int
    end: int


def _tokenize(text: str) -> list[_Token]:
    return [_Token(m.group(0), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def _tokens_equal(
    hyp_token: str, span_token: str, sentence_initial: bool, stem_match: bool
) -> bool:
    # Exact comparison is case-sensitive except at the very first token of the
    # hypothesis; stem comparison is inherently case-folded.
    if hyp_token == span_token:
        return True
    if sentence_initial and hyp_token.lower() == span_token.lower():
        return True
    if stem_match and stem(hyp_token) == stem(span_token):
        return True
    return False


def _find_matches(
    tokens: list[_Token], span: str, stem_match: bool
) -> list[tuple[int, int]]:
    """Non-overlapping (first_token_idx, last_token_idx) matches, left to right."""
    span_tokens = [t.text for t in _tokenize(span)]
    if not span_tokens:
        return []
    matches: list[tuple[int, int]] = []
    i = 0
    while i + len(span_tokens) <= len(tokens):
        if all(
            _tokens_equal(
                tokens[i + k].text,
                span_tokens[k],
                sentence_initial=(i + k == 0),
                stem_match=stem_match,
            )
            for k in range(len(span_tokens))
        ):
            matches.append((i, i + len(span_tokens) - 1))
            i += len(span_tokens)
        else:
            i += 1
    return matches


def _normalize_spaces(text: str) -> str:
    text = re.sub(r"[ \t]{2,}", " ", text)
    text = re.sub(r"\s+([.,;:!?])", r"\1", text)
    return text.strip()


def _capitalize_first(text: str) -> str:
    for i, ch in enumerate(text):
        if ch.isalpha():
            return text[:i] + ch.upper() + text[i + 1 :]
    return text


def substitute_span(
    hypothesis: str, pair: SpanPair, stem_match: bool = False
) -> str:
    """Replace every occurrence of pair.a in the hypothesis with pair.b.

    Matching is token-boundary: case-insensitive at the first token of the
    sentence, case-sensitive elsewhere, with an optional stemmed comparison
    per token. Bytes outside the matched regions are preserved; the
    replacement is capitalized when it starts the sentence.
    """
    tokens = _tokenize(hypothesis)
    matches = _find_matches(tokens, pair.a, stem_match)
    if not matches:
        raise NoMatchError(
            f"span {pair.a!r} not found in hypothesis {hypothesis!r}"
        )
    out: list[str] = []
    cursor = 0
    for first, last in matches:
        start, end = tokens[first].start, tokens[last].end
        out.append(hypothesis[cursor:start])
        replacement = pair.b
        if first == 0:
            replacement = _capitalize_first(replacement)
        out.append(replacement)
        cursor = end
    out.append(hypothesis[cursor:])
    return _normalize_spaces("".join(out))


def _extend_deletion_left(tokens: list[_Token], first: int) -> int:
    """Widen a deletion to swallow a dangling article and/or preposition."""
    i = first
    if i > 0 and tokens[i - 1].text.lower() in ARTICLES:
        i -= 1
    if i > 0 and tokens[i - 1].text.lower() in PREPOSITIONS:
        i -= 1
    return i


def _delete_token_range(text: str, tokens: list[_Token], first: int, last: int) -> str:
    start = tokens[first - 1].end if first > 0 else 0
    end = tokens[last].end
    result = _normalize_spaces(text[:start] + text[end:])
    if first == 0:
        result = _capitalize_first(result)
    return result


def _delete_span(
    text: str, span: str, stem_match: bool, extend_left: bool = True
) -> str:
    tokens = _tokenize(text)
    matches = _find_matches(tokens, span, stem_match)
    if not matches:
        raise NoMatchError(f"span {span!r} not found in {text!r}")
    first, last = matches[0]
    if extend_left:
        first = _extend_deletion_left(tokens, first)
    return _delete_token_range(text, tokens, first, last)


def _negate_span(text: str, span: str, stem_match: bool) -> str:
    tokens = _tokenize(text)
    matches = _find_matches(tokens, span, stem_match)
    if not matches:
        raise NoMatchError(f"span {span!r} not found in {text!r}")
    first, _ = matches[0]
    # Walk left over the span's own article; negation goes before it.
    insert_at = first
    if insert_at > 0 and tokens[insert_at - 1].text.lower() in ARTICLES:
        insert_at -= 1
    if insert_at > 0 and tokens[insert_at - 1].text.lower() in COPULAS:
        # "X is outside" -> "X is not outside"
        pos = tokens[insert_at - 1].end
        return _normalize_spaces(text[:pos] + " not" + text[pos:])
    pos = tokens[insert_at].start
    return _normalize_spaces(text[:pos] + "not " + text[pos:])


def neutral_branch_rewrite(
    hypothesis: str, pair: SpanPair, branch: Branch, stem_match: bool = False
) -> str:
    """Surface edits for the two N-label branches.

    A_BRANCH keeps the supported part: the first occurrence of pair.b (plus an
    immediately preceding preposition/article) is deleted. NEG_B_BRANCH drops
    the first occurrence of pair.a the same way, then inserts "not" before
    pair.b (after a governing copula when one is present).
    """
    if branch == Branch.A_BRANCH:
        return _delete_span(hypothesis, pair.b, stem_match)
    if branch == Branch.NEG_B_BRANCH:
        reduced = _delete_span(hypothesis, pair.a, stem_match)
        return _negate_span(reduced, pair.b, stem_match)
    raise ValueError(f"no neutral rewrite for branch {branch.value}")
