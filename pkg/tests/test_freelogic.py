from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ftc.core import Branch, CounterfactualRecord, NLILabel
from ftc.freelogic import (
    NoMatchError,
    RelationForm,
    SpanPair,
    check_record,
    derive_counterfactual_labels,
    neutral_branch_rewrite,
    relation_form,
    substitute_span,
)


def _pair(a: str, b: str) -> SpanPair:
    return SpanPair(a, b, "manual")


# --- derivation table ----------------------------------------------------------


def test_derivation_table_is_exhaustive_and_exact():
    e, c, n = NLILabel.E, NLILabel.C, NLILabel.N
    assert derive_counterfactual_labels(e) == ((Branch.MAIN, e),)
    assert derive_counterfactual_labels(c) == ((Branch.MAIN, e),)
    assert derive_counterfactual_labels(n) == (
        (Branch.A_BRANCH, e),
        (Branch.NEG_B_BRANCH, n),
    )


def test_relation_forms():
    assert relation_form(NLILabel.E) == RelationForm.EQUIVALENCE
    assert relation_form(NLILabel.C) == RelationForm.NEGATED_EQUIVALENCE
    assert relation_form(NLILabel.N) == RelationForm.NEGATED_IMPLICATION


def test_check_record_rejects_underivable_pairs():
    ok = CounterfactualRecord("i", Branch.MAIN, "x", NLILabel.E, "regex")
    check_record(NLILabel.E, ok)
    with pytest.raises(ValueError, match="not derived"):
        check_record(NLILabel.N, ok)
    wrong_label = CounterfactualRecord("i", Branch.MAIN, "x", NLILabel.C, "regex")
    with pytest.raises(ValueError, match="must carry"):
        check_record(NLILabel.C, wrong_label)


# --- span substitution -----------------------------------------------------------


def test_substitute_basic_and_sentence_initial_case():
    pair = _pair("dog", "animal")
    assert (
        substitute_span("The dog is barking at the girl.", pair)
        == "The animal is barking at the girl."
    )
    # Sentence-initial token matches case-insensitively and the replacement
    # picks up the capital.
    assert substitute_span("Dog barks loudly.", pair) == "Animal barks loudly."


def test_substitute_replaces_every_occurrence():
    pair = _pair("cat", "pet")
    assert (
        substitute_span("The cat saw another cat.", pair)
        == "The pet saw another pet."
    )


def test_substitute_is_token_bounded():
    with pytest.raises(NoMatchError):
        substitute_span("The dogged pursuit continued.", _pair("dog", "animal"))


def test_substitute_mid_sentence_is_case_sensitive():
    with pytest.raises(NoMatchError):
        substitute_span("They met DOG owners.", _pair("dog", "animal"))


def test_substitute_stem_match_covers_inflection():
    pair = _pair("dog", "animal")
    with pytest.raises(NoMatchError):
        substitute_span("Two dogs are barking.", pair)
    assert (
        substitute_span("Two dogs are barking.", pair, stem_match=True)
        == "Two animal are barking."
    )


def test_substitute_multiword_span():
    pair = _pair("tire swing", "rope swing")
    assert (
        substitute_span("A boy sits on a tire swing outside.", pair)
        == "A boy sits on a rope swing outside."
    )


def test_substitute_preserves_surrounding_punctuation():
    # Pure token replacement: articles are left alone, punctuation survives.
    pair = _pair("dog", "animal")
    assert substitute_span("A dog, then a dog!", pair) == "A animal, then a animal!"


# --- neutral branches ------------------------------------------------------------


def test_neutral_branches_on_locative_sentence():
    pair = _pair("tire swing", "outside")
    hyp = "A boy on a tire swing outside."
    assert neutral_branch_rewrite(hyp, pair, Branch.A_BRANCH) == "A boy on a tire swing."
    assert neutral_branch_rewrite(hyp, pair, Branch.NEG_B_BRANCH) == "A boy not outside."


def test_neutral_negation_lands_after_copula():
    # Deleting the a-span takes its article along; "not" goes after the copula.
    pair = _pair("swing", "outside")
    assert (
        neutral_branch_rewrite("The swing is outside.", pair, Branch.NEG_B_BRANCH)
        == "Is not outside."
    )


def test_neutral_rewrite_rejects_main_branch():
    with pytest.raises(ValueError):
        neutral_branch_rewrite("A boy outside.", _pair("boy", "outside"), Branch.MAIN)


def test_missing_span_raises():
    with pytest.raises(NoMatchError):
        neutral_branch_rewrite("A boy inside.", _pair("boy", "outside"),
                               Branch.NEG_B_BRANCH)


# --- properties -------------------------------------------------------------------

_WORDS = st.sampled_from(
    ["dog", "cat", "ball", "park", "red", "fast", "tree", "bird", "swing"]
)


@given(
    prefix=st.lists(_WORDS, max_size=3),
    suffix=st.lists(_WORDS, max_size=3),
    target=_WORDS,
    replacement=_WORDS,
)
def test_substitution_only_touches_target_tokens(prefix, suffix, target, replacement):
    tokens = prefix + [target] + suffix
    hypothesis = " ".join(tokens) + "."
    pair = SpanPair(target, replacement, "manual")
    try:
        out = substitute_span(hypothesis, pair)
    except NoMatchError:
        pytest.fail("target token is present")
    expected = [replacement if t == target else t for t in tokens]
    if expected and tokens[0] == target:
        expected[0] = expected[0].capitalize()
    assert out == " ".join(expected) + "."


@given(st.sampled_from([NLILabel.E, NLILabel.C, NLILabel.N]))
def test_every_derived_record_passes_check(label):
    for branch, y_cf in derive_counterfactual_labels(label):
        record = CounterfactualRecord("i", branch, "text", y_cf, "regex")
        check_record(label, record)
