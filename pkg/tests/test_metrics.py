from __future__ import annotations

import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ftc.core import LabelDistribution, NLILabel
from ftc.metrics import (
    LASInputs,
    LRAInputs,
    MetricConfig,
    ftc_delta,
    ftc_kl,
    ftc_wasserstein,
    ground_distance,
    las_scores,
    lra_score,
    meteor,
    score_all_variants,
)

E, C, N = NLILabel.E, NLILabel.C, NLILabel.N

ONE_HOT = {
    E: LabelDistribution(1.0, 0.0, 0.0),
    C: LabelDistribution(0.0, 1.0, 0.0),
    N: LabelDistribution(0.0, 0.0, 1.0),
}
UNIFORM = LabelDistribution(1 / 3, 1 / 3, 1 / 3)


def _random_distribution(rng: random.Random) -> LabelDistribution:
    cuts = sorted((rng.random(), rng.random()))
    return LabelDistribution(cuts[0], cuts[1] - cuts[0], 1.0 - cuts[1])


# --- closed forms ------------------------------------------------------------


@pytest.mark.parametrize("label", [E, C, N])
def test_one_hot_on_target_scores_one_everywhere(label):
    scores = score_all_variants(ONE_HOT[label], label)
    assert scores == {"delta": 1.0, "kl": 1.0, "wasserstein": 1.0}


def test_uniform_closed_forms():
    assert ftc_kl(UNIFORM, E) == pytest.approx(1.0 - math.log(3), abs=1e-9)
    assert ftc_delta(UNIFORM, E) == 1.0  # tie resolves toward E
    assert ftc_delta(UNIFORM, C) == 0.0
    # Uniform transport onto E: 1/3 across the decided gap, 1/3 from N.
    assert ftc_wasserstein(UNIFORM, E) == pytest.approx(1.0 - (1 / 3 + 0.5 / 3))


def test_kl_zero_point_sits_at_one_over_e():
    p = math.exp(-1.0)
    rest = (1.0 - p) / 2
    assert ftc_kl(LabelDistribution(p, rest, rest), E) == pytest.approx(0.0, abs=1e-12)


def test_kl_floor_keeps_log_finite():
    assert ftc_kl(ONE_HOT[C], E) == pytest.approx(1.0 + math.log(1e-12))


def test_wasserstein_point_mass_transport():
    # Full mass across the decided pair costs 1; mass on N costs alpha.
    assert ftc_wasserstein(ONE_HOT[C], E) == 0.0
    assert ftc_wasserstein(ONE_HOT[E], C) == 0.0
    assert ftc_wasserstein(ONE_HOT[N], E) == pytest.approx(0.5)
    assert ftc_wasserstein(ONE_HOT[E], N) == pytest.approx(0.5)
    config = MetricConfig(alpha=0.25)
    assert ftc_wasserstein(ONE_HOT[N], C, config) == pytest.approx(0.75)


def test_ground_distance_is_symmetric_and_zero_on_diagonal():
    config = MetricConfig()
    for l1 in NLILabel:
        for l2 in NLILabel:
            assert ground_distance(l1, l2, config) == ground_distance(l2, l1, config)
        assert ground_distance(l1, l1, config) == 0.0


def test_random_distributions_respect_ranges():
    rng = random.Random(11)
    floor_value = 1.0 + math.log(1e-12)
    for _ in range(1000):
        pred = _random_distribution(rng)
        y_cf = rng.choice([E, C, N])
        scores = score_all_variants(pred, y_cf)
        assert scores["delta"] in (0.0, 1.0)
        assert floor_value <= scores["kl"] <= 1.0
        assert 0.0 <= scores["wasserstein"] <= 1.0


@given(
    p=st.floats(min_value=0.0, max_value=1.0),
    q=st.floats(min_value=0.0, max_value=1.0),
)
def test_kl_is_monotone_in_target_mass(p, q):
    lo, hi = sorted((p, q))
    rest_lo, rest_hi = (1.0 - lo) / 2, (1.0 - hi) / 2
    kl_lo = ftc_kl(LabelDistribution(lo, rest_lo, rest_lo), E)
    kl_hi = ftc_kl(LabelDistribution(hi, rest_hi, rest_hi), E)
    assert kl_lo <= kl_hi + 1e-12


# --- LAS ---------------------------------------------------------------------


def test_las_frozen_example():
    rows = [
        LASInputs(1, 0, 0),  # non-leaking, explanation helped
        LASInputs(0, 0, 0),  # non-leaking, no change
        LASInputs(0, 1, 1),  # leaking, explanation hurt
        LASInputs(1, 1, 1),  # leaking, no change
    ]
    result = las_scores(rows)
    assert result.las0 == pytest.approx(0.5)
    assert result.las1 == pytest.approx(-0.5)
    assert result.las == pytest.approx(0.0)


def test_las_single_group_leaves_combined_undefined():
    result = las_scores([LASInputs(1, 0, 0), LASInputs(1, 1, 0)])
    assert result.las0 == pytest.approx(0.5)
    assert result.las1 is None
    assert result.las is None
    with pytest.raises(ValueError):
        las_scores([])


def test_las_matches_brute_force_on_random_tables():
    rng = random.Random(23)
    for _ in range(1000):
        rows = [
            LASInputs(rng.randint(0, 1), rng.randint(0, 1), rng.randint(0, 1))
            for _ in range(rng.randint(1, 12))
        ]
        result = las_scores(rows)
        for k, field in ((0, result.las0), (1, result.las1)):
            group = [r for r in rows if r.leak_k == k]
            if not group:
                assert field is None
                continue
            total = 0
            for r in group:
                total += r.correct_with_x_and_e
                total -= r.correct_with_x
            assert field == pytest.approx(total / len(group))
        if result.las0 is None or result.las1 is None:
            assert result.las is None
        else:
            assert result.las == pytest.approx((result.las0 + result.las1) / 2)


# --- LRA ---------------------------------------------------------------------


def test_lra_frozen_example():
    rows = [LRAInputs(1, 1), LRAInputs(0, 0), LRAInputs(1, 0), LRAInputs(0, -1)]
    assert lra_score(rows) == pytest.approx(0.5)


def test_lra_z_minus_one_never_matches():
    assert lra_score([LRAInputs(0, -1), LRAInputs(1, -1)]) == 0.0


def test_lra_matches_brute_force_on_random_tables():
    rng = random.Random(29)
    for _ in range(1000):
        rows = [
            LRAInputs(rng.randint(0, 1), rng.randint(-1, 1))
            for _ in range(rng.randint(1, 12))
        ]
        expected = sum(1 for r in rows if r.f == r.z) / len(rows)
        assert lra_score(rows) == pytest.approx(expected)


def test_lra_input_validation():
    with pytest.raises(ValueError):
        LRAInputs(2, 0)
    with pytest.raises(ValueError):
        LRAInputs(0, 2)
    with pytest.raises(ValueError):
        lra_score([])


# --- METEOR ------------------------------------------------------------------


def test_meteor_identical_three_token_sentences():
    # P = R = 1, one chunk over three tokens: 1 - 0.5 * (1/3)^3.
    score = meteor("the dog runs", ["the dog runs"])
    assert score == pytest.approx(1.0 - 0.5 / 27, abs=1e-9)
    assert score == pytest.approx(0.981481, abs=1e-4)


def test_meteor_is_case_insensitive():
    assert meteor("The Dog RUNS", ["the dog runs"]) == meteor(
        "the dog runs", ["the dog runs"]
    )


def test_meteor_no_overlap_is_zero():
    assert meteor("cats sleep indoors", ["the dog runs"]) == 0.0


def test_meteor_stem_stage_catches_inflection():
    with_stem = meteor("the dogs run", ["the dog runs"])
    assert with_stem > 0.9


def test_meteor_multi_reference_takes_the_best():
    refs = ["a cat sits", "the dog runs"]
    best = meteor("the dog runs", refs)
    assert best == pytest.approx(meteor("the dog runs", ["the dog runs"]))
    # Permuting references never changes the score.
    assert best == meteor("the dog runs", list(reversed(refs)))


def test_meteor_fragmentation_penalty_orders_scrambles():
    reference = "the quick brown fox jumps over the lazy dog"
    assert meteor(reference, [reference]) > meteor(
        "dog lazy the over jumps fox brown quick the", [reference]
    )


def test_meteor_empty_candidate_is_zero():
    assert meteor("", ["the dog runs"]) == 0.0
