"""Synthetic world and dataset builder for tests, demos, and calibration runs.

Builds an oracle world plus instances whose gold labels the world provably
assigns, then offers two ways to damage the explanations:

  shuffle_explanations  permute explanation strings within each label class
  corrupt_explanations  keep each explanation's surface form but swap the
                        B-side span for another instance's (a wrong taxonomy
                        edge, so the rewrite still fires but the verdict flips)

Instances come out unannotated; `annotate` adds rater labels by asking the
world to judge each instance's first counterfactual, which is how agreement
and disagreement groups are produced without humans.
"""
from __future__ import annotations

import dataclasses
import random
import re
from dataclasses import dataclass

from .core import Instance, NLILabel
from .modelio.oracle import OracleWorld, decide
from .rewrite import PatternBank, default_bank, regex_extract, regex_rewrite

_SUBJECTS = ("dog", "cat", "boy", "girl", "horse", "bird", "man", "woman")
_ACTS = ("watching", "chasing", "barking at", "circling", "guarding")
_OBJECTS = ("ball", "fence", "wagon", "statue", "kite")
_THINGS = (
    "tire swing", "ladder", "sled", "bicycle", "tractor",
    "roof", "ramp", "stage", "trail", "blanket",
    "platform", "unicycle", "deck", "scaffold", "corner",
    "pier", "balcony", "kayak", "raft", "swing",
)
_LOCATIONS = (
    "outside", "indoors", "downtown", "upstairs", "nearby",
    "abroad", "overseas", "uptown", "underground", "outdoors",
)


@dataclass(frozen=True)
class SynthesisConfig:
    n_per_label: int = 200
    seed: int = 0
    epsilon: float = 0.02


def _article(word: str) -> str:
    return "an" if word[0].lower() in "aeiou" else "a"


def _cap(text: str) -> str:
    return text[0].upper() + text[1:]


def _plural(term: str) -> str:
    # every entry in _THINGS pluralizes with a bare "s"
    return term + "s"


def synthesize(config: SynthesisConfig = SynthesisConfig()) -> tuple[OracleWorld, list[Instance]]:
    """World plus faithful instances, n_per_label of each class.

    Every entailment instance gets its own hypernym, and all hypernyms (plus
    all subjects) are pairwise disjoint, so substituting a foreign hypernym
    always lands on a contradiction. Neutral (thing, location) combinations
    are unique while n_per_label <= 200.
    """
    n = config.n_per_label
    instances: list[Instance] = []
    scene_facts: dict[str, frozenset[tuple[str, str, str]]] = {}
    hypernyms = [f"kind{i}" for i in range(n)]

    for i in range(n):
        s = _SUBJECTS[i % len(_SUBJECTS)]
        act = _ACTS[i % len(_ACTS)]
        obj = _OBJECTS[(i // len(_ACTS)) % len(_OBJECTS)]
        h = hypernyms[i]
        ref = f"scene-e-{i:04d}"
        hypothesis = f"The {s} is {act} the {obj}."
        form = i % 3
        if form == 0:
            explanation = f"The {s} is {_article(h)} {h}."
        elif form == 1:
            explanation = f"{_cap(_article(s))} {s} is a type of {h}."
        else:
            explanation = f"{_cap(_article(s))} {s} implies {_article(h)} {h}."
        scene_facts[ref] = frozenset(
            {(s, "-".join(act.split()), obj), (s, "is", h)}
        )
        instances.append(
            Instance(
                id=f"e-{i:04d}",
                premise_ref=ref,
                hypothesis=hypothesis,
                gold_label=NLILabel.E,
                explanation=explanation,
            )
        )

    for i in range(n):
        w = _SUBJECTS[i % len(_SUBJECTS)]
        offset = 1 + (i // len(_SUBJECTS)) % (len(_SUBJECTS) - 1)
        s = _SUBJECTS[(i + offset) % len(_SUBJECTS)]
        act = _ACTS[(i + 2) % len(_ACTS)]
        obj = _OBJECTS[(i // len(_ACTS) + 1) % len(_OBJECTS)]
        ref = f"scene-c-{i:04d}"
        hypothesis = f"The {w} is {act} the {obj}."
        if i % 2 == 0:
            explanation = f"{_cap(_article(w))} {w} is not {_article(s)} {s}."
        else:
            explanation = f"{_cap(_article(w))} {w} cannot be {_article(s)} {s}."
        scene_facts[ref] = frozenset({(s, "-".join(act.split()), obj)})
        instances.append(
            Instance(
                id=f"c-{i:04d}",
                premise_ref=ref,
                hypothesis=hypothesis,
                gold_label=NLILabel.C,
                explanation=explanation,
            )
        )

    for i in range(n):
        s = _SUBJECTS[i % len(_SUBJECTS)]
        t = _THINGS[i % len(_THINGS)]
        loc = _LOCATIONS[(i // len(_THINGS)) % len(_LOCATIONS)]
        ref = f"scene-n-{i:04d}"
        hypothesis = f"{_cap(_article(s))} {s} on {_article(t)} {t} {loc}."
        if i % 2 == 0:
            explanation = f"Not all {_plural(t)} are {loc}."
        else:
            explanation = f"{_cap(_article(t))} {t} does not mean {loc}."
        scene_facts[ref] = frozenset({(s, "on", t)})
        instances.append(
            Instance(
                id=f"n-{i:04d}",
                premise_ref=ref,
                hypothesis=hypothesis,
                gold_label=NLILabel.N,
                explanation=explanation,
            )
        )

    disjoint: set[tuple[str, str]] = set()
    for a in range(len(_SUBJECTS)):
        for b in range(a + 1, len(_SUBJECTS)):
            disjoint.add((_SUBJECTS[a], _SUBJECTS[b]))
    for a in range(len(hypernyms)):
        for b in range(a + 1, len(hypernyms)):
            disjoint.add((hypernyms[a], hypernyms[b]))

    vocabulary = frozenset(
        set(_SUBJECTS) | set(hypernyms) | set(_OBJECTS) | set(_THINGS) | set(_LOCATIONS)
    )
    world = OracleWorld(
        isa_edges=frozenset(),
        disjoint_pairs=frozenset(disjoint),
        scene_facts=scene_facts,
        vocabulary=vocabulary,
        epsilon=config.epsilon,
        seed=config.seed,
    )
    return world, instances


def _reid(instance: Instance, suffix: str | None) -> str:
    return instance.id if not suffix else instance.id + suffix


def shuffle_explanations(
    instances: list[Instance], seed: int, id_suffix: str | None = None
) -> list[Instance]:
    """Permute explanations within each label class; annotations are dropped
    because they rated the originals."""
    rng = random.Random(seed)
    out: dict[int, Instance] = {}
    for label in NLILabel:
        idx = [i for i, inst in enumerate(instances) if inst.gold_label == label]
        texts = [instances[i].explanation for i in idx]
        rng.shuffle(texts)
        for i, text in zip(idx, texts):
            inst = instances[i]
            out[i] = dataclasses.replace(
                inst,
                id=_reid(inst, id_suffix),
                explanation=text,
                annotator_labels=None,
            )
    return [out[i] for i in range(len(instances))]


def corrupt_explanations(
    instances: list[Instance],
    seed: int,
    bank: PatternBank | None = None,
    id_suffix: str | None = None,
) -> list[Instance]:
    """Swap each explanation's B-side span for another instance's.

    The edit keeps the surface template, so extraction still succeeds where
    the span survives in the hypothesis; the asserted taxonomy edge is wrong
    by construction (the replacement is drawn from the same label class but
    never equals the original span).
    """
    bank = bank or default_bank()
    rng = random.Random(seed)
    pools: dict[NLILabel, list[str]] = {label: [] for label in NLILabel}
    spans: list[tuple[str, str] | None] = []
    for inst in instances:
        pair = regex_extract(inst.explanation, inst.gold_label, bank)
        spans.append((pair.a, pair.b) if pair else None)
        if pair:
            pools[inst.gold_label].append(pair.b)
    out: list[Instance] = []
    for inst, span in zip(instances, spans):
        explanation = inst.explanation
        if span is not None:
            choices = [b for b in pools[inst.gold_label] if b != span[1]]
            if choices:
                replacement = rng.choice(choices)
                explanation = re.sub(
                    rf"\b{re.escape(span[1])}\b", replacement, explanation, count=1
                )
        out.append(
            dataclasses.replace(
                inst,
                id=_reid(inst, id_suffix),
                explanation=explanation,
                annotator_labels=None,
            )
        )
    return out


def annotate(
    world: OracleWorld,
    instances: list[Instance],
    raters: int = 3,
    flip_prob: float = 0.0,
    seed: int = 0,
    bank: PatternBank | None = None,
) -> list[Instance]:
    """Rate each instance's first counterfactual with the world's verdict.

    Instances whose rewrite fails stay unannotated (there is nothing to
    rate). flip_prob > 0 makes each rater independently report a uniformly
    random other label, for agreement statistics below 1.
    """
    bank = bank or default_bank()
    out: list[Instance] = []
    for inst in instances:
        outcome = regex_rewrite(inst, bank)
        if outcome.failure is not None:
            out.append(dataclasses.replace(inst, annotator_labels=None))
            continue
        verdict, _ = decide(world, inst.premise_ref, outcome.records[0].x_cf)
        rng = random.Random(f"{seed}:{inst.id}")
        labels = []
        for _ in range(raters):
            if flip_prob and rng.random() < flip_prob:
                labels.append(rng.choice([l for l in NLILabel if l != verdict]))
            else:
                labels.append(verdict)
        out.append(dataclasses.replace(inst, annotator_labels=tuple(labels)))
    return out
