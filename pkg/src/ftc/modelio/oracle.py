"""A tiny closed world that classifies hypotheses exactly.

This is the deterministic stand-in for a real NLI model: worlds are small
enough to decide entailment by closure, so end-to-end runs have known
expected outputs. Semantics, all documented test conventions:

  * Facts are (subject, relation, object) triples per premise; relation "is"
    adds a premise-local taxonomy edge on top of the global isa edges.
  * A query is entailed when a fact with the same relation exists whose
    subject (and object, when the query has one) generalizes up the isa
    closure to the query's terms.
  * A query is contradicted when such a fact exists except that the subject
    or object is disjoint with the query's term, or when the query negates
    an entailed fact.
  * Negation of a truth-valueless query stays truth-valueless: negated
    queries swap E and C but keep N.
  * A query mentioning a term outside the vocabulary is N outright.

The hypothesis micro-grammar accepts "subject [not] relation object" and
"subject is [not] (a) object" after dropping articles and copulas. Subjects
and objects match the longest known multiword term.
"""
from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from ..core import LabelDistribution, NLILabel
from .protocol import ClassifyRequest

ARTICLES = frozenset({"a", "an", "the"})
COPULAS = frozenset({"is", "are", "was", "were", "am"})
_WORD_RE = re.compile(r"[a-z0-9']+")

_MAX_TERM_TOKENS = 4


@dataclass(frozen=True)
class Query:
    subject: str
    relation: str
    object_: str  # empty for intransitive claims
    negated: bool


class WorldError(ValueError):
    """The world definition itself is inconsistent."""


@dataclass
class OracleWorld:
    isa_edges: frozenset[tuple[str, str]]
    disjoint_pairs: frozenset[tuple[str, str]]
    scene_facts: dict[str, frozenset[tuple[str, str, str]]]
    vocabulary: frozenset[str]
    epsilon: float = 0.02
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.epsilon < 1:
            raise WorldError(f"epsilon {self.epsilon} outside (0, 1)")
        # normalize disjointness to both orientations
        sym = set()
        for t1, t2 in self.disjoint_pairs:
            sym.add((t1, t2))
            sym.add((t2, t1))
        self.disjoint_pairs = frozenset(sym)
        self._check_acyclic()
        terms: set[str] = set(self.vocabulary)
        for child, parent in self.isa_edges:
            terms.update((child, parent))
        for t1, t2 in self.disjoint_pairs:
            terms.update((t1, t2))
        for facts in self.scene_facts.values():
            for s, _, o in facts:
                terms.add(s)
                if o:
                    terms.add(o)
        self._terms = frozenset(terms)
        self._term_tokens = frozenset(
            tuple(term.split()) for term in terms if term
        )

    def _check_acyclic(self) -> None:
        children: dict[str, set[str]] = {}
        for child, parent in self.isa_edges:
            children.setdefault(child, set()).add(parent)
        visiting: set[str] = set()
        done: set[str] = set()

        def visit(node: str) -> None:
            if node in done:
                return
            if node in visiting:
                raise WorldError(f"isa edges contain a cycle through {node!r}")
            visiting.add(node)
            for parent in children.get(node, ()):
                visit(parent)
            visiting.discard(node)
            done.add(node)

        for node in list(children):
            visit(node)

    def terms(self) -> frozenset[str]:
        return self._terms

    def closure(self, term: str, premise_ref: str | None = None) -> frozenset[str]:
        """term plus every ancestor reachable over isa edges (global ones,
        plus the premise's "is" facts when a premise is given)."""
        edges: dict[str, set[str]] = {}
        for child, parent in self.isa_edges:
            edges.setdefault(child, set()).add(parent)
        if premise_ref is not None:
            for s, r, o in self.scene_facts.get(premise_ref, ()):
                if r == "is" and o:
                    edges.setdefault(s, set()).add(o)
        seen = {term}
        frontier = [term]
        while frontier:
            node = frontier.pop()
            for parent in edges.get(node, ()):
                if parent not in seen:
                    seen.add(parent)
                    frontier.append(parent)
        return frozenset(seen)

    def incompatible(self, t1: str, t2: str, premise_ref: str | None = None) -> bool:
        c1 = self.closure(t1, premise_ref)
        c2 = self.closure(t2, premise_ref)
        return any((a, b) in self.disjoint_pairs for a in c1 for b in c2)

    def to_json(self) -> dict:
        return {
            "isa": sorted(list(e) for e in self.isa_edges),
            "disjoint": sorted(
                sorted(p) for p in {tuple(sorted(p)) for p in self.disjoint_pairs}
            ),
            "scenes": {
                ref: sorted(list(f) for f in facts)
                for ref, facts in sorted(self.scene_facts.items())
            },
            "vocabulary": sorted(self.vocabulary),
            "epsilon": self.epsilon,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "OracleWorld":
        return cls(
            isa_edges=frozenset(tuple(e) for e in doc.get("isa", ())),
            disjoint_pairs=frozenset(tuple(p) for p in doc.get("disjoint", ())),
            scene_facts={
                ref: frozenset(tuple(f) for f in facts)
                for ref, facts in doc.get("scenes", {}).items()
            },
            vocabulary=frozenset(doc.get("vocabulary", ())),
            epsilon=float(doc.get("epsilon", 0.02)),
            seed=int(doc.get("seed", 0)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "OracleWorld":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _normalize_tokens(text: str) -> tuple[list[str], bool, bool]:
    """Lowercased content tokens, negation flag, copula-present flag."""
    words = _WORD_RE.findall(text.lower())
    negated = False
    copula = False
    tokens: list[str] = []
    for word in words:
        if word in ARTICLES:
            continue
        if word == "not" and not negated:
            negated = True
            continue
        if word in COPULAS:
            copula = True
            continue
        tokens.append(word)
    return tokens, negated, copula


def parse_hypothesis(world: OracleWorld, text: str) -> Query | None:
    """Parse by longest-known-term prefix (subject) and suffix (object)."""
    tokens, negated, copula = _normalize_tokens(text)
    if len(tokens) < 2:
        return None

    def longest_prefix(toks: list[str]) -> int:
        for size in range(min(_MAX_TERM_TOKENS, len(toks)), 1, -1):
            if tuple(toks[:size]) in world._term_tokens:
                return size
        return 1

    def longest_suffix(toks: list[str]) -> int:
        for size in range(min(_MAX_TERM_TOKENS, len(toks)), 1, -1):
            if tuple(toks[-size:]) in world._term_tokens:
                return size
        return 1

    subj_len = longest_prefix(tokens)
    subject = " ".join(tokens[:subj_len])
    rest = tokens[subj_len:]
    if not rest:
        return None
    if len(rest) == 1:
        word = rest[0]
        if word.endswith("ing"):
            return Query(subject, word, "", negated)
        return Query(subject, "is", word, negated)
    obj_len = longest_suffix(rest)
    object_ = " ".join(rest[len(rest) - obj_len :])
    middle = rest[: len(rest) - obj_len]
    relation = "-".join(middle) if middle else "is"
    return Query(subject, relation, object_, negated)


def _entailed(world: OracleWorld, premise_ref: str, q: Query) -> bool:
    if q.relation == "is":
        if q.object_ and q.object_ in world.closure(q.subject, premise_ref):
            return True
    for fs, fr, fo in world.scene_facts.get(premise_ref, ()):
        if fr != q.relation:
            continue
        if q.subject not in world.closure(fs, premise_ref):
            continue
        if not q.object_ or (fo and q.object_ in world.closure(fo, premise_ref)):
            return True
    return False


def _contradicted(world: OracleWorld, premise_ref: str, q: Query) -> bool:
    if q.relation == "is" and q.object_:
        if world.incompatible(q.subject, q.object_, premise_ref):
            return True
    for fs, fr, fo in world.scene_facts.get(premise_ref, ()):
        if fr != q.relation:
            continue
        subj_up = q.subject in world.closure(fs, premise_ref)
        subj_clash = world.incompatible(q.subject, fs, premise_ref)
        if not q.object_:
            if subj_clash:
                return True
            continue
        obj_up = bool(fo) and q.object_ in world.closure(fo, premise_ref)
        obj_clash = bool(fo) and world.incompatible(q.object_, fo, premise_ref)
        if subj_clash and (obj_up or not fo):
            return True
        if subj_up and obj_clash:
            return True
    return False


def decide(
    world: OracleWorld, premise_ref: str, hypothesis: str
) -> tuple[NLILabel, bool]:
    """Classify one hypothesis. Returns (label, parsed_ok).

    Unparseable or out-of-vocabulary hypotheses are N: they make no claim the
    world can evaluate.
    """
    query = parse_hypothesis(world, hypothesis)
    if query is None:
        return NLILabel.N, False
    known = world.terms()
    if query.subject not in known:
        return NLILabel.N, True
    if query.object_ and query.relation == "is" and query.object_ not in known:
        return NLILabel.N, True
    if query.object_ and query.relation != "is" and query.object_ not in known:
        return NLILabel.N, True
    positive = Query(query.subject, query.relation, query.object_, False)
    if _entailed(world, premise_ref, positive):
        label = NLILabel.E
    elif _contradicted(world, premise_ref, positive):
        label = NLILabel.C
    else:
        label = NLILabel.N
    if query.negated:
        if label == NLILabel.E:
            label = NLILabel.C
        elif label == NLILabel.C:
            label = NLILabel.E
        # N stays N: negating a truth-valueless claim settles nothing
    return label, True


def _near_one_hot(label: NLILabel, epsilon: float) -> LabelDistribution:
    probs = {l: epsilon / 2 for l in NLILabel}
    probs[label] = 1.0 - epsilon
    return LabelDistribution(probs[NLILabel.E], probs[NLILabel.C], probs[NLILabel.N])


def _stable_rng(world: OracleWorld, *parts: object) -> random.Random:
    digest = hashlib.sha256()
    digest.update(str(world.seed).encode())
    for part in parts:
        digest.update(b"\x1f")
        digest.update(str(part).encode("utf-8"))
    return random.Random(int.from_bytes(digest.digest()[:8], "big"))


def oracle_classify(
    world: OracleWorld,
    premise_ref: str,
    hypothesis: str,
    noise_sigma: float | None = None,
) -> LabelDistribution:
    """Near-one-hot distribution over the decided label.

    noise_sigma resamples the argmax uniformly with probability
    min(1, noise_sigma); the draw is a stable hash of the request, so equal
    requests always return equal responses.
    """
    label, _ = decide(world, premise_ref, hypothesis)
    if noise_sigma:
        rng = _stable_rng(world, premise_ref, hypothesis, noise_sigma)
        if rng.random() < min(1.0, noise_sigma):
            label = rng.choice(list(NLILabel))
    return _near_one_hot(label, world.epsilon)


# Explanation handling for the conditioned protocol requests. The surface
# templates here are the leakage channel: an explanation's phrasing alone
# often gives the label away, which is exactly what e_only probes.

_EXPL_NEG = re.compile(r"\b(?:is not|are not|cannot be|can not be)\b", re.I)
_EXPL_NEUTRAL = re.compile(r"\b(?:not all|does not mean|does not imply)\b", re.I)
_EXPL_POS = re.compile(r"\b(?:is|are|implies)\b", re.I)
_EXPL_ISA = re.compile(
    r"^\s*(?:a|an|the)?\s*(?P<a>[a-z0-9' ]+?)\s+(?:is|are)\s+"
    r"(?:a|an|the)?\s*(?P<b>[a-z0-9' ]+?)\s*[.!?]?\s*$",
    re.I,
)


def _explanation_only_label(explanation: str) -> NLILabel:
    if _EXPL_NEUTRAL.search(explanation):
        return NLILabel.N
    if _EXPL_NEG.search(explanation):
        return NLILabel.C
    if _EXPL_POS.search(explanation):
        return NLILabel.E
    return NLILabel.N


def _explanation_edge(explanation: str) -> tuple[str, str] | None:
    if _EXPL_NEG.search(explanation) or _EXPL_NEUTRAL.search(explanation):
        return None
    m = _EXPL_ISA.match(explanation)
    if not m:
        return None
    a = " ".join(_WORD_RE.findall(m.group("a").lower()))
    b = " ".join(_WORD_RE.findall(m.group("b").lower()))
    if not a or not b or a == b:
        return None
    return a, b


def classify_conditioned(
    world: OracleWorld, request: ClassifyRequest
) -> LabelDistribution:
    """Serve a full protocol request against the world."""
    if request.condition == "x":
        return oracle_classify(
            world, request.premise_ref, request.hypothesis, request.noise_sigma
        )
    if request.condition == "e_only":
        label = _explanation_only_label(request.explanation or "")
        if request.noise_sigma:
            rng = _stable_rng(
                world, "e_only", request.explanation, request.noise_sigma
            )
            if rng.random() < min(1.0, request.noise_sigma):
                label = rng.choice(list(NLILabel))
        return _near_one_hot(label, world.epsilon)
    # x_and_e: the explanation may contribute a premise-local taxonomy edge
    edge = _explanation_edge(request.explanation or "")
    effective = world
    if edge is not None:
        effective = OracleWorld(
            isa_edges=world.isa_edges | {edge},
            disjoint_pairs=world.disjoint_pairs,
            scene_facts=world.scene_facts,
            vocabulary=world.vocabulary | {edge[0], edge[1]},
            epsilon=world.epsilon,
            seed=world.seed,
        )
    return oracle_classify(
        effective, request.premise_ref, request.hypothesis, request.noise_sigma
    )


class OracleClassifier:
    """In-process classifier with the same call surface as the HTTP client."""

    def __init__(self, world: OracleWorld):
        self.world = world

    def classify(self, request: ClassifyRequest) -> LabelDistribution:
        return classify_conditioned(self.world, request)
