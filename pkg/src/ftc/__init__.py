"""Counterfactual faithfulness evaluation for natural language explanations.

The toolkit turns (hypothesis, label, explanation) triples into counterfactual
hypotheses with derived target labels, scores a classifier's behaviour on them
(delta / kl / wasserstein variants), and provides the comparison metrics and
rank statistics used to validate the scores.
"""
from .core import (
    Branch,
    CounterfactualRecord,
    DatasetFormatConfig,
    Instance,
    LabelDistribution,
    NLILabel,
    filter_consistent,
    majority_vote,
    parse_instances,
    serialize_instances,
)
from .freelogic import (
    RelationForm,
    SpanPair,
    derive_counterfactual_labels,
    neutral_branch_rewrite,
    relation_form,
    substitute_span,
)
from .metrics import (
    MetricConfig,
    ftc_delta,
    ftc_kl,
    ftc_wasserstein,
    las_scores,
    lra_score,
    meteor,
    score_all_variants,
)
from .pipeline import PipelineConfig, Report, run_pipeline
from .rewrite import PatternBank, PromptSet, fsp_rewrite, regex_rewrite
from .stats import fleiss_kappa, rank_sum

__version__ = "0.1.0"

__all__ = [
    "Branch",
    "CounterfactualRecord",
    "DatasetFormatConfig",
    "Instance",
    "LabelDistribution",
    "MetricConfig",
    "NLILabel",
    "PatternBank",
    "PipelineConfig",
    "PromptSet",
    "RelationForm",
    "Report",
    "SpanPair",
    "derive_counterfactual_labels",
    "filter_consistent",
    "fleiss_kappa",
    "fsp_rewrite",
    "ftc_delta",
    "ftc_kl",
    "ftc_wasserstein",
    "las_scores",
    "lra_score",
    "majority_vote",
    "meteor",
    "neutral_branch_rewrite",
    "parse_instances",
    "rank_sum",
    "regex_rewrite",
    "relation_form",
    "run_pipeline",
    "score_all_variants",
    "serialize_instances",
    "substitute_span",
    "__version__",
]
