"""Random-weight demo checkpoints.

These are wiring stand-ins: tiny models with untrained weights, saved in
the same layout real checkpoints use, so the serving path can be exercised
without downloading anything. Scores they produce are meaningless.
"""
from __future__ import annotations

from pathlib import Path

_WORDS = (
    "a about all an and animal are at ball barking because boy cannot cat "
    "chasing counterfactual does dog explanation extract from girl hence "
    "hypothesis in is it key label labels mean means no not of on only "
    "outside park person pet poodle running sentence sitting spans swing "
    "the then tire to toy two type watching wearing woman you . , : | ! ? '"
).split()

_SPECIALS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]")


def _build_tokenizer():
    from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, \
        processors
    from transformers import PreTrainedTokenizerFast

    vocab = {token: index for index, token in enumerate(_SPECIALS)}
    for word in _WORDS:
        vocab[word] = len(vocab)
    tokenizer = Tokenizer(models.WordLevel(vocab, unk_token="[UNK]"))
    tokenizer.normalizer = normalizers.Lowercase()
    tokenizer.pre_tokenizer = pre_tokenizers.Whitespace()
    tokenizer.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B:1 [SEP]:1",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=tokenizer, model_max_length=128,
        pad_token="[PAD]", unk_token="[UNK]", cls_token="[CLS]",
        sep_token="[SEP]", eos_token="[SEP]",
    ), len(vocab)


def build_tiny_checkpoints(out_dir: str | Path, seed: int = 0
                           ) -> tuple[Path, Path]:
    """Write classifier/ and generator/ checkpoints under out_dir."""
    import torch
    import transformers

    transformers.utils.logging.disable_progress_bar()
    out = Path(out_dir)
    tokenizer, vocab_size = _build_tokenizer()
    torch.manual_seed(seed)

    classifier_dir = out / "classifier"
    classifier = transformers.BertForSequenceClassification(
        transformers.BertConfig(
            vocab_size=vocab_size, hidden_size=32, num_hidden_layers=2,
            num_attention_heads=2, intermediate_size=64,
            max_position_embeddings=128, num_labels=3,
            id2label={0: "E", 1: "C", 2: "N"},
            label2id={"E": 0, "C": 1, "N": 2},
        ))
    classifier.save_pretrained(classifier_dir)
    tokenizer.save_pretrained(classifier_dir)

    generator_dir = out / "generator"
    generator = transformers.GPT2LMHeadModel(
        transformers.GPT2Config(
            vocab_size=vocab_size, n_positions=128, n_embd=32, n_layer=2,
            n_head=2, bos_token_id=tokenizer.cls_token_id,
            eos_token_id=tokenizer.sep_token_id,
        ))
    generator.save_pretrained(generator_dir)
    tokenizer.save_pretrained(generator_dir)
    return classifier_dir, generator_dir
