"""
Utilidades compartidas por los tests de las apps: un mundo sintético
pequeño (particiones + vocabulario) y configuraciones de modelo mínimas.
"""

from apps.cnat_model.config import ModelConfig
from apps.cnat_model.model import CnatModel

from .synthetic import SyntheticTaskConfig, generate_synthetic
from .vocab import Vocab


def tiny_world(task='nli', seed=0, train=24, val=6, test=6):
    """
    RETORNA:
        (splits, vocab, task_config)
    """
    task_config = SyntheticTaskConfig.from_settings(task=task, seed=seed, sizes={
        'train': train, 'val': val, 'test': test,
    })
    splits = generate_synthetic(task_config)
    texts = []
    for examples in splits.values():
        for example in examples:
            texts += [example.segment_a, example.segment_b, example.explanation]
    extra = [word for words in task_config.inventories.values() for word in words]
    return splits, Vocab.build(texts, extra_tokens=extra), task_config


def tiny_model_config(vocab, num_labels=3, **overrides) -> ModelConfig:
    values = dict(
        vocab_size=len(vocab), d_model=16, n_heads=2, encoder_layers=1, decoder_layers=1,
        ffn_dim=32, max_fertility=3, max_length=32, dropout=0.0, num_labels=num_labels,
    )
    values.update(overrides)
    return ModelConfig(**values)


def tiny_lm(vocab, seed=0, **overrides) -> CnatModel:
    values = dict(encoder_layers=0, mode='ar', decoder_only=True, num_labels=2)
    values.update(overrides)
    return CnatModel(tiny_model_config(vocab, **values), seed=seed).eval()
