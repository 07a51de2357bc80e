import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tgqa.network import ModelConfig
from tgqa.synthetic import build_synthetic_corpus, medals_conversation, medals_table
from tgqa.text import annotate_column_types, build_vocab, corpus_tokens
from tgqa.training import TrainConfig, checkpoint_save, train

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def medals():
    table = medals_table()
    annotate_column_types(table)
    return table


@pytest.fixture
def medals_conv():
    return medals_conversation()


@pytest.fixture
def small_vocab(medals, medals_conv):
    return build_vocab(
        corpus_tokens((t.text for t in medals_conv.turns), [medals]),
        known_capacity=128,
        oov_bucket_count=32,
    )


@pytest.fixture(scope="session")
def sqa_mini_dir():
    return FIXTURES / "sqa_mini"


OVERFIT_MODEL_CONFIG = ModelConfig(num_layers=2, d_model=64, heads=4, dropout_p=0.0)
OVERFIT_TRAIN_CONFIG = TrainConfig(
    base_lr=1.0,
    warmup_steps=150,
    total_steps=2000,
    batch_size=16,
    seed=3,
    eval_every=100,
    early_stop_accuracy=0.99,
)


@pytest.fixture(scope="session")
def overfit_bundle(tmp_path_factory):
    """Model overfit on the synthetic corpus; shared across the session."""
    import time

    conversations, tables = build_synthetic_corpus()
    vocab = build_vocab(
        corpus_tokens((t.text for c in conversations for t in c.turns), tables.values()),
        known_capacity=512,
        oov_bucket_count=64,
    )
    started = time.time()
    result = train(conversations, tables, OVERFIT_MODEL_CONFIG, OVERFIT_TRAIN_CONFIG, vocab=vocab)
    train_seconds = time.time() - started
    path = tmp_path_factory.mktemp("overfit") / "checkpoint.tgqa"
    checkpoint_save(path, result.params, OVERFIT_MODEL_CONFIG, vocab, OVERFIT_TRAIN_CONFIG)
    return {
        "result": result,
        "conversations": conversations,
        "tables": tables,
        "vocab": vocab,
        "model_config": OVERFIT_MODEL_CONFIG,
        "checkpoint_path": path,
        "train_seconds": train_seconds,
    }
