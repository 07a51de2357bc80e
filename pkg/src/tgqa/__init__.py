"""Conversational question answering over tables.

Tables, questions, and previous answers are encoded as a labeled graph, a
relation-aware Transformer encodes the graph, and a pointer decoder selects
answer columns and rows directly; no logical forms anywhere.
"""

from .tables import (
    AnswerSelection,
    CellCoord,
    Conversation,
    PredictionRecord,
    QuestionTurn,
    Table,
    answer_texts,
    selection_from_cells,
    selection_to_cells,
)
from .text import Vocabulary, build_vocab, normalize_tokenize, parse_cell_value, parse_numeric_spans
from .graph import AnnotatedGraph, GraphOptions, build_graph, normalized_edit_distance
from .network import ModelConfig, decode_greedy, decode_training_loss, embed_nodes, encode, init_parameters, tensorize
from .training import Checkpoint, TrainConfig, checkpoint_load, checkpoint_save, lr_at_step, train
from .evaluation import EvalConfig, EvalReport, compute_metrics, evaluate, question_match

__version__ = "0.1.0"

__all__ = [
    "AnswerSelection", "CellCoord", "Conversation", "PredictionRecord",
    "QuestionTurn", "Table", "answer_texts", "selection_from_cells",
    "selection_to_cells", "Vocabulary", "build_vocab", "normalize_tokenize",
    "parse_cell_value", "parse_numeric_spans", "AnnotatedGraph", "GraphOptions",
    "build_graph", "normalized_edit_distance", "ModelConfig", "decode_greedy",
    "decode_training_loss", "embed_nodes", "encode", "init_parameters",
    "tensorize", "Checkpoint", "TrainConfig", "checkpoint_load",
    "checkpoint_save", "lr_at_step", "train", "EvalConfig", "EvalReport",
    "compute_metrics", "evaluate", "question_match", "__version__",
]
