"""Query/table matching over semi-structured web content with a typed-edge GCN."""

from .canonical import SemiTable, classify_columns, with_roles
from .extraction import LabeledExample, parse_html_list, parse_html_table, read_jsonl, write_jsonl
from .graph import build_graph, normalized_adjacency
from .model import GraphQAModel, ModelConfig, gcn_forward, predict_score
from .synth import SynthSpec, generate_synthetic
from .training import Metrics, TrainConfig, evaluate, split_dataset, train

__version__ = "0.1.0"

__all__ = [
    "GraphQAModel", "LabeledExample", "Metrics", "ModelConfig", "SemiTable", "SynthSpec", "TrainConfig",
    "build_graph", "classify_columns", "evaluate", "gcn_forward", "generate_synthetic", "normalized_adjacency",
    "parse_html_list", "parse_html_table", "predict_score", "read_jsonl", "split_dataset", "train",
    "with_roles", "write_jsonl",
]
