"""Retrieve-and-re-rank for extreme multi-label coding of long documents."""

__version__ = "0.1.0"

from .aux_retrieval import CandidateSet, CooccurrenceIndex, build_aux_index, coverage_report, retrieve_candidates_aux
from .bm25 import Bm25Index, Bm25Params, bm25_score, build_bm25_index, filter_bm25
from .config import PipelineConfig, load_config, recovery_preset
from .corpus import Corpus, Document, LabelDescriptor, load_corpus, preprocess
from .label_graph import LabelGraph, build_label_graph, graphormer_backward, graphormer_forward, init_graphormer
from .metrics import auc_scores, evaluate, f1_scores, precision_at_k
from .pipeline import calibrate_theta, retrieve
from .reranker import ModelConfig, TrainConfig, contrastive_loss, rank_candidates, train
from .synthetic import SyntheticSpec, generate_synthetic_corpus
