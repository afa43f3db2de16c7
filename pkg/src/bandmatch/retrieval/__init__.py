from .codebook import Codebook, read_codebook, select_training_descriptors, train_codebook, write_codebook
from .hnsw import HnswIndex, brute_force_search, hnsw_insert, hnsw_search
from .pairs import RetrievalParams, build_codebook, pair_recall_precision, select_pairs
from .viewgraph import PairState, ViewGraph, graph_from_pairs, norm_pair, read_matrix_market, write_matrix_market
from .vlad import VladVector, encode_vlad

__all__ = [
    "Codebook",
    "HnswIndex",
    "PairState",
    "RetrievalParams",
    "ViewGraph",
    "VladVector",
    "brute_force_search",
    "build_codebook",
    "encode_vlad",
    "graph_from_pairs",
    "hnsw_insert",
    "hnsw_search",
    "norm_pair",
    "pair_recall_precision",
    "read_codebook",
    "read_matrix_market",
    "select_pairs",
    "select_training_descriptors",
    "train_codebook",
    "write_codebook",
    "write_matrix_market",
]
