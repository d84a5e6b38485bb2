"""Query expansion and entity weighting for query reformulation retrieval."""

from .catalog import (CatalogEntry, Entity, ReformulationPair, contains_entity, normalize,
                      parse_catalog, parse_pairs)
from .eekb import Eekb, build_eekb, load_eekb, save_eekb, top_k_neighbors
from .embedder import ContrastiveEncoder, TextEncoder
from .evaluation import EvalReport, Pipeline, precision_at_k, run_ablation
from .expansion import ExpandedQuery, QueryExpander, expand_query
from .retrieval import (AdjustConfig, BM25Retriever, Candidate, EmbeddingRetriever, build_index,
                        retrieve_embedding, retrieve_lexical)
from .synthetic import generate_synthetic
from .weights import EntityWeighter, assign_labels, prune_expansions

__version__ = "0.1.0"

__all__ = [
    "AdjustConfig", "BM25Retriever", "Candidate", "CatalogEntry", "ContrastiveEncoder", "Eekb",
    "EmbeddingRetriever", "Entity", "EntityWeighter", "EvalReport", "ExpandedQuery", "Pipeline",
    "QueryExpander", "ReformulationPair", "TextEncoder", "assign_labels", "build_eekb",
    "build_index", "contains_entity", "expand_query", "generate_synthetic", "load_eekb",
    "normalize", "parse_catalog", "parse_pairs", "precision_at_k", "prune_expansions",
    "retrieve_embedding", "retrieve_lexical", "run_ablation", "save_eekb", "top_k_neighbors",
]
