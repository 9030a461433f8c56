"""Text-to-SQL engine with vector-index schema linking and self-correction."""

from .corpus import QuestionRecord, load_corpus, render_query_text
from .schema import ColumnRecord, ColumnRef, DatabaseSchema, introspect_schema, render_column_document
from .embeddings import EmbeddingProviderConfig, HashingEmbedder, RemoteEmbeddingClient, normalize
from .contrastive import (
    ContrastiveBatch,
    ProjectionHead,
    TrainerConfig,
    compute_mask,
    hn_supcon_loss,
    loss_gradient,
    sample_negatives,
    supcon_loss,
    train_projection,
)
from .index import SchemaIndex, brute_force_top_k, build_index, load_index, save_index, top_k
from .retriever import RetrievalMetrics, RetrievalResult, compute_retrieval_metrics, retrieve_columns
from .prompts import GenerationContext, build_rft_prompt, build_sft_prompt, pad_schema_to_k
from .executor import ExecutionOutcome, classify_error, execute_sql, execution_accuracy, results_match
from .generator import GeneratorConfig, ScriptedGenerator, generate_sql, sample_candidates
from .pipeline import InferenceTrace, PipelineDeps, answer_question, run_batch
from .preferences import CandidateOutcome, PolicyLogProbs, PreferencePair, build_pairs, label_by_execution, rft_loss
from .evaluation import EvaluationReport, evaluate_traces, retrieval_quality
from .runtime import EngineRuntime, RuntimeConfig

__version__ = "0.1.0"
