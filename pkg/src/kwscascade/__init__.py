"""Customizable multi-stage keyword spotting over posterior streams.

Detection by token passing over a compiled keyword graph, verification by
garbage-prefixed forced alignment and by fixed-step beam search, plus a
corpus evaluation harness with threshold sweeps. Keyword sets are swapped
by recompiling the search graph from symbol tables; no model retraining
is involved anywhere in this package.
"""

from .aligner import (
    AlignerConfig,
    AlignmentInfeasibleError,
    AlignmentResult,
    force_align,
    pushback,
    stage2_verify,
)
from .detector import Candidate, DetectorConfig, EmittedFrame, skip_blank_filter, token_passing_decode
from .evaluation import (
    EvalReport,
    LabeledUtterance,
    RocPoint,
    evaluate_corpus,
    eval_negatives,
    eval_positives,
    load_manifest,
    roc_sweep,
)
from .fst import (
    EPSILON,
    GARBAGE,
    AlignmentGraph,
    Wfst,
    build_alignment_graph,
    build_decoding_graph,
    build_grammar_fst,
    build_lexicon_fst,
    compose,
    determinize,
    enumerate_paths,
    minimize,
)
from .pipeline import Detection, Engine, PipelineConfig, run_pipeline
from .posteriors import (
    PosteriorStream,
    SegmentRef,
    frame_to_seconds,
    load_stream,
    load_stream_csv,
    save_stream,
)
from .symbols import (
    KeywordSet,
    Lexicon,
    ParseError,
    PhoneSet,
    parse_keyword_set,
    parse_lexicon,
    parse_phone_set,
)
from .synth import SynthCorpus, SynthSpec, synth_corpus, write_corpus
from .verifier import (
    Hypothesis,
    PooledPosteriorScorer,
    Scorer,
    ScorerError,
    ScorerSession,
    TableScorer,
    VerifierConfig,
    VerifyResult,
    beam_search,
    load_table_fixture,
    stage3_verify,
)

__version__ = "0.1.0"
