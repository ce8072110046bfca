//! Evaluation harnesses: sentence-similarity correlation, n-best
//! reranking with corpus BLEU, spam classification via a logistic
//! probe, and the representation-runtime benchmark.

pub mod bench;
pub mod data;
pub mod logreg;
pub mod metrics;
pub mod rerank;
pub mod sms;
pub mod sts;

pub use bench::{bench_csv, runtime_bench, BenchRow, BENCH_CSV_HEADER};
pub use data::{
    load_messages_tsv, load_nbest_jsonl, load_pairs_tsv, Candidate, LabeledMessage, NBestEntry,
    ScoredPair,
};
pub use logreg::{logreg_train, LogReg};
pub use metrics::{corpus_bleu, cosine_similarity, pearson_r, ConfusionMatrix};
pub use rerank::{rerank, selections_csv, RerankConfig, Selection};
pub use sms::{sms_eval, SmsReport};
pub use sts::{sts_eval, StsReport, StsRow, STS_SUMMARY_HEADER};
