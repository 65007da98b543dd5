//! Evaluation: end-point error, weighted two-alternative forced-choice
//! preference rates, judge request assembly, and a bright-point tracker that
//! closes the loop with the stub generator.

mod judge;
mod preference;
mod store;
mod tracking;

use thiserror::Error;

pub use judge::{
    build_judge_request, criterion_text, mean_scores, pairwise_instruction, parse_judge_reply,
    parse_judge_score, score_instruction, JudgeRequest, PairOrder,
};
pub use preference::{
    aggregate, check_consistent, preference_counts, preference_rate, rows_to_csv, rows_to_json,
    share_percent, strength_weight, AggregateRow, GroupKey, Judge, Metric, PreferenceCounts,
    PreferenceError, PreferenceResult, Strength, Verdict, VerdictError, Winner, CSV_HEADER,
    RATE_GRID_BITS,
};
pub use store::{append_verdict, load_verdicts, StoredVerdict};
pub use tracking::{epe, track_bright_points, track_like, TrackerConfig};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("video has no frames")]
    EmptyVideo,
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("png encoding failed: {0}")]
    Encode(String),
    #[error("unusable judge reply: {message}")]
    JudgeReply { message: String, raw: String },
    #[error("verdict store line {line}: {message}")]
    Store { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
