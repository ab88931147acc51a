//! Local-first title/abstract screening engine for systematic reviews.
//!
//! The crate is organised around a project directory holding four CSV
//! tables (references, decisions, config, llm_executions). Everything else
//! is a pure function of those tables:
//!
//! - [`ingest`]: RIS / MEDLINE (nbib) / PubMed XML / CSV parsing, title
//!   normalisation, deduplication keys, import and export.
//! - [`store`]: the project tables, the append-only decision log, status
//!   reduction and conflict detection, config and LLM execution audit rows.
//! - [`ranker`]: TF-IDF + multinomial Naive Bayes active-learning queue.
//! - [`stopping`]: consecutive-irrelevant and hypergeometric stopping rules.
//! - [`llm`]: prompt rendering, rate-limited batch screening, judgment
//!   parsing, threshold preview/confirmation and cost accounting.
//! - [`eval`]: confusion metrics, F-beta, WSS@r, stratified folds and the
//!   fold ranking experiment.
//! - [`highlight`]: keyword highlight spans in character offsets.

pub mod error;
pub mod eval;
pub mod highlight;
pub mod ingest;
pub mod llm;
pub mod ranker;
pub mod record;
pub mod stopping;
pub mod store;

pub use error::{Error, Result};
pub use record::{Record, RecordDraft, RefId};

/// Version string written into the `client_version` column of decisions.
pub const CLIENT_VERSION: &str = concat!("abscreen/", env!("CARGO_PKG_VERSION"));
