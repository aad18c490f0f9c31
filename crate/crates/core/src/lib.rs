//! Retrieval-augmented, multi-agent adjudication of soccer refereeing
//! questions.
//!
//! The crate is organised the way a question flows through it:
//!
//! - [`kb`]: the two vector knowledge bases (law pages and historical
//!   cases), exact cosine top-k retrieval, ingestion and index files.
//! - [`backends`]: chat and embedding providers. A remote
//!   chat-completions client, a scripted mock, and a deterministic local
//!   embedder so everything can run offline.
//! - [`agents`]: the rule, case, context, video and chief agents. Prompt
//!   rendering and strict parsing of their replies.
//! - [`pipeline`]: modality routing plus the text and video reasoning
//!   chains, each producing a full agent trace.
//! - [`bench`]: benchmark loading, accuracy evaluation, weighted
//!   aggregation and the blind human-evaluation tooling.
//! - [`cli`]: the operator commands behind the `whistle` binary.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod agents;
pub mod backends;
pub mod bench;
pub mod choice;
pub mod cli;
pub mod config;
pub mod kb;
pub mod pipeline;

pub use choice::{LabeledOption, OptionId};
