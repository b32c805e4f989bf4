//! Cross-language information retrieval toolkit: translation lexicon
//! induction from parallel and comparable text, learned reranking of
//! translation candidates, structured-query document retrieval, and
//! rank-based evaluation.

pub mod corpus;
pub mod error;
pub mod features;
pub mod labeling;
pub mod lexicon;
pub mod pipeline;
pub mod ranker;
pub mod retrieval;

pub use error::{Error, Result};
