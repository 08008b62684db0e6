//! Retrieval-augmented tactic search over a semantically tokenized Coq corpus.

pub mod backend;
pub mod clarity;
pub mod cli;
pub mod corpus;
pub mod gateway;
pub mod model;
pub mod prompt;
pub mod retrieval;
pub mod runlog;
pub mod search;
pub mod tokenizer;
