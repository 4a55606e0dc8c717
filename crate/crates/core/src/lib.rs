//! Relevance-based synchronization of typed object graphs between a server
//! and partially replicated clients.

pub mod changelog;
pub mod delta;
pub mod exec;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod path;
pub mod replica;
pub mod store;
pub mod timestamp;
pub mod token;
