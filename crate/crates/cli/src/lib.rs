//! File formats, config handling, the toy-molecule generator, and the
//! plumbing behind the `dgdm` binary.

pub mod atomicio;
pub mod checkpoint;
pub mod config;
pub mod jsonl;
pub mod report;
pub mod sdf;
pub mod toyset;
