//! Diverse pivot-table recommendation over tabular data.

pub mod dataset;
pub mod embedding;
pub mod pivot;
pub mod recommend;
pub mod scoring;
pub mod semantics;

pub(crate) mod http;
