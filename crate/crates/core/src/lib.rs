//! Data handling, supervision and decoding for argument mining over
//! conversational threads.

pub mod corpus;
pub mod crf;
pub mod evaluation;
pub mod labels;
pub mod markers;
pub mod synthetic;
pub mod tokenize;
