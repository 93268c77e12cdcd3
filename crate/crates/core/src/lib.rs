// `!(a > b)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classvec;
pub mod cli;
pub mod ingest;
pub mod linalg;
pub mod output;
pub mod probe;
pub mod render;
pub mod tour;
pub mod tsne;
