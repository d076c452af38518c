//! Hybrid rating prediction and top-N recommendation.
//!
//! The pipeline has two prediction branches that get blended per (user, item)
//! pair:
//!
//! - a content branch: item feature documents → tf-idf term-document matrix →
//!   truncated SVD (LSA) → item-item cosine similarity → rating prediction
//!   from the target user's own history;
//! - a collaborative branch: a user-user co-purchase graph (edge weight =
//!   number of co-rated items) → weighted stochastic block model fitted by
//!   variational Bayes EM → the target user's community becomes its neighbor
//!   set → mean-centered, similarity-weighted deviation prediction.
//!
//! User similarity mixes demographic ("basic information") cosine with
//! rating-vector cosine, which also gives new users a working similarity and
//! routes cold starts. An optional comment stage corrects ratings from
//! appended review text before anything is fitted.

pub mod comments;
pub mod copurchase;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod predict;
pub mod synth;
pub mod wsbm;

pub use error::{Error, Result};
