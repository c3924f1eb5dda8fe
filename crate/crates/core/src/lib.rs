//! Deterministic scene-graph question generation.
//!
//! The pipeline cleans scene graphs ([`scene_graph`]), groups objects that
//! share attributes or relations ([`clustering`]), instantiates question
//! templates over those groups ([`question`]), compiles every question into a
//! straight-line reasoning program and executes it symbolically
//! ([`program`]), then balances ([`balancer`]) and summarizes ([`stats`]) the
//! resulting corpus.

pub mod balancer;
pub mod clustering;
pub mod geometry;
pub mod lexicon;
pub mod pipeline;
pub mod program;
pub mod question;
pub mod rng;
pub mod scene_graph;
pub mod stats;
pub mod synth;
