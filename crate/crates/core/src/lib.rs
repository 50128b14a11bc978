//! Core algorithms for a speech-data factory and its RL-alignment math.
//!
//! Everything in this crate is a pure function of its inputs (or of an
//! explicitly passed random generator) and needs only `alloc`. File formats,
//! the coordinator wire protocol, threads and the CLI live in the `dataforge`
//! companion crate.
//!
//! Module map:
//!
//! - [`audio`]: standardization, energy VAD, packing and peak normalization.
//! - [`qa`]: edit distance, WER/CER and the two-backend retention gate.
//! - [`punct`]: punctuation repair from forced-alignment gaps.
//! - [`vocab`]: vocabulary pruning and the speech/text length-ratio gate.
//! - [`phoneme`]: lexicons, dictionary G2P, hybrid phoneme+text sequences.
//! - [`grpo`]: reward ladder, clipped surrogate, schedules, dynamic sampling
//!   and a differentiable bigram policy.
//! - [`orchestrator`]: coordinator state machine for the pipeline DAG.
#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod audio;
pub mod grpo;
pub mod orchestrator;
pub mod phoneme;
pub mod punct;
pub mod qa;
pub mod text;
pub mod vocab;

mod stats;
