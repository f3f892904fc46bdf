//! Active acoustic sensing pipeline for wrist-worn microgesture recognition.
//!
//! Two speakers emit back-to-back FMCW chirps in separate bands (18-21 kHz
//! and 21.5-24.5 kHz); two microphones pick up the reflections from the hand
//! and the held object. Each microphone stream is split by band, framed per
//! sweep and cross-correlated with the transmitted chirp to give four echo
//! profiles and their frame-to-frame differentials, which are stacked into a
//! `155 x 70 x 8` tensor and classified into one of 30 grasp/gesture classes.

pub mod augment;
pub mod dataset;
pub mod echo;
pub mod eprf;
pub mod error;
pub mod labels;
pub mod metrics;
pub mod model;

pub mod render;
pub mod signal;
pub mod sim;
pub mod wav;

pub use error::{Error, Result};
