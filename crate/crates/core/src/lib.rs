//! Learned lead-sheet reduction for multitrack symbolic scores.
//!
//! A Score2Lead transformer scores every event of a score, a per-onset
//! differentiable top-k turns the scores into a lead sheet that obeys a
//! selection budget, and a Lead2Score encoder-decoder reconstructs the
//! full score from it. The skyline reduction serves as baseline and warm
//! start.

pub mod chords;
pub mod error;
pub mod json;
pub mod metrics;
pub mod midi;
pub mod neural;
pub mod reduction;
pub mod score;
pub mod tokens;
pub mod topk;
pub mod train;

pub use error::{Error, Result};
