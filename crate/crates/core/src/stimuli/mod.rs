//! Sprite assets and frame compositing onto a 2x2 quadrant canvas.

mod compose;
mod pack;

use std::path::PathBuf;

use thiserror::Error;

use crate::task::{Category, StimulusId};

pub use compose::{compose_frame, encode_png, quadrant_rect, render_trial, CanvasConfig, Rect};
pub use pack::{load_asset_pack, synth_asset_pack, AssetPack, PackManifest, PACK_MANIFEST};

#[derive(Debug, Error)]
pub enum StimuliError {
    #[error("asset pack has no views for {category} object {object_index}")]
    MissingObject { category: Category, object_index: u8 },
    #[error("cannot decode {}: {message}", path.display())]
    Decode { path: PathBuf, message: String },
    #[error("pack digest mismatch: manifest says {expected}, files hash to {actual}")]
    DigestMismatch { expected: String, actual: String },
    #[error("asset pack has no sprite for {0:?}")]
    UnknownStimulus(StimulusId),
    #[error("invalid canvas: {0}")]
    InvalidCanvas(String),
    #[error("bad pack layout: {0}")]
    BadLayout(String),
    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
