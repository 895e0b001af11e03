//! Datasets: IDX ingestion, SRT-distorted variants, synthetic patterns and
//! PGM images.

mod dataset;
mod idx;
pub mod pgm;
mod srt;
mod synth;

pub use dataset::{DatasetMeta, Distortion, LabeledDataset};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels, read_maybe_gz};
pub use srt::{draw_distortion, make_srt_variant, SrtMode, SrtRanges, CANVAS};
pub use synth::{
    synth_pattern, synth_pattern_with_period, synth_texture, PatternKind, BASE_PERIOD,
    TEXTURE_WAVES,
};
