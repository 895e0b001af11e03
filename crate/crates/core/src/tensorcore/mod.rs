//! Feature-map storage, Sim(2) algebra, bilinear sampling and warping.
//!
//! Points are `[row, col]` offsets measured from a map's origin, which
//! defaults to the pixel center `((H-1)/2, (W-1)/2)`. All transforms act
//! on such offsets.

mod feature_map;
mod sample;
mod sim2;
pub mod srtn;
mod warp;

pub use feature_map::FeatureMap;
pub use sample::{bilinear_sample, InterpSample};
pub use sim2::{angle_distance, make_sim2, normalize_angle, rotation, Mat2, Sim2Transform};
pub use warp::{rotate_quarter_turns, transform, warp};
