//! Graph-based image segmentation.
//!
//! An image is over-segmented into super-pixels (SUTP boundary evolution on a
//! regular or quadtree grid, or SLIC), the super-pixels become nodes of a
//! colour-similarity graph, and objects are recovered as communities found by
//! fast-greedy modularity maximization. The [`metrics`] module scores a
//! segmentation against ground truth with the adjustable object-oriented
//! measure (AOM).
//!
//! ```
//! use segcomm::{color::RgbImage, pipeline::{segment_image, Config}};
//!
//! let mut img = RgbImage::filled(40, 40, [20, 20, 200]);
//! for y in 0..40 {
//!     for x in 20..40 {
//!         img.set(x, y, [230, 200, 20]);
//!     }
//! }
//! let out = segment_image(&img, &Config::default()).unwrap();
//! assert_eq!(out.segmentation.region_count(), 2);
//! ```

pub mod color;
pub mod community;
mod error;
pub mod experiment;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod spgraph;
pub mod superpixel;

pub use error::{Error, Result};
