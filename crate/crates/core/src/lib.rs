//! Targeting for cryo-EM grid images.
//!
//! The pipeline stages are:
//!
//! 1. **imgio**: MRC/PGM/PNG/PMAP I/O, z-score normalization, Gaussian smoothing.
//! 2. **segment**: two-component Poisson mixture over pixel intensities and
//!    flood-fill connected components of the bright class.
//! 3. **squares**: convex hulls, a single shared grid angle minimizing total
//!    bounding-rectangle area, and rotated square crops.
//! 4. **classify**: summary-statistic features, logistic regression, random
//!    forest, permutation importance and ranking metrics.
//! 5. **lattice**: centroids of a hole probability map, anchor-pair search for
//!    the minimum-cost square lattice, and lattice crops.
//! 6. **evalmatch**: one-to-one matching of predicted regions against operator
//!    selections with per-session averaging.
//! 7. **synth**: synthetic low- and medium-magnification images with exact
//!    ground truth.

pub mod classify;
pub mod error;
pub mod evalmatch;
pub mod imgio;
pub mod lattice;
pub mod optimize;
pub mod segment;
pub mod squares;
pub mod synth;

pub use error::{Error, Result};
pub use imgio::{GrayImage, PixelMask, ProbabilityMap, SmoothingParam};
