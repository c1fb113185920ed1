//! Two-stage PBR material reconstruction for meshes with known geometry.
//!
//! Stage one predicts albedo and roughness/metallic for every input photo, one round at a time
//! with a fixed reference view, and bakes the results into a UV atlas. Stage two picks extra
//! viewpoints that raise texel coverage, renders the partially filled atlas into them as priors,
//! asks the predictor to fill the gaps, and bakes those back group by group.
//!
//! The material network itself sits behind [`predictor::MaterialPredictor`].

pub mod bake;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod predictor;
pub mod raster;
pub mod scene;
pub mod shapes;
pub mod types;
pub mod views;
pub mod vmca;

pub use error::{Error, Result};
