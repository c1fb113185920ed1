//! Meshes, cameras, images, the UV atlas, run configuration and their file formats.

mod atlas;
mod camera;
mod config;
mod image;
pub mod io;
mod mesh;

pub use atlas::{texel_center_uv, uv_to_texel, UVMaterialAtlas};
pub use camera::{Camera, CameraRecord};
pub use config::{GenerationBakeScope, PipelineConfig, ReferencePolicy, SPrimeMode};
pub use image::{ImageBuffer, MaterialView};
pub use mesh::{wrap_uv, Aabb, Triangle, TriangleMesh};
