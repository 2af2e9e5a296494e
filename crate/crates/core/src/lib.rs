//! Tool-guided visual reasoning over illusion images: an immutable image
//! registry, raster tools, a bounded tool-calling agent loop with prompt
//! routing and rescue, pluggable model backends, a batch evaluation harness
//! and a synthetic stimulus generator.

pub mod agent;
pub mod harness;
pub mod model;
pub mod raster;
pub mod registry;
pub mod routing;
pub mod stimulus;
pub mod tools;
