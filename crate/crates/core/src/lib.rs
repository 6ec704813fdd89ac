//! Multi-view consistent SVG generation: spherical view scheduling,
//! reference-guided mask propagation with residual discovery, per-part
//! vectorization, vector-domain consolidation, CIEDE2000 palette alignment
//! and cross-view stability metrics.

pub mod colorsci;
pub mod formats;
pub mod maskops;
pub mod metrics;
pub mod pipeline;
pub mod propagate;
pub mod synthscene;
pub mod vectordoc;
pub mod viewsphere;
