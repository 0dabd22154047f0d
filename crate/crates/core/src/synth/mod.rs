//! Synthetic data: the multi-domain image benchmark and Gaussian GLM data.

pub mod domains;
pub mod glm_data;
pub mod ldtn;
pub mod store;

pub use domains::{
    default_specs, generate_benchmark, BenchmarkConfig, DomainSpec, MultiDomainDataset, Split,
};
pub use glm_data::{generate_vector_glm, identity, GlmVectorDataset};
pub use store::{load_benchmark, load_glm, save_benchmark, save_glm};
