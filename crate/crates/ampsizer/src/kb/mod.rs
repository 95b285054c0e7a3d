//! Topology descriptors, the built-in catalog and the reasoning cache.

mod cache;
mod catalog;
mod descriptor;
pub mod expr;

use std::path::PathBuf;

pub use cache::{CacheEntry, CacheKey, ReasoningCache, CACHE_DIR_ENV, CACHE_FORMAT_VERSION};
pub use catalog::{builtin, builtin_names, catalog};
pub use descriptor::{
    CoefficientSpec, DescriptorFile, DeviceSpec, Relation, RelationKind, RelationSpec, StageSpec,
    TopologyDescriptor, VariableKind, VariableRole, VariableSpec, FORMAT_VERSION, GLOBAL_STAGE,
};

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("cannot parse descriptor {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("invalid descriptor: {subject}: {reason}")]
    Validation { subject: String, reason: String },
    #[error("cache storage error at {}: {source}", path.display())]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown topology '{name}' (available: {available})")]
    UnknownTopology { name: String, available: String },
}

impl KbError {
    /// The symbol or field a validation error refers to.
    pub fn subject(&self) -> Option<&str> {
        match self {
            KbError::Validation { subject, .. } => Some(subject),
            _ => None,
        }
    }
}
