//! Sizing of multi-stage operational amplifiers.
//!
//! The crate turns a topology descriptor and a performance spec into device
//! sizes. Targets for every transconductance and compensation element come
//! from pole placement ([`reasoning`]); per-stage sub-problems match those
//! targets with a square-law device model ([`device`], [`sizing`]); a
//! black-box optimizer ([`optimizers`]) then minimizes supply current under
//! the spec constraints. [`bench`] compares that pipeline with the raw
//! optimizers.

pub mod analysis;
pub mod bench;
mod clock;
pub mod device;
pub mod kb;
pub mod optimizers;
pub mod reasoning;
pub mod sizing;

pub use analysis::{ac_metrics, assemble_tf, poles_zeros, AcMetrics, AnalysisError, RationalTransferFunction};
pub use device::{evaluate_devices, estimate_wl, DeviceParams, ProcessProfile, SmallSignalParams};
pub use kb::{builtin, catalog, ReasoningCache, TopologyDescriptor};
pub use reasoning::{decompose, solve_targets, DerivedTargets, DesignSpec, ReasoningConfig, SubProblem};
pub use optimizers::{abc_optimize, penalize, turbo1, turbo_optimize, OptResult, OptimizerKind, SearchSpace};
pub use sizing::{design, global_refine, solve_subproblem, PipelineConfig, SizedDesign};
