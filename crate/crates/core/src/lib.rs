//! Partitioned decision-tree inference for match-action pipelines.
//!
//! A flow is split into `p` packet windows. Each window is classified by one
//! small subtree that only needs `k` stateful feature registers; when a window
//! closes, the subtree's leaf either emits the final class or names the
//! subtree that will process the next window. A single control packet per
//! window (recirculation) advances the subtree id and clears the registers, so
//! the register footprint per flow stays constant no matter how many distinct
//! features the whole model uses.
//!
//! The crate is organised along the toolchain:
//!
//! * [`flowdata`]: trace ingestion, windowing and fixed-point features.
//! * [`dtree`]: budget-aware CART subtrees.
//! * [`partition`]: recursive partitioned training, offline inference, the
//!   monolithic top-k baseline and feature-density reports.
//! * [`rulegen`]: range-mark compilation into ternary feature/model tables.
//! * [`resource`]: TCAM, stage, register and recirculation estimates.
//! * [`pipesim`]: a packet-level simulator of the partitioned data plane.
//! * [`dse`]: design-space search producing an accuracy/flow-count frontier.

pub mod config;
pub mod dse;
pub mod dtree;
mod error;
pub mod flowdata;
pub mod metrics;
pub mod partition;
pub mod pipesim;
pub mod resource;
pub mod rulegen;
pub mod synth;

pub use error::{Error, Result};

pub use dtree::{NodeId, Subtree};
pub use flowdata::{
    BitWidth, FeatureCatalog, FlowKey, FlowTrace, PacketRecord, WindowedDataset, WindowedSample,
};
pub use partition::{PartitionConfig, PartitionedModel, Route};
pub use resource::{EnvironmentModel, ResourceReport, TargetProfile};
pub use rulegen::CompiledTables;

/// Class identifier carried by labels, leaves and digests.
pub type ClassLabel = u32;

/// Subtree identifier. Id 0 is reserved for "unclassified"; trained models
/// number their subtrees from 1 in breadth-first order across partitions.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(transparent)]
pub struct Sid(pub u32);

impl Sid {
    pub const UNCLASSIFIED: Sid = Sid(0);
}

impl std::fmt::Display for Sid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}
