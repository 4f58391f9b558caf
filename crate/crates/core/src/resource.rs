//! Analytical TCAM, stage, register and recirculation estimates.
//!
//! Tables are packed first: feature tables need at least one stage per
//! `max_parallel_tables_per_stage` slots, and every table class needs enough
//! stages to hold its TCAM bits. The remaining stages hold per-flow
//! registers, which bounds the number of concurrent flows.

use serde::{Deserialize, Serialize};

use crate::partition::PartitionConfig;
use crate::rulegen::CompiledTables;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetProfile {
    pub name: String,
    pub num_stages: u32,
    pub tcam_bits_total: u64,
    pub tcam_bits_per_stage: u64,
    /// TCAM block width; entries are charged key + mask bits rounded up to
    /// a whole number of blocks.
    pub tcam_block_width: u32,
    pub max_parallel_tables_per_stage: u32,
    pub register_bits_per_stage: u64,
    pub recirc_bandwidth_bps: f64,
    pub control_packet_bits: u64,
    pub sid_bits: u32,
    pub counter_bits: u32,
}

impl Default for TargetProfile {
    /// Tofino1-class device: 12 stages, 6.4 Mb of TCAM, 100 Gb/s of
    /// recirculation. `register_bits_per_stage` is calibrated so that ten
    /// register stages hold 96,000 flows at k = 4 and 67,555 at k = 6
    /// (32-bit features).
    fn default() -> Self {
        TargetProfile {
            name: "tofino1".into(),
            num_stages: 12,
            tcam_bits_total: 6_400_000,
            tcam_bits_per_stage: 6_400_000 / 12,
            tcam_block_width: 44,
            max_parallel_tables_per_stage: 16,
            register_bits_per_stage: 1_459_200,
            recirc_bandwidth_bps: 100e9,
            control_packet_bits: 512,
            sid_bits: 8,
            counter_bits: 16,
        }
    }
}

impl TargetProfile {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_stages", self.num_stages as u64),
            ("tcam_bits_total", self.tcam_bits_total),
            ("tcam_bits_per_stage", self.tcam_bits_per_stage),
            ("tcam_block_width", self.tcam_block_width as u64),
            ("max_parallel_tables_per_stage", self.max_parallel_tables_per_stage as u64),
            ("register_bits_per_stage", self.register_bits_per_stage),
            ("control_packet_bits", self.control_packet_bits),
            ("sid_bits", self.sid_bits as u64),
            ("counter_bits", self.counter_bits as u64),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("profile field `{name}` must be positive")));
        }
        if !(self.recirc_bandwidth_bps > 0.0) {
            return Err(Error::config("profile field `recirc_bandwidth_bps` must be positive"));
        }
        Ok(())
    }

    /// Bits charged per TCAM entry for a key of `key_width` bits.
    pub fn entry_cost(&self, key_width: u32) -> u64 {
        let b = self.tcam_block_width as u64;
        (2 * key_width as u64).div_ceil(b) * b
    }
}

/// Traffic environment used to turn per-flow recirculations into bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentModel {
    pub name: String,
    /// New flows per second.
    pub arrival_rate: f64,
    pub mean_duration_s: f64,
    /// Concurrently active flows the deployment must hold.
    pub active_flows: u64,
}

impl EnvironmentModel {
    /// Steady state: arrival rate = active flows / mean duration.
    pub fn new(name: &str, mean_duration_s: f64, active_flows: u64) -> Result<Self> {
        let env = EnvironmentModel {
            name: name.into(),
            arrival_rate: active_flows as f64 / mean_duration_s,
            mean_duration_s,
            active_flows,
        };
        env.validate()?;
        Ok(env)
    }

    /// `WS` (web server, 80 s mean duration) or `HD` (Hadoop, 40 s).
    pub fn preset(name: &str, active_flows: u64) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "WS" => Self::new("WS", 80.0, active_flows),
            "HD" => Self::new("HD", 40.0, active_flows),
            other => Err(Error::config(format!("unknown environment `{other}`; expected WS or HD"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate > 0.0 && self.mean_duration_s > 0.0 && self.active_flows > 0) {
            return Err(Error::config("environment rates must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub feature_entries: u64,
    pub model_entries: u64,
    pub tcam_entries: u64,
    pub feature_key_width: u32,
    pub model_key_width: u32,
    pub tcam_bits: u64,
    /// `k * feature_width`.
    pub feature_register_bits: u64,
    pub dependency_bits: u64,
    /// Feature registers + SID + packet counter + dependency registers.
    pub per_flow_register_bits: u64,
    pub stages_for_tables: u32,
    pub stages_for_registers: u32,
    pub flows_supported: u64,
}

/// Estimates resources for compiled tables. `dependency_bits` is the
/// per-flow dependency-register charge (see
/// [`FeatureCatalog::dependency_bits`](crate::FeatureCatalog::dependency_bits)).
pub fn estimate(
    tables: &CompiledTables,
    config: &PartitionConfig,
    profile: &TargetProfile,
    dependency_bits: u64,
) -> ResourceReport {
    let l = &tables.layout;
    let feature_entries = tables.feature_entries() as u64;
    let model_entries = tables.model_entries() as u64;
    let feature_tcam = feature_entries * profile.entry_cost(l.feature_key_width());
    let model_tcam = model_entries * profile.entry_cost(l.model_key_width());
    let feature_register_bits = config.k as u64 * tables.feature_width.bits() as u64;
    let per_flow = feature_register_bits + profile.sid_bits as u64 + profile.counter_bits as u64 + dependency_bits;
    let stages_for_tables = table_stages(profile, config.k, feature_tcam, model_tcam);
    let stages_for_registers = profile.num_stages.saturating_sub(stages_for_tables);
    ResourceReport {
        feature_entries,
        model_entries,
        tcam_entries: feature_entries + model_entries,
        feature_key_width: l.feature_key_width(),
        model_key_width: l.model_key_width(),
        tcam_bits: feature_tcam + model_tcam,
        feature_register_bits,
        dependency_bits,
        per_flow_register_bits: per_flow,
        stages_for_tables,
        stages_for_registers,
        flows_supported: flows_supported(profile, stages_for_registers, per_flow),
    }
}

/// Stages needed by the feature tables (`k` parallel tables) and the model
/// table, given their TCAM bits.
pub fn table_stages(profile: &TargetProfile, k: usize, feature_tcam_bits: u64, model_tcam_bits: u64) -> u32 {
    let per_stage = profile.tcam_bits_per_stage;
    let feature = if k == 0 {
        0
    } else {
        (k as u64)
            .div_ceil(profile.max_parallel_tables_per_stage as u64)
            .max(feature_tcam_bits.div_ceil(per_stage))
    };
    let model = model_tcam_bits.div_ceil(per_stage).max(1);
    (feature + model).min(u32::MAX as u64) as u32
}

pub fn flows_supported(profile: &TargetProfile, register_stages: u32, per_flow_bits: u64) -> u64 {
    if per_flow_bits == 0 {
        return 0;
    }
    register_stages as u64 * profile.register_bits_per_stage / per_flow_bits
}

/// Expected control packets per flow: one per partition boundary the flow
/// crosses. `exit_fractions[j]` is the share of flows reaching partition `j`
/// that exit there.
pub fn recircs_per_flow(num_partitions: usize, exit_fractions: &[f64]) -> f64 {
    let mut reach = 1.0;
    let mut total = 0.0;
    for j in 0..num_partitions.saturating_sub(1) {
        reach *= 1.0 - exit_fractions.get(j).copied().unwrap_or(0.0).clamp(0.0, 1.0);
        total += reach;
    }
    total
}

/// Recirculation bandwidth: arrival rate x recirculations per flow x control
/// packet size. A single-partition model never recirculates.
pub fn estimate_recirc(
    config: &PartitionConfig,
    env: &EnvironmentModel,
    exit_fractions: &[f64],
    profile: &TargetProfile,
) -> f64 {
    env.arrival_rate * recircs_per_flow(config.num_partitions(), exit_fractions) * profile.control_packet_bits as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "lowercase")]
pub enum Verdict {
    Feasible,
    /// Names the first violated budget: `tcam`, `stages`, `flows` or `recirc`.
    Infeasible(String),
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible)
    }
}

pub fn check_feasibility(
    report: &ResourceReport,
    profile: &TargetProfile,
    required_flows: u64,
    recirc_bps: f64,
) -> Verdict {
    if report.tcam_bits > profile.tcam_bits_total {
        Verdict::Infeasible("tcam".into())
    } else if report.stages_for_tables > profile.num_stages {
        Verdict::Infeasible("stages".into())
    } else if report.flows_supported < required_flows {
        Verdict::Infeasible("flows".into())
    } else if recirc_bps > profile.recirc_bandwidth_bps {
        Verdict::Infeasible("recirc".into())
    } else {
        Verdict::Feasible
    }
}
