//! Packet-level simulator of the partitioned data plane.
//!
//! Per flow slot the register file holds the active SID, a packet counter,
//! the catalog's dependency registers and exactly `k` feature registers.
//! Each packet updates the registers bound to the current SID; when the
//! counter reaches the current window boundary the feature and model tables
//! run on the `k` registers. A next-SID result is applied by one
//! recirculated control packet that also clears the feature and dependency
//! registers; a final class is reported as a digest and frees the slot.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::flowdata::{window_boundaries, FeatureCatalog, FlowKey, FlowTrace, PacketRecord, RegisterUpdater};
use crate::partition::Route;
use crate::rulegen::CompiledTables;
use crate::{ClassLabel, Error, Result, Sid};

/// How flows map to register slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexMode {
    /// One private slot per flow.
    Exact,
    /// CRC32 of the 5-tuple modulo the slot count; colliding flows share.
    Hashed(usize),
}

/// Where window boundaries come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryMode {
    /// From the flow size carried with every packet: boundary `j` is
    /// `ceil(j * F / p)`.
    DeclaredSize,
    /// A window closes every `stride` packets; a flow that ends before its
    /// last boundary gets a partial-window lookup.
    CountOnly(u64),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig<'a> {
    pub tables: &'a CompiledTables,
    pub catalog: &'a FeatureCatalog,
    pub indexing: IndexMode,
    pub boundaries: BoundaryMode,
    /// Record a line-protocol event log.
    pub debug: bool,
    /// Bits per recirculated control packet.
    pub control_packet_bits: u64,
}

impl<'a> PipelineConfig<'a> {
    pub fn new(tables: &'a CompiledTables, catalog: &'a FeatureCatalog) -> Self {
        PipelineConfig {
            tables,
            catalog,
            indexing: IndexMode::Exact,
            boundaries: BoundaryMode::DeclaredSize,
            debug: false,
            control_packet_bits: 512,
        }
    }

    fn validate(&self) -> Result<()> {
        if let IndexMode::Hashed(0) = self.indexing {
            return Err(Error::config("hashed indexing needs at least one slot"));
        }
        if let BoundaryMode::CountOnly(0) = self.boundaries {
            return Err(Error::config("count-only stride must be positive"));
        }
        Ok(())
    }
}

/// One packet arrival.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimPacket {
    pub flow_id: u64,
    pub key: FlowKey,
    pub packet: PacketRecord,
    /// Declared packet count of the flow.
    pub flow_len: u64,
}

/// Merges flows into one arrival sequence ordered by timestamp; ties keep
/// flow id order, then packet order.
pub fn events_from_flows(flows: &[FlowTrace]) -> Vec<SimPacket> {
    let mut ev: Vec<(u64, u64, usize, SimPacket)> = flows
        .iter()
        .flat_map(|f| {
            f.packets.iter().enumerate().map(move |(i, p)| {
                (
                    p.ts_us,
                    f.flow_id,
                    i,
                    SimPacket {
                        flow_id: f.flow_id,
                        key: f.key,
                        packet: *p,
                        flow_len: f.packets.len() as u64,
                    },
                )
            })
        })
        .collect();
    ev.sort_by_key(|e| (e.0, e.1, e.2));
    ev.into_iter().map(|e| e.3).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowOutcome {
    pub id: u64,
    pub class: Option<ClassLabel>,
    /// Packets of this flow seen up to and including the digest packet.
    pub ttd_pkts: u64,
    /// Digest timestamp minus the flow's first timestamp.
    pub ttd_us: u64,
    pub recircs: u64,
    /// Subtrees that ran a lookup for this flow.
    pub partitions: u64,
    /// Decided by a lookup on a partial window at flow end.
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTotals {
    pub flows: u64,
    pub packets: u64,
    pub digests: u64,
    pub lookups: u64,
    pub recircs: u64,
    pub control_bits: u64,
    pub truncated: u64,
    pub faults: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub per_flow: Vec<FlowOutcome>,
    pub totals: SimTotals,
    /// Flows that landed in an already-occupied slot index.
    pub collisions: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<String>,
}

/// Per-slot register arrays.
#[derive(Debug, Clone)]
pub struct RegisterFile {
    k: usize,
    deps_per_slot: usize,
    pub sid: Vec<u32>,
    pub counter: Vec<u64>,
    /// Counter value at the last closed boundary.
    pub window_start: Vec<u64>,
    pub deps: Vec<u128>,
    pub features: Vec<u32>,
}

impl RegisterFile {
    pub fn new(slots: usize, k: usize, deps_per_slot: usize) -> Self {
        RegisterFile {
            k,
            deps_per_slot,
            sid: vec![0; slots],
            counter: vec![0; slots],
            window_start: vec![0; slots],
            deps: vec![0; slots * deps_per_slot],
            features: vec![0; slots * k],
        }
    }

    pub fn len(&self) -> usize {
        self.sid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sid.is_empty()
    }

    fn grow(&mut self) -> usize {
        self.sid.push(0);
        self.counter.push(0);
        self.window_start.push(0);
        self.deps.extend(std::iter::repeat(0).take(self.deps_per_slot));
        self.features.extend(std::iter::repeat(0).take(self.k));
        self.sid.len() - 1
    }

    pub fn feature_regs(&self, slot: usize) -> &[u32] {
        &self.features[slot * self.k..(slot + 1) * self.k]
    }

    pub fn dep_regs(&self, slot: usize) -> &[u128] {
        &self.deps[slot * self.deps_per_slot..(slot + 1) * self.deps_per_slot]
    }

    /// Zeroes feature and dependency registers (recirculation).
    fn clear_window(&mut self, slot: usize) {
        self.features[slot * self.k..(slot + 1) * self.k].fill(0);
        self.deps[slot * self.deps_per_slot..(slot + 1) * self.deps_per_slot].fill(0);
    }

    fn reset(&mut self, slot: usize) {
        self.clear_window(slot);
        self.sid[slot] = 0;
        self.counter[slot] = 0;
        self.window_start[slot] = 0;
    }
}

#[derive(Debug, Default)]
struct FlowState {
    outcome: Option<FlowOutcome>,
    first_ts: u64,
    seen: u64,
    recircs: u64,
    partitions: u64,
}

/// A single-threaded simulator instance.
pub struct Simulator<'a> {
    cfg: PipelineConfig<'a>,
    updater: RegisterUpdater<'a>,
    regs: RegisterFile,
    exact_slots: HashMap<u64, usize>,
    used_slots: HashSet<usize>,
    flows: BTreeMap<u64, FlowState>,
    totals: SimTotals,
    events: Vec<String>,
}

impl<'a> Simulator<'a> {
    pub fn new(cfg: PipelineConfig<'a>) -> Result<Self> {
        cfg.validate()?;
        let updater = cfg.catalog.updater();
        let slots = match cfg.indexing {
            IndexMode::Exact => 0,
            IndexMode::Hashed(s) => s,
        };
        let regs = RegisterFile::new(slots, cfg.tables.k, updater.num_dependency_registers());
        Ok(Simulator {
            cfg,
            updater,
            regs,
            exact_slots: HashMap::new(),
            used_slots: HashSet::new(),
            flows: BTreeMap::new(),
            totals: SimTotals::default(),
            events: Vec::new(),
        })
    }

    pub fn registers(&self) -> &RegisterFile {
        &self.regs
    }

    fn slot_for(&mut self, p: &SimPacket) -> usize {
        match self.cfg.indexing {
            IndexMode::Exact => match self.exact_slots.get(&p.flow_id) {
                Some(&s) => s,
                None => {
                    let s = self.regs.grow();
                    self.exact_slots.insert(p.flow_id, s);
                    s
                }
            },
            IndexMode::Hashed(n) => crc32fast::hash(&p.key.canonical_bytes()) as usize % n,
        }
    }

    fn log(&mut self, line: impl FnOnce() -> String) {
        if self.cfg.debug {
            self.events.push(line());
        }
    }

    /// Window end (as a counter value) of partition `j` for a flow.
    fn boundary(&self, j: usize, flow_len: u64) -> u64 {
        let p = self.cfg.tables.num_partitions;
        match self.cfg.boundaries {
            BoundaryMode::DeclaredSize => window_boundaries(flow_len as usize, p)
                .get(j)
                .map(|&b| b as u64)
                .unwrap_or(u64::MAX),
            BoundaryMode::CountOnly(stride) => (j as u64 + 1) * stride,
        }
    }

    fn partition_of(&self, sid: Sid) -> Option<usize> {
        self.cfg.tables.sid_partition.get(&sid).copied()
    }

    /// Processes one packet.
    pub fn process_packet(&mut self, p: &SimPacket) {
        self.totals.packets += 1;
        let slot = self.slot_for(p);
        self.used_slots.insert(slot);
        let st = self.flows.entry(p.flow_id).or_default();
        if st.seen == 0 {
            st.first_ts = p.packet.ts_us;
        }
        st.seen += 1;
        let seen = st.seen;
        let finished = st.outcome.is_some();

        if self.regs.sid[slot] == 0 {
            self.regs.sid[slot] = self.cfg.tables.initial_sid.0;
            self.regs.counter[slot] = 0;
            self.regs.window_start[slot] = 0;
        }
        self.regs.counter[slot] += 1;
        let counter = self.regs.counter[slot];
        let sid = Sid(self.regs.sid[slot]);
        let window_pos = counter - self.regs.window_start[slot];
        let tables: &'a CompiledTables = self.cfg.tables;
        let bound: &[usize] = tables
            .slot_features
            .get(&sid)
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let k = self.regs.k;
        let nd = self.regs.deps_per_slot;
        self.updater.update(
            &mut self.regs.deps[slot * nd..(slot + 1) * nd],
            &mut self.regs.features[slot * k..slot * k + bound.len()],
            bound,
            &p.packet,
            window_pos,
            tables.feature_width,
        );
        self.log(|| format!("pkt flow={} slot={slot} sid={sid} counter={counter}", p.flow_id));

        if finished {
            // Hashed mode: a flow already decided keeps driving shared state
            // but cannot be decided again.
            return;
        }

        let Some(mut part) = self.partition_of(sid) else {
            self.fault(p, slot, format!("unknown SID {sid}"));
            return;
        };
        while counter == self.boundary(part, p.flow_len) {
            if self.lookup_and_apply(p, slot, &mut part, seen, false) {
                return;
            }
        }

        let is_last = seen == p.flow_len;
        if is_last {
            // Flow ends mid-window: decide on the partial window, then walk
            // any remaining partitions on cleared registers.
            loop {
                if self.lookup_and_apply(p, slot, &mut part, seen, true) {
                    return;
                }
            }
        }
    }

    /// Runs the tables for the slot's current SID and applies the result.
    /// Returns true once the flow is decided or faulted.
    fn lookup_and_apply(&mut self, p: &SimPacket, slot: usize, part: &mut usize, seen: u64, truncated: bool) -> bool {
        let sid = Sid(self.regs.sid[slot]);
        self.totals.lookups += 1;
        if let Some(st) = self.flows.get_mut(&p.flow_id) {
            st.partitions += 1;
        }
        let result = self.cfg.tables.lookup_slots(sid, self.regs.feature_regs(slot));
        match result {
            Err(e) => {
                self.fault(p, slot, e.to_string());
                true
            }
            Ok(Route::NextSid(next)) => {
                let Some(np) = self.partition_of(next).filter(|&np| np == *part + 1) else {
                    self.fault(p, slot, format!("route to {next} leaves partition order"));
                    return true;
                };
                self.totals.recircs += 1;
                self.totals.control_bits += self.cfg.control_packet_bits;
                if let Some(st) = self.flows.get_mut(&p.flow_id) {
                    st.recircs += 1;
                }
                self.regs.sid[slot] = next.0;
                self.regs.clear_window(slot);
                self.regs.window_start[slot] = self.regs.counter[slot];
                *part = np;
                self.log(|| format!("recirc flow={} slot={slot} sid={sid}->{next}", p.flow_id));
                false
            }
            Ok(Route::FinalClass(c)) => {
                let st = self.flows.get_mut(&p.flow_id).expect("flow state exists");
                st.outcome = Some(FlowOutcome {
                    id: p.flow_id,
                    class: Some(c),
                    ttd_pkts: seen,
                    ttd_us: p.packet.ts_us - st.first_ts,
                    recircs: st.recircs,
                    partitions: st.partitions,
                    truncated,
                    fault: None,
                });
                self.totals.digests += 1;
                if truncated {
                    self.totals.truncated += 1;
                }
                self.regs.reset(slot);
                self.log(|| format!("digest flow={} slot={slot} sid={sid} class={c} truncated={truncated}", p.flow_id));
                true
            }
        }
    }

    fn fault(&mut self, p: &SimPacket, slot: usize, msg: String) {
        self.totals.faults += 1;
        let st = self.flows.get_mut(&p.flow_id).expect("flow state exists");
        st.outcome = Some(FlowOutcome {
            id: p.flow_id,
            class: None,
            ttd_pkts: st.seen,
            ttd_us: p.packet.ts_us - st.first_ts,
            recircs: st.recircs,
            partitions: st.partitions,
            truncated: false,
            fault: Some(msg.clone()),
        });
        self.regs.reset(slot);
        self.log(|| format!("fault flow={} slot={slot} msg={msg:?}", p.flow_id));
    }

    pub fn finish(mut self) -> SimStats {
        let mut per_flow = Vec::with_capacity(self.flows.len());
        for (id, st) in std::mem::take(&mut self.flows) {
            per_flow.push(st.outcome.unwrap_or(FlowOutcome {
                id,
                class: None,
                ttd_pkts: st.seen,
                ttd_us: 0,
                recircs: st.recircs,
                partitions: st.partitions,
                truncated: false,
                fault: Some("flow ended without a decision".into()),
            }));
        }
        self.totals.flows = per_flow.len() as u64;
        let distinct_slots = match self.cfg.indexing {
            IndexMode::Exact => per_flow.len(),
            IndexMode::Hashed(_) => self.used_slots.len(),
        };
        SimStats {
            collisions: (per_flow.len() - distinct_slots) as u64,
            per_flow,
            totals: self.totals,
            events: self.events,
        }
    }
}

/// Folds `process_packet` over time-ordered events.
pub fn run_trace(cfg: PipelineConfig<'_>, events: &[SimPacket]) -> Result<SimStats> {
    if events.windows(2).any(|w| w[1].packet.ts_us < w[0].packet.ts_us) {
        return Err(Error::config("events are not time-ordered"));
    }
    let mut sim = Simulator::new(cfg)?;
    for e in events {
        sim.process_packet(e);
    }
    Ok(sim.finish())
}

/// Expected number of colliding flows when `n` flows hash uniformly into
/// `s` slots: `n - s * (1 - (1 - 1/s)^n)`.
pub fn expected_collisions(n: u64, s: u64) -> f64 {
    let s = s as f64;
    n as f64 - s * (1.0 - (1.0 - 1.0 / s).powf(n as f64))
}

/// Empirical CDF points `(value, fraction <= value)` over decided flows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtdDistribution {
    pub pkts: Vec<(u64, f64)>,
    pub us: Vec<(u64, f64)>,
}

fn cdf(mut xs: Vec<u64>) -> Vec<(u64, f64)> {
    xs.sort_unstable();
    let n = xs.len() as f64;
    let mut out: Vec<(u64, f64)> = Vec::new();
    for (i, x) in xs.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = frac,
            _ => out.push((*x, frac)),
        }
    }
    out
}

pub fn measure_ttd(stats: &SimStats) -> TtdDistribution {
    let decided: Vec<&FlowOutcome> = stats.per_flow.iter().filter(|f| f.class.is_some()).collect();
    TtdDistribution {
        pkts: cdf(decided.iter().map(|f| f.ttd_pkts).collect()),
        us: cdf(decided.iter().map(|f| f.ttd_us).collect()),
    }
}

impl TtdDistribution {
    /// CSV `metric,value,cdf`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value,cdf\n");
        for (v, c) in &self.pkts {
            let _ = writeln!(s, "ttd_pkts,{v},{c}");
        }
        for (v, c) in &self.us {
            let _ = writeln!(s, "ttd_us,{v},{c}");
        }
        s
    }
}
