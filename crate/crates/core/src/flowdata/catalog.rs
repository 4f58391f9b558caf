use serde::{Deserialize, Serialize};

use super::{BitWidth, Direction, PacketRecord, TcpFlags};
use crate::{Error, Result};

/// Aggregation applied to a feature's per-packet observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operator {
    Count,
    Sum,
    Min,
    Max,
    /// Floor of the arithmetic mean.
    Mean,
    /// Floor of the population variance.
    Var,
    Last,
    FlagCount,
}

impl Operator {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "count" => Operator::Count,
            "sum" => Operator::Sum,
            "min" => Operator::Min,
            "max" => Operator::Max,
            "mean" => Operator::Mean,
            "var" => Operator::Var,
            "last" => Operator::Last,
            "flag-count" => Operator::FlagCount,
            other => return Err(Error::config(format!("unknown feature operator `{other}`"))),
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Operator::Count => "count",
            Operator::Sum => "sum",
            Operator::Min => "min",
            Operator::Max => "max",
            Operator::Mean => "mean",
            Operator::Var => "var",
            Operator::Last => "last",
            Operator::FlagCount => "flag-count",
        }
    }

    fn needs_source(self) -> bool {
        !matches!(self, Operator::Count | Operator::FlagCount)
    }
}

/// Per-packet quantity a feature aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    /// Packet size in bytes.
    Size,
    /// Gap to the previous packet of the same window; absent on the first.
    Iat,
    /// Time since the window's first packet.
    Elapsed,
}

/// Packet filter applied before a feature observes a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Guard {
    #[default]
    Any,
    Fwd,
    Bwd,
}

impl Guard {
    fn admits(self, pkt: &PacketRecord) -> bool {
        match self {
            Guard::Any => true,
            Guard::Fwd => pkt.dir == Direction::Fwd,
            Guard::Bwd => pkt.dir == Direction::Bwd,
        }
    }
}

/// Intermediate state a stateful feature needs besides its own register.
///
/// These are the dependency-chain registers: they live in earlier pipeline
/// stages than the feature registers and are cleared at every window
/// boundary together with them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Intermediate {
    LastTimestamp,
    FirstTimestamp,
    ObsCount(Source, Guard),
    ObsSum(Source, Guard),
    ObsSumSq(Source, Guard),
}

impl Intermediate {
    /// Register bits charged for this intermediate at the given width.
    pub fn bits(self, width: BitWidth) -> u64 {
        match self {
            Intermediate::ObsSumSq(..) => 2 * width.bits() as u64,
            _ => width.bits() as u64,
        }
    }
}

/// Serializable description of one catalog entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<Guard>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

/// A validated catalog entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feature {
    pub name: String,
    pub op: Operator,
    pub source: Option<Source>,
    pub guard: Guard,
    pub flag: TcpFlags,
}

impl Feature {
    fn new(name: &str, op: Operator, source: Option<Source>, guard: Guard) -> Self {
        Feature {
            name: name.to_string(),
            op,
            source,
            guard,
            flag: TcpFlags::empty(),
        }
    }

    fn flag_count(name: &str, flag: TcpFlags) -> Self {
        Feature {
            flag,
            ..Feature::new(name, Operator::FlagCount, None, Guard::Any)
        }
    }

    fn from_spec(spec: &FeatureSpec) -> Result<Self> {
        let op = Operator::parse(&spec.op)?;
        let guard = spec.guard.unwrap_or_default();
        if op.needs_source() != spec.source.is_some() {
            return Err(Error::config(format!(
                "feature `{}`: operator {} {} a source",
                spec.name,
                op.as_str(),
                if op.needs_source() { "requires" } else { "takes no" }
            )));
        }
        let flag = match (op, spec.flag.as_deref()) {
            (Operator::FlagCount, Some(letters)) => TcpFlags::parse(letters)
                .filter(|f| *f != TcpFlags::empty())
                .ok_or_else(|| Error::config(format!("feature `{}`: bad flag set", spec.name)))?,
            (Operator::FlagCount, None) => {
                return Err(Error::config(format!("feature `{}`: flag-count needs a flag", spec.name)))
            }
            (_, Some(_)) => {
                return Err(Error::config(format!("feature `{}`: only flag-count takes a flag", spec.name)))
            }
            (_, None) => TcpFlags::empty(),
        };
        Ok(Feature {
            name: spec.name.clone(),
            op,
            source: spec.source,
            guard,
            flag,
        })
    }

    pub fn to_spec(&self) -> FeatureSpec {
        FeatureSpec {
            name: self.name.clone(),
            op: self.op.as_str().to_string(),
            source: self.source,
            guard: (self.guard != Guard::Any).then_some(self.guard),
            flag: (self.op == Operator::FlagCount).then(|| self.flag.to_string()),
        }
    }

    /// Pipeline stages needed to compute the feature: one for the
    /// aggregation, one more for a derived source (IAT, elapsed time), one
    /// more for a final combination (mean, variance).
    pub fn dependency_depth(&self) -> u32 {
        let derived = matches!(self.source, Some(Source::Iat | Source::Elapsed)) as u32;
        let combine = matches!(self.op, Operator::Mean | Operator::Var) as u32;
        1 + derived + combine
    }

    /// Count, sum and flag-count are additive over consecutive windows.
    pub fn is_additive(&self) -> bool {
        matches!(self.op, Operator::Count | Operator::Sum | Operator::FlagCount)
    }

    pub fn intermediates(&self) -> Vec<Intermediate> {
        let mut out = Vec::new();
        match self.source {
            Some(Source::Iat) => out.push(Intermediate::LastTimestamp),
            Some(Source::Elapsed) => out.push(Intermediate::FirstTimestamp),
            _ => {}
        }
        if let Some(src) = self.source {
            let g = self.guard;
            if matches!(self.op, Operator::Min | Operator::Max | Operator::Mean | Operator::Var)
                && g != Guard::Any
            {
                out.push(Intermediate::ObsCount(src, g));
            }
            if matches!(self.op, Operator::Mean | Operator::Var) {
                out.push(Intermediate::ObsSum(src, g));
            }
            if self.op == Operator::Var {
                out.push(Intermediate::ObsSumSq(src, g));
            }
        }
        out
    }

    fn admits(&self, pkt: &PacketRecord) -> bool {
        self.guard.admits(pkt) && (self.op != Operator::FlagCount || pkt.flags.contains(self.flag))
    }
}

/// Ordered list of window-computable features; `N` is its length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureCatalog {
    features: Vec<Feature>,
    intermediates: Vec<Intermediate>,
}

pub const MAX_DEPENDENCY_DEPTH: u32 = 3;

impl FeatureCatalog {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::config("feature catalog is empty"));
        }
        if let Some(f) = features
            .iter()
            .find(|f| f.dependency_depth() > MAX_DEPENDENCY_DEPTH)
        {
            return Err(Error::config(format!("feature `{}` exceeds dependency depth", f.name)));
        }
        let mut intermediates: Vec<Intermediate> =
            features.iter().flat_map(Feature::intermediates).collect();
        intermediates.sort();
        intermediates.dedup();
        Ok(FeatureCatalog {
            features,
            intermediates,
        })
    }

    pub fn from_specs(specs: &[FeatureSpec]) -> Result<Self> {
        Self::new(specs.iter().map(Feature::from_spec).collect::<Result<_>>()?)
    }

    pub fn to_specs(&self) -> Vec<FeatureSpec> {
        self.features.iter().map(Feature::to_spec).collect()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    /// Distinct dependency-chain registers the catalog needs.
    pub fn intermediates(&self) -> &[Intermediate] {
        &self.intermediates
    }

    /// Per-flow dependency-chain register bits for the whole catalog.
    pub fn dependency_bits(&self, width: BitWidth) -> u64 {
        self.intermediates.iter().map(|i| i.bits(width)).sum()
    }

    pub fn max_dependency_depth(&self) -> u32 {
        self.features
            .iter()
            .map(Feature::dependency_depth)
            .max()
            .unwrap_or(0)
    }

    fn intermediate_index(&self, i: Intermediate) -> Option<usize> {
        self.intermediates.binary_search(&i).ok()
    }

    pub fn updater(&self) -> RegisterUpdater<'_> {
        RegisterUpdater::new(self)
    }
}

impl Default for FeatureCatalog {
    /// Sixteen window-computable features covering every operator class.
    fn default() -> Self {
        use Operator::*;
        use Source::*;
        let f = Feature::new;
        FeatureCatalog::new(vec![
            f("pkt_count", Count, None, Guard::Any),
            f("byte_sum", Sum, Some(Size), Guard::Any),
            f("min_size", Min, Some(Size), Guard::Any),
            f("max_size", Max, Some(Size), Guard::Any),
            f("mean_size", Mean, Some(Size), Guard::Any),
            f("min_iat", Min, Some(Iat), Guard::Any),
            f("max_iat", Max, Some(Iat), Guard::Any),
            f("mean_iat", Mean, Some(Iat), Guard::Any),
            f("var_iat", Var, Some(Iat), Guard::Any),
            Feature::flag_count("syn_count", TcpFlags::SYN),
            Feature::flag_count("fin_count", TcpFlags::FIN),
            Feature::flag_count("rst_count", TcpFlags::RST),
            f("fwd_pkts", Count, None, Guard::Fwd),
            f("bwd_pkts", Count, None, Guard::Bwd),
            f("duration", Last, Some(Elapsed), Guard::Any),
            f("mean_fwd_size", Mean, Some(Size), Guard::Fwd),
        ])
        .expect("default catalog is valid")
    }
}

impl Serialize for FeatureCatalog {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_specs().serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureCatalog {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let specs = Vec::<FeatureSpec>::deserialize(d)?;
        FeatureCatalog::from_specs(&specs).map_err(serde::de::Error::custom)
    }
}

/// Feature vector of one window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowFeatures {
    pub values: Vec<u32>,
    /// The window had no packets; all values are zero.
    pub empty: bool,
}

/// Computes every catalog feature over one window, from scratch.
///
/// Only packets in `packets` contribute: the first packet has no IAT and
/// elapsed time starts at its timestamp. Results saturate at the bit width.
pub fn compute_window_features(
    packets: &[PacketRecord],
    catalog: &FeatureCatalog,
    bit_width: BitWidth,
) -> WindowFeatures {
    if packets.is_empty() {
        return WindowFeatures {
            values: vec![0; catalog.len()],
            empty: true,
        };
    }
    let values = catalog
        .features()
        .iter()
        .map(|f| bit_width.saturate(aggregate(f, packets)))
        .collect();
    WindowFeatures {
        values,
        empty: false,
    }
}

fn aggregate(f: &Feature, packets: &[PacketRecord]) -> u128 {
    let t0 = packets[0].ts_us;
    let obs: Vec<u128> = packets
        .iter()
        .enumerate()
        .filter(|(_, p)| f.admits(p))
        .filter_map(|(i, p)| match f.source {
            None => Some(1),
            Some(Source::Size) => Some(p.size as u128),
            Some(Source::Iat) => {
                (i > 0).then(|| p.ts_us.saturating_sub(packets[i - 1].ts_us) as u128)
            }
            Some(Source::Elapsed) => Some(p.ts_us.saturating_sub(t0) as u128),
        })
        .collect();
    let n = obs.len() as u128;
    if n == 0 {
        return 0;
    }
    match f.op {
        Operator::Count | Operator::FlagCount => n,
        Operator::Sum => obs.iter().sum(),
        Operator::Min => *obs.iter().min().unwrap(),
        Operator::Max => *obs.iter().max().unwrap(),
        Operator::Mean => obs.iter().sum::<u128>() / n,
        Operator::Var => {
            // sum((n*x - S)^2) / n^3 is the population variance, kept exact.
            let s: u128 = obs.iter().sum();
            let dev: u128 = obs
                .iter()
                .map(|&x| {
                    let d = (n * x) as i128 - s as i128;
                    (d * d) as u128
                })
                .fold(0u128, u128::saturating_add);
            dev / (n * n * n)
        }
        Operator::Last => *obs.last().unwrap(),
    }
}

/// Streaming update of feature and dependency registers, one packet at a
/// time. This is the data-plane route to the same values that
/// [`compute_window_features`] produces from a whole window.
#[derive(Debug, Clone)]
pub struct RegisterUpdater<'c> {
    catalog: &'c FeatureCatalog,
    last_ts: Option<usize>,
    first_ts: Option<usize>,
    per_feature: Vec<FeatureRegs>,
}

#[derive(Debug, Clone, Copy, Default)]
struct FeatureRegs {
    count: Option<usize>,
    sum: Option<usize>,
    sumsq: Option<usize>,
}

impl<'c> RegisterUpdater<'c> {
    fn new(catalog: &'c FeatureCatalog) -> Self {
        let per_feature = catalog
            .features()
            .iter()
            .map(|f| {
                let mut regs = FeatureRegs::default();
                for i in f.intermediates() {
                    let idx = catalog.intermediate_index(i);
                    match i {
                        Intermediate::ObsCount(..) => regs.count = idx,
                        Intermediate::ObsSum(..) => regs.sum = idx,
                        Intermediate::ObsSumSq(..) => regs.sumsq = idx,
                        _ => {}
                    }
                }
                regs
            })
            .collect();
        RegisterUpdater {
            catalog,
            last_ts: catalog.intermediate_index(Intermediate::LastTimestamp),
            first_ts: catalog.intermediate_index(Intermediate::FirstTimestamp),
            per_feature,
        }
    }

    pub fn catalog(&self) -> &'c FeatureCatalog {
        self.catalog
    }

    /// Number of dependency registers per flow.
    pub fn num_dependency_registers(&self) -> usize {
        self.catalog.intermediates().len()
    }

    /// Applies one packet. `window_pos` is the packet's 1-based position in
    /// the current window; `slot_features[i]` is the catalog index bound to
    /// feature register `i`. Dependency registers update first, in chain
    /// order, then the feature registers read them.
    pub fn update(
        &self,
        deps: &mut [u128],
        slots: &mut [u32],
        slot_features: &[usize],
        pkt: &PacketRecord,
        window_pos: u64,
        width: BitWidth,
    ) {
        debug_assert!(window_pos >= 1);
        let ts = pkt.ts_us as u128;
        let iat = match self.last_ts {
            Some(r) if window_pos >= 2 => Some(ts.saturating_sub(deps[r])),
            _ => None,
        };
        if let Some(r) = self.last_ts {
            deps[r] = ts;
        }
        let elapsed = match self.first_ts {
            Some(r) => {
                if window_pos == 1 {
                    deps[r] = ts;
                }
                ts.saturating_sub(deps[r])
            }
            None => 0,
        };
        let value_of = |src: Source| match src {
            Source::Size => Some(pkt.size as u128),
            Source::Iat => iat,
            Source::Elapsed => Some(elapsed),
        };

        for (idx, inter) in self.catalog.intermediates().iter().enumerate() {
            let (src, guard) = match *inter {
                Intermediate::ObsCount(s, g) | Intermediate::ObsSum(s, g) | Intermediate::ObsSumSq(s, g) => (s, g),
                _ => continue,
            };
            if !guard.admits(pkt) {
                continue;
            }
            if let Some(v) = value_of(src) {
                let reg = &mut deps[idx];
                *reg = match inter {
                    Intermediate::ObsCount(..) => reg.saturating_add(1),
                    Intermediate::ObsSum(..) => reg.saturating_add(v),
                    _ => reg.saturating_add(v.saturating_mul(v)),
                };
            }
        }

        for (slot, &fi) in slots.iter_mut().zip(slot_features) {
            let f = &self.catalog.features()[fi];
            if !f.admits(pkt) {
                continue;
            }
            let regs = self.per_feature[fi];
            let obs = match f.source {
                None => Some(1),
                Some(src) => value_of(src),
            };
            let Some(v) = obs else { continue };
            // Observations so far in this window, this packet included.
            let n = match (regs.count, f.source) {
                (Some(r), _) => deps[r],
                (None, Some(Source::Iat)) => window_pos as u128 - 1,
                (None, _) => window_pos as u128,
            };
            let cur = *slot as u128;
            let next = match f.op {
                Operator::Count | Operator::FlagCount => cur + 1,
                Operator::Sum => cur + v,
                Operator::Min if n == 1 => v,
                Operator::Min => cur.min(v),
                Operator::Max => cur.max(v),
                Operator::Mean => deps[regs.sum.expect("mean has a sum register")] / n,
                Operator::Var => {
                    let s = deps[regs.sum.expect("var has a sum register")];
                    let sq = deps[regs.sumsq.expect("var has a sum-of-squares register")];
                    (n.saturating_mul(sq)).saturating_sub(s.saturating_mul(s)) / (n * n)
                }
                Operator::Last => v,
            };
            *slot = width.saturate(next);
        }
    }
}
