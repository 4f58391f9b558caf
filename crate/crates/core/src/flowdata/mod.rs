//! Flow traces, packet windows and per-window fixed-point features.
//!
//! Every flow of `F` packets is cut into `p` windows whose boundaries are a
//! pure function of `(F, p)`; feature state is reset at each boundary so a
//! window's feature vector only depends on the packets inside it.

mod catalog;
mod trace;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::net::IpAddr;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{ClassLabel, Error, Result};

pub use catalog::{
    compute_window_features, Feature, FeatureCatalog, FeatureSpec, Guard, Intermediate, Operator,
    RegisterUpdater, Source, WindowFeatures,
};
pub use trace::{ingest_trace_file, read_trace, write_trace, TraceFormat, TRACE_HEADER};

/// Default upper bound on the number of windows per flow.
pub const DEFAULT_MAX_PARTITIONS: usize = 7;

/// TCP flag bit-set. Rendered as a letter set drawn from `SFARP`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const SYN: TcpFlags = TcpFlags(0x01);
    pub const FIN: TcpFlags = TcpFlags(0x02);
    pub const ACK: TcpFlags = TcpFlags(0x04);
    pub const RST: TcpFlags = TcpFlags(0x08);
    pub const PSH: TcpFlags = TcpFlags(0x10);

    const LETTERS: [(char, TcpFlags); 5] = [
        ('S', TcpFlags::SYN),
        ('F', TcpFlags::FIN),
        ('A', TcpFlags::ACK),
        ('R', TcpFlags::RST),
        ('P', TcpFlags::PSH),
    ];

    pub const fn empty() -> Self {
        TcpFlags(0)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn contains(self, other: TcpFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: TcpFlags) {
        self.0 |= other.0;
    }

    /// Parses a letter set such as `SA`. An empty string or `.` means no flags.
    pub fn parse(s: &str) -> Option<Self> {
        let mut flags = TcpFlags::empty();
        if s == "." {
            return Some(flags);
        }
        for c in s.chars() {
            let (_, f) = Self::LETTERS
                .iter()
                .find(|(l, _)| *l == c.to_ascii_uppercase())?;
            flags.insert(*f);
        }
        Some(flags)
    }
}

impl std::ops::BitOr for TcpFlags {
    type Output = TcpFlags;
    fn bitor(self, rhs: Self) -> Self {
        TcpFlags(self.0 | rhs.0)
    }
}

impl fmt::Display for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (letter, flag) in Self::LETTERS {
            if self.contains(flag) {
                write!(f, "{letter}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Fwd,
    Bwd,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Fwd => "fwd",
            Direction::Bwd => "bwd",
        }
    }
}

/// One packet of a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    /// Microseconds since trace start.
    pub ts_us: u64,
    /// Bytes; always positive.
    pub size: u32,
    pub flags: TcpFlags,
    pub dir: Direction,
}

/// The 5-tuple identifying a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub src: IpAddr,
    pub dst: IpAddr,
    pub sport: u16,
    pub dport: u16,
    pub proto: u8,
}

impl FlowKey {
    /// Canonical byte encoding hashed by the data plane: addresses in network
    /// order, then ports big-endian, then the protocol byte.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(37);
        for addr in [self.src, self.dst] {
            match addr {
                IpAddr::V4(a) => out.extend_from_slice(&a.octets()),
                IpAddr::V6(a) => out.extend_from_slice(&a.octets()),
            }
        }
        out.extend_from_slice(&self.sport.to_be_bytes());
        out.extend_from_slice(&self.dport.to_be_bytes());
        out.push(self.proto);
        out
    }
}

/// A labeled flow with its packets in timestamp order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub flow_id: u64,
    pub key: FlowKey,
    pub packets: Vec<PacketRecord>,
    pub label: ClassLabel,
}

impl FlowTrace {
    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    /// A flow is short when it has fewer packets than windows; some of its
    /// windows are then empty.
    pub fn is_short(&self, num_partitions: usize) -> bool {
        self.packets.len() < num_partitions
    }
}

/// Number of windows each flow is cut into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    num_partitions: usize,
}

impl WindowSpec {
    pub fn new(num_partitions: usize) -> Result<Self> {
        Self::with_limit(num_partitions, DEFAULT_MAX_PARTITIONS)
    }

    pub fn with_limit(num_partitions: usize, max_partitions: usize) -> Result<Self> {
        if num_partitions == 0 || num_partitions > max_partitions {
            return Err(Error::config(format!(
                "number of partitions must be in 1..={max_partitions}, got {num_partitions}"
            )));
        }
        Ok(WindowSpec { num_partitions })
    }

    pub fn num_partitions(self) -> usize {
        self.num_partitions
    }
}

/// Fixed-point width of feature values. Values saturate at `2^bits - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum BitWidth {
    W8,
    W16,
    #[default]
    W32,
}

impl BitWidth {
    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitWidth::W8),
            16 => Ok(BitWidth::W16),
            32 => Ok(BitWidth::W32),
            other => Err(Error::config(format!(
                "feature bit width must be 8, 16 or 32, got {other}"
            ))),
        }
    }

    pub const fn bits(self) -> u32 {
        match self {
            BitWidth::W8 => 8,
            BitWidth::W16 => 16,
            BitWidth::W32 => 32,
        }
    }

    pub const fn max_value(self) -> u32 {
        match self {
            BitWidth::W8 => u8::MAX as u32,
            BitWidth::W16 => u16::MAX as u32,
            BitWidth::W32 => u32::MAX,
        }
    }

    pub fn saturate(self, v: u128) -> u32 {
        v.min(self.max_value() as u128) as u32
    }
}

impl Serialize for BitWidth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u32(self.bits())
    }
}

impl<'de> Deserialize<'de> for BitWidth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let bits = u32::deserialize(d)?;
        BitWidth::from_bits(bits).map_err(serde::de::Error::custom)
    }
}

/// Window end positions (1-based, inclusive) for a flow of `flow_len`
/// packets: boundary `j` is `ceil(j * F / p)`.
///
/// Window `j` covers packets `boundaries[j-1]..boundaries[j]` (0-based,
/// half-open, with an implicit leading 0). When `F < p` some windows are
/// empty.
pub fn window_boundaries(flow_len: usize, num_partitions: usize) -> Vec<usize> {
    assert!(num_partitions >= 1, "need at least one partition");
    (1..=num_partitions)
        .map(|j| (j * flow_len).div_ceil(num_partitions))
        .collect()
}

/// Half-open packet index ranges of each window.
pub fn window_ranges(flow_len: usize, num_partitions: usize) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    window_boundaries(flow_len, num_partitions)
        .into_iter()
        .map(|end| {
            let r = start..end;
            start = end;
            r
        })
        .collect()
}

/// One window's feature vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowedSample {
    pub flow_id: u64,
    pub window_index: usize,
    pub features: Vec<u32>,
    pub label: ClassLabel,
    /// Set when the window contained no packets; `features` is then all zero.
    #[serde(default)]
    pub empty: bool,
}

/// Per-window samples for a set of flows, exactly `num_partitions` samples per
/// flow, ordered by `(flow_id, window_index)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowedDataset {
    pub num_partitions: usize,
    pub bit_width: BitWidth,
    pub feature_names: Vec<String>,
    pub samples: Vec<WindowedSample>,
}

impl WindowedDataset {
    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn num_flows(&self) -> usize {
        self.samples.len() / self.num_partitions
    }

    /// The `p` windows of the `i`-th flow.
    pub fn flow(&self, i: usize) -> &[WindowedSample] {
        let p = self.num_partitions;
        &self.samples[i * p..(i + 1) * p]
    }

    pub fn flows(&self) -> impl Iterator<Item = &[WindowedSample]> + '_ {
        self.samples.chunks_exact(self.num_partitions)
    }

    pub fn flow_label(&self, i: usize) -> ClassLabel {
        self.samples[i * self.num_partitions].label
    }

    /// Restricts the dataset to the given flow indices, in that order.
    pub fn select_flows(&self, indices: &[usize]) -> WindowedDataset {
        WindowedDataset {
            num_partitions: self.num_partitions,
            bit_width: self.bit_width,
            feature_names: self.feature_names.clone(),
            samples: indices
                .iter()
                .flat_map(|&i| self.flow(i).iter().cloned())
                .collect(),
        }
    }

    /// Writes `flow_id,window,feat_0..feat_{N-1},label`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["flow_id".to_string(), "window".to_string()];
        header.extend((0..self.num_features()).map(|i| format!("feat_{i}")));
        header.push("label".into());
        wtr.write_record(&header).map_err(csv_io)?;
        for s in &self.samples {
            let mut row = Vec::with_capacity(s.features.len() + 3);
            row.push(s.flow_id.to_string());
            row.push(s.window_index.to_string());
            row.extend(s.features.iter().map(u32::to_string));
            row.push(s.label.to_string());
            wtr.write_record(&row).map_err(csv_io)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the CSV emitted by [`WindowedDataset::write_csv`]. Feature names
    /// are taken from the header; the window count from the largest index.
    pub fn read_csv<R: Read>(r: R, origin: &Path, bit_width: BitWidth) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header = rdr.headers().map_err(|e| parse_err(origin, 1, e))?.clone();
        if header.len() < 3 || &header[0] != "flow_id" || &header[1] != "window" {
            return Err(parse_err(origin, 1, "expected header flow_id,window,feat_*,label"));
        }
        let n = header.len() - 3;
        let feature_names: Vec<String> = header.iter().skip(2).take(n).map(String::from).collect();

        let mut by_flow: BTreeMap<u64, Vec<WindowedSample>> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                parse_err(origin, line, e)
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let num = |i: usize| -> Result<u64> {
                rec[i]
                    .parse::<u64>()
                    .map_err(|e| parse_err(origin, line, format!("column {}: {e}", i + 1)))
            };
            let features = (0..n)
                .map(|i| {
                    let v = num(2 + i)?;
                    u32::try_from(v)
                        .ok()
                        .filter(|&v| v <= bit_width.max_value())
                        .ok_or_else(|| parse_err(origin, line, "feature exceeds bit width"))
                })
                .collect::<Result<Vec<_>>>()?;
            let sample = WindowedSample {
                flow_id: num(0)?,
                window_index: num(1)? as usize,
                features,
                label: num(2 + n)? as ClassLabel,
                empty: false,
            };
            by_flow.entry(sample.flow_id).or_default().push(sample);
        }
        if by_flow.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let p = by_flow
            .values()
            .flat_map(|s| s.iter().map(|s| s.window_index + 1))
            .max()
            .unwrap_or(1);
        let mut samples = Vec::with_capacity(by_flow.len() * p);
        for (flow_id, mut windows) in by_flow {
            windows.sort_by_key(|s| s.window_index);
            let complete = windows.len() == p
                && windows.iter().enumerate().all(|(j, s)| s.window_index == j)
                && windows.iter().all(|s| s.label == windows[0].label);
            if !complete {
                return Err(parse_err(
                    origin,
                    0,
                    format!("flow {flow_id}: expected windows 0..{p} with one label"),
                ));
            }
            samples.extend(windows);
        }
        Ok(WindowedDataset {
            num_partitions: p,
            bit_width,
            feature_names,
            samples,
        })
    }
}

pub(crate) fn parse_err(path: &Path, line: u64, msg: impl fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    }
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Cuts every flow into `p` windows and featurizes each window.
///
/// Flows with fewer than `p` packets still yield `p` samples; their empty
/// windows are all-zero and flagged.
pub fn build_partitioned_dataset(
    flows: &[FlowTrace],
    spec: WindowSpec,
    catalog: &FeatureCatalog,
    bit_width: BitWidth,
) -> Result<WindowedDataset> {
    if flows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let p = spec.num_partitions();
    let mut ordered: Vec<&FlowTrace> = flows.iter().collect();
    ordered.sort_by_key(|f| f.flow_id);

    let samples: Vec<WindowedSample> = ordered
        .par_iter()
        .flat_map_iter(|flow| {
            window_ranges(flow.len(), p)
                .into_iter()
                .enumerate()
                .map(move |(j, range)| {
                    let wf = compute_window_features(&flow.packets[range], catalog, bit_width);
                    WindowedSample {
                        flow_id: flow.flow_id,
                        window_index: j,
                        features: wf.values,
                        label: flow.label,
                        empty: wf.empty,
                    }
                })
        })
        .collect();

    Ok(WindowedDataset {
        num_partitions: p,
        bit_width,
        feature_names: catalog.names().map(String::from).collect(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::net::Ipv4Addr;

    fn ceil_oracle(f: usize, p: usize) -> Vec<usize> {
        // Boundary j is the smallest b with b * p >= j * F.
        (1..=p)
            .map(|j| (0..=f).find(|b| b * p >= j * f).unwrap())
            .collect()
    }

    #[test]
    fn boundaries_examples() {
        assert_eq!(window_boundaries(8, 4), vec![2, 4, 6, 8]);
        assert_eq!(window_boundaries(10, 4), ceil_oracle(10, 4));
        assert_eq!(window_boundaries(10, 4), vec![3, 5, 8, 10]);
        assert_eq!(window_boundaries(2, 4), ceil_oracle(2, 4));
        assert_eq!(window_boundaries(2, 4), vec![1, 1, 2, 2]);
        let sizes: Vec<usize> = window_ranges(10, 4).into_iter().map(|r| r.len()).collect();
        assert_eq!(sizes, vec![3, 2, 3, 2]);
    }

    proptest! {
        #[test]
        fn boundaries_match_oracle(f in 1usize..200, p in 1usize..8) {
            let b = window_boundaries(f, p);
            prop_assert_eq!(&b, &ceil_oracle(f, p));
            prop_assert!(b.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(*b.last().unwrap(), f);
            if f >= p {
                prop_assert!(window_ranges(f, p).iter().all(|r| !r.is_empty()));
            }
        }
    }

    #[test]
    fn window_spec_limits() {
        assert!(WindowSpec::new(0).is_err());
        assert!(WindowSpec::new(7).is_ok());
        assert!(WindowSpec::new(8).is_err());
        assert!(WindowSpec::with_limit(12, 16).is_ok());
    }

    #[test]
    fn flags_roundtrip() {
        let f = TcpFlags::parse("SA").unwrap();
        assert!(f.contains(TcpFlags::SYN) && f.contains(TcpFlags::ACK));
        assert!(!f.contains(TcpFlags::FIN));
        assert_eq!(f.to_string(), "SA");
        assert_eq!(TcpFlags::parse("").unwrap(), TcpFlags::empty());
        assert!(TcpFlags::parse("SX").is_none());
    }

    pub(crate) fn flow(id: u64, sizes: &[(u64, u32)], label: u32) -> FlowTrace {
        FlowTrace {
            flow_id: id,
            key: FlowKey {
                src: IpAddr::V4(Ipv4Addr::new(10, 0, 0, 1)),
                dst: IpAddr::V4(Ipv4Addr::new(10, 0, 0, 2)),
                sport: 1000 + id as u16,
                dport: 80,
                proto: 6,
            },
            packets: sizes
                .iter()
                .map(|&(ts, size)| PacketRecord {
                    ts_us: ts,
                    size,
                    flags: TcpFlags::ACK,
                    dir: Direction::Fwd,
                })
                .collect(),
            label,
        }
    }

    fn ten_flows() -> Vec<FlowTrace> {
        (0..10)
            .map(|i| {
                let pk: Vec<(u64, u32)> = (0..(5 + i as u64 * 3))
                    .map(|t| (t * 1000 + i, 60 + ((t * 37 + i) % 1400) as u32))
                    .collect();
                flow(i, &pk, (i % 3) as u32)
            })
            .collect()
    }

    #[test]
    fn dataset_counts_and_identity() {
        let flows = ten_flows();
        let cat = FeatureCatalog::default();
        let ds = build_partitioned_dataset(&flows, WindowSpec::new(4).unwrap(), &cat, BitWidth::W32)
            .unwrap();
        assert_eq!(ds.samples.len(), 40);
        assert!(ds
            .samples
            .windows(2)
            .all(|w| (w[0].flow_id, w[0].window_index) < (w[1].flow_id, w[1].window_index)));

        let whole =
            build_partitioned_dataset(&flows, WindowSpec::new(1).unwrap(), &cat, BitWidth::W32)
                .unwrap();
        for (f, s) in flows.iter().zip(whole.samples.iter()) {
            let direct = compute_window_features(&f.packets, &cat, BitWidth::W32);
            assert_eq!(s.features, direct.values);
        }
    }

    #[test]
    fn count_and_sum_are_additive_across_windows() {
        let flows = ten_flows();
        let cat = FeatureCatalog::default();
        let additive: Vec<usize> = cat
            .features()
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_additive())
            .map(|(i, _)| i)
            .collect();
        assert!(additive.len() >= 5);
        let build = |p| {
            build_partitioned_dataset(&flows, WindowSpec::new(p).unwrap(), &cat, BitWidth::W32)
                .unwrap()
        };
        let (d1, d2, d4) = (build(1), build(2), build(4));
        for i in 0..flows.len() {
            for &fi in &additive {
                let w4: Vec<u32> = d4.flow(i).iter().map(|s| s.features[fi]).collect();
                let w2: Vec<u32> = d2.flow(i).iter().map(|s| s.features[fi]).collect();
                assert_eq!(w2[0], w4[0] + w4[1], "feature {fi}");
                assert_eq!(w2[1], w4[2] + w4[3], "feature {fi}");
                assert_eq!(d1.flow(i)[0].features[fi], w4.iter().sum::<u32>());
            }
        }
    }

    #[test]
    fn short_flows_yield_flagged_empty_windows() {
        let flows = vec![flow(1, &[(0, 100), (10, 200)], 0)];
        let ds = build_partitioned_dataset(
            &flows,
            WindowSpec::new(4).unwrap(),
            &FeatureCatalog::default(),
            BitWidth::W32,
        )
        .unwrap();
        assert!(flows[0].is_short(4));
        let empties: Vec<bool> = ds.samples.iter().map(|s| s.empty).collect();
        // Boundaries [1,1,2,2]: the first and third windows hold one packet each.
        assert_eq!(empties, vec![false, true, false, true]);
        assert!(ds.samples[1].features.iter().all(|&v| v == 0));
        assert_eq!(ds.samples[2].features[1], 200);
    }

    #[test]
    fn dataset_csv_roundtrip() {
        let flows = ten_flows();
        let ds = build_partitioned_dataset(
            &flows,
            WindowSpec::new(3).unwrap(),
            &FeatureCatalog::default(),
            BitWidth::W16,
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = WindowedDataset::read_csv(&buf[..], Path::new("x.csv"), BitWidth::W16).unwrap();
        assert_eq!(back.num_partitions, 3);
        assert_eq!(back.num_features(), 16);
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            assert_eq!((a.flow_id, a.window_index, &a.features, a.label), (b.flow_id, b.window_index, &b.features, b.label));
        }
    }

    #[test]
    fn empty_flow_list_is_an_error() {
        let r = build_partitioned_dataset(
            &[],
            WindowSpec::new(2).unwrap(),
            &FeatureCatalog::default(),
            BitWidth::W32,
        );
        assert!(matches!(r, Err(Error::EmptyDataset)));
    }
}
