//! Recursive partitioned training and offline inference.
//!
//! Partition `j` groups `sizes[j]` consecutive tree levels and runs over the
//! flow's `j`-th packet window. One subtree is trained in partition 0 on all
//! flows; every leaf at the partition's depth cap whose training subset is
//! still mixed gets a child subtree in the next partition, trained on those
//! flows' next window. All other leaves exit with their majority class.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtree::{feature_importance, train_subtree, train_subtree_restricted, NodeId, Subtree};
use crate::flowdata::{BitWidth, WindowedDataset};
use crate::{ClassLabel, Error, Result, Sid};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionConfig {
    /// Total depth `D`, the sum of the partition sizes.
    pub total_depth: u32,
    /// Levels per partition, `[i_1, .., i_p]`.
    pub sizes: Vec<u32>,
    /// Distinct features allowed per subtree.
    pub k: usize,
}

impl PartitionConfig {
    pub fn new(sizes: Vec<u32>, k: usize) -> Result<Self> {
        let cfg = PartitionConfig {
            total_depth: sizes.iter().sum(),
            sizes,
            k,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::config("at least one partition is required"));
        }
        if self.sizes.iter().any(|&s| s == 0) {
            return Err(Error::config("partition sizes must be at least 1"));
        }
        let sum: u32 = self.sizes.iter().sum();
        if sum != self.total_depth {
            return Err(Error::config(format!(
                "partition sizes {:?} sum to {sum}, expected total depth {}",
                self.sizes, self.total_depth
            )));
        }
        if self.k == 0 {
            return Err(Error::config("feature budget k must be at least 1"));
        }
        Ok(())
    }

    pub fn num_partitions(&self) -> usize {
        self.sizes.len()
    }

    /// Sizes joined with `-`, e.g. `2-3-1`.
    pub fn sizes_label(&self) -> String {
        self.sizes
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// What a leaf does once its window closes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    NextSid(Sid),
    FinalClass(ClassLabel),
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Route::NextSid(s) => write!(f, "next:{s}"),
            Route::FinalClass(c) => write!(f, "class:{c}"),
        }
    }
}

impl FromStr for Route {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::integrity(format!("bad route `{s}`"));
        let (kind, v) = s.split_once(':').ok_or_else(bad)?;
        let v: u32 = v.parse().map_err(|_| bad())?;
        match kind {
            "next" => Ok(Route::NextSid(Sid(v))),
            "class" => Ok(Route::FinalClass(v)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtreeEntry {
    pub partition: usize,
    pub tree: Subtree,
}

/// The trained tree of subtrees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionedModel {
    pub config: PartitionConfig,
    pub feature_width: BitWidth,
    pub num_features: usize,
    pub subtrees: BTreeMap<Sid, SubtreeEntry>,
    pub routing: BTreeMap<(Sid, NodeId), Route>,
    pub initial_sid: Sid,
}

impl PartitionedModel {
    /// Checks the structural invariants: depth caps match partition sizes,
    /// every subtree honours `k`, routing is total over leaves, and next-SID
    /// routes point into the following partition.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let p = self.config.num_partitions();
        if !self.subtrees.contains_key(&self.initial_sid) {
            return Err(Error::integrity("initial SID has no subtree"));
        }
        if self.subtrees.contains_key(&Sid::UNCLASSIFIED) {
            return Err(Error::integrity("SID 0 is reserved"));
        }
        for (sid, e) in &self.subtrees {
            if e.partition >= p {
                return Err(Error::integrity(format!("subtree {sid} in partition {} of {p}", e.partition)));
            }
            if e.tree.depth_cap() != self.config.sizes[e.partition] {
                return Err(Error::integrity(format!("subtree {sid} depth cap differs from its partition size")));
            }
            if e.tree.distinct_features().len() > self.config.k {
                return Err(Error::integrity(format!("subtree {sid} exceeds k")));
            }
            if e.tree.distinct_features().iter().any(|&f| f >= self.num_features) {
                return Err(Error::integrity(format!("subtree {sid} uses an unknown feature")));
            }
            for leaf in e.tree.leaves() {
                match self.routing.get(&(*sid, leaf)) {
                    None => return Err(Error::integrity(format!("no route for subtree {sid} leaf {leaf}"))),
                    Some(Route::NextSid(next)) => match self.subtrees.get(next) {
                        Some(n) if n.partition == e.partition + 1 => {}
                        _ => {
                            return Err(Error::integrity(format!(
                                "subtree {sid} leaf {leaf} routes to {next}, not a next-partition subtree"
                            )))
                        }
                    },
                    Some(Route::FinalClass(_)) => {}
                }
            }
        }
        let leaves: usize = self.subtrees.values().map(|e| e.tree.leaves().len()).sum();
        if leaves != self.routing.len() {
            return Err(Error::integrity("routing has entries for unknown leaves"));
        }
        Ok(())
    }

    /// A one-partition model around a single tree: every leaf routes to
    /// its own label.
    pub fn from_single_tree(tree: Subtree, num_features: usize, feature_width: BitWidth) -> Result<Self> {
        let sid = Sid(1);
        let routing = tree
            .leaves()
            .into_iter()
            .map(|l| ((sid, l), Route::FinalClass(tree.leaf(l).map_or(0, |x| x.label))))
            .collect();
        let model = PartitionedModel {
            config: PartitionConfig::new(vec![tree.depth_cap()], tree.feature_budget())?,
            feature_width,
            num_features,
            subtrees: BTreeMap::from([(sid, SubtreeEntry { partition: 0, tree })]),
            routing,
            initial_sid: sid,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn num_partitions(&self) -> usize {
        self.config.num_partitions()
    }

    /// Union of features used anywhere in the model.
    pub fn unique_features(&self) -> BTreeSet<usize> {
        self.subtrees
            .values()
            .flat_map(|e| e.tree.distinct_features().iter().copied())
            .collect()
    }

    pub fn total_leaves(&self) -> usize {
        self.subtrees.values().map(|e| e.tree.leaves().len()).sum()
    }

    /// Exit counts by kind.
    pub fn exit_summary(&self) -> ExitSummary {
        let mut s = ExitSummary::default();
        for ((sid, leaf), route) in &self.routing {
            let e = &self.subtrees[sid];
            match route {
                Route::NextSid(_) => s.next_routes += 1,
                Route::FinalClass(_) if e.partition + 1 == self.num_partitions() => s.final_partition += 1,
                Route::FinalClass(_) => {
                    let depth = e.tree.leaf(*leaf).map(|l| l.depth).unwrap_or(0);
                    if depth < e.tree.depth_cap() {
                        s.above_cap += 1;
                    } else {
                        s.at_cap += 1;
                    }
                }
            }
        }
        s
    }

    /// Classifies one flow from its per-window feature vectors.
    pub fn infer_offline(&self, windows: &[&[u32]]) -> Result<(ClassLabel, Vec<(Sid, NodeId)>)> {
        if windows.len() != self.num_partitions() {
            return Err(Error::config(format!(
                "expected {} windows, got {}",
                self.num_partitions(),
                windows.len()
            )));
        }
        let mut sid = self.initial_sid;
        let mut trace = Vec::new();
        for (j, x) in windows.iter().enumerate() {
            let entry = self
                .subtrees
                .get(&sid)
                .ok_or_else(|| Error::integrity(format!("unknown SID {sid}")))?;
            if entry.partition != j {
                return Err(Error::integrity(format!("SID {sid} reached out of partition order")));
            }
            let (leaf, _) = entry.tree.predict(x);
            trace.push((sid, leaf));
            match self.routing.get(&(sid, leaf)) {
                None => return Err(Error::integrity(format!("no route for subtree {sid} leaf {leaf}"))),
                Some(Route::FinalClass(c)) => return Ok((*c, trace)),
                Some(Route::NextSid(next)) => sid = *next,
            }
        }
        Err(Error::integrity("routing runs past the last partition"))
    }

    /// Offline classification of every flow in `ds`.
    pub fn predict_dataset(&self, ds: &WindowedDataset) -> Result<Vec<ClassLabel>> {
        ds.flows()
            .map(|w| {
                let xs: Vec<&[u32]> = w.iter().map(|s| s.features.as_slice()).collect();
                self.infer_offline(&xs).map(|(c, _)| c)
            })
            .collect()
    }

    /// For each partition, the fraction of flows reaching it that exit
    /// there. Partitions no flow reaches report 0.
    pub fn exit_fractions(&self, ds: &WindowedDataset) -> Result<Vec<f64>> {
        let p = self.num_partitions();
        let mut reached = vec![0u64; p];
        let mut exited = vec![0u64; p];
        for w in ds.flows() {
            let xs: Vec<&[u32]> = w.iter().map(|s| s.features.as_slice()).collect();
            let (_, trace) = self.infer_offline(&xs)?;
            for j in 0..trace.len() {
                reached[j] += 1;
            }
            exited[trace.len() - 1] += 1;
        }
        Ok((0..p)
            .map(|j| if reached[j] == 0 { 0.0 } else { exited[j] as f64 / reached[j] as f64 })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExitSummary {
    /// Leaves routed to a next-partition subtree.
    pub next_routes: usize,
    /// Final-class leaves in the last partition.
    pub final_partition: usize,
    /// Non-final early exits above the depth cap (purity before the cap).
    pub above_cap: usize,
    /// Non-final early exits at the depth cap (pure subset).
    pub at_cap: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    config: PartitionConfig,
    feature_width: BitWidth,
    num_features: usize,
    subtrees: BTreeMap<Sid, SubtreeEntry>,
    routing: Vec<(Sid, NodeId, String)>,
    initial_sid: Sid,
}

impl Serialize for PartitionedModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelRepr {
            config: self.config.clone(),
            feature_width: self.feature_width,
            num_features: self.num_features,
            subtrees: self.subtrees.clone(),
            routing: self
                .routing
                .iter()
                .map(|(&(sid, leaf), r)| (sid, leaf, r.to_string()))
                .collect(),
            initial_sid: self.initial_sid,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PartitionedModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = ModelRepr::deserialize(d)?;
        let mut routing = BTreeMap::new();
        for (sid, leaf, action) in r.routing {
            let route: Route = action.parse().map_err(D::Error::custom)?;
            if routing.insert((sid, leaf), route).is_some() {
                return Err(D::Error::custom(format!("duplicate route for ({sid}, {leaf})")));
            }
        }
        let m = PartitionedModel {
            config: r.config,
            feature_width: r.feature_width,
            num_features: r.num_features,
            subtrees: r.subtrees,
            routing,
            initial_sid: r.initial_sid,
        };
        m.validate().map_err(D::Error::custom)?;
        Ok(m)
    }
}

/// Trains the tree of subtrees (one per reachable non-exit leaf).
pub fn train_partitioned(ds: &WindowedDataset, config: &PartitionConfig) -> Result<PartitionedModel> {
    config.validate()?;
    if ds.samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let p = config.num_partitions();
    if ds.num_partitions != p {
        return Err(Error::config(format!(
            "dataset has {} windows per flow, config has {p} partitions",
            ds.num_partitions
        )));
    }

    let mut subtrees = BTreeMap::new();
    let mut routing = BTreeMap::new();
    let mut next_sid = 1u32;
    let mut level: Vec<(Sid, Vec<usize>)> = vec![(Sid(next_sid), (0..ds.num_flows()).collect())];
    next_sid += 1;

    for (j, &cap) in config.sizes.iter().enumerate() {
        let trained: Vec<Result<Subtree>> = level
            .par_iter()
            .map(|(_, flows)| {
                let rows: Vec<&[u32]> = flows.iter().map(|&i| ds.flow(i)[j].features.as_slice()).collect();
                let labels: Vec<ClassLabel> = flows.iter().map(|&i| ds.flow_label(i)).collect();
                train_subtree(&rows, &labels, cap, config.k)
            })
            .collect();

        let mut next_level = Vec::new();
        for ((sid, flows), tree) in level.into_iter().zip(trained) {
            let tree = tree?;
            let mut by_leaf: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
            for &i in &flows {
                by_leaf.entry(tree.predict(&ds.flow(i)[j].features).0).or_default().push(i);
            }
            for leaf in tree.leaves() {
                let info = tree.leaf(leaf).expect("leaf id");
                let subset = by_leaf.remove(&leaf).unwrap_or_default();
                let mixed = subset
                    .iter()
                    .any(|&i| ds.flow_label(i) != ds.flow_label(subset[0]));
                let route = if j + 1 < p && info.depth == cap && mixed {
                    let child = Sid(next_sid);
                    next_sid += 1;
                    next_level.push((child, subset));
                    Route::NextSid(child)
                } else {
                    Route::FinalClass(info.label)
                };
                routing.insert((sid, leaf), route);
            }
            subtrees.insert(sid, SubtreeEntry { partition: j, tree });
        }
        level = next_level;
    }

    let model = PartitionedModel {
        config: config.clone(),
        feature_width: ds.bit_width,
        num_features: ds.num_features(),
        subtrees,
        routing,
        initial_sid: Sid(1),
    };
    debug_assert!(model.validate().is_ok());
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    pub num_features: usize,
    pub per_subtree: BTreeMap<Sid, f64>,
    pub per_partition: Vec<f64>,
    pub subtree_mean: f64,
    pub subtree_std: f64,
    pub partition_mean: f64,
    pub partition_std: f64,
    /// Density of the union of features over the whole model.
    pub model: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Share of the `n` catalog features used per subtree and per partition.
pub fn feature_density(model: &PartitionedModel, n: usize) -> DensityReport {
    let pct = |c: usize| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };
    let per_subtree: BTreeMap<Sid, f64> = model
        .subtrees
        .iter()
        .map(|(sid, e)| (*sid, pct(e.tree.distinct_features().len())))
        .collect();
    let per_partition: Vec<f64> = (0..model.num_partitions())
        .map(|j| {
            let union: BTreeSet<usize> = model
                .subtrees
                .values()
                .filter(|e| e.partition == j)
                .flat_map(|e| e.tree.distinct_features().iter().copied())
                .collect();
            pct(union.len())
        })
        .collect();
    let (subtree_mean, subtree_std) = mean_std(&per_subtree.values().copied().collect::<Vec<_>>());
    let (partition_mean, partition_std) = mean_std(&per_partition);
    DensityReport {
        num_features: n,
        model: pct(model.unique_features().len()),
        per_subtree,
        per_partition,
        subtree_mean,
        subtree_std,
        partition_mean,
        partition_std,
    }
}

/// Ranks features by total impurity decrease in a probe tree of depth
/// `depth` (no feature budget); ties go to the lower index.
pub fn rank_features(rows: &[&[u32]], labels: &[ClassLabel], depth: u32) -> Result<Vec<usize>> {
    let n = rows.first().map(|r| r.len()).ok_or(Error::EmptyDataset)?;
    let probe = train_subtree(rows, labels, depth, n.max(1))?;
    let imp = feature_importance(&probe, rows, labels, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
    Ok(order)
}

/// Monolithic top-`k` baseline: a single tree of depth `depth` restricted to
/// the `k` features ranked highest by [`rank_features`]. Returns the tree and
/// the selected features (ascending).
pub fn train_topk_baseline(
    rows: &[&[u32]],
    labels: &[ClassLabel],
    depth: u32,
    k: usize,
) -> Result<(Subtree, Vec<usize>)> {
    if k == 0 {
        return Err(Error::config("feature budget k must be at least 1"));
    }
    let n = rows.first().map(|r| r.len()).ok_or(Error::EmptyDataset)?;
    if k >= n {
        return Ok((train_subtree(rows, labels, depth, k)?, (0..n).collect()));
    }
    let mut chosen: Vec<usize> = rank_features(rows, labels, depth)?.into_iter().take(k).collect();
    chosen.sort_unstable();
    let tree = train_subtree_restricted(rows, labels, depth, k, Some(&chosen))?;
    Ok((tree, chosen))
}

/// Rows and labels of window 0 for every flow (whole-flow features when the
/// dataset was built with one partition).
pub fn window_rows(ds: &WindowedDataset, window: usize) -> (Vec<&[u32]>, Vec<ClassLabel>) {
    ds.flows()
        .map(|w| (w[window].features.as_slice(), w[window].label))
        .unzip()
}
