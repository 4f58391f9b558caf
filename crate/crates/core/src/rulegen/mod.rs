//! Compilation of subtrees into ternary match-action tables.
//!
//! Each subtree binds its used features, in ascending catalog order, to the
//! `k` feature-register slots. Per slot, a feature table maps the raw
//! register value (plus the exact SID) to a range mark: bit `i` is set when
//! the value exceeds the `i`-th smallest threshold the subtree uses on that
//! feature. The model table then holds one entry per leaf, matching the mark
//! bits of the splits on the leaf's path and wildcarding the rest.

mod bits;
mod prefix;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bits::BitString;
pub use prefix::{interval_to_prefixes, Prefix};

use crate::dtree::{Node, NodeId, Subtree};
use crate::flowdata::BitWidth;
use crate::partition::{PartitionedModel, Route};
use crate::{ClassLabel, Error, Result, Sid};

/// Minimum SID field width in match keys.
pub const MIN_SID_BITS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    SetMark(BitString),
    NextSid(Sid),
    FinalClass(ClassLabel),
}

impl From<Route> for Action {
    fn from(r: Route) -> Self {
        match r {
            Route::NextSid(s) => Action::NextSid(s),
            Route::FinalClass(c) => Action::FinalClass(c),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::SetMark(m) => write!(f, "mark:{m}"),
            Action::NextSid(s) => write!(f, "next:{s}"),
            Action::FinalClass(c) => write!(f, "class:{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TernaryEntry {
    pub sid: Sid,
    /// Key bits that must match where `mask` is 1; zero elsewhere.
    pub value: BitString,
    pub mask: BitString,
    /// Rank within the table, 0 = highest.
    pub priority: u32,
    pub action: Action,
}

/// Distinct split thresholds per feature, ascending.
pub fn collect_thresholds(tree: &Subtree) -> BTreeMap<usize, Vec<u32>> {
    let mut out: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for node in tree.nodes() {
        if let Node::Split {
            feature, threshold, ..
        } = *node
        {
            out.entry(feature).or_default().push(threshold);
        }
    }
    for t in out.values_mut() {
        t.sort_unstable();
        t.dedup();
    }
    out
}

/// Number of thresholds strictly below `value`, i.e. the count of set bits
/// in its range mark.
pub fn mark_level(value: u32, thresholds: &[u32]) -> usize {
    thresholds.partition_point(|&t| t < value)
}

/// Range mark of `value` as a `width`-bit string (`width >= thresholds.len()`).
pub fn range_mark(value: u32, thresholds: &[u32], width: u32) -> BitString {
    let mut m = BitString::zeros(width);
    m.set_range(0, mark_level(value, thresholds) as u32, true);
    m
}

/// Where each slot's mark sits inside the model-table key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyLayout {
    pub value_width: u32,
    pub sid_width: u32,
    pub slot_mark_widths: Vec<u32>,
    pub slot_offsets: Vec<u32>,
}

impl KeyLayout {
    pub fn marks_width(&self) -> u32 {
        self.slot_mark_widths.iter().sum()
    }

    /// Model-table key: marks in the low bits, SID on top.
    pub fn model_key_width(&self) -> u32 {
        self.marks_width() + self.sid_width
    }

    /// Feature-table key: the raw value with the SID on top.
    pub fn feature_key_width(&self) -> u32 {
        self.value_width + self.sid_width
    }
}

fn sid_width_for(max_sid: u32) -> u32 {
    (32 - max_sid.leading_zeros()).max(MIN_SID_BITS)
}

/// One subtree's share of the tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    pub sid: Sid,
    pub slot_features: Vec<usize>,
    /// Per slot, feature-table entries (priorities not yet assigned).
    pub feature_entries: Vec<Vec<TernaryEntry>>,
    pub model_entries: Vec<TernaryEntry>,
}

fn sid_bits(layout_width: u32, offset: u32, sid_width: u32, sid: Sid) -> (BitString, BitString) {
    let mut v = BitString::zeros(layout_width);
    let mut m = BitString::zeros(layout_width);
    v.set_field(offset, sid_width.min(32), sid.0 as u64);
    m.set_range(offset, sid_width, true);
    (v, m)
}

/// Compiles one subtree against a fixed key layout. `routes` must cover
/// every leaf.
pub fn compile_subtree(
    tree: &Subtree,
    sid: Sid,
    routes: &BTreeMap<NodeId, Route>,
    layout: &KeyLayout,
) -> Result<Fragment> {
    let thresholds = collect_thresholds(tree);
    let slot_features: Vec<usize> = thresholds.keys().copied().collect();
    if slot_features.len() > layout.slot_mark_widths.len() {
        return Err(Error::integrity(format!(
            "subtree {sid} uses {} features, only {} slots",
            slot_features.len(),
            layout.slot_mark_widths.len()
        )));
    }

    let vw = layout.value_width;
    let fkw = layout.feature_key_width();
    let vmax = if vw >= 32 { u32::MAX as u64 } else { (1u64 << vw) - 1 };
    let mut feature_entries = vec![Vec::new(); layout.slot_mark_widths.len()];
    for (slot, f) in slot_features.iter().enumerate() {
        let ts = &thresholds[f];
        let mw = layout.slot_mark_widths[slot];
        let mut lo = 0u64;
        for level in 0..=ts.len() {
            let hi = ts.get(level).map(|&t| t as u64).unwrap_or(vmax);
            if lo <= hi {
                let mut mark = BitString::zeros(mw);
                mark.set_range(0, level as u32, true);
                for p in interval_to_prefixes(lo, hi, vw)? {
                    let (mut value, mut mask) = sid_bits(fkw, vw, layout.sid_width, sid);
                    value.set_field(0, vw, p.value);
                    mask.set_field(0, vw, p.mask);
                    feature_entries[slot].push(TernaryEntry {
                        sid,
                        value,
                        mask,
                        priority: 0,
                        action: Action::SetMark(mark.clone()),
                    });
                }
            }
            lo = hi + 1;
        }
    }

    let mkw = layout.model_key_width();
    let mut model_entries = Vec::new();
    for leaf in tree.leaves() {
        let route = routes
            .get(&leaf)
            .ok_or_else(|| Error::integrity(format!("no route for subtree {sid} leaf {leaf}")))?;
        let (mut value, mut mask) = sid_bits(mkw, layout.marks_width(), layout.sid_width, sid);
        for (f, t, right) in tree.path_to(leaf) {
            let slot = slot_features.binary_search(&f).expect("feature is bound");
            let bit = layout.slot_offsets[slot] + thresholds[&f].binary_search(&t).expect("threshold known") as u32;
            if mask.get(bit) && value.get(bit) != right {
                return Err(Error::integrity(format!(
                    "subtree {sid} leaf {leaf} has a contradictory path"
                )));
            }
            mask.set(bit, true);
            value.set(bit, right);
        }
        model_entries.push(TernaryEntry {
            sid,
            value,
            mask,
            priority: 0,
            action: (*route).into(),
        });
    }

    Ok(Fragment {
        sid,
        slot_features,
        feature_entries,
        model_entries,
    })
}

/// All match-action tables of a partitioned model, plus the per-SID
/// operator-selection bindings the data plane needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledTables {
    pub k: usize,
    pub feature_width: BitWidth,
    pub num_partitions: usize,
    pub initial_sid: Sid,
    pub layout: KeyLayout,
    /// Catalog feature bound to each register slot, per SID.
    pub slot_features: BTreeMap<Sid, Vec<usize>>,
    pub sid_partition: BTreeMap<Sid, usize>,
    /// Per slot, entries bucketed by SID in priority order.
    pub feature_tables: Vec<BTreeMap<Sid, Vec<TernaryEntry>>>,
    pub model_table: BTreeMap<Sid, Vec<TernaryEntry>>,
}

/// Sorts by mask length (longest first), then insertion order, and assigns
/// priorities by rank; returns entries bucketed by SID.
fn rank(entries: Vec<TernaryEntry>) -> BTreeMap<Sid, Vec<TernaryEntry>> {
    let mut idx: Vec<(u32, usize, TernaryEntry)> = entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| (e.mask.count_ones(), i, e))
        .collect();
    idx.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out: BTreeMap<Sid, Vec<TernaryEntry>> = BTreeMap::new();
    for (rank, (_, _, mut e)) in idx.into_iter().enumerate() {
        e.priority = rank as u32;
        out.entry(e.sid).or_default().push(e);
    }
    out
}

/// Compiles every subtree of `model` and merges the fragments in SID order.
pub fn compile_model(model: &PartitionedModel) -> Result<CompiledTables> {
    let k = model.config.k;
    let mut slot_mark_widths = vec![0u32; k];
    let mut per_sid_thresholds = BTreeMap::new();
    for (sid, e) in &model.subtrees {
        let th = collect_thresholds(&e.tree);
        if th.len() > k {
            return Err(Error::integrity(format!("subtree {sid} exceeds k")));
        }
        for (slot, ts) in th.values().enumerate() {
            slot_mark_widths[slot] = slot_mark_widths[slot].max(ts.len() as u32);
        }
        per_sid_thresholds.insert(*sid, th);
    }
    let mut slot_offsets = Vec::with_capacity(k);
    let mut off = 0;
    for w in &slot_mark_widths {
        slot_offsets.push(off);
        off += w;
    }
    let max_sid = model.subtrees.keys().map(|s| s.0).max().unwrap_or(0);
    let layout = KeyLayout {
        value_width: model.feature_width.bits(),
        sid_width: sid_width_for(max_sid),
        slot_mark_widths,
        slot_offsets,
    };

    let fragments: Vec<Fragment> = model
        .subtrees
        .par_iter()
        .map(|(sid, e)| {
            let routes: BTreeMap<NodeId, Route> = model
                .routing
                .range((*sid, 0)..=(*sid, usize::MAX))
                .map(|(&(_, leaf), r)| (leaf, *r))
                .collect();
            compile_subtree(&e.tree, *sid, &routes, &layout)
        })
        .collect::<Result<_>>()?;

    let mut feature_raw: Vec<Vec<TernaryEntry>> = vec![Vec::new(); k];
    let mut model_raw = Vec::new();
    let mut slot_features = BTreeMap::new();
    for frag in fragments {
        for (slot, es) in frag.feature_entries.into_iter().enumerate() {
            feature_raw[slot].extend(es);
        }
        model_raw.extend(frag.model_entries);
        slot_features.insert(frag.sid, frag.slot_features);
    }

    Ok(CompiledTables {
        k,
        feature_width: model.feature_width,
        num_partitions: model.num_partitions(),
        initial_sid: model.initial_sid,
        layout,
        slot_features,
        sid_partition: model.subtrees.iter().map(|(s, e)| (*s, e.partition)).collect(),
        feature_tables: feature_raw.into_iter().map(rank).collect(),
        model_table: rank(model_raw),
    })
}

fn first_match<'a>(bucket: Option<&'a Vec<TernaryEntry>>, key: &BitString) -> Option<&'a TernaryEntry> {
    bucket?.iter().find(|e| key.matches(&e.value, &e.mask))
}

impl CompiledTables {
    pub fn feature_entries(&self) -> usize {
        self.feature_tables.iter().flat_map(|t| t.values()).map(Vec::len).sum()
    }

    pub fn model_entries(&self) -> usize {
        self.model_table.values().map(Vec::len).sum()
    }

    pub fn total_entries(&self) -> usize {
        self.feature_entries() + self.model_entries()
    }

    pub fn model_entries_for(&self, sid: Sid) -> usize {
        self.model_table.get(&sid).map(Vec::len).unwrap_or(0)
    }

    /// Mark produced by slot `slot`'s feature table for a register value.
    /// A miss (slot unbound for this SID) yields the all-zero mark.
    pub fn slot_mark(&self, sid: Sid, slot: usize, value: u32) -> BitString {
        let l = &self.layout;
        let mut key = BitString::zeros(l.feature_key_width());
        key.set_field(0, l.value_width, value as u64);
        key.set_field(l.value_width, l.sid_width.min(32), sid.0 as u64);
        match first_match(self.feature_tables[slot].get(&sid), &key) {
            Some(TernaryEntry {
                action: Action::SetMark(m),
                ..
            }) => m.clone(),
            _ => BitString::zeros(l.slot_mark_widths[slot]),
        }
    }

    /// Runs the feature tables over the `k` register values, then the model
    /// table.
    pub fn lookup_slots(&self, sid: Sid, slots: &[u32]) -> Result<Route> {
        let l = &self.layout;
        let mut key = BitString::zeros(l.model_key_width());
        for (slot, &v) in slots.iter().enumerate().take(self.k) {
            if l.slot_mark_widths[slot] > 0 {
                key.set_slice(l.slot_offsets[slot], &self.slot_mark(sid, slot, v));
            }
        }
        key.set_field(l.marks_width(), l.sid_width.min(32), sid.0 as u64);
        match first_match(self.model_table.get(&sid), &key) {
            Some(e) => match e.action {
                Action::NextSid(s) => Ok(Route::NextSid(s)),
                Action::FinalClass(c) => Ok(Route::FinalClass(c)),
                Action::SetMark(_) => Err(Error::integrity("mark action in model table")),
            },
            None => Err(Error::integrity(format!("model table miss for SID {sid}"))),
        }
    }

    /// Lookup from a catalog-indexed feature vector: loads the SID's bound
    /// features into the register slots first.
    pub fn tcam_lookup(&self, sid: Sid, x: &[u32]) -> Result<Route> {
        let bound = self
            .slot_features
            .get(&sid)
            .ok_or_else(|| Error::integrity(format!("unknown SID {sid}")))?;
        let mut slots = vec![0u32; self.k];
        for (slot, &f) in bound.iter().enumerate() {
            slots[slot] = x[f];
        }
        self.lookup_slots(sid, &slots)
    }

    /// Writes `table,sid,priority,key_hex,mask_hex,action`, feature tables
    /// first, each table in priority order.
    pub fn write_rules<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "table,sid,priority,key_hex,mask_hex,action")?;
        let mut dump = |name: &str, table: &BTreeMap<Sid, Vec<TernaryEntry>>| -> Result<()> {
            let mut all: Vec<&TernaryEntry> = table.values().flatten().collect();
            all.sort_by_key(|e| e.priority);
            for e in all {
                writeln!(w, "{name},{},{},{},{},{}", e.sid, e.priority, e.value, e.mask, e.action)?;
            }
            Ok(())
        };
        for (slot, t) in self.feature_tables.iter().enumerate() {
            dump(&format!("feat{slot}"), t)?;
        }
        dump("model", &self.model_table)?;
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dtree::{train_subtree, Leaf};
    use crate::partition::{tests::worked_example, train_partitioned, PartitionConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn leaf(label: u32) -> Node {
        Node::Leaf(Leaf { label, count: 1, depth: 0 })
    }

    /// Wraps one subtree in a single-partition model whose leaves all emit
    /// their labels.
    pub(crate) fn single_model(tree: Subtree, n: usize, width: BitWidth) -> PartitionedModel {
        PartitionedModel::from_single_tree(tree, n, width).unwrap()
    }

    pub(crate) fn random_tree(rng: &mut ChaCha8Rng, n_features: usize, k: usize, depth: u32, vmax: u32) -> Subtree {
        crate::synth::random_subtree(rng, n_features, k, depth, vmax)
    }

    #[test]
    fn threshold_collection() {
        assert!(collect_thresholds(&Subtree::single_leaf(0, 1, 1, 1)).is_empty());
        let nodes = vec![
            Node::Split { feature: 0, threshold: 10, left: 1, right: 2 },
            Node::Split { feature: 0, threshold: 5, left: 3, right: 4 },
            Node::Split { feature: 2, threshold: 7, left: 5, right: 6 },
            leaf(0), leaf(1), leaf(2), leaf(3),
        ];
        let t = Subtree::from_nodes(nodes, 0, 2, 2).unwrap();
        let th = collect_thresholds(&t);
        assert_eq!(th, BTreeMap::from([(0, vec![5, 10]), (2, vec![7])]));
    }

    #[test]
    fn thresholds_match_independent_walk() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let t = random_tree(&mut rng, 6, 3, 5, 200);
            let mut oracle: BTreeMap<usize, std::collections::BTreeSet<u32>> = BTreeMap::new();
            let mut stack = vec![t.root()];
            while let Some(id) = stack.pop() {
                if let Node::Split { feature, threshold, left, right } = *t.node(id) {
                    oracle.entry(feature).or_default().insert(threshold);
                    stack.extend([left, right]);
                }
            }
            let oracle: BTreeMap<usize, Vec<u32>> = oracle.into_iter().map(|(f, s)| (f, s.into_iter().collect())).collect();
            assert_eq!(collect_thresholds(&t), oracle);
        }
    }

    #[test]
    fn marks_are_monotone_thermometer_codes() {
        let ts = [3, 9, 200];
        let mut prev = range_mark(0, &ts, 3);
        assert_eq!(prev.count_ones(), 0);
        assert_eq!(range_mark(255, &ts, 3).count_ones(), 3);
        let mut distinct = std::collections::BTreeSet::new();
        for v in 0..=255 {
            let m = range_mark(v, &ts, 3);
            assert!(prev.is_subset_of(&m));
            distinct.insert(m.to_hex());
            prev = m;
        }
        assert_eq!(distinct.len(), ts.len() + 1);
    }

    #[test]
    fn single_leaf_compiles_to_one_wildcard_entry() {
        let m = single_model(Subtree::single_leaf(4, 1, 1, 1), 3, BitWidth::W8);
        let c = compile_model(&m).unwrap();
        assert_eq!(c.feature_entries(), 0);
        assert_eq!(c.model_entries(), 1);
        let e = &c.model_table[&Sid(1)][0];
        assert_eq!(e.mask.count_ones(), c.layout.sid_width);
        assert_eq!(c.tcam_lookup(Sid(1), &[1, 2, 3]).unwrap(), Route::FinalClass(4));
    }

    #[test]
    fn depth_one_and_two_entry_counts() {
        let one = Subtree::from_nodes(
            vec![Node::Split { feature: 1, threshold: 9, left: 1, right: 2 }, leaf(0), leaf(1)],
            0, 1, 1,
        )
        .unwrap();
        let c = compile_model(&single_model(one, 2, BitWidth::W8)).unwrap();
        assert_eq!(c.layout.slot_mark_widths, vec![1]);
        assert_eq!(c.model_entries(), 2);
        assert_eq!(c.tcam_lookup(Sid(1), &[0, 9]).unwrap(), Route::FinalClass(0));
        assert_eq!(c.tcam_lookup(Sid(1), &[0, 10]).unwrap(), Route::FinalClass(1));

        let nodes = vec![
            Node::Split { feature: 0, threshold: 100, left: 1, right: 2 },
            Node::Split { feature: 1, threshold: 5, left: 3, right: 4 },
            Node::Split { feature: 1, threshold: 50, left: 5, right: 6 },
            leaf(0), leaf(1), leaf(2), leaf(3),
        ];
        let two = Subtree::from_nodes(nodes, 0, 2, 2).unwrap();
        let c = compile_model(&single_model(two, 2, BitWidth::W8)).unwrap();
        assert_eq!(c.model_entries(), 4);
    }

    #[test]
    fn missing_route_is_an_error() {
        let t = Subtree::from_nodes(
            vec![Node::Split { feature: 0, threshold: 1, left: 1, right: 2 }, leaf(0), leaf(1)],
            0, 1, 1,
        )
        .unwrap();
        let layout = KeyLayout { value_width: 8, sid_width: 8, slot_mark_widths: vec![1], slot_offsets: vec![0] };
        let routes = BTreeMap::from([(1, Route::FinalClass(0))]);
        assert!(matches!(compile_subtree(&t, Sid(1), &routes, &layout), Err(Error::ModelIntegrity(_))));
    }

    #[test]
    fn worked_example_entry_count_is_leaf_count() {
        let ds = worked_example();
        let m = train_partitioned(&ds, &PartitionConfig::new(vec![2, 3, 1], 4).unwrap()).unwrap();
        let c = compile_model(&m).unwrap();
        assert_eq!(c.model_entries(), m.total_leaves());
        for (sid, e) in &m.subtrees {
            assert_eq!(c.model_entries_for(*sid), e.tree.leaves().len());
        }
        for w in ds.flows() {
            let mut sid = m.initial_sid;
            for (j, s) in w.iter().enumerate() {
                let want = m.routing[&(sid, m.subtrees[&sid].tree.predict(&s.features).0)];
                assert_eq!(c.tcam_lookup(sid, &s.features).unwrap(), want, "window {j}");
                match want {
                    Route::NextSid(n) => sid = n,
                    Route::FinalClass(_) => break,
                }
            }
        }
    }

    #[test]
    fn feature_tables_are_exhaustive_and_disjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let t = random_tree(&mut rng, 4, 4, 5, 255);
            let th = collect_thresholds(&t);
            let c = compile_model(&single_model(t, 4, BitWidth::W8)).unwrap();
            for (slot, f) in c.slot_features[&Sid(1)].iter().enumerate() {
                let entries = &c.feature_tables[slot][&Sid(1)];
                for v in 0..=255u32 {
                    let mut key = BitString::zeros(c.layout.feature_key_width());
                    key.set_field(0, 8, v as u64);
                    key.set_field(8, c.layout.sid_width, 1);
                    let hits: Vec<&TernaryEntry> = entries.iter().filter(|e| key.matches(&e.value, &e.mask)).collect();
                    assert_eq!(hits.len(), 1);
                    let want = range_mark(v, &th[f], c.layout.slot_mark_widths[slot]);
                    assert_eq!(hits[0].action, Action::SetMark(want));
                }
            }
        }
    }

    #[test]
    fn lookup_equals_predict_on_trained_and_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for i in 0..40 {
            let t = if i % 2 == 0 {
                random_tree(&mut rng, 4, 3, 5, 255)
            } else {
                let rows: Vec<Vec<u32>> = (0..100).map(|_| (0..4).map(|_| rng.random_range(0..=255)).collect()).collect();
                let y: Vec<u32> = rows.iter().map(|r| (r[0] / 64 + r[2] / 100) % 3).collect();
                let r: Vec<&[u32]> = rows.iter().map(Vec::as_slice).collect();
                train_subtree(&r, &y, 5, 3).unwrap()
            };
            let c = compile_model(&single_model(t.clone(), 4, BitWidth::W8)).unwrap();
            for _ in 0..500 {
                let x: Vec<u32> = (0..4).map(|_| rng.random_range(0..=255)).collect();
                assert_eq!(c.tcam_lookup(Sid(1), &x).unwrap(), Route::FinalClass(t.predict(&x).1));
            }
        }
    }

    #[test]
    fn rule_dump_is_stable() {
        let t = Subtree::from_nodes(
            vec![Node::Split { feature: 0, threshold: 5, left: 1, right: 2 }, leaf(0), leaf(1)],
            0, 1, 1,
        )
        .unwrap();
        let c = compile_model(&single_model(t, 1, BitWidth::W8)).unwrap();
        let mut out = Vec::new();
        c.write_rules(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let expected = "\
table,sid,priority,key_hex,mask_hex,action
feat0,1,0,0x0104,0xfffe,mark:0x0
feat0,1,1,0x0106,0xfffe,mark:0x1
feat0,1,2,0x0100,0xfffc,mark:0x0
feat0,1,3,0x0108,0xfff8,mark:0x1
feat0,1,4,0x0110,0xfff0,mark:0x1
feat0,1,5,0x0120,0xffe0,mark:0x1
feat0,1,6,0x0140,0xffc0,mark:0x1
feat0,1,7,0x0180,0xff80,mark:0x1
model,1,0,0x002,0x1ff,class:0
model,1,1,0x003,0x1ff,class:1
";
        assert_eq!(text, expected);
    }
}
