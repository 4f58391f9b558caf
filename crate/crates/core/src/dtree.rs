//! CART subtrees trained under a distinct-feature budget.
//!
//! Splits route values `<= threshold` left and `> threshold` right, with
//! thresholds drawn from observed feature values so the compiled ternary
//! rules are exact in fixed point. Training is greedy Gini CART expanded in
//! breadth-first order; a split may introduce a new feature only while the
//! tree uses fewer than `k` distinct features.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::{ClassLabel, Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Leaf {
    pub label: ClassLabel,
    /// Training samples that reached the leaf.
    pub count: u64,
    /// Levels below the subtree root.
    pub depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: u32,
        left: NodeId,
        right: NodeId,
    },
    Leaf(Leaf),
}

/// A trained (or hand-built) subtree stored as a node arena.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subtree {
    nodes: Vec<Node>,
    root: NodeId,
    depth_cap: u32,
    feature_budget: usize,
    used_features: BTreeSet<usize>,
}

impl Subtree {
    /// Builds a subtree from raw nodes, recomputing leaf depths and checking
    /// that the arena is a tree rooted at `root` that honours the depth cap
    /// and the feature budget. Nodes unreachable from the root are rejected.
    pub fn from_nodes(
        mut nodes: Vec<Node>,
        root: NodeId,
        depth_cap: u32,
        feature_budget: usize,
    ) -> Result<Self> {
        if feature_budget == 0 {
            return Err(Error::config("feature budget k must be at least 1"));
        }
        if root >= nodes.len() {
            return Err(Error::integrity("root out of range"));
        }
        let mut seen = vec![false; nodes.len()];
        let mut used = BTreeSet::new();
        let mut stack = vec![(root, 0u32)];
        while let Some((id, depth)) = stack.pop() {
            if id >= nodes.len() || std::mem::replace(&mut seen[id], true) {
                return Err(Error::integrity(format!("node {id} is out of range or shared")));
            }
            match &mut nodes[id] {
                Node::Split {
                    feature,
                    left,
                    right,
                    ..
                } => {
                    if depth >= depth_cap {
                        return Err(Error::integrity("split below the depth cap"));
                    }
                    used.insert(*feature);
                    stack.push((*right, depth + 1));
                    stack.push((*left, depth + 1));
                }
                Node::Leaf(leaf) => leaf.depth = depth,
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::integrity("unreachable nodes in subtree"));
        }
        if used.len() > feature_budget {
            return Err(Error::integrity(format!(
                "subtree uses {} features, budget is {feature_budget}",
                used.len()
            )));
        }
        Ok(Subtree {
            nodes,
            root,
            depth_cap,
            feature_budget,
            used_features: used,
        })
    }

    pub fn single_leaf(label: ClassLabel, count: u64, depth_cap: u32, feature_budget: usize) -> Self {
        Subtree::from_nodes(
            vec![Node::Leaf(Leaf {
                label,
                count,
                depth: 0,
            })],
            0,
            depth_cap,
            feature_budget.max(1),
        )
        .expect("a single leaf is a valid subtree")
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn depth_cap(&self) -> u32 {
        self.depth_cap
    }

    pub fn feature_budget(&self) -> usize {
        self.feature_budget
    }

    pub fn distinct_features(&self) -> &BTreeSet<usize> {
        &self.used_features
    }

    /// Leaf ids in arena order.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n, Node::Leaf(_)))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn leaf(&self, id: NodeId) -> Option<&Leaf> {
        match self.nodes.get(id) {
            Some(Node::Leaf(l)) => Some(l),
            _ => None,
        }
    }

    /// Depth of the deepest leaf.
    pub fn depth(&self) -> u32 {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf(l) => Some(l.depth),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Walks from the root to a leaf. `x` is indexed by catalog feature.
    pub fn predict(&self, x: &[u32]) -> (NodeId, ClassLabel) {
        let mut id = self.root;
        loop {
            match self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
                Node::Leaf(l) => return (id, l.label),
            }
        }
    }

    /// Split decisions from the root down to `leaf`, as
    /// `(feature, threshold, went_right)`.
    pub fn path_to(&self, leaf: NodeId) -> Vec<(usize, u32, bool)> {
        let mut parent = vec![None; self.nodes.len()];
        for (id, n) in self.nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = *n {
                parent[left] = Some((id, false));
                parent[right] = Some((id, true));
            }
        }
        let mut path = Vec::new();
        let mut cur = leaf;
        while let Some((p, right)) = parent[cur] {
            if let Node::Split {
                feature, threshold, ..
            } = self.nodes[p]
            {
                path.push((feature, threshold, right));
            }
            cur = p;
        }
        path.reverse();
        path
    }
}

#[derive(Serialize, Deserialize)]
struct NodeRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<ClassLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    count: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct SubtreeRepr {
    nodes: Vec<NodeRepr>,
    root: NodeId,
    k: usize,
    depth_cap: u32,
}

impl Serialize for Subtree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match *n {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => NodeRepr {
                    kind: "split".into(),
                    feature: Some(feature),
                    threshold: Some(threshold),
                    left: Some(left),
                    right: Some(right),
                    label: None,
                    count: None,
                },
                Node::Leaf(l) => NodeRepr {
                    kind: "leaf".into(),
                    feature: None,
                    threshold: None,
                    left: None,
                    right: None,
                    label: Some(l.label),
                    count: Some(l.count),
                },
            })
            .collect();
        SubtreeRepr {
            nodes,
            root: self.root,
            k: self.feature_budget,
            depth_cap: self.depth_cap,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Subtree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = SubtreeRepr::deserialize(d)?;
        let nodes = repr
            .nodes
            .into_iter()
            .map(|n| match n.kind.as_str() {
                "split" => match (n.feature, n.threshold, n.left, n.right) {
                    (Some(feature), Some(threshold), Some(left), Some(right)) => Ok(Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    }),
                    _ => Err(D::Error::custom("split node needs feature, threshold, left, right")),
                },
                "leaf" => Ok(Node::Leaf(Leaf {
                    label: n.label.ok_or_else(|| D::Error::custom("leaf needs a label"))?,
                    count: n.count.unwrap_or(0),
                    depth: 0,
                })),
                other => Err(D::Error::custom(format!("unknown node kind `{other}`"))),
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Subtree::from_nodes(nodes, repr.root, repr.depth_cap, repr.k).map_err(D::Error::custom)
    }
}

/// Trains one subtree with greedy Gini CART.
///
/// A node becomes a leaf when it is pure, sits at `depth_cap`, holds fewer
/// than two samples, or no candidate feature takes two distinct values.
/// Otherwise the best-scoring split is taken even when it does not lower the
/// impurity, as stock CART learners do. Ties go to the lowest feature index,
/// then the lowest threshold.
pub fn train_subtree(
    rows: &[&[u32]],
    labels: &[ClassLabel],
    depth_cap: u32,
    k: usize,
) -> Result<Subtree> {
    train_subtree_restricted(rows, labels, depth_cap, k, None)
}

/// As [`train_subtree`], but only features in `allowed` may be split on.
pub fn train_subtree_restricted(
    rows: &[&[u32]],
    labels: &[ClassLabel],
    depth_cap: u32,
    k: usize,
    allowed: Option<&[usize]>,
) -> Result<Subtree> {
    if k == 0 {
        return Err(Error::config("feature budget k must be at least 1"));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if rows.len() != labels.len() {
        return Err(Error::config("rows and labels differ in length"));
    }
    let n_features = rows[0].len();
    if rows.iter().any(|r| r.len() != n_features) {
        return Err(Error::config("feature vectors differ in length"));
    }
    let candidates: Vec<usize> = match allowed {
        Some(a) => {
            let set: BTreeSet<usize> = a.iter().copied().filter(|&f| f < n_features).collect();
            set.into_iter().collect()
        }
        None => (0..n_features).collect(),
    };

    let classes: Vec<ClassLabel> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let y: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label is known"))
        .collect();

    let mut trainer = Trainer {
        rows,
        y: &y,
        classes: &classes,
        nodes: Vec::new(),
        used: BTreeSet::new(),
    };
    trainer.grow(&candidates, depth_cap, k);
    let Trainer { nodes, .. } = trainer;
    Subtree::from_nodes(nodes, 0, depth_cap, k)
}

struct Trainer<'a> {
    rows: &'a [&'a [u32]],
    y: &'a [usize],
    classes: &'a [ClassLabel],
    nodes: Vec<Node>,
    used: BTreeSet<usize>,
}

#[derive(Clone, Copy)]
struct SplitChoice {
    feature: usize,
    threshold: u32,
    // Score is num / den with num = A_L*n_R + A_R*n_L, den = n_L*n_R, where
    // A is the sum of squared class counts of a side. Larger is purer.
    num: u128,
    den: u128,
}

impl<'a> Trainer<'a> {
    fn grow(&mut self, candidates: &[usize], depth_cap: u32, k: usize) {
        let all: Vec<usize> = (0..self.rows.len()).collect();
        self.nodes.push(self.leaf_for(&all, 0));
        let mut queue = VecDeque::from([(0usize, all, 0u32)]);

        while let Some((id, samples, depth)) = queue.pop_front() {
            let counts = self.class_counts(&samples);
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            if pure || depth >= depth_cap || samples.len() < 2 {
                continue;
            }
            let allowed: Vec<usize> = if self.used.len() < k {
                candidates.to_vec()
            } else {
                candidates.iter().copied().filter(|f| self.used.contains(f)).collect()
            };
            let Some(best) = self.best_split(&samples, &allowed) else {
                continue;
            };
            self.used.insert(best.feature);
            let (l, r): (Vec<usize>, Vec<usize>) = samples
                .iter()
                .partition(|&&i| self.rows[i][best.feature] <= best.threshold);
            let left = self.nodes.len();
            self.nodes.push(self.leaf_for(&l, depth + 1));
            let right = self.nodes.len();
            self.nodes.push(self.leaf_for(&r, depth + 1));
            self.nodes[id] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left,
                right,
            };
            queue.push_back((left, l, depth + 1));
            queue.push_back((right, r, depth + 1));
        }
    }

    fn class_counts(&self, samples: &[usize]) -> Vec<u64> {
        let mut c = vec![0u64; self.classes.len()];
        for &i in samples {
            c[self.y[i]] += 1;
        }
        c
    }

    fn leaf_for(&self, samples: &[usize], depth: u32) -> Node {
        let counts = self.class_counts(samples);
        // Majority class; ties resolve to the smallest label.
        let best = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(c, _)| c)
            .unwrap_or(0);
        Node::Leaf(Leaf {
            label: self.classes[best],
            count: samples.len() as u64,
            depth,
        })
    }

    fn best_split(&self, samples: &[usize], features: &[usize]) -> Option<SplitChoice> {
        let n = samples.len() as u128;
        let total = self.class_counts(samples);
        let mut best: Option<SplitChoice> = None;
        let mut sorted: Vec<(u32, usize)> = Vec::with_capacity(samples.len());

        for &f in features {
            sorted.clear();
            sorted.extend(samples.iter().map(|&i| (self.rows[i][f], self.y[i])));
            sorted.sort_unstable();
            if sorted[0].0 == sorted[sorted.len() - 1].0 {
                continue;
            }
            let mut left = vec![0u128; total.len()];
            let mut right: Vec<u128> = total.iter().map(|&c| c as u128).collect();
            let mut a_left: u128 = 0;
            let mut a_right: u128 = right.iter().map(|c| c * c).sum();
            for pos in 0..sorted.len() - 1 {
                let (v, c) = sorted[pos];
                a_left += 2 * left[c] + 1;
                left[c] += 1;
                a_right -= 2 * right[c] - 1;
                right[c] -= 1;
                if v == sorted[pos + 1].0 {
                    continue;
                }
                let n_l = pos as u128 + 1;
                let n_r = n - n_l;
                let cand = SplitChoice {
                    feature: f,
                    threshold: v,
                    num: a_left * n_r + a_right * n_l,
                    den: n_l * n_r,
                };
                let better = match best {
                    None => true,
                    Some(b) => cand.num * b.den > b.num * cand.den,
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        best
    }
}

/// Fraction of rows whose prediction equals the label.
pub fn accuracy(tree: &Subtree, rows: &[&[u32]], labels: &[ClassLabel]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let hits = rows
        .iter()
        .zip(labels)
        .filter(|(x, &l)| tree.predict(x).1 == l)
        .count();
    hits as f64 / rows.len() as f64
}

/// Total Gini impurity decrease contributed by each feature when `rows` are
/// routed through `tree`, weighted by sample counts.
pub fn feature_importance(
    tree: &Subtree,
    rows: &[&[u32]],
    labels: &[ClassLabel],
    n_features: usize,
) -> Vec<f64> {
    let classes: Vec<ClassLabel> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut counts = vec![vec![0u64; classes.len()]; tree.nodes.len()];
    for (x, l) in rows.iter().zip(labels) {
        let c = classes.binary_search(l).expect("label is known");
        let mut id = tree.root;
        loop {
            counts[id][c] += 1;
            match tree.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
                Node::Leaf(_) => break,
            }
        }
    }
    // n * gini = n - A / n with A the sum of squared class counts.
    let weighted = |c: &[u64]| -> f64 {
        let n: u64 = c.iter().sum();
        if n == 0 {
            return 0.0;
        }
        let a: u64 = c.iter().map(|x| x * x).sum();
        n as f64 - a as f64 / n as f64
    };
    let mut imp = vec![0.0; n_features];
    for (id, node) in tree.nodes.iter().enumerate() {
        if let Node::Split {
            feature,
            left,
            right,
            ..
        } = *node
        {
            imp[feature] +=
                weighted(&counts[id]) - weighted(&counts[left]) - weighted(&counts[right]);
        }
    }
    imp
}
