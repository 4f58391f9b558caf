use serde::{Deserialize, Serialize};

/// An objective pair: maximize both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub f1: f64,
    pub flows: u64,
}

/// `a` dominates `b`: no worse in both objectives and better in one.
pub fn dominates(a: Point, b: Point) -> bool {
    a.f1 >= b.f1 && a.flows >= b.flows && (a.f1 > b.f1 || a.flows > b.flows)
}

/// Indices of the non-dominated points, ordered by flows ascending (ties by
/// index). Exact duplicates of a front point are all kept.
pub fn pareto_front(points: &[Point]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[b].flows.cmp(&points[a].flows).then(a.cmp(&b)));
    let mut front = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let flows = points[order[i]].flows;
        let mut j = i;
        while j < order.len() && points[order[j]].flows == flows {
            j += 1;
        }
        let group = &order[i..j];
        let top = group.iter().map(|&g| points[g].f1).fold(f64::NEG_INFINITY, f64::max);
        if top > best {
            let mut keep: Vec<usize> = group.iter().copied().filter(|&g| points[g].f1 == top).collect();
            keep.reverse();
            front.extend(keep);
            best = top;
        }
        i = j;
    }
    front.reverse();
    front
}

/// True when the ordered front has F1 non-increasing as flows grow.
pub fn is_monotone(front: &[Point]) -> bool {
    front.windows(2).all(|w| w[0].flows <= w[1].flows && w[0].f1 >= w[1].f1)
}
