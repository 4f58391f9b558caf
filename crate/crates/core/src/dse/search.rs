use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, pareto_front, Candidate, EvalContext, EvalResult};
use crate::error::{Error, Result};
use crate::flowdata::BitWidth;

/// Bounds and budget for the search. All ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub min_depth: u32,
    pub max_depth: u32,
    pub min_k: usize,
    pub max_k: usize,
    pub min_partitions: usize,
    pub max_partitions: usize,
    pub feature_widths: Vec<BitWidth>,
    /// Flows a design must support to be feasible.
    pub required_flows: u64,
    /// Number of batches.
    pub iterations: usize,
    /// Evaluations per batch.
    pub batch: usize,
    /// Leading batches drawn from a shifted Halton sequence.
    pub warmup: usize,
    /// Probability that a post-warm-up proposal mutates an archive member.
    pub mutation_ratio: f64,
    pub seed: u64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            min_depth: 1,
            max_depth: 8,
            min_k: 1,
            max_k: 6,
            min_partitions: 1,
            max_partitions: 4,
            feature_widths: vec![BitWidth::W32],
            required_flows: 10_000,
            iterations: 12,
            batch: 8,
            warmup: 2,
            mutation_ratio: 0.75,
            seed: 7,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("search: {m}")));
        if self.min_depth == 0 || self.min_depth > self.max_depth {
            return bad("depth range must satisfy 1 <= min_depth <= max_depth");
        }
        if self.min_k == 0 || self.min_k > self.max_k {
            return bad("k range must satisfy 1 <= min_k <= max_k");
        }
        if self.min_partitions == 0 || self.min_partitions > self.max_partitions {
            return bad("partition range must satisfy 1 <= min_partitions <= max_partitions");
        }
        if self.min_partitions as u32 > self.max_depth {
            return bad("min_partitions exceeds max_depth; no candidate fits");
        }
        if self.feature_widths.is_empty() {
            return bad("feature_widths must not be empty");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.mutation_ratio) {
            return bad("mutation_ratio must be in [0, 1]");
        }
        Ok(())
    }

    fn contains(&self, c: &Candidate) -> bool {
        let d = c.depth();
        let p = c.sizes.len();
        c.sizes.iter().all(|&s| s >= 1)
            && (self.min_depth..=self.max_depth).contains(&d)
            && (self.min_k..=self.max_k).contains(&c.k)
            && (self.min_partitions..=self.max_partitions).contains(&p)
            && self.feature_widths.contains(&c.feature_width)
    }
}

/// All compositions of `total` into `parts` positive sizes, in lexicographic
/// order.
pub(crate) fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    fn rec(left: u32, parts: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for s in 1..=left.saturating_sub(parts as u32 - 1) {
            cur.push(s);
            rec(left - s, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if parts >= 1 && total >= parts as u32 {
        rec(total, parts, &mut Vec::new(), &mut out);
    }
    out
}

/// Every candidate in the space, in a fixed order.
pub fn enumerate_space(space: &SearchSpace) -> Vec<Candidate> {
    let mut out = Vec::new();
    for &w in &space.feature_widths {
        for d in space.min_depth..=space.max_depth {
            for p in space.min_partitions..=space.max_partitions.min(d as usize) {
                for sizes in compositions(d, p) {
                    for k in space.min_k..=space.max_k {
                        out.push(Candidate::new(sizes.clone(), k, w));
                    }
                }
            }
        }
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// Maps `u` in [0, 1) onto `lo..=hi`.
fn pick(lo: u64, hi: u64, u: f64) -> u64 {
    lo + ((u * (hi - lo + 1) as f64) as u64).min(hi - lo)
}

struct Proposer<'s> {
    space: &'s SearchSpace,
    rng: ChaCha8Rng,
    halton_index: u64,
    shift: [f64; 4],
}

impl<'s> Proposer<'s> {
    fn new(space: &'s SearchSpace) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(space.seed);
        let shift = [rng.random(), rng.random(), rng.random(), rng.random()];
        Proposer {
            space,
            rng,
            halton_index: 0,
            shift,
        }
    }

    fn random_sizes(&mut self, d: u32, p: usize) -> Vec<u32> {
        // p - 1 distinct cut points in 1..d.
        let cuts = rand::seq::index::sample(&mut self.rng, d as usize - 1, p - 1);
        let mut cuts: Vec<u32> = cuts.into_iter().map(|c| c as u32 + 1).collect();
        cuts.sort_unstable();
        let mut prev = 0;
        let mut sizes: Vec<u32> = cuts
            .into_iter()
            .map(|c| {
                let s = c - prev;
                prev = c;
                s
            })
            .collect();
        sizes.push(d - prev);
        sizes
    }

    fn from_unit(&mut self, u: [f64; 4]) -> Candidate {
        let s = self.space;
        let d = pick(s.min_depth as u64, s.max_depth as u64, u[0]).max(s.min_partitions as u64) as u32;
        let p = pick(s.min_partitions as u64, s.max_partitions.min(d as usize) as u64, u[1]) as usize;
        let k = pick(s.min_k as u64, s.max_k as u64, u[2]) as usize;
        let w = s.feature_widths[((u[3] * s.feature_widths.len() as f64) as usize).min(s.feature_widths.len() - 1)];
        let sizes = self.random_sizes(d, p);
        Candidate::new(sizes, k, w)
    }

    fn halton(&mut self) -> Candidate {
        self.halton_index += 1;
        let i = self.halton_index;
        let mut u = [0.0; 4];
        for (dim, base) in [2u64, 3, 5, 7].into_iter().enumerate() {
            u[dim] = (radical_inverse(i, base) + self.shift[dim]).fract();
        }
        self.from_unit(u)
    }

    fn uniform(&mut self) -> Candidate {
        let u = [self.rng.random(), self.rng.random(), self.rng.random(), self.rng.random()];
        self.from_unit(u)
    }

    /// One local move: grow or shrink a partition, move depth between
    /// partitions, split or merge partitions, or nudge `k`.
    fn mutate(&mut self, base: &Candidate) -> Candidate {
        let mut c = base.clone();
        let p = c.sizes.len();
        match self.rng.random_range(0..8) {
            0 => {
                let i = self.rng.random_range(0..p);
                c.sizes[i] += 1;
            }
            1 => {
                let i = self.rng.random_range(0..p);
                if c.sizes[i] > 1 {
                    c.sizes[i] -= 1;
                } else if p > 1 {
                    c.sizes.remove(i);
                }
            }
            2 if p > 1 => {
                let i = self.rng.random_range(0..p);
                let j = (i + self.rng.random_range(1..p)) % p;
                if c.sizes[i] > 1 {
                    c.sizes[i] -= 1;
                    c.sizes[j] += 1;
                }
            }
            3 => {
                let i = self.rng.random_range(0..p);
                if c.sizes[i] > 1 {
                    let left = self.rng.random_range(1..c.sizes[i]);
                    let right = c.sizes[i] - left;
                    c.sizes[i] = left;
                    c.sizes.insert(i + 1, right);
                }
            }
            4 if p > 1 => {
                let i = self.rng.random_range(0..p - 1);
                let merged = c.sizes[i] + c.sizes[i + 1];
                c.sizes[i] = merged;
                c.sizes.remove(i + 1);
            }
            5 => c.k += 1,
            6 => c.k = c.k.saturating_sub(1),
            7 => {
                if let Some(&w) = self.space.feature_widths.choose(&mut self.rng) {
                    c.feature_width = w;
                }
            }
            _ => {}
        }
        c
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// Feasible, mutually non-dominated results ordered by flows ascending.
    pub archive: Vec<EvalResult>,
    /// Every evaluation with its batch index, in proposal order.
    pub history: Vec<(usize, EvalResult)>,
}

/// Batched search: Halton warm-up, then a mix of archive mutations and fresh
/// uniform samples. Proposals are drawn sequentially from one seeded stream
/// and evaluated in parallel, so results do not depend on the thread count.
pub fn run_search(ctx: &EvalContext, space: &SearchSpace) -> Result<SearchOutcome> {
    space.validate()?;
    let mut proposer = Proposer::new(space);
    let mut seen: HashSet<Candidate> = HashSet::new();
    let total = enumerate_space(space).len();
    let mut out = SearchOutcome::default();
    const ATTEMPTS: usize = 64;

    for iteration in 0..space.iterations {
        if seen.len() >= total {
            break;
        }
        let mut batch = Vec::with_capacity(space.batch);
        for _ in 0..space.batch {
            let mut accepted = None;
            for _ in 0..ATTEMPTS {
                let c = if iteration < space.warmup {
                    proposer.halton()
                } else if !out.archive.is_empty() && proposer.rng.random_bool(space.mutation_ratio) {
                    let base = out.archive.choose(&mut proposer.rng).unwrap().candidate.clone();
                    proposer.mutate(&base)
                } else {
                    proposer.uniform()
                };
                if space.contains(&c) && !seen.contains(&c) {
                    accepted = Some(c);
                    break;
                }
            }
            if let Some(c) = accepted {
                seen.insert(c.clone());
                batch.push(c);
            }
        }
        let results: Vec<EvalResult> = batch.par_iter().map(|c| evaluate(ctx, c)).collect();
        let mut pool: Vec<EvalResult> = std::mem::take(&mut out.archive);
        pool.extend(results.iter().filter(|r| r.is_feasible()).cloned());
        let points: Vec<_> = pool.iter().map(EvalResult::point).collect();
        out.archive = pareto_front(&points).into_iter().map(|i| pool[i].clone()).collect();
        out.history.extend(results.into_iter().map(|r| (iteration, r)));
    }
    Ok(out)
}
