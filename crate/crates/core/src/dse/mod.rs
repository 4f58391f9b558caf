//! Design-space exploration over (depth, partition sizes, feature budget,
//! feature width), scored on macro-F1 and supported flows.

mod pareto;
mod search;

pub use pareto::{dominates, is_monotone, pareto_front, Point};
pub use search::{enumerate_space, run_search, SearchOutcome, SearchSpace};

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowdata::{build_partitioned_dataset, BitWidth, FeatureCatalog, FlowTrace, WindowSpec, WindowedDataset};
use crate::metrics::{macro_f1, stratified_split};
use crate::partition::{train_partitioned, train_topk_baseline, window_rows, PartitionConfig, PartitionedModel};
use crate::resource::{check_feasibility, estimate, estimate_recirc, EnvironmentModel, ResourceReport, TargetProfile, Verdict};
use crate::rulegen::compile_model;

/// One point of the design space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Candidate {
    pub sizes: Vec<u32>,
    pub k: usize,
    pub feature_width: BitWidth,
}

impl Candidate {
    pub fn new(sizes: Vec<u32>, k: usize, feature_width: BitWidth) -> Self {
        Candidate { sizes, k, feature_width }
    }

    pub fn depth(&self) -> u32 {
        self.sizes.iter().sum()
    }

    pub fn config(&self) -> Result<PartitionConfig> {
        PartitionConfig::new(self.sizes.clone(), self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub candidate: Candidate,
    /// True for the monolithic top-k baseline.
    #[serde(default)]
    pub baseline: bool,
    pub f1: f64,
    pub report: Option<ResourceReport>,
    pub recirc_bps: f64,
    pub exit_fractions: Vec<f64>,
    pub verdict: Verdict,
    /// Set when training or compilation failed; such results are never
    /// feasible.
    pub error: Option<String>,
}

impl EvalResult {
    fn failed(candidate: Candidate, baseline: bool, e: Error) -> Self {
        EvalResult {
            candidate,
            baseline,
            f1: 0.0,
            report: None,
            recirc_bps: 0.0,
            exit_fractions: Vec::new(),
            verdict: Verdict::Infeasible("error".into()),
            error: Some(e.to_string()),
        }
    }

    pub fn flows_supported(&self) -> u64 {
        self.report.as_ref().map_or(0, |r| r.flows_supported)
    }

    pub fn is_feasible(&self) -> bool {
        self.error.is_none() && self.verdict.is_feasible()
    }

    pub fn point(&self) -> Point {
        Point {
            f1: self.f1,
            flows: self.flows_supported(),
        }
    }
}

/// Everything an evaluation needs besides the candidate: one windowed dataset
/// per (partition count, width), a fixed flow split and the target budgets.
#[derive(Debug, Clone)]
pub struct EvalContext {
    datasets: BTreeMap<(usize, BitWidth), WindowedDataset>,
    train: Vec<usize>,
    test: Vec<usize>,
    dependency_bits: BTreeMap<BitWidth, u64>,
    pub profile: TargetProfile,
    pub env: EnvironmentModel,
    /// Flows the data plane must hold for a design to be feasible.
    pub required_flows: u64,
}

impl EvalContext {
    /// Builds datasets for every partition count in `partitions` (plus 1 for
    /// the baseline) and every width, and splits flows 70/30 by class.
    pub fn build(
        flows: &[FlowTrace],
        catalog: &FeatureCatalog,
        partitions: impl IntoIterator<Item = usize>,
        widths: &[BitWidth],
        profile: TargetProfile,
        env: EnvironmentModel,
        required_flows: u64,
        seed: u64,
    ) -> Result<Self> {
        profile.validate()?;
        env.validate()?;
        let mut ps: Vec<usize> = partitions.into_iter().collect();
        ps.push(1);
        ps.sort_unstable();
        ps.dedup();
        let mut datasets = BTreeMap::new();
        for &w in widths {
            for &p in &ps {
                datasets.insert((p, w), build_partitioned_dataset(flows, WindowSpec::new(p)?, catalog, w)?);
            }
        }
        let labels: Vec<_> = {
            let mut f: Vec<&FlowTrace> = flows.iter().collect();
            f.sort_by_key(|f| f.flow_id);
            f.iter().map(|f| f.label).collect()
        };
        let (train, test) = stratified_split(&labels, 0.7, seed);
        let dependency_bits = widths.iter().map(|&w| (w, catalog.dependency_bits(w))).collect();
        Ok(EvalContext {
            datasets,
            train,
            test,
            dependency_bits,
            profile,
            env,
            required_flows,
        })
    }

    fn split(&self, p: usize, w: BitWidth) -> Result<(WindowedDataset, WindowedDataset)> {
        let ds = self
            .datasets
            .get(&(p, w))
            .ok_or_else(|| Error::config(format!("no dataset prepared for {p} partitions at {} bits", w.bits())))?;
        Ok((ds.select_flows(&self.train), ds.select_flows(&self.test)))
    }

    pub fn train_size(&self) -> usize {
        self.train.len()
    }

    pub fn test_size(&self) -> usize {
        self.test.len()
    }

    fn dependency_bits(&self, w: BitWidth) -> u64 {
        self.dependency_bits.get(&w).copied().unwrap_or(0)
    }

    /// Scores a compiled model: resources, recirculation and feasibility.
    fn score(
        &self,
        candidate: Candidate,
        baseline: bool,
        model: &PartitionedModel,
        train: &WindowedDataset,
        f1: f64,
    ) -> Result<EvalResult> {
        let tables = compile_model(model)?;
        let report = estimate(&tables, &model.config, &self.profile, self.dependency_bits(model.feature_width));
        let exit_fractions = model.exit_fractions(train)?;
        let recirc_bps = estimate_recirc(&model.config, &self.env, &exit_fractions, &self.profile);
        let verdict = check_feasibility(&report, &self.profile, self.required_flows, recirc_bps);
        Ok(EvalResult {
            candidate,
            baseline,
            f1,
            report: Some(report),
            recirc_bps,
            exit_fractions,
            verdict,
            error: None,
        })
    }
}

/// Trains, compiles and scores one partitioned candidate. Failures are
/// recorded in the result rather than returned.
pub fn evaluate(ctx: &EvalContext, candidate: &Candidate) -> EvalResult {
    let run = || -> Result<EvalResult> {
        let config = candidate.config()?;
        let (train, test) = ctx.split(config.num_partitions(), candidate.feature_width)?;
        let model = train_partitioned(&train, &config)?;
        let truth: Vec<_> = test.flows().map(|w| w[0].label).collect();
        let pred = model.predict_dataset(&test)?;
        ctx.score(candidate.clone(), false, &model, &train, macro_f1(&truth, &pred))
    };
    run().unwrap_or_else(|e| EvalResult::failed(candidate.clone(), false, e))
}

/// Monolithic top-k baseline of the given depth on whole-flow features,
/// packaged as a one-partition model so it is costed like any candidate.
pub fn evaluate_baseline(ctx: &EvalContext, depth: u32, k: usize, width: BitWidth) -> EvalResult {
    let candidate = Candidate::new(vec![depth], k, width);
    let run = || -> Result<EvalResult> {
        let config = candidate.config()?;
        let (train, test) = ctx.split(1, width)?;
        let (rows, labels) = window_rows(&train, 0);
        let (tree, _) = train_topk_baseline(&rows, &labels, depth, k)?;
        let (test_rows, truth) = window_rows(&test, 0);
        let pred: Vec<_> = test_rows.iter().map(|r| tree.predict(r).1).collect();
        let model = PartitionedModel::from_single_tree(tree, train.num_features(), width)?;
        debug_assert_eq!(model.config, config);
        ctx.score(candidate.clone(), true, &model, &train, macro_f1(&truth, &pred))
    };
    run().unwrap_or_else(|e| EvalResult::failed(candidate.clone(), true, e))
}

/// Best feasible baseline over depths `depths` at budget `k`.
pub fn best_baseline(
    ctx: &EvalContext,
    depths: impl IntoIterator<Item = u32>,
    k: usize,
    width: BitWidth,
) -> Option<EvalResult> {
    use rayon::prelude::*;
    let depths: Vec<u32> = depths.into_iter().collect();
    let results: Vec<EvalResult> = depths.par_iter().map(|&d| evaluate_baseline(ctx, d, k, width)).collect();
    best_by_f1(results)
}

/// Highest-F1 feasible result; ties keep the earliest.
pub fn best_by_f1(results: impl IntoIterator<Item = EvalResult>) -> Option<EvalResult> {
    results
        .into_iter()
        .filter(EvalResult::is_feasible)
        .fold(None, |best: Option<EvalResult>, r| match best {
            Some(b) if b.f1 >= r.f1 => Some(b),
            _ => Some(r),
        })
}

/// `flows,f1,D,k,sizes,tcam_entries,register_bits`, one row per archive
/// member in front order.
pub fn write_pareto_csv<W: Write>(archive: &[EvalResult], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["flows", "f1", "D", "k", "sizes", "tcam_entries", "register_bits"])
        .map_err(crate::flowdata::csv_io)?;
    for r in archive {
        let report = r.report.as_ref();
        out.write_record([
            r.flows_supported().to_string(),
            format!("{:.6}", r.f1),
            r.candidate.depth().to_string(),
            r.candidate.k.to_string(),
            r.candidate.sizes.iter().map(u32::to_string).collect::<Vec<_>>().join("-"),
            report.map_or(0, |x| x.tcam_entries).to_string(),
            report.map_or(0, |x| x.per_flow_register_bits).to_string(),
        ])
        .map_err(crate::flowdata::csv_io)?;
    }
    out.flush()?;
    Ok(())
}

/// One JSON object per evaluation, in evaluation order.
pub fn write_history_jsonl<W: Write>(history: &[(usize, EvalResult)], mut w: W) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        iteration: usize,
        #[serde(flatten)]
        result: &'a EvalResult,
    }
    for (iteration, result) in history {
        serde_json::to_writer(&mut w, &Line { iteration: *iteration, result })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_flows, SynthConfig};

    pub(crate) fn synth_ctx(flows: usize, max_p: usize) -> EvalContext {
        let traces = synth_flows(&SynthConfig { flows, seed: 11, ..SynthConfig::default() });
        EvalContext::build(
            &traces,
            &FeatureCatalog::default(),
            1..=max_p,
            &[BitWidth::W32],
            TargetProfile::default(),
            EnvironmentModel::preset("WS", 100_000).unwrap(),
            10_000,
            3,
        )
        .unwrap()
    }

    #[test]
    fn evaluate_scores_and_costs() {
        let ctx = synth_ctx(400, 4);
        let r = evaluate(&ctx, &Candidate::new(vec![1, 1, 1, 1], 4, BitWidth::W32));
        assert!(r.error.is_none(), "{:?}", r.error);
        assert!(r.f1 > 0.8, "f1 {}", r.f1);
        let rep = r.report.as_ref().unwrap();
        assert_eq!(rep.dependency_bits, FeatureCatalog::default().dependency_bits(BitWidth::W32));
        assert!(r.is_feasible(), "{:?}", r.verdict);
        assert!(r.recirc_bps > 0.0);

        let b = evaluate_baseline(&ctx, 10, 4, BitWidth::W32);
        assert!(b.error.is_none(), "{:?}", b.error);
        assert!(b.baseline);
        assert_eq!(b.recirc_bps, 0.0);
        assert!(r.f1 > b.f1 + 0.05, "partitioned {} vs baseline {}", r.f1, b.f1);
    }

    #[test]
    fn failures_are_recorded() {
        let ctx = synth_ctx(100, 2);
        // No dataset was prepared for 3 partitions.
        let r = evaluate(&ctx, &Candidate::new(vec![1, 1, 1], 2, BitWidth::W32));
        assert!(r.error.is_some());
        assert!(!r.is_feasible());
        let r = evaluate(&ctx, &Candidate::new(vec![2], 0, BitWidth::W32));
        assert!(r.error.is_some());
    }

    #[test]
    fn pareto_csv_layout() {
        let ctx = synth_ctx(100, 2);
        let r = evaluate(&ctx, &Candidate::new(vec![2, 1], 2, BitWidth::W32));
        let mut buf = Vec::new();
        write_pareto_csv(std::slice::from_ref(&r), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("flows,f1,D,k,sizes,tcam_entries,register_bits"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[2], "3");
        assert_eq!(row[4], "2-1");
        assert_eq!(row[0], r.flows_supported().to_string());
    }
}
