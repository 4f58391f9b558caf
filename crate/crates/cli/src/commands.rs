use std::collections::BTreeMap;
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use pdt_core::config::RunConfig;
use pdt_core::dse::{self, EvalContext, EvalResult};
use pdt_core::flowdata::{build_partitioned_dataset, ingest_trace_file, write_trace, TraceFormat, WindowSpec};
use pdt_core::metrics::macro_f1;
use pdt_core::partition::{train_partitioned, train_topk_baseline, window_rows};
use pdt_core::pipesim::{events_from_flows, measure_ttd, run_trace, BoundaryMode, IndexMode, PipelineConfig, SimStats};
use pdt_core::resource::{check_feasibility, estimate, estimate_recirc, recircs_per_flow};
use pdt_core::rulegen::compile_model;
use pdt_core::synth::synth_flows;
use pdt_core::{
    BitWidth, CompiledTables, EnvironmentModel, FlowTrace, PartitionConfig, PartitionedModel, WindowedDataset,
};

use crate::output::{InputRecord, OutputDir, RunManifest};
use crate::{Cli, CliError, Command, GlobalOpts};

struct Ctx {
    cfg: RunConfig,
    config_path: Option<PathBuf>,
    seed_override: Option<u64>,
}

impl Ctx {
    fn load(g: &GlobalOpts) -> Result<Self, CliError> {
        let cfg = match &g.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        Ok(Ctx {
            cfg,
            config_path: g.config.clone(),
            seed_override: g.seed,
        })
    }

    fn width(&self, bits: Option<u32>) -> Result<BitWidth, CliError> {
        match bits {
            Some(b) => Ok(BitWidth::from_bits(b)?),
            None => Ok(self.cfg.feature_width),
        }
    }

    fn manifest(&self, sub: &str, inputs: &[&Path], seed: u64, settings: serde_json::Value) -> Result<RunManifest, CliError> {
        let mut records = Vec::new();
        for p in inputs.iter().copied().chain(self.config_path.as_deref()) {
            records.push(InputRecord::of(p)?);
        }
        Ok(RunManifest {
            tool: "pdt",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: sub.into(),
            inputs: records,
            config: self.config_path.as_ref().map(|p| p.display().to_string()),
            seed,
            output: String::new(),
            settings,
            artifacts: Vec::new(),
        })
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(j) = cli.global.jobs {
        if j == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::internal(e.to_string()))?;
    }
    let ctx = Ctx::load(&cli.global)?;
    match cli.command {
        Command::Synth { out, flows } => synth(&ctx, &out, flows),
        Command::Featurize { trace, partitions, width, out } => featurize(&ctx, &trace, partitions, width, &out),
        Command::Train { dataset, sizes, k, width, baseline, out } => train(&ctx, &dataset, &sizes, k, width, baseline, &out),
        Command::Compile { model, out } => compile(&ctx, &model, &out),
        Command::Estimate { model, dataset, required_flows, out } => {
            estimate_cmd(&ctx, &model, dataset.as_deref(), required_flows, &out)
        }
        Command::Simulate { tables, trace, hashed, count_only, debug, out } => {
            simulate(&ctx, &tables, &trace, hashed, count_only, debug, &out)
        }
        Command::Infer { model, dataset, out } => infer(&ctx, &model, &dataset, &out),
        Command::Search { trace, iterations, out } => search(&ctx, trace.as_deref(), iterations, &out),
        Command::Report { search, simulate, out } => report(&ctx, search.as_deref(), simulate.as_deref(), &out),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn read_dataset(path: &Path, width: BitWidth) -> Result<WindowedDataset, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(WindowedDataset::read_csv(std::io::BufReader::new(f), path, width)?)
}

fn parse_sizes(s: &str) -> Result<Vec<u32>, CliError> {
    s.split('-')
        .map(|x| x.trim().parse::<u32>().map_err(|_| CliError::usage(format!("bad partition sizes `{s}`; expected e.g. 2-3-1"))))
        .collect()
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> pdt_core::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn synth(ctx: &Ctx, out: &Path, flows: Option<usize>) -> Result<(), CliError> {
    let mut cfg = ctx.cfg.synth.clone();
    if let Some(n) = flows {
        cfg.flows = n;
    }
    if let Some(s) = ctx.seed_override {
        cfg.seed = s;
    }
    let traces = synth_flows(&cfg);
    let mut dir = OutputDir::create(out)?;
    dir.write("trace.csv", &to_bytes(|b| write_trace(&traces, b))?)?;
    let m = ctx.manifest("synth", &[], cfg.seed, json!({ "synth": cfg }))?;
    let path = dir.commit(m)?;
    let packets: usize = traces.iter().map(FlowTrace::len).sum();
    println!("synth: {} flows, {packets} packets -> {}", traces.len(), path.display());
    Ok(())
}

fn featurize(ctx: &Ctx, trace: &Path, partitions: usize, width: Option<u32>, out: &Path) -> Result<(), CliError> {
    let width = ctx.width(width)?;
    let catalog = ctx.cfg.catalog()?;
    let flows = ingest_trace_file(trace, TraceFormat::Csv)?;
    let ds = build_partitioned_dataset(&flows, WindowSpec::new(partitions)?, &catalog, width)?;
    let short = flows.iter().filter(|f| f.is_short(partitions)).count();
    let mut dir = OutputDir::create(out)?;
    dir.write("dataset.csv", &to_bytes(|b| ds.write_csv(b))?)?;
    let settings = json!({ "partitions": partitions, "width": width, "features": catalog.to_specs() });
    let path = dir.commit(ctx.manifest("featurize", &[trace], 0, settings)?)?;
    println!(
        "featurize: {} flows x {partitions} windows x {} features ({short} short flows) -> {}",
        ds.num_flows(),
        ds.num_features(),
        path.display()
    );
    Ok(())
}

fn labels_of(ds: &WindowedDataset) -> Vec<u32> {
    ds.flows().map(|w| w[0].label).collect()
}

fn train(
    ctx: &Ctx,
    dataset: &Path,
    sizes: &str,
    k: usize,
    width: Option<u32>,
    baseline: bool,
    out: &Path,
) -> Result<(), CliError> {
    let width = ctx.width(width)?;
    let ds = read_dataset(dataset, width)?;
    let config = PartitionConfig::new(parse_sizes(sizes)?, k)?;
    if ds.num_partitions != config.num_partitions() {
        return Err(CliError::usage(format!(
            "dataset has {} windows but sizes `{sizes}` name {} partitions",
            ds.num_partitions,
            config.num_partitions()
        )));
    }
    let model = if baseline {
        if config.num_partitions() != 1 {
            return Err(CliError::usage("--baseline trains one tree; pass a single size and a one-window dataset"));
        }
        let (rows, labels) = window_rows(&ds, 0);
        let (tree, _) = train_topk_baseline(&rows, &labels, config.total_depth, k)?;
        PartitionedModel::from_single_tree(tree, ds.num_features(), width)?
    } else {
        train_partitioned(&ds, &config)?
    };
    let f1 = macro_f1(&labels_of(&ds), &model.predict_dataset(&ds)?);
    let mut dir = OutputDir::create(out)?;
    dir.write_json("model.json", &model)?;
    let settings = json!({ "sizes": config.sizes, "k": k, "width": width, "baseline": baseline });
    let path = dir.commit(ctx.manifest("train", &[dataset], 0, settings)?)?;
    println!(
        "train: {} subtrees, {} leaves, {} distinct features, training macro-F1 {f1:.4} -> {}",
        model.subtrees.len(),
        model.total_leaves(),
        model.unique_features().len(),
        path.display()
    );
    Ok(())
}

fn compile(ctx: &Ctx, model_path: &Path, out: &Path) -> Result<(), CliError> {
    let model: PartitionedModel = read_json(model_path)?;
    let tables = compile_model(&model)?;
    let mut dir = OutputDir::create(out)?;
    dir.write_json("tables.json", &tables)?;
    dir.write("rules.csv", &to_bytes(|b| tables.write_rules(b))?)?;
    let path = dir.commit(ctx.manifest("compile", &[model_path], 0, json!({}))?)?;
    println!(
        "compile: {} feature entries, {} model entries -> {}",
        tables.feature_entries(),
        tables.model_entries(),
        path.display()
    );
    Ok(())
}

fn estimate_cmd(
    ctx: &Ctx,
    model_path: &Path,
    dataset: Option<&Path>,
    required_flows: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let model: PartitionedModel = read_json(model_path)?;
    let tables = compile_model(&model)?;
    let catalog = ctx.cfg.catalog()?;
    let profile = &ctx.cfg.profile;
    let env = ctx.cfg.environment.build()?;
    let report = estimate(&tables, &model.config, profile, catalog.dependency_bits(model.feature_width));
    let exit_fractions = match dataset {
        Some(p) => model.exit_fractions(&read_dataset(p, model.feature_width)?)?,
        None => vec![0.0; model.num_partitions()],
    };
    let recirc_bps = estimate_recirc(&model.config, &env, &exit_fractions, profile);
    let required = required_flows.unwrap_or(ctx.cfg.search.required_flows);
    let verdict = check_feasibility(&report, profile, required, recirc_bps);
    let mut dir = OutputDir::create(out)?;
    dir.write_json(
        "resources.json",
        &json!({
            "report": report,
            "exit_fractions": exit_fractions,
            "recircs_per_flow": recircs_per_flow(model.num_partitions(), &exit_fractions),
            "recirc_bps": recirc_bps,
            "environment": env,
            "required_flows": required,
            "feasibility": verdict,
        }),
    )?;
    let mut inputs = vec![model_path];
    inputs.extend(dataset);
    let settings = json!({ "profile": profile, "required_flows": required });
    let path = dir.commit(ctx.manifest("estimate", &inputs, 0, settings)?)?;
    println!(
        "estimate: {} TCAM entries, {} table stages, {} bits/flow, {} flows, {:.0} bps recirculation, {} -> {}",
        report.tcam_entries,
        report.stages_for_tables,
        report.per_flow_register_bits,
        report.flows_supported,
        recirc_bps,
        match &verdict {
            pdt_core::resource::Verdict::Feasible => "feasible".to_string(),
            pdt_core::resource::Verdict::Infeasible(r) => format!("infeasible ({r})"),
        },
        path.display()
    );
    Ok(())
}

fn simulate(
    ctx: &Ctx,
    tables_path: &Path,
    trace: &Path,
    hashed: Option<usize>,
    count_only: Option<u64>,
    debug: bool,
    out: &Path,
) -> Result<(), CliError> {
    let tables: CompiledTables = read_json(tables_path)?;
    let catalog = ctx.cfg.catalog()?;
    let flows = ingest_trace_file(trace, TraceFormat::Csv)?;
    let mut cfg = PipelineConfig::new(&tables, &catalog);
    cfg.indexing = hashed.map_or(IndexMode::Exact, IndexMode::Hashed);
    cfg.boundaries = count_only.map_or(BoundaryMode::DeclaredSize, BoundaryMode::CountOnly);
    cfg.debug = debug;
    cfg.control_packet_bits = ctx.cfg.profile.control_packet_bits;
    let mut stats = run_trace(cfg, &events_from_flows(&flows))?;
    let events = std::mem::take(&mut stats.events);
    let mut dir = OutputDir::create(out)?;
    dir.write_json("stats.json", &stats)?;
    dir.write("ttd.csv", measure_ttd(&stats).to_csv().as_bytes())?;
    if debug {
        let mut log = events.join("\n");
        log.push('\n');
        dir.write("events.log", log.as_bytes())?;
    }
    let settings = json!({
        "indexing": hashed.map_or("exact".to_string(), |s| format!("hashed:{s}")),
        "boundaries": count_only.map_or("declared-size".to_string(), |s| format!("count-only:{s}")),
        "control_packet_bits": ctx.cfg.profile.control_packet_bits,
    });
    let path = dir.commit(ctx.manifest("simulate", &[tables_path, trace], 0, settings)?)?;
    let t = &stats.totals;
    println!(
        "simulate: {} flows, {} packets, {} digests, {} recirculations, {} collisions, {} faults -> {}",
        t.flows,
        t.packets,
        t.digests,
        t.recircs,
        stats.collisions,
        t.faults,
        path.display()
    );
    if t.faults > 0 {
        return Err(CliError::internal(format!("{} flows hit a TCAM miss or unknown SID", t.faults)));
    }
    Ok(())
}

fn infer(ctx: &Ctx, model_path: &Path, dataset: &Path, out: &Path) -> Result<(), CliError> {
    let model: PartitionedModel = read_json(model_path)?;
    let ds = read_dataset(dataset, model.feature_width)?;
    if ds.num_partitions != model.num_partitions() {
        return Err(CliError::usage(format!(
            "dataset has {} windows, model has {} partitions",
            ds.num_partitions,
            model.num_partitions()
        )));
    }
    let mut text = String::from("flow_id,label,class,path\n");
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for w in ds.flows() {
        let rows: Vec<&[u32]> = w.iter().map(|s| s.features.as_slice()).collect();
        let (class, path) = model.infer_offline(&rows)?;
        let path: Vec<String> = path.iter().map(|(sid, leaf)| format!("{sid}:{leaf}")).collect();
        text.push_str(&format!("{},{},{class},{}\n", w[0].flow_id, w[0].label, path.join(">")));
        truth.push(w[0].label);
        pred.push(class);
    }
    let mut dir = OutputDir::create(out)?;
    dir.write("predictions.csv", text.as_bytes())?;
    let path = dir.commit(ctx.manifest("infer", &[model_path, dataset], 0, json!({}))?)?;
    println!(
        "infer: {} flows, macro-F1 {:.4} -> {}",
        truth.len(),
        macro_f1(&truth, &pred),
        path.display()
    );
    Ok(())
}

fn search(ctx: &Ctx, trace: Option<&Path>, iterations: Option<usize>, out: &Path) -> Result<(), CliError> {
    let mut space = ctx.cfg.search.clone();
    if let Some(i) = iterations {
        space.iterations = i;
    }
    if let Some(s) = ctx.seed_override {
        space.seed = s;
    }
    space.validate()?;
    let flows = match trace {
        Some(p) => ingest_trace_file(p, TraceFormat::Csv)?,
        None => synth_flows(&ctx.cfg.synth),
    };
    let catalog = ctx.cfg.catalog()?;
    let ectx = EvalContext::build(
        &flows,
        &catalog,
        space.min_partitions..=space.max_partitions,
        &space.feature_widths,
        ctx.cfg.profile.clone(),
        ctx.cfg.environment.build()?,
        space.required_flows,
        space.seed,
    )?;
    let outcome = dse::run_search(&ectx, &space)?;
    let baselines: Vec<EvalResult> = (space.min_k..=space.max_k)
        .filter_map(|k| dse::best_baseline(&ectx, space.min_depth..=space.max_depth, k, space.feature_widths[0]))
        .collect();

    let mut dir = OutputDir::create(out)?;
    dir.write("pareto.csv", &to_bytes(|b| dse::write_pareto_csv(&outcome.archive, b))?)?;
    dir.write("history.jsonl", &to_bytes(|b| dse::write_history_jsonl(&outcome.history, b))?)?;
    dir.write("baselines.csv", &to_bytes(|b| dse::write_pareto_csv(&baselines, b))?)?;
    let settings = json!({
        "search": space,
        "profile": ctx.cfg.profile,
        "environment": ectx.env,
        "synthetic": trace.is_none().then(|| ctx.cfg.synth.clone()),
    });
    let inputs: Vec<&Path> = trace.into_iter().collect();
    let path = dir.commit(ctx.manifest("search", &inputs, space.seed, settings)?)?;
    let feasible = outcome.history.iter().filter(|(_, r)| r.is_feasible()).count();
    println!(
        "search: {} evaluations, {feasible} feasible, {} on the front -> {}",
        outcome.history.len(),
        outcome.archive.len(),
        path.display()
    );
    for r in &outcome.archive {
        println!(
            "  flows {:>9}  f1 {:.4}  D {:>2}  k {}  sizes {}",
            r.flows_supported(),
            r.f1,
            r.candidate.depth(),
            r.candidate.k,
            r.candidate.sizes.iter().map(u32::to_string).collect::<Vec<_>>().join("-")
        );
    }
    if !outcome.history.is_empty() && outcome.archive.is_empty() {
        return Err(CliError::infeasible("no evaluated design was feasible"));
    }
    Ok(())
}

#[derive(Deserialize)]
struct HistoryLine {
    #[allow(dead_code)]
    iteration: usize,
    #[serde(flatten)]
    result: EvalResult,
}

fn read_history(path: &Path) -> Result<Vec<EvalResult>, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let h: HistoryLine = serde_json::from_str(&line)
            .map_err(|e| CliError::input(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(h.result);
    }
    Ok(out)
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    expected: u64,
    actual: u64,
    ok: bool,
}

fn check(name: &'static str, expected: u64, actual: u64) -> Check {
    Check { name, expected, actual, ok: expected == actual }
}

/// Sum checks tying simulator totals to the per-flow outcomes.
fn reconcile(stats: &SimStats, control_packet_bits: u64) -> Vec<Check> {
    let pf = &stats.per_flow;
    let t = &stats.totals;
    vec![
        check("flows", pf.len() as u64, t.flows),
        check("digests", pf.iter().filter(|f| f.class.is_some()).count() as u64, t.digests),
        check("recircs", pf.iter().map(|f| f.recircs).sum(), t.recircs),
        check("lookups", pf.iter().map(|f| f.partitions).sum(), t.lookups),
        check("truncated", pf.iter().filter(|f| f.truncated).count() as u64, t.truncated),
        check("faults", pf.iter().filter(|f| f.fault.is_some()).count() as u64, t.faults),
        check("control_bits", t.recircs * control_packet_bits, t.control_bits),
    ]
}

fn report(ctx: &Ctx, search_dir: Option<&Path>, sim_dir: Option<&Path>, out: &Path) -> Result<(), CliError> {
    if search_dir.is_none() && sim_dir.is_none() {
        return Err(CliError::usage("report needs --search and/or --simulate"));
    }
    let mut dir = OutputDir::create(out)?;
    let mut inputs: Vec<PathBuf> = Vec::new();
    let mut failed = Vec::new();

    if let Some(sd) = search_dir {
        let hist_path = sd.join("history.jsonl");
        let history = read_history(&hist_path)?;
        inputs.push(hist_path);
        let feasible: Vec<EvalResult> = history.into_iter().filter(EvalResult::is_feasible).collect();
        let points: Vec<_> = feasible.iter().map(EvalResult::point).collect();
        let front: Vec<EvalResult> = dse::pareto_front(&points).into_iter().map(|i| feasible[i].clone()).collect();
        dir.write("pareto.csv", &to_bytes(|b| dse::write_pareto_csv(&front, b))?)?;

        let mut text = String::from("D,k,sizes,environment,active_flows,recircs_per_flow,recirc_bps\n");
        for r in &front {
            let config = r.candidate.config()?;
            for preset in ["WS", "HD"] {
                for active in [100_000u64, 500_000, 1_000_000] {
                    let env = EnvironmentModel::preset(preset, active)?;
                    let bps = estimate_recirc(&config, &env, &r.exit_fractions, &ctx.cfg.profile);
                    text.push_str(&format!(
                        "{},{},{},{preset},{active},{:.6},{:.3}\n",
                        config.total_depth,
                        config.k,
                        config.sizes_label(),
                        recircs_per_flow(config.num_partitions(), &r.exit_fractions),
                        bps
                    ));
                }
            }
        }
        dir.write("recirc.csv", text.as_bytes())?;
    }

    if let Some(sd) = sim_dir {
        let stats_path = sd.join("stats.json");
        let stats: SimStats = read_json(&stats_path)?;
        inputs.push(stats_path);
        dir.write("ttd.csv", measure_ttd(&stats).to_csv().as_bytes())?;
        let checks = reconcile(&stats, ctx.cfg.profile.control_packet_bits);
        failed.extend(checks.iter().filter(|c| !c.ok).map(|c| c.name));
        let summary: BTreeMap<&str, serde_json::Value> = BTreeMap::from([
            ("totals", json!(stats.totals)),
            ("collisions", json!(stats.collisions)),
            ("checks", json!(checks)),
        ]);
        dir.write_json("simulation_summary.json", &summary)?;
    }

    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let path = dir.commit(ctx.manifest("report", &input_refs, 0, json!({}))?)?;
    println!("report -> {}", path.display());
    if !failed.is_empty() {
        return Err(CliError::internal(format!("simulator totals do not reconcile: {}", failed.join(", "))));
    }
    Ok(())
}
