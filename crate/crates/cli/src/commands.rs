use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use npgnn_core::data::{
    generate_sbm, load_content_cites, locate_dataset, preset, read_config, read_result,
    save_checkpoint, sbm_blocks, write_config, write_history, write_result, ContentCitesDataset,
    ExperimentResult,
};
use npgnn_core::training::{
    block_names, check_model_gradients, make_split, rng_stream, run_experiment,
    train as train_split, ExperimentOutcome, GradcheckOptions, MetricsReport, SeedMetrics,
    SeedOutcome, DEFAULT_GRADCHECK_SEED,
};
use npgnn_core::{EncoderActivation, ModelKind, Task, TrainConfig};

use crate::{
    DataArgs, ExperimentArgs, Failure, GradcheckArgs, InspectArgs, RunArgs, SynthArgs, TrainArgs,
};

type CmdResult = Result<ExitCode, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// A loaded graph plus the name used in reports and presets.
struct Loaded {
    name: String,
    dataset: ContentCitesDataset,
}

fn load(
    dataset: Option<&str>,
    data_dir: &Path,
    content: Option<&PathBuf>,
    cites: Option<&PathBuf>,
) -> Result<Loaded, Failure> {
    let (name, content, cites) = match (dataset, content, cites) {
        (Some(name), _, _) => {
            let (c, k) = locate_dataset(data_dir, &name.to_ascii_lowercase())?;
            (name.to_ascii_lowercase(), c, k)
        }
        (None, Some(c), Some(k)) => {
            let name = c
                .file_stem()
                .map_or("graph".into(), |s| s.to_string_lossy().into_owned());
            (name, c.clone(), k.clone())
        }
        _ => return Err(usage("give --dataset or both --content and --cites")),
    };
    let dataset = load_content_cites(&content, &cites)?;
    Ok(Loaded { name, dataset })
}

/// Rejects preset / task combinations before any data is read.
fn load_run_data(args: &RunArgs) -> Result<Loaded, Failure> {
    if let Some(p) = args.data.dataset.as_deref().and_then(preset) {
        p.check_task(args.task.into())
            .map_err(|e| usage(e.to_string()))?;
    }
    load_data(&args.data)
}

fn load_data(d: &DataArgs) -> Result<Loaded, Failure> {
    load(
        d.dataset.as_deref(),
        &d.data_dir,
        d.content.as_ref(),
        d.cites.as_ref(),
    )
}

fn check_fraction(name: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--{name} = {v} must lie in (0, 1]")))
    }
}

/// Defaults, then the config file, then the dataset preset's iteration
/// count (only without a config file), then explicit flags.
fn build_config(args: &RunArgs, dataset: &str) -> Result<TrainConfig, Failure> {
    let task: Task = args.task.into();
    let mut cfg = match &args.config {
        Some(path) => read_config(path).map_err(|e| usage(format!("{}: {e}", path.display())))?,
        None => {
            let mut cfg = TrainConfig::default();
            if let Some(p) = preset(dataset) {
                cfg.iterations = p.iterations;
            }
            cfg
        }
    };
    if let Some(p) = preset(dataset) {
        p.check_task(task).map_err(|e| usage(e.to_string()))?;
        if p.long_running {
            eprintln!("warning: {} is long-running on a CPU", p.name);
        }
    }
    cfg.task = task;
    cfg.model = args.model.into();
    if let Some(v) = args.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.adam_beta2 {
        cfg.adam_beta2 = v;
    }
    if let Some(v) = args.activation {
        cfg.encoder_output_activation = Some(v.into());
    }
    if let Some(v) = args.context_fraction {
        cfg.context_fraction = v;
    }
    if let Some(v) = args.mc_samples {
        cfg.mc_samples = v;
    }
    if let Some(v) = args.eval_every {
        cfg.eval_every = v;
    }
    if let Some(v) = args.train_node_fraction {
        if task != Task::FewShot {
            return Err(usage(
                "--train-node-fraction only applies to --task fewshot",
            ));
        }
        check_fraction("train-node-fraction", v)?;
        cfg.split.fewshot_train_fraction = v;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(Failure::Runtime)
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

/// Markdown table with one row per run set,
/// AUC and AP in percent as mean ± standard error.
fn report_table(dataset: &str, cfg: &TrainConfig, report: &MetricsReport) -> String {
    let model = match cfg.model {
        ModelKind::Npgnn => "NPGNN",
        ModelKind::Vgae => "VGAE",
    };
    let mut s = String::new();
    let _ = writeln!(s, "| Dataset | Task | Model | AUC | AP | Runs |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    let _ = writeln!(
        s,
        "| {dataset} | {} | {model} | {} ± {} | {} ± {} | {} |",
        cfg.task,
        pct(report.auc_mean),
        pct(report.auc_se),
        pct(report.ap_mean),
        pct(report.ap_se),
        report.runs()
    );
    s
}

fn seeds_csv(seeds: &[SeedOutcome]) -> String {
    let mut s = String::from("seed,status,auc,ap,wall_seconds\n");
    for o in seeds {
        let _ = match &o.result {
            Ok(m) => writeln!(s, "{},ok,{},{},{:.3}", o.seed, m.auc, m.ap, o.wall_seconds),
            Err(_) => writeln!(s, "{},failed,,,{:.3}", o.seed, o.wall_seconds),
        };
    }
    s
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::Runtime)
}

pub fn train(args: TrainArgs) -> CmdResult {
    let data = load_run_data(&args.run)?;
    let mut cfg = build_config(&args.run, &data.name)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let g = &data.dataset.graph;
    let start = Instant::now();
    let split = make_split(g, cfg.task, &cfg.split, &mut rng_stream(cfg.seed, 0))?;
    let outcome = train_split(&split, &cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let (auc, ap) = outcome.test.ok_or_else(|| {
        Failure::Runtime(anyhow::anyhow!("the split has no test pairs to evaluate"))
    })?;

    let out = &args.run.out;
    create_dir(out)?;
    write_history(&outcome.history, out.join("history.jsonl"))?;
    save_checkpoint(&outcome.model, &cfg, out.join("checkpoint.json"))?;
    let metrics = SeedMetrics {
        seed: cfg.seed,
        auc,
        ap,
        history: outcome.history,
    };
    let experiment = ExperimentOutcome {
        seeds: vec![SeedOutcome {
            seed: cfg.seed,
            wall_seconds: wall,
            result: Ok(metrics.clone()),
        }],
        report: Some(MetricsReport::from_seeds(vec![metrics])),
    };
    write_result(
        &ExperimentResult::new(&data.name, cfg.clone(), experiment, wall),
        out.join("result.json"),
    )?;
    println!(
        "{} {} {} seed {}: ELBO {:.4} -> {:.4}",
        data.name,
        cfg.task,
        model_name(cfg.model),
        cfg.seed,
        outcome.initial_elbo,
        outcome.final_elbo
    );
    println!("test AUC {auc:.4} AP {ap:.4}");
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn model_name(m: ModelKind) -> &'static str {
    match m {
        ModelKind::Npgnn => "npgnn",
        ModelKind::Vgae => "vgae",
    }
}

pub fn experiment(args: ExperimentArgs) -> CmdResult {
    let data = load_run_data(&args.run)?;
    let cfg = build_config(&args.run, &data.name)?;
    let end = args
        .first_seed
        .checked_add(args.runs)
        .ok_or_else(|| usage("--first-seed + --runs overflows"))?;
    let seeds: Vec<u64> = (args.first_seed..end).collect();
    let workers = args.workers.map_or_else(
        || std::thread::available_parallelism().map_or(1, |n| n.get()),
        |w| usize::try_from(w).unwrap_or(usize::MAX),
    );
    let start = Instant::now();
    let outcome = run_experiment(&data.dataset.graph, &cfg, &seeds, workers)?;
    let wall = start.elapsed().as_secs_f64();

    for f in outcome.failures() {
        if let Err(msg) = &f.result {
            eprintln!("warning: seed {} failed: {msg}", f.seed);
        }
    }
    let out = &args.run.out;
    create_dir(out)?;
    write_text(&out.join("seeds.csv"), &seeds_csv(&outcome.seeds))?;
    let report = outcome.report.clone();
    write_result(
        &ExperimentResult::new(&data.name, cfg.clone(), outcome, wall),
        out.join("result.json"),
    )?;
    write_config(&cfg, out.join("config.json"))?;
    let Some(report) = report else {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "every seed failed; see {}",
            out.display()
        )));
    };
    if report.runs() < seeds.len() {
        eprintln!(
            "warning: aggregate covers {} of {} seeds",
            report.runs(),
            seeds.len()
        );
    }
    let table = report_table(&data.name, &cfg, &report);
    write_text(&out.join("table.md"), &table)?;
    print!("{table}");
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(args: GradcheckArgs) -> CmdResult {
    if args.tol.is_nan() || args.tol <= 0.0 || args.step.is_nan() || args.step <= 0.0 {
        return Err(usage("--tol and --step must be positive"));
    }
    let model: ModelKind = args.model.into();
    if args.node_context && model == ModelKind::Vgae {
        return Err(usage("--node-context applies to the npgnn model only"));
    }
    let activation: EncoderActivation = args
        .activation
        .map_or(model.default_activation(), Into::into);
    let opts = GradcheckOptions {
        model,
        activation,
        seed: args.seed.unwrap_or(DEFAULT_GRADCHECK_SEED),
        h: args.step,
        tol: args.tol,
        node_context: args.node_context,
    };
    let report = check_model_gradients(&opts)?;
    let names = block_names(model);
    println!(
        "gradcheck {} ({:?}) seed {} h {:e} tol {:e}",
        model_name(model),
        activation,
        opts.seed,
        opts.h,
        opts.tol
    );
    for b in &report.blocks {
        let status = if b.max_rel_error < report.tol {
            "ok"
        } else {
            "FAIL"
        };
        println!(
            "  {:<8} max rel error {:.3e} at {:?} (analytic {:.6e}, numeric {:.6e}) {status}",
            names.get(b.block).copied().unwrap_or("?"),
            b.max_rel_error,
            b.worst_entry,
            b.analytic,
            b.numeric
        );
    }
    if report.passed() {
        println!(
            "PASS: max relative error {:.3e} < {:e}",
            report.max_rel_error(),
            report.tol
        );
        Ok(ExitCode::SUCCESS)
    } else {
        let worst = report
            .blocks
            .iter()
            .filter(|b| b.max_rel_error >= report.tol)
            .map(|b| names.get(b.block).copied().unwrap_or("?"))
            .collect::<Vec<_>>()
            .join(", ");
        eprintln!("FAIL: blocks over tolerance: {worst}");
        Ok(ExitCode::from(1))
    }
}

pub fn synth(args: SynthArgs) -> CmdResult {
    let mut rng = rng_stream(args.seed, 0);
    let g = generate_sbm(
        args.nodes,
        args.blocks,
        args.p_in,
        args.p_out,
        args.features,
        &mut rng,
    )
    .map_err(|e| usage(e.to_string()))?;
    let blocks = sbm_blocks(args.nodes, args.blocks);
    let mut content = String::new();
    for (i, block) in blocks.iter().enumerate() {
        let _ = write!(content, "n{i}");
        for v in g.features().row(i) {
            let _ = write!(content, "\t{v}");
        }
        let _ = writeln!(content, "\tblock{block}");
    }
    let mut cites = String::new();
    for &(u, v) in g.edges() {
        let _ = writeln!(cites, "n{u}\tn{v}");
    }
    create_dir(&args.out)?;
    write_text(&args.out.join(format!("{}.content", args.name)), &content)?;
    write_text(&args.out.join(format!("{}.cites", args.name)), &cites)?;
    println!(
        "wrote {} nodes and {} edges to {}",
        g.num_nodes(),
        g.num_edges(),
        args.out.join(&args.name).display()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn inspect(args: InspectArgs) -> CmdResult {
    if let Some(path) = &args.result {
        let r = read_result(path)?;
        println!(
            "{}: {} {} over {} seed(s), {:.1}s",
            r.dataset,
            r.config.task,
            model_name(r.config.model),
            r.seeds.len(),
            r.wall_seconds
        );
        for o in &r.seeds {
            match &o.result {
                Ok(m) => println!("  seed {}: AUC {:.4} AP {:.4}", o.seed, m.auc, m.ap),
                Err(e) => println!("  seed {}: failed: {e}", o.seed),
            }
        }
        if let Some(report) = &r.report {
            print!("{}", report_table(&r.dataset, &r.config, report));
        }
        return Ok(ExitCode::SUCCESS);
    }
    let data = load(
        args.dataset.as_deref(),
        &args.data_dir,
        args.content.as_ref(),
        args.cites.as_ref(),
    )?;
    let a = &data.dataset.audit;
    let mut labels = data.dataset.labels.clone();
    labels.sort();
    labels.dedup();
    println!("{}", data.name);
    println!("  nodes                {}", a.nodes);
    println!("  feature columns      {}", a.feature_dim);
    println!("  labels               {}", labels.len());
    println!("  citation lines       {}", a.raw_citations);
    println!("  self-citations       {}", a.self_citations);
    println!("  unresolved           {}", a.unresolved_citations);
    println!("  duplicates           {}", a.duplicate_citations);
    println!("  undirected edges     {}", a.edges);
    if let Some(p) = preset(&data.name) {
        println!(
            "  preset               {} iterations{}{}",
            p.iterations,
            if p.long_running { ", long-running" } else { "" },
            if p.fewshot { "" } else { ", no few-shot" }
        );
    }
    Ok(ExitCode::SUCCESS)
}
