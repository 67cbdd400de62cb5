//! Command-line interface: corpus generation, exact oracles, training,
//! solving, evaluation and parameter sweeps.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dataset;
use crate::error::{Error, Result};
use crate::graph::{GraphPair, LabelVocabulary};
use crate::metrics::{self, MetricsReport};
use crate::oracle;
use crate::rng::stream;
use crate::solver::{diffged_solve, ExtractionMethod, SolveConfig};
use crate::synthetic;
use crate::training::{self, Checkpoint, TrainConfig};

#[derive(Parser)]
#[command(
    name = "diffged",
    version,
    about = "Graph edit distance via diffusion-based node matching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic graph pairs with known edit costs
    GenSynthetic(GenSyntheticArgs),
    /// Exact GED per pair (enumeration or A*)
    Oracle(OracleArgs),
    /// Train the denoising network
    Train(TrainArgs),
    /// Solve a single pair with a trained checkpoint
    Solve(SolveArgs),
    /// Aggregate metrics over a dataset
    Evaluate(EvaluateArgs),
    /// Sweep k or the number of reverse steps, emitting CSV
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenSyntheticArgs {
    /// Line-delimited base graphs ({"n":..,"edges":..,"labels":..})
    #[arg(long, conflicts_with = "random_bases")]
    input: Option<PathBuf>,
    /// Generate this many random base graphs instead of reading a file
    #[arg(long)]
    random_bases: Option<usize>,
    #[arg(long, default_value_t = 5)]
    nodes_min: usize,
    #[arg(long, default_value_t = 8)]
    nodes_max: usize,
    #[arg(long, default_value_t = 0.5)]
    edge_prob: f64,
    /// Label vocabulary size for random bases (1 = unlabeled)
    #[arg(long, default_value_t = 1)]
    label_count: usize,
    /// Synthetic partners per base graph
    #[arg(long, default_value_t = 1)]
    per_graph: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides the size-based delta range
    #[arg(long)]
    delta_min: Option<u32>,
    #[arg(long)]
    delta_max: Option<u32>,
    /// Cap on inserted nodes per pair
    #[arg(long, default_value_t = 2)]
    max_new_nodes: usize,
    /// Check small pairs against the exact oracle and resample mismatches
    #[arg(long, default_value_t = false)]
    verify_oracle: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    /// Dataset of pairs (line-delimited JSON)
    #[arg(long)]
    input: PathBuf,
    /// Size guard for the enumeration solver
    #[arg(long, default_value_t = 8)]
    max_nodes: usize,
    /// brute | astar | auto
    #[arg(long, default_value = "auto")]
    method: String,
    /// Most optimal mappings to report per pair
    #[arg(long, default_value_t = 8)]
    mapping_cap: usize,
    /// A* expansion budget
    #[arg(long, default_value_t = 2_000_000)]
    budget: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Training config JSON (defaults apply when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training pairs (line-delimited JSON, ground-truth mappings required)
    #[arg(long)]
    data: PathBuf,
    /// Validation pairs; defaults to holding out the last tenth of --data
    #[arg(long)]
    val: Option<PathBuf>,
    /// Output directory (checkpoint.json, loss_curve.csv)
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = false)]
    json: bool,
}

#[derive(Args)]
struct SolveArgs {
    /// One pair record (JSON)
    #[arg(long)]
    pair: PathBuf,
    /// Trained checkpoint
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    s: usize,
    #[arg(long, default_value = "greedy")]
    method: ExtractionMethodArg,
    #[arg(long, default_value_t = false)]
    one_shot: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Include the edit script in the output
    #[arg(long, default_value_t = false)]
    emit_path: bool,
    #[arg(long, default_value_t = false)]
    json: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    s: usize,
    #[arg(long, default_value = "greedy")]
    method: ExtractionMethodArg,
    #[arg(long, default_value_t = false)]
    one_shot: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = false)]
    json: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// Which parameter to sweep: k | s
    #[arg(long)]
    sweep: String,
    /// Comma-separated sweep values
    #[arg(long, default_value = "1,2,4,8,16,32,64,100")]
    values: String,
    /// Fixed k while sweeping s
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Fixed s while sweeping k
    #[arg(long, default_value_t = 10)]
    s: usize,
    #[arg(long, default_value = "greedy")]
    method: ExtractionMethodArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy)]
struct ExtractionMethodArg(ExtractionMethod);

impl std::str::FromStr for ExtractionMethodArg {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(Self(s.parse()?))
    }
}

/// Entry point used by both `main` and the integration tests. Returns the
/// process exit code: 0 on success, 1 on runtime errors, 2 on usage errors.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::GenSynthetic(args) => cmd_gen_synthetic(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Train(args) => cmd_train(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Ablate(args) => cmd_ablate(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_gen_synthetic(args: GenSyntheticArgs) -> Result<()> {
    let (bases, vocab) = match (&args.input, args.random_bases) {
        (Some(path), None) => dataset::load_graphs(path)?,
        (None, Some(count)) => {
            if args.nodes_min == 0 || args.nodes_min > args.nodes_max {
                return Err(Error::InvalidArgument("bad node count range".into()));
            }
            let vocab = LabelVocabulary::from_names(
                (0..args.label_count.max(1)).map(|i| i.to_string()),
            )?;
            let mut rng = stream(args.seed, u64::MAX);
            let bases = (0..count)
                .map(|_| {
                    use rand::Rng;
                    let n = rng.random_range(args.nodes_min..=args.nodes_max);
                    synthetic::random_base_graph(n, args.edge_prob, vocab.size(), &mut rng)
                })
                .collect();
            (bases, vocab)
        }
        _ => {
            return Err(Error::InvalidArgument(
                "exactly one of --input or --random-bases is required".into(),
            ))
        }
    };
    let delta_range = match (args.delta_min, args.delta_max) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        (None, None) => None,
        _ => {
            return Err(Error::InvalidArgument(
                "--delta-min and --delta-max must be given together".into(),
            ))
        }
    };
    let pairs = synthetic::build_corpus(
        &bases,
        args.per_graph,
        delta_range,
        vocab.size(),
        args.max_new_nodes,
        args.seed,
        args.verify_oracle,
    )?;
    dataset::save_dataset(&pairs, &vocab, &args.output)?;
    eprintln!("wrote {} pairs over {} base graphs to {}", pairs.len(), bases.len(), args.output.display());
    Ok(())
}

#[derive(Serialize)]
struct OracleRecord<'a> {
    index: usize,
    ged: u32,
    optimal: bool,
    swapped: bool,
    mappings: Vec<&'a [usize]>,
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let (pairs, _) = dataset::load_dataset(&args.input)?;
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for (index, pair) in pairs.iter().enumerate() {
        let result = match args.method.as_str() {
            "brute" => {
                if pair.g.node_count() > args.max_nodes {
                    return Err(Error::SizeGuard(format!(
                        "pair {index} has {} nodes, over --max-nodes {}",
                        pair.g.node_count(),
                        args.max_nodes
                    )));
                }
                oracle::exact_ged_bruteforce(pair, args.mapping_cap)?
            }
            "astar" => oracle::exact_ged_astar(pair, args.budget)?,
            "auto" => {
                if pair.g.node_count() <= args.max_nodes.min(oracle::BRUTE_FORCE_NODE_LIMIT) {
                    oracle::exact_ged_bruteforce(pair, args.mapping_cap)?
                } else {
                    oracle::exact_ged_astar(pair, args.budget)?
                }
            }
            other => {
                return Err(Error::InvalidArgument(format!("unknown oracle method {other:?}")))
            }
        };
        let record = OracleRecord {
            index,
            ged: result.ged,
            optimal: result.optimal,
            swapped: pair.swapped,
            mappings: result
                .optimal_mappings
                .iter()
                .take(args.mapping_cap)
                .map(|m| m.as_slice())
                .collect(),
        };
        serde_json::to_writer(&mut out, &record)
            .map_err(|e| Error::Validation(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    epochs: usize,
    best_epoch: Option<usize>,
    final_train_bce: Option<f64>,
    best_val_accuracy: Option<f64>,
    checkpoint: String,
    loss_curve: String,
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => TrainConfig::from_json(&fs::read_to_string(path)?)?,
        None => TrainConfig::default(),
    };
    let (pairs, mut vocab) = dataset::load_dataset(&args.data)?;
    let (train_pairs, val_pairs): (Vec<GraphPair>, Vec<GraphPair>) = match &args.val {
        Some(path) => {
            let (val, val_vocab) = dataset::load_dataset(path)?;
            // express validation labels in the training vocabulary
            let val = dataset::remap_labels(&val, &val_vocab, &mut vocab)?;
            (pairs, val)
        }
        None => {
            // deterministic split: last tenth becomes validation
            let cut = pairs.len() - (pairs.len() / 10);
            let mut train = pairs;
            let val = train.split_off(cut);
            (train, val)
        }
    };

    fs::create_dir_all(&args.out)?;
    let output = training::train(&train_pairs, &val_pairs, &vocab, &config)?;
    let ckpt_path = args.out.join("checkpoint.json");
    output.checkpoint.save(&ckpt_path)?;
    let curve_path = args.out.join("loss_curve.csv");
    let curve_file = File::create(&curve_path)?;
    training::write_loss_curve(BufWriter::new(curve_file), &output.curve)?;

    let summary = TrainSummary {
        epochs: output.curve.len(),
        best_epoch: output.best_epoch,
        final_train_bce: output.curve.last().map(|s| s.train_bce),
        best_val_accuracy: output
            .best_epoch
            .and_then(|e| output.curve.get(e))
            .and_then(|s| s.val_accuracy),
        checkpoint: ckpt_path.display().to_string(),
        loss_curve: curve_path.display().to_string(),
    };
    if args.json {
        println!("{}", serde_json::to_string(&summary).map_err(|e| Error::Validation(e.to_string()))?);
    } else {
        eprintln!(
            "trained {} epochs; best epoch {:?}; checkpoint at {}",
            summary.epochs, summary.best_epoch, summary.checkpoint
        );
    }
    Ok(())
}

fn load_model(
    path: &PathBuf,
) -> Result<(crate::denoiser::DenoiserParams, crate::diffusion::NoiseSchedule, LabelVocabulary)> {
    let ckpt = Checkpoint::load(path)?;
    let params = ckpt.to_params()?;
    let schedule = ckpt.schedule()?;
    let vocab = ckpt.vocabulary()?;
    Ok((params, schedule, vocab))
}

#[derive(Serialize)]
struct SolveOutput {
    predicted_ged: u32,
    swapped: bool,
    best_mapping: Vec<usize>,
    per_chain_costs: Vec<u32>,
    distinct_optimal_paths: usize,
    time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    edit_path: Option<crate::edit_path::EditScript>,
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let text = fs::read_to_string(&args.pair)?;
    let line = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::Parse { record: Some(0), msg: "empty pair file".into() })?;
    let mut vocab = LabelVocabulary::new();
    let pair = dataset::parse_pair_record(line, &mut vocab)?;
    let (params, schedule, model_vocab) = load_model(&args.ckpt)?;
    // one-hot columns are fixed by the training vocabulary
    let pair = dataset::remap_labels_strict(&[pair], &vocab, &model_vocab)?.remove(0);

    let config = SolveConfig {
        k: args.k,
        s: args.s,
        method: args.method.0,
        one_shot: args.one_shot,
        seed: args.seed,
    };
    let start = Instant::now();
    let result = diffged_solve(&pair, &params, &schedule, &config)?;
    let time_s = start.elapsed().as_secs_f64();

    let output = SolveOutput {
        predicted_ged: result.predicted_ged,
        swapped: pair.swapped,
        best_mapping: result.best_mapping.as_slice().to_vec(),
        per_chain_costs: result.per_chain_costs,
        distinct_optimal_paths: result.distinct_optimal_paths,
        time_s,
        edit_path: args.emit_path.then_some(result.best_script),
    };
    if args.json {
        println!("{}", serde_json::to_string(&output).map_err(|e| Error::Validation(e.to_string()))?);
    } else {
        println!("predicted GED: {}", output.predicted_ged);
        println!("distinct optimal paths: {}", output.distinct_optimal_paths);
        println!("solve time: {:.4}s", output.time_s);
        if let Some(script) = &output.edit_path {
            for op in &script.ops {
                println!("  {op:?}");
            }
        }
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let (pairs, vocab) = dataset::load_dataset(&args.data)?;
    let (params, schedule, model_vocab) = load_model(&args.ckpt)?;
    let pairs = dataset::remap_labels_strict(&pairs, &vocab, &model_vocab)?;
    let config = SolveConfig {
        k: args.k,
        s: args.s,
        method: args.method.0,
        one_shot: args.one_shot,
        seed: args.seed,
    };
    let report = metrics::evaluate(&pairs, &params, &schedule, &config)?;
    print_report(&report, args.json)
}

fn print_report(report: &MetricsReport, json: bool) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string(report).map_err(|e| Error::Validation(e.to_string()))?);
    } else {
        println!("mae:      {:.4}", report.mae);
        println!("accuracy: {:.4}", report.accuracy);
        match report.spearman_rho {
            Some(rho) => println!("rho:      {rho:.4}"),
            None => println!("rho:      n/a (no ranking groups)"),
        }
        match report.kendall_tau {
            Some(tau) => println!("tau:      {tau:.4}"),
            None => println!("tau:      n/a"),
        }
        if let (Some(p10), Some(p20)) = (report.p_at_10, report.p_at_20) {
            println!("p@10:     {p10:.4}");
            println!("p@20:     {p20:.4}");
        }
        println!("time_s:   {:.4}", report.mean_solve_seconds);
    }
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let (pairs, vocab) = dataset::load_dataset(&args.data)?;
    let (params, schedule, model_vocab) = load_model(&args.ckpt)?;
    let pairs = dataset::remap_labels_strict(&pairs, &vocab, &model_vocab)?;
    let values: Vec<usize> = args
        .values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad sweep value {v:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if !matches!(args.sweep.as_str(), "k" | "s") {
        return Err(Error::InvalidArgument(format!(
            "--sweep must be 'k' or 's' (got {:?})",
            args.sweep
        )));
    }

    let mut rows = vec!["param,value,accuracy,mae,time_s".to_string()];
    for &value in &values {
        let config = SolveConfig {
            k: if args.sweep == "k" { value } else { args.k },
            s: if args.sweep == "s" { value } else { args.s },
            method: args.method.0,
            one_shot: false,
            seed: args.seed,
        };
        let report = metrics::evaluate(&pairs, &params, &schedule, &config)?;
        rows.push(format!(
            "{},{},{},{},{}",
            args.sweep, value, report.accuracy, report.mae, report.mean_solve_seconds
        ));
    }
    let csv = rows.join("\n") + "\n";
    match &args.out {
        Some(path) => fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}
