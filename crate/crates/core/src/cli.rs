//! The `bmfim` command line: mine, train, mine-model, eval, gen.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::dataset::{load_fimi_with_items, TransactionDataset};
use crate::em::{fit_em, EmOptions, FitTrace};
use crate::error::{Error, Result};
use crate::eval::{aggregate_csv, EvalReport};
use crate::gibbs::{fit_gibbs_dp, fit_gibbs_finite, trace_csv, GibbsOptions};
use crate::miner::{mine_exact, mine_model, ItemsetCollection, Source};
use crate::model::{Hyperparams, Method, MixtureModel};
use crate::vb::{fit_vb_dp, fit_vb_finite, RhoUpdate, VbOptions};

/// Lower bound applied to data-derived β_i and γ_i so items present in
/// every row, or in none, still get a proper Beta prior.
pub const PRIOR_FLOOR: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "bmfim", version, about = "Frequent itemsets from Bernoulli mixture models")]
pub struct Cli {
    /// Worker threads for mining and per-transaction updates.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine frequent itemsets exactly from a FIMI dataset.
    Mine(MineArgs),
    /// Fit a mixture model to a FIMI dataset.
    Train(TrainArgs),
    /// Generate frequent itemsets from a fitted model.
    MineModel(MineModelArgs),
    /// Score predicted itemsets against exact ones.
    Eval(EvalArgs),
    /// Sample a FIMI dataset from a model.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Treat labels as indices into D items instead of compacting them.
    #[arg(long)]
    pub items: Option<usize>,
}

impl DataArgs {
    fn load(&self) -> Result<TransactionDataset> {
        load_fimi_with_items(&self.input, self.items)
    }
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub minsup: f64,
    #[arg(long)]
    pub output: PathBuf,
}

/// Source of a per-item Beta pseudo-count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorPolicy {
    /// Whole-dataset item frequency (β) or its complement (γ).
    ItemFrequency,
    Scalar(f64),
}

impl FromStr for PriorPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "item-frequency" {
            return Ok(PriorPolicy::ItemFrequency);
        }
        let v = s
            .strip_prefix("scalar:")
            .ok_or_else(|| format!("expected item-frequency or scalar:<value>, got {s:?}"))?;
        match v.parse::<f64>() {
            Ok(x) if x > 0.0 && x.is_finite() => Ok(PriorPolicy::Scalar(x)),
            _ => Err(format!("scalar prior must be a positive number, got {v:?}")),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model JSON path; with several repeats each run gets `.run<i>` before
    /// the extension. The trace goes next to it as `<stem>.trace.csv`.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_parser = parse_trainer)]
    pub method: Method,
    /// Components, or the truncation level for dp-vb. Not accepted by dp-gibbs.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 1.5)]
    pub alpha: f64,
    #[arg(long, default_value = "item-frequency")]
    pub beta: PriorPolicy,
    /// Defaults to 1 − β_i (floored).
    #[arg(long)]
    pub gamma: Option<PriorPolicy>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 200)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 100)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Independent runs with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value = "conjugate")]
    pub rho_update: RhoUpdate,
}

fn parse_trainer(s: &str) -> std::result::Result<Method, String> {
    let m: Method = s.parse().map_err(|e: Error| e.to_string())?;
    if m == Method::Manual {
        return Err("manual is not a training method".into());
    }
    Ok(m)
}

#[derive(Debug, Args)]
pub struct MineModelArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub minsup: f64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Itemsets mined exactly from data.
    #[arg(long)]
    pub truth: PathBuf,
    /// Threshold both sides were mined at.
    #[arg(long)]
    pub minsup: f64,
    /// Fitted models; each is mined at `--minsup` unless paired with a
    /// `--predicted` file in the same position.
    #[arg(long)]
    pub model: Vec<PathBuf>,
    /// Predicted itemset files.
    #[arg(long)]
    pub predicted: Vec<PathBuf>,
    /// Prefix for `<prefix>.report.txt`, `.report.csv` and `.lengths.csv`.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_counts(out: &mut dyn Write, coll: &ItemsetCollection) -> Result<()> {
    let io = |e| Error::io("<stdout>", e);
    for (len, n) in coll.counts_by_length().iter().enumerate().skip(1) {
        writeln!(out, "length {len}: {n}").map_err(io)?;
    }
    writeln!(out, "total: {}", coll.len()).map_err(io)
}

fn save_itemsets(path: &Path, coll: &ItemsetCollection, labels: &[u64]) -> Result<()> {
    let mut w = create(path)?;
    coll.write(labels, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn cmd_mine(args: &MineArgs, out: &mut dyn Write) -> Result<()> {
    let ds = args.data.load()?;
    let coll = mine_exact(&ds, args.minsup)?;
    save_itemsets(&args.output, &coll, ds.item_labels())?;
    write_counts(out, &coll)
}

/// Builds the prior from the policies against the data's item frequencies.
pub fn resolve_hyper(
    ds: &TransactionDataset,
    alpha: f64,
    beta: PriorPolicy,
    gamma: Option<PriorPolicy>,
) -> Result<Hyperparams> {
    let d = ds.n_items();
    let freqs = match (beta, gamma) {
        (PriorPolicy::Scalar(_), None | Some(PriorPolicy::Scalar(_))) => None,
        _ => Some(ds.item_frequencies()?),
    };
    let beta_v: Vec<f64> = match beta {
        PriorPolicy::Scalar(v) => vec![v; d],
        PriorPolicy::ItemFrequency => freqs.as_ref().unwrap().iter().map(|f| f.max(PRIOR_FLOOR)).collect(),
    };
    let gamma_v: Vec<f64> = match gamma {
        Some(PriorPolicy::Scalar(v)) => vec![v; d],
        Some(PriorPolicy::ItemFrequency) => freqs
            .as_ref()
            .unwrap()
            .iter()
            .map(|f| (1.0 - f).max(PRIOR_FLOOR))
            .collect(),
        None => beta_v.iter().map(|b| (1.0 - b).max(PRIOR_FLOOR)).collect(),
    };
    Hyperparams::new(alpha, beta_v, gamma_v)
}

/// One training run of `args.method` with the given seed.
pub fn train_once(
    ds: &TransactionDataset,
    args: &TrainArgs,
    seed: u64,
) -> Result<(MixtureModel, FitTrace)> {
    let need_k = || {
        args.k
            .filter(|&k| k >= 1)
            .ok_or_else(|| Error::Argument(format!("--k (at least 1) is required for {}", args.method)))
    };
    if args.method == Method::Em {
        let mut opts = EmOptions::new(need_k()?, seed);
        opts.max_iters = args.max_iters;
        opts.tol = args.tol;
        return fit_em(ds, &opts);
    }
    let hyper = resolve_hyper(ds, args.alpha, args.beta, args.gamma)?;
    match args.method {
        Method::Gibbs | Method::DpGibbs => {
            let opts = GibbsOptions {
                hyper,
                sweeps: args.sweeps,
                burn_in: args.burn_in,
                seed,
            };
            if args.method == Method::Gibbs {
                fit_gibbs_finite(ds, need_k()?, &opts)
            } else if args.k.is_some() {
                Err(Error::Argument("dp-gibbs grows its own components; drop --k".into()))
            } else {
                fit_gibbs_dp(ds, &opts)
            }
        }
        Method::Vb | Method::DpVb => {
            let mut opts = VbOptions::new(need_k()?, hyper, seed);
            opts.max_iters = args.max_iters;
            opts.tol = args.tol;
            opts.rho_update = args.rho_update;
            if args.method == Method::Vb {
                fit_vb_finite(ds, &opts)
            } else {
                fit_vb_dp(ds, &opts)
            }
        }
        Method::Em | Method::Manual => unreachable!(),
    }
}

fn trace_text(method: Method, trace: &FitTrace) -> String {
    match method {
        Method::Gibbs | Method::DpGibbs => trace_csv(trace),
        Method::Vb | Method::DpVb => trace.to_csv("elbo"),
        _ => trace.to_csv("log_likelihood"),
    }
}

/// `model.json` → `model.run<i>.json` when there are several runs.
pub fn run_path(base: &Path, run: usize, runs: usize) -> PathBuf {
    if runs <= 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().unwrap_or_default().to_string_lossy();
    let name = match base.extension() {
        Some(ext) => format!("{stem}.run{run}.{}", ext.to_string_lossy()),
        None => format!("{stem}.run{run}"),
    };
    base.with_file_name(name)
}

/// `model.json` → `model.trace.csv`.
pub fn trace_path(model_path: &Path) -> PathBuf {
    let stem = model_path.file_stem().unwrap_or_default().to_string_lossy();
    model_path.with_file_name(format!("{stem}.trace.csv"))
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    if args.repeats == 0 {
        return Err(Error::Argument("--repeats must be at least 1".into()));
    }
    if args.method == Method::DpGibbs && args.k.is_some() {
        return Err(Error::Argument("dp-gibbs grows its own components; drop --k".into()));
    }
    let ds = args.data.load()?;
    for run in 0..args.repeats {
        let seed = args.seed.wrapping_add(run as u64);
        let (model, trace) = train_once(&ds, args, seed)?;
        let path = run_path(&args.output, run, args.repeats);
        model.save(&path)?;
        write_file(&trace_path(&path), &trace_text(args.method, &trace))?;
        writeln!(
            out,
            "{}: method {} seed {seed} K {} iterations {}",
            path.display(),
            args.method,
            model.n_components(),
            trace.iterations()
        )
        .map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}

pub fn cmd_mine_model(args: &MineModelArgs, out: &mut dyn Write) -> Result<()> {
    let model = MixtureModel::load(&args.model)?;
    let coll = mine_model(&model, args.minsup)?;
    save_itemsets(&args.output, &coll, &model.item_labels())?;
    write_counts(out, &coll)
}

fn read_itemsets(path: &Path, labels: &[u64], minsup: f64, source: Source) -> Result<ItemsetCollection> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let coll = ItemsetCollection::read(BufReader::new(f), labels, minsup, source)?;
    if let Some(s) = coll.itemsets.iter().find(|s| !(s.measure >= minsup)) {
        return Err(Error::Argument(format!(
            "threshold mismatch: {} holds an itemset with measure {} below --minsup {minsup}",
            path.display(),
            s.measure
        )));
    }
    Ok(coll)
}

/// Every item label mentioned in the given itemset files, ascending.
fn labels_in(paths: &[&Path]) -> Result<Vec<u64>> {
    let mut labels = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (lineno, line) in text.lines().enumerate() {
            let items = line.split('\t').next().unwrap_or("");
            for tok in items.split(' ').filter(|t| !t.is_empty()) {
                labels.push(tok.parse::<u64>().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    message: format!("bad item {tok:?} in {}", path.display()),
                })?);
            }
        }
    }
    labels.sort_unstable();
    labels.dedup();
    Ok(labels)
}

fn report_path(prefix: &Path, run: usize, runs: usize, suffix: &str) -> PathBuf {
    let name = prefix.file_name().unwrap_or_default().to_string_lossy();
    let name = if runs > 1 {
        format!("{name}.run{run}.{suffix}")
    } else {
        format!("{name}.{suffix}")
    };
    prefix.with_file_name(name)
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    crate::miner::MinSupport::new(args.minsup)?;
    if args.model.is_empty() && args.predicted.is_empty() {
        return Err(Error::Argument("eval needs --model or --predicted".into()));
    }
    if !args.model.is_empty() && !args.predicted.is_empty() && args.model.len() != args.predicted.len() {
        return Err(Error::Argument("--model and --predicted must pair up one to one".into()));
    }
    let runs = args.model.len().max(args.predicted.len());
    let mut reports = Vec::with_capacity(runs);
    for run in 0..runs {
        let model = match args.model.get(run) {
            Some(p) => Some(MixtureModel::load(p)?),
            None => None,
        };
        let labels = match &model {
            Some(m) => m.item_labels(),
            None => labels_in(&[&args.truth, &args.predicted[run]])?,
        };
        let truth = read_itemsets(&args.truth, &labels, args.minsup, Source::DataExact)?;
        let (predicted, name) = match (args.predicted.get(run), &model) {
            (Some(p), _) => (
                read_itemsets(p, &labels, args.minsup, Source::ModelPredicted)?,
                p.display().to_string(),
            ),
            (None, Some(m)) => (mine_model(m, args.minsup)?, args.model[run].display().to_string()),
            (None, None) => unreachable!(),
        };
        let report = EvalReport::evaluate(
            &truth,
            &predicted,
            model.as_ref(),
            &args.truth.display().to_string(),
            &name,
        )?;
        write_file(&report_path(&args.output, run, runs, "report.txt"), &report.to_text())?;
        write_file(&report_path(&args.output, run, runs, "report.csv"), &report.to_csv())?;
        write_file(&report_path(&args.output, run, runs, "lengths.csv"), &report.length_csv())?;
        out.write_all(report.to_text().as_bytes())
            .map_err(|e| Error::io("<stdout>", e))?;
        reports.push(report);
    }
    if runs > 1 {
        let csv = aggregate_csv(&reports);
        write_file(&report_path(&args.output, 0, 1, "aggregate.csv"), &csv)?;
        out.write_all(csv.as_bytes()).map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}

pub fn cmd_gen(args: &GenArgs, out: &mut dyn Write) -> Result<()> {
    let model = MixtureModel::load(&args.model)?;
    let ds = TransactionDataset::sample_from_model(&model, args.n, args.seed);
    ds.save_fimi(&args.output)?;
    writeln!(out, "{}: {} transactions over {} items", args.output.display(), ds.n_transactions(), ds.n_items())
        .map_err(|e| Error::io("<stdout>", e))
}

/// Runs a parsed command line on a pool of `cli.threads` workers.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::Argument("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::Argument(format!("cannot start {} threads: {e}", cli.threads)))?;
    // Command output is buffered so the pool's closure stays Send.
    let mut buf = Vec::new();
    let result = pool.install(|| match &cli.command {
        Command::Mine(a) => cmd_mine(a, &mut buf),
        Command::Train(a) => cmd_train(a, &mut buf),
        Command::MineModel(a) => cmd_mine_model(a, &mut buf),
        Command::Eval(a) => cmd_eval(a, &mut buf),
        Command::Gen(a) => cmd_gen(a, &mut buf),
    });
    out.write_all(&buf).map_err(|e| Error::io("<stdout>", e))?;
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_policy_parsing() {
        assert_eq!("item-frequency".parse::<PriorPolicy>(), Ok(PriorPolicy::ItemFrequency));
        assert_eq!("scalar:0.5".parse::<PriorPolicy>(), Ok(PriorPolicy::Scalar(0.5)));
        assert!("scalar:0".parse::<PriorPolicy>().is_err());
        assert!("0.5".parse::<PriorPolicy>().is_err());
    }

    #[test]
    fn default_prior_follows_frequencies() {
        let ds = TransactionDataset::new(vec![vec![0, 1], vec![0], vec![0, 2], vec![0]], 3).unwrap();
        let h = resolve_hyper(&ds, 1.5, PriorPolicy::ItemFrequency, None).unwrap();
        assert_eq!(h.beta, vec![1.0, 0.25, 0.25]);
        assert_eq!(h.gamma, vec![PRIOR_FLOOR, 0.75, 0.75]);
        let h = resolve_hyper(&ds, 1.5, PriorPolicy::Scalar(2.0), Some(PriorPolicy::Scalar(3.0))).unwrap();
        assert_eq!((h.beta[0], h.gamma[2]), (2.0, 3.0));
    }

    #[test]
    fn output_naming() {
        let p = Path::new("out/m.json");
        assert_eq!(run_path(p, 0, 1), PathBuf::from("out/m.json"));
        assert_eq!(run_path(p, 3, 5), PathBuf::from("out/m.run3.json"));
        assert_eq!(trace_path(&run_path(p, 3, 5)), PathBuf::from("out/m.run3.trace.csv"));
        assert_eq!(report_path(Path::new("r/x"), 1, 2, "report.csv"), PathBuf::from("r/x.run1.report.csv"));
    }

    #[test]
    fn dp_gibbs_rejects_k() {
        let cli = Cli::try_parse_from([
            "bmfim", "train", "--input", "x.dat", "--output", "m.json", "--method", "dp-gibbs", "--k", "3",
        ])
        .unwrap();
        let err = run(&cli, &mut Vec::new()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn manual_is_not_a_trainer() {
        assert!(Cli::try_parse_from(["bmfim", "train", "--input", "x", "--output", "m", "--method", "manual"]).is_err());
    }
}
