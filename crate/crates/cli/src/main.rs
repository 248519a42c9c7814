//! `fedsv`: train, value and evaluate federated participants from a config file.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fedsv_core::config::{parse_config, ExperimentConfig, MethodName};
use fedsv_core::estimators::{
    check_exact_forms, check_group_testing_contract, check_permutation_contract, ApproxParams, ContractReport,
};
use fedsv_core::experiments::{
    ensure_dir, prepare, round_contribution_norms, run_backdoor_detection, run_noisy_detection, run_summarization,
    write_detection_tables, write_norms_table, write_summarization_table, DetectionOutcome,
};
use fedsv_core::fl::{
    read_snapshot_dir, replay_valuation, run_federated_training, run_federated_training_with, write_round_file,
    write_snapshot_meta, SnapshotMeta, SNAPSHOT_VERSION,
};
use fedsv_core::manifest::RunManifest;
use fedsv_core::valuation::{write_report, ValuationReport};

#[derive(Parser)]
#[command(name = "fedsv", version, about = "Federated Shapley value experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: the config's `output`, else `runs/<command>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the valuation method.
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
    /// Also write L2-normalized per-round values.
    #[arg(long, global = true)]
    normalized: bool,
    /// Caps worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    verbose: bool,
    /// Accuracy target for sampled methods (with --delta).
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Failure probability for sampled methods.
    #[arg(long, global = true)]
    delta: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Perm,
    Gt,
    Loo,
    Random,
}

impl From<MethodArg> for MethodName {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Exact => MethodName::Exact,
            MethodArg::Perm => MethodName::Perm,
            MethodArg::Gt => MethodName::Gt,
            MethodArg::Loo => MethodName::Loo,
            MethodArg::Random => MethodName::Random,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train with FedAvg, valuing every round; writes a snapshot for replay.
    TrainAndValue,
    /// Re-value a snapshot directory without retraining.
    ValueReplay { snapshot: PathBuf },
    /// Label-flip detection curves for every valuation method.
    NoisyDetect,
    /// Backdoor detection curves plus attack success rate.
    BackdoorDetect,
    /// Retrain dismissing low-value participants per round.
    Summarize {
        /// Reuse the rounds of a train-and-value snapshot instead of training.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Estimators against brute-force values on small random games.
    ExactCheck {
        #[arg(long, default_value_t = 4)]
        players: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 6)]
        gt_players: usize,
        #[arg(long, default_value_t = 200)]
        gt_trials: usize,
        #[arg(long, default_value_t = 0.1)]
        gt_epsilon: f64,
        #[arg(long, default_value_t = 0.2)]
        gt_delta: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::TrainAndValue => "train-and-value",
            Command::ValueReplay { .. } => "value-replay",
            Command::NoisyDetect => "noisy-detect",
            Command::BackdoorDetect => "backdoor-detect",
            Command::Summarize { .. } => "summarize",
            Command::ExactCheck { .. } => "exact-check",
        }
    }
}

struct Loaded {
    cfg: ExperimentConfig,
    digest: String,
}

fn load_config(common: &Common) -> anyhow::Result<Loaded> {
    let path = common.config.as_deref().context("this command needs --config <path>")?;
    let (mut cfg, digest) = parse_config(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = Some(out.clone());
    }
    if let Some(m) = common.method {
        cfg.valuation.method = m.into();
    }
    if common.epsilon.is_some() || common.delta.is_some() {
        let base =
            cfg.valuation.approx.unwrap_or_else(|| ApproxParams::new(0.1, 0.1, cfg.training.metric.range_bound()));
        let mut p = base;
        p.epsilon = common.epsilon.unwrap_or(base.epsilon);
        p.delta = common.delta.unwrap_or(base.delta);
        cfg.valuation.approx = Some(p);
    }
    cfg.valuation.normalized |= common.normalized;
    cfg.valuation.verbose |= common.verbose;
    cfg.validate().context("config after command-line overrides")?;
    Ok(Loaded { cfg, digest })
}

fn out_dir(common: &Common, cfg: Option<&ExperimentConfig>, command: &str) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from("runs").join(command))
}

fn save_report(path: &Path, report: &ValuationReport) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_report(report, BufWriter::new(f))?;
    Ok(())
}

fn save_reports(
    dir: &Path,
    report: &ValuationReport,
    normalized: bool,
    manifest: &mut RunManifest,
) -> anyhow::Result<()> {
    save_report(&dir.join("report.jsonl"), report)?;
    manifest.outputs.push("report.jsonl".into());
    if normalized {
        save_report(&dir.join("report-normalized.jsonl"), &report.normalized())?;
        manifest.outputs.push("report-normalized.jsonl".into());
    }
    let norms = round_contribution_norms(report);
    write_norms_table(&dir.join("norms.tsv"), &norms)?;
    manifest.outputs.push("norms.tsv".into());
    Ok(())
}

fn describe(manifest: &mut RunManifest, loaded: &Loaded) -> anyhow::Result<()> {
    manifest.set_seed(loaded.cfg.seed);
    manifest.config_digest = Some(loaded.digest.clone());
    manifest.resolved_config = Some(serde_json::to_value(&loaded.cfg)?);
    Ok(())
}

fn train_and_value(common: &Common, manifest: &mut RunManifest, dir: &mut Option<PathBuf>) -> anyhow::Result<()> {
    let loaded = load_config(common)?;
    let cfg = &loaded.cfg;
    describe(manifest, &loaded)?;
    let prepared = prepare(cfg)?;
    let strategy = cfg.valuation.strategy()?;
    let out = out_dir(common, Some(cfg), "train-and-value");
    ensure_dir(&out)?;
    *dir = Some(out.clone());
    let snap = out.join("snapshot");
    ensure_dir(&snap)?;
    let verbose = cfg.valuation.verbose;
    let run = run_federated_training_with(
        &prepared.train,
        &prepared.plan,
        &prepared.validation,
        &cfg.training,
        &strategy,
        cfg.seed,
        verbose,
        |record, values| {
            write_round_file(&snap, record)?;
            if verbose {
                eprintln!("round {}: {} selected, value sum {:.6}", record.round, record.selected.len(), values.sum());
            }
            Ok(())
        },
    )?;
    manifest.rounds = run.diagnostics.clone();
    let meta = SnapshotMeta {
        format_version: SNAPSHOT_VERSION,
        participants: cfg.partition.participants,
        rounds: run.rounds.len(),
        metric: cfg.training.metric,
        master_seed: cfg.seed,
        strategy: Some(strategy),
    };
    write_snapshot_meta(&snap, &meta, &prepared.validation)?;
    manifest.outputs.push("snapshot".into());
    save_reports(&out, &run.report, cfg.valuation.normalized, manifest)?;
    println!(
        "trained {} rounds; validation utility {:.6} -> {:.6}",
        run.rounds.len(),
        run.report.initial_utility,
        run.report.final_utility
    );
    Ok(())
}

fn value_replay(
    common: &Common,
    snapshot: &Path,
    manifest: &mut RunManifest,
    dir: &mut Option<PathBuf>,
) -> anyhow::Result<()> {
    let snap = read_snapshot_dir(snapshot).with_context(|| format!("reading snapshot {}", snapshot.display()))?;
    let strategy = match common.method {
        Some(m) => {
            let approx = match (common.epsilon, common.delta) {
                (None, None) => None,
                (e, d) => Some(ApproxParams::new(e.unwrap_or(0.1), d.unwrap_or(0.1), snap.meta.metric.range_bound())),
            };
            fedsv_core::config::ValuationConfig { method: m.into(), approx, ..Default::default() }.strategy()?
        }
        None => snap.meta.strategy.unwrap_or(fedsv_core::fl::ValuationStrategy::Exact),
    };
    let seed = common.seed.unwrap_or(snap.meta.master_seed);
    manifest.set_seed(seed);
    let (report, diags) = replay_valuation(
        &snap.rounds,
        &snap.validation,
        snap.meta.metric,
        snap.meta.participants,
        &strategy,
        seed,
        common.verbose,
    )?;
    manifest.rounds = diags;
    let out = out_dir(common, None, "value-replay");
    ensure_dir(&out)?;
    *dir = Some(out.clone());
    save_reports(&out, &report, common.normalized, manifest)?;
    println!("re-valued {} rounds from {}", snap.rounds.len(), snapshot.display());
    Ok(())
}

fn print_detection(outcome: &DetectionOutcome) {
    for c in &outcome.curves {
        println!("{:<20} auc {:.4}", c.method, c.curve.auc);
    }
    println!("{:<20} {:.4}", "test accuracy", outcome.test_accuracy);
    if let Some(asr) = outcome.attack_success_rate {
        println!("{:<20} {:.4}", "attack success rate", asr);
    }
}

fn detect(
    common: &Common,
    backdoor: bool,
    manifest: &mut RunManifest,
    dir: &mut Option<PathBuf>,
) -> anyhow::Result<()> {
    let loaded = load_config(common)?;
    let cfg = &loaded.cfg;
    describe(manifest, &loaded)?;
    let outcome = if backdoor { run_backdoor_detection(cfg)? } else { run_noisy_detection(cfg)? };
    manifest.rounds = outcome.run.diagnostics.clone();
    let out = out_dir(common, Some(cfg), if backdoor { "backdoor-detect" } else { "noisy-detect" });
    ensure_dir(&out)?;
    *dir = Some(out.clone());
    for p in write_detection_tables(&out, &outcome)? {
        manifest.outputs.push(p.file_name().unwrap_or_default().to_string_lossy().into_owned());
    }
    save_reports(&out, &outcome.sv_report, cfg.valuation.normalized, manifest)?;
    print_detection(&outcome);
    Ok(())
}

fn summarize(
    common: &Common,
    snapshot: Option<&Path>,
    manifest: &mut RunManifest,
    dir: &mut Option<PathBuf>,
) -> anyhow::Result<()> {
    let loaded = load_config(common)?;
    let cfg = &loaded.cfg;
    describe(manifest, &loaded)?;
    let prepared = prepare(cfg)?;
    let strategy = cfg.valuation.strategy()?;
    let (rounds, report) = match snapshot {
        Some(path) => {
            let snap = read_snapshot_dir(path).with_context(|| format!("reading snapshot {}", path.display()))?;
            if snap.meta.participants != cfg.partition.participants || snap.meta.master_seed != cfg.seed {
                bail!("snapshot {} was recorded with a different participant count or seed", path.display());
            }
            let (report, diags) = replay_valuation(
                &snap.rounds,
                &prepared.validation,
                cfg.training.metric,
                cfg.partition.participants,
                &strategy,
                cfg.seed,
                false,
            )?;
            manifest.rounds = diags;
            (snap.rounds, report)
        }
        None => {
            let run = run_federated_training(
                &prepared.train,
                &prepared.plan,
                &prepared.validation,
                &cfg.training,
                &strategy,
                cfg.seed,
            )?;
            manifest.rounds = run.diagnostics;
            (run.rounds, run.report)
        }
    };
    let result = run_summarization(cfg, &prepared, &rounds, &report)?;
    let out = out_dir(common, Some(cfg), "summarize");
    ensure_dir(&out)?;
    *dir = Some(out.clone());
    write_summarization_table(&out.join("summarization.tsv"), &result)?;
    manifest.outputs.push("summarization.tsv".into());
    save_reports(&out, &report, cfg.valuation.normalized, manifest)?;
    println!("unfiltered accuracy {:.4}", result.baseline_accuracy);
    for (m, row) in result.methods.iter().zip(&result.accuracy) {
        let cells: Vec<String> = row.iter().map(|a| format!("{a:.4}")).collect();
        println!("{m:<8} {}", cells.join(" "));
    }
    Ok(())
}

fn contract_line(r: &ContractReport, required: f64) -> bool {
    let ok = r.success_rate() >= required;
    println!(
        "{} {:<14} m={} eps={} delta={} within={}/{} worst={:.4} evals/trial={}{}",
        if ok { "PASS" } else { "FAIL" },
        r.method,
        r.players,
        r.epsilon,
        r.delta,
        r.within,
        r.trials,
        r.worst_error,
        r.evaluations_per_trial,
        r.efficiency_gap.map_or(String::new(), |g| format!(" efficiency-gap={g:.2e}")),
    );
    ok
}

#[allow(clippy::too_many_arguments)]
fn exact_check(
    common: &Common,
    players: usize,
    trials: usize,
    gt_players: usize,
    gt_trials: usize,
    gt_epsilon: f64,
    gt_delta: f64,
    manifest: &mut RunManifest,
    dir: &mut Option<PathBuf>,
) -> anyhow::Result<bool> {
    let seed = common.seed.unwrap_or(0);
    manifest.set_seed(seed);
    let perm = ApproxParams::new(common.epsilon.unwrap_or(0.05), common.delta.unwrap_or(0.1), 1.0);
    let gt = ApproxParams::new(gt_epsilon, gt_delta, 1.0);
    perm.validate()?;
    gt.validate()?;
    let forms = check_exact_forms(6, 50, fedsv_core::seed::child(seed, 0))?;
    let forms_ok = forms <= 1e-9;
    println!("{} exact-forms    max difference {forms:.2e} over 50 games", if forms_ok { "PASS" } else { "FAIL" });
    let p = check_permutation_contract(players, &perm, trials, fedsv_core::seed::child(seed, 1))?;
    let p_ok = contract_line(&p, 1.0 - perm.delta) && p.efficiency_gap.is_some_and(|g| g <= 1e-9);
    let g = check_group_testing_contract(gt_players, &gt, gt_trials, fedsv_core::seed::child(seed, 2))?;
    let g_ok = contract_line(&g, 1.0 - gt.delta);
    if let Some(out) = &common.out {
        ensure_dir(out)?;
        *dir = Some(out.clone());
        let f = File::create(out.join("exact-check.json"))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &(forms, &p, &g))?;
        manifest.outputs.push("exact-check.json".into());
    }
    Ok(forms_ok && p_ok && g_ok)
}

fn run(cli: &Cli, manifest: &mut RunManifest, dir: &mut Option<PathBuf>) -> anyhow::Result<bool> {
    let common = &cli.common;
    match &cli.command {
        Command::TrainAndValue => train_and_value(common, manifest, dir)?,
        Command::ValueReplay { snapshot } => value_replay(common, snapshot, manifest, dir)?,
        Command::NoisyDetect => detect(common, false, manifest, dir)?,
        Command::BackdoorDetect => detect(common, true, manifest, dir)?,
        Command::Summarize { snapshot } => summarize(common, snapshot.as_deref(), manifest, dir)?,
        Command::ExactCheck { players, trials, gt_players, gt_trials, gt_epsilon, gt_delta } => {
            return exact_check(
                common,
                *players,
                *trials,
                *gt_players,
                *gt_trials,
                *gt_epsilon,
                *gt_delta,
                manifest,
                dir,
            );
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let mut manifest = RunManifest::start(cli.command.name(), cli.common.seed.unwrap_or(0));
    manifest.threads = cli.common.threads;
    let mut dir = None;
    let result = run(&cli, &mut manifest, &mut dir);
    let code = match &result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            manifest.partial = true;
            manifest.error = Some(format!("{e:#}"));
            ExitCode::FAILURE
        }
    };
    if let Some(dir) = dir {
        if let Err(e) = manifest.finish(&dir) {
            eprintln!("error: writing the manifest: {e}");
            return ExitCode::FAILURE;
        }
    }
    code
}
