//! `nuit` — one executable over the whole toolkit: inspect and validate
//! scenarios, run seeded episodes, train the learners, benchmark every
//! policy side by side, and push recordings through the near-ultrasound
//! modulation chain and back.
//!
//! Conventions shared by every subcommand: data goes to files or standard
//! output, diagnostics (including the resolved seeds that make a run
//! reproducible) go to standard error, and the exit code is zero exactly
//! when the command completed and its validations held.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nuit_sim::agent::{
    train_dql, train_tabular, AlgorithmKind, CredentialLookupPolicy, DqlPolicy, ExploitDqlPolicy,
    ExploitQPolicy, LearningParams, Policy, QTable, RandomPolicy, ScriptedPolicy, TabularQPolicy,
};
use nuit_sim::bench::{
    brute_force_optimal_env, emit_csv, run_benchmark, run_episode, write_csv, BenchConfig,
    BenchmarkReport, EpisodeRecord,
};
use nuit_sim::env::{Action, AttackEnv};
use nuit_sim::nn::{DqlConfig, Mlp};
use nuit_sim::scenario::{baseline_nuit, load_scenario_file, Scenario};

use nuit_susbam::audio::{AudioBuffer, ModulationParams};
use nuit_susbam::demodulate::{demodulate_coherent, demodulate_square_law, pearson_correlation};
use nuit_susbam::fir::resample_to;
use nuit_susbam::modulate::{modulate_pipeline, normalize_peak};
use nuit_susbam::spectrum::{band_energy_ratio, dominant_frequency};
use nuit_susbam::wav::{read_wav, write_wav};

/// Where `train` leaves its artifacts and where the exploit policies look
/// for them when `--model` is not given.
const DEFAULT_QTABLE: &str = "qtable.json";
const DEFAULT_WEIGHTS: &str = "dql-weights.json";

/// Filter length shared by both demodulators; matches the modulation chain.
const DEMOD_TAPS: usize = 511;

#[derive(Parser)]
#[command(
    name = "nuit",
    version,
    about = "Attack-graph reinforcement learning and near-ultrasound audio modulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize a scenario and report validation findings
    Inspect(InspectArgs),
    /// Run one seeded episode and write it as CSV
    Simulate(SimulateArgs),
    /// Train a learning agent and save its artifact
    Train(TrainArgs),
    /// Compare algorithms over a block of seeds
    Bench(BenchArgs),
    /// Shift a WAV recording into the near-ultrasound band
    Modulate(ModulateArgs),
    /// Recover the message hidden in a modulated WAV recording
    Demodulate(DemodulateArgs),
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario file, or "baseline" for the bundled five-node network
    #[arg(long, default_value = "baseline")]
    scenario: String,
}

impl ScenarioArg {
    fn load(&self) -> Result<Scenario> {
        if self.scenario == "baseline" {
            return Ok(baseline_nuit());
        }
        load_scenario_file(Path::new(&self.scenario))
            .with_context(|| format!("cannot load scenario {:?}", self.scenario))
    }
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Policy to run: random, cred-lookup, q, exploit-q, dql, exploit-dql, or oracle
    #[arg(long)]
    algorithm: AlgorithmKind,
    /// Seed for the episode (and for training, when the policy learns first)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Step budget for the episode
    #[arg(long, default_value_t = 200)]
    budget: u32,
    /// Training episodes behind the q and dql policies
    #[arg(long, default_value_t = 500)]
    episodes: u32,
    /// Trained artifact for exploit-q / exploit-dql (defaults to the train command's output)
    #[arg(long)]
    model: Option<PathBuf>,
    /// CSV destination; standard output when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Learning algorithm: q or dql
    #[arg(long)]
    algorithm: AlgorithmKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training episodes; exploration decays over the first 80% of them
    #[arg(long, default_value_t = 500)]
    episodes: u32,
    /// Step budget per training episode
    #[arg(long, default_value_t = 100)]
    budget: u32,
    /// Artifact destination (defaults to qtable.json / dql-weights.json)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Number of seeds; the block 0..N is used
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Comma-separated algorithms, or "all" for the six contestants
    #[arg(long, default_value = "all")]
    algorithms: String,
    /// Step budget per evaluation episode
    #[arg(long, default_value_t = 200)]
    budget: u32,
    /// Training episodes behind the learning policies
    #[arg(long, default_value_t = 500)]
    episodes: u32,
    /// Worker threads over seeds (0 = all cores)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Report prefix: writes <out>.csv (raw episodes) and <out>.json (aggregates)
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct ModulateArgs {
    /// Input WAV (16-bit PCM, mono or stereo)
    input: PathBuf,
    /// Output WAV
    output: PathBuf,
    /// Carrier frequency in Hz
    #[arg(long, default_value_t = 16_000.0)]
    carrier_hz: f64,
    /// Message bandwidth kept before the shift, in Hz
    #[arg(long, default_value_t = 6_000.0)]
    cutoff_hz: f64,
    /// Tukey taper fraction applied to the finished burst
    #[arg(long, default_value_t = 0.05)]
    tukey_alpha: f64,
}

#[derive(Args)]
struct DemodulateArgs {
    /// Modulated input WAV
    input: PathBuf,
    /// Recovered output WAV
    output: PathBuf,
    /// Detector: a coherent product detector, or the square-law envelope model
    #[arg(long, value_enum, default_value_t = DemodMode::Coherent)]
    mode: DemodMode,
    /// Carrier frequency for the coherent detector, in Hz
    #[arg(long, default_value_t = 16_000.0)]
    carrier_hz: f64,
    /// Recovery low-pass cutoff in Hz
    #[arg(long, default_value_t = 6_000.0)]
    cutoff_hz: f64,
    /// Clean recording to correlate the coherent recovery against
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DemodMode {
    Coherent,
    SquareLaw,
}

fn main() -> ExitCode {
    // Rust ignores SIGPIPE by default, turning `nuit simulate | head` into a
    // panic when the pipe closes. Restore the default disposition so the
    // process ends quietly, the way other stream-oriented tools do.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }

    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Inspect(args) => cmd_inspect(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Train(args) => cmd_train(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Modulate(args) => cmd_modulate(args),
        Command::Demodulate(args) => cmd_demodulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

/// Learning hyperparameters with the schedule shape preserved: whatever the
/// episode count, exploration decays over the first 80% of it.
fn learning_params(episodes: u32, step_budget: u32) -> LearningParams {
    LearningParams {
        episodes,
        epsilon_decay_episodes: episodes * 4 / 5,
        step_budget,
        ..LearningParams::default()
    }
}

fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let violations = scenario.validate();

    println!(
        "scenario: {} ({} nodes, {} vulnerabilities)",
        scenario.name,
        scenario.nodes.len(),
        scenario.vulnerability_count()
    );
    println!("entry node: {}", scenario.entry_node);
    println!();
    println!("{:<24} {:>8} {:>9} {:>7}", "node", "value", "services", "vulns");
    for node in &scenario.nodes {
        println!(
            "{:<24} {:>8} {:>9} {:>7}",
            node.id,
            node.value,
            node.services.len(),
            node.vulnerabilities.len()
        );
    }

    for violation in &violations {
        eprintln!("{violation}");
    }
    let errors = violations.iter().filter(|v| v.is_error()).count();
    if errors > 0 {
        bail!("scenario failed validation with {errors} error(s)");
    }

    // Only a valid scenario has a well-defined action space.
    let env = AttackEnv::new(&scenario)?;
    let locals = env
        .actions()
        .iter()
        .filter(|a| matches!(a, Action::LocalExploit { .. }))
        .count();
    let remotes = env
        .actions()
        .iter()
        .filter(|a| matches!(a, Action::RemoteExploit { .. }))
        .count();
    let connects = env.action_count() - locals - remotes;
    println!();
    println!(
        "actions: {} ({locals} local, {remotes} remote, {connects} connect)",
        env.action_count()
    );
    for (index, action) in env.actions().iter().enumerate() {
        println!("  [{index:>2}] {action}");
    }
    println!("credentials in play: {}", scenario.credentials().len());

    match brute_force_optimal_env(&env, env.key_width().max(1)) {
        Some(path) => println!(
            "optimal conquest: {} actions, final reward {}",
            path.length, path.final_reward
        ),
        None => println!("optimal conquest: none found (scenario may be unwinnable)"),
    }

    let warnings = violations.len() - errors;
    println!(
        "validation: {}",
        if warnings == 0 {
            "clean".to_string()
        } else {
            format!("{warnings} warning(s), see standard error")
        }
    );
    Ok(())
}

/// Builds the requested policy. Learning policies are trained here first
/// (seeded), then resume with end-of-schedule exploration and keep learning;
/// exploiting policies follow a saved artifact greedily.
fn build_policy(
    scenario: &Scenario,
    env: &AttackEnv,
    algorithm: AlgorithmKind,
    params: &LearningParams,
    seed: u64,
    model: Option<&Path>,
) -> Result<Box<dyn Policy>> {
    Ok(match algorithm {
        AlgorithmKind::Random => Box::new(RandomPolicy),
        AlgorithmKind::CredLookup => Box::new(CredentialLookupPolicy),
        AlgorithmKind::Q => {
            eprintln!("training tabular Q: {} episodes", params.episodes);
            let (q, _) = train_tabular(scenario, params, seed)?;
            Box::new(TabularQPolicy::resume(q, params))
        }
        AlgorithmKind::Dql => {
            eprintln!("training DQL: {} episodes", params.episodes);
            let (net, _) = train_dql(scenario, params, &DqlConfig::default(), seed)?;
            Box::new(DqlPolicy::resume(net, params, DqlConfig::default())?)
        }
        AlgorithmKind::ExploitQ => Box::new(ExploitQPolicy::new(load_qtable(model)?)),
        AlgorithmKind::ExploitDql => Box::new(ExploitDqlPolicy::new(load_network(model)?)),
        AlgorithmKind::Oracle => {
            let path = brute_force_optimal_env(env, env.key_width().max(1)).ok_or_else(|| {
                anyhow!("the oracle needs a winnable scenario, and no conquest sequence exists")
            })?;
            Box::new(ScriptedPolicy::new(path.actions))
        }
    })
}

fn load_qtable(model: Option<&Path>) -> Result<QTable> {
    let path = model.unwrap_or_else(|| Path::new(DEFAULT_QTABLE));
    let text = fs::read_to_string(path).with_context(|| {
        format!(
            "no trained Q-table at {}; run `nuit train --algorithm q` first or pass --model",
            path.display()
        )
    })?;
    Ok(QTable::from_json(&text)?)
}

fn load_network(model: Option<&Path>) -> Result<Mlp> {
    let path = model.unwrap_or_else(|| Path::new(DEFAULT_WEIGHTS));
    let text = fs::read_to_string(path).with_context(|| {
        format!(
            "no trained network at {}; run `nuit train --algorithm dql` first or pass --model",
            path.display()
        )
    })?;
    Ok(Mlp::from_json(&text)?)
}

fn write_records(records: &[EpisodeRecord], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            emit_csv(records, path)?;
            eprintln!("wrote {}", path.display());
        }
        None => write_csv(records, std::io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let env = AttackEnv::new(&scenario)?;
    eprintln!("seed: {}", args.seed);

    // Training keeps its own pinned per-episode budget; --budget governs the
    // evaluated episode.
    let params = learning_params(args.episodes, LearningParams::default().step_budget);
    let mut policy = build_policy(
        &scenario,
        &env,
        args.algorithm,
        &params,
        args.seed,
        args.model.as_deref(),
    )?;
    let record = run_episode(&env, policy.as_mut(), args.budget, args.seed, 0)?;

    match record.steps_to_full_ownership {
        Some(steps) => eprintln!(
            "{}: full ownership in {steps} steps, cumulative reward {}",
            record.algorithm,
            record.final_reward()
        ),
        None => eprintln!(
            "{}: ownership not reached in {} steps (cumulative reward {})",
            record.algorithm,
            args.budget,
            record.final_reward()
        ),
    }
    write_records(&[record], args.out.as_deref())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let params = learning_params(args.episodes, args.budget);
    eprintln!("seed: {}", args.seed);

    let (path, curve) = match args.algorithm {
        AlgorithmKind::Q => {
            let (q, curve) = train_tabular(&scenario, &params, args.seed)?;
            let path = args.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_QTABLE));
            fs::write(&path, q.to_json() + "\n")
                .with_context(|| format!("cannot write {}", path.display()))?;
            (path, curve)
        }
        AlgorithmKind::Dql => {
            let (net, curve) = train_dql(&scenario, &params, &DqlConfig::default(), args.seed)?;
            let path = args.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_WEIGHTS));
            fs::write(&path, net.to_json() + "\n")
                .with_context(|| format!("cannot write {}", path.display()))?;
            (path, curve)
        }
        other => bail!("train applies to the learning algorithms (q, dql), not {other}"),
    };

    if curve.is_empty() {
        eprintln!("trained 0 episodes");
    } else {
        let tail = &curve[curve.len().saturating_sub(50)..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        eprintln!(
            "trained {} episodes; mean reward over the last {}: {:.1}",
            curve.len(),
            tail.len(),
            mean
        );
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn parse_algorithms(spec: &str) -> Result<Vec<AlgorithmKind>> {
    if spec == "all" {
        return Ok(AlgorithmKind::ALL_BENCH.to_vec());
    }
    let mut out = Vec::new();
    for name in spec.split(',') {
        let kind: AlgorithmKind = name.trim().parse().map_err(|msg: String| anyhow!(msg))?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    Ok(out)
}

fn print_stats_table(report: &BenchmarkReport) {
    println!(
        "scenario {} | budget {} | {} seed(s)",
        report.scenario,
        report.step_budget,
        report.seeds.len()
    );
    let mut header = format!(
        "{:<12} {:>9} {:>11} {:>5} {:>5}",
        "algorithm", "conquered", "mean-steps", "min", "max"
    );
    for checkpoint in &report.checkpoints {
        header.push_str(&format!(" {:>11}", format!("reward@{checkpoint}")));
    }
    println!("{header}");
    for stats in &report.stats {
        let mut line = format!(
            "{:<12} {:>9} {:>11.2} {:>5} {:>5}",
            stats.algorithm,
            format!("{}/{}", stats.reached_full_ownership, stats.seeds),
            stats.mean_steps,
            stats.min_steps,
            stats.max_steps
        );
        for reward in &stats.mean_reward_at {
            line.push_str(&format!(" {:>11.1}", reward));
        }
        println!("{line}");
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let scenario = args.scenario.load()?;
    let algorithms = parse_algorithms(&args.algorithms)?;
    let seeds: Vec<u64> = (0..args.seeds).collect();
    eprintln!("seeds: 0..{}", args.seeds);

    let config = BenchConfig {
        step_budget: args.budget,
        params: learning_params(args.episodes, LearningParams::default().step_budget),
        threads: args.threads,
        ..BenchConfig::default()
    };
    let report = run_benchmark(&scenario, &algorithms, &seeds, &config)?;
    print_stats_table(&report);

    if let Some(prefix) = &args.out {
        let csv_path = PathBuf::from(format!("{prefix}.csv"));
        let json_path = PathBuf::from(format!("{prefix}.json"));
        emit_csv(&report.records, &csv_path)?;
        fs::write(&json_path, report.to_json_pretty())
            .with_context(|| format!("cannot write {}", json_path.display()))?;
        eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
    }
    Ok(())
}

/// Prints the post-modulation spectrum summary to standard error.
fn report_band(audio: &AudioBuffer, lo: f64, hi: f64) {
    if audio.is_empty() {
        eprintln!("output is empty; no spectrum to report");
        return;
    }
    let (frequency, _) = dominant_frequency(audio);
    eprintln!("dominant component: {frequency:.1} Hz");
    match band_energy_ratio(audio, lo, hi) {
        Ok(db) => eprintln!("band [{lo:.0}, {hi:.0}] Hz holds {db:.1} dB more energy than the rest"),
        Err(err) => eprintln!("band report unavailable: {err}"),
    }
}

fn cmd_modulate(args: &ModulateArgs) -> Result<()> {
    let input = read_wav(&args.input)
        .with_context(|| format!("cannot read {}", args.input.display()))?;
    eprintln!(
        "read {}: {:.2} s at {} Hz",
        args.input.display(),
        input.duration(),
        input.sample_rate
    );

    let params = ModulationParams {
        carrier_hz: args.carrier_hz,
        cutoff_hz: args.cutoff_hz,
        tukey_alpha: args.tukey_alpha,
        ..ModulationParams::default()
    };
    let modulated = modulate_pipeline(&input, &params)?;
    write_wav(&args.output, &modulated)?;

    report_band(&modulated, args.carrier_hz, args.carrier_hz + args.cutoff_hz);
    eprintln!(
        "wrote {}: {:.2} s at {} Hz",
        args.output.display(),
        modulated.duration(),
        modulated.sample_rate
    );
    Ok(())
}

/// Pearson correlation between a recovery and a clean reference. The slower
/// signal is resampled up to the faster rate, both are trimmed to their
/// overlap, and the comparison skips the edges (the filter length or 5% of
/// the overlap, whichever is larger) to stay clear of taper and transient
/// effects. Scale does not matter to the score.
fn reference_correlation(recovered: &AudioBuffer, reference: &AudioBuffer) -> Result<f64> {
    let rate = recovered.sample_rate.max(reference.sample_rate);
    let a = if recovered.sample_rate < rate {
        resample_to(recovered, rate)?
    } else {
        recovered.clone()
    };
    let b = if reference.sample_rate < rate {
        resample_to(reference, rate)?
    } else {
        reference.clone()
    };
    let len = a.len().min(b.len());
    let trim = (len / 20).max(DEMOD_TAPS);
    if len == 0 || trim * 2 >= len {
        bail!("signals too short to compare ({len} overlapping samples)");
    }
    Ok(pearson_correlation(
        &a.samples[trim..len - trim],
        &b.samples[trim..len - trim],
    ))
}

fn cmd_demodulate(args: &DemodulateArgs) -> Result<()> {
    let input = read_wav(&args.input)
        .with_context(|| format!("cannot read {}", args.input.display()))?;
    eprintln!(
        "read {}: {:.2} s at {} Hz",
        args.input.display(),
        input.duration(),
        input.sample_rate
    );

    let recovered = match args.mode {
        DemodMode::Coherent => {
            demodulate_coherent(&input, args.carrier_hz, args.cutoff_hz, DEMOD_TAPS)?
        }
        DemodMode::SquareLaw => demodulate_square_law(&input, args.cutoff_hz, DEMOD_TAPS)?,
    };

    if let Some(ref_path) = &args.reference {
        let reference = read_wav(ref_path)
            .with_context(|| format!("cannot read {}", ref_path.display()))?;
        let correlation = reference_correlation(&recovered, &reference)?;
        eprintln!("correlation vs {}: {correlation:.4}", ref_path.display());
    }

    // Level the artifact so quiet recoveries survive 16-bit quantization;
    // the correlation above is computed on the raw recovery.
    let leveled = if recovered.peak() > 0.0 {
        normalize_peak(&recovered, 0.9)?
    } else {
        recovered
    };
    write_wav(&args.output, &leveled)?;
    eprintln!(
        "wrote {}: {:.2} s at {} Hz",
        args.output.display(),
        leveled.duration(),
        leveled.sample_rate
    );
    Ok(())
}
