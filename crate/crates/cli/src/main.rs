mod args;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use localnewton_core::harness::{self, Algo, ExperimentConfig, CONFIG_KEYS};
use localnewton_core::synth::{self, SynthSpec, SynthTask};
use localnewton_core::theory::{self, SuiteConfig};
use localnewton_core::{data, ObjectiveModel};

use args::{parse_optional, parse_value, usage, Usage};

const SETTINGS_HELP: &str = "\
Settings are `--key value` pairs (or `--key=value`); `--config FILE` loads flat
`key = value` lines first and flags override them. Dashes and underscores in
keys are interchangeable. Unknown keys are errors.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.";

#[derive(Parser)]
#[command(name = "localnewton", version, about = "Distributed Newton-type optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm and write `<output_dir>/<algo>_<dataset>_<seed>.csv`
    /// plus a `.meta` sidecar.
    #[command(after_help = run_help())]
    Run(Settings),
    /// Run several algorithms on one partition and report rounds to a target
    /// loss. Extra keys: algos (comma list, at least two), target.
    #[command(after_help = run_help())]
    Compare(Settings),
    /// Empirical checks of the convergence constants on a dataset.
    /// Extra keys: epsilon, epsilon1, delta_prob, trials, probe_rounds,
    /// floor_n, floor_d, floor_seeds.
    #[command(after_help = run_help())]
    Theory(Settings),
    /// Write a synthetic LIBSVM dataset. Keys: n, d, task, seed, signal,
    /// noise, margin, decay, active, out, test_n, test_out.
    #[command(after_help = SETTINGS_HELP)]
    GenSynth(Settings),
}

#[derive(Args)]
struct Settings {
    #[arg(
        value_name = "--KEY VALUE",
        trailing_var_arg = true,
        allow_hyphen_values = true,
        num_args = 0..
    )]
    settings: Vec<String>,
}

fn run_help() -> String {
    format!("{SETTINGS_HELP}\n\nExperiment keys: {}", CONFIG_KEYS.join(", "))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(s) => cmd_run(&s.settings),
        Command::Compare(s) => cmd_compare(&s.settings),
        Command::Theory(s) => cmd_theory(&s.settings),
        Command::GenSynth(s) => cmd_gen_synth(&s.settings),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The cause chain joined by `: `, skipping causes already spelled out by
/// the error that wraps them.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.ends_with(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 2;
        }
        if let Some(core) = cause.downcast_ref::<localnewton_core::Error>() {
            return if core.is_config() { 2 } else { 3 };
        }
    }
    3
}

/// Applies experiment keys to a default config; `extra` receives the pairs
/// it recognizes first.
fn experiment_config(
    pairs: &[(String, String)],
    mut extra: impl FnMut(&str, &str) -> anyhow::Result<bool>,
) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in pairs {
        if !extra(k, v)? {
            cfg.set(k, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(tokens: &[String]) -> anyhow::Result<()> {
    let pairs = args::resolve(tokens)?;
    let cfg = experiment_config(&pairs, |_, _| Ok(false))?;
    let (train, test) = cfg.load_data()?;
    create_dir(&cfg.output_dir)?;
    let csv_path = cfg.output_dir.join(cfg.csv_file_name());
    let file = File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    let metrics = harness::run_on(&cfg, &train, test.as_ref(), Some(Box::new(BufWriter::new(file))))?;
    let meta_path = csv_path.with_extension("meta");
    write_file(&meta_path, &harness::meta_text(&metrics))?;

    let last = metrics.rows.last();
    println!(
        "{}: {} rows, final train loss {}, {} rounds",
        cfg.algo,
        metrics.rows.len(),
        last.map_or("n/a".to_string(), |r| format!("{:.10e}", r.train_loss)),
        last.map_or(0, |r| r.round)
    );
    for f in &metrics.flags {
        println!("note: {f}");
    }
    println!("wrote {} and {}", csv_path.display(), meta_path.display());
    Ok(())
}

fn cmd_compare(tokens: &[String]) -> anyhow::Result<()> {
    let pairs = args::resolve(tokens)?;
    let mut algos: Option<Vec<Algo>> = None;
    let mut target: Option<f64> = None;
    let cfg = experiment_config(&pairs, |k, v| {
        match k {
            "algos" => {
                let list = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| Algo::parse(s.trim()))
                    .collect::<Result<Vec<_>, _>>()?;
                algos = Some(list);
            }
            "target" => target = Some(parse_value(k, v)?),
            _ => return Ok(false),
        }
        Ok(true)
    })?;
    let algos = algos.ok_or_else(|| usage("compare needs --algos, e.g. --algos adaptive,giant"))?;
    if algos.len() < 2 {
        return Err(usage("compare needs at least two algorithms"));
    }
    let target = target.ok_or_else(|| usage("compare needs --target <training loss>"))?;
    let (train, test) = cfg.load_data()?;
    let cmp = harness::run_comparison(&cfg, &algos, target, &train, test.as_ref())?;

    create_dir(&cfg.output_dir)?;
    let stem = format!("compare_{}_{}", cfg.resolved_dataset_name(), cfg.seed);
    let report_path = cfg.output_dir.join(format!("{stem}.txt"));
    let csv_path = cfg.output_dir.join(format!("{stem}.csv"));
    let report = cmp.report();
    write_file(&report_path, &report)?;
    let mut out = BufWriter::new(File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?);
    cmp.write_csv(&mut out)?;
    out.flush()?;
    print!("{report}");
    println!("wrote {} and {}", report_path.display(), csv_path.display());
    Ok(())
}

fn cmd_theory(tokens: &[String]) -> anyhow::Result<()> {
    let pairs = args::resolve(tokens)?;
    let mut suite = SuiteConfig::default();
    let mut cfg = experiment_config(&pairs, |k, v| {
        match k {
            "epsilon" => suite.epsilon = parse_value(k, v)?,
            "epsilon1" => suite.epsilon1 = parse_value(k, v)?,
            "delta_prob" => suite.delta_prob = parse_value(k, v)?,
            "trials" => suite.trials = parse_value(k, v)?,
            "probe_rounds" => suite.probe_rounds = parse_value(k, v)?,
            "floor_n" => suite.floor_n = parse_value(k, v)?,
            "floor_d" => suite.floor_d = parse_value(k, v)?,
            "floor_seeds" => suite.floor_seeds = parse_value(k, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    })?;
    // Theory runs are small by default; an explicit k still wins.
    if !pairs.iter().any(|(k, _)| k == "k") {
        cfg.k = suite.workers;
    }
    suite.workers = cfg.k;
    suite.seed = cfg.seed;
    suite.beta = cfg.beta;
    let (train, _) = cfg.load_data()?;
    let gamma = cfg.gamma.unwrap_or(1.0 / train.n() as f64);
    let model = ObjectiveModel::new(cfg.loss, &train, gamma)?;
    let report = theory::run_suite(&model, &suite)?;

    create_dir(&cfg.output_dir)?;
    let stem = format!("theory_{}_{}", cfg.resolved_dataset_name(), cfg.seed);
    let report_path = cfg.output_dir.join(format!("{stem}.txt"));
    let trials_path = cfg.output_dir.join(format!("{stem}_trials.csv"));
    write_file(&report_path, &report.text)?;
    write_file(&trials_path, &report.trials_csv)?;
    print!("{}", report.text);
    println!("wrote {} and {}", report_path.display(), trials_path.display());
    Ok(())
}

fn cmd_gen_synth(tokens: &[String]) -> anyhow::Result<()> {
    let pairs = args::resolve(tokens)?;
    let mut spec = SynthSpec::new(0, 0, SynthTask::Logistic, 0);
    let mut have_n = false;
    let mut have_d = false;
    let mut out: Option<PathBuf> = None;
    let mut test_n: Option<usize> = None;
    let mut test_out: Option<PathBuf> = None;
    for (k, v) in &pairs {
        let (k, v) = (k.as_str(), v.as_str());
        match k {
            "n" => {
                spec.n = parse_value(k, v)?;
                have_n = true;
            }
            "d" => {
                spec.d = parse_value(k, v)?;
                have_d = true;
            }
            "task" | "loss" => spec.task = SynthTask::parse(v)?,
            "seed" => spec.seed = parse_value(k, v)?,
            "signal" => spec.signal = parse_value(k, v)?,
            "noise" => spec.noise = parse_value(k, v)?,
            "margin" => spec.margin = parse_optional(k, v)?,
            "decay" => spec.decay = parse_value(k, v)?,
            "active" => spec.active = parse_optional(k, v)?,
            "out" => out = Some(PathBuf::from(v)),
            "test_n" => test_n = parse_optional(k, v)?,
            "test_out" => test_out = Some(PathBuf::from(v)),
            _ => return Err(usage(format!("unknown key `{k}` for gen-synth"))),
        }
    }
    if !(have_n && have_d) {
        return Err(usage("gen-synth needs --n and --d"));
    }
    let out = out.ok_or_else(|| usage("gen-synth needs --out <file>"))?;
    if test_n.is_some() != test_out.is_some() {
        return Err(usage("--test-n and --test-out go together"));
    }
    let generated = synth::generate(&spec)?;
    write_dataset(&out, &generated.train)?;
    println!("{}", spec.describe());
    if spec.margin.is_some() {
        println!("margin verified on all {} samples", spec.n);
    }
    println!("wrote {}", out.display());
    if let (Some(n), Some(path)) = (test_n, test_out) {
        let test_spec = SynthSpec { n, ..spec };
        let test = synth::sample(&test_spec, &generated.w_true, 1)?;
        write_dataset(&path, &test)?;
        println!("wrote {} ({n} test samples)", path.display());
    }
    Ok(())
}

fn write_dataset(path: &Path, ds: &localnewton_core::Dataset) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    data::write_libsvm(ds, &mut w)?;
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
