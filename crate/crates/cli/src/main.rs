mod output;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tsetlin_core::config::ConfigFile;
use tsetlin_core::datasets::{self, Booleanizer, BooleanizedDataset, Sample, SplitSpec};
use tsetlin_core::experiments::{
    self, LoadedData, CONVERGENCE_WINDOW, DOMAIN_SPLIT,
};
use tsetlin_core::game::{self, BooleanTarget};
use tsetlin_core::machine::{Literals, Machine};
use tsetlin_core::model::Model;
use tsetlin_core::rng::{derive_seed, RngKind};
use tsetlin_core::trace::{self, RecordedRun, TraceBuffer};
use tsetlin_core::Error;

use output::{Manifest, Outputs};

#[derive(Parser, Debug)]
#[command(name = "tsetlin", version, about = "Tsetlin machine simulator and experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for ensemble and grid parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Stdout rendering.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// List written files on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the generator: `pcg64` or `lfsr:<width>`.
    #[arg(long)]
    rng: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one machine and save it.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Record every automaton transition into this directory.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Classify a labelled CSV with a saved model.
    Infer {
        #[arg(long)]
        model: PathBuf,
        /// CSV whose last column is `label`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hyperparameter grid over clauses, thresholds and sensitivities.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Stuck-at fault campaign on XOR.
    Faults {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Accuracy of LFSR widths against the PCG baseline.
    LfsrStudy {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Payoff matrix and equilibria of a single-clause game.
    Game {
        /// xor, and, or, true, false, identity, or a truth-table bitstring.
        #[arg(long, default_value = "xor")]
        target: String,
        /// Learning sensitivity as `4`, `1.2` or `6/5`.
        #[arg(long, default_value = "4")]
        s: String,
        /// Number of inputs.
        #[arg(long, default_value_t = 2)]
        inputs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train with tracing and write the full transition log.
    TraceExport {
        #[command(flatten)]
        run: RunArgs,
        /// Also log inaction events.
        #[arg(long)]
        inaction: bool,
    },
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 2,
            Error::Input(_) | Error::Data(_) | Error::Io(_) | Error::Csv(_) => 3,
            Error::Contract(_) => 4,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(format!("I/O error: {e}"))
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let outcome = std::panic::catch_unwind(|| run(&cli, &argv));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
        Err(_) => ExitCode::from(4),
    }
}

fn run(cli: &Cli, argv: &[String]) -> CliResult<()> {
    let jobs = match cli.jobs {
        Some(0) => return Err(CliError::config("--jobs must be at least 1")),
        Some(n) => n,
        None => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError {
            code: 4,
            message: format!("cannot start worker pool: {e}"),
        })?;
    let outputs = pool.install(|| dispatch(cli, argv))?;
    outputs.commit(cli.verbose > 0)
}

fn parse_rng(text: Option<&str>) -> CliResult<Option<RngKind>> {
    text.map(str::parse).transpose().map_err(CliError::from)
}

fn load_config(path: &Path) -> CliResult<(ConfigFile, Manifest)> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::config(format!("config {} is not UTF-8", path.display())))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let cfg = ConfigFile::parse(&text, &dir)?;
    let manifest = Manifest::for_config(path, &bytes);
    Ok((cfg, manifest))
}

fn dispatch(cli: &Cli, argv: &[String]) -> CliResult<Outputs> {
    match &cli.command {
        Command::Train { run, trace } => train(cli, argv, run, trace.as_deref()),
        Command::Infer { model, input, out } => infer(cli, argv, model, input, out.as_deref()),
        Command::Sweep { run } => sweep(cli, argv, run),
        Command::Faults { run } => faults(cli, argv, run),
        Command::LfsrStudy { run } => lfsr_study(cli, argv, run),
        Command::Game {
            target,
            s,
            inputs,
            out,
        } => game_cmd(cli, argv, target, s, *inputs, out.as_deref()),
        Command::TraceExport { run, inaction } => trace_export(cli, argv, run, *inaction),
    }
}

/// Train/test pair plus the booleanizer fitted on the training rows.
struct Prepared {
    train: BooleanizedDataset,
    test: BooleanizedDataset,
    booleanizer: Option<Booleanizer>,
}

fn prepare(data: &LoadedData, split_seed: u64) -> CliResult<Prepared> {
    Ok(match data {
        LoadedData::Fixed(d) => Prepared {
            train: d.clone(),
            test: d.clone(),
            booleanizer: None,
        },
        LoadedData::Table {
            table,
            bits_per_feature,
            train_fraction,
        } => {
            let spec = SplitSpec {
                train_fraction: *train_fraction,
                shuffle_seed: split_seed,
            };
            let p = datasets::split_and_booleanize(table, *bits_per_feature, &spec)?;
            Prepared {
                train: p.train,
                test: p.test,
                booleanizer: Some(p.booleanizer),
            }
        }
        LoadedData::Split {
            data,
            train_fraction,
        } => {
            let spec = SplitSpec {
                train_fraction: *train_fraction,
                shuffle_seed: split_seed,
            };
            let (train, test) = datasets::split(data, &spec)?;
            Prepared {
                train,
                test,
                booleanizer: None,
            }
        }
    })
}

/// Everything a single traced or untraced training run produces.
struct Trained {
    machine: Machine,
    prepared: Prepared,
    report: tsetlin_core::machine::FitReport,
    run: Option<RecordedRun>,
    seed: u64,
    split_seed: u64,
}

fn train_once(run: &RunArgs, traced: Option<bool>) -> CliResult<(Trained, Manifest)> {
    let (cfg, mut manifest) = load_config(&run.config)?;
    let rng = parse_rng(run.rng.as_deref())?;
    let spec = cfg.dataset_spec()?;
    cfg.check_machine(rng)?;
    let data = spec.load()?;
    let config = cfg.train_config(data.inputs(), data.classes(), run.seed, rng)?;
    let seed = config.rng.seed();
    let split_seed = derive_seed(seed, DOMAIN_SPLIT, 0);
    let prepared = prepare(&data, split_seed)?;
    let epochs = config.epochs;
    let mut machine = Machine::new(config)?;
    let (report, recorded) = match traced {
        None => (machine.fit(&prepared.train, Some(&prepared.test), epochs)?, None),
        Some(with_inaction) => {
            let mut recorded = RecordedRun::start(&machine, with_inaction);
            let mut sink = if with_inaction {
                TraceBuffer::with_inaction()
            } else {
                TraceBuffer::new()
            };
            let report = machine.fit_traced(&prepared.train, Some(&prepared.test), epochs, &mut sink)?;
            recorded.events = sink.into_events();
            recorded.epoch_accuracy = report.epochs.iter().map(|e| e.train_accuracy).collect();
            (report, Some(recorded))
        }
    };
    manifest.seed("machine", seed);
    manifest.seed("split", split_seed);
    Ok((
        Trained {
            machine,
            prepared,
            report,
            run: recorded,
            seed,
            split_seed,
        },
        manifest,
    ))
}

fn metrics_csv(report: &tsetlin_core::machine::FitReport) -> String {
    let mut out = String::from("epoch,train_accuracy,test_accuracy,reward_i,penalty_i,reward_ii,penalty_ii,inaction\n");
    for e in &report.epochs {
        let c = &e.counters;
        let _ = writeln!(
            out,
            "{},{:.6},{},{},{},{},{},{}",
            e.epoch,
            e.train_accuracy,
            e.test_accuracy.map_or_else(String::new, |a| format!("{a:.6}")),
            c.reward_i,
            c.penalty_i,
            c.reward_ii,
            c.penalty_ii,
            c.inaction
        );
    }
    out
}

fn literal_name(k: usize, inputs: usize) -> String {
    if k < inputs {
        format!("x{}", k + 1)
    } else {
        format!("¬x{}", k - inputs + 1)
    }
}

fn clause_listing(machine: &Machine) -> String {
    let c = machine.config();
    let mut out = String::new();
    for (g, clause) in machine.clauses().iter().enumerate() {
        let class = g / c.clauses_per_class;
        let j = g % c.clauses_per_class;
        let lits: Vec<String> = clause.included().iter().map(|&k| literal_name(k, c.inputs)).collect();
        let body = if lits.is_empty() { "(empty)".to_string() } else { lits.join(" ∧ ") };
        let sign = if j.is_multiple_of(2) { '+' } else { '-' };
        let _ = writeln!(out, "class {class} clause {j} ({sign}): {body}");
    }
    out
}

fn convergence_report(t: &Trained, recorded: &RecordedRun) -> String {
    let report = trace::detect_convergence(recorded, CONVERGENCE_WINDOW);
    let certified = match trace::replay(recorded) {
        Ok(states) => {
            let live: Vec<u32> = t.machine.states().into_iter().flatten().collect();
            if states == live {
                "certified".to_string()
            } else {
                "final states differ from the machine".to_string()
            }
        }
        Err(m) => format!("mismatch at event {}: {}", m.position, m.reason),
    };
    let mut out = String::new();
    let _ = writeln!(out, "epochs: {}", recorded.epochs());
    let _ = writeln!(out, "window: {CONVERGENCE_WINDOW}");
    let _ = writeln!(out, "converged: {}", report.converged);
    let _ = writeln!(
        out,
        "convergence_epoch: {}",
        report.convergence_epoch.map_or_else(|| "none".to_string(), |e| e.to_string())
    );
    let _ = writeln!(out, "events: {}", recorded.events.len());
    let _ = writeln!(out, "replay: {certified}");
    let _ = writeln!(
        out,
        "final_train_accuracy: {:.6}",
        t.report.epochs.last().map_or(0.0, |e| e.train_accuracy)
    );
    out.push_str("\nclauses:\n");
    out.push_str(&clause_listing(&t.machine));
    out
}

fn train_summary(t: &Trained) -> String {
    let last = t.report.epochs.last();
    format!(
        "trained {} epochs (seed {}, split seed {}): train {:.4}, test {:.4}, {} reinforcements\n",
        t.report.epochs.len(),
        t.seed,
        t.split_seed,
        last.map_or(0.0, |e| e.train_accuracy),
        last.and_then(|e| e.test_accuracy).unwrap_or(0.0),
        t.report.total_counters().reinforcements()
    )
}

fn default_out(out: Option<&Path>) -> PathBuf {
    out.map_or_else(|| PathBuf::from("out"), Path::to_path_buf)
}

fn train(cli: &Cli, argv: &[String], run: &RunArgs, trace_dir: Option<&Path>) -> CliResult<Outputs> {
    let out_dir = run
        .out
        .clone()
        .or_else(|| trace_dir.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("out"));
    output::check_dir(&out_dir)?;
    if let Some(d) = trace_dir {
        output::check_dir(d)?;
    }
    let (t, manifest) = train_once(run, trace_dir.map(|_| false))?;

    let model = Model::from_machine(&t.machine, t.prepared.booleanizer.clone());
    let metrics = metrics_csv(&t.report);
    let mut outputs = Outputs::new(&out_dir, manifest.command("train", argv));
    outputs.file("model.txt", model.to_text());
    outputs.file("metrics.csv", metrics.clone());
    if let (Some(dir), Some(recorded)) = (trace_dir, &t.run) {
        let mut trace_csv = Vec::new();
        trace::write_csv(&recorded.events, &mut trace_csv)?;
        outputs.file_in(dir, "trace.csv", trace_csv);
        outputs.file_in(dir, "convergence.txt", convergence_report(&t, recorded));
    }
    outputs.stdout(match cli.format {
        Format::Text => train_summary(&t),
        Format::Csv => metrics,
    });
    Ok(outputs)
}

fn infer(cli: &Cli, argv: &[String], model_path: &Path, input: &Path, out: Option<&Path>) -> CliResult<Outputs> {
    if let Some(d) = out {
        output::check_dir(d)?;
    }
    let bytes = std::fs::read(model_path)
        .map_err(|e| CliError::data(format!("cannot read model {}: {e}", model_path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::data("model file is not UTF-8"))?;
    let model = Model::parse(&text)?;
    let machine = model.machine()?;
    let table = datasets::load_csv(input)?;
    let classes = model.config.classes;
    let data = match &model.booleanizer {
        Some(b) => {
            if table.features() != b.thresholds().len() {
                return Err(CliError::data(format!(
                    "input has {} features, model expects {}",
                    table.features(),
                    b.thresholds().len()
                )));
            }
            let samples = table
                .rows
                .iter()
                .zip(&table.labels)
                .map(|(r, &label)| Sample {
                    bits: b.encode(r),
                    label,
                })
                .collect();
            BooleanizedDataset::new(b.inputs(), classes.max(table.classes), samples)?
        }
        None => {
            let samples = table
                .rows
                .iter()
                .zip(&table.labels)
                .map(|(r, &label)| Sample {
                    bits: r.iter().map(|&v| v != 0.0).collect(),
                    label,
                })
                .collect();
            BooleanizedDataset::new(table.features(), classes.max(table.classes), samples)?
        }
    };
    if data.inputs() != model.config.inputs {
        return Err(CliError::data(format!(
            "input encodes to {} bits, model expects {}",
            data.inputs(),
            model.config.inputs
        )));
    }
    let mut csv = String::from("row,label,predicted\n");
    let mut correct = 0usize;
    for (i, s) in data.samples().iter().enumerate() {
        let predicted = machine.classify(&Literals::from_inputs(&s.bits))?;
        correct += usize::from(predicted == s.label);
        let _ = writeln!(csv, "{i},{},{predicted}", s.label);
    }
    let accuracy = if data.is_empty() { 0.0 } else { correct as f64 / data.len() as f64 };

    let mut manifest = Manifest::for_file("model", model_path, &bytes);
    manifest.seed("machine", model.config.rng.seed());
    let dir = default_out(out);
    let mut outputs = Outputs::new(&dir, manifest.command("infer", argv));
    if out.is_none() {
        outputs.skip_files();
    }
    outputs.file("predictions.csv", csv.clone());
    outputs.stdout(match cli.format {
        Format::Text => format!("accuracy {accuracy:.4} ({correct}/{})\n", data.len()),
        Format::Csv => csv,
    });
    Ok(outputs)
}

fn campaign_outputs(
    cli: &Cli,
    argv: &[String],
    name: &str,
    out: &Path,
    manifest: Manifest,
    result: &experiments::CampaignResult,
) -> Outputs {
    let csv = result.to_csv();
    let mut outputs = Outputs::new(out, manifest.command(name, argv));
    outputs.file("results.csv", csv.clone());
    outputs.file("curves.csv", result.curves_csv());
    outputs.file("summary.txt", result.summary());
    outputs.stdout(match cli.format {
        Format::Text => result.summary(),
        Format::Csv => csv,
    });
    outputs
}

fn sweep(cli: &Cli, argv: &[String], run: &RunArgs) -> CliResult<Outputs> {
    let out = default_out(run.out.as_deref());
    output::check_dir(&out)?;
    let (cfg, mut manifest) = load_config(&run.config)?;
    let spec = cfg.sweep_spec(run.seed, parse_rng(run.rng.as_deref())?)?;
    manifest.seed("campaign", spec.seed);
    manifest.value("ensembles", spec.ensembles.to_string());
    let result = experiments::run_sweep(&spec)?;
    Ok(campaign_outputs(cli, argv, "sweep", &out, manifest, &result))
}

fn faults(cli: &Cli, argv: &[String], run: &RunArgs) -> CliResult<Outputs> {
    let out = default_out(run.out.as_deref());
    output::check_dir(&out)?;
    let (cfg, mut manifest) = load_config(&run.config)?;
    let spec = cfg.fault_campaign_spec(run.seed, parse_rng(run.rng.as_deref())?)?;
    manifest.seed("campaign", spec.seed);
    manifest.value("ensembles", spec.ensembles.to_string());
    let result = experiments::run_fault_campaign(&spec)?;
    Ok(campaign_outputs(cli, argv, "faults", &out, manifest, &result))
}

fn lfsr_study(cli: &Cli, argv: &[String], run: &RunArgs) -> CliResult<Outputs> {
    if run.rng.is_some() {
        return Err(CliError::config("lfsr-study sets generators itself; --rng is not accepted"));
    }
    let out = default_out(run.out.as_deref());
    output::check_dir(&out)?;
    let (cfg, mut manifest) = load_config(&run.config)?;
    let spec = cfg.lfsr_study_spec(run.seed)?;
    manifest.seed("campaign", spec.seed);
    manifest.value("ensembles", spec.ensembles.to_string());
    let result = experiments::run_lfsr_study(&spec)?;
    let mut deltas = String::from("width,delta_points\n");
    for (w, d) in result.deltas() {
        let _ = writeln!(deltas, "{w},{:.3}", d * 100.0);
    }
    let mut outputs = campaign_outputs(cli, argv, "lfsr-study", &out, manifest, &result.campaign);
    outputs.file("deltas.csv", deltas.clone());
    if cli.format == Format::Text {
        let mut text = format!("baseline pcg64 test {:.4}\n", result.baseline().mean_test());
        for (w, d) in result.deltas() {
            let _ = writeln!(text, "lfsr:{w:<3} {:+.2} points", d * 100.0);
        }
        outputs.stdout(text);
    }
    Ok(outputs)
}

fn game_cmd(
    cli: &Cli,
    argv: &[String],
    target: &str,
    s: &str,
    inputs: usize,
    out: Option<&Path>,
) -> CliResult<Outputs> {
    if let Some(d) = out {
        output::check_dir(d)?;
    }
    let f = BooleanTarget::parse(target, inputs)?;
    let s_value = game::parse_rational(s)?;
    let m = game::payoff_matrix(&f, s_value)?;
    let accepted = game::accepted_equilibria(&m);
    let text = {
        let mut t = game::render_text(&m);
        let rows: Vec<String> = accepted
            .iter()
            .map(|&r| format!("{} ({})", r + 1, m.clause_expr[r]))
            .collect();
        let _ = writeln!(
            t,
            "accepted: {}",
            if rows.is_empty() { "none".to_string() } else { rows.join(", ") }
        );
        if target == "xor" && inputs == 2 && s_value == game::Rational::from_integer(4) {
            let div = game::xor_divergences(&m);
            let _ = writeln!(t, "cells differing from the published s=4 table: {}", div.len());
            for d in &div {
                let _ = writeln!(
                    t,
                    "  row {} TA{}: published {}, computed {}",
                    d.row + 1,
                    d.ta + 1,
                    d.published,
                    d.computed
                );
            }
        }
        t
    };
    let csv = game::render_csv(&m);
    let mut manifest = Manifest::without_config();
    manifest.value("target", target.to_string());
    manifest.value("s", s_value.to_string());
    let dir = default_out(out);
    let mut outputs = Outputs::new(&dir, manifest.command("game", argv));
    if out.is_none() {
        outputs.skip_files();
    }
    outputs.file("payoff.csv", csv.clone());
    outputs.file("payoff.txt", text.clone());
    outputs.stdout(match cli.format {
        Format::Text => text,
        Format::Csv => csv,
    });
    Ok(outputs)
}

fn trace_export(cli: &Cli, argv: &[String], run: &RunArgs, inaction: bool) -> CliResult<Outputs> {
    let out = default_out(run.out.as_deref());
    output::check_dir(&out)?;
    let (t, manifest) = train_once(run, Some(inaction))?;
    let recorded = t.run.as_ref().ok_or_else(|| CliError {
        code: 4,
        message: "traced run produced no recording".into(),
    })?;
    let report = trace::detect_convergence(recorded, CONVERGENCE_WINDOW);
    let mut visited = String::from("class,clause,ta,visited\n");
    for class in 0..recorded.classes {
        for clause in 0..recorded.clauses_per_class {
            for ta in 0..recorded.literals {
                let states: Vec<String> = report
                    .visited_by(class, clause, ta, recorded)
                    .iter()
                    .map(u32::to_string)
                    .collect();
                let _ = writeln!(visited, "{class},{clause},{ta},{}", states.join(" "));
            }
        }
    }
    let mut trace_csv = Vec::new();
    trace::write_csv(&recorded.events, &mut trace_csv)?;
    let mut outputs = Outputs::new(&out, manifest.command("trace-export", argv));
    outputs.file("trace.csv", trace_csv.clone());
    outputs.file("visited.csv", visited);
    outputs.file("convergence.txt", convergence_report(&t, recorded));
    outputs.stdout(match cli.format {
        Format::Text => format!(
            "{} events over {} epochs, convergence epoch {}\n",
            recorded.events.len(),
            recorded.epochs(),
            report.convergence_epoch.map_or_else(|| "none".to_string(), |e| e.to_string())
        ),
        Format::Csv => String::from_utf8_lossy(&trace_csv).into_owned(),
    });
    Ok(outputs)
}
