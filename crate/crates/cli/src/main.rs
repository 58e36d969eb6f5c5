use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use polex_core::active::DEFAULT_CAP;
use polex_core::eval::{
    self, generate_tests, run_eval, run_unlabeled, TestScenarioSpec, DEFAULT_MAX_TAGS,
};
use polex_core::persist::{self, PersistError};
use polex_core::weights::resolve_table;
use polex_core::{predict, Dataset, ReviewSession, SessionStatus};
use polex_service::documents::{PredictionDocument, WeightsDocument};

#[derive(Parser)]
#[command(
    name = "polex",
    version,
    about = "Infer allow/deny policies from labeled example scenarios"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Dataset document (.json) or spreadsheet export (.csv).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Policy target to work on.
    #[arg(long, global = true)]
    target: Option<String>,
    /// Seed for test generation and the coin-flip baseline.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Predict the decision for a scenario written as `tag+tag`.
    Predict { scenario: String },
    /// Walk through suggested label corrections interactively.
    Review {
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
        /// Session log to write (defaults to `<dataset>.session.json`).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Continue a saved session log.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Where to write the corrected dataset (defaults to the input file).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against test scenarios and the two baselines.
    Eval {
        /// Test-scenario file with ground truth.
        #[arg(
            long,
            conflicts_with = "generate",
            required_unless_present = "generate"
        )]
        tests: Option<PathBuf>,
        /// Generate unlabeled test scenarios instead (accuracies are reported as null).
        #[arg(long)]
        generate: bool,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_MAX_TAGS)]
        max_tags: usize,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a file of random unseen test scenarios.
    GenTests {
        /// Defaults to half the number of rows, rounded up.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_MAX_TAGS)]
        max_tags: usize,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the resolved weight table.
    Weights,
    /// Run the HTTP API (and optionally the console's static files).
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Convert a spreadsheet export to a dataset document.
    Import {
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit 2 for bad input, 1 for everything else.
enum Failure {
    Invalid(String),
    Internal(String),
}

type Outcome = Result<(), Failure>;

fn invalid(e: impl ToString) -> Failure {
    Failure::Invalid(e.to_string())
}

fn internal(e: impl ToString) -> Failure {
    Failure::Internal(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

impl Global {
    fn dataset_path(&self) -> Result<&Path, Failure> {
        self.dataset
            .as_deref()
            .ok_or_else(|| invalid("--dataset is required"))
    }

    fn load(&self) -> Result<Dataset, Failure> {
        persist::load_dataset(self.dataset_path()?).map_err(invalid)
    }

    fn target(&self, d: &Dataset) -> Result<String, Failure> {
        let t = match &self.target {
            Some(t) => t.clone(),
            None if d.targets().len() == 1 => d.targets()[0].name().to_string(),
            None => {
                return Err(invalid(
                    "--target is required when the dataset has several targets",
                ))
            }
        };
        d.target_index(&t).map_err(invalid)?;
        Ok(t)
    }
}

fn run(cli: Cli) -> Outcome {
    let g = &cli.global;
    match cli.command {
        Command::Predict { scenario } => cmd_predict(g, &scenario),
        Command::Review {
            cap,
            log,
            resume,
            out,
        } => {
            let stdin = io::stdin();
            cmd_review(
                g,
                cap,
                log,
                resume,
                out,
                &mut stdin.lock(),
                &mut io::stdout(),
            )
        }
        Command::Eval {
            tests,
            generate,
            count,
            max_tags,
            out,
        } => cmd_eval(g, tests, generate, count, max_tags, out),
        Command::GenTests {
            count,
            max_tags,
            out,
        } => cmd_gen_tests(g, count, max_tags, out),
        Command::Weights => cmd_weights(g),
        Command::Serve { bind, ui } => cmd_serve(g, bind, ui),
        Command::Import { csv, out } => {
            let d = persist::load_dataset(&csv).map_err(invalid)?;
            persist::save_dataset(&d, &out).map_err(internal)?;
            println!(
                "wrote {} rows, {} tags, {} targets to {}",
                d.rows().len(),
                d.universe().len(),
                d.targets().len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn print_json(value: &impl serde::Serialize) -> Outcome {
    println!("{}", serde_json::to_string_pretty(value).map_err(internal)?);
    Ok(())
}

fn cmd_predict(g: &Global, text: &str) -> Outcome {
    let d = g.load()?;
    let target = g.target(&d)?;
    let query = d.universe().parse_scenario(text).map_err(invalid)?;
    let labeled = d.per_target_view(&target).map_err(invalid)?;
    let w = resolve_table(&d, &target);
    let p = predict(&query, &labeled, &w).map_err(invalid)?;
    let doc = PredictionDocument::new(d.universe(), &target, &query, &labeled, &p);
    if g.json {
        return print_json(&doc);
    }
    println!("{}", doc.summary_line());
    Ok(())
}

fn default_log_path(dataset: &Path) -> PathBuf {
    let mut name = dataset.file_stem().unwrap_or_default().to_os_string();
    name.push(".session.json");
    dataset.with_file_name(name)
}

fn cmd_review(
    g: &Global,
    cap: usize,
    log: Option<PathBuf>,
    resume: Option<PathBuf>,
    out: Option<PathBuf>,
    input: &mut impl BufRead,
    output: &mut impl Write,
) -> Outcome {
    let mut d = g.load()?;
    let dataset_path = g.dataset_path()?.to_path_buf();
    let target = g.target(&d)?;
    let mut session = match &resume {
        Some(path) => {
            let s = persist::resume_session(path, &d).map_err(|e| match e {
                PersistError::Io { .. } => internal(e),
                other => invalid(other),
            })?;
            if s.target() != target {
                return Err(invalid(format!(
                    "session log is for target {}, not {target}",
                    s.target()
                )));
            }
            s
        }
        None => ReviewSession::new(&d, &target, cap).map_err(invalid)?,
    };
    let log_path = log
        .or(resume)
        .unwrap_or_else(|| default_log_path(&dataset_path));
    let found = session.remaining_violations();
    let accepted_before = session.accepted_count();
    writeln!(
        output,
        "{found} inconsistencies found among {} examples for {target}.",
        d.rows().len()
    )
    .map_err(internal)?;

    let mut asked = 0;
    let mut line = String::new();
    'outer: while session.status() == SessionStatus::Active {
        let Some(s) = session.next_suggestion().map_err(internal)? else {
            break;
        };
        let accept = loop {
            write!(
                output,
                "Suggestion: For {}, {target} = {}. Agree?(y/n) ",
                d.universe().render_set(&s.scenario),
                s.proposed.as_str().to_uppercase()
            )
            .map_err(internal)?;
            output.flush().map_err(internal)?;
            line.clear();
            if input.read_line(&mut line).map_err(internal)? == 0 {
                writeln!(output).map_err(internal)?;
                break 'outer;
            }
            match line.trim().to_ascii_lowercase().as_str() {
                "y" | "yes" => break true,
                "n" | "no" => break false,
                "q" | "quit" => break 'outer,
                _ => writeln!(output, "Please answer y or n (q to stop).").map_err(internal)?,
            }
        };
        session.respond(s.vertex, accept).map_err(internal)?;
        asked += 1;
    }

    let accepted = session.accepted_count() - accepted_before;
    persist::save_session(&session, &d, &log_path).map_err(internal)?;
    if accepted > 0 || out.is_some() {
        session.apply_to(&mut d).map_err(internal)?;
        let out = out.unwrap_or(dataset_path);
        persist::save_dataset(&d, &out).map_err(internal)?;
        writeln!(output, "Wrote corrected dataset to {}.", out.display()).map_err(internal)?;
    }
    writeln!(
        output,
        "Reviewed {asked} suggestions: {accepted} accepted, {} rejected; {} inconsistencies remain ({}).",
        asked - accepted,
        session.remaining_violations(),
        match session.status() {
            SessionStatus::Active => "stopped early",
            SessionStatus::Exhausted => "suggestions exhausted",
            SessionStatus::Clean => "clean",
        }
    )
    .map_err(internal)?;
    writeln!(output, "Session log: {}", log_path.display()).map_err(internal)?;
    Ok(())
}

fn spec(d: &Dataset, seed: u64, count: Option<usize>, max_tags: usize) -> TestScenarioSpec {
    let mut spec = TestScenarioSpec::for_dataset(d, seed);
    if let Some(c) = count {
        spec.count = c;
    }
    spec.max_tags = max_tags;
    spec
}

fn cmd_eval(
    g: &Global,
    tests: Option<PathBuf>,
    generate: bool,
    count: Option<usize>,
    max_tags: usize,
    out: Option<PathBuf>,
) -> Outcome {
    let d = g.load()?;
    let report = match (tests, generate) {
        (Some(path), false) => {
            let cases = persist::load_tests(&path, &d).map_err(invalid)?;
            run_eval(&d, &cases, g.seed).map_err(invalid)?
        }
        (None, true) => {
            let scenarios =
                generate_tests(&spec(&d, g.seed, count, max_tags), &d).map_err(invalid)?;
            run_unlabeled(&d, &scenarios, g.seed).map_err(invalid)?
        }
        _ => return Err(invalid("pass exactly one of --tests or --generate")),
    };
    let report = match &g.target {
        Some(t) => {
            d.target_index(t).map_err(invalid)?;
            eval::EvalReport {
                targets: report
                    .targets
                    .into_iter()
                    .filter(|r| &r.target == t)
                    .collect(),
                ..report
            }
        }
        None => report,
    };
    if let Some(path) = &out {
        std::fs::write(path, report.to_json()).map_err(internal)?;
    }
    if g.json {
        print!("{}", report.to_json());
    } else {
        print!("{}", report.render_table());
        if !report.labeled {
            println!("(generated scenarios carry no ground truth; accuracies are not computed)");
        }
    }
    Ok(())
}

fn cmd_gen_tests(
    g: &Global,
    count: Option<usize>,
    max_tags: usize,
    out: Option<PathBuf>,
) -> Outcome {
    let d = g.load()?;
    let scenarios = generate_tests(&spec(&d, g.seed, count, max_tags), &d).map_err(invalid)?;
    let text = persist::tests_to_string(d.universe(), &scenarios);
    match out {
        Some(path) => {
            std::fs::write(&path, text).map_err(internal)?;
            eprintln!("wrote {} scenarios to {}", scenarios.len(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_weights(g: &Global) -> Outcome {
    let d = g.load()?;
    let targets: Vec<String> = match &g.target {
        Some(_) => vec![g.target(&d)?],
        None => d.targets().iter().map(|t| t.name().to_string()).collect(),
    };
    let docs: Vec<WeightsDocument> = targets
        .iter()
        .map(|t| WeightsDocument::new(&d, t, &resolve_table(&d, t)))
        .collect();
    if g.json {
        return print_json(&docs);
    }
    for doc in &docs {
        println!("{}", doc.target);
        let width = doc
            .weights
            .iter()
            .map(|w| w.tag.len())
            .max()
            .unwrap_or(3)
            .max(3);
        println!("  {:<width$}  w0  w1", "tag");
        for w in &doc.weights {
            println!("  {:<width$}  {:>2}  {:>2}", w.tag, w.w0, w.w1);
        }
    }
    Ok(())
}

fn cmd_serve(g: &Global, bind: SocketAddr, ui: Option<PathBuf>) -> Outcome {
    let state = polex_service::AppState::from_file(g.dataset_path()?).map_err(invalid)?;
    if let Some(dir) = &ui {
        if !dir.is_dir() {
            return Err(invalid(format!(
                "--ui {} is not a directory",
                dir.display()
            )));
        }
    }
    let runtime = tokio::runtime::Runtime::new().map_err(internal)?;
    eprintln!("serving on http://{bind} (no authentication; keep it on a local address)");
    runtime
        .block_on(polex_service::serve(state, bind, ui))
        .map_err(internal)
}
