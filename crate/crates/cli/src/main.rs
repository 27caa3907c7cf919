mod human;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use scoop_core::agent::ScriptedPolicy;
use scoop_core::domain::{validate_domain, DomainSpec, SessionSpec};
use scoop_core::harness::{
    regret_vs_omniscient, run_session, run_suite, save_trace, MetricsReport, ReasonerKind, RunConfig,
    SuiteConfig,
};
use scoop_core::tasks::{
    gen_blicket, gen_boxes, gen_confounded, gen_epistemic_battery, gen_explore_exploit, BlicketLaw,
    TaskFamily,
};

#[derive(Parser)]
#[command(
    name = "scoop",
    version,
    about = "Causal-oracle POMDP simulator and helper agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a domain file and print the violations as JSON.
    Validate { domain: PathBuf },
    /// Write generated task files into a directory.
    Gen {
        family: TaskFamily,
        #[arg(long)]
        n_objects: Option<usize>,
        /// Comma-separated laws, e.g. `or,and`.
        #[arg(long, value_delimiter = ',')]
        laws: Vec<BlicketLaw>,
        #[arg(long)]
        n_boxes: Option<usize>,
        #[arg(long)]
        instance_count: Option<usize>,
        #[arg(long)]
        oracle_cost: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Play a session and print its metrics.
    Run {
        #[arg(long)]
        domain: PathBuf,
        /// Number of instances in the session.
        #[arg(long, default_value_t = 1)]
        session: usize,
        #[arg(long, default_value = "causal")]
        agent: ScriptedPolicy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "scripted")]
        reasoner: ReasonerKind,
        /// Write the JSON-lines trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        regret: bool,
    },
    /// Run a suite config and print the report.
    Eval {
        #[arg(long)]
        config: PathBuf,
    },
    /// Play the user yourself while an agent works on a domain.
    Repl {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long, default_value = "causal")]
        agent: ScriptedPolicy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "scripted")]
        reasoner: ReasonerKind,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        // a closed stdout (e.g. piped into `head`) is not worth reporting
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<serde_json::Error>()
                .and_then(|j| j.io_error_kind())
                == Some(std::io::ErrorKind::BrokenPipe)
    })
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_domain(path: &Path) -> Result<DomainSpec> {
    DomainSpec::load(path).with_context(|| format!("cannot load {}", path.display()))
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { domain } => {
            let spec = load_domain(&domain)?;
            let report = validate_domain(&spec);
            print_json(&serde_json::json!({
                "ok": report.is_ok(),
                "violations": report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            }))?;
            Ok(if report.is_ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Gen {
            family,
            n_objects,
            laws,
            n_boxes,
            instance_count,
            oracle_cost,
            seed,
            out,
        } => {
            std::fs::create_dir_all(&out)?;
            let laws: BTreeSet<BlicketLaw> = if laws.is_empty() {
                BTreeSet::from([BlicketLaw::Or])
            } else {
                laws.into_iter().collect()
            };
            let (name, text) = match family {
                TaskFamily::Blicket => {
                    let d = gen_blicket(n_objects.unwrap_or(2), &laws, seed)?;
                    (format!("{}.json", d.name), d.to_canonical_json())
                }
                TaskFamily::Boxes => {
                    let d = gen_boxes(n_boxes.unwrap_or(1), seed)?;
                    (format!("{}.json", d.name), d.to_canonical_json())
                }
                TaskFamily::ExploreExploit => {
                    let s =
                        gen_explore_exploit(instance_count.unwrap_or(5), oracle_cost.unwrap_or(0.5), seed)?;
                    (format!("{}.session.json", s.domain.name), s.to_canonical_json())
                }
                TaskFamily::Confounded => {
                    let t = gen_confounded(seed)?;
                    (
                        format!("{}.task.json", t.domain.name),
                        serde_json::to_string_pretty(&t)? + "\n",
                    )
                }
                TaskFamily::EpistemicBattery => {
                    let items = gen_epistemic_battery(seed)?;
                    (
                        format!("epistemic-battery-s{seed}.json"),
                        serde_json::to_string_pretty(&items)? + "\n",
                    )
                }
            };
            let path = out.join(name);
            std::fs::write(&path, text)?;
            print_json(&serde_json::json!({ "written": [path.display().to_string()] }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            domain,
            session,
            agent,
            seed,
            reasoner,
            trace,
            regret,
        } => {
            let spec = session_from_file(&domain, session, seed)?;
            let run = RunConfig {
                agent,
                reasoner,
                ..RunConfig::default()
            };
            let played = run_session(&spec, &run)?;
            if let Some(path) = &trace {
                save_trace(&played, path)?;
            }
            let regret = if regret {
                Some(regret_vs_omniscient(&played, &spec, &run)?)
            } else {
                None
            };
            let report = MetricsReport::of_session(&played, regret);
            print_json(&serde_json::to_value(report)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { config } => {
            let suite =
                SuiteConfig::load(&config).with_context(|| format!("cannot load {}", config.display()))?;
            let base = config.parent().unwrap_or(Path::new("."));
            let report = run_suite(&suite, base)?;
            std::io::stdout()
                .lock()
                .write_all(report.to_canonical_json().as_bytes())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Repl {
            domain,
            agent,
            seed,
            reasoner,
        } => {
            let spec = session_from_file(&domain, 1, seed)?;
            let run = RunConfig {
                agent,
                reasoner,
                ..RunConfig::default()
            };
            let stdin = std::io::BufReader::new(std::io::stdin());
            human::repl(&spec, &run, Box::new(stdin), Box::new(std::io::stderr()))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Accepts a domain file or a session file; a session file keeps its own
/// instance count and seed.
fn session_from_file(path: &Path, instances: usize, seed: u64) -> Result<SessionSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    if let Ok(session) = SessionSpec::from_json(&text) {
        return Ok(session);
    }
    let domain = DomainSpec::from_json(&text).with_context(|| format!("cannot parse {}", path.display()))?;
    if instances == 0 {
        bail!("--session must be at least 1");
    }
    Ok(SessionSpec {
        shared_gamma: domain.gamma,
        domain,
        instance_count: instances,
        seed,
    })
}
