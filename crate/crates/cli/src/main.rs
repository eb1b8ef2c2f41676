use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use yamabe_lab::output::{json_bytes, write_atomic};
use yamabe_lab::presets::describe;
use yamabe_lab::scenario::PresetName;
use yamabe_lab::{run_scenario, validate_hypotheses, LabError, Scenario};

#[derive(Parser)]
#[command(
    name = "yamabe-lab",
    version,
    about = "Yamabe flow experiments on conformally flat models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate hypotheses, solve, flow, diagnose, write artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the scenario's `output_dir`, then
        /// `$YAMABE_LAB_OUT/<name>`, then `runs/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, env = "YAMABE_LAB_OUT", hide_env_values = true)]
        out_root: Option<PathBuf>,
    },
    /// Check the scenario and print the hypothesis report.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Built-in initial data.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Pretty-print the summary of a finished run.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print the baseline scenario of a preset.
    Show {
        name: String,
    },
}

/// Writes to stdout, ignoring a closed pipe (`yamabe-lab report | head`).
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn fail(e: &LabError, out: Option<&Path>) -> ExitCode {
    let record = e.to_record();
    if let Some(dir) = out {
        let _ = json_bytes(&record).and_then(|b| write_atomic(&dir.join("error.json"), &b));
    }
    eprintln!("{}", serde_json::to_string(&record).unwrap_or_else(|_| e.to_string()));
    ExitCode::from(2)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            jobs,
            out_root,
        } => {
            let sc = match Scenario::load(&config) {
                Ok(sc) => sc,
                Err(e) => return fail(&e, None),
            };
            let dir = out
                .or_else(|| sc.output_dir.clone())
                .unwrap_or_else(|| out_root.unwrap_or_else(|| "runs".into()).join(&sc.name));
            match run_scenario(&sc, &dir, jobs) {
                Ok(o) => {
                    emit(&format!(
                        "{}: {} ({} asserted, {} report-only violations) -> {}\n",
                        o.summary.scenario,
                        o.summary.verdict,
                        o.summary.asserted_violations,
                        o.summary.report_only_violations,
                        dir.display()
                    ));
                    ExitCode::from(o.exit_code as u8)
                }
                Err(e) => fail(&e, Some(&dir)),
            }
        }
        Command::Validate { config } => match Scenario::load(&config).and_then(|sc| validate_hypotheses(&sc)) {
            Ok(rep) => {
                emit(&(serde_json::to_string_pretty(&rep).expect("report serializes") + "\n"));
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e, None),
        },
        Command::Presets { action } => match action {
            PresetAction::List => {
                let mut s = String::new();
                for p in PresetName::ALL {
                    let _ = writeln!(s, "{:<18} {}", p.as_str(), describe(p));
                }
                emit(&s);
                ExitCode::SUCCESS
            }
            PresetAction::Show { name } => match PresetName::parse(&name) {
                Some(p) => {
                    emit(&(serde_json::to_string_pretty(&Scenario::preset(p)).expect("scenario serializes") + "\n"));
                    ExitCode::SUCCESS
                }
                None => fail(&LabError::config("preset", format!("unknown preset `{name}`")), None),
            },
        },
        Command::Report { input } => match report(&input) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(&e, None),
        },
    }
}

fn report(dir: &Path) -> yamabe_lab::Result<()> {
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
    let s: serde_json::Value = serde_json::from_str(&text)?;
    let mut out = String::new();
    let field = |k: &str| s.get(k).cloned().unwrap_or(serde_json::Value::Null);
    let _ = writeln!(out, "scenario   {}", field("scenario"));
    let _ = writeln!(out, "verdict    {}", field("verdict"));
    let _ = writeln!(
        out,
        "violations {} asserted, {} report-only",
        field("asserted_violations"),
        field("report_only_violations")
    );
    if let Some(v) = s
        .get("violated_checks")
        .and_then(|v| v.as_array())
        .filter(|v| !v.is_empty())
    {
        let names: Vec<_> = v.iter().filter_map(|x| x.as_str()).collect();
        let _ = writeln!(out, "failed     {}", names.join(", "));
    }
    if let Some(st) = s.get("stages").and_then(|v| v.as_object()) {
        let _ = writeln!(out, "stages");
        for (k, v) in st {
            let _ = writeln!(out, "  {k:<12} {}", v.as_str().unwrap_or_default());
        }
    }
    if let Some(h) = s.get("highlights").and_then(|v| v.as_object()) {
        let _ = writeln!(out, "highlights");
        for (k, v) in h.iter().filter(|(_, v)| !v.is_null()) {
            let _ = writeln!(out, "  {k:<32} {v}");
        }
    }
    let n = s.get("artifacts").and_then(|v| v.as_array()).map_or(0, |a| a.len());
    let _ = writeln!(out, "artifacts  {n} files under {}", dir.display());
    emit(&out);
    Ok(())
}
