//! Command-line interface: build/replay scenes from action scripts, evaluate
//! them against task protocols, serve the tool protocol on stdio, describe
//! state, export documents, and run scripted benchmark samples.
//!
//! The catalog defaults to the embedded asset; override with --catalog or the
//! MECHABENCH_CATALOG environment variable.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use mechabench::actions::{Action, EngineSession};
use mechabench::catalog::{load_full_catalog, Catalog, DEFAULT_CATALOG_TOML};
use mechabench::config::EngineConfig;
use mechabench::describe;
use mechabench::interface::{
    export_machine_file, export_native_json, import_native, records_to_csv, records_to_jsonl,
    run_bench, serve_tools, summary_to_csv, SessionRegistry,
};
use mechabench::task::TaskConfig;
use mechabench::workflow::{ScriptSpec, WorkflowBudgets};

#[derive(Parser)]
#[command(
    name = "mechabench",
    version,
    about = "Construction engine and benchmark harness"
)]
struct Cli {
    /// Path to a catalog document (default: embedded catalog, or
    /// $MECHABENCH_CATALOG).
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a line-delimited action script and write the resulting scene.
    Build {
        /// Action script: one JSON action per line.
        #[arg(long)]
        script: PathBuf,
        /// Output path for the native scene document.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep going after rejected actions instead of stopping.
        #[arg(long)]
        keep_going: bool,
    },
    /// Replay a native document's trajectory log and verify the state hash.
    Replay { scene: PathBuf },
    /// Evaluate a scene against a task protocol and print the metrics record.
    Evaluate {
        /// Task name (transport_lv1 ... lift_lv3) or path to a task TOML.
        #[arg(long)]
        task: String,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
        format: ReportFormat,
    },
    /// Serve the line-delimited tool protocol on stdin/stdout.
    Serve,
    /// Print the machine summary (or one block's detail) of a scene.
    Describe {
        #[arg(long)]
        scene: PathBuf,
        /// Block id for per-block detail.
        #[arg(long)]
        block: Option<u32>,
    },
    /// Export a scene document.
    Export {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum, default_value_t = ExportFormat::Native)]
        format: ExportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Machine name embedded in machine-file exports.
        #[arg(long, default_value = "mechabench-machine")]
        name: String,
    },
    /// Run n scripted workflow samples against a task and write reports.
    Bench {
        /// Task name (transport_lv1 ... lift_lv3) or path to a task TOML.
        #[arg(long)]
        task: String,
        /// Backend script spec: JSON file holding one ScriptSpec or an array
        /// of them (samples cycle through the array).
        #[arg(long)]
        backend: PathBuf,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        /// Output directory for records.csv, records.jsonl, summary.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Native,
    Machine,
}

fn load_catalog_from(cli_path: &Option<PathBuf>) -> Result<Arc<Catalog>, String> {
    let path = cli_path
        .clone()
        .or_else(|| std::env::var_os("MECHABENCH_CATALOG").map(PathBuf::from));
    let document = match &path {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| format!("cannot read catalog {}: {e}", p.display()))?,
        None => DEFAULT_CATALOG_TOML.to_string(),
    };
    load_full_catalog(&document)
        .map(Arc::new)
        .map_err(|e| format!("catalog error: {e}"))
}

fn load_task(task: &str) -> Result<TaskConfig, String> {
    if task.ends_with(".toml") || task.contains('/') {
        let doc = fs::read_to_string(task).map_err(|e| format!("cannot read task {task}: {e}"))?;
        TaskConfig::parse(&doc).map_err(|e| e.to_string())
    } else {
        TaskConfig::load_named(task).map_err(|e| e.to_string())
    }
}

fn load_scene(catalog: &Catalog, path: &PathBuf) -> Result<mechabench::Scene, String> {
    let json = fs::read_to_string(path)
        .map_err(|e| format!("cannot read scene {}: {e}", path.display()))?;
    let (scene, _log) = import_native(catalog, &json).map_err(|e| e.to_string())?;
    Ok(scene)
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<(), String> {
    match out {
        Some(path) => {
            fs::write(path, content).map_err(|e| format!("cannot write {}: {e}", path.display()))
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    let catalog = load_catalog_from(&cli.catalog)?;
    let config = EngineConfig::default();

    match cli.command {
        Command::Build {
            script,
            out,
            keep_going,
        } => {
            let file = fs::File::open(&script)
                .map_err(|e| format!("cannot open script {}: {e}", script.display()))?;
            let mut session = EngineSession::new(catalog, config);
            for (line_no, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| e.to_string())?;
                if line.trim().is_empty() || line.trim_start().starts_with('#') {
                    continue;
                }
                let action: Action = serde_json::from_str(&line)
                    .map_err(|e| format!("line {}: invalid action: {e}", line_no + 1))?;
                let result = session.apply(&action);
                println!(
                    "[{}] {} {}",
                    line_no + 1,
                    if result.ok { "ok " } else { "ERR" },
                    result.description
                );
                if !result.ok && !keep_going {
                    return Err(format!("action rejected at line {}", line_no + 1));
                }
            }
            if let Some(hash) = session.scene_hash() {
                println!("state hash: {hash}");
            }
            if out.is_some() {
                let json = export_native_json(&session).map_err(|e| e.to_string())?;
                write_or_print(&out, &json)?;
            }
            Ok(())
        }
        Command::Replay { scene } => {
            let json = fs::read_to_string(&scene)
                .map_err(|e| format!("cannot read {}: {e}", scene.display()))?;
            let (original, log) = import_native(&catalog, &json).map_err(|e| e.to_string())?;
            let original_hash = original.state_hash();
            let mut session = EngineSession::new(catalog, config);
            for entry in &log {
                session.apply(&entry.action);
            }
            let replayed_hash = session
                .scene_hash()
                .ok_or_else(|| "replay produced no scene".to_string())?;
            println!("original: {original_hash}");
            println!("replayed: {replayed_hash}");
            if original_hash == replayed_hash {
                println!("replay OK: state hashes match");
                Ok(())
            } else {
                Err("replay mismatch: state hashes differ".to_string())
            }
        }
        Command::Evaluate {
            task,
            scene,
            format,
        } => {
            let task = load_task(&task)?;
            let scene = load_scene(&catalog, &scene)?;
            let record = task.evaluate_scene(&catalog, &config, &scene, None, Default::default());
            match format {
                ReportFormat::Json => println!(
                    "{}",
                    serde_json::to_string_pretty(&record).map_err(|e| e.to_string())?
                ),
                ReportFormat::Csv => print!("{}", records_to_csv(std::slice::from_ref(&record))),
            }
            Ok(())
        }
        Command::Serve => {
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            let mut registry = SessionRegistry::new(catalog, config);
            let stats = serve_tools(stdin.lock(), stdout.lock(), &mut registry)
                .map_err(|e| e.to_string())?;
            eprintln!(
                "served {} request(s), {} protocol error(s)",
                stats.requests, stats.protocol_errors
            );
            Ok(())
        }
        Command::Describe { scene, block } => {
            let scene = load_scene(&catalog, &scene)?;
            let text = match block {
                None => describe::machine_summary(&catalog, &config, &scene),
                Some(id) => describe::block_detail(&catalog, &config, &scene, id)
                    .ok_or_else(|| format!("no block #{id} in the scene"))?,
            };
            print!("{text}");
            Ok(())
        }
        Command::Export {
            scene,
            format,
            out,
            name,
        } => {
            let scene = load_scene(&catalog, &scene)?;
            let content = match format {
                ExportFormat::Native => {
                    let mut session = EngineSession::new(catalog.clone(), config);
                    session.scene = Some(scene);
                    export_native_json(&session).map_err(|e| e.to_string())?
                }
                ExportFormat::Machine => {
                    export_machine_file(&scene, &name).map_err(|e| e.to_string())?
                }
            };
            write_or_print(&out, &content)
        }
        Command::Bench {
            task,
            backend,
            samples,
            out,
        } => {
            let task = load_task(&task)?;
            let spec_json = fs::read_to_string(&backend)
                .map_err(|e| format!("cannot read backend spec {}: {e}", backend.display()))?;
            let specs: Vec<ScriptSpec> = match serde_json::from_str::<Vec<ScriptSpec>>(&spec_json) {
                Ok(list) if !list.is_empty() => list,
                _ => vec![serde_json::from_str::<ScriptSpec>(&spec_json).map_err(|e| {
                    format!("backend spec is neither a ScriptSpec nor a non-empty array: {e}")
                })?],
            };
            let outcome = run_bench(
                &task,
                &specs,
                samples,
                catalog,
                &config,
                WorkflowBudgets::default(),
            )
            .map_err(|e| e.to_string())?;
            let records_csv = records_to_csv(&outcome.records);
            let summary_csv = summary_to_csv(&outcome.summary);
            match &out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
                    fs::write(dir.join("records.csv"), &records_csv).map_err(|e| e.to_string())?;
                    fs::write(
                        dir.join("records.jsonl"),
                        records_to_jsonl(&outcome.records),
                    )
                    .map_err(|e| e.to_string())?;
                    fs::write(dir.join("summary.csv"), &summary_csv).map_err(|e| e.to_string())?;
                    println!(
                        "wrote {} record(s) to {}",
                        outcome.records.len(),
                        dir.display()
                    );
                }
                None => {
                    print!("{records_csv}");
                }
            }
            print!("{summary_csv}");
            std::io::Write::flush(&mut std::io::stdout()).ok();
            Ok(())
        }
    }
}
