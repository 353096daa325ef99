//! Benchmark driver and report writers: per-run record rows plus the
//! aggregate summary row, in delimited-text and line-delimited JSON forms.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::actions::EngineSession;
use crate::catalog::Catalog;
use crate::config::EngineConfig;
use crate::evaluate::{aggregate, AggregateError, AggregateSummary, MetricsRecord};
use crate::task::TaskConfig;
use crate::workflow::{run_workflow, ScriptSpec, ScriptedBackend, WorkflowBudgets, WorkflowRun};

#[derive(Debug)]
pub struct BenchOutcome {
    pub records: Vec<MetricsRecord>,
    pub summary: AggregateSummary,
    pub runs: Vec<WorkflowRun>,
}

/// Run `samples` scripted workflow samples and evaluate each result.
///
/// Sample `i` replays `specs[i % specs.len()]`, so a single spec benchmarks a
/// fixed transcript and a list benchmarks an engineered mix. Each sample gets
/// an isolated session. Failed runs score zero with success false.
pub fn run_bench(
    task: &TaskConfig,
    specs: &[ScriptSpec],
    samples: usize,
    catalog: Arc<Catalog>,
    engine_config: &EngineConfig,
    budgets: WorkflowBudgets,
) -> Result<BenchOutcome, AggregateError> {
    assert!(!specs.is_empty(), "at least one script spec required");
    let mut records = Vec::with_capacity(samples);
    let mut runs = Vec::with_capacity(samples);
    for i in 0..samples {
        let spec = &specs[i % specs.len()];
        let mut backend = ScriptedBackend::from_spec(spec);
        let mut session = EngineSession::new(catalog.clone(), engine_config.clone());
        let run = run_workflow(task.clone(), &mut backend, &mut session, budgets);
        let cost = run.account_costs();
        let record = match (&run.failure_reason, &session.scene) {
            (None, Some(scene)) => task.evaluate_scene(&catalog, engine_config, scene, None, cost),
            _ => MetricsRecord {
                task_id: task.task_id.as_str().to_string(),
                level: task.level,
                parts: session
                    .scene
                    .as_ref()
                    .map(|s| s.part_count(false) as u32)
                    .unwrap_or(0),
                success: false,
                indicator: 0.0,
                cost,
            },
        };
        records.push(record);
        runs.push(run);
    }
    let summary = aggregate(&records)?;
    Ok(BenchOutcome {
        records,
        summary,
        runs,
    })
}

/// CSV rows mirroring the benchmark's result-table columns.
pub fn records_to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(
        "task,level,parts,success,indicator,input_tokens,output_tokens,llm_requests\n",
    );
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.task_id,
            r.level,
            r.parts,
            r.success,
            r.indicator,
            r.cost.input_tokens,
            r.cost.output_tokens,
            r.cost.llm_requests
        );
    }
    out
}

pub fn records_to_jsonl(records: &[MetricsRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn summary_to_csv(summary: &AggregateSummary) -> String {
    let mut out = String::from(
        "task,level,samples,successes,success_rate,mean_parts,mean_indicator,mean_input_tokens,mean_output_tokens,mean_requests\n",
    );
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{}",
        summary.task_id,
        summary.level,
        summary.samples,
        summary.successes,
        summary.success_rate,
        summary.mean_parts,
        summary.mean_indicator,
        summary.mean_input_tokens,
        summary.mean_output_tokens,
        summary.mean_requests
    );
    out
}
