//! The agentic construction pipeline as an explicit state machine:
//! Plan Phase -> Draft-Review loop -> Build-Guidance loop, plus a Controller
//! phase for tasks that need motion. Runs over a pluggable agent backend; the
//! scripted backend makes whole runs bit-deterministic for tests and
//! benchmarking without network access.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::actions::{Action, ActionCategory, EngineSession};
use crate::catalog::Catalog;
use crate::evaluate::CostCounters;
use crate::scene::Phase;
use crate::task::TaskConfig;

/// Literal token whose presence approves a draft or confirms completion.
pub const TERMINATE_TOKEN: &str = "TERMINATE";
/// Literal token by which Guidance rejects the current draft. Checked before
/// the terminate token.
pub const REJECT_TOKEN: &str = "REJECT";

const PLANNER_PROMPT: &str = include_str!("../assets/prompts/planner.txt");
const DRAFTER_PROMPT: &str = include_str!("../assets/prompts/drafter.txt");
const REVIEWER_PROMPT: &str = include_str!("../assets/prompts/reviewer.txt");
const BUILDER_PROMPT: &str = include_str!("../assets/prompts/builder.txt");
const GUIDANCE_PROMPT: &str = include_str!("../assets/prompts/guidance.txt");
const CONTROLLER_PROMPT: &str = include_str!("../assets/prompts/controller.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityKind {
    Planner,
    Drafter,
    Reviewer,
    Builder,
    Guidance,
    Controller,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Planner => "Planner",
            EntityKind::Drafter => "Drafter",
            EntityKind::Reviewer => "Reviewer",
            EntityKind::Builder => "Builder",
            EntityKind::Guidance => "Guidance",
            EntityKind::Controller => "Controller",
        }
    }

    fn prompt_template(self) -> &'static str {
        match self {
            EntityKind::Planner => PLANNER_PROMPT,
            EntityKind::Drafter => DRAFTER_PROMPT,
            EntityKind::Reviewer => REVIEWER_PROMPT,
            EntityKind::Builder => BUILDER_PROMPT,
            EntityKind::Guidance => GUIDANCE_PROMPT,
            EntityKind::Controller => CONTROLLER_PROMPT,
        }
    }
}

/// Entity prompt with the available-blocks placeholder filled from the catalog.
pub fn entity_prompt(kind: EntityKind, catalog: &Catalog) -> String {
    kind.prompt_template()
        .replace("{available_blks}", catalog.describe_all().trim_end())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub content: String,
    pub usage: TokenUsage,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("backend error: {0}")]
pub struct BackendError(pub String);

/// Produces the next message for an entity given the conversation so far.
pub trait AgentBackend {
    fn next_message(
        &mut self,
        entity: EntityKind,
        conversation: &[TranscriptMessage],
    ) -> Result<BackendReply, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    /// Task and prompt context injected by the harness.
    System,
    /// One of the workflow entities.
    Entity(EntityKind),
    /// Feedback produced by the construction engine.
    Engine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptMessage {
    pub seq: u32,
    pub speaker: Speaker,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkflowPhase {
    Plan,
    DraftReview,
    BuildGuidance,
    Control,
    Done,
    Failed,
}

/// Closed set of terminal failure causes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Format,
    Budget,
    Rejection,
    Backend,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkflowError {
    #[error("format violation from {entity}: {detail}")]
    FormatViolation {
        entity: &'static str,
        detail: String,
    },
    #[error("loop budget exceeded in {0}")]
    LoopBudgetExceeded(&'static str),
    #[error("malformed tool call: {0}")]
    MalformedToolCall(String),
    #[error("draft rejected: {0}")]
    Rejected(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl WorkflowError {
    pub fn failure_reason(&self) -> FailureReason {
        match self {
            WorkflowError::FormatViolation { .. } | WorkflowError::MalformedToolCall(_) => {
                FailureReason::Format
            }
            WorkflowError::LoopBudgetExceeded(_) => FailureReason::Budget,
            WorkflowError::Rejected(_) => FailureReason::Rejection,
            WorkflowError::Backend(_) => FailureReason::Backend,
        }
    }
}

/// Loop and retry budgets. The benchmark leaves these unspecified; the
/// defaults bracket the request counts real runs exhibit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkflowBudgets {
    /// Drafter/Reviewer round pairs before the loop fails.
    pub draft_review_max_rounds: u32,
    /// Guidance/Builder turns before the loop fails.
    pub build_guidance_max_turns: u32,
    /// Total attempts allowed when an entity's output violates its format.
    pub format_attempts: u32,
}

impl Default for WorkflowBudgets {
    fn default() -> Self {
        WorkflowBudgets {
            draft_review_max_rounds: 5,
            build_guidance_max_turns: 120,
            format_attempts: 2,
        }
    }
}

/// One benchmark run: task, phase, transcript, and failure bookkeeping.
#[derive(Debug, Clone)]
pub struct WorkflowRun {
    pub task: TaskConfig,
    pub budgets: WorkflowBudgets,
    pub phase: WorkflowPhase,
    pub transcript: Vec<TranscriptMessage>,
    pub plan: Option<String>,
    pub blueprint: Option<String>,
    pub failure_reason: Option<FailureReason>,
    pub failure_detail: Option<String>,
}

impl WorkflowRun {
    pub fn new(task: TaskConfig, budgets: WorkflowBudgets) -> Self {
        WorkflowRun {
            task,
            budgets,
            phase: WorkflowPhase::Plan,
            transcript: Vec::new(),
            plan: None,
            blueprint: None,
            failure_reason: None,
            failure_detail: None,
        }
    }

    fn push(&mut self, speaker: Speaker, content: String, usage: Option<TokenUsage>) {
        let seq = self.transcript.len() as u32;
        self.transcript.push(TranscriptMessage {
            seq,
            speaker,
            content,
            usage,
        });
    }

    fn call(
        &mut self,
        backend: &mut dyn AgentBackend,
        entity: EntityKind,
    ) -> Result<String, WorkflowError> {
        let reply = backend.next_message(entity, &self.transcript)?;
        self.push(
            Speaker::Entity(entity),
            reply.content.clone(),
            Some(reply.usage),
        );
        Ok(reply.content)
    }

    fn fail(&mut self, err: &WorkflowError) {
        self.phase = WorkflowPhase::Failed;
        self.failure_reason = Some(err.failure_reason());
        self.failure_detail = Some(err.to_string());
    }

    /// Accumulated cost over all entity calls; one request per entity message.
    pub fn account_costs(&self) -> CostCounters {
        let mut cost = CostCounters::default();
        for message in &self.transcript {
            if let Some(usage) = &message.usage {
                cost.input_tokens += usage.input_tokens;
                cost.output_tokens += usage.output_tokens;
                cost.llm_requests += 1;
            }
        }
        cost
    }

    /// Deterministic digest of the whole transcript.
    pub fn transcript_hash(&self) -> String {
        let mut h = Sha256::new();
        for message in &self.transcript {
            h.update(message.seq.to_le_bytes());
            let speaker = match message.speaker {
                Speaker::System => "system".to_string(),
                Speaker::Engine => "engine".to_string(),
                Speaker::Entity(e) => e.as_str().to_string(),
            };
            h.update((speaker.len() as u64).to_le_bytes());
            h.update(speaker.as_bytes());
            h.update((message.content.len() as u64).to_le_bytes());
            h.update(message.content.as_bytes());
        }
        crate::catalog::hex(&h.finalize())
    }
}

/// Plan Phase: the Planner sees the task plus the module descriptions and must
/// return a plan inside the building-plan envelope.
pub fn run_plan_phase(
    run: &mut WorkflowRun,
    backend: &mut dyn AgentBackend,
    catalog: &Catalog,
) -> Result<String, WorkflowError> {
    assert_eq!(run.phase, WorkflowPhase::Plan, "plan phase runs first");
    let context = format!(
        "{}\n\n# Task\n{}",
        entity_prompt(EntityKind::Planner, catalog),
        run.task.prompt
    );
    run.push(Speaker::System, context, None);

    let mut attempts = 0;
    loop {
        attempts += 1;
        let content = run.call(backend, EntityKind::Planner)?;
        if content.contains("<building_plan>") && content.contains("</building_plan>") {
            run.plan = Some(content.clone());
            run.phase = WorkflowPhase::DraftReview;
            return Ok(content);
        }
        if attempts >= run.budgets.format_attempts {
            let err = WorkflowError::FormatViolation {
                entity: "Planner",
                detail: format!("no <building_plan> envelope after {attempts} attempt(s)"),
            };
            run.fail(&err);
            return Err(err);
        }
        run.push(
            Speaker::System,
            "The plan must be wrapped in <building_plan> tags. Produce the plan again in the required format.".to_string(),
            None,
        );
    }
}

/// Draft-Review loop: Drafter and Reviewer alternate until the Reviewer's
/// reply contains the terminate token; the approved blueprint is the last
/// Drafter message.
pub fn run_draft_review_loop(
    run: &mut WorkflowRun,
    backend: &mut dyn AgentBackend,
    catalog: &Catalog,
) -> Result<String, WorkflowError> {
    assert_eq!(run.phase, WorkflowPhase::DraftReview);
    let context = format!(
        "{}\n\n# Approved plan\n{}",
        entity_prompt(EntityKind::Drafter, catalog),
        run.plan.as_deref().unwrap_or_default()
    );
    run.push(Speaker::System, context, None);
    run.push(
        Speaker::System,
        entity_prompt(EntityKind::Reviewer, catalog),
        None,
    );

    for _round in 0..run.budgets.draft_review_max_rounds {
        let draft = run.call(backend, EntityKind::Drafter)?;
        let review = run.call(backend, EntityKind::Reviewer)?;
        if review.contains(TERMINATE_TOKEN) {
            run.blueprint = Some(draft.clone());
            run.phase = WorkflowPhase::BuildGuidance;
            return Ok(draft);
        }
    }
    let err = WorkflowError::LoopBudgetExceeded("draft_review");
    run.fail(&err);
    Err(err)
}

/// Build-Guidance loop: Guidance instructs, the Builder answers with exactly
/// one tool-call envelope, the engine applies it and feeds the outcome back
/// verbatim. Ends on Guidance terminate (finalizing the scene) or rejection.
pub fn run_build_guidance_loop(
    run: &mut WorkflowRun,
    backend: &mut dyn AgentBackend,
    session: &mut EngineSession,
) -> Result<(), WorkflowError> {
    assert_eq!(run.phase, WorkflowPhase::BuildGuidance);
    let catalog = session.catalog.clone();
    let context = format!(
        "{}\n\n# Approved blueprint\n{}",
        entity_prompt(EntityKind::Guidance, &catalog),
        run.blueprint.as_deref().unwrap_or_default()
    );
    run.push(Speaker::System, context, None);
    run.push(
        Speaker::System,
        entity_prompt(EntityKind::Builder, &catalog),
        None,
    );

    for _turn in 0..run.budgets.build_guidance_max_turns {
        let instruction = run.call(backend, EntityKind::Guidance)?;
        if instruction.contains(REJECT_TOKEN) {
            let err = WorkflowError::Rejected(
                "Guidance rejected the current draft during execution".to_string(),
            );
            run.fail(&err);
            return Err(err);
        }
        if instruction.contains(TERMINATE_TOKEN) {
            if session.scene.is_none() {
                let err = WorkflowError::Rejected(
                    "Guidance confirmed completion before any build was started".to_string(),
                );
                run.fail(&err);
                return Err(err);
            }
            if session
                .scene
                .as_ref()
                .is_some_and(|s| s.phase != Phase::Finalized)
            {
                let result = session.apply(&Action::new("finalize"));
                run.push(Speaker::Engine, result.description, None);
            }
            run.phase = if run.task.requires_control {
                WorkflowPhase::Control
            } else {
                WorkflowPhase::Done
            };
            return Ok(());
        }

        // Builder turn; malformed tool calls are retried within the per-turn
        // attempt budget.
        let action = {
            let mut attempts = 0;
            loop {
                attempts += 1;
                let reply = run.call(backend, EntityKind::Builder)?;
                match parse_tool_call(&reply) {
                    Ok(parsed) => break parsed,
                    Err(detail) => {
                        if attempts >= run.budgets.format_attempts {
                            let err = WorkflowError::MalformedToolCall(detail);
                            run.fail(&err);
                            return Err(err);
                        }
                        run.push(
                            Speaker::Engine,
                            format!("Malformed tool call ({detail}). Reply with exactly one ```json tool call."),
                            None,
                        );
                    }
                }
            }
        };
        let result = session.apply(&action);
        run.push(Speaker::Engine, result.description.clone(), None);
    }
    let err = WorkflowError::LoopBudgetExceeded("build_guidance");
    run.fail(&err);
    Err(err)
}

/// Controller phase: parse the control document from the Controller's fenced
/// JSON reply and install bindings and sequence entries through the engine.
/// Invalid documents are retried within the format budget with the engine
/// error surfaced to the Controller.
pub fn run_controller_phase(
    run: &mut WorkflowRun,
    backend: &mut dyn AgentBackend,
    session: &mut EngineSession,
) -> Result<(), WorkflowError> {
    assert_eq!(run.phase, WorkflowPhase::Control);
    let catalog = session.catalog.clone();
    let summary = session.apply(&Action::new("get_machine_summary"));
    let context = format!(
        "{}\n\n# Machine summary\n{}\n\n# Task\n{}",
        entity_prompt(EntityKind::Controller, &catalog),
        summary.description,
        run.task.prompt
    );
    run.push(Speaker::System, context, None);

    let mut attempts = 0;
    loop {
        attempts += 1;
        let content = run.call(backend, EntityKind::Controller)?;
        match install_control_document(session, &content) {
            Ok(report) => {
                run.push(Speaker::Engine, report, None);
                run.phase = WorkflowPhase::Done;
                return Ok(());
            }
            Err(detail) => {
                if attempts >= run.budgets.format_attempts {
                    let err = WorkflowError::FormatViolation {
                        entity: "Controller",
                        detail,
                    };
                    run.fail(&err);
                    return Err(err);
                }
                run.push(
                    Speaker::Engine,
                    format!(
                        "Control document rejected: {detail}. Produce a corrected JSON document."
                    ),
                    None,
                );
            }
        }
    }
}

/// Full pipeline over one backend. The returned session carries the finished
/// scene on success.
pub fn run_workflow(
    task: TaskConfig,
    backend: &mut dyn AgentBackend,
    session: &mut EngineSession,
    budgets: WorkflowBudgets,
) -> WorkflowRun {
    let catalog = session.catalog.clone();
    let mut run = WorkflowRun::new(task, budgets);
    // Propagated backend errors have not marked the run failed yet.
    fn settle(run: &mut WorkflowRun, result: Result<(), WorkflowError>) -> bool {
        match result {
            Ok(()) => true,
            Err(err) => {
                if run.phase != WorkflowPhase::Failed {
                    run.fail(&err);
                }
                false
            }
        }
    }
    let result = run_plan_phase(&mut run, backend, &catalog).map(|_| ());
    if !settle(&mut run, result) {
        return run;
    }
    let result = run_draft_review_loop(&mut run, backend, &catalog).map(|_| ());
    if !settle(&mut run, result) {
        return run;
    }
    let result = run_build_guidance_loop(&mut run, backend, session);
    if !settle(&mut run, result) {
        return run;
    }
    if run.phase == WorkflowPhase::Control {
        let result = run_controller_phase(&mut run, backend, session);
        if !settle(&mut run, result) {
            return run;
        }
    }
    run
}

// -- tool-call envelope -------------------------------------------------------

/// Extract the single tool call from a Builder reply. The envelope is one
/// fenced ```json block holding {"tool": name, "arguments": {...}}; more than
/// one call in a turn is rejected.
pub fn parse_tool_call(content: &str) -> Result<Action, String> {
    let blocks = fenced_json_blocks(content);
    match blocks.len() {
        0 => return Err("no ```json tool-call block found".to_string()),
        1 => {}
        n => {
            return Err(format!(
                "{n} tool calls in one turn; exactly one is allowed"
            ))
        }
    }
    #[derive(Deserialize)]
    struct Envelope {
        tool: String,
        #[serde(default)]
        category: Option<ActionCategory>,
        #[serde(default)]
        arguments: serde_json::Map<String, serde_json::Value>,
        #[serde(default)]
        note: Option<String>,
    }
    let envelope: Envelope =
        serde_json::from_str(blocks[0]).map_err(|e| format!("invalid tool-call JSON: {e}"))?;
    Ok(Action {
        category: envelope.category,
        name: envelope.tool,
        arguments: envelope.arguments,
        note: envelope.note,
    })
}

/// All fenced ```json blocks in a message, in order.
pub fn fenced_json_blocks(content: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = content;
    while let Some(start) = rest.find("```json") {
        let after = &rest[start + "```json".len()..];
        let Some(end) = after.find("```") else {
            break;
        };
        blocks.push(after[..end].trim());
        rest = &after[end + 3..];
    }
    blocks
}

// -- controller document -------------------------------------------------------

#[derive(Debug, Deserialize)]
struct ControlConfigEntry {
    key: String,
    action: String,
    block_id: serde_json::Value,
}

#[derive(Debug, Deserialize)]
struct ControlSequenceDoc {
    #[serde(default)]
    motion_action: Option<String>,
    time: f64,
    key: String,
    hold_for: f64,
}

#[derive(Debug, Deserialize)]
struct ControllerDocument {
    #[allow(dead_code)]
    control_design: String,
    control_config: Vec<ControlConfigEntry>,
    control_sequence: Vec<ControlSequenceDoc>,
}

/// Parse a Controller reply and install its bindings and sequence. On any
/// rejection the scene's control state is restored to its prior value.
pub fn install_control_document(
    session: &mut EngineSession,
    content: &str,
) -> Result<String, String> {
    let blocks = fenced_json_blocks(content);
    if blocks.len() != 1 {
        return Err(format!(
            "expected exactly one ```json block, found {}",
            blocks.len()
        ));
    }
    let doc: ControllerDocument =
        serde_json::from_str(blocks[0]).map_err(|e| format!("invalid control JSON: {e}"))?;

    let prior = session
        .scene
        .as_ref()
        .map(|s| s.control.clone())
        .ok_or_else(|| "no active scene to control".to_string())?;

    let mut installed = Vec::new();
    let mut warnings = 0;
    let mut fail: Option<String> = None;

    for binding in &doc.control_config {
        let action = Action::new("bind_key")
            .arg("key", binding.key.clone())
            .arg("action", binding.action.clone())
            .arg("block_id", binding.block_id.clone());
        let result = session.apply(&action);
        if !result.ok {
            fail = Some(result.description);
            break;
        }
        installed.push(result.description);
    }
    if fail.is_none() {
        for entry in &doc.control_sequence {
            let action = Action::new("add_control_sequence")
                .arg("time", entry.time)
                .arg("key", entry.key.clone())
                .arg("hold_for", entry.hold_for)
                .arg(
                    "motion_note",
                    entry.motion_action.clone().unwrap_or_default(),
                );
            let result = session.apply(&action);
            if !result.ok {
                fail = Some(result.description);
                break;
            }
            if result.description.contains("Warning") {
                warnings += 1;
            }
            installed.push(result.description);
        }
    }

    if let Some(detail) = fail {
        if let Some(scene) = session.scene.as_mut() {
            scene.control = prior;
        }
        return Err(detail);
    }
    Ok(format!(
        "Control document installed: {} binding(s), {} sequence entr{}{}.",
        doc.control_config.len(),
        doc.control_sequence.len(),
        if doc.control_sequence.len() == 1 {
            "y"
        } else {
            "ies"
        },
        if warnings > 0 {
            format!(
                " ({warnings} beyond-window entr{} inert)",
                if warnings == 1 { "y is" } else { "ies are" }
            )
        } else {
            String::new()
        }
    ))
}

// -- scripted backend -----------------------------------------------------------

/// Deterministic backend replaying fixed per-entity message queues.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    scripts: BTreeMap<EntityKind, VecDeque<String>>,
    usage_per_call: TokenUsage,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        ScriptedBackend {
            scripts: BTreeMap::new(),
            usage_per_call: TokenUsage {
                input_tokens: 10,
                output_tokens: 5,
            },
        }
    }

    pub fn with_usage(mut self, input_tokens: u64, output_tokens: u64) -> Self {
        self.usage_per_call = TokenUsage {
            input_tokens,
            output_tokens,
        };
        self
    }

    pub fn push(&mut self, entity: EntityKind, message: impl Into<String>) {
        self.scripts
            .entry(entity)
            .or_default()
            .push_back(message.into());
    }

    pub fn from_spec(spec: &ScriptSpec) -> Self {
        let mut backend = ScriptedBackend::new();
        if let Some(usage) = spec.usage {
            backend.usage_per_call = usage;
        }
        let entries = [
            (EntityKind::Planner, &spec.planner),
            (EntityKind::Drafter, &spec.drafter),
            (EntityKind::Reviewer, &spec.reviewer),
            (EntityKind::Builder, &spec.builder),
            (EntityKind::Guidance, &spec.guidance),
            (EntityKind::Controller, &spec.controller),
        ];
        for (kind, messages) in entries {
            for message in messages {
                backend.push(kind, message.clone());
            }
        }
        backend
    }
}

impl AgentBackend for ScriptedBackend {
    fn next_message(
        &mut self,
        entity: EntityKind,
        _conversation: &[TranscriptMessage],
    ) -> Result<BackendReply, BackendError> {
        let queue = self
            .scripts
            .get_mut(&entity)
            .ok_or_else(|| BackendError(format!("no script for {}", entity.as_str())))?;
        let content = queue
            .pop_front()
            .ok_or_else(|| BackendError(format!("script exhausted for {}", entity.as_str())))?;
        Ok(BackendReply {
            content,
            usage: self.usage_per_call,
        })
    }
}

/// Serializable script specification for the bench CLI.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptSpec {
    pub planner: Vec<String>,
    pub drafter: Vec<String>,
    pub reviewer: Vec<String>,
    pub builder: Vec<String>,
    pub guidance: Vec<String>,
    pub controller: Vec<String>,
    pub usage: Option<TokenUsage>,
}
