//! Converting recorded checkpoints into multi-task training examples.
//!
//! Each checkpoint — a full problem snapshot taken at one evaluation — is
//! fanned out into instruction-response pairs: one per pipeline task whose
//! source fields are present. Prompts are rendered through the same template
//! registry the live engine uses, so every emitted example's (system, user)
//! pair byte-matches a live call with the same context.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::context;
use crate::gateway::{
    render, render_response, ChatMessage, Context, GatewayError, Role, TaskKind, DISTILLED_TASKS,
};
use crate::model::{natural_id_order, Checkpoint, Problem, TestCase, TestKind};
use crate::store::{iterate_checkpoints, StoreError};

/// Examples per output file.
pub const SHARD_SIZE: usize = 50_000;
/// Window length for overlap screening.
pub const DEFAULT_NGRAM: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum DistillError {
    #[error("checkpoint {problem_id}/{step_index}: field {field} is malformed: {detail}")]
    CheckpointField {
        problem_id: String,
        step_index: u64,
        field: &'static str,
        detail: String,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("dataset I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset line {line} is malformed: {detail}")]
    MalformedExample { line: usize, detail: String },
}

/// Where an example came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftMeta {
    pub problem_id: String,
    pub step_index: u64,
}

/// One instruction-response pair: system and user prompts plus the
/// assistant completion, tagged with its task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftExample {
    pub task: TaskKind,
    pub messages: Vec<ChatMessage>,
    pub meta: SftMeta,
}

impl SftExample {
    pub fn validate(&self) -> Result<(), String> {
        if !self.task.is_distilled() {
            return Err(format!("task {} is not a dataset task", self.task.label()));
        }
        let roles: Vec<Role> = self.messages.iter().map(|m| m.role).collect();
        if roles != [Role::System, Role::User, Role::Assistant] {
            return Err("messages must be exactly [system, user, assistant]".to_owned());
        }
        if self.messages[2].content.is_empty() {
            return Err("assistant message is empty".to_owned());
        }
        Ok(())
    }

    pub fn assistant(&self) -> &str {
        &self.messages[2].content
    }
}

/// The five tasks kept when test construction and validation are excluded.
pub const NO_TEST_TASKS: [TaskKind; 5] = [
    TaskKind::ArDecomposition,
    TaskKind::DirectSpecgen,
    TaskKind::SpecRefinement,
    TaskKind::FeedbackGeneration,
    TaskKind::SignatureGeneration,
];

/// Which task subset a training dataset keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoTest,
    SpecOnly,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoTest => "no_test",
            Variant::SpecOnly => "spec_only",
        }
    }

    pub fn includes(&self, task: TaskKind) -> bool {
        match self {
            Variant::Full => task.is_distilled(),
            Variant::NoTest => NO_TEST_TASKS.contains(&task),
            Variant::SpecOnly => task == TaskKind::DirectSpecgen,
        }
    }

    pub fn tasks(&self) -> Vec<TaskKind> {
        DISTILLED_TASKS
            .iter()
            .copied()
            .filter(|task| self.includes(*task))
            .collect()
    }
}

/// Keeps exactly the variant's task set, preserving order.
pub fn apply_variant(examples: Vec<SftExample>, variant: Variant) -> Vec<SftExample> {
    examples
        .into_iter()
        .filter(|example| variant.includes(example.task))
        .collect()
}

// ─────────────────────────── Checkpoint fan-out ───────────────────────────

fn ctx(pairs: &[(&str, String)]) -> Context {
    pairs
        .iter()
        .map(|(k, v)| ((*k).to_owned(), v.clone()))
        .collect()
}

/// All of a checkpoint's tests in natural id order.
fn all_tests(checkpoint: &Checkpoint) -> Vec<&TestCase> {
    let mut tests: Vec<&TestCase> = checkpoint
        .testcases
        .iter()
        .chain(&checkpoint.negative_input_testcases)
        .chain(&checkpoint.negative_output_testcases)
        .chain(&checkpoint.adversarial_testcases)
        .collect();
    tests.sort_by(|a, b| natural_id_order(&a.id, &b.id));
    tests
}

struct CheckpointDistiller<'a> {
    checkpoint: &'a Checkpoint,
    examples: Vec<SftExample>,
}

impl<'a> CheckpointDistiller<'a> {
    fn field_error(&self, field: &'static str, detail: impl Into<String>) -> DistillError {
        DistillError::CheckpointField {
            problem_id: self.checkpoint.problem_id.clone(),
            step_index: self.checkpoint.step_index,
            field,
            detail: detail.into(),
        }
    }

    fn push(
        &mut self,
        task: TaskKind,
        prompt_ctx: &Context,
        assistant: String,
    ) -> Result<(), DistillError> {
        let mut messages = render(task, prompt_ctx)?;
        messages.push(ChatMessage::assistant(assistant));
        self.examples.push(SftExample {
            task,
            messages,
            meta: SftMeta {
                problem_id: self.checkpoint.problem_id.clone(),
                step_index: self.checkpoint.step_index,
            },
        });
        Ok(())
    }

    fn push_templated(
        &mut self,
        task: TaskKind,
        prompt_ctx: &Context,
        response_ctx: &Context,
    ) -> Result<(), DistillError> {
        let assistant = render_response(task, response_ctx)?;
        self.push(task, prompt_ctx, assistant)
    }

    fn decomposition(&mut self) -> Result<(), DistillError> {
        let requirements = &self.checkpoint.informal_requirements;
        if requirements.is_empty() {
            return Ok(());
        }
        let (total, pre, post) = context::requirement_counts(requirements);
        let prompt = ctx(&[
            (
                "problem_description",
                self.checkpoint.problem_description.clone(),
            ),
            ("signature", context::signature_json(&self.checkpoint.signature)),
        ]);
        let response = ctx(&[
            ("ir_count", total.to_string()),
            ("precond_count", pre.to_string()),
            ("postcond_count", post.to_string()),
            ("requirements_json", context::requirements_json(requirements)),
        ]);
        self.push_templated(TaskKind::ArDecomposition, &prompt, &response)
    }

    fn signature(&mut self) -> Result<(), DistillError> {
        let signature = &self.checkpoint.signature;
        let prompt = ctx(&[(
            "problem_description",
            self.checkpoint.problem_description.clone(),
        )]);
        let response = ctx(&[
            ("func_name", signature.function_name.clone()),
            ("num_params", signature.arity().to_string()),
            ("output_type", signature.output_type_tag.clone()),
            ("signature_json", context::signature_json(signature)),
        ]);
        self.push_templated(TaskKind::SignatureGeneration, &prompt, &response)
    }

    fn test_generation(&mut self, task: TaskKind, tests: &[TestCase]) -> Result<(), DistillError> {
        if tests.is_empty() {
            return Ok(());
        }
        let kind = match task {
            TaskKind::PositiveTestGen => TestKind::Positive,
            TaskKind::NegativeInputTestGen => TestKind::NegInput,
            TaskKind::NegativeOutputTestGen => TestKind::NegOutput,
            _ => TestKind::Adversarial(crate::model::BaseKind::Positive),
        };
        let mut pairs = vec![
            (
                "problem_description",
                self.checkpoint.problem_description.clone(),
            ),
            ("signature", context::signature_json(&self.checkpoint.signature)),
            (
                "requirements_json",
                context::requirements_json(&self.checkpoint.informal_requirements),
            ),
        ];
        match task {
            TaskKind::NegativeOutputTestGen => {
                pairs.push((
                    "positive_tests_json",
                    context::positive_tests_json(&self.checkpoint.testcases),
                ));
            }
            TaskKind::AdversarialTestGen => {
                pairs.push(("spec", context::spec_text(&self.checkpoint.spec)));
            }
            _ => {}
        }
        let prompt = ctx(&pairs);
        let response = ctx(&[
            ("test_count", tests.len().to_string()),
            ("testcases_json", context::tests_json_for(kind, tests)),
        ]);
        self.push_templated(task, &prompt, &response)
    }

    fn test_mapping(&mut self) -> Result<(), DistillError> {
        let requirements_json =
            context::requirements_json(&self.checkpoint.informal_requirements);
        for test in all_tests(self.checkpoint) {
            let Some(records) = self.checkpoint.testcase_ar_mapping_detailed.records(&test.id)
            else {
                continue;
            };
            let Some(first) = records.first() else {
                continue;
            };
            let prompt = ctx(&[
                ("requirements_json", requirements_json.clone()),
                ("test_input", context::input_json(&test.input)),
                ("test_output", context::output_json(test.output.as_ref())),
            ]);
            let response = ctx(&[
                ("req_id", first.requirement_id.clone()),
                (
                    "status",
                    context::mapping_status_word(first.validates).to_owned(),
                ),
                ("confidence", first.confidence.label().to_owned()),
                ("reason", first.reason.clone()),
                ("detailed_mapping", context::mapping_detail_json(records)),
            ]);
            self.push_templated(TaskKind::TestMapping, &prompt, &response)?;
        }
        Ok(())
    }

    fn direct_specgen(&mut self) -> Result<(), DistillError> {
        let requirements = &self.checkpoint.informal_requirements;
        let spec = &self.checkpoint.spec;
        let prompt = ctx(&[
            (
                "task_description",
                self.checkpoint.problem_description.clone(),
            ),
            (
                "task_template",
                context::task_template(&self.checkpoint.signature),
            ),
            ("precond_desc", context::precond_desc(requirements)),
            ("postcond_desc", context::postcond_desc(requirements)),
        ]);
        let response = ctx(&[
            ("imports", spec.imports.clone()),
            ("precond_aux", spec.precond_aux.clone()),
            ("precond", spec.precond.clone()),
            ("postcond_aux", spec.postcond_aux.clone()),
            ("postcond", spec.postcond.clone()),
        ]);
        self.push_templated(TaskKind::DirectSpecgen, &prompt, &response)
    }

    fn repairs(&mut self) -> Result<(), DistillError> {
        let requirements_json =
            context::requirements_json(&self.checkpoint.informal_requirements);
        let corrected = context::spec_text(&self.checkpoint.spec);
        for attempt in &self.checkpoint.spec_attempts {
            let failed = context::spec_text(&attempt.failed_spec);
            let refine_prompt = ctx(&[
                (
                    "problem_description",
                    self.checkpoint.problem_description.clone(),
                ),
                ("signature", context::signature_json(&self.checkpoint.signature)),
                ("requirements_json", requirements_json.clone()),
                ("failed_spec", failed.clone()),
                ("feedback", attempt.feedback.clone()),
            ]);
            let refine_response = ctx(&[("corrected_spec", corrected.clone())]);
            self.push_templated(TaskKind::SpecRefinement, &refine_prompt, &refine_response)?;

            let feedback_text = if attempt.informalized_feedback.is_empty() {
                attempt.feedback.clone()
            } else {
                attempt.informalized_feedback.clone()
            };
            if feedback_text.is_empty() {
                continue;
            }
            let feedback_prompt = ctx(&[
                (
                    "problem_description",
                    self.checkpoint.problem_description.clone(),
                ),
                ("requirements_json", requirements_json.clone()),
                ("failed_spec", failed),
                ("quality_score", "0".to_owned()),
            ]);
            self.push(TaskKind::FeedbackGeneration, &feedback_prompt, feedback_text)?;
        }
        Ok(())
    }

    fn judge_verdicts(&mut self) -> Result<(), DistillError> {
        let tests = all_tests(self.checkpoint);
        let spec = context::spec_text(&self.checkpoint.spec_eval.spec);
        for result in &self.checkpoint.spec_eval.results {
            if result.result_status != "unknown" {
                continue;
            }
            let (Some(answer), Some(reasoning)) = (result.eval_result, &result.llm_reasoning)
            else {
                continue;
            };
            let test = tests
                .iter()
                .find(|t| t.id == result.test_id)
                .ok_or_else(|| {
                    self.field_error(
                        "spec_eval",
                        format!("result references unknown test {}", result.test_id),
                    )
                })?;
            let base = test.kind.base();
            let component = match base {
                crate::model::BaseKind::NegInput => "precondition",
                _ => "postcondition",
            };
            let prompt = ctx(&[
                ("component", component.to_owned()),
                ("spec", spec.clone()),
                ("test_input", context::input_json(&test.input)),
                ("test_output", context::output_json(test.output.as_ref())),
                ("test_type", base.label().to_owned()),
            ]);
            let response = ctx(&[
                ("component", component.to_owned()),
                ("reasoning", reasoning.clone()),
                ("eval_result", answer.label().to_owned()),
            ]);
            self.push_templated(TaskKind::VerdictUnknown, &prompt, &response)?;
        }
        Ok(())
    }
}

/// Fans one checkpoint out into examples for every task whose source fields
/// are present; absent fields skip their task.
pub fn distill_checkpoint(checkpoint: &Checkpoint) -> Result<Vec<SftExample>, DistillError> {
    let mut distiller = CheckpointDistiller {
        checkpoint,
        examples: Vec::new(),
    };
    distiller.decomposition()?;
    distiller.signature()?;
    distiller.test_generation(TaskKind::PositiveTestGen, &checkpoint.testcases)?;
    distiller.test_generation(
        TaskKind::NegativeInputTestGen,
        &checkpoint.negative_input_testcases,
    )?;
    distiller.test_generation(
        TaskKind::NegativeOutputTestGen,
        &checkpoint.negative_output_testcases,
    )?;
    distiller.test_generation(
        TaskKind::AdversarialTestGen,
        &checkpoint.adversarial_testcases,
    )?;
    distiller.test_mapping()?;
    distiller.direct_specgen()?;
    distiller.repairs()?;
    distiller.judge_verdicts()?;
    Ok(distiller.examples)
}

/// The judge-verdict slice of a checkpoint, alone.
pub fn distill_judge_verdicts(checkpoint: &Checkpoint) -> Result<Vec<SftExample>, DistillError> {
    let mut distiller = CheckpointDistiller {
        checkpoint,
        examples: Vec::new(),
    };
    distiller.judge_verdicts()?;
    Ok(distiller.examples)
}

/// Distills every problem in a store.
///
/// A problem's snapshots repeat their stable fields (requirements, suite,
/// mapping, attempt history), so those tasks are emitted once from the last
/// snapshot — whose spec is the latest candidate and whose attempt list is
/// complete. Judge verdicts differ per evaluation and are emitted from every
/// snapshot.
pub fn distill_store(path: &Path) -> Result<(Vec<SftExample>, u64), DistillError> {
    let (checkpoints, skipped) = iterate_checkpoints(path)?;
    Ok((distill_checkpoints(&checkpoints)?, skipped))
}

/// See [`distill_store`]; operates on already-loaded checkpoints.
pub fn distill_checkpoints(checkpoints: &[Checkpoint]) -> Result<Vec<SftExample>, DistillError> {
    let mut by_problem: BTreeMap<&str, Vec<&Checkpoint>> = BTreeMap::new();
    for checkpoint in checkpoints {
        by_problem
            .entry(&checkpoint.problem_id)
            .or_default()
            .push(checkpoint);
    }
    let mut examples = Vec::new();
    for snapshots in by_problem.values() {
        let (last, earlier) = snapshots.split_last().expect("groups are non-empty");
        for snapshot in earlier {
            examples.extend(distill_judge_verdicts(snapshot)?);
        }
        examples.extend(distill_checkpoint(last)?);
    }
    Ok(examples)
}

// ─────────────────────────── Decontamination ───────────────────────────

/// Lowercases and splits on non-alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|token| !token.is_empty())
        .map(str::to_owned)
        .collect()
}

fn ngrams(tokens: &[String], n: usize) -> Vec<String> {
    if tokens.len() < n {
        return Vec::new();
    }
    tokens.windows(n).map(|w| w.join(" ")).collect()
}

/// Does `text` share at least one contiguous `n`-token window with any of
/// the benchmark texts?
pub fn shares_ngram(text: &str, benchmark_texts: &[String], n: usize) -> bool {
    let tokens = tokenize(text);
    if tokens.len() < n {
        return false;
    }
    let windows: std::collections::BTreeSet<String> = ngrams(&tokens, n).into_iter().collect();
    benchmark_texts.iter().any(|benchmark| {
        ngrams(&tokenize(benchmark), n)
            .iter()
            .any(|window| windows.contains(window))
    })
}

/// Splits problems into (kept, dropped ids): a problem is dropped when its
/// description shares an `n`-token window with any benchmark text.
pub fn decontaminate(
    problems: Vec<Problem>,
    benchmark_texts: &[String],
    n: usize,
) -> (Vec<Problem>, Vec<String>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for problem in problems {
        if shares_ngram(&problem.description, benchmark_texts, n) {
            dropped.push(problem.id);
        } else {
            kept.push(problem);
        }
    }
    (kept, dropped)
}

// ─────────────────────────── Statistics ───────────────────────────

/// Rounds to one decimal, halves away from zero.
fn round_tenth(percent: f64) -> f64 {
    (percent * 10.0).round() / 10.0
}

/// Truncates to one decimal.
fn floor_tenth(percent: f64) -> f64 {
    (percent * 10.0).floor() / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskStat {
    pub task: TaskKind,
    pub count: u64,
    pub percent: f64,
}

/// Per-task counts and shares plus the three variant totals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub per_task: Vec<TaskStat>,
    pub total: u64,
    pub no_test_total: u64,
    pub spec_only_total: u64,
    pub test_task_percent: f64,
    pub core_task_percent: f64,
}

/// Aggregates per-task counts into the stats report.
///
/// Per-task percentages round to one decimal. The aggregate test-task share
/// truncates to one decimal so that the two aggregate shares never overstate
/// the test side; the core share is its complement.
pub fn dataset_stats_from_counts(counts: &BTreeMap<TaskKind, u64>) -> DatasetStats {
    let total: u64 = DISTILLED_TASKS
        .iter()
        .map(|task| counts.get(task).copied().unwrap_or(0))
        .sum();
    let percent_of = |count: u64| {
        if total == 0 {
            0.0
        } else {
            count as f64 / total as f64 * 100.0
        }
    };
    let per_task: Vec<TaskStat> = DISTILLED_TASKS
        .iter()
        .map(|&task| {
            let count = counts.get(&task).copied().unwrap_or(0);
            TaskStat {
                task,
                count,
                percent: round_tenth(percent_of(count)),
            }
        })
        .collect();
    let no_test_total: u64 = NO_TEST_TASKS
        .iter()
        .map(|task| counts.get(task).copied().unwrap_or(0))
        .sum();
    let spec_only_total = counts.get(&TaskKind::DirectSpecgen).copied().unwrap_or(0);
    let test_task_percent = floor_tenth(percent_of(total - no_test_total));
    let core_task_percent = if total == 0 {
        0.0
    } else {
        round_tenth(100.0 - test_task_percent)
    };
    DatasetStats {
        per_task,
        total,
        no_test_total,
        spec_only_total,
        test_task_percent,
        core_task_percent,
    }
}

pub fn dataset_stats(examples: &[SftExample]) -> DatasetStats {
    let mut counts: BTreeMap<TaskKind, u64> = BTreeMap::new();
    for example in examples {
        *counts.entry(example.task).or_insert(0) += 1;
    }
    dataset_stats_from_counts(&counts)
}

impl std::fmt::Display for DatasetStats {
    fn fmt(&self, out: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(out, "task distribution")?;
        for stat in &self.per_task {
            writeln!(
                out,
                "  {:<26} {:>9}  {:>5.1}%",
                stat.task.label(),
                stat.count,
                stat.percent
            )?;
        }
        writeln!(out, "totals")?;
        writeln!(out, "  full      {:>9}", self.total)?;
        writeln!(out, "  no_test   {:>9}", self.no_test_total)?;
        writeln!(out, "  spec_only {:>9}", self.spec_only_total)?;
        writeln!(
            out,
            "shares\n  test-related tasks {:>5.1}%\n  core spec tasks    {:>5.1}%",
            self.test_task_percent, self.core_task_percent
        )
    }
}

// ─────────────────────────── Dataset files ───────────────────────────

/// Writes examples as JSON Lines shards of at most [`SHARD_SIZE`] lines,
/// named `{stem}-00000.jsonl`, `{stem}-00001.jsonl`, …
pub fn write_shards(
    examples: &[SftExample],
    dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>, DistillError> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (index, chunk) in examples.chunks(SHARD_SIZE).enumerate() {
        let path = dir.join(format!("{stem}-{index:05}.jsonl"));
        let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
        for example in chunk {
            serde_json::to_writer(&mut file, example)
                .map_err(|e| DistillError::Io(e.into()))?;
            file.write_all(b"\n")?;
        }
        file.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

/// Strict JSON Lines reader for dataset files.
pub fn load_dataset(path: &Path) -> Result<Vec<SftExample>, DistillError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut examples = Vec::new();
    for (index, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let example: SftExample =
            serde_json::from_str(&line).map_err(|e| DistillError::MalformedExample {
                line: index + 1,
                detail: e.to_string(),
            })?;
        examples.push(example);
    }
    Ok(examples)
}
