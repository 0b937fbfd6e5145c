//! The traceable refinement loop.
//!
//! One synthesis run walks: decompose the problem into atomic requirements →
//! generate requirement-targeted tests and a traceability map → draft an
//! initial specification → evaluate every test's check proposition → lift
//! failing tests to their implicated requirements → repair only those →
//! repeat until all tests pass, then probe with adversarial tests until a
//! configured number of consecutive rounds finds nothing.
//!
//! Every stage appends one trajectory record before the next stage runs, so
//! a crash or stage error leaves a loadable prefix behind.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::context;
use crate::gateway::{
    extract_fenced_block, parse_fielded, parse_structured_block, Completion, CompletionParams,
    Gateway, GatewayError, TaskKind,
};
use crate::model::{
    failing_tests, lift_failing_requirements, validate_report, AtomicRequirement, BaseKind,
    Confidence, Dialect, EvalReport, FeedbackDelta, JudgeAnswer, MapEntry, ModelError, Outcome,
    Problem, ReqKind, RepresentativeTest, SpecAttempt, Specification, TestCase, TestKind,
    TestResult, TestStatus, TraceabilityMap, Trajectory, TrajectoryStep, Value, VerdictTag,
};
use crate::oracle::{OracleError, OracleRegistry};
use crate::prover::{status_of, validate_spec, CheckStatus, ProverBackend, ProverError};
use crate::store::{
    eval_from_step, StepPayload, StepSink, StoreError, TrajectoryRecord, SCHEMA_VERSION,
};

/// Iteration budget: repairs attempted before giving up.
pub const DEFAULT_MAX_ITERATIONS: u32 = 25;
/// Iteration budget in dataset mode.
pub const DATASET_MAX_ITERATIONS: u32 = 10;
/// Suite size cap.
pub const DEFAULT_MAX_TESTS: usize = 60;
/// Consecutive non-breaking adversarial rounds required to converge.
pub const DEFAULT_ADVERSARIAL_ROUNDS: u32 = 2;
/// Candidates accepted from one adversarial reply.
pub const DEFAULT_ADVERSARIAL_BATCH: usize = 8;
/// Tests requested per generation call; a shorter yield exhausts the cell.
pub const TEST_GEN_BATCH: usize = 3;
/// Representative failing tests quoted per implicated requirement.
pub const REPRESENTATIVES_PER_REQUIREMENT: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid engine config: {detail}")]
    InvalidConfig { detail: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prover(#[from] ProverError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("task {task} reply was unusable after one re-prompt: {detail}")]
    ParseFailure { task: &'static str, detail: String },
    #[error("decomposition produced zero requirements")]
    EmptyDecomposition,
    #[error("no tests could be generated for the problem")]
    EmptySuite,
    #[error("test {test_id} cannot be mapped: no validating entries and no generating requirement")]
    MappingFailure { test_id: String },
}

/// Budgets and sampling parameters for one run.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub max_iterations: u32,
    pub max_tests_per_problem: usize,
    pub adversarial_rounds: u32,
    pub adversarial_batch: usize,
    pub dataset_mode: bool,
    pub dialect: Dialect,
    pub completion: CompletionParams,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            max_tests_per_problem: DEFAULT_MAX_TESTS,
            adversarial_rounds: DEFAULT_ADVERSARIAL_ROUNDS,
            adversarial_batch: DEFAULT_ADVERSARIAL_BATCH,
            dataset_mode: false,
            dialect: Dialect::Mini,
            completion: CompletionParams::default(),
        }
    }
}

impl EngineConfig {
    /// The dataset-construction profile: shorter iteration budget, seeded
    /// positive tests allowed.
    pub fn dataset() -> Self {
        EngineConfig {
            max_iterations: DATASET_MAX_ITERATIONS,
            dataset_mode: true,
            ..EngineConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        for (name, value) in [
            ("max_iterations", self.max_iterations as usize),
            ("max_tests_per_problem", self.max_tests_per_problem),
            ("adversarial_batch", self.adversarial_batch),
        ] {
            if value == 0 {
                return Err(EngineError::InvalidConfig {
                    detail: format!("{name} must be at least 1"),
                });
            }
        }
        Ok(())
    }
}

/// One pre-labeled positive test supplied with a dataset-mode problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTest {
    pub input: Vec<Value>,
    pub output: Value,
    #[serde(default)]
    pub description: String,
}

/// Timestamp source for trajectory records.
pub trait Clock: Send + Sync {
    fn now(&self) -> u64;
}

/// Monotone counter: 0, 1, 2, … across the run. Scripted runs use this so
/// two identical runs produce byte-identical stores.
#[derive(Debug, Default)]
pub struct LogicalClock {
    next: AtomicU64,
}

impl Clock for LogicalClock {
    fn now(&self) -> u64 {
        self.next.fetch_add(1, Ordering::SeqCst)
    }
}

/// Wall-clock seconds since the Unix epoch.
#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    }
}

/// A finished (or aborted) synthesis: the trajectory plus the stage error
/// that ended it, when the outcome is [`Outcome::Error`].
#[derive(Debug)]
pub struct SynthesisRun {
    pub trajectory: Trajectory,
    pub error: Option<String>,
}

pub struct Engine {
    gateway: Gateway,
    prover: Arc<dyn ProverBackend>,
    oracles: Arc<OracleRegistry>,
    config: EngineConfig,
    clock: Arc<dyn Clock>,
}

// ─────────────────────────── Reply shapes ───────────────────────────

fn default_confidence() -> Confidence {
    Confidence::Medium
}

#[derive(Deserialize)]
struct RequirementReply {
    #[serde(default)]
    #[allow(dead_code)]
    id: String,
    kind: ReqKind,
    description: String,
}

#[derive(Deserialize)]
struct PositiveReply {
    input: Vec<Value>,
    #[serde(default)]
    #[allow(dead_code)]
    output: Option<Value>,
    #[serde(default)]
    description: String,
}

#[derive(Deserialize)]
struct NegInputReply {
    input: Vec<Value>,
    #[serde(default)]
    description: String,
}

#[derive(Deserialize)]
struct PerturbationReply {
    wrong_output: Value,
    #[serde(default)]
    description: String,
}

#[derive(Deserialize)]
struct MappingReply {
    requirement_id: String,
    validates: bool,
    #[serde(default = "default_confidence")]
    confidence: Confidence,
    #[serde(default)]
    reason: String,
}

#[derive(Deserialize)]
struct AdversarialReply {
    input: Vec<Value>,
    #[serde(default)]
    kind: Option<String>,
    #[serde(default)]
    expected_output: Option<Value>,
    #[serde(default)]
    wrong_output: Option<Value>,
    #[serde(default)]
    description: String,
}

#[derive(Serialize)]
struct DeltaTestView<'a> {
    test_id: &'a str,
    kind: &'a str,
    input: &'a [Value],
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<&'a Value>,
    description: &'a str,
}

#[derive(Serialize)]
struct DeltaRequirementView<'a> {
    id: &'a str,
    kind: ReqKind,
    description: &'a str,
    failing_tests: Vec<DeltaTestView<'a>>,
}

// ─────────────────────────── Emission ───────────────────────────

struct Emitter<'a> {
    sink: &'a dyn StepSink,
    clock: &'a dyn Clock,
    problem_id: &'a str,
    next_index: u64,
}

impl Emitter<'_> {
    fn emit(&mut self, payload: StepPayload) -> Result<(), StoreError> {
        let record = TrajectoryRecord {
            schema_version: SCHEMA_VERSION,
            problem_id: self.problem_id.to_owned(),
            step_index: self.next_index,
            timestamp: self.clock.now(),
            payload,
        };
        self.sink.append_step(record)?;
        self.next_index += 1;
        Ok(())
    }
}

/// Extracts the reasoning body from a judge reply, stripping the framing
/// preamble and answer line when present.
fn judge_reasoning(text: &str, component: &str) -> String {
    let mut body = text.trim();
    let preamble = format!("Let me analyze the {component} for this test case.");
    if let Some(rest) = body.strip_prefix(&preamble) {
        body = rest.trim_start();
    }
    if let Some(pos) = body.rfind("**Answer:") {
        body = body[..pos].trim_end();
    }
    body.to_owned()
}

/// Reads the judge's final TRUE/FALSE answer, if any.
fn judge_answer(text: &str) -> Option<JudgeAnswer> {
    let re = regex::Regex::new(r"\*\*Answer:\s*(TRUE|FALSE)\*\*").expect("answer regex is valid");
    if let Some(caps) = re.captures_iter(text).last() {
        return match &caps[1] {
            "TRUE" => Some(JudgeAnswer::True),
            _ => Some(JudgeAnswer::False),
        };
    }
    match text.trim() {
        "TRUE" => Some(JudgeAnswer::True),
        "FALSE" => Some(JudgeAnswer::False),
        _ => None,
    }
}

fn ctx(pairs: &[(&str, String)]) -> crate::gateway::Context {
    pairs
        .iter()
        .map(|(k, v)| ((*k).to_owned(), v.clone()))
        .collect()
}

impl Engine {
    pub fn new(
        gateway: Gateway,
        prover: Arc<dyn ProverBackend>,
        oracles: Arc<OracleRegistry>,
        config: EngineConfig,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Engine {
            gateway,
            prover,
            oracles,
            config,
            clock,
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    fn complete(&self, task: TaskKind, context: &crate::gateway::Context) -> Result<Completion, GatewayError> {
        self.gateway.complete(task, context)
    }

    /// Calls a task and retries once when the reply cannot be decoded by
    /// `decode`; the second failure is final.
    fn complete_decoded<T>(
        &self,
        task: TaskKind,
        context: &crate::gateway::Context,
        decode: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, EngineError> {
        let mut last_detail = String::new();
        for _ in 0..2 {
            let reply = self.complete(task, context)?;
            match decode(&reply.text) {
                Ok(value) => return Ok(value),
                Err(detail) => last_detail = detail,
            }
        }
        Err(EngineError::ParseFailure {
            task: task.label(),
            detail: last_detail,
        })
    }

    // ─────────────────────────── Decomposition ───────────────────────────

    fn parse_requirements(text: &str) -> Result<Vec<AtomicRequirement>, String> {
        let block = parse_structured_block(text).map_err(|e| e.to_string())?;
        let raw: Vec<RequirementReply> =
            serde_json::from_value(block).map_err(|e| e.to_string())?;
        Ok(normalize_requirements(
            raw.into_iter()
                .map(|r| (r.kind, r.description))
                .collect::<Vec<_>>(),
        ))
    }

    /// Two-phase decomposition: extraction, then one judge pass that may
    /// add, merge, or rewrite entries. Both sets are returned, ids
    /// normalized to `AR1..ARm` in reply order.
    pub fn decompose(
        &self,
        problem: &Problem,
    ) -> Result<(Vec<AtomicRequirement>, Vec<AtomicRequirement>), EngineError> {
        let base = ctx(&[
            ("problem_description", problem.description.clone()),
            ("signature", context::signature_json(&problem.signature)),
        ]);
        let raw = self.complete_decoded(TaskKind::ArDecomposition, &base, Self::parse_requirements)?;
        if raw.is_empty() {
            return Err(EngineError::EmptyDecomposition);
        }

        let review = ctx(&[
            ("problem_description", problem.description.clone()),
            ("signature", context::signature_json(&problem.signature)),
            ("requirements_json", context::requirements_json(&raw)),
        ]);
        let reviewed =
            self.complete_decoded(TaskKind::JudgeReview, &review, Self::parse_requirements)?;
        if reviewed.is_empty() {
            return Err(EngineError::EmptyDecomposition);
        }
        Ok((raw, reviewed))
    }

    // ─────────────────────────── Test generation ───────────────────────────

    fn label(&self, problem: &Problem, input: &[Value]) -> Result<Value, OracleError> {
        self.oracles.label(&problem.oracle_ref, input)
    }

    /// Maps seed candidates, keeps a greedy requirement-covering subset, and
    /// returns them as labeled positive tests with their map entries.
    fn inject_seeds(
        &self,
        problem: &Problem,
        requirements: &[AtomicRequirement],
        seeds: &[SeedTest],
        ids: &mut IdGen,
        premapped: &mut TraceabilityMap,
    ) -> Result<Vec<TestCase>, EngineError> {
        if seeds.is_empty() {
            return Ok(Vec::new());
        }
        let known: BTreeSet<String> = requirements.iter().map(|r| r.id.clone()).collect();
        let mut candidate_entries: Vec<Vec<MapEntry>> = Vec::new();
        for seed in seeds {
            let entries =
                self.map_one_test(requirements, &known, &seed.input, Some(&seed.output), false)?;
            candidate_entries.push(entries.unwrap_or_default());
        }

        // Greedy set cover over π: repeatedly take the seed covering the
        // most uncovered requirements, lowest index on ties.
        let mut uncovered = known.clone();
        let mut selected = Vec::new();
        loop {
            let mut best: Option<(usize, usize)> = None;
            for (index, entries) in candidate_entries.iter().enumerate() {
                if selected.contains(&index) {
                    continue;
                }
                let gain = entries
                    .iter()
                    .filter(|e| e.validates && uncovered.contains(&e.requirement_id))
                    .count();
                if gain > 0 && best.map(|(_, g)| gain > g).unwrap_or(true) {
                    best = Some((index, gain));
                }
            }
            let Some((index, _)) = best else { break };
            selected.push(index);
            for entry in &candidate_entries[index] {
                if entry.validates {
                    uncovered.remove(&entry.requirement_id);
                }
            }
        }
        selected.sort_unstable();

        let mut tests = Vec::new();
        for index in selected {
            if ids.used >= self.config.max_tests_per_problem {
                break;
            }
            let seed = &seeds[index];
            let test = TestCase {
                id: ids.next(),
                kind: TestKind::Positive,
                input: seed.input.clone(),
                output: Some(seed.output.clone()),
                description: if seed.description.is_empty() {
                    "seeded positive test".to_owned()
                } else {
                    seed.description.clone()
                },
            };
            test.validate(&problem.signature)?;
            premapped
                .insert(&test.id, candidate_entries[index].clone())
                .map_err(EngineError::Model)?;
            tests.push(test);
        }
        Ok(tests)
    }

    fn generation_cells(requirements: &[AtomicRequirement]) -> Vec<(usize, BaseKind)> {
        let mut cells = Vec::new();
        for kind in [BaseKind::Positive, BaseKind::NegInput, BaseKind::NegOutput] {
            for index in 0..requirements.len() {
                cells.push((index, kind));
            }
        }
        cells
    }

    /// One generation call for one `(requirement, kind)` cell. Returns the
    /// tests that fit the budget and whether the cell is exhausted.
    fn generate_cell(
        &self,
        problem: &Problem,
        requirement: &AtomicRequirement,
        kind: BaseKind,
        positives: &[TestCase],
        ids: &mut IdGen,
        provenance: &mut BTreeMap<String, String>,
    ) -> Result<(Vec<TestCase>, bool), EngineError> {
        let remaining = self
            .config
            .max_tests_per_problem
            .saturating_sub(ids.used);
        if remaining == 0 {
            return Ok((Vec::new(), true));
        }
        let base = ctx(&[
            ("problem_description", problem.description.clone()),
            ("signature", context::signature_json(&problem.signature)),
            (
                "requirements_json",
                context::requirements_json(std::slice::from_ref(requirement)),
            ),
        ]);

        let mut yielded = 0usize;
        let mut tests: Vec<TestCase> = Vec::new();
        match kind {
            BaseKind::Positive => {
                let reply = self.complete(TaskKind::PositiveTestGen, &base)?;
                let entries = decode_array::<PositiveReply>(&reply.text).unwrap_or_default();
                for entry in entries.into_iter().take(TEST_GEN_BATCH) {
                    yielded += 1;
                    if tests.len() >= remaining {
                        continue;
                    }
                    if entry.input.len() != problem.signature.arity() {
                        continue;
                    }
                    let output = self.label(problem, &entry.input)?;
                    let test = TestCase {
                        id: ids.next(),
                        kind: TestKind::Positive,
                        input: entry.input,
                        output: Some(output),
                        description: entry.description,
                    };
                    provenance.insert(test.id.clone(), requirement.id.clone());
                    tests.push(test);
                }
            }
            BaseKind::NegInput => {
                let reply = self.complete(TaskKind::NegativeInputTestGen, &base)?;
                let entries = decode_array::<NegInputReply>(&reply.text).unwrap_or_default();
                for entry in entries.into_iter().take(TEST_GEN_BATCH) {
                    yielded += 1;
                    if tests.len() >= remaining || entry.input.len() != problem.signature.arity() {
                        continue;
                    }
                    let test = TestCase {
                        id: ids.next(),
                        kind: TestKind::NegInput,
                        input: entry.input,
                        output: None,
                        description: entry.description,
                    };
                    provenance.insert(test.id.clone(), requirement.id.clone());
                    tests.push(test);
                }
            }
            BaseKind::NegOutput => {
                // Perturbs the outputs of an already-labeled pair; prefers a
                // positive test generated for this requirement.
                let pair = positives
                    .iter()
                    .find(|t| provenance.get(&t.id) == Some(&requirement.id))
                    .or_else(|| positives.first());
                let Some(pair) = pair else {
                    return Ok((Vec::new(), true));
                };
                let correct = pair.output.clone().expect("positive tests carry outputs");
                let perturb = ctx(&[
                    ("problem_description", problem.description.clone()),
                    ("signature", context::signature_json(&problem.signature)),
                    ("test_input", context::input_json(&pair.input)),
                    ("correct_output", context::output_json(Some(&correct))),
                ]);
                let reply = self.complete(TaskKind::OutputPerturbation, &perturb)?;
                let entries = decode_array::<PerturbationReply>(&reply.text).unwrap_or_default();
                for entry in entries.into_iter().take(TEST_GEN_BATCH) {
                    yielded += 1;
                    if tests.len() >= remaining || entry.wrong_output == correct {
                        continue;
                    }
                    let test = TestCase {
                        id: ids.next(),
                        kind: TestKind::NegOutput,
                        input: pair.input.clone(),
                        output: Some(entry.wrong_output),
                        description: entry.description,
                    };
                    provenance.insert(test.id.clone(), requirement.id.clone());
                    tests.push(test);
                }
            }
        }
        Ok((tests, yielded < TEST_GEN_BATCH))
    }

    /// Builds the full generated suite: seeded positives first (dataset
    /// mode), then round-robin `(requirement × kind)` cells at three tests
    /// per call until every cell is exhausted or the budget is reached.
    pub fn generate_suite(
        &self,
        problem: &Problem,
        requirements: &[AtomicRequirement],
        seeds: &[SeedTest],
        premapped: &mut TraceabilityMap,
        provenance: &mut BTreeMap<String, String>,
    ) -> Result<Vec<TestCase>, EngineError> {
        let mut ids = IdGen::default();
        let mut suite = Vec::new();
        if self.config.dataset_mode {
            suite.extend(self.inject_seeds(problem, requirements, seeds, &mut ids, premapped)?);
        }

        let cells = Self::generation_cells(requirements);
        let mut exhausted = vec![false; cells.len()];
        while exhausted.iter().any(|done| !done) && ids.used < self.config.max_tests_per_problem {
            for (cell, done) in cells.iter().zip(exhausted.iter_mut()) {
                if *done || ids.used >= self.config.max_tests_per_problem {
                    continue;
                }
                let positives: Vec<TestCase> = suite
                    .iter()
                    .filter(|t| matches!(t.kind, TestKind::Positive))
                    .cloned()
                    .collect();
                let (tests, cell_done) = self.generate_cell(
                    problem,
                    &requirements[cell.0],
                    cell.1,
                    &positives,
                    &mut ids,
                    provenance,
                )?;
                suite.extend(tests);
                *done = cell_done;
            }
        }
        Ok(suite)
    }

    // ─────────────────────────── Traceability ───────────────────────────

    /// One `test_mapping` call; returns the validated entries, or `None`
    /// when the reply was unusable or carried no `validates = true` record.
    fn map_one_test(
        &self,
        requirements: &[AtomicRequirement],
        known: &BTreeSet<String>,
        input: &[Value],
        output: Option<&Value>,
        retry: bool,
    ) -> Result<Option<Vec<MapEntry>>, EngineError> {
        let context = ctx(&[
            ("requirements_json", context::requirements_json(requirements)),
            ("test_input", context::input_json(input)),
            ("test_output", context::output_json(output)),
        ]);
        let attempts = if retry { 2 } else { 1 };
        for _ in 0..attempts {
            let reply = self.complete(TaskKind::TestMapping, &context)?;
            if let Some(entries) = decode_array::<MappingReply>(&reply.text) {
                let entries: Vec<MapEntry> = dedup_mapping(entries)
                    .into_iter()
                    .filter(|e| known.contains(&e.requirement_id))
                    .collect();
                if entries.iter().any(|e| e.validates) {
                    return Ok(Some(entries));
                }
            }
        }
        Ok(None)
    }

    /// Maps every unmapped test, retrying all-false replies once and then
    /// falling back to the test's generating requirement.
    pub fn build_traceability(
        &self,
        requirements: &[AtomicRequirement],
        suite: &[TestCase],
        provenance: &BTreeMap<String, String>,
        premapped: TraceabilityMap,
    ) -> Result<TraceabilityMap, EngineError> {
        let known: BTreeSet<String> = requirements.iter().map(|r| r.id.clone()).collect();
        let mut map = premapped;
        for test in suite {
            if map.contains_test(&test.id) {
                continue;
            }
            let entries = self.map_one_test(
                requirements,
                &known,
                &test.input,
                test.output.as_ref(),
                true,
            )?;
            let entries = match entries {
                Some(entries) => entries,
                None => {
                    let requirement_id =
                        provenance
                            .get(&test.id)
                            .cloned()
                            .ok_or(EngineError::MappingFailure {
                                test_id: test.id.clone(),
                            })?;
                    vec![MapEntry {
                        requirement_id,
                        validates: true,
                        confidence: Confidence::High,
                        reason: "test was generated for this requirement".to_owned(),
                    }]
                }
            };
            map.insert(&test.id, entries)?;
        }
        Ok(map)
    }

    // ─────────────────────────── Specification ───────────────────────────

    /// Drafts the initial specification from the decomposed requirements.
    pub fn initial_spec(
        &self,
        problem: &Problem,
        requirements: &[AtomicRequirement],
    ) -> Result<Specification, EngineError> {
        let context = ctx(&[
            ("task_description", problem.description.clone()),
            ("task_template", context::task_template(&problem.signature)),
            ("precond_desc", context::precond_desc(requirements)),
            ("postcond_desc", context::postcond_desc(requirements)),
        ]);
        let dialect = self.config.dialect;
        self.complete_decoded(TaskKind::DirectSpecgen, &context, move |text| {
            let fields = parse_fielded(text).map_err(|e| e.to_string())?;
            // Spec sections are stored trimmed; blank-line field separation
            // in replies must not leak newlines into the candidate.
            let field = |name: &str| {
                fields
                    .get(name)
                    .map(|value| value.trim().to_owned())
                    .unwrap_or_default()
            };
            let spec = Specification {
                imports: field("imports"),
                precond_aux: field("precond_aux"),
                precond: field("precond"),
                postcond_aux: field("postcond_aux"),
                postcond: field("postcond"),
                dialect,
            };
            validate_spec(&spec).map_err(|e| e.to_string())?;
            Ok(spec)
        })
    }

    // ─────────────────────────── Evaluation ───────────────────────────

    fn judge_component(kind: BaseKind) -> &'static str {
        match kind {
            BaseKind::NegInput => "precondition",
            BaseKind::Positive | BaseKind::NegOutput => "postcondition",
        }
    }

    /// A TRUE judge answer confirms the component holds; whether that means
    /// the test passes depends on the test's polarity.
    fn judge_status(kind: BaseKind, answer: JudgeAnswer) -> TestStatus {
        let condition_holds = answer == JudgeAnswer::True;
        let passes = match kind {
            BaseKind::Positive => condition_holds,
            BaseKind::NegInput | BaseKind::NegOutput => !condition_holds,
        };
        if passes {
            TestStatus::JudgePass
        } else {
            TestStatus::JudgeFail
        }
    }

    fn judge_one(
        &self,
        spec: &Specification,
        test: &TestCase,
        note: Option<String>,
    ) -> Result<TestResult, EngineError> {
        let component = Self::judge_component(test.kind.base());
        let context = ctx(&[
            ("spec", context::spec_text(spec)),
            ("test_input", context::input_json(&test.input)),
            ("test_output", context::output_json(test.output.as_ref())),
            ("test_type", test.kind.base().label().to_owned()),
            ("component", component.to_owned()),
        ]);
        let reply = self.complete(TaskKind::VerdictUnknown, &context)?;
        let result = match judge_answer(&reply.text) {
            Some(answer) => TestResult {
                status: Self::judge_status(test.kind.base(), answer),
                verdict: VerdictTag::Unknown,
                eval_result: Some(answer),
                llm_reasoning: Some(judge_reasoning(&reply.text, component)),
                note,
            },
            None => TestResult {
                status: TestStatus::JudgeFail,
                verdict: VerdictTag::Unknown,
                eval_result: None,
                llm_reasoning: Some(reply.text.clone()),
                note: Some(match note {
                    Some(note) => format!("{note}; judge reply had no TRUE/FALSE answer"),
                    None => "judge reply had no TRUE/FALSE answer".to_owned(),
                }),
            },
        };
        Ok(result)
    }

    fn evaluate_one(
        &self,
        spec: &Specification,
        test: &TestCase,
        signature: &crate::model::FunctionSignature,
    ) -> Result<TestResult, EngineError> {
        let proposition = crate::prover::instantiate_proposition(spec, test, signature)?;
        match self.prover.decide(&proposition) {
            Ok(verdict) => match status_of(&verdict) {
                CheckStatus::Pass => Ok(TestResult {
                    status: TestStatus::LeanPass,
                    verdict: VerdictTag::ProvedTrue,
                    eval_result: None,
                    llm_reasoning: None,
                    note: None,
                }),
                CheckStatus::Fail => Ok(TestResult {
                    status: TestStatus::LeanFail,
                    verdict: VerdictTag::ProvedFalse,
                    eval_result: None,
                    llm_reasoning: None,
                    note: None,
                }),
                CheckStatus::Unknown => {
                    let note = if verdict.diagnostics.trim().is_empty() {
                        None
                    } else {
                        Some(verdict.diagnostics.clone())
                    };
                    self.judge_one(spec, test, note)
                }
            },
            Err(ProverError::IllTyped { source, .. }) => {
                self.judge_one(spec, test, Some(format!("proposition is ill-typed: {source}")))
            }
            Err(other) => Err(other.into()),
        }
    }

    /// Evaluates every test: decided propositions land in the `lean_*`
    /// buckets, inconclusive ones go to the per-test judge.
    pub fn evaluate_spec(
        &self,
        problem: &Problem,
        spec: &Specification,
        suite: &[TestCase],
    ) -> Result<EvalReport, EngineError> {
        let mut report = EvalReport::new();
        for test in suite {
            let result = self.evaluate_one(spec, test, &problem.signature)?;
            report.insert(&test.id, result);
        }
        let suite_ids: BTreeSet<String> = suite.iter().map(|t| t.id.clone()).collect();
        validate_report(&report, &suite_ids)?;
        Ok(report)
    }

    // ─────────────────────────── Repair ───────────────────────────

    /// Builds the attribution delta: implicated requirements plus up to
    /// three representative failing tests per requirement, lowest id first.
    pub fn build_delta(
        iteration: u32,
        implicated: &BTreeSet<String>,
        report: &EvalReport,
        map: &TraceabilityMap,
        suite: &[TestCase],
    ) -> FeedbackDelta {
        let failing = failing_tests(report);
        let mut representatives: Vec<RepresentativeTest> = Vec::new();
        let mut seen = BTreeSet::new();
        for requirement_id in implicated {
            let mut chosen = 0usize;
            for test in suite {
                if chosen >= REPRESENTATIVES_PER_REQUIREMENT {
                    break;
                }
                if !failing.contains(&test.id) || !map.implicated(&test.id).contains(requirement_id)
                {
                    continue;
                }
                chosen += 1;
                if seen.insert(test.id.clone()) {
                    representatives.push(RepresentativeTest {
                        test_id: test.id.clone(),
                        note: test.description.clone(),
                    });
                }
            }
        }
        FeedbackDelta {
            iteration,
            implicated_requirements: implicated.clone(),
            representative_tests: representatives,
            feedback_text: String::new(),
        }
    }

    fn delta_requirements_json(
        delta: &FeedbackDelta,
        requirements: &[AtomicRequirement],
        suite: &[TestCase],
        map: &TraceabilityMap,
    ) -> String {
        let quoted: BTreeSet<&str> = delta
            .representative_tests
            .iter()
            .map(|r| r.test_id.as_str())
            .collect();
        let views: Vec<DeltaRequirementView<'_>> = requirements
            .iter()
            .filter(|r| delta.implicated_requirements.contains(&r.id))
            .map(|r| DeltaRequirementView {
                id: &r.id,
                kind: r.kind,
                description: &r.description,
                failing_tests: suite
                    .iter()
                    .filter(|t| {
                        quoted.contains(t.id.as_str()) && map.implicated(&t.id).contains(&r.id)
                    })
                    .map(|t| DeltaTestView {
                        test_id: &t.id,
                        kind: t.kind.label(),
                        input: &t.input,
                        output: t.output.as_ref(),
                        description: &t.description,
                    })
                    .collect(),
            })
            .collect();
        serde_json::to_string_pretty(&views).expect("delta views always serialize")
    }

    /// Generates repair feedback for the failing candidate and fills the
    /// delta's feedback text.
    pub fn generate_feedback(
        &self,
        problem: &Problem,
        spec: &Specification,
        report: &EvalReport,
        delta: &mut FeedbackDelta,
        requirements: &[AtomicRequirement],
        suite: &[TestCase],
        map: &TraceabilityMap,
    ) -> Result<(), EngineError> {
        let passing = report.passing().len();
        let total = suite.len().max(1);
        let quality = passing as f64 / total as f64;
        let context = ctx(&[
            ("problem_description", problem.description.clone()),
            (
                "requirements_json",
                Self::delta_requirements_json(delta, requirements, suite, map),
            ),
            ("failed_spec", context::spec_text(spec)),
            ("quality_score", format!("{quality}")),
        ]);
        let reply = self.complete(TaskKind::FeedbackGeneration, &context)?;
        delta.feedback_text = reply.text;
        Ok(())
    }

    /// One localized repair: refine the failed spec under the delta's
    /// feedback. An unusable reply after one re-prompt keeps the old spec.
    pub fn repair(
        &self,
        problem: &Problem,
        spec: &Specification,
        requirements: &[AtomicRequirement],
        delta: &FeedbackDelta,
    ) -> Result<(Specification, SpecAttempt), EngineError> {
        let context = ctx(&[
            ("problem_description", problem.description.clone()),
            ("signature", context::signature_json(&problem.signature)),
            ("requirements_json", context::requirements_json(requirements)),
            ("failed_spec", context::spec_text(spec)),
            ("feedback", delta.feedback_text.clone()),
        ]);
        let dialect = self.config.dialect;
        let repaired = self.complete_decoded(TaskKind::SpecRefinement, &context, move |text| {
            let block = extract_fenced_block(text).map_err(|e| e.to_string())?;
            let candidate =
                context::parse_spec_text(block, dialect).map_err(|e| e.to_string())?;
            validate_spec(&candidate).map_err(|e| e.to_string())?;
            Ok(candidate)
        });
        let attempt = SpecAttempt {
            failed_spec: spec.clone(),
            feedback: delta.feedback_text.clone(),
            informalized_feedback: String::new(),
        };
        match repaired {
            Ok(new_spec) => Ok((new_spec, attempt)),
            Err(EngineError::ParseFailure { .. }) => Ok((spec.clone(), attempt)),
            Err(other) => Err(other),
        }
    }

    // ─────────────────────────── Adversarial ───────────────────────────

    fn adversarial_kind(entry: &AdversarialReply) -> BaseKind {
        match entry.kind.as_deref() {
            Some("positive") => BaseKind::Positive,
            Some("neg_input") => BaseKind::NegInput,
            Some("neg_output") => BaseKind::NegOutput,
            _ => {
                if entry.wrong_output.is_some() {
                    BaseKind::NegOutput
                } else if entry.expected_output.is_some() {
                    BaseKind::Positive
                } else {
                    BaseKind::NegInput
                }
            }
        }
    }

    /// One adversarial probe against an all-passing spec. Candidates that
    /// fail the spec are labeled, mapped, and added; the rest are discarded.
    pub fn adversarial_round(
        &self,
        problem: &Problem,
        spec: &Specification,
        requirements: &[AtomicRequirement],
        suite: &[TestCase],
        next_test_number: &mut usize,
    ) -> Result<(Vec<TestCase>, TraceabilityMap), EngineError> {
        let context = ctx(&[
            ("problem_description", problem.description.clone()),
            ("signature", context::signature_json(&problem.signature)),
            ("requirements_json", context::requirements_json(requirements)),
            ("spec", context::spec_text(spec)),
        ]);
        let reply = self.complete(TaskKind::AdversarialTestGen, &context)?;
        let entries = decode_array::<AdversarialReply>(&reply.text).unwrap_or_default();

        let known: BTreeSet<String> = requirements.iter().map(|r| r.id.clone()).collect();
        let mut added = Vec::new();
        let mut additions = TraceabilityMap::new();
        let mut capacity = self
            .config
            .max_tests_per_problem
            .saturating_sub(suite.len());
        for entry in entries.into_iter().take(self.config.adversarial_batch) {
            if capacity == 0 {
                break;
            }
            if entry.input.len() != problem.signature.arity() {
                continue;
            }
            let base = Self::adversarial_kind(&entry);
            let output = match base {
                BaseKind::Positive => match self.label(problem, &entry.input) {
                    Ok(value) => Some(value),
                    Err(_) => continue,
                },
                BaseKind::NegOutput => {
                    let Some(wrong) = entry.wrong_output.or(entry.expected_output) else {
                        continue;
                    };
                    match self.label(problem, &entry.input) {
                        Ok(correct) if correct != wrong => Some(wrong),
                        _ => continue,
                    }
                }
                BaseKind::NegInput => None,
            };
            let candidate = TestCase {
                id: format!("t{next_test_number}"),
                kind: TestKind::Adversarial(base),
                input: entry.input,
                output,
                description: entry.description,
            };
            if candidate.validate(&problem.signature).is_err() {
                continue;
            }
            let result = self.evaluate_one(spec, &candidate, &problem.signature)?;
            if !result.status.is_fail() {
                continue;
            }
            let entries = self.map_one_test(
                requirements,
                &known,
                &candidate.input,
                candidate.output.as_ref(),
                true,
            )?;
            let Some(entries) = entries else {
                // No attribution possible and no generating requirement to
                // fall back to: the candidate is discarded.
                continue;
            };
            additions.insert(&candidate.id, entries)?;
            *next_test_number += 1;
            capacity -= 1;
            added.push(candidate);
        }
        Ok((added, additions))
    }

    // ─────────────────────────── Full loop ───────────────────────────

    /// Runs the complete synthesis loop for one problem, appending each
    /// stage's record to `sink` as it completes. Stage errors end the run
    /// with [`Outcome::Error`] and a persisted partial trajectory; only sink
    /// failures abort without a final record.
    pub fn synthesize(
        &self,
        problem: &Problem,
        seeds: &[SeedTest],
        sink: &dyn StepSink,
    ) -> Result<SynthesisRun, StoreError> {
        self.config.validate().map_err(|e| StoreError::Malformed {
            detail: e.to_string(),
        })?;
        let mut emitter = Emitter {
            sink,
            clock: self.clock.as_ref(),
            problem_id: &problem.id,
            next_index: 0,
        };
        let mut trajectory = Trajectory {
            problem: problem.clone(),
            requirements: Vec::new(),
            suite: Vec::new(),
            map: TraceabilityMap::new(),
            steps: Vec::new(),
            spec_attempts: Vec::new(),
            final_spec: None,
            final_unverified: false,
            outcome: Outcome::Error,
        };
        let error = match self.run_stages(problem, seeds, &mut emitter, &mut trajectory) {
            Ok(()) => None,
            // A failed record write means nothing more can be persisted.
            Err(EngineError::Store(store_error)) => return Err(store_error),
            Err(stage_error) => Some(stage_error.to_string()),
        };
        if error.is_some() {
            trajectory.outcome = Outcome::Error;
            trajectory.final_spec = None;
            trajectory.final_unverified = false;
        }
        emitter.emit(StepPayload::Final {
            outcome: trajectory.outcome,
            final_spec: trajectory.final_spec.clone(),
            final_unverified: trajectory.final_unverified,
        })?;
        Ok(SynthesisRun { trajectory, error })
    }

    fn run_stages(
        &self,
        problem: &Problem,
        seeds: &[SeedTest],
        emitter: &mut Emitter<'_>,
        trajectory: &mut Trajectory,
    ) -> Result<(), EngineError> {
        problem.validate()?;
        self.oracles.resolve(&problem.oracle_ref)?;

        let (raw, requirements) = self.decompose(problem)?;
        emitter.emit(StepPayload::Decomposition {
            problem: problem.clone(),
            raw_requirements: raw,
            requirements: requirements.clone(),
        })?;
        trajectory.requirements = requirements.clone();

        let mut premapped = TraceabilityMap::new();
        let mut provenance = BTreeMap::new();
        let suite =
            self.generate_suite(problem, &requirements, seeds, &mut premapped, &mut provenance)?;
        if suite.is_empty() {
            return Err(EngineError::EmptySuite);
        }
        emitter.emit(StepPayload::TestGen {
            tests: suite.clone(),
        })?;
        trajectory.suite = suite;

        let map =
            self.build_traceability(&requirements, &trajectory.suite, &provenance, premapped)?;
        emitter.emit(StepPayload::Mapping { map: map.clone() })?;
        trajectory.map = map;

        let mut spec = self.initial_spec(problem, &requirements)?;
        emitter.emit(StepPayload::Spec { spec: spec.clone() })?;

        let mut next_test_number = trajectory.suite.len() + 1;
        let mut iteration = 0u32;
        loop {
            if iteration >= self.config.max_iterations {
                trajectory.outcome = Outcome::BudgetExhausted;
                trajectory.final_spec = Some(spec);
                trajectory.final_unverified = true;
                return Ok(());
            }
            let report = self.evaluate_spec(problem, &spec, &trajectory.suite)?;
            emitter.emit(StepPayload::Eval {
                eval: eval_from_step(&TrajectoryStep {
                    spec: spec.clone(),
                    report: report.clone(),
                    delta: None,
                }),
            })?;
            trajectory.steps.push(TrajectoryStep {
                spec: spec.clone(),
                report: report.clone(),
                delta: None,
            });

            let failing = failing_tests(&report);
            if failing.is_empty() {
                let mut quiet_rounds = 0u32;
                let mut broke = false;
                while quiet_rounds < self.config.adversarial_rounds {
                    let (added, additions) = self.adversarial_round(
                        problem,
                        &spec,
                        &requirements,
                        &trajectory.suite,
                        &mut next_test_number,
                    )?;
                    emitter.emit(StepPayload::Adversarial {
                        tests: added.clone(),
                        map: additions.clone(),
                    })?;
                    if added.is_empty() {
                        quiet_rounds += 1;
                    } else {
                        trajectory.suite.extend(added);
                        trajectory.map.merge(&additions)?;
                        broke = true;
                        break;
                    }
                }
                if broke {
                    continue;
                }
                trajectory.outcome = Outcome::Converged;
                trajectory.final_spec = Some(spec);
                trajectory.final_unverified = false;
                return Ok(());
            }

            let implicated = lift_failing_requirements(&failing, &trajectory.map)?;
            let mut delta =
                Self::build_delta(iteration, &implicated, &report, &trajectory.map, &trajectory.suite);
            self.generate_feedback(
                problem,
                &spec,
                &report,
                &mut delta,
                &requirements,
                &trajectory.suite,
                &trajectory.map,
            )?;
            emitter.emit(StepPayload::Feedback {
                delta: delta.clone(),
            })?;
            trajectory
                .steps
                .last_mut()
                .expect("an eval step was just pushed")
                .delta = Some(delta.clone());

            let (new_spec, attempt) = self.repair(problem, &spec, &requirements, &delta)?;
            emitter.emit(StepPayload::Repair {
                attempt: attempt.clone(),
            })?;
            trajectory.spec_attempts.push(attempt);
            spec = new_spec;
            iteration += 1;
            emitter.emit(StepPayload::Spec { spec: spec.clone() })?;
        }
    }
}

// ─────────────────────────── Helpers ───────────────────────────

#[derive(Default)]
struct IdGen {
    used: usize,
}

impl IdGen {
    fn next(&mut self) -> String {
        self.used += 1;
        format!("t{}", self.used)
    }
}

/// Normalizes a decomposition reply: ids reassigned sequentially as
/// `AR1..ARm` in reply order, kinds and descriptions preserved.
fn normalize_requirements(entries: Vec<(ReqKind, String)>) -> Vec<AtomicRequirement> {
    entries
        .into_iter()
        .enumerate()
        .map(|(index, (kind, description))| AtomicRequirement {
            id: format!("AR{}", index + 1),
            kind,
            description,
        })
        .collect()
}

/// Decodes the first fenced JSON block as an array of `T`; `None` when the
/// reply has no block, bad JSON, or the wrong shape.
fn decode_array<T: serde::de::DeserializeOwned>(text: &str) -> Option<Vec<T>> {
    let block = parse_structured_block(text).ok()?;
    serde_json::from_value(block).ok()
}

/// Keeps the first record per requirement id.
fn dedup_mapping(entries: Vec<MappingReply>) -> Vec<MapEntry> {
    let mut seen = BTreeSet::new();
    entries
        .into_iter()
        .filter(|e| seen.insert(e.requirement_id.clone()))
        .map(|e| MapEntry {
            requirement_id: e.requirement_id,
            validates: e.validates,
            confidence: e.confidence,
            reason: e.reason,
        })
        .collect()
}
