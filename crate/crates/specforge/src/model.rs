//! Core domain model shared by every stage of the refinement pipeline.
//!
//! Types here are immutable plain data with a canonical JSON encoding:
//! enums serialize as snake_case strings, sets as sorted arrays, and
//! associative data as key-sorted maps, so serialized bytes are deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{self, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Maximum list nesting depth accepted when parsing a [`Value`].
pub const MAX_VALUE_DEPTH: usize = 8;

/// Errors raised by model constructors and the attribution operations.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("test {test_id} violates the evaluation partition: {detail}")]
    PartitionViolation { test_id: String, detail: String },
    #[error("test {test_id} has no validating requirement in the traceability map")]
    UnmappedTest { test_id: String },
    #[error("traceability map already has an entry list for test {test_id}")]
    DuplicateTestEntry { test_id: String },
    #[error("traceability map has two records for (test {test_id}, requirement {requirement_id})")]
    DuplicateMapRecord {
        test_id: String,
        requirement_id: String,
    },
    #[error("traceability map references unknown test {test_id}")]
    UnknownTest { test_id: String },
    #[error("traceability map references unknown requirement {requirement_id} for test {test_id}")]
    UnknownRequirement {
        test_id: String,
        requirement_id: String,
    },
    #[error("test {test_id} supplies {actual} input values but the signature declares {expected}")]
    ArityMismatch {
        test_id: String,
        expected: usize,
        actual: usize,
    },
    #[error("test {test_id} of kind {kind} must carry an output value")]
    MissingOutput { test_id: String, kind: String },
    #[error("test {test_id} of kind {kind} must not carry an output value")]
    UnexpectedOutput { test_id: String, kind: String },
    #[error("{field} must not be empty")]
    EmptyField { field: String },
}

// ─────────────────────────── Values ───────────────────────────

/// A concrete test value: integers, booleans, text, and lists thereof.
///
/// Lists nest at most [`MAX_VALUE_DEPTH`] levels; deeper values are rejected
/// at parse time. Equality is structural and total.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Text(String),
    List(Vec<Value>),
}

impl Value {
    /// Nesting depth: scalars are 0, a list is one deeper than its deepest element.
    pub fn depth(&self) -> usize {
        match self {
            Value::Int(_) | Value::Bool(_) | Value::Text(_) => 0,
            Value::List(items) => 1 + items.iter().map(Value::depth).max().unwrap_or(0),
        }
    }

    /// Renders the canonical JSON text for this value.
    pub fn to_json_text(&self) -> String {
        serde_json::to_string(self).expect("value serialization is infallible")
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json_text())
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Int(i) => serializer.serialize_i64(*i),
            Value::Bool(b) => serializer.serialize_bool(*b),
            Value::Text(t) => serializer.serialize_str(t),
            Value::List(items) => items.serialize(serializer),
        }
    }
}

struct ValueVisitor;

impl<'de> Visitor<'de> for ValueVisitor {
    type Value = Value;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("an integer, boolean, string, or list of such values")
    }

    fn visit_bool<E: de::Error>(self, v: bool) -> Result<Value, E> {
        Ok(Value::Bool(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Value, E> {
        Ok(Value::Int(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Value, E> {
        i64::try_from(v)
            .map(Value::Int)
            .map_err(|_| E::custom(format!("integer {v} does not fit in 64 signed bits")))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Value, E> {
        Err(E::custom(format!(
            "floating-point value {v} is not representable"
        )))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Value, E> {
        Ok(Value::Text(v.to_owned()))
    }

    fn visit_string<E: de::Error>(self, v: String) -> Result<Value, E> {
        Ok(Value::Text(v))
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Value, A::Error> {
        let mut items = Vec::new();
        while let Some(item) = seq.next_element::<Value>()? {
            items.push(item);
        }
        Ok(Value::List(items))
    }

    fn visit_unit<E: de::Error>(self) -> Result<Value, E> {
        Err(E::custom("null is not a representable value"))
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = deserializer.deserialize_any(ValueVisitor)?;
        if value.depth() > MAX_VALUE_DEPTH {
            return Err(de::Error::custom(format!(
                "list nesting depth {} exceeds the limit of {MAX_VALUE_DEPTH}",
                value.depth()
            )));
        }
        Ok(value)
    }
}

/// Parses a JSON fragment into a [`Value`], enforcing the depth limit.
pub fn value_from_json(json: &serde_json::Value) -> Result<Value, serde_json::Error> {
    serde_json::from_value(json.clone())
}

// ─────────────────────────── Signatures ───────────────────────────

/// The type tags understood by the built-in value model.
pub const BUILTIN_TYPE_TAGS: [&str; 5] = ["Int", "Bool", "Text", "List Int", "List Text"];

/// Returns true when `value` is well-typed under a built-in `tag`.
/// Free-form tags (used by external prover dialects) accept any value.
pub fn value_matches_tag(value: &Value, tag: &str) -> bool {
    match tag {
        "Int" => matches!(value, Value::Int(_)),
        "Bool" => matches!(value, Value::Bool(_)),
        "Text" => matches!(value, Value::Text(_)),
        "List Int" => matches!(value, Value::List(items) if items.iter().all(|v| matches!(v, Value::Int(_)))),
        "List Text" => matches!(value, Value::List(items) if items.iter().all(|v| matches!(v, Value::Text(_)))),
        _ => true,
    }
}

/// One named, typed function parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    #[serde(rename = "type")]
    pub type_tag: String,
}

/// The function whose behavior is being specified.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSignature {
    pub function_name: String,
    pub input_params: Vec<Param>,
    #[serde(rename = "output_type")]
    pub output_type_tag: String,
}

impl FunctionSignature {
    pub fn arity(&self) -> usize {
        self.input_params.len()
    }

    pub fn param_names(&self) -> Vec<&str> {
        self.input_params.iter().map(|p| p.name.as_str()).collect()
    }
}

// ─────────────────────────── Requirements ───────────────────────────

/// Whether a requirement constrains inputs or outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReqKind {
    Precondition,
    Postcondition,
}

/// One atomic, independently checkable requirement lifted from the problem text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicRequirement {
    pub id: String,
    pub kind: ReqKind,
    pub description: String,
}

// ─────────────────────────── Test cases ───────────────────────────

/// The three base test shapes: valid pair, invalid input, wrong output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Positive,
    NegInput,
    NegOutput,
}

impl BaseKind {
    pub fn label(&self) -> &'static str {
        match self {
            BaseKind::Positive => "positive",
            BaseKind::NegInput => "neg_input",
            BaseKind::NegOutput => "neg_output",
        }
    }
}

/// Test kind; adversarial tests carry the base shape they instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "sub_kind", rename_all = "snake_case")]
pub enum TestKind {
    Positive,
    NegInput,
    NegOutput,
    Adversarial(BaseKind),
}

impl TestKind {
    /// The base shape that decides which check proposition applies.
    pub fn base(&self) -> BaseKind {
        match self {
            TestKind::Positive => BaseKind::Positive,
            TestKind::NegInput => BaseKind::NegInput,
            TestKind::NegOutput => BaseKind::NegOutput,
            TestKind::Adversarial(base) => *base,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TestKind::Adversarial(_) => "adversarial",
            other => other.base().label(),
        }
    }
}

/// One concrete test: an input vector and, where the kind demands it, an output.
///
/// `output` is present exactly when the base kind is positive (expected output)
/// or neg_output (deliberately wrong output); neg_input tests carry none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    #[serde(flatten)]
    pub kind: TestKind,
    pub input: Vec<Value>,
    pub output: Option<Value>,
    pub description: String,
}

impl TestCase {
    /// Checks arity against the signature and output presence against the kind.
    pub fn validate(&self, signature: &FunctionSignature) -> Result<(), ModelError> {
        if self.input.len() != signature.arity() {
            return Err(ModelError::ArityMismatch {
                test_id: self.id.clone(),
                expected: signature.arity(),
                actual: self.input.len(),
            });
        }
        let needs_output = !matches!(self.kind.base(), BaseKind::NegInput);
        match (needs_output, self.output.is_some()) {
            (true, false) => Err(ModelError::MissingOutput {
                test_id: self.id.clone(),
                kind: self.kind.label().to_owned(),
            }),
            (false, true) => Err(ModelError::UnexpectedOutput {
                test_id: self.id.clone(),
                kind: self.kind.label().to_owned(),
            }),
            _ => Ok(()),
        }
    }
}

/// Orders engine-assigned ids ("t1", "t12", "AR3", …) numerically by
/// comparing length first, then bytes; ties cannot occur for distinct ids.
pub fn natural_id_order(a: &str, b: &str) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

// ─────────────────────────── Traceability ───────────────────────────

/// Reviewer confidence attached to a mapping record; metadata only, it never
/// affects which requirements a test validates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    High,
    Medium,
    Low,
}

impl Confidence {
    pub fn label(&self) -> &'static str {
        match self {
            Confidence::High => "high",
            Confidence::Medium => "medium",
            Confidence::Low => "low",
        }
    }
}

/// One detailed mapping record: does this test validate this requirement?
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapEntry {
    pub requirement_id: String,
    pub validates: bool,
    pub confidence: Confidence,
    pub reason: String,
}

/// The traceability map π from test ids to detailed requirement records.
///
/// A test's implicated set is the requirement ids it `validates`; records with
/// `validates = false` are retained as review evidence but never attributed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TraceabilityMap {
    entries: BTreeMap<String, Vec<MapEntry>>,
}

impl TraceabilityMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the detailed entries for one test.
    /// Rejects a second list for the same test and duplicate requirement
    /// records within the list.
    pub fn insert(&mut self, test_id: &str, records: Vec<MapEntry>) -> Result<(), ModelError> {
        if self.entries.contains_key(test_id) {
            return Err(ModelError::DuplicateTestEntry {
                test_id: test_id.to_owned(),
            });
        }
        let mut seen = BTreeSet::new();
        for record in &records {
            if !seen.insert(record.requirement_id.clone()) {
                return Err(ModelError::DuplicateMapRecord {
                    test_id: test_id.to_owned(),
                    requirement_id: record.requirement_id.clone(),
                });
            }
        }
        self.entries.insert(test_id.to_owned(), records);
        Ok(())
    }

    /// Merges another map into this one; colliding test ids are rejected.
    pub fn merge(&mut self, other: &TraceabilityMap) -> Result<(), ModelError> {
        for (test_id, records) in &other.entries {
            self.insert(test_id, records.clone())?;
        }
        Ok(())
    }

    pub fn contains_test(&self, test_id: &str) -> bool {
        self.entries.contains_key(test_id)
    }

    pub fn records(&self, test_id: &str) -> Option<&[MapEntry]> {
        self.entries.get(test_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<MapEntry>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// π(t): the requirement ids this test validates, sorted.
    pub fn implicated(&self, test_id: &str) -> BTreeSet<String> {
        self.entries
            .get(test_id)
            .map(|records| {
                records
                    .iter()
                    .filter(|r| r.validates)
                    .map(|r| r.requirement_id.clone())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Checks every record against the known test and requirement ids.
    pub fn validate(
        &self,
        tests: &BTreeSet<String>,
        requirements: &BTreeSet<String>,
    ) -> Result<(), ModelError> {
        for (test_id, records) in &self.entries {
            if !tests.contains(test_id) {
                return Err(ModelError::UnknownTest {
                    test_id: test_id.clone(),
                });
            }
            for record in records {
                if !requirements.contains(&record.requirement_id) {
                    return Err(ModelError::UnknownRequirement {
                        test_id: test_id.clone(),
                        requirement_id: record.requirement_id.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

// ─────────────────────────── Specifications ───────────────────────────

/// Which checking dialect a specification's text is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    Mini,
    Lean,
}

/// A candidate formal specification: a precondition over the inputs and a
/// postcondition over inputs plus result, with optional imports and auxiliary
/// definitions for dialects that support them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Specification {
    pub imports: String,
    pub precond_aux: String,
    pub precond: String,
    pub postcond_aux: String,
    pub postcond: String,
    pub dialect: Dialect,
}

// ─────────────────────────── Evaluation reports ───────────────────────────

/// Which of the four evaluation buckets a test landed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    LeanPass,
    LeanFail,
    JudgePass,
    JudgeFail,
}

impl TestStatus {
    pub fn is_fail(&self) -> bool {
        matches!(self, TestStatus::LeanFail | TestStatus::JudgeFail)
    }

    pub fn is_judge(&self) -> bool {
        matches!(self, TestStatus::JudgePass | TestStatus::JudgeFail)
    }
}

/// Prover outcome recorded alongside each status for provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictTag {
    ProvedTrue,
    ProvedFalse,
    Unknown,
}

impl VerdictTag {
    /// The persisted three-way result vocabulary: pass, fail, or unknown.
    pub fn result_status(&self) -> &'static str {
        match self {
            VerdictTag::ProvedTrue => "pass",
            VerdictTag::ProvedFalse => "fail",
            VerdictTag::Unknown => "unknown",
        }
    }
}

/// The judge's final answer when the prover was inconclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JudgeAnswer {
    #[serde(rename = "TRUE")]
    True,
    #[serde(rename = "FALSE")]
    False,
}

impl JudgeAnswer {
    pub fn label(&self) -> &'static str {
        match self {
            JudgeAnswer::True => "TRUE",
            JudgeAnswer::False => "FALSE",
        }
    }
}

/// Everything recorded about one test under one candidate specification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub status: TestStatus,
    pub verdict: VerdictTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_result: Option<JudgeAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_reasoning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Per-test outcomes for one evaluation pass over the suite.
///
/// The four buckets are pairwise disjoint by construction (one status per
/// test); exhaustiveness against a suite is checked by [`validate_report`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvalReport {
    results: BTreeMap<String, TestResult>,
}

impl EvalReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, test_id: &str, result: TestResult) {
        self.results.insert(test_id.to_owned(), result);
    }

    pub fn get(&self, test_id: &str) -> Option<&TestResult> {
        self.results.get(test_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &TestResult)> {
        self.results.iter()
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    fn ids_with(&self, wanted: TestStatus) -> BTreeSet<String> {
        self.results
            .iter()
            .filter(|(_, r)| r.status == wanted)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn lean_pass(&self) -> BTreeSet<String> {
        self.ids_with(TestStatus::LeanPass)
    }

    pub fn lean_fail(&self) -> BTreeSet<String> {
        self.ids_with(TestStatus::LeanFail)
    }

    pub fn judge_pass(&self) -> BTreeSet<String> {
        self.ids_with(TestStatus::JudgePass)
    }

    pub fn judge_fail(&self) -> BTreeSet<String> {
        self.ids_with(TestStatus::JudgeFail)
    }

    pub fn passing(&self) -> BTreeSet<String> {
        let mut ids = self.lean_pass();
        ids.extend(self.judge_pass());
        ids
    }
}

/// F(S): the failing tests of a report — prover-refuted plus judge-rejected.
pub fn failing_tests(report: &EvalReport) -> BTreeSet<String> {
    let mut ids = report.lean_fail();
    ids.extend(report.judge_fail());
    ids
}

/// Lifts failing tests to the requirements they validate: ⋃ π(t).
///
/// A failing test with no validating requirement cannot be attributed and is
/// an error; attribution is monotone in the failing set.
pub fn lift_failing_requirements(
    failing: &BTreeSet<String>,
    map: &TraceabilityMap,
) -> Result<BTreeSet<String>, ModelError> {
    let mut implicated = BTreeSet::new();
    for test_id in failing {
        let validated = map.implicated(test_id);
        if validated.is_empty() {
            return Err(ModelError::UnmappedTest {
                test_id: test_id.clone(),
            });
        }
        implicated.extend(validated);
    }
    Ok(implicated)
}

/// Checks that a report is a valid four-way partition of the suite and that
/// judge statuses appear only where the prover verdict was unknown.
pub fn validate_report(report: &EvalReport, suite: &BTreeSet<String>) -> Result<(), ModelError> {
    for test_id in suite {
        if report.get(test_id).is_none() {
            return Err(ModelError::PartitionViolation {
                test_id: test_id.clone(),
                detail: "missing from the report".to_owned(),
            });
        }
    }
    for (test_id, result) in report.iter() {
        if !suite.contains(test_id) {
            return Err(ModelError::PartitionViolation {
                test_id: test_id.clone(),
                detail: "not in the suite".to_owned(),
            });
        }
        let consistent = match result.status {
            TestStatus::LeanPass => result.verdict == VerdictTag::ProvedTrue,
            TestStatus::LeanFail => result.verdict == VerdictTag::ProvedFalse,
            TestStatus::JudgePass | TestStatus::JudgeFail => {
                result.verdict == VerdictTag::Unknown
            }
        };
        if !consistent {
            return Err(ModelError::PartitionViolation {
                test_id: test_id.clone(),
                detail: format!(
                    "status {:?} is inconsistent with prover verdict {:?}",
                    result.status, result.verdict
                ),
            });
        }
    }
    Ok(())
}

// ─────────────────────────── Feedback and trajectories ───────────────────────────

/// One representative failing test quoted in repair feedback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepresentativeTest {
    pub test_id: String,
    pub note: String,
}

/// The attribution delta driving one repair: which requirements failed,
/// which tests exposed them, and the feedback text sent to the refiner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackDelta {
    pub iteration: u32,
    pub implicated_requirements: BTreeSet<String>,
    pub representative_tests: Vec<RepresentativeTest>,
    pub feedback_text: String,
}

/// How a synthesis run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    BudgetExhausted,
    Error,
}

/// How outputs for a problem are labeled: a registered builtin function or
/// an external command invoked per input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleRef {
    Builtin(String),
    Command(Vec<String>),
}

/// One synthesis problem: natural-language description, typed signature,
/// and the oracle that labels correct outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub description: String,
    pub signature: FunctionSignature,
    pub oracle_ref: OracleRef,
}

impl Problem {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.id.is_empty() {
            return Err(ModelError::EmptyField {
                field: "problem id".to_owned(),
            });
        }
        if self.description.trim().is_empty() {
            return Err(ModelError::EmptyField {
                field: "problem description".to_owned(),
            });
        }
        Ok(())
    }
}

/// One failed candidate retained for later training-data construction:
/// the spec that failed, the structured feedback that was generated for it,
/// and the prose form actually sent to the refiner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecAttempt {
    pub failed_spec: Specification,
    pub feedback: String,
    pub informalized_feedback: String,
}

/// One refinement iteration: the candidate, its evaluation, and the
/// attribution delta when the candidate failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub spec: Specification,
    pub report: EvalReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<FeedbackDelta>,
}

/// The complete record of one synthesis run.
///
/// `final_unverified` marks a budget-exhausted run whose last repaired
/// candidate was produced but never evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub problem: Problem,
    pub requirements: Vec<AtomicRequirement>,
    pub suite: Vec<TestCase>,
    pub map: TraceabilityMap,
    pub steps: Vec<TrajectoryStep>,
    pub spec_attempts: Vec<SpecAttempt>,
    pub final_spec: Option<Specification>,
    pub final_unverified: bool,
    pub outcome: Outcome,
}

// ─────────────────────────── Checkpoints ───────────────────────────

/// One persisted evaluation result row as the distillery reads it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalResultRecord {
    pub test_id: String,
    pub result_status: String,
    pub status: TestStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_result: Option<JudgeAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_reasoning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// The evaluation block of a checkpoint: the candidate that was checked and
/// the per-test rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecEval {
    pub spec: Specification,
    pub results: Vec<EvalResultRecord>,
}

/// A full problem snapshot taken at one evaluation step, the unit the
/// distillery consumes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub problem_id: String,
    pub step_index: u64,
    pub problem_description: String,
    pub signature: FunctionSignature,
    pub informal_requirements: Vec<AtomicRequirement>,
    pub testcases: Vec<TestCase>,
    pub negative_input_testcases: Vec<TestCase>,
    pub negative_output_testcases: Vec<TestCase>,
    pub adversarial_testcases: Vec<TestCase>,
    pub testcase_ar_mapping_detailed: TraceabilityMap,
    pub spec: Specification,
    pub spec_attempts: Vec<SpecAttempt>,
    pub spec_eval: SpecEval,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nested_list(depth: usize) -> Value {
        let mut v = Value::Int(1);
        for _ in 0..depth {
            v = Value::List(vec![v]);
        }
        v
    }

    #[test]
    fn value_depth_limit_accepts_eight_levels() {
        let text = serde_json::to_string(&nested_list(MAX_VALUE_DEPTH)).unwrap();
        let parsed: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.depth(), MAX_VALUE_DEPTH);
    }

    #[test]
    fn value_depth_limit_rejects_nine_levels() {
        let text = serde_json::to_string(&nested_list(MAX_VALUE_DEPTH + 1)).unwrap();
        let err = serde_json::from_str::<Value>(&text).unwrap_err();
        assert!(err.to_string().contains("nesting depth"));
    }

    #[test]
    fn value_rejects_floats_and_null() {
        assert!(serde_json::from_str::<Value>("1.5").is_err());
        assert!(serde_json::from_str::<Value>("null").is_err());
    }

    #[test]
    fn value_round_trips_mixed_lists() {
        let v = Value::List(vec![
            Value::Int(-3),
            Value::Bool(true),
            Value::Text("ok".into()),
            Value::List(vec![Value::Int(0)]),
        ]);
        let text = serde_json::to_string(&v).unwrap();
        assert_eq!(text, r#"[-3,true,"ok",[0]]"#);
        assert_eq!(serde_json::from_str::<Value>(&text).unwrap(), v);
    }

    #[test]
    fn natural_order_sorts_numeric_suffixes() {
        let mut ids = vec!["t10", "t2", "t1"];
        ids.sort_by(|a, b| natural_id_order(a, b));
        assert_eq!(ids, vec!["t1", "t2", "t10"]);
    }

    #[test]
    fn test_kind_serdes_with_sub_kind() {
        let t = TestCase {
            id: "t1".into(),
            kind: TestKind::Adversarial(BaseKind::NegOutput),
            input: vec![Value::List(vec![Value::Int(1)])],
            output: Some(Value::Int(9)),
            description: "wrong output to probe the spec".into(),
        };
        let json = serde_json::to_value(&t).unwrap();
        assert_eq!(json["kind"], "adversarial");
        assert_eq!(json["sub_kind"], "neg_output");
        let back: TestCase = serde_json::from_value(json).unwrap();
        assert_eq!(back, t);

        let p = TestCase {
            kind: TestKind::Positive,
            ..t
        };
        let json = serde_json::to_value(&p).unwrap();
        assert_eq!(json["kind"], "positive");
        assert!(json.get("sub_kind").is_none());
    }

    fn sig_one_list() -> FunctionSignature {
        FunctionSignature {
            function_name: "most_frequent".into(),
            input_params: vec![Param {
                name: "xs".into(),
                type_tag: "List Int".into(),
            }],
            output_type_tag: "Int".into(),
        }
    }

    #[test]
    fn test_case_validation_checks_arity_and_output() {
        let sig = sig_one_list();
        let ok = TestCase {
            id: "t1".into(),
            kind: TestKind::Positive,
            input: vec![Value::List(vec![Value::Int(1)])],
            output: Some(Value::Int(1)),
            description: String::new(),
        };
        assert!(ok.validate(&sig).is_ok());

        let wrong_arity = TestCase {
            input: vec![],
            ..ok.clone()
        };
        assert!(matches!(
            wrong_arity.validate(&sig),
            Err(ModelError::ArityMismatch { expected: 1, actual: 0, .. })
        ));

        let missing_output = TestCase {
            output: None,
            ..ok.clone()
        };
        assert!(matches!(
            missing_output.validate(&sig),
            Err(ModelError::MissingOutput { .. })
        ));

        let neg_with_output = TestCase {
            kind: TestKind::NegInput,
            ..ok
        };
        assert!(matches!(
            neg_with_output.validate(&sig),
            Err(ModelError::UnexpectedOutput { .. })
        ));
    }

    fn entry(req: &str, validates: bool) -> MapEntry {
        MapEntry {
            requirement_id: req.into(),
            validates,
            confidence: Confidence::High,
            reason: "covers the requirement directly".into(),
        }
    }

    #[test]
    fn implicated_keeps_only_validating_records() {
        let mut map = TraceabilityMap::new();
        map.insert("t7", vec![entry("AR1", false), entry("AR3", true)])
            .unwrap();
        let pi: Vec<String> = map.implicated("t7").into_iter().collect();
        assert_eq!(pi, vec!["AR3".to_owned()]);
        assert!(map.implicated("t99").is_empty());
    }

    #[test]
    fn map_rejects_duplicate_records() {
        let mut map = TraceabilityMap::new();
        assert!(matches!(
            map.insert("t1", vec![entry("AR1", true), entry("AR1", false)]),
            Err(ModelError::DuplicateMapRecord { .. })
        ));
        map.insert("t1", vec![entry("AR1", true)]).unwrap();
        assert!(matches!(
            map.insert("t1", vec![entry("AR2", true)]),
            Err(ModelError::DuplicateTestEntry { .. })
        ));
    }

    fn result(status: TestStatus, verdict: VerdictTag) -> TestResult {
        TestResult {
            status,
            verdict,
            eval_result: None,
            llm_reasoning: None,
            note: None,
        }
    }

    #[test]
    fn failing_tests_unions_both_fail_buckets() {
        let mut report = EvalReport::new();
        report.insert("t1", result(TestStatus::LeanPass, VerdictTag::ProvedTrue));
        report.insert("t2", result(TestStatus::LeanFail, VerdictTag::ProvedFalse));
        report.insert("t3", result(TestStatus::JudgeFail, VerdictTag::Unknown));
        report.insert("t4", result(TestStatus::JudgePass, VerdictTag::Unknown));
        let failing: Vec<String> = failing_tests(&report).into_iter().collect();
        assert_eq!(failing, vec!["t2".to_owned(), "t3".to_owned()]);
    }

    #[test]
    fn lift_unions_validated_requirements() {
        let mut map = TraceabilityMap::new();
        map.insert("t1", vec![entry("R1", true), entry("R2", true)])
            .unwrap();
        map.insert("t2", vec![entry("R2", true), entry("R3", true)])
            .unwrap();
        let failing: BTreeSet<String> = ["t1", "t2"].iter().map(|s| s.to_string()).collect();
        let lifted = lift_failing_requirements(&failing, &map).unwrap();
        let expected: BTreeSet<String> = ["R1", "R2", "R3"].iter().map(|s| s.to_string()).collect();
        assert_eq!(lifted, expected);
        assert!(lift_failing_requirements(&BTreeSet::new(), &map)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn lift_rejects_unmapped_failing_test() {
        let mut map = TraceabilityMap::new();
        map.insert("t1", vec![entry("R1", false)]).unwrap();
        let failing: BTreeSet<String> = [String::from("t1")].into_iter().collect();
        assert_eq!(
            lift_failing_requirements(&failing, &map),
            Err(ModelError::UnmappedTest {
                test_id: "t1".into()
            })
        );
    }

    #[test]
    fn validate_report_accepts_consistent_partition() {
        let mut report = EvalReport::new();
        report.insert("t1", result(TestStatus::LeanPass, VerdictTag::ProvedTrue));
        report.insert("t2", result(TestStatus::JudgeFail, VerdictTag::Unknown));
        let suite: BTreeSet<String> = ["t1", "t2"].iter().map(|s| s.to_string()).collect();
        assert!(validate_report(&report, &suite).is_ok());
    }

    #[test]
    fn validate_report_rejects_judge_status_without_unknown_verdict() {
        let mut report = EvalReport::new();
        report.insert("t1", result(TestStatus::JudgePass, VerdictTag::ProvedTrue));
        let suite: BTreeSet<String> = [String::from("t1")].into_iter().collect();
        assert!(matches!(
            validate_report(&report, &suite),
            Err(ModelError::PartitionViolation { .. })
        ));
    }

    #[test]
    fn validate_report_rejects_incomplete_or_extra_tests() {
        let mut report = EvalReport::new();
        report.insert("t1", result(TestStatus::LeanPass, VerdictTag::ProvedTrue));
        let missing: BTreeSet<String> = ["t1", "t2"].iter().map(|s| s.to_string()).collect();
        assert!(validate_report(&report, &missing).is_err());
        let extra: BTreeSet<String> = BTreeSet::new();
        assert!(validate_report(&report, &extra).is_err());
    }

    #[test]
    fn oracle_ref_encoding_is_tagged() {
        let builtin = OracleRef::Builtin("most_frequent".into());
        assert_eq!(
            serde_json::to_string(&builtin).unwrap(),
            r#"{"builtin":"most_frequent"}"#
        );
        let command = OracleRef::Command(vec!["./oracle".into(), "--fast".into()]);
        assert_eq!(
            serde_json::to_string(&command).unwrap(),
            r#"{"command":["./oracle","--fast"]}"#
        );
    }
}
