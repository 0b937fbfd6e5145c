//! Append-only trajectory persistence.
//!
//! One run writes one UTF-8 JSON Lines file. Each line is a
//! [`TrajectoryRecord`]: a schema-versioned, timestamped step for one
//! problem, with step indices contiguous from 0 and a single `final` record
//! closing each finished problem. Appends are serialized and durable before
//! the call returns; any prefix of the file remains readable up to its last
//! complete record.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::model::{
    AtomicRequirement, Checkpoint, EvalReport, FeedbackDelta, Outcome, Problem, SpecAttempt,
    SpecEval, Specification, TestCase, TestKind, TestResult, TraceabilityMap, Trajectory,
    TrajectoryStep, VerdictTag,
};

/// Record schema revision written to and required from every line.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("step ({problem_id}, {step_index}) was already appended")]
    DuplicateStep { problem_id: String, step_index: u64 },
    #[error("step index for {problem_id} must be {expected}, got {actual}")]
    NonContiguous {
        problem_id: String,
        expected: u64,
        actual: u64,
    },
    #[error("problem {problem_id} is finalized; the store is closed for it")]
    StoreClosed { problem_id: String },
    #[error("record on line {line} is corrupt")]
    CorruptRecord { line: usize },
    #[error("problem {problem_id} has no final record")]
    Incomplete { problem_id: String },
    #[error("store has no records for problem {problem_id}")]
    UnknownProblem { problem_id: String },
    #[error("record stream is inconsistent: {detail}")]
    Malformed { detail: String },
}

// ─────────────────────────── Records ───────────────────────────

/// The step-specific payload of one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step_kind", content = "payload", rename_all = "snake_case")]
pub enum StepPayload {
    Decomposition {
        problem: Problem,
        raw_requirements: Vec<AtomicRequirement>,
        requirements: Vec<AtomicRequirement>,
    },
    TestGen {
        tests: Vec<TestCase>,
    },
    Mapping {
        map: TraceabilityMap,
    },
    Spec {
        spec: Specification,
    },
    Eval {
        eval: SpecEval,
    },
    Feedback {
        delta: FeedbackDelta,
    },
    Repair {
        attempt: SpecAttempt,
    },
    Adversarial {
        tests: Vec<TestCase>,
        map: TraceabilityMap,
    },
    Final {
        outcome: Outcome,
        final_spec: Option<Specification>,
        final_unverified: bool,
    },
}

impl StepPayload {
    pub fn kind_label(&self) -> &'static str {
        match self {
            StepPayload::Decomposition { .. } => "decomposition",
            StepPayload::TestGen { .. } => "test_gen",
            StepPayload::Mapping { .. } => "mapping",
            StepPayload::Spec { .. } => "spec",
            StepPayload::Eval { .. } => "eval",
            StepPayload::Feedback { .. } => "feedback",
            StepPayload::Repair { .. } => "repair",
            StepPayload::Adversarial { .. } => "adversarial",
            StepPayload::Final { .. } => "final",
        }
    }
}

/// One durable line of the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub schema_version: u32,
    pub problem_id: String,
    pub step_index: u64,
    pub timestamp: u64,
    #[serde(flatten)]
    pub payload: StepPayload,
}

/// Anything that accepts trajectory records as a run progresses.
pub trait StepSink: Send + Sync {
    fn append_step(&self, record: TrajectoryRecord) -> Result<(), StoreError>;
}

/// Discards every record; used when persistence is not wanted.
#[derive(Debug, Default)]
pub struct NullSink;

impl StepSink for NullSink {
    fn append_step(&self, _record: TrajectoryRecord) -> Result<(), StoreError> {
        Ok(())
    }
}

/// Collects records in memory, preserving append order.
#[derive(Debug, Default)]
pub struct MemorySink {
    records: Mutex<Vec<TrajectoryRecord>>,
}

impl MemorySink {
    pub fn take(&self) -> Vec<TrajectoryRecord> {
        std::mem::take(&mut self.records.lock().expect("memory sink mutex"))
    }

    pub fn snapshot(&self) -> Vec<TrajectoryRecord> {
        self.records.lock().expect("memory sink mutex").clone()
    }
}

impl StepSink for MemorySink {
    fn append_step(&self, record: TrajectoryRecord) -> Result<(), StoreError> {
        self.records.lock().expect("memory sink mutex").push(record);
        Ok(())
    }
}

// ─────────────────────────── Writer ───────────────────────────

struct WriterState {
    file: File,
    next_index: BTreeMap<String, u64>,
    closed: BTreeSet<String>,
}

/// The append side of one run's store file.
pub struct TrajectoryStore {
    path: PathBuf,
    state: Mutex<WriterState>,
}

impl TrajectoryStore {
    /// Creates (or truncates) the store file for a fresh run.
    pub fn create(path: &Path) -> Result<Self, StoreError> {
        let file = File::create(path)?;
        Ok(TrajectoryStore {
            path: path.to_owned(),
            state: Mutex::new(WriterState {
                file,
                next_index: BTreeMap::new(),
                closed: BTreeSet::new(),
            }),
        })
    }

    /// Reopens an existing store for appending, rebuilding per-problem
    /// progress from the readable prefix.
    pub fn open_append(path: &Path) -> Result<Self, StoreError> {
        let (records, _skipped) = scan_records(path)?;
        let mut next_index = BTreeMap::new();
        let mut closed = BTreeSet::new();
        for record in &records {
            next_index.insert(record.problem_id.clone(), record.step_index + 1);
            if matches!(record.payload, StepPayload::Final { .. }) {
                closed.insert(record.problem_id.clone());
            }
        }
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(TrajectoryStore {
            path: path.to_owned(),
            state: Mutex::new(WriterState {
                file,
                next_index,
                closed,
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl StepSink for TrajectoryStore {
    fn append_step(&self, record: TrajectoryRecord) -> Result<(), StoreError> {
        if record.schema_version != SCHEMA_VERSION {
            return Err(StoreError::Malformed {
                detail: format!(
                    "record schema_version {} does not match writer version {SCHEMA_VERSION}",
                    record.schema_version
                ),
            });
        }
        let mut state = self.state.lock().expect("store mutex is never poisoned");
        if state.closed.contains(&record.problem_id) {
            return Err(StoreError::StoreClosed {
                problem_id: record.problem_id,
            });
        }
        let expected = state.next_index.get(&record.problem_id).copied().unwrap_or(0);
        if record.step_index < expected {
            return Err(StoreError::DuplicateStep {
                problem_id: record.problem_id,
                step_index: record.step_index,
            });
        }
        if record.step_index > expected {
            return Err(StoreError::NonContiguous {
                problem_id: record.problem_id,
                expected,
                actual: record.step_index,
            });
        }

        let mut line = serde_json::to_string(&record).map_err(|e| StoreError::Malformed {
            detail: format!("record does not serialize: {e}"),
        })?;
        line.push('\n');
        state.file.write_all(line.as_bytes())?;
        state.file.sync_data()?;

        state
            .next_index
            .insert(record.problem_id.clone(), record.step_index + 1);
        if matches!(record.payload, StepPayload::Final { .. }) {
            state.closed.insert(record.problem_id);
        }
        Ok(())
    }
}

// ─────────────────────────── Readers ───────────────────────────

/// Strict read: every line must parse, else [`StoreError::CorruptRecord`]
/// with its 1-based line number. A torn final line is corrupt here.
pub fn load_records(path: &Path) -> Result<Vec<TrajectoryRecord>, StoreError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrajectoryRecord =
            serde_json::from_str(&line).map_err(|_| StoreError::CorruptRecord { line: index + 1 })?;
        records.push(record);
    }
    Ok(records)
}

/// Lenient read: skips unparseable lines, returning the surviving records
/// plus the skip count. A crash-truncated tail costs one skip at most.
pub fn scan_records(path: &Path) -> Result<(Vec<TrajectoryRecord>, u64), StoreError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    let mut skipped = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TrajectoryRecord>(&line) {
            Ok(record) => records.push(record),
            Err(_) => skipped += 1,
        }
    }
    Ok((records, skipped))
}

fn verdict_from_status(status: &str) -> Result<VerdictTag, StoreError> {
    match status {
        "pass" => Ok(VerdictTag::ProvedTrue),
        "fail" => Ok(VerdictTag::ProvedFalse),
        "unknown" => Ok(VerdictTag::Unknown),
        other => Err(StoreError::Malformed {
            detail: format!("unknown result_status `{other}`"),
        }),
    }
}

/// Rebuilds an [`EvalReport`] from persisted result rows.
pub fn report_from_eval(eval: &SpecEval) -> Result<EvalReport, StoreError> {
    let mut report = EvalReport::new();
    for row in &eval.results {
        report.insert(
            &row.test_id,
            TestResult {
                status: row.status,
                verdict: verdict_from_status(&row.result_status)?,
                eval_result: row.eval_result,
                llm_reasoning: row.llm_reasoning.clone(),
                note: row.note.clone(),
            },
        );
    }
    Ok(report)
}

/// Reconstructs one problem's [`Trajectory`] from a finished store.
pub fn load_trajectory(path: &Path, problem_id: &str) -> Result<Trajectory, StoreError> {
    let records: Vec<TrajectoryRecord> = load_records(path)?
        .into_iter()
        .filter(|r| r.problem_id == problem_id)
        .collect();
    if records.is_empty() {
        return Err(StoreError::UnknownProblem {
            problem_id: problem_id.to_owned(),
        });
    }
    for (expected, record) in records.iter().enumerate() {
        if record.step_index != expected as u64 {
            return Err(StoreError::Malformed {
                detail: format!(
                    "problem {problem_id} steps are not contiguous at index {}",
                    record.step_index
                ),
            });
        }
    }

    let mut problem = None;
    let mut requirements = Vec::new();
    let mut suite: Vec<TestCase> = Vec::new();
    let mut map = TraceabilityMap::new();
    let mut steps: Vec<TrajectoryStep> = Vec::new();
    let mut spec_attempts = Vec::new();
    let mut finale = None;

    for record in &records {
        match &record.payload {
            StepPayload::Decomposition {
                problem: p,
                requirements: reviewed,
                ..
            } => {
                problem = Some(p.clone());
                requirements = reviewed.clone();
            }
            StepPayload::TestGen { tests } => suite.extend(tests.iter().cloned()),
            StepPayload::Mapping { map: m } => {
                map.merge(m).map_err(|e| StoreError::Malformed {
                    detail: e.to_string(),
                })?;
            }
            StepPayload::Spec { .. } => {}
            StepPayload::Eval { eval } => {
                steps.push(TrajectoryStep {
                    spec: eval.spec.clone(),
                    report: report_from_eval(eval)?,
                    delta: None,
                });
            }
            StepPayload::Feedback { delta } => {
                let step = steps.last_mut().ok_or_else(|| StoreError::Malformed {
                    detail: "feedback record precedes any evaluation".to_owned(),
                })?;
                step.delta = Some(delta.clone());
            }
            StepPayload::Repair { attempt } => spec_attempts.push(attempt.clone()),
            StepPayload::Adversarial { tests, map: m } => {
                suite.extend(tests.iter().cloned());
                map.merge(m).map_err(|e| StoreError::Malformed {
                    detail: e.to_string(),
                })?;
            }
            StepPayload::Final {
                outcome,
                final_spec,
                final_unverified,
            } => finale = Some((*outcome, final_spec.clone(), *final_unverified)),
        }
    }

    let Some((outcome, final_spec, final_unverified)) = finale else {
        return Err(StoreError::Incomplete {
            problem_id: problem_id.to_owned(),
        });
    };
    let problem = problem.ok_or_else(|| StoreError::Malformed {
        detail: format!("problem {problem_id} has no decomposition record"),
    })?;
    Ok(Trajectory {
        problem,
        requirements,
        suite,
        map,
        steps,
        spec_attempts,
        final_spec,
        final_unverified,
        outcome,
    })
}

/// Problem ids present in the store, in iteration order.
pub fn problem_ids(path: &Path) -> Result<Vec<String>, StoreError> {
    let (records, _) = scan_records(path)?;
    let mut ids = BTreeSet::new();
    for record in records {
        ids.insert(record.problem_id);
    }
    Ok(ids.into_iter().collect())
}

/// Encodes a finished trajectory as the canonical record sequence, assigning
/// contiguous step indices and logical timestamps from 0.
///
/// Inverse of [`load_trajectory`] for trajectories in engine-emitted shape
/// (adversarial tests after the generated suite, one attempt per delta).
pub fn trajectory_to_records(trajectory: &Trajectory, problem_id: &str) -> Vec<TrajectoryRecord> {
    let mut records = Vec::new();
    let mut push = |payload: StepPayload| {
        let index = records.len() as u64;
        records.push(TrajectoryRecord {
            schema_version: SCHEMA_VERSION,
            problem_id: problem_id.to_owned(),
            step_index: index,
            timestamp: index,
            payload,
        });
    };

    let (generated, adversarial): (Vec<_>, Vec<_>) = trajectory
        .suite
        .iter()
        .cloned()
        .partition(|t| !matches!(t.kind, TestKind::Adversarial(_)));
    let mut generated_map = TraceabilityMap::new();
    let mut adversarial_map = TraceabilityMap::new();
    for (test_id, entries) in trajectory.map.iter() {
        let is_adversarial = adversarial.iter().any(|t| &t.id == test_id);
        let target = if is_adversarial {
            &mut adversarial_map
        } else {
            &mut generated_map
        };
        target
            .insert(test_id, entries.clone())
            .expect("source map has unique test ids");
    }

    push(StepPayload::Decomposition {
        problem: trajectory.problem.clone(),
        raw_requirements: trajectory.requirements.clone(),
        requirements: trajectory.requirements.clone(),
    });
    push(StepPayload::TestGen { tests: generated });
    push(StepPayload::Mapping {
        map: generated_map,
    });
    if !adversarial.is_empty() {
        push(StepPayload::Adversarial {
            tests: adversarial,
            map: adversarial_map,
        });
    }
    let mut attempts = trajectory.spec_attempts.iter();
    for step in &trajectory.steps {
        push(StepPayload::Spec {
            spec: step.spec.clone(),
        });
        push(StepPayload::Eval {
            eval: eval_from_step(step),
        });
        if let Some(delta) = &step.delta {
            push(StepPayload::Feedback {
                delta: delta.clone(),
            });
            if let Some(attempt) = attempts.next() {
                push(StepPayload::Repair {
                    attempt: attempt.clone(),
                });
            }
        }
    }
    for attempt in attempts {
        push(StepPayload::Repair {
            attempt: attempt.clone(),
        });
    }
    if trajectory.final_unverified {
        if let Some(spec) = &trajectory.final_spec {
            push(StepPayload::Spec { spec: spec.clone() });
        }
    }
    push(StepPayload::Final {
        outcome: trajectory.outcome,
        final_spec: trajectory.final_spec.clone(),
        final_unverified: trajectory.final_unverified,
    });
    records
}

/// Persisted result rows for one evaluated step.
pub fn eval_from_step(step: &TrajectoryStep) -> SpecEval {
    let results = step
        .report
        .iter()
        .map(|(test_id, result)| crate::model::EvalResultRecord {
            test_id: test_id.clone(),
            result_status: result.verdict.result_status().to_owned(),
            status: result.status,
            eval_result: result.eval_result,
            llm_reasoning: result.llm_reasoning.clone(),
            note: result.note.clone(),
        })
        .collect();
    SpecEval {
        spec: step.spec.clone(),
        results,
    }
}

// ─────────────────────────── Checkpoints ───────────────────────────

/// One full problem snapshot per evaluation record, ordered by
/// `(problem_id, step_index)`, plus the count of skipped corrupt lines.
pub fn iterate_checkpoints(path: &Path) -> Result<(Vec<Checkpoint>, u64), StoreError> {
    let (records, mut skipped) = scan_records(path)?;
    let mut per_problem: BTreeMap<String, Vec<TrajectoryRecord>> = BTreeMap::new();
    for record in records {
        per_problem
            .entry(record.problem_id.clone())
            .or_default()
            .push(record);
    }

    let mut checkpoints = Vec::new();
    for (problem_id, mut records) in per_problem {
        records.sort_by_key(|r| r.step_index);
        let mut description = None;
        let mut signature = None;
        let mut requirements = Vec::new();
        let mut suite: Vec<TestCase> = Vec::new();
        let mut map = TraceabilityMap::new();
        let mut attempts: Vec<SpecAttempt> = Vec::new();
        for record in &records {
            match &record.payload {
                StepPayload::Decomposition {
                    problem,
                    requirements: reviewed,
                    ..
                } => {
                    description = Some(problem.description.clone());
                    signature = Some(problem.signature.clone());
                    requirements = reviewed.clone();
                }
                StepPayload::TestGen { tests } => suite.extend(tests.iter().cloned()),
                StepPayload::Mapping { map: m } | StepPayload::Adversarial { map: m, .. } => {
                    if let StepPayload::Adversarial { tests, .. } = &record.payload {
                        suite.extend(tests.iter().cloned());
                    }
                    if map.merge(m).is_err() {
                        skipped += 1;
                    }
                }
                StepPayload::Repair { attempt } => attempts.push(attempt.clone()),
                StepPayload::Eval { eval } => {
                    let (Some(description), Some(signature)) = (&description, &signature) else {
                        skipped += 1;
                        continue;
                    };
                    let by_kind = |want: fn(&TestKind) -> bool| -> Vec<TestCase> {
                        suite.iter().filter(|t| want(&t.kind)).cloned().collect()
                    };
                    checkpoints.push(Checkpoint {
                        problem_id: problem_id.clone(),
                        step_index: record.step_index,
                        problem_description: description.clone(),
                        signature: signature.clone(),
                        informal_requirements: requirements.clone(),
                        testcases: by_kind(|k| matches!(k, TestKind::Positive)),
                        negative_input_testcases: by_kind(|k| matches!(k, TestKind::NegInput)),
                        negative_output_testcases: by_kind(|k| matches!(k, TestKind::NegOutput)),
                        adversarial_testcases: by_kind(|k| matches!(k, TestKind::Adversarial(_))),
                        testcase_ar_mapping_detailed: map.clone(),
                        spec: eval.spec.clone(),
                        spec_attempts: attempts.clone(),
                        spec_eval: eval.clone(),
                    });
                }
                _ => {}
            }
        }
    }
    Ok((checkpoints, skipped))
}
