//! Shared fixtures for the integration suites.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use specforge::model::{
    AtomicRequirement, BaseKind, Confidence, Dialect, EvalReport, FeedbackDelta,
    FunctionSignature, JudgeAnswer, MapEntry, OracleRef, Outcome, Param, Problem,
    RepresentativeTest, ReqKind, SpecAttempt, Specification, TestCase, TestKind, TestResult,
    TestStatus, TraceabilityMap, Trajectory, TrajectoryStep, Value, VerdictTag,
};

pub fn int_list(xs: &[i64]) -> Value {
    Value::List(xs.iter().copied().map(Value::Int).collect())
}

pub fn mini_spec(precond: &str, postcond: &str) -> Specification {
    Specification {
        imports: String::new(),
        precond_aux: String::new(),
        precond: precond.to_owned(),
        postcond_aux: String::new(),
        postcond: postcond.to_owned(),
        dialect: Dialect::Mini,
    }
}

pub fn list_signature() -> FunctionSignature {
    FunctionSignature {
        function_name: "probe".to_owned(),
        input_params: vec![
            Param {
                name: "xs".to_owned(),
                type_tag: "List Int".to_owned(),
            },
            Param {
                name: "k".to_owned(),
                type_tag: "Int".to_owned(),
            },
        ],
        output_type_tag: "Int".to_owned(),
    }
}

/// Builds a structurally consistent trajectory of the shape the refinement
/// loop emits: per-outcome delta/attempt discipline, adversarial tests after
/// generated ones, and reports covering the whole suite.
pub fn random_trajectory(rng: &mut ChaCha8Rng, problem_id: &str) -> Trajectory {
    let signature = FunctionSignature {
        function_name: "f".to_owned(),
        input_params: vec![Param {
            name: "xs".to_owned(),
            type_tag: "List Int".to_owned(),
        }],
        output_type_tag: "Int".to_owned(),
    };
    let problem = Problem {
        id: problem_id.to_owned(),
        description: format!("synthetic round-trip problem {problem_id}"),
        signature,
        oracle_ref: OracleRef::Builtin("most_frequent".to_owned()),
    };

    let requirements: Vec<AtomicRequirement> = (1..=rng.random_range(1..=3))
        .map(|i| AtomicRequirement {
            id: format!("AR{i}"),
            kind: if rng.random_bool(0.4) {
                ReqKind::Precondition
            } else {
                ReqKind::Postcondition
            },
            description: format!("requirement {i}"),
        })
        .collect();

    let generated = rng.random_range(1..=4);
    let adversarial = rng.random_range(0..=2);
    let mut suite = Vec::new();
    for t in 1..=generated + adversarial {
        let base = match rng.random_range(0..3) {
            0 => BaseKind::Positive,
            1 => BaseKind::NegInput,
            _ => BaseKind::NegOutput,
        };
        let kind = if t > generated {
            TestKind::Adversarial(base)
        } else {
            match base {
                BaseKind::Positive => TestKind::Positive,
                BaseKind::NegInput => TestKind::NegInput,
                BaseKind::NegOutput => TestKind::NegOutput,
            }
        };
        let elements: Vec<i64> = (0..rng.random_range(0..=3))
            .map(|_| rng.random_range(-5..=5))
            .collect();
        suite.push(TestCase {
            id: format!("t{t}"),
            kind,
            input: vec![int_list(&elements)],
            output: (base != BaseKind::NegInput).then(|| Value::Int(rng.random_range(-5..=5))),
            description: format!("case {t}"),
        });
    }

    let mut map = TraceabilityMap::new();
    for test in &suite {
        if rng.random_bool(0.8) {
            let mut entries = Vec::new();
            for requirement in &requirements {
                if rng.random_bool(0.6) {
                    entries.push(MapEntry {
                        requirement_id: requirement.id.clone(),
                        validates: rng.random_bool(0.8),
                        confidence: [Confidence::High, Confidence::Medium, Confidence::Low]
                            [rng.random_range(0..3)],
                        reason: "observed relation".to_owned(),
                    });
                }
            }
            if !entries.is_empty() {
                map.insert(&test.id, entries).expect("suite ids are unique");
            }
        }
    }

    let spec_pool = [
        ("(gt (len xs) 0)", "(ge (count xs y) 1)"),
        ("true", "(member y xs)"),
        ("(le 1 (len xs))", "(forall v xs (ge v y))"),
    ];
    let pick_spec = |rng: &mut ChaCha8Rng| {
        let (pre, post) = spec_pool[rng.random_range(0..spec_pool.len())];
        mini_spec(pre, post)
    };

    let outcome = match rng.random_range(0..3) {
        0 => Outcome::Converged,
        1 => Outcome::BudgetExhausted,
        _ => Outcome::Error,
    };
    let step_count = match outcome {
        Outcome::Error => rng.random_range(0..=2),
        _ => rng.random_range(1..=3),
    };
    let mut steps = Vec::new();
    for s in 0..step_count {
        let mut report = EvalReport::new();
        for test in &suite {
            let status = match rng.random_range(0..4) {
                0 => TestStatus::LeanPass,
                1 => TestStatus::LeanFail,
                2 => TestStatus::JudgePass,
                _ => TestStatus::JudgeFail,
            };
            let verdict = match status {
                TestStatus::LeanPass => VerdictTag::ProvedTrue,
                TestStatus::LeanFail => VerdictTag::ProvedFalse,
                _ => VerdictTag::Unknown,
            };
            report.insert(
                &test.id,
                TestResult {
                    status,
                    verdict,
                    eval_result: status.is_judge().then(|| {
                        if rng.random_bool(0.5) {
                            JudgeAnswer::True
                        } else {
                            JudgeAnswer::False
                        }
                    }),
                    llm_reasoning: status.is_judge().then(|| "weighed the clause".to_owned()),
                    note: rng.random_bool(0.2).then(|| "flagged".to_owned()),
                },
            );
        }
        let with_delta = match outcome {
            Outcome::Converged => s + 1 < step_count,
            Outcome::BudgetExhausted => true,
            Outcome::Error => s + 1 < step_count || rng.random_bool(0.5),
        };
        let delta = with_delta.then(|| {
            let mut implicated: std::collections::BTreeSet<String> = requirements
                .iter()
                .filter(|_| rng.random_bool(0.5))
                .map(|r| r.id.clone())
                .collect();
            implicated.insert(requirements[0].id.clone());
            FeedbackDelta {
                iteration: s as u32,
                implicated_requirements: implicated,
                representative_tests: suite
                    .iter()
                    .take(rng.random_range(0..=2))
                    .map(|t| RepresentativeTest {
                        test_id: t.id.clone(),
                        note: t.description.clone(),
                    })
                    .collect(),
                feedback_text: "tighten the postcondition".to_owned(),
            }
        });
        steps.push(TrajectoryStep {
            spec: pick_spec(rng),
            report,
            delta,
        });
    }

    let delta_count = steps.iter().filter(|s| s.delta.is_some()).count();
    let attempt_count = match outcome {
        Outcome::Error => delta_count.saturating_sub(rng.random_range(0..=1)),
        _ => delta_count,
    };
    let spec_attempts: Vec<SpecAttempt> = (0..attempt_count)
        .map(|i| SpecAttempt {
            failed_spec: pick_spec(rng),
            feedback: format!("feedback {i}"),
            informalized_feedback: format!("informal feedback {i}"),
        })
        .collect();

    let (final_spec, final_unverified) = match outcome {
        Outcome::Converged => (Some(steps.last().expect("steps exist").spec.clone()), false),
        Outcome::BudgetExhausted => (Some(pick_spec(rng)), true),
        Outcome::Error => (None, false),
    };

    Trajectory {
        problem,
        requirements,
        suite,
        map,
        steps,
        spec_attempts,
        final_spec,
        final_unverified,
        outcome,
    }
}
