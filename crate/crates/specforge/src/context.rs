//! Deterministic builders for every prompt-context value.
//!
//! The synthesis engine builds prompt contexts live; the distillery rebuilds
//! them later from persisted checkpoints. Both go through the functions here
//! so the same data always renders to the same bytes.

use serde::Serialize;

use crate::model::{
    AtomicRequirement, Dialect, FunctionSignature, MapEntry, ReqKind, Specification, TestCase,
    TestKind, Value,
};

/// Errors from decoding a specification out of its canonical text form.
#[derive(Debug, thiserror::Error)]
pub enum SpecTextError {
    #[error("specification text is missing the `-- {name}` section")]
    MissingSection { name: &'static str },
    #[error("specification text repeats the `-- {name}` section")]
    DuplicateSection { name: &'static str },
}

// ─────────────────────────── JSON views ───────────────────────────

/// Pretty JSON for a function signature, as shown in prompts.
pub fn signature_json(signature: &FunctionSignature) -> String {
    serde_json::to_string_pretty(signature).expect("signature always serializes")
}

/// Pretty JSON array of requirements, as shown in prompts.
pub fn requirements_json(requirements: &[AtomicRequirement]) -> String {
    serde_json::to_string_pretty(requirements).expect("requirements always serialize")
}

/// `(total, preconditions, postconditions)` counts for response preambles.
pub fn requirement_counts(requirements: &[AtomicRequirement]) -> (usize, usize, usize) {
    let pre = requirements
        .iter()
        .filter(|r| r.kind == ReqKind::Precondition)
        .count();
    (requirements.len(), pre, requirements.len() - pre)
}

/// Compact JSON for a test input vector.
pub fn input_json(input: &[Value]) -> String {
    serde_json::to_string(input).expect("values always serialize")
}

/// Compact JSON for an optional output; absent outputs render as `null`.
pub fn output_json(output: Option<&Value>) -> String {
    match output {
        Some(value) => serde_json::to_string(value).expect("values always serialize"),
        None => "null".to_owned(),
    }
}

#[derive(Serialize)]
struct PositiveView<'a> {
    input: &'a [Value],
    output: &'a Value,
    description: &'a str,
}

#[derive(Serialize)]
struct NegInputView<'a> {
    input: &'a [Value],
    description: &'a str,
}

#[derive(Serialize)]
struct NegOutputView<'a> {
    input: &'a [Value],
    wrong_output: &'a Value,
    description: &'a str,
}

#[derive(Serialize)]
struct AdversarialView<'a> {
    input: &'a [Value],
    #[serde(skip_serializing_if = "Option::is_none")]
    expected_output: Option<&'a Value>,
    description: &'a str,
}

fn missing_output(test: &TestCase) -> &Value {
    test.output
        .as_ref()
        .unwrap_or_else(|| panic!("test {} validated with an output", test.id))
}

/// Pretty JSON for positive tests: `input`, `output`, `description`.
pub fn positive_tests_json(tests: &[TestCase]) -> String {
    let views: Vec<PositiveView<'_>> = tests
        .iter()
        .map(|t| PositiveView {
            input: &t.input,
            output: missing_output(t),
            description: &t.description,
        })
        .collect();
    serde_json::to_string_pretty(&views).expect("tests always serialize")
}

/// Pretty JSON for negative-input tests: `input`, `description`.
pub fn negative_input_tests_json(tests: &[TestCase]) -> String {
    let views: Vec<NegInputView<'_>> = tests
        .iter()
        .map(|t| NegInputView {
            input: &t.input,
            description: &t.description,
        })
        .collect();
    serde_json::to_string_pretty(&views).expect("tests always serialize")
}

/// Pretty JSON for negative-output tests: `input`, `wrong_output`,
/// `description`.
pub fn negative_output_tests_json(tests: &[TestCase]) -> String {
    let views: Vec<NegOutputView<'_>> = tests
        .iter()
        .map(|t| NegOutputView {
            input: &t.input,
            wrong_output: missing_output(t),
            description: &t.description,
        })
        .collect();
    serde_json::to_string_pretty(&views).expect("tests always serialize")
}

/// Pretty JSON for adversarial tests: `input`, optional `expected_output`,
/// `description`.
pub fn adversarial_tests_json(tests: &[TestCase]) -> String {
    let views: Vec<AdversarialView<'_>> = tests
        .iter()
        .map(|t| AdversarialView {
            input: &t.input,
            expected_output: t.output.as_ref(),
            description: &t.description,
        })
        .collect();
    serde_json::to_string_pretty(&views).expect("tests always serialize")
}

/// Dispatches to the kind-appropriate test JSON shape.
pub fn tests_json_for(kind: TestKind, tests: &[TestCase]) -> String {
    match kind {
        TestKind::Positive => positive_tests_json(tests),
        TestKind::NegInput => negative_input_tests_json(tests),
        TestKind::NegOutput => negative_output_tests_json(tests),
        TestKind::Adversarial(_) => adversarial_tests_json(tests),
    }
}

/// Pretty JSON for one test's detailed mapping records.
pub fn mapping_detail_json(records: &[MapEntry]) -> String {
    serde_json::to_string_pretty(records).expect("map entries always serialize")
}

// ─────────────────────────── Specification text ───────────────────────────

const SPEC_SECTIONS: [&str; 5] = ["imports", "precond_aux", "precond", "postcond_aux", "postcond"];

/// Canonical single-text form of a specification: five `-- name` sections in
/// fixed order, empty sections reduced to their marker line.
pub fn spec_text(spec: &Specification) -> String {
    let fields = [
        &spec.imports,
        &spec.precond_aux,
        &spec.precond,
        &spec.postcond_aux,
        &spec.postcond,
    ];
    SPEC_SECTIONS
        .iter()
        .zip(fields)
        .map(|(name, text)| {
            if text.is_empty() {
                format!("-- {name}")
            } else {
                format!("-- {name}\n{text}")
            }
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Decodes the canonical text form back into a [`Specification`].
///
/// Sections may appear in any order; `imports` and the auxiliary sections may
/// be omitted entirely, `precond` and `postcond` may not. Leading and
/// trailing blank lines of each section body are dropped, so
/// `parse_spec_text(spec_text(s)) == s` whenever the fields themselves do not
/// begin or end with blank lines.
pub fn parse_spec_text(text: &str, dialect: Dialect) -> Result<Specification, SpecTextError> {
    let mut sections: [Option<Vec<&str>>; 5] = [const { None }; 5];
    let mut current: Option<usize> = None;
    for line in text.lines() {
        if let Some(name) = line.trim_end().strip_prefix("-- ") {
            if let Some(index) = SPEC_SECTIONS.iter().position(|s| *s == name.trim()) {
                if sections[index].is_some() {
                    return Err(SpecTextError::DuplicateSection {
                        name: SPEC_SECTIONS[index],
                    });
                }
                sections[index] = Some(Vec::new());
                current = Some(index);
                continue;
            }
        }
        if let Some(index) = current {
            sections[index]
                .as_mut()
                .expect("current section was just created")
                .push(line);
        }
    }
    let body = |index: usize| -> String {
        let Some(lines) = &sections[index] else {
            return String::new();
        };
        let start = lines.iter().take_while(|l| l.trim().is_empty()).count();
        let end = lines.len()
            - lines
                .iter()
                .rev()
                .take_while(|l| l.trim().is_empty())
                .count();
        if start >= end {
            String::new()
        } else {
            lines[start..end].join("\n")
        }
    };
    for required in [2, 4] {
        if sections[required].is_none() {
            return Err(SpecTextError::MissingSection {
                name: SPEC_SECTIONS[required],
            });
        }
    }
    Ok(Specification {
        imports: body(0),
        precond_aux: body(1),
        precond: body(2),
        postcond_aux: body(3),
        postcond: body(4),
        dialect,
    })
}

// ─────────────────────────── Prose builders ───────────────────────────

/// The code skeleton handed to direct specification generation: named
/// pre/postcondition definitions over the signature, with literal `{precond}`
/// and `{postcond}` slots left for the model to fill.
pub fn task_template(signature: &FunctionSignature) -> String {
    let params = signature
        .input_params
        .iter()
        .map(|p| format!("({} : {})", p.name, p.type_tag))
        .collect::<Vec<_>>()
        .join(" ");
    let name = &signature.function_name;
    let output = &signature.output_type_tag;
    format!(
        "def {name}_precond {params} : Prop :=\n  {{precond}}\n\n\
         def {name}_postcond {params} (result : {output}) : Prop :=\n  {{postcond}}"
    )
}

fn requirement_bullets(requirements: &[AtomicRequirement], kind: ReqKind) -> String {
    let lines: Vec<String> = requirements
        .iter()
        .filter(|r| r.kind == kind)
        .map(|r| format!("- {}: {}", r.id, r.description))
        .collect();
    if lines.is_empty() {
        "(none)".to_owned()
    } else {
        lines.join("\n")
    }
}

/// Bullet list of the precondition requirements, or `(none)`.
pub fn precond_desc(requirements: &[AtomicRequirement]) -> String {
    requirement_bullets(requirements, ReqKind::Precondition)
}

/// Bullet list of the postcondition requirements, or `(none)`.
pub fn postcond_desc(requirements: &[AtomicRequirement]) -> String {
    requirement_bullets(requirements, ReqKind::Postcondition)
}

/// The wording used for one mapping record in a mapping reply.
pub fn mapping_status_word(validates: bool) -> &'static str {
    if validates {
        "validates"
    } else {
        "does not validate"
    }
}
