//! Prompt construction and completion backends.
//!
//! Every LLM interaction flows through one task-tagged call path: a template
//! registry renders `(system, user)` chat messages for a [`TaskKind`], a
//! [`CompletionBackend`] produces the reply, and the parsing helpers here
//! decode fielded or fenced reply formats.
//!
//! Rendering rules are strict so transcripts are reproducible byte for byte:
//! system templates are emitted verbatim (any braces they contain survive),
//! user templates substitute `{name}` placeholders from the supplied context,
//! and `{name:.2f}` formats the context value as a two-decimal float.

mod remote;
mod script;

pub use remote::{RemoteBackend, RemoteConfig};
pub use script::{ScriptRecord, ScriptedBackend};

use std::collections::BTreeMap;
use std::sync::Arc;

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};

/// Default sampling temperature for engine completions.
pub const DEFAULT_TEMPERATURE: f64 = 0.3;
/// Default completion token budget.
pub const DEFAULT_MAX_TOKENS: u32 = 10_000;

/// Errors raised by rendering, parsing, and the completion backends.
#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("template for task {task} references `{{{name}}}` but the context has no `{name}`")]
    MissingPlaceholder { task: &'static str, name: String },
    #[error("placeholder `{name}` needs a numeric value, got `{value}`")]
    InvalidNumericValue { name: String, value: String },
    #[error("task {task} has no response template")]
    NoResponseTemplate { task: &'static str },
    #[error("fielded reply has no terminal `[[ ## completed ## ]]` marker")]
    MissingCompletedMarker,
    #[error("fielded reply repeats the field `{name}`")]
    DuplicateField { name: String },
    #[error("reply contains no fenced code block")]
    NoBlockFound,
    #[error("fenced block is not valid JSON at line {line}, column {column}: {message}")]
    DecodeError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("script is exhausted for task {task} after {consumed} replies")]
    ScriptExhausted { task: &'static str, consumed: u64 },
    #[error("script is invalid: {detail}")]
    ScriptInvalid { detail: String },
    #[error("transport failure: {detail}")]
    TransportError { detail: String },
    #[error("authentication failure: {detail}")]
    AuthError { detail: String },
}

/// Every prompt the pipeline can issue. The first eleven are the distilled
/// tasks; `JudgeReview` and `OutputPerturbation` are internal helpers that
/// never appear in emitted datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ArDecomposition,
    DirectSpecgen,
    SpecRefinement,
    FeedbackGeneration,
    SignatureGeneration,
    PositiveTestGen,
    NegativeInputTestGen,
    NegativeOutputTestGen,
    AdversarialTestGen,
    TestMapping,
    VerdictUnknown,
    JudgeReview,
    OutputPerturbation,
}

/// The eleven task kinds that produce training examples.
pub const DISTILLED_TASKS: [TaskKind; 11] = [
    TaskKind::ArDecomposition,
    TaskKind::DirectSpecgen,
    TaskKind::SpecRefinement,
    TaskKind::FeedbackGeneration,
    TaskKind::SignatureGeneration,
    TaskKind::PositiveTestGen,
    TaskKind::NegativeInputTestGen,
    TaskKind::NegativeOutputTestGen,
    TaskKind::AdversarialTestGen,
    TaskKind::TestMapping,
    TaskKind::VerdictUnknown,
];

impl TaskKind {
    pub fn label(&self) -> &'static str {
        match self {
            TaskKind::ArDecomposition => "ar_decomposition",
            TaskKind::DirectSpecgen => "direct_specgen",
            TaskKind::SpecRefinement => "spec_refinement",
            TaskKind::FeedbackGeneration => "feedback_generation",
            TaskKind::SignatureGeneration => "signature_generation",
            TaskKind::PositiveTestGen => "positive_test_gen",
            TaskKind::NegativeInputTestGen => "negative_input_test_gen",
            TaskKind::NegativeOutputTestGen => "negative_output_test_gen",
            TaskKind::AdversarialTestGen => "adversarial_test_gen",
            TaskKind::TestMapping => "test_mapping",
            TaskKind::VerdictUnknown => "verdict_unknown",
            TaskKind::JudgeReview => "judge_review",
            TaskKind::OutputPerturbation => "output_perturbation",
        }
    }

    pub fn is_distilled(&self) -> bool {
        DISTILLED_TASKS.contains(self)
    }

    pub fn from_label(label: &str) -> Option<TaskKind> {
        DISTILLED_TASKS
            .into_iter()
            .chain([TaskKind::JudgeReview, TaskKind::OutputPerturbation])
            .find(|task| task.label() == label)
    }
}

/// Chat roles used on the wire and in distilled examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One chat message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Sampling parameters passed to a backend with every call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_id: String,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            model_id: String::new(),
        }
    }
}

/// A completion reply; `truncated` flags a reply cut off at the token limit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub truncated: bool,
}

/// Produces completions for rendered chat messages.
pub trait CompletionBackend: Send + Sync {
    fn complete(
        &self,
        task: TaskKind,
        messages: &[ChatMessage],
        params: &CompletionParams,
    ) -> Result<Completion, GatewayError>;
}

// ─────────────────────────── Template registry ───────────────────────────

macro_rules! template {
    ($name:literal) => {
        include_str!(concat!("templates/", $name, ".txt"))
    };
}

fn system_template(task: TaskKind) -> &'static str {
    match task {
        TaskKind::ArDecomposition => template!("ar_decomposition.system"),
        TaskKind::DirectSpecgen => template!("direct_specgen.system"),
        TaskKind::SpecRefinement => template!("spec_refinement.system"),
        TaskKind::FeedbackGeneration => template!("feedback_generation.system"),
        TaskKind::SignatureGeneration => template!("signature_generation.system"),
        TaskKind::PositiveTestGen => template!("positive_test_gen.system"),
        TaskKind::NegativeInputTestGen => template!("negative_input_test_gen.system"),
        TaskKind::NegativeOutputTestGen => template!("negative_output_test_gen.system"),
        TaskKind::AdversarialTestGen => template!("adversarial_test_gen.system"),
        TaskKind::TestMapping => template!("test_mapping.system"),
        TaskKind::VerdictUnknown => template!("verdict_unknown.system"),
        TaskKind::JudgeReview => template!("judge_review.system"),
        TaskKind::OutputPerturbation => template!("output_perturbation.system"),
    }
}

fn user_template(task: TaskKind) -> &'static str {
    match task {
        TaskKind::ArDecomposition => template!("ar_decomposition.user"),
        TaskKind::DirectSpecgen => template!("direct_specgen.user"),
        TaskKind::SpecRefinement => template!("spec_refinement.user"),
        TaskKind::FeedbackGeneration => template!("feedback_generation.user"),
        TaskKind::SignatureGeneration => template!("signature_generation.user"),
        TaskKind::PositiveTestGen => template!("positive_test_gen.user"),
        TaskKind::NegativeInputTestGen => template!("negative_input_test_gen.user"),
        TaskKind::NegativeOutputTestGen => template!("negative_output_test_gen.user"),
        TaskKind::AdversarialTestGen => template!("adversarial_test_gen.user"),
        TaskKind::TestMapping => template!("test_mapping.user"),
        TaskKind::VerdictUnknown => template!("verdict_unknown.user"),
        TaskKind::JudgeReview => template!("judge_review.user"),
        TaskKind::OutputPerturbation => template!("output_perturbation.user"),
    }
}

/// The assistant-side template for tasks that have one.
pub fn response_template(task: TaskKind) -> Option<&'static str> {
    match task {
        TaskKind::ArDecomposition => Some(template!("ar_decomposition.response")),
        TaskKind::DirectSpecgen => Some(template!("direct_specgen.response")),
        TaskKind::SpecRefinement => Some(template!("spec_refinement.response")),
        TaskKind::SignatureGeneration => Some(template!("signature_generation.response")),
        TaskKind::PositiveTestGen => Some(template!("positive_test_gen.response")),
        TaskKind::NegativeInputTestGen => Some(template!("negative_input_test_gen.response")),
        TaskKind::NegativeOutputTestGen => Some(template!("negative_output_test_gen.response")),
        TaskKind::AdversarialTestGen => Some(template!("adversarial_test_gen.response")),
        TaskKind::TestMapping => Some(template!("test_mapping.response")),
        TaskKind::VerdictUnknown => Some(template!("verdict_unknown.response")),
        TaskKind::FeedbackGeneration
        | TaskKind::JudgeReview
        | TaskKind::OutputPerturbation => None,
    }
}

// ─────────────────────────── Rendering ───────────────────────────

/// Template context: placeholder name to pre-rendered text.
pub type Context = BTreeMap<String, String>;

fn placeholder_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)(:\.2f)?\}").expect("placeholder regex is valid")
    })
}

/// Substitutes `{name}` and `{name:.2f}` placeholders in one pass; inserted
/// values are never re-scanned, so braces inside values survive untouched.
pub fn substitute(template: &str, ctx: &Context, task: TaskKind) -> Result<String, GatewayError> {
    let re = placeholder_regex();
    let mut out = String::with_capacity(template.len());
    let mut last = 0;
    for caps in re.captures_iter(template) {
        let whole = caps.get(0).expect("capture 0 always present");
        let name = &caps[1];
        out.push_str(&template[last..whole.start()]);
        let value = ctx
            .get(name)
            .ok_or_else(|| GatewayError::MissingPlaceholder {
                task: task.label(),
                name: name.to_owned(),
            })?;
        if caps.get(2).is_some() {
            let number: f64 = value
                .trim()
                .parse()
                .map_err(|_| GatewayError::InvalidNumericValue {
                    name: name.to_owned(),
                    value: value.clone(),
                })?;
            out.push_str(&format!("{number:.2}"));
        } else {
            out.push_str(value);
        }
        last = whole.end();
    }
    out.push_str(&template[last..]);
    Ok(out)
}

/// Renders the `(system, user)` messages for a task.
///
/// The system template is emitted verbatim; only the user template is
/// substituted against the context.
pub fn render(task: TaskKind, ctx: &Context) -> Result<Vec<ChatMessage>, GatewayError> {
    let system = system_template(task);
    let user = substitute(user_template(task), ctx, task)?;
    Ok(vec![ChatMessage::system(system), ChatMessage::user(user)])
}

/// Renders the assistant-side template for a task.
pub fn render_response(task: TaskKind, ctx: &Context) -> Result<String, GatewayError> {
    let template = response_template(task).ok_or(GatewayError::NoResponseTemplate {
        task: task.label(),
    })?;
    substitute(template, ctx, task)
}

// ─────────────────────────── Reply parsing ───────────────────────────

fn marker_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?m)^\[\[ ## ([A-Za-z0-9_]+) ## \]\][ \t]*$").expect("marker regex is valid")
    })
}

fn trim_one_newline(raw: &str) -> &str {
    let raw = raw.strip_prefix('\n').unwrap_or(raw);
    raw.strip_suffix('\n').unwrap_or(raw)
}

/// Parses a `[[ ## name ## ]]`-delimited reply into ordered fields.
///
/// The final marker must be `completed`; field content is trimmed of exactly
/// one leading and one trailing newline; text before the first marker and
/// after `completed` is ignored.
pub fn parse_fielded(text: &str) -> Result<IndexMap<String, String>, GatewayError> {
    let matches: Vec<(String, usize, usize)> = marker_regex()
        .captures_iter(text)
        .map(|caps| {
            let whole = caps.get(0).expect("capture 0 always present");
            (caps[1].to_owned(), whole.start(), whole.end())
        })
        .collect();
    let Some((last_name, _, _)) = matches.last() else {
        return Err(GatewayError::MissingCompletedMarker);
    };
    if last_name != "completed" {
        return Err(GatewayError::MissingCompletedMarker);
    }

    let mut fields = IndexMap::new();
    for (i, (name, _, end)) in matches[..matches.len() - 1].iter().enumerate() {
        if name == "completed" {
            return Err(GatewayError::MissingCompletedMarker);
        }
        let next_start = matches[i + 1].1;
        let content = trim_one_newline(&text[*end..next_start]).to_owned();
        if fields.insert(name.clone(), content).is_some() {
            return Err(GatewayError::DuplicateField { name: name.clone() });
        }
    }
    Ok(fields)
}

/// Inverse of [`parse_fielded`]: emits each field as a marker line plus its
/// content, ending with the `completed` marker.
pub fn format_fielded<'a>(fields: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let mut out = String::new();
    for (name, value) in fields {
        out.push_str(&format!("[[ ## {name} ## ]]\n{value}\n"));
    }
    out.push_str("[[ ## completed ## ]]");
    out
}

fn fence_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?ms)^```[A-Za-z0-9_]*[ \t]*\n(.*?)^```").expect("fence regex is valid")
    })
}

/// Extracts the raw content of the first fenced code block.
pub fn extract_fenced_block(text: &str) -> Result<&str, GatewayError> {
    fence_regex()
        .captures(text)
        .and_then(|caps| caps.get(1))
        .map(|m| m.as_str())
        .ok_or(GatewayError::NoBlockFound)
}

/// Decodes the first fenced block of a reply as JSON.
pub fn parse_structured_block(text: &str) -> Result<serde_json::Value, GatewayError> {
    let block = extract_fenced_block(text)?;
    serde_json::from_str(block).map_err(|e| GatewayError::DecodeError {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

// ─────────────────────────── Gateway ───────────────────────────

/// A backend plus fixed sampling parameters: the one call path used by the
/// engine for every prompt.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn CompletionBackend>,
    pub params: CompletionParams,
}

impl Gateway {
    pub fn new(backend: Arc<dyn CompletionBackend>, params: CompletionParams) -> Self {
        Gateway { backend, params }
    }

    /// Renders the task's messages and requests a completion.
    pub fn complete(&self, task: TaskKind, ctx: &Context) -> Result<Completion, GatewayError> {
        let messages = render(task, ctx)?;
        self.backend.complete(task, &messages, &self.params)
    }
}
