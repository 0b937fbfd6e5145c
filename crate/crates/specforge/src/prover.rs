//! Check propositions and the prover backends that decide them.
//!
//! Each test is turned into one closed proposition against the candidate
//! specification, chosen by the test's base kind:
//!
//! - positive:   pre(x⃗) ∧ post(x⃗, y)
//! - neg_input:  ¬ pre(x⃗)
//! - neg_output: pre(x⃗) ∧ ¬ post(x⃗, ỹ)
//!
//! A test passes exactly when its proposition is proved. The mini backend
//! decides by evaluating the closed expression and therefore never answers
//! `Unknown` for a well-typed proposition; it can be configured to force
//! `Unknown` on chosen test ids so the judge fallback path stays testable.
//! The external backend shells out to a theorem prover twice per decision —
//! once for the proposition and once for its negation, each with the full
//! wall-clock timeout — and maps exit code 0 to proved, any other exit to
//! not proved, and a timeout to inconclusive.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::minispec::{self, Expr, MiniSpecError};
use crate::model::{
    BaseKind, Dialect, FunctionSignature, Specification, TestCase, Value,
    VerdictTag,
};

/// Default tactic applied to every rendered theorem.
pub const DEFAULT_TACTIC: &str = "grind";

/// Default wall-clock budget for one prover attempt.
pub const DEFAULT_PROVER_TIMEOUT: Duration = Duration::from_secs(120);

/// Errors raised while instantiating or deciding propositions.
#[derive(Debug, thiserror::Error)]
pub enum ProverError {
    #[error("specification dialect {spec:?} does not match the {backend} backend")]
    DialectMismatch { spec: Dialect, backend: &'static str },
    #[error("test {test_id} supplies {actual} inputs but the signature declares {expected}")]
    ArityMismatch {
        test_id: String,
        expected: usize,
        actual: usize,
    },
    #[error("test {test_id} needs an output value to build its proposition")]
    MissingOutput { test_id: String },
    #[error("{condition} failed to parse: {source}")]
    Parse {
        condition: &'static str,
        source: MiniSpecError,
    },
    #[error("{condition} references `{name}`, which is not a signature parameter")]
    UnboundVariable { condition: &'static str, name: String },
    #[error("specification is invalid: {detail}")]
    SpecInvalid { detail: String },
    #[error("proposition for test {test_id} is ill-typed: {source}")]
    IllTyped {
        test_id: String,
        source: MiniSpecError,
    },
    #[error("value {value} cannot be rendered as a literal of type `{type_tag}`")]
    LiteralRender { value: Value, type_tag: String },
    #[error("prover backend unavailable: {detail}")]
    BackendUnavailable { detail: String },
    #[error("prover scratch I/O failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Three-way outcome of one decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub tag: VerdictTag,
    pub diagnostics: String,
}

impl Verdict {
    fn new(tag: VerdictTag, diagnostics: impl Into<String>) -> Self {
        Verdict {
            tag,
            diagnostics: diagnostics.into(),
        }
    }
}

/// Pass/fail classification of a verdict; `Unknown` defers to the judge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Unknown,
}

/// Maps a verdict to a test status: proved ⇒ pass, refuted ⇒ fail.
pub fn status_of(verdict: &Verdict) -> CheckStatus {
    match verdict.tag {
        VerdictTag::ProvedTrue => CheckStatus::Pass,
        VerdictTag::ProvedFalse => CheckStatus::Fail,
        VerdictTag::Unknown => CheckStatus::Unknown,
    }
}

/// Dialect-specific proposition body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PropBody {
    /// A closed expression ready for evaluation.
    Mini(Expr),
    /// Theorem-file pieces: shared preamble and the proposition statement.
    Lean { preamble: String, statement: String },
}

/// One closed check proposition for one test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proposition {
    pub test_id: String,
    pub kind: BaseKind,
    pub body: PropBody,
}

/// Validates the dialect invariants of a specification: mini conditions must
/// parse and must not use imports or auxiliary sections; both dialects need
/// non-blank pre- and postconditions.
pub fn validate_spec(spec: &Specification) -> Result<(), ProverError> {
    if spec.precond.trim().is_empty() {
        return Err(ProverError::SpecInvalid {
            detail: "precond is empty".into(),
        });
    }
    if spec.postcond.trim().is_empty() {
        return Err(ProverError::SpecInvalid {
            detail: "postcond is empty".into(),
        });
    }
    if spec.dialect == Dialect::Mini {
        for (field, text) in [("imports", &spec.imports), ("precond_aux", &spec.precond_aux), ("postcond_aux", &spec.postcond_aux)] {
            if !text.trim().is_empty() {
                return Err(ProverError::SpecInvalid {
                    detail: format!("mini dialect does not support `{field}`"),
                });
            }
        }
        minispec::parse(&spec.precond).map_err(|source| ProverError::Parse {
            condition: "precond",
            source,
        })?;
        minispec::parse(&spec.postcond).map_err(|source| ProverError::Parse {
            condition: "postcond",
            source,
        })?;
    }
    Ok(())
}

fn parse_condition(
    text: &str,
    condition: &'static str,
    allowed: &[&str],
) -> Result<Expr, ProverError> {
    let expr = minispec::parse(text).map_err(|source| ProverError::Parse { condition, source })?;
    for name in expr.free_vars() {
        if !allowed.contains(&name.as_str()) {
            return Err(ProverError::UnboundVariable { condition, name });
        }
    }
    Ok(expr)
}

fn close_over_inputs(expr: &Expr, signature: &FunctionSignature, test: &TestCase) -> Expr {
    let mut closed = expr.clone();
    for (param, value) in signature.input_params.iter().zip(&test.input) {
        closed = closed.substitute(&param.name, value);
    }
    closed
}

/// Builds the kind-appropriate closed proposition for a test.
///
/// The test's arity must match the signature and kinds that need an output
/// must carry one; the result variable is always named `y`.
pub fn instantiate_proposition(
    spec: &Specification,
    test: &TestCase,
    signature: &FunctionSignature,
) -> Result<Proposition, ProverError> {
    if test.input.len() != signature.arity() {
        return Err(ProverError::ArityMismatch {
            test_id: test.id.clone(),
            expected: signature.arity(),
            actual: test.input.len(),
        });
    }
    let kind = test.kind.base();
    if kind != BaseKind::NegInput && test.output.is_none() {
        return Err(ProverError::MissingOutput {
            test_id: test.id.clone(),
        });
    }

    let body = match spec.dialect {
        Dialect::Mini => PropBody::Mini(instantiate_mini(spec, test, signature, kind)?),
        Dialect::Lean => {
            let (preamble, statement) = instantiate_lean(spec, test, signature, kind)?;
            PropBody::Lean {
                preamble,
                statement,
            }
        }
    };
    Ok(Proposition {
        test_id: test.id.clone(),
        kind,
        body,
    })
}

fn instantiate_mini(
    spec: &Specification,
    test: &TestCase,
    signature: &FunctionSignature,
    kind: BaseKind,
) -> Result<Expr, ProverError> {
    validate_spec(spec)?;
    if spec.dialect != Dialect::Mini {
        return Err(ProverError::DialectMismatch {
            spec: spec.dialect,
            backend: "mini",
        });
    }
    let params = signature.param_names();
    let mut post_allowed = params.clone();
    post_allowed.push("y");
    let pre = parse_condition(&spec.precond, "precond", &params)?;
    let pre_closed = close_over_inputs(&pre, signature, test);

    Ok(match kind {
        BaseKind::NegInput => Expr::Not(Box::new(pre_closed)),
        BaseKind::Positive | BaseKind::NegOutput => {
            let post = parse_condition(&spec.postcond, "postcond", &post_allowed)?;
            let output = test.output.as_ref().expect("output checked above");
            let post_closed = close_over_inputs(&post, signature, test).substitute("y", output);
            if kind == BaseKind::Positive {
                Expr::And(Box::new(pre_closed), Box::new(post_closed))
            } else {
                Expr::And(Box::new(pre_closed), Box::new(Expr::Not(Box::new(post_closed))))
            }
        }
    })
}

// ─────────────────────────── Lean rendering ───────────────────────────

fn render_scalar_literal(value: &Value, base: &str) -> Result<String, ProverError> {
    let err = || ProverError::LiteralRender {
        value: value.clone(),
        type_tag: base.to_owned(),
    };
    match (base, value) {
        ("Int", Value::Int(i)) => Ok(if *i < 0 {
            format!("({i} : Int)")
        } else {
            i.to_string()
        }),
        ("Nat", Value::Int(i)) => {
            if *i < 0 {
                Err(err())
            } else {
                Ok(i.to_string())
            }
        }
        ("Bool", Value::Bool(b)) => Ok(b.to_string()),
        ("String" | "Text", Value::Text(t)) => Ok(format!("{t:?}")),
        _ => Err(err()),
    }
}

/// Renders a value as a source literal for the given type tag.
///
/// Tags follow the grammar `base | List tag | (tag)` with the bases Int, Nat,
/// Bool, String, and Text; values that do not fit the tag are rejected.
pub fn render_literal(value: &Value, type_tag: &str) -> Result<String, ProverError> {
    let tag = type_tag.trim();
    let tag = tag
        .strip_prefix('(')
        .and_then(|rest| rest.strip_suffix(')'))
        .map(str::trim)
        .unwrap_or(tag);
    if let Some(element_tag) = tag.strip_prefix("List ") {
        let Value::List(items) = value else {
            return Err(ProverError::LiteralRender {
                value: value.clone(),
                type_tag: type_tag.to_owned(),
            });
        };
        let rendered: Result<Vec<String>, ProverError> = items
            .iter()
            .map(|item| render_literal(item, element_tag))
            .collect();
        Ok(format!("[{}]", rendered?.join(", ")))
    } else {
        render_scalar_literal(value, tag)
    }
}

fn lean_preamble(spec: &Specification) -> String {
    let mut sections = Vec::new();
    for text in [&spec.imports, &spec.precond_aux, &spec.postcond_aux] {
        let trimmed = text.trim();
        if !trimmed.is_empty() {
            sections.push(trimmed.to_owned());
        }
    }
    sections.join("\n\n")
}

fn instantiate_lean(
    spec: &Specification,
    test: &TestCase,
    signature: &FunctionSignature,
    kind: BaseKind,
) -> Result<(String, String), ProverError> {
    if spec.dialect != Dialect::Lean {
        return Err(ProverError::DialectMismatch {
            spec: spec.dialect,
            backend: "lean",
        });
    }
    validate_spec(spec)?;
    let mut args = Vec::new();
    for (param, value) in signature.input_params.iter().zip(&test.input) {
        args.push(render_literal(value, &param.type_tag)?);
    }
    let pre_app = format!("({}) {}", spec.precond.trim(), args.join(" "));
    let statement = match kind {
        BaseKind::NegInput => format!("¬ ({pre_app})"),
        BaseKind::Positive | BaseKind::NegOutput => {
            let output = test.output.as_ref().expect("output checked above");
            let out_lit = render_literal(output, &signature.output_type_tag)?;
            let post_app = format!(
                "({}) {} {}",
                spec.postcond.trim(),
                args.join(" "),
                out_lit
            );
            if kind == BaseKind::Positive {
                format!("({pre_app}) ∧ ({post_app})")
            } else {
                format!("({pre_app}) ∧ ¬ ({post_app})")
            }
        }
    };
    Ok((lean_preamble(spec), statement))
}

fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn theorem_file(preamble: &str, name: &str, statement: &str, tactic: &str) -> String {
    let mut file = String::new();
    if !preamble.is_empty() {
        file.push_str(preamble);
        file.push_str("\n\n");
    }
    file.push_str(&format!("theorem {name} : {statement} := by\n  {tactic}\n"));
    file
}

/// Renders the complete theorem file checking a test's proposition.
pub fn lean_render(
    spec: &Specification,
    test: &TestCase,
    signature: &FunctionSignature,
    tactic: &str,
) -> Result<String, ProverError> {
    let kind = test.kind.base();
    if kind != BaseKind::NegInput && test.output.is_none() {
        return Err(ProverError::MissingOutput {
            test_id: test.id.clone(),
        });
    }
    let (preamble, statement) = instantiate_lean(spec, test, signature, kind)?;
    let name = format!("check_{}", sanitize_id(&test.id));
    Ok(theorem_file(&preamble, &name, &statement, tactic))
}

// ─────────────────────────── Backends ───────────────────────────

/// A decision procedure for closed check propositions.
pub trait ProverBackend: Send + Sync {
    fn decide(&self, prop: &Proposition) -> Result<Verdict, ProverError>;
}

/// Evaluation-based backend for the mini dialect.
///
/// `force_unknown` routes chosen test ids to the judge; an `automation_budget`
/// of zero makes every decision inconclusive.
#[derive(Debug, Default)]
pub struct MiniBackend {
    pub force_unknown: BTreeSet<String>,
    pub automation_budget: Option<u64>,
}

impl MiniBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forcing_unknown(ids: impl IntoIterator<Item = String>) -> Self {
        MiniBackend {
            force_unknown: ids.into_iter().collect(),
            automation_budget: None,
        }
    }
}

impl ProverBackend for MiniBackend {
    fn decide(&self, prop: &Proposition) -> Result<Verdict, ProverError> {
        if self.automation_budget == Some(0) {
            return Ok(Verdict::new(
                VerdictTag::Unknown,
                "inconclusive: automation budget is zero",
            ));
        }
        if self.force_unknown.contains(&prop.test_id) {
            return Ok(Verdict::new(
                VerdictTag::Unknown,
                "inconclusive: forced by backend configuration",
            ));
        }
        let PropBody::Mini(expr) = &prop.body else {
            return Err(ProverError::DialectMismatch {
                spec: Dialect::Lean,
                backend: "mini",
            });
        };
        match minispec::mini_eval(expr) {
            Ok(true) => Ok(Verdict::new(VerdictTag::ProvedTrue, "evaluated to true")),
            Ok(false) => Ok(Verdict::new(VerdictTag::ProvedFalse, "evaluated to false")),
            Err(source) => Err(ProverError::IllTyped {
                test_id: prop.test_id.clone(),
                source,
            }),
        }
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore poisoned");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("semaphore poisoned");
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().expect("semaphore poisoned");
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

/// Configuration for the external theorem-prover backend.
#[derive(Debug, Clone)]
pub struct LeanBackendConfig {
    /// Prover argv; the theorem file path is appended as the final argument.
    pub command: Vec<String>,
    pub tactic: String,
    pub timeout: Duration,
    /// Directory where theorem files are written.
    pub scratch_dir: PathBuf,
    /// Maximum concurrent prover subprocesses.
    pub pool_size: usize,
}

impl LeanBackendConfig {
    pub fn new(command: Vec<String>, scratch_dir: PathBuf) -> Self {
        LeanBackendConfig {
            command,
            tactic: DEFAULT_TACTIC.to_owned(),
            timeout: DEFAULT_PROVER_TIMEOUT,
            scratch_dir,
            pool_size: 1,
        }
    }
}

enum AttemptOutcome {
    Proved,
    NotProved(String),
    TimedOut,
}

/// Backend that checks propositions by invoking an external prover per file.
pub struct LeanBackend {
    config: LeanBackendConfig,
    pool: Semaphore,
    counter: AtomicU64,
}

impl LeanBackend {
    pub fn new(config: LeanBackendConfig) -> Self {
        let pool = Semaphore::new(config.pool_size);
        LeanBackend {
            config,
            pool,
            counter: AtomicU64::new(0),
        }
    }

    fn run_attempt(&self, file_name: &str, contents: &str) -> Result<AttemptOutcome, ProverError> {
        fs::create_dir_all(&self.config.scratch_dir)?;
        let path = self.config.scratch_dir.join(file_name);
        fs::write(&path, contents)?;

        let (program, args) = self
            .config
            .command
            .split_first()
            .ok_or_else(|| ProverError::BackendUnavailable {
                detail: "prover command is empty".into(),
            })?;
        let stdout_path = path.with_extension("stdout");
        let stderr_path = path.with_extension("stderr");
        let mut child = Command::new(program)
            .args(args)
            .arg(&path)
            .stdin(Stdio::null())
            .stdout(fs::File::create(&stdout_path)?)
            .stderr(fs::File::create(&stderr_path)?)
            .spawn()
            .map_err(|e| ProverError::BackendUnavailable {
                detail: format!("failed to spawn `{program}`: {e}"),
            })?;

        let deadline = Instant::now() + self.config.timeout;
        loop {
            if let Some(status) = child.try_wait()? {
                if status.success() {
                    return Ok(AttemptOutcome::Proved);
                }
                let stderr = fs::read_to_string(&stderr_path).unwrap_or_default();
                let tail: String = stderr.lines().rev().take(3).collect::<Vec<_>>().join(" | ");
                return Ok(AttemptOutcome::NotProved(format!(
                    "exit {}{}",
                    status.code().map_or("signal".to_owned(), |c| c.to_string()),
                    if tail.is_empty() {
                        String::new()
                    } else {
                        format!(": {tail}")
                    }
                )));
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Ok(AttemptOutcome::TimedOut);
            }
            std::thread::sleep(Duration::from_millis(10));
        }
    }
}

impl ProverBackend for LeanBackend {
    fn decide(&self, prop: &Proposition) -> Result<Verdict, ProverError> {
        let PropBody::Lean {
            preamble,
            statement,
        } = &prop.body
        else {
            return Err(ProverError::DialectMismatch {
                spec: Dialect::Mini,
                backend: "lean",
            });
        };
        let _permit = self.pool.acquire();
        let serial = self.counter.fetch_add(1, Ordering::Relaxed);
        let base = format!("check_{}_{serial}", sanitize_id(&prop.test_id));

        let phi_file = theorem_file(preamble, &base, statement, &self.config.tactic);
        let phi = self.run_attempt(&format!("{base}.lean"), &phi_file)?;
        if let AttemptOutcome::Proved = phi {
            return Ok(Verdict::new(VerdictTag::ProvedTrue, "proposition proved"));
        }

        let neg_file = theorem_file(
            preamble,
            &format!("{base}_neg"),
            &format!("¬ ({statement})"),
            &self.config.tactic,
        );
        let neg = self.run_attempt(&format!("{base}_neg.lean"), &neg_file)?;
        if let AttemptOutcome::Proved = neg {
            return Ok(Verdict::new(VerdictTag::ProvedFalse, "negation proved"));
        }

        let describe = |outcome: &AttemptOutcome| match outcome {
            AttemptOutcome::Proved => "proved".to_owned(),
            AttemptOutcome::NotProved(detail) => detail.clone(),
            AttemptOutcome::TimedOut => "timed out".to_owned(),
        };
        Ok(Verdict::new(
            VerdictTag::Unknown,
            format!(
                "inconclusive: proposition {}; negation {}",
                describe(&phi),
                describe(&neg)
            ),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Param, TestKind};

    fn mini_spec(pre: &str, post: &str) -> Specification {
        Specification {
            imports: String::new(),
            precond_aux: String::new(),
            precond: pre.into(),
            postcond_aux: String::new(),
            postcond: post.into(),
            dialect: Dialect::Mini,
        }
    }

    fn sig() -> FunctionSignature {
        FunctionSignature {
            function_name: "most_frequent".into(),
            input_params: vec![Param {
                name: "xs".into(),
                type_tag: "List Int".into(),
            }],
            output_type_tag: "Int".into(),
        }
    }

    fn freq_spec() -> Specification {
        mini_spec(
            "(gt (len xs) 0)",
            "(and (member y xs) (forall v xs (ge (count xs y) (count xs v))))",
        )
    }

    fn test_case(id: &str, kind: TestKind, xs: &[i64], output: Option<i64>) -> TestCase {
        TestCase {
            id: id.into(),
            kind,
            input: vec![Value::List(xs.iter().copied().map(Value::Int).collect())],
            output: output.map(Value::Int),
            description: String::new(),
        }
    }

    #[test]
    fn status_of_maps_all_three_verdicts() {
        let pass = Verdict::new(VerdictTag::ProvedTrue, "");
        let fail = Verdict::new(VerdictTag::ProvedFalse, "");
        let unknown = Verdict::new(VerdictTag::Unknown, "");
        assert_eq!(status_of(&pass), CheckStatus::Pass);
        assert_eq!(status_of(&fail), CheckStatus::Fail);
        assert_eq!(status_of(&unknown), CheckStatus::Unknown);
    }

    #[test]
    fn positive_proposition_conjoins_pre_and_post() {
        let test = test_case("t1", TestKind::Positive, &[1, 2, 2, 3], Some(2));
        let prop = instantiate_proposition(&freq_spec(), &test, &sig()).unwrap();
        assert_eq!(prop.kind, BaseKind::Positive);
        let verdict = MiniBackend::new().decide(&prop).unwrap();
        assert_eq!(verdict.tag, VerdictTag::ProvedTrue);
    }

    #[test]
    fn neg_input_proposition_negates_the_precondition() {
        let test = test_case("t2", TestKind::NegInput, &[], None);
        let prop = instantiate_proposition(&freq_spec(), &test, &sig()).unwrap();
        let verdict = MiniBackend::new().decide(&prop).unwrap();
        assert_eq!(verdict.tag, VerdictTag::ProvedTrue, "empty input violates the precondition");
    }

    #[test]
    fn neg_output_passes_only_when_the_post_rejects_the_output() {
        let spec = freq_spec();
        let accepted_wrong = test_case("t7", TestKind::NegOutput, &[1, 2], Some(2));
        let prop = instantiate_proposition(&spec, &accepted_wrong, &sig()).unwrap();
        let verdict = MiniBackend::new().decide(&prop).unwrap();
        assert_eq!(
            verdict.tag,
            VerdictTag::ProvedFalse,
            "a frequency-only postcondition accepts the tied wrong output"
        );

        let rejected_wrong = test_case("t8", TestKind::NegOutput, &[1, 2], Some(9));
        let prop = instantiate_proposition(&spec, &rejected_wrong, &sig()).unwrap();
        let verdict = MiniBackend::new().decide(&prop).unwrap();
        assert_eq!(verdict.tag, VerdictTag::ProvedTrue);
    }

    #[test]
    fn instantiation_rejects_bad_arity_and_missing_output() {
        let spec = freq_spec();
        let bad_arity = TestCase {
            input: vec![],
            ..test_case("t1", TestKind::Positive, &[1], Some(1))
        };
        assert!(matches!(
            instantiate_proposition(&spec, &bad_arity, &sig()),
            Err(ProverError::ArityMismatch { .. })
        ));
        let no_output = test_case("t1", TestKind::Positive, &[1], None);
        assert!(matches!(
            instantiate_proposition(&spec, &no_output, &sig()),
            Err(ProverError::MissingOutput { .. })
        ));
    }

    #[test]
    fn instantiation_rejects_unknown_variables() {
        let spec = mini_spec("(gt (len zs) 0)", "(eq y y)");
        let test = test_case("t1", TestKind::Positive, &[1], Some(1));
        assert!(matches!(
            instantiate_proposition(&spec, &test, &sig()),
            Err(ProverError::UnboundVariable { name, .. }) if name == "zs"
        ));
    }

    #[test]
    fn mini_backend_decides_complementary_pairs_consistently() {
        let spec = freq_spec();
        let test = test_case("t1", TestKind::Positive, &[5, 5, 1], Some(5));
        let prop = instantiate_proposition(&spec, &test, &sig()).unwrap();
        let backend = MiniBackend::new();
        assert_eq!(backend.decide(&prop).unwrap().tag, VerdictTag::ProvedTrue);

        let PropBody::Mini(expr) = &prop.body else { unreachable!() };
        let negated = Proposition {
            test_id: prop.test_id.clone(),
            kind: prop.kind,
            body: PropBody::Mini(Expr::Not(Box::new(expr.clone()))),
        };
        assert_eq!(
            backend.decide(&negated).unwrap().tag,
            VerdictTag::ProvedFalse,
            "at most one of a proposition and its negation can be proved"
        );
    }

    #[test]
    fn mini_backend_unknown_seams() {
        let spec = freq_spec();
        let test = test_case("t5", TestKind::Positive, &[1], Some(1));
        let prop = instantiate_proposition(&spec, &test, &sig()).unwrap();

        let forced = MiniBackend::forcing_unknown(vec!["t5".into()]);
        assert_eq!(forced.decide(&prop).unwrap().tag, VerdictTag::Unknown);

        let exhausted = MiniBackend {
            automation_budget: Some(0),
            ..MiniBackend::new()
        };
        assert_eq!(exhausted.decide(&prop).unwrap().tag, VerdictTag::Unknown);

        assert_eq!(
            MiniBackend::new().decide(&prop).unwrap().tag,
            VerdictTag::ProvedTrue
        );
    }

    #[test]
    fn ill_typed_proposition_is_an_error_not_a_verdict() {
        let spec = mini_spec("(gt xs 0)", "(eq y y)");
        let test = test_case("t1", TestKind::Positive, &[1], Some(1));
        let prop = instantiate_proposition(&spec, &test, &sig()).unwrap();
        assert!(matches!(
            MiniBackend::new().decide(&prop),
            Err(ProverError::IllTyped { .. })
        ));
    }

    #[test]
    fn validate_spec_enforces_mini_invariants() {
        assert!(validate_spec(&freq_spec()).is_ok());
        let with_imports = Specification {
            imports: "import Mathlib".into(),
            ..freq_spec()
        };
        assert!(matches!(
            validate_spec(&with_imports),
            Err(ProverError::SpecInvalid { .. })
        ));
        let unparseable = mini_spec("(gt (len xs 0)", "(eq y y)");
        assert!(matches!(
            validate_spec(&unparseable),
            Err(ProverError::Parse { .. })
        ));
    }

    #[test]
    fn literal_rendering_by_type_tag() {
        let xs = Value::List(vec![Value::Int(1), Value::Int(-2)]);
        assert_eq!(render_literal(&xs, "List Int").unwrap(), "[1, (-2 : Int)]");
        assert_eq!(render_literal(&Value::Int(3), "Nat").unwrap(), "3");
        assert!(render_literal(&Value::Int(-3), "Nat").is_err());
        assert_eq!(
            render_literal(&Value::Text("a\"b".into()), "String").unwrap(),
            r#""a\"b""#
        );
        let nested = Value::List(vec![Value::List(vec![Value::Int(1)])]);
        assert_eq!(
            render_literal(&nested, "List (List Int)").unwrap(),
            "[[1]]"
        );
        assert!(render_literal(&Value::Bool(true), "Int").is_err());
    }

    #[test]
    fn lean_render_produces_a_complete_theorem_file() {
        let spec = Specification {
            imports: "import Mathlib".into(),
            precond_aux: String::new(),
            precond: "fun (xs : List Int) => xs.length > 0".into(),
            postcond_aux: "@[reducible, simp]\ndef maxFreq (xs : List Int) : Nat := (xs.map (xs.count ·)).foldl max 0".into(),
            postcond: "fun (xs : List Int) (y : Int) => xs.count y = maxFreq xs".into(),
            dialect: Dialect::Lean,
        };
        let test = test_case("t1", TestKind::Positive, &[1, 2, 2], Some(2));
        let file = lean_render(&spec, &test, &sig(), "grind").unwrap();
        let expected = "import Mathlib\n\n@[reducible, simp]\ndef maxFreq (xs : List Int) : Nat := (xs.map (xs.count ·)).foldl max 0\n\ntheorem check_t1 : ((fun (xs : List Int) => xs.length > 0) [1, 2, 2]) ∧ ((fun (xs : List Int) (y : Int) => xs.count y = maxFreq xs) [1, 2, 2] 2) := by\n  grind\n";
        assert_eq!(file, expected);
    }

    #[test]
    fn lean_backend_maps_exit_codes_and_timeouts() {
        let scratch = tempfile::tempdir().unwrap();
        let lean_prop = |id: &str| Proposition {
            test_id: id.into(),
            kind: BaseKind::Positive,
            body: PropBody::Lean {
                preamble: String::new(),
                statement: "True".into(),
            },
        };
        let backend_with = |script: &str, timeout: Duration| {
            LeanBackend::new(LeanBackendConfig {
                command: vec!["sh".into(), "-c".into(), script.into(), "sh".into()],
                tactic: "grind".into(),
                timeout,
                scratch_dir: scratch.path().to_path_buf(),
                pool_size: 2,
            })
        };

        let proved = backend_with("exit 0", Duration::from_secs(5));
        assert_eq!(
            proved.decide(&lean_prop("a")).unwrap().tag,
            VerdictTag::ProvedTrue
        );

        let refuted = backend_with(
            r#"case "$1" in *_neg.lean) exit 0;; *) exit 1;; esac"#,
            Duration::from_secs(5),
        );
        assert_eq!(
            refuted.decide(&lean_prop("b")).unwrap().tag,
            VerdictTag::ProvedFalse
        );

        let inconclusive = backend_with("exit 1", Duration::from_secs(5));
        assert_eq!(
            inconclusive.decide(&lean_prop("c")).unwrap().tag,
            VerdictTag::Unknown
        );

        let hanging = backend_with("sleep 30", Duration::from_millis(200));
        let verdict = hanging.decide(&lean_prop("d")).unwrap();
        assert_eq!(verdict.tag, VerdictTag::Unknown);
        assert!(verdict.diagnostics.contains("timed out"));

        let missing = LeanBackend::new(LeanBackendConfig::new(
            vec!["/nonexistent/prover".into()],
            scratch.path().to_path_buf(),
        ));
        assert!(matches!(
            missing.decide(&lean_prop("e")),
            Err(ProverError::BackendUnavailable { .. })
        ));
    }

    #[test]
    fn lean_proposition_against_mini_backend_is_a_dialect_mismatch() {
        let prop = Proposition {
            test_id: "t1".into(),
            kind: BaseKind::Positive,
            body: PropBody::Lean {
                preamble: String::new(),
                statement: "True".into(),
            },
        };
        assert!(matches!(
            MiniBackend::new().decide(&prop),
            Err(ProverError::DialectMismatch { .. })
        ));
    }
}
