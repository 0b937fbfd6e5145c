//! Output labeling oracles.
//!
//! An oracle is a black box mapping an input vector to the correct output.
//! It is consulted only for labels — never inspected for specification
//! content. Two forms exist: registered builtin functions, and external
//! commands fed one JSON request on stdin per call.

use std::collections::BTreeMap;
use std::io::Write;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::Deserialize;

use crate::model::{OracleRef, Value};

/// Default wall-clock budget for one external oracle call.
pub const DEFAULT_ORACLE_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("no builtin oracle named `{name}` is registered")]
    UnknownBuiltin { name: String },
    #[error("oracle crashed: {detail}")]
    Crash { detail: String },
    #[error("oracle timed out after {seconds} s")]
    Timeout { seconds: u64 },
}

type BuiltinFn = fn(&[Value]) -> Result<Value, OracleError>;

/// Resolves oracle references and executes label queries.
pub struct OracleRegistry {
    builtins: BTreeMap<String, BuiltinFn>,
    timeout: Duration,
}

impl Default for OracleRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl OracleRegistry {
    /// A registry pre-populated with the stock builtin oracles.
    pub fn with_builtins() -> Self {
        let mut registry = OracleRegistry {
            builtins: BTreeMap::new(),
            timeout: DEFAULT_ORACLE_TIMEOUT,
        };
        registry.register("most_frequent", most_frequent);
        registry.register("list_sum", list_sum);
        registry.register("identity", identity);
        registry
    }

    pub fn register(&mut self, name: &str, f: BuiltinFn) {
        self.builtins.insert(name.to_owned(), f);
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    /// Run-start check that a reference is servable: builtin names must be
    /// registered, command argv must be non-empty.
    pub fn resolve(&self, oracle: &OracleRef) -> Result<(), OracleError> {
        match oracle {
            OracleRef::Builtin(name) => {
                if self.builtins.contains_key(name) {
                    Ok(())
                } else {
                    Err(OracleError::UnknownBuiltin { name: name.clone() })
                }
            }
            OracleRef::Command(argv) => {
                if argv.is_empty() {
                    Err(OracleError::Crash {
                        detail: "command oracle has an empty argv".to_owned(),
                    })
                } else {
                    Ok(())
                }
            }
        }
    }

    /// `y := O(x⃗)` — labels one input vector.
    pub fn label(&self, oracle: &OracleRef, input: &[Value]) -> Result<Value, OracleError> {
        match oracle {
            OracleRef::Builtin(name) => {
                let f = self
                    .builtins
                    .get(name)
                    .ok_or_else(|| OracleError::UnknownBuiltin { name: name.clone() })?;
                f(input)
            }
            OracleRef::Command(argv) => self.run_command(argv, input),
        }
    }

    fn run_command(&self, argv: &[String], input: &[Value]) -> Result<Value, OracleError> {
        let (program, args) = argv.split_first().ok_or_else(|| OracleError::Crash {
            detail: "command oracle has an empty argv".to_owned(),
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| OracleError::Crash {
                detail: format!("failed to spawn {program}: {e}"),
            })?;

        let request = serde_json::json!({ "input": input }).to_string();
        if let Some(stdin) = child.stdin.take() {
            let mut stdin = stdin;
            // A fast-exiting oracle may close stdin first; the exit status
            // and stdout still decide the outcome.
            let _ = stdin.write_all(request.as_bytes());
            let _ = stdin.write_all(b"\n");
        }

        let deadline = Instant::now() + self.timeout;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) => {
                    if Instant::now() >= deadline {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(OracleError::Timeout {
                            seconds: self.timeout.as_secs(),
                        });
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(e) => {
                    return Err(OracleError::Crash {
                        detail: format!("wait failed: {e}"),
                    })
                }
            }
        };

        let mut stdout = String::new();
        if let Some(mut pipe) = child.stdout.take() {
            use std::io::Read;
            let _ = pipe.read_to_string(&mut stdout);
        }
        if !status.success() {
            return Err(OracleError::Crash {
                detail: format!("oracle exited with {status}"),
            });
        }

        #[derive(Deserialize)]
        struct Reply {
            output: Value,
        }
        let reply: Reply =
            serde_json::from_str(stdout.trim()).map_err(|e| OracleError::Crash {
                detail: format!("oracle reply is not an output record: {e}"),
            })?;
        Ok(reply.output)
    }
}

// ─────────────────────────── Builtins ───────────────────────────

/// Total order over values used only for deterministic tie-breaking:
/// ints < bools < texts < lists, each ordered within its own kind.
fn value_order(a: &Value, b: &Value) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    fn rank(v: &Value) -> u8 {
        match v {
            Value::Int(_) => 0,
            Value::Bool(_) => 1,
            Value::Text(_) => 2,
            Value::List(_) => 3,
        }
    }
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Bool(x), Value::Bool(y)) => x.cmp(y),
        (Value::Text(x), Value::Text(y)) => x.cmp(y),
        (Value::List(xs), Value::List(ys)) => {
            for (x, y) in xs.iter().zip(ys) {
                match value_order(x, y) {
                    Ordering::Equal => continue,
                    other => return other,
                }
            }
            xs.len().cmp(&ys.len())
        }
        _ => rank(a).cmp(&rank(b)),
    }
}

fn single_list(input: &[Value]) -> Result<&[Value], OracleError> {
    match input {
        [Value::List(items)] => Ok(items),
        _ => Err(OracleError::Crash {
            detail: "expected a single list argument".to_owned(),
        }),
    }
}

/// The element with the highest occurrence count; ties break to the smallest
/// element. Rejects empty lists.
fn most_frequent(input: &[Value]) -> Result<Value, OracleError> {
    let items = single_list(input)?;
    if items.is_empty() {
        return Err(OracleError::Crash {
            detail: "most_frequent is undefined on an empty list".to_owned(),
        });
    }
    let mut best: Option<(&Value, usize)> = None;
    for candidate in items {
        let count = items.iter().filter(|v| *v == candidate).count();
        let better = match best {
            None => true,
            Some((current, current_count)) => {
                count > current_count
                    || (count == current_count
                        && value_order(candidate, current) == std::cmp::Ordering::Less)
            }
        };
        if better {
            best = Some((candidate, count));
        }
    }
    Ok(best.expect("non-empty list has a best element").0.clone())
}

/// Sum of an integer list; empty lists sum to zero.
fn list_sum(input: &[Value]) -> Result<Value, OracleError> {
    let items = single_list(input)?;
    let mut total: i64 = 0;
    for item in items {
        match item {
            Value::Int(n) => total = total.wrapping_add(*n),
            _ => {
                return Err(OracleError::Crash {
                    detail: "list_sum expects integer elements".to_owned(),
                })
            }
        }
    }
    Ok(Value::Int(total))
}

/// Returns the sole argument unchanged.
fn identity(input: &[Value]) -> Result<Value, OracleError> {
    match input {
        [value] => Ok(value.clone()),
        _ => Err(OracleError::Crash {
            detail: "identity expects exactly one argument".to_owned(),
        }),
    }
}
