//! Replay backend: completions come from a pre-recorded JSONL script.
//!
//! Each script line is one reply, keyed by task and a per-task ordinal.
//! Replies for a task are consumed strictly in ordinal order; running past
//! the end of a task's queue is a hard error so replays never silently
//! improvise.

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatMessage, Completion, CompletionBackend, CompletionParams, GatewayError, TaskKind};

/// One scripted reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRecord {
    pub task: TaskKind,
    pub ordinal: u64,
    pub response_text: String,
}

/// Serves scripted replies in ordinal order, one queue per task.
pub struct ScriptedBackend {
    queues: Mutex<BTreeMap<TaskKind, Queue>>,
}

#[derive(Debug, Default)]
struct Queue {
    pending: VecDeque<String>,
    consumed: u64,
}

impl ScriptedBackend {
    /// Builds a backend from script records, validating that each task's
    /// ordinals are exactly `0..n` with no gaps or duplicates.
    pub fn new(records: Vec<ScriptRecord>) -> Result<Self, GatewayError> {
        let mut per_task: BTreeMap<TaskKind, Vec<(u64, String)>> = BTreeMap::new();
        for record in records {
            per_task
                .entry(record.task)
                .or_default()
                .push((record.ordinal, record.response_text));
        }
        let mut queues = BTreeMap::new();
        for (task, mut replies) in per_task {
            replies.sort_by_key(|(ordinal, _)| *ordinal);
            for (expected, (ordinal, _)) in replies.iter().enumerate() {
                if *ordinal != expected as u64 {
                    return Err(GatewayError::ScriptInvalid {
                        detail: format!(
                            "task {} expects ordinal {expected} but found {ordinal}",
                            task.label()
                        ),
                    });
                }
            }
            let pending = replies.into_iter().map(|(_, text)| text).collect();
            queues.insert(
                task,
                Queue {
                    pending,
                    consumed: 0,
                },
            );
        }
        Ok(ScriptedBackend {
            queues: Mutex::new(queues),
        })
    }

    /// Parses a JSONL script, one [`ScriptRecord`] per non-empty line.
    pub fn from_jsonl(text: &str) -> Result<Self, GatewayError> {
        let mut records = Vec::new();
        for (index, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ScriptRecord =
                serde_json::from_str(line).map_err(|e| GatewayError::ScriptInvalid {
                    detail: format!("line {}: {e}", index + 1),
                })?;
            records.push(record);
        }
        Self::new(records)
    }

    pub fn from_path(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::ScriptInvalid {
            detail: format!("{}: {e}", path.display()),
        })?;
        Self::from_jsonl(&text)
    }

    /// Replies remaining across all tasks.
    pub fn remaining(&self) -> usize {
        let queues = self.queues.lock().expect("script mutex is never poisoned");
        queues.values().map(|queue| queue.pending.len()).sum()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(
        &self,
        task: TaskKind,
        _messages: &[ChatMessage],
        _params: &CompletionParams,
    ) -> Result<Completion, GatewayError> {
        let mut queues = self.queues.lock().expect("script mutex is never poisoned");
        let queue = queues.entry(task).or_default();
        match queue.pending.pop_front() {
            Some(text) => {
                queue.consumed += 1;
                Ok(Completion {
                    text,
                    truncated: false,
                })
            }
            None => Err(GatewayError::ScriptExhausted {
                task: task.label(),
                consumed: queue.consumed,
            }),
        }
    }
}
