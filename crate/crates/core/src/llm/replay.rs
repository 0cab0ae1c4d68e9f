use std::collections::{HashMap, VecDeque};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatMessage, CompletionBackend, CompletionRequest, LlmError};

/// SHA-256 over the JSON encoding of the message list, hex encoded.
pub fn request_key(messages: &[ChatMessage]) -> String {
    let encoded = serde_json::to_vec(messages).expect("chat messages always serialize");
    hex::encode(Sha256::digest(&encoded))
}

/// One line of a replay script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    /// Request digest. Empty means "any request" in strict-sequence mode.
    #[serde(default)]
    pub key: String,
    pub completion: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayMode {
    /// Entries are served in file order, each exactly once.
    StrictSequence,
    /// Entries are looked up by request digest.
    Keyed,
}

impl std::str::FromStr for ReplayMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict_sequence" | "strict-sequence" | "sequence" => Ok(Self::StrictSequence),
            "keyed" => Ok(Self::Keyed),
            other => Err(format!("unknown replay mode `{other}` (expected keyed or strict_sequence)")),
        }
    }
}

/// Serves recorded completions. Holds no transport, so it cannot reach the
/// network.
#[derive(Debug)]
pub struct ReplayBackend {
    mode: ReplayMode,
    state: Mutex<ReplayState>,
}

#[derive(Debug)]
enum ReplayState {
    Sequence(VecDeque<ReplayEntry>),
    // Repeated keys are served in order; the last one sticks.
    Keyed(HashMap<String, VecDeque<String>>),
}

impl ReplayBackend {
    pub fn new(entries: Vec<ReplayEntry>, mode: ReplayMode) -> Self {
        let state = match mode {
            ReplayMode::StrictSequence => ReplayState::Sequence(entries.into()),
            ReplayMode::Keyed => {
                let mut map: HashMap<String, VecDeque<String>> = HashMap::new();
                for entry in entries {
                    map.entry(entry.key).or_default().push_back(entry.completion);
                }
                ReplayState::Keyed(map)
            }
        };
        Self {
            mode,
            state: Mutex::new(state),
        }
    }

    /// Strict-sequence script from bare completions.
    pub fn sequence<I, S>(completions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries = completions
            .into_iter()
            .map(|c| ReplayEntry {
                key: String::new(),
                completion: c.into(),
            })
            .collect();
        Self::new(entries, ReplayMode::StrictSequence)
    }

    pub fn load(path: impl AsRef<Path>, mode: ReplayMode) -> Result<Self, LlmError> {
        Ok(Self::new(read_entries(path)?, mode))
    }

    pub fn mode(&self) -> ReplayMode {
        self.mode
    }

    /// Entries not yet consumed (strict-sequence mode only; keyed reports 0).
    pub fn remaining(&self) -> usize {
        match &*self.state.lock().unwrap() {
            ReplayState::Sequence(queue) => queue.len(),
            ReplayState::Keyed(_) => 0,
        }
    }
}

pub fn read_entries(path: impl AsRef<Path>) -> Result<Vec<ReplayEntry>, LlmError> {
    let file = fs::File::open(path.as_ref())?;
    let mut entries = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ReplayEntry = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("replay line {}: {e}", lineno + 1))
        })?;
        entries.push(entry);
    }
    Ok(entries)
}

pub fn write_entries(path: impl AsRef<Path>, entries: &[ReplayEntry]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for entry in entries {
        serde_json::to_writer(&mut out, entry)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

impl CompletionBackend for ReplayBackend {
    fn dispatch(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let key = request_key(&request.messages);
        let mut state = self.state.lock().unwrap();
        match &mut *state {
            ReplayState::Sequence(queue) => match queue.front() {
                Some(entry) if entry.key.is_empty() || entry.key == key => {
                    Ok(queue.pop_front().expect("front exists").completion)
                }
                _ => Err(LlmError::ReplayMiss { key }),
            },
            ReplayState::Keyed(map) => {
                let queue = map.get_mut(&key).ok_or_else(|| LlmError::ReplayMiss { key: key.clone() })?;
                if queue.len() > 1 {
                    Ok(queue.pop_front().expect("non-empty"))
                } else {
                    queue.front().cloned().ok_or(LlmError::ReplayMiss { key })
                }
            }
        }
    }
}

/// Wraps a backend and keeps every request together with its completion.
///
/// The log doubles as an audit trail (budget checks, call counts) and as a
/// keyed replay script via [`RecordingBackend::replay_entries`].
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<(CompletionRequest, Result<String, String>)>>,
}

impl<B: CompletionBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.log.lock().unwrap().iter().map(|(r, _)| r.clone()).collect()
    }

    pub fn replay_entries(&self) -> Vec<ReplayEntry> {
        self.log
            .lock()
            .unwrap()
            .iter()
            .filter_map(|(request, result)| {
                result.as_ref().ok().map(|completion| ReplayEntry {
                    key: request_key(&request.messages),
                    completion: completion.clone(),
                })
            })
            .collect()
    }
}

impl<B: CompletionBackend> CompletionBackend for RecordingBackend<B> {
    fn dispatch(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let result = self.inner.dispatch(request);
        let logged = match &result {
            Ok(c) => Ok(c.clone()),
            Err(e) => Err(e.to_string()),
        };
        self.log.lock().unwrap().push((request.clone(), logged));
        result
    }
}
