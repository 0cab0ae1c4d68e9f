//! ReAct-style agent: tool registry, prompt rendering and the step loop.

mod parse;
mod run;

pub use parse::{parse_action, serialize_completion, ParseError, ParsedCompletion};
pub use run::{run_loop, CORRECTIVE_OBSERVATION};

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::estimate_tokens;

/// Action name recorded for the terminal step.
pub const FINAL_ANSWER_ACTION: &str = "Final Answer";

/// Prompt template shipped with the crate.
pub const DEFAULT_PROMPT_TEMPLATE: &str = include_str!("../../prompts/agent.txt");

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("tool `{0}` is already registered")]
    DuplicateTool(String),
    #[error("invalid tool name `{0}`: names must be non-empty and contain no whitespace")]
    InvalidToolName(String),
    #[error("prompt template: {0}")]
    Template(String),
    #[error("tool registry is empty")]
    EmptyRegistry,
    #[error("transcript I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("transcript format: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub input_schema: String,
}

impl ToolSpec {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        input_schema: impl Into<String>,
    ) -> Result<Self, AgentError> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(AgentError::InvalidToolName(name));
        }
        Ok(Self {
            name,
            description: description.into(),
            input_schema: input_schema.into(),
        })
    }
}

/// A callable the agent can dispatch to. Errors become `ERROR: ...`
/// observations rather than aborting the loop.
pub trait ToolHandler {
    fn call(&mut self, input: &str) -> anyhow::Result<String>;
}

impl<F> ToolHandler for F
where
    F: FnMut(&str) -> anyhow::Result<String>,
{
    fn call(&mut self, input: &str) -> anyhow::Result<String> {
        self(input)
    }
}

/// Named tools in declaration order.
#[derive(Default)]
pub struct ToolRegistry<'a> {
    tools: Vec<(ToolSpec, Box<dyn ToolHandler + 'a>)>,
}

impl<'a> ToolRegistry<'a> {
    pub fn new() -> Self {
        Self { tools: Vec::new() }
    }

    pub fn register(&mut self, spec: ToolSpec, handler: impl ToolHandler + 'a) -> Result<&mut Self, AgentError> {
        if self.get(&spec.name).is_some() {
            return Err(AgentError::DuplicateTool(spec.name));
        }
        self.tools.push((spec, Box::new(handler)));
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().map(|(s, _)| s).find(|s| s.name == name)
    }

    pub fn specs(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tools.iter().map(|(s, _)| s)
    }

    pub fn names(&self) -> Vec<&str> {
        self.specs().map(|s| s.name.as_str()).collect()
    }

    /// `None` when no tool has that name.
    pub fn call(&mut self, name: &str, input: &str) -> Option<anyhow::Result<String>> {
        self.tools
            .iter_mut()
            .find(|(s, _)| s.name == name)
            .map(|(_, handler)| handler.call(input))
    }
}

/// A prompt template holding each of `{tools}`, `{tool_names}`,
/// `{question}` and `{history}` exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate(String);

const PLACEHOLDERS: [&str; 4] = ["tools", "tool_names", "question", "history"];

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, AgentError> {
        let text = text.into();
        for name in PLACEHOLDERS {
            let count = text.matches(&format!("{{{name}}}")).count();
            if count != 1 {
                return Err(AgentError::Template(format!(
                    "placeholder {{{name}}} must appear exactly once, found {count}"
                )));
            }
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Single-pass substitution, so placeholder-like text inside the values
    /// is never expanded again.
    pub fn expand(&self, tools: &str, tool_names: &str, question: &str, history: &str) -> String {
        let mut out = String::with_capacity(self.0.len() + tools.len() + question.len() + history.len());
        let mut rest = self.0.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let tail = &rest[open..];
            let hit = PLACEHOLDERS.iter().find(|name| {
                tail.len() > name.len() + 1 && tail[1..].starts_with(*name) && tail[1 + name.len()..].starts_with('}')
            });
            match hit {
                Some(name) => {
                    out.push_str(match *name {
                        "tools" => tools,
                        "tool_names" => tool_names,
                        "question" => question,
                        _ => history,
                    });
                    rest = &tail[name.len() + 2..];
                }
                None => {
                    out.push('{');
                    rest = &tail[1..];
                }
            }
        }
        out.push_str(rest);
        out
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(DEFAULT_PROMPT_TEMPLATE).expect("bundled template is valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub max_steps: usize,
    pub max_consecutive_parse_failures: usize,
    pub prompt_template: PromptTemplate,
    /// Oldest history steps are dropped until the prompt fits.
    pub prompt_budget_tokens: usize,
    pub model: String,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_steps: 15,
            max_consecutive_parse_failures: 3,
            prompt_template: PromptTemplate::default(),
            prompt_budget_tokens: 4096 - 512,
            model: "gpt-4".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    ToolCall,
    ToolError,
    UnknownTool,
    ParseFailure,
    FinalAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentStep {
    pub index: usize,
    pub kind: StepKind,
    pub thought: String,
    pub action: String,
    pub action_input: String,
    pub observation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    FinalAnswer,
    MaxSteps,
    ParseFailureLimit,
    /// The completion backend failed; the loop cannot continue.
    BackendError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub question: String,
    pub steps: Vec<AgentStep>,
    pub final_answer: Option<String>,
    pub terminated_reason: TerminationReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TranscriptRecord {
    Question {
        question: String,
    },
    Step(AgentStep),
    End {
        terminated_reason: TerminationReason,
        final_answer: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        backend_error: Option<String>,
    },
}

impl AgentTranscript {
    /// One JSON object per line: the question, each step, then the outcome.
    pub fn to_jsonl(&self) -> String {
        let mut records = vec![TranscriptRecord::Question {
            question: self.question.clone(),
        }];
        records.extend(self.steps.iter().cloned().map(TranscriptRecord::Step));
        records.push(TranscriptRecord::End {
            terminated_reason: self.terminated_reason,
            final_answer: self.final_answer.clone(),
            backend_error: self.backend_error.clone(),
        });
        let mut out = String::new();
        for record in &records {
            out.push_str(&serde_json::to_string(record).expect("transcript records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<(), AgentError> {
        let mut file = fs::File::create(path)?;
        file.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self, AgentError> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut question = None;
        let mut steps = Vec::new();
        let mut end = None;
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line)? {
                TranscriptRecord::Question { question: q } => question = Some(q),
                TranscriptRecord::Step(step) => steps.push(step),
                TranscriptRecord::End {
                    terminated_reason,
                    final_answer,
                    backend_error,
                } => end = Some((terminated_reason, final_answer, backend_error)),
            }
        }
        let (terminated_reason, final_answer, backend_error) =
            end.ok_or_else(|| AgentError::Template("transcript has no end record".into()))?;
        Ok(Self {
            question: question.unwrap_or_default(),
            steps,
            final_answer,
            terminated_reason,
            backend_error,
        })
    }
}

fn render_tools(registry: &ToolRegistry<'_>) -> String {
    registry
        .specs()
        .map(|s| format!("{}: {} Input: {}", s.name, s.description, s.input_schema))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_history(history: &[AgentStep]) -> String {
    let mut out = String::new();
    for step in history {
        match step.kind {
            StepKind::FinalAnswer => {
                out.push_str(&format!("Thought: {}\nFinal Answer: {}\n", step.thought, step.action_input));
            }
            StepKind::ParseFailure => {
                out.push_str(&format!("Thought: {}\nObservation: {}\n", step.thought, step.observation));
            }
            _ => out.push_str(&format!(
                "Thought: {}\nAction: {}\nAction Input: {}\nObservation: {}\n",
                step.thought, step.action, step.action_input, step.observation
            )),
        }
    }
    out
}

/// Expand the template. When the result exceeds the configured token
/// budget, the oldest history steps are dropped one at a time.
pub fn render_prompt(config: &AgentConfig, registry: &ToolRegistry<'_>, question: &str, history: &[AgentStep]) -> String {
    let tools = render_tools(registry);
    let names = registry.names().join(", ");
    let mut start = 0;
    loop {
        let prompt = config
            .prompt_template
            .expand(&tools, &names, question, &render_history(&history[start..]));
        if start == history.len() || estimate_tokens(&prompt) <= config.prompt_budget_tokens {
            return prompt;
        }
        start += 1;
    }
}
