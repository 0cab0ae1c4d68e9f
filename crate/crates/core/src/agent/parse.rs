//! The Thought / Action / Action Input / Final Answer block grammar.
//!
//! ```text
//! Thought: <free text, may span lines>
//! Action: <tool name>
//! Action Input: <input>
//! ```
//! or
//! ```text
//! Thought: <free text>
//! Final Answer: <answer>
//! ```
//!
//! The `Thought:` prefix is optional because prompts end with a dangling
//! `Thought:` that the model continues. Only the first complete block is
//! honored; anything after it (typically an invented `Observation:`) is
//! dropped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParsedCompletion {
    Action {
        thought: String,
        action: String,
        action_input: String,
    },
    FinalAnswer {
        thought: String,
        answer: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no `Action:` or `Final Answer:` line")]
    NoMarkers,
    #[error("`Action:` line without a following `Action Input:` line")]
    MissingActionInput,
    #[error("completion ended right after `{0}`")]
    Truncated(&'static str),
}

const THOUGHT: &str = "Thought:";
const ACTION: &str = "Action:";
const ACTION_INPUT: &str = "Action Input:";
const FINAL_ANSWER: &str = "Final Answer:";
const OBSERVATION: &str = "Observation:";

fn is_marker(line: &str) -> bool {
    let line = line.trim_start();
    [THOUGHT, ACTION, ACTION_INPUT, FINAL_ANSWER, OBSERVATION]
        .iter()
        .any(|m| line.starts_with(m))
}

/// Value of a marker line plus any continuation lines up to the next marker.
fn field_value(lines: &[&str], at: usize, marker: &str) -> (String, usize) {
    let first = lines[at].trim_start()[marker.len()..].to_string();
    let mut parts = vec![first];
    let mut next = at + 1;
    while next < lines.len() && !is_marker(lines[next]) {
        parts.push(lines[next].to_string());
        next += 1;
    }
    (parts.join("\n").trim().to_string(), next)
}

fn thought_before(lines: &[&str]) -> String {
    match lines.iter().rposition(|l| l.trim_start().starts_with(THOUGHT)) {
        Some(i) => field_value(lines, i, THOUGHT).0,
        None => lines.join("\n").trim().to_string(),
    }
}

pub fn parse_action(completion: &str) -> Result<ParsedCompletion, ParseError> {
    let lines: Vec<&str> = completion.lines().collect();
    let marker_at = lines.iter().position(|l| {
        let l = l.trim_start();
        l.starts_with(ACTION) || l.starts_with(FINAL_ANSWER)
    });
    let Some(at) = marker_at else {
        return Err(ParseError::NoMarkers);
    };
    let thought = thought_before(&lines[..at]);

    if lines[at].trim_start().starts_with(FINAL_ANSWER) {
        let (answer, _) = field_value(&lines, at, FINAL_ANSWER);
        if answer.is_empty() {
            return Err(ParseError::Truncated(FINAL_ANSWER));
        }
        return Ok(ParsedCompletion::FinalAnswer { thought, answer });
    }

    let action = lines[at].trim_start()[ACTION.len()..].trim().to_string();
    if action.is_empty() {
        return Err(ParseError::Truncated(ACTION));
    }
    let input_at = lines[at + 1..]
        .iter()
        .position(|l| !l.trim().is_empty())
        .map(|offset| at + 1 + offset)
        .filter(|&i| lines[i].trim_start().starts_with(ACTION_INPUT))
        .ok_or(ParseError::MissingActionInput)?;
    let (action_input, _) = field_value(&lines, input_at, ACTION_INPUT);
    Ok(ParsedCompletion::Action {
        thought,
        action,
        action_input,
    })
}

/// Inverse of [`parse_action`] for single-line field values.
pub fn serialize_completion(parsed: &ParsedCompletion) -> String {
    match parsed {
        ParsedCompletion::Action {
            thought,
            action,
            action_input,
        } => format!("{THOUGHT} {thought}\n{ACTION} {action}\n{ACTION_INPUT} {action_input}"),
        ParsedCompletion::FinalAnswer { thought, answer } => format!("{THOUGHT} {thought}\n{FINAL_ANSWER} {answer}"),
    }
}
