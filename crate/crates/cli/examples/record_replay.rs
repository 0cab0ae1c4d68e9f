//! Regenerates `fixtures/replay.jsonl`.
//!
//! Runs the agent over the fixture site with a scripted stand-in model and
//! stores every completion keyed by its request. The stand-in plans the five
//! tools in order and summarizes by keeping the leading sentences.
//!
//!     cargo run -p infodemic-cli --example record_replay

use std::path::PathBuf;

use anyhow::{Context, Result};
use infodemic_core::clock::ManualClock;
use infodemic_core::llm::{write_entries, CompletionBackend, CompletionRequest, LlmError, RecordingBackend};
use infodemic_core::net::FixtureTransport;
use infodemic_core::pipeline::{Pipeline, RunConfig, TOOL_NAMES};
use infodemic_core::summarize::{DEFAULT_MAP_PROMPT, DEFAULT_REDUCE_PROMPT};

const QUESTION: &str = "Can you help me to know something new about Alzheimer's Disease and maybe draw some plots for me?";

const THOUGHTS: [(&str, &str); 5] = [
    ("I should start by collecting recent news about Alzheimer's disease.", "Alzheimer's disease"),
    ("The articles are saved. Next I need short summaries of them.", "all saved articles"),
    ("Now I want to know where the reported events happened.", "all saved articles"),
    ("I should check when the news was published and which topics keep coming up.", "all summaries"),
    ("I have everything needed to draw the plots the user asked for.", "map, monthly counts, topic streamgraphs"),
];

struct ScriptedModel;

fn slot<'a>(prompt: &'a str, template: &str) -> Option<&'a str> {
    let (prefix, suffix) = template.split_once("{text}")?;
    prompt.strip_prefix(prefix)?.strip_suffix(suffix)
}

fn leading_sentences(text: &str, n: usize) -> String {
    let mut out = Vec::new();
    let mut rest = text.trim();
    while out.len() < n && !rest.is_empty() {
        let end = rest
            .match_indices(['.', '!', '?'])
            .map(|(i, _)| i + 1)
            .find(|&i| rest[i..].is_empty() || rest[i..].starts_with(char::is_whitespace))
            .unwrap_or(rest.len());
        let sentence = rest[..end].trim();
        if !sentence.starts_with("Posted on") {
            out.push(sentence.split_whitespace().collect::<Vec<_>>().join(" "));
        }
        rest = rest[end..].trim_start();
    }
    out.join(" ")
}

fn agent_turn(prompt: &str) -> String {
    let history = prompt.rsplit_once("Begin!").map_or("", |(_, h)| h);
    let done = history.matches("\nObservation: ").count();
    if let Some((thought, input)) = THOUGHTS.get(done) {
        return format!("Thought: {thought}\nAction: {}\nAction Input: {input}", TOOL_NAMES[done]);
    }
    let topics = history
        .lines()
        .find_map(|l| l.split_once("Fitted ").map(|(_, t)| format!("I fitted {t}")))
        .unwrap_or_default();
    format!(
        "Thought: I now know the final answer\nFinal Answer: I collected and summarized recent Alzheimer's disease news from four sources, \
         located the places it mentions and counted articles per month. {topics} The map, the monthly chart and two keyword \
         streamgraphs are saved with their data as CSV files."
    )
}

impl CompletionBackend for ScriptedModel {
    fn dispatch(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let prompt = request.prompt_text();
        if prompt.contains("\nBegin!") {
            Ok(agent_turn(&prompt))
        } else if let Some(text) = slot(&prompt, DEFAULT_MAP_PROMPT) {
            Ok(leading_sentences(text, 3))
        } else if let Some(text) = slot(&prompt, DEFAULT_REDUCE_PROMPT) {
            Ok(leading_sentences(text, 4))
        } else {
            Err(LlmError::Protocol("scripted model does not recognize this prompt".into()))
        }
    }
}

fn main() -> Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let mut config = RunConfig::load(&fixtures.join("e2e.toml"))?;
    let scratch = tempfile::tempdir()?;
    config.data_dir = scratch.path().join("data");
    config.output_dir = scratch.path().join("output");
    let clock = ManualClock::new(config.frozen_time.context("e2e config must freeze time")?);
    let transport = FixtureTransport::open(config.fetch.fixture_dir.as_ref().context("fixture_dir")?)?;
    let model = RecordingBackend::new(ScriptedModel);

    let mut pipeline = Pipeline::new(config, &model, &transport, &clock)?;
    let report = pipeline.cmd_agent(QUESTION)?;
    anyhow::ensure!(
        report.terminated_reason == Some(infodemic_core::TerminationReason::FinalAnswer),
        "agent did not finish: {report:?}"
    );
    let out = fixtures.join("replay.jsonl");
    write_entries(&out, &model.replay_entries())?;
    println!("{} completions written to {}", model.calls(), out.display());
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
