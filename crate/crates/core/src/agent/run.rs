use super::{
    parse_action, render_prompt, AgentConfig, AgentError, AgentStep, AgentTranscript, ParsedCompletion, StepKind,
    TerminationReason, ToolRegistry, FINAL_ANSWER_ACTION,
};
use crate::llm::{CompletionBackend, CompletionRequest};

pub const CORRECTIVE_OBSERVATION: &str = "Invalid format; respond with Thought/Action/Action Input or Final Answer.";

const MAX_FAILED_THOUGHT_CHARS: usize = 300;

fn one_line(text: &str, limit: usize) -> String {
    let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
    flat.chars().take(limit).collect()
}

/// Run the think / act / observe loop until a final answer, the step limit
/// or too many consecutive unparseable completions.
///
/// Tool failures, unknown tools and malformed completions are recorded as
/// observations. Only an empty registry is reported as an error.
pub fn run_loop(
    config: &AgentConfig,
    registry: &mut ToolRegistry<'_>,
    llm: &dyn CompletionBackend,
    question: &str,
) -> Result<AgentTranscript, AgentError> {
    if registry.is_empty() {
        return Err(AgentError::EmptyRegistry);
    }
    let mut steps: Vec<AgentStep> = Vec::new();
    let mut consecutive_failures = 0;
    let finish = |steps, reason, final_answer, backend_error| AgentTranscript {
        question: question.to_string(),
        steps,
        final_answer,
        terminated_reason: reason,
        backend_error,
    };

    while steps.len() < config.max_steps {
        let index = steps.len();
        let prompt = render_prompt(config, registry, question, &steps);
        let request = CompletionRequest::user_prompt(config.model.clone(), prompt);
        let completion = match llm.complete(&request) {
            Ok(c) => c,
            Err(e) => {
                tracing::error!(step = index, error = %e, "completion backend failed");
                return Ok(finish(steps, TerminationReason::BackendError, None, Some(e.to_string())));
            }
        };

        match parse_action(&completion) {
            Ok(ParsedCompletion::FinalAnswer { thought, answer }) => {
                steps.push(AgentStep {
                    index,
                    kind: StepKind::FinalAnswer,
                    thought,
                    action: FINAL_ANSWER_ACTION.into(),
                    action_input: answer.clone(),
                    observation: String::new(),
                });
                return Ok(finish(steps, TerminationReason::FinalAnswer, Some(answer), None));
            }
            Ok(ParsedCompletion::Action {
                thought,
                action,
                action_input,
            }) => {
                consecutive_failures = 0;
                let (kind, observation) = match registry.call(&action, &action_input) {
                    None => (
                        StepKind::UnknownTool,
                        format!("ERROR: unknown tool `{action}`; available tools: {}", registry.names().join(", ")),
                    ),
                    Some(Err(e)) => (StepKind::ToolError, format!("ERROR: {e:#}")),
                    Some(Ok(out)) if out.trim().is_empty() => (StepKind::ToolCall, "(no output)".to_string()),
                    Some(Ok(out)) => (StepKind::ToolCall, out),
                };
                tracing::info!(step = index, tool = %action, ?kind, "agent step");
                steps.push(AgentStep {
                    index,
                    kind,
                    thought,
                    action,
                    action_input,
                    observation,
                });
            }
            Err(e) => {
                consecutive_failures += 1;
                tracing::warn!(step = index, error = %e, "unparseable completion");
                steps.push(AgentStep {
                    index,
                    kind: StepKind::ParseFailure,
                    thought: one_line(&completion, MAX_FAILED_THOUGHT_CHARS),
                    action: String::new(),
                    action_input: String::new(),
                    observation: CORRECTIVE_OBSERVATION.into(),
                });
                if consecutive_failures >= config.max_consecutive_parse_failures {
                    return Ok(finish(steps, TerminationReason::ParseFailureLimit, None, None));
                }
            }
        }
    }
    Ok(finish(steps, TerminationReason::MaxSteps, None, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::ToolSpec;
    use crate::llm::{RecordingBackend, ReplayBackend};

    const PIPELINE: [&str; 5] = [
        "search_and_save_news",
        "summarize_news",
        "extract_spatial_data",
        "extract_temporal_data",
        "visualize_results",
    ];

    fn pipeline_registry<'a>(log: &'a std::cell::RefCell<Vec<String>>) -> ToolRegistry<'a> {
        let mut registry = ToolRegistry::new();
        for name in PIPELINE {
            let spec = ToolSpec::new(name, format!("runs {name}"), "free text").unwrap();
            registry
                .register(spec, move |input: &str| {
                    log.borrow_mut().push(format!("{name}({input})"));
                    Ok(format!("{name} done"))
                })
                .unwrap();
        }
        registry
    }

    fn action(tool: &str, input: &str) -> String {
        format!("Thought: next is {tool}\nAction: {tool}\nAction Input: {input}")
    }

    #[test]
    fn immediate_final_answer_is_one_step() {
        let log = Default::default();
        let mut registry = pipeline_registry(&log);
        let llm = ReplayBackend::sequence(["Thought: trivial\nFinal Answer: nothing to do"]);
        let t = run_loop(&AgentConfig::default(), &mut registry, &llm, "Q").unwrap();
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.terminated_reason, TerminationReason::FinalAnswer);
        assert_eq!(t.final_answer.as_deref(), Some("nothing to do"));
        assert!(t.steps[0].observation.is_empty());
    }

    #[test]
    fn five_tool_pipeline_then_final_answer() {
        let log = Default::default();
        let mut registry = pipeline_registry(&log);
        let mut script: Vec<String> = PIPELINE.iter().map(|t| action(t, "Alzheimer's disease")).collect();
        script.push("Thought: all plots exist\nFinal Answer: plots saved".into());
        let llm = ReplayBackend::sequence(script);
        let t = run_loop(&AgentConfig::default(), &mut registry, &llm, "Q").unwrap();
        assert_eq!(t.steps.len(), 6);
        assert_eq!(t.terminated_reason, TerminationReason::FinalAnswer);
        let actions: Vec<&str> = t.steps.iter().map(|s| s.action.as_str()).collect();
        assert_eq!(&actions[..5], &PIPELINE);
        assert_eq!(actions[5], FINAL_ANSWER_ACTION);
        assert_eq!(log.borrow().len(), 5);
        assert!(t.steps[..5].iter().all(|s| !s.observation.is_empty()));
    }

    #[test]
    fn garbage_hits_parse_failure_limit_after_exactly_three_attempts() {
        let log = Default::default();
        let mut registry = pipeline_registry(&log);
        let llm = RecordingBackend::new(ReplayBackend::sequence(vec!["I think we should search"; 10]));
        let t = run_loop(&AgentConfig::default(), &mut registry, &llm, "Q").unwrap();
        assert_eq!(t.terminated_reason, TerminationReason::ParseFailureLimit);
        assert_eq!(llm.calls(), 3);
        assert_eq!(t.steps.len(), 3);
        assert!(t.steps.iter().all(|s| s.observation == CORRECTIVE_OBSERVATION));
    }

    #[test]
    fn parse_failures_reset_after_a_good_step() {
        let log = Default::default();
        let mut registry = pipeline_registry(&log);
        let llm = ReplayBackend::sequence([
            "garbage".to_string(),
            "garbage".to_string(),
            action("summarize_news", "x"),
            "garbage".to_string(),
            "Final Answer: ok".to_string(),
        ]);
        let t = run_loop(&AgentConfig::default(), &mut registry, &llm, "Q").unwrap();
        assert_eq!(t.terminated_reason, TerminationReason::FinalAnswer);
        assert_eq!(t.steps.len(), 5);
    }

    #[test]
    fn unknown_tool_is_fed_back_and_the_loop_continues() {
        let log = Default::default();
        let mut registry = pipeline_registry(&log);
        let llm = ReplayBackend::sequence([action("google_search", "x"), "Thought: ok\nFinal Answer: done".to_string()]);
        let t = run_loop(&AgentConfig::default(), &mut registry, &llm, "Q").unwrap();
        assert!(t.steps[0].observation.starts_with("ERROR: unknown tool"));
        assert_eq!(t.steps[0].kind, StepKind::UnknownTool);
        assert_eq!(t.terminated_reason, TerminationReason::FinalAnswer);
    }

    #[test]
    fn tool_errors_become_error_observations() {
        let mut registry = ToolRegistry::new();
        registry
            .register(ToolSpec::new("boom", "fails", "-").unwrap(), |_: &str| -> anyhow::Result<String> {
                anyhow::bail!("disk full")
            })
            .unwrap();
        let llm = ReplayBackend::sequence([action("boom", ""), "Final Answer: gave up".to_string()]);
        let t = run_loop(&AgentConfig::default(), &mut registry, &llm, "Q").unwrap();
        assert_eq!(t.steps[0].observation, "ERROR: disk full");
        assert_eq!(t.steps[0].kind, StepKind::ToolError);
    }

    #[test]
    fn step_count_never_exceeds_max_steps() {
        let log = Default::default();
        let mut registry = pipeline_registry(&log);
        let llm = ReplayBackend::sequence(vec![action("summarize_news", "again"); 50]);
        let config = AgentConfig {
            max_steps: 4,
            ..AgentConfig::default()
        };
        let t = run_loop(&config, &mut registry, &llm, "Q").unwrap();
        assert_eq!(t.steps.len(), 4);
        assert_eq!(t.terminated_reason, TerminationReason::MaxSteps);
    }

    #[test]
    fn backend_failure_is_recorded_not_propagated() {
        let log = Default::default();
        let mut registry = pipeline_registry(&log);
        let llm = ReplayBackend::sequence([action("summarize_news", "x")]);
        let t = run_loop(&AgentConfig::default(), &mut registry, &llm, "Q").unwrap();
        assert_eq!(t.terminated_reason, TerminationReason::BackendError);
        assert_eq!(t.steps.len(), 1);
        assert!(t.backend_error.unwrap().contains("no replay entry"));
    }

    #[test]
    fn empty_registry_is_a_configuration_error() {
        let mut registry = ToolRegistry::new();
        let llm = ReplayBackend::sequence(["Final Answer: x"]);
        assert!(matches!(
            run_loop(&AgentConfig::default(), &mut registry, &llm, "Q"),
            Err(AgentError::EmptyRegistry)
        ));
    }

    #[test]
    fn replay_runs_are_bit_deterministic() {
        let run = || {
            let log = Default::default();
            let mut registry = pipeline_registry(&log);
            let mut script: Vec<String> = PIPELINE.iter().map(|t| action(t, "q")).collect();
            script.insert(2, "nonsense".into());
            script.push("Final Answer: done".into());
            let llm = RecordingBackend::new(ReplayBackend::sequence(script));
            let t = run_loop(&AgentConfig::default(), &mut registry, &llm, "Q").unwrap();
            (t.to_jsonl(), llm.requests())
        };
        assert_eq!(run(), run());
    }
}
