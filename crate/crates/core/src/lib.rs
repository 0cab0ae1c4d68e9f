//! Autonomous health-news surveillance pipeline.
//!
//! A ReAct-style agent plans over a small tool library to collect news
//! articles, summarize them with map-reduce LLM calls, extract places and
//! publication dates, fit an LDA topic model over the summaries and render
//! trend charts.
//!
//! Every stage is usable on its own:
//!
//! * [`agent`]: prompt rendering, action grammar, tool registry and loop.
//! * [`llm`]: completion backends (OpenAI-compatible HTTP and replay).
//! * [`ingest`]: source crawling, boilerplate removal, date extraction, store.
//! * [`summarize`]: token-budgeted chunking and map-reduce summaries.
//! * [`geoparse`]: toponym recognition and gazetteer resolution.
//! * [`topic_model`]: collapsed Gibbs LDA.
//! * [`trends`]: monthly counts, keyword trends and SVG/CSV emitters.
//! * [`pipeline`]: run configuration, stages and the agent tool wiring.

pub mod agent;
pub mod clock;
pub mod geoparse;
pub mod ingest;
pub mod llm;
pub mod net;
pub mod pipeline;
pub mod summarize;
pub mod topic_model;
pub mod trends;

pub use agent::{AgentConfig, AgentStep, AgentTranscript, ParsedCompletion, TerminationReason, ToolRegistry, ToolSpec};
pub use clock::{Clock, ManualClock, SystemClock};
pub use geoparse::{Gazetteer, GazetteerEntry, PlaceMention};
pub use ingest::{Article, ArticleStore, FetchRecord, FetchStatus, NewsSource};
pub use llm::{estimate_tokens, ChatMessage, CompletionBackend, CompletionRequest, LlmError, Role};
pub use pipeline::{Pipeline, PipelineError, RunConfig, RunReport, Stage};
pub use summarize::{ArticleSummary, ChunkPlan};
pub use topic_model::{Corpus, LdaConfig, LdaModel};
pub use trends::{MonthlyCount, TrendKind, TrendSeries, YearMonth};
