use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{Corpus, LdaError};

/// Uniform doubles in `[0, 1)` from the top 53 bits of a `u64` draw.
///
/// Fixed so that sampler traces can be reproduced by any implementation of
/// ChaCha8 seeded through `seed_from_u64`.
pub trait UniformSource {
    fn next_unit(&mut self) -> f64;
}

impl<R: RngCore> UniformSource for R {
    fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaConfig {
    #[serde(rename = "k")]
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sweeps: usize,
    pub seed: u64,
    pub top_n: usize,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            topics: 5,
            alpha: 0.1,
            beta: 0.01,
            sweeps: 500,
            seed: 42,
            top_n: 5,
        }
    }
}

impl LdaConfig {
    pub fn validate(&self) -> Result<(), LdaError> {
        let bad = |m: String| Err(LdaError::InvalidConfig(m));
        if self.topics == 0 || self.topics > u16::MAX as usize {
            return bad(format!("k = {} must be between 1 and {}", self.topics, u16::MAX));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha = {} must be positive", self.alpha));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!("beta = {} must be positive", self.beta));
        }
        if self.sweeps == 0 {
            return bad("sweeps must be positive".into());
        }
        if self.top_n == 0 {
            return bad("top_n must be positive".into());
        }
        Ok(())
    }
}

/// Topic assignments and the count tables they induce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub config: LdaConfig,
    pub vocabulary: Vec<String>,
    pub z: Vec<Vec<u16>>,
    pub n_dk: Vec<Vec<u32>>,
    pub n_kw: Vec<Vec<u32>>,
    pub n_k: Vec<u32>,
    pub sweeps_done: usize,
}

/// One sequential scan over every token position. Each assignment is
/// removed from the counts, resampled from its full conditional and added
/// back.
pub fn gibbs_sweep(model: &mut LdaModel, corpus: &Corpus, rng: &mut impl UniformSource) {
    let k_count = model.config.topics;
    let (alpha, beta) = (model.config.alpha, model.config.beta);
    let v_beta = model.vocabulary.len() as f64 * beta;
    let mut cumulative = vec![0.0; k_count];
    for (d, doc) in corpus.documents.iter().enumerate() {
        for (i, &w) in doc.iter().enumerate() {
            let w = w as usize;
            let old = model.z[d][i] as usize;
            model.n_dk[d][old] -= 1;
            model.n_kw[old][w] -= 1;
            model.n_k[old] -= 1;

            let mut total = 0.0;
            for (k, slot) in cumulative.iter_mut().enumerate() {
                total += (model.n_dk[d][k] as f64 + alpha) * (model.n_kw[k][w] as f64 + beta)
                    / (model.n_k[k] as f64 + v_beta);
                *slot = total;
            }
            let u = rng.next_unit() * total;
            let new = cumulative.iter().position(|&c| u < c).unwrap_or(k_count - 1);

            model.z[d][i] = new as u16;
            model.n_dk[d][new] += 1;
            model.n_kw[new][w] += 1;
            model.n_k[new] += 1;
        }
    }
    model.sweeps_done += 1;
}

impl LdaModel {
    /// Assignments drawn uniformly from the seeded generator.
    pub fn initialize(corpus: &Corpus, config: &LdaConfig, rng: &mut impl UniformSource) -> Result<Self, LdaError> {
        config.validate()?;
        corpus.validate()?;
        if corpus.total_tokens() == 0 {
            return Err(LdaError::EmptyCorpus);
        }
        let k_count = config.topics;
        let v = corpus.vocab_size();
        let mut model = Self {
            config: config.clone(),
            vocabulary: corpus.vocabulary.clone(),
            z: Vec::with_capacity(corpus.len()),
            n_dk: vec![vec![0; k_count]; corpus.len()],
            n_kw: vec![vec![0; v]; k_count],
            n_k: vec![0; k_count],
            sweeps_done: 0,
        };
        for (d, doc) in corpus.documents.iter().enumerate() {
            let mut zd = Vec::with_capacity(doc.len());
            for &w in doc {
                let k = ((rng.next_unit() * k_count as f64) as usize).min(k_count - 1);
                zd.push(k as u16);
                model.n_dk[d][k] += 1;
                model.n_kw[k][w as usize] += 1;
                model.n_k[k] += 1;
            }
            model.z.push(zd);
        }
        Ok(model)
    }

    pub fn fit(corpus: &Corpus, config: &LdaConfig) -> Result<Self, LdaError> {
        Self::fit_with(corpus, config, |_, _| {})
    }

    /// Like [`LdaModel::fit`], calling `observe(sweep, model)` after every
    /// sweep (1-based).
    pub fn fit_with(
        corpus: &Corpus,
        config: &LdaConfig,
        mut observe: impl FnMut(usize, &LdaModel),
    ) -> Result<Self, LdaError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut model = Self::initialize(corpus, config, &mut rng)?;
        for sweep in 1..=config.sweeps {
            gibbs_sweep(&mut model, corpus, &mut rng);
            observe(sweep, &model);
        }
        Ok(model)
    }

    pub fn topics(&self) -> usize {
        self.config.topics
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn phi(&self, k: usize, w: usize) -> f64 {
        let beta = self.config.beta;
        (self.n_kw[k][w] as f64 + beta) / (self.n_k[k] as f64 + self.vocab_size() as f64 * beta)
    }

    pub fn phi_row(&self, k: usize) -> Vec<f64> {
        (0..self.vocab_size()).map(|w| self.phi(k, w)).collect()
    }

    pub fn doc_topics(&self, d: usize) -> Vec<f64> {
        let alpha = self.config.alpha;
        let len: u32 = self.n_dk[d].iter().sum();
        let denom = len as f64 + self.topics() as f64 * alpha;
        self.n_dk[d].iter().map(|&n| (n as f64 + alpha) / denom).collect()
    }

    /// The `n` most probable terms of topic `k`; equal weights sort by term.
    pub fn top_words(&self, k: usize, n: usize) -> Vec<(String, f64)> {
        let mut ranked: Vec<(String, f64)> = self
            .vocabulary
            .iter()
            .enumerate()
            .map(|(w, term)| (term.clone(), self.phi(k, w)))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(n);
        ranked
    }

    /// Share of all tokens assigned to each topic.
    pub fn topic_weights(&self) -> Vec<f64> {
        let total: u32 = self.n_k.iter().sum();
        self.n_k.iter().map(|&n| n as f64 / total.max(1) as f64).collect()
    }

    /// Topic indices by descending corpus share, ties by index.
    pub fn ranked_topics(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.topics()).collect();
        order.sort_by(|&a, &b| self.n_k[b].cmp(&self.n_k[a]).then(a.cmp(&b)));
        order
    }

    pub fn dominant_topic(&self, d: usize) -> usize {
        let row = &self.n_dk[d];
        (0..row.len()).max_by(|&a, &b| row[a].cmp(&row[b]).then(b.cmp(&a))).unwrap_or(0)
    }

    pub fn perplexity(&self, corpus: &Corpus) -> f64 {
        let phi: Vec<Vec<f64>> = (0..self.topics()).map(|k| self.phi_row(k)).collect();
        let mut log_sum = 0.0;
        let mut tokens = 0usize;
        for (d, doc) in corpus.documents.iter().enumerate() {
            let theta = self.doc_topics(d);
            for &w in doc {
                let p: f64 = theta.iter().zip(&phi).map(|(t, row)| t * row[w as usize]).sum();
                log_sum += p.ln();
                tokens += 1;
            }
        }
        (-log_sum / tokens.max(1) as f64).exp()
    }

    /// Rebuild the count tables from `z` and compare.
    pub fn check_counts(&self, corpus: &Corpus) -> Result<(), String> {
        let mut fresh = self.clone();
        for row in fresh.n_dk.iter_mut().chain(fresh.n_kw.iter_mut()) {
            row.iter_mut().for_each(|c| *c = 0);
        }
        fresh.n_k.iter_mut().for_each(|c| *c = 0);
        for (d, doc) in corpus.documents.iter().enumerate() {
            if self.z[d].len() != doc.len() {
                return Err(format!("document {d} has {} tokens but {} assignments", doc.len(), self.z[d].len()));
            }
            for (&w, &k) in doc.iter().zip(&self.z[d]) {
                fresh.n_dk[d][k as usize] += 1;
                fresh.n_kw[k as usize][w as usize] += 1;
                fresh.n_k[k as usize] += 1;
            }
        }
        if fresh.n_dk != self.n_dk {
            return Err("document-topic counts differ from assignments".into());
        }
        if fresh.n_kw != self.n_kw {
            return Err("topic-word counts differ from assignments".into());
        }
        if fresh.n_k != self.n_k {
            return Err("topic totals differ from assignments".into());
        }
        Ok(())
    }

    /// `topic,rank,term,phi` rows for the top `top_n` terms of each topic,
    /// topics in ranked order.
    pub fn write_topics_csv(&self, path: &Path) -> Result<(), LdaError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["topic", "rank", "term", "phi"])?;
        for k in self.ranked_topics() {
            for (rank, (term, phi)) in self.top_words(k, self.config.top_n).into_iter().enumerate() {
                w.write_record([k.to_string(), (rank + 1).to_string(), term, format!("{phi:.6}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `doc_id,topic,theta` rows.
    pub fn write_doc_topics_csv(&self, corpus: &Corpus, path: &Path) -> Result<(), LdaError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["doc_id", "topic", "theta"])?;
        for (d, id) in corpus.doc_ids.iter().enumerate() {
            for (k, theta) in self.doc_topics(d).into_iter().enumerate() {
                w.write_record([id.clone(), k.to_string(), format!("{theta:.6}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<(), LdaError> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer(&mut f, self).map_err(std::io::Error::from)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, LdaError> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let model: Self = serde_json::from_reader(f).map_err(std::io::Error::from)?;
        model.config.validate()?;
        Ok(model)
    }
}
