//! Latency-constrained architecture search: beam-search initialization, a genetic algorithm, and
//! Pareto frontier sweeps over many budgets.

mod beam;
mod genetic;
mod pareto;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;

use crate::modspace::{ModificationSpace, SubNetSpec};
use crate::predictors::{predict_accuracy, LatencyPredictor, PredictError, SensitivityTable};

pub use beam::beam_init;
pub use genetic::{genetic_search, SearchResult};
pub use pareto::{pareto_sweep, read_frontier, write_frontier, ParetoPoint, Sweep, FRONTIER_HEADER};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptError {
    #[error("invalid search configuration: {0}")]
    BadConfig(String),
    #[error("no SubNet meets the {budget_ms} ms budget (fastest seen: {min_latency_ms} ms)")]
    Infeasible { budget_ms: f64, min_latency_ms: f64 },
    #[error("malformed frontier file: {0}")]
    BadFrontier(String),
    #[error(transparent)]
    Predict(#[from] PredictError),
}

/// Genetic-search hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub population: usize,
    pub generations: usize,
    /// Per-dimension resampling probability of a mutated child.
    pub mutation_prob: f64,
    pub parent_fraction: f64,
    pub mutate_fraction: f64,
    pub crossover_fraction: f64,
    pub beam_width: usize,
    pub seed: u64,
    /// Rounds of resampling before a slot (or the initial population) gives up.
    pub max_attempts: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            population: 100,
            generations: 500,
            mutation_prob: 0.1,
            parent_fraction: 0.25,
            mutate_fraction: 0.5,
            crossover_fraction: 0.25,
            beam_width: 8,
            seed: 0,
            max_attempts: 50,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), OptError> {
        let bad = |m: &str| Err(OptError::BadConfig(m.to_string()));
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        if self.population < 2 {
            return bad("population must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return bad("mutation_prob must lie in [0, 1]");
        }
        if !unit(self.parent_fraction) || !unit(self.mutate_fraction) || !unit(self.crossover_fraction) {
            return bad("fractions must lie in (0, 1]");
        }
        if self.parent_fraction + self.mutate_fraction + self.crossover_fraction > 1.0 + 1e-12 {
            return bad("fractions must sum to at most 1");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        Ok(())
    }
}

/// Predicted latency and accuracy of one SubNet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eval {
    pub latency_ms: f64,
    pub accuracy: f64,
}

/// Better first: higher accuracy, then lower latency, then smaller canonical spec text.
pub(crate) fn rank(a: (&Eval, &str), b: (&Eval, &str)) -> Ordering {
    b.0.accuracy
        .total_cmp(&a.0.accuracy)
        .then(a.0.latency_ms.total_cmp(&b.0.latency_ms))
        .then(a.1.cmp(b.1))
}

/// Memoizing predictor pair over candidate-index genomes; safe to share between threads.
pub struct Evaluator<'a> {
    space: &'a ModificationSpace,
    latency: LatencyPredictor<'a>,
    table: &'a SensitivityTable,
    cache: RwLock<HashMap<Vec<usize>, (Eval, Arc<str>)>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(space: &'a ModificationSpace, latency: LatencyPredictor<'a>, table: &'a SensitivityTable) -> Self {
        Evaluator { space, latency, table, cache: RwLock::new(HashMap::new()) }
    }

    pub fn space(&self) -> &ModificationSpace {
        self.space
    }

    /// Distinct SubNets evaluated so far.
    pub fn evaluations(&self) -> usize {
        self.cache.read().unwrap().len()
    }

    /// Canonical genome: indices of dropped-block dimensions reset to their defaults.
    pub fn canonical(&self, genome: &[usize]) -> Vec<usize> {
        self.space.canonical_indices(genome)
    }

    pub fn spec(&self, genome: &[usize]) -> SubNetSpec {
        self.space.decode(genome)
    }

    fn compute(&self, genome: &[usize]) -> Result<(Eval, Arc<str>), PredictError> {
        let spec = self.space.decode(genome);
        let eval = Eval { latency_ms: self.latency.latency_ms(&spec)?, accuracy: predict_accuracy(&spec, self.table)? };
        Ok((eval, spec.to_string().into()))
    }

    /// Evaluates canonical genomes, computing the uncached ones in parallel.
    pub fn evaluate(&self, genomes: &[Vec<usize>]) -> Result<Vec<Eval>, PredictError> {
        Ok(self.evaluate_named(genomes)?.into_iter().map(|(e, _)| e).collect())
    }

    /// [`Evaluator::evaluate`] plus the canonical spec text of each genome.
    pub(crate) fn evaluate_named(&self, genomes: &[Vec<usize>]) -> Result<Vec<(Eval, Arc<str>)>, PredictError> {
        let todo: Vec<&Vec<usize>> = {
            let cache = self.cache.read().unwrap();
            let mut seen = std::collections::HashSet::new();
            genomes.iter().filter(|g| !cache.contains_key(*g) && seen.insert(*g)).collect()
        };
        let fresh: Vec<Result<(Eval, Arc<str>), PredictError>> = todo.par_iter().map(|g| self.compute(g)).collect();
        {
            let mut cache = self.cache.write().unwrap();
            for (g, e) in todo.into_iter().zip(fresh) {
                cache.insert(g.clone(), e?);
            }
        }
        let cache = self.cache.read().unwrap();
        Ok(genomes.iter().map(|g| cache[g].clone()).collect())
    }

    pub fn evaluate_one(&self, genome: &[usize]) -> Result<Eval, PredictError> {
        Ok(self.evaluate(&[genome.to_vec()])?[0])
    }
}
