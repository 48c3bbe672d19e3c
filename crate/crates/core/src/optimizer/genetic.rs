use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::modspace::SubNetSpec;

use super::{beam_init, rank, Eval, Evaluator, OptError, SearchConfig};

/// Best SubNet found by [`genetic_search`].
#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub spec: SubNetSpec,
    pub latency_ms: f64,
    pub accuracy: f64,
}

struct Member {
    genome: Vec<usize>,
    eval: Eval,
    text: Arc<str>,
}

fn sort(pop: &mut [Member]) {
    pop.sort_by(|a, b| rank((&a.eval, &a.text), (&b.eval, &b.text)));
}

/// Fills up to `want` slots with feasible genomes drawn from `draw`, evaluating each round of
/// draws as one parallel batch. Stops after `rounds` rounds.
fn fill<R: Rng>(
    eval: &Evaluator<'_>,
    rng: &mut R,
    want: usize,
    rounds: usize,
    budget_ms: f64,
    min_seen: &mut f64,
    mut draw: impl FnMut(&mut R) -> Vec<usize>,
) -> Result<Vec<Member>, OptError> {
    let mut out = Vec::with_capacity(want);
    for _ in 0..rounds {
        if out.len() >= want {
            break;
        }
        let batch: Vec<Vec<usize>> = (0..want - out.len()).map(|_| eval.canonical(&draw(rng))).collect();
        let evals = eval.evaluate_named(&batch)?;
        for (genome, (e, text)) in batch.into_iter().zip(evals) {
            *min_seen = min_seen.min(e.latency_ms);
            if e.latency_ms <= budget_ms {
                out.push(Member { genome, eval: e, text });
            }
        }
    }
    Ok(out)
}

/// Genetic search for the most accurate SubNet within `budget_ms`.
///
/// The population is seeded from [`beam_init`] and padded with feasible uniform samples. Each
/// generation keeps the best `parent_fraction`, then adds mutated and single-point-crossover
/// children; infeasible children are rejected and redrawn. Deterministic for a given seed.
pub fn genetic_search(eval: &Evaluator<'_>, budget_ms: f64, cfg: &SearchConfig) -> Result<SearchResult, OptError> {
    cfg.validate()?;
    let space = eval.space();
    let n = space.len();
    let sizes: Vec<usize> = space.dims().iter().map(|d| d.candidates.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut min_seen = f64::INFINITY;

    let seeds = beam_init(eval, budget_ms, cfg.beam_width)?;
    let genomes: Vec<Vec<usize>> = seeds.iter().map(|s| space.encode(s)).collect();
    let mut pop: Vec<Member> = Vec::new();
    for (genome, (e, text)) in genomes.iter().zip(eval.evaluate_named(&genomes)?) {
        min_seen = min_seen.min(e.latency_ms);
        pop.push(Member { genome: genome.clone(), eval: e, text });
    }
    pop.truncate(cfg.population);
    let uniform = |rng: &mut ChaCha8Rng| sizes.iter().map(|&s| rng.gen_range(0..s)).collect::<Vec<_>>();
    let want = cfg.population - pop.len();
    pop.extend(fill(eval, &mut rng, want, cfg.max_attempts, budget_ms, &mut min_seen, uniform)?);
    if pop.is_empty() {
        return Err(OptError::Infeasible { budget_ms, min_latency_ms: min_seen });
    }
    sort(&mut pop);

    let count = |f: f64| ((f * cfg.population as f64).round() as usize).max(1);
    let (n_parents, n_mut, n_cross) =
        (count(cfg.parent_fraction), count(cfg.mutate_fraction), count(cfg.crossover_fraction));
    let mut best = (pop[0].genome.clone(), pop[0].eval, pop[0].text.clone());
    for _ in 0..cfg.generations {
        pop.truncate(n_parents);
        let parents: Vec<Vec<usize>> = pop.iter().map(|m| m.genome.clone()).collect();
        let mutate = |rng: &mut ChaCha8Rng| {
            let mut g = parents[rng.gen_range(0..parents.len())].clone();
            for (i, v) in g.iter_mut().enumerate() {
                if rng.gen_bool(cfg.mutation_prob) {
                    *v = rng.gen_range(0..sizes[i]);
                }
            }
            g
        };
        let mutants = fill(eval, &mut rng, n_mut, cfg.max_attempts, budget_ms, &mut min_seen, mutate)?;
        let cross = |rng: &mut ChaCha8Rng| {
            let a = &parents[rng.gen_range(0..parents.len())];
            let b = &parents[rng.gen_range(0..parents.len())];
            let point = if n > 1 { rng.gen_range(1..n) } else { 0 };
            a[..point].iter().chain(&b[point..]).copied().collect()
        };
        let children = fill(eval, &mut rng, n_cross, cfg.max_attempts, budget_ms, &mut min_seen, cross)?;
        pop.extend(mutants);
        pop.extend(children);
        sort(&mut pop);
        if rank((&pop[0].eval, &pop[0].text), (&best.1, &best.2)).is_lt() {
            best = (pop[0].genome.clone(), pop[0].eval, pop[0].text.clone());
        }
    }
    let spec = eval.spec(&best.0);
    let check = eval.evaluate_one(&best.0)?;
    assert!(check.latency_ms <= budget_ms, "search returned an infeasible SubNet");
    Ok(SearchResult { spec, latency_ms: best.1.latency_ms, accuracy: best.1.accuracy })
}
