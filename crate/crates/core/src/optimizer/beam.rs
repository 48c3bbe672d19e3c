use crate::modspace::SubNetSpec;

use super::{rank, Eval, Evaluator, OptError};

/// Beam search over dimensions in space order (globals, stages, blocks).
///
/// A partial assignment is scored by the predicted accuracy of its completion with defaults and is
/// discarded when its completion with every remaining dimension at its smallest candidate already
/// exceeds the budget. That bound assumes latency never decreases as a candidate value grows,
/// which holds for the shipped knobs. Returns at most `width` feasible SubNets,
/// best first; an empty result means the budget is infeasible.
pub fn beam_init(eval: &Evaluator<'_>, budget_ms: f64, width: usize) -> Result<Vec<SubNetSpec>, OptError> {
    let space = eval.space();
    let n = space.len();
    let defaults: Vec<usize> = space.dims().iter().map(|d| d.default_index()).collect();
    let cheapest: Vec<usize> = space
        .dims()
        .iter()
        .map(|d| (0..d.candidates.len()).min_by_key(|&i| d.candidates[i]).unwrap())
        .collect();
    let complete = |partial: &[usize], rest: &[usize]| {
        let mut g = partial.to_vec();
        g.extend_from_slice(&rest[partial.len()..]);
        eval.canonical(&g)
    };

    let mut beam: Vec<Vec<usize>> = vec![Vec::new()];
    if eval.evaluate_one(&complete(&[], &cheapest))?.latency_ms > budget_ms {
        return Ok(Vec::new());
    }
    for k in 0..n {
        let mut next = Vec::new();
        for partial in &beam {
            let spec = space.decode(&complete(partial, &defaults));
            let choices: Vec<usize> = if space.is_active(&spec, k) {
                (0..space.dims()[k].candidates.len()).collect()
            } else {
                vec![defaults[k]]
            };
            for c in choices {
                let mut p = partial.clone();
                p.push(c);
                next.push(p);
            }
        }
        let bounds = eval.evaluate(&next.iter().map(|p| complete(p, &cheapest)).collect::<Vec<_>>())?;
        let next: Vec<Vec<usize>> =
            next.into_iter().zip(bounds).filter(|(_, b)| b.latency_ms <= budget_ms).map(|(p, _)| p).collect();
        let full: Vec<Vec<usize>> = next.iter().map(|p| complete(p, &defaults)).collect();
        let scores = eval.evaluate(&full)?;
        let mut scored: Vec<(Vec<usize>, Eval, String)> = next
            .into_iter()
            .zip(scores)
            .zip(&full)
            .map(|((p, e), g)| (p, e, eval.spec(g).to_string()))
            .collect();
        scored.sort_by(|a, b| rank((&a.1, &a.2), (&b.1, &b.2)));
        scored.truncate(width);
        beam = scored.into_iter().map(|(p, _, _)| p).collect();
        if beam.is_empty() {
            return Ok(Vec::new());
        }
    }
    let finals = eval.evaluate(&beam.iter().map(|p| eval.canonical(p)).collect::<Vec<_>>())?;
    Ok(beam
        .iter()
        .zip(finals)
        .filter(|(_, e)| e.latency_ms <= budget_ms)
        .map(|(p, _)| eval.spec(p))
        .collect())
}
