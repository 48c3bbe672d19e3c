use std::fmt::Write;

use rayon::prelude::*;

use crate::modspace::SubNetSpec;

use super::{genetic_search, Evaluator, OptError, SearchConfig};

pub const FRONTIER_HEADER: &str = "# tailorforge-frontier v1";
const COLUMNS: &str = "budget_ms,pred_latency_ms,pred_accuracy,spec";

/// One deployment point of a latency sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct ParetoPoint {
    pub budget_ms: f64,
    pub spec: SubNetSpec,
    pub pred_latency_ms: f64,
    pub pred_accuracy: f64,
}

/// Non-dominated points in ascending latency, plus the budgets nothing fit into.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub points: Vec<ParetoPoint>,
    /// `(budget_ms, fastest latency seen)` of every infeasible budget.
    pub infeasible: Vec<(f64, f64)>,
}

/// Runs [`genetic_search`] for every budget (in parallel) and keeps the Pareto frontier: each
/// kept point is strictly slower and strictly more accurate than the previous one.
pub fn pareto_sweep(eval: &Evaluator<'_>, budgets: &[f64], cfg: &SearchConfig) -> Result<Sweep, OptError> {
    let results: Vec<Result<ParetoPoint, OptError>> = budgets
        .par_iter()
        .map(|&b| {
            genetic_search(eval, b, cfg).map(|r| ParetoPoint {
                budget_ms: b,
                spec: r.spec,
                pred_latency_ms: r.latency_ms,
                pred_accuracy: r.accuracy,
            })
        })
        .collect();
    let mut points = Vec::new();
    let mut infeasible = Vec::new();
    for r in results {
        match r {
            Ok(p) => points.push(p),
            Err(OptError::Infeasible { budget_ms, min_latency_ms }) => infeasible.push((budget_ms, min_latency_ms)),
            Err(e) => return Err(e),
        }
    }
    points.sort_by(|a, b| {
        a.pred_latency_ms
            .total_cmp(&b.pred_latency_ms)
            .then(b.pred_accuracy.total_cmp(&a.pred_accuracy))
            .then(a.budget_ms.total_cmp(&b.budget_ms))
    });
    let mut frontier: Vec<ParetoPoint> = Vec::new();
    for p in points {
        if frontier.last().map_or(true, |q| p.pred_accuracy > q.pred_accuracy) {
            frontier.push(p);
        }
    }
    Ok(Sweep { points: frontier, infeasible })
}

/// CSV with a version header; infeasible budgets are listed as trailing comment lines.
pub fn write_frontier(sweep: &Sweep) -> String {
    let mut out = format!("{FRONTIER_HEADER}\n{COLUMNS}\n");
    for p in &sweep.points {
        let _ = writeln!(out, "{},{},{},{}", p.budget_ms, p.pred_latency_ms, p.pred_accuracy, p.spec);
    }
    for (b, m) in &sweep.infeasible {
        let _ = writeln!(out, "# infeasible budget_ms={b} min_latency_ms={m}");
    }
    out
}

pub fn read_frontier(text: &str) -> Result<Sweep, OptError> {
    let bad = |m: String| OptError::BadFrontier(m);
    let mut lines = text.lines();
    if lines.next() != Some(FRONTIER_HEADER) {
        return Err(bad(format!("missing `{FRONTIER_HEADER}` header")));
    }
    if lines.next() != Some(COLUMNS) {
        return Err(bad(format!("expected column line `{COLUMNS}`")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number")));
    let mut sweep = Sweep { points: Vec::new(), infeasible: Vec::new() };
    for line in lines.filter(|l| !l.is_empty()) {
        if let Some(rest) = line.strip_prefix("# infeasible ") {
            let field = |name: &str| {
                rest.split(' ')
                    .find_map(|kv| kv.strip_prefix(name).and_then(|v| v.strip_prefix('=')))
                    .ok_or_else(|| bad(format!("infeasible line lacks `{name}`")))
            };
            sweep.infeasible.push((num(field("budget_ms")?)?, num(field("min_latency_ms")?)?));
            continue;
        }
        let cols: Vec<&str> = line.splitn(4, ',').collect();
        let [b, l, a, s] = cols[..] else { return Err(bad(format!("bad row `{line}`"))) };
        sweep.points.push(ParetoPoint {
            budget_ms: num(b)?,
            pred_latency_ms: num(l)?,
            pred_accuracy: num(a)?,
            spec: s.parse().map_err(|e| bad(format!("bad spec `{s}`: {e}")))?,
        });
    }
    Ok(sweep)
}
