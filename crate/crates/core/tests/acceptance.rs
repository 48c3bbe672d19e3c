//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{all_fixtures, all_specs, fixture, graph_keys, graph_latency, propagate, Fixture};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tailorforge::compiler::compile;
use tailorforge::enumerator::{enumerate_unique_operators, FusionRules, Manifest};
use tailorforge::graph::{export_graph, graph_isomorphic, load_graph};
use tailorforge::ir::{build, infer_shapes};
use tailorforge::modspace::{apply_subnet, configure, count_variants, parse_config, sample_subnet, SubNetSpec};
use tailorforge::optimizer::{genetic_search, pareto_sweep, read_frontier, write_frontier, Evaluator, OptError, SearchConfig};
use tailorforge::predictors::{
    build_latency_lut, build_sensitivity_table, predict_accuracy, AccuracyOracle, AnalyticalBackend, LatencyLut,
    LatencyPredictor, SensitivityTable, SyntheticOracle,
};

/// Minimum fraction of 200-spec groups whose true best lands in the predicted top 5, set from a
/// 300-seed Monte-Carlo run of the same procedure (every seed scored 1.0).
const TOP5_THRESHOLD: f64 = 0.95;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn manifest(f: &Fixture, rules: &FusionRules) -> Manifest {
    let e = enumerate_unique_operators(&f.compiled.model, &f.compiled.space, rules).unwrap();
    Manifest { fusion_ruleset_hash: rules.hash(), keys: e.keys }
}

fn lut(f: &Fixture, rules: &FusionRules, dev: &AnalyticalBackend) -> LatencyLut {
    build_latency_lut(&manifest(f, rules), dev, dev.device_id(), "2024-01-01T00:00:00Z").unwrap()
}

fn structural_consistency() -> Outcome {
    for f in all_fixtures() {
        let g = apply_subnet(&f.compiled.model, &SubNetSpec::new()).map_err(|e| e.to_string())?;
        ensure(graph_isomorphic(&g, &f.graph), || format!("{}: maximal SubNet differs from the input", f.name))?;
    }
    Ok("maximal SubNet isomorphic to the input graph on 4 fixtures".into())
}

fn shape_inference() -> Outcome {
    let mut checked = 0;
    for f in all_fixtures() {
        for seed in 0..100 {
            let spec = sample_subnet(&f.compiled.space, seed);
            let m = configure(&f.compiled.model, &spec).map_err(|e| e.to_string())?;
            let inferred = infer_shapes(&m).map_err(|e| e.to_string())?;
            let oracle = propagate(&build(&m).map_err(|e| e.to_string())?);
            for leaf in m.leaves().into_iter().filter(|l| l.is_enabled()) {
                let node = leaf.node().unwrap();
                let got = &inferred[leaf.path()];
                for (e, s) in node.outputs.iter().zip(&got.out_shapes) {
                    ensure(&oracle[e] == s, || format!("{} {spec}: output {e} of {}", f.name, node.id))?;
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} operator outputs agree over 400 random SubNets"))
}

fn unique_operators() -> Outcome {
    let mut detail = Vec::new();
    for name in ["TinyNet-1S", "TinyNet-4S"] {
        let f = fixture(name);
        let graphs: Vec<_> =
            all_specs(&f.compiled.space).iter().map(|s| apply_subnet(&f.compiled.model, s).unwrap()).collect();
        for rules in [FusionRules::none(), FusionRules::default_rules()] {
            let brute: BTreeSet<_> = graphs.iter().flat_map(|g| graph_keys(g, &rules)).collect();
            let e = enumerate_unique_operators(&f.compiled.model, &f.compiled.space, &rules).unwrap();
            ensure(e.keys == brute, || format!("{name}: pruned keys differ from brute force"))?;
            if name == "TinyNet-4S" {
                ensure(e.pruned_fraction() <= 0.05, || format!("{name}: pruned fraction {}", e.pruned_fraction()))?;
                ensure(e.unique_ratio() <= 0.04, || format!("{name}: unique ratio {}", e.unique_ratio()))?;
                detail.push(format!(
                    "{} keys, work {:.4}%, unique {:.4}%",
                    e.keys.len(),
                    100.0 * e.pruned_fraction(),
                    100.0 * e.unique_ratio()
                ));
            }
        }
    }
    Ok(format!("exact on 1S and 4S; 4S {}", detail.join(" / ")))
}

fn lut_exactness() -> Outcome {
    let dev = AnalyticalBackend::new("phone");
    for f in all_fixtures() {
        for rules in [FusionRules::none(), FusionRules::default_rules()] {
            let lut = lut(&f, &rules, &dev);
            let p = LatencyPredictor::new(&f.compiled.model, &lut, &rules).unwrap();
            for seed in 0..1000 {
                let spec = sample_subnet(&f.compiled.space, seed);
                let g = apply_subnet(&f.compiled.model, &spec).unwrap();
                let (a, b) = (p.latency_ms(&spec).unwrap(), graph_latency(&g, &rules, &dev));
                ensure(a == b, || format!("{} {spec}: LUT {a} vs graph {b}", f.name))?;
            }
        }
    }
    Ok("1000 specs x 4 fixtures x 2 rulesets, zero tolerance".into())
}

struct Counted<'a>(&'a mut SyntheticOracle, usize);

impl AccuracyOracle for Counted<'_> {
    fn acc(&mut self, spec: &SubNetSpec) -> Result<f64, tailorforge::predictors::PredictError> {
        self.1 += 1;
        self.0.acc(spec)
    }
}

fn top5_rate(f: &Fixture, seed: u64) -> f64 {
    let space = &f.compiled.space;
    let mut oracle = SyntheticOracle::from_spec(space, &format!("synthetic:{seed}:eps=0.1")).unwrap();
    let table = build_sensitivity_table(space, &mut oracle).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = space.dims().iter().map(|d| d.candidates.len()).collect();
    let mut hits = 0;
    for _ in 0..100 {
        let mut seen = BTreeSet::new();
        let mut group = Vec::new();
        while group.len() < 200 {
            let idx: Vec<usize> = sizes.iter().map(|&s| rng.gen_range(0..s)).collect();
            let spec = space.decode(&idx);
            if seen.insert(spec.to_string()) {
                group.push(spec);
            }
        }
        let truth: Vec<f64> = group.iter().map(|s| oracle.acc(s).unwrap()).collect();
        let pred: Vec<f64> = group.iter().map(|s| predict_accuracy(s, &table).unwrap()).collect();
        let best = (0..group.len()).max_by(|&a, &b| truth[a].total_cmp(&truth[b])).unwrap();
        let mut order: Vec<usize> = (0..group.len()).collect();
        order.sort_by(|&a, &b| pred[b].total_cmp(&pred[a]));
        if order[..5].contains(&best) {
            hits += 1;
        }
    }
    hits as f64 / 100.0
}

fn sensitivity() -> Outcome {
    for f in all_fixtures() {
        let space = &f.compiled.space;
        let mut inner = SyntheticOracle::new(space, 9, 80.0, 0.0);
        let mut counted = Counted(&mut inner, 0);
        let table = build_sensitivity_table(space, &mut counted).unwrap();
        let calls = counted.1;
        let want = 1 + space.dims().iter().map(|d| d.candidates.len() - 1).sum::<usize>();
        ensure(calls == want, || format!("{}: {calls} oracle calls, expected {want}", f.name))?;
        for spec in all_specs(space) {
            let (p, t) = (predict_accuracy(&spec, &table).unwrap(), inner.acc(&spec).unwrap());
            ensure(p == t, || format!("{} {spec}: predicted {p}, oracle {t}", f.name))?;
        }
    }
    let f = fixture("TinyNet-4S");
    let rate = top5_rate(&f, 2024);
    ensure(rate >= TOP5_THRESHOLD, || format!("top-5 rate {rate} below {TOP5_THRESHOLD}"))?;
    Ok(format!("exact at eps=0 on every variant; top-5 rate {rate:.2} >= {TOP5_THRESHOLD} at eps=10%"))
}

fn with_eval<R>(f: &Fixture, f_eval: impl FnOnce(&Evaluator<'_>, &SensitivityTable) -> R) -> R {
    let rules = FusionRules::default_rules();
    let lut = lut(f, &rules, &AnalyticalBackend::new("phone"));
    let mut oracle = SyntheticOracle::new(&f.compiled.space, 1, 80.0, 0.0);
    let table = build_sensitivity_table(&f.compiled.space, &mut oracle).unwrap();
    let p = LatencyPredictor::new(&f.compiled.model, &lut, &rules).unwrap();
    let eval = Evaluator::new(&f.compiled.space, p, &table);
    f_eval(&eval, &table)
}

fn search() -> Outcome {
    let cfg = SearchConfig::default();
    let f = fixture("TinyNet-1S");
    let worst_gap = with_eval(&f, |eval, _| -> Result<f64, String> {
        let specs = all_specs(eval.space());
        let genomes: Vec<Vec<usize>> = specs.iter().map(|s| eval.space().encode(s)).collect();
        let all = eval.evaluate(&genomes).unwrap();
        let lo = all.iter().map(|e| e.latency_ms).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(|e| e.latency_ms).fold(0.0, f64::max);
        let mut worst: f64 = 0.0;
        for i in 0..10 {
            let budget = lo + (hi - lo) * (i as f64 + 0.5) / 10.0;
            let r = genetic_search(eval, budget, &cfg).map_err(|e| e.to_string())?;
            let opt = all.iter().filter(|e| e.latency_ms <= budget).map(|e| e.accuracy).fold(f64::MIN, f64::max);
            ensure(r.latency_ms <= budget, || format!("budget {budget}: result over budget"))?;
            worst = worst.max(opt - r.accuracy);
        }
        match genetic_search(eval, lo * 0.5, &cfg) {
            Err(OptError::Infeasible { .. }) => {}
            other => return Err(format!("budget below the fastest SubNet gave {other:?}")),
        }
        Ok(worst)
    })?;
    ensure(worst_gap <= 0.5, || format!("GA {worst_gap} below the optimum"))?;
    let f = fixture("TinyNet-4S");
    let points = with_eval(&f, |eval, _| -> Result<usize, String> {
        let budgets: Vec<f64> = (0..40).map(|i| 8.0 + 2.0 * i as f64).collect();
        let sweep = pareto_sweep(eval, &budgets, &cfg).map_err(|e| e.to_string())?;
        for w in sweep.points.windows(2) {
            ensure(w[0].pred_latency_ms < w[1].pred_latency_ms && w[0].pred_accuracy < w[1].pred_accuracy, || {
                "frontier not monotone".into()
            })?;
        }
        Ok(sweep.points.len())
    })?;
    Ok(format!("worst gap {worst_gap} on 10 budgets; infeasible error raised; {points}-point monotone frontier"))
}

fn counting() -> Outcome {
    let mut sizes = Vec::new();
    for f in all_fixtures() {
        let brute = all_specs(&f.compiled.space).len();
        let counted = count_variants(&f.compiled.space, &f.compiled.model);
        ensure(counted == BigUint::from(brute), || format!("{}: counted {counted}, brute {brute}", f.name))?;
        sizes.push(format!("{}={brute}", f.name));
    }
    let g = load_graph(tailorforge::fixtures::TINYNET.as_bytes()).unwrap();
    let c = compile(&g, &parse_config(tailorforge::fixtures::EXAMPLE_CONFIG).unwrap()).map_err(|e| e.to_string())?;
    let n = count_variants(&c.space, &c.model);
    ensure(BigUint::from(all_specs(&c.space).len()) == n, || "example config count differs".into())?;
    Ok(format!("{}, example config={n}", sizes.join(", ")))
}

fn determinism() -> Outcome {
    let f = fixture("TinyNet-4S");
    let cfg = SearchConfig { seed: 17, ..SearchConfig::default() };
    let budgets: Vec<f64> = (0..12).map(|i| 6.0 + 6.0 * i as f64).collect();
    let run = || {
        with_eval(&f, |eval, _| {
            let r = genetic_search(eval, 30.0, &cfg).unwrap();
            let sweep = pareto_sweep(eval, &budgets, &cfg).unwrap();
            (format!("{}\t{}\t{}", r.latency_ms, r.accuracy, r.spec), write_frontier(&sweep))
        })
    };
    let first = run();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    ensure(first == run() && first == pool.install(run), || "search or sweep output differs between runs".into())?;
    let frontier = read_frontier(&first.1).map_err(|e| e.to_string())?;
    ensure(write_frontier(&frontier) == first.1, || "frontier does not round-trip".into())?;

    let rules = FusionRules::default_rules();
    let m = manifest(&f, &rules);
    ensure(Manifest::parse(&m.to_text()).unwrap() == m, || "manifest does not round-trip".into())?;
    let l = lut(&f, &rules, &AnalyticalBackend::new("phone"));
    ensure(LatencyLut::parse(&l.to_text()).unwrap() == l, || "LUT does not round-trip".into())?;
    ensure(FusionRules::parse(&rules.to_text()).unwrap() == rules, || "fusion rules do not round-trip".into())?;
    let t = with_eval(&f, |_, t| t.clone());
    ensure(SensitivityTable::parse(&t.to_text()).unwrap() == t, || "sensitivity table does not round-trip".into())?;
    for seed in 0..20 {
        let spec = sample_subnet(&f.compiled.space, seed);
        ensure(spec.to_string().parse::<SubNetSpec>().unwrap() == spec, || format!("spec {spec} does not round-trip"))?;
        let g = apply_subnet(&f.compiled.model, &spec).unwrap();
        let text = export_graph(&g);
        let back = load_graph(&text).unwrap();
        ensure(export_graph(&back) == text && graph_isomorphic(&back, &g), || "graph does not round-trip".into())?;
    }
    Ok("search and sweep byte-identical across runs and thread counts; 6 artifact kinds round-trip".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn() -> Outcome); 8] = [
        ("structural consistency", 1, structural_consistency),
        ("shape inference oracle", 5, shape_inference),
        ("unique operators and pruning", 60, unique_operators),
        ("LUT predictor exactness", 30, lut_exactness),
        ("sensitivity predictor", 120, sensitivity),
        ("search optimality", 120, search),
        ("counting", 10, counting),
        ("determinism and round-trips", 30, determinism),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.into_iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let took = start.elapsed();
        let outcome = outcome.and_then(|d| {
            if took <= Duration::from_secs(limit) {
                Ok(d)
            } else {
                Err(format!("took {took:.1?}, limit {limit} s ({d})"))
            }
        });
        match outcome {
            Ok(d) => println!("PASS criterion {n}: {name} ({took:.2?}): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {n}: {name} ({took:.2?}): {d}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
