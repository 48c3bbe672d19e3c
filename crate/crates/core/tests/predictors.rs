mod common;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use common::{all_fixtures, all_specs, fixture, graph_latency, graph_memory, Fixture};
use proptest::prelude::*;
use tailorforge::compiler::compile;
use tailorforge::enumerator::{enumerate_unique_operators, FusionRules, Manifest, OperatorFeatureKey};
use tailorforge::graph::load_graph;
use tailorforge::modspace::{apply_subnet, parse_config, sample_subnet, ChoiceValue, DimId, SubNetSpec};
use tailorforge::predictors::{
    build_latency_lut, build_sensitivity_table, predict_accuracy, predict_energy, predict_latency, predict_memory,
    AccuracyOracle, AnalyticalBackend, Cost, CostBackend, FileBackend, FileOracle, LatencyLut, LatencyPredictor,
    PredictError, Provenance, SensitivityTable, SyntheticOracle,
};

fn manifest(f: &Fixture, rules: &FusionRules) -> Manifest {
    let e = enumerate_unique_operators(&f.compiled.model, &f.compiled.space, rules).unwrap();
    Manifest { fusion_ruleset_hash: rules.hash(), keys: e.keys }
}

fn lut(f: &Fixture, rules: &FusionRules, dev: &AnalyticalBackend) -> LatencyLut {
    build_latency_lut(&manifest(f, rules), dev, dev.device_id(), "2024-01-01T00:00:00Z").unwrap()
}

#[test]
fn lut_latency_equals_whole_graph_costing() {
    let dev = AnalyticalBackend::new("phone");
    for f in all_fixtures() {
        for rules in [FusionRules::none(), FusionRules::default_rules()] {
            let lut = lut(&f, &rules, &dev);
            let p = LatencyPredictor::new(&f.compiled.model, &lut, &rules).unwrap();
            for seed in 0..250 {
                let spec = sample_subnet(&f.compiled.space, seed);
                let g = apply_subnet(&f.compiled.model, &spec).unwrap();
                assert_eq!(p.latency_ms(&spec).unwrap(), graph_latency(&g, &rules, &dev), "{} {spec}", f.name);
            }
        }
    }
}

#[test]
fn energy_sums_per_key_energy() {
    let f = fixture("TinyNet-4S");
    let dev = AnalyticalBackend::new("board");
    let rules = FusionRules::default_rules();
    let lut = lut(&f, &rules, &dev);
    let p = LatencyPredictor::new(&f.compiled.model, &lut, &rules).unwrap();
    for seed in 0..20 {
        let spec = sample_subnet(&f.compiled.space, seed);
        let want: f64 = p.keys(&spec).unwrap().iter().map(|k| dev.cost(k).energy_mj.unwrap()).sum();
        assert_eq!(predict_energy(&spec, &f.compiled.model, &lut, &rules).unwrap(), want);
        assert_eq!(p.energy_mj(&spec).unwrap(), want);
    }
}

#[test]
fn memory_matches_liveness_oracle() {
    for f in all_fixtures() {
        let specs = all_specs(&f.compiled.space);
        for spec in specs.iter().step_by(1 + specs.len() / 300) {
            let g = apply_subnet(&f.compiled.model, spec).unwrap();
            let (params, peak) = graph_memory(&g);
            let m = predict_memory(spec, &f.compiled.model).unwrap();
            assert_eq!((m.param_bytes, m.peak_activation_bytes), (params, peak), "{} {spec}", f.name);
            assert_eq!(m.total_bytes, params + peak);
        }
    }
}

fn single_op(op: &str, attrs: &str, out: &str) -> String {
    format!(
        r#"format_version = 1
inputs = ["x"]
outputs = ["y"]

[edges]
x = {{ dims = [1, 3, 224, 224], dtype = "float32" }}
y = {{ dims = {out}, dtype = "float32" }}

[[nodes]]
id = "n"
op = "{op}"
inputs = ["x"]
outputs = ["y"]
attrs = {{ {attrs} }}
"#
    )
}

fn memory_of_graph(text: &str) -> tailorforge::predictors::MemoryEstimate {
    let c = compile(&load_graph(text.as_bytes()).unwrap(), &parse_config("").unwrap()).unwrap();
    predict_memory(&SubNetSpec::new(), &c.model).unwrap()
}

#[test]
fn three_by_three_conv_weights() {
    let text = single_op("conv2d", "kernel = 3, stride = 1, padding = 1, out_channels = 16", "[1, 16, 224, 224]");
    let m = memory_of_graph(&text);
    assert_eq!(m.param_bytes, 1792);
    assert_eq!(m.peak_activation_bytes, (3 + 16) * 224 * 224 * 4);
}

#[test]
fn identity_shares_its_input_buffer() {
    let m = memory_of_graph(&single_op("identity", "", "[1, 3, 224, 224]"));
    assert_eq!(m.param_bytes, 0);
    assert_eq!(m.peak_activation_bytes, 602_112);
    assert_eq!(m.total_bytes, 602_112);
}

#[test]
fn lut_text_round_trips() {
    let f = fixture("TinyNet-1S");
    let lut = lut(&f, &FusionRules::default_rules(), &AnalyticalBackend::new("phone"));
    let text = lut.to_text();
    assert!(text.starts_with("# tailorforge-lut v1\n# device_id=phone\n"));
    assert_eq!(LatencyLut::parse(&text).unwrap(), lut);
    let v2 = text.replacen("v1", "v2", 1);
    assert!(matches!(LatencyLut::parse(&v2), Err(PredictError::BadLut(_))));
    let negative = text.replacen("\t", "\t-", 1);
    assert!(matches!(LatencyLut::parse(&negative), Err(PredictError::BadLut(_))));
}

#[test]
fn file_backend_reports_unmeasured_keys() {
    let f = fixture("TinyNet-1S");
    let rules = FusionRules::default_rules();
    let m = manifest(&f, &rules);
    let full = lut(&f, &rules, &AnalyticalBackend::new("phone"));
    let dropped: Vec<OperatorFeatureKey> = m.keys.iter().take(3).cloned().collect();
    let partial: BTreeMap<OperatorFeatureKey, Cost> =
        full.iter().filter(|(k, _)| !dropped.contains(k)).map(|(k, c)| (k.clone(), *c)).collect();
    let partial = LatencyLut::new(full.provenance.clone(), partial).unwrap();
    assert_eq!(partial.missing(&m).len(), 3);
    let backend = FileBackend::new("profiled.lut", partial);
    match build_latency_lut(&m, &backend, "phone", "now") {
        Err(PredictError::PartialLut { missing }) => assert_eq!(missing.len(), 3),
        other => panic!("expected a partial LUT error, got {other:?}"),
    }
    let whole = FileBackend::parse("all.lut", &full.to_text()).unwrap();
    let rebuilt = build_latency_lut(&m, &whole, "phone", "now").unwrap();
    assert_eq!(rebuilt.provenance.backend_id, "file:all.lut");
    assert!(rebuilt.iter().eq(full.iter()));
}

struct Counting {
    inner: AnalyticalBackend,
    calls: AtomicUsize,
}

impl CostBackend for Counting {
    fn id(&self) -> String {
        "counting".into()
    }

    fn measure(&self, key: &OperatorFeatureKey) -> Result<Cost, PredictError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.inner.cost(key))
    }
}

#[test]
fn each_key_is_measured_once() {
    let f = fixture("TinyNet-4S");
    let m = manifest(&f, &FusionRules::default_rules());
    let b = Counting { inner: AnalyticalBackend::new("phone"), calls: AtomicUsize::new(0) };
    let lut = build_latency_lut(&m, &b, "phone", "now").unwrap();
    assert_eq!(b.calls.load(Ordering::SeqCst), m.keys.len());
    assert_eq!(lut.len(), m.keys.len());
}

#[test]
fn ruleset_mismatch_is_rejected() {
    let f = fixture("TinyNet-1S");
    let lut = lut(&f, &FusionRules::default_rules(), &AnalyticalBackend::new("phone"));
    let err = predict_latency(&SubNetSpec::new(), &f.compiled.model, &lut, &FusionRules::none()).unwrap_err();
    assert!(matches!(err, PredictError::RulesetMismatch { .. }));
    let empty = LatencyLut::new(lut.provenance.clone(), BTreeMap::new()).unwrap();
    let err = predict_latency(&SubNetSpec::new(), &f.compiled.model, &empty, &FusionRules::default_rules());
    assert!(matches!(err, Err(PredictError::MissingKey(_))));
}

struct CountingOracle<O> {
    inner: O,
    calls: usize,
}

impl<O: AccuracyOracle> AccuracyOracle for CountingOracle<O> {
    fn acc(&mut self, spec: &SubNetSpec) -> Result<f64, PredictError> {
        self.calls += 1;
        self.inner.acc(spec)
    }
}

#[test]
fn sensitivity_needs_one_call_per_modification() {
    for f in all_fixtures() {
        let space = &f.compiled.space;
        let mut o = CountingOracle { inner: SyntheticOracle::new(space, 3, 80.0, 0.0), calls: 0 };
        let t = build_sensitivity_table(space, &mut o).unwrap();
        assert_eq!(o.calls, 1 + space.non_default_pairs(), "{}", f.name);
        assert_eq!(t.len(), space.dims().iter().map(|d| d.candidates.len()).sum::<usize>());
    }
}

#[test]
fn additive_oracle_is_predicted_exactly() {
    for f in all_fixtures() {
        let space = &f.compiled.space;
        let mut o = SyntheticOracle::new(space, 11, 80.0, 0.0);
        let t = build_sensitivity_table(space, &mut o).unwrap();
        for spec in all_specs(space).iter().step_by(7) {
            assert_eq!(predict_accuracy(spec, &t).unwrap(), o.acc(spec).unwrap(), "{} {spec}", f.name);
        }
    }
}

#[test]
fn accuracy_is_base_minus_drops() {
    let r: DimId = "global/resolution".parse().unwrap();
    let d: DimId = "stage[0]/reduce_depth".parse().unwrap();
    let deltas = BTreeMap::from([
        ((r.clone(), ChoiceValue::int(160)), 0.5),
        ((r.clone(), ChoiceValue::int(224)), 0.0),
        ((d.clone(), ChoiceValue::int(-1)), 1.2),
        ((d.clone(), ChoiceValue::int(0)), 0.0),
    ]);
    let t = SensitivityTable::new(80.0, deltas);
    let spec: SubNetSpec = "global/resolution=160;stage[0]/reduce_depth=-1".parse().unwrap();
    assert!((predict_accuracy(&spec, &t).unwrap() - 78.3).abs() < 1e-9);
    assert_eq!(predict_accuracy(&SubNetSpec::new(), &t).unwrap(), 80.0);
    let uncovered: SubNetSpec = "global/resolution=128".parse().unwrap();
    assert!(matches!(predict_accuracy(&uncovered, &t), Err(PredictError::Uncovered(_))));
    assert_eq!(SensitivityTable::parse(&t.to_text()).unwrap(), t);
}

#[test]
fn oracle_specs_parse() {
    let f = fixture("TinyNet-1S");
    let space = &f.compiled.space;
    let o = SyntheticOracle::from_spec(space, "synthetic:7:eps=0.1:base=70").unwrap();
    assert!(o.eps() > 0.0 && o.eps() <= 0.1 * o.min_weight() + 1e-6);
    let mut o = o;
    assert_eq!(o.acc(&SubNetSpec::new()).unwrap(), 70.0);
    for bad in ["synthetic", "synthetic:x", "synthetic:1:eps", "synthetic:1:tau=2", "magic:1"] {
        assert!(matches!(SyntheticOracle::from_spec(space, bad), Err(PredictError::BadOracle(_))), "{bad}");
    }
    let text = "# tailorforge-accuracy v1\ndefault\t75.5\nglobal/resolution=128\t74\n";
    let mut file = FileOracle::parse(space, text).unwrap();
    assert_eq!(file.acc(&SubNetSpec::new()).unwrap(), 75.5);
    assert!(matches!(file.acc(&"stage[0]/reduce_depth=-1".parse().unwrap()), Err(PredictError::NoAccuracy(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn default_values_cost_nothing(which in 0usize..4, seed in any::<u64>(), eps in 0.0f64..1.0) {
        let names = ["TinyNet", "TinyNet-1S", "TinyNet-4S", "ViT-tiny"];
        let f = fixture(names[which]);
        let space = &f.compiled.space;
        let mut o = SyntheticOracle::from_spec(space, &format!("synthetic:{seed}:eps={eps}")).unwrap();
        let t = build_sensitivity_table(space, &mut o).unwrap();
        for d in space.dims() {
            prop_assert_eq!(t.delta(&d.id, d.default), Some(0.0));
        }
        prop_assert_eq!(predict_accuracy(&SubNetSpec::new(), &t).unwrap(), t.base_acc);
        prop_assert_eq!(t.base_acc, 80.0);
    }

    #[test]
    fn lut_rows_are_exact(seed in any::<u64>()) {
        let f = fixture("TinyNet-1S");
        let dev = AnalyticalBackend::new(&format!("dev{seed}"));
        let rules = FusionRules::default_rules();
        let l = lut(&f, &rules, &dev);
        prop_assert_eq!(LatencyLut::parse(&l.to_text()).unwrap(), l.clone());
        prop_assert_eq!(&l.provenance, &Provenance {
            device_id: format!("dev{seed}"),
            backend_id: dev.id(),
            created_at: "2024-01-01T00:00:00Z".into(),
            fusion_ruleset_hash: rules.hash(),
        });
    }
}
