use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tailorforge::enumerator::FusionRules;
use tailorforge::graph::{graph_isomorphic, load_graph};
use tailorforge::modspace::SubNetSpec;
use tailorforge::predictors::{LatencyLut, LatencyPredictor};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tailorforge")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    /// Compiled TinyNet-4S with its derived artifacts.
    fn new() -> Self {
        let w = Workspace { dir: tempfile::tempdir().unwrap() };
        let graph = fixture("tinynet_4s.tfg");
        let config = fixture("tinynet_4s.toml");
        let report = ok(&["compile", &s(&graph), &s(&config), "-o", &w.p("net")]);
        assert!(report.contains("matched InvertedResidualBlock: 7"), "{report}");
        ok(&["enumerate", "-s", &w.p("net"), "-o", &w.p("ops.manifest")]);
        ok(&["build-lut", "--manifest", &w.p("ops.manifest"), "--backend", "analytical", "--device", "phone", "-o", &w.p("phone.lut")]);
        ok(&["sensitivity", "-s", &w.p("net"), "--oracle", "synthetic:3", "-o", &w.p("sens.tsv")]);
        w
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn value<'a>(out: &'a str, key: &str) -> &'a str {
    out.lines().find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('='))).unwrap_or_else(|| panic!("no {key} in {out}"))
}

#[test]
fn full_pipeline() {
    let w = Workspace::new();
    assert_eq!(ok(&["count", "-s", &w.p("net")]).trim(), "20736");
    assert!(w.read("ops.manifest").starts_with("# tailorforge-manifest v1\n# fusion_ruleset_hash="));
    assert!(w.read("phone.lut").contains("\n# device_id=phone\n# backend_id=analytical\n"));
    assert!(w.read("sens.tsv").starts_with("# tailorforge-sensitivity v1\nbase_acc\t80\n"));

    let out = ok(&["predict", "-s", &w.p("net"), "--spec", "default", "--lut", &w.p("phone.lut"), "--table", &w.p("sens.tsv")]);
    assert_eq!(value(&out, "spec"), "default");
    assert_eq!(value(&out, "accuracy"), "80");
    let g = load_graph(&fs::read(fixture("tinynet_4s.tfg")).unwrap()).unwrap();
    let net = tailorforge::compiler::compile(
        &g,
        &tailorforge::modspace::parse_config(&fs::read_to_string(fixture("tinynet_4s.toml")).unwrap()).unwrap(),
    )
    .unwrap();
    let lut = LatencyLut::parse(&w.read("phone.lut")).unwrap();
    let p = LatencyPredictor::new(&net.model, &lut, &FusionRules::default_rules()).unwrap();
    let keys = p.keys(&SubNetSpec::new()).unwrap();
    let sum: f64 = keys.iter().map(|k| lut.get(k).unwrap().latency_ms).sum();
    assert_eq!(value(&out, "latency_ms").parse::<f64>().unwrap(), sum);
    assert!(value(&out, "energy_mj").parse::<f64>().unwrap() > 0.0);
    assert!(value(&out, "param_bytes").parse::<u64>().unwrap() > 0);

    let search = ok(&[
        "search", "-s", &w.p("net"), "--lut", &w.p("phone.lut"), "--table", &w.p("sens.tsv"), "--budget", "30",
        "--population", "30", "--generations", "30",
    ]);
    assert!(search.starts_with("# tailorforge-search v1\nbudget_ms=30\n"));
    assert!(value(&search, "pred_latency_ms").parse::<f64>().unwrap() <= 30.0);
    let spec = value(&search, "spec").to_string();

    ok(&["export", "-s", &w.p("net"), "--spec", &spec, "-o", &w.p("best.tfg")]);
    ok(&["export", "-s", &w.p("net"), "--spec", "default", "-o", &w.p("max.tfg")]);
    let max = load_graph(&fs::read(w.path("max.tfg")).unwrap()).unwrap();
    assert!(graph_isomorphic(&max, &g));
    let best = load_graph(&fs::read(w.path("best.tfg")).unwrap()).unwrap();
    assert!(best.nodes().len() <= g.nodes().len());

    ok(&[
        "sweep", "-s", &w.p("net"), "--lut", &w.p("phone.lut"), "--table", &w.p("sens.tsv"), "--budgets", "4:60:8",
        "--population", "30", "--generations", "30", "-o", &w.p("front.csv"),
    ]);
    let front = w.read("front.csv");
    assert!(front.starts_with("# tailorforge-frontier v1\nbudget_ms,pred_latency_ms,pred_accuracy,spec\n"));
    assert!(front.contains("# infeasible budget_ms=4 "));
}

#[test]
fn sweep_is_byte_identical_for_a_fixed_seed() {
    let w = Workspace::new();
    let sweep = |out: &str, jobs: &str| {
        ok(&[
            "--jobs", jobs, "sweep", "-s", &w.p("net"), "--lut", &w.p("phone.lut"), "--table", &w.p("sens.tsv"),
            "--budgets", "10,20,30,45", "--seed", "9", "--population", "30", "--generations", "40", "-o", &w.p(out),
        ]);
        fs::read(w.path(out)).unwrap()
    };
    let a = sweep("a.csv", "1");
    assert_eq!(a, sweep("b.csv", "4"));
    assert_eq!(a, sweep("c.csv", "2"));
}

#[test]
fn exit_codes() {
    let w = Workspace::new();
    let search = |budget: &str| {
        code(&[
            "search", "-s", &w.p("net"), "--lut", &w.p("phone.lut"), "--table", &w.p("sens.tsv"), "--budget", budget,
            "--population", "10", "--generations", "5",
        ])
    };
    assert_eq!(search("0.5"), 3);
    assert_eq!(search("30"), 0);
    assert_eq!(code(&["predict", "-s", &w.p("net"), "--spec", "global/resolution=999"]), 2);
    assert_eq!(code(&["predict", "-s", &w.p("net"), "--spec", "nonsense"]), 2);
    assert_eq!(code(&["count", "-s", &w.p("missing")]), 1);
    assert_eq!(code(&["build-lut", "--manifest", &w.p("ops.manifest"), "--backend", "gpu", "--device", "x", "-o", &w.p("x")]), 2);
    assert_eq!(code(&["sweep", "-s", &w.p("net"), "--lut", &w.p("phone.lut"), "--table", &w.p("sens.tsv"), "--budgets", "a:b", "-o", &w.p("f")]), 2);
    let bad_config = w.path("bad.toml");
    fs::write(&bad_config, "[arch]\nblocks = [\"NoSuchBlock\"]\n").unwrap();
    assert_eq!(code(&["compile", &s(&fixture("tinynet_4s.tfg")), &s(&bad_config), "-o", &w.p("bad")]), 2);
}

#[test]
fn mismatched_artifacts_are_rejected() {
    let w = Workspace::new();
    let lut = w.read("phone.lut").replacen("# tailorforge-lut v1", "# tailorforge-lut v2", 1);
    fs::write(w.path("v2.lut"), lut).unwrap();
    let out = run(&["predict", "-s", &w.p("net"), "--spec", "default", "--lut", &w.p("v2.lut")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tailorforge-lut v1"));

    ok(&["compile", &s(&fixture("tinynet_4s.tfg")), &s(&fixture("tinynet_4s.toml")), "--rules", "none", "-o", &w.p("unfused")]);
    let out = run(&["predict", "-s", &w.p("unfused"), "--spec", "default", "--lut", &w.p("phone.lut")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fusion ruleset"));

    let table = w.read("sens.tsv").replacen("v1", "v0", 1);
    fs::write(w.path("old.tsv"), table).unwrap();
    assert_eq!(code(&["predict", "-s", &w.p("net"), "--spec", "default", "--table", &w.p("old.tsv")]), 2);
    fs::write(w.path("net/supernet.txt"), "# something else\n").unwrap();
    assert_eq!(code(&["count", "-s", &w.p("net")]), 2);
}

#[test]
fn file_backend_and_file_oracle() {
    let w = Workspace::new();
    ok(&["build-lut", "--manifest", &w.p("ops.manifest"), "--backend", &format!("file:{}", &w.p("phone.lut")), "--device", "phone", "-o", &w.p("copy.lut")]);
    let strip = |t: String| t.lines().filter(|l| !l.starts_with('#')).map(str::to_owned).collect::<Vec<_>>();
    assert_eq!(strip(w.read("copy.lut")), strip(w.read("phone.lut")));

    ok(&["compile", &s(&fixture("tinynet_1s.tfg")), &s(&fixture("tinynet_1s.toml")), "-o", &w.p("one")]);
    let rows = "# tailorforge-accuracy v1\ndefault\t76\nglobal/resolution=128\t74.5\nstage[0]/reduce_depth=-1\t75\n\
                stage[0]/reduce_depth=-2\t73\nstage[0]/block[0]/expand_ratio=2\t75.5\nstage[0]/block[0]/expand_ratio=3\t75.75\n\
                stage[0]/block[1]/expand_ratio=2\t75.5\nstage[0]/block[1]/expand_ratio=3\t75.75\n\
                stage[0]/block[2]/expand_ratio=2\t75.5\nstage[0]/block[2]/expand_ratio=3\t75.75\n";
    fs::write(w.path("acc.tsv"), rows).unwrap();
    ok(&["sensitivity", "-s", &w.p("one"), "--oracle", &format!("file:{}", &w.p("acc.tsv")), "-o", &w.p("one.tsv")]);
    let out = ok(&["predict", "-s", &w.p("one"), "--spec", "global/resolution=128;stage[0]/reduce_depth=-1", "--table", &w.p("one.tsv")]);
    assert_eq!(value(&out, "accuracy").parse::<f64>().unwrap(), 76.0 - 1.5 - 1.0);
    fs::write(w.path("short.tsv"), "# tailorforge-accuracy v1\ndefault\t76\n").unwrap();
    assert_eq!(code(&["sensitivity", "-s", &w.p("one"), "--oracle", &format!("file:{}", &w.p("short.tsv")), "-o", &w.p("x")]), 2);
}
