mod common;

use std::collections::{BTreeSet, HashSet};

use common::{all_fixtures, fixture};
use tailorforge::compiler::{compile, parse_operators, CompileError};
use tailorforge::fixtures;
use tailorforge::graph::{graph_isomorphic, load_graph, ComputationGraph};
use tailorforge::ir::ModuleKind;
use tailorforge::modspace::{apply_subnet, parse_config, SpaceError, SubNetSpec};

fn graph(text: &str) -> ComputationGraph {
    load_graph(text.as_bytes()).unwrap()
}

#[test]
fn example_config_matches_one_ffn_block() {
    let g = graph(fixtures::TINYNET);
    let c = compile(&g, &parse_config(fixtures::EXAMPLE_CONFIG).unwrap()).unwrap();
    assert_eq!(c.report.blocks.get("FFNBlock"), Some(&1));
    assert!(c.report.to_string().contains("matched FFNBlock: 1"));
    assert_eq!(c.report.variants, "36");
}

#[test]
fn fixture_structure() {
    let expect = [
        ("TinyNet", vec![("FFNBlock", 1), ("ResidualConvBlock", 3)], vec![3, 1], 468),
        ("TinyNet-1S", vec![("InvertedResidualBlock", 3)], vec![3], 78),
        ("TinyNet-4S", vec![("InvertedResidualBlock", 7)], vec![2, 2, 2, 1], 20736),
        ("ViT-tiny", vec![("AttentionBlock", 2), ("FFNBlock", 2)], vec![4], 108),
    ];
    for (name, blocks, depths, variants) in expect {
        let f = fixture(name);
        let r = &f.compiled.report;
        let got: Vec<(&str, usize)> = r.blocks.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        assert_eq!(got, blocks, "{name}");
        assert_eq!(r.stages.iter().map(|s| s.1).collect::<Vec<_>>(), depths, "{name}");
        assert_eq!(r.variants, variants.to_string(), "{name}");
        assert!(r.unmatched_ops.is_empty());
    }
}

/// Every default block is a closed single-entry single-exit region whose exit node post-dominates
/// the whole region, checked by deleting the exit and searching for a path to a graph output.
#[test]
fn parsed_regions_are_closed_and_post_dominated() {
    for f in all_fixtures() {
        let g = &f.graph;
        let items = parse_operators(g);
        let mut covered = Vec::new();
        for item in &items {
            let ids: BTreeSet<String> = item.leaves().iter().map(|l| l.node().unwrap().id.clone()).collect();
            covered.extend(ids.iter().cloned());
            if item.kind() != ModuleKind::Block {
                continue;
            }
            let (entry, exit) = item.entry_exit().unwrap();
            let nodes: Vec<usize> = ids.iter().map(|id| g.nodes().iter().position(|n| &n.id == id).unwrap()).collect();
            let produced: HashSet<&str> =
                nodes.iter().flat_map(|&i| g.nodes()[i].outputs.iter().map(String::as_str)).collect();
            for &i in &nodes {
                for e in &g.nodes()[i].inputs {
                    assert!(e == entry || produced.contains(e.as_str()), "{}: {e} enters mid-region", f.name);
                }
                for e in &g.nodes()[i].outputs {
                    if e != exit {
                        assert!(g.consumers(e).iter().all(|c| nodes.contains(c)), "{}: {e} escapes", f.name);
                        assert!(!g.outputs().contains(e));
                    }
                }
            }
            let exit_node = g.producer(exit).unwrap();
            assert!(nodes.contains(&exit_node));
            // no region node reaches a graph output without passing the exit node
            let mut stack: Vec<usize> = nodes.iter().copied().filter(|&n| n != exit_node).collect();
            let mut seen: HashSet<usize> = stack.iter().copied().collect();
            while let Some(n) = stack.pop() {
                for e in &g.nodes()[n].outputs {
                    assert!(!g.outputs().contains(e), "{}: output reachable around {exit}", f.name);
                    for &c in g.consumers(e) {
                        if c != exit_node && seen.insert(c) {
                            stack.push(c);
                        }
                    }
                }
            }
        }
        covered.sort();
        let mut all: Vec<String> = g.nodes().iter().map(|n| n.id.clone()).collect();
        all.sort();
        assert_eq!(covered, all, "{}: every node in exactly one item", f.name);
    }
}

#[test]
fn unknown_template_is_unsatisfiable() {
    let g = graph(fixtures::TINYNET);
    let cfg = parse_config("[arch]\nblocks = [\"NoSuchBlock\"]\n").unwrap();
    assert!(matches!(compile(&g, &cfg), Err(CompileError::Space(SpaceError::Unsatisfiable(_)))));
}

#[test]
fn forced_template_without_match_is_unsatisfiable() {
    let g = graph(fixtures::TINYNET);
    let cfg = parse_config("[arch]\nblocks = [\"AttentionBlock\"]\n").unwrap();
    assert!(matches!(compile(&g, &cfg), Err(CompileError::Space(SpaceError::Unsatisfiable(_)))));
}

#[test]
fn unknown_block_var_is_unsatisfiable() {
    let g = graph(fixtures::TINYNET_1S);
    let cfg = parse_config("[var.block_vars]\nInvertedResidualBlock.kernel_ratio = [0.5, 1]\n").unwrap();
    assert!(compile(&g, &cfg).is_err());
}

#[test]
fn declared_shape_mismatch_is_reported() {
    let text = fixtures::TINYNET.replace(
        "stem_conv_out = { dims = [1, 16, 112, 112]",
        "stem_conv_out = { dims = [1, 16, 111, 112]",
    );
    assert_ne!(text, fixtures::TINYNET);
    let g = graph(&text);
    let err = compile(&g, &parse_config(fixtures::TINYNET_CONFIG).unwrap()).unwrap_err();
    assert!(matches!(err, CompileError::DeclaredMismatch { .. }), "{err}");
}

const WITH_CUSTOM: &str = r#"
format_version = 1
inputs = ["x"]
outputs = ["y"]

[edges]
x = { dims = [1, 3, 32, 32], dtype = "float32" }
c = { dims = [1, 8, 32, 32], dtype = "float32" }
z = { dims = [1, 8, 32, 32], dtype = "float32" }
y = { dims = [1, 8, 32, 32], dtype = "float32" }

[[nodes]]
id = "conv"
op = "conv2d"
inputs = ["x"]
outputs = ["c"]
attrs = { kernel = 3, stride = 1, padding = 1, out_channels = 8 }

[[nodes]]
id = "mystery"
op = "custom:warp"
inputs = ["c"]
outputs = ["z"]

[[nodes]]
id = "act"
op = "relu"
inputs = ["z"]
outputs = ["y"]
"#;

#[test]
fn custom_operators_pass_through() {
    let g = graph(WITH_CUSTOM);
    let c = compile(&g, &parse_config("").unwrap()).unwrap();
    assert_eq!(c.report.unmatched_ops, vec![("mystery".to_string(), "custom:warp".to_string())]);
    let built = apply_subnet(&c.model, &SubNetSpec::new()).unwrap();
    assert!(graph_isomorphic(&built, &g));
}

#[test]
fn report_is_deterministic() {
    let a = fixture("TinyNet-4S").compiled.report.to_string();
    let b = fixture("TinyNet-4S").compiled.report.to_string();
    assert_eq!(a, b);
    assert!(a.starts_with("# tailorforge-report v1\n"));
}
