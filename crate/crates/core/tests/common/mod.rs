//! Test-side oracles, written against the graph data model only.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use tailorforge::compiler::{compile, Compiled};
use tailorforge::enumerator::{FusionRules, OpFeature, OperatorFeatureKey};
use tailorforge::fixtures;
use tailorforge::graph::{load_graph, AttrValue, Attrs, ComputationGraph, GraphNode, OpKind, TensorShape};
use tailorforge::modspace::{parse_config, ModificationSpace, SubNetSpec};
use tailorforge::predictors::{quantize, AnalyticalBackend};

pub struct Fixture {
    pub name: &'static str,
    pub graph: ComputationGraph,
    pub compiled: Compiled,
}

pub fn fixture(name: &str) -> Fixture {
    let (name, g, c) = fixtures::all().into_iter().find(|(n, _, _)| *n == name).expect("known fixture");
    let graph = load_graph(g.as_bytes()).unwrap();
    let compiled = compile(&graph, &parse_config(c).unwrap()).unwrap();
    Fixture { name, graph, compiled }
}

pub fn all_fixtures() -> Vec<Fixture> {
    fixtures::all().iter().map(|(n, _, _)| fixture(n)).collect()
}

/// Every distinct SubNet, found by walking the full index product and deduplicating spec text.
pub fn all_specs(space: &ModificationSpace) -> Vec<SubNetSpec> {
    let sizes: Vec<usize> = space.dims().iter().map(|d| d.candidates.len()).collect();
    let mut idx = vec![0; sizes.len()];
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    loop {
        let spec = space.decode(&idx);
        if seen.insert(spec.to_string()) {
            out.push(spec);
        }
        let mut i = sizes.len();
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < sizes[i] {
                break;
            }
            idx[i] = 0;
        }
    }
}

fn int(attrs: &Attrs, name: &str, default: i64) -> i64 {
    attrs.get(name).and_then(AttrValue::as_int).unwrap_or(default)
}

fn ints<'a>(attrs: &'a Attrs, name: &str) -> &'a [i64] {
    attrs.get(name).and_then(AttrValue::as_ints).unwrap()
}

fn axis(a: i64, rank: usize) -> usize {
    if a < 0 {
        (rank as i64 + a) as usize
    } else {
        a as usize
    }
}

fn bcast(a: &[u64], b: &[u64]) -> Vec<u64> {
    let r = a.len().max(b.len());
    (0..r)
        .map(|i| {
            let x = if i + a.len() >= r { a[i + a.len() - r] } else { 1 };
            let y = if i + b.len() >= r { b[i + b.len() - r] } else { 1 };
            assert!(x == y || x == 1 || y == 1, "incompatible broadcast {a:?} {b:?}");
            x.max(y)
        })
        .collect()
}

/// Output dims of one node, re-derived from textbook shape rules.
pub fn node_out_dims(n: &GraphNode, ins: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let x = &ins[0];
    let spatial = |h: u64, k: i64, s: i64, p: i64| ((h as i64 + 2 * p - k) / s + 1) as u64;
    match &n.op {
        OpKind::Conv2d | OpKind::DepthwiseConv2d | OpKind::PoolAvg | OpKind::PoolMax => {
            let (k, s, p) = (int(&n.attrs, "kernel", 1), int(&n.attrs, "stride", 1), int(&n.attrs, "padding", 0));
            let c = if n.op == OpKind::Conv2d { int(&n.attrs, "out_channels", 0) as u64 } else { x[1] };
            vec![vec![x[0], c, spatial(x[2], k, s, p), spatial(x[3], k, s, p)]]
        }
        OpKind::MatMul if ins.len() == 1 => {
            let mut d = x.clone();
            *d.last_mut().unwrap() = int(&n.attrs, "out_features", 0) as u64;
            vec![d]
        }
        OpKind::MatMul => {
            let (a, b) = (x, &ins[1]);
            assert_eq!(a[a.len() - 1], b[b.len() - 2]);
            let mut d = bcast(&a[..a.len() - 2], &b[..b.len() - 2]);
            d.extend([a[a.len() - 2], b[b.len() - 1]]);
            vec![d]
        }
        OpKind::Add | OpKind::Mul if ins.len() == 2 => vec![bcast(x, &ins[1])],
        OpKind::GlobalPool => {
            let mut d = x.clone();
            d[2..].iter_mut().for_each(|v| *v = 1);
            vec![d]
        }
        OpKind::Reshape => {
            let total: u64 = x.iter().product();
            let t = ints(&n.attrs, "shape");
            let known: u64 = t.iter().filter(|&&v| v > 0).map(|&v| v as u64).product();
            vec![t.iter().map(|&v| if v == -1 { total / known } else { v as u64 }).collect()]
        }
        OpKind::Transpose => vec![ints(&n.attrs, "perm").iter().map(|&p| x[p as usize]).collect()],
        OpKind::Concat => {
            let a = axis(int(&n.attrs, "axis", 0), x.len());
            let mut d = x.clone();
            d[a] = ins.iter().map(|v| v[a]).sum();
            vec![d]
        }
        OpKind::Split => {
            let a = axis(int(&n.attrs, "axis", 0), x.len());
            ints(&n.attrs, "sizes")
                .iter()
                .map(|&s| {
                    let mut d = x.clone();
                    d[a] = s as u64;
                    d
                })
                .collect()
        }
        _ => vec![x.clone(); n.outputs.len()],
    }
}

/// Shapes of every edge of a graph, propagated node by node from the declared inputs.
pub fn propagate(g: &ComputationGraph) -> HashMap<String, TensorShape> {
    let mut env: HashMap<String, TensorShape> = HashMap::new();
    for e in g.inputs() {
        env.insert(e.clone(), g.edge_shape(e).unwrap().clone());
    }
    for n in g.nodes() {
        let ins: Vec<Vec<u64>> = n.inputs.iter().map(|e| env[e].dims().to_vec()).collect();
        let dtype = env[&n.inputs[0]].dtype();
        for (e, d) in n.outputs.iter().zip(node_out_dims(n, &ins)) {
            env.insert(e.clone(), TensorShape::new(d, dtype).unwrap());
        }
    }
    env
}

/// Greedy fusion over a graph's node list: longest rule first, single-consumer chains through
/// input slot 0, never through a graph output.
pub fn fuse_groups(g: &ComputationGraph, rules: &FusionRules) -> Vec<Vec<usize>> {
    let mut rules: Vec<_> = rules.rules().to_vec();
    rules.sort_by(|a, b| b.pattern.len().cmp(&a.pattern.len()));
    let mut used = vec![false; g.nodes().len()];
    let mut groups = Vec::new();
    for i in 0..g.nodes().len() {
        if used[i] {
            continue;
        }
        let mut best = vec![i];
        'rules: for r in &rules {
            let mut chain = vec![i];
            if g.nodes()[i].op != r.pattern[0] {
                continue;
            }
            for op in &r.pattern[1..] {
                let cur = &g.nodes()[*chain.last().unwrap()];
                if cur.outputs.len() != 1 || g.outputs().contains(&cur.outputs[0]) {
                    continue 'rules;
                }
                let cons = g.consumers(&cur.outputs[0]);
                if cons.len() != 1 {
                    continue 'rules;
                }
                let nx = &g.nodes()[cons[0]];
                if used[cons[0]] || &nx.op != op || nx.inputs[0] != cur.outputs[0] {
                    continue 'rules;
                }
                chain.push(cons[0]);
            }
            best = chain;
            break;
        }
        for &j in &best {
            used[j] = true;
        }
        groups.push(best);
    }
    groups
}

pub fn node_feature(g: &ComputationGraph, shapes: &HashMap<String, TensorShape>, i: usize) -> OpFeature {
    let n = &g.nodes()[i];
    OpFeature {
        op: n.op.to_string(),
        attrs: n.attrs.clone(),
        in_shapes: n.inputs.iter().map(|e| shapes[e].clone()).collect(),
        out_shapes: n.outputs.iter().map(|e| shapes[e].clone()).collect(),
    }
}

/// Keys of a built graph, one per fusion group.
pub fn graph_keys(g: &ComputationGraph, rules: &FusionRules) -> Vec<OperatorFeatureKey> {
    let shapes = propagate(g);
    fuse_groups(g, rules)
        .iter()
        .map(|grp| OperatorFeatureKey::new(grp.iter().map(|&i| node_feature(g, &shapes, i)).collect()))
        .collect()
}

fn node_macs(g: &ComputationGraph, s: &HashMap<String, TensorShape>, i: usize) -> u64 {
    let n = &g.nodes()[i];
    let out: u64 = n.outputs.iter().map(|e| s[e].numel()).sum();
    let x = s[&n.inputs[0]].dims();
    let k = int(&n.attrs, "kernel", 1) as u64;
    match n.op {
        OpKind::Conv2d => out * x[1] * k * k,
        OpKind::DepthwiseConv2d | OpKind::PoolAvg | OpKind::PoolMax => out * k * k,
        OpKind::MatMul => out * x[x.len() - 1],
        OpKind::GlobalPool => x.iter().product(),
        OpKind::Identity | OpKind::Reshape | OpKind::Transpose | OpKind::Concat | OpKind::Split => 0,
        _ => out,
    }
}

/// Whole-graph costing under the analytical backend's constants.
pub fn graph_latency(g: &ComputationGraph, rules: &FusionRules, dev: &AnalyticalBackend) -> f64 {
    let s = propagate(g);
    let mut total = 0.0;
    for grp in fuse_groups(g, rules) {
        let macs: u64 = grp.iter().map(|&i| node_macs(g, &s, i)).sum();
        let mut io = 0u64;
        for (j, &i) in grp.iter().enumerate() {
            let n = &g.nodes()[i];
            io += n.inputs.iter().skip(usize::from(j > 0)).map(|e| s[e].bytes()).sum::<u64>();
        }
        io += g.nodes()[*grp.last().unwrap()].outputs.iter().map(|e| s[e].bytes()).sum::<u64>();
        let op = g.nodes()[grp[0]].op.to_string();
        total += quantize(dev.alpha() * macs as f64 + dev.beta() * io as f64 + dev.gamma(&op));
    }
    total
}

/// Parameter bytes and brute-force liveness peak over the node list of a built graph.
pub fn graph_memory(g: &ComputationGraph) -> (u64, u64) {
    let s = propagate(g);
    let mut params = 0;
    for n in g.nodes() {
        let x = &s[&n.inputs[0]];
        let w = x.dtype().size_bytes();
        let bias = int(&n.attrs, "bias", 1) as u64;
        params += w * match n.op {
            OpKind::Conv2d => {
                let (k, c) = (int(&n.attrs, "kernel", 1) as u64, int(&n.attrs, "out_channels", 0) as u64);
                k * k * x.dims()[1] * c + bias * c
            }
            OpKind::DepthwiseConv2d => {
                let k = int(&n.attrs, "kernel", 1) as u64;
                (k * k + bias) * x.dims()[1]
            }
            OpKind::MatMul if n.inputs.len() == 1 => {
                let c = int(&n.attrs, "out_features", 0) as u64;
                (x.dims()[x.rank() - 1] + bias) * c
            }
            OpKind::BatchNorm => 2 * x.dims()[1],
            OpKind::LayerNorm => 2 * x.dims()[x.rank() - 1],
            _ => 0,
        };
    }
    // buffer of each edge: views share their input's buffer
    let mut buf: HashMap<String, String> = g.inputs().iter().map(|e| (e.clone(), e.clone())).collect();
    for n in g.nodes() {
        for e in &n.outputs {
            let b = if matches!(n.op, OpKind::Identity | OpKind::Reshape) { buf[&n.inputs[0]].clone() } else { e.clone() };
            buf.insert(e.clone(), b);
        }
    }
    let steps = g.nodes().len();
    let mut peak = 0;
    for t in 0..steps {
        // a buffer is live at step t if it exists by t and some edge on it is used at or after t
        let mut live: BTreeSet<String> = BTreeSet::new();
        for (e, b) in &buf {
            let born = g.producer(e).unwrap_or(0);
            let last_use = g.consumers(e).iter().copied().max();
            let end = if g.outputs().contains(e) { steps } else { last_use.unwrap_or(born) };
            if born <= t && t <= end {
                live.insert(b.clone());
            }
        }
        peak = peak.max(live.iter().map(|b| s[b].bytes()).sum());
    }
    (params, peak)
}
