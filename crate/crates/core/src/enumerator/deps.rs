use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::graph::{AttrValue, OpKind};
use crate::ir::{ModelInfo, ModulePath, Segment, TailorModule, RESOLUTION};
use crate::modspace::{DimId, ModificationSpace};

type Deps = BTreeSet<usize>;

/// Per operator position, the dimensions whose value can change that operator's key.
///
/// Built by propagating, per tensor axis, the set of dimensions that can change that axis's
/// extent: the resolution dimension enters at the spatial axes of the image input, block hooks
/// enter at the attributes they rewrite, and every operator maps input-axis sets to output-axis
/// sets following its shape rule. Depth dimensions never enter.
#[derive(Clone, Debug, PartialEq)]
pub struct DependencyMap {
    leaves: Vec<(ModulePath, Deps)>,
    ids: Vec<DimId>,
}

impl DependencyMap {
    /// Dimension indices (into the space) affecting the leaf at `leaf` (in `leaves()` order).
    pub fn leaf_deps(&self, leaf: usize) -> &BTreeSet<usize> {
        &self.leaves[leaf].1
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn get(&self, path: &ModulePath) -> Option<BTreeSet<DimId>> {
        self.leaves.iter().find(|(p, _)| p == path).map(|(_, d)| self.named(d))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ModulePath, BTreeSet<DimId>)> + '_ {
        self.leaves.iter().map(|(p, d)| (p, self.named(d)))
    }

    fn named(&self, d: &Deps) -> BTreeSet<DimId> {
        d.iter().map(|&i| self.ids[i].clone()).collect()
    }
}

fn union<'a>(sets: impl IntoIterator<Item = &'a Deps>) -> Deps {
    sets.into_iter().flatten().copied().collect()
}

fn norm_axis(axis: i64, rank: usize) -> usize {
    if axis < 0 {
        (rank as i64 + axis).max(0) as usize
    } else {
        (axis as usize).min(rank.saturating_sub(1))
    }
}

/// Right-aligned elementwise union of two axis-dependency vectors.
fn broadcast(a: &[Deps], b: &[Deps]) -> Vec<Deps> {
    let rank = a.len().max(b.len());
    (0..rank)
        .map(|i| {
            let pick = |v: &[Deps]| (i + v.len()).checked_sub(rank).map(|j| v[j].clone()).unwrap_or_default();
            union([&pick(a), &pick(b)])
        })
        .collect()
}

fn axis_rule(
    leaf: &TailorModule,
    ins: &[Vec<Deps>],
    attr_deps: &BTreeMap<String, Deps>,
) -> Vec<Vec<Deps>> {
    let node = leaf.node().unwrap();
    let attr = |name: &str| attr_deps.get(name).cloned().unwrap_or_default();
    let out_rank = |k: usize| leaf.feature().out_shapes[k].meta.rank();
    let x = &ins[0];
    let same = || vec![x.clone(); node.outputs.len()];
    match &node.op {
        OpKind::Conv2d => {
            let mut out = x.clone();
            out[1] = attr("out_channels");
            vec![out]
        }
        OpKind::MatMul if ins.len() == 1 => {
            let mut out = x.clone();
            *out.last_mut().unwrap() = attr("out_features");
            vec![out]
        }
        OpKind::MatMul => {
            let (a, b) = (x, &ins[1]);
            let (ra, rb) = (a.len(), b.len());
            let mut out = broadcast(&a[..ra - 2], &b[..rb - 2]);
            out.push(a[ra - 2].clone());
            out.push(b[rb - 1].clone());
            vec![out]
        }
        OpKind::Add | OpKind::Mul if ins.len() == 2 => vec![broadcast(x, &ins[1])],
        OpKind::GlobalPool => {
            let mut out = x.clone();
            out[2..].iter_mut().for_each(|d| d.clear());
            vec![out]
        }
        OpKind::Reshape => {
            let target = node.attrs.get("shape").and_then(AttrValue::as_ints).unwrap_or(&[]);
            let all = union(x.iter());
            vec![target.iter().map(|&t| if t == -1 { all.clone() } else { Deps::new() }).collect()]
        }
        OpKind::Transpose => {
            let perm = node.attrs.get("perm").and_then(AttrValue::as_ints).unwrap_or(&[]);
            vec![perm.iter().map(|&p| x[p as usize].clone()).collect()]
        }
        OpKind::Concat => {
            let rank = x.len();
            vec![(0..rank).map(|i| union(ins.iter().map(|v| &v[i]))).collect()]
        }
        OpKind::Split => {
            let axis = norm_axis(node.attrs.get("axis").and_then(AttrValue::as_int).unwrap_or(0), x.len());
            let mut out = x.clone();
            out[axis].clear();
            vec![out; node.outputs.len()]
        }
        OpKind::Custom(_) => (0..node.outputs.len())
            .map(|k| if out_rank(k) == x.len() { x.clone() } else { vec![union(x.iter()); out_rank(k)] })
            .collect(),
        _ => same(),
    }
}

fn input_deps(info: &ModelInfo, space: &ModificationSpace) -> HashMap<String, Vec<Deps>> {
    let res = space.index_of(&DimId::global(RESOLUTION));
    info.inputs
        .iter()
        .map(|(e, s)| {
            let mut v = vec![Deps::new(); s.rank()];
            if let (Some(r), true) = (res, info.resolution_input.as_deref() == Some(e.as_str())) {
                v[2].insert(r);
                v[3].insert(r);
            }
            (e.clone(), v)
        })
        .collect()
}

/// Static dependency analysis of every operator position of a compiled model.
pub fn dependency_groups(model: &TailorModule, space: &ModificationSpace) -> DependencyMap {
    let info = model.model_info().expect("dependency analysis runs on a model root");
    let mut env = input_deps(info, space);
    let mut leaves = Vec::new();
    for leaf in model.leaves() {
        let mut attr_deps: BTreeMap<String, Deps> = BTreeMap::new();
        if let (Some(bp), Some(Segment::Op(k))) = (leaf.path().block(), leaf.path().segments().last()) {
            let block = model.find(&bp).expect("block exists");
            for (name, rule) in block.hooks() {
                let Some(d) = space.index_of(&DimId::at(&bp, name)) else { continue };
                for (idx, attr) in rule.targets() {
                    if idx == k {
                        attr_deps.entry(attr.clone()).or_default().insert(d);
                    }
                }
            }
        }
        let node = leaf.node().unwrap();
        let ins: Vec<Vec<Deps>> = node.inputs.iter().map(|e| env[e].clone()).collect();
        let outs = axis_rule(leaf, &ins, &attr_deps);
        let mut all = union(ins.iter().flatten());
        all.extend(union(outs.iter().flatten()));
        all.extend(union(attr_deps.values()));
        for (e, d) in node.outputs.iter().zip(outs) {
            env.insert(e.clone(), d);
        }
        leaves.push((leaf.path().clone(), all));
    }
    DependencyMap { leaves, ids: space.dims().iter().map(|d| d.id.clone()).collect() }
}
