use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::graph::{AttrValue, ComputationGraph, GraphNode, TensorShape};
use crate::modspace::{ChoiceValue, Modification};

use super::deduce::deduce;
use super::{HookRule, IrError, ModuleKind, ModulePath, ShapePair, TailorModule};

/// Knob names that are addressed by a dimension name different from their storage name.
pub(crate) const RESOLUTION: &str = "resolution";
pub(crate) const REDUCE_DEPTH: &str = "reduce_depth";

/// Applies one modification to the addressed knob. Shapes are not recomputed; chain [`update`].
pub fn transform(m: &TailorModule, modification: &Modification) -> Result<TailorModule, IrError> {
    let target = modification.dim.module_path().map_err(|_| IrError::UnknownPath(modification.dim.to_string()))?;
    let name = modification.dim.name();
    if !target.starts_with(&m.path) {
        return Err(IrError::UnknownPath(target.to_string()));
    }
    let mut out = set_knob(m, &target, name, modification.value)?;
    out.pending = true;
    Ok(out)
}

fn set_knob(
    m: &TailorModule,
    target: &ModulePath,
    name: &str,
    value: ChoiceValue,
) -> Result<TailorModule, IrError> {
    if &m.path == target {
        let knob = m.feature.knobs.get(name).ok_or_else(|| IrError::UnknownDimension {
            path: target.to_string(),
            name: name.to_string(),
        })?;
        let dim = format!("{}/{name}", if target.is_root() { "global".into() } else { target.to_string() });
        if let Some(choices) = &knob.choices {
            if !choices.contains(&value) {
                return Err(IrError::OutOfCandidates { dim, value });
            }
        }
        let illegal = |reason: String| IrError::Illegal { dim: dim.clone(), value, reason };
        if name == REDUCE_DEPTH {
            let r = value.as_i64().ok_or_else(|| illegal("depth reduction must be an integer".into()))?;
            if r > 0 {
                return Err(illegal("depth can only be reduced".into()));
            }
            if m.children.len() as i64 + r < 1 {
                return Err(illegal(format!("stage has only {} blocks", m.children.len())));
            }
        } else if value.get() <= 0.0 || value > knob.meta {
            return Err(illegal(format!("value must lie in (0, {}]", knob.meta)));
        }
        let mut out = m.clone();
        out.feature.knobs.get_mut(name).unwrap().active = value;
        return Ok(out);
    }
    let idx = m
        .children
        .iter()
        .position(|c| target.starts_with(&c.path))
        .ok_or_else(|| IrError::UnknownPath(target.to_string()))?;
    let child = set_knob(&m.children[idx], target, name, value)?;
    let mut out = m.clone();
    out.children[idx] = Arc::new(child);
    Ok(out)
}

struct Env {
    shapes: HashMap<String, (TensorShape, ModulePath)>,
}

impl Env {
    fn get(&self, edge: &str, user: &ModulePath) -> Result<&(TensorShape, ModulePath), IrError> {
        self.shapes.get(edge).ok_or_else(|| IrError::ShapeContradiction {
            path: user.to_string(),
            others: Vec::new(),
            reason: format!("input edge `{edge}` has no active producer"),
        })
    }
}

fn pair(old: Option<&ShapePair>, active: TensorShape) -> ShapePair {
    ShapePair { meta: old.map(|p| p.meta.clone()).unwrap_or_else(|| active.clone()), active }
}

fn pairs(old: &[ShapePair], active: Vec<TensorShape>) -> Vec<ShapePair> {
    active.into_iter().enumerate().map(|(i, s)| pair(old.get(i), s)).collect()
}

/// Recomputes every active attribute and shape top-down from the knobs.
///
/// Legality problems (e.g. a kernel larger than a shrunken feature map, concatenation of
/// mismatched widths) are reported with the paths of the operator and its producers.
pub fn update(m: &TailorModule) -> Result<TailorModule, IrError> {
    if m.kind != ModuleKind::Model {
        return Err(IrError::NotAModel);
    }
    let info = m.info.as_ref().ok_or(IrError::NotAModel)?;
    let mut env = Env { shapes: HashMap::new() };
    let mut in_active = Vec::new();
    for (edge, shape) in &info.inputs {
        let mut shape = shape.clone();
        if info.resolution_input.as_deref() == Some(edge.as_str()) {
            if let Some(k) = m.feature.knobs.get(RESOLUTION) {
                let r = k.active.as_i64().filter(|&r| r >= 1).ok_or_else(|| IrError::Illegal {
                    dim: format!("global/{RESOLUTION}"),
                    value: k.active,
                    reason: "resolution must be a positive integer".into(),
                })? as u64;
                let mut dims = shape.dims().to_vec();
                dims[2] = r;
                dims[3] = r;
                shape = shape.with_dims(dims).expect("positive extents");
            }
        }
        in_active.push(shape.clone());
        env.shapes.insert(edge.clone(), (shape, m.path.clone()));
    }
    let mut out = m.clone();
    out.pending = false;
    out.children = m
        .children
        .iter()
        .map(|c| walk(c, &mut env, true).map(Arc::new))
        .collect::<Result<_, _>>()?;
    out.feature.in_shapes = pairs(&m.feature.in_shapes, in_active);
    let outs = info
        .outputs
        .iter()
        .map(|e| env.get(e, &m.path).map(|(s, _)| s.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    out.feature.out_shapes = pairs(&m.feature.out_shapes, outs);
    Ok(out)
}

fn reset(m: &TailorModule) -> TailorModule {
    let mut out = m.clone();
    out.enabled = false;
    for a in out.feature.attrs.values_mut() {
        a.active = a.meta.clone();
    }
    for s in out.feature.in_shapes.iter_mut().chain(out.feature.out_shapes.iter_mut()) {
        s.active = s.meta.clone();
    }
    out.children = m.children.iter().map(|c| Arc::new(reset(c))).collect();
    out
}

fn walk(m: &TailorModule, env: &mut Env, enabled: bool) -> Result<TailorModule, IrError> {
    match m.kind {
        ModuleKind::Operator | ModuleKind::StaticBypass => {
            if !enabled {
                return Ok(reset(m));
            }
            let node = m.node.as_ref().expect("leaf modules wrap a node");
            let mut ins = Vec::with_capacity(node.inputs.len());
            let mut producers = Vec::new();
            for e in &node.inputs {
                let (s, p) = env.get(e, &m.path)?;
                ins.push(s.clone());
                producers.push(p.to_string());
            }
            let attrs = m.feature.active_attrs();
            let refs: Vec<&TensorShape> = ins.iter().collect();
            let outs = deduce(&node.op, &attrs, &refs, node.outputs.len()).map_err(|reason| {
                producers.dedup();
                IrError::ShapeContradiction { path: m.path.to_string(), others: producers, reason }
            })?;
            for (e, s) in node.outputs.iter().zip(&outs) {
                env.shapes.insert(e.clone(), (s.clone(), m.path.clone()));
            }
            let mut out = m.clone();
            out.enabled = true;
            out.feature.in_shapes = pairs(&m.feature.in_shapes, ins);
            out.feature.out_shapes = pairs(&m.feature.out_shapes, outs);
            Ok(out)
        }
        ModuleKind::Block => {
            let (entry, exit) = m.io.clone().expect("blocks have an entry and exit");
            let (in_shape, in_producer) = env.get(&entry, &m.path)?.clone();
            if !enabled {
                if let (Some(i), Some(o)) = (m.feature.in_shapes.first(), m.feature.out_shapes.first()) {
                    if i.meta != o.meta {
                        return Err(IrError::ShapeContradiction {
                            path: m.path.to_string(),
                            others: vec![in_producer.to_string()],
                            reason: format!("cannot drop a block mapping {} to {}", i.meta, o.meta),
                        });
                    }
                }
                env.shapes.insert(exit, (in_shape.clone(), in_producer));
                let mut out = reset(m);
                out.feature.in_shapes = pairs(&m.feature.in_shapes, vec![in_shape.clone()]);
                out.feature.out_shapes = pairs(&m.feature.out_shapes, vec![in_shape]);
                return Ok(out);
            }
            let mut children: Vec<TailorModule> = m.children.iter().map(|c| (**c).clone()).collect();
            for (name, rule) in &m.hooks {
                let Some(knob) = m.feature.knobs.get(name) else { continue };
                let v = knob.active.get();
                for (idx, attr) in rule.targets() {
                    let child = &mut children[*idx];
                    let pair = child.feature.attrs.get_mut(attr).expect("hook targets exist");
                    let meta = pair.meta.as_int().expect("hook targets are integers");
                    let base = match rule {
                        HookRule::ExpandFromInput { base, .. } => *base as f64,
                        HookRule::ScaleMeta { .. } => meta as f64,
                    };
                    pair.active = AttrValue::Int(((base * v).round() as i64).max(1));
                }
            }
            let mut out = m.clone();
            out.enabled = true;
            out.children = children
                .iter()
                .map(|c| walk(c, env, true).map(Arc::new))
                .collect::<Result<_, _>>()?;
            let out_shape = env.get(&exit, &m.path)?.0.clone();
            out.feature.in_shapes = pairs(&m.feature.in_shapes, vec![in_shape]);
            out.feature.out_shapes = pairs(&m.feature.out_shapes, vec![out_shape]);
            Ok(out)
        }
        ModuleKind::Stage => {
            let (entry, exit) = m.io.clone().expect("stages have an entry and exit");
            let in_shape = env.get(&entry, &m.path)?.0.clone();
            let depth = m.children.len() as i64
                + m.feature.knobs.get(REDUCE_DEPTH).and_then(|k| k.active.as_i64()).unwrap_or(0);
            let mut out = m.clone();
            out.children = m
                .children
                .iter()
                .enumerate()
                .map(|(i, c)| walk(c, env, enabled && (i as i64) < depth).map(Arc::new))
                .collect::<Result<_, _>>()?;
            let out_shape = env.get(&exit, &m.path)?.0.clone();
            out.feature.in_shapes = pairs(&m.feature.in_shapes, vec![in_shape]);
            out.feature.out_shapes = pairs(&m.feature.out_shapes, vec![out_shape]);
            Ok(out)
        }
        ModuleKind::Model => Err(IrError::NotAModel),
    }
}

fn check_built(m: &TailorModule) -> Result<(), IrError> {
    if m.kind != ModuleKind::Model {
        return Err(IrError::NotAModel);
    }
    if m.pending || m.feature.out_shapes.is_empty() {
        return Err(IrError::NotUpdated);
    }
    Ok(())
}

/// Maps the exit edge of every dropped block to its entry edge, resolved transitively.
pub(crate) fn alias_map(m: &TailorModule) -> HashMap<String, String> {
    let mut alias = HashMap::new();
    for d in m.descendants() {
        if d.kind == ModuleKind::Block && !d.enabled {
            let (entry, exit) = d.io.clone().unwrap();
            alias.insert(exit, entry);
        }
    }
    alias
}

pub(crate) fn resolve<'a>(alias: &'a HashMap<String, String>, mut e: &'a str) -> &'a str {
    while let Some(next) = alias.get(e) {
        e = next;
    }
    e
}

/// Emits the active-architecture graph: dropped blocks are skipped, every other operator is
/// emitted with its active attributes and shapes.
pub fn build(m: &TailorModule) -> Result<ComputationGraph, IrError> {
    check_built(m)?;
    let info = m.info.as_ref().unwrap();
    let alias = alias_map(m);
    let mut edges: BTreeMap<String, Option<TensorShape>> = BTreeMap::new();
    for ((e, _), s) in info.inputs.iter().zip(&m.feature.in_shapes) {
        edges.insert(e.clone(), Some(s.active.clone()));
    }
    let mut nodes = Vec::new();
    for leaf in m.leaves().into_iter().filter(|l| l.enabled) {
        let src = leaf.node.as_ref().unwrap();
        let inputs: Vec<String> =
            src.inputs.iter().map(|e| resolve(&alias, e).to_string()).collect();
        for (e, s) in src.outputs.iter().zip(&leaf.feature.out_shapes) {
            let shape = info.declared.contains(e).then(|| s.active.clone());
            edges.insert(e.clone(), shape);
        }
        nodes.push(GraphNode::new(
            src.id.clone(),
            src.op.clone(),
            leaf.feature.active_attrs(),
            inputs,
            src.outputs.clone(),
        ));
    }
    let outputs = info.outputs.iter().map(|e| resolve(&alias, e).to_string()).collect();
    ComputationGraph::new(nodes, edges, info.inputs.iter().map(|(e, _)| e.clone()).collect(), outputs, info.metadata.clone())
        .map_err(|e| IrError::Build(e.to_string()))
}

/// Active input and output shapes of one operator-level module.
#[derive(Clone, Debug, PartialEq)]
pub struct OpShapes {
    pub in_shapes: Vec<TensorShape>,
    pub out_shapes: Vec<TensorShape>,
}

/// Active shapes of every enabled operator-level module, read from the updated tree.
pub fn infer_shapes(m: &TailorModule) -> Result<BTreeMap<ModulePath, OpShapes>, IrError> {
    check_built(m)?;
    Ok(m.leaves()
        .into_iter()
        .filter(|l| l.enabled)
        .map(|l| {
            let f = &l.feature;
            (
                l.path.clone(),
                OpShapes {
                    in_shapes: f.in_shapes.iter().map(|s| s.active.clone()).collect(),
                    out_shapes: f.out_shapes.iter().map(|s| s.active.clone()).collect(),
                },
            )
        })
        .collect())
}
