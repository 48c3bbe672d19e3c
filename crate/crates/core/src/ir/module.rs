use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::graph::{AttrValue, GraphNode, TensorShape};
use crate::modspace::ChoiceValue;

/// One step of a hierarchical module address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Segment {
    Stage(usize),
    Block(usize),
    Op(usize),
}

/// Hierarchical address of a module below the model root, e.g. `stage[0]/block[2]/op[1]`.
///
/// Siblings are numbered per kind: the model's loose operators are `op[0]`, `op[1]`, ... and its
/// stages `stage[0]`, `stage[1]`, ... regardless of how they interleave.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModulePath(Vec<Segment>);

impl ModulePath {
    pub fn root() -> Self {
        ModulePath(Vec::new())
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.0
    }

    pub fn child(&self, seg: Segment) -> Self {
        let mut v = self.0.clone();
        v.push(seg);
        ModulePath(v)
    }

    pub fn parent(&self) -> Option<ModulePath> {
        (!self.0.is_empty()).then(|| ModulePath(self.0[..self.0.len() - 1].to_vec()))
    }

    pub fn starts_with(&self, prefix: &ModulePath) -> bool {
        self.0.starts_with(&prefix.0)
    }

    /// The enclosing block path, if this path is inside a block.
    pub fn block(&self) -> Option<ModulePath> {
        let i = self.0.iter().position(|s| matches!(s, Segment::Block(_)))?;
        Some(ModulePath(self.0[..=i].to_vec()))
    }
}

impl fmt::Display for ModulePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("model");
        }
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            match s {
                Segment::Stage(k) => write!(f, "stage[{k}]")?,
                Segment::Block(k) => write!(f, "block[{k}]")?,
                Segment::Op(k) => write!(f, "op[{k}]")?,
            }
        }
        Ok(())
    }
}

impl FromStr for ModulePath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "model" || s.is_empty() {
            return Ok(ModulePath::root());
        }
        s.split('/')
            .map(|part| {
                let (kind, rest) = part.split_once('[').ok_or_else(|| format!("bad path `{s}`"))?;
                let idx: usize = rest
                    .strip_suffix(']')
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| format!("bad path `{s}`"))?;
                match kind {
                    "stage" => Ok(Segment::Stage(idx)),
                    "block" => Ok(Segment::Block(idx)),
                    "op" => Ok(Segment::Op(idx)),
                    _ => Err(format!("bad path `{s}`")),
                }
            })
            .collect::<Result<Vec<_>, _>>()
            .map(ModulePath)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModuleKind {
    Operator,
    StaticBypass,
    Block,
    Stage,
    Model,
}

impl ModuleKind {
    pub fn is_leaf(self) -> bool {
        matches!(self, ModuleKind::Operator | ModuleKind::StaticBypass)
    }
}

/// Maximal and currently selected value of an operator attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct AttrPair {
    pub meta: AttrValue,
    pub active: AttrValue,
}

/// A modification knob exposed by a module.
#[derive(Clone, Debug, PartialEq)]
pub struct Knob {
    pub meta: ChoiceValue,
    pub active: ChoiceValue,
    /// Candidate values once a modification space has been bound.
    pub choices: Option<Vec<ChoiceValue>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapePair {
    pub meta: TensorShape,
    pub active: TensorShape,
}

/// Meta (maximal) and active architecture of a module.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Feature {
    pub attrs: BTreeMap<String, AttrPair>,
    pub knobs: BTreeMap<String, Knob>,
    pub in_shapes: Vec<ShapePair>,
    pub out_shapes: Vec<ShapePair>,
}

impl Feature {
    pub fn active_attrs(&self) -> BTreeMap<String, AttrValue> {
        self.attrs.iter().map(|(k, v)| (k.clone(), v.active.clone())).collect()
    }
}

/// How a block knob rewrites the attributes of its operators.
#[derive(Clone, Debug, PartialEq)]
pub enum HookRule {
    /// `attr` of each target becomes `round(base * value)`; `base` is the block's entry width.
    ExpandFromInput { targets: Vec<(usize, String)>, base: u64 },
    /// `attr` of each target becomes `round(meta * value)`.
    ScaleMeta { targets: Vec<(usize, String)> },
}

impl HookRule {
    pub fn targets(&self) -> &[(usize, String)] {
        match self {
            HookRule::ExpandFromInput { targets, .. } | HookRule::ScaleMeta { targets } => targets,
        }
    }
}

/// Graph-level facts kept on the model root so `build` can emit a complete graph.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInfo {
    pub inputs: Vec<(String, TensorShape)>,
    pub outputs: Vec<String>,
    /// Edges whose shape was declared in the source graph.
    pub declared: BTreeSet<String>,
    pub metadata: BTreeMap<String, String>,
    /// The image input whose spatial extents follow the `resolution` knob.
    pub resolution_input: Option<String>,
}

/// A node of the TailorIR tree: an operator, a bypassed static operator, a block, a stage or the
/// whole model.
#[derive(Clone, Debug, PartialEq)]
pub struct TailorModule {
    pub(crate) kind: ModuleKind,
    pub(crate) path: ModulePath,
    pub(crate) feature: Feature,
    pub(crate) children: Vec<Arc<TailorModule>>,
    pub(crate) template: Option<String>,
    pub(crate) source_nodes: Vec<String>,
    pub(crate) enabled: bool,
    pub(crate) node: Option<Arc<GraphNode>>,
    /// Entry and exit edge of blocks and stages.
    pub(crate) io: Option<(String, String)>,
    pub(crate) hooks: BTreeMap<String, HookRule>,
    pub(crate) info: Option<Arc<ModelInfo>>,
    /// Set by `transform`, cleared by `update`.
    pub(crate) pending: bool,
}

impl TailorModule {
    pub(crate) fn leaf(node: Arc<GraphNode>) -> Self {
        let kind =
            if node.op.is_dynamic() { ModuleKind::Operator } else { ModuleKind::StaticBypass };
        let attrs = node
            .attrs
            .iter()
            .map(|(k, v)| (k.clone(), AttrPair { meta: v.clone(), active: v.clone() }))
            .collect();
        TailorModule {
            kind,
            path: ModulePath::root(),
            feature: Feature { attrs, ..Feature::default() },
            children: Vec::new(),
            template: None,
            source_nodes: vec![node.id.clone()],
            enabled: true,
            node: Some(node),
            io: None,
            hooks: BTreeMap::new(),
            info: None,
            pending: false,
        }
    }

    pub(crate) fn group(kind: ModuleKind, children: Vec<TailorModule>, io: (String, String)) -> Self {
        let source_nodes = children.iter().flat_map(|c| c.source_nodes.clone()).collect();
        TailorModule {
            kind,
            path: ModulePath::root(),
            feature: Feature::default(),
            children: children.into_iter().map(Arc::new).collect(),
            template: None,
            source_nodes,
            enabled: true,
            node: None,
            io: Some(io),
            hooks: BTreeMap::new(),
            info: None,
            pending: false,
        }
    }

    pub fn kind(&self) -> ModuleKind {
        self.kind
    }

    pub fn path(&self) -> &ModulePath {
        &self.path
    }

    pub fn feature(&self) -> &Feature {
        &self.feature
    }

    pub fn children(&self) -> impl ExactSizeIterator<Item = &TailorModule> {
        self.children.iter().map(|c| c.as_ref())
    }

    pub fn template(&self) -> Option<&str> {
        self.template.as_deref()
    }

    pub fn source_nodes(&self) -> &[String] {
        &self.source_nodes
    }

    /// False for blocks (and their operators) dropped by a stage depth reduction.
    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    /// The wrapped graph node of an operator-level module.
    pub fn node(&self) -> Option<&GraphNode> {
        self.node.as_deref()
    }

    pub fn entry_exit(&self) -> Option<(&str, &str)> {
        self.io.as_ref().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn hooks(&self) -> &BTreeMap<String, HookRule> {
        &self.hooks
    }

    pub fn model_info(&self) -> Option<&ModelInfo> {
        self.info.as_deref()
    }

    pub fn is_pending(&self) -> bool {
        self.pending
    }

    pub fn knob(&self, name: &str) -> Option<&Knob> {
        self.feature.knobs.get(name)
    }

    /// Number of enabled blocks of a stage.
    pub fn active_depth(&self) -> usize {
        self.children.iter().filter(|c| c.enabled).count()
    }

    /// Operator-level modules in execution order, including disabled ones.
    pub fn leaves(&self) -> Vec<&TailorModule> {
        let mut out = Vec::new();
        fn walk<'a>(m: &'a TailorModule, out: &mut Vec<&'a TailorModule>) {
            if m.kind.is_leaf() {
                out.push(m);
            }
            for c in &m.children {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }

    /// All modules in pre-order.
    pub fn descendants(&self) -> Vec<&TailorModule> {
        let mut out = vec![self];
        let mut i = 0;
        while i < out.len() {
            let m = out[i];
            // pre-order: insert children right after their parent
            let kids: Vec<&TailorModule> = m.children.iter().map(|c| c.as_ref()).collect();
            out.splice(i + 1..i + 1, kids);
            i += 1;
        }
        out
    }

    pub fn find(&self, path: &ModulePath) -> Option<&TailorModule> {
        if &self.path == path {
            return Some(self);
        }
        self.children.iter().find(|c| path.starts_with(&c.path)).and_then(|c| c.find(path))
    }

    pub fn stages(&self) -> impl Iterator<Item = &TailorModule> {
        self.children().filter(|c| c.kind == ModuleKind::Stage)
    }

    /// Assigns paths to every module below `self`, which becomes the root.
    pub(crate) fn assign_paths(&mut self, path: ModulePath) {
        self.path = path.clone();
        let (mut stages, mut blocks, mut ops) = (0, 0, 0);
        for c in &mut self.children {
            let c = Arc::make_mut(c);
            let seg = match c.kind {
                ModuleKind::Stage => {
                    stages += 1;
                    Segment::Stage(stages - 1)
                }
                ModuleKind::Block => {
                    blocks += 1;
                    Segment::Block(blocks - 1)
                }
                _ => {
                    ops += 1;
                    Segment::Op(ops - 1)
                }
            };
            c.assign_paths(path.child(seg));
        }
    }

    /// Indented human-readable dump of the tree.
    pub fn render(&self) -> String {
        let mut out = String::new();
        fn walk(m: &TailorModule, depth: usize, out: &mut String) {
            use std::fmt::Write;
            let pad = "  ".repeat(depth);
            let kind = match m.kind {
                ModuleKind::Operator => "operator",
                ModuleKind::StaticBypass => "static_bypass",
                ModuleKind::Block => "block",
                ModuleKind::Stage => "stage",
                ModuleKind::Model => "model",
            };
            let _ = write!(out, "{pad}{} {kind}", m.path);
            if let Some(t) = &m.template {
                let _ = write!(out, " {t}");
            }
            if let Some(n) = &m.node {
                let _ = write!(out, " {} ({})", n.op, n.id);
            }
            for (k, v) in &m.feature.knobs {
                let _ = write!(out, " {k}={}/{}", v.active, v.meta);
            }
            if let Some(s) = m.feature.out_shapes.first() {
                let _ = write!(out, " -> {}", s.active);
            }
            if !m.enabled {
                out.push_str(" [inactive]");
            }
            out.push('\n');
            for c in &m.children {
                walk(c, depth + 1, out);
            }
        }
        walk(self, 0, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_text() {
        let p: ModulePath = "stage[0]/block[2]/op[1]".parse().unwrap();
        assert_eq!(p.to_string(), "stage[0]/block[2]/op[1]");
        assert_eq!(p.block().unwrap().to_string(), "stage[0]/block[2]");
        assert_eq!(ModulePath::root().to_string(), "model");
        assert!("stage[0]/lane[1]".parse::<ModulePath>().is_err());
    }
}
