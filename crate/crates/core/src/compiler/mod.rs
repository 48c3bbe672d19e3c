//! Three-step compilation of a computation graph into a TailorIR SuperNet.
//!
//! 1. [`parse_operators`] wraps every node as an operator or static-bypass module and groups
//!    fork-join regions (traced to their nearest common post-dominator) into `DefaultBlock`s.
//! 2. [`match_blocks`] replaces regions and operator runs that match a [`BlockTemplate`] by a
//!    templated block carrying the template's modification hooks.
//! 3. [`divide_stages`] groups consecutive blocks with identical output shape into stages.
//!
//! [`compile`] runs all three steps and binds a configuration's variables to the result.

mod matching;
mod parse;
mod stages;

use std::collections::BTreeMap;
use std::fmt;

use crate::graph::{ComputationGraph, TensorShape};
use crate::ir::{shipped_templates, BlockTemplate, IrError, ModuleKind, TailorModule, DEFAULT_BLOCK, REDUCE_DEPTH};
use crate::modspace::{bind_space, count_variants, ModificationSpace, SpaceConfig, SpaceError};

pub use matching::match_blocks;
pub use parse::parse_operators;
pub use stages::divide_stages;

pub(crate) use parse::propagate;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("cannot deduce the shape at `{node}`: {reason}")]
    Shape { node: String, reason: String },
    #[error("edge `{edge}` is declared as {declared} but deduces to {inferred}")]
    DeclaredMismatch { edge: String, declared: TensorShape, inferred: TensorShape },
    #[error("forced templates overlap: {first} and {second}")]
    Conflict { first: String, second: String },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Ir(#[from] IrError),
}

/// Output of [`compile`]: the SuperNet, its bound modification space and the compile report.
#[derive(Clone, Debug)]
pub struct Compiled {
    pub model: TailorModule,
    pub space: ModificationSpace,
    pub report: CompileReport,
}

/// Summary of a compilation, rendered as deterministic text by `Display`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompileReport {
    pub model_name: String,
    pub nodes: usize,
    pub dynamic_ops: usize,
    pub bypassed_ops: usize,
    /// Node ids and op names of operators outside the known op table.
    pub unmatched_ops: Vec<(String, String)>,
    /// Templates in use with their instance counts (`DefaultBlock` included).
    pub blocks: BTreeMap<String, usize>,
    /// Per stage: path, depth, whether it exposes the depth hook, output shape.
    pub stages: Vec<(String, usize, bool, String)>,
    pub loose_ops: usize,
    /// Dimension id, candidates, default.
    pub dims: Vec<(String, String, String)>,
    pub variants: String,
}

impl fmt::Display for CompileReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# tailorforge-report v1")?;
        writeln!(f, "model: {}", self.model_name)?;
        writeln!(f, "nodes: {}", self.nodes)?;
        writeln!(f, "dynamic_ops: {}", self.dynamic_ops)?;
        writeln!(f, "bypassed_ops: {}", self.bypassed_ops)?;
        writeln!(f, "unmatched_ops: {}", self.unmatched_ops.len())?;
        for (id, op) in &self.unmatched_ops {
            writeln!(f, "  unmatched {id} {op}")?;
        }
        writeln!(f, "loose_ops: {}", self.loose_ops)?;
        writeln!(f, "blocks: {}", self.blocks.values().sum::<usize>())?;
        for (t, n) in &self.blocks {
            writeln!(f, "  matched {t}: {n}")?;
        }
        writeln!(f, "stages: {}", self.stages.len())?;
        for (p, d, hook, out) in &self.stages {
            let kind = if *hook { "elastic" } else { "fixed" };
            writeln!(f, "  {p} depth={d} ({kind}) out={out}")?;
        }
        writeln!(f, "dimensions: {}", self.dims.len())?;
        for (id, cands, default) in &self.dims {
            writeln!(f, "  {id} [{cands}] default={default}")?;
        }
        writeln!(f, "variants: {}", self.variants)
    }
}

fn report(g: &ComputationGraph, model: &TailorModule, space: &ModificationSpace) -> CompileReport {
    let leaves = model.leaves();
    let mut blocks = BTreeMap::new();
    let mut stages = Vec::new();
    for s in model.stages() {
        for b in s.children() {
            *blocks.entry(b.template().unwrap_or(DEFAULT_BLOCK).to_string()).or_insert(0) += 1;
        }
        let out = s.feature().out_shapes.first().map(|p| p.meta.to_string()).unwrap_or_default();
        stages.push((s.path().to_string(), s.children().len(), s.knob(REDUCE_DEPTH).is_some(), out));
    }
    CompileReport {
        model_name: g.metadata().get("name").cloned().unwrap_or_else(|| "-".into()),
        nodes: g.nodes().len(),
        dynamic_ops: leaves.iter().filter(|l| l.kind() == ModuleKind::Operator).count(),
        bypassed_ops: leaves.iter().filter(|l| l.kind() == ModuleKind::StaticBypass).count(),
        unmatched_ops: g
            .nodes()
            .iter()
            .filter(|n| n.op.is_custom())
            .map(|n| (n.id.clone(), n.op.to_string()))
            .collect(),
        blocks,
        stages,
        loose_ops: model.children().filter(|c| c.kind().is_leaf()).count(),
        dims: space
            .dims()
            .iter()
            .map(|d| {
                let c: Vec<String> = d.candidates.iter().map(|v| v.to_string()).collect();
                (d.id.to_string(), c.join(", "), d.default.to_string())
            })
            .collect(),
        variants: count_variants(space, model).to_string(),
    }
}

/// Selects the templates for a configuration: the `[arch] blocks` list if present (forced),
/// otherwise the whole shipped library.
pub fn select_templates(cfg: &SpaceConfig) -> Result<(Vec<BlockTemplate>, bool), CompileError> {
    let library = shipped_templates();
    if cfg.blocks.is_empty() {
        return Ok((library, false));
    }
    let mut out = Vec::new();
    for name in &cfg.blocks {
        if name == DEFAULT_BLOCK {
            continue;
        }
        let t = library.iter().find(|t| &t.name == name).ok_or_else(|| {
            SpaceError::Unsatisfiable(format!("unknown block template `{name}`"))
        })?;
        out.push(t.clone());
    }
    Ok((out, true))
}

/// Compiles `g` under `cfg` with the shipped template library.
pub fn compile(g: &ComputationGraph, cfg: &SpaceConfig) -> Result<Compiled, CompileError> {
    let (templates, forced) = select_templates(cfg)?;
    compile_with(g, cfg, &templates, forced)
}

/// Compiles with an explicit template set.
pub fn compile_with(
    g: &ComputationGraph,
    cfg: &SpaceConfig,
    templates: &[BlockTemplate],
    forced: bool,
) -> Result<Compiled, CompileError> {
    propagate(g)?;
    let items = parse_operators(g);
    let items = matching::match_blocks_with(g, items, templates, forced)?;
    if forced {
        for t in templates {
            if !items.iter().any(|m| m.template() == Some(t.name.as_str())) {
                return Err(SpaceError::Unsatisfiable(format!("template `{}` matched no block of the model", t.name)).into());
            }
        }
    }
    let model = divide_stages(g, items)?;
    let (model, space) = bind_space(&model, cfg)?;
    let report = report(g, &model, &space);
    Ok(Compiled { model, space, report })
}
