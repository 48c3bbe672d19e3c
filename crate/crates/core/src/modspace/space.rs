use std::collections::HashMap;
use std::sync::Arc;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::ComputationGraph;
use crate::ir::{self, IrError, Knob, ModuleKind, ModulePath, TailorModule, REDUCE_DEPTH, RESOLUTION};

use super::{ChoiceValue, DimId, DimScope, Modification, SpaceConfig, SpaceError, SubNetSpec};

/// One modification dimension: its candidates (config order) and the identity choice.
#[derive(Clone, Debug, PartialEq)]
pub struct Dim {
    pub id: DimId,
    pub scope: DimScope,
    pub candidates: Vec<ChoiceValue>,
    pub default: ChoiceValue,
}

impl Dim {
    pub fn position(&self, v: ChoiceValue) -> Option<usize> {
        self.candidates.iter().position(|&c| c == v)
    }

    pub fn default_index(&self) -> usize {
        self.position(self.default).expect("default is a candidate")
    }
}

/// Dimension layout of one stage, used to collapse the dimensions of dropped blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct StageLayout {
    pub path: ModulePath,
    pub max_depth: usize,
    pub depth_dim: Option<usize>,
    /// Indices of the dimensions owned by each block of the stage.
    pub blocks: Vec<Vec<usize>>,
}

/// The declared modification dimensions of a compiled model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModificationSpace {
    dims: Vec<Dim>,
    index: HashMap<DimId, usize>,
    stages: Vec<StageLayout>,
    /// (stage, block) owning each block-scoped dimension.
    owner: Vec<Option<(usize, usize)>>,
}

impl ModificationSpace {
    pub(crate) fn new(dims: Vec<Dim>, stages: Vec<StageLayout>) -> Self {
        let index = dims.iter().enumerate().map(|(i, d)| (d.id.clone(), i)).collect();
        let mut owner = vec![None; dims.len()];
        for (s, st) in stages.iter().enumerate() {
            for (b, ds) in st.blocks.iter().enumerate() {
                for &d in ds {
                    owner[d] = Some((s, b));
                }
            }
        }
        for d in &dims {
            debug_assert!(d.candidates.contains(&d.default));
        }
        ModificationSpace { dims, index, stages, owner }
    }

    /// Dimensions in canonical order: global, then stages, then blocks.
    pub fn dims(&self) -> &[Dim] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn index_of(&self, id: &DimId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn dim(&self, id: &DimId) -> Option<&Dim> {
        self.index_of(id).map(|i| &self.dims[i])
    }

    pub fn stages(&self) -> &[StageLayout] {
        &self.stages
    }

    /// Number of (dimension, value) pairs that differ from the default.
    pub fn non_default_pairs(&self) -> usize {
        self.dims.iter().map(|d| d.candidates.len() - 1).sum()
    }

    /// Checks that every assigned dimension exists and every value is one of its candidates.
    pub fn check(&self, spec: &SubNetSpec) -> Result<(), SpaceError> {
        for (id, v) in spec.assignment() {
            let d = self.dim(id).ok_or_else(|| SpaceError::UnknownDim(id.to_string()))?;
            if d.position(*v).is_none() {
                return Err(SpaceError::NotACandidate { dim: id.to_string(), value: *v });
            }
        }
        Ok(())
    }

    pub fn value(&self, spec: &SubNetSpec, i: usize) -> ChoiceValue {
        spec.get(&self.dims[i].id).unwrap_or(self.dims[i].default)
    }

    /// Number of enabled blocks of stage `s` under `spec`.
    pub fn active_depth(&self, spec: &SubNetSpec, s: usize) -> usize {
        let st = &self.stages[s];
        match st.depth_dim {
            Some(d) => (st.max_depth as i64 + self.value(spec, d).as_i64().unwrap_or(0)) as usize,
            None => st.max_depth,
        }
    }

    /// False for the dimensions of blocks dropped by a depth reduction in `spec`.
    pub fn is_active(&self, spec: &SubNetSpec, i: usize) -> bool {
        match self.owner[i] {
            Some((s, b)) => b < self.active_depth(spec, s),
            None => true,
        }
    }

    /// The canonical form of `spec`: default-valued and dropped-block assignments removed.
    pub fn canonicalize(&self, spec: &SubNetSpec) -> Result<SubNetSpec, SpaceError> {
        self.check(spec)?;
        let mut out = SubNetSpec::new();
        for (i, d) in self.dims.iter().enumerate() {
            let v = self.value(spec, i);
            if v != d.default && self.is_active(spec, i) {
                out.set(d.id.clone(), v);
            }
        }
        Ok(out)
    }

    /// Candidate index of every dimension (defaults filled in).
    pub fn encode(&self, spec: &SubNetSpec) -> Vec<usize> {
        (0..self.dims.len())
            .map(|i| self.dims[i].position(self.value(spec, i)).unwrap_or_else(|| self.dims[i].default_index()))
            .collect()
    }

    /// Index vector with the dimensions of dropped blocks reset to their defaults; equal to
    /// `encode(&decode(idx))`.
    pub fn canonical_indices(&self, idx: &[usize]) -> Vec<usize> {
        let depth: Vec<usize> = self
            .stages
            .iter()
            .map(|st| match st.depth_dim {
                Some(d) => (st.max_depth as i64 + self.dims[d].candidates[idx[d]].as_i64().unwrap_or(0)) as usize,
                None => st.max_depth,
            })
            .collect();
        idx.iter()
            .enumerate()
            .map(|(i, &k)| match self.owner[i] {
                Some((s, b)) if b >= depth[s] => self.dims[i].default_index(),
                _ => k,
            })
            .collect()
    }

    /// Canonical spec from a full vector of candidate indices.
    pub fn decode(&self, idx: &[usize]) -> SubNetSpec {
        let mut raw = SubNetSpec::new();
        for (d, &k) in self.dims.iter().zip(idx) {
            raw.set(d.id.clone(), d.candidates[k]);
        }
        self.canonicalize(&raw).expect("decoded values are candidates")
    }

    /// Number of distinct architectures, collapsing the dimensions of dropped blocks.
    pub fn count(&self) -> BigUint {
        self.count_where(None)
    }

    /// Number of distinct architectures in which block `block` of stage `stage` is enabled.
    pub fn count_active(&self, stage: usize, block: usize) -> BigUint {
        self.count_where(Some((stage, block)))
    }

    fn count_where(&self, needs: Option<(usize, usize)>) -> BigUint {
        let mut total = BigUint::from(1u32);
        for (i, d) in self.dims.iter().enumerate() {
            if d.scope == DimScope::Global {
                debug_assert!(self.owner[i].is_none());
                total *= d.candidates.len();
            }
        }
        for (s, st) in self.stages.iter().enumerate() {
            let min_depth = match needs {
                Some((ns, nb)) if ns == s => nb + 1,
                _ => 0,
            };
            let depths: Vec<usize> = match st.depth_dim {
                Some(k) => self.dims[k]
                    .candidates
                    .iter()
                    .map(|r| (st.max_depth as i64 + r.as_i64().unwrap()) as usize)
                    .collect(),
                None => vec![st.max_depth],
            };
            let mut stage = BigUint::from(0u32);
            for depth in depths.into_iter().filter(|&d| d >= min_depth) {
                let mut prod = BigUint::from(1u32);
                for ds in &st.blocks[..depth] {
                    for &k in ds {
                        prod *= self.dims[k].candidates.len();
                    }
                }
                stage += prod;
            }
            total *= stage;
        }
        total
    }
}

fn knob_mut<'a>(m: &'a mut TailorModule, path: &ModulePath, name: &str) -> Option<&'a mut Knob> {
    if &m.path == path {
        return m.feature.knobs.get_mut(name);
    }
    let c = m.children.iter_mut().find(|c| path.starts_with(&c.path))?;
    knob_mut(Arc::make_mut(c), path, name)
}

fn pin_unbound(m: &mut TailorModule) {
    for k in m.feature.knobs.values_mut() {
        if k.choices.is_none() {
            k.choices = Some(vec![k.meta]);
        }
    }
    for c in &mut m.children {
        if !c.feature.knobs.is_empty() || !c.children.is_empty() {
            pin_unbound(Arc::make_mut(c));
        }
    }
}

fn within_meta(dim: &str, cands: &[ChoiceValue], meta: ChoiceValue) -> Result<(), SpaceError> {
    if !cands.contains(&meta) {
        return Err(SpaceError::Validation(format!(
            "`{dim}` must list the original value {meta} among its candidates"
        )));
    }
    if let Some(c) = cands.iter().find(|c| c.get() <= 0.0 || **c > meta) {
        return Err(SpaceError::Validation(format!(
            "`{dim}` candidate {c} lies outside (0, {meta}]"
        )));
    }
    Ok(())
}

/// Binds the configuration variables to the knobs of a compiled model.
///
/// Every knob that no variable binds is pinned to its original value. The returned model carries
/// the candidate lists, so [`ir::transform`] rejects out-of-space values.
pub fn bind_space(model: &TailorModule, cfg: &SpaceConfig) -> Result<(TailorModule, ModificationSpace), SpaceError> {
    if model.kind != ModuleKind::Model {
        return Err(SpaceError::Validation("spaces bind to a model root".into()));
    }
    let mut bound = model.clone();
    let mut dims = Vec::new();

    for (name, cands) in &cfg.global_vars {
        let knob = model.knob(name).filter(|_| name == RESOLUTION).ok_or_else(|| {
            SpaceError::Unsatisfiable(format!("global variable `{name}` matches nothing in the model"))
        })?;
        let id = DimId::global(name);
        within_meta(id.as_str(), cands, knob.meta)?;
        if let Some(c) = cands.iter().find(|c| c.as_i64().is_none()) {
            return Err(SpaceError::Validation(format!("`{id}` candidate {c} is not an integer")));
        }
        knob_mut(&mut bound, &ModulePath::root(), name).unwrap().choices = Some(cands.clone());
        dims.push(Dim { id, scope: DimScope::Global, candidates: cands.clone(), default: knob.meta });
    }

    let stages: Vec<&TailorModule> = model.stages().collect();
    let mut layouts: Vec<StageLayout> = stages
        .iter()
        .map(|s| StageLayout {
            path: s.path.clone(),
            max_depth: s.children.len(),
            depth_dim: None,
            blocks: vec![Vec::new(); s.children.len()],
        })
        .collect();

    for (name, cands) in &cfg.stage_vars {
        if name != REDUCE_DEPTH {
            return Err(SpaceError::Unsatisfiable(format!("stage variable `{name}` matches nothing in the model")));
        }
        let zero = ChoiceValue::int(0);
        if !cands.contains(&zero) {
            return Err(SpaceError::Validation("`reduce_depth` must list 0 (the original depth)".into()));
        }
        let mut hits = 0;
        for (s, st) in stages.iter().enumerate() {
            if st.knob(REDUCE_DEPTH).is_none() {
                continue;
            }
            hits += 1;
            let depth = st.children.len() as i64;
            let legal: Vec<ChoiceValue> =
                cands.iter().copied().filter(|r| depth + r.as_i64().unwrap() >= 1).collect();
            knob_mut(&mut bound, &st.path, REDUCE_DEPTH).unwrap().choices = Some(legal.clone());
            layouts[s].depth_dim = Some(dims.len());
            dims.push(Dim { id: DimId::at(&st.path, name), scope: DimScope::Stage, candidates: legal, default: zero });
        }
        if hits == 0 {
            return Err(SpaceError::Unsatisfiable("no stage of the model supports depth reduction".into()));
        }
    }

    for (template, hook, _) in &cfg.block_vars {
        let instances: Vec<&TailorModule> = stages
            .iter()
            .flat_map(|s| s.children())
            .filter(|b| b.template() == Some(template.as_str()))
            .collect();
        if instances.is_empty() {
            return Err(SpaceError::Unsatisfiable(format!("template `{template}` matched no block of the model")));
        }
        if instances.iter().any(|b| b.knob(hook).is_none()) {
            return Err(SpaceError::Unsatisfiable(format!("template `{template}` has no dimension `{hook}`")));
        }
    }
    for (s, st) in stages.iter().enumerate() {
        for (b, block) in st.children().enumerate() {
            for (template, hook, cands) in &cfg.block_vars {
                if block.template() != Some(template.as_str()) {
                    continue;
                }
                let knob = block.knob(hook).unwrap();
                let id = DimId::at(&block.path, hook);
                within_meta(id.as_str(), cands, knob.meta)?;
                knob_mut(&mut bound, &block.path, hook).unwrap().choices = Some(cands.clone());
                layouts[s].blocks[b].push(dims.len());
                dims.push(Dim { id, scope: DimScope::Block, candidates: cands.clone(), default: knob.meta });
            }
        }
    }
    pin_unbound(&mut bound);
    Ok((bound, ModificationSpace::new(dims, layouts)))
}

/// Number of distinct architectures of `space`, bound to `model`.
pub fn count_variants(space: &ModificationSpace, model: &TailorModule) -> BigUint {
    debug_assert_eq!(model.stages().count(), space.stages().len());
    space.count()
}

/// Draws one choice per dimension uniformly at random and normalizes the result.
pub fn sample_with<R: Rng + ?Sized>(space: &ModificationSpace, rng: &mut R) -> SubNetSpec {
    let idx: Vec<usize> = space.dims().iter().map(|d| rng.gen_range(0..d.candidates.len())).collect();
    space.decode(&idx)
}

/// Deterministic uniform sample under `seed`.
pub fn sample_subnet(space: &ModificationSpace, seed: u64) -> SubNetSpec {
    sample_with(space, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Applies every assignment of `spec` and re-derives the active architecture.
pub fn configure(model: &TailorModule, spec: &SubNetSpec) -> Result<TailorModule, IrError> {
    let mut m = model.clone();
    for (dim, value) in spec.assignment() {
        m = ir::transform(&m, &Modification::new(dim.clone(), *value))?;
    }
    ir::update(&m)
}

/// The computation graph of the SubNet named by `spec`.
pub fn apply_subnet(model: &TailorModule, spec: &SubNetSpec) -> Result<ComputationGraph, IrError> {
    ir::build(&configure(model, spec)?)
}
