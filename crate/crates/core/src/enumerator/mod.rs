//! Unique-operator extraction with modification-dependency pruning.
//!
//! Every SubNet of a SuperNet is costed from a small set of distinct operator configurations.
//! [`enumerate_unique_operators`] finds that set without visiting every SubNet: each operator
//! position only iterates the dimensions that can change it ([`dependency_groups`]), with all other
//! dimensions at their defaults.

mod deps;
mod fusion;
mod key;

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use rayon::prelude::*;

use crate::ir::{IrError, ModulePath, Segment, TailorModule};
use crate::modspace::{configure, ModificationSpace, SpaceError, SubNetSpec};

pub use deps::{dependency_groups, DependencyMap};
pub use fusion::{FusionPlan, FusionRule, FusionRules, FUSION_HEADER};
pub use key::{OpFeature, OperatorFeatureKey};

pub const MANIFEST_HEADER: &str = "# tailorforge-manifest v1";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnumError {
    #[error("malformed operator key: {0}")]
    BadKey(String),
    #[error("malformed fusion rules: {0}")]
    BadRules(String),
    #[error("malformed manifest: {0}")]
    BadManifest(String),
    #[error("no operator at `{0}`")]
    UnknownPath(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Ir(#[from] IrError),
}

/// The feature of one leaf of an updated model.
pub fn leaf_feature(leaf: &TailorModule) -> OpFeature {
    let f = leaf.feature();
    OpFeature {
        op: leaf.node().expect("leaf").op.to_string(),
        attrs: f.active_attrs(),
        in_shapes: f.in_shapes.iter().map(|s| s.active.clone()).collect(),
        out_shapes: f.out_shapes.iter().map(|s| s.active.clone()).collect(),
    }
}

fn group_key(leaves: &[&TailorModule], group: &[usize]) -> OperatorFeatureKey {
    OperatorFeatureKey::new(group.iter().map(|&i| leaf_feature(leaves[i])).collect())
}

/// Keys of every enabled costing unit of an updated model, in execution order.
pub fn active_keys(updated: &TailorModule, plan: &FusionPlan) -> Vec<OperatorFeatureKey> {
    let leaves = updated.leaves();
    plan.groups()
        .iter()
        .filter(|g| leaves[g[0]].is_enabled())
        .map(|g| group_key(&leaves, g))
        .collect()
}

/// Result of a pruned enumeration.
#[derive(Clone, Debug, PartialEq)]
pub struct Enumeration {
    pub keys: BTreeSet<OperatorFeatureKey>,
    /// Key computations performed.
    pub work: u64,
    /// Σ over positions of Π over their dependency dims of the candidate count.
    pub bound: BigUint,
    /// Key computations of the unpruned approach: positions × variants.
    pub naive: BigUint,
    /// Operator occurrences summed over all distinct SubNets.
    pub occurrences: BigUint,
}

impl Enumeration {
    pub fn pruned_fraction(&self) -> f64 {
        ratio(&BigUint::from(self.work), &self.naive)
    }

    pub fn unique_ratio(&self) -> f64 {
        ratio(&BigUint::from(self.keys.len()), &self.occurrences)
    }
}

fn ratio(a: &BigUint, b: &BigUint) -> f64 {
    let f = |x: &BigUint| x.to_string().parse::<f64>().unwrap_or(f64::INFINITY);
    f(a) / f(b)
}

fn stage_block(path: &ModulePath) -> Option<(usize, usize)> {
    match path.segments() {
        [Segment::Stage(s), Segment::Block(b), ..] => Some((*s, *b)),
        _ => None,
    }
}

/// Every distinct operator key over all SubNets of `space`, iterating per position only the
/// dimensions it depends on.
pub fn enumerate_unique_operators(
    model: &TailorModule,
    space: &ModificationSpace,
    rules: &FusionRules,
) -> Result<Enumeration, EnumError> {
    let plan = FusionPlan::new(model, rules);
    let deps = dependency_groups(model, space);
    let leaves = model.leaves();
    let mut by_deps: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    let mut bound = BigUint::from(0u32);
    let mut occurrences = BigUint::from(0u32);
    for (gi, g) in plan.groups().iter().enumerate() {
        let d: BTreeSet<usize> = g.iter().flat_map(|&l| deps.leaf_deps(l).iter().copied()).collect();
        let mut prod = BigUint::from(1u32);
        for &k in &d {
            prod *= space.dims()[k].candidates.len();
        }
        bound += prod;
        occurrences += match stage_block(leaves[g[0]].path()) {
            Some((s, b)) => space.count_active(s, b),
            None => space.count(),
        };
        by_deps.entry(d.into_iter().collect()).or_default().push(gi);
    }
    let naive = BigUint::from(plan.groups().len()) * space.count();

    let jobs: Vec<(&Vec<usize>, &Vec<usize>)> = by_deps.iter().collect();
    let parts: Vec<Result<(BTreeSet<OperatorFeatureKey>, u64), EnumError>> = jobs
        .par_iter()
        .map(|(dims, positions)| {
            let mut keys = BTreeSet::new();
            let mut work = 0u64;
            let mut idx = vec![0usize; dims.len()];
            loop {
                let mut spec = SubNetSpec::new();
                for (&k, &c) in dims.iter().zip(&idx) {
                    let d = &space.dims()[k];
                    spec.set(d.id.clone(), d.candidates[c]);
                }
                let updated = configure(model, &spec)?;
                let leaves = updated.leaves();
                for &p in positions.iter() {
                    keys.insert(group_key(&leaves, &plan.groups()[p]));
                    work += 1;
                }
                // odometer over candidate lists, last dimension fastest
                let mut i = dims.len();
                loop {
                    if i == 0 {
                        return Ok((keys, work));
                    }
                    i -= 1;
                    idx[i] += 1;
                    if idx[i] < space.dims()[dims[i]].candidates.len() {
                        break;
                    }
                    idx[i] = 0;
                }
            }
        })
        .collect();
    let mut keys = BTreeSet::new();
    let mut work = 0;
    for p in parts {
        let (k, w) = p?;
        keys.extend(k);
        work += w;
    }
    Ok(Enumeration { keys, work, bound, naive, occurrences })
}

/// Key lookup result: depth-dropped operators have no key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeyOf {
    Active(OperatorFeatureKey),
    Inactive,
}

/// The key of the operator (or fused group containing it) at `path` under `spec`.
pub fn key_of(
    path: &ModulePath,
    spec: &SubNetSpec,
    model: &TailorModule,
    rules: &FusionRules,
) -> Result<KeyOf, EnumError> {
    let plan = FusionPlan::new(model, rules);
    let leaf = model
        .leaves()
        .iter()
        .position(|l| l.path() == path)
        .ok_or_else(|| EnumError::UnknownPath(path.to_string()))?;
    let updated = configure(model, spec)?;
    let leaves = updated.leaves();
    if !leaves[leaf].is_enabled() {
        return Ok(KeyOf::Inactive);
    }
    Ok(KeyOf::Active(group_key(&leaves, &plan.groups()[plan.group_of(leaf)])))
}

/// A unique-key manifest: the keys to be measured under one fusion ruleset.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub fusion_ruleset_hash: String,
    pub keys: BTreeSet<OperatorFeatureKey>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut out = format!("{MANIFEST_HEADER}\n# fusion_ruleset_hash={}\n", self.fusion_ruleset_hash);
        for k in &self.keys {
            out.push_str(k.as_str());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, EnumError> {
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(EnumError::BadManifest(format!("missing `{MANIFEST_HEADER}` header")));
        }
        let hash = lines
            .next()
            .and_then(|l| l.strip_prefix("# fusion_ruleset_hash="))
            .ok_or_else(|| EnumError::BadManifest("missing fusion ruleset hash".into()))?;
        let keys = lines.filter(|l| !l.is_empty()).map(str::parse).collect::<Result<_, _>>()?;
        Ok(Manifest { fusion_ruleset_hash: hash.to_string(), keys })
    }
}
