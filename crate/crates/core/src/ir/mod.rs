//! TailorIR: the SuperNet intermediate representation.
//!
//! A compiled model is a tree of [`TailorModule`]s (model → stages → blocks → operators). Every
//! module carries a [`Feature`] holding both the meta (maximal) architecture and the active one.
//! Architecture changes follow a fixed protocol:
//!
//! 1. [`transform`] sets one knob (resolution, stage depth reduction, block ratio);
//! 2. [`update`] re-derives every active attribute and shape top-down, rejecting illegal
//!    combinations;
//! 3. [`build`] emits the active architecture as a [`ComputationGraph`](crate::graph::ComputationGraph).
//!
//! Shapes come from per-operator deduction rules ([`deduce`]), so querying a SubNet's operator
//! shapes ([`infer_shapes`]) never executes anything.

pub mod deduce;
mod module;
mod ops;
mod template;

pub use module::{
    AttrPair, Feature, HookRule, Knob, ModelInfo, ModuleKind, ModulePath, Segment, ShapePair,
    TailorModule,
};
pub use ops::{build, infer_shapes, transform, update, OpShapes};
pub(crate) use ops::{alias_map, resolve, REDUCE_DEPTH, RESOLUTION};
pub use template::{
    shipped_templates, BlockTemplate, HookKind, HookSpec, Residual, Slot, SlotInput, Variant,
    DEFAULT_BLOCK,
};

use crate::modspace::ChoiceValue;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IrError {
    #[error("no module at path `{0}`")]
    UnknownPath(String),
    #[error("module `{path}` has no dimension `{name}`")]
    UnknownDimension { path: String, name: String },
    #[error("value {value} is not a candidate of `{dim}`")]
    OutOfCandidates { dim: String, value: ChoiceValue },
    #[error("value {value} is illegal for `{dim}`: {reason}")]
    Illegal { dim: String, value: ChoiceValue, reason: String },
    #[error("shape contradiction at `{path}` (inputs from {others:?}): {reason}")]
    ShapeContradiction { path: String, others: Vec<String>, reason: String },
    #[error("module tree has pending modifications; run update before build")]
    NotUpdated,
    #[error("operation requires the model root module")]
    NotAModel,
    #[error("built graph is invalid: {0}")]
    Build(String),
}
