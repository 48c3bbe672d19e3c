//! Modification spaces: configuration, SubNet encoding, design-space counting and sampling.
//!
//! A [`ModificationSpace`] is bound to a compiled model by [`bind_space`]: every declared
//! configuration variable is attached to the knobs it controls, producing one dimension per
//! knob. A [`SubNetSpec`] then names one architecture by its non-default choices.

mod config;
mod space;
mod value;

pub use config::{parse_config, SpaceConfig};
pub use space::{
    apply_subnet, bind_space, configure, count_variants, sample_subnet, sample_with, Dim,
    ModificationSpace, StageLayout,
};
pub use value::{ChoiceValue, DimId, DimScope, Modification, SubNetSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpaceError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown dimension `{0}`")]
    UnknownDim(String),
    #[error("value {value} is not a candidate of `{dim}`")]
    NotACandidate { dim: String, value: ChoiceValue },
    #[error("configuration cannot be satisfied by this model: {0}")]
    Unsatisfiable(String),
}
