//! Compile static computation graphs into SuperNets, predict the cost of their SubNets without
//! training, and search for deployable ones.
//!
//! The pipeline, end to end:
//!
//! ```
//! use tailorforge::{compiler, fixtures, graph, modspace};
//!
//! let g = graph::load_graph(fixtures::TINYNET_1S.as_bytes()).unwrap();
//! let cfg = modspace::parse_config(fixtures::TINYNET_1S_CONFIG).unwrap();
//! let compiled = compiler::compile(&g, &cfg).unwrap();
//! assert_eq!(modspace::count_variants(&compiled.space, &compiled.model), 78u32.into());
//!
//! let maximal = modspace::apply_subnet(&compiled.model, &modspace::SubNetSpec::new()).unwrap();
//! assert!(graph::graph_isomorphic(&maximal, &g));
//! ```

pub mod compiler;
pub mod enumerator;
pub mod fixtures;
pub mod graph;
pub mod ir;
pub mod modspace;
pub mod optimizer;
pub mod predictors;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/compiling.md")]
    mod compiling {}
    #[doc = include_str!("../../../book/src/design-space.md")]
    mod design_space {}
    #[doc = include_str!("../../../book/src/unique-operators.md")]
    mod unique_operators {}
    #[doc = include_str!("../../../book/src/predictors.md")]
    mod predictors {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
