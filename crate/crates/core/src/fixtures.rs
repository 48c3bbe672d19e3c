//! Small models shipped with the crate for tests and the guide.
//!
//! | Graph | Structure | Config |
//! |---|---|---|
//! | [`TINYNET`] | stem, three residual conv blocks, FFN head | [`TINYNET_CONFIG`], [`EXAMPLE_CONFIG`] |
//! | [`TINYNET_1S`] | stem, one stage of three inverted-residual blocks | [`TINYNET_1S_CONFIG`] (78 variants) |
//! | [`TINYNET_4S`] | stem, four stages of inverted-residual blocks | [`TINYNET_4S_CONFIG`] (20736 variants) |
//! | [`VIT_TINY`] | patch embedding, two attention + FFN layers | [`VIT_TINY_CONFIG`] |

pub const TINYNET: &str = include_str!("../fixtures/tinynet.tfg");
pub const TINYNET_1S: &str = include_str!("../fixtures/tinynet_1s.tfg");
pub const TINYNET_4S: &str = include_str!("../fixtures/tinynet_4s.tfg");
pub const VIT_TINY: &str = include_str!("../fixtures/vit_tiny.tfg");

/// The reference configuration: resolution, stage depth and FFN expansion with `FFNBlock` forced.
pub const EXAMPLE_CONFIG: &str = include_str!("../fixtures/example.toml");
pub const TINYNET_CONFIG: &str = include_str!("../fixtures/tinynet.toml");
pub const TINYNET_1S_CONFIG: &str = include_str!("../fixtures/tinynet_1s.toml");
pub const TINYNET_4S_CONFIG: &str = include_str!("../fixtures/tinynet_4s.toml");
pub const VIT_TINY_CONFIG: &str = include_str!("../fixtures/vit_tiny.toml");

/// The default fusion ruleset in the rules-file format.
pub const DEFAULT_FUSION_RULES: &str = include_str!("../fixtures/fusion_default.rules");

/// `(name, graph, config)` of every fixture model with its main configuration.
pub fn all() -> [(&'static str, &'static str, &'static str); 4] {
    [
        ("TinyNet", TINYNET, TINYNET_CONFIG),
        ("TinyNet-1S", TINYNET_1S, TINYNET_1S_CONFIG),
        ("TinyNet-4S", TINYNET_4S, TINYNET_4S_CONFIG),
        ("ViT-tiny", VIT_TINY, VIT_TINY_CONFIG),
    ]
}
