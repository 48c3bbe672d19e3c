use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Operator kinds understood by the toolchain. Anything else is carried as `Custom`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Conv2d,
    DepthwiseConv2d,
    MatMul,
    Add,
    Mul,
    Relu,
    Gelu,
    Softmax,
    BatchNorm,
    LayerNorm,
    PoolAvg,
    PoolMax,
    GlobalPool,
    Reshape,
    Concat,
    Split,
    Transpose,
    Identity,
    Custom(String),
}

const KNOWN: &[(&str, OpKind)] = &[
    ("conv2d", OpKind::Conv2d),
    ("depthwise_conv2d", OpKind::DepthwiseConv2d),
    ("matmul", OpKind::MatMul),
    ("add", OpKind::Add),
    ("mul", OpKind::Mul),
    ("relu", OpKind::Relu),
    ("gelu", OpKind::Gelu),
    ("softmax", OpKind::Softmax),
    ("batchnorm", OpKind::BatchNorm),
    ("layernorm", OpKind::LayerNorm),
    ("pool_avg", OpKind::PoolAvg),
    ("pool_max", OpKind::PoolMax),
    ("global_pool", OpKind::GlobalPool),
    ("reshape", OpKind::Reshape),
    ("concat", OpKind::Concat),
    ("split", OpKind::Split),
    ("transpose", OpKind::Transpose),
    ("identity", OpKind::Identity),
];

impl OpKind {
    /// Unknown names are preserved as `custom:<name>`.
    pub fn parse(s: &str) -> OpKind {
        if let Some(name) = s.strip_prefix("custom:") {
            return OpKind::Custom(name.to_string());
        }
        KNOWN
            .iter()
            .find(|(n, _)| *n == s)
            .map(|(_, k)| k.clone())
            .unwrap_or_else(|| OpKind::Custom(s.to_string()))
    }

    pub fn name(&self) -> Cow<'static, str> {
        match self {
            OpKind::Custom(n) => Cow::Owned(format!("custom:{n}")),
            k => Cow::Borrowed(KNOWN.iter().find(|(_, o)| o == k).map(|(n, _)| *n).unwrap()),
        }
    }

    /// Operators that get a dynamic (transformable) module during compilation.
    pub fn is_dynamic(&self) -> bool {
        matches!(
            self,
            OpKind::Conv2d | OpKind::DepthwiseConv2d | OpKind::MatMul | OpKind::Concat
        )
    }

    pub fn is_custom(&self) -> bool {
        matches!(self, OpKind::Custom(_))
    }

    /// Views that alias their input buffer instead of materializing a new one.
    pub fn is_alias(&self) -> bool {
        matches!(self, OpKind::Identity | OpKind::Reshape)
    }

    pub fn is_activation(&self) -> bool {
        matches!(self, OpKind::Relu | OpKind::Gelu)
    }

    pub fn schema(&self) -> Option<&'static AttrSchema> {
        use AttrKind::*;
        const CONV: AttrSchema = AttrSchema {
            required: &[("kernel", Int), ("stride", Int), ("padding", Int), ("out_channels", Int)],
            optional: &[("bias", Int)],
        };
        const DW: AttrSchema = AttrSchema {
            required: &[("kernel", Int), ("stride", Int), ("padding", Int)],
            optional: &[("bias", Int)],
        };
        const MATMUL: AttrSchema = AttrSchema {
            required: &[],
            optional: &[("out_features", Int), ("bias", Int)],
        };
        const NONE: AttrSchema = AttrSchema { required: &[], optional: &[] };
        const AXIS_OPT: AttrSchema = AttrSchema { required: &[], optional: &[("axis", Int)] };
        const POOL: AttrSchema = AttrSchema {
            required: &[("kernel", Int), ("stride", Int)],
            optional: &[("padding", Int)],
        };
        const RESHAPE: AttrSchema = AttrSchema { required: &[("shape", Ints)], optional: &[] };
        const CONCAT: AttrSchema = AttrSchema { required: &[("axis", Int)], optional: &[] };
        const SPLIT: AttrSchema =
            AttrSchema { required: &[("axis", Int), ("sizes", Ints)], optional: &[] };
        const TRANSPOSE: AttrSchema = AttrSchema { required: &[("perm", Ints)], optional: &[] };
        Some(match self {
            OpKind::Conv2d => &CONV,
            OpKind::DepthwiseConv2d => &DW,
            OpKind::MatMul => &MATMUL,
            OpKind::Add | OpKind::Mul | OpKind::Relu | OpKind::Gelu | OpKind::BatchNorm => &NONE,
            OpKind::Identity | OpKind::GlobalPool => &NONE,
            OpKind::Softmax | OpKind::LayerNorm => &AXIS_OPT,
            OpKind::PoolAvg | OpKind::PoolMax => &POOL,
            OpKind::Reshape => &RESHAPE,
            OpKind::Concat => &CONCAT,
            OpKind::Split => &SPLIT,
            OpKind::Transpose => &TRANSPOSE,
            OpKind::Custom(_) => return None,
        })
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttrKind {
    Int,
    Ints,
    Str,
}

/// Required and optional attribute names per operator kind.
#[derive(Debug)]
pub struct AttrSchema {
    pub required: &'static [(&'static str, AttrKind)],
    pub optional: &'static [(&'static str, AttrKind)],
}

impl AttrSchema {
    pub fn kind_of(&self, name: &str) -> Option<AttrKind> {
        self.required
            .iter()
            .chain(self.optional)
            .find(|(n, _)| *n == name)
            .map(|(_, k)| *k)
    }
}

/// Scalar or integer-list attribute value.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Int(i64),
    Ints(Vec<i64>),
    Str(String),
}

impl AttrValue {
    pub fn kind(&self) -> AttrKind {
        match self {
            AttrValue::Int(_) => AttrKind::Int,
            AttrValue::Ints(_) => AttrKind::Ints,
            AttrValue::Str(_) => AttrKind::Str,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            AttrValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_ints(&self) -> Option<&[i64]> {
        match self {
            AttrValue::Ints(v) => Some(v),
            _ => None,
        }
    }

    /// Parses the textual form produced by `Display`.
    pub fn parse(s: &str) -> Option<AttrValue> {
        if let Some(inner) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            if inner.is_empty() {
                return Some(AttrValue::Ints(Vec::new()));
            }
            return inner
                .split(',')
                .map(|v| v.trim().parse().ok())
                .collect::<Option<Vec<i64>>>()
                .map(AttrValue::Ints);
        }
        if let Ok(v) = s.parse::<i64>() {
            return Some(AttrValue::Int(v));
        }
        is_plain_token(s).then(|| AttrValue::Str(s.to_string()))
    }
}

/// String attributes are restricted to characters that never collide with key syntax.
pub(crate) fn is_plain_token(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && s.parse::<i64>().is_err()
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Int(v) => write!(f, "{v}"),
            AttrValue::Ints(v) => {
                f.write_str("[")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("]")
            }
            AttrValue::Str(s) => f.write_str(s),
        }
    }
}

pub type Attrs = BTreeMap<String, AttrValue>;

/// Integer attribute lookup with a fallback.
pub fn attr_int(attrs: &Attrs, name: &str, default: i64) -> i64 {
    attrs.get(name).and_then(AttrValue::as_int).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_ops_become_custom() {
        assert_eq!(OpKind::parse("hardswish"), OpKind::Custom("hardswish".into()));
        assert_eq!(OpKind::parse("custom:foo").name(), "custom:foo");
        assert_eq!(OpKind::parse("conv2d"), OpKind::Conv2d);
        for (n, k) in KNOWN {
            assert_eq!(k.name(), *n);
        }
    }

    #[test]
    fn attr_text_forms() {
        for v in [AttrValue::Int(-3), AttrValue::Ints(vec![1, -1]), AttrValue::Str("same".into())] {
            assert_eq!(AttrValue::parse(&v.to_string()), Some(v));
        }
        assert_eq!(AttrValue::parse("[]"), Some(AttrValue::Ints(vec![])));
        assert_eq!(AttrValue::parse("a=b"), None);
    }
}
