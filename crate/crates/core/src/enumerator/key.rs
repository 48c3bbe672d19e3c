use std::fmt;
use std::str::FromStr;

use crate::graph::{AttrValue, Attrs, TensorShape};

use super::EnumError;

/// One operator configuration: type with attributes, plus concrete shapes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpFeature {
    pub op: String,
    pub attrs: Attrs,
    pub in_shapes: Vec<TensorShape>,
    pub out_shapes: Vec<TensorShape>,
}

impl fmt::Display for OpFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{", self.op)?;
        for (i, (k, v)) in self.attrs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str("}(")?;
        join(f, &self.in_shapes)?;
        f.write_str(")->(")?;
        join(f, &self.out_shapes)?;
        f.write_str(")")
    }
}

fn join(f: &mut fmt::Formatter<'_>, shapes: &[TensorShape]) -> fmt::Result {
    for (i, s) in shapes.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{s}")?;
    }
    Ok(())
}

/// Splits on commas that are not inside brackets.
fn split_top(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in s.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn shapes(s: &str) -> Result<Vec<TensorShape>, EnumError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| x.parse().map_err(|e| EnumError::BadKey(format!("{x}: {e}"))))
        .collect()
}

impl FromStr for OpFeature {
    type Err = EnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EnumError::BadKey(s.to_string());
        let (op, rest) = s.split_once('{').ok_or_else(bad)?;
        let (attrs, rest) = rest.split_once("}(").ok_or_else(bad)?;
        let (ins, outs) = rest.split_once(")->(").ok_or_else(bad)?;
        let outs = outs.strip_suffix(')').ok_or_else(bad)?;
        let mut map = Attrs::new();
        if !attrs.is_empty() {
            for kv in split_top(attrs) {
                let (k, v) = kv.split_once('=').ok_or_else(bad)?;
                map.insert(k.to_string(), AttrValue::parse(v).ok_or_else(bad)?);
            }
        }
        if op.is_empty() {
            return Err(bad());
        }
        Ok(OpFeature { op: op.to_string(), attrs: map, in_shapes: shapes(ins)?, out_shapes: shapes(outs)? })
    }
}

/// Canonical identity of a (possibly fused) operator configuration; the LUT key.
///
/// The text form is the members' canonical forms joined by `+`, e.g.
/// `conv2d{kernel=3,out_channels=16,padding=1,stride=2}(1x3x224x224:f32)->(1x16x112x112:f32)`.
/// Equality and ordering follow that text.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OperatorFeatureKey {
    text: String,
    ops: Vec<OpFeature>,
}

impl OperatorFeatureKey {
    pub fn new(ops: Vec<OpFeature>) -> Self {
        assert!(!ops.is_empty(), "a key names at least one operator");
        let text = ops.iter().map(|o| o.to_string()).collect::<Vec<_>>().join("+");
        OperatorFeatureKey { text, ops }
    }

    pub fn ops(&self) -> &[OpFeature] {
        &self.ops
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn is_fused(&self) -> bool {
        self.ops.len() > 1
    }
}

impl fmt::Display for OperatorFeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl FromStr for OperatorFeatureKey {
    type Err = EnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let ops = s.split('+').map(str::parse).collect::<Result<Vec<OpFeature>, _>>()?;
        let key = OperatorFeatureKey::new(ops);
        if key.text != s {
            return Err(EnumError::BadKey(format!("`{s}` is not in canonical form")));
        }
        Ok(key)
    }
}
