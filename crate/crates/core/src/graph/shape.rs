use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GraphError;

/// Element type tag carried by every tensor edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Float32,
    Float16,
    Int64,
    Bool,
}

impl DType {
    pub fn size_bytes(self) -> u64 {
        match self {
            DType::Float32 => 4,
            DType::Float16 => 2,
            DType::Int64 => 8,
            DType::Bool => 1,
        }
    }

    /// Long name used in graph documents.
    pub fn name(self) -> &'static str {
        match self {
            DType::Float32 => "float32",
            DType::Float16 => "float16",
            DType::Int64 => "int64",
            DType::Bool => "bool",
        }
    }

    /// Short tag used in canonical key strings.
    pub fn short(self) -> &'static str {
        match self {
            DType::Float32 => "f32",
            DType::Float16 => "f16",
            DType::Int64 => "i64",
            DType::Bool => "b8",
        }
    }

    pub fn parse(s: &str) -> Option<DType> {
        Some(match s {
            "float32" | "f32" => DType::Float32,
            "float16" | "f16" => DType::Float16,
            "int64" | "i64" => DType::Int64,
            "bool" | "b8" => DType::Bool,
            _ => return None,
        })
    }
}

/// A fully concrete tensor shape. Extents are always positive and the rank is at least one.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorShape {
    dims: Vec<u64>,
    dtype: DType,
}

impl TensorShape {
    pub fn new(dims: Vec<u64>, dtype: DType) -> Result<Self, GraphError> {
        if dims.is_empty() {
            return Err(GraphError::invalid("shape", "tensor shape must have at least one dim"));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(GraphError::invalid(
                "shape",
                format!("tensor extents must be >= 1, got {dims:?}"),
            ));
        }
        Ok(TensorShape { dims, dtype })
    }

    pub fn dims(&self) -> &[u64] {
        &self.dims
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn numel(&self) -> u64 {
        self.dims.iter().product()
    }

    pub fn bytes(&self) -> u64 {
        self.numel() * self.dtype.size_bytes()
    }

    /// Same dtype, different extents.
    pub fn with_dims(&self, dims: Vec<u64>) -> Result<Self, GraphError> {
        TensorShape::new(dims, self.dtype)
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                f.write_str("x")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, ":{}", self.dtype.short())
    }
}

impl FromStr for TensorShape {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (dims, dtype) = s
            .split_once(':')
            .ok_or_else(|| GraphError::Parse(format!("shape `{s}` lacks a dtype tag")))?;
        let dtype = DType::parse(dtype)
            .ok_or_else(|| GraphError::Parse(format!("unknown dtype `{dtype}`")))?;
        let dims = dims
            .split('x')
            .map(|d| d.parse::<u64>().map_err(|e| GraphError::Parse(format!("bad extent `{d}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        TensorShape::new(dims, dtype)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_and_empty() {
        assert!(TensorShape::new(vec![], DType::Float32).is_err());
        assert!(TensorShape::new(vec![1, 0, 3], DType::Float32).is_err());
    }

    #[test]
    fn display_parse() {
        let s = TensorShape::new(vec![1, 3, 224, 224], DType::Float16).unwrap();
        assert_eq!(s.to_string(), "1x3x224x224:f16");
        assert_eq!("1x3x224x224:f16".parse::<TensorShape>().unwrap(), s);
        assert_eq!(s.bytes(), 3 * 224 * 224 * 2);
    }
}
