use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use crate::ir::{ModulePath, Segment};

use super::SpaceError;

/// A candidate value of a modification dimension (resolution, depth reduction, ratio, ...).
///
/// Stored as `f64` so integral and fractional choices share one type; equality, ordering and
/// hashing use the exact bit pattern (with `-0.0` folded into `0.0`).
#[derive(Clone, Copy, Debug)]
pub struct ChoiceValue(f64);

impl ChoiceValue {
    pub fn new(v: f64) -> Option<Self> {
        v.is_finite().then_some(ChoiceValue(if v == 0.0 { 0.0 } else { v }))
    }

    pub fn int(v: i64) -> Self {
        ChoiceValue(v as f64)
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// The value as an integer, if it is integral.
    pub fn as_i64(self) -> Option<i64> {
        (self.0.fract() == 0.0).then_some(self.0 as i64)
    }
}

impl PartialEq for ChoiceValue {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for ChoiceValue {}

impl Hash for ChoiceValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state)
    }
}

impl PartialOrd for ChoiceValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ChoiceValue {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for ChoiceValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for ChoiceValue {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .parse::<f64>()
            .ok()
            .and_then(ChoiceValue::new)
            .ok_or_else(|| SpaceError::Syntax(format!("invalid choice value `{s}`")))
    }
}

/// Where a modification dimension lives.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DimScope {
    Global,
    Stage,
    Block,
}

/// Stable identifier of a modification dimension: `global/resolution`,
/// `stage[1]/reduce_depth`, `stage[0]/block[2]/expand_ratio`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DimId(String);

impl DimId {
    pub fn global(name: &str) -> Self {
        DimId(format!("global/{name}"))
    }

    pub fn at(path: &ModulePath, name: &str) -> Self {
        if path.is_root() {
            DimId::global(name)
        } else {
            DimId(format!("{path}/{name}"))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn name(&self) -> &str {
        self.0.rsplit_once('/').map(|(_, n)| n).unwrap_or(&self.0)
    }

    /// Path of the module that owns the dimension (the model root for global dims).
    pub fn module_path(&self) -> Result<ModulePath, SpaceError> {
        let (scope, _) = self
            .0
            .rsplit_once('/')
            .ok_or_else(|| SpaceError::UnknownDim(self.0.clone()))?;
        if scope == "global" {
            return Ok(ModulePath::root());
        }
        scope.parse().map_err(|_| SpaceError::UnknownDim(self.0.clone()))
    }

    pub fn scope(&self) -> DimScope {
        match self.module_path().ok().as_ref().and_then(|p| p.segments().last().copied()) {
            None => DimScope::Global,
            Some(Segment::Stage(_)) => DimScope::Stage,
            Some(_) => DimScope::Block,
        }
    }
}

impl fmt::Display for DimId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for DimId {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let id = DimId(s.trim().to_string());
        id.module_path()?;
        if id.name().is_empty() {
            return Err(SpaceError::UnknownDim(s.to_string()));
        }
        Ok(id)
    }
}

/// One architectural choice applied to the SuperNet.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Modification {
    pub dim: DimId,
    pub value: ChoiceValue,
}

impl Modification {
    pub fn new(dim: DimId, value: ChoiceValue) -> Self {
        Modification { dim, value }
    }
}

impl fmt::Display for Modification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.dim, self.value)
    }
}

/// A SubNet, identified by its assignment of dimension values. Absent dims take their default.
///
/// The text form is `default` for the empty assignment, otherwise `dim=value` pairs joined by
/// `;` in dimension-id order, e.g. `global/resolution=160;stage[0]/reduce_depth=-1`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubNetSpec {
    assignment: BTreeMap<DimId, ChoiceValue>,
}

impl SubNetSpec {
    pub fn new() -> Self {
        SubNetSpec::default()
    }

    pub fn with(mut self, dim: DimId, value: ChoiceValue) -> Self {
        self.assignment.insert(dim, value);
        self
    }

    pub fn set(&mut self, dim: DimId, value: ChoiceValue) {
        self.assignment.insert(dim, value);
    }

    pub fn remove(&mut self, dim: &DimId) {
        self.assignment.remove(dim);
    }

    pub fn get(&self, dim: &DimId) -> Option<ChoiceValue> {
        self.assignment.get(dim).copied()
    }

    pub fn assignment(&self) -> &BTreeMap<DimId, ChoiceValue> {
        &self.assignment
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn modifications(&self) -> impl Iterator<Item = Modification> + '_ {
        self.assignment.iter().map(|(d, v)| Modification::new(d.clone(), *v))
    }
}

impl fmt::Display for SubNetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.assignment.is_empty() {
            return f.write_str("default");
        }
        for (i, (d, v)) in self.assignment.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{d}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for SubNetSpec {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let mut spec = SubNetSpec::new();
        if s.is_empty() || s == "default" {
            return Ok(spec);
        }
        for part in s.split(';').filter(|p| !p.trim().is_empty()) {
            let (d, v) = part
                .split_once('=')
                .ok_or_else(|| SpaceError::Syntax(format!("expected dim=value, got `{part}`")))?;
            let dim: DimId = d.parse()?;
            if spec.assignment.insert(dim.clone(), v.parse()?).is_some() {
                return Err(SpaceError::Syntax(format!("dimension `{dim}` assigned twice")));
            }
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choice_display_is_compact() {
        assert_eq!(ChoiceValue::int(2).to_string(), "2");
        assert_eq!(ChoiceValue::int(-3).to_string(), "-3");
        assert_eq!(ChoiceValue::new(0.75).unwrap().to_string(), "0.75");
        assert_eq!(ChoiceValue::new(-0.0).unwrap(), ChoiceValue::int(0));
        assert!(ChoiceValue::new(f64::NAN).is_none());
    }

    #[test]
    fn dim_ids() {
        let d: DimId = "stage[0]/block[2]/expand_ratio".parse().unwrap();
        assert_eq!(d.name(), "expand_ratio");
        assert_eq!(d.scope(), DimScope::Block);
        assert_eq!(DimId::global("resolution").scope(), DimScope::Global);
        assert_eq!("stage[1]/reduce_depth".parse::<DimId>().unwrap().scope(), DimScope::Stage);
        assert!("nowhere".parse::<DimId>().is_err());
        assert!("stage[x]/depth".parse::<DimId>().is_err());
    }

    #[test]
    fn spec_text() {
        let spec: SubNetSpec =
            "stage[0]/reduce_depth=-1;global/resolution=160".parse().unwrap();
        assert_eq!(spec.to_string(), "global/resolution=160;stage[0]/reduce_depth=-1");
        assert_eq!("default".parse::<SubNetSpec>().unwrap(), SubNetSpec::new());
        assert!("global/resolution=1;global/resolution=2".parse::<SubNetSpec>().is_err());
    }
}
