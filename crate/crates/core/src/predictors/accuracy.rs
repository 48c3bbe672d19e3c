use std::collections::BTreeMap;
use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::modspace::{ChoiceValue, DimId, ModificationSpace, SubNetSpec};

use super::cost::quantize;
use super::PredictError;

pub const SENSITIVITY_HEADER: &str = "# tailorforge-sensitivity v1";
pub const ACCURACY_HEADER: &str = "# tailorforge-accuracy v1";

/// Accuracy (in percent) of a SubNet, e.g. from validating a fine-tuned SuperNet.
pub trait AccuracyOracle {
    fn acc(&mut self, spec: &SubNetSpec) -> Result<f64, PredictError>;
}

/// Desk-scale stand-in for validation: an additive accuracy model with optional interaction noise.
///
/// `acc = base − Σ w(dim, value) + ε·u(spec)` where
/// `w(dim, v) = s_dim · |v − default| / max_c |c − default|`, `s_dim ~ U[0.5, 3)` drawn from the
/// seed, and `u(spec) ∈ [−1, 1)` is a seeded hash of the canonical spec. Weights and noise are
/// quantized like costs, so accuracy differences are exact.
#[derive(Clone, Debug)]
pub struct SyntheticOracle {
    space: ModificationSpace,
    seed: u64,
    base: f64,
    eps: f64,
    weights: BTreeMap<(DimId, ChoiceValue), f64>,
}

impl SyntheticOracle {
    pub fn new(space: &ModificationSpace, seed: u64, base: f64, eps: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = BTreeMap::new();
        for d in space.dims() {
            let scale: f64 = rng.gen_range(0.5..3.0);
            let dist = |c: &ChoiceValue| (c.get() - d.default.get()).abs();
            let max = d.candidates.iter().map(dist).fold(0.0, f64::max);
            for c in &d.candidates {
                let w = if max > 0.0 { quantize(scale * dist(c) / max) } else { 0.0 };
                weights.insert((d.id.clone(), *c), w);
            }
        }
        SyntheticOracle { space: space.clone(), seed, base, eps, weights }
    }

    /// Parses `synthetic:<seed>[:eps=<f>][:base=<f>]`; `eps` is relative to the smallest nonzero
    /// weight, `base` defaults to 80.
    pub fn from_spec(space: &ModificationSpace, text: &str) -> Result<Self, PredictError> {
        let bad = || PredictError::BadOracle(text.to_string());
        let mut parts = text.strip_prefix("synthetic:").ok_or_else(bad)?.split(':');
        let seed = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let (mut eps, mut base) = (0.0, 80.0);
        for p in parts {
            match p.split_once('=') {
                Some(("eps", v)) => eps = v.parse().map_err(|_| bad())?,
                Some(("base", v)) => base = v.parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        let oracle = SyntheticOracle::new(space, seed, base, 0.0);
        let eps = eps * oracle.min_weight();
        Ok(SyntheticOracle { eps: quantize(eps), ..oracle })
    }

    pub fn weight(&self, dim: &DimId, value: ChoiceValue) -> Option<f64> {
        self.weights.get(&(dim.clone(), value)).copied()
    }

    /// Smallest nonzero weight (0 for a space without choices).
    pub fn min_weight(&self) -> f64 {
        let m = self.weights.values().copied().filter(|w| *w > 0.0).fold(f64::INFINITY, f64::min);
        if m.is_finite() { m } else { 0.0 }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn interaction(&self, canonical: &SubNetSpec) -> f64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(canonical.to_string().as_bytes());
        let bytes: [u8; 8] = h.finalize()[..8].try_into().unwrap();
        (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }
}

impl AccuracyOracle for SyntheticOracle {
    fn acc(&mut self, spec: &SubNetSpec) -> Result<f64, PredictError> {
        let spec = self.space.canonicalize(spec)?;
        let drop: f64 = spec.modifications().map(|m| self.weights[&(m.dim, m.value)]).sum();
        let noise = if self.eps == 0.0 || spec.is_empty() { 0.0 } else { quantize(self.eps * self.interaction(&spec)) };
        Ok(self.base - drop + noise)
    }
}

/// Accuracies measured elsewhere: tab-separated `spec, accuracy` rows after a version header.
#[derive(Clone, Debug, PartialEq)]
pub struct FileOracle {
    space: ModificationSpace,
    values: BTreeMap<String, f64>,
}

impl FileOracle {
    pub fn parse(space: &ModificationSpace, text: &str) -> Result<Self, PredictError> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(ACCURACY_HEADER) {
            return Err(PredictError::BadOracle(format!("missing `{ACCURACY_HEADER}` header")));
        }
        let mut values = BTreeMap::new();
        for line in lines.filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
            let bad = || PredictError::BadOracle(format!("bad accuracy row `{line}`"));
            let (s, a) = line.split_once('\t').ok_or_else(bad)?;
            let spec: SubNetSpec = s.parse().map_err(|_| bad())?;
            let spec = space.canonicalize(&spec)?;
            values.insert(spec.to_string(), a.trim().parse().map_err(|_| bad())?);
        }
        Ok(FileOracle { space: space.clone(), values })
    }
}

impl AccuracyOracle for FileOracle {
    fn acc(&mut self, spec: &SubNetSpec) -> Result<f64, PredictError> {
        let key = self.space.canonicalize(spec)?.to_string();
        self.values.get(&key).copied().ok_or(PredictError::NoAccuracy(key))
    }
}

/// Accuracy of the unmodified SuperNet plus the accuracy drop of every single modification.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityTable {
    pub base_acc: f64,
    deltas: BTreeMap<(DimId, ChoiceValue), f64>,
}

impl SensitivityTable {
    pub fn new(base_acc: f64, deltas: BTreeMap<(DimId, ChoiceValue), f64>) -> Self {
        SensitivityTable { base_acc, deltas }
    }

    pub fn delta(&self, dim: &DimId, value: ChoiceValue) -> Option<f64> {
        self.deltas.get(&(dim.clone(), value)).copied()
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DimId, ChoiceValue, f64)> {
        self.deltas.iter().map(|((d, v), x)| (d, *v, *x))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{SENSITIVITY_HEADER}\nbase_acc\t{}\n", self.base_acc);
        for ((d, v), x) in &self.deltas {
            let _ = writeln!(out, "{d}\t{v}\t{x}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, PredictError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(SENSITIVITY_HEADER) {
            return Err(PredictError::BadTable(format!("missing `{SENSITIVITY_HEADER}` header")));
        }
        let base_acc = lines
            .next()
            .and_then(|l| l.strip_prefix("base_acc\t"))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| PredictError::BadTable("missing `base_acc` row".into()))?;
        let mut deltas = BTreeMap::new();
        for line in lines {
            let bad = || PredictError::BadTable(format!("bad row `{line}`"));
            let cols: Vec<&str> = line.split('\t').collect();
            let [d, v, x] = cols[..] else { return Err(bad()) };
            let key = (d.parse().map_err(|_| bad())?, v.parse().map_err(|_| bad())?);
            if deltas.insert(key, x.trim().parse().map_err(|_| bad())?).is_some() {
                return Err(bad());
            }
        }
        Ok(SensitivityTable { base_acc, deltas })
    }
}

/// One baseline call plus one call per non-default (dimension, value) pair.
pub fn build_sensitivity_table(
    space: &ModificationSpace,
    oracle: &mut dyn AccuracyOracle,
) -> Result<SensitivityTable, PredictError> {
    let base_acc = oracle.acc(&SubNetSpec::new())?;
    let mut deltas = BTreeMap::new();
    for d in space.dims() {
        for &c in &d.candidates {
            let delta = if c == d.default {
                0.0
            } else {
                base_acc - oracle.acc(&SubNetSpec::new().with(d.id.clone(), c))?
            };
            deltas.insert((d.id.clone(), c), delta);
        }
    }
    Ok(SensitivityTable { base_acc, deltas })
}

/// `base_acc − Σ Δ` over the modifications of a canonical spec.
pub fn predict_accuracy(spec: &SubNetSpec, table: &SensitivityTable) -> Result<f64, PredictError> {
    let mut drop = 0.0;
    for m in spec.modifications() {
        drop += table
            .delta(&m.dim, m.value)
            .ok_or_else(|| PredictError::Uncovered(m.to_string()))?;
    }
    Ok(table.base_acc - drop)
}
