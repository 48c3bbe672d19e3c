use std::collections::BTreeMap;
use std::fmt::Write;

use rayon::prelude::*;

use crate::enumerator::{active_keys, FusionPlan, FusionRules, Manifest, OperatorFeatureKey};
use crate::ir::TailorModule;
use crate::modspace::{configure, SubNetSpec};

use super::cost::{Cost, CostBackend};
use super::PredictError;

pub const LUT_HEADER: &str = "# tailorforge-lut v1";

/// Where a LUT's numbers came from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Provenance {
    pub device_id: String,
    pub backend_id: String,
    pub created_at: String,
    pub fusion_ruleset_hash: String,
}

/// Per-key latency (and optional energy) for one device.
#[derive(Clone, Debug, PartialEq)]
pub struct LatencyLut {
    pub provenance: Provenance,
    pub(crate) entries: BTreeMap<OperatorFeatureKey, Cost>,
}

impl LatencyLut {
    pub fn new(provenance: Provenance, entries: BTreeMap<OperatorFeatureKey, Cost>) -> Result<Self, PredictError> {
        for (k, c) in &entries {
            let ok = |v: f64| v.is_finite() && v >= 0.0;
            if !ok(c.latency_ms) || !c.energy_mj.map_or(true, ok) {
                return Err(PredictError::BadLut(format!("cost of `{k}` must be finite and non-negative")));
            }
        }
        Ok(LatencyLut { provenance, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &OperatorFeatureKey) -> Option<&Cost> {
        self.entries.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OperatorFeatureKey, &Cost)> {
        self.entries.iter()
    }

    /// Keys of `manifest` that have no entry.
    pub fn missing<'a>(&self, manifest: &'a Manifest) -> Vec<&'a OperatorFeatureKey> {
        manifest.keys.iter().filter(|k| !self.entries.contains_key(*k)).collect()
    }

    /// Tab-separated rows `key, latency_ms, energy_mj` after a provenance header.
    pub fn to_text(&self) -> String {
        let p = &self.provenance;
        let mut out = format!("{LUT_HEADER}\n");
        let _ = writeln!(out, "# device_id={}", p.device_id);
        let _ = writeln!(out, "# backend_id={}", p.backend_id);
        let _ = writeln!(out, "# created_at={}", p.created_at);
        let _ = writeln!(out, "# fusion_ruleset_hash={}", p.fusion_ruleset_hash);
        for (k, c) in &self.entries {
            let energy = c.energy_mj.map(|e| e.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{k}\t{}\t{energy}", c.latency_ms);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, PredictError> {
        let mut lines = text.lines().enumerate();
        if lines.next().map(|(_, l)| l.trim()) != Some(LUT_HEADER) {
            return Err(PredictError::BadLut(format!("missing `{LUT_HEADER}` header")));
        }
        let mut provenance = Provenance::default();
        let mut entries = BTreeMap::new();
        for (n, line) in lines {
            let bad = |what: &str| PredictError::BadLut(format!("line {}: {what}", n + 1));
            if let Some(meta) = line.strip_prefix('#') {
                let Some((k, v)) = meta.trim().split_once('=') else { continue };
                let slot = match k {
                    "device_id" => &mut provenance.device_id,
                    "backend_id" => &mut provenance.backend_id,
                    "created_at" => &mut provenance.created_at,
                    "fusion_ruleset_hash" => &mut provenance.fusion_ruleset_hash,
                    _ => return Err(bad(&format!("unknown provenance field `{k}`"))),
                };
                *slot = v.to_string();
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 2 && cols.len() != 3 {
                return Err(bad("expected `key<TAB>latency_ms[<TAB>energy_mj]`"));
            }
            let key: OperatorFeatureKey = cols[0].parse().map_err(|e| bad(&format!("{e}")))?;
            let latency_ms = cols[1].parse().map_err(|_| bad("latency is not a number"))?;
            let energy_mj = match cols.get(2).map(|s| s.trim()) {
                None | Some("") => None,
                Some(s) => Some(s.parse().map_err(|_| bad("energy is not a number"))?),
            };
            if entries.insert(key, Cost { latency_ms, energy_mj }).is_some() {
                return Err(bad("duplicate key"));
            }
        }
        LatencyLut::new(provenance, entries)
    }
}

/// Measures every manifest key exactly once.
pub fn build_latency_lut(
    manifest: &Manifest,
    backend: &dyn CostBackend,
    device_id: &str,
    created_at: &str,
) -> Result<LatencyLut, PredictError> {
    let keys: Vec<&OperatorFeatureKey> = manifest.keys.iter().collect();
    let results: Vec<Result<Cost, PredictError>> = if backend.parallel_safe() {
        keys.par_iter().map(|k| backend.measure(k)).collect()
    } else {
        keys.iter().map(|k| backend.measure(k)).collect()
    };
    let mut entries = BTreeMap::new();
    let mut missing = Vec::new();
    for (k, r) in keys.into_iter().zip(results) {
        match r {
            Ok(c) => {
                entries.insert(k.clone(), c);
            }
            Err(_) => missing.push(k.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(PredictError::PartialLut { missing });
    }
    let provenance = Provenance {
        device_id: device_id.to_string(),
        backend_id: backend.id(),
        created_at: created_at.to_string(),
        fusion_ruleset_hash: manifest.fusion_ruleset_hash.clone(),
    };
    LatencyLut::new(provenance, entries)
}

/// Latency and energy predictor bound to one compiled model, LUT and fusion ruleset.
#[derive(Clone, Debug)]
pub struct LatencyPredictor<'a> {
    model: &'a TailorModule,
    lut: &'a LatencyLut,
    plan: FusionPlan,
}

impl<'a> LatencyPredictor<'a> {
    pub fn new(model: &'a TailorModule, lut: &'a LatencyLut, rules: &FusionRules) -> Result<Self, PredictError> {
        let plan = FusionPlan::new(model, rules);
        if lut.provenance.fusion_ruleset_hash != plan.ruleset_hash() {
            return Err(PredictError::RulesetMismatch {
                lut: lut.provenance.fusion_ruleset_hash.clone(),
                rules: plan.ruleset_hash().to_string(),
            });
        }
        Ok(LatencyPredictor { model, lut, plan })
    }

    pub fn keys(&self, spec: &SubNetSpec) -> Result<Vec<OperatorFeatureKey>, PredictError> {
        Ok(active_keys(&configure(self.model, spec)?, &self.plan))
    }

    fn costs(&self, spec: &SubNetSpec) -> Result<Vec<(OperatorFeatureKey, Cost)>, PredictError> {
        self.keys(spec)?
            .into_iter()
            .map(|k| match self.lut.get(&k) {
                Some(c) => Ok((k, *c)),
                None => Err(PredictError::MissingKey(k.to_string())),
            })
            .collect()
    }

    pub fn latency_ms(&self, spec: &SubNetSpec) -> Result<f64, PredictError> {
        Ok(self.costs(spec)?.iter().map(|(_, c)| c.latency_ms).sum())
    }

    pub fn energy_mj(&self, spec: &SubNetSpec) -> Result<f64, PredictError> {
        self.costs(spec)?
            .iter()
            .map(|(k, c)| c.energy_mj.ok_or_else(|| PredictError::MissingEnergy(k.to_string())))
            .sum()
    }
}

/// Σ of LUT latencies over the active costing units of `spec`.
pub fn predict_latency(
    spec: &SubNetSpec,
    model: &TailorModule,
    lut: &LatencyLut,
    rules: &FusionRules,
) -> Result<f64, PredictError> {
    LatencyPredictor::new(model, lut, rules)?.latency_ms(spec)
}

/// Σ of LUT energies over the active costing units of `spec`.
pub fn predict_energy(
    spec: &SubNetSpec,
    model: &TailorModule,
    lut: &LatencyLut,
    rules: &FusionRules,
) -> Result<f64, PredictError> {
    LatencyPredictor::new(model, lut, rules)?.energy_mj(spec)
}
