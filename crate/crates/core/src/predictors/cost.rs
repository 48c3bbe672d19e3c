use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::enumerator::{OpFeature, OperatorFeatureKey};
use crate::graph::{AttrValue, OpKind};

use super::lut::LatencyLut;
use super::PredictError;

/// One measured (or modeled) cost of a costing unit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cost {
    pub latency_ms: f64,
    pub energy_mj: Option<f64>,
}

/// Source of per-key costs.
pub trait CostBackend: Sync {
    fn id(&self) -> String;
    fn measure(&self, key: &OperatorFeatureKey) -> Result<Cost, PredictError>;
    /// Whether `measure` may be called concurrently.
    fn parallel_safe(&self) -> bool {
        true
    }
}

const QUANTUM: f64 = (1u64 << 20) as f64;

/// Rounds to a multiple of 2^-20 so that sums of costs are exact in any order.
pub fn quantize(x: f64) -> f64 {
    (x * QUANTUM).round() / QUANTUM
}

fn attr(f: &OpFeature, name: &str, default: i64) -> i64 {
    f.attrs.get(name).and_then(AttrValue::as_int).unwrap_or(default)
}

fn op_mult_adds(f: &OpFeature) -> u64 {
    let out = f.out_shapes.iter().map(|s| s.numel()).sum::<u64>();
    let input = |i: usize| f.in_shapes.get(i).map(|s| s.dims()).unwrap_or(&[]);
    match OpKind::parse(&f.op) {
        OpKind::Conv2d => {
            let k = attr(f, "kernel", 1) as u64;
            out * input(0)[1] * k * k
        }
        OpKind::DepthwiseConv2d => {
            let k = attr(f, "kernel", 1) as u64;
            out * k * k
        }
        OpKind::MatMul => out * input(0).last().copied().unwrap_or(1),
        OpKind::PoolAvg | OpKind::PoolMax => {
            let k = attr(f, "kernel", 1) as u64;
            out * k * k
        }
        OpKind::GlobalPool => f.in_shapes[0].numel(),
        OpKind::Identity | OpKind::Reshape | OpKind::Transpose | OpKind::Concat | OpKind::Split => 0,
        _ => out,
    }
}

/// Multiply-accumulate count of a costing unit.
pub fn mult_adds(key: &OperatorFeatureKey) -> u64 {
    key.ops().iter().map(op_mult_adds).sum()
}

/// Bytes crossing the unit boundary: every member input except the chained one, plus the last
/// member's outputs.
pub fn io_bytes(key: &OperatorFeatureKey) -> u64 {
    let ops = key.ops();
    let mut total = 0;
    for (i, f) in ops.iter().enumerate() {
        let skip = usize::from(i > 0);
        total += f.in_shapes.iter().skip(skip).map(|s| s.bytes()).sum::<u64>();
    }
    total + ops.last().unwrap().out_shapes.iter().map(|s| s.bytes()).sum::<u64>()
}

fn seeded(parts: &[&str]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Deterministic cost model seeded by a device id:
/// `latency = α·mult_adds + β·io_bytes + γ[op of first member]`, `energy = latency · power`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticalBackend {
    device_id: String,
    alpha: f64,
    beta: f64,
    power_w: f64,
}

impl AnalyticalBackend {
    pub fn new(device_id: &str) -> Self {
        let mut rng = seeded(&["analytical", device_id]);
        AnalyticalBackend {
            device_id: device_id.to_string(),
            alpha: 2e-7 * rng.gen_range(0.5..2.0),
            beta: 2e-7 * rng.gen_range(0.5..2.0),
            power_w: rng.gen_range(1.0..4.0),
        }
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    /// Milliseconds per multiply-accumulate.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Milliseconds per byte moved.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Millijoules per millisecond.
    pub fn power_w(&self) -> f64 {
        self.power_w
    }

    /// Fixed per-launch overhead of an operator type, in milliseconds.
    pub fn gamma(&self, op: &str) -> f64 {
        seeded(&["gamma", &self.device_id, op]).gen_range(0.005..0.02)
    }

    pub fn cost(&self, key: &OperatorFeatureKey) -> Cost {
        let raw = self.alpha * mult_adds(key) as f64
            + self.beta * io_bytes(key) as f64
            + self.gamma(&key.ops()[0].op);
        let latency_ms = quantize(raw);
        Cost { latency_ms, energy_mj: Some(quantize(latency_ms * self.power_w)) }
    }
}

impl CostBackend for AnalyticalBackend {
    fn id(&self) -> String {
        "analytical".into()
    }

    fn measure(&self, key: &OperatorFeatureKey) -> Result<Cost, PredictError> {
        Ok(self.cost(key))
    }
}

/// Serves costs profiled elsewhere, read from a file in the LUT format.
#[derive(Clone, Debug)]
pub struct FileBackend {
    source: String,
    entries: BTreeMap<OperatorFeatureKey, Cost>,
}

impl FileBackend {
    pub fn new(source: &str, measurements: LatencyLut) -> Self {
        FileBackend { source: source.to_string(), entries: measurements.entries }
    }

    pub fn parse(source: &str, text: &str) -> Result<Self, PredictError> {
        Ok(FileBackend::new(source, LatencyLut::parse(text)?))
    }
}

impl CostBackend for FileBackend {
    fn id(&self) -> String {
        format!("file:{}", self.source)
    }

    fn measure(&self, key: &OperatorFeatureKey) -> Result<Cost, PredictError> {
        self.entries.get(key).copied().ok_or_else(|| PredictError::MissingKey(key.to_string()))
    }
}
