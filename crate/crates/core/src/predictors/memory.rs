use std::collections::{BTreeSet, HashMap};

use crate::graph::{AttrValue, OpKind, TensorShape};
use crate::ir::{alias_map, resolve, IrError, TailorModule};
use crate::modspace::{configure, SubNetSpec};

/// Memory footprint of one SubNet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryEstimate {
    pub param_bytes: u64,
    pub peak_activation_bytes: u64,
    pub total_bytes: u64,
}

/// Weight bytes of one operator from its active attributes and shapes.
///
/// Convolutions and single-input matmuls carry a bias unless `bias=0`; batchnorm carries a scale
/// and a shift per channel, layernorm per feature.
pub fn param_bytes(op: &OpKind, attrs: &crate::graph::Attrs, ins: &[TensorShape]) -> u64 {
    let int = |n: &str, d: i64| attrs.get(n).and_then(AttrValue::as_int).unwrap_or(d) as u64;
    let Some(x) = ins.first() else { return 0 };
    let width = x.dtype().size_bytes();
    let numel = match op {
        OpKind::Conv2d => {
            let (k, cout) = (int("kernel", 1), int("out_channels", 0));
            k * k * x.dims()[1] * cout + int("bias", 1) * cout
        }
        OpKind::DepthwiseConv2d => {
            let (k, c) = (int("kernel", 1), x.dims()[1]);
            k * k * c + int("bias", 1) * c
        }
        OpKind::MatMul if ins.len() == 1 => {
            let (cin, cout) = (*x.dims().last().unwrap(), int("out_features", 0));
            cin * cout + int("bias", 1) * cout
        }
        OpKind::BatchNorm => 2 * x.dims()[1],
        OpKind::LayerNorm => 2 * x.dims().last().unwrap(),
        _ => 0,
    };
    numel * width
}

/// Parameter bytes plus peak live activation bytes of the SubNet selected by `spec`.
///
/// Operators run in IR order. A tensor is live from its producer until its last consumer (graph
/// inputs from the start, graph outputs to the end); views (`identity`, `reshape`) and dropped
/// blocks share their input's buffer.
pub fn predict_memory(spec: &SubNetSpec, model: &TailorModule) -> Result<MemoryEstimate, IrError> {
    Ok(memory_of(&configure(model, spec)?))
}

/// [`predict_memory`] for an already configured model.
pub fn memory_of(updated: &TailorModule) -> MemoryEstimate {
    let info = updated.model_info().expect("memory estimation runs on a model root");
    let alias = alias_map(updated);
    let leaves: Vec<&TailorModule> = updated.leaves().into_iter().filter(|l| l.is_enabled()).collect();

    // storage root and size of every edge
    let mut root: HashMap<String, String> = HashMap::new();
    let mut size: HashMap<String, u64> = HashMap::new();
    for ((e, _), s) in info.inputs.iter().zip(&updated.feature().in_shapes) {
        root.insert(e.clone(), e.clone());
        size.insert(e.clone(), s.active.bytes());
    }
    let mut params = 0;
    let mut last_use: HashMap<String, usize> = HashMap::new();
    let n = leaves.len();
    for (i, leaf) in leaves.iter().enumerate() {
        let node = leaf.node().unwrap();
        let f = leaf.feature();
        let ins: Vec<TensorShape> = f.in_shapes.iter().map(|s| s.active.clone()).collect();
        params += param_bytes(&node.op, &f.active_attrs(), &ins);
        let inputs: Vec<String> = node.inputs.iter().map(|e| root[resolve(&alias, e)].clone()).collect();
        for r in &inputs {
            last_use.insert(r.clone(), i);
        }
        for (e, s) in node.outputs.iter().zip(&f.out_shapes) {
            let r = if node.op.is_alias() { inputs[0].clone() } else { e.clone() };
            size.entry(r.clone()).or_insert(s.active.bytes());
            last_use.entry(r.clone()).or_insert(i);
            root.insert(e.clone(), r);
        }
    }
    for e in &info.outputs {
        last_use.insert(root[resolve(&alias, e)].clone(), n);
    }

    let mut live: BTreeSet<&str> = info.inputs.iter().map(|(e, _)| e.as_str()).collect();
    let mut peak = live.iter().map(|r| size[*r]).sum::<u64>();
    for (i, leaf) in leaves.iter().enumerate() {
        for e in &leaf.node().unwrap().outputs {
            live.insert(root[e].as_str());
        }
        peak = peak.max(live.iter().map(|r| size[*r]).sum());
        live.retain(|r| last_use.get(*r).is_some_and(|&u| u > i));
    }
    MemoryEstimate { param_bytes: params, peak_activation_bytes: peak, total_bytes: params + peak }
}
