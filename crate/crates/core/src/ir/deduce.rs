//! Per-operator shape deduction rules.
//!
//! Every rule maps the active input shapes and active attributes of one operator to its output
//! shapes without executing anything. Custom operators fall back to pass-through of their first
//! input.

use crate::graph::{attr_int, AttrValue, Attrs, OpKind, TensorShape};

fn norm_axis(axis: i64, rank: usize) -> Result<usize, String> {
    let r = rank as i64;
    let a = if axis < 0 { axis + r } else { axis };
    if a < 0 || a >= r {
        Err(format!("axis {axis} out of range for rank {rank}"))
    } else {
        Ok(a as usize)
    }
}

fn spatial(extent: u64, kernel: i64, stride: i64, padding: i64) -> Result<u64, String> {
    let padded = extent as i64 + 2 * padding;
    if padded < kernel {
        return Err(format!(
            "spatial extent {extent} (padding {padding}) is smaller than kernel {kernel}"
        ));
    }
    Ok(((padded - kernel) / stride + 1) as u64)
}

fn broadcast(a: &TensorShape, b: &TensorShape) -> Result<TensorShape, String> {
    let rank = a.rank().max(b.rank());
    let mut dims = vec![0u64; rank];
    for i in 0..rank {
        let da = if i < rank - a.rank() { 1 } else { a.dims()[i - (rank - a.rank())] };
        let db = if i < rank - b.rank() { 1 } else { b.dims()[i - (rank - b.rank())] };
        dims[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(format!("cannot broadcast {a} with {b}")),
        };
    }
    a.with_dims(dims).map_err(|e| e.to_string())
}

fn req(attrs: &Attrs, name: &str) -> Result<i64, String> {
    attrs
        .get(name)
        .and_then(AttrValue::as_int)
        .ok_or_else(|| format!("missing integer attribute `{name}`"))
}

fn need_rank(s: &TensorShape, min: usize, op: &OpKind) -> Result<(), String> {
    if s.rank() < min {
        Err(format!("{op} needs rank >= {min}, got {s}"))
    } else {
        Ok(())
    }
}

/// Output shapes of one operator under the given (active) attributes and input shapes.
pub fn deduce(
    op: &OpKind,
    attrs: &Attrs,
    inputs: &[&TensorShape],
    n_outputs: usize,
) -> Result<Vec<TensorShape>, String> {
    let x = *inputs.first().ok_or("operator has no inputs")?;
    let mk = |dims: Vec<u64>| x.with_dims(dims).map_err(|e| e.to_string());
    let one = |s: TensorShape| Ok(vec![s]);
    match op {
        OpKind::Conv2d | OpKind::DepthwiseConv2d | OpKind::PoolAvg | OpKind::PoolMax => {
            if x.rank() != 4 {
                return Err(format!("{op} expects an NCHW input, got {x}"));
            }
            let k = req(attrs, "kernel")?;
            let s = req(attrs, "stride")?;
            let p = attr_int(attrs, "padding", 0);
            let d = x.dims();
            let c = match op {
                OpKind::Conv2d => req(attrs, "out_channels")? as u64,
                _ => d[1],
            };
            one(mk(vec![d[0], c, spatial(d[2], k, s, p)?, spatial(d[3], k, s, p)?])?)
        }
        OpKind::MatMul => {
            if inputs.len() == 1 {
                let n = req(attrs, "out_features")? as u64;
                let mut dims = x.dims().to_vec();
                *dims.last_mut().unwrap() = n;
                return one(mk(dims)?);
            }
            let (a, b) = (x, inputs[1]);
            need_rank(a, 2, op)?;
            need_rank(b, 2, op)?;
            let (ra, rb) = (a.rank(), b.rank());
            let (m, k) = (a.dims()[ra - 2], a.dims()[ra - 1]);
            let (k2, n) = (b.dims()[rb - 2], b.dims()[rb - 1]);
            if k != k2 {
                return Err(format!("matmul inner dims differ: {a} x {b}"));
            }
            let ba = a.with_dims(a.dims()[..ra - 2].to_vec().into_iter().chain([1]).collect());
            let bb = b.with_dims(b.dims()[..rb - 2].to_vec().into_iter().chain([1]).collect());
            let batch = broadcast(&ba.map_err(|e| e.to_string())?, &bb.map_err(|e| e.to_string())?)?;
            let mut dims = batch.dims()[..batch.rank() - 1].to_vec();
            dims.extend([m, n]);
            one(mk(dims)?)
        }
        OpKind::Add | OpKind::Mul => {
            if inputs.len() == 1 {
                one(x.clone())
            } else {
                one(broadcast(x, inputs[1])?)
            }
        }
        OpKind::Softmax | OpKind::LayerNorm => {
            norm_axis(attr_int(attrs, "axis", -1), x.rank())?;
            one(x.clone())
        }
        OpKind::BatchNorm => {
            need_rank(x, 2, op)?;
            one(x.clone())
        }
        OpKind::Relu | OpKind::Gelu | OpKind::Identity => one(x.clone()),
        OpKind::GlobalPool => {
            need_rank(x, 3, op)?;
            let mut dims = x.dims().to_vec();
            dims[2..].iter_mut().for_each(|d| *d = 1);
            one(mk(dims)?)
        }
        OpKind::Reshape => {
            let target = attrs
                .get("shape")
                .and_then(AttrValue::as_ints)
                .ok_or("missing `shape` attribute")?;
            let mut infer = None;
            let mut known: u64 = 1;
            for (i, &t) in target.iter().enumerate() {
                match t {
                    -1 if infer.is_none() => infer = Some(i),
                    -1 => return Err("reshape allows a single inferred (-1) dim".into()),
                    t if t >= 1 => known *= t as u64,
                    t => return Err(format!("invalid reshape extent {t}")),
                }
            }
            let numel = x.numel();
            let mut dims: Vec<u64> = target.iter().map(|&t| t.max(0) as u64).collect();
            match infer {
                Some(i) => {
                    if numel % known != 0 {
                        return Err(format!("cannot reshape {x} into {target:?}"));
                    }
                    dims[i] = numel / known;
                }
                None if known != numel => return Err(format!("cannot reshape {x} into {target:?}")),
                None => {}
            }
            one(mk(dims)?)
        }
        OpKind::Concat => {
            let axis = norm_axis(req(attrs, "axis")?, x.rank())?;
            let mut dims = x.dims().to_vec();
            for s in &inputs[1..] {
                if s.rank() != x.rank() || s.dtype() != x.dtype() {
                    return Err(format!("concat inputs disagree: {x} vs {s}"));
                }
                for (i, (&a, &b)) in x.dims().iter().zip(s.dims()).enumerate() {
                    if i != axis && a != b {
                        return Err(format!("concat inputs disagree off-axis: {x} vs {s}"));
                    }
                }
                dims[axis] += s.dims()[axis];
            }
            one(mk(dims)?)
        }
        OpKind::Split => {
            let axis = norm_axis(req(attrs, "axis")?, x.rank())?;
            let sizes = attrs.get("sizes").and_then(AttrValue::as_ints).ok_or("missing `sizes`")?;
            if sizes.iter().any(|&s| s < 1) || sizes.iter().sum::<i64>() as u64 != x.dims()[axis] {
                return Err(format!("split sizes {sizes:?} do not partition axis {axis} of {x}"));
            }
            sizes
                .iter()
                .map(|&s| {
                    let mut dims = x.dims().to_vec();
                    dims[axis] = s as u64;
                    mk(dims)
                })
                .collect()
        }
        OpKind::Transpose => {
            let perm = attrs.get("perm").and_then(AttrValue::as_ints).ok_or("missing `perm`")?;
            let mut seen = vec![false; x.rank()];
            if perm.len() != x.rank() {
                return Err(format!("perm {perm:?} does not match rank of {x}"));
            }
            let mut dims = Vec::with_capacity(x.rank());
            for &p in perm {
                let p = norm_axis(p, x.rank())?;
                if std::mem::replace(&mut seen[p], true) {
                    return Err(format!("perm {perm:?} repeats an axis"));
                }
                dims.push(x.dims()[p]);
            }
            one(mk(dims)?)
        }
        OpKind::Custom(_) => Ok(vec![x.clone(); n_outputs]),
    }
}
