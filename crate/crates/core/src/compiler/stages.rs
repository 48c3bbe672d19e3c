use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::graph::{ComputationGraph, TensorShape};
use crate::ir::{self, Knob, ModelInfo, ModuleKind, ModulePath, TailorModule, DEFAULT_BLOCK, REDUCE_DEPTH, RESOLUTION};
use crate::modspace::ChoiceValue;

use super::parse::propagate;
use super::CompileError;

fn spatial(s: &TensorShape) -> &[u64] {
    match s.rank() {
        4 => &s.dims()[2..],
        3 => &s.dims()[1..2],
        _ => &[],
    }
}

/// The image input whose spatial extents the `resolution` knob controls: the first square NCHW
/// graph input.
fn resolution_input(g: &ComputationGraph) -> Option<(String, u64)> {
    g.inputs().iter().find_map(|e| {
        let s = g.edge_shape(e)?;
        (s.rank() == 4 && s.dims()[2] == s.dims()[3]).then(|| (e.clone(), s.dims()[2]))
    })
}

fn stage(blocks: Vec<TailorModule>, depth_hook: bool) -> TailorModule {
    let entry = blocks[0].io.as_ref().unwrap().0.clone();
    let exit = blocks.last().unwrap().io.as_ref().unwrap().1.clone();
    let mut s = TailorModule::group(ModuleKind::Stage, blocks, (entry, exit));
    if depth_hook {
        let zero = ChoiceValue::int(0);
        s.feature.knobs.insert(REDUCE_DEPTH.into(), Knob { meta: zero, active: zero, choices: None });
    }
    s
}

/// Step 3: groups consecutive blocks with identical output resolution and width into stages and
/// assembles the model root. Loose operators stay at model level and end the current run; a
/// `DefaultBlock` that changes resolution forms a stage of its own without a depth hook.
pub fn divide_stages(g: &ComputationGraph, items: Vec<TailorModule>) -> Result<TailorModule, CompileError> {
    let shapes = propagate(g)?;
    let mut children: Vec<TailorModule> = Vec::new();
    let mut run: Vec<TailorModule> = Vec::new();
    let mut run_key: Option<Vec<u64>> = None;
    let flush = |run: &mut Vec<TailorModule>, children: &mut Vec<TailorModule>| {
        if !run.is_empty() {
            children.push(stage(std::mem::take(run), true));
        }
    };
    for item in items {
        if item.kind != ModuleKind::Block {
            flush(&mut run, &mut children);
            run_key = None;
            children.push(item);
            continue;
        }
        let (entry, exit) = item.io.clone().unwrap();
        let (ins, outs) = (&shapes[&entry], &shapes[&exit]);
        if item.template.as_deref() == Some(DEFAULT_BLOCK) && spatial(ins) != spatial(outs) {
            flush(&mut run, &mut children);
            run_key = None;
            children.push(stage(vec![item], false));
            continue;
        }
        let key = outs.dims()[1..].to_vec();
        if run_key.as_ref() != Some(&key) {
            flush(&mut run, &mut children);
            run_key = Some(key);
        }
        run.push(item);
    }
    flush(&mut run, &mut children);

    let mut model = TailorModule::group(ModuleKind::Model, children, (String::new(), String::new()));
    model.io = None;
    let res = resolution_input(g);
    if let Some((_, r)) = &res {
        let v = ChoiceValue::int(*r as i64);
        model.feature.knobs.insert(RESOLUTION.into(), Knob { meta: v, active: v, choices: None });
    }
    let declared: BTreeSet<String> =
        g.edges().iter().filter(|(_, s)| s.is_some()).map(|(e, _)| e.clone()).collect();
    model.info = Some(Arc::new(ModelInfo {
        inputs: g.inputs().iter().map(|e| (e.clone(), g.edge_shape(e).unwrap().clone())).collect(),
        outputs: g.outputs().to_vec(),
        declared,
        metadata: g.metadata().clone(),
        resolution_input: res.map(|(e, _)| e),
    }));
    model.assign_paths(ModulePath::root());
    let model = ir::update(&model)?;
    debug_assert!(check_meta(&model, &shapes));
    Ok(model)
}

fn check_meta(model: &TailorModule, shapes: &HashMap<String, TensorShape>) -> bool {
    model.leaves().iter().all(|l| {
        let n = l.node().unwrap();
        n.outputs.iter().zip(&l.feature.out_shapes).all(|(e, s)| shapes[e] == s.meta)
    })
}
