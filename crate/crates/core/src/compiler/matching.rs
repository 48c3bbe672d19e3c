use std::collections::{BTreeSet, HashMap};

use crate::graph::{ComputationGraph, OpKind, TensorShape};
use crate::ir::{
    BlockTemplate, HookKind, HookRule, Knob, ModuleKind, SlotInput, TailorModule, Variant, DEFAULT_BLOCK,
};
use crate::modspace::ChoiceValue;

use super::parse::propagate;
use super::CompileError;

/// A successful anchored match: graph node index per variant node (the last one is the exit).
#[derive(Clone, Debug)]
pub(crate) struct Match {
    pub template: usize,
    pub variant: usize,
    pub nodes: Vec<usize>,
    pub entry: String,
}

impl Match {
    fn set(&self) -> BTreeSet<usize> {
        self.nodes.iter().copied().collect()
    }
}

fn commutative(op: &OpKind) -> bool {
    matches!(op, OpKind::Add | OpKind::Mul)
}

struct Matcher<'a> {
    g: &'a ComputationGraph,
    variant: &'a Variant,
    entry: &'a str,
    allowed: &'a BTreeSet<usize>,
}

impl Matcher<'_> {
    fn edge(&self, r: SlotInput, assign: &[usize]) -> &str {
        match r {
            SlotInput::Entry => self.entry,
            SlotInput::Slot(j) => &self.g.nodes()[assign[j]].outputs[0],
        }
    }

    fn search(&self, assign: &mut Vec<usize>) -> bool {
        let k = assign.len();
        if k == self.variant.nodes.len() {
            return self.closed(assign);
        }
        let (_, ops, refs) = &self.variant.nodes[k];
        let want: Vec<String> = refs.iter().map(|&r| self.edge(r, assign).to_string()).collect();
        let mut tried = BTreeSet::new();
        for &c in self.g.consumers(&want[0]) {
            if !tried.insert(c) || !self.allowed.contains(&c) || assign.contains(&c) {
                continue;
            }
            let n = &self.g.nodes()[c];
            if !ops.contains(&n.op) || n.inputs.len() != want.len() || n.outputs.len() != 1 {
                continue;
            }
            let swapped = want.len() == 2 && n.inputs[0] == want[1] && n.inputs[1] == want[0];
            if n.inputs != want && !(commutative(&n.op) && swapped) {
                continue;
            }
            assign.push(c);
            if self.search(assign) {
                return true;
            }
            assign.pop();
        }
        false
    }

    /// Single entry, and only the exit's output leaves the matched set.
    fn closed(&self, assign: &[usize]) -> bool {
        let set: BTreeSet<usize> = assign.iter().copied().collect();
        let exit = *assign.last().unwrap();
        assign.iter().all(|&u| {
            let n = &self.g.nodes()[u];
            let inputs_ok = n
                .inputs
                .iter()
                .all(|e| e == self.entry || self.g.producer(e).is_some_and(|p| set.contains(&p)));
            let outputs_ok = u == exit
                || n.outputs.iter().all(|e| {
                    !self.g.outputs().contains(e) && self.g.consumers(e).iter().all(|c| set.contains(c))
                });
            inputs_ok && outputs_ok
        })
    }
}

fn find_match(
    g: &ComputationGraph,
    templates: &[BlockTemplate],
    t: usize,
    entry: &str,
    allowed: &BTreeSet<usize>,
    accept: &dyn Fn(&[usize]) -> bool,
) -> Option<Match> {
    for (vi, v) in templates[t].variants().iter().enumerate() {
        let m = Matcher { g, variant: v, entry, allowed };
        let mut assign = Vec::new();
        if m.search(&mut assign) && accept(&assign) {
            return Some(Match { template: t, variant: vi, nodes: assign, entry: entry.to_string() });
        }
    }
    None
}

fn width(s: &TensorShape) -> u64 {
    if s.rank() == 4 {
        s.dims()[1]
    } else {
        *s.dims().last().unwrap()
    }
}

fn templated_block(
    g: &ComputationGraph,
    shapes: &HashMap<String, TensorShape>,
    templates: &[BlockTemplate],
    m: &Match,
    leaves: &HashMap<usize, TailorModule>,
    pos: &[usize],
) -> TailorModule {
    let t = &templates[m.template];
    let variant = &t.variants()[m.variant];
    let mut members = m.nodes.clone();
    members.sort_by_key(|&u| pos[u]);
    let child_of = |u: usize| members.iter().position(|&x| x == u).unwrap();
    let exit = g.nodes()[*m.nodes.last().unwrap()].outputs[0].clone();
    let mut b = TailorModule::group(
        ModuleKind::Block,
        members.iter().map(|u| leaves[u].clone()).collect(),
        (m.entry.clone(), exit),
    );
    b.template = Some(t.name.clone());
    for h in &t.hooks {
        let targets: Vec<(usize, String)> = h
            .targets
            .iter()
            .filter_map(|(role, attr)| {
                let k = variant.nodes.iter().position(|n| &n.0 == role)?;
                Some((child_of(m.nodes[k]), attr.clone()))
            })
            .collect();
        if targets.is_empty() {
            continue;
        }
        let (rule, meta) = match h.kind {
            HookKind::ExpandFromInput => {
                let base = width(&shapes[&m.entry]);
                let (idx, attr) = &targets[0];
                let w = b.children[*idx].feature.attrs[attr].meta.as_int().unwrap_or(1);
                (HookRule::ExpandFromInput { targets, base }, w as f64 / base as f64)
            }
            HookKind::ScaleMeta => (HookRule::ScaleMeta { targets }, 1.0),
        };
        let meta = ChoiceValue::new(meta).expect("finite ratio");
        b.feature.knobs.insert(h.name.clone(), Knob { meta, active: meta, choices: None });
        b.hooks.insert(h.name.clone(), rule);
    }
    b
}

fn describe(g: &ComputationGraph, templates: &[BlockTemplate], m: &Match) -> String {
    let ids: Vec<&str> = m.nodes.iter().map(|&u| g.nodes()[u].id.as_str()).collect();
    format!("{} over [{}]", templates[m.template].name, ids.join(", "))
}

/// Step 2 with an explicit policy. With `forced`, every template is a user-forced assignment and
/// overlapping candidate matches of two different templates are an error.
pub(crate) fn match_blocks_with(
    g: &ComputationGraph,
    mods: Vec<TailorModule>,
    templates: &[BlockTemplate],
    forced: bool,
) -> Result<Vec<TailorModule>, CompileError> {
    if templates.is_empty() {
        return Ok(mods);
    }
    let shapes = propagate(g)?;
    let index: HashMap<&str, usize> = g.nodes().iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut pos = vec![0; g.nodes().len()];
    for (k, &i) in g.topo_order().iter().enumerate() {
        pos[i] = k;
    }
    let node_set = |m: &TailorModule| -> BTreeSet<usize> { m.source_nodes.iter().map(|id| index[id.as_str()]).collect() };

    let mut leaves: HashMap<usize, TailorModule> = HashMap::new();
    for m in &mods {
        for l in m.leaves() {
            leaves.insert(index[l.node.as_ref().unwrap().id.as_str()], l.clone());
        }
    }

    // Candidate matches per item position.
    let mut chosen: Vec<Option<(Match, usize)>> = vec![None; mods.len()];
    let mut all: Vec<Match> = Vec::new();
    let mut i = 0;
    while i < mods.len() {
        let item = &mods[i];
        if item.kind == ModuleKind::Block && item.template.as_deref() == Some(DEFAULT_BLOCK) {
            let set = node_set(item);
            let entry = item.io.as_ref().unwrap().0.clone();
            let accept = |a: &[usize]| a.len() == set.len();
            for t in 0..templates.len() {
                if let Some(m) = find_match(g, templates, t, &entry, &set, &accept) {
                    all.push(m.clone());
                    if chosen[i].is_none() {
                        chosen[i] = Some((m, 1));
                    }
                }
            }
            i += 1;
            continue;
        }
        if !item.kind.is_leaf() {
            i += 1;
            continue;
        }
        let mut run_end = i;
        while run_end < mods.len() && mods[run_end].kind.is_leaf() {
            run_end += 1;
        }
        let allowed: BTreeSet<usize> = (i..run_end).flat_map(|k| node_set(&mods[k])).collect();
        let anchor = index[item.source_nodes[0].as_str()];
        let order: Vec<usize> = (i..run_end).map(|k| index[mods[k].source_nodes[0].as_str()]).collect();
        let accept = |a: &[usize]| {
            let got: BTreeSet<usize> = a.iter().copied().collect();
            a[0] == anchor && a.len() <= order.len() && got == order[..a.len()].iter().copied().collect()
        };
        let mut best: Option<Match> = None;
        for entry in g.nodes()[anchor].inputs.iter().collect::<BTreeSet<_>>() {
            for t in 0..templates.len() {
                if let Some(m) = find_match(g, templates, t, entry, &allowed, &accept) {
                    all.push(m.clone());
                    if best.as_ref().map_or(true, |b| m.nodes.len() > b.nodes.len()) {
                        best = Some(m);
                    }
                }
            }
        }
        match best {
            Some(m) => {
                let span = m.nodes.len();
                chosen[i] = Some((m, span));
                i += span;
            }
            None => i += 1,
        }
    }

    if forced {
        for (a, ma) in all.iter().enumerate() {
            for mb in &all[a + 1..] {
                if ma.template != mb.template && !ma.set().is_disjoint(&mb.set()) {
                    return Err(CompileError::Conflict {
                        first: describe(g, templates, ma),
                        second: describe(g, templates, mb),
                    });
                }
            }
        }
    }

    let mut out = Vec::with_capacity(mods.len());
    let mut i = 0;
    while i < mods.len() {
        match &chosen[i] {
            Some((m, span)) => {
                out.push(templated_block(g, &shapes, templates, m, &leaves, &pos));
                i += span;
            }
            None => {
                out.push(mods[i].clone());
                i += 1;
            }
        }
    }
    Ok(out)
}

/// Step 2: replaces fork-join regions and runs of loose operators that match a template by a
/// templated block exposing the template's hooks. Earlier positions win, then longer matches,
/// then earlier templates.
pub fn match_blocks(
    g: &ComputationGraph,
    mods: Vec<TailorModule>,
    templates: &[BlockTemplate],
) -> Result<Vec<TailorModule>, CompileError> {
    match_blocks_with(g, mods, templates, false)
}
