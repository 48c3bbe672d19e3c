//! Reusable block patterns.
//!
//! A template is a small DAG of operator predicates anchored at a single entry edge. Slots may be
//! optional (an absent slot forwards its single input), which covers wildcard activations and
//! normalizations without a separate template per variant. A trailing residual `add` that joins
//! the last slot with the entry edge is either required or optional, or is forbidden.

use crate::graph::OpKind;

pub const DEFAULT_BLOCK: &str = "DefaultBlock";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotInput {
    Entry,
    Slot(usize),
}

#[derive(Clone, Debug)]
pub struct Slot {
    pub role: String,
    pub ops: Vec<OpKind>,
    pub inputs: Vec<SlotInput>,
    pub optional: bool,
}

impl Slot {
    pub fn new(role: &str, ops: &[OpKind], inputs: &[SlotInput]) -> Self {
        Slot { role: role.into(), ops: ops.to_vec(), inputs: inputs.to_vec(), optional: false }
    }

    pub fn optional(mut self) -> Self {
        assert_eq!(self.inputs.len(), 1, "optional slots forward exactly one input");
        self.optional = true;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Residual {
    None,
    Required,
    Optional,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HookKind {
    /// Target width = entry width × value (expansion ratios).
    ExpandFromInput,
    /// Target width = original width × value (width multipliers).
    ScaleMeta,
}

/// A modification dimension exposed by a template and the attributes it rewrites.
#[derive(Clone, Debug)]
pub struct HookSpec {
    pub name: String,
    pub kind: HookKind,
    pub targets: Vec<(String, String)>,
}

/// A concrete pattern with all optional slots resolved.
#[derive(Clone, Debug)]
pub struct Variant {
    /// (role, accepted ops, inputs) per node, in topological order; the last node is the exit.
    pub nodes: Vec<(String, Vec<OpKind>, Vec<SlotInput>)>,
}

#[derive(Clone, Debug)]
pub struct BlockTemplate {
    pub name: String,
    pub slots: Vec<Slot>,
    pub residual: Residual,
    pub hooks: Vec<HookSpec>,
    variants: Vec<Variant>,
}

impl BlockTemplate {
    pub fn new(name: &str, slots: Vec<Slot>, residual: Residual, hooks: Vec<HookSpec>) -> Self {
        let mut t = BlockTemplate { name: name.into(), slots, residual, hooks, variants: vec![] };
        t.variants = t.expand_variants();
        t
    }

    /// Concrete variants, longest first.
    pub fn variants(&self) -> &[Variant] {
        &self.variants
    }

    pub fn hook_names(&self) -> impl Iterator<Item = &str> {
        self.hooks.iter().map(|h| h.name.as_str())
    }

    fn expand_variants(&self) -> Vec<Variant> {
        let optional: Vec<usize> =
            (0..self.slots.len()).filter(|&i| self.slots[i].optional).collect();
        let residual_opts: &[bool] = match self.residual {
            Residual::None => &[false],
            Residual::Required => &[true],
            Residual::Optional => &[true, false],
        };
        let mut out = Vec::new();
        for mask in 0u32..(1 << optional.len()) {
            let present = |i: usize| {
                optional.iter().position(|&o| o == i).map_or(true, |bit| mask & (1 << bit) != 0)
            };
            // slot index -> variant input reference
            let mut map: Vec<SlotInput> = Vec::with_capacity(self.slots.len());
            let mut nodes = Vec::new();
            for (i, s) in self.slots.iter().enumerate() {
                let resolve = |r: &SlotInput| match r {
                    SlotInput::Entry => SlotInput::Entry,
                    SlotInput::Slot(j) => map[*j],
                };
                let inputs: Vec<SlotInput> = s.inputs.iter().map(resolve).collect();
                if present(i) {
                    map.push(SlotInput::Slot(nodes.len()));
                    nodes.push((s.role.clone(), s.ops.clone(), inputs));
                } else {
                    map.push(inputs[0]);
                }
            }
            for &res in residual_opts {
                let mut nodes = nodes.clone();
                if res {
                    let last = *map.last().unwrap();
                    nodes.push(("residual".into(), vec![OpKind::Add], vec![last, SlotInput::Entry]));
                }
                out.push(Variant { nodes });
            }
        }
        out.sort_by(|a, b| b.nodes.len().cmp(&a.nodes.len()));
        out
    }
}

fn hook(name: &str, kind: HookKind, targets: &[(&str, &str)]) -> HookSpec {
    HookSpec {
        name: name.into(),
        kind,
        targets: targets.iter().map(|(r, a)| (r.to_string(), a.to_string())).collect(),
    }
}

/// The template library shipped with the compiler, in matching-priority order.
pub fn shipped_templates() -> Vec<BlockTemplate> {
    use OpKind::*;
    use SlotInput::{Entry, Slot as S};
    let act = [Relu, Gelu];
    vec![
        BlockTemplate::new(
            "FFNBlock",
            vec![
                Slot::new("norm", &[LayerNorm], &[Entry]).optional(),
                Slot::new("fc1", &[MatMul], &[S(0)]),
                Slot::new("bias1", &[Add], &[S(1)]).optional(),
                Slot::new("act", &act, &[S(2)]),
                Slot::new("fc2", &[MatMul], &[S(3)]),
                Slot::new("bias2", &[Add], &[S(4)]).optional(),
            ],
            Residual::Optional,
            vec![hook("expand_ratio", HookKind::ExpandFromInput, &[("fc1", "out_features")])],
        ),
        BlockTemplate::new(
            "ResidualConvBlock",
            vec![
                Slot::new("conv1", &[Conv2d], &[Entry]),
                Slot::new("bn1", &[BatchNorm], &[S(0)]).optional(),
                Slot::new("act1", &act, &[S(1)]).optional(),
                Slot::new("conv2", &[Conv2d], &[S(2)]),
                Slot::new("bn2", &[BatchNorm], &[S(3)]).optional(),
            ],
            Residual::Required,
            vec![hook("width_ratio", HookKind::ScaleMeta, &[("conv1", "out_channels")])],
        ),
        BlockTemplate::new(
            "InvertedResidualBlock",
            vec![
                Slot::new("expand", &[Conv2d], &[Entry]),
                Slot::new("bn1", &[BatchNorm], &[S(0)]).optional(),
                Slot::new("act1", &act, &[S(1)]).optional(),
                Slot::new("dw", &[DepthwiseConv2d], &[S(2)]),
                Slot::new("bn2", &[BatchNorm], &[S(3)]).optional(),
                Slot::new("act2", &act, &[S(4)]).optional(),
                Slot::new("project", &[Conv2d], &[S(5)]),
                Slot::new("bn3", &[BatchNorm], &[S(6)]).optional(),
            ],
            Residual::Optional,
            vec![hook("expand_ratio", HookKind::ExpandFromInput, &[("expand", "out_channels")])],
        ),
        BlockTemplate::new(
            "AttentionBlock",
            vec![
                Slot::new("norm", &[LayerNorm], &[Entry]).optional(),
                Slot::new("q", &[MatMul], &[S(0)]),
                Slot::new("k", &[MatMul], &[S(0)]),
                Slot::new("v", &[MatMul], &[S(0)]),
                Slot::new("kt", &[Transpose], &[S(2)]),
                Slot::new("scores", &[MatMul], &[S(1), S(4)]),
                Slot::new("probs", &[Softmax], &[S(5)]),
                Slot::new("context", &[MatMul], &[S(6), S(3)]),
                Slot::new("proj", &[MatMul], &[S(7)]),
            ],
            Residual::Required,
            vec![hook(
                "width_ratio",
                HookKind::ScaleMeta,
                &[("q", "out_features"), ("k", "out_features"), ("v", "out_features")],
            )],
        ),
    ]
}
