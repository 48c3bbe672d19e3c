use std::collections::HashMap;
use std::fmt::Write;

use sha2::{Digest, Sha256};

use crate::graph::OpKind;
use crate::ir::TailorModule;

use super::EnumError;

pub const FUSION_HEADER: &str = "# tailorforge-fusion v1";

/// A linear chain of operator types costed as one unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FusionRule {
    pub name: String,
    pub pattern: Vec<OpKind>,
}

/// An ordered fusion ruleset. Matching tries longer patterns first, then file order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FusionRules {
    rules: Vec<FusionRule>,
}

impl FusionRules {
    pub fn none() -> Self {
        FusionRules::default()
    }

    /// conv2d→batchnorm→relu, conv2d→batchnorm, matmul→add, conv2d→relu.
    pub fn default_rules() -> Self {
        FusionRules::parse(crate::fixtures::DEFAULT_FUSION_RULES).expect("shipped ruleset parses")
    }

    pub fn new(rules: Vec<FusionRule>) -> Result<Self, EnumError> {
        for r in &rules {
            if r.pattern.len() < 2 {
                return Err(EnumError::BadRules(format!("rule `{}` needs at least two operators", r.name)));
            }
            if r.name.is_empty() || !r.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(EnumError::BadRules(format!("invalid rule name `{}`", r.name)));
            }
        }
        Ok(FusionRules { rules })
    }

    /// Parses `name: op -> op -> ...` lines after the version header; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, EnumError> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(FUSION_HEADER) {
            return Err(EnumError::BadRules(format!("missing `{FUSION_HEADER}` header")));
        }
        let mut rules = Vec::new();
        for line in lines {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (name, chain) = line
                .split_once(':')
                .ok_or_else(|| EnumError::BadRules(format!("expected `name: a -> b`, got `{line}`")))?;
            let pattern = chain.split("->").map(|op| OpKind::parse(op.trim())).collect();
            rules.push(FusionRule { name: name.trim().to_string(), pattern });
        }
        FusionRules::new(rules)
    }

    pub fn rules(&self) -> &[FusionRule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{FUSION_HEADER}\n");
        for r in &self.rules {
            let chain: Vec<String> = r.pattern.iter().map(|o| o.to_string()).collect();
            let _ = writeln!(out, "{}: {}", r.name, chain.join(" -> "));
        }
        out
    }

    /// Truncated SHA-256 of the canonical text; ties LUTs and manifests to one ruleset.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn by_priority(&self) -> Vec<&FusionRule> {
        let mut v: Vec<&FusionRule> = self.rules.iter().collect();
        v.sort_by(|a, b| b.pattern.len().cmp(&a.pattern.len()));
        v
    }
}

/// Costing units of a compiled model: groups of leaf indices (in `TailorModule::leaves` order).
///
/// Groups are formed once on the maximal architecture, never span two blocks (or a block and the
/// model level), and only chain through edges with a single consumer.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionPlan {
    groups: Vec<Vec<usize>>,
    group_of: Vec<usize>,
    hash: String,
}

impl FusionPlan {
    pub fn new(model: &TailorModule, rules: &FusionRules) -> Self {
        let leaves = model.leaves();
        let outputs: Vec<String> = model.model_info().map(|i| i.outputs.clone()).unwrap_or_default();
        let mut consumers: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, l) in leaves.iter().enumerate() {
            for e in &l.node().unwrap().inputs {
                let list = consumers.entry(e.as_str()).or_default();
                if !list.contains(&i) {
                    list.push(i);
                }
            }
        }
        let parent = |i: usize| leaves[i].path().parent();
        let mut assigned = vec![false; leaves.len()];
        let mut groups = Vec::new();
        let priority = rules.by_priority();
        for i in 0..leaves.len() {
            if assigned[i] {
                continue;
            }
            let mut group = vec![i];
            for rule in &priority {
                if leaves[i].node().unwrap().op != rule.pattern[0] {
                    continue;
                }
                let mut chain = vec![i];
                for op in &rule.pattern[1..] {
                    let cur = leaves[*chain.last().unwrap()].node().unwrap();
                    if cur.outputs.len() != 1 || outputs.contains(&cur.outputs[0]) {
                        break;
                    }
                    let edge = cur.outputs[0].as_str();
                    let next = match consumers.get(edge).map(Vec::as_slice) {
                        Some([j]) => *j,
                        _ => break,
                    };
                    let n = leaves[next].node().unwrap();
                    if assigned[next] || &n.op != op || n.inputs[0] != edge || parent(next) != parent(i) {
                        break;
                    }
                    chain.push(next);
                }
                if chain.len() == rule.pattern.len() {
                    group = chain;
                    break;
                }
            }
            for &j in &group {
                assigned[j] = true;
            }
            groups.push(group);
        }
        groups.sort_by_key(|g| g[0]);
        let mut group_of = vec![0; leaves.len()];
        for (k, g) in groups.iter().enumerate() {
            for &j in g {
                group_of[j] = k;
            }
        }
        FusionPlan { groups, group_of, hash: rules.hash() }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_of(&self, leaf: usize) -> usize {
        self.group_of[leaf]
    }

    pub fn ruleset_hash(&self) -> &str {
        &self.hash
    }
}
