//! The modification-space configuration document.
//!
//! ```toml
//! title = "Example"
//! [arch]
//! blocks = ["FFNBlock"]
//! [var.global_vars]
//! resolution = [128, 160, 192, 224]
//! [var.stage_vars]
//! reduce_depth = [-3, -2, -1, 0]
//! [var.block_vars]
//! FFNBlock.expand_ratio = [2, 3, 4]
//! ```

use std::collections::BTreeSet;

use super::{ChoiceValue, SpaceError};

/// A parsed configuration: the forced template list and raw dimension declarations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpaceConfig {
    pub title: Option<String>,
    /// Templates named under `[arch] blocks`; empty means "use the whole library".
    pub blocks: Vec<String>,
    pub global_vars: Vec<(String, Vec<ChoiceValue>)>,
    pub stage_vars: Vec<(String, Vec<ChoiceValue>)>,
    /// `(template, hook, candidates)`.
    pub block_vars: Vec<(String, String, Vec<ChoiceValue>)>,
}

impl SpaceConfig {
    pub fn dim_count_declared(&self) -> usize {
        self.global_vars.len() + self.stage_vars.len() + self.block_vars.len()
    }
}

fn values(key: &str, v: &toml::Value) -> Result<Vec<ChoiceValue>, SpaceError> {
    let arr = v
        .as_array()
        .ok_or_else(|| SpaceError::Syntax(format!("`{key}` must be a list of numbers")))?;
    if arr.is_empty() {
        return Err(SpaceError::Validation(format!("`{key}` has no candidates")));
    }
    let mut out = Vec::with_capacity(arr.len());
    let mut seen = BTreeSet::new();
    for x in arr {
        let f = match x {
            toml::Value::Integer(i) => *i as f64,
            toml::Value::Float(f) => *f,
            _ => return Err(SpaceError::Syntax(format!("`{key}` must contain only numbers"))),
        };
        let c = ChoiceValue::new(f)
            .ok_or_else(|| SpaceError::Syntax(format!("`{key}` contains a non-finite value")))?;
        if !seen.insert(c) {
            return Err(SpaceError::Validation(format!("`{key}` lists {c} twice")));
        }
        out.push(c);
    }
    Ok(out)
}

fn table<'a>(v: &'a toml::Value, key: &str) -> Result<&'a toml::Table, SpaceError> {
    v.as_table().ok_or_else(|| SpaceError::Syntax(format!("`{key}` must be a table")))
}

/// Parses a configuration document, preserving candidate values and order exactly.
pub fn parse_config(text: &str) -> Result<SpaceConfig, SpaceError> {
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| SpaceError::Syntax(e.to_string()))?;
    let mut cfg = SpaceConfig::default();
    for (key, v) in &doc {
        match key.as_str() {
            "title" => {
                cfg.title = Some(
                    v.as_str().ok_or_else(|| SpaceError::Syntax("`title` must be a string".into()))?.into(),
                )
            }
            "arch" => {
                for (k, v) in table(v, "arch")? {
                    if k != "blocks" {
                        return Err(SpaceError::Syntax(format!("unknown key `arch.{k}`")));
                    }
                    let list = v.as_array().ok_or_else(|| {
                        SpaceError::Syntax("`arch.blocks` must be a list of names".into())
                    })?;
                    for b in list {
                        let name = b.as_str().ok_or_else(|| {
                            SpaceError::Syntax("`arch.blocks` must be a list of names".into())
                        })?;
                        if !cfg.blocks.iter().any(|x| x == name) {
                            cfg.blocks.push(name.to_string());
                        }
                    }
                }
            }
            "var" => {
                for (section, body) in table(v, "var")? {
                    let body = table(body, section)?;
                    match section.as_str() {
                        "global_vars" => {
                            for (k, v) in body {
                                cfg.global_vars.push((k.clone(), values(k, v)?));
                            }
                        }
                        "stage_vars" => {
                            for (k, v) in body {
                                let vals = values(k, v)?;
                                if k == "reduce_depth" {
                                    if let Some(bad) = vals.iter().find(|c| c.get() > 0.0 || c.as_i64().is_none()) {
                                        return Err(SpaceError::Validation(format!(
                                            "reduce_depth only accepts non-positive integers, got {bad}"
                                        )));
                                    }
                                }
                                cfg.stage_vars.push((k.clone(), vals));
                            }
                        }
                        "block_vars" => {
                            for (template, attrs) in body {
                                let attrs = attrs.as_table().ok_or_else(|| {
                                    SpaceError::Syntax(format!(
                                        "block variables are written `Template.attr = [...]`, got `{template}`"
                                    ))
                                })?;
                                for (attr, v) in attrs {
                                    let key = format!("{template}.{attr}");
                                    cfg.block_vars.push((template.clone(), attr.clone(), values(&key, v)?));
                                }
                            }
                        }
                        other => return Err(SpaceError::Syntax(format!("unknown section `var.{other}`"))),
                    }
                }
            }
            other => return Err(SpaceError::Syntax(format!("unknown key `{other}`"))),
        }
    }
    Ok(cfg)
}
