use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use tailorforge::compiler::{compile, CompileError, Compiled};
use tailorforge::enumerator::{EnumError, FusionRules};
use tailorforge::graph::{load_graph, GraphError};
use tailorforge::modspace::{parse_config, SpaceError};
use tailorforge::optimizer::OptError;
use tailorforge::predictors::PredictError;
use tailorforge::ir::IrError;

pub const SUPERNET_HEADER: &str = "# tailorforge-supernet v1";
const GRAPH: &str = "graph.tfg";
const CONFIG: &str = "space.toml";
const RULES: &str = "fusion.rules";
const REPORT: &str = "report.txt";
const INDEX: &str = "supernet.txt";

/// A user-input problem detected by the CLI itself (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Invalid(pub String);

/// A compiled SuperNet directory: the source graph, its space config and fusion rules. Opening it
/// recompiles from those sources, so the directory stays plain text.
pub struct SuperNet {
    pub compiled: Compiled,
    pub rules: FusionRules,
}

impl SuperNet {
    pub fn create(dir: &Path, graph: &str, config: &str, rules: &str) -> Result<Self> {
        let net = SuperNet::load(graph, config, rules)?;
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let files = [
            (GRAPH, graph.to_string()),
            (CONFIG, config.to_string()),
            (RULES, net.rules.to_text()),
            (REPORT, net.compiled.report.to_string()),
            (INDEX, format!("{SUPERNET_HEADER}\ngraph={GRAPH}\nconfig={CONFIG}\nrules={RULES}\nreport={REPORT}\n")),
        ];
        for (name, text) in files {
            let path = dir.join(name);
            fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        }
        Ok(net)
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))
        };
        let index = read(INDEX)?;
        if index.lines().next() != Some(SUPERNET_HEADER) {
            return Err(Invalid(format!("{} is not a `{SUPERNET_HEADER}` directory", dir.display())).into());
        }
        SuperNet::load(&read(GRAPH)?, &read(CONFIG)?, &read(RULES)?)
    }

    fn load(graph: &str, config: &str, rules: &str) -> Result<Self> {
        let g = load_graph(graph.as_bytes())?;
        let cfg = parse_config(config)?;
        let compiled = compile(&g, &cfg)?;
        Ok(SuperNet { compiled, rules: FusionRules::parse(rules)? })
    }
}

/// Exit code: 3 for an infeasible budget, 2 for invalid input, 1 for anything else.
pub fn classify(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(OptError::Infeasible { .. }) = cause.downcast_ref::<OptError>() {
            return 3;
        }
        let invalid = cause.is::<Invalid>()
            || cause.is::<GraphError>()
            || cause.is::<SpaceError>()
            || cause.is::<CompileError>()
            || cause.is::<EnumError>()
            || cause.is::<PredictError>()
            || cause.is::<OptError>()
            || cause.is::<IrError>();
        if invalid {
            return 2;
        }
    }
    1
}
