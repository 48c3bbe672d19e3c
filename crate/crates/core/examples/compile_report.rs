use tailorforge::{compiler, fixtures, graph, modspace};

fn main() {
    for (name, g, cfg) in fixtures::all() {
        let g = graph::load_graph(g.as_bytes()).unwrap();
        let cfg = modspace::parse_config(cfg).unwrap();
        match compiler::compile(&g, &cfg) {
            Ok(c) => {
                println!("{}", c.report);
                println!("{}", c.model.render());
            }
            Err(e) => println!("{name}: {e}"),
        }
    }
    let g = graph::load_graph(fixtures::TINYNET.as_bytes()).unwrap();
    let cfg = modspace::parse_config(fixtures::EXAMPLE_CONFIG).unwrap();
    match compiler::compile(&g, &cfg) {
        Ok(c) => println!("{}", c.report),
        Err(e) => println!("example: {e}"),
    }
}
