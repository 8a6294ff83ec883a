use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use crystalnet::elementdata::load_table;
use crystalnet::{
    build_graph, decode_features, export_graph, featurize, load_model, parse_structure, save_model, train, AtomGraph,
    ElementTable, FeaturizationConfig, FeaturizedAtoms, GraphFormat, GraphNodeFeaturization, GraphOptions, Model,
    ModelShape,
};
use serde_json::Value;

use crate::args::{BuildGraphArgs, Cli, Command, FeaturizeArgs, FormatArg, InspectArgs, PredictArgs, TrainArgs};
use crate::io::{expand, read_file, stem, write_file, Failures, Sink, JSON_EXTS, STRUCTURE_EXTS};

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let table = || -> anyhow::Result<ElementTable> {
        let path = cli.element_table.as_deref();
        load_table(path).with_context(|| match path {
            Some(p) => format!("loading element table {}", p.display()),
            None => "loading the bundled element table".into(),
        })
    };
    match &cli.command {
        Command::BuildGraph(a) => build_graph_cmd(a),
        Command::Featurize(a) => featurize_cmd(a, &table()?),
        Command::Inspect(a) => inspect_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict_cmd(a, &table()?),
    }
}

/// A pipeline document or structure file, recognized by content.
enum Document {
    Structure(AtomGraph),
    Graph(AtomGraph),
    Featurized(FeaturizedAtoms),
    Config(FeaturizationConfig),
    Checkpoint(Box<Model>),
}

fn json_kind(value: &Value) -> Option<&str> {
    if value.get("matrix").is_some() && value.get("graph").is_some() {
        return Some("featurized");
    }
    value.get("version").and_then(Value::as_str)
}

/// Reads `path`; structure files are turned into graphs with `graph_opts`
/// (or rejected when `None`).
fn read_document(path: &Path, graph_opts: Option<&GraphOptions>) -> anyhow::Result<Document> {
    let text = read_file(path)?;
    let id = stem(path);
    let looks_json = text.trim_start().starts_with('{');
    if !looks_json {
        let s = parse_structure(&text)?;
        let opts = graph_opts.ok_or_else(|| anyhow!("expected a JSON document, found a structure file"))?;
        return Ok(Document::Structure(build_graph(&s, opts)?.with_source_id(id)));
    }
    let value: Value = serde_json::from_str(&text).context("invalid JSON")?;
    Ok(match json_kind(&value) {
        Some("featurized") => {
            let fa = FeaturizedAtoms::from_json(&text)?;
            Document::Featurized(if fa.source_id().is_some() { fa } else { with_id(fa, &id)? })
        }
        Some(crystalnet::atomgraph::GRAPH_FORMAT_VERSION) => {
            let g = AtomGraph::from_json(&text)?;
            Document::Graph(if g.source_id().is_some() { g } else { g.with_source_id(id) })
        }
        Some(crystalnet::featurization::FEATURIZATION_FORMAT_VERSION) => {
            Document::Config(FeaturizationConfig::from_json(&text)?)
        }
        Some(crystalnet::model::MODEL_FORMAT_VERSION) => Document::Checkpoint(Box::new(load_model(&text)?)),
        Some(v) => bail!("unsupported document version `{v}`"),
        None => bail!("unrecognized JSON document (no `version` field)"),
    })
}

fn with_id(fa: FeaturizedAtoms, id: &str) -> anyhow::Result<FeaturizedAtoms> {
    let g = fa.graph().clone().with_source_id(id);
    Ok(FeaturizedAtoms::new(g, fa.scheme().clone(), fa.matrix().clone())?)
}

fn source_id(fa: &FeaturizedAtoms, path: &Path) -> String {
    fa.source_id().map_or_else(|| stem(path), str::to_string)
}

fn build_graph_cmd(a: &BuildGraphArgs) -> anyhow::Result<ExitCode> {
    let opts = a.graph.options()?;
    let inputs = expand(&a.inputs, STRUCTURE_EXTS)?;
    let sink = Sink::plan(a.out.as_deref(), &inputs)?;
    let (format, ext) = match a.format {
        FormatArg::Dot => (GraphFormat::Dot, "dot"),
        FormatArg::Json => (GraphFormat::AdjacencyJson, "json"),
    };
    let mut failures = Failures::default();
    for path in &inputs.files {
        let result = read_file(path)
            .and_then(|text| Ok(parse_structure(&text)?))
            .and_then(|s| Ok(build_graph(&s, &opts)?.with_source_id(stem(path))))
            .and_then(|g| {
                for w in g.warnings() {
                    eprintln!("warning: {}: {w}", path.display());
                }
                sink.write(path, ext, &export_graph(&g, format))
            });
        if let Err(e) = result {
            failures.record(path, e);
        }
    }
    Ok(failures.finish(inputs.files.len()))
}

fn featurize_cmd(a: &FeaturizeArgs, table: &ElementTable) -> anyhow::Result<ExitCode> {
    let cfg = FeaturizationConfig::from_json(&read_file(&a.featurization)?)
        .with_context(|| format!("featurization config {}", a.featurization.display()))?;
    let scheme = GraphNodeFeaturization::from_config(&cfg, Some(table))?;
    let opts = a.graph.options()?;
    let exts: Vec<&str> = STRUCTURE_EXTS.iter().chain(JSON_EXTS).copied().collect();
    let inputs = expand(&a.inputs, &exts)?;
    let sink = Sink::plan(a.out.as_deref(), &inputs)?;
    let mut failures = Failures::default();
    for path in &inputs.files {
        let result = read_document(path, Some(&opts)).and_then(|doc| match doc {
            Document::Structure(g) | Document::Graph(g) => {
                let fa = featurize(&g, &scheme, table)?;
                sink.write(path, "json", &fa.to_json())
            }
            _ => bail!("expected a structure file or graph document"),
        });
        if let Err(e) = result {
            failures.record(path, e);
        }
    }
    Ok(failures.finish(inputs.files.len()))
}

fn inspect_cmd(a: &InspectArgs) -> anyhow::Result<ExitCode> {
    let text = read_file(&a.input)?;
    let out = if text.trim_start().starts_with('{') {
        match read_document(&a.input, None)? {
            Document::Graph(g) => describe_graph(&g),
            Document::Featurized(fa) => describe_featurized(&fa)?,
            Document::Config(cfg) => describe_config(&cfg),
            Document::Checkpoint(m) => describe_model(&m),
            Document::Structure(_) => unreachable!("JSON input"),
        }
    } else {
        describe_structure(&parse_structure(&text)?)
    };
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn describe_structure(s: &crystalnet::AtomicStructure) -> String {
    let mut out = String::new();
    let p = s.periodic();
    let _ = writeln!(out, "structure: {} atom(s), pbc {:?}", s.len(), p);
    if let Some(c) = s.cell() {
        for k in 0..3 {
            let _ = writeln!(out, "  lattice {k}: {:>10.5} {:>10.5} {:>10.5}", c[(k, 0)], c[(k, 1)], c[(k, 2)]);
        }
    }
    for (i, (sym, r)) in s.species().iter().zip(s.positions()).enumerate() {
        let _ = writeln!(out, "  {i:>4} {sym:<3} {:>10.5} {:>10.5} {:>10.5}", r[0], r[1], r[2]);
    }
    out
}

fn describe_graph(g: &AtomGraph) -> String {
    let mut out = String::new();
    let o = g.options();
    let _ = writeln!(
        out,
        "graph {}: {} node(s), {} edge(s); cutoff {} Å, weights {:?}, normalized {}",
        g.source_id().unwrap_or("-"),
        g.len(),
        g.edges().len(),
        o.cutoff,
        o.weight_scheme,
        o.normalize_weights
    );
    for (i, j, w) in g.edges() {
        let _ = writeln!(out, "  {i:>4} {:<3} -- {j:>4} {:<3} {w:.6}", g.species()[i], g.species()[j]);
    }
    out
}

fn describe_featurized(fa: &FeaturizedAtoms) -> anyhow::Result<String> {
    let decoded = decode_features(fa)?;
    let names: Vec<&str> = fa.scheme().features().iter().map(|(d, _)| d.name()).collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "featurized {}: {} atom(s), {} feature rows",
        fa.source_id().unwrap_or("-"),
        fa.graph().len(),
        fa.matrix().nrows()
    );
    let mut header = format!("{:>4}  {:<3}", "atom", "el");
    for n in &names {
        let _ = write!(header, "  {n:<22}");
    }
    let _ = writeln!(out, "{}", header.trim_end());
    for (i, row) in decoded.iter().enumerate() {
        let mut line = format!("{i:>4}  {:<3}", fa.graph().species()[i]);
        for (_, v) in row {
            let _ = write!(line, "  {:<22}", v.to_string());
        }
        let _ = writeln!(out, "{}", line.trim_end());
    }
    Ok(out)
}

fn describe_config(cfg: &FeaturizationConfig) -> String {
    let mut out = format!("featurization config ({} feature(s))\n", cfg.features.len());
    for f in &cfg.features {
        let _ = writeln!(out, "  {}: {}", f.name, serde_json::to_string(f).unwrap_or_default());
    }
    out
}

fn describe_model(m: &Model) -> String {
    let mut out = format!("model: {} parameter(s), input dim {}\n", m.num_parameters(), m.input_dim());
    for (k, l) in m.conv_layers().iter().enumerate() {
        let _ = writeln!(out, "  conv {k}: {} -> {} ({:?})", l.in_dim(), l.out_dim(), l.activation);
    }
    let _ = writeln!(out, "  pool: {:?}", m.pooling());
    for (k, l) in m.dense_layers().iter().enumerate() {
        let _ = writeln!(out, "  dense {k}: {} -> {} ({:?})", l.in_dim(), l.out_dim(), l.activation);
    }
    if let Some(cfg) = m.featurization() {
        let names: Vec<&str> = cfg.features.iter().map(|f| f.name.as_str()).collect();
        let _ = writeln!(out, "  featurization: {}", names.join(", "));
    }
    out
}

fn read_targets(path: &Path) -> anyhow::Result<HashMap<String, f64>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["source_id", "target"] {
        bail!("{}: header must be `source_id,target`", path.display());
    }
    let mut targets = HashMap::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let line = k + 2;
        let id = record[0].trim().to_string();
        let value: f64 = record[1]
            .trim()
            .parse()
            .map_err(|_| anyhow!("{}:{line}: target `{}` is not a number", path.display(), &record[1]))?;
        if targets.insert(id.clone(), value).is_some() {
            bail!("{}:{line}: duplicate source_id `{id}`", path.display());
        }
    }
    Ok(targets)
}

fn history_path(a: &TrainArgs) -> PathBuf {
    a.history.clone().unwrap_or_else(|| {
        let name = format!("{}.history.csv", stem(&a.out));
        a.out.with_file_name(name)
    })
}

fn train_cmd(a: &TrainArgs) -> anyhow::Result<ExitCode> {
    let cfg = a.train_config()?;
    let targets = read_targets(&a.targets)?;
    let inputs = expand(&a.inputs, JSON_EXTS)?;

    let mut failures = Failures::default();
    let mut dataset = Vec::new();
    for path in &inputs.files {
        let result = read_document(path, None).and_then(|doc| match doc {
            Document::Featurized(fa) => {
                let id = source_id(&fa, path);
                let t = *targets.get(&id).ok_or_else(|| anyhow!("no target for source_id `{id}`"))?;
                Ok((fa, t))
            }
            _ => bail!("expected a featurized document"),
        });
        match result {
            Ok(sample) => dataset.push(sample),
            Err(e) => failures.record(path, e),
        }
    }
    if !failures.is_empty() {
        eprintln!("no model written");
        return Ok(failures.finish(inputs.files.len()));
    }
    let config = dataset[0].0.scheme().to_config();
    if let Some(k) = dataset.iter().position(|(fa, _)| fa.scheme().to_config() != config) {
        bail!("{} uses a different featurization than {}", inputs.files[k].display(), inputs.files[0].display());
    }

    let shape = ModelShape {
        conv_dims: a.conv_dims.0.clone(),
        hidden_dims: a.hidden_dims.0.clone(),
        activation: a.activation(),
        pooling: a.pooling(),
        ..ModelShape::new(dataset[0].0.matrix().nrows())
    };
    let model = Model::init(&shape, a.seed)?.with_featurization(config);
    let (trained, history) = train(&model, &dataset, &cfg)?;

    write_file(&a.out, &save_model(&trained))?;
    let mut csv = String::from("epoch,loss\n");
    for (k, loss) in history.iter().enumerate() {
        let _ = writeln!(csv, "{},{loss:e}", k + 1);
    }
    let hist = history_path(a);
    write_file(&hist, &csv)?;
    eprintln!(
        "trained on {} sample(s) for {} epoch(s); final loss {:e}; wrote {} and {}",
        dataset.len(),
        history.len(),
        history.last().copied().unwrap_or(f64::NAN),
        a.out.display(),
        hist.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn predict_cmd(a: &PredictArgs, table: &ElementTable) -> anyhow::Result<ExitCode> {
    let model = load_model(&read_file(&a.model)?).with_context(|| format!("checkpoint {}", a.model.display()))?;
    let opts = a.graph.options()?;
    let exts: Vec<&str> = STRUCTURE_EXTS.iter().chain(JSON_EXTS).copied().collect();
    let inputs = expand(&a.inputs, &exts)?;
    let scheme = || -> anyhow::Result<GraphNodeFeaturization> {
        let cfg = model
            .featurization()
            .ok_or_else(|| anyhow!("checkpoint has no featurization config; pass featurized documents"))?;
        Ok(GraphNodeFeaturization::from_config(cfg, Some(table))?)
    };

    let mut failures = Failures::default();
    let mut rows = Vec::new();
    for path in &inputs.files {
        let result = read_document(path, Some(&opts)).and_then(|doc| {
            let fa = match doc {
                Document::Featurized(fa) => fa,
                Document::Structure(g) | Document::Graph(g) => featurize(&g, &scheme()?, table)?,
                _ => bail!("expected a featurized document, graph document or structure file"),
            };
            Ok((source_id(&fa, path), model.predict(&fa)?))
        });
        match result {
            Ok(row) => rows.push(row),
            Err(e) => failures.record(path, e),
        }
    }

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["source_id", "prediction"])?;
    for (id, p) in &rows {
        writer.write_record([id.as_str(), &p.to_string()])?;
    }
    let text = String::from_utf8(writer.into_inner()?)?;
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(failures.finish(inputs.files.len()))
}
