//! CSV ingestion and emission for graphs and hourly panels.
//!
//! Graph file: header `from,to`, one interconnector per row.
//! Panel file: one wide row per hour, `timestamp` followed by
//! `<node>_demand`, `<node>_gen_<source>`, `<node>_net_imports`,
//! `<node>_price`, `<node>_ci` and optionally `<node>_policy_intensity`.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use super::graph::GridGraph;
use super::panel::{HourlyPanel, NodeSeries, GEN_SOURCES};
use crate::error::{Error, Result};

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn parse_err(path: &Path, row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Reads an edge list; nodes are declared in order of first appearance.
pub fn load_graph(path: &Path) -> Result<GridGraph> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, "header", e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "from" || &headers[1] != "to" {
        return Err(Error::Schema(format!(
            "{}: graph header must be `from,to`, got `{}`",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut nodes: Vec<String> = Vec::new();
    let mut edges = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse_err(path, row, "record", e.to_string()))?;
        if rec.len() != 2 {
            return Err(parse_err(path, row, "record", format!("expected 2 fields, got {}", rec.len())));
        }
        let (a, b) = (rec[0].to_string(), rec[1].to_string());
        if a.is_empty() {
            return Err(parse_err(path, row, "from", "empty country code"));
        }
        if !nodes.contains(&a) {
            nodes.push(a.clone());
        }
        // an empty `to` declares an isolated node
        if b.is_empty() {
            continue;
        }
        if a == b {
            return Err(parse_err(path, row, "to", format!("self-loop on `{a}`")));
        }
        if !nodes.contains(&b) {
            nodes.push(b.clone());
        }
        edges.push((a, b));
    }
    GridGraph::new(nodes, &edges)
}

pub fn write_graph(graph: &GridGraph, path: &Path) -> Result<()> {
    let mut out = String::from("from,to\n");
    let nodes = graph.nodes();
    let mut first_seen = Vec::with_capacity(nodes.len());
    for &(a, b) in graph.edges() {
        for i in [a, b] {
            if !first_seen.contains(&i) {
                first_seen.push(i);
            }
        }
    }
    // declare nodes explicitly when the edge list alone would reorder or drop them
    if first_seen != (0..nodes.len()).collect::<Vec<_>>() {
        for code in nodes {
            out.push_str(&format!("{code},\n"));
        }
    }
    for &(a, b) in graph.edges() {
        out.push_str(&format!("{},{}\n", nodes[a], nodes[b]));
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn field_names() -> Vec<String> {
    let mut f = vec!["demand".to_string()];
    f.extend(GEN_SOURCES.iter().map(|s| format!("gen_{s}")));
    f.extend(["net_imports", "price", "ci"].map(String::from));
    f
}

/// Loads a panel whose columns must cover every node in `graph`.
pub fn load_panel_for(graph: &GridGraph, path: &Path) -> Result<HourlyPanel> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, "header", e.to_string()))?
        .clone();
    let col: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let ts_col = *col
        .get("timestamp")
        .ok_or_else(|| Error::Schema(format!("{}: missing `timestamp` column", path.display())))?;

    let fields = field_names();
    let mut layout = Vec::with_capacity(graph.len());
    let mut labelled = Vec::with_capacity(graph.len());
    for code in graph.nodes() {
        let mut idx = Vec::with_capacity(fields.len());
        for f in &fields {
            let name = format!("{code}_{f}");
            idx.push(*col.get(name.as_str()).ok_or_else(|| {
                Error::Schema(format!("{}: missing column `{name}` for node {code}", path.display()))
            })?);
        }
        layout.push(idx);
        labelled.push(col.get(format!("{code}_policy_intensity").as_str()).copied());
    }
    let any_labels = labelled.iter().any(Option::is_some);
    if any_labels && labelled.iter().any(Option::is_none) {
        return Err(Error::Schema(format!(
            "{}: policy_intensity columns must exist for all nodes or none",
            path.display()
        )));
    }

    let mut timestamps = Vec::new();
    let mut series: Vec<NodeSeries> = graph.nodes().iter().map(|_| NodeSeries::with_len(0)).collect();
    if any_labels {
        for s in &mut series {
            s.policy_intensity = Some(Vec::new());
        }
    }
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse_err(path, row, "record", e.to_string()))?;
        let ts = rec.get(ts_col).unwrap_or_default();
        let parsed = DateTime::parse_from_rfc3339(ts)
            .map_err(|e| parse_err(path, row, "timestamp", format!("`{ts}`: {e}")))?;
        timestamps.push(parsed.with_timezone(&Utc));
        let num = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or_default();
            raw.parse::<f64>()
                .map_err(|_| parse_err(path, row, &headers[c], format!("`{raw}` is not a number")))
        };
        for (n, s) in series.iter_mut().enumerate() {
            let idx = &layout[n];
            s.demand.push(num(idx[0])?);
            for k in 0..GEN_SOURCES.len() {
                s.generation[k].push(num(idx[1 + k])?);
            }
            s.net_imports.push(num(idx[8])?);
            s.price.push(num(idx[9])?);
            s.ci.push(num(idx[10])?);
            if let (Some(c), Some(p)) = (labelled[n], s.policy_intensity.as_mut()) {
                p.push(num(c)?);
            }
        }
    }
    HourlyPanel::new(timestamps, graph.nodes().to_vec(), series)
}

/// Loads a graph file and the matching panel file.
pub fn load_panel(graph_file: &Path, panel_file: &Path) -> Result<(GridGraph, HourlyPanel)> {
    let graph = load_graph(graph_file)?;
    let panel = load_panel_for(&graph, panel_file)?;
    Ok((graph, panel))
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn write_panel(panel: &HourlyPanel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = std::io::BufWriter::new(file);
    let fields = field_names();
    let labelled = panel.has_policy_labels();
    let mut header = vec!["timestamp".to_string()];
    for code in panel.nodes() {
        header.extend(fields.iter().map(|f| format!("{code}_{f}")));
        if labelled {
            header.push(format!("{code}_policy_intensity"));
        }
    }
    let io = |e| Error::io(format!("writing {}", path.display()), e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for (t, ts) in panel.timestamps().iter().enumerate() {
        let mut line = format_timestamp(ts);
        for s in panel.all_series() {
            let mut push = |v: f64| {
                line.push(',');
                line.push_str(&v.to_string());
            };
            push(s.demand[t]);
            for g in &s.generation {
                push(g[t]);
            }
            push(s.net_imports[t]);
            push(s.price[t]);
            push(s.ci[t]);
            if let Some(p) = &s.policy_intensity {
                push(p[t]);
            }
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}
