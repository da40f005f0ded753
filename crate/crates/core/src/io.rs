//! Plain-text graph and dataset format.
//!
//! ```text
//! g <n> <directed:0|1> <d0>
//! v <idx> <attr...>
//! e <u> <v> <w>
//! t <vertex> <value>
//! ```
//!
//! Datasets are records separated by blank lines. Lines starting with `#`
//! are comments, except `# beta <value>` which carries the BF sentinel.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::generators::Sample;
use crate::graph::{BfInstance, Edge, WeightedGraph, DEFAULT_BETA};

#[derive(Debug, Clone, PartialEq)]
pub struct GraphRecord {
    pub graph: WeightedGraph,
    pub beta: Option<f64>,
    pub targets: Vec<(usize, f64)>,
}

impl GraphRecord {
    pub fn from_sample(s: &Sample) -> Self {
        Self { graph: s.instance.graph().clone(), beta: Some(s.instance.beta()), targets: s.targets.clone() }
    }

    /// Interprets one-dimensional attributes as BF labels.
    pub fn into_sample(self) -> Result<Sample> {
        if self.graph.attr_dim() != 1 {
            return Err(Error::AttributeMismatch { expected: 1, got: self.graph.attr_dim() });
        }
        let labels = self.graph.attrs().to_vec();
        let beta = self.beta.unwrap_or(DEFAULT_BETA);
        let instance = if self.graph.edges().iter().any(|e| e.w < 0.0) {
            BfInstance::new_dag(self.graph, labels, beta)?
        } else {
            BfInstance::new(self.graph, labels, beta)?
        };
        Ok(Sample { instance, targets: self.targets })
    }
}

pub fn write_record(out: &mut String, r: &GraphRecord) {
    let g = &r.graph;
    let _ = writeln!(out, "g {} {} {}", g.n(), u8::from(g.is_directed()), g.attr_dim());
    if let Some(beta) = r.beta {
        let _ = writeln!(out, "# beta {beta}");
    }
    for v in 0..g.n() {
        out.push_str(&format!("v {v}"));
        for a in g.attr(v) {
            let _ = write!(out, " {a}");
        }
        out.push('\n');
    }
    for e in g.edges() {
        let _ = writeln!(out, "e {} {} {}", e.u, e.v, e.w);
    }
    for (v, x) in &r.targets {
        let _ = writeln!(out, "t {v} {x}");
    }
}

pub fn write_dataset(records: &[GraphRecord]) -> String {
    let mut out = String::new();
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        write_record(&mut out, r);
    }
    out
}

pub fn write_samples(samples: &[Sample]) -> String {
    write_dataset(&samples.iter().map(GraphRecord::from_sample).collect::<Vec<_>>())
}

struct Partial {
    n: usize,
    directed: bool,
    dim: usize,
    beta: Option<f64>,
    attrs: Vec<Option<Vec<f64>>>,
    edges: Vec<Edge>,
    targets: Vec<(usize, f64)>,
    line: usize,
}

impl Partial {
    fn finish(self) -> Result<GraphRecord> {
        let mut attrs = Vec::with_capacity(self.n * self.dim);
        for (v, a) in self.attrs.into_iter().enumerate() {
            match a {
                Some(a) => attrs.extend(a),
                None if self.dim == 0 => {}
                None => return Err(Error::Parse { line: self.line, msg: format!("missing attributes for vertex {v}") }),
            }
        }
        let graph = WeightedGraph::with_attrs(self.n, self.directed, self.edges, self.dim, attrs)
            .map_err(|e| Error::Parse { line: self.line, msg: e.to_string() })?;
        if let Some(&(v, _)) = self.targets.iter().find(|(v, _)| *v >= self.n) {
            return Err(Error::Parse { line: self.line, msg: format!("target vertex {v} out of range") });
        }
        Ok(GraphRecord { graph, beta: self.beta, targets: self.targets })
    }
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse { line, msg: format!("expected {what}") })
}

pub fn parse_dataset(text: &str) -> Result<Vec<GraphRecord>> {
    let mut records = Vec::new();
    let mut cur: Option<Partial> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let mut tok = raw.split_whitespace();
        let head = tok.next().unwrap();
        if head == "#" {
            if tok.next() == Some("beta") {
                let beta = num(tok.next(), line, "beta value")?;
                match cur.as_mut() {
                    Some(p) => p.beta = Some(beta),
                    None => return Err(Error::Parse { line, msg: "beta before graph header".into() }),
                }
            }
            continue;
        }
        if head.starts_with('#') {
            continue;
        }
        if head == "g" {
            if let Some(p) = cur.take() {
                records.push(p.finish()?);
            }
            let n: usize = num(tok.next(), line, "vertex count")?;
            let directed: u8 = num(tok.next(), line, "directed flag")?;
            let dim: usize = num(tok.next(), line, "attribute dimension")?;
            if directed > 1 {
                return Err(Error::Parse { line, msg: "directed flag must be 0 or 1".into() });
            }
            cur = Some(Partial {
                n,
                directed: directed == 1,
                dim,
                beta: None,
                attrs: vec![None; n],
                edges: Vec::new(),
                targets: Vec::new(),
                line,
            });
            continue;
        }
        let p = cur.as_mut().ok_or_else(|| Error::Parse { line, msg: "record before graph header".into() })?;
        match head {
            "v" => {
                let v: usize = num(tok.next(), line, "vertex index")?;
                if v >= p.n {
                    return Err(Error::Parse { line, msg: format!("vertex {v} out of range") });
                }
                let a = tok.map(|t| num(Some(t), line, "attribute")).collect::<Result<Vec<f64>>>()?;
                if a.len() != p.dim {
                    return Err(Error::Parse { line, msg: format!("expected {} attributes, got {}", p.dim, a.len()) });
                }
                p.attrs[v] = Some(a);
            }
            "e" => {
                let u = num(tok.next(), line, "edge source")?;
                let v = num(tok.next(), line, "edge target")?;
                let w = num(tok.next(), line, "edge weight")?;
                p.edges.push(Edge { u, v, w });
            }
            "t" => {
                let v = num(tok.next(), line, "target vertex")?;
                let x = num(tok.next(), line, "target value")?;
                p.targets.push((v, x));
            }
            other => return Err(Error::Parse { line, msg: format!("unknown record `{other}`") }),
        }
    }
    if let Some(p) = cur {
        records.push(p.finish()?);
    }
    Ok(records)
}

pub fn parse_samples(text: &str) -> Result<Vec<Sample>> {
    parse_dataset(text)?.into_iter().map(GraphRecord::into_sample).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_dataset, make_bf_training_set, DatasetKind, DatasetSpec};

    #[test]
    fn round_trip_training_set() {
        let set = make_bf_training_set(50.0, 2, 1000.0).unwrap();
        let text = write_samples(&set);
        assert!(text.starts_with("g 3 0 1\n# beta 1000\nv 0 50\n"));
        assert_eq!(parse_samples(&text).unwrap(), set);
    }

    #[test]
    fn round_trip_random_weights_exactly() {
        let ds = gen_dataset(&DatasetSpec::new(DatasetKind::Er, 20, 3, 11)).unwrap();
        let samples: Vec<Sample> = ds.into_iter().map(|g| Sample { instance: g, targets: vec![] }).collect();
        let text = write_samples(&samples);
        let back = parse_samples(&text).unwrap();
        assert_eq!(back, samples);
        assert_eq!(write_samples(&back), text);
    }

    #[test]
    fn infinity_is_written_as_inf() {
        let g = WeightedGraph::with_attrs(1, false, vec![], 1, vec![f64::INFINITY]).unwrap();
        let text = write_dataset(&[GraphRecord { graph: g.clone(), beta: None, targets: vec![] }]);
        assert!(text.contains("v 0 inf"));
        assert_eq!(parse_dataset(&text).unwrap()[0].graph, g);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert!(matches!(parse_dataset("v 0 1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_dataset("g 2 0 0\ne 0 5 1\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_dataset("g 2 0 1\nv 0 1 2\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_dataset("g 2 0 0\nx\n"), Err(Error::Parse { line: 2, .. })));
    }
}
