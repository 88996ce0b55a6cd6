//! Reader for SteinLib STP files: the `33D32945` header followed by
//! `SECTION Graph` (`Nodes n`, `Edges m`, `E u v w`), `SECTION Terminals`
//! (`Terminals t`, `T v`), and an optional `SECTION Coordinates`
//! (`DD v x y`). Node ids are 1-based in the file and shifted to 0-based
//! here; coordinates, when present, are normalized onto the unit square.
//!
//! Unrecognized sections are skipped with a warning. A repeated edge keeps
//! the lighter weight and records a warning instead of failing, so lightly
//! damaged files still load.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::features::normalize_unit_square;
use crate::graph::Graph;
use crate::instance::{Instance, InstanceError, ProblemKind};

#[derive(Debug, Error, PartialEq)]
pub enum StpError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StpWarning {
    pub line: usize,
    pub message: String,
}

/// A parsed instance plus non-fatal oddities encountered along the way.
#[derive(Debug)]
pub struct ParsedStp {
    pub instance: Instance,
    pub warnings: Vec<StpWarning>,
}

const MAGIC: &str = "33d32945";

struct Parser {
    nodes: Option<usize>,
    declared_edges: Option<usize>,
    declared_terminals: Option<usize>,
    edges: Vec<(usize, usize, f64)>,
    edge_index: BTreeMap<(usize, usize), usize>,
    terminals: Vec<usize>,
    coordinates: BTreeMap<usize, (f64, f64)>,
    warnings: Vec<StpWarning>,
}

enum Section {
    Comment,
    Graph,
    Terminals,
    Coordinates,
    Unknown,
}

fn err(line: usize, message: impl Into<String>) -> StpError {
    StpError::Parse { line, message: message.into() }
}

/// Parses STP text into a Steiner-tree instance.
pub fn parse_stp(text: &str) -> Result<ParsedStp, StpError> {
    let mut state = Parser {
        nodes: None,
        declared_edges: None,
        declared_terminals: None,
        edges: Vec::new(),
        edge_index: BTreeMap::new(),
        terminals: Vec::new(),
        coordinates: BTreeMap::new(),
        warnings: Vec::new(),
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (line, header) = lines.next().ok_or_else(|| err(1, "empty file"))?;
    if !header.to_ascii_lowercase().starts_with(MAGIC) {
        return Err(err(line, "missing 33D32945 header"));
    }

    let mut section: Option<(Section, usize)> = None;
    let mut saw_eof = false;
    for (line, raw) in lines {
        if saw_eof {
            return Err(err(line, "content after EOF"));
        }
        let mut fields = raw.split_whitespace();
        let keyword = fields.next().expect("blank lines are filtered");
        let rest: Vec<&str> = fields.collect();
        let upper = keyword.to_ascii_uppercase();
        match section {
            None => match upper.as_str() {
                "SECTION" => {
                    let name = rest
                        .first()
                        .ok_or_else(|| err(line, "SECTION without a name"))?
                        .to_ascii_lowercase();
                    let kind = match name.as_str() {
                        "comment" => Section::Comment,
                        "graph" => Section::Graph,
                        "terminals" => Section::Terminals,
                        "coordinates" => Section::Coordinates,
                        other => {
                            state.warnings.push(StpWarning {
                                line,
                                message: format!("skipping unsupported section {other:?}"),
                            });
                            Section::Unknown
                        }
                    };
                    section = Some((kind, line));
                }
                "EOF" => saw_eof = true,
                _ => return Err(err(line, format!("expected SECTION or EOF, got {keyword:?}"))),
            },
            Some((ref kind, _)) => {
                if upper == "END" {
                    if let Section::Graph = kind {
                        state.close_graph(line)?;
                    }
                    if let Section::Terminals = kind {
                        state.close_terminals(line)?;
                    }
                    section = None;
                    continue;
                }
                if upper == "SECTION" {
                    return Err(err(line, "SECTION inside an unterminated section"));
                }
                match kind {
                    Section::Comment | Section::Unknown => {}
                    Section::Graph => state.graph_line(line, &upper, &rest)?,
                    Section::Terminals => state.terminal_line(line, &upper, &rest)?,
                    Section::Coordinates => state.coordinate_line(line, &upper, &rest)?,
                }
            }
        }
    }
    if let Some((_, opened)) = section {
        return Err(err(opened, "unterminated section (file truncated?)"));
    }
    state.finish()
}

impl Parser {
    fn node_count(&self, line: usize) -> Result<usize, StpError> {
        self.nodes.ok_or_else(|| err(line, "needs a prior Nodes declaration"))
    }

    fn node_id(&self, line: usize, field: &str) -> Result<usize, StpError> {
        let id: usize = parse_num(line, field, "node id")?;
        let n = self.node_count(line)?;
        if id == 0 || id > n {
            return Err(err(line, format!("node id {id} outside 1..={n}")));
        }
        Ok(id - 1)
    }

    fn graph_line(&mut self, line: usize, keyword: &str, rest: &[&str]) -> Result<(), StpError> {
        match keyword {
            "NODES" => {
                let n = parse_num(line, one(line, rest, "Nodes")?, "node count")?;
                self.nodes = Some(n);
            }
            "EDGES" => {
                let m = parse_num(line, one(line, rest, "Edges")?, "edge count")?;
                self.declared_edges = Some(m);
            }
            "E" => {
                if rest.len() != 3 {
                    return Err(err(line, "E lines take exactly: E u v w"));
                }
                let u = self.node_id(line, rest[0])?;
                let v = self.node_id(line, rest[1])?;
                if u == v {
                    return Err(err(line, format!("self-loop at node {}", u + 1)));
                }
                let w: f64 = parse_num(line, rest[2], "edge weight")?;
                let key = (u.min(v), u.max(v));
                match self.edge_index.get(&key) {
                    Some(&idx) => {
                        let kept = self.edges[idx].2.min(w);
                        self.warnings.push(StpWarning {
                            line,
                            message: format!(
                                "duplicate edge ({}, {}); keeping weight {kept}",
                                key.0 + 1,
                                key.1 + 1
                            ),
                        });
                        self.edges[idx].2 = kept;
                    }
                    None => {
                        self.edge_index.insert(key, self.edges.len());
                        self.edges.push((key.0, key.1, w));
                    }
                }
            }
            "A" => return Err(err(line, "directed arcs are not supported")),
            other => return Err(err(line, format!("unexpected {other:?} in Graph section"))),
        }
        Ok(())
    }

    fn close_graph(&self, line: usize) -> Result<(), StpError> {
        self.node_count(line)?;
        if let Some(declared) = self.declared_edges {
            if declared != self.edges.len() {
                return Err(err(
                    line,
                    format!("declared {declared} edges but found {}", self.edges.len()),
                ));
            }
        }
        Ok(())
    }

    fn terminal_line(&mut self, line: usize, keyword: &str, rest: &[&str]) -> Result<(), StpError> {
        match keyword {
            "TERMINALS" => {
                let t = parse_num(line, one(line, rest, "Terminals")?, "terminal count")?;
                self.declared_terminals = Some(t);
            }
            "T" => {
                let v = self.node_id(line, one(line, rest, "T")?)?;
                self.terminals.push(v);
            }
            other => return Err(err(line, format!("unexpected {other:?} in Terminals section"))),
        }
        Ok(())
    }

    fn close_terminals(&self, line: usize) -> Result<(), StpError> {
        if let Some(declared) = self.declared_terminals {
            if declared != self.terminals.len() {
                return Err(err(
                    line,
                    format!("declared {declared} terminals but found {}", self.terminals.len()),
                ));
            }
        }
        Ok(())
    }

    fn coordinate_line(
        &mut self,
        line: usize,
        keyword: &str,
        rest: &[&str],
    ) -> Result<(), StpError> {
        if keyword != "DD" {
            return Err(err(line, format!("only planar DD coordinates are supported, got {keyword:?}")));
        }
        if rest.len() != 3 {
            return Err(err(line, "DD lines take exactly: DD v x y"));
        }
        let v = self.node_id(line, rest[0])?;
        let x: f64 = parse_num(line, rest[1], "x coordinate")?;
        let y: f64 = parse_num(line, rest[2], "y coordinate")?;
        if self.coordinates.insert(v, (x, y)).is_some() {
            return Err(err(line, format!("duplicate coordinates for node {}", v + 1)));
        }
        Ok(())
    }

    fn finish(self) -> Result<ParsedStp, StpError> {
        let n = self.nodes.ok_or_else(|| err(0, "no Graph section"))?;
        if self.terminals.is_empty() {
            return Err(err(0, "no Terminals section"));
        }
        let positions = if self.coordinates.is_empty() {
            None
        } else {
            let raw: Result<Vec<(f64, f64)>, StpError> = (0..n)
                .map(|v| {
                    self.coordinates
                        .get(&v)
                        .copied()
                        .ok_or_else(|| err(0, format!("missing coordinates for node {}", v + 1)))
                })
                .collect();
            Some(normalize_unit_square(&raw?))
        };
        let graph = Graph::new(n, &self.edges).map_err(InstanceError::from)?;
        let instance = Instance::new(graph, self.terminals, ProblemKind::SteinerTree, positions, None)?;
        Ok(ParsedStp { instance, warnings: self.warnings })
    }
}

fn one<'a>(line: usize, rest: &[&'a str], keyword: &str) -> Result<&'a str, StpError> {
    if rest.len() == 1 {
        Ok(rest[0])
    } else {
        Err(err(line, format!("{keyword} takes exactly one value")))
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, field: &str, what: &str) -> Result<T, StpError> {
    field.parse().map_err(|_| err(line, format!("invalid {what} {field:?}")))
}
