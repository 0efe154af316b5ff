//! Plain-text graph format:
//!
//! ```text
//! # sector-graph v1
//! area_side 100
//! border bounded
//! nodes 2
//! 0 10.5 20.25 1.2 0.785 40
//! 1 ...
//! edges 1
//! 0 1
//! ```
//!
//! Node rows are `index x y orientation scan_angle range`; edge rows are
//! `from to`. Floats are written in shortest round-trip form, so a parsed
//! graph reproduces its adjacency exactly; the edge list is checked against
//! the geometry on load.

use std::fmt::Write;

use nalgebra::Point2;

use super::{BorderMode, DirectedSectorGraph, NodeSector};
use crate::{Error, Result};

const MAGIC: &str = "# sector-graph v1";

/// Node rows only; used for dumping estimated positions.
pub fn node_table_text(nodes: &[NodeSector]) -> String {
    let mut s = format!("nodes {}\n", nodes.len());
    for (i, n) in nodes.iter().enumerate() {
        writeln!(s, "{i} {} {} {} {} {}", n.position.x, n.position.y, n.orientation, n.scan_angle, n.range).unwrap();
    }
    s
}

impl DirectedSectorGraph {
    pub fn to_text(&self) -> String {
        let mut s = format!("{MAGIC}\narea_side {}\nborder {}\n", self.area_side(), self.border().as_str());
        s.push_str(&node_table_text(self.nodes()));
        let m = self.len();
        writeln!(s, "edges {}", self.edge_count()).unwrap();
        for i in 0..m {
            for j in 0..m {
                if self.has_edge(i, j) {
                    writeln!(s, "{i} {j}").unwrap();
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && (!l.starts_with('#') || *l == MAGIC));

        let mut next =
            |what: &str| lines.next().ok_or_else(|| Error::parse(text.lines().count(), format!("missing {what}")));

        let (n, first) = next("header")?;
        if first != MAGIC {
            return Err(Error::parse(n, format!("expected `{MAGIC}`")));
        }
        let (n, line) = next("area_side")?;
        let area_side: f64 = keyed(n, line, "area_side")?;
        let (n, line) = next("border")?;
        let border: BorderMode =
            keyed::<String>(n, line, "border")?.parse().map_err(|e: Error| Error::parse(n, e.to_string()))?;
        let (n, line) = next("nodes")?;
        let count: usize = keyed(n, line, "nodes")?;
        let mut nodes = Vec::with_capacity(count);
        for expected in 0..count {
            let (n, line) = next("node row")?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(Error::parse(n, format!("node row needs 6 fields, found {}", f.len())));
            }
            let idx: usize = num(n, f[0])?;
            if idx != expected {
                return Err(Error::parse(n, format!("expected node index {expected}, found {idx}")));
            }
            let sector =
                NodeSector::new(Point2::new(num(n, f[1])?, num(n, f[2])?), num(n, f[3])?, num(n, f[4])?, num(n, f[5])?)
                    .map_err(|e| Error::parse(n, e.to_string()))?;
            nodes.push(sector);
        }
        let (n, line) = next("edges")?;
        let edges: usize = keyed(n, line, "edges")?;
        let mut adjacency = vec![false; count * count];
        for _ in 0..edges {
            let (n, line) = next("edge row")?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 2 {
                return Err(Error::parse(n, "edge row needs 2 fields"));
            }
            let (i, j): (usize, usize) = (num(n, f[0])?, num(n, f[1])?);
            if i >= count || j >= count || i == j {
                return Err(Error::parse(n, format!("invalid edge {i} -> {j}")));
            }
            adjacency[i * count + j] = true;
        }
        if let Some((n, _)) = lines.next() {
            return Err(Error::parse(n, "trailing content after edge list"));
        }
        let parsed = DirectedSectorGraph::from_parts(nodes.clone(), adjacency, area_side, border);
        let rebuilt = DirectedSectorGraph::from_sectors(nodes, area_side, border);
        if parsed != rebuilt {
            return Err(Error::parse(text.lines().count(), "edge list does not match sector geometry"));
        }
        Ok(parsed)
    }
}

fn num<T: std::str::FromStr>(line: usize, field: &str) -> Result<T> {
    field.parse().map_err(|_| Error::parse(line, format!("cannot parse `{field}`")))
}

fn keyed<T: std::str::FromStr>(line_no: usize, line: &str, key: &str) -> Result<T> {
    match line.split_once(char::is_whitespace) {
        Some((k, v)) if k == key => num(line_no, v.trim()),
        _ => Err(Error::parse(line_no, format!("expected `{key} <value>`"))),
    }
}
