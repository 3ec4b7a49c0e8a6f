//! Region graphs and the control matrices of the mean-field model.
//!
//! Vertices are stored 0-based. The text file format and all user-facing
//! messages are 1-based.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A directed edge with its admissible transition-rate interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub u_min: f64,
    pub u_max: f64,
}

impl Edge {
    /// Edge with the default bounds `[0, 1]`.
    pub fn new(source: usize, target: usize) -> Self {
        Self {
            source,
            target,
            u_min: 0.0,
            u_max: 1.0,
        }
    }

    pub fn with_bounds(mut self, u_min: f64, u_max: f64) -> Self {
        self.u_min = u_min;
        self.u_max = u_max;
        self
    }
}

/// One invariant violation reported by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoRegions,
    EndpointOutOfRange { edge: usize },
    SelfLoop { edge: usize },
    Duplicate { edge: usize },
    Bounds { edge: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoRegions => write!(f, "graph has no regions"),
            Violation::EndpointOutOfRange { edge } => {
                write!(f, "edge {}: endpoint out of range", edge + 1)
            }
            Violation::SelfLoop { edge } => write!(f, "edge {}: self-loop", edge + 1),
            Violation::Duplicate { edge } => write!(f, "edge {}: duplicate edge", edge + 1),
            Violation::Bounds { edge } => {
                write!(f, "edge {}: bounds require u_min <= u_max", edge + 1)
            }
        }
    }
}

/// Collects every invariant violation of a candidate graph.
pub fn validate(num_regions: usize, edges: &[Edge]) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if num_regions == 0 {
        out.push(Violation::NoRegions);
    }
    let mut seen = HashSet::new();
    for (i, e) in edges.iter().enumerate() {
        if e.source >= num_regions || e.target >= num_regions {
            out.push(Violation::EndpointOutOfRange { edge: i });
        }
        if e.source == e.target {
            out.push(Violation::SelfLoop { edge: i });
        }
        if !seen.insert((e.source, e.target)) {
            out.push(Violation::Duplicate { edge: i });
        }
        if !(e.u_min.is_finite() && e.u_max.is_finite() && e.u_min <= e.u_max) {
            out.push(Violation::Bounds { edge: i });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Directed graph of regions. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGraph {
    num_regions: usize,
    edges: Vec<Edge>,
}

/// Dense `M x M` matrix `B_e` moving mass from the source of `e` to its target.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMatrix {
    size: usize,
    data: Vec<f64>,
}

impl ControlMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.size).map(|r| r.to_vec()).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.size)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl RegionGraph {
    pub fn new(num_regions: usize, edges: Vec<Edge>) -> Result<Self> {
        validate(num_regions, &edges).map_err(|v| {
            Error::InvalidGraph(
                v.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            )
        })?;
        Ok(Self { num_regions, edges })
    }

    /// Graph with default `[0, 1]` bounds from 0-based `(source, target)` pairs.
    pub fn from_pairs(num_regions: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        Self::new(
            num_regions,
            pairs.iter().map(|&(s, t)| Edge::new(s, t)).collect(),
        )
    }

    /// Directed cycle `1 -> 2 -> ... -> M -> 1`.
    pub fn cycle(num_regions: usize) -> Result<Self> {
        let pairs: Vec<_> = (0..num_regions)
            .map(|i| (i, (i + 1) % num_regions))
            .collect();
        Self::from_pairs(num_regions, &pairs)
    }

    /// The case-study graphs: `two_regions`, `four_regions`, `ten_regions`.
    ///
    /// Hyphenated spellings are accepted as well.
    pub fn builtin(name: &str) -> Result<Self> {
        match name.replace('-', "_").as_str() {
            "two_regions" => Self::from_pairs(2, &[(0, 1), (1, 0)]),
            "four_regions" => Self::cycle(4),
            "ten_regions" => Self::cycle(10),
            _ => Err(Error::UnknownGraph(name.to_string())),
        }
    }

    pub fn num_regions(&self) -> usize {
        self.num_regions
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, index: usize) -> Result<&Edge> {
        self.edges.get(index).ok_or(Error::EdgeIndex {
            index,
            count: self.edges.len(),
        })
    }

    pub fn is_bidirected(&self) -> bool {
        let set: HashSet<_> = self.edges.iter().map(|e| (e.source, e.target)).collect();
        set.iter().all(|&(s, t)| set.contains(&(t, s)))
    }

    pub fn control_matrix(&self, index: usize) -> Result<ControlMatrix> {
        let e = self.edge(index)?;
        let m = self.num_regions;
        let mut data = vec![0.0; m * m];
        data[e.source * m + e.source] = -1.0;
        data[e.target * m + e.source] = 1.0;
        Ok(ControlMatrix { size: m, data })
    }

    pub fn lower_bounds(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.u_min).collect()
    }

    pub fn upper_bounds(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.u_max).collect()
    }

    /// Serializes to the plain-text graph description format.
    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.num_regions);
        for e in &self.edges {
            s.push_str(&format!(
                "{} {} {} {}\n",
                e.source + 1,
                e.target + 1,
                e.u_min,
                e.u_max
            ));
        }
        s
    }

    /// Parses the plain-text graph description format.
    ///
    /// Line 1 holds `M`; each following non-blank line holds
    /// `source target [u_min u_max]`, 1-indexed. Lines starting with `#` are
    /// ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (first_line, header) = lines.next().ok_or(Error::Empty("graph description"))?;
        let num_regions: usize = header.parse().map_err(|_| Error::GraphParse {
            line: first_line,
            msg: format!("expected region count, found `{header}`"),
        })?;
        let mut edges = Vec::new();
        for (line, l) in lines {
            let fields: Vec<&str> = l.split_whitespace().collect();
            if fields.len() != 2 && fields.len() != 4 {
                return Err(Error::GraphParse {
                    line,
                    msg: format!("expected 2 or 4 fields, found {}", fields.len()),
                });
            }
            let vertex = |s: &str| -> Result<usize> {
                match s.parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v - 1),
                    _ => Err(Error::GraphParse {
                        line,
                        msg: format!("bad vertex `{s}`"),
                    }),
                }
            };
            let rate = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::GraphParse {
                    line,
                    msg: format!("bad rate bound `{s}`"),
                })
            };
            let mut e = Edge::new(vertex(fields[0])?, vertex(fields[1])?);
            if fields.len() == 4 {
                e = e.with_bounds(rate(fields[2])?, rate(fields[3])?);
            }
            edges.push(e);
        }
        Self::new(num_regions, edges)
    }
}

impl FromStr for RegionGraph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_region_matrices() {
        let g = RegionGraph::builtin("two_regions").unwrap();
        assert_eq!(
            g.control_matrix(0).unwrap().rows(),
            vec![vec![-1.0, 0.0], vec![1.0, 0.0]]
        );
        assert_eq!(
            g.control_matrix(1).unwrap().rows(),
            vec![vec![0.0, 1.0], vec![0.0, -1.0]]
        );
    }

    #[test]
    fn four_region_edge_3_4() {
        let g = RegionGraph::builtin("four_regions").unwrap();
        // third edge of the cycle is 3 -> 4
        let b = g.control_matrix(2).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let expected = match (r, c) {
                    (2, 2) => -1.0,
                    (3, 2) => 1.0,
                    _ => 0.0,
                };
                assert_eq!(b.get(r, c), expected);
            }
        }
    }

    #[test]
    fn builtins() {
        let two = RegionGraph::builtin("two_regions").unwrap();
        assert_eq!((two.num_regions(), two.num_edges()), (2, 2));
        assert!(two.is_bidirected());
        let four = RegionGraph::builtin("four-regions").unwrap();
        assert_eq!((four.num_regions(), four.num_edges()), (4, 4));
        assert!(!four.is_bidirected());
        let ten = RegionGraph::builtin("ten_regions").unwrap();
        assert_eq!((ten.num_regions(), ten.num_edges()), (10, 10));
        assert!(matches!(
            RegionGraph::builtin("nine_regions"),
            Err(Error::UnknownGraph(_))
        ));
    }

    #[test]
    fn invalid_edge_index() {
        let g = RegionGraph::builtin("two_regions").unwrap();
        assert!(matches!(
            g.control_matrix(2),
            Err(Error::EdgeIndex { index: 2, count: 2 })
        ));
    }

    #[test]
    fn validation_reports_all_violations() {
        assert!(validate(2, &[Edge::new(0, 1), Edge::new(1, 0)]).is_ok());

        let v = validate(2, &[Edge::new(0, 0)]).unwrap_err();
        assert_eq!(v, vec![Violation::SelfLoop { edge: 0 }]);
        assert!(v[0].to_string().contains("self-loop"));

        let v = validate(2, &[Edge::new(0, 1).with_bounds(2.0, 1.0)]).unwrap_err();
        assert_eq!(v, vec![Violation::Bounds { edge: 0 }]);
        assert!(v[0].to_string().contains("bounds"));

        let v = validate(2, &[Edge::new(0, 1), Edge::new(0, 1), Edge::new(0, 5)]).unwrap_err();
        assert_eq!(
            v,
            vec![
                Violation::Duplicate { edge: 1 },
                Violation::EndpointOutOfRange { edge: 2 }
            ]
        );
    }

    #[test]
    fn text_format() {
        let g: RegionGraph = "# ring\n3\n1 2\n2 3 0 0.5\n3 1\n".parse().unwrap();
        assert_eq!(g.num_regions(), 3);
        assert_eq!(g.edges()[1], Edge::new(1, 2).with_bounds(0.0, 0.5));
        assert_eq!(RegionGraph::parse(&g.to_text()).unwrap(), g);

        match RegionGraph::parse("2\n1 2\n2 x\n") {
            Err(Error::GraphParse { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            RegionGraph::parse("2\n1 1\n"),
            Err(Error::InvalidGraph(_))
        ));
    }

    #[test]
    fn columns_sum_to_zero() {
        let g = RegionGraph::builtin("ten_regions").unwrap();
        for e in 0..g.num_edges() {
            let b = g.control_matrix(e).unwrap();
            for c in 0..10 {
                let s: f64 = (0..10).map(|r| b.get(r, c)).sum();
                assert_eq!(s, 0.0);
            }
            let nonzero = b.rows().concat().iter().filter(|v| **v != 0.0).count();
            assert_eq!(nonzero, 2);
        }
    }
}
