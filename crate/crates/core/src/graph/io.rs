use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::GeometricGraph;
use crate::error::{Error, Result};

/// Serializes a graph in the text format: header `N d f`, one line per node
/// with positions then features, then an optional `E` section.
pub fn graph_to_string(g: &GeometricGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", g.num_nodes(), g.dim(), g.feature_dim());
    for (p, f) in g.positions.outer_iter().zip(g.features.outer_iter()) {
        let line: Vec<String> = p.iter().chain(f.iter()).map(|v| format!("{v}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    if !g.edges.is_empty() {
        out.push_str("E\n");
        for (s, t) in &g.edges {
            let _ = writeln!(out, "{s} {t}");
        }
    }
    out
}

pub fn write_graph(path: &Path, g: &GeometricGraph) -> Result<()> {
    fs::write(path, graph_to_string(g)).map_err(|e| Error::io(path, e))
}

pub fn read_graph(path: &Path) -> Result<GeometricGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_graph(&text, path)
}

pub fn parse_graph(text: &str, path: &Path) -> Result<GeometricGraph> {
    let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or_else(|| err(1, "empty file, expected header `N d f`".into()))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    let parsed: Vec<Option<usize>> = head.iter().map(|v| v.parse().ok()).collect();
    let [Some(n), Some(d), Some(f)] = parsed[..] else {
        return Err(err(hl + 1, format!("expected header `N d f`, found `{}`", header.trim())));
    };
    let mut positions = Array2::zeros((n, d));
    let mut features = Array2::zeros((n, f));
    for i in 0..n {
        let (ln, line) = lines.next().ok_or_else(|| err(hl + 2 + i, format!("expected {n} node lines, found {i}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| err(ln + 1, format!("invalid number `{v}`"))))
            .collect::<Result<_>>()?;
        if vals.len() != d + f {
            return Err(err(ln + 1, format!("expected {} values, found {}", d + f, vals.len())));
        }
        for j in 0..d {
            positions[[i, j]] = vals[j];
        }
        for j in 0..f {
            features[[i, j]] = vals[d + j];
        }
    }
    let mut edges = Vec::new();
    if let Some((ln, line)) = lines.next() {
        if line.trim() != "E" {
            return Err(err(ln + 1, format!("expected `E` or end of file, found `{}`", line.trim())));
        }
        for (ln, line) in lines {
            let v: Vec<Option<usize>> = line.split_whitespace().map(|x| x.parse().ok()).collect();
            let [Some(s), Some(t)] = v[..] else {
                return Err(err(ln + 1, "expected `source target`".into()));
            };
            edges.push((s, t));
        }
    }
    GeometricGraph::new(features, positions, edges).map_err(|e| err(0, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_is_bitwise() {
        let g = GeometricGraph::new(
            array![[0.1, -1.0 / 3.0], [1e-300, 7.0]],
            array![[std::f64::consts::PI, 0.0, -2.5], [1.0, 2.0, 3.0]],
            vec![(0, 1), (1, 0)],
        )
        .unwrap();
        let back = parse_graph(&graph_to_string(&g), Path::new("x")).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn featureless_without_edges() {
        let g = GeometricGraph::from_positions(array![[0.5], [-0.5]]).unwrap();
        let s = graph_to_string(&g);
        assert!(!s.contains('E'));
        assert_eq!(parse_graph(&s, Path::new("x")).unwrap(), g);
    }

    #[test]
    fn bad_header_names_expected_layout() {
        let e = parse_graph("3 2\n", Path::new("g.graph")).unwrap_err().to_string();
        assert!(e.contains("N d f"), "{e}");
    }

    #[test]
    fn bad_value_reports_line() {
        let e = parse_graph("2 1 0\n0.5\nzz\n", Path::new("g")).unwrap_err();
        match e {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn out_of_range_edge_rejected() {
        assert!(parse_graph("1 1 0\n0\nE\n0 3\n", Path::new("g")).is_err());
    }
}
