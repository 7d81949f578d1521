//! Line-oriented text format for datasets.
//!
//! ```text
//! ECAL-GRAPHS v1 C=<int> DV=<int> DE=<int> N=<int> [SPLIT=<train|valid|test>]
//! G <num_nodes> <num_arcs> <label>
//! <d_v reals>              (num_nodes lines)
//! <src> <dst> <d_e reals>  (num_arcs lines)
//! ```
//!
//! Blank lines and `#` comments are ignored. Reals are written as the
//! shortest decimal that parses back to the identical `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, Graph, Split};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const MAGIC: &str = "ECAL-GRAPHS";
const VERSION: &str = "v1";

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    pub allow_self_loops: bool,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    load_dataset_with(path, LoadOptions::default())
}

pub fn load_dataset_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ds = parse_dataset(&text)?;
    ds.validate(opts.allow_self_loops)?;
    Ok(ds)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_dataset(ds)).map_err(|e| Error::io(path, e))
}

pub(crate) fn fmt_real(out: &mut String, x: f64) {
    // `Debug` for f64 is the shortest representation that round-trips.
    let _ = write!(out, "{x:?}");
}

pub(crate) fn render_dataset(ds: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{MAGIC} {VERSION} C={} DV={} DE={} N={} SPLIT={}",
        ds.num_classes,
        ds.d_v,
        ds.d_e,
        ds.graphs.len(),
        ds.split
    );
    for g in &ds.graphs {
        let _ = writeln!(out, "G {} {} {}", g.num_nodes, g.num_arcs(), g.label);
        for r in 0..g.num_nodes {
            write_row(&mut out, g.node_features.row(r));
        }
        for (e, &(s, d)) in g.edges.iter().enumerate() {
            let _ = write!(out, "{s} {d}");
            if g.d_e() > 0 {
                out.push(' ');
            }
            write_row(&mut out, g.edge_features.row(e));
        }
    }
    out
}

fn write_row(out: &mut String, row: &[f64]) {
    for (i, &x) in row.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        fmt_real(out, x);
    }
    out.push('\n');
}

/// Significant lines with their 1-based line numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

pub(crate) fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub(crate) fn header_field<T: std::str::FromStr>(line: usize, token: &str, key: &str) -> Result<T> {
    token
        .strip_prefix(key)
        .and_then(|t| t.strip_prefix('='))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(line, format!("expected {key}=<value>, found `{token}`")))
}

pub(crate) fn parse_reals(line: usize, tokens: &[&str], expected: usize) -> Result<Vec<f64>> {
    if tokens.len() != expected {
        return Err(parse_err(
            line,
            format!("expected {expected} values, found {}", tokens.len()),
        ));
    }
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| parse_err(line, format!("invalid real `{t}`")))
        })
        .collect()
}

fn parse_usize(line: usize, token: &str, what: &str) -> Result<usize> {
    token
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {what} `{token}`")))
}

pub(crate) fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() < 6 || tokens[0] != MAGIC || tokens[1] != VERSION {
        return Err(parse_err(hl, format!("expected `{MAGIC} {VERSION} C=.. DV=.. DE=.. N=..`")));
    }
    let num_classes: usize = header_field(hl, tokens[2], "C")?;
    let d_v: usize = header_field(hl, tokens[3], "DV")?;
    let d_e: usize = header_field(hl, tokens[4], "DE")?;
    let n: usize = header_field(hl, tokens[5], "N")?;
    let split = match tokens.get(6) {
        Some(t) => header_field::<String>(hl, t, "SPLIT")?
            .parse::<Split>()
            .map_err(|e| parse_err(hl, e.to_string()))?,
        None => Split::Train,
    };
    if tokens.len() > 7 {
        return Err(parse_err(hl, "trailing tokens in header"));
    }

    let mut ds = Dataset::new(num_classes, d_v, d_e, split);
    let mut last_line = hl;
    for _ in 0..n {
        let (gl, gline) = lines
            .next()
            .ok_or_else(|| parse_err(last_line + 1, "unexpected end of file, expected `G` line"))?;
        let t: Vec<&str> = gline.split_whitespace().collect();
        if t.len() != 4 || t[0] != "G" {
            return Err(parse_err(gl, "expected `G <num_nodes> <num_arcs> <label>`"));
        }
        let num_nodes = parse_usize(gl, t[1], "node count")?;
        let num_arcs = parse_usize(gl, t[2], "arc count")?;
        let label = parse_usize(gl, t[3], "label")?;
        last_line = gl;

        let mut nf = Vec::with_capacity(num_nodes * d_v);
        for _ in 0..num_nodes {
            let (l, row) = lines
                .next()
                .ok_or_else(|| parse_err(last_line + 1, "unexpected end of file in node rows"))?;
            let toks: Vec<&str> = row.split_whitespace().collect();
            nf.extend(parse_reals(l, &toks, d_v)?);
            last_line = l;
        }
        let mut edges = Vec::with_capacity(num_arcs);
        let mut ef = Vec::with_capacity(num_arcs * d_e);
        for _ in 0..num_arcs {
            let (l, row) = lines
                .next()
                .ok_or_else(|| parse_err(last_line + 1, "unexpected end of file in arc rows"))?;
            let toks: Vec<&str> = row.split_whitespace().collect();
            if toks.len() < 2 {
                return Err(parse_err(l, "expected `<src> <dst> <reals>`"));
            }
            let s = parse_usize(l, toks[0], "source index")?;
            let d = parse_usize(l, toks[1], "destination index")?;
            edges.push((s, d));
            ef.extend(parse_reals(l, &toks[2..], d_e)?);
            last_line = l;
        }
        ds.graphs.push(Graph {
            num_nodes,
            edges,
            node_features: Tensor::from_vec(num_nodes, d_v, nf),
            edge_features: Tensor::from_vec(num_arcs, d_e, ef),
            label,
        });
    }
    if let Some((l, _)) = lines.next() {
        return Err(parse_err(l, format!("content after the declared {n} graphs")));
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::graph::random_graph;

    const SMALLEST: &str = "ECAL-GRAPHS v1 C=2 DV=2 DE=1 N=1\n\
        # one undirected edge stored as two arcs\n\
        G 2 2 1\n\
        0.5 -1\n\
        \n\
        2.0 3.25\n\
        0 1 0.125\n\
        1 0 0.125\n";

    #[test]
    fn smallest_legal_file() {
        let ds = parse_dataset(SMALLEST).unwrap();
        ds.validate(false).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.graphs[0].num_arcs(), 2);
        assert_eq!(ds.graphs[0].label, 1);
        assert_eq!(ds.split, Split::Train);
        assert_eq!(ds.graphs[0].node_features.row(1), &[2.0, 3.25]);
    }

    #[test]
    fn out_of_range_node_index() {
        let text = SMALLEST.replace("1 0 0.125", "2 0 0.125");
        let ds = parse_dataset(&text).unwrap();
        let err = ds.validate(false).unwrap_err();
        assert_eq!(err.to_string(), "node index out of range, graph 0");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = SMALLEST.replace("2.0 3.25", "2.0 abc");
        match parse_dataset(&text).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
        let text = SMALLEST.replace("N=1", "N=2");
        assert!(matches!(parse_dataset(&text), Err(Error::Parse { line: 9, .. })));
        let err = parse_dataset("ECAL-GRAPHS v2 C=2 DV=1 DE=1 N=0").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.graphs");
        let ds = Dataset::new(2, 3, 2, Split::Test);
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn missing_directory_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nope").join("x.graphs");
        let ds = Dataset::new(2, 1, 1, Split::Train);
        assert!(matches!(save_dataset(&ds, &path), Err(Error::Io { .. })));
        assert!(matches!(load_dataset(&path), Err(Error::Io { .. })));
    }

    #[test]
    fn random_datasets_round_trip_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ds = Dataset::new(3, 3, 2, Split::Valid);
        for _ in 0..10 {
            let n = rng.random_range(1..8);
            let mut g = random_graph(&mut rng, n, 3, 2, 3);
            // exercise awkward magnitudes
            for x in g.node_features.data_mut() {
                *x *= 10f64.powi(rng.random_range(-30..30));
            }
            ds.graphs.push(g);
        }
        ds.graphs[0].node_features.data_mut()[0] = -0.0;
        let text = render_dataset(&ds);
        let back = parse_dataset(&text).unwrap();
        assert_eq!(back.graphs.len(), ds.graphs.len());
        for (a, b) in back.graphs.iter().zip(&ds.graphs) {
            assert_eq!(a.num_nodes, b.num_nodes);
            assert_eq!(a.edges, b.edges);
            assert_eq!(a.label, b.label);
            let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.node_features), bits(&b.node_features));
            assert_eq!(bits(&a.edge_features), bits(&b.edge_features));
        }
        assert_eq!((back.num_classes, back.d_v, back.d_e, back.split), (3, 3, 2, Split::Valid));
        assert_eq!(render_dataset(&back), text);
    }
}
