//! Multiplex-network data model, transforms, and file formats.
//!
//! # Edge-list format
//!
//! UTF-8 text, one record per line: `layer node_u node_v [weight]`,
//! whitespace-separated, 0-based ids, weight defaulting to `1.0`. `#` starts
//! a comment. An optional header line `%mxplex n=<N> L=<L>` pins the node
//! and layer counts. Edges given in both directions are merged with `max`,
//! so binary networks stay binary; self-loops are dropped with a warning.
//!
//! # Labels format
//!
//! One line per node: `node_id community_id`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::numerics::DenseMatrix;
use crate::{Error, Result};

/// Symmetry tolerance enforced on stored layers.
pub const LAYER_SYMMETRY_TOL: f64 = 1e-12;

/// An undirected multiplex network: `n` shared nodes observed through one
/// symmetric nonnegative adjacency matrix per layer.
#[derive(Debug, Clone)]
pub struct MultiplexNetwork {
    n: usize,
    layers: Vec<DenseMatrix>,
}

impl MultiplexNetwork {
    /// Build from sampled adjacency matrices: each layer must be square of
    /// equal size, symmetric within `1e-12`, nonnegative, finite, and
    /// hollow (zero diagonal).
    pub fn from_layers(layers: Vec<DenseMatrix>) -> Result<Self> {
        let net = Self::from_expectation_layers(layers)?;
        for (l, a) in net.layers.iter().enumerate() {
            for i in 0..net.n {
                if a.get(i, i) != 0.0 {
                    return Err(Error::invalid(format!(
                        "layer {l} has a nonzero diagonal entry at node {i}"
                    )));
                }
            }
        }
        Ok(net)
    }

    /// Like [`Self::from_layers`] but the diagonal may carry mass. Population
    /// (expected-value) adjacencies keep their diagonal by construction.
    pub fn from_expectation_layers(layers: Vec<DenseMatrix>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("multiplex network needs at least one layer"));
        }
        let n = layers[0].rows();
        for (l, a) in layers.iter().enumerate() {
            if a.rows() != n || a.cols() != n {
                return Err(Error::invalid(format!(
                    "layer {l} is {}x{}, expected {n}x{n}",
                    a.rows(),
                    a.cols()
                )));
            }
            if !a.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("layer {l} adjacency"),
                });
            }
            if a.as_slice().iter().any(|&v| v < 0.0) {
                return Err(Error::invalid(format!("layer {l} has negative weights")));
            }
            let asym = a.max_asymmetry();
            if asym > LAYER_SYMMETRY_TOL {
                return Err(Error::NotSymmetric {
                    max_asym: asym,
                    tol: LAYER_SYMMETRY_TOL,
                });
            }
        }
        Ok(MultiplexNetwork { n, layers })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    #[inline]
    pub fn layer(&self, l: usize) -> &DenseMatrix {
        &self.layers[l]
    }

    pub fn layers(&self) -> &[DenseMatrix] {
        &self.layers
    }

    /// Fraction of present (nonzero) node pairs in one layer.
    pub fn edge_density(&self, l: usize) -> f64 {
        let n = self.n;
        if n < 2 {
            return 0.0;
        }
        let a = &self.layers[l];
        let mut present = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                if a.get(i, j) > 0.0 {
                    present += 1;
                }
            }
        }
        present as f64 / (n * (n - 1) / 2) as f64
    }

    /// Entrywise mean of the layers; the aggregated-average baseline
    /// factorizes this single matrix instead of the multiplex.
    pub fn aggregate_average(&self) -> DenseMatrix {
        let mut acc = self.layers[0].clone();
        for a in &self.layers[1..] {
            acc.add_assign(a).expect("equal layer shapes");
        }
        acc.scale(1.0 / self.layers.len() as f64);
        acc
    }

    /// Rescale every layer by the global maximum weight, mapping weighted
    /// networks into `[0, 1]`. No-op on binary or empty networks.
    pub fn normalize_by_max(&mut self) {
        let mut max = 0.0_f64;
        for a in &self.layers {
            max = max.max(a.max_abs());
        }
        if max > 0.0 && max != 1.0 {
            for a in &mut self.layers {
                a.scale(1.0 / max);
            }
        }
    }
}

/// A partition of the node set: one community id per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeLabels(pub Vec<usize>);

impl NodeLabels {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Remap ids onto the contiguous range `0..K-1`, preserving first-seen
    /// order. The partition itself is unchanged.
    pub fn canonicalize(&self) -> NodeLabels {
        let mut map = std::collections::HashMap::new();
        let mut next = 0usize;
        let out = self
            .0
            .iter()
            .map(|&id| {
                *map.entry(id).or_insert_with(|| {
                    let v = next;
                    next += 1;
                    v
                })
            })
            .collect();
        NodeLabels(out)
    }

    pub fn num_communities(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        for &id in &self.0 {
            seen.insert(id);
        }
        seen.len()
    }
}

/// Diagonal matrix of row sums, `D_ii = Σ_j A_ij`.
pub fn degree_matrix(a: &DenseMatrix) -> Result<DenseMatrix> {
    let d = degrees(a)?;
    let n = a.rows();
    let mut m = DenseMatrix::zeros(n, n);
    for (i, di) in d.iter().enumerate() {
        m.set(i, i, *di);
    }
    Ok(m)
}

/// Row sums as a vector.
pub fn degrees(a: &DenseMatrix) -> Result<Vec<f64>> {
    if a.rows() != a.cols() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    Ok((0..a.rows()).map(|i| a.row(i).iter().sum()).collect())
}

/// Symmetric normalized Laplacian `D^{-1/2} (D - A) D^{-1/2}`.
///
/// Rows and columns of isolated nodes (zero degree) are set to zero, so each
/// isolated node contributes one zero eigenvalue and the operator stays
/// total. With a hollow nonnegative symmetric input the spectrum lies in
/// `[0, 2]`.
pub fn normalized_laplacian(a: &DenseMatrix) -> Result<DenseMatrix> {
    let d = degrees(a)?;
    let n = a.rows();
    let inv_sqrt: Vec<f64> = d
        .iter()
        .map(|&di| if di > 0.0 { 1.0 / di.sqrt() } else { 0.0 })
        .collect();
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                l.set(i, i, if d[i] > 0.0 { 1.0 } else { 0.0 });
            } else {
                let v = a.get(i, j);
                if v != 0.0 {
                    l.set(i, j, -v * inv_sqrt[i] * inv_sqrt[j]);
                }
            }
        }
    }
    Ok(l)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Load a multiplex edge-list file. Node count is taken from the header,
/// then `n_hint`, then `max id + 1`; the same precedence applies to the
/// layer count.
pub fn load_multiplex(path: impl AsRef<Path>, n_hint: Option<usize>) -> Result<MultiplexNetwork> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;

    let mut declared_n: Option<usize> = None;
    let mut declared_layers: Option<usize> = None;
    let mut records: Vec<(usize, usize, usize, f64, usize)> = Vec::new();
    let mut max_node = 0usize;
    let mut max_layer = 0usize;
    let mut saw_record = false;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('%') {
            let rest = rest.trim();
            if let Some(args) = rest.strip_prefix("mxplex") {
                for tok in args.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("n=") {
                        declared_n = Some(v.parse().map_err(|_| {
                            parse_err(path, lineno, format!("bad node count {v:?}"))
                        })?);
                    } else if let Some(v) = tok.strip_prefix("L=") {
                        declared_layers = Some(v.parse().map_err(|_| {
                            parse_err(path, lineno, format!("bad layer count {v:?}"))
                        })?);
                    } else {
                        return Err(parse_err(path, lineno, format!("unknown header field {tok:?}")));
                    }
                }
                continue;
            }
            return Err(parse_err(path, lineno, "unknown % directive"));
        }

        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 && toks.len() != 4 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected `layer u v [weight]`, got {} fields", toks.len()),
            ));
        }
        let layer: usize = toks[0]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad layer id {:?}", toks[0])))?;
        let u: usize = toks[1]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad node id {:?}", toks[1])))?;
        let v: usize = toks[2]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad node id {:?}", toks[2])))?;
        let w: f64 = if toks.len() == 4 {
            toks[3]
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad weight {:?}", toks[3])))?
        } else {
            1.0
        };
        if !w.is_finite() {
            return Err(parse_err(path, lineno, "non-finite weight"));
        }
        if w < 0.0 {
            return Err(parse_err(path, lineno, format!("negative weight {w}")));
        }
        if let Some(declared) = declared_layers {
            if layer >= declared {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("layer id {layer} outside declared range 0..{declared}"),
                ));
            }
        }
        if let Some(declared) = declared_n {
            if u >= declared || v >= declared {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("node id outside declared range 0..{declared}"),
                ));
            }
        }
        max_node = max_node.max(u).max(v);
        max_layer = max_layer.max(layer);
        saw_record = true;
        records.push((layer, u, v, w, lineno));
    }

    if !saw_record && declared_n.is_none() && n_hint.is_none() {
        return Err(parse_err(path, 0, "no edges and no declared node count"));
    }

    let n = declared_n
        .or(n_hint)
        .unwrap_or(if saw_record { max_node + 1 } else { 0 });
    let num_layers = declared_layers.unwrap_or(if saw_record { max_layer + 1 } else { 1 });
    if n_hint.is_some() && declared_n.is_none() && saw_record && max_node + 1 > n {
        return Err(parse_err(
            path,
            0,
            format!("node id {max_node} outside hinted range 0..{n}"),
        ));
    }

    let mut layers = vec![DenseMatrix::zeros(n, n); num_layers];
    for (layer, u, v, w, lineno) in records {
        if u == v {
            log::warn!("{}:{lineno}: dropping self-loop on node {u}", path.display());
            continue;
        }
        let a = &mut layers[layer];
        // Asymmetric duplicates merge with max so binary stays binary.
        let merged = a.get(u, v).max(w);
        a.set(u, v, merged);
        a.set(v, u, merged);
    }

    MultiplexNetwork::from_layers(layers)
}

/// Write a network in the edge-list format. Weights print in shortest
/// round-trip form, so `load(save(x))` reproduces `x` bit-exactly.
pub fn save_multiplex(net: &MultiplexNetwork, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "%mxplex n={} L={}", net.n(), net.num_layers());
    for (l, a) in net.layers().iter().enumerate() {
        for i in 0..net.n() {
            for j in (i + 1)..net.n() {
                let w = a.get(i, j);
                if w != 0.0 {
                    let _ = writeln!(out, "{l} {i} {j} {w}");
                }
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Load a labels file (`node_id community_id` per line) for `n` nodes.
/// Every node must be assigned exactly once.
pub fn load_labels(path: impl AsRef<Path>, n: usize) -> Result<NodeLabels> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut labels = vec![usize::MAX; n];
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(path, lineno, "expected `node_id community_id`"));
        }
        let node: usize = toks[0]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad node id {:?}", toks[0])))?;
        let comm: usize = toks[1]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad community id {:?}", toks[1])))?;
        if node >= n {
            return Err(parse_err(path, lineno, format!("node id {node} >= n = {n}")));
        }
        if labels[node] != usize::MAX {
            return Err(parse_err(path, lineno, format!("node {node} labeled twice")));
        }
        labels[node] = comm;
    }
    if let Some(missing) = labels.iter().position(|&v| v == usize::MAX) {
        return Err(parse_err(path, 0, format!("node {missing} has no label")));
    }
    Ok(NodeLabels(labels))
}

pub fn save_labels(labels: &NodeLabels, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (node, comm) in labels.0.iter().enumerate() {
        let _ = writeln!(out, "{node} {comm}");
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{rand_matrix, sym_eig, RandomStream};
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn random_hollow_symmetric(seed: u64, n: usize) -> DenseMatrix {
        let mut a = rand_matrix(&RandomStream::new(seed, 0), n, n, 0.0, 1.0).unwrap();
        a.symmetrize();
        for i in 0..n {
            a.set(i, i, 0.0);
        }
        a
    }

    #[test]
    fn single_edge_file() {
        let f = write_tmp("0 0 1 1.0\n");
        let net = load_multiplex(f.path(), None).unwrap();
        assert_eq!(net.n(), 2);
        assert_eq!(net.num_layers(), 1);
        assert_eq!(net.layer(0).get(0, 1), 1.0);
        assert_eq!(net.layer(0).get(1, 0), 1.0);
    }

    #[test]
    fn asymmetric_duplicates_merge_with_max() {
        let f = write_tmp("0 0 1 0.4\n0 1 0 0.8\n");
        let net = load_multiplex(f.path(), None).unwrap();
        assert_eq!(net.layer(0).get(0, 1), 0.8);
        assert_eq!(net.layer(0).get(1, 0), 0.8);
    }

    #[test]
    fn header_and_comments() {
        let f = write_tmp("# a comment\n%mxplex n=5 L=2\n1 0 4 0.25 # trailing\n");
        let net = load_multiplex(f.path(), None).unwrap();
        assert_eq!(net.n(), 5);
        assert_eq!(net.num_layers(), 2);
        assert_eq!(net.layer(1).get(0, 4), 0.25);
        assert_eq!(net.layer(0).max_abs(), 0.0);
    }

    #[test]
    fn self_loops_dropped() {
        let f = write_tmp("0 2 2 9.0\n0 0 1\n");
        let net = load_multiplex(f.path(), None).unwrap();
        assert_eq!(net.layer(0).get(2, 2), 0.0);
        assert_eq!(net.layer(0).get(0, 1), 1.0);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("0 0 1 1.0\n0 1 -nope\n", "2"),
            ("0 0 1 -2.0\n", "1"),
            ("%mxplex n=3 L=1\n1 0 1 1.0\n", "2"),
            ("%mxplex n=2 L=1\n0 0 5 1.0\n", "2"),
        ];
        for (content, line) in cases {
            let f = write_tmp(content);
            let err = load_multiplex(f.path(), None).unwrap_err();
            let msg = err.to_string();
            assert!(msg.contains(&format!(":{line}:")), "{msg}");
        }
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        for seed in 0..5u64 {
            let layers: Vec<DenseMatrix> = (0..3)
                .map(|l| {
                    let mut a = random_hollow_symmetric(seed * 10 + l, 7);
                    // Sparsify a little so zeros round-trip too.
                    for i in 0..7 {
                        for j in 0..7 {
                            if a.get(i, j) < 0.3 {
                                a.set(i, j, 0.0);
                            }
                        }
                    }
                    a
                })
                .collect();
            let net = MultiplexNetwork::from_layers(layers).unwrap();
            let f = tempfile::NamedTempFile::new().unwrap();
            save_multiplex(&net, f.path()).unwrap();
            let back = load_multiplex(f.path(), None).unwrap();
            assert_eq!(back.n(), net.n());
            assert_eq!(back.num_layers(), net.num_layers());
            for l in 0..3 {
                assert_eq!(back.layer(l).as_slice(), net.layer(l).as_slice());
            }
        }
    }

    #[test]
    fn labels_round_trip_and_errors() {
        let labels = NodeLabels(vec![3, 0, 0, 7]);
        let f = tempfile::NamedTempFile::new().unwrap();
        save_labels(&labels, f.path()).unwrap();
        assert_eq!(load_labels(f.path(), 4).unwrap(), labels);

        let bad = write_tmp("0 1\n0 2\n1 0\n");
        assert!(load_labels(bad.path(), 2).is_err());
        let missing = write_tmp("0 1\n");
        assert!(load_labels(missing.path(), 2).is_err());
    }

    #[test]
    fn canonicalize_is_dense_and_order_preserving() {
        let labels = NodeLabels(vec![9, 4, 9, 2]).canonicalize();
        assert_eq!(labels, NodeLabels(vec![0, 1, 0, 2]));
        assert_eq!(labels.num_communities(), 3);
    }

    #[test]
    fn degree_matrix_cases() {
        let k2 = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let d = degree_matrix(&k2).unwrap();
        assert_eq!(d.get(0, 0), 1.0);
        assert_eq!(d.get(1, 1), 1.0);
        assert_eq!(d.get(0, 1), 0.0);

        assert_eq!(degree_matrix(&DenseMatrix::zeros(3, 3)).unwrap().max_abs(), 0.0);

        let a = random_hollow_symmetric(4, 6);
        let d = degree_matrix(&a).unwrap();
        for i in 0..6 {
            let want: f64 = a.row(i).iter().sum();
            assert_eq!(d.get(i, i), want);
        }
    }

    #[test]
    fn laplacian_on_k2() {
        let k2 = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let l = normalized_laplacian(&k2).unwrap();
        assert_eq!(l.get(0, 0), 1.0);
        assert_eq!(l.get(0, 1), -1.0);
        let eig = sym_eig(&l).unwrap();
        let mut vals = eig.eigenvalues.clone();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(vals[0].abs() < 1e-12 && (vals[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn laplacian_zero_multiplicity_counts_components() {
        // 3 disjoint triangles: eigenvalue 0 with multiplicity 3.
        let n = 9;
        let mut a = DenseMatrix::zeros(n, n);
        for t in 0..3 {
            let base = 3 * t;
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        a.set(base + i, base + j, 1.0);
                    }
                }
            }
        }
        let l = normalized_laplacian(&a).unwrap();
        let eig = sym_eig(&l).unwrap();
        let zeros = eig.eigenvalues.iter().filter(|v| v.abs() < 1e-10).count();
        assert_eq!(zeros, 3);
    }

    #[test]
    fn laplacian_spectrum_bounds_and_psd() {
        for seed in 0..6u64 {
            let mut a = random_hollow_symmetric(100 + seed, 10);
            // Sparsify; some seeds end up with isolated nodes.
            for v in a.as_mut_slice() {
                if *v < 0.55 {
                    *v = 0.0;
                }
            }
            let l = normalized_laplacian(&a).unwrap();
            let eig = sym_eig(&l).unwrap();
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(min >= -1e-10, "smallest eigenvalue {min}");
            assert!(min.abs() <= 1e-10, "connected-or-isolated graphs always have a 0");
            assert!(max <= 2.0 + 1e-10, "largest eigenvalue {max}");
        }
    }

    #[test]
    fn laplacian_isolated_rows_are_zero() {
        let mut a = DenseMatrix::zeros(3, 3);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        let l = normalized_laplacian(&a).unwrap();
        assert_eq!(l.row(2), &[0.0, 0.0, 0.0]);
        assert_eq!(l.get(0, 2), 0.0);
    }

    #[test]
    fn aggregate_average_cases() {
        let a = random_hollow_symmetric(5, 5);
        let single = MultiplexNetwork::from_layers(vec![a.clone()]).unwrap();
        assert_eq!(single.aggregate_average().as_slice(), a.as_slice());

        let two = MultiplexNetwork::from_layers(vec![a.clone(), DenseMatrix::zeros(5, 5)]).unwrap();
        let avg = two.aggregate_average();
        for (got, want) in avg.as_slice().iter().zip(a.as_slice()) {
            assert!((got - want / 2.0).abs() < 1e-15);
        }

        let layers: Vec<DenseMatrix> = (0..3).map(|s| random_hollow_symmetric(50 + s, 6)).collect();
        let net = MultiplexNetwork::from_layers(layers.clone()).unwrap();
        let avg = net.aggregate_average();
        for i in 0..6 {
            for j in 0..6 {
                let want = (layers[0].get(i, j) + layers[1].get(i, j) + layers[2].get(i, j)) / 3.0;
                assert!((avg.get(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn from_layers_validation() {
        let mut asym = DenseMatrix::zeros(3, 3);
        asym.set(0, 1, 1.0);
        assert!(MultiplexNetwork::from_layers(vec![asym]).is_err());

        let mut neg = DenseMatrix::zeros(2, 2);
        neg.set(0, 1, -1.0);
        neg.set(1, 0, -1.0);
        assert!(MultiplexNetwork::from_layers(vec![neg]).is_err());

        let mut diag = DenseMatrix::zeros(2, 2);
        diag.set(0, 0, 1.0);
        assert!(MultiplexNetwork::from_layers(vec![diag.clone()]).is_err());
        assert!(MultiplexNetwork::from_expectation_layers(vec![diag]).is_ok());
    }

    #[test]
    fn normalize_by_max_maps_into_unit_interval() {
        let mut a = DenseMatrix::zeros(2, 2);
        a.set(0, 1, 4.0);
        a.set(1, 0, 4.0);
        let mut net = MultiplexNetwork::from_layers(vec![a]).unwrap();
        net.normalize_by_max();
        assert_eq!(net.layer(0).get(0, 1), 1.0);
    }
}
