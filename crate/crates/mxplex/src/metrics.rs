//! Partition quality measures.

use crate::multiplex::{MultiplexNetwork, NodeLabels};
use crate::numerics::DenseMatrix;
use crate::{Error, Result};

/// Contingency table between two partitions of the same node set.
#[derive(Debug, Clone)]
pub struct ConfusionTable {
    /// `counts[i][j]`: nodes with label `i` in A and `j` in B
    /// (canonicalized ids).
    pub counts: Vec<Vec<usize>>,
    pub row_marginals: Vec<usize>,
    pub col_marginals: Vec<usize>,
    pub total: usize,
}

impl ConfusionTable {
    pub fn build(a: &NodeLabels, b: &NodeLabels) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::invalid(format!(
                "partitions cover {} and {} nodes",
                a.len(),
                b.len()
            )));
        }
        if a.is_empty() {
            return Err(Error::Empty("partitions of zero nodes"));
        }
        let a = a.canonicalize();
        let b = b.canonicalize();
        let ka = a.num_communities();
        let kb = b.num_communities();
        let mut counts = vec![vec![0usize; kb]; ka];
        for (&i, &j) in a.0.iter().zip(&b.0) {
            counts[i][j] += 1;
        }
        let row_marginals: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
        let mut col_marginals = vec![0usize; kb];
        for r in &counts {
            for (j, &c) in r.iter().enumerate() {
                col_marginals[j] += c;
            }
        }
        Ok(ConfusionTable {
            counts,
            row_marginals,
            col_marginals,
            total: a.len(),
        })
    }
}

/// Normalized mutual information between two partitions, in `[0, 1]`:
///
/// ```text
///            -2 Σ_ij N_ij ln(N_ij N / (N_i. N_.j))
/// NMI = ------------------------------------------------
///        Σ_i N_i. ln(N_i. / N) + Σ_j N_.j ln(N_.j / N)
/// ```
///
/// with `0 ln 0 = 0`. When both partitions are a single cluster the
/// denominator vanishes; they agree exactly, so the value is defined as 1.
/// When exactly one side is a single cluster the formula itself yields 0.
pub fn nmi(a: &NodeLabels, b: &NodeLabels) -> Result<f64> {
    let t = ConfusionTable::build(a, b)?;
    let n = t.total as f64;
    let ka = t.row_marginals.len();
    let kb = t.col_marginals.len();
    if ka == 1 && kb == 1 {
        return Ok(1.0);
    }
    let mut num = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                num += c * (c * n / (t.row_marginals[i] as f64 * t.col_marginals[j] as f64)).ln();
            }
        }
    }
    let mut den = 0.0;
    for &c in &t.row_marginals {
        den += c as f64 * (c as f64 / n).ln();
    }
    for &c in &t.col_marginals {
        den += c as f64 * (c as f64 / n).ln();
    }
    Ok((-2.0 * num / den).clamp(0.0, 1.0))
}

/// NMI between per-layer partitions: the mean of per-layer scores, or the
/// score of the concatenated label vectors when `pooled`. `truth` may hold
/// a single partition to compare every layer against.
pub fn multiplex_nmi(pred: &[NodeLabels], truth: &[NodeLabels], pooled: bool) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::Empty("no predicted layers"));
    }
    if truth.len() != pred.len() && truth.len() != 1 {
        return Err(Error::invalid(format!(
            "{} truth partitions for {} layers",
            truth.len(),
            pred.len()
        )));
    }
    let truth_for = |l: usize| -> &NodeLabels { if truth.len() == 1 { &truth[0] } else { &truth[l] } };
    if pooled {
        let mut p = Vec::new();
        let mut t = Vec::new();
        for (l, labels) in pred.iter().enumerate() {
            p.extend_from_slice(&labels.0);
            t.extend_from_slice(&truth_for(l).0);
        }
        return nmi(&NodeLabels(p), &NodeLabels(t));
    }
    let mut acc = 0.0;
    for (l, labels) in pred.iter().enumerate() {
        acc += nmi(labels, truth_for(l))?;
    }
    Ok(acc / pred.len() as f64)
}

/// Modularity density of a partition on one weighted graph:
///
/// ```text
/// Q_D = Σ_c (2 in(c) - out(c)) / |c|
/// ```
///
/// where `in(c)` is the total edge weight inside community `c` (each edge
/// once) and `out(c)` the weight crossing its boundary. Size-1 communities
/// contribute `-out(c)`.
pub fn modularity_density(a: &DenseMatrix, labels: &NodeLabels) -> Result<f64> {
    if a.rows() != a.cols() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if labels.len() != a.rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} nodes",
            labels.len(),
            a.rows()
        )));
    }
    let canon = labels.canonicalize();
    let k = canon.num_communities();
    let mut inside = vec![0.0_f64; k];
    let mut boundary = vec![0.0_f64; k];
    let mut sizes = vec![0usize; k];
    for &c in &canon.0 {
        sizes[c] += 1;
    }
    let n = a.rows();
    for i in 0..n {
        let ci = canon.0[i];
        for j in (i + 1)..n {
            let w = a.get(i, j);
            if w == 0.0 {
                continue;
            }
            let cj = canon.0[j];
            if ci == cj {
                inside[ci] += w;
            } else {
                boundary[ci] += w;
                boundary[cj] += w;
            }
        }
    }
    let mut q = 0.0;
    for c in 0..k {
        q += (2.0 * inside[c] - boundary[c]) / sizes[c] as f64;
    }
    Ok(q)
}

/// Mean modularity density over layers, each layer scored with its own
/// labels; the selection score for detection without ground truth.
pub fn mean_modularity_density(net: &MultiplexNetwork, labels: &[NodeLabels]) -> Result<f64> {
    if labels.len() != net.num_layers() {
        return Err(Error::invalid(format!(
            "{} label vectors for {} layers",
            labels.len(),
            net.num_layers()
        )));
    }
    let mut acc = 0.0;
    for (l, lab) in labels.iter().enumerate() {
        acc += modularity_density(net.layer(l), lab)?;
    }
    Ok(acc / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct evaluation from scratch with hash-map counting; shares no
    /// code with the production path.
    fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
        use std::collections::HashMap;
        let n = a.len() as f64;
        let mut na: HashMap<usize, f64> = HashMap::new();
        let mut nb: HashMap<usize, f64> = HashMap::new();
        let mut nab: HashMap<(usize, usize), f64> = HashMap::new();
        for (&x, &y) in a.iter().zip(b) {
            *na.entry(x).or_default() += 1.0;
            *nb.entry(y).or_default() += 1.0;
            *nab.entry((x, y)).or_default() += 1.0;
        }
        if na.len() == 1 && nb.len() == 1 {
            return 1.0;
        }
        let num: f64 = nab
            .iter()
            .map(|(&(x, y), &c)| c * (c * n / (na[&x] * nb[&y])).ln())
            .sum();
        let den: f64 = na.values().map(|&c| c * (c / n).ln()).sum::<f64>()
            + nb.values().map(|&c| c * (c / n).ln()).sum::<f64>();
        -2.0 * num / den
    }

    fn qd_oracle(a: &DenseMatrix, labels: &[usize]) -> f64 {
        // Double loop over ordered pairs; in(c) counts each edge twice.
        let n = a.rows();
        let communities: std::collections::HashSet<usize> = labels.iter().copied().collect();
        let mut q = 0.0;
        for &c in &communities {
            let size = labels.iter().filter(|&&x| x == c).count() as f64;
            let mut twice_in = 0.0;
            let mut out = 0.0;
            for i in 0..n {
                if labels[i] != c {
                    continue;
                }
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    if labels[j] == c {
                        twice_in += a.get(i, j);
                    } else {
                        out += a.get(i, j);
                    }
                }
            }
            q += (twice_in - out) / size;
        }
        q
    }

    #[test]
    fn identical_partitions_score_one() {
        let a = NodeLabels(vec![0, 0, 1, 1, 2]);
        assert_eq!(nmi(&a, &a).unwrap(), 1.0);
        // Identity is invariant to relabeling.
        let b = NodeLabels(vec![7, 7, 3, 3, 9]);
        assert_eq!(nmi(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn crossing_partitions_score_zero() {
        let a = NodeLabels(vec![0, 0, 1, 1]);
        let b = NodeLabels(vec![0, 1, 0, 1]);
        assert_eq!(nmi(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn asymmetric_example_matches_brute_force() {
        let a = NodeLabels(vec![0, 0, 1, 1]);
        let b = NodeLabels(vec![0, 0, 0, 1]);
        let got = nmi(&a, &b).unwrap();
        let want = nmi_oracle(&a.0, &b.0);
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
        assert!(got > 0.0 && got < 1.0);
    }

    #[test]
    fn degenerate_single_cluster_cases() {
        let one = NodeLabels(vec![4, 4, 4]);
        let other = NodeLabels(vec![0, 0, 0]);
        assert_eq!(nmi(&one, &other).unwrap(), 1.0);
        let split = NodeLabels(vec![0, 1, 0]);
        assert_eq!(nmi(&one, &split).unwrap(), 0.0);
        assert_eq!(nmi(&split, &one).unwrap(), 0.0);
    }

    #[test]
    fn nmi_symmetry_permutation_invariance_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let n = rng.gen_range(1..25);
            let ka = rng.gen_range(1..6);
            let kb = rng.gen_range(1..6);
            let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..ka)).collect();
            let b: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kb)).collect();
            let la = NodeLabels(a.clone());
            let lb = NodeLabels(b.clone());
            let v = nmi(&la, &lb).unwrap();
            assert!((0.0..=1.0).contains(&v));
            let vt = nmi(&lb, &la).unwrap();
            assert!((v - vt).abs() <= 1e-12);
            // Relabel A by a fixed injection.
            let pa = NodeLabels(a.iter().map(|&x| 13 * x + 5).collect());
            assert!((nmi(&pa, &lb).unwrap() - v).abs() <= 1e-12);
            assert!((v - nmi_oracle(&a, &b)).abs() <= 1e-12);
        }
    }

    #[test]
    fn length_mismatch_errors() {
        let a = NodeLabels(vec![0, 1]);
        let b = NodeLabels(vec![0]);
        assert!(nmi(&a, &b).is_err());
    }

    fn two_triangles() -> DenseMatrix {
        let mut a = DenseMatrix::zeros(6, 6);
        for t in 0..2 {
            let base = 3 * t;
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        a.set(base + i, base + j, 1.0);
                    }
                }
            }
        }
        a
    }

    #[test]
    fn qd_on_two_triangles() {
        let a = two_triangles();
        let labels = NodeLabels(vec![0, 0, 0, 1, 1, 1]);
        // Each triangle: in = 3, out = 0, (2*3 - 0)/3 = 2.
        assert_eq!(modularity_density(&a, &labels).unwrap(), 4.0);
    }

    #[test]
    fn qd_whole_graph_single_community() {
        let a = two_triangles();
        let labels = NodeLabels(vec![0; 6]);
        // Boundary vanishes: 2 * e_total / n.
        let e_total = 6.0;
        assert_eq!(
            modularity_density(&a, &labels).unwrap(),
            2.0 * e_total / 6.0
        );
    }

    #[test]
    fn qd_matches_double_loop_oracle_and_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..100 {
            let n = rng.gen_range(2..15);
            let mut a = DenseMatrix::zeros(n, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen::<f64>() < 0.4 {
                        let w = rng.gen::<f64>();
                        a.set(i, j, w);
                        a.set(j, i, w);
                    }
                }
            }
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            let got = modularity_density(&a, &NodeLabels(labels.clone())).unwrap();
            let want = qd_oracle(&a, &labels);
            assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
            let relabeled: Vec<usize> = labels.iter().map(|&x| 3 * x + 11).collect();
            let got2 = modularity_density(&a, &NodeLabels(relabeled)).unwrap();
            assert!((got - got2).abs() <= 1e-12);
        }
    }

    #[test]
    fn qd_additive_over_disjoint_unions() {
        // Two triangles as one graph vs. each triangle alone.
        let a = two_triangles();
        let whole = modularity_density(&a, &NodeLabels(vec![0, 0, 0, 1, 1, 1])).unwrap();
        let mut tri = DenseMatrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    tri.set(i, j, 1.0);
                }
            }
        }
        let part = modularity_density(&tri, &NodeLabels(vec![0, 0, 0])).unwrap();
        assert!((whole - 2.0 * part).abs() <= 1e-12);
    }

    #[test]
    fn multiplex_wrapper_means_over_layers() {
        let a = NodeLabels(vec![0, 0, 1, 1]);
        let b = NodeLabels(vec![0, 1, 0, 1]);
        let truth = vec![a.clone()];
        let per_layer = multiplex_nmi(&[a.clone(), b.clone()], &truth, false).unwrap();
        assert!((per_layer - 0.5).abs() <= 1e-12);
        let pooled = multiplex_nmi(&[a.clone(), a.clone()], &truth, true).unwrap();
        assert_eq!(pooled, 1.0);
    }
}
