//! Synthetic multiplex benchmarks with planted common and private
//! communities, plus exact population (expected-value) block models for
//! recovery tests.
//!
//! The sampled generator plants a degree-homogeneous partition: every node
//! has expected degree `avg_degree`, of which a `1 - μ` fraction falls
//! inside its community and a `μ` fraction is spread uniformly over the
//! layer. `μ = 0` puts every edge within a community; `μ = 1` is an
//! Erdős–Rényi layer. Common communities live on a reserved pool of `n_c`
//! nodes shared by all layers; the inter-layer dependency `p₁` is the
//! probability that a pool node keeps its community in each layer where
//! that community is present (`p₁ = 1`: identical common partitions).

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::factorize::FactorSet;
use crate::multiplex::{MultiplexNetwork, NodeLabels};
use crate::numerics::{DenseMatrix, RandomStream};
use crate::{Error, Result};

const SALT_MEMBERSHIP: u64 = 0x4D45_4D42;
const SALT_EDGES: u64 = 0x4544_4745;

/// Parameters of one synthetic benchmark.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BenchmarkSpec {
    pub n: usize,
    pub num_layers: usize,
    /// Number of common communities.
    pub k_c: usize,
    /// `k_c x L`: which layers each common community occupies. Every row
    /// needs at least two `true` entries (a community in a single layer is
    /// private by definition).
    pub presence: Vec<Vec<bool>>,
    /// Nodes reserved for the common communities.
    pub n_c: usize,
    /// Private community count per layer.
    pub k_p: Vec<usize>,
    /// Community mixing in `[0, 1]`.
    pub mu: f64,
    /// Inter-layer dependency in `[0, 1]`.
    pub p1: f64,
    pub avg_degree: f64,
    pub seed: u64,
}

impl BenchmarkSpec {
    /// Presence matrix with every common community in every layer.
    pub fn full_presence(k_c: usize, layers: usize) -> Vec<Vec<bool>> {
        vec![vec![true; layers]; k_c]
    }

    /// Default pool size: splits the nodes so common and private
    /// communities come out about the same size.
    pub fn default_n_c(n: usize, k_c: usize, k_p: &[usize]) -> usize {
        if k_c == 0 {
            return 0;
        }
        let mean_kp = k_p.iter().sum::<usize>() as f64 / k_p.len().max(1) as f64;
        let frac = k_c as f64 / (k_c as f64 + mean_kp);
        ((n as f64 * frac).round() as usize).clamp(k_c, n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.n == 0 {
            return Err(Error::invalid("benchmark needs nodes and layers"));
        }
        if self.k_p.len() != self.num_layers {
            return Err(Error::invalid(format!(
                "k_p covers {} layers, expected {}",
                self.k_p.len(),
                self.num_layers
            )));
        }
        if self.presence.len() != self.k_c {
            return Err(Error::invalid(format!(
                "presence has {} rows, expected k_c = {}",
                self.presence.len(),
                self.k_c
            )));
        }
        for (c, row) in self.presence.iter().enumerate() {
            if row.len() != self.num_layers {
                return Err(Error::invalid(format!(
                    "presence row {c} covers {} layers, expected {}",
                    row.len(),
                    self.num_layers
                )));
            }
            if row.iter().filter(|&&p| p).count() < 2 {
                return Err(Error::invalid(format!(
                    "common community {c} must be present in at least two layers"
                )));
            }
        }
        if self.n_c > self.n {
            return Err(Error::invalid("n_c exceeds n"));
        }
        if self.k_c > 0 && self.n_c < self.k_c {
            return Err(Error::invalid("n_c too small to seat every common community"));
        }
        if self.k_c == 0 && self.n_c > 0 {
            return Err(Error::invalid("n_c > 0 with no common communities"));
        }
        if !(0.0..=1.0).contains(&self.mu) || !(0.0..=1.0).contains(&self.p1) {
            return Err(Error::invalid("mu and p1 must lie in [0, 1]"));
        }
        if self.avg_degree <= 0.0 || !self.avg_degree.is_finite() {
            return Err(Error::invalid("avg_degree must be positive"));
        }
        Ok(())
    }

    /// Global id of private community `j` in layer `l`.
    pub fn private_id(&self, l: usize, j: usize) -> usize {
        self.k_c + self.k_p[..l].iter().sum::<usize>() + j
    }
}

/// Planted per-layer labels in the global id scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub labels: Vec<NodeLabels>,
}

/// Split `items` into `chunks` near-equal groups, remainder to the first
/// groups. Items keep their (already shuffled) order.
fn balanced_chunks(items: &[usize], chunks: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); chunks];
    if chunks == 0 {
        return out;
    }
    let base = items.len() / chunks;
    let extra = items.len() % chunks;
    let mut pos = 0;
    for (g, group) in out.iter_mut().enumerate() {
        let take = base + usize::from(g < extra);
        group.extend_from_slice(&items[pos..pos + take]);
        pos += take;
    }
    out
}

/// Sample a benchmark network and its planted labels. Deterministic given
/// the stream; per-layer edge sampling runs in parallel on derived streams.
pub fn generate(
    spec: &BenchmarkSpec,
    stream: &RandomStream,
) -> Result<(MultiplexNetwork, GroundTruth)> {
    spec.validate()?;
    let n = spec.n;
    let layers = spec.num_layers;
    let mut rng = stream.child(SALT_MEMBERSHIP).rng();

    // Reserve a random pool of n_c nodes and split it into the common
    // communities (remainder seats go to the first communities).
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(&mut rng);
    let pool = &nodes[..spec.n_c];
    let common_groups = balanced_chunks(pool, spec.k_c);
    let mut base_common = vec![usize::MAX; n];
    for (c, group) in common_groups.iter().enumerate() {
        for &i in group {
            base_common[i] = c;
        }
    }

    let mut truth = Vec::with_capacity(layers);
    for l in 0..layers {
        let present: Vec<usize> = (0..spec.k_c).filter(|&c| spec.presence[c][l]).collect();
        let mut labels = vec![usize::MAX; n];
        let mut leftover: Vec<usize> = Vec::new();
        for i in 0..n {
            let c = base_common[i];
            if c == usize::MAX {
                leftover.push(i);
                continue;
            }
            if !spec.presence[c][l] {
                // This community does not exist here; the node joins the
                // layer's private population.
                leftover.push(i);
                continue;
            }
            if rng.gen::<f64>() < spec.p1 {
                labels[i] = c;
            } else {
                // Reassign uniformly among the layer's communities,
                // common or private.
                let total = present.len() + spec.k_p[l];
                let t = rng.gen_range(0..total);
                if t < present.len() {
                    labels[i] = present[t];
                } else {
                    labels[i] = spec.private_id(l, t - present.len());
                }
            }
        }
        if spec.k_p[l] == 0 {
            if !leftover.is_empty() {
                return Err(Error::Infeasible(format!(
                    "layer {l} has {} nodes outside common communities but no private communities",
                    leftover.len()
                )));
            }
        } else {
            leftover.shuffle(&mut rng);
            for (j, group) in balanced_chunks(&leftover, spec.k_p[l]).iter().enumerate() {
                for &i in group {
                    labels[i] = spec.private_id(l, j);
                }
            }
        }
        truth.push(NodeLabels(labels));
    }

    // Independent Bernoulli edges. Expected degree avg_degree splits as
    // (1 - mu) within the community and mu uniformly over the layer.
    let uniform_p = spec.mu * spec.avg_degree / (n - 1).max(1) as f64;
    if uniform_p > 1.0 + 1e-12 {
        return Err(Error::Infeasible(
            "uniform edge probability exceeds 1; lower avg_degree".into(),
        ));
    }
    let adjacencies: Vec<DenseMatrix> = (0..layers)
        .into_par_iter()
        .map(|l| -> Result<DenseMatrix> {
            let labels = &truth[l].0;
            let mut sizes = std::collections::HashMap::new();
            for &c in labels {
                *sizes.entry(c).or_insert(0usize) += 1;
            }
            for (&c, &s) in &sizes {
                if s >= 2 {
                    let p_in = (1.0 - spec.mu) * spec.avg_degree / (s - 1) as f64 + uniform_p;
                    if p_in > 1.0 + 1e-12 {
                        return Err(Error::Infeasible(format!(
                            "within-community probability {p_in:.3} > 1 for community {c} \
                             (size {s}) in layer {l}; lower avg_degree"
                        )));
                    }
                }
            }
            let mut layer_rng = stream.child(SALT_EDGES).child(l as u64).rng();
            let mut a = DenseMatrix::zeros(n, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    let p = if labels[i] == labels[j] {
                        let s = sizes[&labels[i]];
                        if s >= 2 {
                            ((1.0 - spec.mu) * spec.avg_degree / (s - 1) as f64 + uniform_p)
                                .min(1.0)
                        } else {
                            uniform_p
                        }
                    } else {
                        uniform_p
                    };
                    if layer_rng.gen::<f64>() < p {
                        a.set(i, j, 1.0);
                        a.set(j, i, 1.0);
                    }
                }
            }
            Ok(a)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok((
        MultiplexNetwork::from_layers(adjacencies)?,
        GroundTruth { labels: truth },
    ))
}

/// Exact block model: per layer, `E(A_l) = Z_l Θ_l Z_lᵀ` with
/// `Z_l = [Z_c | Z_{p_l}]` one-hot and `Θ_l = blkdiag(Θ_c_l, Θ_p_l)`.
/// The common membership block `Z_c` is shared by every layer, which is
/// what lets a single `H` reproduce all layers exactly.
#[derive(Debug, Clone)]
pub struct PopulationSbm {
    /// `n x k_c`, one-hot on the common pool, zero rows elsewhere.
    pub z_c: DenseMatrix,
    /// Per layer `n x k_p_l`, one-hot on that layer's private nodes.
    pub z_p: Vec<DenseMatrix>,
    /// Per layer `k_c x k_c` symmetric affinities in `[0, 1]`.
    pub theta_c: Vec<DenseMatrix>,
    /// Per layer `k_p_l x k_p_l` symmetric affinities in `[0, 1]`.
    pub theta_p: Vec<DenseMatrix>,
}

impl PopulationSbm {
    pub fn num_layers(&self) -> usize {
        self.z_p.len()
    }

    pub fn n(&self) -> usize {
        self.z_c.rows()
    }

    fn column_sums(m: &DenseMatrix) -> Vec<f64> {
        let mut s = vec![0.0; m.cols()];
        for i in 0..m.rows() {
            for (j, acc) in s.iter_mut().enumerate() {
                *acc += m.get(i, j);
            }
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let layers = self.num_layers();
        if self.theta_c.len() != layers || self.theta_p.len() != layers {
            return Err(Error::invalid("per-layer fields disagree on layer count"));
        }
        for l in 0..layers {
            if self.z_p[l].rows() != n {
                return Err(Error::invalid("membership row counts differ"));
            }
            for i in 0..n {
                let ones = self.z_c.row(i).iter().chain(self.z_p[l].row(i)).filter(|&&v| v == 1.0).count();
                let zeros = self.z_c.row(i).iter().chain(self.z_p[l].row(i)).filter(|&&v| v == 0.0).count();
                if ones != 1 || ones + zeros != self.z_c.cols() + self.z_p[l].cols() {
                    return Err(Error::invalid(format!(
                        "membership row {i} of layer {l} is not one-hot"
                    )));
                }
            }
            for theta in [&self.theta_c[l], &self.theta_p[l]] {
                if theta.max_asymmetry() > 1e-12 {
                    return Err(Error::invalid("affinity matrix not symmetric"));
                }
                if theta.as_slice().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                    return Err(Error::invalid("affinity entries must lie in [0, 1]"));
                }
            }
            let sums = Self::column_sums(&self.z_p[l]);
            if sums.iter().any(|&s| s == 0.0) {
                return Err(Error::invalid("empty private community"));
            }
        }
        if Self::column_sums(&self.z_c).iter().any(|&s| s == 0.0) {
            return Err(Error::invalid("empty common community"));
        }
        Ok(())
    }

    /// Expectation adjacencies, diagonal included: the zero-residual
    /// identity at the analytic factors needs the exact expectation.
    pub fn population_adjacency(&self) -> Result<MultiplexNetwork> {
        let layers = (0..self.num_layers())
            .map(|l| -> Result<DenseMatrix> {
                let mut e = DenseMatrix::zeros(self.n(), self.n());
                if self.z_c.cols() > 0 {
                    let zt = self.z_c.matmul(&self.theta_c[l])?;
                    e.add_assign(&zt.matmul_nt(&self.z_c)?)?;
                }
                if self.z_p[l].cols() > 0 {
                    let zt = self.z_p[l].matmul(&self.theta_p[l])?;
                    e.add_assign(&zt.matmul_nt(&self.z_p[l])?)?;
                }
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        MultiplexNetwork::from_expectation_layers(layers)
    }

    /// The closed-form factors that reproduce the expectation exactly:
    /// memberships `Z (ZᵀZ)^{-1/2}` (orthonormal columns) and affinities
    /// `(ZᵀZ)^{1/2} Θ (ZᵀZ)^{1/2}`, split into the common/private blocks.
    pub fn analytic_factors(&self) -> Result<FactorSet> {
        let sizes_c = Self::column_sums(&self.z_c);
        let mut h = self.z_c.clone();
        for i in 0..h.rows() {
            for j in 0..h.cols() {
                if h.get(i, j) != 0.0 {
                    h.set(i, j, 1.0 / sizes_c[j].sqrt());
                }
            }
        }
        let scale_sym = |theta: &DenseMatrix, sizes: &[f64]| -> DenseMatrix {
            let mut out = theta.clone();
            for i in 0..out.rows() {
                for j in 0..out.cols() {
                    out.set(i, j, theta.get(i, j) * (sizes[i] * sizes[j]).sqrt());
                }
            }
            out
        };
        let mut h_l = Vec::new();
        let mut s_l = Vec::new();
        let mut g_l = Vec::new();
        for l in 0..self.num_layers() {
            let sizes_p = Self::column_sums(&self.z_p[l]);
            let mut hp = self.z_p[l].clone();
            for i in 0..hp.rows() {
                for j in 0..hp.cols() {
                    if hp.get(i, j) != 0.0 {
                        hp.set(i, j, 1.0 / sizes_p[j].sqrt());
                    }
                }
            }
            h_l.push(hp);
            s_l.push(scale_sym(&self.theta_c[l], &sizes_c));
            g_l.push(scale_sym(&self.theta_p[l], &sizes_p));
        }
        Ok(FactorSet { h, h_l, s_l, g_l })
    }

    /// Random instance: a shared common pool split into `k_c` communities,
    /// per-layer private partitions of the remaining nodes, assortative
    /// affinities (strong diagonal, weak off-diagonal).
    pub fn random(stream: &RandomStream, n: usize, k_c: usize, k_p: &[usize]) -> Result<Self> {
        let layers = k_p.len();
        if layers == 0 {
            return Err(Error::Empty("population model needs at least one layer"));
        }
        let mut rng = stream.rng();
        let max_kp = k_p.iter().copied().max().unwrap_or(0);
        let pool_size = if k_c == 0 {
            0
        } else if max_kp == 0 {
            n
        } else {
            // Roughly proportional seat share, at least 2 nodes per community.
            let frac = k_c as f64 / (k_c + max_kp) as f64;
            ((n as f64 * frac).round() as usize).clamp(2 * k_c, n.saturating_sub(2 * max_kp))
        };
        if k_c > 0 && pool_size < 2 * k_c {
            return Err(Error::invalid("too few nodes for the requested communities"));
        }
        let mut nodes: Vec<usize> = (0..n).collect();
        nodes.shuffle(&mut rng);
        let (pool, rest) = nodes.split_at(pool_size);

        let mut z_c = DenseMatrix::zeros(n, k_c);
        for (c, group) in balanced_chunks(pool, k_c).iter().enumerate() {
            for &i in group {
                z_c.set(i, c, 1.0);
            }
        }

        let mut z_p = Vec::with_capacity(layers);
        let mut theta_c = Vec::with_capacity(layers);
        let mut theta_p = Vec::with_capacity(layers);
        for &kp in k_p {
            if kp == 0 && !rest.is_empty() {
                return Err(Error::invalid(
                    "layer without private communities but with non-pool nodes",
                ));
            }
            let mut shuffled = rest.to_vec();
            shuffled.shuffle(&mut rng);
            let mut zp = DenseMatrix::zeros(n, kp);
            for (j, group) in balanced_chunks(&shuffled, kp).iter().enumerate() {
                for &i in group {
                    zp.set(i, j, 1.0);
                }
            }
            z_p.push(zp);
            let mut assortative = |k: usize| -> DenseMatrix {
                let mut t = DenseMatrix::zeros(k, k);
                for i in 0..k {
                    for j in i..k {
                        let v = if i == j {
                            0.4 + 0.5 * rng.gen::<f64>()
                        } else {
                            0.15 * rng.gen::<f64>()
                        };
                        t.set(i, j, v);
                        t.set(j, i, v);
                    }
                }
                t
            };
            theta_c.push(assortative(k_c));
            theta_p.push(assortative(kp));
        }
        let sbm = PopulationSbm {
            z_c,
            z_p,
            theta_c,
            theta_p,
        };
        sbm.validate()?;
        Ok(sbm)
    }
}
