//! From converged factors to per-layer node labels.
//!
//! The shared membership `H` describes every common community, but a given
//! layer generally contains only a subset of them. [`common_presence`]
//! decides, per layer, which common communities are actually present by
//! scoring each one's edge density inside the layer; [`final_labels`] then
//! assigns every node either to its strongest present common community or
//! to its strongest private community.
//!
//! # Global community ids
//!
//! Common communities occupy ids `0..k_c - 1` identically in every layer
//! where they appear. Layer `l`'s private communities occupy the block
//! starting at `k_c + Σ_{m<l} k_p_m`, so private blocks never collide
//! across layers.

use crate::factorize::FactorSet;
use crate::model_order::ModelOrder;
use crate::multiplex::{MultiplexNetwork, NodeLabels};
use crate::numerics::DenseMatrix;
use crate::{Error, Result};

/// Guard added to the boundary-density denominator of the presence score.
const SCORE_EPS: f64 = 1e-12;

/// How the per-community presence score is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QjRule {
    /// Within-density over boundary-density; high scores mean present.
    #[default]
    Corrected,
    /// Legacy inverted ratio (boundary over within), selecting `k_p_l`
    /// columns instead of `k_l - k_p_l`.
    Legacy,
}

/// Presence information for one layer.
#[derive(Debug, Clone)]
pub struct LayerPresence {
    /// Columns of `H` judged present in this layer, in selection order
    /// (highest score first).
    pub present: Vec<usize>,
    /// Density score per common community (length `k_c`).
    pub q: Vec<f64>,
    /// Binarized provisional membership: `indicator[i][j] = 1` when node
    /// `i`'s strongest community over `[H | H_l]` is common community `j`.
    pub indicator: DenseMatrix,
}

/// Per-layer presence of the common communities.
#[derive(Debug, Clone)]
pub struct CommonPresence {
    pub per_layer: Vec<LayerPresence>,
}

impl CommonPresence {
    /// `k_c x L` boolean matrix: is common community `j` present in layer `l`?
    pub fn matrix(&self, k_c: usize) -> Vec<Vec<bool>> {
        (0..k_c)
            .map(|j| {
                self.per_layer
                    .iter()
                    .map(|lp| lp.present.contains(&j))
                    .collect()
            })
            .collect()
    }
}

/// Final per-layer labels in the global id scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPartition {
    pub per_layer: Vec<NodeLabels>,
    pub k_c: usize,
    pub k_p: Vec<usize>,
}

impl LabeledPartition {
    /// First global id of layer `l`'s private block.
    pub fn private_offset(&self, l: usize) -> usize {
        self.k_c + self.k_p[..l].iter().sum::<usize>()
    }
}

/// Row argmax over the horizontal concatenation `[H | H_l]`; ties break
/// toward the lowest column index.
fn provisional_argmax(h: &DenseMatrix, h_l: &DenseMatrix, i: usize) -> usize {
    let mut best = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for (j, &v) in h.row(i).iter().chain(h_l.row(i).iter()).enumerate() {
        if v > best_v {
            best_v = v;
            best = j;
        }
    }
    best
}

/// Decide which common communities are present in each layer.
///
/// Per layer: (1) each node's provisional community is its row argmax over
/// `[H | H_l]`; (2) each common community `j` is binarized from those
/// argmaxes; (3) community `j` is scored by its within-density over
/// boundary-density ratio on `A_l`, with ordered-pair normalizers
/// `m(m - 1)` within and `m(n - m)` across the boundary (communities with
/// at most one member score 0 — they cannot be dense); (4) the
/// `k_l - k_p_l` highest-scoring communities are selected as present.
pub fn common_presence(
    net: &MultiplexNetwork,
    f: &FactorSet,
    order: &ModelOrder,
    rule: QjRule,
) -> Result<CommonPresence> {
    order.validate_for(net)?;
    if f.num_layers() != net.num_layers() || f.h.rows() != net.n() {
        return Err(Error::invalid("factor set does not match network"));
    }
    let n = net.n();
    let k_c = f.k_c();
    let mut per_layer = Vec::with_capacity(net.num_layers());

    for l in 0..net.num_layers() {
        let a = net.layer(l);
        let idx: Vec<usize> = (0..n).map(|i| provisional_argmax(&f.h, &f.h_l[l], i)).collect();

        let mut indicator = DenseMatrix::zeros(n, k_c);
        for (i, &j) in idx.iter().enumerate() {
            if j < k_c {
                indicator.set(i, j, 1.0);
            }
        }

        let total: f64 = a.sum();
        let mut q = Vec::with_capacity(k_c);
        for j in 0..k_c {
            let members: Vec<usize> = (0..n).filter(|&i| idx[i] == j).collect();
            let m = members.len();
            if m <= 1 {
                q.push(0.0);
                continue;
            }
            let mut within = 0.0;
            for &v in &members {
                for &w in &members {
                    within += a.get(v, w);
                }
            }
            let within_density = within / (m * (m - 1)) as f64;
            let boundary_mass = total - within;
            let boundary_density = if m == n {
                0.0
            } else {
                boundary_mass / (m * (n - m)) as f64
            };
            q.push(match rule {
                QjRule::Corrected => within_density / (boundary_density + SCORE_EPS),
                QjRule::Legacy => boundary_density / (within_density + SCORE_EPS),
            });
        }

        let take = match rule {
            QjRule::Corrected => order.present_count(l),
            QjRule::Legacy => order.k_p[l].min(k_c),
        };
        let mut by_score: Vec<usize> = (0..k_c).collect();
        // Stable sort: ties keep the lower column index first.
        by_score.sort_by(|&x, &y| q[y].partial_cmp(&q[x]).expect("finite scores"));
        let present: Vec<usize> = by_score.into_iter().take(take).collect();

        per_layer.push(LayerPresence {
            present,
            q,
            indicator,
        });
    }
    Ok(CommonPresence { per_layer })
}

/// Assign each node to its strongest present common community or, when its
/// private membership is stronger, to its strongest private community
/// offset into the layer's global id block. Ties (including the all-zero
/// row) go to the private side; argmax ties break toward the lowest column
/// index.
pub fn final_labels(
    f: &FactorSet,
    presence: &CommonPresence,
    order: &ModelOrder,
) -> Result<LabeledPartition> {
    let layers = f.num_layers();
    if presence.per_layer.len() != layers || order.k_p.len() != layers {
        return Err(Error::invalid("presence/order do not match factor set"));
    }
    let n = f.h.rows();
    let k_c = f.k_c();
    let mut per_layer = Vec::with_capacity(layers);
    for l in 0..layers {
        let lp = &presence.per_layer[l];
        let offset = k_c + order.k_p[..l].iter().sum::<usize>();
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            // Strongest present common community, reading raw H.
            let mut best_common: Option<usize> = None;
            let mut best_common_v = f64::NEG_INFINITY;
            for &j in &lp.present {
                let v = f.h.get(i, j);
                if v > best_common_v {
                    best_common_v = v;
                    best_common = Some(j);
                }
            }
            // Strongest private community.
            let mut best_private = 0usize;
            let mut best_private_v = f64::NEG_INFINITY;
            for (j, &v) in f.h_l[l].row(i).iter().enumerate() {
                if v > best_private_v {
                    best_private_v = v;
                    best_private = j;
                }
            }
            let use_common = match best_common {
                Some(_) if f.k_p(l) == 0 => true,
                Some(_) => best_common_v > best_private_v,
                None => false,
            };
            if use_common {
                labels.push(best_common.expect("checked above"));
            } else if f.k_p(l) > 0 {
                labels.push(offset + best_private);
            } else {
                // No private columns and no present common community:
                // degenerate order, fall back to the first common id.
                labels.push(0);
            }
        }
        per_layer.push(NodeLabels(labels));
    }
    Ok(LabeledPartition {
        per_layer,
        k_c,
        k_p: order.k_p.clone(),
    })
}
