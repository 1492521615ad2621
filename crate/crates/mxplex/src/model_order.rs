//! Model-order estimation: how many communities each layer has, how many of
//! them are common across layers, and how many are private.
//!
//! The estimate runs in two stages:
//!
//! 1. **Per-layer count `k_l`** from a null-calibrated spectral gap. For
//!    each layer, Erdős–Rényi graphs matched to the layer's edge density
//!    calibrate a threshold `δ` (the 0.95 quantile of the largest
//!    consecutive gap in the normalized-Laplacian spectrum, ignoring the
//!    trivial gap next to the zero eigenvalue). Walking the layer's own
//!    spectrum from the small end, `k_l` is the first position whose gap
//!    exceeds `δ`.
//!
//! 2. **Common count `k_c`** from agglomerative clustering. Each layer is
//!    embedded by a single-layer tri-factorization; the per-community
//!    profile rows of all layers are stacked and clustered
//!    agglomeratively under Euclidean distance. Profiles of a community
//!    shared by several layers are near-duplicates, so they merge at
//!    near-zero distances; the scan cuts the merge sequence at the first
//!    50% relative jump and counts the leaf-leaf merges below it.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::factorize::{single_layer_onmtf, FitOptions};
use crate::multiplex::{normalized_laplacian, MultiplexNetwork};
use crate::numerics::{quantile, sym_eig, DenseMatrix, RandomStream};
use crate::{Error, Result};

/// Community counts for a multiplex network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelOrder {
    /// Total community count per layer.
    pub k_l: Vec<usize>,
    /// Number of common communities.
    pub k_c: usize,
    /// Private community count per layer.
    pub k_p: Vec<usize>,
    /// Dendrogram stop index when estimated from a linkage, else `None`.
    pub cut: Option<usize>,
}

impl ModelOrder {
    /// Order with every common community assumed present in every layer,
    /// so `k_l = k_c + k_p[l]`.
    pub fn new(k_c: usize, k_p: Vec<usize>) -> Self {
        let k_l = k_p.iter().map(|&kp| k_c + kp).collect();
        ModelOrder {
            k_l,
            k_c,
            k_p,
            cut: None,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.k_p.len()
    }

    /// How many common communities are present in layer `l`
    /// (`k_l - k_p`, clamped into `[0, k_c]`).
    pub fn present_count(&self, l: usize) -> usize {
        self.k_l[l].saturating_sub(self.k_p[l]).min(self.k_c)
    }

    pub fn validate_for(&self, net: &MultiplexNetwork) -> Result<()> {
        let layers = net.num_layers();
        if self.k_p.len() != layers || self.k_l.len() != layers {
            return Err(Error::invalid(format!(
                "model order covers {} layers, network has {layers}",
                self.k_p.len()
            )));
        }
        for l in 0..layers {
            if self.k_c + self.k_p[l] == 0 {
                return Err(Error::invalid(format!(
                    "layer {l} has neither common nor private communities"
                )));
            }
            if self.k_l[l] < self.k_p[l] || self.k_l[l] == 0 {
                return Err(Error::invalid(format!(
                    "layer {l}: k_l = {} inconsistent with k_p = {}",
                    self.k_l[l], self.k_p[l]
                )));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for ModelOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let fmt_vec = |v: &[usize]| {
            let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            format!("[{}]", items.join(","))
        };
        write!(
            f,
            "k_l={} k_c={} k_p={} cut={}",
            fmt_vec(&self.k_l),
            self.k_c,
            fmt_vec(&self.k_p),
            self.cut.map_or_else(|| "-".to_string(), |c| c.to_string())
        )
    }
}

/// One merge step of an agglomerative clustering.
///
/// Ids follow the stepwise-dendrogram convention: leaves are `1..=m`, the
/// cluster formed at step `i` (1-based) gets id `m + i`. `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeStep {
    pub a: usize,
    pub b: usize,
    pub dist: f64,
}

/// Merge table of an agglomerative clustering over `m` leaves
/// (`m - 1` rows).
#[derive(Debug, Clone, PartialEq)]
pub struct Linkage {
    pub merges: Vec<MergeStep>,
}

impl Linkage {
    pub fn num_leaves(&self) -> usize {
        self.merges.len() + 1
    }
}

/// Linkage criterion for the distance between merged clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinkageMethod {
    /// Nearest-neighbor update; merge distances are monotone
    /// non-decreasing, which the cut scan relies on.
    #[default]
    Single,
    Average,
    Complete,
}

/// Which dendrogram cut rule to apply in [`count_common`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CutRule {
    /// Scan while relative jumps stay below 50%, cut at the first jump,
    /// count leaf-leaf merges below the cut.
    #[default]
    Prose,
    /// Legacy variant with the comparison inverted: count leaf-leaf merges
    /// *at* super-50% jumps and stop at the first sub-50% step.
    Literal,
}

/// Erdős–Rényi adjacency `G(n, p)`, drawing pairs `(i, j)` with `i < j` in
/// row-major order — one uniform draw per pair. Callers that replay a
/// stream rely on this exact order.
pub fn er_adjacency_with(rng: &mut ChaCha8Rng, n: usize, density: f64) -> DenseMatrix {
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < density {
                a.set(i, j, 1.0);
                a.set(j, i, 1.0);
            }
        }
    }
    a
}

fn spectrum_abs_ascending(a: &DenseMatrix) -> Result<Vec<f64>> {
    let l = normalized_laplacian(a)?;
    Ok(sym_eig(&l)?.abs_ascending())
}

/// Largest consecutive spectral gap, skipping the first position (the gap
/// next to the trivial zero eigenvalue, which is large even without any
/// community structure).
fn max_gap_skipping_first(ascending: &[f64]) -> f64 {
    let mut g = 0.0_f64;
    for p in 2..ascending.len() {
        g = g.max(ascending[p] - ascending[p - 1]);
    }
    g
}

/// Null-model gap threshold: generate `trials` Erdős–Rényi graphs
/// `G(n, density)`, record each normalized-Laplacian spectrum's largest
/// consecutive gap beyond the first position, and return the 0.95 quantile.
pub fn null_threshold(
    n: usize,
    density: f64,
    stream: &RandomStream,
    trials: usize,
) -> Result<f64> {
    if n < 3 {
        return Err(Error::invalid(format!("null model needs n >= 3, got {n}")));
    }
    if !(0.0 < density && density < 1.0) {
        return Err(Error::invalid(format!(
            "null density must lie strictly in (0, 1), got {density}"
        )));
    }
    let mut rng = stream.rng();
    let mut maxima = Vec::with_capacity(trials);
    for _ in 0..trials {
        let a = er_adjacency_with(&mut rng, n, density);
        maxima.push(max_gap_skipping_first(&spectrum_abs_ascending(&a)?));
    }
    quantile(&maxima, 0.95)
}

/// Community count of one layer from its null-calibrated spectral gap:
/// the first position `k >= 2` (in the `|λ|`-ascending normalized-Laplacian
/// spectrum) whose consecutive gap exceeds `δ`; `1` when no such gap exists
/// (the layer is indistinguishable from the null, one community).
pub fn estimate_k_layer(a: &DenseMatrix, delta: f64) -> Result<usize> {
    if delta < 0.0 {
        return Err(Error::invalid(format!("negative gap threshold {delta}")));
    }
    let asc = spectrum_abs_ascending(a)?;
    let n = asc.len();
    for p in 2..n {
        if asc[p] - asc[p - 1] > delta {
            return Ok(p);
        }
    }
    Ok(1)
}

/// Stack per-layer embeddings into an `m x n` matrix, `m = Σ k_l`: row
/// `offset_l + j` is layer `l`'s community-`j` profile over the nodes.
///
/// Every layer's factorization starts from the *same* stream, so identical
/// layers embed identically. With `normalize_rows`, each nonzero row is
/// scaled to unit Euclidean norm so that the same community appearing in
/// layers of different density still collides under Euclidean distance.
pub fn embed_layers(
    net: &MultiplexNetwork,
    k_l: &[usize],
    stream: &RandomStream,
    opts: &FitOptions,
    normalize_rows: bool,
) -> Result<DenseMatrix> {
    if k_l.len() != net.num_layers() {
        return Err(Error::invalid(format!(
            "k_l covers {} layers, network has {}",
            k_l.len(),
            net.num_layers()
        )));
    }
    let fits: Vec<_> = (0..net.num_layers())
        .into_par_iter()
        .map(|l| single_layer_onmtf(net.layer(l), k_l[l], *stream, opts))
        .collect::<Result<Vec<_>>>()?;

    let m: usize = k_l.iter().sum();
    let n = net.n();
    let mut x = DenseMatrix::zeros(m, n);
    let mut row = 0usize;
    for fit in &fits {
        for j in 0..fit.u.cols() {
            for i in 0..n {
                x.set(row, i, fit.u.get(i, j));
            }
            if normalize_rows {
                let norm: f64 = x.row(row).iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for v in x.row_mut(row) {
                        *v /= norm;
                    }
                }
            }
            row += 1;
        }
    }
    Ok(x)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Agglomerative clustering of the rows of `x` under Euclidean distance.
///
/// Ties on the minimum distance break toward the earliest-created cluster
/// pair, so the table is deterministic.
pub fn linkage(x: &DenseMatrix, method: LinkageMethod) -> Result<Linkage> {
    let m = x.rows();
    if m < 2 {
        return Err(Error::invalid("linkage needs at least two rows"));
    }
    // Slot i holds the cluster created i-th (slots 0..m are the leaves).
    let mut dist = vec![0.0_f64; m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            let d = euclidean(x.row(i), x.row(j));
            dist[i * m + j] = d;
            dist[j * m + i] = d;
        }
    }
    let mut active = vec![true; m];
    let mut ids: Vec<usize> = (1..=m).collect();
    let mut sizes = vec![1usize; m];
    let mut merges = Vec::with_capacity(m - 1);

    for step in 1..m {
        let mut best = (usize::MAX, usize::MAX);
        let mut best_d = f64::INFINITY;
        for i in 0..m {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..m {
                if active[j] && dist[i * m + j] < best_d {
                    best_d = dist[i * m + j];
                    best = (i, j);
                }
            }
        }
        let (i, j) = best;
        merges.push(MergeStep {
            a: ids[i].min(ids[j]),
            b: ids[i].max(ids[j]),
            dist: best_d,
        });
        for k in 0..m {
            if k == i || k == j || !active[k] {
                continue;
            }
            let dik = dist[i * m + k];
            let djk = dist[j * m + k];
            let merged = match method {
                LinkageMethod::Single => dik.min(djk),
                LinkageMethod::Complete => dik.max(djk),
                LinkageMethod::Average => {
                    (sizes[i] as f64 * dik + sizes[j] as f64 * djk)
                        / (sizes[i] + sizes[j]) as f64
                }
            };
            dist[i * m + k] = merged;
            dist[k * m + i] = merged;
        }
        active[j] = false;
        ids[i] = m + step;
        sizes[i] += sizes[j];
    }
    Ok(Linkage { merges })
}

/// Read `k_c` and per-layer private counts off a merge table.
///
/// The scan walks rows `i = 2..=m-2` computing the relative step
/// `d_i = (F(i) - F(i-1)) / F(i-1)` (taken as 0 when the previous distance
/// is 0: repeated zero-distance merges are identical common communities).
/// Under the default rule the cut lands on the first `d_i >= 0.5`; rows
/// strictly below the cut are the near-duplicate region, provided the scan
/// certified at least one small step (a jump at `i = 2` means even the
/// first merge was not a duplicate). Each leaf-leaf merge in that region
/// contributes one common community; leaves in the region falling in layer
/// `l`'s id range are subtracted from `k_l` to give `k_p_l`.
pub fn count_common(f: &Linkage, k_l: &[usize], rule: CutRule) -> Result<ModelOrder> {
    let m: usize = k_l.iter().sum();
    if m < 4 {
        return Err(Error::invalid(format!(
            "dendrogram scan needs at least 4 stacked communities, got {m}"
        )));
    }
    if f.merges.len() != m - 1 {
        return Err(Error::invalid(format!(
            "linkage has {} merges, expected {} for {} leaves",
            f.merges.len(),
            m - 1,
            m
        )));
    }
    let rel_step = |i: usize| -> f64 {
        // 1-based row i >= 2.
        let prev = f.merges[i - 2].dist;
        let cur = f.merges[i - 1].dist;
        if prev == 0.0 {
            0.0
        } else {
            (cur - prev) / prev
        }
    };

    let (cut, counted_rows): (usize, std::ops::Range<usize>) = match rule {
        CutRule::Prose => {
            let mut cut = m - 1;
            let mut jumped = false;
            for i in 2..=(m - 2) {
                if rel_step(i) >= 0.5 {
                    cut = i;
                    jumped = true;
                    break;
                }
            }
            // Rows 1..cut-1 (1-based) lie below the cut; a jump at the very
            // first scanned row leaves nothing certified as near-zero.
            if jumped && cut == 2 {
                (cut, 0..0)
            } else {
                (cut, 0..cut - 1)
            }
        }
        CutRule::Literal => {
            let mut cut = m - 2;
            let mut k_c = 0usize;
            for i in 2..=(m - 2) {
                if rel_step(i) >= 0.5 {
                    let row = &f.merges[i - 1];
                    if row.a.max(row.b) <= m {
                        k_c += 1;
                    }
                } else {
                    cut = i;
                    break;
                }
            }
            // The literal rule counts during the scan; reuse the common
            // leaf-collection below for k_p and return early for k_c.
            let mut order = collect_private(f, k_l, m, 0..cut);
            order.k_c = k_c;
            order.cut = Some(cut);
            return Ok(order);
        }
    };

    let mut k_c = 0usize;
    for row in &f.merges[counted_rows.clone()] {
        if row.a.max(row.b) <= m {
            k_c += 1;
        }
    }
    let mut order = collect_private(f, k_l, m, counted_rows);
    order.k_c = k_c;
    order.cut = Some(cut);
    Ok(order)
}

/// Count, per layer, the leaves consumed by the given merge rows and derive
/// `k_p_l = k_l - |C_l|`.
fn collect_private(
    f: &Linkage,
    k_l: &[usize],
    m: usize,
    rows: std::ops::Range<usize>,
) -> ModelOrder {
    // Layer l owns leaf ids (1-based) in (offset_l, offset_l + k_l[l]].
    let mut offsets = Vec::with_capacity(k_l.len() + 1);
    let mut acc = 0usize;
    offsets.push(0);
    for &k in k_l {
        acc += k;
        offsets.push(acc);
    }
    let layer_of = |leaf: usize| -> usize {
        debug_assert!(leaf >= 1 && leaf <= m);
        offsets.partition_point(|&o| o < leaf) - 1
    };
    let mut consumed = vec![0usize; k_l.len()];
    for row in &f.merges[rows] {
        for id in [row.a, row.b] {
            if id <= m {
                consumed[layer_of(id)] += 1;
            }
        }
    }
    let k_p: Vec<usize> = k_l
        .iter()
        .zip(&consumed)
        .map(|(&k, &c)| k.saturating_sub(c))
        .collect();
    ModelOrder {
        k_l: k_l.to_vec(),
        k_c: 0,
        k_p,
        cut: None,
    }
}

/// Options for the full model-order estimate.
#[derive(Debug, Clone)]
pub struct EstimateOptions {
    /// Erdős–Rényi trials per layer for the null threshold.
    pub trials: usize,
    pub method: LinkageMethod,
    pub cut_rule: CutRule,
    /// Scale embedding rows to unit norm before clustering.
    pub normalize_rows: bool,
    pub fit: FitOptions,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            trials: 50,
            method: LinkageMethod::Single,
            cut_rule: CutRule::Prose,
            normalize_rows: true,
            fit: FitOptions::default(),
        }
    }
}

const SALT_NULL: u64 = 0x4E55_4C4C;
const SALT_EMBED: u64 = 0x454D_4244;

/// Full model-order pipeline: per-layer `k_l` via the null-calibrated gap
/// (the null density is matched per layer to that layer's edge density),
/// embedding, linkage, and the dendrogram cut.
///
/// With fewer than four stacked communities the merge scan is undefined;
/// the estimate then reports every community as private.
pub fn estimate_model_order(
    net: &MultiplexNetwork,
    stream: &RandomStream,
    opts: &EstimateOptions,
) -> Result<ModelOrder> {
    let n = net.n();
    let pairs = (n * n.saturating_sub(1) / 2).max(1) as f64;
    let k_l: Vec<usize> = (0..net.num_layers())
        .into_par_iter()
        .map(|l| {
            let density = net.edge_density(l).clamp(1.0 / pairs, 1.0 - 1.0 / pairs);
            let delta = null_threshold(n, density, &stream.child(SALT_NULL).child(l as u64), opts.trials)?;
            estimate_k_layer(net.layer(l), delta)
        })
        .collect::<Result<Vec<_>>>()?;

    let m: usize = k_l.iter().sum();
    if m < 4 {
        return Ok(ModelOrder {
            k_c: 0,
            k_p: k_l.clone(),
            k_l,
            cut: None,
        });
    }
    let x = embed_layers(net, &k_l, &stream.child(SALT_EMBED), &opts.fit, opts.normalize_rows)?;
    let f = linkage(&x, opts.method)?;
    count_common(&f, &k_l, opts.cut_rule)
}
