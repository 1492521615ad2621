//! Joint tri-factorization of a multiplex network with multiplicative
//! updates.
//!
//! Each layer is modeled as `A_l ≈ H S_l Hᵀ + H_l G_l H_lᵀ` with all factors
//! nonnegative: `H` carries common-community membership shared by every
//! layer, `H_l` the layer's private memberships, and `S_l`, `G_l` are small
//! symmetric affinity matrices. Fitting minimizes
//!
//! ```text
//!     Σ_l ‖A_l − H S_l Hᵀ − H_l G_l H_lᵀ‖²_F
//! ```
//!
//! by cycling multiplicative updates over `H`, then every `H_l`, `S_l`,
//! `G_l` (each update uses the freshest values). Every update multiplies
//! the factor elementwise by a ratio of nonnegative gradient parts, so
//! nonnegativity is preserved exactly.
//!
//! The affinity updates (`S_l`, `G_l`) solve convex quadratic subproblems
//! and never increase the objective. The membership updates (`H`, `H_l`)
//! are derived under the orthogonality conditions: their ratio mixes the
//! residual gradient with a constraint-restoring correction, and while the
//! factors are still far from the constraint surface the objective can
//! transiently rise before the characteristic steep descent. Damping those
//! steps to force per-step monotonicity empirically traps the iteration in
//! merged-community fixed points, so the updates are applied exactly as
//! derived and convergence is judged on the objective plateau.
//!
//! Orthogonality of the membership matrices is not enforced per iteration;
//! the updates drive factors toward the constraint surface and
//! [`FactorSet::orthogonality_diagnostic`] reports the residual.

use std::collections::HashSet;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assign::{common_presence, final_labels, CommonPresence, LabeledPartition, QjRule};
use crate::metrics::{mean_modularity_density, multiplex_nmi};
use crate::model_order::ModelOrder;
use crate::multiplex::{MultiplexNetwork, NodeLabels};
use crate::numerics::{rand_matrix_with, DenseMatrix, RandomStream};
use crate::{Error, Result};

/// Stopping control shared by the multiplex fit and single-layer runs.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Hard iteration cap.
    pub max_iters: usize,
    /// Relative objective-change threshold; `0.0` disables early stopping.
    pub tol: f64,
    /// Consecutive sub-`tol` steps required before stopping.
    pub tol_window: usize,
    /// Denominator guard added inside every elementwise division.
    pub eps: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 1000,
            tol: 1e-6,
            tol_window: 10,
            eps: 1e-12,
        }
    }
}

/// The fitted factors of one run.
#[derive(Debug, Clone)]
pub struct FactorSet {
    /// `n x k_c` common membership, shared across layers.
    pub h: DenseMatrix,
    /// Per-layer `n x k_p[l]` private membership.
    pub h_l: Vec<DenseMatrix>,
    /// Per-layer `k_c x k_c` symmetric common affinity.
    pub s_l: Vec<DenseMatrix>,
    /// Per-layer `k_p[l] x k_p[l]` symmetric private affinity.
    pub g_l: Vec<DenseMatrix>,
}

impl FactorSet {
    pub fn num_layers(&self) -> usize {
        self.h_l.len()
    }

    pub fn k_c(&self) -> usize {
        self.h.cols()
    }

    pub fn k_p(&self, l: usize) -> usize {
        self.h_l[l].cols()
    }

    fn check_against(&self, net: &MultiplexNetwork) -> Result<()> {
        let n = net.n();
        let l = net.num_layers();
        if self.h.rows() != n
            || self.h_l.len() != l
            || self.s_l.len() != l
            || self.g_l.len() != l
        {
            return Err(Error::invalid(format!(
                "factor set built for {} nodes / {} layers does not match network with {} / {}",
                self.h.rows(),
                self.h_l.len(),
                n,
                l
            )));
        }
        for i in 0..l {
            let kc = self.k_c();
            let kp = self.k_p(i);
            if self.h_l[i].rows() != n
                || self.s_l[i].rows() != kc
                || self.s_l[i].cols() != kc
                || self.g_l[i].rows() != kp
                || self.g_l[i].cols() != kp
            {
                return Err(Error::invalid(format!("inconsistent factor shapes at layer {i}")));
            }
        }
        Ok(())
    }

    /// `Σ_l ‖HᵀH − I‖_F + ‖H_lᵀH_l − I‖_F`, reported as a diagnostic for how
    /// close the memberships are to the orthogonality constraint surface.
    pub fn orthogonality_diagnostic(&self) -> f64 {
        fn dev(m: &DenseMatrix) -> f64 {
            if m.cols() == 0 {
                return 0.0;
            }
            let mut g = m.matmul_tn(m).expect("gram");
            let id = DenseMatrix::identity(m.cols());
            g.sub_assign(&id).expect("same shape");
            g.frobenius_norm()
        }
        dev(&self.h) + self.h_l.iter().map(dev).sum::<f64>()
    }
}

/// Outcome of one restart.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub factors: FactorSet,
    /// Objective value at initialization and after every sweep.
    pub objective_trace: Vec<f64>,
    pub iterations_used: usize,
    /// Stream index of the restart that produced this run.
    pub seed_index: u64,
}

/// Fresh factors with i.i.d. uniform entries in `[0.1, 1]`; `S_l` and `G_l`
/// are symmetrized. Deterministic per stream.
pub fn init_factors(
    stream: &RandomStream,
    n: usize,
    k_c: usize,
    k_p: &[usize],
) -> Result<FactorSet> {
    let mut rng = stream.rng();
    init_factors_with(&mut rng, n, k_c, k_p)
}

fn init_factors_with(
    rng: &mut ChaCha8Rng,
    n: usize,
    k_c: usize,
    k_p: &[usize],
) -> Result<FactorSet> {
    if k_p.iter().any(|&kp| k_c + kp == 0) {
        return Err(Error::invalid(
            "model order with neither common nor private communities in some layer",
        ));
    }
    const LO: f64 = 0.1;
    const HI: f64 = 1.0;
    let h = rand_matrix_with(rng, n, k_c, LO, HI)?;
    let mut h_l = Vec::with_capacity(k_p.len());
    for &kp in k_p {
        h_l.push(rand_matrix_with(rng, n, kp, LO, HI)?);
    }
    let mut s_l = Vec::with_capacity(k_p.len());
    for _ in k_p {
        let mut s = rand_matrix_with(rng, k_c, k_c, LO, HI)?;
        s.symmetrize();
        s_l.push(s);
    }
    let mut g_l = Vec::with_capacity(k_p.len());
    for &kp in k_p {
        let mut g = rand_matrix_with(rng, kp, kp, LO, HI)?;
        g.symmetrize();
        g_l.push(g);
    }
    Ok(FactorSet { h, h_l, s_l, g_l })
}

fn layer_residual_sq(
    a: &DenseMatrix,
    h: &DenseMatrix,
    s: &DenseMatrix,
    hl: &DenseMatrix,
    g: &DenseMatrix,
) -> Result<f64> {
    let mut r = a.clone();
    if h.cols() > 0 {
        r.sub_assign(&h.matmul(s)?.matmul_nt(h)?)?;
    }
    if hl.cols() > 0 {
        r.sub_assign(&hl.matmul(g)?.matmul_nt(hl)?)?;
    }
    Ok(r.as_slice().iter().map(|v| v * v).sum())
}

/// `Σ_l ‖A_l − H S_l Hᵀ − H_l G_l H_lᵀ‖²_F`.
pub fn objective(net: &MultiplexNetwork, f: &FactorSet) -> Result<f64> {
    f.check_against(net)?;
    let mut total = 0.0;
    for l in 0..net.num_layers() {
        total += layer_residual_sq(net.layer(l), &f.h, &f.s_l[l], &f.h_l[l], &f.g_l[l])?;
    }
    Ok(total)
}

fn mul_update(base: &DenseMatrix, num: &DenseMatrix, den: &DenseMatrix, eps: f64) -> DenseMatrix {
    let mut out = base.clone();
    for ((o, n), d) in out
        .as_mut_slice()
        .iter_mut()
        .zip(num.as_slice())
        .zip(den.as_slice())
    {
        *o *= n / (d + eps);
    }
    out
}

fn ensure_finite(m: &DenseMatrix, context: &str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
        })
    }
}

/// Multiplicative update for the shared membership `H`:
///
/// ```text
/// H ← H ⊙ Σ_l(A_l H S_l + H Hᵀ H_l G_lᵀ H_lᵀ H S_l)
///       ⊘ Σ_l(H_l G_lᵀ H_lᵀ H S_l + H Hᵀ A_l H S_l) + ε
/// ```
pub fn update_h(net: &MultiplexNetwork, f: &FactorSet, eps: f64) -> Result<DenseMatrix> {
    f.check_against(net)?;
    let kc = f.k_c();
    let n = net.n();
    if kc == 0 {
        return Ok(f.h.clone());
    }
    let mut num = DenseMatrix::zeros(n, kc);
    let mut den = DenseMatrix::zeros(n, kc);
    for l in 0..net.num_layers() {
        let hs = f.h.matmul(&f.s_l[l])?;
        let p = net.layer(l).matmul(&hs)?; // A_l H S_l
        let y = if f.k_p(l) > 0 {
            // H_l G_lᵀ H_lᵀ H S_l, innermost products first.
            let c = f.h_l[l].matmul_tn(&f.h)?; // H_lᵀ H
            let cs = c.matmul(&f.s_l[l])?;
            let gcs = f.g_l[l].transpose().matmul(&cs)?;
            f.h_l[l].matmul(&gcs)?
        } else {
            DenseMatrix::zeros(n, kc)
        };
        num.add_assign(&p)?;
        num.add_assign(&f.h.matmul(&f.h.matmul_tn(&y)?)?)?; // H Hᵀ Y
        den.add_assign(&y)?;
        den.add_assign(&f.h.matmul(&f.h.matmul_tn(&p)?)?)?; // H Hᵀ P
    }
    let out = mul_update(&f.h, &num, &den, eps);
    ensure_finite(&out, "update_h")?;
    Ok(out)
}

/// Multiplicative update for one private membership `H_l`:
///
/// ```text
/// H_l ← H_l ⊙ (A_l H_l G_l + H_l H_lᵀ H S_lᵀ Hᵀ H_l G_l)
///           ⊘ (H S_lᵀ Hᵀ H_l G_lᵀ + H_l H_lᵀ A_l H_l G_l) + ε
/// ```
pub fn update_h_l(net: &MultiplexNetwork, f: &FactorSet, l: usize, eps: f64) -> Result<DenseMatrix> {
    f.check_against(net)?;
    let kp = f.k_p(l);
    let n = net.n();
    if kp == 0 {
        return Ok(f.h_l[l].clone());
    }
    let hl = &f.h_l[l];
    let g = &f.g_l[l];
    let q = net.layer(l).matmul(&hl.matmul(g)?)?; // A_l H_l G_l
    let e = if f.k_c() > 0 {
        // H S_lᵀ Hᵀ H_l
        let c = f.h.matmul_tn(hl)?; // Hᵀ H_l
        let sc = f.s_l[l].transpose().matmul(&c)?;
        f.h.matmul(&sc)?
    } else {
        DenseMatrix::zeros(n, kp)
    };
    let mut num = q.clone();
    num.add_assign(&hl.matmul(&hl.matmul_tn(&e)?.matmul(g)?)?)?; // H_l (H_lᵀ E) G_l
    let mut den = e.matmul(&g.transpose())?;
    den.add_assign(&hl.matmul(&hl.matmul_tn(&q)?)?)?; // H_l H_lᵀ Q
    let out = mul_update(hl, &num, &den, eps);
    ensure_finite(&out, &format!("update_h_l (layer {l})"))?;
    Ok(out)
}

/// Multiplicative update for one common affinity `S_l`, re-symmetrized:
///
/// ```text
/// S_l ← S_l ⊙ (Hᵀ A_l H) ⊘ (Hᵀ H S_l Hᵀ H + Hᵀ H_l G_l H_lᵀ H) + ε
/// ```
pub fn update_s_l(net: &MultiplexNetwork, f: &FactorSet, l: usize, eps: f64) -> Result<DenseMatrix> {
    f.check_against(net)?;
    let kc = f.k_c();
    if kc == 0 {
        return Ok(f.s_l[l].clone());
    }
    let ah = net.layer(l).matmul(&f.h)?;
    let num = f.h.matmul_tn(&ah)?; // Hᵀ A_l H
    let hth = f.h.matmul_tn(&f.h)?;
    let mut den = hth.matmul(&f.s_l[l].matmul(&hth)?)?;
    if f.k_p(l) > 0 {
        let c = f.h.matmul_tn(&f.h_l[l])?; // Hᵀ H_l
        den.add_assign(&c.matmul(&f.g_l[l])?.matmul_nt(&c)?)?;
    }
    let mut out = mul_update(&f.s_l[l], &num, &den, eps);
    out.symmetrize();
    ensure_finite(&out, &format!("update_s_l (layer {l})"))?;
    Ok(out)
}

/// Multiplicative update for one private affinity `G_l`, re-symmetrized:
///
/// ```text
/// G_l ← G_l ⊙ (H_lᵀ A_l H_l) ⊘ (H_lᵀ H_l G_l H_lᵀ H_l + H_lᵀ H S_l Hᵀ H_l) + ε
/// ```
pub fn update_g_l(net: &MultiplexNetwork, f: &FactorSet, l: usize, eps: f64) -> Result<DenseMatrix> {
    f.check_against(net)?;
    let kp = f.k_p(l);
    if kp == 0 {
        return Ok(f.g_l[l].clone());
    }
    let hl = &f.h_l[l];
    let ah = net.layer(l).matmul(hl)?;
    let num = hl.matmul_tn(&ah)?; // H_lᵀ A_l H_l
    let hth = hl.matmul_tn(hl)?;
    let mut den = hth.matmul(&f.g_l[l].matmul(&hth)?)?;
    if f.k_c() > 0 {
        let c = hl.matmul_tn(&f.h)?; // H_lᵀ H
        den.add_assign(&c.matmul(&f.s_l[l])?.matmul_nt(&c)?)?;
    }
    let mut out = mul_update(&f.g_l[l], &num, &den, eps);
    out.symmetrize();
    ensure_finite(&out, &format!("update_g_l (layer {l})"))?;
    Ok(out)
}

/// One Gauss-Seidel sweep: `H`, then every `H_l`, `S_l`, `G_l`, each update
/// seeing the freshest values.
pub fn sweep(net: &MultiplexNetwork, f: &mut FactorSet, eps: f64) -> Result<()> {
    f.h = update_h(net, f, eps)?;
    for l in 0..net.num_layers() {
        f.h_l[l] = update_h_l(net, f, l, eps)?;
    }
    for l in 0..net.num_layers() {
        f.s_l[l] = update_s_l(net, f, l, eps)?;
    }
    for l in 0..net.num_layers() {
        f.g_l[l] = update_g_l(net, f, l, eps)?;
    }
    Ok(())
}

/// Reseed membership columns that collapsed to exactly zero (at most once
/// per column per run): a dead column makes its community unrecoverable.
fn rescue_dead_columns(
    f: &mut FactorSet,
    rng: &mut ChaCha8Rng,
    rescued: &mut HashSet<(usize, usize)>,
) {
    use rand::Rng;
    let mut rescue = |m: &mut DenseMatrix, tag: usize, rescued: &mut HashSet<(usize, usize)>| {
        for c in 0..m.cols() {
            let dead = (0..m.rows()).all(|r| m.get(r, c) == 0.0);
            if dead && rescued.insert((tag, c)) {
                log::warn!(
                    "membership column {c} of {} collapsed to zero; reseeding",
                    if tag == usize::MAX { "H".to_string() } else { format!("H_{tag}") }
                );
                for r in 0..m.rows() {
                    m.set(r, c, 0.1 + 0.9 * rng.gen::<f64>());
                }
            }
        }
    };
    rescue(&mut f.h, usize::MAX, rescued);
    for l in 0..f.h_l.len() {
        let mut hl = std::mem::replace(&mut f.h_l[l], DenseMatrix::zeros(0, 0));
        rescue(&mut hl, l, rescued);
        f.h_l[l] = hl;
    }
}

fn relative_change(current: f64, previous: f64) -> f64 {
    (current - previous).abs() / previous.abs().max(1e-30)
}

/// Fit one random initialization: cycle sweeps until `max_iters` or until
/// the relative objective change stays below `tol` for `tol_window`
/// consecutive iterations. The trace holds the objective at initialization
/// and after every sweep.
pub fn run_once(
    net: &MultiplexNetwork,
    order: &ModelOrder,
    stream: RandomStream,
    opts: &FitOptions,
) -> Result<RunResult> {
    order.validate_for(net)?;
    let mut rng = stream.rng();
    let mut f = init_factors_with(&mut rng, net.n(), order.k_c, &order.k_p)?;
    let mut trace = Vec::with_capacity(opts.max_iters + 1);
    trace.push(objective(net, &f)?);
    let mut rescued = HashSet::new();
    let mut streak = 0usize;
    let mut iters = 0usize;
    for t in 1..=opts.max_iters {
        sweep(net, &mut f, opts.eps).map_err(|e| match e {
            Error::NonFinite { context } => Error::NonFinite {
                context: format!("{context} at iteration {t}"),
            },
            other => other,
        })?;
        rescue_dead_columns(&mut f, &mut rng, &mut rescued);
        let obj = objective(net, &f)?;
        let prev = *trace.last().expect("trace nonempty");
        trace.push(obj);
        iters = t;
        if opts.tol > 0.0 {
            if relative_change(obj, prev) < opts.tol {
                streak += 1;
                if streak >= opts.tol_window {
                    break;
                }
            } else {
                streak = 0;
            }
        }
    }
    Ok(RunResult {
        factors: f,
        objective_trace: trace,
        iterations_used: iters,
        seed_index: stream.stream_index,
    })
}

/// How restarts are ranked.
#[derive(Debug, Clone, Copy)]
pub enum Selector<'a> {
    /// Mean per-layer normalized mutual information against ground truth
    /// (one labels vector per layer, or a single vector reused for all).
    /// With `pooled`, layers are concatenated before scoring.
    Nmi {
        truth: &'a [NodeLabels],
        pooled: bool,
    },
    /// Mean per-layer modularity density of the detected partition; used
    /// when no ground truth exists.
    ModularityDensity,
}

/// Best-of-restarts detection output.
#[derive(Debug, Clone)]
pub struct Detection {
    pub best: RunResult,
    pub labels: LabeledPartition,
    pub presence: CommonPresence,
    /// Selector score of every restart, indexed by restart.
    pub scores: Vec<f64>,
    pub best_index: usize,
}

fn score_labels(
    net: &MultiplexNetwork,
    labels: &LabeledPartition,
    selector: &Selector<'_>,
) -> Result<f64> {
    match selector {
        Selector::Nmi { truth, pooled } => multiplex_nmi(&labels.per_layer, truth, *pooled),
        Selector::ModularityDensity => mean_modularity_density(net, &labels.per_layer),
    }
}

/// Run `restarts` independent fits (stream index = restart index), label
/// each, and return the run maximizing the selector. Restarts execute in
/// parallel; the argmax scans in restart order and replaces only on strict
/// improvement, so ties resolve to the lowest seed index regardless of
/// thread count.
#[allow(clippy::too_many_arguments)]
pub fn run_restarts(
    net: &MultiplexNetwork,
    order: &ModelOrder,
    master_seed: u64,
    restarts: usize,
    selector: Selector<'_>,
    opts: &FitOptions,
    qj_rule: QjRule,
) -> Result<Detection> {
    if restarts == 0 {
        return Err(Error::invalid("need at least one restart"));
    }
    let runs: Vec<Result<(RunResult, LabeledPartition, CommonPresence, f64)>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let stream = RandomStream::new(master_seed, r as u64);
            let run = run_once(net, order, stream, opts)?;
            let presence = common_presence(net, &run.factors, order, qj_rule)?;
            let labels = final_labels(&run.factors, &presence, order)?;
            let score = score_labels(net, &labels, &selector)?;
            Ok((run, labels, presence, score))
        })
        .collect();

    let mut best: Option<(usize, RunResult, LabeledPartition, CommonPresence)> = None;
    let mut best_score = f64::NEG_INFINITY;
    let mut scores = Vec::with_capacity(restarts);
    for (idx, item) in runs.into_iter().enumerate() {
        let (run, labels, presence, score) = item?;
        scores.push(score);
        if best.is_none() || score > best_score {
            best_score = score;
            best = Some((idx, run, labels, presence));
        }
    }
    let (best_index, best, labels, presence) = best.expect("restarts >= 1");
    Ok(Detection {
        best,
        labels,
        presence,
        scores,
        best_index,
    })
}

/// Single-layer symmetric tri-factorization `A ≈ U S Uᵀ` with the same
/// multiplicative-update scheme and stopping rule. `U(i, j)` is read as the
/// likelihood of node `i` belonging to community `j`.
#[derive(Debug, Clone)]
pub struct SingleLayerFit {
    pub u: DenseMatrix,
    pub s: DenseMatrix,
    pub objective_trace: Vec<f64>,
    pub iterations_used: usize,
}

pub fn single_layer_onmtf(
    a: &DenseMatrix,
    k: usize,
    stream: RandomStream,
    opts: &FitOptions,
) -> Result<SingleLayerFit> {
    if k == 0 {
        return Err(Error::invalid("single-layer factorization needs k >= 1"));
    }
    if a.rows() != a.cols() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let mut rng = stream.rng();
    let mut u = rand_matrix_with(&mut rng, n, k, 0.1, 1.0)?;
    let mut s = rand_matrix_with(&mut rng, k, k, 0.1, 1.0)?;
    s.symmetrize();

    let residual = |u: &DenseMatrix, s: &DenseMatrix| -> Result<f64> {
        let mut r = a.clone();
        r.sub_assign(&u.matmul(s)?.matmul_nt(u)?)?;
        Ok(r.as_slice().iter().map(|v| v * v).sum())
    };

    let mut trace = vec![residual(&u, &s)?];
    let mut rescued = HashSet::new();
    let mut streak = 0usize;
    let mut iters = 0usize;
    for t in 1..=opts.max_iters {
        // U ← U ⊙ (A U S) ⊘ (U Uᵀ A U S + ε)
        let num = a.matmul(&u.matmul(&s)?)?;
        let den = u.matmul(&u.matmul_tn(&num)?)?;
        u = mul_update(&u, &num, &den, opts.eps);
        ensure_finite(&u, &format!("single_layer_onmtf U at iteration {t}"))?;

        // S ← S ⊙ (Uᵀ A U) ⊘ (Uᵀ U S Uᵀ U + ε), re-symmetrized.
        let au = a.matmul(&u)?;
        let num_s = u.matmul_tn(&au)?;
        let utu = u.matmul_tn(&u)?;
        let den_s = utu.matmul(&s.matmul(&utu)?)?;
        s = mul_update(&s, &num_s, &den_s, opts.eps);
        s.symmetrize();
        ensure_finite(&s, &format!("single_layer_onmtf S at iteration {t}"))?;

        for c in 0..k {
            let dead = (0..n).all(|r| u.get(r, c) == 0.0);
            if dead && rescued.insert(c) {
                use rand::Rng;
                log::warn!("single-layer membership column {c} collapsed to zero; reseeding");
                for r in 0..n {
                    u.set(r, c, 0.1 + 0.9 * rng.gen::<f64>());
                }
            }
        }

        let obj = residual(&u, &s)?;
        let prev = *trace.last().expect("nonempty");
        trace.push(obj);
        iters = t;
        if opts.tol > 0.0 {
            if relative_change(obj, prev) < opts.tol {
                streak += 1;
                if streak >= opts.tol_window {
                    break;
                }
            } else {
                streak = 0;
            }
        }
    }
    Ok(SingleLayerFit {
        u,
        s,
        objective_trace: trace,
        iterations_used: iters,
    })
}

/// Row-argmax labels of a membership matrix; ties break toward the lowest
/// column index.
pub fn argmax_labels(u: &DenseMatrix) -> NodeLabels {
    let mut labels = Vec::with_capacity(u.rows());
    for i in 0..u.rows() {
        let row = u.row(i);
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for (j, &v) in row.iter().enumerate() {
            if v > best_v {
                best_v = v;
                best = j;
            }
        }
        labels.push(if row.is_empty() { 0 } else { best });
    }
    NodeLabels(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::{generate, BenchmarkSpec, PopulationSbm};
    use crate::metrics::nmi;
    use crate::numerics::rand_matrix;

    fn random_net(seed: u64, n: usize, layers: usize) -> MultiplexNetwork {
        let mats: Vec<DenseMatrix> = (0..layers as u64)
            .map(|l| {
                let mut a =
                    rand_matrix(&RandomStream::new(seed * 100 + l, 0), n, n, 0.0, 1.0).unwrap();
                a.symmetrize();
                for i in 0..n {
                    a.set(i, i, 0.0);
                }
                a
            })
            .collect();
        MultiplexNetwork::from_layers(mats).unwrap()
    }

    fn scalar_net(a: f64) -> MultiplexNetwork {
        // One node with a self-expectation weight; expectation layers may
        // carry diagonal mass.
        let m = DenseMatrix::from_vec(1, 1, vec![a]).unwrap();
        MultiplexNetwork::from_expectation_layers(vec![m]).unwrap()
    }

    fn scalar_factors(h: f64, u: f64, s: f64, g: f64) -> FactorSet {
        FactorSet {
            h: DenseMatrix::from_vec(1, 1, vec![h]).unwrap(),
            h_l: vec![DenseMatrix::from_vec(1, 1, vec![u]).unwrap()],
            s_l: vec![DenseMatrix::from_vec(1, 1, vec![s]).unwrap()],
            g_l: vec![DenseMatrix::from_vec(1, 1, vec![g]).unwrap()],
        }
    }

    const EPS: f64 = 1e-12;

    #[test]
    fn init_is_deterministic_and_in_range() {
        let s = RandomStream::new(5, 2);
        let a = init_factors(&s, 10, 2, &[3, 1]).unwrap();
        let b = init_factors(&s, 10, 2, &[3, 1]).unwrap();
        assert_eq!(a.h, b.h);
        assert_eq!(a.h_l[1], b.h_l[1]);
        assert_eq!(a.s_l[0], b.s_l[0]);
        assert_eq!(a.g_l[0], b.g_l[0]);
        for v in a.h.as_slice() {
            assert!((0.1..=1.0).contains(v));
        }
        for v in a.s_l[0].as_slice() {
            assert!((0.1..=1.0).contains(v));
        }
        assert_eq!(a.s_l[0].max_asymmetry(), 0.0);
        assert_eq!(a.g_l[0].max_asymmetry(), 0.0);
    }

    #[test]
    fn init_degenerate_orders() {
        let s = RandomStream::new(5, 0);
        // No common communities: the common term is exactly zero.
        let f = init_factors(&s, 6, 0, &[2, 2]).unwrap();
        assert_eq!(f.h.cols(), 0);
        let net = random_net(1, 6, 2);
        let zeroed = FactorSet {
            h_l: f.h_l.iter().map(|m| DenseMatrix::zeros(6, m.cols())).collect(),
            g_l: f.g_l.clone(),
            s_l: f.s_l.clone(),
            h: f.h.clone(),
        };
        let want: f64 = (0..2)
            .map(|l| net.layer(l).as_slice().iter().map(|v| v * v).sum::<f64>())
            .sum();
        assert!((objective(&net, &zeroed).unwrap() - want).abs() <= 1e-12 * want);

        assert!(init_factors(&s, 6, 0, &[0, 2]).is_err());
    }

    #[test]
    fn objective_zero_at_perfect_fit() {
        let s = RandomStream::new(9, 0);
        let f = init_factors(&s, 8, 2, &[2]).unwrap();
        // Build the layer as exactly the model.
        let mut a = f.h.matmul(&f.s_l[0]).unwrap().matmul_nt(&f.h).unwrap();
        a.add_assign(&f.h_l[0].matmul(&f.g_l[0]).unwrap().matmul_nt(&f.h_l[0]).unwrap())
            .unwrap();
        let net = MultiplexNetwork::from_expectation_layers(vec![a]).unwrap();
        assert!(objective(&net, &f).unwrap() <= 1e-12);
    }

    #[test]
    fn objective_shape_mismatch_errors() {
        let s = RandomStream::new(9, 0);
        let f = init_factors(&s, 8, 2, &[2]).unwrap();
        let net = random_net(3, 6, 1);
        assert!(objective(&net, &f).is_err());
    }

    #[test]
    fn update_h_scalar_fixed_point() {
        // At h = u = 1 the numerator a·s + g·s equals the denominator
        // g·s + a·s, so h is unchanged up to the ε guard.
        let net = scalar_net(0.7);
        let f = scalar_factors(1.0, 1.0, 0.4, 0.3);
        let h2 = update_h(&net, &f, EPS).unwrap();
        assert!((h2.get(0, 0) - 1.0).abs() <= 1e-9);
        let u2 = update_h_l(&net, &f, 0, EPS).unwrap();
        assert!((u2.get(0, 0) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn each_update_descends_objective() {
        // Direct objective evaluation around every individual update.
        for seed in 0..3u64 {
            let net = random_net(40 + seed, 32, 3);
            let order = ModelOrder::new(2, vec![2, 1, 3]);
            let mut f =
                init_factors(&RandomStream::new(seed, 0), 32, order.k_c, &order.k_p).unwrap();
            let mut prev = objective(&net, &f).unwrap();
            for _ in 0..5 {
                f.h = update_h(&net, &f, EPS).unwrap();
                let after_h = objective(&net, &f).unwrap();
                assert!(after_h <= prev * (1.0 + 1e-12) + 1e-9, "H ascent");
                for l in 0..3 {
                    f.h_l[l] = update_h_l(&net, &f, l, EPS).unwrap();
                }
                let after_hl = objective(&net, &f).unwrap();
                assert!(after_hl <= after_h * (1.0 + 1e-12) + 1e-9, "H_l ascent");
                for l in 0..3 {
                    f.s_l[l] = update_s_l(&net, &f, l, EPS).unwrap();
                }
                let after_s = objective(&net, &f).unwrap();
                assert!(after_s <= after_hl * (1.0 + 1e-12) + 1e-9, "S_l ascent");
                for l in 0..3 {
                    f.g_l[l] = update_g_l(&net, &f, l, EPS).unwrap();
                }
                let after_g = objective(&net, &f).unwrap();
                assert!(after_g <= after_s * (1.0 + 1e-12) + 1e-9, "G_l ascent");
                prev = after_g;
            }
        }
    }

    #[test]
    fn updates_preserve_nonnegativity_exactly() {
        let net = random_net(77, 16, 2);
        let mut f = init_factors(&RandomStream::new(7, 0), 16, 2, &[2, 3]).unwrap();
        for _ in 0..20 {
            sweep(&net, &mut f, EPS).unwrap();
            assert!(f.h.as_slice().iter().all(|&v| v >= 0.0));
            for l in 0..2 {
                assert!(f.h_l[l].as_slice().iter().all(|&v| v >= 0.0));
                assert!(f.s_l[l].as_slice().iter().all(|&v| v >= 0.0));
                assert!(f.g_l[l].as_slice().iter().all(|&v| v >= 0.0));
                assert!(f.s_l[l].max_asymmetry() <= 1e-12);
                assert!(f.g_l[l].max_asymmetry() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_target_shrinks_model_to_zero() {
        // On an all-zero target the affinities vanish after one sweep and
        // the memberships follow; the objective descends to exactly 0.
        let net =
            MultiplexNetwork::from_layers(vec![DenseMatrix::zeros(6, 6), DenseMatrix::zeros(6, 6)])
                .unwrap();
        let mut f = init_factors(&RandomStream::new(3, 0), 6, 1, &[2, 2]).unwrap();
        let mut prev = objective(&net, &f).unwrap();
        for _ in 0..3 {
            sweep(&net, &mut f, EPS).unwrap();
            let obj = objective(&net, &f).unwrap();
            assert!(obj <= prev * (1.0 + 1e-12) + 1e-9);
            prev = obj;
        }
        assert_eq!(prev, 0.0);
        assert_eq!(f.h.max_abs(), 0.0);
    }

    #[test]
    fn s_update_converges_to_block_solution() {
        // Orthonormal block indicators, no private part: the fixed point of
        // the S update is the projected block matrix Hᵀ A H.
        let n = 12;
        let sizes = [7usize, 5usize];
        let mut h = DenseMatrix::zeros(n, 2);
        for i in 0..n {
            let c = usize::from(i >= sizes[0]);
            h.set(i, c, 1.0 / (sizes[c] as f64).sqrt());
        }
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (ci, cj) = (usize::from(i >= sizes[0]), usize::from(j >= sizes[0]));
                a.set(i, j, if ci == cj { 0.8 } else { 0.1 });
            }
        }
        let net = MultiplexNetwork::from_layers(vec![a.clone()]).unwrap();
        let mut f = FactorSet {
            h: h.clone(),
            h_l: vec![DenseMatrix::zeros(n, 0)],
            s_l: vec![rand_matrix(&RandomStream::new(4, 0), 2, 2, 0.1, 1.0).unwrap()],
            g_l: vec![DenseMatrix::zeros(0, 0)],
        };
        f.s_l[0].symmetrize();
        for _ in 0..300 {
            f.s_l[0] = update_s_l(&net, &f, 0, EPS).unwrap();
        }
        // Independent evaluation of Hᵀ A H by plain loops.
        let mut want = DenseMatrix::zeros(2, 2);
        for c in 0..2 {
            for d in 0..2 {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += h.get(i, c) * a.get(i, j) * h.get(j, d);
                    }
                }
                want.set(c, d, acc);
            }
        }
        assert!(
            f.s_l[0].max_abs_diff(&want) <= 1e-8,
            "S residual {:e}",
            f.s_l[0].max_abs_diff(&want)
        );
        assert!(f.s_l[0].max_asymmetry() <= 1e-12);
    }

    #[test]
    fn permutation_equivariance_of_updates() {
        let n = 14;
        let net = random_net(55, n, 2);
        let f = init_factors(&RandomStream::new(11, 0), n, 2, &[2, 2]).unwrap();
        // Reversal permutation.
        let perm: Vec<usize> = (0..n).rev().collect();
        let permute_rows = |m: &DenseMatrix| {
            DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(perm[i], j))
        };
        let permute_sym = |m: &DenseMatrix| {
            DenseMatrix::from_fn(n, n, |i, j| m.get(perm[i], perm[j]))
        };
        let pnet = MultiplexNetwork::from_layers(
            (0..2).map(|l| permute_sym(net.layer(l))).collect(),
        )
        .unwrap();
        let pf = FactorSet {
            h: permute_rows(&f.h),
            h_l: f.h_l.iter().map(&permute_rows).collect(),
            s_l: f.s_l.clone(),
            g_l: f.g_l.clone(),
        };
        let h1 = permute_rows(&update_h(&net, &f, EPS).unwrap());
        let h2 = update_h(&pnet, &pf, EPS).unwrap();
        assert!(h1.max_abs_diff(&h2) <= 1e-9 * h1.max_abs().max(1.0));
        let u1 = permute_rows(&update_h_l(&net, &f, 1, EPS).unwrap());
        let u2 = update_h_l(&pnet, &pf, 1, EPS).unwrap();
        assert!(u1.max_abs_diff(&u2) <= 1e-9 * u1.max_abs().max(1.0));
        let s1 = update_s_l(&net, &f, 0, EPS).unwrap();
        let s2 = update_s_l(&pnet, &pf, 0, EPS).unwrap();
        assert!(s1.max_abs_diff(&s2) <= 1e-9 * s1.max_abs().max(1.0));
    }

    #[test]
    fn run_once_zero_iters_returns_initialization() {
        let net = random_net(21, 10, 2);
        let order = ModelOrder::new(1, vec![1, 1]);
        let opts = FitOptions {
            max_iters: 0,
            ..FitOptions::default()
        };
        let run = run_once(&net, &order, RandomStream::new(8, 0), &opts).unwrap();
        assert_eq!(run.objective_trace.len(), 1);
        assert_eq!(run.iterations_used, 0);
        let init = init_factors(&RandomStream::new(8, 0), 10, 1, &[1, 1]).unwrap();
        assert_eq!(run.factors.h, init.h);
    }

    #[test]
    fn run_once_trace_monotone_on_random_nets() {
        for seed in 0..2u64 {
            let net = random_net(60 + seed, 24, 3);
            let order = ModelOrder::new(2, vec![1, 2, 2]);
            let opts = FitOptions {
                max_iters: 120,
                tol: 0.0,
                ..FitOptions::default()
            };
            let run = run_once(&net, &order, RandomStream::new(seed, 0), &opts).unwrap();
            assert_eq!(run.objective_trace.len(), 121);
            for w in run.objective_trace.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()),
                    "ascent {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    fn planted_net(seed: u64) -> (MultiplexNetwork, crate::benchgen::GroundTruth, BenchmarkSpec) {
        let spec = BenchmarkSpec {
            n: 48,
            num_layers: 2,
            k_c: 1,
            presence: BenchmarkSpec::full_presence(1, 2),
            n_c: 16,
            k_p: vec![2, 2],
            mu: 0.0,
            p1: 1.0,
            avg_degree: 10.0,
            seed,
        };
        let (net, truth) = generate(&spec, &RandomStream::new(seed, 0)).unwrap();
        (net, truth, spec)
    }

    #[test]
    fn run_once_collapses_objective_on_separable_blocks() {
        let (net, _truth, spec) = planted_net(31);
        let order = ModelOrder::new(spec.k_c, spec.k_p.clone());
        let run = run_once(
            &net,
            &order,
            RandomStream::new(2, 0),
            &FitOptions::default(),
        )
        .unwrap();
        let first = run.objective_trace[0];
        let last = *run.objective_trace.last().unwrap();
        assert!(
            last < 0.01 * first,
            "objective only fell from {first} to {last}"
        );
    }

    #[test]
    fn restarts_single_equals_run_once_plus_labels() {
        let (net, truth, spec) = planted_net(32);
        let order = ModelOrder::new(spec.k_c, spec.k_p.clone());
        let opts = FitOptions {
            max_iters: 60,
            ..FitOptions::default()
        };
        let det = run_restarts(
            &net,
            &order,
            9,
            1,
            Selector::Nmi {
                truth: &truth.labels,
                pooled: false,
            },
            &opts,
            QjRule::Corrected,
        )
        .unwrap();
        let run = run_once(&net, &order, RandomStream::new(9, 0), &opts).unwrap();
        assert_eq!(det.best.objective_trace, run.objective_trace);
        let presence = common_presence(&net, &run.factors, &order, QjRule::Corrected).unwrap();
        let labels = final_labels(&run.factors, &presence, &order).unwrap();
        assert_eq!(det.labels, labels);
        assert_eq!(det.best_index, 0);
    }

    #[test]
    fn restart_selection_is_argmax_with_low_index_ties() {
        let (net, truth, spec) = planted_net(33);
        let order = ModelOrder::new(spec.k_c, spec.k_p.clone());
        let opts = FitOptions {
            max_iters: 40,
            ..FitOptions::default()
        };
        let det = run_restarts(
            &net,
            &order,
            4,
            6,
            Selector::Nmi {
                truth: &truth.labels,
                pooled: false,
            },
            &opts,
            QjRule::Corrected,
        )
        .unwrap();
        let best = det.scores[det.best_index];
        for (i, &s) in det.scores.iter().enumerate() {
            assert!(best >= s);
            if s == best {
                assert!(det.best_index <= i);
            }
        }
    }

    #[test]
    fn restarts_identical_across_thread_counts() {
        let (net, truth, spec) = planted_net(34);
        let order = ModelOrder::new(spec.k_c, spec.k_p.clone());
        let opts = FitOptions {
            max_iters: 30,
            ..FitOptions::default()
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                run_restarts(
                    &net,
                    &order,
                    123,
                    5,
                    Selector::Nmi {
                        truth: &truth.labels,
                        pooled: false,
                    },
                    &opts,
                    QjRule::Corrected,
                )
                .unwrap()
            })
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.scores, b.scores);
        assert_eq!(a.best_index, b.best_index);
        assert_eq!(a.best.objective_trace, b.best.objective_trace);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn modularity_selector_works_without_truth() {
        let (net, _truth, spec) = planted_net(35);
        let order = ModelOrder::new(spec.k_c, spec.k_p.clone());
        let opts = FitOptions {
            max_iters: 40,
            ..FitOptions::default()
        };
        let det =
            run_restarts(&net, &order, 5, 3, Selector::ModularityDensity, &opts, QjRule::Corrected)
                .unwrap();
        assert!(det.scores.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn single_layer_descends_on_identity() {
        let a = DenseMatrix::identity(6);
        let opts = FitOptions {
            max_iters: 100,
            tol: 0.0,
            ..FitOptions::default()
        };
        let fit = single_layer_onmtf(&a, 6, RandomStream::new(10, 0), &opts).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()));
        }
    }

    #[test]
    fn single_layer_recovers_two_cliques() {
        let n = 8;
        let mut a = DenseMatrix::zeros(n, n);
        for base in [0, 4] {
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        a.set(base + i, base + j, 1.0);
                    }
                }
            }
        }
        let fit =
            single_layer_onmtf(&a, 2, RandomStream::new(3, 0), &FitOptions::default()).unwrap();
        let labels = argmax_labels(&fit.u);
        let truth = NodeLabels(vec![0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(nmi(&labels, &truth).unwrap(), 1.0);
    }

    #[test]
    fn single_layer_deterministic_per_stream() {
        let a = random_net(90, 12, 1);
        let opts = FitOptions {
            max_iters: 50,
            ..FitOptions::default()
        };
        let f1 = single_layer_onmtf(a.layer(0), 3, RandomStream::new(6, 1), &opts).unwrap();
        let f2 = single_layer_onmtf(a.layer(0), 3, RandomStream::new(6, 1), &opts).unwrap();
        assert_eq!(f1.u, f2.u);
        assert_eq!(f1.objective_trace, f2.objective_trace);
    }

    #[test]
    fn analytic_population_factors_are_a_fixed_point() {
        let sbm =
            PopulationSbm::random(&RandomStream::new(14, 0), 40, 2, &[2, 2]).unwrap();
        let net = sbm.population_adjacency().unwrap();
        let f = sbm.analytic_factors().unwrap();
        assert!(objective(&net, &f).unwrap() <= 1e-10);

        let mut swept = f.clone();
        sweep(&net, &mut swept, EPS).unwrap();
        let mut moved = swept.h.max_abs_diff(&f.h);
        for l in 0..2 {
            moved = moved
                .max(swept.h_l[l].max_abs_diff(&f.h_l[l]))
                .max(swept.s_l[l].max_abs_diff(&f.s_l[l]))
                .max(swept.g_l[l].max_abs_diff(&f.g_l[l]));
        }
        assert!(moved < 1e-6, "sweep moved analytic factors by {moved:e}");
    }
}
