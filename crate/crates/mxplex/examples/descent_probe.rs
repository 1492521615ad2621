// Init-strategy experiments for the single-layer factorization.
use mxplex::metrics::nmi;
use mxplex::multiplex::NodeLabels;
use mxplex::numerics::{rand_matrix_with, DenseMatrix, RandomStream};
use rand::Rng;

fn residual(a: &DenseMatrix, u: &DenseMatrix, s: &DenseMatrix) -> f64 {
    let mut r = a.clone();
    r.sub_assign(&u.matmul(s).unwrap().matmul_nt(u).unwrap()).unwrap();
    r.as_slice().iter().map(|v| v * v).sum()
}

fn fit(a: &DenseMatrix, k: usize, seed: u64, iters: usize, init: &str, norm_cols: bool) -> (DenseMatrix, f64) {
    let n = a.rows();
    let mut rng = RandomStream::new(seed, 0).rng();
    let mut u = match init {
        "u01" => rand_matrix_with(&mut rng, n, k, 0.0, 1.0).unwrap(),
        "proj" => {
            let r = rand_matrix_with(&mut rng, n, k, 0.0, 1.0).unwrap();
            let mut u = a.matmul(&r).unwrap();
            let m = u.max_abs().max(1e-12);
            u.scale(1.0 / m);
            for v in u.as_mut_slice() { *v += 1e-3; }
            u
        }
        _ => rand_matrix_with(&mut rng, n, k, 0.1, 1.0).unwrap(),
    };
    let mut s = if init == "sdata" {
        let su = u.matmul_tn(&a.matmul(&u).unwrap()).unwrap();
        let mut s = su; s.symmetrize(); s
    } else {
        let mut s = rand_matrix_with(&mut rng, k, k, 0.1, 1.0).unwrap();
        s.symmetrize(); s
    };
    let eps = 1e-12;
    for _ in 0..iters {
        let num = a.matmul(&u.matmul(&s).unwrap()).unwrap();
        let den = u.matmul(&u.matmul_tn(&num).unwrap()).unwrap();
        for ((o, nn), d) in u.as_mut_slice().iter_mut().zip(num.as_slice()).zip(den.as_slice()) {
            *o *= nn / (d + eps);
        }
        if norm_cols {
            // normalize columns, absorb into S
            let mut scales = vec![0.0; u.cols()];
            for c in 0..u.cols() {
                let mut sq = 0.0;
                for r in 0..u.rows() { sq += u.get(r, c) * u.get(r, c); }
                scales[c] = sq.sqrt().max(1e-300);
            }
            for r in 0..u.rows() { for c in 0..u.cols() { u.set(r, c, u.get(r, c) / scales[c]); } }
            for i in 0..s.rows() { for j in 0..s.cols() { s.set(i, j, s.get(i, j) * scales[i] * scales[j]); } }
        }
        let au = a.matmul(&u).unwrap();
        let num_s = u.matmul_tn(&au).unwrap();
        let utu = u.matmul_tn(&u).unwrap();
        let den_s = utu.matmul(&s.matmul(&utu).unwrap()).unwrap();
        for ((o, nn), d) in s.as_mut_slice().iter_mut().zip(num_s.as_slice()).zip(den_s.as_slice()) {
            *o *= nn / (d + eps);
        }
        s.symmetrize();
    }
    let obj = residual(a, &u, &s);
    (u, obj)
}

fn main() {
    let n = 8;
    let mut a = DenseMatrix::zeros(n, n);
    for base in [0, 4] {
        for i in 0..4 { for j in 0..4 { if i != j { a.set(base + i, base + j, 1.0); } } }
    }
    let truth = NodeLabels(vec![0, 0, 0, 0, 1, 1, 1, 1]);
    for (init, norm) in [("u0101", false), ("u01", false), ("proj", false), ("sdata", false), ("u0101", true), ("u01", true)] {
        let mut ok = 0;
        for seed in 0..20u64 {
            let (u, _obj) = fit(&a, 2, seed, 1000, init, norm);
            let labels = mxplex::factorize::argmax_labels(&u);
            if nmi(&labels, &truth).unwrap() == 1.0 { ok += 1; }
        }
        println!("cliques init={init} norm_cols={norm}: {ok}/20 exact");
    }
    // Larger: 4 blocks of 16, p_in=1 (cliques), k=4
    let n = 64;
    let mut a4 = DenseMatrix::zeros(n, n);
    for b in 0..4 {
        for i in 0..16 { for j in 0..16 { if i != j { a4.set(16 * b + i, 16 * b + j, 1.0); } } }
    }
    let t4 = NodeLabels((0..n).map(|i| i / 16).collect());
    for (init, norm) in [("u0101", false), ("u01", false), ("proj", false), ("u0101", true), ("u01", true)] {
        let mut ok = 0;
        for seed in 0..10u64 {
            let (u, _) = fit(&a4, 4, seed, 1000, init, norm);
            if nmi(&mxplex::factorize::argmax_labels(&u), &t4).unwrap() == 1.0 { ok += 1; }
        }
        println!("4cliques init={init} norm_cols={norm}: {ok}/10 exact");
    }
    // ER-noisy blocks (p_in=0.66): same comparison
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    use rand::SeedableRng;
    let mut a5 = DenseMatrix::zeros(n, n);
    for b in 0..4 {
        for i in 0..16 { for j in (i+1)..16 { if rng.gen::<f64>() < 0.66 { a5.set(16*b+i, 16*b+j, 1.0); a5.set(16*b+j, 16*b+i, 1.0); } } }
    }
    for (init, norm) in [("u0101", false), ("proj", false), ("u0101", true), ("u01", true)] {
        let mut ok = 0;
        for seed in 0..10u64 {
            let (u, _) = fit(&a5, 4, seed, 1000, init, norm);
            if nmi(&mxplex::factorize::argmax_labels(&u), &t4).unwrap() == 1.0 { ok += 1; }
        }
        println!("4blocks-noisy init={init} norm_cols={norm}: {ok}/10 exact");
    }
}
