//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the library's numeric code paths; each oracle is a
//! deliberately naive reimplementation.

#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::DMatrix;
use promptprobe::dataio::PromptRecord;
use promptprobe::heads::{HeadParams, HeadVariant, JointHeadModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_prompts() -> Vec<PromptRecord> {
    promptprobe::dataio::read_corpus(fixture_path("prompts20.jsonl")).unwrap()
}

/// Ids expected to survive `prompts20.jsonl`, worked out by hand.
pub const FIXTURE_SURVIVORS: &[u64] = &[1, 2, 5, 8, 9, 11, 17, 18, 20];

/// Straight-line filter: every record is checked against every kept record.
pub fn reference_filter(records: &[PromptRecord]) -> Vec<(u64, String)> {
    let mut kept: Vec<(u64, String)> = Vec::new();
    'next: for r in records {
        let t = r.text.trim_matches(|c: char| c.is_whitespace()).to_string();
        let words: Vec<&str> = t.split_whitespace().collect();
        if words.is_empty() || words.contains(&"Null") || words.contains(&"NaN") {
            continue;
        }
        for ch in t.chars() {
            let c = ch as u32;
            if !(32..=126).contains(&c) {
                continue 'next;
            }
        }
        for (_, k) in &kept {
            let dup = if t.len() < 50 || k.len() < 50 {
                *k == t
            } else {
                k[..50] == t[..50] || k[k.len() - 50..] == t[t.len() - 50..]
            };
            if dup {
                continue 'next;
            }
        }
        kept.push((r.id, t));
    }
    kept
}

/// Average ranks (1-based), ties share the mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va * vb).sqrt()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-scale..scale)).collect())
        .collect()
}

// ---------------------------------------------------------------- heads ---

fn matvec(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let rows = b.len();
    let cols = x.len();
    assert_eq!(w.len(), rows * cols);
    (0..rows)
        .map(|i| {
            let mut s = b[i];
            for j in 0..cols {
                s += w[i * cols + j] * x[j];
            }
            s
        })
        .collect()
}

/// Dense forward pass written out per wiring; returns (embedding, raw sigmoid).
pub fn oracle_forward(variant: HeadVariant, p: &HeadParams, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let sig = |z: Vec<f64>| -> Vec<f64> { z.into_iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect() };
    match variant {
        HeadVariant::Separate => (matvec(&p.w_e, &p.b_e, x), sig(matvec(&p.w_c, &p.b_c, x))),
        HeadVariant::ClassIntoEmbed => {
            let s = sig(matvec(&p.w_c, &p.b_c, x));
            let u: Vec<f64> = x.iter().chain(&s).copied().collect();
            (matvec(&p.w_e, &p.b_e, &u), s)
        }
        HeadVariant::EmbedIntoClass => {
            let e = matvec(&p.w_e, &p.b_e, x);
            let s = sig(matvec(&p.w_c, &p.b_c, &e));
            (e, s)
        }
    }
}

/// `1 - cos + lambda * BCE`, with probabilities clamped at 1e-7.
pub fn oracle_loss(variant: HeadVariant, p: &HeadParams, lambda: f64, x: &[f64], t: &[f64], l: &[f64]) -> f64 {
    let (e, s) = oracle_forward(variant, p, x);
    let dot: f64 = e.iter().zip(t).map(|(a, b)| a * b).sum();
    let ne: f64 = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nt: f64 = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    let l1 = 1.0 - dot / (ne * nt);
    let mut l2 = 0.0;
    for (&si, &li) in s.iter().zip(l) {
        let q = si.clamp(1e-7, 1.0 - 1e-7);
        l2 -= li * q.ln() + (1.0 - li) * (1.0 - q).ln();
    }
    l1 + lambda * l2 / s.len() as f64
}

pub struct GradInstance {
    pub model: JointHeadModel,
    pub x: Vec<f64>,
    pub target: Vec<f64>,
    pub labels: Vec<f64>,
}

pub fn random_grad_instance(variant: HeadVariant, seed: u64, lambda: f64) -> GradInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..7);
    let e = rng.random_range(2..6);
    let m = rng.random_range(2..7);
    let mut cfg = promptprobe::heads::HeadConfig::new(variant, d, e, m);
    cfg.lambda = lambda;
    cfg.seed = seed;
    let mut model = JointHeadModel::new(cfg).unwrap();
    for t in model.params.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    GradInstance {
        model,
        x: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        target: (0..e).map(|_| rng.random_range(-1.0..1.0)).collect(),
        labels: (0..m).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect(),
    }
}

/// Central differences of the oracle loss at step `h`.
pub fn numeric_gradient(inst: &GradInstance, h: f64) -> Vec<f64> {
    let v = inst.model.config.variant;
    let lambda = inst.model.config.lambda;
    let mut p = inst.model.params.clone();
    let n = p.len();
    (0..n)
        .map(|k| {
            let orig = *p.flat_mut(k);
            *p.flat_mut(k) = orig + h;
            let up = oracle_loss(v, &p, lambda, &inst.x, &inst.target, &inst.labels);
            *p.flat_mut(k) = orig - h;
            let down = oracle_loss(v, &p, lambda, &inst.x, &inst.target, &inst.labels);
            *p.flat_mut(k) = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

// ----------------------------------------------------------------- dakl ---

/// Second-order rows of `rows` against `z`, computed entry by entry.
pub fn naive_second_order(rows: &[Vec<f64>], z: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += a[i] * b[i];
        }
        s
    };
    rows.iter()
        .map(|a| {
            z.iter()
                .map(|b| {
                    let k = dot(a, b);
                    let khat = k / (dot(a, a) * dot(b, b)).sqrt();
                    (-gamma * (1.0 - khat)).exp()
                })
                .collect()
        })
        .collect()
}

/// Gauss-Jordan elimination with partial pivoting, several right-hand sides.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for k in col..n {
                        a[row][k] -= f * a[col][k];
                    }
                    for k in 0..b[row].len() {
                        b[row][k] -= f * b[col][k];
                    }
                }
            }
        }
    }
    for row in 0..n {
        let d = a[row][row];
        for v in b[row].iter_mut() {
            *v /= d;
        }
    }
    b
}

/// Dual ridge pipeline over labelled rows `x` (all used as centroids) and
/// unlabeled rows `pool`, evaluated at `queries`.
pub fn naive_dakl_predict(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    pool: &[Vec<f64>],
    queries: &[Vec<f64>],
    gamma: f64,
    ridge: f64,
) -> Vec<Vec<f64>> {
    let z: Vec<Vec<f64>> = x.iter().chain(pool).cloned().collect();
    let phi = naive_second_order(x, &z, gamma);
    let n = x.len();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..z.len() {
                g[i][j] += phi[i][k] * phi[j][k];
            }
        }
        g[i][i] += ridge;
    }
    let alpha = gauss_solve(g, y.to_vec());
    let phq = naive_second_order(queries, &z, gamma);
    phq.iter()
        .map(|q| {
            let mut out = vec![0.0; y[0].len()];
            for i in 0..n {
                let gi: f64 = (0..z.len()).map(|k| q[k] * phi[i][k]).sum();
                for (o, a) in out.iter_mut().zip(&alpha[i]) {
                    *o += gi * a;
                }
            }
            out
        })
        .collect()
}

/// Primal ridge weights `(PhiᵀPhi + ridge I)^-1 Phiᵀ Y`.
pub fn primal_ridge(phi: &[Vec<f64>], y: &[Vec<f64>], ridge: f64) -> DMatrix<f64> {
    let n = phi.len();
    let p = phi[0].len();
    let e = y[0].len();
    let phi_m = DMatrix::from_fn(n, p, |i, j| phi[i][j]);
    let y_m = DMatrix::from_fn(n, e, |i, j| y[i][j]);
    let a = phi_m.transpose() * &phi_m + DMatrix::identity(p, p) * ridge;
    a.cholesky().expect("ridge system is positive definite").solve(&(phi_m.transpose() * y_m))
}

pub fn to_dmatrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}
