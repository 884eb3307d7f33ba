//! Independent oracles and samplers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use hessiometric::models::{ModelDocument, PotentialModel};
use hessiometric::Builtin;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Ideal-gas Hessian of `−S`, written out by hand (row-major 3x3).
pub fn ideal_gas_metric(p: &[f64], r: f64, c: f64) -> [f64; 9] {
    let (u, v, n) = (p[0], p[1], p[2]);
    [
        r * c * n / (u * u),
        0.0,
        -r * c / u,
        0.0,
        r * n / (v * v),
        -r / v,
        -r * c / u,
        -r / v,
        r * (c + 1.0) / n,
    ]
}

/// Paramagnet Hessian of `−S` for `S = NR ln(U/(NRT0)) − R I²/(N I0²)`.
pub fn paramagnet_metric(p: &[f64], r: f64, i0: f64) -> [f64; 9] {
    let (u, i, n) = (p[0], p[1], p[2]);
    let k = r / (i0 * i0);
    [
        n * r / (u * u),
        0.0,
        -r / u,
        0.0,
        2.0 * k / n,
        -2.0 * k * i / (n * n),
        -r / u,
        -2.0 * k * i / (n * n),
        r / n + 2.0 * k * i * i / (n * n * n),
    ]
}

/// A point well inside the domain of a builtin.
pub fn builtin_point(which: Builtin, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match which {
        Builtin::IdealGas => (0..3).map(|_| rng.gen_range(0.5..3.0)).collect(),
        Builtin::Paramagnet => vec![
            rng.gen_range(0.5..3.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.5..3.0),
        ],
        Builtin::KerrNewmanRadiant => {
            let (m, q, j) = kn_sample(rng);
            vec![m * m, q * q, j]
        }
        Builtin::KerrNewmanNaive => {
            let (m, q, j) = kn_sample(rng);
            vec![m, q, j]
        }
    }
}

/// `(M, Q, J)` with `Q ≤ 0.4 M`, `|J| ≤ 0.4 M²`.
pub fn kn_sample(rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    let m: f64 = rng.gen_range(1.0..2.0);
    let q = rng.gen_range(0.0..0.4) * m;
    let j = rng.gen_range(-0.4..0.4) * m * m;
    (m, q, j)
}

/// Random degree-one homogeneous entropy in `n` positive variables.
pub fn random_homogeneous(rng: &mut ChaCha8Rng, n: usize, label: usize) -> PotentialModel {
    let coords: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    let terms = rng.gen_range(2..=4);
    let mut parts = Vec::new();
    for _ in 0..terms {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n);
        if j == i {
            j = (i + 1) % n;
        }
        let a: f64 = rng.gen_range(0.05..0.3);
        let (xi, xj) = (&coords[i], &coords[j]);
        let term = match rng.gen_range(0..4) {
            0 => format!("{a:?}*{xi}*ln({xj}/{xi})"),
            1 => format!("{a:?}*sqrt({xi}*{xj})"),
            2 => {
                let p: f64 = rng.gen_range(0.2..0.8);
                format!("{a:?}*{xi}^{p:?}*{xj}^{:?}", 1.0 - p)
            }
            _ => format!("{a:?}*({xi}^2 + {xj}^2)/({xi} + {xj})"),
        };
        parts.push(term);
    }
    let doc = ModelDocument {
        name: format!("homogeneous_{label}"),
        coordinates: coords.clone(),
        parameters: BTreeMap::new(),
        entropy: parts.join(" + "),
        domain: coords,
    };
    PotentialModel::new(doc).expect("generated model is valid")
}

/// Point in `[lo, hi]^n`.
pub fn box_point(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// All multi-indices (exponent vectors) of total order `1..=max_order`.
pub fn multi_indices(n: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    fn rec(n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur.push(e);
            rec(n, left - e, cur, out);
            cur.pop();
        }
    }
    rec(n, max_order, &mut Vec::new(), &mut out);
    out.retain(|e| e.iter().sum::<usize>() >= 1);
    out
}

/// Central-difference weights on offsets `-2..=2` for derivative order `k`.
fn stencil(k: usize) -> [f64; 5] {
    match k {
        0 => [0.0, 0.0, 1.0, 0.0, 0.0],
        1 => [0.0, -0.5, 0.0, 0.5, 0.0],
        2 => [0.0, 1.0, -2.0, 1.0, 0.0],
        3 => [-0.5, 1.0, 0.0, -1.0, 0.5],
        4 => [1.0, -4.0, 6.0, -4.0, 1.0],
        _ => panic!("stencil order {k}"),
    }
}

/// Tensor-product central differences of `f` for every multi-index of order
/// ≤ 4, Richardson-extrapolated from steps `h` and `h/2`.
pub fn fd_partials(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: &[f64]) -> Vec<(Vec<usize>, f64)> {
    let n = x.len();
    let grid = |scale: f64| -> Vec<f64> {
        (0..5usize.pow(n as u32))
            .map(|mut k| {
                let mut p = x.to_vec();
                for i in 0..n {
                    let o = (k % 5) as f64 - 2.0;
                    k /= 5;
                    p[i] += o * h[i] * scale;
                }
                f(&p)
            })
            .collect()
    };
    let apply = |values: &[f64], e: &[usize], scale: f64| -> f64 {
        let weights: Vec<[f64; 5]> = e.iter().map(|&k| stencil(k)).collect();
        let mut s = 0.0;
        for (k, v) in values.iter().enumerate() {
            let mut w = 1.0;
            let mut kk = k;
            for wi in &weights {
                w *= wi[kk % 5];
                kk /= 5;
                if w == 0.0 {
                    break;
                }
            }
            s += w * v;
        }
        let denom: f64 = e
            .iter()
            .zip(h)
            .map(|(&k, &hi)| (hi * scale).powi(k as i32))
            .product();
        s / denom
    };
    let coarse = grid(1.0);
    let fine = grid(0.5);
    multi_indices(n, 4)
        .into_iter()
        .map(|e| {
            let c = apply(&coarse, &e, 1.0);
            let fn_ = apply(&fine, &e, 0.5);
            let v = (4.0 * fn_ - c) / 3.0;
            (e, v)
        })
        .collect()
}

/// Small dense inverse by Gauss-Jordan with partial pivoting.
pub fn invert(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| {
                m[x * n + col]
                    .abs()
                    .partial_cmp(&m[y * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        for k in 0..n {
            m.swap(col * n + k, piv * n + k);
            inv.swap(col * n + k, piv * n + k);
        }
        let d = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                for k in 0..n {
                    m[r * n + k] -= f * m[col * n + k];
                    inv[r * n + k] -= f * inv[col * n + k];
                }
            }
        }
    }
    inv
}

/// Five-point first derivative of a vector function along axis `k`.
fn fd5(f: &dyn Fn(&[f64]) -> Vec<f64>, z: &[f64], k: usize, h: f64) -> Vec<f64> {
    let at = |o: f64| {
        let mut p = z.to_vec();
        p[k] += o * h;
        f(&p)
    };
    let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
    (0..m2.len())
        .map(|i| (-p2[i] + 8.0 * p1[i] - 8.0 * m1[i] + m2[i]) / (12.0 * h))
        .collect()
}

/// Scalar curvature of the metric field `metric` (row-major `r x r`) at `z`,
/// with Christoffels and their derivatives taken by nested five-point
/// central differences of step `h`.
pub fn fd_scalar_curvature(metric: &dyn Fn(&[f64]) -> Vec<f64>, z: &[f64], h: f64) -> f64 {
    let r = z.len();
    let christoffel = |p: &[f64]| -> Vec<f64> {
        let g = metric(p);
        let gi = invert(&g, r);
        let dg: Vec<Vec<f64>> = (0..r).map(|k| fd5(metric, p, k, h)).collect();
        let mut out = vec![0.0; r * r * r];
        for c in 0..r {
            for a in 0..r {
                for b in 0..r {
                    let mut s = 0.0;
                    for d in 0..r {
                        s += 0.5
                            * gi[c * r + d]
                            * (dg[a][b * r + d] + dg[b][a * r + d] - dg[d][a * r + b]);
                    }
                    out[(c * r + a) * r + b] = s;
                }
            }
        }
        out
    };
    let gam = christoffel(z);
    let dgam: Vec<Vec<f64>> = (0..r).map(|k| fd5(&christoffel, z, k, h)).collect();
    let g = |c: usize, a: usize, b: usize| gam[(c * r + a) * r + b];
    let dg = |k: usize, c: usize, a: usize, b: usize| dgam[k][(c * r + a) * r + b];
    // Ric_bd = ∂a Γ^a_db − ∂d Γ^a_ab + Γ^a_ae Γ^e_db − Γ^a_de Γ^e_ab
    let gi = invert(&metric(z), r);
    let mut scalar = 0.0;
    for b in 0..r {
        for d in 0..r {
            let mut ric = 0.0;
            for a in 0..r {
                ric += dg(a, a, d, b) - dg(d, a, a, b);
                for e in 0..r {
                    ric += g(a, a, e) * g(e, d, b) - g(a, d, e) * g(e, a, b);
                }
            }
            scalar += gi[b * r + d] * ric;
        }
    }
    scalar
}
