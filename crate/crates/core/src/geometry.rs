//! Pointwise structure of the Hessian metric `g = ∂∂Φ` in a radiant chart.
//!
//! The flat connection is implicit: in the model's chart its Christoffel
//! symbols vanish, so covariant derivatives are coordinate partials.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, symmetric_eigen, Mat, SymmetricEigen};
use crate::models::PotentialModel;
use crate::scalar::Real;

/// Default relative threshold below which an eigenvalue counts as zero.
pub const DEFAULT_TOL_RANK: f64 = 1e-9;

/// `g`, `∂g` and `∂∂g` at one point, all read off a single order-4 jet of Φ.
#[derive(Debug, Clone)]
pub struct MetricField<T> {
    point: Vec<T>,
    potential: T,
    gradient: Vec<T>,
    g: Mat<T>,
    dg: Vec<T>,
    d2g: Vec<T>,
}

impl<T: Real> MetricField<T> {
    /// Assemble from raw arrays (row-major; `dg` has `n^3` and `d2g` `n^4`
    /// entries). Used for fixtures; [`hessian_metric`] is the normal route.
    pub fn from_parts(point: Vec<T>, g: Mat<T>, dg: Vec<T>, d2g: Vec<T>) -> Result<Self> {
        let n = point.len();
        if g.rows() != n || g.cols() != n || dg.len() != n.pow(3) || d2g.len() != n.pow(4) {
            return Err(Error::Dimension(format!(
                "metric field arrays do not match dimension {n}"
            )));
        }
        Ok(MetricField {
            point,
            potential: T::nan(),
            gradient: vec![T::nan(); n],
            g,
            dg,
            d2g,
        })
    }

    pub fn dim(&self) -> usize {
        self.point.len()
    }

    pub fn point(&self) -> &[T] {
        &self.point
    }

    /// Φ at the point (NaN for fixtures).
    pub fn potential(&self) -> T {
        self.potential
    }

    pub fn gradient(&self) -> &[T] {
        &self.gradient
    }

    pub fn g(&self) -> &Mat<T> {
        &self.g
    }

    /// `∂k g_ij`
    pub fn dg(&self, i: usize, j: usize, k: usize) -> T {
        let n = self.dim();
        self.dg[(i * n + j) * n + k]
    }

    /// `∂l ∂k g_ij`
    pub fn d2g(&self, i: usize, j: usize, k: usize, l: usize) -> T {
        let n = self.dim();
        self.d2g[((i * n + j) * n + k) * n + l]
    }

    pub fn dg_raw(&self) -> &[T] {
        &self.dg
    }

    pub fn d2g_raw(&self) -> &[T] {
        &self.d2g
    }
}

/// Hessian metric of `Φ = -S` at `point`.
pub fn hessian_metric<T: Real>(model: &PotentialModel, point: &[T]) -> Result<MetricField<T>> {
    ensure_domain(model, point)?;
    let jet = model.potential_jet(point, 4)?;
    let n = point.len();
    Ok(MetricField {
        point: point.to_vec(),
        potential: jet.value(),
        gradient: jet.gradient()?,
        g: Mat::from_vec(n, n, jet.hessian()?),
        dg: jet.derivative_tensor(3)?,
        d2g: jet.derivative_tensor(4)?,
    })
}

pub(crate) fn ensure_domain<T: Real>(model: &PotentialModel, point: &[T]) -> Result<()> {
    if point.len() != model.dim() {
        return Err(Error::Dimension(format!(
            "model {} has {} coordinates, point has {}",
            model.name(),
            model.dim(),
            point.len()
        )));
    }
    if !model.domain_check(point) {
        return Err(Error::Domain(
            point.iter().map(|x| x.to_f64_lossy()).collect(),
        ));
    }
    Ok(())
}

/// Null space of `♭` at a point.
#[derive(Debug, Clone)]
pub struct KernelBasis<T> {
    pub rank: usize,
    /// Orthonormal, first nonzero component positive, ascending |eigenvalue|.
    pub basis: Vec<Vec<T>>,
    /// Full spectrum, ascending.
    pub eigenvalues: Vec<T>,
    /// Largest `‖g v - λ v‖` over all eigenpairs.
    pub eigen_residual: T,
}

/// Flip `v` so its first non-negligible component is positive.
pub fn canonical_sign<T: Real>(v: &mut [T]) {
    let scale = v.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
    let tiny = scale * T::lit(1e-12);
    if let Some(first) = v.iter().find(|x| x.abs() > tiny) {
        if *first < T::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn eigen_residual<T: Real>(g: &Mat<T>, eig: &SymmetricEigen<T>) -> T {
    (0..g.rows())
        .map(|k| {
            let v = eig.vector(k);
            let gv = g.matvec(&v);
            let r: Vec<T> = gv
                .iter()
                .zip(&v)
                .map(|(&a, &b)| a - eig.values[k] * b)
                .collect();
            norm(&r)
        })
        .fold(T::zero(), T::max)
}

/// Indices of the eigenpairs whose eigenvalue counts as zero, ascending |λ|.
fn null_indices<T: Real>(values: &[T], tol_rel: T) -> Vec<usize> {
    let scale = values.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
    let mut idx: Vec<usize> = (0..values.len())
        .filter(|&k| scale.is_zero() || values[k].abs() <= tol_rel * scale)
        .collect();
    idx.sort_by(|&a, &b| {
        values[a]
            .abs()
            .partial_cmp(&values[b].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// Eigenvalues count as zero when `|λ| <= tol_rel * max|λ|`.
pub fn kernel<T: Real>(mf: &MetricField<T>, tol_rel: T) -> KernelBasis<T> {
    kernel_of(mf.g(), tol_rel)
}

pub fn kernel_of<T: Real>(g: &Mat<T>, tol_rel: T) -> KernelBasis<T> {
    let eig = symmetric_eigen(g);
    let null = null_indices(&eig.values, tol_rel);
    let basis = null
        .iter()
        .map(|&k| {
            let mut v = eig.vector(k);
            canonical_sign(&mut v);
            v
        })
        .collect::<Vec<_>>();
    KernelBasis {
        rank: g.rows() - basis.len(),
        basis,
        eigen_residual: eigen_residual(g, &eig),
        eigenvalues: eig.values,
    }
}

/// Components of the radiant field `ρ = x^i ∂_i` in a radiant chart.
pub fn radiant_field<T: Real>(point: &[T]) -> Vec<T> {
    point.to_vec()
}

/// `ρ(Φ) - Φ`. Constant on the domain iff `dΦ` is extensive; for the
/// thermodynamic models the constant is the entropy offset `S0`.
pub fn euler_defect<T: Real>(model: &PotentialModel, point: &[T]) -> Result<T> {
    ensure_domain(model, point)?;
    let jet = model.potential_jet(point, 1)?;
    let rho = radiant_field(point);
    Ok(dot(&rho, &jet.gradient()?) - jet.value())
}

fn guard<T: Real>() -> T {
    T::lit(1e-300).max(T::min_positive_value())
}

/// `‖g ρ‖ / (‖g‖_F ‖ρ‖ + ε)`; zero exactly when `ρ^♭ = 0`.
pub fn gibbs_duhem_residual<T: Real>(mf: &MetricField<T>) -> T {
    let rho = radiant_field(mf.point());
    let g_rho = mf.g().matvec(&rho);
    norm(&g_rho) / (mf.g().frobenius() * norm(&rho) + guard())
}

/// Largest asymmetry of `∂k g_ij` under index permutations, relative to
/// `max|∂g|`.
pub fn codazzi_residual<T: Real>(mf: &MetricField<T>) -> T {
    let n = mf.dim();
    let scale = mf.dg_raw().iter().fold(T::zero(), |a, &x| a.max(x.abs()));
    let mut worst = T::zero();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let base = mf.dg(i, j, k);
                for other in [
                    mf.dg(i, k, j),
                    mf.dg(j, i, k),
                    mf.dg(j, k, i),
                    mf.dg(k, i, j),
                    mf.dg(k, j, i),
                ] {
                    worst = worst.max((base - other).abs());
                }
            }
        }
    }
    worst / (scale + guard())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PsdVerdict {
    Psd,
    Indefinite,
}

#[derive(Debug, Clone, Copy)]
pub struct PsdReport<T> {
    pub verdict: PsdVerdict,
    pub min_eigenvalue: T,
    pub max_eigenvalue: T,
}

/// Positive semi-definite iff `λ_min >= -tol_rel * λ_max`.
pub fn psd_check<T: Real>(mf: &MetricField<T>, tol_rel: T) -> PsdReport<T> {
    psd_check_of(mf.g(), tol_rel)
}

pub fn psd_check_of<T: Real>(g: &Mat<T>, tol_rel: T) -> PsdReport<T> {
    let eig = symmetric_eigen(g);
    let min = eig.values.first().copied().unwrap_or(T::zero());
    let max = eig.values.last().copied().unwrap_or(T::zero());
    let verdict = if min >= -tol_rel * max.max(T::zero()) {
        PsdVerdict::Psd
    } else {
        PsdVerdict::Indefinite
    };
    PsdReport {
        verdict,
        min_eigenvalue: min,
        max_eigenvalue: max,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InvolutivityReport<T> {
    pub residual: T,
    pub kernel_dim: usize,
    pub trivially_involutive: bool,
}

/// Lie-bracket test of the kernel distribution around `point`.
///
/// Kernel fields are `X_a(x) = P(x) v_a`, where `v_a` is the kernel basis at
/// the base point and `P(x)` the orthogonal projector onto the kernel at `x`.
/// Brackets are central differences with step `1e-4 (1 + ‖p‖)`. The test
/// runs at the point and at `probe_count - 1` seeded jitters of it.
pub fn involutivity_residual<T: Real>(
    model: &PotentialModel,
    point: &[T],
    probe_count: usize,
    tol_rank: T,
) -> Result<InvolutivityReport<T>> {
    let base = hessian_metric(model, point)?;
    let ker = kernel(&base, tol_rank);
    let k = ker.basis.len();
    if k < 2 {
        return Ok(InvolutivityReport {
            residual: T::zero(),
            kernel_dim: k,
            trivially_involutive: true,
        });
    }
    let reference = ker.basis.clone();
    let fields = |x: &[T]| -> Result<Vec<Vec<T>>> {
        let n = x.len();
        let g = Mat::from_vec(n, n, model.potential_jet(x, 2)?.hessian()?);
        let eig = symmetric_eigen(&g);
        let mut by_size: Vec<usize> = (0..n).collect();
        by_size.sort_by(|&a, &b| {
            eig.values[a]
                .abs()
                .partial_cmp(&eig.values[b].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let span: Vec<Vec<T>> = by_size[..k].iter().map(|&i| eig.vector(i)).collect();
        Ok(reference.iter().map(|v| project(&span, v)).collect())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x1bad_5eed);
    let mut worst = T::zero();
    for probe in 0..probe_count.max(1) {
        let p: Vec<T> = if probe == 0 {
            point.to_vec()
        } else {
            point
                .iter()
                .map(|&x| x * T::lit(1.0 + rng.gen_range(-0.01..0.01)))
                .collect()
        };
        if !model.domain_check(&p) {
            continue;
        }
        worst = worst.max(bracket_residual(&fields, &p)?);
    }
    Ok(InvolutivityReport {
        residual: worst,
        kernel_dim: k,
        trivially_involutive: false,
    })
}

/// Projection of `v` onto the span of the orthonormal vectors `span`.
fn project<T: Real>(span: &[Vec<T>], v: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); v.len()];
    for e in span {
        let c = dot(e, v);
        for (o, &x) in out.iter_mut().zip(e) {
            *o = *o + c * x;
        }
    }
    out
}

fn orthonormalize<T: Real>(vectors: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for e in &out {
            let c = dot(e, &w);
            for (x, &y) in w.iter_mut().zip(e) {
                *x = *x - c * y;
            }
        }
        let len = norm(&w);
        if len > T::epsilon().sqrt() * norm(v).max(T::min_positive_value()) {
            out.push(w.into_iter().map(|x| x / len).collect());
        }
    }
    out
}

/// Worst normalized component of `[X_a, X_b](p)` outside `span{X_a(p)}` over
/// all pairs of the frame returned by `fields`.
///
/// The normalization is `max(‖[X,Y]‖, ‖X‖‖Y‖ / (1 + ‖p‖))`; the floor keeps
/// nearly commuting fields from amplifying differencing noise.
pub fn bracket_residual<T, F>(fields: &F, p: &[T]) -> Result<T>
where
    T: Real,
    F: Fn(&[T]) -> Result<Vec<Vec<T>>>,
{
    let n = p.len();
    let h = T::lit(1e-4) * (T::one() + norm(p));
    let at_p = fields(p)?;
    let k = at_p.len();
    // jac[a][m] = ∂_m X_a
    let mut jac: Vec<Vec<Vec<T>>> = vec![vec![vec![T::zero(); n]; n]; k];
    for m in 0..n {
        let mut plus = p.to_vec();
        let mut minus = p.to_vec();
        plus[m] = plus[m] + h;
        minus[m] = minus[m] - h;
        let fp = fields(&plus)?;
        let fm = fields(&minus)?;
        for a in 0..k {
            for i in 0..n {
                jac[a][m][i] = (fp[a][i] - fm[a][i]) / (h + h);
            }
        }
    }
    let directional = |a: usize, along: &[T]| -> Vec<T> {
        (0..n)
            .map(|i| (0..n).fold(T::zero(), |acc, m| acc + jac[a][m][i] * along[m]))
            .collect()
    };
    let span = orthonormalize(&at_p);
    let mut worst = T::zero();
    for a in 0..k {
        for b in a + 1..k {
            let yx = directional(b, &at_p[a]);
            let xy = directional(a, &at_p[b]);
            let bracket: Vec<T> = yx.iter().zip(&xy).map(|(&u, &v)| u - v).collect();
            let inside = project(&span, &bracket);
            let outside: Vec<T> = bracket.iter().zip(&inside).map(|(&u, &v)| u - v).collect();
            let floor = norm(&at_p[a]) * norm(&at_p[b]) / (T::one() + norm(p));
            let denom = norm(&bracket).max(floor).max(T::min_positive_value());
            worst = worst.max(norm(&outside) / denom);
        }
    }
    Ok(worst)
}
