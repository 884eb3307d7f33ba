//! Hessian submanifolds cut out by linear constraints `B x = c` in a radiant
//! chart, and the Riemannian and dual Hessian structure on them.
//!
//! A slice comes with an adapted chart `x̃ = T x` whose last `n - r` rows are
//! `B`; the first `r` components of `x̃` are the slice coordinates `z`. The
//! embedding `z ↦ x = T⁻¹ (z, c)` is affine, so the pulled-back flat
//! connection has vanishing Christoffel symbols in `z` and everything below
//! is plain index arithmetic on jets of `Φ`.
//!
//! Index layouts (row-major): pullback derivatives `∂γ ḡαβ` at `(α, β, γ)`,
//! `∂δ∂γ ḡαβ` at `(α, β, γ, δ)`; Christoffels `Γ^γ_αβ` at `(γ, α, β)` and
//! their derivatives `∂ε Γ^γ_αβ` at `(γ, α, β, ε)`; Riemann `R^α_βγδ` at
//! `(α, β, γ, δ)`.

use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::geometry::{ensure_domain, hessian_metric};
use crate::jet::Jet;
use crate::linalg::{pivot_columns, symmetric_eigen, Mat};
use crate::models::PotentialModel;
use crate::scalar::{Field, Real};

/// Relative rank tolerance for the constraint matrix.
pub const SLICE_RANK_TOL: f64 = 1e-12;
/// `λ_min(ḡ) > NONDEGENERACY_TOL · λ_max(ḡ)` is required for a Riemannian slice.
pub const NONDEGENERACY_TOL: f64 = 1e-9;
/// Agreement threshold between the two dual-potential formulas.
pub const DUAL_MISMATCH_TOL: f64 = 1e-8;

/// Linear slice `{x : B x = c}` with its adapted chart.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSpec<F> {
    constraints: Mat<F>,
    constants: Vec<F>,
    chart: Mat<F>,
    chart_inverse: Mat<F>,
}

/// Slice `{x ∈ R^n : B x = c}`.
///
/// The adapted chart's leading rows are the standard basis vectors of the
/// non-pivot columns of `B` (complete-pivoting elimination), with their
/// component in the row space of `B` removed; its trailing rows are `B`.
pub fn make_slice<F: Field>(b: &Mat<F>, c: &[F], n: usize) -> Result<SliceSpec<F>> {
    let rows = b.rows();
    if b.cols() != n || c.len() != rows {
        return Err(Error::Dimension(format!(
            "constraint matrix is {}x{} with {} constants, ambient dimension {n}",
            rows,
            b.cols(),
            c.len()
        )));
    }
    if rows == 0 || rows >= n {
        return Err(Error::Dimension(format!(
            "{rows} constraints in dimension {n} leave no slice of dimension 1..{n}"
        )));
    }
    let pivots = pivot_columns(b, SLICE_RANK_TOL);
    if pivots.rank < rows {
        return Err(Error::RankDeficient {
            rank: pivots.rank,
            rows,
        });
    }
    let bt = b.transpose();
    let gram_inv = b
        .matmul(&bt)
        .inverse(SLICE_RANK_TOL)
        .ok_or(Error::RankDeficient {
            rank: pivots.rank,
            rows,
        })?;
    // projector onto the row space of B, as P = Bᵀ (B Bᵀ)⁻¹ B
    let row_space = bt.matmul(&gram_inv).matmul(b);
    let mut chart = Mat::zeros(n, n);
    let free = (0..n).filter(|j| !pivots.columns.contains(j));
    for (row, j) in free.enumerate() {
        for k in 0..n {
            let e = if k == j { F::one() } else { F::zero() };
            chart[(row, k)] = e - row_space[(j, k)].clone();
        }
    }
    let r = n - rows;
    for i in 0..rows {
        for k in 0..n {
            chart[(r + i, k)] = b[(i, k)].clone();
        }
    }
    let chart_inverse = chart.inverse(SLICE_RANK_TOL).ok_or(Error::RankDeficient {
        rank: pivots.rank,
        rows,
    })?;
    Ok(SliceSpec {
        constraints: b.clone(),
        constants: c.to_vec(),
        chart,
        chart_inverse,
    })
}

impl<F: Field> SliceSpec<F> {
    pub fn ambient_dim(&self) -> usize {
        self.chart.rows()
    }

    pub fn slice_dim(&self) -> usize {
        self.ambient_dim() - self.constraints.rows()
    }

    pub fn constraints(&self) -> &Mat<F> {
        &self.constraints
    }

    pub fn constants(&self) -> &[F] {
        &self.constants
    }

    /// `T`, with `x̃ = T x`.
    pub fn adapted_chart(&self) -> &Mat<F> {
        &self.chart
    }

    pub fn chart_inverse(&self) -> &Mat<F> {
        &self.chart_inverse
    }

    /// Constant Jacobian `∂x/∂z` of the embedding (`n x r`).
    pub fn embedding_jacobian(&self) -> Mat<F> {
        self.chart_inverse.columns(0, self.slice_dim())
    }

    /// `x = T⁻¹ (z, c)`.
    pub fn embed(&self, z: &[F]) -> Result<Vec<F>> {
        if z.len() != self.slice_dim() {
            return Err(Error::Dimension(format!(
                "slice has dimension {}, got {} coordinates",
                self.slice_dim(),
                z.len()
            )));
        }
        let full: Vec<F> = z.iter().chain(&self.constants).cloned().collect();
        Ok(self.chart_inverse.matvec(&full))
    }

    /// Slice coordinates of an ambient point (first `r` components of `T x`).
    pub fn coordinates_of(&self, x: &[F]) -> Vec<F> {
        let full = self.chart.matvec(x);
        full[..self.slice_dim()].to_vec()
    }

    /// `B · (∂x/∂z)`, zero for a valid slice chart.
    pub fn tangency_defect(&self) -> Mat<F> {
        self.constraints.matmul(&self.embedding_jacobian())
    }
}

impl SliceSpec<BigRational> {
    pub fn to_real<T: Real>(&self) -> SliceSpec<T> {
        let conv = |m: &Mat<BigRational>| m.map(|x| T::lit(x.approx_f64()));
        SliceSpec {
            constraints: conv(&self.constraints),
            constants: self
                .constants
                .iter()
                .map(|x| T::lit(x.approx_f64()))
                .collect(),
            chart: conv(&self.chart),
            chart_inverse: conv(&self.chart_inverse),
        }
    }
}

/// `ι*g` and its first two derivatives in slice coordinates.
#[derive(Debug, Clone)]
pub struct PullbackMetric<T> {
    pub z: Vec<T>,
    pub x: Vec<T>,
    /// `ι*Φ` and its z-gradient (NaN for fixtures).
    pub potential: T,
    pub gradient: Vec<T>,
    pub metric: Mat<T>,
    dmetric: Vec<T>,
    d2metric: Vec<T>,
    /// `ι*Φ`'s third z-derivatives straight from the z-jet.
    third: Vec<T>,
    /// Relative difference between `Jᵀ g J` and the z-Hessian of `ι*Φ`.
    pub two_path_defect: T,
    /// Same comparison for the first and second metric derivatives.
    pub two_path_derivative_defect: T,
}

impl<T: Real> PullbackMetric<T> {
    /// Fixture constructor; derivative arrays are `r^3` and `r^4` long.
    pub fn from_parts(
        z: Vec<T>,
        metric: Mat<T>,
        dmetric: Vec<T>,
        d2metric: Vec<T>,
    ) -> Result<Self> {
        let r = z.len();
        if metric.rows() != r
            || metric.cols() != r
            || dmetric.len() != r.pow(3)
            || d2metric.len() != r.pow(4)
        {
            return Err(Error::Dimension(format!(
                "pullback arrays do not match dimension {r}"
            )));
        }
        Ok(PullbackMetric {
            x: Vec::new(),
            potential: T::nan(),
            gradient: vec![T::nan(); r],
            third: dmetric.clone(),
            z,
            metric,
            dmetric,
            d2metric,
            two_path_defect: T::zero(),
            two_path_derivative_defect: T::zero(),
        })
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// `∂γ ḡαβ`
    pub fn dmetric(&self, a: usize, b: usize, c: usize) -> T {
        let r = self.dim();
        self.dmetric[(a * r + b) * r + c]
    }

    /// `∂δ ∂γ ḡαβ`
    pub fn d2metric(&self, a: usize, b: usize, c: usize, d: usize) -> T {
        let r = self.dim();
        self.d2metric[((a * r + b) * r + c) * r + d]
    }

    pub fn dmetric_raw(&self) -> &[T] {
        &self.dmetric
    }
}

fn max_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &x| a.max(x.abs()))
}

fn relative_gap<T: Real>(a: &[T], b: &[T]) -> T {
    let diff = a
        .iter()
        .zip(b)
        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()));
    let scale = max_abs(a).max(max_abs(b));
    if scale.is_zero() {
        diff
    } else {
        diff / scale
    }
}

/// Jets of the ambient coordinates as affine functions of `z`.
fn coordinate_jets<T: Real>(slice: &SliceSpec<T>, z: &[T], order: usize) -> Result<Vec<Jet<T>>> {
    let x = slice.embed(z)?;
    let jac = slice.embedding_jacobian();
    let r = slice.slice_dim();
    let seeds = (0..r)
        .map(|a| Jet::variable(T::zero(), a, r, order))
        .collect::<Result<Vec<_>, _>>()?;
    x.iter()
        .enumerate()
        .map(|(i, &xi)| {
            let mut acc = Jet::constant(xi, r, order)?;
            for (a, s) in seeds.iter().enumerate() {
                acc = acc.add(&s.scale(jac[(i, a)]))?;
            }
            Ok(acc)
        })
        .collect()
}

/// Jet of `ι*Φ` in slice coordinates.
pub fn pulled_back_potential<T: Real>(
    model: &PotentialModel,
    slice: &SliceSpec<T>,
    z: &[T],
    order: usize,
) -> Result<Jet<T>> {
    check_slice(model, slice)?;
    let x = slice.embed(z)?;
    ensure_domain(model, &x)?;
    Ok(model.potential_jet_with_inputs(&coordinate_jets(slice, z, order)?)?)
}

fn check_slice<T: Real>(model: &PotentialModel, slice: &SliceSpec<T>) -> Result<()> {
    if slice.ambient_dim() != model.dim() {
        return Err(Error::Dimension(format!(
            "slice lives in dimension {}, model {} has {}",
            slice.ambient_dim(),
            model.name(),
            model.dim()
        )));
    }
    Ok(())
}

/// `ḡ = Jᵀ g J` with derivatives by the chain rule, cross-checked against the
/// z-jet of `ι*Φ`.
pub fn pullback_metric<T: Real>(
    model: &PotentialModel,
    slice: &SliceSpec<T>,
    z: &[T],
) -> Result<PullbackMetric<T>> {
    check_slice(model, slice)?;
    let x = slice.embed(z)?;
    let mf = hessian_metric(model, &x)?;
    let jac = slice.embedding_jacobian();
    let (n, r) = (slice.ambient_dim(), slice.slice_dim());

    let metric = jac.transpose().matmul(mf.g()).matmul(&jac);

    // contract every ambient index with J
    let mut dmetric = vec![T::zero(); r.pow(3)];
    for a in 0..r {
        for b in 0..r {
            for c in 0..r {
                let mut s = T::zero();
                for i in 0..n {
                    for j in 0..n {
                        let ij = jac[(i, a)] * jac[(j, b)];
                        if ij.is_zero() {
                            continue;
                        }
                        for k in 0..n {
                            s = s + mf.dg(i, j, k) * ij * jac[(k, c)];
                        }
                    }
                }
                dmetric[(a * r + b) * r + c] = s;
            }
        }
    }
    let mut d2metric = vec![T::zero(); r.pow(4)];
    for a in 0..r {
        for b in 0..r {
            for c in 0..r {
                for d in 0..r {
                    let mut s = T::zero();
                    for i in 0..n {
                        for j in 0..n {
                            let ij = jac[(i, a)] * jac[(j, b)];
                            if ij.is_zero() {
                                continue;
                            }
                            for k in 0..n {
                                let ijk = ij * jac[(k, c)];
                                if ijk.is_zero() {
                                    continue;
                                }
                                for l in 0..n {
                                    s = s + mf.d2g(i, j, k, l) * ijk * jac[(l, d)];
                                }
                            }
                        }
                    }
                    d2metric[((a * r + b) * r + c) * r + d] = s;
                }
            }
        }
    }

    let jet = model.potential_jet_with_inputs(&coordinate_jets(slice, z, 4)?)?;
    let hess = jet.hessian()?;
    let third = jet.derivative_tensor(3)?;
    let fourth = jet.derivative_tensor(4)?;
    let two_path_defect = relative_gap(metric.data(), &hess);
    let two_path_derivative_defect =
        relative_gap(&dmetric, &third).max(relative_gap(&d2metric, &fourth));

    Ok(PullbackMetric {
        z: z.to_vec(),
        x,
        potential: jet.value(),
        gradient: jet.gradient()?,
        metric,
        dmetric,
        d2metric,
        third,
        two_path_defect,
        two_path_derivative_defect,
    })
}

/// Levi-Civita connection of the pullback metric and its first derivatives.
#[derive(Debug, Clone)]
pub struct Connection<T> {
    pub dim: usize,
    pub inverse_metric: Mat<T>,
    /// `Γ_δαβ` at `(δ, α, β)`.
    pub lowered: Vec<T>,
    /// `Γ^γ_αβ` at `(γ, α, β)`.
    pub christoffel: Vec<T>,
    /// `∂ε Γ^γ_αβ` at `(γ, α, β, ε)`.
    pub dchristoffel: Vec<T>,
}

impl<T: Real> Connection<T> {
    pub fn gamma(&self, up: usize, a: usize, b: usize) -> T {
        let r = self.dim;
        self.christoffel[(up * r + a) * r + b]
    }

    pub fn dgamma(&self, up: usize, a: usize, b: usize, e: usize) -> T {
        let r = self.dim;
        self.dchristoffel[((up * r + a) * r + b) * r + e]
    }
}

/// Christoffel symbols `Γ^γ_αβ = ½ ḡ^{γδ}(∂α ḡβδ + ∂β ḡαδ − ∂δ ḡαβ)` and their
/// derivatives from the second metric derivatives.
pub fn levi_civita<T: Real>(pb: &PullbackMetric<T>) -> Result<Connection<T>> {
    let r = pb.dim();
    let eig = symmetric_eigen(&pb.metric);
    let (lo, hi) = (eig.values[0], eig.values[r - 1]);
    if !(lo > T::lit(NONDEGENERACY_TOL) * hi) {
        return Err(Error::DegeneratePullback {
            min_eigenvalue: lo.to_f64_lossy(),
            max_eigenvalue: hi.to_f64_lossy(),
        });
    }
    let inv = pb
        .metric
        .inverse(f64::EPSILON)
        .ok_or(Error::DegeneratePullback {
            min_eigenvalue: lo.to_f64_lossy(),
            max_eigenvalue: hi.to_f64_lossy(),
        })?;
    let half = T::lit(0.5);
    let idx3 = |a: usize, b: usize, c: usize| (a * r + b) * r + c;
    let idx4 = |a: usize, b: usize, c: usize, d: usize| ((a * r + b) * r + c) * r + d;

    let mut lowered = vec![T::zero(); r.pow(3)];
    let mut dlowered = vec![T::zero(); r.pow(4)];
    for d in 0..r {
        for a in 0..r {
            for b in 0..r {
                lowered[idx3(d, a, b)] =
                    half * (pb.dmetric(b, d, a) + pb.dmetric(a, d, b) - pb.dmetric(a, b, d));
                for e in 0..r {
                    dlowered[idx4(d, a, b, e)] = half
                        * (pb.d2metric(b, d, a, e) + pb.d2metric(a, d, b, e)
                            - pb.d2metric(a, b, d, e));
                }
            }
        }
    }

    // ∂ε ḡ^{γδ} = −ḡ^{γμ} ∂ε ḡμν ḡ^{νδ}
    let mut dinv = vec![T::zero(); r.pow(3)];
    for g in 0..r {
        for d in 0..r {
            for e in 0..r {
                let mut s = T::zero();
                for m in 0..r {
                    for nu in 0..r {
                        s = s + inv[(g, m)] * pb.dmetric(m, nu, e) * inv[(nu, d)];
                    }
                }
                dinv[idx3(g, d, e)] = -s;
            }
        }
    }

    let mut christoffel = vec![T::zero(); r.pow(3)];
    let mut dchristoffel = vec![T::zero(); r.pow(4)];
    for g in 0..r {
        for a in 0..r {
            for b in 0..r {
                let mut s = T::zero();
                for d in 0..r {
                    s = s + inv[(g, d)] * lowered[idx3(d, a, b)];
                }
                christoffel[idx3(g, a, b)] = s;
                for e in 0..r {
                    let mut ds = T::zero();
                    for d in 0..r {
                        ds = ds
                            + dinv[idx3(g, d, e)] * lowered[idx3(d, a, b)]
                            + inv[(g, d)] * dlowered[idx4(d, a, b, e)];
                    }
                    dchristoffel[idx4(g, a, b, e)] = ds;
                }
            }
        }
    }
    Ok(Connection {
        dim: r,
        inverse_metric: inv,
        lowered,
        christoffel,
        dchristoffel,
    })
}

/// `R^α_βγδ = ∂γ Γ^α_δβ − ∂δ Γ^α_γβ + Γ^α_γε Γ^ε_δβ − Γ^α_δε Γ^ε_γβ`
/// for any torsion-free connection given by `(Γ, ∂Γ)` in the layouts above.
pub fn riemann_tensor<T: Real>(gamma: &[T], dgamma: &[T], r: usize) -> Vec<T> {
    let g = |u: usize, a: usize, b: usize| gamma[(u * r + a) * r + b];
    let dg = |u: usize, a: usize, b: usize, e: usize| dgamma[((u * r + a) * r + b) * r + e];
    let mut out = vec![T::zero(); r.pow(4)];
    for al in 0..r {
        for be in 0..r {
            for ga in 0..r {
                for de in 0..r {
                    let mut s = dg(al, de, be, ga) - dg(al, ga, be, de);
                    for ep in 0..r {
                        s = s + g(al, ga, ep) * g(ep, de, be) - g(al, de, ep) * g(ep, ga, be);
                    }
                    out[((al * r + be) * r + ga) * r + de] = s;
                }
            }
        }
    }
    out
}

/// Residual diagnostics attached to a curvature evaluation.
#[derive(Debug, Clone, Copy)]
pub struct CurvatureResiduals<T> {
    /// `max |Γ^γ_αβ − Γ^γ_βα| / max|Γ|`
    pub christoffel_symmetry: T,
    /// `max |R^α_βγδ + R^α_βδγ|`, relative to the curvature scale.
    pub riemann_antisymmetry: T,
    /// `max |∂γ ḡαβ − Γ^δ_γα ḡδβ − Γ^δ_γβ ḡαδ| / max|∂ḡ|`
    pub metric_compatibility: T,
    /// Cyclic sum `R^α_βγδ + R^α_γδβ + R^α_δβγ`, relative to the curvature scale.
    pub bianchi: T,
    /// `max |Γ_δαβ − ½ ∂α∂β∂δ ι*Φ| / max|Γ_δαβ|`
    pub hessian_christoffel: T,
    /// Flatness of the dual connection `2Γ` (see [`flatness_residual`]).
    pub dual_flatness: T,
}

#[derive(Debug, Clone)]
pub struct CurvatureReport<T> {
    pub z: Vec<T>,
    pub metric: Mat<T>,
    pub christoffel: Vec<T>,
    /// `R^α_βγδ` at `(α, β, γ, δ)`.
    pub riemann: Vec<T>,
    /// `Ric_βδ = R^α_βαδ`.
    pub ricci: Mat<T>,
    pub scalar: T,
    pub residuals: CurvatureResiduals<T>,
}

/// Scale for curvature-like residuals: `max(max|Γ|², max|∂Γ|)`.
fn curvature_scale<T: Real>(gamma: &[T], dgamma: &[T]) -> T {
    let g = max_abs(gamma);
    (g * g).max(max_abs(dgamma)).max(T::min_positive_value())
}

/// `max|R| / max(max|Γ|², max|∂Γ|)` for the connection `(Γ, ∂Γ)`.
pub fn flatness_residual<T: Real>(gamma: &[T], dgamma: &[T], r: usize) -> T {
    max_abs(&riemann_tensor(gamma, dgamma, r)) / curvature_scale(gamma, dgamma)
}

pub fn curvature<T: Real>(pb: &PullbackMetric<T>, conn: &Connection<T>) -> CurvatureReport<T> {
    let r = pb.dim();
    let riemann = riemann_tensor(&conn.christoffel, &conn.dchristoffel, r);
    let rm = |a: usize, b: usize, c: usize, d: usize| riemann[((a * r + b) * r + c) * r + d];
    let mut ricci = Mat::zeros(r, r);
    for b in 0..r {
        for d in 0..r {
            ricci[(b, d)] = (0..r).fold(T::zero(), |s, a| s + rm(a, b, a, d));
        }
    }
    let mut scalar = T::zero();
    for b in 0..r {
        for d in 0..r {
            scalar = scalar + conn.inverse_metric[(b, d)] * ricci[(b, d)];
        }
    }

    let scale = curvature_scale(&conn.christoffel, &conn.dchristoffel);
    let mut sym = T::zero();
    let mut anti = T::zero();
    let mut bianchi = T::zero();
    let mut compat = T::zero();
    for a in 0..r {
        for b in 0..r {
            for c in 0..r {
                sym = sym.max((conn.gamma(a, b, c) - conn.gamma(a, c, b)).abs());
                let mut lhs = pb.dmetric(a, b, c);
                for d in 0..r {
                    lhs = lhs
                        - conn.gamma(d, c, a) * pb.metric[(d, b)]
                        - conn.gamma(d, c, b) * pb.metric[(a, d)];
                    anti = anti.max((rm(a, b, c, d) + rm(a, b, d, c)).abs());
                    bianchi = bianchi.max((rm(a, b, c, d) + rm(a, c, d, b) + rm(a, d, b, c)).abs());
                }
                compat = compat.max(lhs.abs());
            }
        }
    }
    let halved: Vec<T> = pb.third.iter().map(|&t| t * T::lit(0.5)).collect();
    let doubled = |v: &[T]| v.iter().map(|&x| x + x).collect::<Vec<_>>();
    let residuals = CurvatureResiduals {
        christoffel_symmetry: sym / max_abs(&conn.christoffel).max(T::min_positive_value()),
        riemann_antisymmetry: anti / scale,
        metric_compatibility: compat / max_abs(pb.dmetric_raw()).max(T::min_positive_value()),
        bianchi: bianchi / scale,
        hessian_christoffel: relative_gap(&conn.lowered, &halved),
        dual_flatness: flatness_residual(
            &doubled(&conn.christoffel),
            &doubled(&conn.dchristoffel),
            r,
        ),
    };
    CurvatureReport {
        z: pb.z.clone(),
        metric: pb.metric.clone(),
        christoffel: conn.christoffel.clone(),
        riemann,
        ricci,
        scalar,
        residuals,
    }
}

/// Pullback, connection and curvature at one slice point.
pub fn curvature_at<T: Real>(
    model: &PotentialModel,
    slice: &SliceSpec<T>,
    z: &[T],
) -> Result<CurvatureReport<T>> {
    let pb = pullback_metric(model, slice, z)?;
    let conn = levi_civita(&pb)?;
    Ok(curvature(&pb, &conn))
}

/// Curvature of the dual connection `∇* = 2∇ − ι*∇̄`, normalized; zero for
/// a genuine Hessian slice.
pub fn dual_flatness_residual<T: Real>(
    model: &PotentialModel,
    slice: &SliceSpec<T>,
    z: &[T],
) -> Result<T> {
    Ok(curvature_at(model, slice, z)?.residuals.dual_flatness)
}

/// Both expressions of the Legendre-dual potential.
#[derive(Debug, Clone, Copy)]
pub struct DualPotential<T> {
    /// `z^α ∂α(ι*Φ) − ι*Φ`
    pub phi_star: T,
    /// `−ι*(x̃^A ∂Φ/∂x̃^A)` over the constrained adapted coordinates.
    pub phi_star_extensive_form: T,
    /// Set when the two differ by more than [`DUAL_MISMATCH_TOL`] (relative,
    /// floored at 1); the second form presumes an extensive potential.
    pub mismatch: bool,
}

pub fn dual_potential<T: Real>(
    model: &PotentialModel,
    slice: &SliceSpec<T>,
    z: &[T],
) -> Result<DualPotential<T>> {
    let jet = pulled_back_potential(model, slice, z, 1)?;
    let grad = jet.gradient()?;
    let phi_star = z
        .iter()
        .zip(&grad)
        .fold(-jet.value(), |acc, (&za, &ga)| acc + za * ga);

    let x = slice.embed(z)?;
    let ambient_grad = model.potential_jet(&x, 1)?.gradient()?;
    let r = slice.slice_dim();
    let tinv = slice.chart_inverse();
    let mut ext = T::zero();
    for (a, &ca) in slice.constants().iter().enumerate() {
        let along =
            (0..slice.ambient_dim()).fold(T::zero(), |s, i| s + tinv[(i, r + a)] * ambient_grad[i]);
        ext = ext - ca * along;
    }
    let scale = T::one().max(phi_star.abs()).max(ext.abs());
    Ok(DualPotential {
        phi_star,
        phi_star_extensive_form: ext,
        mismatch: (phi_star - ext).abs() > T::lit(DUAL_MISMATCH_TOL) * scale,
    })
}

/// Dual affine coordinates `x*_α = ∂(ι*Φ)/∂z^α`.
pub fn dual_coordinates<T: Real>(
    model: &PotentialModel,
    slice: &SliceSpec<T>,
    z: &[T],
) -> Result<Vec<T>> {
    Ok(pulled_back_potential(model, slice, z, 1)?.gradient()?)
}

/// Richardson-extrapolated central difference of a vector function along
/// coordinate `k`.
fn central_difference<T, F>(f: &F, z: &[T], k: usize, h: T) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(&[T]) -> Result<Vec<T>>,
{
    let step = |h: T| -> Result<Vec<T>> {
        let mut p = z.to_vec();
        let mut m = z.to_vec();
        p[k] = p[k] + h;
        m[k] = m[k] - h;
        let (fp, fm) = (f(&p)?, f(&m)?);
        Ok(fp
            .iter()
            .zip(&fm)
            .map(|(&a, &b)| (a - b) / (h + h))
            .collect())
    };
    let coarse = step(h)?;
    let fine = step(h * T::lit(0.5))?;
    Ok(fine
        .iter()
        .zip(&coarse)
        .map(|(&f, &c)| (T::lit(4.0) * f - c) / T::lit(3.0))
        .collect())
}

/// Legendre invariance of the slice metric.
///
/// The Jacobian `H = ∂x*/∂z` is taken by finite differences (step
/// `1e-4 (1 + |z|)`). Then `Hess_{x*} Φ* = H⁻¹` is compared with `ḡ`
/// transported to the dual chart, `H⁻ᵀ ḡ H⁻¹`, and the Legendre gradient
/// identity `∂Φ*/∂z = ḡ z` is checked the same way. Returns the larger
/// relative discrepancy.
pub fn legendre_invariance_residual<T: Real>(
    model: &PotentialModel,
    slice: &SliceSpec<T>,
    z: &[T],
) -> Result<T> {
    let pb = pullback_metric(model, slice, z)?;
    let r = slice.slice_dim();
    let dual = |w: &[T]| dual_coordinates(model, slice, w);
    let phi_star = |w: &[T]| dual_potential(model, slice, w).map(|d| vec![d.phi_star]);

    let mut jac = Mat::zeros(r, r);
    let mut phi_grad = vec![T::zero(); r];
    for k in 0..r {
        let h = T::lit(1e-4) * (T::one() + z[k].abs());
        let col = central_difference(&dual, z, k, h)?;
        for a in 0..r {
            jac[(a, k)] = col[a];
        }
        phi_grad[k] = central_difference(&phi_star, z, k, h)?[0];
    }
    let jac_inv = jac.inverse(1e-12).ok_or(Error::SingularDualJacobian)?;
    let transported = jac_inv.transpose().matmul(&pb.metric).matmul(&jac_inv);
    let hessian_gap = relative_gap(jac_inv.data(), transported.data());

    let expected_grad = pb.metric.matvec(z);
    let gradient_gap = relative_gap(&phi_grad, &expected_grad);
    Ok(hessian_gap.max(gradient_gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::builtin;
    use crate::scalar::rational;

    fn slice(rows: &[Vec<f64>], c: &[f64]) -> SliceSpec<f64> {
        make_slice(&Mat::from_rows(rows), c, rows[0].len()).unwrap()
    }

    #[test]
    fn coordinate_slice_keeps_free_coordinates() {
        let s = slice(&[vec![0.0, 0.0, 1.0]], &[1.0]);
        assert_eq!(s.slice_dim(), 2);
        assert_eq!(s.embed(&[2.0, 3.0]).unwrap(), vec![2.0, 3.0, 1.0]);
        assert_eq!(s.coordinates_of(&[2.0, 3.0, 1.0]), vec![2.0, 3.0]);
    }

    #[test]
    fn diagonal_slice_exact_chart() {
        let b = Mat::from_rows(&[vec![rational(1, 1), rational(1, 1), rational(1, 1)]]);
        let s = make_slice(&b, &[rational(3, 1)], 3).unwrap();
        assert_eq!(s.adapted_chart().row(2), b.row(0));
        let zero = Mat::<BigRational>::zeros(1, 2);
        assert_eq!(s.tangency_defect(), zero);
        let x = s.embed(&[rational(0, 1), rational(0, 1)]).unwrap();
        let sum = x.iter().cloned().fold(rational(0, 1), |a, b| a + b);
        assert_eq!(sum, rational(3, 1));
    }

    #[test]
    fn rank_deficient_constraints() {
        let b = Mat::from_rows(&[vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]);
        assert!(matches!(
            make_slice(&b, &[1.0, 1.0], 3),
            Err(Error::RankDeficient { rank: 1, rows: 2 })
        ));
        let b = Mat::from_rows(&[vec![1.0, 0.0, 0.0]]);
        assert!(matches!(
            make_slice(&b, &[1.0], 2),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn pullback_blocks_of_ideal_gas() {
        let ig = builtin("ideal_gas", &[]).unwrap();
        let s = slice(&[vec![0.0, 0.0, 1.0]], &[1.0]);
        let pb = pullback_metric(&ig, &s, &[1.0, 1.0]).unwrap();
        let expected = [1.5, 0.0, 0.0, 1.0];
        for (a, b) in pb.metric.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(pb.two_path_defect < 1e-12);

        let s = slice(&[vec![1.0, 0.0, 0.0]], &[1.0]);
        let pb = pullback_metric(&ig, &s, &[1.0, 1.0]).unwrap();
        let expected = [1.0, -1.0, -1.0, 2.5];
        for (a, b) in pb.metric.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }

        let s = slice(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], &[1.0, 2.0]);
        let pb = pullback_metric(&ig, &s, &[0.7]).unwrap();
        assert!(pb.metric[(0, 0)] > 0.0);
    }

    #[test]
    fn flat_fixture_has_no_christoffels() {
        let pb =
            PullbackMetric::from_parts(vec![0.0; 2], Mat::identity(2), vec![0.0; 8], vec![0.0; 16])
                .unwrap();
        let conn = levi_civita(&pb).unwrap();
        assert!(conn.christoffel.iter().all(|&g| g == 0.0));
        assert_eq!(curvature(&pb, &conn).scalar, 0.0);
    }

    #[test]
    fn one_dim_christoffel_is_half_log_derivative() {
        let pb = PullbackMetric::from_parts(
            vec![1.0],
            Mat::from_vec(1, 1, vec![4.0f64]),
            vec![2.0],
            vec![3.0],
        )
        .unwrap();
        let conn = levi_civita(&pb).unwrap();
        assert!((conn.gamma(0, 0, 0) - 0.25).abs() < 1e-15);
        assert_eq!(curvature(&pb, &conn).scalar, 0.0);
    }

    #[test]
    fn ideal_gas_constant_n_christoffel() {
        let ig = builtin("ideal_gas", &[]).unwrap();
        let s = slice(&[vec![0.0, 0.0, 1.0]], &[1.0]);
        let report = curvature_at(&ig, &s, &[1.0, 1.0]).unwrap();
        assert!((report.christoffel[0] + 1.0).abs() < 1e-14);
        assert!(report.scalar.abs() < 1e-12);
    }

    #[test]
    fn tangent_slice_is_degenerate() {
        let ig = builtin("ideal_gas", &[]).unwrap();
        let s = slice(&[vec![1.0, -1.0, 0.0]], &[0.0]);
        assert!(matches!(
            curvature_at(&ig, &s, &[1.0, 1.0]),
            Err(Error::DegeneratePullback { .. })
        ));
    }

    #[test]
    fn dual_potential_of_ideal_gas() {
        let ig = builtin("ideal_gas", &[]).unwrap();
        let s = slice(&[vec![0.0, 0.0, 1.0]], &[1.0]);
        let d = dual_potential(&ig, &s, &[1.0, 1.0]).unwrap();
        assert!((d.phi_star + 2.5).abs() < 1e-12);
        assert!((d.phi_star_extensive_form + 2.5).abs() < 1e-12);
        assert!(!d.mismatch);
        let d = dual_potential(&ig, &s, &[std::f64::consts::E, 1.0]).unwrap();
        assert!((d.phi_star + 1.0).abs() < 1e-12);

        let kn = builtin("kerr_newman_naive", &[]).unwrap();
        let s = slice(&[vec![0.0, 0.0, 1.0]], &[0.3]);
        assert!(dual_potential(&kn, &s, &[2.0, 0.5]).unwrap().mismatch);
    }

    #[test]
    fn dual_coordinate_examples() {
        let ig = builtin("ideal_gas", &[]).unwrap();
        let s = slice(&[vec![0.0, 0.0, 1.0]], &[1.0]);
        let xs = dual_coordinates(&ig, &s, &[1.0, 1.0]).unwrap();
        assert!((xs[0] + 1.5).abs() < 1e-14 && (xs[1] + 1.0).abs() < 1e-14);

        let pm = builtin("paramagnet", &[]).unwrap();
        let xs = dual_coordinates(&pm, &s, &[1.0, 0.0]).unwrap();
        assert!((xs[0] + 1.0).abs() < 1e-14 && xs[1].abs() < 1e-14);
    }

    #[test]
    fn dual_flatness_and_broken_control() {
        let ig = builtin("ideal_gas", &[]).unwrap();
        let s = slice(&[vec![0.0, 0.0, 1.0]], &[1.0]);
        assert!(dual_flatness_residual(&ig, &s, &[1.0, 1.0]).unwrap() <= 1e-8);

        let s = slice(&[vec![1.0, 0.0, 0.0]], &[1.0]);
        let pb = pullback_metric(&ig, &s, &[1.3, 0.8]).unwrap();
        let conn = levi_civita(&pb).unwrap();
        let mut gamma: Vec<f64> = conn.christoffel.iter().map(|g| 2.0 * g).collect();
        let dgamma: Vec<f64> = conn.dchristoffel.iter().map(|g| 2.0 * g).collect();
        assert!(flatness_residual(&gamma, &dgamma, 2) <= 1e-8);
        gamma[1] += 0.1;
        assert!(flatness_residual(&gamma, &dgamma, 2) > 1e-3);
    }

    #[test]
    fn legendre_invariance_examples() {
        let ig = builtin("ideal_gas", &[]).unwrap();
        let s = slice(&[vec![0.0, 0.0, 1.0]], &[1.0]);
        assert!(legendre_invariance_residual(&ig, &s, &[1.0, 1.0]).unwrap() <= 1e-6);

        let pm = builtin("paramagnet", &[]).unwrap();
        assert!(legendre_invariance_residual(&pm, &s, &[1.0, 0.2]).unwrap() <= 1e-6);

        let line = slice(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], &[1.0, 1.0]);
        assert!(legendre_invariance_residual(&ig, &line, &[1.0]).unwrap() <= 1e-8);
    }
}
