//! Assembly of the equation on the grid: right-hand side, residual,
//! sparse linearization, the data homotopy, and the curvature condition
//! checker for the data `phi`.
//!
//! The residual is `sigma_k(W(u)) - g(u, grad u)` with
//! `g = u^(p-1+eps) (u^2 + |grad u|^2)^((k+1-q)/2) phi`. The raw residual is
//! linearized rather than its k-th root: both have the same zero set, and
//! the raw form avoids fractional-power derivatives where sigma_k is small.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binomial;
use crate::sparse::CsrMatrix;
use crate::sphere::{
    self, AmbientFn, FrameGradient, GridError, ScalarField, SphericalGrid, SymMatrixField,
};

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("u must be positive everywhere (min u = {min})")]
    NonPositive { min: f64 },
    #[error("phi must be positive everywhere (min phi = {min})")]
    PhiNotPositive { min: f64 },
    #[error(
        "ellipticity lost: W outside Gamma_{k} at node ({i}, {j}) (sigma1 = {s1}, sigma2 = {s2})"
    )]
    EllipticityLoss { k: usize, i: usize, j: usize, s1: f64, s2: f64 },
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Data descriptor for `phi`.
#[derive(Debug, Clone)]
pub enum PhiSpec {
    /// Constant or ambient polynomial, sampled exactly.
    Ambient(AmbientFn),
    /// Loaded from a field file; must match the run grid.
    Tabulated(ScalarField),
    /// Data manufactured so that the given support function solves the
    /// equation: `phi* = sigma_k(W(u*)) / (u*^(p-1+eps) rho^(k+1-q))`.
    /// Affine supports (translated spheres) use the closed form; anything
    /// else falls back to the discrete operators.
    Manufactured { support: AmbientFn },
}

/// One instance of the equation.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    /// Ambient dimension of the sigma_k kernel; the PDE solver requires 2.
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub q: f64,
    /// Regularization exponent; 0 for p > q solves, positive for p = q > 1.
    pub epsilon: f64,
    pub phi: PhiSpec,
}

impl ProblemSpec {
    pub fn new(
        n: usize,
        k: usize,
        p: f64,
        q: f64,
        epsilon: f64,
        phi: PhiSpec,
    ) -> Result<Self, PdeError> {
        let spec = Self::for_data_check(n, k, p, q, epsilon, phi)?;
        if epsilon == 0.0 && p <= q {
            return Err(PdeError::Invalid(format!(
                "epsilon = 0 requires p > q, got p = {p}, q = {q}"
            )));
        }
        if epsilon > 0.0 && !(p == q && p > 1.0) {
            return Err(PdeError::Invalid(format!(
                "epsilon > 0 requires p = q > 1, got p = {p}, q = {q}"
            )));
        }
        Ok(spec)
    }

    /// Constructor without the exponent-class requirement, for commands
    /// that only inspect the data (the curvature checker must accept any
    /// (p, q), including the contradictory q >= 2k + p range). The solve
    /// and eigen drivers enforce their own exponent preconditions.
    pub fn for_data_check(
        n: usize,
        k: usize,
        p: f64,
        q: f64,
        epsilon: f64,
        phi: PhiSpec,
    ) -> Result<Self, PdeError> {
        if n != 2 {
            return Err(PdeError::Invalid(format!("solver requires n = 2, got n = {n}")));
        }
        if k < 1 || k > n {
            return Err(PdeError::Invalid(format!("k = {k} outside 1..={n}")));
        }
        if !(p.is_finite() && q.is_finite() && epsilon.is_finite()) {
            return Err(PdeError::Invalid("exponents must be finite".into()));
        }
        if epsilon < 0.0 {
            return Err(PdeError::Invalid(format!("epsilon = {epsilon} must be >= 0")));
        }
        Ok(Self { n, k, p, q, epsilon, phi })
    }

    /// C_n^k, the sigma_k value of the identity matrix.
    pub fn cnk(&self) -> f64 {
        binomial(self.n, self.k)
    }

    /// The equivalent `p_eff > q` instance of the epsilon-regularized
    /// equation: exponents (p - 1 + eps, (k+1-p)/2) written as a plain
    /// problem with p_eff = p + eps.
    pub fn effective(&self) -> ProblemSpec {
        ProblemSpec {
            n: self.n,
            k: self.k,
            p: self.p + self.epsilon,
            q: self.q,
            epsilon: 0.0,
            phi: self.phi.clone(),
        }
    }

    /// Same problem with a replacement epsilon (p = q fixed).
    pub fn with_epsilon(&self, epsilon: f64) -> ProblemSpec {
        ProblemSpec { epsilon, ..self.clone() }
    }

    /// Materialize `phi` on a grid, validating positivity.
    pub fn phi_field(&self, grid: &Arc<SphericalGrid>) -> Result<ScalarField, PdeError> {
        let phi = match &self.phi {
            PhiSpec::Ambient(f) => sphere::eval_ambient(f, grid),
            PhiSpec::Tabulated(f) => {
                if !f.grid().same_layout(grid) {
                    return Err(PdeError::Invalid(format!(
                        "tabulated phi grid ({} x {}) does not match run grid ({} x {})",
                        f.grid().n_lat,
                        f.grid().n_lon,
                        grid.n_lat,
                        grid.n_lon
                    )));
                }
                f.clone()
            }
            PhiSpec::Manufactured { support } => self.manufacture_phi(support, grid)?,
        };
        let min = phi.min_value();
        if min <= 0.0 {
            return Err(PdeError::PhiNotPositive { min });
        }
        Ok(phi)
    }

    /// The manufactured exact solution, when one is defined by the data.
    pub fn manufactured_solution(&self, grid: &Arc<SphericalGrid>) -> Option<ScalarField> {
        match &self.phi {
            PhiSpec::Manufactured { support } => Some(sphere::eval_ambient(support, grid)),
            _ => None,
        }
    }

    fn manufacture_phi(
        &self,
        support: &AmbientFn,
        grid: &Arc<SphericalGrid>,
    ) -> Result<ScalarField, PdeError> {
        let u = sphere::eval_ambient(support, grid);
        let min_u = u.min_value();
        if min_u <= 0.0 {
            return Err(PdeError::NonPositive { min: min_u });
        }
        if let Some((r, a)) = support.as_affine() {
            // translated sphere: W = r I and rho^2 = r^2 + 2 r (a.x) + |a|^2
            let a_sq = a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
            if r <= a_sq.sqrt() {
                return Err(PdeError::Invalid(format!(
                    "affine support r + a.x needs r > |a| for positivity (r = {r}, |a| = {})",
                    a_sq.sqrt()
                )));
            }
            let sig = self.cnk() * r.powi(self.k as i32);
            let ep_u = self.p - 1.0 + self.epsilon;
            let ep_rho = (self.k as f64 + 1.0 - self.q) / 2.0;
            Ok(ScalarField::from_fn(grid.clone(), |_, _, x| {
                let ax = a[0] * x[0] + a[1] * x[1] + a[2] * x[2];
                let uv = r + ax;
                let rho_sq = r * r + 2.0 * r * ax + a_sq;
                sig / (uv.powf(ep_u) * rho_sq.powf(ep_rho))
            }))
        } else {
            // generic support: divide out the discrete operators so the
            // sampled support solves the discretized equation exactly
            let w = sphere::curvature_matrix(&u);
            let grad = sphere::gradient(&u);
            let ep_u = self.p - 1.0 + self.epsilon;
            let ep_rho = (self.k as f64 + 1.0 - self.q) / 2.0;
            let mut vals = Vec::with_capacity(grid.node_count());
            for idx in 0..grid.node_count() {
                let sig = match self.k {
                    1 => w.sigma1(idx),
                    _ => w.sigma2(idx),
                };
                let uv = u.values()[idx];
                let rho_sq = uv * uv + grad.norm_sq(idx);
                vals.push(sig / (uv.powf(ep_u) * rho_sq.powf(ep_rho)));
            }
            Ok(ScalarField::new(grid.clone(), vals)?)
        }
    }
}

/// Pointwise right-hand side `g = u^(p-1+eps) rho^(k+1-q) phi`.
pub fn rhs(
    u: &ScalarField,
    grad: &FrameGradient,
    phi: &ScalarField,
    spec: &ProblemSpec,
) -> Result<ScalarField, PdeError> {
    let min_u = u.min_value();
    if min_u <= 0.0 {
        return Err(PdeError::NonPositive { min: min_u });
    }
    let ep_u = spec.p - 1.0 + spec.epsilon;
    let ep_rho = (spec.k as f64 + 1.0 - spec.q) / 2.0;
    let grid = u.grid().clone();
    let mut vals = Vec::with_capacity(grid.node_count());
    for idx in 0..grid.node_count() {
        let uv = u.values()[idx];
        let rho_sq = uv * uv + grad.norm_sq(idx);
        vals.push(uv.powf(ep_u) * rho_sq.powf(ep_rho) * phi.values()[idx]);
    }
    Ok(ScalarField::new(grid, vals)?)
}

/// Pointwise residual `sigma_k(W(u)) - g`.
pub fn residual(u: &ScalarField, phi: &ScalarField, spec: &ProblemSpec) -> Result<ScalarField, PdeError> {
    let w = sphere::curvature_matrix(u);
    let grad = sphere::gradient(u);
    let g = rhs(u, &grad, phi, spec)?;
    let grid = u.grid().clone();
    let mut vals = Vec::with_capacity(grid.node_count());
    for idx in 0..grid.node_count() {
        let sig = match spec.k {
            1 => w.sigma1(idx),
            _ => w.sigma2(idx),
        };
        vals.push(sig - g.values()[idx]);
    }
    Ok(ScalarField::new(grid, vals)?)
}

/// The assembled Jacobian of [`residual`] at `u`, on the 9-point stencil.
#[derive(Debug)]
pub struct Jacobian {
    grid: Arc<SphericalGrid>,
    pub matrix: CsrMatrix,
}

impl Jacobian {
    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn apply(&self, v: &ScalarField) -> ScalarField {
        let out = self.matrix.apply(v.values());
        ScalarField::new(self.grid.clone(), out).expect("matvec preserves shape")
    }
}

/// Assemble the Jacobian of the residual map at `u`:
///
/// ```text
/// v -> sum_ij F^ij (v_;ij + v delta_ij) - g_u v - g_grad . grad v
/// ```
///
/// with `F^ij = d sigma_k / d W_ij` per node,
/// `g_u = ((p-1+eps)/u + (k+1-q) u / rho^2) g`, and the gradient coupling
/// `(k+1-q) g / rho^2 (u_t v_t + u_ph v_ph)` in the orthonormal frame.
///
/// Fails with an ellipticity-loss error naming the worst node if W leaves
/// Gamma_k anywhere (F^ij stops being positive definite there).
pub fn linearize(u: &ScalarField, phi: &ScalarField, spec: &ProblemSpec) -> Result<Jacobian, PdeError> {
    let grid = u.grid().clone();
    let w = sphere::curvature_matrix(u);
    let grad = sphere::gradient(u);
    check_cone(&w, spec.k)?;
    let g = rhs(u, &grad, phi, spec)?;

    let k1q = spec.k as f64 + 1.0 - spec.q;
    let ep_u = spec.p - 1.0 + spec.epsilon;
    let n = grid.node_count();
    let inv_t2 = 1.0 / (grid.dtheta * grid.dtheta);
    let inv_p2 = 1.0 / (grid.dphi * grid.dphi);
    let inv2t = 1.0 / (2.0 * grid.dtheta);
    let inv2p = 1.0 / (2.0 * grid.dphi);
    let inv_cross = 1.0 / (4.0 * grid.dtheta * grid.dphi);

    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(9 * n);
    for i in 0..grid.n_lat {
        let s = grid.sin_theta[i];
        let c = grid.cos_theta[i];
        let inv_s = 1.0 / s;
        let inv_s2 = inv_s * inv_s;
        for j in 0..grid.n_lon {
            let idx = grid.index(i, j);
            let (f11, f12, f22) = match spec.k {
                1 => (1.0, 0.0, 1.0),
                _ => (w.w22[idx], -w.w12[idx], w.w11[idx]),
            };
            let uv = u.values()[idx];
            let rho_sq = uv * uv + grad.norm_sq(idx);
            let gv = g.values()[idx];
            let g_u = (ep_u / uv + k1q * uv / rho_sq) * gv;
            let g_grad = k1q * gv / rho_sq;
            // coefficient of v_theta and of the raw longitude derivative
            let coef_d1t = f22 * c * inv_s - g_grad * grad.comp1[idx];
            let coef_d1p = -2.0 * f12 * c * inv_s2 - g_grad * grad.comp2[idx] * inv_s;
            let cross = 2.0 * f12 * inv_s * inv_cross;

            let ii = i as isize;
            let jj = j as isize;
            let center = f11 * (-2.0 * inv_t2) + f22 * (-2.0 * inv_p2 * inv_s2) + f11 + f22 - g_u;
            triplets.push((idx, grid.wrap(ii, jj), center));
            triplets.push((idx, grid.wrap(ii + 1, jj), f11 * inv_t2 + coef_d1t * inv2t));
            triplets.push((idx, grid.wrap(ii - 1, jj), f11 * inv_t2 - coef_d1t * inv2t));
            triplets.push((idx, grid.wrap(ii, jj + 1), f22 * inv_p2 * inv_s2 + coef_d1p * inv2p));
            triplets.push((idx, grid.wrap(ii, jj - 1), f22 * inv_p2 * inv_s2 - coef_d1p * inv2p));
            triplets.push((idx, grid.wrap(ii + 1, jj + 1), cross));
            triplets.push((idx, grid.wrap(ii - 1, jj - 1), cross));
            triplets.push((idx, grid.wrap(ii + 1, jj - 1), -cross));
            triplets.push((idx, grid.wrap(ii - 1, jj + 1), -cross));
        }
    }
    let matrix = CsrMatrix::from_triplets(n, &mut triplets);
    Ok(Jacobian { grid, matrix })
}

/// Verify W(u) stays in Gamma_k at every node.
pub fn check_cone(w: &SymMatrixField, k: usize) -> Result<(), PdeError> {
    let grid = w.grid();
    let mut worst: Option<(usize, f64, f64)> = None;
    for idx in 0..grid.node_count() {
        let s1 = w.sigma1(idx);
        let s2 = w.sigma2(idx);
        let ok = s1 > 0.0 && (k < 2 || s2 > 0.0);
        if !ok {
            let badness = s1.min(if k < 2 { f64::INFINITY } else { s2 });
            if worst.is_none_or(|(_, _, b)| badness < b) {
                worst = Some((idx, s1, badness));
            }
        }
    }
    if let Some((idx, s1, _)) = worst {
        let i = idx / grid.n_lon;
        let j = idx % grid.n_lon;
        return Err(PdeError::EllipticityLoss { k, i, j, s1, s2: w.sigma2(idx) });
    }
    Ok(())
}

/// The data homotopy
/// `phi_t = ((1-t) C_n^k^(-1/e) + t phi^(-1/e))^(-e)` with `e = p - 1 + k`,
/// joining the round-sphere data at t = 0 to `phi` at t = 1.
pub fn homotopy_phi(phi: &ScalarField, t: f64, spec: &ProblemSpec) -> ScalarField {
    assert!((0.0..=1.0).contains(&t), "homotopy parameter t = {t} outside [0, 1]");
    let e = spec.p - 1.0 + spec.k as f64;
    assert!(e > 0.0, "homotopy exponent p - 1 + k = {e} must be positive");
    let cnk = spec.cnk();
    if t == 0.0 {
        return ScalarField::constant(phi.grid().clone(), cnk);
    }
    if t == 1.0 {
        return phi.clone();
    }
    let c_pow = cnk.powf(-1.0 / e);
    phi.map(|v| ((1.0 - t) * c_pow + t * v.powf(-1.0 / e)).powf(-e))
}

// ---------------------------------------------------------------------------
// Curvature condition on the data (the convexity sufficient condition)
// ---------------------------------------------------------------------------

/// Which exponent regime the (p, q, k) triple falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssumptionCase {
    #[serde(rename = "q<=k+1")]
    Low,
    #[serde(rename = "k+1<q<2k+p")]
    Intermediate,
    #[serde(rename = "out-of-range")]
    OutOfRange,
}

impl std::fmt::Display for AssumptionCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self {
            AssumptionCase::Low => "q<=k+1",
            AssumptionCase::Intermediate => "k+1<q<2k+p",
            AssumptionCase::OutOfRange => "out-of-range",
        };
        f.write_str(tag)
    }
}

/// Outcome of the data curvature check: minimum eigenvalue over the grid of
/// `M = grad^2 f + c f I` with `f = phi^(-1/(k+p-1))`.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub case_tag: AssumptionCase,
    pub min_eig: f64,
    pub satisfied: bool,
    pub tol_assume: f64,
    /// Multiplier of the zero-order term: 1 in the low regime,
    /// (2k+p-q)/(k+p-1) in the intermediate one.
    pub coefficient: f64,
}

/// Check the sufficient condition on `phi` for convexity maintenance.
///
/// Report-only: the solver still attempts data that fails the check (the
/// condition is sufficient, not necessary), but the convexity monitor is
/// only guaranteed to stay positive when it holds. `tol_assume` defaults to
/// `1e-8 * max f`, absorbing the discretization error of the Hessian; a
/// `q >= 2k + p` configuration is flagged out-of-range (the condition is
/// contradictory there) and never satisfied.
pub fn check_assumption(
    phi: &ScalarField,
    spec: &ProblemSpec,
    tol_assume: Option<f64>,
) -> AssumptionReport {
    let kf = spec.k as f64;
    let e = kf + spec.p - 1.0;
    // both condition regimes presuppose p >= 1; outside that the exponent
    // e = k + p - 1 can degenerate and neither case applies
    let (case_tag, coefficient) = if spec.p < 1.0 {
        (AssumptionCase::OutOfRange, 1.0)
    } else if spec.q <= kf + 1.0 {
        (AssumptionCase::Low, 1.0)
    } else if spec.q < 2.0 * kf + spec.p {
        (AssumptionCase::Intermediate, (2.0 * kf + spec.p - spec.q) / (kf + spec.p - 1.0))
    } else {
        (AssumptionCase::OutOfRange, (2.0 * kf + spec.p - spec.q) / (kf + spec.p - 1.0))
    };
    if case_tag == AssumptionCase::OutOfRange && e <= 0.0 {
        return AssumptionReport {
            case_tag,
            min_eig: f64::NAN,
            satisfied: false,
            tol_assume: tol_assume.unwrap_or(0.0),
            coefficient,
        };
    }
    let f = phi.map(|v| v.powf(-1.0 / e));
    let tol = tol_assume.unwrap_or(1e-8 * f.max_value());
    // M = grad^2 f + c f I = W(f) + (c - 1) f I
    let w = sphere::curvature_matrix(&f);
    let mut min_eig = f64::INFINITY;
    for idx in 0..phi.grid().node_count() {
        let shift = (coefficient - 1.0) * f.values()[idx];
        let mean = 0.5 * (w.w11[idx] + w.w22[idx]) + shift;
        let half = 0.5 * (w.w11[idx] - w.w22[idx]);
        min_eig = min_eig.min(mean - (half * half + w.w12[idx] * w.w12[idx]).sqrt());
    }
    let satisfied = case_tag != AssumptionCase::OutOfRange && min_eig >= -tol;
    AssumptionReport { case_tag, min_eig, satisfied, tol_assume: tol, coefficient }
}
