//! Discretization of S^2 and discrete covariant operators in the
//! orthonormal frame (e_theta, e_phi / sin theta).
//!
//! The grid is a staggered latitude-longitude lattice with no node at either
//! pole: colatitudes theta_i = (i + 1/2) pi / n_lat, longitudes
//! phi_j = j 2pi / n_lon, n_lon = 2 n_lat. Stencils reach across the poles
//! through the exact ghost rule u(-theta, phi) = u(theta, phi + pi), which
//! holds identically for any function on the sphere, so centered differences
//! never need one-sided closures.
//!
//! Second differences are evaluated in grouped form
//! `(u_+ - u_0) - (u_0 - u_-)` to keep the rounding floor proportional to
//! the local variation of `u` rather than to `|u| / h^2`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("n_lat = {0} is below the minimum of 8")]
    LatTooSmall(usize),
    #[error("n_lat = {0} must be even")]
    LatOdd(usize),
    #[error("field shape does not match grid ({expected} nodes, got {got})")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("field contains non-finite values")]
    NonFinite,
    #[error("ambient polynomial degree {0} exceeds the supported maximum of 4")]
    DegreeTooHigh(u32),
    #[error("csv: {msg} (line {line})")]
    Csv { line: usize, msg: String },
    #[error("csv grid does not match the staggered layout: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Staggered latitude-longitude grid on S^2.
#[derive(Debug)]
pub struct SphericalGrid {
    pub n_lat: usize,
    pub n_lon: usize,
    /// Colatitudes theta_i = (i + 1/2) pi / n_lat, radians.
    pub theta: Vec<f64>,
    /// Longitudes phi_j = j 2pi / n_lon, radians.
    pub phi: Vec<f64>,
    pub sin_theta: Vec<f64>,
    pub cos_theta: Vec<f64>,
    pub dtheta: f64,
    pub dphi: f64,
    /// Quadrature weight of every node in row i: sin(theta_i) dtheta dphi.
    pub row_weight: Vec<f64>,
}

/// Build the staggered grid; `n_lat` must be even and at least 8.
pub fn build_grid(n_lat: usize) -> Result<Arc<SphericalGrid>, GridError> {
    if n_lat < 8 {
        return Err(GridError::LatTooSmall(n_lat));
    }
    if n_lat % 2 != 0 {
        return Err(GridError::LatOdd(n_lat));
    }
    let n_lon = 2 * n_lat;
    let dtheta = std::f64::consts::PI / n_lat as f64;
    let dphi = std::f64::consts::TAU / n_lon as f64;
    let theta: Vec<f64> = (0..n_lat).map(|i| (i as f64 + 0.5) * dtheta).collect();
    let phi: Vec<f64> = (0..n_lon).map(|j| j as f64 * dphi).collect();
    let sin_theta: Vec<f64> = theta.iter().map(|t| t.sin()).collect();
    let cos_theta: Vec<f64> = theta.iter().map(|t| t.cos()).collect();
    let row_weight: Vec<f64> = sin_theta.iter().map(|s| s * dtheta * dphi).collect();
    Ok(Arc::new(SphericalGrid {
        n_lat,
        n_lon,
        theta,
        phi,
        sin_theta,
        cos_theta,
        dtheta,
        dphi,
        row_weight,
    }))
}

impl SphericalGrid {
    pub fn node_count(&self) -> usize {
        self.n_lat * self.n_lon
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_lon + j
    }

    /// Resolve a possibly out-of-range (i, j) to a stored node, applying
    /// longitude periodicity and the pole-crossing ghost rule.
    #[inline]
    pub fn wrap(&self, i: isize, j: isize) -> usize {
        let n_lat = self.n_lat as isize;
        let n_lon = self.n_lon as isize;
        let (ii, jj) = if i < 0 {
            (-1 - i, j + n_lon / 2)
        } else if i >= n_lat {
            (2 * n_lat - 1 - i, j + n_lon / 2)
        } else {
            (i, j)
        };
        (ii * n_lon + jj.rem_euclid(n_lon)) as usize
    }

    /// Ambient unit vector of node (i, j).
    #[inline]
    pub fn position(&self, i: usize, j: usize) -> [f64; 3] {
        let (s, c) = (self.sin_theta[i], self.cos_theta[i]);
        let (sp, cp) = self.phi[j].sin_cos();
        [s * cp, s * sp, c]
    }

    /// Grid spacing h = pi / n_lat.
    pub fn h(&self) -> f64 {
        self.dtheta
    }

    pub fn same_layout(&self, other: &SphericalGrid) -> bool {
        self.n_lat == other.n_lat && self.n_lon == other.n_lon
    }
}

/// A scalar function sampled on every grid node, row-major latitude-then-
/// longitude. Immutable after construction; cheap to clone the handle.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<SphericalGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<SphericalGrid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.node_count() {
            return Err(GridError::ShapeMismatch { expected: grid.node_count(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GridError::NonFinite);
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<SphericalGrid>, value: f64) -> Self {
        let n = grid.node_count();
        Self { grid, values: vec![value; n] }
    }

    /// Sample a function of (theta, phi, ambient x) at every node.
    pub fn from_fn(grid: Arc<SphericalGrid>, mut f: impl FnMut(f64, f64, [f64; 3]) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.node_count());
        for i in 0..grid.n_lat {
            for j in 0..grid.n_lon {
                values.push(f(grid.theta[i], grid.phi[j], grid.position(i, j)));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn inf_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        self.map(|v| s * v)
    }

    /// Bilinear interpolation at an arbitrary (theta, phi), periodic in
    /// longitude. The colatitude must lie inside the grid's theta range,
    /// which holds whenever this field is finer than the query grid.
    pub fn sample_bilinear(&self, theta: f64, phi: f64) -> f64 {
        let g = &self.grid;
        let fi = (theta / g.dtheta - 0.5).clamp(0.0, (g.n_lat - 1) as f64);
        let i0 = (fi.floor() as usize).min(g.n_lat - 2);
        let a = (fi - i0 as f64).clamp(0.0, 1.0);
        let phi = phi.rem_euclid(std::f64::consts::TAU);
        let fj = phi / g.dphi;
        let j0 = (fj.floor() as usize) % g.n_lon;
        let b = fj - fj.floor();
        let j1 = (j0 + 1) % g.n_lon;
        let v00 = self.get(i0, j0);
        let v01 = self.get(i0, j1);
        let v10 = self.get(i0 + 1, j0);
        let v11 = self.get(i0 + 1, j1);
        (1.0 - a) * ((1.0 - b) * v00 + b * v01) + a * ((1.0 - b) * v10 + b * v11)
    }

    /// Pull back through the grid's antipodal symmetry
    /// (i, j) -> (n_lat-1-i, j + n_lon/2); used by symmetry tests.
    pub fn antipodal(&self) -> ScalarField {
        let g = &self.grid;
        let mut values = Vec::with_capacity(g.node_count());
        for i in 0..g.n_lat {
            for j in 0..g.n_lon {
                let jj = (j + g.n_lon / 2) % g.n_lon;
                values.push(self.values[g.index(g.n_lat - 1 - i, jj)]);
            }
        }
        ScalarField { grid: g.clone(), values }
    }
}

/// Gradient components (d_theta u, d_phi u / sin theta) in the orthonormal
/// frame.
#[derive(Debug, Clone)]
pub struct FrameGradient {
    grid: Arc<SphericalGrid>,
    pub comp1: Vec<f64>,
    pub comp2: Vec<f64>,
}

impl FrameGradient {
    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    /// |grad u|^2 at node index `idx`.
    #[inline]
    pub fn norm_sq(&self, idx: usize) -> f64 {
        self.comp1[idx] * self.comp1[idx] + self.comp2[idx] * self.comp2[idx]
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.comp1.len()).fold(0.0f64, |m, i| m.max(self.norm_sq(i))).sqrt()
    }
}

/// The curvature matrix W = grad^2 u + u I at every node, stored by its
/// three distinct entries in the orthonormal frame.
#[derive(Debug, Clone)]
pub struct SymMatrixField {
    grid: Arc<SphericalGrid>,
    pub w11: Vec<f64>,
    pub w12: Vec<f64>,
    pub w22: Vec<f64>,
}

impl SymMatrixField {
    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    /// trace = sigma_1 at node `idx`.
    #[inline]
    pub fn sigma1(&self, idx: usize) -> f64 {
        self.w11[idx] + self.w22[idx]
    }

    /// det = sigma_2 at node `idx`.
    #[inline]
    pub fn sigma2(&self, idx: usize) -> f64 {
        self.w11[idx] * self.w22[idx] - self.w12[idx] * self.w12[idx]
    }

    /// Smaller eigenvalue of the 2x2 matrix at node `idx`.
    #[inline]
    pub fn min_eig(&self, idx: usize) -> f64 {
        let mean = 0.5 * (self.w11[idx] + self.w22[idx]);
        let half = 0.5 * (self.w11[idx] - self.w22[idx]);
        mean - (half * half + self.w12[idx] * self.w12[idx]).sqrt()
    }

    #[inline]
    pub fn max_eig(&self, idx: usize) -> f64 {
        let mean = 0.5 * (self.w11[idx] + self.w22[idx]);
        let half = 0.5 * (self.w11[idx] - self.w22[idx]);
        mean + (half * half + self.w12[idx] * self.w12[idx]).sqrt()
    }

    /// Global minimum over nodes of the smaller eigenvalue.
    pub fn global_min_eig(&self) -> f64 {
        (0..self.w11.len()).fold(f64::INFINITY, |m, i| m.min(self.min_eig(i)))
    }

    /// Whether the eigenvalues lie in Gamma_k at every node
    /// (k = 1: sigma_1 > 0; k = 2: sigma_1 > 0 and sigma_2 > 0).
    pub fn in_gamma_k(&self, k: usize) -> bool {
        (0..self.w11.len()).all(|i| {
            self.sigma1(i) > 0.0 && (k < 2 || self.sigma2(i) > 0.0)
        })
    }

    pub fn max_abs_entry(&self) -> f64 {
        let m1 = self.w11.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let m2 = self.w12.iter().fold(m1, |m, v| m.max(v.abs()));
        self.w22.iter().fold(m2, |m, v| m.max(v.abs()))
    }
}

/// Centered first derivatives in the orthonormal frame.
pub fn gradient(u: &ScalarField) -> FrameGradient {
    let g = u.grid().clone();
    let v = u.values();
    let n = g.node_count();
    let mut comp1 = vec![0.0; n];
    let mut comp2 = vec![0.0; n];
    let inv2t = 1.0 / (2.0 * g.dtheta);
    let inv2p = 1.0 / (2.0 * g.dphi);
    for i in 0..g.n_lat {
        let inv_s = 1.0 / g.sin_theta[i];
        for j in 0..g.n_lon {
            let idx = g.index(i, j);
            let up = v[g.wrap(i as isize + 1, j as isize)];
            let dn = v[g.wrap(i as isize - 1, j as isize)];
            let rt = v[g.wrap(i as isize, j as isize + 1)];
            let lt = v[g.wrap(i as isize, j as isize - 1)];
            comp1[idx] = (up - dn) * inv2t;
            comp2[idx] = (rt - lt) * inv2p * inv_s;
        }
    }
    FrameGradient { grid: g, comp1, comp2 }
}

/// W = grad^2 u + u I by centered second differences, with the covariant
/// Hessian in the orthonormal frame:
///
/// ```text
/// w11 = u_tt + u
/// w12 = u_tp / sin t - (cos t / sin^2 t) u_p
/// w22 = u_pp / sin^2 t + (cos t / sin t) u_t + u
/// ```
pub fn curvature_matrix(u: &ScalarField) -> SymMatrixField {
    let g = u.grid().clone();
    let v = u.values();
    let n = g.node_count();
    let mut w11 = vec![0.0; n];
    let mut w12 = vec![0.0; n];
    let mut w22 = vec![0.0; n];
    let inv_t2 = 1.0 / (g.dtheta * g.dtheta);
    let inv_p2 = 1.0 / (g.dphi * g.dphi);
    let inv2t = 1.0 / (2.0 * g.dtheta);
    let inv2p = 1.0 / (2.0 * g.dphi);
    let inv_cross = 1.0 / (4.0 * g.dtheta * g.dphi);
    for i in 0..g.n_lat {
        let s = g.sin_theta[i];
        let c = g.cos_theta[i];
        let inv_s = 1.0 / s;
        let inv_s2 = inv_s * inv_s;
        for j in 0..g.n_lon {
            let idx = g.index(i, j);
            let ce = v[idx];
            let up = v[g.wrap(i as isize + 1, j as isize)];
            let dn = v[g.wrap(i as isize - 1, j as isize)];
            let rt = v[g.wrap(i as isize, j as isize + 1)];
            let lt = v[g.wrap(i as isize, j as isize - 1)];
            let ur = v[g.wrap(i as isize + 1, j as isize + 1)];
            let ul = v[g.wrap(i as isize + 1, j as isize - 1)];
            let dr = v[g.wrap(i as isize - 1, j as isize + 1)];
            let dl = v[g.wrap(i as isize - 1, j as isize - 1)];

            let d2t = ((up - ce) - (ce - dn)) * inv_t2;
            let d2p = ((rt - ce) - (ce - lt)) * inv_p2;
            let d1t = (up - dn) * inv2t;
            let d1p = (rt - lt) * inv2p;
            let dtp = ((ur - ul) - (dr - dl)) * inv_cross;

            w11[idx] = d2t + ce;
            w12[idx] = dtp * inv_s - c * inv_s2 * d1p;
            w22[idx] = d2p * inv_s2 + c * inv_s * d1t + ce;
        }
    }
    SymMatrixField { grid: g, w11, w12, w22 }
}

/// Quadrature: sum of f over nodes weighted by sin(theta) dtheta dphi.
pub fn integrate(f: &ScalarField) -> f64 {
    let g = f.grid();
    let mut total = 0.0;
    for i in 0..g.n_lat {
        let w = g.row_weight[i];
        let mut row = 0.0;
        for j in 0..g.n_lon {
            row += f.values()[g.index(i, j)];
        }
        total += w * row;
    }
    total
}

// ---------------------------------------------------------------------------
// Ambient function descriptors
// ---------------------------------------------------------------------------

/// A monomial coeff * x1^a x2^b x3^c in ambient coordinates.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coeff: f64,
    /// Exponents of (x1, x2, x3); total degree at most 4.
    pub powers: [u32; 3],
}

/// Functions given in ambient coordinates x in R^3 restricted to the unit
/// sphere, x = (sin t cos p, sin t sin p, cos t).
#[derive(Debug, Clone, PartialEq)]
pub enum AmbientFn {
    Constant(f64),
    Polynomial(Vec<Monomial>),
}

impl AmbientFn {
    pub fn polynomial(terms: Vec<Monomial>) -> Result<Self, GridError> {
        for t in &terms {
            let deg = t.powers.iter().sum::<u32>();
            if deg > 4 {
                return Err(GridError::DegreeTooHigh(deg));
            }
        }
        Ok(AmbientFn::Polynomial(terms))
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        match self {
            AmbientFn::Constant(c) => *c,
            AmbientFn::Polynomial(terms) => terms
                .iter()
                .map(|t| {
                    t.coeff
                        * x[0].powi(t.powers[0] as i32)
                        * x[1].powi(t.powers[1] as i32)
                        * x[2].powi(t.powers[2] as i32)
                })
                .sum(),
        }
    }

    /// Constant and linear coefficients (r, a) when the descriptor is an
    /// affine function r + a.x; `None` if any higher-degree term is present.
    pub fn as_affine(&self) -> Option<(f64, [f64; 3])> {
        match self {
            AmbientFn::Constant(c) => Some((*c, [0.0; 3])),
            AmbientFn::Polynomial(terms) => {
                let mut r = 0.0;
                let mut a = [0.0; 3];
                for t in terms {
                    match t.powers {
                        [0, 0, 0] => r += t.coeff,
                        [1, 0, 0] => a[0] += t.coeff,
                        [0, 1, 0] => a[1] += t.coeff,
                        [0, 0, 1] => a[2] += t.coeff,
                        _ => return None,
                    }
                }
                Some((r, a))
            }
        }
    }
}

/// Pointwise exact sampling of an ambient-function descriptor.
pub fn eval_ambient(f: &AmbientFn, grid: &Arc<SphericalGrid>) -> ScalarField {
    ScalarField::from_fn(grid.clone(), |_, _, x| f.eval(x))
}

// ---------------------------------------------------------------------------
// CSV serialization
// ---------------------------------------------------------------------------

/// Format a float with 17 significant digits (exact f64 round trip).
pub fn fmt_f64(v: f64) -> String {
    let mut s = String::new();
    write!(s, "{v:.16e}").expect("formatting f64 cannot fail");
    s
}

/// Write "theta,phi,value" rows in row-major latitude-then-longitude order.
pub fn write_csv<W: Write>(field: &ScalarField, mut out: W) -> Result<(), GridError> {
    let g = field.grid();
    writeln!(out, "theta,phi,value")?;
    for i in 0..g.n_lat {
        for j in 0..g.n_lon {
            writeln!(
                out,
                "{},{},{}",
                fmt_f64(g.theta[i]),
                fmt_f64(g.phi[j]),
                fmt_f64(field.get(i, j))
            )?;
        }
    }
    Ok(())
}

pub fn write_csv_file(field: &ScalarField, path: &Path) -> Result<(), GridError> {
    let file = std::fs::File::create(path)?;
    write_csv(field, std::io::BufWriter::new(file))
}

/// Parse a field written by [`write_csv`], reconstructing its grid. The
/// node layout must match the staggered grid exactly (1e-12 on angles).
pub fn read_csv<R: BufRead>(input: R) -> Result<ScalarField, GridError> {
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if lineno == 0 {
            if line != "theta,phi,value" {
                return Err(GridError::Csv {
                    line: 1,
                    msg: format!("expected header 'theta,phi,value', got '{line}'"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut next = |name: &str| -> Result<f64, GridError> {
            parts
                .next()
                .ok_or_else(|| GridError::Csv { line: lineno + 1, msg: format!("missing {name}") })?
                .trim()
                .parse::<f64>()
                .map_err(|e| GridError::Csv { line: lineno + 1, msg: format!("{name}: {e}") })
        };
        let t = next("theta")?;
        let p = next("phi")?;
        let v = next("value")?;
        if parts.next().is_some() {
            return Err(GridError::Csv { line: lineno + 1, msg: "too many columns".into() });
        }
        rows.push((t, p, v));
    }
    if rows.is_empty() {
        return Err(GridError::Csv { line: 1, msg: "no data rows".into() });
    }
    // row-major: the leading rows share theta_0 and enumerate the longitudes
    let theta0 = rows[0].0;
    let n_lon = rows.iter().take_while(|r| r.0 == theta0).count();
    if n_lon == 0 || rows.len() % n_lon != 0 {
        return Err(GridError::GridMismatch(format!(
            "{} rows do not tile into longitude circles of {n_lon}",
            rows.len()
        )));
    }
    let n_lat = rows.len() / n_lon;
    if n_lon != 2 * n_lat {
        return Err(GridError::GridMismatch(format!("n_lon = {n_lon} != 2 n_lat = {}", 2 * n_lat)));
    }
    let grid = build_grid(n_lat)?;
    let mut values = Vec::with_capacity(rows.len());
    for (idx, (t, p, v)) in rows.iter().enumerate() {
        let i = idx / n_lon;
        let j = idx % n_lon;
        if (t - grid.theta[i]).abs() > 1e-12 || (p - grid.phi[j]).abs() > 1e-12 {
            return Err(GridError::GridMismatch(format!(
                "node {idx} at ({t}, {p}) does not match the staggered layout"
            )));
        }
        values.push(*v);
    }
    ScalarField::new(grid, values)
}

pub fn read_csv_file(path: &Path) -> Result<ScalarField, GridError> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file))
}
