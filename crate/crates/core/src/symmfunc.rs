//! Elementary symmetric polynomials, their derivatives, and the Garding
//! cone machinery, for eigenvalue vectors and symmetric matrices of
//! dimension n <= 8.
//!
//! The kernel exposes two independent evaluation routes for `sigma_k` of a
//! matrix: a spectral route (cyclic Jacobi eigendecomposition) and exact
//! enumeration of k-by-k principal minors. The routes are kept separate so
//! each can serve as an oracle for the other; the dimension cap at 8 keeps
//! the minor enumeration cheap.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::binomial;

/// Hard cap on the ambient dimension; keeps minor enumeration feasible.
pub const MAX_DIM: usize = 8;

/// Off-diagonal threshold for the Jacobi sweep, relative to the Frobenius norm.
const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum SymmError {
    #[error("dimension {0} outside 1..={MAX_DIM}")]
    InvalidDimension(usize),
    #[error("entries must all be finite")]
    NonFinite,
    #[error("matrix is not symmetric: |W[{i}][{j}] - W[{j}][{i}]| = {diff}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },
    #[error("k = {k} out of range {lo}..={hi} for dimension {n}")]
    KOutOfRange { k: usize, lo: usize, hi: usize, n: usize },
    #[error("index {idx} out of range for dimension {n}")]
    IndexOutOfRange { idx: usize, n: usize },
    #[error("spectrum lies outside Gamma_{m}; normalized quotient root undefined")]
    OutsideCone { m: usize },
    #[error("Jacobi sweep failed to converge in {JACOBI_MAX_SWEEPS} sweeps")]
    NoConvergence,
}

/// An ordered eigenvalue vector lambda_1..lambda_n.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    entries: Vec<f64>,
}

impl Spectrum {
    pub fn new(entries: Vec<f64>) -> Result<Self, SymmError> {
        if entries.is_empty() || entries.len() > MAX_DIM {
            return Err(SymmError::InvalidDimension(entries.len()));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(SymmError::NonFinite);
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// The spectrum with entry `i` removed (0-based), written lambda|i.
    pub fn without(&self, i: usize) -> Result<Spectrum, SymmError> {
        if i >= self.dim() {
            return Err(SymmError::IndexOutOfRange { idx: i, n: self.dim() });
        }
        let mut e = self.entries.clone();
        e.remove(i);
        Ok(Spectrum { entries: e })
    }

    /// lambda|ij: both entries removed. Requires i != j.
    pub fn without2(&self, i: usize, j: usize) -> Result<Spectrum, SymmError> {
        let n = self.dim();
        if i >= n {
            return Err(SymmError::IndexOutOfRange { idx: i, n });
        }
        if j >= n || i == j {
            return Err(SymmError::IndexOutOfRange { idx: j, n });
        }
        let (a, b) = (i.min(j), i.max(j));
        let mut e = self.entries.clone();
        e.remove(b);
        e.remove(a);
        Ok(Spectrum { entries: e })
    }
}

/// A dense symmetric n-by-n matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    /// Build from row-major entries; symmetry must hold exactly.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self, SymmError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(SymmError::InvalidDimension(dim));
        }
        if entries.len() != dim * dim {
            return Err(SymmError::InvalidDimension(dim));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(SymmError::NonFinite);
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let diff = (entries[i * dim + j] - entries[j * dim + i]).abs();
                if diff != 0.0 {
                    return Err(SymmError::NotSymmetric { i, j, diff });
                }
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self, SymmError> {
        let n = diag.len();
        let mut e = vec![0.0; n * n];
        for (i, &d) in diag.iter().enumerate() {
            e[i * n + i] = d;
        }
        Self::new(n, e)
    }

    pub fn identity(dim: usize) -> Result<Self, SymmError> {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    fn frobenius(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Eigenvalues and orthonormal eigenvectors by cyclic Jacobi rotations.
    ///
    /// Deterministic sweep order (row-major over the strict upper triangle);
    /// rotations stop once every off-diagonal entry is below
    /// `1e-14 * ||W||_F`. Eigenvalues are returned unsorted alongside the
    /// matrix of eigenvector columns.
    pub fn eigen(&self) -> Result<(Spectrum, Vec<f64>), SymmError> {
        let n = self.dim;
        let mut a = self.entries.clone();
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        let tol = JACOBI_TOL * self.frobenius().max(f64::MIN_POSITIVE);
        for _sweep in 0..JACOBI_MAX_SWEEPS {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in (p + 1)..n {
                    off = off.max(a[p * n + q].abs());
                }
            }
            if off <= tol {
                let lam = (0..n).map(|i| a[i * n + i]).collect();
                return Ok((Spectrum { entries: lam }, v));
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if apq.abs() <= tol {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    // classic Jacobi rotation angle
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + (1.0 + theta * theta).sqrt())
                    } else {
                        1.0 / (theta - (1.0 + theta * theta).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        Err(SymmError::NoConvergence)
    }
}

fn check_k(k: usize, lo: usize, n: usize) -> Result<(), SymmError> {
    if k < lo || k > n {
        return Err(SymmError::KOutOfRange { k, lo, hi: n, n });
    }
    Ok(())
}

/// k-th elementary symmetric polynomial of the spectrum.
///
/// Evaluated by the stable prefix recurrence
/// `p_k(i) = p_k(i-1) + lambda_i * p_(k-1)(i-1)` rather than enumerating
/// subsets; `sigma_0 == 1` by convention.
pub fn sigma(lambda: &Spectrum, k: usize) -> Result<f64, SymmError> {
    let n = lambda.dim();
    check_k(k, 0, n)?;
    Ok(sigma_all(lambda.entries())[k])
}

/// All sigma_0..sigma_n of a raw entry slice by the prefix recurrence.
fn sigma_all(entries: &[f64]) -> Vec<f64> {
    let n = entries.len();
    let mut p = vec![0.0; n + 1];
    p[0] = 1.0;
    for (i, &x) in entries.iter().enumerate() {
        // highest order first so p[k-1] is still the prefix-(i) value
        for k in (1..=(i + 1)).rev() {
            p[k] += x * p[k - 1];
        }
    }
    p
}

fn sigma_raw(entries: &[f64], k: usize) -> f64 {
    sigma_all(entries)[k]
}

/// sigma_k of the eigenvalues of W, via the spectral route.
pub fn sigma_matrix(w: &SymMatrix, k: usize) -> Result<f64, SymmError> {
    check_k(k, 0, w.dim())?;
    let (lam, _) = w.eigen()?;
    sigma(&lam, k)
}

/// sigma_k of W as the sum of k-by-k principal minors.
///
/// Exact enumeration; the independent cross-check route for
/// [`sigma_matrix`].
pub fn sigma_matrix_minors(w: &SymMatrix, k: usize) -> Result<f64, SymmError> {
    let n = w.dim();
    check_k(k, 0, n)?;
    if k == 0 {
        return Ok(1.0);
    }
    let mut total = 0.0;
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        total += principal_minor(w, &subset);
        // next k-subset in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(total);
            }
            i -= 1;
            if subset[i] != i + n - k {
                subset[i] += 1;
                for j in (i + 1)..k {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Determinant of the principal submatrix indexed by `rows`, via Gaussian
/// elimination with partial pivoting.
fn principal_minor(w: &SymMatrix, rows: &[usize]) -> f64 {
    let k = rows.len();
    let mut m = vec![0.0; k * k];
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in rows.iter().enumerate() {
            m[a * k + b] = w.get(i, j);
        }
    }
    let mut det = 1.0;
    for col in 0..k {
        let mut piv = col;
        for r in (col + 1)..k {
            if m[r * k + col].abs() > m[piv * k + col].abs() {
                piv = r;
            }
        }
        if m[piv * k + col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..k {
                m.swap(piv * k + c, col * k + c);
            }
            det = -det;
        }
        let d = m[col * k + col];
        det *= d;
        for r in (col + 1)..k {
            let f = m[r * k + col] / d;
            for c in col..k {
                m[r * k + c] -= f * m[col * k + c];
            }
        }
    }
    det
}

/// Gradient matrix F^ij = d sigma_k / d W_ij.
///
/// Assembled as the spectral sum over eigenpairs,
/// `sum_a sigma_(k-1)(lambda|a) v_a v_a^T`, which stays well defined for
/// repeated eigenvalues (the projector onto a degenerate cluster is unique
/// even though individual eigenvectors are not). For diagonal W this
/// reduces to diag(sigma_(k-1)(lambda|i)).
pub fn sigma_grad(w: &SymMatrix, k: usize) -> Result<SymMatrix, SymmError> {
    let n = w.dim();
    check_k(k, 1, n)?;
    let (lam, v) = w.eigen()?;
    let mut out = vec![0.0; n * n];
    for a in 0..n {
        let coeff = sigma(&lam.without(a)?, k - 1)?;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] += coeff * v[i * n + a] * v[j * n + a];
            }
        }
    }
    // symmetrize exactly so the result satisfies the SymMatrix invariant
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (out[i * n + j] + out[j * n + i]);
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    SymMatrix::new(n, out)
}

/// Diagonal-case second derivative d^2 sigma_k / (d W_ii d W_jj):
/// sigma_(k-2)(lambda|ij) for i != j, zero for i == j.
pub fn sigma_hess_diag(
    lambda: &Spectrum,
    k: usize,
    i: usize,
    j: usize,
) -> Result<f64, SymmError> {
    let n = lambda.dim();
    check_k(k, 2, n)?;
    if i >= n {
        return Err(SymmError::IndexOutOfRange { idx: i, n });
    }
    if j >= n {
        return Err(SymmError::IndexOutOfRange { idx: j, n });
    }
    if i == j {
        return Ok(0.0);
    }
    sigma(&lambda.without2(i, j)?, k - 2)
}

/// Whether lambda lies in the cone Gamma_k = { sigma_i > 0 for i = 1..k }.
pub fn in_gamma_cone(lambda: &Spectrum, k: usize) -> Result<bool, SymmError> {
    let n = lambda.dim();
    check_k(k, 1, n)?;
    let sig = sigma_all(lambda.entries());
    Ok(sig[1..=k].iter().all(|&s| s > 0.0))
}

/// Normalized Newton-MacLaurin quotient
/// `[ (sigma_m / C_n^m) / (sigma_l / C_n^l) ]^(1/(m-l))` for lambda in Gamma_m.
pub fn nm_quotient(lambda: &Spectrum, m: usize, l: usize) -> Result<f64, SymmError> {
    let n = lambda.dim();
    check_k(m, 1, n)?;
    if l >= m {
        return Err(SymmError::KOutOfRange { k: l, lo: 0, hi: m - 1, n });
    }
    if !in_gamma_cone(lambda, m)? {
        return Err(SymmError::OutsideCone { m });
    }
    let sig = sigma_all(lambda.entries());
    let num = sig[m] / binomial(n, m);
    let den = sig[l] / binomial(n, l);
    Ok((num / den).powf(1.0 / (m - l) as f64))
}

// ---------------------------------------------------------------------------
// Randomized property suite
// ---------------------------------------------------------------------------

/// Result of one randomized identity check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub samples: usize,
    pub max_err: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Human-readable witness of the first failure, if any.
    pub counterexample: Option<String>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PropertyReport {
    pub seed: u64,
    pub checks: Vec<PropertyCheck>,
}

impl PropertyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Draw a spectrum with positive entries log-uniform in [1e-2, 1e2];
/// such vectors lie in Gamma_n.
fn random_positive_spectrum(rng: &mut ChaCha8Rng, n: usize) -> Spectrum {
    let entries = (0..n)
        .map(|_| 10f64.powf(rng.random_range(-2.0..2.0)))
        .collect();
    Spectrum::new(entries).expect("positive entries are a valid spectrum")
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> SymMatrix {
    // random spectrum conjugated by a random rotation built from Jacobi-style
    // plane rotations; keeps the spectrum known and inside [lo, hi]
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = rng.random_range(lo..hi);
    }
    for p in 0..n {
        for q in (p + 1)..n {
            let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let (s, c) = ang.sin_cos();
            rotate_sym(&mut m, n, p, q, c, s);
        }
    }
    // clean up asymmetry from rounding
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    SymMatrix::new(n, m).expect("constructed symmetric")
}

fn rotate_sym(m: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..n {
        let mkp = m[k * n + p];
        let mkq = m[k * n + q];
        m[k * n + p] = c * mkp - s * mkq;
        m[k * n + q] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[p * n + k];
        let mqk = m[q * n + k];
        m[p * n + k] = c * mpk - s * mqk;
        m[q * n + k] = s * mpk + c * mqk;
    }
}

struct CheckAcc {
    name: &'static str,
    samples: usize,
    max_err: f64,
    tolerance: f64,
    counterexample: Option<String>,
}

impl CheckAcc {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self { name, samples: 0, max_err: 0.0, tolerance, counterexample: None }
    }

    fn record(&mut self, err: f64, witness: impl Fn() -> String) {
        self.samples += 1;
        if err > self.max_err {
            self.max_err = err;
        }
        if err > self.tolerance && self.counterexample.is_none() {
            self.counterexample = Some(witness());
        }
    }

    fn finish(self) -> PropertyCheck {
        PropertyCheck {
            name: self.name.to_string(),
            samples: self.samples,
            max_err: self.max_err,
            tolerance: self.tolerance,
            pass: self.counterexample.is_none(),
            counterexample: self.counterexample,
        }
    }
}

/// Run the randomized identity suite over `samples` draws per identity
/// with dimensions cycling through 2..=n_max.
///
/// Covered identities (tolerances are relative unless noted):
/// - expansion `sigma_k = sigma_k(l|i) + l_i sigma_(k-1)(l|i)`, 1e-12;
/// - row sum `sum_i sigma_(k-1)(l|i) = (n-k+1) sigma_(k-1)`, 1e-12;
/// - monotonicity of sigma_(k-1)(l|i) for descending spectra, 1e-12 slack;
/// - Newton-MacLaurin quotient monotonicity, 1e-12 slack;
/// - orthogonal invariance of the spectral route, 1e-10 absolute-ish;
/// - spectral vs minor route agreement, 1e-12;
/// - gradient vs central finite differences, 1e-6;
/// - gradient stability under 1e-9 perturbation of degenerate spectra, 1e-6;
/// - concavity of normalized quotients along random chords, 1e-10 slack;
/// - lower bound `sum_i d/dl_i [sigma_k/sigma_l]^(1/(k-l)) >= [C_n^k/C_n^l]^(1/(k-l))`;
/// - expected domain error when NM quotients are requested outside Gamma_m.
pub fn property_suite(seed: u64, samples: usize, n_max: usize) -> PropertyReport {
    let n_max = n_max.clamp(2, MAX_DIM);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut expansion = CheckAcc::new("sigma_expansion", 1e-12);
    let mut rowsum = CheckAcc::new("reduced_row_sum", 1e-12);
    let mut sorted_mono = CheckAcc::new("reduced_sorted_monotone", 1e-12);
    let mut nm_mono = CheckAcc::new("newton_maclaurin_monotone", 1e-12);
    let mut orth = CheckAcc::new("orthogonal_invariance", 1e-10);
    let mut routes = CheckAcc::new("spectral_vs_minors", 1e-12);
    let mut grad_fd = CheckAcc::new("gradient_vs_central_fd", 1e-6);
    let mut grad_stab = CheckAcc::new("gradient_degenerate_stability", 1e-6);
    let mut concave = CheckAcc::new("quotient_concavity", 1e-10);
    let mut grad_lb = CheckAcc::new("quotient_gradient_lower_bound", 1e-10);
    let mut domain = CheckAcc::new("outside_cone_domain_error", 0.0);

    for it in 0..samples {
        let n = 2 + (it % (n_max - 1));
        let lam = random_positive_spectrum(&mut rng, n);
        let sig = sigma_all(lam.entries());

        for k in 1..=n {
            for i in 0..n {
                let li = lam.without(i).unwrap();
                let lhs = sig[k];
                let rhs = sigma_raw(li.entries(), k.min(n - 1))
                    + lam.entries()[i] * sigma_raw(li.entries(), k - 1);
                // sigma_k(l|i) = 0 when k = n (too few entries)
                let rhs = if k == n {
                    lam.entries()[i] * sigma_raw(li.entries(), k - 1)
                } else {
                    rhs
                };
                expansion.record(rel_err(lhs, rhs), || {
                    format!("lambda={:?} k={k} i={i}", lam.entries())
                });
            }
            let sum: f64 = (0..n)
                .map(|i| sigma_raw(lam.without(i).unwrap().entries(), k - 1))
                .sum();
            let expect = (n - k + 1) as f64 * sig[k - 1];
            rowsum.record(rel_err(sum, expect), || {
                format!("lambda={:?} k={k}", lam.entries())
            });
        }

        // sorted-descending monotonicity of sigma_(k-1)(l|i)
        let mut sorted = lam.entries().to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let lam_sorted = Spectrum::new(sorted).unwrap();
        for k in 1..=n {
            let vals: Vec<f64> = (0..n)
                .map(|i| sigma_raw(lam_sorted.without(i).unwrap().entries(), k - 1))
                .collect();
            for w in vals.windows(2) {
                let viol = (w[0] - w[1]).max(0.0) / w[0].abs().max(1.0);
                sorted_mono.record(viol, || {
                    format!("lambda={:?} k={k} vals={vals:?}", lam_sorted.entries())
                });
            }
        }

        // Newton-MacLaurin monotonicity over admissible exponent pairs
        for m in 1..=n {
            for l in 0..m {
                for r in 1..=m {
                    for s in 0..=l.min(r - 1) {
                        let a = nm_quotient(&lam, m, l).unwrap();
                        let b = nm_quotient(&lam, r, s).unwrap();
                        let viol = (a - b).max(0.0) / b.abs().max(1.0);
                        nm_mono.record(viol, || {
                            format!(
                                "lambda={:?} (m,l)=({m},{l}) (r,s)=({r},{s}) {a} > {b}",
                                lam.entries()
                            )
                        });
                    }
                }
            }
        }

        // matrix routes on a rotation-conjugated spectrum
        let w = random_symmetric(&mut rng, n, -3.0, 3.0);
        let (wl, _) = w.eigen().unwrap();
        for k in 0..=n {
            let via_eig = sigma(&wl, k).unwrap();
            let via_min = sigma_matrix_minors(&w, k).unwrap();
            routes.record(rel_err(via_eig, via_min), || {
                format!("W={:?} k={k} eig={via_eig} minors={via_min}", w.entries())
            });
        }

        // orthogonal invariance: conjugate by an extra random rotation
        let mut wc = w.entries().to_vec();
        for p in 0..n {
            for q in (p + 1)..n {
                let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let (sn, cs) = ang.sin_cos();
                rotate_sym(&mut wc, n, p, q, cs, sn);
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (wc[i * n + j] + wc[j * n + i]);
                wc[i * n + j] = v;
                wc[j * n + i] = v;
            }
        }
        let wc = SymMatrix::new(n, wc).unwrap();
        for k in 1..=n {
            let a = sigma_matrix(&w, k).unwrap();
            let b = sigma_matrix(&wc, k).unwrap();
            let err = (a - b).abs() / (1.0 + a.abs());
            orth.record(err, || format!("n={n} k={k} sigma={a} conj={b}"));
        }

        // gradient vs central finite differences of the spectral route
        for k in 1..=n {
            let grad = sigma_grad(&w, k).unwrap();
            let err = grad_fd_worst(&w, &grad, k);
            grad_fd.record(err, || format!("W={:?} k={k}", w.entries()));
        }

        // degenerate-spectrum stability: repeated eigenvalues perturbed by 1e-9
        if it % 8 == 0 {
            let mut diag = vec![0.0; n];
            let base: f64 = rng.random_range(0.5..2.0);
            for (i, d) in diag.iter_mut().enumerate() {
                *d = if i < n / 2 + 1 { base } else { base + 1.0 };
            }
            let mut m0 = SymMatrix::diagonal(&diag).unwrap().entries().to_vec();
            for p in 0..n {
                for q in (p + 1)..n {
                    let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let (sn, cs) = ang.sin_cos();
                    rotate_sym(&mut m0, n, p, q, cs, sn);
                }
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = 0.5 * (m0[i * n + j] + m0[j * n + i]);
                    m0[i * n + j] = v;
                    m0[j * n + i] = v;
                }
            }
            let w0 = SymMatrix::new(n, m0.clone()).unwrap();
            let mut m1 = m0;
            for (idx, e) in m1.iter_mut().enumerate() {
                let i = idx / n;
                let j = idx % n;
                if i <= j {
                    *e += 1e-9 * rng.random_range(-1.0..1.0);
                }
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    m1[j * n + i] = m1[i * n + j];
                }
            }
            let w1 = SymMatrix::new(n, m1).unwrap();
            for k in 1..=n {
                let g0 = sigma_grad(&w0, k).unwrap();
                let g1 = sigma_grad(&w1, k).unwrap();
                let diff = g0
                    .entries()
                    .iter()
                    .zip(g1.entries())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                let scale = g0.entries().iter().map(|x| x.abs()).fold(1.0f64, f64::max);
                grad_stab.record(diff / scale, || format!("degenerate n={n} k={k}"));
            }
        }

        // concavity of [sigma_k/sigma_l]^(1/(k-l)) along a random chord
        let mu = random_positive_spectrum(&mut rng, n);
        let t: f64 = rng.random_range(0.0..1.0);
        for k in 1..=n {
            for l in 0..k {
                let f = |sp: &Spectrum| -> f64 {
                    let s = sigma_all(sp.entries());
                    (s[k] / s[l]).powf(1.0 / (k - l) as f64)
                };
                let mixed: Vec<f64> = lam
                    .entries()
                    .iter()
                    .zip(mu.entries())
                    .map(|(a, b)| t * a + (1.0 - t) * b)
                    .collect();
                let mixed = Spectrum::new(mixed).unwrap();
                let lhs = f(&mixed);
                let rhs = t * f(&lam) + (1.0 - t) * f(&mu);
                concave.record((rhs - lhs).max(0.0), || {
                    format!("lambda={:?} mu={:?} t={t} k={k} l={l}", lam.entries(), mu.entries())
                });
            }
        }

        // lower bound on the quotient gradient sum (finite differences)
        if it % 4 == 0 {
            for k in 1..=n {
                for l in 0..k {
                    let f = |e: &[f64]| -> f64 {
                        let s = sigma_all(e);
                        (s[k] / s[l]).powf(1.0 / (k - l) as f64)
                    };
                    let h = 1e-5;
                    let mut grad_sum = 0.0;
                    for i in 0..n {
                        let mut ep = lam.entries().to_vec();
                        let mut em = ep.clone();
                        ep[i] += h;
                        em[i] -= h;
                        grad_sum += (f(&ep) - f(&em)) / (2.0 * h);
                    }
                    let bound = (binomial(n, k) / binomial(n, l)).powf(1.0 / (k - l) as f64);
                    // grace for the cancellation noise eps |f| / h and the
                    // O(h^2) truncation of the central quotient; the
                    // (k, l) = (1, 0) equality case sits exactly on the bound
                    let fval = f(lam.entries()).abs();
                    let grace =
                        (64.0 * f64::EPSILON * fval / h + h * h * fval).max(1e-12) / bound;
                    let viol = ((bound - grad_sum).max(0.0) / bound - grace).max(0.0);
                    grad_lb.record(viol, || {
                        format!("lambda={:?} k={k} l={l} sum={grad_sum} bound={bound}", lam.entries())
                    });
                }
            }
        }

        // expected-error path: spectra outside Gamma_m must be rejected
        if it % 16 == 0 {
            let mut bad = lam.entries().to_vec();
            bad[0] = -bad.iter().map(|x| x.abs()).sum::<f64>() - 1.0;
            let bad = Spectrum::new(bad).unwrap();
            let got = nm_quotient(&bad, n, 0);
            let err_flag = match got {
                Err(SymmError::OutsideCone { .. }) => 0.0,
                _ => 1.0,
            };
            domain.record(err_flag, || format!("lambda={:?} accepted outside cone", bad.entries()));
        }
    }

    PropertyReport {
        seed,
        checks: vec![
            expansion.finish(),
            rowsum.finish(),
            sorted_mono.finish(),
            nm_mono.finish(),
            orth.finish(),
            routes.finish(),
            grad_fd.finish(),
            grad_stab.finish(),
            concave.finish(),
            grad_lb.finish(),
            domain.finish(),
        ],
    }
}

/// Worst entrywise relative mismatch between `grad` and central finite
/// differences of the minors route at step 1e-6.
fn grad_fd_worst(w: &SymMatrix, grad: &SymMatrix, k: usize) -> f64 {
    let n = w.dim();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let scale = grad.entries().iter().map(|x| x.abs()).fold(1.0f64, f64::max);
    for i in 0..n {
        for j in i..n {
            let mut ep = w.entries().to_vec();
            let mut em = w.entries().to_vec();
            ep[i * n + j] += h;
            em[i * n + j] -= h;
            if i != j {
                ep[j * n + i] += h;
                em[j * n + i] -= h;
            }
            let wp = SymMatrix::new(n, ep).unwrap();
            let wm = SymMatrix::new(n, em).unwrap();
            let fd = (sigma_matrix_minors(&wp, k).unwrap()
                - sigma_matrix_minors(&wm, k).unwrap())
                / (2.0 * h);
            // symmetric perturbation hits both entries, doubling the response
            let fd = if i != j { fd / 2.0 } else { fd };
            worst = worst.max((fd - grad.get(i, j)).abs() / scale);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(e: &[f64]) -> Spectrum {
        Spectrum::new(e.to_vec()).unwrap()
    }

    #[test]
    fn sigma_of_ones_is_binomial() {
        let lam = spec(&[1.0, 1.0, 1.0]);
        assert_eq!(sigma(&lam, 2).unwrap(), 3.0);
        assert_eq!(sigma(&lam, 0).unwrap(), 1.0);
        assert_eq!(sigma(&lam, 3).unwrap(), 1.0);
    }

    #[test]
    fn sigma_basic_values() {
        assert_eq!(sigma(&spec(&[1.0, 2.0, 3.0]), 2).unwrap(), 11.0);
        assert_eq!(sigma(&spec(&[5.0, 5.0, -1.0]), 3).unwrap(), -25.0);
    }

    #[test]
    fn sigma_rejects_k_out_of_range() {
        let lam = spec(&[1.0, 2.0]);
        assert!(matches!(sigma(&lam, 3), Err(SymmError::KOutOfRange { .. })));
    }

    #[test]
    fn spectrum_rejects_bad_inputs() {
        assert!(matches!(Spectrum::new(vec![]), Err(SymmError::InvalidDimension(0))));
        assert!(matches!(Spectrum::new(vec![0.0; 9]), Err(SymmError::InvalidDimension(9))));
        assert!(matches!(Spectrum::new(vec![f64::NAN]), Err(SymmError::NonFinite)));
    }

    #[test]
    fn sigma_matrix_identity_and_diagonal() {
        let id = SymMatrix::identity(3).unwrap();
        assert!((sigma_matrix(&id, 2).unwrap() - 3.0).abs() < 1e-14);
        let d = SymMatrix::diagonal(&[1.0, 2.0, 3.0]).unwrap();
        assert!((sigma_matrix(&d, 2).unwrap() - 11.0).abs() < 1e-12);
        assert!((sigma_matrix_minors(&d, 2).unwrap() - 11.0).abs() < 1e-14);
    }

    #[test]
    fn sigma_matrix_orthogonal_conjugation() {
        // W = Q diag(1,2,3) Q^T for a fixed rotation Q
        let mut m = SymMatrix::diagonal(&[1.0, 2.0, 3.0]).unwrap().entries().to_vec();
        rotate_sym(&mut m, 3, 0, 1, 0.6, 0.8);
        rotate_sym(&mut m, 3, 1, 2, 0.8, -0.6);
        for i in 0..3 {
            for j in (i + 1)..3 {
                let v = 0.5 * (m[i * 3 + j] + m[j * 3 + i]);
                m[i * 3 + j] = v;
                m[j * 3 + i] = v;
            }
        }
        let w = SymMatrix::new(3, m).unwrap();
        assert!((sigma_matrix(&w, 2).unwrap() - 11.0).abs() < 1e-10);
        assert!((sigma_matrix_minors(&w, 2).unwrap() - 11.0).abs() < 1e-10);
    }

    #[test]
    fn sigma_grad_identity_and_diagonal() {
        let id = SymMatrix::identity(3).unwrap();
        let g = sigma_grad(&id, 2).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 2.0 } else { 0.0 };
                assert!((g.get(i, j) - expect).abs() < 1e-12);
            }
        }
        let d = SymMatrix::diagonal(&[1.0, 2.0, 3.0]).unwrap();
        let g = sigma_grad(&d, 2).unwrap();
        assert!((g.get(0, 0) - 5.0).abs() < 1e-12);
        assert!((g.get(1, 1) - 4.0).abs() < 1e-12);
        assert!((g.get(2, 2) - 3.0).abs() < 1e-12);
        assert!(g.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn sigma_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let w = random_symmetric(&mut rng, 3, -3.0, 3.0);
            let g = sigma_grad(&w, 2).unwrap();
            assert!(grad_fd_worst(&w, &g, 2) < 1e-6);
        }
    }

    #[test]
    fn hess_diag_values() {
        let lam = spec(&[1.0, 2.0, 3.0]);
        assert_eq!(sigma_hess_diag(&lam, 2, 0, 1).unwrap(), 1.0);
        assert_eq!(sigma_hess_diag(&lam, 3, 0, 1).unwrap(), 3.0);
        assert_eq!(sigma_hess_diag(&lam, 2, 0, 0).unwrap(), 0.0);
        assert!(matches!(
            sigma_hess_diag(&lam, 1, 0, 1),
            Err(SymmError::KOutOfRange { .. })
        ));
    }

    #[test]
    fn gamma_cone_membership() {
        assert!(in_gamma_cone(&spec(&[1.0, 1.0, 1.0]), 3).unwrap());
        assert!(in_gamma_cone(&spec(&[-1.0, 5.0, 5.0]), 2).unwrap());
        assert!(!in_gamma_cone(&spec(&[-1.0, 5.0, 5.0]), 3).unwrap());
    }

    #[test]
    fn nm_quotient_values() {
        assert!((nm_quotient(&spec(&[1.0, 1.0, 1.0]), 2, 0).unwrap() - 1.0).abs() < 1e-14);
        assert!((nm_quotient(&spec(&[2.0, 2.0, 2.0]), 3, 1).unwrap() - 2.0).abs() < 1e-14);
        // (sigma_2/C_3^2)^(1/2) = sqrt(11/3), bounded by the (1,0) quotient = 2
        let v = nm_quotient(&spec(&[1.0, 2.0, 3.0]), 2, 0).unwrap();
        assert!((v - (11.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((v - 1.914854).abs() < 1e-6);
        let w = nm_quotient(&spec(&[1.0, 2.0, 3.0]), 1, 0).unwrap();
        assert!(v <= w + 1e-12);
    }

    #[test]
    fn nm_quotient_outside_cone_is_domain_error() {
        let lam = spec(&[5.0, 5.0, -1.0]);
        assert!(matches!(
            nm_quotient(&lam, 3, 0),
            Err(SymmError::OutsideCone { m: 3 })
        ));
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let d = SymMatrix::diagonal(&[4.0, 1.0, 1.0, -2.0]).unwrap();
        let (lam, v) = d.eigen().unwrap();
        let mut got = lam.entries().to_vec();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((got[0] + 2.0).abs() < 1e-13);
        assert!((got[3] - 4.0).abs() < 1e-13);
        // eigenvector matrix of a diagonal input is a signed permutation
        let n = 4;
        for a in 0..n {
            let norm: f64 = (0..n).map(|i| v[i * n + a] * v[i * n + a]).sum();
            assert!((norm - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn property_suite_default_seed_passes() {
        let report = property_suite(42, 200, 5);
        for c in &report.checks {
            assert!(c.pass, "{} failed: {:?} (max_err {})", c.name, c.counterexample, c.max_err);
        }
    }

    proptest! {
        // sigma_k(lambda) = sigma_k(lambda|i) + lambda_i sigma_(k-1)(lambda|i)
        #[test]
        fn prefix_recurrence_matches_expansion(
            entries in proptest::collection::vec(-50.0..50.0f64, 2..=6),
            k_pick in 0usize..6,
            i_pick in 0usize..6,
        ) {
            let n = entries.len();
            let lam = Spectrum::new(entries).unwrap();
            let k = 1 + k_pick % n;
            let i = i_pick % n;
            let li = lam.without(i).unwrap();
            let full = sigma(&lam, k).unwrap();
            let reduced = if k == n { 0.0 } else { sigma(&li, k).unwrap() };
            let expand = reduced + lam.entries()[i] * sigma(&li, k - 1).unwrap();
            let scale = full.abs().max(expand.abs()).max(1.0);
            prop_assert!((full - expand).abs() <= 1e-10 * scale);
        }

        // spectral and minor routes agree on arbitrary symmetric matrices
        #[test]
        fn matrix_routes_agree(
            diag in proptest::collection::vec(-3.0..3.0f64, 2..=4),
            angles in proptest::collection::vec(0.0..std::f64::consts::TAU, 6),
        ) {
            let n = diag.len();
            let mut m = SymMatrix::diagonal(&diag).unwrap().entries().to_vec();
            let mut idx = 0;
            for p in 0..n {
                for q in (p+1)..n {
                    let (s, c) = angles[idx % angles.len()].sin_cos();
                    rotate_sym(&mut m, n, p, q, c, s);
                    idx += 1;
                }
            }
            for i in 0..n {
                for j in (i+1)..n {
                    let v = 0.5*(m[i*n+j] + m[j*n+i]);
                    m[i*n+j] = v;
                    m[j*n+i] = v;
                }
            }
            let w = SymMatrix::new(n, m).unwrap();
            for k in 0..=n {
                let a = sigma_matrix(&w, k).unwrap();
                let b = sigma_matrix_minors(&w, k).unwrap();
                prop_assert!((a - b).abs() <= 1e-11 * (1.0 + a.abs().max(b.abs())));
            }
        }
    }
}
