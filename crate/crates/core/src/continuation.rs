//! Newton corrector, homotopy driver in t for p > q, and the
//! epsilon-path eigenvalue solver for p = q > 1, plus a uniqueness probe.
//!
//! Path following: t_0 = 0 starts from the exact round-sphere solution
//! u == 1; each step predicts with the previous solution and corrects with
//! a damped Newton iteration against the homotopy data phi_t. The step is
//! halved on corrector failure (floor 2^-10) and grown by 1.5x after two
//! consecutive first-try successes, capped so t lands on 1 exactly.
//!
//! Every accepted iterate is kept inside the admissible cone (u > 0 and
//! W in Gamma_k pointwise); accepted continuation steps additionally
//! require W to be positive definite, the computed counterpart of the
//! convexity-maintenance statement the continuity method relies on.
//!
//! The epsilon path solves an equivalent p_eff = p + eps > q instance per
//! epsilon. Solution magnitudes scale like gamma^(1/eps), so warm starts
//! rescale the previous normalized solution by the predicted magnitude and
//! Newton tolerances follow the local right-hand-side scale.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::pde::{self, PdeError, ProblemSpec};
use crate::sparse::{self, Ilu0, LinearError};
use crate::sphere::{self, ScalarField, SphericalGrid};

/// Hard floor for the adaptive continuation step.
const DT_FLOOR: f64 = 1.0 / 1024.0;
/// Relative tolerance of the inner linear solves.
const LIN_RTOL: f64 = 1e-12;
const LIN_MAX_ITER: usize = 1000;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("Newton did not converge in {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64, last: ScalarField },
    #[error("continuation stalled at t = {t} (step floor {floor:e} reached)")]
    ContinuationStall { t: f64, floor: f64, trace: ContinuationTrace },
    #[error("convexity lost at accepted step {param}: min eigenvalue of W = {min_eig:e}")]
    ConvexityLoss { param: f64, min_eig: f64 },
    #[error("extrapolated gamma = {gamma} lies outside the bracket [{lo}, {hi}]")]
    GammaOutsideBracket { gamma: f64, lo: f64, hi: f64 },
    #[error("epsilon sequence must be strictly decreasing and positive: {0:?}")]
    BadEpsSequence(Vec<f64>),
    #[error("eigenvalue path requires p = q > 1, got p = {p}, q = {q}")]
    NotEigenProblem { p: f64, q: f64 },
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Linear(#[from] LinearError),
}

/// Newton corrector settings.
#[derive(Debug, Clone, Serialize)]
pub struct NewtonSettings {
    /// Max-norm residual target.
    pub tol_res: f64,
    pub max_iter: usize,
    /// Initial line-search factor in (0, 1].
    pub damping: f64,
    /// Smallest admissible line-search factor.
    pub damping_floor: f64,
}

impl NewtonSettings {
    /// Defaults for a problem: residual target 1e-10 C_n^k, 30 iterations,
    /// undamped steps halved down to 1/64 on residual increase.
    pub fn for_problem(spec: &ProblemSpec) -> Self {
        Self { tol_res: 1e-10 * spec.cnk(), max_iter: 30, damping: 1.0, damping_floor: 1.0 / 64.0 }
    }

    pub fn with_tol(mut self, tol_res: f64) -> Self {
        self.tol_res = tol_res;
        self
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NewtonStats {
    pub iterations: usize,
    pub final_residual: f64,
}

/// One accepted path step.
#[derive(Debug, Clone, Copy)]
pub struct TraceStep {
    /// Homotopy parameter t, or epsilon on the eigenvalue path.
    pub param: f64,
    pub newton_iters: usize,
    pub residual_inf: f64,
    pub min_eig_w: f64,
    pub min_u: f64,
    pub max_u: f64,
}

/// A priori bound data recorded alongside each accepted step; not part of
/// the serialized trace.
#[derive(Debug, Clone, Copy)]
pub struct StepBounds {
    /// C_n^k / max phi_t and C_n^k / min phi_t.
    pub c0_lower: f64,
    pub c0_upper: f64,
    /// Observed range of u^(p-q) against the data at this step.
    pub observed_min: f64,
    pub observed_max: f64,
    /// Global max |grad u| and max u.
    pub grad_max: f64,
    pub u_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// Steps indexed by the homotopy parameter t.
    Homotopy,
    /// Steps indexed by epsilon.
    EigenPath,
}

/// Diagnostics of one continuation run: the computed witness that the
/// solvable set reaches the end of the path.
#[derive(Debug, Clone)]
pub struct ContinuationTrace {
    pub kind: TraceKind,
    pub steps: Vec<TraceStep>,
    pub step_bounds: Vec<StepBounds>,
}

impl ContinuationTrace {
    fn new(kind: TraceKind) -> Self {
        Self { kind, steps: Vec::new(), step_bounds: Vec::new() }
    }

    /// JSON array of step records with keys
    /// {"t" | "eps", "newton_iters", "residual_inf", "min_eig_W", "min_u", "max_u"}.
    pub fn to_json(&self) -> serde_json::Value {
        let key = match self.kind {
            TraceKind::Homotopy => "t",
            TraceKind::EigenPath => "eps",
        };
        serde_json::Value::Array(
            self.steps
                .iter()
                .map(|s| {
                    let mut map = serde_json::Map::new();
                    map.insert(key.to_string(), s.param.into());
                    map.insert("newton_iters".into(), s.newton_iters.into());
                    map.insert("residual_inf".into(), s.residual_inf.into());
                    map.insert("min_eig_W".into(), s.min_eig_w.into());
                    map.insert("min_u".into(), s.min_u.into());
                    map.insert("max_u".into(), s.max_u.into());
                    serde_json::Value::Object(map)
                })
                .collect(),
        )
    }
}

fn axpy(u: &ScalarField, alpha: f64, d: &[f64]) -> Option<ScalarField> {
    let vals: Vec<f64> =
        u.values().iter().zip(d).map(|(a, b)| a + alpha * b).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(ScalarField::new(u.grid().clone(), vals).expect("shape preserved"))
}

/// Damped Newton iteration on the residual, against fixed data `phi`.
///
/// Steps are rejected (and the damping halved, floor 1/64) whenever they
/// leave the admissible cone -- min u <= 0 or W outside Gamma_k -- or fail
/// to decrease the max-norm residual. Returns the iterate once the residual
/// target is met; a no-convergence error carries the last iterate for
/// diagnosis.
pub fn newton_solve(
    u0: &ScalarField,
    phi: &ScalarField,
    spec: &ProblemSpec,
    settings: &NewtonSettings,
) -> Result<(ScalarField, NewtonStats), SolveError> {
    let mut u = u0.clone();
    let min_u = u.min_value();
    if min_u <= 0.0 {
        return Err(PdeError::NonPositive { min: min_u }.into());
    }
    pde::check_cone(&sphere::curvature_matrix(&u), spec.k)?;

    let mut res = pde::residual(&u, phi, spec)?;
    let mut rn = res.inf_norm();
    for iter in 0..=settings.max_iter {
        if rn <= settings.tol_res {
            return Ok((u, NewtonStats { iterations: iter, final_residual: rn }));
        }
        if iter == settings.max_iter {
            return Err(SolveError::NoConvergence {
                iters: iter,
                residual: rn,
                last: u,
            });
        }
        let jac = pde::linearize(&u, phi, spec)?;
        let ilu = Ilu0::factor(&jac.matrix)?;
        let neg_r: Vec<f64> = res.values().iter().map(|v| -v).collect();
        let step = sparse::bicgstab(&jac.matrix, &ilu, &neg_r, LIN_RTOL, LIN_MAX_ITER)?;

        let mut alpha = settings.damping;
        let mut accepted = None;
        while alpha >= settings.damping_floor {
            if let Some(trial) = axpy(&u, alpha, &step) {
                if trial.min_value() > 0.0
                    && sphere::curvature_matrix(&trial).in_gamma_k(spec.k)
                {
                    if let Ok(r_trial) = pde::residual(&trial, phi, spec) {
                        let rt = r_trial.inf_norm();
                        if rt <= settings.tol_res || rt < rn {
                            accepted = Some((trial, r_trial, rt));
                            break;
                        }
                    }
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, r_trial, rt)) => {
                u = trial;
                res = r_trial;
                rn = rt;
            }
            None => {
                return Err(SolveError::NoConvergence {
                    iters: iter,
                    residual: rn,
                    last: u,
                });
            }
        }
    }
    unreachable!("loop returns before exhausting the iteration budget");
}

fn record_step(
    trace: &mut ContinuationTrace,
    param: f64,
    iters: usize,
    residual_inf: f64,
    u: &ScalarField,
    phi_t: &ScalarField,
    spec: &ProblemSpec,
) -> Result<(), SolveError> {
    let w = sphere::curvature_matrix(u);
    let min_eig = w.global_min_eig();
    if min_eig <= 0.0 {
        return Err(SolveError::ConvexityLoss { param, min_eig });
    }
    let grad = sphere::gradient(u);
    let exponent = spec.p - spec.q + spec.epsilon;
    let ue = u.map(|v| v.powf(exponent));
    trace.steps.push(TraceStep {
        param,
        newton_iters: iters,
        residual_inf,
        min_eig_w: min_eig,
        min_u: u.min_value(),
        max_u: u.max_value(),
    });
    trace.step_bounds.push(StepBounds {
        c0_lower: spec.cnk() / phi_t.max_value(),
        c0_upper: spec.cnk() / phi_t.min_value(),
        observed_min: ue.min_value(),
        observed_max: ue.max_value(),
        grad_max: grad.max_norm(),
        u_max: u.max_value(),
    });
    Ok(())
}

fn continuation_inner(
    spec: &ProblemSpec,
    grid: &Arc<SphericalGrid>,
    settings: &NewtonSettings,
    n_steps_init: usize,
    scale_tol_to_rhs: bool,
) -> Result<(ScalarField, ContinuationTrace), SolveError> {
    if spec.epsilon != 0.0 || spec.p <= spec.q {
        return Err(PdeError::Invalid(format!(
            "continuation requires epsilon = 0 and p > q (p = {}, q = {})",
            spec.p, spec.q
        ))
        .into());
    }
    if spec.p - 1.0 + spec.k as f64 <= 0.0 {
        return Err(PdeError::Invalid(format!(
            "homotopy exponent p - 1 + k = {} must be positive",
            spec.p - 1.0 + spec.k as f64
        ))
        .into());
    }
    let phi = spec.phi_field(grid)?;
    let mut trace = ContinuationTrace::new(TraceKind::Homotopy);

    // t = 0: the round-sphere solution is exact
    let mut u = ScalarField::constant(grid.clone(), 1.0);
    let phi0 = pde::homotopy_phi(&phi, 0.0, spec);
    let r0 = pde::residual(&u, &phi0, spec)?.inf_norm();
    record_step(&mut trace, 0.0, 0, r0, &u, &phi0, spec)?;

    let n_steps = n_steps_init.max(1);
    let mut t = 0.0;
    let mut dt = 1.0 / n_steps as f64;
    let mut streak = 0usize;
    while t < 1.0 {
        let t_next = if t + dt >= 1.0 { 1.0 } else { t + dt };
        let phi_t = pde::homotopy_phi(&phi, t_next, spec);
        let eff = if scale_tol_to_rhs {
            let grad = sphere::gradient(&u);
            let scale = pde::rhs(&u, &grad, &phi_t, spec)?.inf_norm() / spec.cnk();
            settings.clone().with_tol(settings.tol_res * scale.min(1.0))
        } else {
            settings.clone()
        };
        match newton_solve(&u, &phi_t, spec, &eff) {
            Ok((u_next, stats)) => {
                record_step(
                    &mut trace,
                    t_next,
                    stats.iterations,
                    stats.final_residual,
                    &u_next,
                    &phi_t,
                    spec,
                )?;
                u = u_next;
                t = t_next;
                streak += 1;
                if streak >= 2 {
                    dt *= 1.5;
                    streak = 0;
                }
            }
            Err(SolveError::Pde(e)) => return Err(e.into()),
            Err(_) => {
                dt *= 0.5;
                streak = 0;
                if dt < DT_FLOOR {
                    return Err(SolveError::ContinuationStall { t, floor: DT_FLOOR, trace });
                }
            }
        }
    }
    Ok((u, trace))
}

/// Follow the data homotopy from the round sphere to `phi` and return the
/// solution at t = 1 together with the full trace.
pub fn continuation_solve(
    spec: &ProblemSpec,
    grid: &Arc<SphericalGrid>,
    settings: &NewtonSettings,
    n_steps_init: usize,
) -> Result<(ScalarField, ContinuationTrace), SolveError> {
    continuation_inner(spec, grid, settings, n_steps_init, false)
}

/// Result of the epsilon-path eigenvalue solve.
#[derive(Debug, Clone)]
pub struct EigenResult {
    /// The extrapolated multiplicative constant.
    pub gamma: f64,
    /// Solution at the smallest epsilon, scaled so min u = 1.
    pub u_normalized: ScalarField,
    /// (epsilon, gamma_epsilon) per path point.
    pub gamma_sequence: Vec<(f64, f64)>,
    /// A priori bracket (C_n^k / max phi, C_n^k / min phi).
    pub bracket: (f64, f64),
    /// max |grad u| / u per epsilon; bounded uniformly along the path.
    pub grad_ratios: Vec<(f64, f64)>,
    /// max u / min u per epsilon.
    pub oscillations: Vec<(f64, f64)>,
    /// One summary step per epsilon.
    pub trace: ContinuationTrace,
}

impl EigenResult {
    /// JSON with the headline numbers; the normalized solution ships as CSV.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "gamma": self.gamma,
            "gamma_sequence": self.gamma_sequence,
            "bracket": [self.bracket.0, self.bracket.1],
            "diagnostics": {
                "grad_ratios": self.grad_ratios,
                "oscillations": self.oscillations,
            },
        })
    }
}

fn max_grad_ratio(u: &ScalarField) -> f64 {
    let grad = sphere::gradient(u);
    let mut worst = 0.0f64;
    for idx in 0..u.values().len() {
        worst = worst.max(grad.norm_sq(idx).sqrt() / u.values()[idx]);
    }
    worst
}

/// Log-linear fit of gamma_eps over the last (up to) four path points,
/// evaluated at eps = 0.
fn extrapolate_gamma(seq: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> =
        seq.iter().rev().take(4).map(|&(e, g)| (e, g.ln())).collect();
    let m = pts.len();
    if m == 1 {
        return pts[0].1.exp();
    }
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = m as f64 * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return (sy / m as f64).exp();
    }
    let slope = (m as f64 * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / m as f64;
    intercept.exp()
}

/// Solve the eigenvalue problem p = q > 1 by the epsilon path.
///
/// Each epsilon is an equivalent p_eff = p + eps > q instance. The first is
/// solved by the full homotopy; later ones warm-start from the previous
/// normalized solution rescaled by the predicted magnitude
/// `gamma_prev^(1/eps)`, falling back to the full homotopy if the direct
/// correction fails. `gamma_eps = (min u_eps)^eps`, and gamma is the
/// log-linear extrapolation of the sequence to eps = 0.
pub fn eigen_solve(
    spec: &ProblemSpec,
    grid: &Arc<SphericalGrid>,
    settings: &NewtonSettings,
    n_steps_init: usize,
    eps_sequence: &[f64],
) -> Result<EigenResult, SolveError> {
    if !(spec.p == spec.q && spec.p > 1.0) {
        return Err(SolveError::NotEigenProblem { p: spec.p, q: spec.q });
    }
    if eps_sequence.is_empty()
        || eps_sequence.iter().any(|&e| e <= 0.0 || !e.is_finite())
        || eps_sequence.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(SolveError::BadEpsSequence(eps_sequence.to_vec()));
    }

    let phi = spec.phi_field(grid)?;
    let cnk = spec.cnk();
    let bracket = (cnk / phi.max_value(), cnk / phi.min_value());

    let mut trace = ContinuationTrace::new(TraceKind::EigenPath);
    let mut gamma_sequence = Vec::new();
    let mut grad_ratios = Vec::new();
    let mut oscillations = Vec::new();
    let mut prev: Option<(ScalarField, f64)> = None; // (normalized u, gamma_eps)

    for &eps in eps_sequence {
        let eps_spec = spec.with_epsilon(eps);
        let effective = eps_spec.effective();

        let mut solved: Option<(ScalarField, NewtonStats)> = None;
        if let Some((u_norm, gamma_prev)) = &prev {
            // predicted magnitude gamma^(1/eps); within an O(1) factor of
            // the true scale since gamma_eps drifts by O(eps) per step
            let scale = gamma_prev.powf(1.0 / eps);
            if scale.is_finite() && scale > 0.0 {
                let pred = u_norm.scaled(scale);
                let grad = sphere::gradient(&pred);
                let rhs_scale =
                    pde::rhs(&pred, &grad, &phi, &eps_spec)?.inf_norm() / cnk;
                let warm = settings.clone().with_tol(settings.tol_res * rhs_scale.min(1.0));
                if let Ok(ok) = newton_solve(&pred, &phi, &eps_spec, &warm) {
                    solved = Some(ok);
                }
            }
        }
        let (u, stats) = match solved {
            Some(s) => s,
            None => {
                let (u, inner) =
                    continuation_inner(&effective, grid, settings, n_steps_init, true)?;
                let last = inner.steps.last().expect("trace has the t = 1 step");
                (u, NewtonStats { iterations: last.newton_iters, final_residual: last.residual_inf })
            }
        };

        let min_u = u.min_value();
        let gamma_eps = min_u.powf(eps);
        let u_norm = u.scaled(1.0 / min_u);
        record_step(&mut trace, eps, stats.iterations, stats.final_residual, &u, &phi, &eps_spec)?;
        gamma_sequence.push((eps, gamma_eps));
        grad_ratios.push((eps, max_grad_ratio(&u)));
        oscillations.push((eps, u_norm.max_value()));
        prev = Some((u_norm, gamma_eps));
    }

    let gamma = extrapolate_gamma(&gamma_sequence);
    let width = bracket.1 - bracket.0;
    // constant data gives a zero-width bracket; allow power round-trip noise
    let allowance = 1e-4 * width + 1e-12 * (1.0 + bracket.1.abs());
    if gamma < bracket.0 - allowance || gamma > bracket.1 + allowance {
        return Err(SolveError::GammaOutsideBracket { gamma, lo: bracket.0, hi: bracket.1 });
    }
    let (u_normalized, _) = prev.expect("at least one epsilon was solved");
    Ok(EigenResult {
        gamma,
        u_normalized,
        gamma_sequence,
        bracket,
        grad_ratios,
        oscillations,
        trace,
    })
}

/// Outcome of solving from several seeds.
#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    /// Whether solutions were min-normalized before comparison (p = q path).
    pub normalized: bool,
    /// (seed index a, seed index b, inf-norm discrepancy).
    pub pairwise: Vec<(usize, usize, f64)>,
    pub max_discrepancy: f64,
    /// (min u)^eps per seed on the p = q path.
    pub gamma_per_seed: Option<Vec<f64>>,
    /// Seeds whose solve failed, with the reason.
    pub failures: Vec<(usize, String)>,
}

/// Run the corrector from each seed and compare the limits pairwise.
///
/// For p > q the solutions are compared directly (Newton from the seed,
/// with the homotopy as fallback); for the regularized p = q path each
/// solve is min-normalized first, and (min u)^eps is reported per seed.
pub fn uniqueness_probe(
    spec: &ProblemSpec,
    grid: &Arc<SphericalGrid>,
    settings: &NewtonSettings,
    n_steps_init: usize,
    seeds: &[ScalarField],
) -> Result<UniquenessReport, SolveError> {
    let normalized = spec.epsilon > 0.0;
    let phi = spec.phi_field(grid)?;
    let mut solutions: Vec<(usize, ScalarField, f64)> = Vec::new();
    let mut failures = Vec::new();
    for (idx, seed) in seeds.iter().enumerate() {
        let eff = if normalized {
            // tolerance follows the seed's own scale on the p = q path
            let grad = sphere::gradient(seed);
            let scale = pde::rhs(seed, &grad, &phi, spec)?.inf_norm() / spec.cnk();
            settings.clone().with_tol(settings.tol_res * scale.min(1.0))
        } else {
            settings.clone()
        };
        match newton_solve(seed, &phi, spec, &eff) {
            Ok((u, _)) => {
                let min_u = u.min_value();
                let g = min_u.powf(spec.epsilon);
                let u = if normalized { u.scaled(1.0 / min_u) } else { u };
                solutions.push((idx, u, g));
            }
            Err(_) if !normalized => {
                // homotopy fallback reaches the same unique limit
                match continuation_solve(spec, grid, settings, n_steps_init) {
                    Ok((u, _)) => solutions.push((idx, u, 1.0)),
                    Err(e) => failures.push((idx, e.to_string())),
                }
            }
            Err(e) => failures.push((idx, e.to_string())),
        }
    }
    let mut pairwise = Vec::new();
    let mut max_discrepancy = 0.0f64;
    for a in 0..solutions.len() {
        for b in (a + 1)..solutions.len() {
            let d = solutions[a].1.inf_diff(&solutions[b].1);
            max_discrepancy = max_discrepancy.max(d);
            pairwise.push((solutions[a].0, solutions[b].0, d));
        }
    }
    let gamma_per_seed =
        normalized.then(|| solutions.iter().map(|(_, _, g)| *g).collect());
    Ok(UniquenessReport { normalized, pairwise, max_discrepancy, gamma_per_seed, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binomial;
    use crate::pde::PhiSpec;
    use crate::sphere::{build_grid, AmbientFn, Monomial};

    fn constant_phi_spec(k: usize, p: f64, q: f64, c: f64) -> ProblemSpec {
        ProblemSpec::new(2, k, p, q, 0.0, PhiSpec::Ambient(AmbientFn::Constant(c))).unwrap()
    }

    #[test]
    fn newton_exact_start_converges_immediately() {
        let grid = build_grid(8).unwrap();
        let spec = constant_phi_spec(1, 3.0, 1.0, binomial(2, 1));
        let phi = spec.phi_field(&grid).unwrap();
        let u0 = ScalarField::constant(grid, 1.0);
        let settings = NewtonSettings::for_problem(&spec);
        let (u, stats) = newton_solve(&u0, &phi, &spec, &settings).unwrap();
        assert_eq!(stats.iterations, 0);
        assert_eq!(u.inf_diff(&u0), 0.0);
    }

    #[test]
    fn newton_contracts_constants_quadratically() {
        let grid = build_grid(16).unwrap();
        let spec = constant_phi_spec(1, 3.0, 1.0, binomial(2, 1));
        let phi = spec.phi_field(&grid).unwrap();
        let u0 = ScalarField::constant(grid.clone(), 1.1);
        let settings = NewtonSettings::for_problem(&spec);
        let (u, stats) = newton_solve(&u0, &phi, &spec, &settings).unwrap();
        assert!(stats.iterations <= 6, "took {} iterations", stats.iterations);
        let target = ScalarField::constant(grid, 1.0);
        assert!(u.inf_diff(&target) < 1e-10);
    }

    #[test]
    fn newton_recovers_manufactured_solution_from_perturbation() {
        let grid = build_grid(32).unwrap();
        let spec = crate::pde::tests::manufactured_spec();
        let phi = spec.phi_field(&grid).unwrap();
        let ustar = spec.manufactured_solution(&grid).unwrap();
        let u0 = ScalarField::from_fn(grid.clone(), |t, _, x| {
            1.0 + 0.3 * x[0] + 0.01 * t.cos()
        });
        let settings = NewtonSettings::for_problem(&spec);
        let (u, _) = newton_solve(&u0, &phi, &spec, &settings).unwrap();
        // the discrete limit sits O(h^2) from the analytic solution
        let h = grid.h();
        assert!(u.inf_diff(&ustar) < 2.0 * h * h, "err {}", u.inf_diff(&ustar));
    }

    #[test]
    fn newton_reports_nonconvergence_with_last_iterate() {
        // a tolerance below the rounding floor of the residual evaluation
        // cannot be met on non-constant data; the error carries the last
        // (already accurate) iterate
        let grid = build_grid(16).unwrap();
        let phi_fn = AmbientFn::polynomial(vec![
            Monomial { coeff: 2.0, powers: [0, 0, 0] },
            Monomial { coeff: 1.0, powers: [0, 0, 2] },
        ])
        .unwrap();
        let spec = ProblemSpec::new(2, 1, 4.0, 1.0, 0.0, PhiSpec::Ambient(phi_fn)).unwrap();
        let phi = spec.phi_field(&grid).unwrap();
        let u0 = ScalarField::constant(grid, 0.9);
        let settings = NewtonSettings::for_problem(&spec).with_tol(1e-30);
        match newton_solve(&u0, &phi, &spec, &settings) {
            Err(SolveError::NoConvergence { last, residual, .. }) => {
                assert!(last.min_value() > 0.0);
                assert!(residual < 1e-6, "stalled far from the solution: {residual}");
            }
            other => panic!("expected no-convergence, got {other:?}"),
        }
    }

    #[test]
    fn newton_rejects_inadmissible_seed_naming_the_node() {
        let grid = build_grid(16).unwrap();
        let spec = crate::pde::tests::manufactured_spec();
        let phi = spec.phi_field(&grid).unwrap();
        // strongly pinched support: W leaves Gamma_2 somewhere
        let u0 = ScalarField::from_fn(grid, |_, _, x| 1.0 + 0.9 * (x[2] * x[2] - 0.5));
        let settings = NewtonSettings::for_problem(&spec);
        match newton_solve(&u0, &phi, &spec, &settings) {
            Err(SolveError::Pde(pde::PdeError::EllipticityLoss { k: 2, i, j, .. })) => {
                assert!(i < 16 && j < 32);
            }
            other => panic!("expected cone-exit error, got {other:?}"),
        }
    }

    #[test]
    fn continuation_constant_data() {
        let grid = build_grid(16).unwrap();
        let c = 3.0;
        let spec = constant_phi_spec(1, 4.0, 1.0, c);
        let settings = NewtonSettings::for_problem(&spec);
        let (u, trace) = continuation_solve(&spec, &grid, &settings, 10).unwrap();
        let ustar = (binomial(2, 1) / c).powf(1.0 / 3.0);
        assert!(u.inf_diff(&ScalarField::constant(grid, ustar)) < 1e-8);
        assert!(trace.steps.last().unwrap().param == 1.0);
        // strictly increasing path, positive definite W throughout
        for w in trace.steps.windows(2) {
            assert!(w[1].param > w[0].param);
        }
        for s in &trace.steps {
            assert!(s.min_eig_w > 0.0);
        }
    }

    #[test]
    fn continuation_zonal_data_satisfies_c0_bounds() {
        // phi = 2 + x3^2, k = 1, p = 4, q = 1: u^3 in [2/3, 1]
        let grid = build_grid(32).unwrap();
        let phi_fn = AmbientFn::polynomial(vec![
            Monomial { coeff: 2.0, powers: [0, 0, 0] },
            Monomial { coeff: 1.0, powers: [0, 0, 2] },
        ])
        .unwrap();
        let spec = ProblemSpec::new(2, 1, 4.0, 1.0, 0.0, PhiSpec::Ambient(phi_fn)).unwrap();
        let settings = NewtonSettings::for_problem(&spec);
        let (u, trace) = continuation_solve(&spec, &grid, &settings, 10).unwrap();
        let upq = u.map(|v| v.powi(3));
        assert!(upq.min_value() >= 2.0 / 3.0 - 1e-6);
        assert!(upq.max_value() <= 1.0 + 1e-6);
        // sandwich holds with slack at every accepted step
        let h = grid.h();
        let slack = 1e-6 + 10.0 * h * h;
        for b in &trace.step_bounds {
            assert!(b.observed_min >= b.c0_lower - slack);
            assert!(b.observed_max <= b.c0_upper + slack);
            assert!(b.grad_max <= b.u_max + 10.0 * h);
        }
    }

    #[test]
    fn continuation_intermediate_exponent_regime() {
        // k + 1 < q < 2k + p: negative rho power in the data term
        let grid = build_grid(16).unwrap();
        let phi_fn = AmbientFn::polynomial(vec![
            Monomial { coeff: 2.0, powers: [0, 0, 0] },
            Monomial { coeff: 1.0, powers: [0, 0, 2] },
        ])
        .unwrap();
        let spec = ProblemSpec::new(2, 1, 6.0, 2.5, 0.0, PhiSpec::Ambient(phi_fn)).unwrap();
        let phi = spec.phi_field(&grid).unwrap();
        let assumption = pde::check_assumption(&phi, &spec, None);
        assert_eq!(assumption.case_tag, crate::pde::AssumptionCase::Intermediate);
        assert!(assumption.satisfied, "min_eig = {}", assumption.min_eig);
        let settings = NewtonSettings::for_problem(&spec);
        let (u, trace) = continuation_solve(&spec, &grid, &settings, 10).unwrap();
        // C0 sandwich with exponent p - q = 3.5
        let upq = u.map(|v| v.powf(3.5));
        assert!(upq.min_value() >= 2.0 / 3.0 - 1e-6);
        assert!(upq.max_value() <= 1.0 + 1e-6);
        for s in &trace.steps {
            assert!(s.min_eig_w > 0.0);
        }
    }

    #[test]
    fn eigen_constant_data_k2() {
        // k = 2 eigenvalue path on constant data: gamma = C_2^2 / c exactly
        let grid = build_grid(16).unwrap();
        let c = 0.5;
        let spec =
            ProblemSpec::new(2, 2, 3.0, 3.0, 0.4, PhiSpec::Ambient(AmbientFn::Constant(c)))
                .unwrap();
        let settings = NewtonSettings::for_problem(&spec);
        let result = eigen_solve(&spec, &grid, &settings, 10, &[0.4, 0.2, 0.1]).unwrap();
        let expect = binomial(2, 2) / c;
        assert!((result.gamma - expect).abs() < 1e-9, "gamma = {}", result.gamma);
    }

    #[test]
    fn eigen_constant_data_gamma_exact() {
        let grid = build_grid(16).unwrap();
        let spec =
            ProblemSpec::new(2, 1, 2.0, 2.0, 0.4, PhiSpec::Ambient(AmbientFn::Constant(2.0)))
                .unwrap();
        let settings = NewtonSettings::for_problem(&spec);
        let eps = [0.4, 0.2, 0.1, 0.05];
        let result = eigen_solve(&spec, &grid, &settings, 10, &eps).unwrap();
        assert!((result.gamma - 1.0).abs() < 1e-10, "gamma = {}", result.gamma);
        for (_, g) in &result.gamma_sequence {
            assert!((g - 1.0).abs() < 1e-10);
        }
        let ones = ScalarField::constant(grid, 1.0);
        assert!(result.u_normalized.inf_diff(&ones) < 1e-10);
    }

    #[test]
    fn eigen_rejects_bad_input() {
        let grid = build_grid(8).unwrap();
        let spec = constant_phi_spec(1, 3.0, 1.0, 2.0);
        let settings = NewtonSettings::for_problem(&spec);
        assert!(matches!(
            eigen_solve(&spec, &grid, &settings, 10, &[0.4, 0.2]),
            Err(SolveError::NotEigenProblem { .. })
        ));
        let espec =
            ProblemSpec::new(2, 1, 2.0, 2.0, 0.4, PhiSpec::Ambient(AmbientFn::Constant(2.0)))
                .unwrap();
        assert!(matches!(
            eigen_solve(&espec, &grid, &settings, 10, &[0.2, 0.4]),
            Err(SolveError::BadEpsSequence(_))
        ));
        assert!(matches!(
            eigen_solve(&espec, &grid, &settings, 10, &[]),
            Err(SolveError::BadEpsSequence(_))
        ));
    }

    #[test]
    fn scaling_equivariance_for_p_equals_q() {
        // residual(s u) = s^k residual(u) pointwise when p = q, eps = 0
        let grid = build_grid(16).unwrap();
        let spec = ProblemSpec {
            n: 2,
            k: 2,
            p: 3.0,
            q: 3.0,
            epsilon: 0.0,
            phi: PhiSpec::Ambient(AmbientFn::Constant(1.4)),
        };
        let phi = spec.phi_field(&grid).unwrap();
        let u = ScalarField::from_fn(grid.clone(), |_, _, x| 1.0 + 0.15 * x[0] + 0.1 * x[2]);
        let r1 = pde::residual(&u, &phi, &spec).unwrap();
        let w = sphere::curvature_matrix(&u);
        for s in [0.5, 3.0] {
            let rs = pde::residual(&u.scaled(s), &phi, &spec).unwrap();
            let mut worst = 0.0f64;
            for idx in 0..grid.node_count() {
                let expect = s.powi(2) * r1.values()[idx];
                // per-node scale of the two terms whose difference is the
                // residual (the pole rows amplify input rounding by 1/sin^2)
                let scale = s.powi(2) * (w.sigma2(idx).abs() + 1.0)
                    / grid.sin_theta[idx / grid.n_lon].powi(2).min(1.0);
                worst = worst.max((rs.values()[idx] - expect).abs() / scale);
            }
            assert!(worst < 1e-12, "scaling violation {worst} at s = {s}");
        }
    }

    #[test]
    fn uniqueness_probe_constant_seeds() {
        let grid = build_grid(16).unwrap();
        let spec = constant_phi_spec(1, 3.0, 1.0, binomial(2, 1));
        let settings = NewtonSettings::for_problem(&spec);
        let seeds = vec![
            ScalarField::constant(grid.clone(), 0.7),
            ScalarField::constant(grid.clone(), 1.4),
        ];
        let report = uniqueness_probe(&spec, &grid, &settings, 10, &seeds).unwrap();
        assert!(report.failures.is_empty());
        assert!(report.max_discrepancy <= 1e-9, "{}", report.max_discrepancy);
    }
}
