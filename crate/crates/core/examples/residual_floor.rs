//! Measure the rounding floor of the residual evaluation per resolution,
//! by pushing Newton against an unreachable tolerance on the manufactured
//! problem. The floor sets how tight the solver tolerance can be on a
//! given grid; see `verify::settings_for_grid`.

use hessphere::continuation::{newton_solve, NewtonSettings, SolveError};
use hessphere::pde::{PhiSpec, ProblemSpec};
use hessphere::sphere::{build_grid, AmbientFn, Monomial};

fn main() {
    let support = AmbientFn::polynomial(vec![
        Monomial { coeff: 1.0, powers: [0, 0, 0] },
        Monomial { coeff: 0.3, powers: [1, 0, 0] },
    ])
    .unwrap();
    let spec =
        ProblemSpec::new(2, 2, 4.0, 2.0, 0.0, PhiSpec::Manufactured { support }).unwrap();
    for n_lat in [32usize, 64, 128] {
        let grid = build_grid(n_lat).unwrap();
        let phi = spec.phi_field(&grid).unwrap();
        let u0 = spec.manufactured_solution(&grid).unwrap();
        let settings = NewtonSettings::for_problem(&spec).with_tol(1e-30);
        match newton_solve(&u0, &phi, &spec, &settings) {
            Err(SolveError::NoConvergence { residual, .. }) => {
                println!("n_lat = {n_lat:4}: residual floor ~ {residual:.3e}");
            }
            Ok((_, stats)) => {
                println!("n_lat = {n_lat:4}: reached {:.3e}", stats.final_residual)
            }
            Err(e) => println!("n_lat = {n_lat:4}: {e}"),
        }
    }
}
