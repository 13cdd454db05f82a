//! The trust-region reflective solver on two small problems: Rosenbrock
//! with a box that excludes the unconstrained minimum, and a bounded line
//! fit.
//!
//!     cargo run --example bounded_least_squares

use geomatch::solver::{solve_trf, LeastSquaresProblem, TrfOptions};
use nalgebra::{dvector, DVector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rosenbrock = |x: &DVector<f64>| dvector![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]];

    let free = LeastSquaresProblem::unbounded(rosenbrock, dvector![-1.2, 1.0]);
    let sol = solve_trf(&free, &TrfOptions::default())?;
    println!(
        "rosenbrock, unbounded: x = [{:.6}, {:.6}], |r| = {:.2e}, {} iterations, {:?}",
        sol.x[0],
        sol.x[1],
        sol.residual_norm(),
        sol.iterations,
        sol.status
    );

    // The minimum (1, 1) lies outside x1 <= 0.5.
    let boxed = LeastSquaresProblem::new(rosenbrock, dvector![-2.0, -2.0], dvector![0.5, 2.0], dvector![-1.2, 1.0]);
    let sol = solve_trf(&boxed, &TrfOptions::default())?;
    println!(
        "rosenbrock, x1 <= 0.5: x = [{:.6}, {:.6}], cost {:.6}, {} accepted steps",
        sol.x[0],
        sol.x[1],
        sol.cost,
        sol.history.len() - 1
    );
    let monotone = sol.history.windows(2).all(|w| w[1].cost <= w[0].cost);
    println!("  cost non-increasing along accepted iterates: {monotone}");

    // y = 2 t + 1 with the slope capped at 1.5.
    let t: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
    let y: Vec<f64> = t.iter().map(|t| 2.0 * t + 1.0).collect();
    let line = LeastSquaresProblem::new(
        move |p: &DVector<f64>| DVector::from_iterator(t.len(), t.iter().zip(&y).map(|(t, y)| p[0] * t + p[1] - y)),
        dvector![-10.0, -10.0],
        dvector![1.5, 10.0],
        dvector![0.0, 0.0],
    );
    let sol = solve_trf(&line, &TrfOptions::default())?;
    println!("capped line fit: slope {:.6}, intercept {:.6}", sol.x[0], sol.x[1]);
    Ok(())
}
