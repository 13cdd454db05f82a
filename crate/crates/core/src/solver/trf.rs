//! Trust-region reflective solver for `min ½‖r(x)‖²` subject to `lo ≤ x ≤ hi`.
//!
//! Each iteration scales the problem with the Coleman–Li vector so that the
//! bounds shape the trust region, solves the Gauss–Newton subproblem exactly
//! through an SVD of the augmented Jacobian, and picks the best of three
//! candidates: the step truncated at the first bound it crosses, the step
//! reflected off that bound, and a scaled steepest-descent step. Iterates
//! stay strictly inside the box.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrfError {
    #[error("initial point cannot be made strictly feasible")]
    InfeasibleStart,
    #[error("residual is not finite at the probed point")]
    NonFiniteResidual,
    #[error("bounds and initial point have inconsistent dimensions")]
    Dimension,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    SmallStep,
    Failed,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Converged => "Converged",
            SolveStatus::MaxIterations => "MaxIterations",
            SolveStatus::SmallStep => "SmallStep",
            SolveStatus::Failed => "Failed",
        };
        f.write_str(s)
    }
}

pub struct LeastSquaresProblem<'a> {
    pub residual: Box<dyn Fn(&DVector<f64>) -> DVector<f64> + 'a>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub x0: DVector<f64>,
}

impl<'a> LeastSquaresProblem<'a> {
    pub fn new(
        residual: impl Fn(&DVector<f64>) -> DVector<f64> + 'a,
        lower: DVector<f64>,
        upper: DVector<f64>,
        x0: DVector<f64>,
    ) -> Self {
        Self {
            residual: Box::new(residual),
            lower,
            upper,
            x0,
        }
    }

    pub fn unbounded(residual: impl Fn(&DVector<f64>) -> DVector<f64> + 'a, x0: DVector<f64>) -> Self {
        let n = x0.len();
        Self::new(
            residual,
            DVector::from_element(n, f64::NEG_INFINITY),
            DVector::from_element(n, f64::INFINITY),
            x0,
        )
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>, TrfError> {
        let r = (self.residual)(x);
        if r.iter().all(|v| v.is_finite()) {
            Ok(r)
        } else {
            Err(TrfError::NonFiniteResidual)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrfOptions {
    pub max_iter: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub gtol: f64,
    pub jacobian_step: f64,
}

impl Default for TrfOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            ftol: 1e-8,
            xtol: 1e-8,
            gtol: 1e-8,
            jacobian_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedIterate {
    pub x: DVector<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrfSolution {
    pub x: DVector<f64>,
    pub residual: DVector<f64>,
    /// `½‖r‖²`
    pub cost: f64,
    /// Trust-region subproblems solved (accepted or rejected).
    pub iterations: usize,
    pub status: SolveStatus,
    /// Starting point followed by every accepted iterate.
    pub history: Vec<AcceptedIterate>,
}

impl TrfSolution {
    pub fn residual_norm(&self) -> f64 {
        self.residual.norm()
    }
}

/// Central differences where `x ± h·e_j` stays inside the bounds, one-sided
/// differences otherwise. `h = step·max(1, |x_j|)`.
pub fn numeric_jacobian(
    residual: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    step: f64,
) -> Result<DMatrix<f64>, TrfError> {
    let f0 = residual(x);
    let m = f0.len();
    let mut jac = DMatrix::zeros(m, x.len());
    for j in 0..x.len() {
        let h = step * x[j].abs().max(1.0);
        let up_ok = x[j] + h <= upper[j];
        let down_ok = x[j] - h >= lower[j];
        let probe = |delta: f64| {
            let mut xp = x.clone();
            xp[j] += delta;
            let r = residual(&xp);
            if r.iter().all(|v| v.is_finite()) {
                Ok(r)
            } else {
                Err(TrfError::NonFiniteResidual)
            }
        };
        let column = match (up_ok, down_ok) {
            (true, true) => (probe(h)? - probe(-h)?) / (2.0 * h),
            (true, false) => (probe(h)? - &f0) / h,
            (false, true) => (&f0 - probe(-h)?) / h,
            (false, false) => DVector::zeros(m),
        };
        jac.set_column(j, &column);
    }
    Ok(jac)
}

fn in_bounds(x: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>) -> bool {
    x.iter().zip(lb.iter().zip(ub.iter())).all(|(v, (l, u))| v >= l && v <= u)
}

/// Largest `t` with `x + t·s` inside the box, and which components hit.
fn step_size_to_bound(x: &DVector<f64>, s: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>) -> (f64, Vec<f64>) {
    let mut steps = vec![f64::INFINITY; x.len()];
    for i in 0..x.len() {
        if s[i] != 0.0 {
            steps[i] = ((lb[i] - x[i]) / s[i]).max((ub[i] - x[i]) / s[i]);
        }
    }
    let min_step = steps.iter().copied().fold(f64::INFINITY, f64::min);
    let hits = (0..x.len())
        .map(|i| if steps[i] == min_step { s[i].signum() } else { 0.0 })
        .collect();
    (min_step, hits)
}

/// Roots of `‖x + t·s‖ = Δ`, ordered (negative, positive).
fn intersect_trust_region(x: &DVector<f64>, s: &DVector<f64>, delta: f64) -> (f64, f64) {
    let a = s.dot(s);
    let b = x.dot(s);
    let c = x.dot(x) - delta * delta;
    let d = (b * b - a * c).max(0.0).sqrt();
    let q = -(b + b.signum() * d);
    let (t1, t2) = if q == 0.0 { (-d / a, d / a) } else { (q / a, c / q) };
    if t1 < t2 {
        (t1, t2)
    } else {
        (t2, t1)
    }
}

/// `½ sᵀ(JᵀJ + diag(D))s + gᵀs`
fn evaluate_quadratic(j: &DMatrix<f64>, g: &DVector<f64>, s: &DVector<f64>, diag: &DVector<f64>) -> f64 {
    let js = j * s;
    0.5 * (js.dot(&js) + s.component_mul(diag).dot(s)) + g.dot(s)
}

/// Coefficients of the model along `s0 + t·s` as `a t² + b t + c`.
fn quadratic_1d(
    j: &DMatrix<f64>,
    g: &DVector<f64>,
    s: &DVector<f64>,
    diag: &DVector<f64>,
    s0: Option<&DVector<f64>>,
) -> (f64, f64, f64) {
    let v = j * s;
    let a = 0.5 * (v.dot(&v) + s.component_mul(diag).dot(s));
    let mut b = g.dot(s);
    let mut c = 0.0;
    if let Some(s0) = s0 {
        let u = j * s0;
        b += u.dot(&v) + s0.component_mul(diag).dot(s);
        c = 0.5 * u.dot(&u) + g.dot(s0) + 0.5 * s0.component_mul(diag).dot(s0);
    }
    (a, b, c)
}

fn minimize_quadratic_1d(a: f64, b: f64, lo: f64, hi: f64, c: f64) -> (f64, f64) {
    let mut candidates = vec![lo, hi];
    if a != 0.0 {
        let extremum = -0.5 * b / a;
        if lo < extremum && extremum < hi {
            candidates.push(extremum);
        }
    }
    candidates
        .into_iter()
        .map(|t| (t, a * t * t + b * t + c))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("at least two candidates")
}

/// Coleman–Li scaling vector and its derivative signs.
fn cl_scaling(x: &DVector<f64>, g: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = x.len();
    let mut v = DVector::from_element(n, 1.0);
    let mut dv = DVector::zeros(n);
    for i in 0..n {
        if g[i] < 0.0 && ub[i].is_finite() {
            v[i] = ub[i] - x[i];
            dv[i] = -1.0;
        } else if g[i] > 0.0 && lb[i].is_finite() {
            v[i] = x[i] - lb[i];
            dv[i] = 1.0;
        }
    }
    (v, dv)
}

/// Moves components on or past a bound strictly inside. With `rstep = 0`
/// the nudge is one ulp, otherwise `rstep·(hi − lo)` (or `rstep·max(1,|b|)`
/// for a half-infinite box).
fn make_strictly_feasible(x: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>, rstep: f64) -> DVector<f64> {
    let mut out = x.clone();
    for i in 0..x.len() {
        let width = ub[i] - lb[i];
        let nudge = |b: f64| {
            if width.is_finite() {
                rstep * width
            } else {
                rstep * b.abs().max(1.0)
            }
        };
        if out[i] <= lb[i] {
            out[i] = if rstep == 0.0 { lb[i].next_up() } else { lb[i] + nudge(lb[i]) };
        } else if out[i] >= ub[i] {
            out[i] = if rstep == 0.0 { ub[i].next_down() } else { ub[i] - nudge(ub[i]) };
        }
        if out[i] <= lb[i] || out[i] >= ub[i] {
            // Box narrower than the nudge: fall back to the midpoint.
            out[i] = 0.5 * (lb[i] + ub[i]);
        }
    }
    out
}

/// Exact minimiser of `‖A p + f‖` over `‖p‖ ≤ Δ` from the SVD of `A`.
fn solve_trust_region_subproblem(
    uf: &DVector<f64>,
    s: &DVector<f64>,
    v: &DMatrix<f64>,
    delta: f64,
    rows: usize,
    initial_alpha: f64,
) -> (DVector<f64>, f64) {
    let suf = s.component_mul(uf);
    let s_max = s.max();
    let s_min = s.min();
    let full_rank = s_min > f64::EPSILON * rows as f64 * s_max;
    let step_for = |alpha: f64| -> DVector<f64> {
        let coeffs = DVector::from_iterator(s.len(), (0..s.len()).map(|i| suf[i] / (s[i] * s[i] + alpha)));
        -(v * coeffs)
    };
    if full_rank {
        let coeffs = DVector::from_iterator(s.len(), (0..s.len()).map(|i| uf[i] / s[i]));
        let p = -(v * coeffs);
        if p.norm() <= delta {
            return (p, 0.0);
        }
    }
    let phi = |alpha: f64| -> (f64, f64) {
        let mut norm_sq = 0.0;
        let mut deriv = 0.0;
        for i in 0..s.len() {
            let denom = s[i] * s[i] + alpha;
            norm_sq += (suf[i] / denom).powi(2);
            deriv += suf[i] * suf[i] / denom.powi(3);
        }
        let p_norm = norm_sq.sqrt();
        (p_norm - delta, -deriv / p_norm)
    };
    let mut alpha_upper = suf.norm() / delta;
    let mut alpha_lower = if full_rank {
        let (f, fp) = phi(0.0);
        -f / fp
    } else {
        0.0
    };
    let reset = |lo: f64, hi: f64| (0.001 * hi).max((lo * hi).sqrt());
    let mut alpha = if initial_alpha > 0.0 { initial_alpha } else { reset(alpha_lower, alpha_upper) };
    for _ in 0..10 {
        if alpha < alpha_lower || alpha > alpha_upper {
            alpha = reset(alpha_lower, alpha_upper);
        }
        let (f, fp) = phi(alpha);
        if f < 0.0 {
            alpha_upper = alpha;
        }
        let ratio = f / fp;
        alpha_lower = alpha_lower.max(alpha - ratio);
        alpha -= (f + delta) * ratio / delta;
        if f.abs() < 0.01 * delta {
            break;
        }
    }
    let mut p = step_for(alpha);
    let norm = p.norm();
    if norm > 0.0 {
        p *= delta / norm;
    }
    (p, alpha)
}

pub fn solve_trf(problem: &LeastSquaresProblem<'_>, opts: &TrfOptions) -> Result<TrfSolution, TrfError> {
    let (lb, ub) = (&problem.lower, &problem.upper);
    let n = problem.x0.len();
    if lb.len() != n || ub.len() != n {
        return Err(TrfError::Dimension);
    }
    if (0..n).any(|i| !(lb[i] < ub[i])) {
        return Err(TrfError::InfeasibleStart);
    }
    let mut x = make_strictly_feasible(&problem.x0, lb, ub, 1e-10);
    if (0..n).any(|i| !(x[i] > lb[i] && x[i] < ub[i])) {
        return Err(TrfError::InfeasibleStart);
    }
    let residual_fn = |x: &DVector<f64>| (problem.residual)(x);
    let mut f = problem.eval(&x)?;
    let m = f.len();
    let mut cost = 0.5 * f.dot(&f);
    let mut jac = numeric_jacobian(&residual_fn, &x, lb, ub, opts.jacobian_step)?;
    let mut g = jac.transpose() * &f;
    let mut history = vec![AcceptedIterate { x: x.clone(), cost }];

    let (v0, _) = cl_scaling(&x, &g, lb, ub);
    let mut delta = x.component_div(&v0.map(f64::sqrt)).norm();
    if delta == 0.0 || !delta.is_finite() {
        delta = 1.0;
    }
    let mut alpha = 0.0;
    let mut iterations = 0;
    let status = loop {
        let (v, dv) = cl_scaling(&x, &g, lb, ub);
        let g_norm = g.component_mul(&v).amax();
        if g_norm < opts.gtol {
            break SolveStatus::Converged;
        }
        if iterations >= opts.max_iter {
            break SolveStatus::MaxIterations;
        }
        let d = v.map(f64::sqrt);
        let diag_h = g.component_mul(&dv);
        let g_h = d.component_mul(&g);
        let mut j_h = jac.clone();
        for (c, mut col) in j_h.column_iter_mut().enumerate() {
            col *= d[c];
        }
        let mut aug = DMatrix::zeros(m + n, n);
        aug.view_mut((0, 0), (m, n)).copy_from(&j_h);
        for i in 0..n {
            aug[(m + i, i)] = diag_h[i].max(0.0).sqrt();
        }
        let mut f_aug = DVector::zeros(m + n);
        f_aug.rows_mut(0, m).copy_from(&f);
        let svd = aug.svd(true, true);
        let u = svd.u.as_ref().expect("requested U");
        let v_t = svd.v_t.as_ref().expect("requested V");
        let uf = u.transpose() * &f_aug;
        let v_mat = v_t.transpose();
        let theta = (1.0 - g_norm).max(0.995);

        let mut accepted = None;
        let mut termination = None;
        while iterations < opts.max_iter {
            iterations += 1;
            let (p_h, a) = solve_trust_region_subproblem(&uf, &svd.singular_values, &v_mat, delta, m + n, alpha);
            alpha = a;
            let p = d.component_mul(&p_h);
            let (step, step_h, predicted) = select_step(&x, &j_h, &diag_h, &g_h, p, p_h, &d, delta, lb, ub, theta);
            let x_new = make_strictly_feasible(&(&x + &step), lb, ub, 0.0);
            let f_new = problem.eval(&x_new)?;
            let cost_new = 0.5 * f_new.dot(&f_new);
            let actual = cost - cost_new;
            let step_h_norm = step_h.norm();
            let ratio = if predicted > 0.0 {
                actual / predicted
            } else if predicted == actual {
                1.0
            } else {
                0.0
            };
            let new_delta = if ratio < 0.25 {
                0.25 * step_h_norm
            } else if ratio > 0.75 && step_h_norm > 0.95 * delta {
                2.0 * delta
            } else {
                delta
            };
            let step_norm = step.norm();
            if actual.abs() < opts.ftol * cost && ratio > 0.25 {
                termination = Some(SolveStatus::Converged);
            } else if step_norm < opts.xtol * (opts.xtol + x.norm()) {
                termination = Some(if actual > 0.0 { SolveStatus::Converged } else { SolveStatus::SmallStep });
            }
            if actual > 0.0 {
                delta = new_delta;
                alpha *= if delta > 0.0 { 1.0 } else { 0.0 };
                accepted = Some((x_new, f_new, cost_new));
                break;
            }
            if termination.is_some() {
                break;
            }
            delta = new_delta;
            if delta < f64::EPSILON * x.norm().max(1.0) {
                termination = Some(SolveStatus::SmallStep);
                break;
            }
        }
        if let Some((xn, fnew, cn)) = accepted {
            x = xn;
            f = fnew;
            cost = cn;
            history.push(AcceptedIterate { x: x.clone(), cost });
            jac = numeric_jacobian(&residual_fn, &x, lb, ub, opts.jacobian_step)?;
            g = jac.transpose() * &f;
        }
        if let Some(t) = termination {
            break t;
        }
        if cost == 0.0 {
            break SolveStatus::Converged;
        }
    };
    Ok(TrfSolution {
        x,
        residual: f,
        cost,
        iterations,
        status,
        history,
    })
}

#[allow(clippy::too_many_arguments)]
fn select_step(
    x: &DVector<f64>,
    j_h: &DMatrix<f64>,
    diag_h: &DVector<f64>,
    g_h: &DVector<f64>,
    mut p: DVector<f64>,
    mut p_h: DVector<f64>,
    d: &DVector<f64>,
    delta: f64,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
    theta: f64,
) -> (DVector<f64>, DVector<f64>, f64) {
    if in_bounds(&(x + &p), lb, ub) {
        let value = evaluate_quadratic(j_h, g_h, &p_h, diag_h);
        return (p, p_h, -value);
    }
    let (p_stride, hits) = step_size_to_bound(x, &p, lb, ub);

    // Reflected direction: flip the components that hit a bound.
    let mut r_h = p_h.clone();
    for (i, &h) in hits.iter().enumerate() {
        if h != 0.0 {
            r_h[i] = -r_h[i];
        }
    }
    let r = d.component_mul(&r_h);
    p *= p_stride;
    p_h *= p_stride;
    let x_on_bound = x + &p;
    let (_, to_tr) = intersect_trust_region(&p_h, &r_h, delta);
    let (to_bound, _) = step_size_to_bound(&x_on_bound, &r, lb, ub);
    let r_stride = to_bound.min(to_tr);
    let (r_lo, r_hi) = if r_stride > 0.0 {
        let lo = (1.0 - theta) * p_stride / r_stride;
        let hi = if r_stride == to_bound { theta * to_bound } else { to_tr };
        (lo, hi)
    } else {
        (0.0, -1.0)
    };
    let (reflected, reflected_h, r_value) = if r_lo <= r_hi {
        let (a, b, c) = quadratic_1d(j_h, g_h, &r_h, diag_h, Some(&p_h));
        let (t, value) = minimize_quadratic_1d(a, b, r_lo, r_hi, c);
        let rh = &p_h + &r_h * t;
        (d.component_mul(&rh), rh, value)
    } else {
        (p.clone(), p_h.clone(), f64::INFINITY)
    };

    // Truncated step, kept strictly inside.
    p *= theta;
    p_h *= theta;
    let p_value = evaluate_quadratic(j_h, g_h, &p_h, diag_h);

    // Scaled anti-gradient.
    let ag_h = -g_h;
    let ag = d.component_mul(&ag_h);
    let ag_h_norm = ag_h.norm();
    let (ag_step, ag_step_h, ag_value) = if ag_h_norm > 0.0 {
        let to_tr = delta / ag_h_norm;
        let (to_bound, _) = step_size_to_bound(x, &ag, lb, ub);
        let stride = if to_bound < to_tr { theta * to_bound } else { to_tr };
        let (a, b, _) = quadratic_1d(j_h, g_h, &ag_h, diag_h, None);
        let (t, value) = minimize_quadratic_1d(a, b, 0.0, stride, 0.0);
        (ag * t, ag_h * t, value)
    } else {
        (DVector::zeros(x.len()), DVector::zeros(x.len()), f64::INFINITY)
    };

    if p_value < r_value && p_value < ag_value {
        (p, p_h, -p_value)
    } else if r_value < p_value && r_value < ag_value {
        (reflected, reflected_h, -r_value)
    } else {
        (ag_step, ag_step_h, -ag_value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_of_identity_and_powers() {
        let lb = DVector::from_element(2, f64::NEG_INFINITY);
        let ub = DVector::from_element(2, f64::INFINITY);
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let id = numeric_jacobian(&|q: &DVector<f64>| q.clone(), &x, &lb, &ub, 1e-7).unwrap();
        assert!((id - DMatrix::identity(2, 2)).amax() < 1e-8);
        let pow = |q: &DVector<f64>| DVector::from_vec(vec![q[0] * q[0], q[1].powi(3)]);
        let j = numeric_jacobian(&pow, &x, &lb, &ub, 1e-7).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 12.0]));
        assert!(((j - &expected).amax() / 12.0) < 1e-5);
    }

    #[test]
    fn one_sided_difference_at_bound() {
        let lb = DVector::from_vec(vec![0.0]);
        let ub = DVector::from_vec(vec![1.0]);
        let x = DVector::from_vec(vec![1.0 - 1e-9]);
        let f = |q: &DVector<f64>| DVector::from_vec(vec![q[0] * q[0]]);
        let j = numeric_jacobian(&f, &x, &lb, &ub, 1e-7).unwrap();
        assert!((j[(0, 0)] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn single_variable_with_active_bound() {
        let problem = LeastSquaresProblem::new(
            |q: &DVector<f64>| DVector::from_vec(vec![q[0] - 5.0]),
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.5]),
        );
        let sol = solve_trf(&problem, &TrfOptions::default()).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-6, "x = {}", sol.x[0]);
        assert!(sol.x[0] < 1.0);
        // Gradient of ½(q−5)² is negative at the optimum: it points past the upper bound.
        assert!(sol.x[0] - 5.0 < 0.0);
    }

    #[test]
    fn start_on_bound_is_nudged_inside() {
        let problem = LeastSquaresProblem::new(
            |q: &DVector<f64>| DVector::from_vec(vec![q[0] - 0.25]),
            DVector::from_vec(vec![-1.0]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![-1.0]),
        );
        let sol = solve_trf(&problem, &TrfOptions::default()).unwrap();
        assert!(sol.history[0].x[0] > -1.0);
        assert!((sol.x[0] - 0.25).abs() < 1e-8);
    }

    #[test]
    fn non_finite_residual_reported() {
        let problem = LeastSquaresProblem::unbounded(
            |q: &DVector<f64>| DVector::from_vec(vec![q[0].ln()]),
            DVector::from_vec(vec![-1.0]),
        );
        assert_eq!(solve_trf(&problem, &TrfOptions::default()), Err(TrfError::NonFiniteResidual));
    }

    #[test]
    fn inverted_bounds_rejected() {
        let problem = LeastSquaresProblem::new(
            |q: &DVector<f64>| q.clone(),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![0.5]),
        );
        assert_eq!(solve_trf(&problem, &TrfOptions::default()), Err(TrfError::InfeasibleStart));
    }
}
