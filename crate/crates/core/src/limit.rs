//! Deterministic large-population limit: the cumulative rate `m`, the
//! instantaneous rate `lambda = f(x)` and the convolved activity `x` on a
//! grid, solved by an explicit second-order forward scheme. The scheme is
//! explicit because `h(0) = 0` removes the diagonal term from the
//! trapezoidal convolution.

use crate::error::{Error, Result};
use crate::grid::{GridFunction, TimeGrid};
use crate::model::{KernelSpec, ModelSpec, MultiClassSpec};

/// Solution triple per class; `lambda = f(x)` holds exactly by construction
/// and `m` is the running trapezoid of `lambda`.
#[derive(Debug, Clone)]
pub struct LimitSolution {
    pub grid: TimeGrid,
    pub m: GridFunction,
    pub lambda: GridFunction,
    pub x: GridFunction,
}

impl LimitSolution {
    pub fn lambda_sup(&self) -> f64 {
        self.lambda.sup_norm()
    }
}

/// Solve the scalar limit system on `grid`.
pub fn solve_limit(spec: &ModelSpec, grid: &TimeGrid) -> LimitSolution {
    let multi = MultiClassSpec::from_scalar(spec);
    solve_limit_multiclass(&multi, grid)
        .expect("one-class wrapper is always valid")
        .pop()
        .expect("one class in, one solution out")
}

/// Solve the coupled multi-class limit system on `grid`.
///
/// With `K = 1` this produces bit-identical output to [`solve_limit`]
/// (the scalar entry point is a wrapper around this function).
pub fn solve_limit_multiclass(
    spec: &MultiClassSpec,
    grid: &TimeGrid,
) -> Result<Vec<LimitSolution>> {
    let k_classes = spec.class_count();
    let n = grid.n_steps();
    let dt = grid.dt();

    // h_{k,l}(d * dt) tabulated once per kernel.
    let h_tables: Vec<Vec<Vec<f64>>> = spec
        .kernels
        .iter()
        .map(|row| row.iter().map(|ker| tabulate_kernel(ker, grid)).collect())
        .collect();

    let mut lambda = vec![vec![0.0; n + 1]; k_classes];
    let mut x = vec![vec![0.0; n + 1]; k_classes];
    for (k, lam) in lambda.iter_mut().enumerate() {
        lam[0] = spec.rates[k].f(0.0);
    }

    for i in 1..=n {
        for k in 0..k_classes {
            let mut conv = 0.0;
            for l in 0..k_classes {
                conv += convolve_at(&h_tables[k][l], &lambda[l], i);
            }
            x[k][i] = dt * conv;
            lambda[k][i] = spec.rates[k].f(x[k][i]);
        }
    }

    Ok(lambda
        .into_iter()
        .zip(x)
        .map(|(lam, xs)| {
            let lambda = GridFunction::new(grid.clone(), lam).expect("sized by construction");
            let x = GridFunction::new(grid.clone(), xs).expect("sized by construction");
            let m = lambda.cumulative_trapezoid();
            LimitSolution { grid: grid.clone(), m, lambda, x }
        })
        .collect())
}

fn tabulate_kernel(kernel: &KernelSpec, grid: &TimeGrid) -> Vec<f64> {
    (0..grid.len()).map(|d| kernel.h(grid.t(d))).collect()
}

/// Trapezoid sum `sum_j w_j h((i-j) dt) lambda_j` over `j = 0..=i`, without
/// the `dt` factor. The `j = i` endpoint vanishes because `h(0) = 0`.
fn convolve_at(h_table: &[f64], lambda: &[f64], i: usize) -> f64 {
    let mut sum = 0.5 * h_table[i] * lambda[0];
    for j in 1..i {
        sum += h_table[i - j] * lambda[j];
    }
    sum
}

/// A priori rate bound `f(0) exp(||f'|| ||h||_t t)` from the Gronwall argument.
pub fn gronwall_rate_bound(spec: &ModelSpec, t: f64) -> f64 {
    spec.f(0.0) * (spec.sup_f_prime() * spec.kernel.h_sup(t) * t).exp()
}

/// Validate a solution against its contract: `m(0) = 0`, `m` non-decreasing,
/// `lambda = f(x) >= 0`, and `m` the trapezoid of `lambda`.
pub fn check_limit_invariants(spec: &ModelSpec, sol: &LimitSolution) -> Result<()> {
    if sol.m.at(0) != 0.0 {
        return Err(Error::InvalidParameter("m(0) != 0".into()));
    }
    for k in 0..sol.grid.len() {
        let lam = sol.lambda.at(k);
        if lam < 0.0 {
            return Err(Error::NegativeIntensity(sol.grid.t(k)));
        }
        if lam != spec.f(sol.x.at(k)) {
            return Err(Error::InvalidParameter(format!("lambda != f(x) at node {k}")));
        }
        if k > 0 && sol.m.at(k) < sol.m.at(k - 1) {
            return Err(Error::InvalidParameter(format!("m decreasing at node {k}")));
        }
    }
    let rebuilt = sol.lambda.cumulative_trapezoid();
    for k in 0..sol.grid.len() {
        if (rebuilt.at(k) - sol.m.at(k)).abs() > 1e-12 * (1.0 + sol.m.at(k).abs()) {
            return Err(Error::InvalidParameter(format!("m is not the trapezoid of lambda at node {k}")));
        }
    }
    Ok(())
}
