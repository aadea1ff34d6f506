//! Finite-N fluctuation paths extracted from simulations, and samples of the
//! limiting Gaussian processes by two independent numerical routes.
//!
//! Stochastic integrals use left-point (Ito) evaluation; deterministic
//! convolutions use the trapezoid rule. Mixing the two is deliberate: the
//! driving noise must be read in the Ito sense while the kernel passes are
//! ordinary integrals.

use crate::error::{Error, Result};
use crate::events::EventPaths;
use crate::grid::{GridFunction, TimeGrid};
use crate::limit::LimitSolution;
use crate::model::{ModelSpec, MultiClassSpec};
use crate::seed::{standard_normal, SeedPolicy, StreamDomain};
use crate::sim::SimResult;
use crate::volterra::{apply_phi_multiclass, convolve_h_prime, KernelTable, ResolventTable};

/// Rescaled deviation paths of one finite-N simulation.
#[derive(Debug, Clone)]
pub struct FluctuationPaths {
    pub grid: TimeGrid,
    /// `(sum_i Z_i - N m) / sqrt(N)`
    pub y: GridFunction,
    /// Activity fluctuation, the `h'` convolution of `y`.
    pub x: GridFunction,
    /// Martingale part `(sum_i Z_i - N Lambda^N) / sqrt(N)`.
    pub m_bar: GridFunction,
    /// Drift part `sqrt(N) (Lambda^N - m)`.
    pub a: GridFunction,
    /// Taylor remainder `a - int f'(x_s) x(s) ds`.
    pub r: GridFunction,
    /// `sqrt(N) (lambda^N - lambda)` on the grid.
    pub intensity_fluct: GridFunction,
}

/// Extract all fluctuation paths from a scalar simulation.
pub fn compute_fluctuations(
    sim: &SimResult,
    limit: &LimitSolution,
    spec: &ModelSpec,
) -> Result<FluctuationPaths> {
    if !sim.events.grid().same_as(&limit.grid) {
        return Err(Error::GridMismatch("simulation and limit grids differ".into()));
    }
    let grid = limit.grid.clone();
    let n_units = sim.n_units() as f64;
    let sqrt_n = n_units.sqrt();
    let counts = sim.events.total_count_path(None);

    let y_values: Vec<f64> = (0..grid.len())
        .map(|k| (counts.at(k) - n_units * limit.m.at(k)) / sqrt_n)
        .collect();
    let m_bar_values: Vec<f64> = (0..grid.len())
        .map(|k| (counts.at(k) - n_units * sim.big_lambda_path().at(k)) / sqrt_n)
        .collect();
    let a_values: Vec<f64> = (0..grid.len())
        .map(|k| sqrt_n * (sim.big_lambda_path().at(k) - limit.m.at(k)))
        .collect();
    let intensity_values: Vec<f64> = (0..grid.len())
        .map(|k| sqrt_n * (sim.lambda_path().at(k) - limit.lambda.at(k)))
        .collect();

    let y = GridFunction::new(grid.clone(), y_values)?;
    let x = crate::volterra::apply_psi(spec, &y);
    let drift_integrand = GridFunction::new(
        grid.clone(),
        (0..grid.len()).map(|k| spec.f_prime(limit.x.at(k)) * x.at(k)).collect(),
    )?;
    let drift = drift_integrand.cumulative_trapezoid();
    let r_values: Vec<f64> =
        (0..grid.len()).map(|k| a_values[k] - drift.at(k)).collect();

    Ok(FluctuationPaths {
        grid: grid.clone(),
        y,
        x,
        m_bar: GridFunction::new(grid.clone(), m_bar_values)?,
        a: GridFunction::new(grid.clone(), a_values)?,
        r: GridFunction::new(grid.clone(), r_values)?,
        intensity_fluct: GridFunction::new(grid, intensity_values)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleRoute {
    /// `G_Y = W + K * W` through the prebuilt resolvent table.
    Resolvent,
    /// Column march on the stochastic Volterra equation itself.
    FixedPoint,
}

/// One draw of the limiting processes `(W_lambda, G_Y, G_X, sigma)`.
#[derive(Debug, Clone)]
pub struct LimitFluctuationSample {
    pub grid: TimeGrid,
    pub w_lambda: GridFunction,
    pub g_y: GridFunction,
    pub g_x: GridFunction,
    pub sigma: GridFunction,
    pub route: SampleRoute,
}

/// Left-point Euler path of `W_lambda(t) = int sqrt(lambda) dW` from one
/// normal stream.
pub fn sample_w_lambda(
    limit: &LimitSolution,
    rng: &mut impl rand::RngCore,
) -> Result<GridFunction> {
    let grid = &limit.grid;
    let sqrt_dt = grid.dt().sqrt();
    let mut values = vec![0.0; grid.len()];
    for k in 1..grid.len() {
        let lambda = limit.lambda.at(k - 1);
        if lambda < 0.0 {
            return Err(Error::NegativeIntensity(grid.t(k - 1)));
        }
        values[k] = values[k - 1] + lambda.sqrt() * sqrt_dt * standard_normal(rng);
    }
    GridFunction::new(grid.clone(), values)
}

/// Sample the scalar limit triple; both routes consume the identical
/// `W_lambda` path for a given `(seed, replicate)`.
pub fn sample_limit(
    limit: &LimitSolution,
    spec: &ModelSpec,
    kappa: &KernelTable,
    resolvent: &ResolventTable,
    seed: &SeedPolicy,
    replicate: u64,
    route: SampleRoute,
) -> Result<LimitFluctuationSample> {
    let multi = MultiClassSpec::from_scalar(spec);
    sample_limit_multiclass(std::slice::from_ref(limit), &multi, kappa, resolvent, seed, replicate, route)
        .map(|mut v| v.pop().expect("one class in, one sample out"))
}

/// Multi-class limit draw with independent per-class Brownian streams.
pub fn sample_limit_multiclass(
    limits: &[LimitSolution],
    spec: &MultiClassSpec,
    kappa: &KernelTable,
    resolvent: &ResolventTable,
    seed: &SeedPolicy,
    replicate: u64,
    route: SampleRoute,
) -> Result<Vec<LimitFluctuationSample>> {
    let w_paths: Vec<GridFunction> = limits
        .iter()
        .enumerate()
        .map(|(k, limit)| {
            let mut rng = seed.stream(StreamDomain::LimitDraw, replicate, k as u64);
            sample_w_lambda(limit, &mut rng)
        })
        .collect::<Result<_>>()?;
    sample_limit_multiclass_from_noise(limits, spec, kappa, resolvent, w_paths, route)
}

/// Deterministic tail of the sampler: map given noise paths through the
/// Volterra machinery. Exposed so permutation/coupling properties can be
/// tested with controlled noise.
pub fn sample_limit_multiclass_from_noise(
    limits: &[LimitSolution],
    spec: &MultiClassSpec,
    kappa: &KernelTable,
    resolvent: &ResolventTable,
    w_paths: Vec<GridFunction>,
    route: SampleRoute,
) -> Result<Vec<LimitFluctuationSample>> {
    let k_classes = spec.class_count();
    if limits.len() != k_classes || w_paths.len() != k_classes {
        return Err(Error::GridMismatch("class count mismatch in limit sampler".into()));
    }
    let grid = limits[0].grid.clone();
    for w in &w_paths {
        if !w.grid().same_as(&grid) {
            return Err(Error::GridMismatch("noise path on a different grid".into()));
        }
    }

    let g_y_paths: Vec<GridFunction> = match route {
        SampleRoute::Resolvent => apply_phi_multiclass(resolvent, &w_paths)?,
        SampleRoute::FixedPoint => fixed_point_march(kappa, &w_paths)?,
    };

    // G_X and sigma per class, with the sqrt(p_k/p_l) weights inside the
    // cross-class convolution.
    let mut samples = Vec::with_capacity(k_classes);
    for k in 0..k_classes {
        let mut g_x = GridFunction::zeros(&grid);
        for l in 0..k_classes {
            let weight = (spec.proportions[k] / spec.proportions[l]).sqrt();
            let kernel = &spec.kernels[k][l];
            let h_prime_at: Vec<f64> =
                (0..grid.len()).map(|d| kernel.h_prime(grid.t(d))).collect();
            let convolved = convolve_h_prime(&h_prime_at, &g_y_paths[l]);
            for (target, value) in
                g_x.values_mut().iter_mut().zip(convolved.values())
            {
                *target += weight * value;
            }
        }
        let sigma_values: Vec<f64> = (0..grid.len())
            .map(|i| spec.rates[k].f_prime(limits[k].x.at(i)) * g_x.at(i))
            .collect();
        samples.push(LimitFluctuationSample {
            grid: grid.clone(),
            w_lambda: w_paths[k].clone(),
            g_y: g_y_paths[k].clone(),
            g_x,
            sigma: GridFunction::new(grid.clone(), sigma_values)?,
            route,
        });
    }
    Ok(samples)
}

/// Explicit column march on `G = W + int kappa G`: the diagonal carries no
/// weight because `kappa(t,t) = 0` for model kernels.
fn fixed_point_march(kappa: &KernelTable, w_paths: &[GridFunction]) -> Result<Vec<GridFunction>> {
    let k_classes = kappa.class_count();
    if w_paths.len() != k_classes {
        return Err(Error::GridMismatch("class count mismatch in fixed-point march".into()));
    }
    let grid = &kappa.grid;
    let dt = grid.dt();
    let n_nodes = grid.len();
    let mut g: Vec<Vec<f64>> = (0..k_classes).map(|_| vec![0.0; n_nodes]).collect();
    for k in 0..k_classes {
        g[k][0] = w_paths[k].at(0);
    }
    for i in 1..n_nodes {
        for k in 0..k_classes {
            let mut conv = 0.0;
            for (l, g_l) in g.iter().enumerate() {
                let row = kappa.blocks[k][l].row(i);
                let mut acc = 0.5 * row[0] * g_l[0];
                for j in 1..i {
                    acc += row[j] * g_l[j];
                }
                conv += acc;
            }
            let diag = if k_classes == 1 { kappa.blocks[0][0].at(i, i) } else { 0.0 };
            g[k][i] = (w_paths[k].at(i) + dt * conv) / (1.0 - 0.5 * dt * diag);
        }
    }
    g.into_iter()
        .map(|values| GridFunction::new(grid.clone(), values))
        .collect()
}

/// Residual of the sampled `G_Y` in the stochastic Volterra equation,
/// `sup_k |G_Y - int kappa G_Y - W_lambda|`.
pub fn volterra_residual(kappa: &KernelTable, sample: &LimitFluctuationSample) -> f64 {
    let grid = &kappa.grid;
    let dt = grid.dt();
    let table = kappa.scalar();
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        let row = table.row(i);
        let mut acc = 0.0;
        for (j, &w) in row.iter().enumerate() {
            acc += w * sample.g_y.at(j);
        }
        acc -= 0.5 * row[0] * sample.g_y.at(0) + 0.5 * row[i] * sample.g_y.at(i);
        let residual = sample.g_y.at(i) - dt * acc - sample.w_lambda.at(i);
        worst = worst.max(residual.abs());
    }
    worst
}
