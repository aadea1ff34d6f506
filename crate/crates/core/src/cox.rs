//! Second-order Cox approximation: the random intensity
//! `lambda_hat = lambda + sigma / sqrt(N)` and the doubly stochastic Poisson
//! network it drives, coupled against a first-order iid Poisson baseline
//! through shared candidate times and acceptance marks.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::events::EventPaths;
use crate::fluct::{sample_limit, SampleRoute};
use crate::grid::{GridFunction, TimeGrid};
use crate::limit::LimitSolution;
use crate::model::ModelSpec;
use crate::seed::{exponential, uniform01, SeedPolicy, StreamDomain};
use crate::sim::{simulate_hawkes_with_limit, SimMode};
use crate::stats::{mean_var_se, two_sample_ks};
use crate::volterra::{KernelTable, ResolventTable};

/// One Cox draw: the intensity realization, the Cox network and the coupled
/// Poisson baseline.
#[derive(Debug, Clone)]
pub struct CoxApproximation {
    pub grid: TimeGrid,
    /// `max(lambda + sigma / sqrt(N), 0)` for the stored draw.
    pub lambda_hat: GridFunction,
    /// Cox events, thinned against `lambda_hat`.
    pub events: EventPaths,
    /// Poisson baseline, thinned against `lambda` from the same candidates.
    pub baseline: EventPaths,
    pub n_units: usize,
    /// Fraction of grid nodes where the intensity draw was clipped at zero.
    pub clipped_fraction: f64,
}

/// Thin the Cox network and its baseline from one sigma draw. The draw must
/// come from streams disjoint from the thinning streams used here (the Cox
/// construction requires the intensity independent of the driving measures).
pub fn build_cox(
    limit: &LimitSolution,
    sigma_draw: &GridFunction,
    n_units: usize,
    grid: &TimeGrid,
    seed: &SeedPolicy,
    replicate: u64,
) -> Result<CoxApproximation> {
    if !limit.grid.same_as(grid) || !sigma_draw.grid().same_as(grid) {
        return Err(Error::GridMismatch("limit, sigma and grid must agree".into()));
    }
    if n_units == 0 {
        return Err(Error::InvalidParameter("need at least one unit".into()));
    }
    let sqrt_n = (n_units as f64).sqrt();
    let mut clipped = 0usize;
    let hat_values: Vec<f64> = (0..grid.len())
        .map(|k| {
            let raw = limit.lambda.at(k) + sigma_draw.at(k) / sqrt_n;
            if raw < 0.0 {
                clipped += 1;
                0.0
            } else {
                raw
            }
        })
        .collect();
    let lambda_hat = GridFunction::new(grid.clone(), hat_values)?;
    let clipped_fraction = clipped as f64 / grid.len() as f64;

    // Global dominating rate covering both intensities.
    let bar = limit.lambda.sup_norm() + sigma_draw.sup_norm() / sqrt_n;
    let mut cox_times: Vec<Vec<f64>> = vec![Vec::new(); n_units];
    let mut baseline_times: Vec<Vec<f64>> = vec![Vec::new(); n_units];
    if bar > 0.0 {
        let total_rate = n_units as f64 * bar;
        let mut rng = seed.stream(StreamDomain::CoxThinning, replicate, 0);
        let mut cursor = 0.0f64;
        loop {
            cursor += exponential(&mut rng, total_rate);
            if cursor >= grid.horizon() {
                break;
            }
            let unit = ((uniform01(&mut rng) * n_units as f64) as usize).min(n_units - 1);
            let mark = uniform01(&mut rng) * bar;
            if mark <= lambda_hat.interp(cursor) {
                cox_times[unit].push(cursor);
            }
            if mark <= limit.lambda.interp(cursor) {
                baseline_times[unit].push(cursor);
            }
        }
    }
    Ok(CoxApproximation {
        grid: grid.clone(),
        lambda_hat,
        events: EventPaths::new(grid.clone(), vec![0; n_units], cox_times)?,
        baseline: EventPaths::new(grid.clone(), vec![0; n_units], baseline_times)?,
        n_units,
        clipped_fraction,
    })
}

/// Per-time variance comparison of the Hawkes and Cox intensity ensembles,
/// plus distributional checks on per-unit counts.
#[derive(Debug, Clone)]
pub struct CoxComparisonReport {
    /// Fixed comparison times.
    pub times: Vec<f64>,
    pub var_hawkes: Vec<f64>,
    pub var_cox: Vec<f64>,
    /// `Var[lambda_hat] / Var[lambda^N]`; NaN where both vanish.
    pub ratio: Vec<f64>,
    /// Two-sample KS of per-unit total counts, Cox vs Hawkes.
    pub ks_cox_counts: (f64, f64),
    /// Same for the first-order Poisson baseline vs Hawkes.
    pub ks_poisson_counts: (f64, f64),
    pub mean_clipped_fraction: f64,
    pub replicates: usize,
}

/// Run matched Hawkes and Cox ensembles and compare their intensity spread.
#[allow(clippy::too_many_arguments)]
pub fn compare_cox_vs_hawkes(
    spec: &ModelSpec,
    limit: &LimitSolution,
    kappa: &KernelTable,
    resolvent: &ResolventTable,
    n_units: usize,
    grid: &TimeGrid,
    replicates: usize,
    seed: &SeedPolicy,
    times: &[f64],
) -> Result<CoxComparisonReport> {
    if replicates < 100 {
        return Err(Error::SampleTooSmall { need: 100, got: replicates });
    }
    let nodes: Vec<usize> = times.iter().map(|t| grid.floor_index(*t)).collect();

    let hawkes: Vec<(Vec<f64>, Vec<f64>)> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let sim = simulate_hawkes_with_limit(
                spec, n_units, grid, limit, seed, r, SimMode::Thinning,
            )?;
            let at_times: Vec<f64> = nodes.iter().map(|&k| sim.lambda_path().at(k)).collect();
            let counts: Vec<f64> = (0..n_units)
                .map(|u| sim.events.unit_times(u).len() as f64)
                .collect();
            Ok((at_times, counts))
        })
        .collect::<Result<_>>()?;

    let cox: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, f64)> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let sigma = sample_limit(
                limit, spec, kappa, resolvent, seed, r, SampleRoute::FixedPoint,
            )?
            .sigma;
            let draw = build_cox(limit, &sigma, n_units, grid, seed, r)?;
            let at_times: Vec<f64> =
                nodes.iter().map(|&k| draw.lambda_hat.at(k)).collect();
            let cox_counts: Vec<f64> = (0..n_units)
                .map(|u| draw.events.unit_times(u).len() as f64)
                .collect();
            let poisson_counts: Vec<f64> = (0..n_units)
                .map(|u| draw.baseline.unit_times(u).len() as f64)
                .collect();
            Ok((at_times, cox_counts, poisson_counts, draw.clipped_fraction))
        })
        .collect::<Result<_>>()?;

    let mut var_hawkes = Vec::with_capacity(nodes.len());
    let mut var_cox = Vec::with_capacity(nodes.len());
    let mut ratio = Vec::with_capacity(nodes.len());
    for slot in 0..nodes.len() {
        let hs: Vec<f64> = hawkes.iter().map(|(v, _)| v[slot]).collect();
        let cs: Vec<f64> = cox.iter().map(|(v, _, _, _)| v[slot]).collect();
        let (_, vh, _) = mean_var_se(&hs);
        let (_, vc, _) = mean_var_se(&cs);
        var_hawkes.push(vh);
        var_cox.push(vc);
        ratio.push(if vh > 0.0 { vc / vh } else { f64::NAN });
    }

    let hawkes_counts: Vec<f64> =
        hawkes.iter().flat_map(|(_, c)| c.iter().copied()).collect();
    let cox_counts: Vec<f64> =
        cox.iter().flat_map(|(_, c, _, _)| c.iter().copied()).collect();
    let poisson_counts: Vec<f64> =
        cox.iter().flat_map(|(_, _, c, _)| c.iter().copied()).collect();
    let mean_clipped_fraction =
        cox.iter().map(|(_, _, _, f)| f).sum::<f64>() / replicates as f64;

    Ok(CoxComparisonReport {
        times: times.to_vec(),
        var_hawkes,
        var_cox,
        ratio,
        ks_cox_counts: two_sample_ks(&cox_counts, &hawkes_counts)?,
        ks_poisson_counts: two_sample_ks(&poisson_counts, &hawkes_counts)?,
        mean_clipped_fraction,
        replicates,
    })
}
