//! The verification suite: statistical and deterministic checks that tie the
//! simulators, the limit solver, the Volterra machinery and the Cox
//! approximation together against the asymptotic theory they implement.

use std::time::Instant;

use rayon::prelude::*;

use crate::config::{ExperimentConfig, CHECK_NAMES};
use crate::cox::build_cox;
use crate::error::Result;
use crate::events::EventPaths;
use crate::fluct::{compute_fluctuations, sample_limit, sample_limit_multiclass, SampleRoute};
use crate::grid::TimeGrid;
use crate::limit::{gronwall_rate_bound, solve_limit, solve_limit_multiclass, LimitSolution};
use crate::model::{ModelSpec, MultiClassSpec};
use crate::report::{CheckKind, CheckResult, CheckStatus, TestReport};
use crate::seed::SeedPolicy;
use crate::sim::{
    simulate_hawkes_multiclass, simulate_hawkes_with_limit, SimMode, SimResult,
};
use crate::stats::{loglog_slope, mean_var_se, two_sample_ks, variance_se};
use crate::volterra::{
    build_kappa, build_kappa_multiclass, build_resolvent_ieq, build_resolvent_neumann,
    KernelTable, ResolventTable,
};

/// Replicate-index namespaces so distinct ensembles never share streams.
fn tagged(tag: u64, replicate: u64) -> u64 {
    tag * 10_000_000 + replicate
}

const TAG_DISTRIBUTION: u64 = 0;
const TAG_DECAY_BASE: u64 = 1;
const TAG_COX_BASE: u64 = 11;
const TAG_MULTICLASS: u64 = 21;

/// Everything the checks share: the model, solved limit and kernel tables.
pub struct VerifyContext {
    pub cfg: ExperimentConfig,
    pub spec: ModelSpec,
    pub grid: TimeGrid,
    pub limit: LimitSolution,
    pub kappa: KernelTable,
    pub resolvent: ResolventTable,
    pub seed: SeedPolicy,
}

impl VerifyContext {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let spec = cfg.build_model()?;
        let grid = cfg.build_grid()?;
        let limit = solve_limit(&spec, &grid);
        let kappa = build_kappa(&limit, &spec, &grid)?;
        let resolvent = build_resolvent_ieq(&kappa)?;
        Ok(Self {
            cfg: cfg.clone(),
            spec,
            grid,
            limit,
            kappa,
            resolvent,
            seed: cfg.seed_policy(),
        })
    }

    fn alpha(&self) -> f64 {
        self.cfg.tests.alpha
    }
}

/// Per-N summaries of the decay ensembles shared by the LLN, remainder,
/// compensator and second-moment checks.
pub struct DecayStats {
    pub n_units: usize,
    /// `sup_t |(1/N) sum Z_i - m|` per replicate.
    pub lln_sup: Vec<f64>,
    /// `||r^N||_T` per replicate.
    pub remainder_sup: Vec<f64>,
    /// `sup_t |X^N|^2` per replicate.
    pub x_sup_sq: Vec<f64>,
    /// `Lambda^N(T)` per replicate.
    pub compensator_end: Vec<f64>,
}

pub fn decay_ensembles(ctx: &VerifyContext) -> Result<Vec<DecayStats>> {
    let replicates = ctx.cfg.ensemble.decay_replicates;
    ctx.cfg
        .ensemble
        .n_units
        .iter()
        .enumerate()
        .map(|(slot, &n_units)| {
            let tag = TAG_DECAY_BASE + slot as u64;
            let rows: Vec<(f64, f64, f64, f64)> = (0..replicates as u64)
                .into_par_iter()
                .map(|r| {
                    let sim = simulate_hawkes_with_limit(
                        &ctx.spec,
                        n_units,
                        &ctx.grid,
                        &ctx.limit,
                        &ctx.seed,
                        tagged(tag, r),
                        SimMode::Thinning,
                    )?;
                    let paths = compute_fluctuations(&sim, &ctx.limit, &ctx.spec)?;
                    let sqrt_n = (n_units as f64).sqrt();
                    Ok((
                        paths.y.sup_norm() / sqrt_n,
                        paths.r.sup_norm(),
                        paths.x.sup_norm().powi(2),
                        sim.big_lambda_path().at(ctx.grid.n_steps()),
                    ))
                })
                .collect::<Result<_>>()?;
            Ok(DecayStats {
                n_units,
                lln_sup: rows.iter().map(|r| r.0).collect(),
                remainder_sup: rows.iter().map(|r| r.1).collect(),
                x_sup_sq: rows.iter().map(|r| r.2).collect(),
                compensator_end: rows.iter().map(|r| r.3).collect(),
            })
        })
        .collect()
}

/// Finite-N fluctuation marginals and limit draws shared by the CLT checks.
pub struct DistributionEnsemble {
    /// Comparison times `T/4, T/2, T` as grid nodes.
    pub nodes: Vec<usize>,
    /// `Y^N(t)` per comparison time, over Hawkes replicates.
    pub y_at: Vec<Vec<f64>>,
    /// `sqrt(N) (lambda^N(T) - lambda(T))` over Hawkes replicates.
    pub intensity_end: Vec<f64>,
    /// `G_Y(t)` per comparison time, over limit draws.
    pub gy_at: Vec<Vec<f64>>,
    /// `sigma(T)` over limit draws.
    pub sigma_end: Vec<f64>,
}

pub fn distribution_ensemble(ctx: &VerifyContext) -> Result<DistributionEnsemble> {
    let grid = &ctx.grid;
    let n_units = ctx.cfg.ensemble.distribution_n;
    let nodes = vec![grid.n_steps() / 4, grid.n_steps() / 2, grid.n_steps()];
    let sqrt_n = (n_units as f64).sqrt();
    let end = grid.n_steps();

    let hawkes: Vec<(Vec<f64>, f64)> = (0..ctx.cfg.ensemble.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let sim = simulate_hawkes_with_limit(
                &ctx.spec,
                n_units,
                grid,
                &ctx.limit,
                &ctx.seed,
                tagged(TAG_DISTRIBUTION, r),
                SimMode::Thinning,
            )?;
            let counts = sim.events.total_count_path(None);
            let ys: Vec<f64> = nodes
                .iter()
                .map(|&k| (counts.at(k) - n_units as f64 * ctx.limit.m.at(k)) / sqrt_n)
                .collect();
            let fluct = sqrt_n * (sim.lambda_path().at(end) - ctx.limit.lambda.at(end));
            Ok((ys, fluct))
        })
        .collect::<Result<_>>()?;

    let draws: Vec<(Vec<f64>, f64)> = (0..ctx.cfg.ensemble.limit_draws as u64)
        .into_par_iter()
        .map(|r| {
            let sample = sample_limit(
                &ctx.limit,
                &ctx.spec,
                &ctx.kappa,
                &ctx.resolvent,
                &ctx.seed,
                r,
                SampleRoute::FixedPoint,
            )?;
            let gys: Vec<f64> = nodes.iter().map(|&k| sample.g_y.at(k)).collect();
            Ok((gys, sample.sigma.at(end)))
        })
        .collect::<Result<_>>()?;

    Ok(DistributionEnsemble {
        y_at: (0..nodes.len())
            .map(|slot| hawkes.iter().map(|(ys, _)| ys[slot]).collect())
            .collect(),
        intensity_end: hawkes.iter().map(|(_, f)| *f).collect(),
        gy_at: (0..nodes.len())
            .map(|slot| draws.iter().map(|(gs, _)| gs[slot]).collect())
            .collect(),
        sigma_end: draws.iter().map(|(_, s)| *s).collect(),
        nodes,
    })
}

fn timed<F: FnOnce() -> Result<CheckResult>>(f: F) -> Result<CheckResult> {
    let start = Instant::now();
    let mut result = f()?;
    result.runtime_s = start.elapsed().as_secs_f64();
    Ok(result)
}

const DECAY_BAND: (f64, f64) = (-0.75, -0.25);

fn decay_slope_check(
    name: &'static str,
    claim: &'static str,
    stats: &[DecayStats],
    extract: impl Fn(&DecayStats) -> &Vec<f64>,
) -> CheckResult {
    let ns: Vec<f64> = stats.iter().map(|s| s.n_units as f64).collect();
    let means: Vec<f64> = stats
        .iter()
        .map(|s| {
            let (mean, _, _) = mean_var_se(extract(s));
            mean
        })
        .collect();
    if means.iter().all(|m| m.abs() < 1e-12) {
        return CheckResult {
            name,
            claim,
            kind: CheckKind::Statistical,
            statistic: 0.0,
            threshold: format!("log-log slope in [{}, {}]", DECAY_BAND.0, DECAY_BAND.1),
            status: CheckStatus::Pass,
            detail: "degenerate case: statistic is exactly zero at every N".into(),
            runtime_s: 0.0,
        };
    }
    let slope = loglog_slope(&ns, &means);
    let pass = (DECAY_BAND.0..=DECAY_BAND.1).contains(&slope);
    CheckResult {
        name,
        claim,
        kind: CheckKind::Statistical,
        statistic: slope,
        threshold: format!("log-log slope in [{}, {}]", DECAY_BAND.0, DECAY_BAND.1),
        status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: format!(
            "means by N: {}",
            ns.iter()
                .zip(&means)
                .map(|(n, m)| format!("{n}: {m:.6}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        runtime_s: 0.0,
    }
}

pub fn check_lln_decay(stats: &[DecayStats]) -> CheckResult {
    decay_slope_check(
        "lln_decay",
        "law of large numbers: the empirical mean count converges to the limit compensator at rate 1/sqrt(N)",
        stats,
        |s| &s.lln_sup,
    )
}

pub fn check_remainder_decay(stats: &[DecayStats]) -> CheckResult {
    decay_slope_check(
        "remainder_decay",
        "the Taylor remainder of the drift linearization vanishes at rate 1/sqrt(N)",
        stats,
        |s| &s.remainder_sup,
    )
}

pub fn check_compensator_bound(ctx: &VerifyContext, stats: &[DecayStats]) -> CheckResult {
    let horizon = ctx.grid.horizon();
    let bound = gronwall_rate_bound(&ctx.spec, horizon) * horizon;
    let mut worst = f64::NEG_INFINITY;
    let mut detail = Vec::new();
    for s in stats {
        let (mean, _, se) = mean_var_se(&s.compensator_end);
        let margin = if se > 0.0 { (mean - bound) / se } else { f64::NEG_INFINITY };
        worst = worst.max(margin);
        detail.push(format!("N = {}: mean = {:.4}", s.n_units, mean));
    }
    CheckResult {
        name: "compensator_bound",
        claim: "a priori bound: E[Lambda^N(T)] <= f(0) T exp(||f'|| ||h||_T T)",
        kind: CheckKind::Statistical,
        statistic: worst,
        threshold: format!("mean <= {bound:.4} + 3 SE at every N"),
        status: if worst <= 3.0 { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: detail.join("; "),
        runtime_s: 0.0,
    }
}

pub fn check_second_moment(stats: &[DecayStats]) -> CheckResult {
    // Uniform-in-N boundedness: no upward trend beyond 3 sigma between
    // consecutive network sizes.
    let mut worst = f64::NEG_INFINITY;
    let mut detail = Vec::new();
    for pair in stats.windows(2) {
        let (m0, _, se0) = mean_var_se(&pair[0].x_sup_sq);
        let (m1, _, se1) = mean_var_se(&pair[1].x_sup_sq);
        let se = (se0 * se0 + se1 * se1).sqrt();
        let trend = if se > 0.0 { (m1 - m0) / se } else { 0.0 };
        worst = worst.max(trend);
        detail.push(format!(
            "N {} -> {}: mean sup|X|^2 {:.4} -> {:.4}",
            pair[0].n_units, pair[1].n_units, m0, m1
        ));
    }
    CheckResult {
        name: "second_moment",
        claim: "second moments of the activity fluctuation are bounded uniformly in N",
        kind: CheckKind::Statistical,
        statistic: worst,
        threshold: "no upward trend beyond 3 sigma".into(),
        status: if worst <= 3.0 { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: detail.join("; "),
        runtime_s: 0.0,
    }
}

pub fn check_clt_counts(ctx: &VerifyContext, ens: &DistributionEnsemble) -> CheckResult {
    let alpha = ctx.alpha();
    let mut p_values = Vec::new();
    for slot in 0..ens.nodes.len() {
        let (_, p) = match two_sample_ks(&ens.y_at[slot], &ens.gy_at[slot]) {
            Ok(v) => v,
            Err(e) => {
                return CheckResult {
                    name: "clt_counts",
                    claim: CLT_COUNTS_CLAIM,
                    kind: CheckKind::Statistical,
                    statistic: f64::NAN,
                    threshold: String::new(),
                    status: CheckStatus::Fail,
                    detail: format!("{e}"),
                    runtime_s: 0.0,
                }
            }
        };
        p_values.push(p);
    }
    let failures = p_values.iter().filter(|p| **p < alpha).count();
    let min_p = p_values.iter().copied().fold(f64::INFINITY, f64::min);
    CheckResult {
        name: "clt_counts",
        claim: CLT_COUNTS_CLAIM,
        kind: CheckKind::Statistical,
        statistic: min_p,
        threshold: format!("KS p >= {alpha} at all but at most one of {} times", p_values.len()),
        status: if failures <= 1 { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: format!(
            "p-values at T/4, T/2, T: {}",
            p_values.iter().map(|p| format!("{p:.4}")).collect::<Vec<_>>().join(", ")
        ),
        runtime_s: 0.0,
    }
}

const CLT_COUNTS_CLAIM: &str =
    "functional CLT: the rescaled count fluctuation converges to the Gaussian Volterra process";

pub fn check_clt_intensity(ctx: &VerifyContext, ens: &DistributionEnsemble) -> CheckResult {
    let alpha = ctx.alpha();
    let (stat, p) = match two_sample_ks(&ens.intensity_end, &ens.sigma_end) {
        Ok(v) => v,
        Err(e) => {
            return CheckResult {
                name: "clt_intensity",
                claim: CLT_INTENSITY_CLAIM,
                kind: CheckKind::Statistical,
                statistic: f64::NAN,
                threshold: String::new(),
                status: CheckStatus::Fail,
                detail: format!("{e}"),
                runtime_s: 0.0,
            }
        }
    };
    CheckResult {
        name: "clt_intensity",
        claim: CLT_INTENSITY_CLAIM,
        kind: CheckKind::Statistical,
        statistic: p,
        threshold: format!("KS p >= {alpha} at t = T"),
        status: if p >= alpha { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: format!("KS statistic {stat:.4}, p = {p:.4}"),
        runtime_s: 0.0,
    }
}

const CLT_INTENSITY_CLAIM: &str =
    "intensity CLT: sqrt(N) (lambda^N - lambda) converges to sigma = f'(x) G_X";

/// Closed-form and cross-method resolvent checks. Deterministic.
pub fn check_resolvent(ctx: &VerifyContext) -> Result<CheckResult> {
    // Ramp kernel on [0, 1]: resolvent is sinh(t-s).
    let fine = TimeGrid::new(1.0, 2000)?;
    let ramp = KernelTable::from_fn(&fine, |t, s| t - s, 1.0)?;
    let ramp_neumann = build_resolvent_neumann(&ramp, 1e-9)?;
    let ramp_ieq = build_resolvent_ieq(&ramp)?;
    let mut worst: f64 = 0.0;
    for i in (0..=2000).step_by(40) {
        for j in (0..=i).step_by(40) {
            let exact = (fine.t(i) - fine.t(j)).sinh();
            worst = worst.max((ramp_neumann.scalar().at(i, j) - exact).abs());
            worst = worst.max((ramp_ieq.scalar().at(i, j) - exact).abs());
        }
    }
    // Constant kernel c: resolvent is c exp(c (t-s)).
    let c = 1.5;
    let constant = KernelTable::from_fn(&fine, |_, _| c, c)?;
    let const_neumann = build_resolvent_neumann(&constant, 1e-9)?;
    let const_ieq = build_resolvent_ieq(&constant)?;
    for i in (0..=2000).step_by(40) {
        for j in (0..=i).step_by(40) {
            let exact = c * (c * (fine.t(i) - fine.t(j))).exp();
            worst = worst.max((const_neumann.scalar().at(i, j) - exact).abs());
            worst = worst.max((const_ieq.scalar().at(i, j) - exact).abs());
        }
    }
    // Cross-method agreement on the configured model at reduced resolution.
    let coarse = TimeGrid::new(ctx.grid.horizon().min(5.0), 500)?;
    let limit = solve_limit(&ctx.spec, &coarse);
    let kappa = build_kappa(&limit, &ctx.spec, &coarse)?;
    let gap = build_resolvent_neumann(&kappa, 1e-10)?
        .max_abs_diff(&build_resolvent_ieq(&kappa)?);
    let stat = worst.max(gap);
    Ok(CheckResult {
        name: "resolvent_checks",
        claim: "resolvent kernels match closed forms and both construction methods agree",
        kind: CheckKind::Deterministic,
        statistic: stat,
        threshold: "max abs error < 1e-6".into(),
        status: if stat < 1e-6 { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: format!("closed forms {worst:.3e}; cross-method {gap:.3e}"),
        runtime_s: 0.0,
    })
}

pub fn check_cox_coupling(ctx: &VerifyContext) -> Result<CheckResult> {
    let replicates = ctx.cfg.ensemble.decay_replicates;
    let horizon = ctx.grid.horizon();
    let mut means = Vec::new();
    let mut bound_ok = true;
    let mut detail = Vec::new();
    for (slot, &n_units) in ctx.cfg.ensemble.n_units.iter().enumerate() {
        let tag = TAG_COX_BASE + slot as u64;
        let rows: Vec<(f64, f64)> = (0..replicates as u64)
            .into_par_iter()
            .map(|r| {
                let replicate = tagged(tag, r);
                let sigma = sample_limit(
                    &ctx.limit,
                    &ctx.spec,
                    &ctx.kappa,
                    &ctx.resolvent,
                    &ctx.seed,
                    replicate,
                    SampleRoute::FixedPoint,
                )?
                .sigma;
                let draw =
                    build_cox(&ctx.limit, &sigma, n_units, &ctx.grid, &ctx.seed, replicate)?;
                let mut distance = 0.0;
                for unit in 0..n_units {
                    distance += draw.events.sup_distance(unit, &draw.baseline, unit);
                }
                Ok((distance / n_units as f64, sigma.sup_norm()))
            })
            .collect::<Result<_>>()?;
        let distances: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let sups: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let (lhs, _, lhs_se) = mean_var_se(&distances);
        let (sup_mean, _, sup_se) = mean_var_se(&sups);
        let factor = horizon / (n_units as f64).sqrt();
        let rhs = factor * sup_mean;
        let slack = 4.0 * (lhs_se * lhs_se + factor * factor * sup_se * sup_se).sqrt();
        if lhs > rhs + slack {
            bound_ok = false;
        }
        detail.push(format!("N {n_units}: mean dist {lhs:.4} vs bound {rhs:.4}"));
        means.push(lhs);
    }
    let ns: Vec<f64> = ctx.cfg.ensemble.n_units.iter().map(|&n| n as f64).collect();
    let degenerate = means.iter().all(|m| m.abs() < 1e-12);
    let slope = if degenerate { -0.5 } else { loglog_slope(&ns, &means) };
    let slope_ok = (DECAY_BAND.0..=DECAY_BAND.1).contains(&slope);
    Ok(CheckResult {
        name: "cox_coupling",
        claim: "the Cox network stays within T/sqrt(N) E||sigma|| of its Poisson baseline and the gap decays at rate 1/sqrt(N)",
        kind: CheckKind::Statistical,
        statistic: slope,
        threshold: format!(
            "bound with 4 SE slack at every N; slope in [{}, {}]",
            DECAY_BAND.0, DECAY_BAND.1
        ),
        status: if bound_ok && slope_ok { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: detail.join("; "),
        runtime_s: 0.0,
    })
}

pub fn check_multiclass_reduction(ctx: &VerifyContext) -> Result<CheckResult> {
    // Bit-identity of the one-class pipeline with the scalar pipeline.
    let grid = TimeGrid::new(ctx.grid.horizon().min(5.0), (ctx.grid.n_steps() / 2).max(100))?;
    let multi = MultiClassSpec::from_scalar(&ctx.spec);
    let scalar_limit = solve_limit(&ctx.spec, &grid);
    let multi_limits = solve_limit_multiclass(&multi, &grid)?;
    let mut identical = scalar_limit.lambda.values() == multi_limits[0].lambda.values();

    let n_units = *ctx.cfg.ensemble.n_units.first().expect("validated non-empty");
    let scalar_sim = simulate_hawkes_with_limit(
        &ctx.spec,
        n_units,
        &grid,
        &scalar_limit,
        &ctx.seed,
        tagged(TAG_MULTICLASS, 0),
        SimMode::Thinning,
    )?;
    let multi_sim = simulate_hawkes_multiclass(
        &multi,
        n_units,
        &grid,
        &ctx.seed,
        tagged(TAG_MULTICLASS, 0),
        SimMode::Thinning,
    )?;
    identical &= scalar_sim.events == multi_sim.events;

    let scalar_kappa = build_kappa(&scalar_limit, &ctx.spec, &grid)?;
    let multi_kappa = build_kappa_multiclass(&multi_limits, &multi, &grid)?;
    let scalar_res = build_resolvent_ieq(&scalar_kappa)?;
    let multi_res = build_resolvent_ieq(&multi_kappa)?;
    let scalar_draw = sample_limit(
        &scalar_limit,
        &ctx.spec,
        &scalar_kappa,
        &scalar_res,
        &ctx.seed,
        tagged(TAG_MULTICLASS, 1),
        SampleRoute::FixedPoint,
    )?;
    let multi_draw = sample_limit_multiclass(
        &multi_limits,
        &multi,
        &multi_kappa,
        &multi_res,
        &ctx.seed,
        tagged(TAG_MULTICLASS, 1),
        SampleRoute::FixedPoint,
    )?;
    identical &= scalar_draw.g_y.values() == multi_draw[0].g_y.values();
    identical &= scalar_draw.sigma.values() == multi_draw[0].sigma.values();

    // Independence of decoupled classes: spike-count cross-correlation over
    // replicates within 3 sigma of zero.
    let independence = zero_cross_independence(ctx, &grid)?;
    let (correlation, limit_3sigma) = independence;

    let pass = identical && correlation.abs() <= limit_3sigma;
    Ok(CheckResult {
        name: "multiclass_reduction",
        claim: "one-class systems reduce bit-identically to the scalar pipeline; zero cross-kernels decouple the classes",
        kind: CheckKind::Statistical,
        statistic: correlation,
        threshold: format!("bit-identity and |corr| <= {limit_3sigma:.4}"),
        status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: format!(
            "K=1 reduction identical: {identical}; cross-class count correlation {correlation:.4}"
        ),
        runtime_s: 0.0,
    })
}

/// Spike-count correlation between two classes with zero cross kernels.
fn zero_cross_independence(ctx: &VerifyContext, grid: &TimeGrid) -> Result<(f64, f64)> {
    use crate::model::KernelSpec;
    let spec = MultiClassSpec::new(
        "zero-cross",
        vec![ctx.spec.rate.clone(), ctx.spec.rate.clone()],
        vec![
            vec![ctx.spec.kernel.clone(), KernelSpec::zero()],
            vec![KernelSpec::zero(), ctx.spec.kernel.clone()],
        ],
        vec![0.5, 0.5],
    )?;
    let replicates = 2000usize;
    let counts: Vec<(f64, f64)> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let sim = simulate_hawkes_multiclass(
                &spec,
                40,
                grid,
                &ctx.seed,
                tagged(TAG_MULTICLASS, 100 + r),
                SimMode::Thinning,
            )?;
            let end = grid.n_steps();
            Ok((
                sim.events.total_count_path(Some(0)).at(end),
                sim.events.total_count_path(Some(1)).at(end),
            ))
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = counts.iter().map(|c| c.0).collect();
    let ys: Vec<f64> = counts.iter().map(|c| c.1).collect();
    let correlation = crate::stats::correlation(&xs, &ys);
    Ok((correlation, 3.0 / (replicates as f64).sqrt()))
}

fn run_enabled_checks(ctx: &VerifyContext) -> Result<Vec<CheckResult>> {
    let enabled = |name: &str| ctx.cfg.check_enabled(name);
    let mut results: Vec<CheckResult> = Vec::new();

    let needs_decay = ["lln_decay", "remainder_decay", "compensator_bound", "second_moment"]
        .iter()
        .any(|n| enabled(n));
    let decay = if needs_decay { Some(decay_ensembles(ctx)?) } else { None };

    let needs_distribution = enabled("clt_counts") || enabled("clt_intensity");
    let distribution = if needs_distribution { Some(distribution_ensemble(ctx)?) } else { None };

    for name in CHECK_NAMES {
        let result = match name {
            "resolvent_checks" => {
                if enabled(name) {
                    timed(|| check_resolvent(ctx))?
                } else {
                    CheckResult::skipped(
                        "resolvent_checks",
                        "resolvent kernels match closed forms and both construction methods agree",
                        CheckKind::Deterministic,
                    )
                }
            }
            "lln_decay" => {
                if let Some(decay) = decay.as_ref().filter(|_| enabled(name)) {
                    timed(|| Ok(check_lln_decay(decay)))?
                } else {
                    CheckResult::skipped(
                        "lln_decay",
                        "law of large numbers: the empirical mean count converges to the limit compensator at rate 1/sqrt(N)",
                        CheckKind::Statistical,
                    )
                }
            }
            "clt_counts" => {
                if let Some(ens) = distribution.as_ref().filter(|_| enabled(name)) {
                    timed(|| Ok(check_clt_counts(ctx, ens)))?
                } else {
                    CheckResult::skipped("clt_counts", CLT_COUNTS_CLAIM, CheckKind::Statistical)
                }
            }
            "clt_intensity" => {
                if let Some(ens) = distribution.as_ref().filter(|_| enabled(name)) {
                    timed(|| Ok(check_clt_intensity(ctx, ens)))?
                } else {
                    CheckResult::skipped(
                        "clt_intensity",
                        CLT_INTENSITY_CLAIM,
                        CheckKind::Statistical,
                    )
                }
            }
            "remainder_decay" => {
                if let Some(decay) = decay.as_ref().filter(|_| enabled(name)) {
                    timed(|| Ok(check_remainder_decay(decay)))?
                } else {
                    CheckResult::skipped(
                        "remainder_decay",
                        "the Taylor remainder of the drift linearization vanishes at rate 1/sqrt(N)",
                        CheckKind::Statistical,
                    )
                }
            }
            "compensator_bound" => {
                if let Some(decay) = decay.as_ref().filter(|_| enabled(name)) {
                    timed(|| Ok(check_compensator_bound(ctx, decay)))?
                } else {
                    CheckResult::skipped(
                        "compensator_bound",
                        "a priori bound: E[Lambda^N(T)] <= f(0) T exp(||f'|| ||h||_T T)",
                        CheckKind::Statistical,
                    )
                }
            }
            "second_moment" => {
                if let Some(decay) = decay.as_ref().filter(|_| enabled(name)) {
                    timed(|| Ok(check_second_moment(decay)))?
                } else {
                    CheckResult::skipped(
                        "second_moment",
                        "second moments of the activity fluctuation are bounded uniformly in N",
                        CheckKind::Statistical,
                    )
                }
            }
            "cox_coupling" => {
                if enabled(name) {
                    timed(|| check_cox_coupling(ctx))?
                } else {
                    CheckResult::skipped(
                        "cox_coupling",
                        "the Cox network stays within T/sqrt(N) E||sigma|| of its Poisson baseline and the gap decays at rate 1/sqrt(N)",
                        CheckKind::Statistical,
                    )
                }
            }
            "multiclass_reduction" => {
                if enabled(name) {
                    timed(|| check_multiclass_reduction(ctx))?
                } else {
                    CheckResult::skipped(
                        "multiclass_reduction",
                        "one-class systems reduce bit-identically to the scalar pipeline; zero cross-kernels decouple the classes",
                        CheckKind::Statistical,
                    )
                }
            }
            other => unreachable!("unknown check {other}"),
        };
        results.push(result);
    }
    Ok(results)
}

/// Run every enabled check; on more than one statistical failure re-run the
/// statistical checks once with a derived fresh seed (legitimate 1%-tail
/// events should not fail the suite).
pub fn run_verification_suite(cfg: &ExperimentConfig) -> Result<TestReport> {
    let ctx = VerifyContext::new(cfg)?;
    let mut checks = run_enabled_checks(&ctx)?;
    let mut rerun_performed = false;

    let failures = checks
        .iter()
        .filter(|c| c.kind == CheckKind::Statistical && c.status == CheckStatus::Fail)
        .count();
    if failures > 1 {
        rerun_performed = true;
        let fresh = VerifyContext { seed: ctx.seed.derived(1), ..ctx };
        let retried = run_enabled_checks(&fresh)?;
        for (old, new) in checks.iter_mut().zip(retried) {
            if old.kind == CheckKind::Statistical {
                *old = new;
            }
        }
    }

    Ok(TestReport {
        checks,
        master_seed: cfg.ensemble.master_seed,
        alpha: cfg.tests.alpha,
        rerun_performed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::CheckStatus;

    /// Reduced constant-rate configuration: exact theory, fast ensembles.
    fn constant_rate_config() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
            [model]
            family = "constant_rate"
            params = [1.0]

            [grid]
            horizon = 5.0
            n_steps = 250

            [ensemble]
            n_units = [25, 50, 100]
            distribution_n = 100
            replicates = 200
            decay_replicates = 60
            limit_draws = 400
            master_seed = 2024
            "#,
        )
        .unwrap()
    }

    #[test]
    fn constant_rate_suite_passes() {
        let cfg = constant_rate_config();
        let report = run_verification_suite(&cfg).unwrap();
        assert!(report.passed(), "suite failed:\n{:?}", report.checks);
        for check in &report.checks {
            assert_ne!(check.status, CheckStatus::Skip, "{} skipped", check.name);
        }
    }

    #[test]
    fn empty_tests_section_skips_everything() {
        let mut cfg = constant_rate_config();
        cfg.tests.enabled.clear();
        let report = run_verification_suite(&cfg).unwrap();
        assert_eq!(report.checks.len(), CHECK_NAMES.len());
        for check in &report.checks {
            assert_eq!(check.status, CheckStatus::Skip);
        }
        assert!(report.passed());
    }

    #[test]
    fn subset_of_checks_runs_exactly_once() {
        let mut cfg = constant_rate_config();
        cfg.tests.enabled = vec!["lln_decay".into(), "compensator_bound".into()];
        let report = run_verification_suite(&cfg).unwrap();
        let ran: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| c.status != CheckStatus::Skip)
            .map(|c| c.name)
            .collect();
        assert_eq!(ran, vec!["lln_decay", "compensator_bound"]);
        // Every configured check appears exactly once in the report.
        let mut names: Vec<&str> = report.checks.iter().map(|c| c.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), CHECK_NAMES.len());
    }
}
