//! Network simulators: exact window-wise thinning and an Euler scheme, both
//! for the scalar and the multi-class interacting system.
//!
//! Thinning draws superposed candidates at a per-window dominating rate that
//! is certified from the Lipschitz structure of the pooled activity
//! `u(t) = (1/N) sum int h(t-s) dZ`: within a window segment holding at most
//! `JUMP_BUDGET` new events, `f(u)` cannot exceed the advertised bound.
//! Accepting the budget-th event restarts the segment at the current time
//! with refreshed bounds. Candidates are assigned to units uniformly, which
//! realizes the same law as per-unit driving measures while touching each
//! window only O(events) times.
//!
//! The dominating rate also majorizes the piecewise-linear limit intensity,
//! so an iid Poisson baseline coupled through the same candidate times and
//! acceptance marks can be extracted from the identical streams.

use crate::error::{Error, Result};
use crate::events::EventPaths;
use crate::grid::{GridFunction, TimeGrid};
use crate::limit::{solve_limit_multiclass, LimitSolution};
use crate::model::{KernelKind, ModelSpec, MultiClassSpec};
use crate::seed::{exponential, uniform01, SeedPolicy, StreamDomain};

/// Accepted events per window segment before the dominating rate is refreshed.
const JUMP_BUDGET: usize = 16;
/// Safety caps; exceeding them reports a dominating-rate overflow.
const MAX_EVENTS: usize = 5_000_000;
const MAX_CANDIDATES: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Thinning,
    Euler,
}

/// One simulated network path with its intensity and compensator on the grid.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub events: EventPaths,
    /// `lambda^N(t_k)` per class, re-derivable from events alone.
    pub lambda_paths: Vec<GridFunction>,
    /// Running trapezoid of `lambda_paths` (the compensator on the grid).
    pub big_lambda_paths: Vec<GridFunction>,
    pub class_sizes: Vec<usize>,
    pub mode: SimMode,
    pub master_seed: u64,
    pub replicate: u64,
    /// Euler only: fraction of unit-windows whose Poisson draw was truncated at 1.
    pub truncation_rate: f64,
    pub warnings: Vec<String>,
}

impl SimResult {
    /// Scalar accessors for one-class systems.
    pub fn lambda_path(&self) -> &GridFunction {
        &self.lambda_paths[0]
    }

    pub fn big_lambda_path(&self) -> &GridFunction {
        &self.big_lambda_paths[0]
    }

    pub fn n_units(&self) -> usize {
        self.events.unit_count()
    }
}

/// Exact or Euler simulation of the scalar interacting network.
pub fn simulate_hawkes(
    spec: &ModelSpec,
    n_units: usize,
    grid: &TimeGrid,
    seed: &SeedPolicy,
    replicate: u64,
    mode: SimMode,
) -> Result<SimResult> {
    let multi = MultiClassSpec::from_scalar(spec);
    let limits = solve_limit_multiclass(&multi, grid)?;
    simulate_multiclass_engine(&multi, &[n_units], grid, &limits, seed, replicate, mode, false)
        .map(|(sim, _)| sim)
}

/// Same as [`simulate_hawkes`] but reusing an already-solved limit (the
/// thinning bound majorizes the limit intensity so coupled baselines can
/// share streams; `limit` must be the solution for `(spec, grid)`).
pub fn simulate_hawkes_with_limit(
    spec: &ModelSpec,
    n_units: usize,
    grid: &TimeGrid,
    limit: &LimitSolution,
    seed: &SeedPolicy,
    replicate: u64,
    mode: SimMode,
) -> Result<SimResult> {
    let multi = MultiClassSpec::from_scalar(spec);
    simulate_multiclass_engine(
        &multi,
        &[n_units],
        grid,
        std::slice::from_ref(limit),
        seed,
        replicate,
        mode,
        false,
    )
    .map(|(sim, _)| sim)
}

/// Hawkes path plus the coupled iid Poisson baseline built from the same
/// candidate times and acceptance marks.
pub fn simulate_hawkes_coupled(
    spec: &ModelSpec,
    n_units: usize,
    grid: &TimeGrid,
    limit: &LimitSolution,
    seed: &SeedPolicy,
    replicate: u64,
) -> Result<(SimResult, EventPaths)> {
    let multi = MultiClassSpec::from_scalar(spec);
    let (sim, baseline) = simulate_multiclass_engine(
        &multi,
        &[n_units],
        grid,
        std::slice::from_ref(limit),
        seed,
        replicate,
        SimMode::Thinning,
        true,
    )?;
    Ok((sim, baseline.expect("baseline requested")))
}

/// The coupled iid Poisson family `Z bar` alone; a Hawkes run with the same
/// seed and replicate yields the path it is coupled to.
pub fn simulate_coupled_poisson(
    spec: &ModelSpec,
    n_units: usize,
    grid: &TimeGrid,
    limit: &LimitSolution,
    seed: &SeedPolicy,
    replicate: u64,
) -> Result<EventPaths> {
    simulate_hawkes_coupled(spec, n_units, grid, limit, seed, replicate)
        .map(|(_, baseline)| baseline)
}

/// Multi-class simulation; `K = 1` reduces bit-identically to the scalar
/// entry points (they are wrappers around this engine).
pub fn simulate_hawkes_multiclass(
    spec: &MultiClassSpec,
    n_total: usize,
    grid: &TimeGrid,
    seed: &SeedPolicy,
    replicate: u64,
    mode: SimMode,
) -> Result<SimResult> {
    let sizes = spec.sizes(n_total)?;
    let limits = solve_limit_multiclass(spec, grid)?;
    simulate_multiclass_engine(spec, &sizes, grid, &limits, seed, replicate, mode, false)
        .map(|(sim, _)| sim)
}

/// Recompute `lambda^N` on the grid directly from the event lists (the
/// defining formula, summed in time order). Used to validate stored paths.
pub fn recompute_lambda_paths(
    spec: &MultiClassSpec,
    class_sizes: &[usize],
    events: &EventPaths,
) -> Vec<GridFunction> {
    let grid = events.grid();
    let k_classes = spec.class_count();
    let mut class_times: Vec<Vec<f64>> = vec![Vec::new(); k_classes];
    for unit in 0..events.unit_count() {
        let class = events.class_of(unit);
        class_times[class].extend_from_slice(events.unit_times(unit));
    }
    for times in class_times.iter_mut() {
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    (0..k_classes)
        .map(|k| {
            let values: Vec<f64> = (0..grid.len())
                .map(|node| {
                    let t = grid.t(node);
                    let mut activity = 0.0;
                    for (l, times) in class_times.iter().enumerate() {
                        let kernel = &spec.kernels[k][l];
                        let mut sum = 0.0;
                        for &tau in times.iter() {
                            if tau < t {
                                sum += kernel.h(t - tau);
                            }
                        }
                        activity += sum / class_sizes[l] as f64;
                    }
                    spec.rates[k].f(activity)
                })
                .collect();
            GridFunction::new(grid.clone(), values).expect("sized by construction")
        })
        .collect()
}

/// Exact network activity state: Erlang kernels evolve through a two-variable
/// linear recursion per class pair, anything else falls back to summing the
/// pooled event history.
struct NetworkState<'a> {
    spec: &'a MultiClassSpec,
    class_sizes: &'a [usize],
    time: f64,
    pair_states: Vec<Vec<PairState>>,
    class_times: Vec<Vec<f64>>,
}

enum PairState {
    Erlang { beta: f64, s1: f64, s2: f64 },
    Generic,
}

impl<'a> NetworkState<'a> {
    fn new(spec: &'a MultiClassSpec, class_sizes: &'a [usize]) -> Self {
        let k_classes = spec.class_count();
        let pair_states = (0..k_classes)
            .map(|k| {
                (0..k_classes)
                    .map(|l| match spec.kernels[k][l].kind {
                        KernelKind::Erlang { beta } => PairState::Erlang { beta, s1: 0.0, s2: 0.0 },
                        _ => PairState::Generic,
                    })
                    .collect()
            })
            .collect();
        Self { spec, class_sizes, time: 0.0, pair_states, class_times: vec![Vec::new(); k_classes] }
    }

    fn advance_to(&mut self, t: f64) {
        let delta = t - self.time;
        if delta == 0.0 {
            return;
        }
        debug_assert!(delta > 0.0);
        for row in self.pair_states.iter_mut() {
            for pair in row.iter_mut() {
                if let PairState::Erlang { beta, s1, s2 } = pair {
                    let decay = (-*beta * delta).exp();
                    *s1 = decay * (*s1 + delta * *s2);
                    *s2 = decay * *s2;
                }
            }
        }
        self.time = t;
    }

    /// Register an event of `class` at the current state time.
    fn add_event(&mut self, class: usize, t: f64) {
        debug_assert_eq!(self.time, t);
        for row in self.pair_states.iter_mut() {
            if let PairState::Erlang { s2, .. } = &mut row[class] {
                *s2 += 1.0;
            }
        }
        self.class_times[class].push(t);
    }

    /// `u_k(time) = sum_l (1/N_l) sum_tau h_{k,l}(time - tau)`.
    fn activity(&self, k: usize) -> f64 {
        let mut total = 0.0;
        for (l, pair) in self.pair_states[k].iter().enumerate() {
            let weight = 1.0 / self.class_sizes[l] as f64;
            total += match pair {
                PairState::Erlang { beta, s1, .. } => beta * beta * s1 * weight,
                PairState::Generic => {
                    let kernel = &self.spec.kernels[k][l];
                    let mut sum = 0.0;
                    for &tau in self.class_times[l].iter() {
                        if tau < self.time {
                            sum += kernel.h(self.time - tau);
                        }
                    }
                    sum * weight
                }
            };
        }
        total
    }

    fn events_in_class(&self, l: usize) -> usize {
        self.class_times[l].len()
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate_multiclass_engine(
    spec: &MultiClassSpec,
    class_sizes: &[usize],
    grid: &TimeGrid,
    limits: &[LimitSolution],
    seed: &SeedPolicy,
    replicate: u64,
    mode: SimMode,
    with_baseline: bool,
) -> Result<(SimResult, Option<EventPaths>)> {
    let k_classes = spec.class_count();
    if limits.len() != k_classes {
        return Err(Error::GridMismatch(format!(
            "{} limit solutions for {} classes",
            limits.len(),
            k_classes
        )));
    }
    for limit in limits {
        if !limit.grid.same_as(grid) {
            return Err(Error::GridMismatch("limit solved on a different grid".into()));
        }
    }
    if class_sizes.len() != k_classes || class_sizes.iter().any(|&n| n == 0) {
        return Err(Error::InvalidParameter("every class needs at least one unit".into()));
    }
    if with_baseline && mode != SimMode::Thinning {
        return Err(Error::InvalidParameter("coupled baselines require thinning mode".into()));
    }

    match mode {
        SimMode::Thinning => {
            thinning_engine(spec, class_sizes, grid, limits, seed, replicate, with_baseline)
        }
        SimMode::Euler => euler_engine(spec, class_sizes, grid, limits, seed, replicate)
            .map(|sim| (sim, None)),
    }
}

struct ClassNorms {
    h_sup: Vec<Vec<f64>>,
    h_prime_sup: Vec<Vec<f64>>,
}

fn class_norms(spec: &MultiClassSpec, horizon: f64) -> ClassNorms {
    let k = spec.class_count();
    let h_sup = (0..k)
        .map(|ki| (0..k).map(|li| spec.kernels[ki][li].h_sup(horizon)).collect())
        .collect();
    let h_prime_sup = (0..k)
        .map(|ki| (0..k).map(|li| spec.kernels[ki][li].h_prime_sup(horizon)).collect())
        .collect();
    ClassNorms { h_sup, h_prime_sup }
}

fn thinning_engine(
    spec: &MultiClassSpec,
    class_sizes: &[usize],
    grid: &TimeGrid,
    limits: &[LimitSolution],
    seed: &SeedPolicy,
    replicate: u64,
    with_baseline: bool,
) -> Result<(SimResult, Option<EventPaths>)> {
    let k_classes = spec.class_count();
    let n_total: usize = class_sizes.iter().sum();
    let horizon = grid.horizon();
    let norms = class_norms(spec, horizon);
    let unit_offset: Vec<usize> = class_sizes
        .iter()
        .scan(0usize, |acc, &n| {
            let start = *acc;
            *acc += n;
            Some(start)
        })
        .collect();

    let mut rng = seed.stream(StreamDomain::Hawkes, replicate, 0);
    let mut state = NetworkState::new(spec, class_sizes);
    let mut unit_times: Vec<Vec<f64>> = vec![Vec::new(); n_total];
    let mut baseline_times: Vec<Vec<f64>> = vec![Vec::new(); n_total];
    let mut lambda_values: Vec<Vec<f64>> = (0..k_classes)
        .map(|k| {
            let mut v = vec![0.0; grid.len()];
            v[0] = spec.rates[k].f(0.0);
            v
        })
        .collect();
    let mut candidates_seen = 0usize;
    let mut events_seen = 0usize;

    let mut bars = vec![0.0f64; k_classes];
    let mut cumulative = vec![0.0f64; k_classes];

    for window in 0..grid.n_steps() {
        let window_end = grid.t(window + 1);
        let mut seg_start = grid.t(window);
        'segment: loop {
            state.advance_to(seg_start);
            // Certified per-class dominating rate on [seg_start, window_end):
            // current rate plus the Lipschitz drift of old events plus the
            // worst-case kick of at most JUMP_BUDGET new events.
            let span = window_end - seg_start;
            let mut total_rate = 0.0f64;
            for k in 0..k_classes {
                let lambda_now = spec.rates[k].f(state.activity(k));
                let mut drift = 0.0f64;
                let mut kick: f64 = 0.0;
                for l in 0..k_classes {
                    let n_l = class_sizes[l] as f64;
                    drift += state.events_in_class(l) as f64 / n_l
                        * norms.h_prime_sup[k][l]
                        * span;
                    kick = kick.max(norms.h_sup[k][l] / n_l);
                }
                let certified =
                    lambda_now + spec.rates[k].sup_f_prime * (drift + JUMP_BUDGET as f64 * kick);
                // Window sup of the piecewise-linear limit intensity, so the
                // same candidates can thin the coupled Poisson baseline.
                let limit_sup =
                    limits[k].lambda.at(window).max(limits[k].lambda.at(window + 1));
                bars[k] = certified.max(limit_sup);
                total_rate += class_sizes[k] as f64 * bars[k];
                cumulative[k] = total_rate;
            }
            if total_rate <= 0.0 {
                break 'segment;
            }

            let mut budget_used = 0usize;
            let mut cursor = seg_start;
            loop {
                cursor += exponential(&mut rng, total_rate);
                candidates_seen += 1;
                if candidates_seen > MAX_CANDIDATES {
                    return Err(Error::DominatingRate(format!(
                        "candidate cap exceeded at t = {cursor:.6} (rate {total_rate:.3e})"
                    )));
                }
                if cursor >= window_end {
                    break 'segment;
                }
                let class = if k_classes == 1 {
                    0
                } else {
                    let pick = uniform01(&mut rng) * total_rate;
                    cumulative.partition_point(|&edge| edge <= pick).min(k_classes - 1)
                };
                let unit_local =
                    ((uniform01(&mut rng) * class_sizes[class] as f64) as usize)
                        .min(class_sizes[class] - 1);
                let unit = unit_offset[class] + unit_local;
                let mark = uniform01(&mut rng) * bars[class];

                state.advance_to(cursor);
                let lambda_hawkes = spec.rates[class].f(state.activity(class));
                if lambda_hawkes > bars[class] * (1.0 + 1e-6) + 1e-12 {
                    return Err(Error::DominatingRate(format!(
                        "bound {:.6e} undercut by intensity {:.6e} at t = {cursor:.6}",
                        bars[class], lambda_hawkes
                    )));
                }

                if with_baseline {
                    let lambda_limit = limits[class].lambda.interp(cursor);
                    if mark <= lambda_limit {
                        baseline_times[unit].push(cursor);
                    }
                }
                if mark <= lambda_hawkes {
                    unit_times[unit].push(cursor);
                    state.add_event(class, cursor);
                    events_seen += 1;
                    if events_seen > MAX_EVENTS {
                        return Err(Error::DominatingRate(format!(
                            "event cap exceeded at t = {cursor:.6}"
                        )));
                    }
                    budget_used += 1;
                    if budget_used == JUMP_BUDGET {
                        seg_start = cursor;
                        continue 'segment;
                    }
                }
            }
        }
        state.advance_to(window_end);
        for (k, values) in lambda_values.iter_mut().enumerate() {
            values[window + 1] = spec.rates[k].f(state.activity(k));
        }
    }

    let classes: Vec<usize> = class_sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| std::iter::repeat(k).take(n))
        .collect();
    let events = EventPaths::new(grid.clone(), classes.clone(), unit_times)?;
    let baseline = if with_baseline {
        Some(EventPaths::new(grid.clone(), classes, baseline_times)?)
    } else {
        None
    };
    let lambda_paths: Vec<GridFunction> = lambda_values
        .into_iter()
        .map(|v| GridFunction::new(grid.clone(), v).expect("sized by construction"))
        .collect();
    let big_lambda_paths = lambda_paths.iter().map(GridFunction::cumulative_trapezoid).collect();
    Ok((
        SimResult {
            events,
            lambda_paths,
            big_lambda_paths,
            class_sizes: class_sizes.to_vec(),
            mode: SimMode::Thinning,
            master_seed: seed.master_seed(),
            replicate,
            truncation_rate: 0.0,
            warnings: Vec::new(),
        },
        baseline,
    ))
}

fn euler_engine(
    spec: &MultiClassSpec,
    class_sizes: &[usize],
    grid: &TimeGrid,
    _limits: &[LimitSolution],
    seed: &SeedPolicy,
    replicate: u64,
) -> Result<SimResult> {
    let k_classes = spec.class_count();
    let n_total: usize = class_sizes.iter().sum();
    let dt = grid.dt();
    let unit_offset: Vec<usize> = class_sizes
        .iter()
        .scan(0usize, |acc, &n| {
            let start = *acc;
            *acc += n;
            Some(start)
        })
        .collect();

    let mut rng = seed.stream(StreamDomain::Euler, replicate, 0);
    let mut state = NetworkState::new(spec, class_sizes);
    let mut unit_times: Vec<Vec<f64>> = vec![Vec::new(); n_total];
    let mut lambda_values: Vec<Vec<f64>> = (0..k_classes)
        .map(|k| {
            let mut v = vec![0.0; grid.len()];
            v[0] = spec.rates[k].f(0.0);
            v
        })
        .collect();
    let mut seen_times: std::collections::HashSet<u64> = std::collections::HashSet::new();
    let mut draws = 0usize;
    let mut truncations = 0usize;

    for window in 0..grid.n_steps() {
        let t_window = grid.t(window);
        state.advance_to(t_window);
        // One jump decision per unit per window against lambda(t_k) dt,
        // Poisson-count inversion truncated at one event.
        let mut window_events: Vec<(usize, usize, f64)> = Vec::new();
        for class in 0..k_classes {
            let mean = spec.rates[class].f(state.activity(class)) * dt;
            let p_zero = (-mean).exp();
            let p_zero_or_one = (1.0 + mean) * p_zero;
            for unit_local in 0..class_sizes[class] {
                draws += 1;
                let u = uniform01(&mut rng);
                if u < p_zero {
                    continue;
                }
                if u >= p_zero_or_one {
                    truncations += 1;
                }
                // Uniform placement in the open window; resample collisions
                // so jump times stay globally distinct at 64-bit resolution.
                let time = loop {
                    let v = crate::seed::uniform_open01(&mut rng);
                    let candidate = t_window + v * dt;
                    if seen_times.insert(candidate.to_bits()) {
                        break candidate;
                    }
                };
                window_events.push((class, unit_offset[class] + unit_local, time));
            }
        }
        window_events.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap());
        for (class, unit, time) in window_events {
            state.advance_to(time);
            state.add_event(class, time);
            unit_times[unit].push(time);
        }
        let window_end = grid.t(window + 1);
        state.advance_to(window_end);
        for (k, values) in lambda_values.iter_mut().enumerate() {
            values[window + 1] = spec.rates[k].f(state.activity(k));
        }
    }

    let truncation_rate = truncations as f64 / draws.max(1) as f64;
    if truncation_rate > 0.01 {
        return Err(Error::EulerTooCoarse { rate: truncation_rate * 100.0 });
    }
    let mut warnings = Vec::new();
    if truncation_rate > 0.001 {
        warnings.push(format!(
            "euler truncation rate {:.4}% exceeds 0.1%; consider a finer grid",
            truncation_rate * 100.0
        ));
    }

    let classes: Vec<usize> = class_sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| std::iter::repeat(k).take(n))
        .collect();
    let events = EventPaths::new(grid.clone(), classes, unit_times)?;
    let lambda_paths: Vec<GridFunction> = lambda_values
        .into_iter()
        .map(|v| GridFunction::new(grid.clone(), v).expect("sized by construction"))
        .collect();
    let big_lambda_paths = lambda_paths.iter().map(GridFunction::cumulative_trapezoid).collect();
    Ok(SimResult {
        events,
        lambda_paths,
        big_lambda_paths,
        class_sizes: class_sizes.to_vec(),
        mode: SimMode::Euler,
        master_seed: seed.master_seed(),
        replicate,
        truncation_rate,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit::solve_limit;
    use crate::model::{builtin_model, BuiltinModel, KernelSpec};

    fn policy() -> SeedPolicy {
        SeedPolicy::new(20_240_506)
    }

    fn sigmoid(gamma: f64, beta: f64) -> ModelSpec {
        builtin_model(BuiltinModel::SigmoidErlang, &[gamma, beta]).unwrap()
    }

    #[test]
    fn constant_rate_single_unit_is_poisson() {
        // f == 1, N = 1, T = 10: total count is Poisson(10). Moment check over
        // 5000 replicates: mean within 10 +- 3 sqrt(10/5000).
        let spec = builtin_model(BuiltinModel::ConstantRate, &[1.0]).unwrap();
        let grid = TimeGrid::new(10.0, 200).unwrap();
        let seed = policy();
        let limit = solve_limit(&spec, &grid);
        let replicates = 5000;
        let mut total = 0usize;
        for r in 0..replicates {
            let sim = simulate_hawkes_with_limit(
                &spec, 1, &grid, &limit, &seed, r, SimMode::Thinning,
            )
            .unwrap();
            total += sim.events.total_events();
        }
        let mean = total as f64 / replicates as f64;
        let band = 3.0 * (10.0f64 / replicates as f64).sqrt();
        assert!((mean - 10.0).abs() < band, "mean {mean} outside 10 +- {band}");
    }

    #[test]
    fn lambda_path_rederives_from_events() {
        // Stored intensity path must match the defining formula applied to
        // the recorded events, for both modes and both kernel paths.
        let grid = TimeGrid::new(5.0, 500).unwrap();
        let seed = policy();
        for mode in [SimMode::Thinning, SimMode::Euler] {
            let spec = sigmoid(2.0, 2.0);
            let sim = simulate_hawkes(&spec, 40, &grid, &seed, 3, mode).unwrap();
            let multi = MultiClassSpec::from_scalar(&spec);
            let recomputed = recompute_lambda_paths(&multi, &sim.class_sizes, &sim.events);
            let mut worst = 0.0f64;
            for k in 0..=500 {
                worst = worst.max((recomputed[0].at(k) - sim.lambda_path().at(k)).abs());
            }
            assert!(worst < 1e-12, "{mode:?}: recomputation gap {worst:e}");
        }
    }

    #[test]
    fn events_are_valid_and_compensator_monotone() {
        let spec = sigmoid(2.0, 2.0);
        let grid = TimeGrid::new(10.0, 1000).unwrap();
        let sim = simulate_hawkes(&spec, 50, &grid, &policy(), 0, SimMode::Thinning).unwrap();
        sim.events.validate().unwrap();
        let big = sim.big_lambda_path();
        for k in 1..=1000 {
            assert!(big.at(k) >= big.at(k - 1));
        }
        assert!(sim.events.total_events() > 0);
    }

    #[test]
    fn compensator_respects_gronwall_bound() {
        // Monte Carlo mean of Lambda^N(T) <= f(0) T exp(||f'|| ||h||_T T) + 3 SE.
        let spec = sigmoid(2.0, 2.0);
        let grid = TimeGrid::new(5.0, 500).unwrap();
        let limit = solve_limit(&spec, &grid);
        let seed = policy();
        let replicates = 200;
        let samples: Vec<f64> = (0..replicates)
            .map(|r| {
                simulate_hawkes_with_limit(&spec, 30, &grid, &limit, &seed, r, SimMode::Thinning)
                    .unwrap()
                    .big_lambda_path()
                    .at(500)
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / replicates as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
            / (replicates - 1) as f64;
        let se = (var / replicates as f64).sqrt();
        let bound = crate::limit::gronwall_rate_bound(&spec, 5.0) * 5.0;
        assert!(mean <= bound + 3.0 * se, "mean {mean} vs bound {bound}");
    }

    #[test]
    fn martingale_mean_is_centered() {
        // (1/sqrt N) sum_i (Z_i(T) - Lambda(T)) should average to ~0.
        let spec = sigmoid(2.0, 2.0);
        let grid = TimeGrid::new(5.0, 500).unwrap();
        let limit = solve_limit(&spec, &grid);
        let seed = policy();
        let n_units = 50;
        let replicates = 300;
        let samples: Vec<f64> = (0..replicates)
            .map(|r| {
                let sim = simulate_hawkes_with_limit(
                    &spec, n_units, &grid, &limit, &seed, r, SimMode::Thinning,
                )
                .unwrap();
                let z_total = sim.events.total_events() as f64;
                let compensator = sim.big_lambda_path().at(500);
                (z_total - n_units as f64 * compensator) / (n_units as f64).sqrt()
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / replicates as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
            / (replicates - 1) as f64;
        let se = (var / replicates as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se, "martingale mean {mean} vs 3 SE {}", 3.0 * se);
    }

    #[test]
    fn sigmoid_intensity_settles_near_fixed_point() {
        // Time-average of lambda^N over [15, 20] within a Monte Carlo band of
        // the limit value near the stable fixed point 1/2.
        let spec = sigmoid(2.0, 2.0);
        let grid = TimeGrid::new(20.0, 1000).unwrap();
        let limit = solve_limit(&spec, &grid);
        let seed = policy();
        let replicates = 60;
        let mut averages = Vec::with_capacity(replicates as usize);
        for r in 0..replicates {
            let sim = simulate_hawkes_with_limit(
                &spec, 50, &grid, &limit, &seed, r, SimMode::Thinning,
            )
            .unwrap();
            let lam = sim.lambda_path();
            let tail: Vec<f64> = (750..=1000).map(|k| lam.at(k)).collect();
            averages.push(tail.iter().sum::<f64>() / tail.len() as f64);
        }
        let mean = averages.iter().sum::<f64>() / averages.len() as f64;
        let var = averages.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
            / (averages.len() - 1) as f64;
        let se = (var / averages.len() as f64).sqrt();
        let limit_tail: Vec<f64> = (750..=1000).map(|k| limit.lambda.at(k)).collect();
        let limit_mean = limit_tail.iter().sum::<f64>() / limit_tail.len() as f64;
        assert!(
            (mean - limit_mean).abs() <= 5.0 * se.max(1e-4),
            "tail average {mean} vs limit {limit_mean} (se {se})"
        );
        assert!((limit_mean - 0.5).abs() < 0.01);
    }

    #[test]
    fn constant_rate_coupling_is_exact() {
        // f constant: lambda^N == lambda, so the coupled baseline accepts the
        // exact same candidates and the paths coincide.
        let spec = builtin_model(BuiltinModel::ConstantRate, &[1.0]).unwrap();
        let grid = TimeGrid::new(10.0, 500).unwrap();
        let limit = solve_limit(&spec, &grid);
        let (sim, baseline) =
            simulate_hawkes_coupled(&spec, 20, &grid, &limit, &policy(), 5).unwrap();
        for unit in 0..20 {
            assert_eq!(sim.events.unit_times(unit), baseline.unit_times(unit));
        }
    }

    #[test]
    fn coupled_run_reproduces_plain_run() {
        // The baseline-collecting pass must consume streams identically to the
        // plain simulator, so the Hawkes paths agree bit for bit.
        let spec = sigmoid(2.0, 2.0);
        let grid = TimeGrid::new(5.0, 500).unwrap();
        let limit = solve_limit(&spec, &grid);
        let seed = policy();
        let plain =
            simulate_hawkes_with_limit(&spec, 30, &grid, &limit, &seed, 9, SimMode::Thinning)
                .unwrap();
        let (coupled, baseline) =
            simulate_hawkes_coupled(&spec, 30, &grid, &limit, &seed, 9).unwrap();
        for unit in 0..30 {
            assert_eq!(plain.events.unit_times(unit), coupled.events.unit_times(unit));
        }
        baseline.validate().unwrap();
    }

    #[test]
    fn coupling_distance_shrinks_with_n() {
        // Mean sup distance over units decays roughly like 1/sqrt(N);
        // log-log slope across N in {50, 200, 800} inside [-0.75, -0.25].
        let spec = sigmoid(2.0, 2.0);
        let grid = TimeGrid::new(5.0, 250).unwrap();
        let limit = solve_limit(&spec, &grid);
        let seed = policy();
        let replicates = 60;
        let mut means = Vec::new();
        for &n_units in &[50usize, 200, 800] {
            let mut total = 0.0;
            let mut count = 0usize;
            for r in 0..replicates {
                let (sim, baseline) =
                    simulate_hawkes_coupled(&spec, n_units, &grid, &limit, &seed, r).unwrap();
                for unit in 0..n_units {
                    total += sim.events.sup_distance(unit, &baseline, unit);
                    count += 1;
                }
            }
            means.push(total / count as f64);
        }
        let xs: Vec<f64> = [50.0f64, 200.0, 800.0].iter().map(|n| n.ln()).collect();
        let ys: Vec<f64> = means.iter().map(|m| m.ln()).collect();
        let xbar = xs.iter().sum::<f64>() / 3.0;
        let ybar = ys.iter().sum::<f64>() / 3.0;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xbar) * (y - ybar))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xbar) * (x - xbar)).sum::<f64>();
        assert!(
            (-0.75..=-0.25).contains(&slope),
            "coupling decay slope {slope} with means {means:?}"
        );
    }

    #[test]
    fn zero_intensity_gives_empty_paths() {
        let spec = builtin_model(BuiltinModel::ConstantRate, &[0.0]).unwrap();
        let grid = TimeGrid::new(5.0, 100).unwrap();
        let sim = simulate_hawkes(&spec, 10, &grid, &policy(), 0, SimMode::Thinning).unwrap();
        assert_eq!(sim.events.total_events(), 0);
        let limit = solve_limit(&spec, &grid);
        let baseline =
            simulate_coupled_poisson(&spec, 10, &grid, &limit, &policy(), 0).unwrap();
        assert_eq!(baseline.total_events(), 0);
    }

    #[test]
    fn multiclass_k1_reduces_bit_identically() {
        let spec = sigmoid(2.0, 2.0);
        let grid = TimeGrid::new(5.0, 500).unwrap();
        let seed = policy();
        for mode in [SimMode::Thinning, SimMode::Euler] {
            let scalar = simulate_hawkes(&spec, 25, &grid, &seed, 11, mode).unwrap();
            let multi = simulate_hawkes_multiclass(
                &MultiClassSpec::from_scalar(&spec),
                25,
                &grid,
                &seed,
                11,
                mode,
            )
            .unwrap();
            assert_eq!(scalar.events, multi.events, "{mode:?}");
            assert_eq!(scalar.lambda_path().values(), multi.lambda_path().values());
        }
    }

    #[test]
    fn multiclass_symmetric_classes_match_in_rate() {
        // Two symmetric classes: mean rate paths agree within Monte Carlo error.
        let m = sigmoid(2.0, 2.0);
        let spec = MultiClassSpec::new(
            "symmetric",
            vec![m.rate.clone(), m.rate.clone()],
            vec![
                vec![m.kernel.clone(), m.kernel.clone()],
                vec![m.kernel.clone(), m.kernel.clone()],
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        let grid = TimeGrid::new(5.0, 250).unwrap();
        let seed = policy();
        let replicates = 100;
        let mut mean_gap = 0.0f64;
        let mut scale = 0.0f64;
        for r in 0..replicates {
            let sim =
                simulate_hawkes_multiclass(&spec, 40, &grid, &seed, r, SimMode::Thinning).unwrap();
            let end0 = sim.lambda_paths[0].at(250);
            let end1 = sim.lambda_paths[1].at(250);
            mean_gap += end0 - end1;
            scale += end0 + end1;
        }
        mean_gap /= replicates as f64;
        scale /= 2.0 * replicates as f64;
        assert!(
            mean_gap.abs() < 0.15 * scale,
            "class rate asymmetry {mean_gap} at scale {scale}"
        );
    }

    #[test]
    fn euler_mode_tracks_thinning_mean() {
        // Euler has O(dt) weak bias: mean counts at two dt values should both
        // land near the thinning mean, the finer one closer.
        let spec = sigmoid(2.0, 2.0);
        let seed = policy();
        let replicates = 150;
        let n_units = 20;
        let horizon = 5.0;

        let mean_count = |mode: SimMode, n_steps: usize| -> f64 {
            let grid = TimeGrid::new(horizon, n_steps).unwrap();
            let mut total = 0usize;
            for r in 0..replicates {
                let sim = simulate_hawkes(&spec, n_units, &grid, &seed, r, mode).unwrap();
                total += sim.events.total_events();
            }
            total as f64 / (replicates as usize * n_units) as f64
        };

        let exact = mean_count(SimMode::Thinning, 500);
        let coarse = mean_count(SimMode::Euler, 125);
        let fine = mean_count(SimMode::Euler, 500);
        let gap_coarse = (coarse - exact).abs();
        let gap_fine = (fine - exact).abs();
        // Monte Carlo noise allowance: per-unit count ~ 2.3, SE ~ sqrt(2.3/3000).
        let noise = 3.0 * (exact / (replicates as usize * n_units) as f64).sqrt();
        assert!(
            gap_fine <= gap_coarse + 2.0 * noise,
            "O(dt) gap did not shrink: coarse {gap_coarse} fine {gap_fine} noise {noise}"
        );
    }

    #[test]
    fn decoupled_euler_and_thinning_agree_in_law() {
        // h == 0 decouples units into iid Poisson(f(0)); the two modes then
        // sample the same law. KS on total counts over 2000 replicates.
        let spec = ModelSpec {
            name: "decoupled".into(),
            rate: sigmoid(2.0, 2.0).rate,
            kernel: KernelSpec::zero(),
        };
        let grid = TimeGrid::new(5.0, 250).unwrap();
        let seed = policy();
        let replicates = 2000;
        let mut thinning_counts = Vec::with_capacity(replicates as usize);
        let mut euler_counts = Vec::with_capacity(replicates as usize);
        for r in 0..replicates {
            thinning_counts.push(
                simulate_hawkes(&spec, 5, &grid, &seed, r, SimMode::Thinning)
                    .unwrap()
                    .events
                    .total_events() as f64,
            );
            euler_counts.push(
                simulate_hawkes(&spec, 5, &grid, &seed, r, SimMode::Euler)
                    .unwrap()
                    .events
                    .total_events() as f64,
            );
        }
        let (_stat, p) = crate::stats::two_sample_ks(&thinning_counts, &euler_counts).unwrap();
        assert!(p > 0.01, "euler vs thinning count law differs: p = {p}");
    }

    #[test]
    fn seeds_reproduce_byte_identical_output() {
        let spec = sigmoid(2.0, 2.0);
        let grid = TimeGrid::new(5.0, 500).unwrap();
        let seed = policy();
        let a = simulate_hawkes(&spec, 30, &grid, &seed, 4, SimMode::Thinning).unwrap();
        let b = simulate_hawkes(&spec, 30, &grid, &seed, 4, SimMode::Thinning).unwrap();
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        a.events.write_csv(&mut csv_a, 4).unwrap();
        b.events.write_csv(&mut csv_b, 4).unwrap();
        assert_eq!(csv_a, csv_b);

        let c = simulate_hawkes(&spec, 30, &grid, &SeedPolicy::new(1), 4, SimMode::Thinning)
            .unwrap();
        assert_ne!(a.events, c.events);
    }
}
