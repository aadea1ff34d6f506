//! Uniform time grids and functions sampled on them.

use crate::error::{Error, Result};

/// Uniform discretization of `[0, T]` with `n_steps` intervals.
///
/// Grid nodes are `t_k = k * dt`, `k = 0..=n_steps`, with `dt = T / n_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be positive".into()));
        }
        Ok(Self { horizon, n_steps, dt: horizon / n_steps as f64 })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of grid nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.t(k))
    }

    /// Index of the last node `<= t` (clamped to the grid).
    pub fn floor_index(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        (((t / self.dt).floor() as usize).min(self.n_steps)).max(0)
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.n_steps == other.n_steps && self.horizon == other.horizon
    }

    /// Grid with the same horizon and `factor` times as many steps.
    pub fn refine(&self, factor: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.n_steps * factor)
    }
}

/// Real-valued function sampled on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &TimeGrid) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.times().map(f).collect();
        Self { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Piecewise-linear interpolation between grid nodes.
    pub fn interp(&self, t: f64) -> f64 {
        let n = self.grid.n_steps();
        if t <= 0.0 {
            return self.values[0];
        }
        if t >= self.grid.horizon() {
            return self.values[n];
        }
        let k = self.grid.floor_index(t).min(n - 1);
        let frac = (t - self.grid.t(k)) / self.grid.dt();
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Running trapezoidal integral, returned as a new grid function.
    pub fn cumulative_trapezoid(&self) -> GridFunction {
        let dt = self.grid.dt();
        let mut out = vec![0.0; self.values.len()];
        for k in 1..self.values.len() {
            out[k] = out[k - 1] + 0.5 * dt * (self.values[k - 1] + self.values[k]);
        }
        GridFunction { grid: self.grid.clone(), values: out }
    }

    pub fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch("grid functions live on different grids".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes_cover_horizon() {
        let g = TimeGrid::new(10.0, 1000).unwrap();
        assert_eq!(g.t(0), 0.0);
        assert!((g.t(1000) - 10.0).abs() < 1e-12);
        assert_eq!(g.len(), 1001);
        let times: Vec<f64> = g.times().collect();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(-1.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(f64::NAN, 10).is_err());
    }

    #[test]
    fn grid_function_length_checked() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        assert!(GridFunction::new(g.clone(), vec![0.0; 5]).is_err());
        assert!(GridFunction::new(g, vec![0.0; 11]).is_ok());
    }

    #[test]
    fn cumulative_trapezoid_of_linear_is_exact() {
        let g = TimeGrid::new(2.0, 100).unwrap();
        let f = GridFunction::from_fn(&g, |t| t);
        let int = f.cumulative_trapezoid();
        for k in 0..=100 {
            let t = g.t(k);
            assert!((int.at(k) - 0.5 * t * t).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_matches_nodes_and_midpoints() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let f = GridFunction::new(g.clone(), vec![0.0, 1.0, 4.0, 9.0, 16.0]).unwrap();
        assert_eq!(f.interp(0.25), 1.0);
        assert!((f.interp(0.375) - 2.5).abs() < 1e-12);
        assert_eq!(f.interp(-1.0), 0.0);
        assert_eq!(f.interp(2.0), 16.0);
    }
}
