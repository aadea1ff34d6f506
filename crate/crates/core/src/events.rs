//! Per-unit jump times of counting processes.

use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, TimeGrid};
use crate::output::fmt_g17;

/// Sorted jump times in `(0, T]` for each unit of a network, with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPaths {
    grid: TimeGrid,
    /// Class label per unit; all zero for single-class systems.
    classes: Vec<usize>,
    /// `times[i]` is strictly increasing.
    times: Vec<Vec<f64>>,
}

impl EventPaths {
    pub fn new(grid: TimeGrid, classes: Vec<usize>, times: Vec<Vec<f64>>) -> Result<Self> {
        if classes.len() != times.len() {
            return Err(Error::InvalidParameter(format!(
                "{} class labels for {} units",
                classes.len(),
                times.len()
            )));
        }
        let paths = Self { grid, classes, times };
        paths.validate()?;
        Ok(paths)
    }

    pub fn empty(grid: TimeGrid, unit_count: usize) -> Self {
        Self { grid, classes: vec![0; unit_count], times: vec![Vec::new(); unit_count] }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn unit_count(&self) -> usize {
        self.times.len()
    }

    pub fn class_of(&self, unit: usize) -> usize {
        self.classes[unit]
    }

    pub fn unit_times(&self, unit: usize) -> &[f64] {
        &self.times[unit]
    }

    pub fn total_events(&self) -> usize {
        self.times.iter().map(|t| t.len()).sum()
    }

    /// Strict per-unit monotonicity in `(0, T]` plus global distinctness of
    /// jump times across the whole network.
    pub fn validate(&self) -> Result<()> {
        let horizon = self.grid.horizon();
        for (unit, times) in self.times.iter().enumerate() {
            for pair in times.windows(2) {
                if !(pair[1] > pair[0]) {
                    return Err(Error::InvalidParameter(format!(
                        "unit {unit}: non-increasing jump times {} -> {}",
                        pair[0], pair[1]
                    )));
                }
            }
            if let (Some(first), Some(last)) = (times.first(), times.last()) {
                if !(*first > 0.0) || *last > horizon {
                    return Err(Error::InvalidParameter(format!(
                        "unit {unit}: jump times must lie in (0, {horizon}]"
                    )));
                }
            }
        }
        let mut all: Vec<f64> = self.times.iter().flatten().copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for pair in all.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::InvalidParameter(format!(
                    "simultaneous jumps at t = {}",
                    pair[0]
                )));
            }
        }
        Ok(())
    }

    /// `Z_i(t_k)` for one unit on the grid.
    pub fn counting_path(&self, unit: usize) -> GridFunction {
        let mut values = vec![0.0; self.grid.len()];
        let times = &self.times[unit];
        let mut idx = 0usize;
        for k in 0..self.grid.len() {
            let t = self.grid.t(k);
            while idx < times.len() && times[idx] <= t {
                idx += 1;
            }
            values[k] = idx as f64;
        }
        GridFunction::new(self.grid.clone(), values).expect("length matches by construction")
    }

    /// `sum_i Z_i(t_k)` over units of one class (or all units).
    pub fn total_count_path(&self, class: Option<usize>) -> GridFunction {
        let mut all: Vec<f64> = self
            .times
            .iter()
            .zip(&self.classes)
            .filter(|(_, c)| class.map_or(true, |k| **c == k))
            .flat_map(|(t, _)| t.iter().copied())
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut values = vec![0.0; self.grid.len()];
        let mut idx = 0usize;
        for k in 0..self.grid.len() {
            let t = self.grid.t(k);
            while idx < all.len() && all[idx] <= t {
                idx += 1;
            }
            values[k] = idx as f64;
        }
        GridFunction::new(self.grid.clone(), values).expect("length matches by construction")
    }

    /// Units belonging to `class`.
    pub fn units_of_class(&self, class: usize) -> Vec<usize> {
        (0..self.unit_count()).filter(|&i| self.classes[i] == class).collect()
    }

    /// Pathwise sup distance `sup_t |Z_i(t) - Z_j'(t)|` between one unit here
    /// and one unit of `other`, evaluated exactly at event times.
    pub fn sup_distance(&self, unit: usize, other: &EventPaths, other_unit: usize) -> f64 {
        sup_count_distance(&self.times[unit], &other.times[other_unit])
    }

    /// CSV rows `(replicate, class, unit, jump_time)` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: &mut W, replicate: u64) -> Result<()> {
        writeln!(out, "replicate,class,unit,jump_time")?;
        for (unit, times) in self.times.iter().enumerate() {
            for t in times {
                writeln!(out, "{},{},{},{}", replicate, self.classes[unit], unit, fmt_g17(*t))?;
            }
        }
        Ok(())
    }
}

/// `sup_t |#(a <= t) - #(b <= t)|` for two sorted event-time lists.
pub fn sup_count_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut i = 0usize;
    let mut j = 0usize;
    let mut diff: i64 = 0;
    let mut sup: i64 = 0;
    while i < a.len() || j < b.len() {
        let ta = a.get(i).copied().unwrap_or(f64::INFINITY);
        let tb = b.get(j).copied().unwrap_or(f64::INFINITY);
        if ta < tb {
            diff += 1;
            i += 1;
        } else if tb < ta {
            diff -= 1;
            j += 1;
        } else {
            // Shared jump time (coupled acceptances): counts move together.
            i += 1;
            j += 1;
        }
        sup = sup.max(diff.abs());
    }
    sup as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(10.0, 100).unwrap()
    }

    #[test]
    fn validation_catches_ties_and_disorder() {
        let g = grid();
        assert!(EventPaths::new(g.clone(), vec![0], vec![vec![1.0, 1.0]]).is_err());
        assert!(EventPaths::new(g.clone(), vec![0], vec![vec![2.0, 1.0]]).is_err());
        assert!(EventPaths::new(g.clone(), vec![0, 0], vec![vec![1.5], vec![1.5]]).is_err());
        assert!(EventPaths::new(g.clone(), vec![0], vec![vec![0.0]]).is_err());
        assert!(EventPaths::new(g.clone(), vec![0], vec![vec![10.5]]).is_err());
        assert!(EventPaths::new(g, vec![0, 0], vec![vec![1.0, 2.0], vec![1.5]]).is_ok());
    }

    #[test]
    fn counting_paths_count() {
        let g = TimeGrid::new(4.0, 4).unwrap();
        let paths =
            EventPaths::new(g, vec![0, 1], vec![vec![0.5, 2.0, 3.5], vec![1.2]]).unwrap();
        let z0 = paths.counting_path(0);
        assert_eq!(z0.values(), &[0.0, 1.0, 2.0, 2.0, 3.0]);
        let total = paths.total_count_path(None);
        assert_eq!(total.values(), &[0.0, 1.0, 3.0, 3.0, 4.0]);
        let class1 = paths.total_count_path(Some(1));
        assert_eq!(class1.values(), &[0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn sup_distance_counts_mismatches() {
        assert_eq!(sup_count_distance(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(sup_count_distance(&[1.0], &[]), 1.0);
        assert_eq!(sup_count_distance(&[1.0, 1.5, 1.7], &[4.0]), 3.0);
        // Mismatches in opposite directions partially cancel at the end.
        assert_eq!(sup_count_distance(&[1.0, 5.0], &[2.0, 3.0]), 1.0);
    }

    #[test]
    fn csv_round_trip_is_byte_stable() {
        let g = grid();
        let paths = EventPaths::new(
            g,
            vec![0, 0],
            vec![vec![0.123456789012345678, 2.0], vec![1.0 / 3.0]],
        )
        .unwrap();
        let mut buf1 = Vec::new();
        let mut buf2 = Vec::new();
        paths.write_csv(&mut buf1, 7).unwrap();
        paths.write_csv(&mut buf2, 7).unwrap();
        assert_eq!(buf1, buf2);
        let text = String::from_utf8(buf1).unwrap();
        assert!(text.starts_with("replicate,class,unit,jump_time\n"));
        // 17 significant digits reproduce the f64 exactly.
        let line = text.lines().nth(3).unwrap();
        let printed: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(printed, 1.0 / 3.0);
    }
}
