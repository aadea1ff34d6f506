//! Volterra kernel and resolvent machinery.
//!
//! The fluctuation limit is driven by the causal kernel
//! `kappa(t,s) = int_s^t f'(x_u) h'(u-s) du` and its resolvent
//! `K = sum_n kappa^{(x)n}`. Tables are dense lower-triangular on the grid;
//! two independent builders are provided (truncated Neumann series and a
//! direct march on the resolvent integral equation) so each can serve as an
//! oracle for the other. Everything is trapezoid-based; `kappa(t,t) = 0`
//! keeps all marches explicit for model-derived kernels.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, TimeGrid};
use crate::limit::LimitSolution;
use crate::model::{ModelSpec, MultiClassSpec};

/// Hard cap on `n_steps` for dense tables (about 400 MB per table beyond it).
pub const MAX_TABLE_STEPS: usize = 10_000;
/// Columns built in one parallel batch, bounding scratch memory.
const COLUMN_BATCH: usize = 256;
/// Hard cap on the Neumann truncation order.
pub const NEUMANN_ORDER_CAP: usize = 400;

/// Dense lower-triangular table `rows[i][j]`, `j <= i`, on grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TriTable {
    rows: Vec<Vec<f64>>,
}

impl TriTable {
    fn zeros(n_nodes: usize) -> Self {
        Self { rows: (0..n_nodes).map(|i| vec![0.0; i + 1]).collect() }
    }

    pub fn n_nodes(&self) -> usize {
        self.rows.len()
    }

    /// Entry at `(t_i, t_j)`; requires `j <= i`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn max_abs(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &TriTable) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0f64, f64::max)
    }

    /// Build columns in parallel batches; `build_col(j)` returns the values
    /// at `i = j..n_nodes`.
    fn from_columns(n_nodes: usize, build_col: impl Fn(usize) -> Vec<f64> + Sync) -> Self {
        let mut table = Self::zeros(n_nodes);
        let mut j0 = 0usize;
        while j0 < n_nodes {
            let j1 = (j0 + COLUMN_BATCH).min(n_nodes);
            let cols: Vec<Vec<f64>> = (j0..j1).into_par_iter().map(&build_col).collect();
            for (offset, col) in cols.into_iter().enumerate() {
                let j = j0 + offset;
                for (di, value) in col.into_iter().enumerate() {
                    table.rows[j + di][j] = value;
                }
            }
            j0 = j1;
        }
        table
    }
}

/// `kappa` tables (one block per class pair) plus the analytic sup bound.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub grid: TimeGrid,
    /// `blocks[k][l]` holds `kappa_{k,l}` including the `sqrt(p_k/p_l)` weight.
    pub blocks: Vec<Vec<TriTable>>,
    /// `M_T`: bound on `|kappa|` over all blocks.
    pub m_bound: f64,
}

impl KernelTable {
    pub fn class_count(&self) -> usize {
        self.blocks.len()
    }

    /// The single block of a one-class table.
    pub fn scalar(&self) -> &TriTable {
        &self.blocks[0][0]
    }

    /// Synthetic single-class table from a closed-form kernel (test fixtures
    /// and closed-form checks). `m_bound` must dominate `sup |kappa|`.
    pub fn from_fn(
        grid: &TimeGrid,
        kappa: impl Fn(f64, f64) -> f64 + Sync,
        m_bound: f64,
    ) -> Result<Self> {
        check_table_size(grid)?;
        let n_nodes = grid.len();
        let block = TriTable::from_columns(n_nodes, |j| {
            let s = grid.t(j);
            (j..n_nodes).map(|i| kappa(grid.t(i), s)).collect()
        });
        Ok(Self { grid: grid.clone(), blocks: vec![vec![block]], m_bound })
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|row| row.iter().map(TriTable::max_abs))
            .fold(0.0, f64::max)
    }
}

fn check_table_size(grid: &TimeGrid) -> Result<()> {
    if grid.n_steps() > MAX_TABLE_STEPS {
        return Err(Error::GridTooLarge(grid.n_steps()));
    }
    Ok(())
}

/// Build the scalar kernel table from a solved limit.
pub fn build_kappa(limit: &LimitSolution, spec: &ModelSpec, grid: &TimeGrid) -> Result<KernelTable> {
    if !limit.grid.same_as(grid) {
        return Err(Error::GridMismatch("limit solved on a different grid".into()));
    }
    let multi = MultiClassSpec::from_scalar(spec);
    build_kappa_multiclass(std::slice::from_ref(limit), &multi, grid)
}

/// Build all `K x K` kernel blocks, including the `sqrt(p_k/p_l)` prefactors.
pub fn build_kappa_multiclass(
    limits: &[LimitSolution],
    spec: &MultiClassSpec,
    grid: &TimeGrid,
) -> Result<KernelTable> {
    check_table_size(grid)?;
    let k_classes = spec.class_count();
    if limits.len() != k_classes {
        return Err(Error::GridMismatch(format!(
            "{} limit solutions for {} classes",
            limits.len(),
            k_classes
        )));
    }
    for sol in limits {
        if !sol.grid.same_as(grid) {
            return Err(Error::GridMismatch("limit solved on a different grid".into()));
        }
    }
    let n_nodes = grid.len();
    let dt = grid.dt();
    let horizon = grid.horizon();

    let mut blocks: Vec<Vec<TriTable>> = Vec::with_capacity(k_classes);
    let mut m_bound = 0.0f64;
    for k in 0..k_classes {
        let f_prime_at: Vec<f64> =
            (0..n_nodes).map(|i| spec.rates[k].f_prime(limits[k].x.at(i))).collect();
        let mut row_blocks = Vec::with_capacity(k_classes);
        for l in 0..k_classes {
            let kernel = &spec.kernels[k][l];
            let weight = (spec.proportions[k] / spec.proportions[l]).sqrt();
            let h_prime_at: Vec<f64> = (0..n_nodes).map(|d| kernel.h_prime(grid.t(d))).collect();
            // Incremental trapezoid down each column: the j = i endpoint of
            // the u-integral carries half weight like every trapezoid end.
            let block = TriTable::from_columns(n_nodes, |j| {
                let mut col = Vec::with_capacity(n_nodes - j);
                col.push(0.0);
                let mut acc = 0.0f64;
                let mut prev = f_prime_at[j] * h_prime_at[0];
                for i in j + 1..n_nodes {
                    let cur = f_prime_at[i] * h_prime_at[i - j];
                    acc += 0.5 * dt * (prev + cur);
                    prev = cur;
                    col.push(weight * acc);
                }
                col
            });
            m_bound = m_bound
                .max(weight * spec.rates[k].sup_f_prime * kernel.h_prime_l1(horizon));
            row_blocks.push(block);
        }
        blocks.push(row_blocks);
    }
    Ok(KernelTable { grid: grid.clone(), blocks, m_bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolventMethod {
    Neumann,
    IntegralEquation,
}

/// Truncation metadata of a Neumann build.
#[derive(Debug, Clone, Copy)]
pub struct NeumannInfo {
    pub order: usize,
    /// Certified bound on the dropped tail `sum_{m > order} kappa^{(x)m}`.
    pub tail_bound: f64,
}

/// Resolvent tables `K_{k,l}` with method/truncation metadata.
#[derive(Debug, Clone)]
pub struct ResolventTable {
    pub grid: TimeGrid,
    pub blocks: Vec<Vec<TriTable>>,
    pub method: ResolventMethod,
    pub neumann: Option<NeumannInfo>,
    /// Analytic sup bound `M_T exp(K M_T T)` carried over from the kernel.
    pub sup_bound: f64,
}

impl ResolventTable {
    pub fn class_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn scalar(&self) -> &TriTable {
        &self.blocks[0][0]
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|row| row.iter().map(TriTable::max_abs))
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &ResolventTable) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(a, b)| a.max_abs_diff(b)))
            .fold(0.0, f64::max)
    }
}

fn resolvent_sup_bound(kappa: &KernelTable) -> f64 {
    let k = kappa.class_count() as f64;
    kappa.m_bound * (k * kappa.m_bound * kappa.grid.horizon()).exp()
}

/// Trapezoid composition `C = int kappa(t,u) A(u,s) du` of triangular tables.
///
/// Written as the full-weight triangular product minus half-weight endpoint
/// corrections, which vanish identically when the diagonals are zero.
fn compose(kappa: &TriTable, a: &TriTable, dt: f64) -> TriTable {
    let n_nodes = kappa.n_nodes();
    let rows: Vec<Vec<f64>> = (0..n_nodes)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0f64; i + 1];
            let krow = kappa.row(i);
            for (l, &coef) in krow.iter().enumerate() {
                if coef != 0.0 {
                    let arow = a.row(l);
                    for (j, v) in arow.iter().enumerate() {
                        out[j] += coef * v;
                    }
                }
            }
            let kappa_ii = krow[i];
            for (j, value) in out.iter_mut().enumerate() {
                *value -= 0.5 * krow[j] * a.at(j, j) + 0.5 * kappa_ii * a.at(i, j);
                *value *= dt;
            }
            out
        })
        .collect();
    TriTable { rows }
}

fn add_assign(target: &mut TriTable, other: &TriTable) {
    for (tr, or) in target.rows.iter_mut().zip(&other.rows) {
        for (t, o) in tr.iter_mut().zip(or) {
            *t += o;
        }
    }
}

/// Certified tail of the Neumann series after `order` terms:
/// `sum_{m > order} M (K M T)^{m-1} / (m-1)!`, summed forward to avoid
/// the cancellation of `exp(z) - partial_sum`.
fn neumann_tail(m_bound: f64, k_classes: f64, horizon: f64, order: usize) -> f64 {
    let z = k_classes * m_bound * horizon;
    if z <= 0.0 {
        return 0.0;
    }
    if z > 300.0 {
        return f64::INFINITY;
    }
    let mut term = 1.0f64;
    for q in 0..order {
        term *= z / (q + 1) as f64;
    }
    let mut tail = 0.0f64;
    let mut q = order;
    while term > 1e-18 * tail.max(f64::MIN_POSITIVE) {
        tail += term;
        q += 1;
        term *= z / q as f64;
    }
    m_bound * tail
}

/// Resolvent by truncated Neumann series with a certified tail bound.
pub fn build_resolvent_neumann(kappa: &KernelTable, tol: f64) -> Result<ResolventTable> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let k_classes = kappa.class_count();
    let horizon = kappa.grid.horizon();
    let dt = kappa.grid.dt();

    let mut order = 1usize;
    while neumann_tail(kappa.m_bound, k_classes as f64, horizon, order) >= tol {
        order += 1;
        if order > NEUMANN_ORDER_CAP {
            return Err(Error::TruncationCap {
                needed: order,
                cap: NEUMANN_ORDER_CAP,
                bound: neumann_tail(kappa.m_bound, k_classes as f64, horizon, NEUMANN_ORDER_CAP),
            });
        }
    }
    let tail_bound = neumann_tail(kappa.m_bound, k_classes as f64, horizon, order);

    let mut total = kappa.blocks.clone();
    let mut iterate = kappa.blocks.clone();
    for _ in 2..=order {
        // iterate <- kappa (x) iterate, blockwise matrix composition.
        let next: Vec<Vec<TriTable>> = (0..k_classes)
            .map(|k| {
                (0..k_classes)
                    .map(|l| {
                        let mut acc = compose(&kappa.blocks[k][0], &iterate[0][l], dt);
                        for mid in 1..k_classes {
                            let term = compose(&kappa.blocks[k][mid], &iterate[mid][l], dt);
                            add_assign(&mut acc, &term);
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        iterate = next;
        for (trow, irow) in total.iter_mut().zip(&iterate) {
            for (t, i) in trow.iter_mut().zip(irow) {
                add_assign(t, i);
            }
        }
    }
    Ok(ResolventTable {
        grid: kappa.grid.clone(),
        blocks: total,
        method: ResolventMethod::Neumann,
        neumann: Some(NeumannInfo { order, tail_bound }),
        sup_bound: resolvent_sup_bound(kappa),
    })
}

/// Resolvent by a direct column march on its integral equation
/// `K(t,s) = kappa(t,s) + int_s^t kappa(t,u) K(u,s) du`.
///
/// Explicit for model kernels (`kappa(t,t) = 0`); a nonzero diagonal is
/// handled by the trapezoid endpoint division in the single-class case.
pub fn build_resolvent_ieq(kappa: &KernelTable) -> Result<ResolventTable> {
    let k_classes = kappa.class_count();
    let n_nodes = kappa.grid.len();
    let dt = kappa.grid.dt();

    if k_classes > 1 {
        for (k, row) in kappa.blocks.iter().enumerate() {
            for (l, block) in row.iter().enumerate() {
                for i in 0..n_nodes {
                    if block.at(i, i) != 0.0 {
                        return Err(Error::InvalidParameter(format!(
                            "multi-class march needs kappa[{k}][{l}](t,t) = 0"
                        )));
                    }
                }
            }
        }
    }

    // March all (k, l) blocks together, one column at a time, in batches.
    let build_column = |j: usize| -> Vec<Vec<Vec<f64>>> {
        // cols[k][l][i - j]
        let mut cols: Vec<Vec<Vec<f64>>> =
            vec![vec![Vec::with_capacity(n_nodes - j); k_classes]; k_classes];
        for k in 0..k_classes {
            for l in 0..k_classes {
                cols[k][l].push(kappa.blocks[k][l].at(j, j));
            }
        }
        for i in j + 1..n_nodes {
            for k in 0..k_classes {
                for l in 0..k_classes {
                    let mut rhs = kappa.blocks[k][l].at(i, j);
                    for mid in 0..k_classes {
                        let krow = kappa.blocks[k][mid].row(i);
                        let col = &cols[mid][l];
                        let mut acc = 0.5 * krow[j] * col[0];
                        for u in j + 1..i {
                            acc += krow[u] * col[u - j];
                        }
                        rhs += dt * acc;
                    }
                    let diag = if k_classes == 1 { kappa.blocks[0][0].at(i, i) } else { 0.0 };
                    cols[k][l].push(rhs / (1.0 - 0.5 * dt * diag));
                }
            }
        }
        cols
    };

    let mut blocks: Vec<Vec<TriTable>> =
        vec![vec![TriTable::zeros(n_nodes); k_classes]; k_classes];
    let mut j0 = 0usize;
    while j0 < n_nodes {
        let j1 = (j0 + COLUMN_BATCH).min(n_nodes);
        let batch: Vec<Vec<Vec<Vec<f64>>>> = (j0..j1).into_par_iter().map(build_column).collect();
        for (offset, cols) in batch.into_iter().enumerate() {
            let j = j0 + offset;
            for (k, krow) in cols.into_iter().enumerate() {
                for (l, col) in krow.into_iter().enumerate() {
                    for (di, value) in col.into_iter().enumerate() {
                        blocks[k][l].rows[j + di][j] = value;
                    }
                }
            }
        }
        j0 = j1;
    }

    Ok(ResolventTable {
        grid: kappa.grid.clone(),
        blocks,
        method: ResolventMethod::IntegralEquation,
        neumann: None,
        sup_bound: resolvent_sup_bound(kappa),
    })
}

/// Solution operator `Phi(F)(t) = F(t) + int_0^t K(t,s) F(s) ds` of the
/// second-kind equation, applied on the grid.
pub fn apply_phi(resolvent: &ResolventTable, f: &GridFunction) -> Result<GridFunction> {
    let out = apply_phi_multiclass(resolvent, std::slice::from_ref(f))?;
    Ok(out.into_iter().next().expect("one class in, one out"))
}

/// Blockwise `Phi` for the coupled system.
pub fn apply_phi_multiclass(
    resolvent: &ResolventTable,
    fs: &[GridFunction],
) -> Result<Vec<GridFunction>> {
    let k_classes = resolvent.class_count();
    if fs.len() != k_classes {
        return Err(Error::GridMismatch(format!(
            "{} inputs for {} classes",
            fs.len(),
            k_classes
        )));
    }
    for f in fs {
        if !f.grid().same_as(&resolvent.grid) {
            return Err(Error::GridMismatch("input lives on a different grid".into()));
        }
    }
    let dt = resolvent.grid.dt();
    let n_nodes = resolvent.grid.len();
    let mut out = Vec::with_capacity(k_classes);
    for k in 0..k_classes {
        let mut values = vec![0.0f64; n_nodes];
        for (l, f) in fs.iter().enumerate() {
            let block = &resolvent.blocks[k][l];
            let fv = f.values();
            for (i, value) in values.iter_mut().enumerate() {
                let row = block.row(i);
                let mut acc = 0.0;
                for (j, &w) in row.iter().enumerate() {
                    acc += w * fv[j];
                }
                acc -= 0.5 * row[0] * fv[0] + 0.5 * row[i] * fv[i];
                *value += dt * acc;
            }
        }
        for (i, value) in values.iter_mut().enumerate() {
            *value += fs[k].at(i);
        }
        out.push(GridFunction::new(resolvent.grid.clone(), values)?);
    }
    Ok(out)
}

/// Convolution `Psi(F)(t) = int_0^t F(s) h'(t-s) ds` mapping count
/// fluctuations to activity fluctuations.
pub fn apply_psi(spec: &ModelSpec, f: &GridFunction) -> GridFunction {
    let grid = f.grid();
    let h_prime_at: Vec<f64> = (0..grid.len()).map(|d| spec.h_prime(grid.t(d))).collect();
    convolve_h_prime(&h_prime_at, f)
}

pub(crate) fn convolve_h_prime(h_prime_at: &[f64], f: &GridFunction) -> GridFunction {
    let grid = f.grid();
    let dt = grid.dt();
    let fv = f.values();
    let values: Vec<f64> = (0..grid.len())
        .map(|i| {
            if i == 0 {
                return 0.0;
            }
            let mut acc = 0.5 * (fv[0] * h_prime_at[i] + fv[i] * h_prime_at[0]);
            for j in 1..i {
                acc += fv[j] * h_prime_at[i - j];
            }
            dt * acc
        })
        .collect();
    GridFunction::new(grid.clone(), values).expect("same grid by construction")
}

/// Multiplication operator `Xi(F)(t) = f'(x_t) F(t)`.
pub fn apply_xi(limit: &LimitSolution, spec: &ModelSpec, f: &GridFunction) -> Result<GridFunction> {
    f.check_same_grid(&limit.lambda)?;
    let values: Vec<f64> =
        (0..f.grid().len()).map(|k| spec.f_prime(limit.x.at(k)) * f.at(k)).collect();
    GridFunction::new(f.grid().clone(), values)
}
