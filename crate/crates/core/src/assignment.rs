//! Rectangular linear assignment.
//!
//! [`solve_assignment`] runs the O(n³) Kuhn-Munkres shortest-augmenting-path
//! method with row/column potentials, then walks the equality subgraph of the
//! optimal duals to pick the lexicographically smallest optimal assignment.
//! [`brute_force_assignment`] enumerates every injective mapping and is kept
//! as a test oracle.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

/// Largest row count accepted by [`brute_force_assignment`].
pub const BRUTE_FORCE_MAX_ROWS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignmentError {
    #[error("cost matrix must have at least one row")]
    Empty,
    #[error("cost matrix has {rows} rows but only {cols} columns")]
    TooFewColumns { rows: usize, cols: usize },
    #[error("cost matrix data length {len} does not match {rows}x{cols}")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("non-finite cost at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("brute force limited to {max} rows, got {rows}")]
    TooLargeForBruteForce { rows: usize, max: usize },
}

/// Dense row-major cost matrix with `n_rows <= n_cols` and finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl CostMatrix {
    pub fn new(n_rows: usize, n_cols: usize, entries: Vec<f64>) -> Result<Self, AssignmentError> {
        if n_rows == 0 {
            return Err(AssignmentError::Empty);
        }
        if entries.len() != n_rows * n_cols {
            return Err(AssignmentError::Shape {
                rows: n_rows,
                cols: n_cols,
                len: entries.len(),
            });
        }
        if n_cols < n_rows {
            return Err(AssignmentError::TooFewColumns {
                rows: n_rows,
                cols: n_cols,
            });
        }
        if let Some(idx) = entries.iter().position(|c| !c.is_finite()) {
            return Err(AssignmentError::NonFinite {
                row: idx / n_cols,
                col: idx % n_cols,
            });
        }
        Ok(Self {
            entries,
            n_rows,
            n_cols,
        })
    }

    /// Builds a matrix from nested rows; all rows must share a length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, AssignmentError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut entries = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            entries.extend_from_slice(r.as_ref());
        }
        Self::new(n_rows, n_cols, entries)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.n_cols + col]
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Sum of the assigned entries, accumulated in row order.
    pub fn cost_of(&self, row_to_col: &[usize]) -> f64 {
        row_to_col
            .iter()
            .enumerate()
            .fold(0.0, |acc, (r, &c)| acc + self.get(r, c))
    }
}

/// Injective row → column mapping with its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub row_to_col: Vec<usize>,
    pub total_cost: f64,
}

/// Minimum-cost injective assignment of every row to a distinct column.
///
/// Among optimal assignments the lexicographically smallest `row_to_col` is
/// returned. Costs may be negative.
pub fn solve_assignment(costs: &CostMatrix) -> Result<Assignment, AssignmentError> {
    let n_rows = costs.n_rows;
    let n = costs.n_cols;
    if n_rows == 1 {
        // Single row: first column holding the minimum.
        let mut best = 0;
        for c in 1..n {
            if costs.get(0, c) < costs.get(0, best) {
                best = c;
            }
        }
        return Ok(Assignment {
            row_to_col: vec![best],
            total_cost: costs.get(0, best),
        });
    }

    // Virtual rows n_rows..n cost zero everywhere.
    let cost = |r: usize, c: usize| if r < n_rows { costs.get(r, c) } else { 0.0 };

    // 1-based potentials; index 0 is the sentinel column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[col_owner[j] - 1] = j - 1;
    }

    // Equality subgraph of the optimal duals: every optimal assignment lives
    // in it, so a lexicographic sweep over it yields the tie-broken optimum.
    let scale = costs
        .entries
        .iter()
        .fold(1.0f64, |acc, c| if c.abs() > acc { c.abs() } else { acc });
    let tol = 1e-10 * scale;
    let tight: Vec<bool> = (0..n * n)
        .map(|k| {
            let (r, c) = (k / n, k % n);
            cost(r, c) - u[r + 1] - v[c + 1] <= tol
        })
        .collect();
    lexicographic_refine(&tight, n, n_rows, &mut row_to_col);

    row_to_col.truncate(n_rows);
    let total_cost = costs.cost_of(&row_to_col);
    Ok(Assignment {
        row_to_col,
        total_cost,
    })
}

/// Rewrites a perfect matching on the `tight` graph into the lexicographically
/// smallest one over its first `n_fixed` rows.
fn lexicographic_refine(tight: &[bool], n: usize, n_fixed: usize, row_to_col: &mut [usize]) {
    let mut col_to_row = vec![0usize; n];
    for (r, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = r;
    }
    for row in 0..n_fixed {
        for col in 0..n {
            if !tight[row * n + col] {
                continue;
            }
            if row_to_col[row] == col {
                break;
            }
            if col_to_row[col] < row {
                // Owned by a row that is already locked.
                continue;
            }
            // Try row -> col; the displaced owner must reach the column `row`
            // releases through an alternating path over unlocked rows.
            let displaced = col_to_row[col];
            let freed = row_to_col[row];
            if let Some(path) = alternating_path(tight, n, row, displaced, freed, col, row_to_col) {
                // path: sequence of (row, new_col) reassignments.
                for &(r, c) in &path {
                    row_to_col[r] = c;
                    col_to_row[c] = r;
                }
                row_to_col[row] = col;
                col_to_row[col] = row;
                break;
            }
        }
    }
}

/// BFS from `start` (a row that lost column `banned`) to the free column
/// `target`, moving only rows `> locked` along tight edges and never touching
/// `banned`. Returns the reassignment chain.
fn alternating_path(
    tight: &[bool],
    n: usize,
    locked: usize,
    start: usize,
    target: usize,
    banned: usize,
    row_to_col: &[usize],
) -> Option<Vec<(usize, usize)>> {
    let mut col_to_row = vec![usize::MAX; n];
    for (r, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = r;
    }
    // parent[col] = row that would take col
    let mut parent = vec![usize::MAX; n];
    let mut visited_row = vec![false; n];
    let mut queue = Vec::with_capacity(n);
    queue.push(start);
    visited_row[start] = true;
    let mut head = 0;
    while head < queue.len() {
        let r = queue[head];
        head += 1;
        for c in 0..n {
            if c == banned || parent[c] != usize::MAX || !tight[r * n + c] || c == row_to_col[r] {
                continue;
            }
            parent[c] = r;
            if c == target {
                let mut chain = Vec::new();
                let mut col = c;
                loop {
                    let taker = parent[col];
                    chain.push((taker, col));
                    if taker == start {
                        return Some(chain);
                    }
                    col = row_to_col[taker];
                }
            }
            let owner = col_to_row[c];
            if owner != usize::MAX && owner > locked && !visited_row[owner] {
                visited_row[owner] = true;
                queue.push(owner);
            }
        }
    }
    None
}

/// Exhaustive minimum over all injective mappings, visited in lexicographic
/// order so the first minimum found wins ties.
pub fn brute_force_assignment(costs: &CostMatrix) -> Result<Assignment, AssignmentError> {
    if costs.n_rows > BRUTE_FORCE_MAX_ROWS {
        return Err(AssignmentError::TooLargeForBruteForce {
            rows: costs.n_rows,
            max: BRUTE_FORCE_MAX_ROWS,
        });
    }
    let mut best: Option<Assignment> = None;
    let mut current = Vec::with_capacity(costs.n_rows);
    let mut taken = vec![false; costs.n_cols];
    enumerate(costs, &mut current, &mut taken, &mut best);
    Ok(best.expect("n_cols >= n_rows >= 1 guarantees a mapping"))
}

fn enumerate(
    costs: &CostMatrix,
    current: &mut Vec<usize>,
    taken: &mut [bool],
    best: &mut Option<Assignment>,
) {
    if current.len() == costs.n_rows {
        let total = costs.cost_of(current);
        if best.as_ref().is_none_or(|b| total < b.total_cost) {
            *best = Some(Assignment {
                row_to_col: current.clone(),
                total_cost: total,
            });
        }
        return;
    }
    for c in 0..costs.n_cols {
        if taken[c] {
            continue;
        }
        taken[c] = true;
        current.push(c);
        enumerate(costs, current, taken, best);
        current.pop();
        taken[c] = false;
    }
}
