//! Population ↔ trajectory fusion: builds the n×n origin-distance cost
//! matrix and solves the minimum-total-cost perfect matching without
//! replacement (Hungarian assignment, shortest-augmenting-path form, O(n³)).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::planar_deg;
use crate::schema::{RecordBatch, TrajectorySeq, ZoneRegistry};

/// Square nonnegative cost matrix in row-major storage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostMatrix {
    pub n: usize,
    costs: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n: usize, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != n * n {
            return Err(Error::Assignment(format!(
                "expected {n}×{n} entries, got {}",
                costs.len()
            )));
        }
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Assignment(
                "cost entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { n, costs })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.costs[row * self.n + col]
    }

    fn row(&self, row: usize) -> &[f64] {
        &self.costs[row * self.n..(row + 1) * self.n]
    }
}

/// A perfect matching: population row `i` pairs with trajectory `perm[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub perm: Vec<usize>,
    pub total_cost: f64,
}

/// Extra weight on destination proximity in the cost (0 = origin only,
/// which is the default behavior).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostOptions {
    pub dest_weight: f64,
}

impl Default for CostOptions {
    fn default() -> Self {
        Self { dest_weight: 0.0 }
    }
}

/// Builds the cost matrix: entry (i, j) is the planar Euclidean distance in
/// coordinate space between population row i's origin and the centroid of
/// trajectory j's first zone. With a positive `dest_weight`, that many times
/// the destination-side distance (population destination vs last zone) is
/// added.
pub fn build_cost_matrix(
    pop: &RecordBatch,
    trajs: &[TrajectorySeq],
    zones: &ZoneRegistry,
    opts: CostOptions,
) -> Result<CostMatrix> {
    let n = pop.n_rows();
    if n != trajs.len() {
        return Err(Error::Assignment(format!(
            "population has {n} rows but there are {} trajectories",
            trajs.len()
        )));
    }
    let lat_col = pop
        .schema
        .col_idx("origin_lat")
        .ok_or_else(|| Error::Assignment("population lacks `origin_lat`".into()))?;
    let lon_col = pop
        .schema
        .col_idx("origin_lon")
        .ok_or_else(|| Error::Assignment("population lacks `origin_lon`".into()))?;
    let dest_cols = if opts.dest_weight > 0.0 {
        let dlat = pop
            .schema
            .col_idx("dest_lat")
            .ok_or_else(|| Error::Assignment("population lacks `dest_lat`".into()))?;
        let dlon = pop
            .schema
            .col_idx("dest_lon")
            .ok_or_else(|| Error::Assignment("population lacks `dest_lon`".into()))?;
        Some((dlat, dlon))
    } else {
        None
    };

    let starts: Vec<(f64, f64)> = trajs
        .iter()
        .map(|t| {
            zones.centroid(&t.tokens[0]).ok_or_else(|| {
                Error::Assignment(format!("zone `{}` has no centroid", t.tokens[0]))
            })
        })
        .collect::<Result<_>>()?;
    let ends: Vec<(f64, f64)> = trajs
        .iter()
        .map(|t| {
            let last = t.tokens.last().expect("trajectories are nonempty");
            zones
                .centroid(last)
                .ok_or_else(|| Error::Assignment(format!("zone `{last}` has no centroid")))
        })
        .collect::<Result<_>>()?;

    let mut costs = Vec::with_capacity(n * n);
    for i in 0..n {
        let olat = pop.cell(i, lat_col).as_num().unwrap();
        let olon = pop.cell(i, lon_col).as_num().unwrap();
        let dest = dest_cols.map(|(dlat, dlon)| {
            (
                pop.cell(i, dlat).as_num().unwrap(),
                pop.cell(i, dlon).as_num().unwrap(),
            )
        });
        for j in 0..n {
            let mut c = planar_deg(olat, olon, starts[j].0, starts[j].1);
            if let Some((dla, dlo)) = dest {
                c += opts.dest_weight * planar_deg(dla, dlo, ends[j].0, ends[j].1);
            }
            costs.push(c);
        }
    }
    CostMatrix::new(n, costs)
}

/// Minimum-total-cost perfect matching via shortest augmenting paths with
/// dual potentials (equivalent optimum to the classical reduce-and-cover
/// narration: subtract row minima, subtract column minima, and grow the zero
/// set until a full cover exists). Deterministic: rows are augmented in
/// order and equal-slack ties resolve to the lowest column index.
pub fn hungarian(costs: &CostMatrix) -> Assignment {
    let n = costs.n;
    if n == 0 {
        return Assignment {
            perm: Vec::new(),
            total_cost: 0.0,
        };
    }
    // Dual potentials and matching state use a virtual column `n` as the
    // starting slot of each augmenting search.
    let mut pot_row = vec![0.0f64; n + 1];
    let mut pot_col = vec![0.0f64; n + 1];
    let mut row_of_col = vec![n; n + 1]; // matched row per column (n = free)
    let mut min_slack = vec![0.0f64; n + 1];
    let mut prev_col = vec![0usize; n + 1];
    let mut visited = vec![false; n + 1];

    for row in 0..n {
        row_of_col[n] = row;
        let mut j_cur = n;
        min_slack.fill(f64::INFINITY);
        visited.fill(false);
        // Dijkstra-like growth of the tight set until a free column is found.
        loop {
            visited[j_cur] = true;
            let i_cur = row_of_col[j_cur];
            let mut delta = f64::INFINITY;
            let mut j_next = n;
            let row_costs = costs.row(i_cur);
            for j in 0..n {
                if !visited[j] {
                    let slack = row_costs[j] - pot_row[i_cur] - pot_col[j];
                    if slack < min_slack[j] {
                        min_slack[j] = slack;
                        prev_col[j] = j_cur;
                    }
                    if min_slack[j] < delta {
                        delta = min_slack[j];
                        j_next = j;
                    }
                }
            }
            for j in 0..=n {
                if visited[j] {
                    pot_row[row_of_col[j]] += delta;
                    pot_col[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j_cur = j_next;
            if row_of_col[j_cur] == n {
                break;
            }
        }
        // Augment along the recorded path.
        while j_cur != n {
            let j_prev = prev_col[j_cur];
            row_of_col[j_cur] = row_of_col[j_prev];
            j_cur = j_prev;
        }
    }

    let mut perm = vec![0usize; n];
    for j in 0..n {
        perm[row_of_col[j]] = j;
    }
    let total_cost = (0..n).map(|i| costs.at(i, perm[i])).sum();
    Assignment { perm, total_cost }
}

/// One composite record: the population row plus its assigned trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositeTable {
    pub population: RecordBatch,
    /// trajectories[i] is the chain assigned to population row i.
    pub trajectories: Vec<TrajectorySeq>,
}

/// Pairs each population row with its assigned trajectory. Every trajectory
/// is used exactly once and its token list is carried over unmodified.
pub fn merge(
    pop: &RecordBatch,
    trajs: &[TrajectorySeq],
    assignment: &Assignment,
) -> Result<CompositeTable> {
    let n = pop.n_rows();
    if trajs.len() != n || assignment.perm.len() != n {
        return Err(Error::Assignment(format!(
            "dimension mismatch: {} rows, {} trajectories, {} assignments",
            n,
            trajs.len(),
            assignment.perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &j in &assignment.perm {
        if j >= n || seen[j] {
            return Err(Error::Assignment("assignment is not a permutation".into()));
        }
        seen[j] = true;
    }
    let trajectories = assignment
        .perm
        .iter()
        .enumerate()
        .map(|(i, &j)| TrajectorySeq {
            person_id: pop.row_ids[i].clone(),
            tokens: trajs[j].tokens.clone(),
        })
        .collect();
    Ok(CompositeTable {
        population: pop.clone(),
        trajectories,
    })
}

/// Exhaustive minimum over all permutations; the optimality oracle for
/// small n.
pub fn brute_force_min_cost(costs: &CostMatrix) -> f64 {
    fn go(costs: &CostMatrix, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == costs.n {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        if acc >= *best {
            return;
        }
        for j in 0..costs.n {
            if !used[j] {
                used[j] = true;
                go(costs, row + 1, used, acc + costs.at(row, j), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    let mut used = vec![false; costs.n];
    go(costs, 0, &mut used, 0.0, &mut best);
    best
}
