//! Rectangular linear assignment (Kuhn–Munkres with shortest augmenting paths).

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "cost matrix shape mismatch");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Minimum-cost assignment of `min(rows, cols)` pairs over a finite matrix.
/// Pairs come back sorted by row.
pub fn min_cost_assignment(cost: &CostMatrix) -> Vec<(usize, usize)> {
    if cost.rows == 0 || cost.cols == 0 {
        return Vec::new();
    }
    if cost.rows <= cost.cols {
        hungarian(cost.rows, cost.cols, |r, c| cost.get(r, c))
    } else {
        let mut pairs: Vec<(usize, usize)> = hungarian(cost.cols, cost.rows, |r, c| cost.get(c, r))
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        pairs
    }
}

/// Optimal assignment over admissible pairs only.
///
/// Entries that are non-finite or exceed `gate` are inadmissible. The solver
/// first maximizes the number of admissible pairs, then minimizes their total
/// cost; inadmissible pairs never appear in the result.
pub fn solve_assignment(cost: &CostMatrix, gate: f64) -> Vec<(usize, usize)> {
    let admissible = |v: f64| v.is_finite() && v <= gate;
    let max_abs = cost
        .data
        .iter()
        .copied()
        .filter(|&v| admissible(v))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if cost.data.iter().all(|&v| !admissible(v)) {
        return Vec::new();
    }
    // Any single inadmissible pair outweighs every admissible total.
    let big = (max_abs + 1.0) * 4.0 * (cost.rows.min(cost.cols) + 1) as f64;
    let padded = CostMatrix {
        rows: cost.rows,
        cols: cost.cols,
        data: cost.data.iter().map(|&v| if admissible(v) { v } else { big }).collect(),
    };
    min_cost_assignment(&padded)
        .into_iter()
        .filter(|&(r, c)| admissible(cost.get(r, c)))
        .collect()
}

/// Core O(n²m) solver for `n <= m`. Returns `(row, col)` sorted by row.
fn hungarian(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    // 1-based potentials; column 0 is the virtual start.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
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
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| (owner[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn total(cost: &CostMatrix, pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().map(|&(r, c)| cost.get(r, c)).sum()
    }

    /// Exhaustive search over all injections of the smaller side.
    fn brute_force(cost: &CostMatrix) -> f64 {
        fn rec(cost: &CostMatrix, r: usize, used: &mut Vec<bool>, transpose: bool) -> f64 {
            let (n, m) = if transpose {
                (cost.cols, cost.rows)
            } else {
                (cost.rows, cost.cols)
            };
            if r == n {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for c in 0..m {
                if !used[c] {
                    used[c] = true;
                    let v = if transpose { cost.get(c, r) } else { cost.get(r, c) };
                    best = best.min(v + rec(cost, r + 1, used, transpose));
                    used[c] = false;
                }
            }
            best
        }
        let transpose = cost.rows > cost.cols;
        let m = if transpose { cost.rows } else { cost.cols };
        rec(cost, 0, &mut vec![false; m], transpose)
    }

    #[test]
    fn two_by_two_example() {
        let c = CostMatrix::new(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
        let p = solve_assignment(&c, f64::INFINITY);
        assert_eq!(p, vec![(0, 1), (1, 0)]);
        assert_eq!(total(&c, &p), 4.0);
    }

    #[test]
    fn single_and_gated() {
        let c = CostMatrix::new(1, 1, vec![0.3]);
        assert_eq!(solve_assignment(&c, 1.0), vec![(0, 0)]);
        let c = CostMatrix::new(2, 3, vec![5.0; 6]);
        assert!(solve_assignment(&c, 1.0).is_empty());
        assert!(solve_assignment(&CostMatrix::new(0, 4, vec![]), 1.0).is_empty());
    }

    #[test]
    fn infinite_entries_are_never_returned() {
        let inf = f64::INFINITY;
        let c = CostMatrix::new(2, 2, vec![0.1, inf, inf, inf]);
        assert_eq!(solve_assignment(&c, 1.0), vec![(0, 0)]);
    }

    #[test]
    fn prefers_more_admissible_pairs() {
        // greedy on the cheap pair would strand row 1
        let c = CostMatrix::new(2, 2, vec![0.0, 0.5, 0.4, 9.0]);
        assert_eq!(solve_assignment(&c, 1.0), vec![(0, 1), (1, 0)]);
    }

    proptest! {
        #[test]
        fn matches_exhaustive_search(
            rows in 1usize..7, cols in 1usize..7, seed in proptest::collection::vec(0.0..10.0f64, 36)
        ) {
            let c = CostMatrix::from_fn(rows, cols, |r, k| seed[r * 6 + k]);
            let p = min_cost_assignment(&c);
            prop_assert_eq!(p.len(), rows.min(cols));
            prop_assert!((total(&c, &p) - brute_force(&c)).abs() < 1e-9);
        }
    }
}
