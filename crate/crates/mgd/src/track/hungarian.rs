//! Minimum-cost linear assignment (Hungarian algorithm with potentials),
//! O(n²m) for an n×m cost matrix with n ≤ m.

/// Solve the rectangular assignment problem for a row-major `rows`×`cols`
/// cost matrix with finite entries. Returns `assignment[row] = Some(col)`;
/// the smaller dimension is matched completely, so rows are only left
/// unassigned when `rows > cols`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    debug_assert!(cost.iter().all(|r| r.len() == cols));
    debug_assert!(cost.iter().flatten().all(|c| c.is_finite()), "costs must be finite");
    if cols == 0 {
        return vec![None; rows];
    }

    if rows <= cols {
        solve(rows, cols, |r, c| cost[r][c]).into_iter().map(Some).collect()
    } else {
        // Transpose, solve over the smaller dimension, then invert the map.
        let col_to_row = solve(cols, rows, |r, c| cost[c][r]);
        let mut assignment = vec![None; rows];
        for (col, row) in col_to_row.into_iter().enumerate() {
            assignment[row] = Some(col);
        }
        assignment
    }
}

/// Potentials-based shortest augmenting path; requires `n <= m`.
/// Returns for each row its assigned column.
fn solve(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    const UNSET: usize = usize::MAX;
    // 1-based arrays; index 0 is the virtual start column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut col_row = vec![UNSET; m + 1]; // row assigned to each column
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        col_row[0] = i;
        let mut j0 = 0usize;
        let mut min_v = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < min_v[j] {
                    min_v[j] = cur;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == UNSET {
                break;
            }
        }
        // Walk the augmenting path backwards.
        while j0 != 0 {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
        }
    }

    let mut row_col = vec![UNSET; n];
    for j in 1..=m {
        if col_row[j] != UNSET && col_row[j] != 0 {
            row_col[col_row[j] - 1] = j - 1;
        }
    }
    debug_assert!(row_col.iter().all(|&c| c != UNSET));
    row_col
}

#[cfg(test)]
pub(crate) fn brute_force_min_cost(cost: &[Vec<f64>]) -> f64 {
    // Exhaustive minimum over all complete assignments of the smaller side.
    fn recurse(cost: &[Vec<f64>], row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for c in 0..cost[0].len() {
            if !used[c] {
                used[c] = true;
                recurse(cost, row + 1, used, acc + cost[row][c], best);
                used[c] = false;
            }
        }
    }
    let rows = cost.len();
    let cols = cost[0].len();
    let transposed: Vec<Vec<f64>>;
    let work = if rows <= cols {
        cost
    } else {
        transposed = (0..cols).map(|c| (0..rows).map(|r| cost[r][c]).collect()).collect();
        &transposed
    };
    let mut best = f64::INFINITY;
    recurse(work, 0, &mut vec![false; work[0].len()], 0.0, &mut best);
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(cost: &[Vec<f64>], assignment: &[Option<usize>]) -> f64 {
        assignment
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| cost[r][c]))
            .sum()
    }

    #[test]
    fn one_by_one() {
        let cost = vec![vec![3.0]];
        assert_eq!(hungarian(&cost), vec![Some(0)]);
    }

    #[test]
    fn two_by_two_prefers_swap() {
        let cost = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        let a = hungarian(&cost);
        assert_eq!(a, vec![Some(1), Some(0)]);
        assert_eq!(total(&cost, &a), 4.0);
    }

    #[test]
    fn rectangular_completes_smaller_dimension() {
        let cost = vec![vec![5.0, 1.0, 3.0], vec![2.0, 9.0, 9.0]];
        let a = hungarian(&cost);
        assert_eq!(a, vec![Some(1), Some(0)]);

        let tall = vec![vec![5.0, 1.0], vec![2.0, 9.0], vec![0.5, 0.6]];
        let a = hungarian(&tall);
        let assigned: Vec<_> = a.iter().flatten().collect();
        assert_eq!(assigned.len(), 2);
        assert_eq!(total(&tall, &a), brute_force_min_cost(&tall));
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut state = 0xfeedu64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64) / ((1u64 << 31) as f64)
        };
        for trial in 0..300 {
            let rows = 1 + (trial % 6);
            let cols = 1 + ((trial / 6) % 6);
            let cost: Vec<Vec<f64>> =
                (0..rows).map(|_| (0..cols).map(|_| next() * 10.0).collect()).collect();
            let a = hungarian(&cost);
            let got = total(&cost, &a);
            let want = brute_force_min_cost(&cost);
            assert!((got - want).abs() < 1e-9, "trial {trial}: {got} vs {want}");
            // One-to-one check.
            let mut seen = std::collections::HashSet::new();
            for c in a.iter().flatten() {
                assert!(seen.insert(*c));
            }
        }
    }
}
