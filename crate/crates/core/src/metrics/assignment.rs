//! Maximum-weight bipartite assignment (Kuhn–Munkres with potentials).

/// Row-to-column assignment maximizing the total weight of a dense
/// `rows × cols` matrix. Returns `result[row] = Some(col)` for matched rows;
/// with more rows than columns some rows stay unmatched.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let n_rows = weights.len();
    let n_cols = weights.first().map_or(0, Vec::len);
    if n_rows == 0 || n_cols == 0 {
        return vec![None; n_rows];
    }
    // square cost matrix, padded with zero-weight dummies
    let n = n_rows.max(n_cols);
    let cost = |i: usize, j: usize| -> f64 {
        if i < n_rows && j < n_cols {
            -weights[i][j]
        } else {
            0.0
        }
    };

    // 1-based arrays; index 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
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

    let mut result = vec![None; n_rows];
    for j in 1..=n {
        let i = owner[j];
        if i >= 1 && i <= n_rows && j <= n_cols {
            result[i - 1] = Some(j - 1);
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn total(weights: &[Vec<f64>], assignment: &[Option<usize>]) -> f64 {
        assignment
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| weights[i][j]))
            .sum()
    }

    /// Exhaustive search over injective row→column maps.
    fn brute_force(weights: &[Vec<f64>]) -> f64 {
        fn go(weights: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == weights.len() {
                return 0.0;
            }
            let mut best = go(weights, row + 1, used);
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.max(weights[row][j] + go(weights, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        let cols = weights.first().map_or(0, Vec::len);
        go(weights, 0, &mut vec![false; cols])
    }

    #[test]
    fn small_cases() {
        let w = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(max_weight_assignment(&w), vec![Some(0), Some(1)]);
        let w = vec![vec![0.2, 0.9], vec![0.8, 0.7]];
        assert_eq!(max_weight_assignment(&w), vec![Some(1), Some(0)]);
        let w = vec![vec![0.5], vec![0.9]];
        assert_eq!(max_weight_assignment(&w), vec![None, Some(0)]);
        assert!(max_weight_assignment(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in proptest::collection::vec(0.0f64..1.0, 36),
        ) {
            let w: Vec<Vec<f64>> = (0..rows)
                .map(|i| (0..cols).map(|j| seed[i * 6 + j]).collect())
                .collect();
            let a = max_weight_assignment(&w);
            let cols_used: Vec<usize> = a.iter().flatten().copied().collect();
            let distinct: std::collections::HashSet<_> = cols_used.iter().collect();
            prop_assert_eq!(distinct.len(), cols_used.len());
            prop_assert!((total(&w, &a) - brute_force(&w)).abs() < 1e-9);
        }
    }
}
