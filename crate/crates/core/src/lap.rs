//! Dense linear assignment.
//!
//! [`solve_lap`] runs the shortest-augmenting-path Hungarian method, then
//! walks the equality subgraph of the optimal dual to pick the
//! lexicographically smallest optimal permutation, so that ties resolve the
//! same way every time.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const BRUTEFORCE_MAX_N: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `perm[i]` is the column assigned to row `i`.
    pub perm: Vec<usize>,
    pub cost: f64,
}

fn validate(cost: &DMatrix<f64>) -> Result<()> {
    if cost.nrows() != cost.ncols() {
        return Err(Error::Validation(format!(
            "cost matrix must be square, got {}x{}",
            cost.nrows(),
            cost.ncols()
        )));
    }
    if cost.nrows() == 0 {
        return Err(Error::Validation("cost matrix is empty".into()));
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("cost matrix is not finite".into()));
    }
    Ok(())
}

fn tie_tolerance(cost: &DMatrix<f64>) -> f64 {
    1e-9 * cost.amax().max(1.0)
}

pub fn assignment_cost(cost: &DMatrix<f64>, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum()
}

pub fn solve_lap(cost: &DMatrix<f64>) -> Result<Assignment> {
    validate(cost)?;
    let n = cost.nrows();
    let (mut perm, u, v) = hungarian(cost);
    let tol = tie_tolerance(cost);
    let tight = |i: usize, j: usize| (cost[(i, j)] - u[i + 1] - v[j + 1]).abs() <= tol;
    lexicographic_refine(n, &mut perm, tight);
    let cost_value = assignment_cost(cost, &perm);
    Ok(Assignment {
        perm,
        cost: cost_value,
    })
}

/// Returns the row-to-column assignment and the dual potentials `u` (rows)
/// and `v` (columns), both 1-indexed with a sentinel at 0.
fn hungarian(a: &DMatrix<f64>) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // owner[j]: row (1-based) matched to column j, 0 if free
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1, j - 1)] - u[i0] - v[j];
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
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    (perm, u, v)
}

/// Rewrites a perfect matching of the tight graph into the lexicographically
/// smallest one. Row `i` is settled in turn by trying each smaller tight
/// column and repairing the rest of the matching with an alternating path
/// over the unsettled rows.
fn lexicographic_refine(n: usize, perm: &mut [usize], tight: impl Fn(usize, usize) -> bool) {
    let mut owner = vec![0usize; n];
    for (i, &j) in perm.iter().enumerate() {
        owner[j] = i;
    }
    let mut fixed_col = vec![false; n];
    for i in 0..n {
        let current = perm[i];
        for c in 0..current {
            if fixed_col[c] || !tight(i, c) {
                continue;
            }
            let displaced = owner[c];
            let mut visited = vec![false; n];
            visited[c] = true;
            let mut path = Vec::new();
            if augment(displaced, current, i, &tight, perm, &owner, &fixed_col, &mut visited, &mut path) {
                // path holds (row, new column) pairs
                for &(r, col) in &path {
                    perm[r] = col;
                    owner[col] = r;
                }
                perm[i] = c;
                owner[c] = i;
                break;
            }
        }
        fixed_col[perm[i]] = true;
    }
}

#[allow(clippy::too_many_arguments)]
fn augment(
    row: usize,
    target: usize,
    settled: usize,
    tight: &impl Fn(usize, usize) -> bool,
    perm: &[usize],
    owner: &[usize],
    fixed_col: &[bool],
    visited: &mut [bool],
    path: &mut Vec<(usize, usize)>,
) -> bool {
    for col in 0..perm.len() {
        if visited[col] || fixed_col[col] || !tight(row, col) {
            continue;
        }
        visited[col] = true;
        if col == target {
            path.push((row, col));
            return true;
        }
        let next = owner[col];
        if next == settled {
            continue;
        }
        path.push((row, col));
        if augment(next, target, settled, tight, perm, owner, fixed_col, visited, path) {
            return true;
        }
        path.pop();
    }
    false
}

/// Exhaustive minimum over all `n!` permutations, ties to the
/// lexicographically smallest permutation.
pub fn lap_bruteforce(cost: &DMatrix<f64>) -> Result<Assignment> {
    validate(cost)?;
    let n = cost.nrows();
    if n > BRUTEFORCE_MAX_N {
        return Err(Error::Size(format!(
            "brute-force assignment supports n <= {BRUTEFORCE_MAX_N}, got {n}"
        )));
    }
    let tol = tie_tolerance(cost);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut all = Vec::new();
    loop {
        all.push((assignment_cost(cost, &perm), perm.clone()));
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let min = all.iter().map(|(c, _)| *c).fold(f64::INFINITY, f64::min);
    let (c, p) = all
        .into_iter()
        .find(|(c, _)| *c <= min + tol)
        .expect("at least one permutation");
    Ok(Assignment { perm: p, cost: c })
}

/// Advances to the next permutation in lexicographic order.
pub fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> DMatrix<f64> {
        let n = rows.len();
        DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn two_by_two() {
        let c = m(&[&[1.0, 2.0], &[3.0, 1.0]]);
        let a = solve_lap(&c).unwrap();
        assert_eq!(a.perm, vec![0, 1]);
        assert_eq!(a.cost, 2.0);
        assert_eq!(lap_bruteforce(&c).unwrap().cost, 2.0);
    }

    #[test]
    fn zero_matrix_breaks_ties_lexicographically() {
        let a = solve_lap(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(a.perm, vec![0, 1, 2]);
        assert_eq!(a.cost, 0.0);
    }

    #[test]
    fn zero_diagonal_is_optimal() {
        let c = DMatrix::from_element(3, 3, 1.0) - DMatrix::identity(3, 3);
        let a = solve_lap(&c).unwrap();
        assert_eq!(a.perm, vec![0, 1, 2]);
        assert_eq!(a.cost, 0.0);
        // minimizing the identity avoids the diagonal
        let a = solve_lap(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(a.cost, 0.0);
        assert!(a.perm.iter().enumerate().all(|(i, &j)| i != j));
        assert_eq!(a.perm, vec![1, 2, 0]);
    }

    #[test]
    fn singleton() {
        let c = m(&[&[4.0]]);
        assert_eq!(lap_bruteforce(&c).unwrap().perm, vec![0]);
        assert_eq!(solve_lap(&c).unwrap().perm, vec![0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(solve_lap(&DMatrix::zeros(2, 3)).is_err());
        let mut c = DMatrix::zeros(2, 2);
        c[(0, 1)] = f64::NAN;
        assert!(solve_lap(&c).is_err());
        assert!(matches!(
            lap_bruteforce(&DMatrix::zeros(10, 10)),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn ties_on_block_structure() {
        // every permutation within the first two rows costs the same
        let c = m(&[&[1.0, 1.0, 5.0], &[1.0, 1.0, 5.0], &[5.0, 5.0, 0.0]]);
        assert_eq!(solve_lap(&c).unwrap().perm, vec![0, 1, 2]);
        let c = m(&[&[0.0, 0.0, 0.0], &[0.0, 9.0, 0.0], &[0.0, 0.0, 9.0]]);
        assert_eq!(solve_lap(&c).unwrap(), lap_bruteforce(&c).unwrap());
    }

    fn matrix_strategy(max_n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        (1..=max_n).prop_flat_map(|n| {
            prop::collection::vec(-10.0f64..10.0, n * n)
                .prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
        })
    }

    fn integer_matrix(max_n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        (1..=max_n).prop_flat_map(|n| {
            prop::collection::vec(0i32..3, n * n).prop_map(move |v| {
                DMatrix::from_row_slice(n, n, &v.iter().map(|&x| x as f64).collect::<Vec<_>>())
            })
        })
    }

    proptest! {
        #[test]
        fn matches_bruteforce(c in matrix_strategy(7)) {
            let a = solve_lap(&c).unwrap();
            let b = lap_bruteforce(&c).unwrap();
            prop_assert!((a.cost - b.cost).abs() < 1e-9);
        }

        #[test]
        fn tie_break_matches_bruteforce(c in integer_matrix(6)) {
            prop_assert_eq!(solve_lap(&c).unwrap().perm, lap_bruteforce(&c).unwrap().perm);
        }

        #[test]
        fn output_is_a_bijection(c in matrix_strategy(12)) {
            let a = solve_lap(&c).unwrap();
            let mut seen = vec![false; c.nrows()];
            for &j in &a.perm {
                prop_assert!(!seen[j]);
                seen[j] = true;
            }
        }

        #[test]
        fn row_shift_changes_cost_only(c in matrix_strategy(6), row in 0usize..6, shift in -5.0f64..5.0) {
            let row = row % c.nrows();
            let mut shifted = c.clone();
            for j in 0..c.ncols() {
                shifted[(row, j)] += shift;
            }
            let a = lap_bruteforce(&c).unwrap();
            let b = lap_bruteforce(&shifted).unwrap();
            prop_assert!((b.cost - a.cost - shift).abs() < 1e-9);
            prop_assert_eq!(a.perm, b.perm);
        }
    }
}
