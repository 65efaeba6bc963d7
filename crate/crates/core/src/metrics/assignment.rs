//! Minimum-cost one-to-one matching between two small sets.

/// Largest side handled by exhaustive search; bigger problems go to the
/// Hungarian solver.
pub const EXHAUSTIVE_LIMIT: usize = 6;

/// Optimal matching of rows to columns of `cost` (rows x cols). Returns
/// `min(rows, cols)` pairs `(row, col)` sorted by row.
pub fn min_cost_matching(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows.max(cols) <= EXHAUSTIVE_LIMIT {
        brute_force(cost)
    } else {
        hungarian(cost)
    }
}

/// Exhaustive search over all injective maps from the smaller side.
pub fn brute_force(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    let transpose = rows > cols;
    let (small, large) = if transpose { (cols, rows) } else { (rows, cols) };
    let at = |s: usize, l: usize| if transpose { cost[l][s] } else { cost[s][l] };

    fn search(
        s: usize,
        small: usize,
        large: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<usize>,
        acc: f64,
        best: &mut (f64, Vec<usize>),
        at: &dyn Fn(usize, usize) -> f64,
    ) {
        if acc >= best.0 {
            return;
        }
        if s == small {
            *best = (acc, cur.clone());
            return;
        }
        for l in 0..large {
            if !used[l] {
                used[l] = true;
                cur.push(l);
                search(s + 1, small, large, used, cur, acc + at(s, l), best, at);
                cur.pop();
                used[l] = false;
            }
        }
    }

    let mut best = (f64::INFINITY, Vec::new());
    search(0, small, large, &mut vec![false; large], &mut Vec::new(), 0.0, &mut best, &at);
    let mut pairs: Vec<(usize, usize)> = best
        .1
        .iter()
        .enumerate()
        .map(|(s, &l)| if transpose { (l, s) } else { (s, l) })
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Hungarian algorithm (potentials form) on the zero-padded square matrix.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    let c = |i: usize, j: usize| if i < rows && j < cols { cost[i][j] } else { 0.0 };
    // 1-based arrays; p[j] is the row matched to column j
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter(|&j| p[j] != 0 && p[j] - 1 < rows && j - 1 < cols)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

pub fn total_cost(cost: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| cost[i][j]).sum()
}
