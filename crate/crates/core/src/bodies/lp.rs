//! Phase-I simplex for "is x a convex combination of these points".

const EPS: f64 = 1e-11;

/// Returns true iff some `lambda >= 0` with `sum lambda = 1` and
/// `sum lambda_j v_j = x` exists.
pub fn in_convex_hull(points: &[Vec<f64>], x: &[f64]) -> bool {
    let m = points.len();
    let n = x.len();
    let rows = n + 1;
    // columns: m lambdas, rows artificials, rhs
    let cols = m + rows + 1;
    let mut t = vec![vec![0.0; cols]; rows];
    for i in 0..n {
        let sign = if x[i] < 0.0 { -1.0 } else { 1.0 };
        for (j, p) in points.iter().enumerate() {
            t[i][j] = sign * p[i];
        }
        t[i][m + i] = 1.0;
        t[i][cols - 1] = sign * x[i];
    }
    t[n][..m].fill(1.0);
    t[n][m + n] = 1.0;
    t[n][cols - 1] = 1.0;

    let mut basis: Vec<usize> = (0..rows).map(|i| m + i).collect();
    // reduced costs for min sum(artificials)
    let mut cost = vec![0.0; cols];
    for row in &t {
        for j in 0..cols {
            cost[j] -= row[j];
        }
    }
    for i in 0..rows {
        cost[m + i] = 0.0;
    }

    let scale = t.iter().map(|r| r[cols - 1].abs()).fold(1.0, f64::max);
    for _ in 0..10_000 {
        // Bland: first improving column
        let Some(enter) = (0..cols - 1).find(|&j| cost[j] < -EPS) else {
            break;
        };
        let mut leave = None;
        let mut best = f64::INFINITY;
        for i in 0..rows {
            let a = t[i][enter];
            if a > EPS {
                let ratio = t[i][cols - 1] / a;
                if ratio < best - EPS
                    || (ratio <= best + EPS && leave.is_some_and(|l: usize| basis[i] < basis[l]))
                {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(r) = leave else { break };
        let piv = t[r][enter];
        for v in t[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r {
                let f = row[enter];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        let f = cost[enter];
        for (c, pv) in cost.iter_mut().zip(&pivot_row) {
            *c -= f * pv;
        }
        basis[r] = enter;
    }
    let infeasibility: f64 = (0..rows)
        .filter(|&i| basis[i] >= m)
        .map(|i| t[i][cols - 1])
        .sum();
    infeasibility <= 1e-9 * scale
}
