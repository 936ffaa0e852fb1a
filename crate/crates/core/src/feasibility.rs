//! Retrospective feasibility of an expert pool.
//!
//! Given the matrix of per-round expert miss indicators, the diagnostic
//! reports how far the pool was from containing a fixed mixture meeting the
//! coverage target: rho = max(min_u max_t <e_t, u> - alpha, 0), the minimax
//! running over the probability simplex. rho = 0 means some fixed mixture
//! of the experts would have kept every round's weighted miss rate at or
//! below alpha; a positive rho lower-bounds the excess any aggregator must
//! absorb.
//!
//! For up to three experts the inner minimax is solved exactly by
//! enumerating the candidate minimizers of a piecewise-linear convex
//! function over a low-dimensional simplex (vertices, pairwise
//! piece-equality points on edges, triple-equality interior points). Larger
//! pools fall back to projected subgradient descent with iterate averaging,
//! which is accurate to diagnostic precision.

/// Feasibility gap and a witness mixture attaining it.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    /// max(min_u max_t <e_t, u> - alpha, 0).
    pub rho: f64,
    /// Mixture achieving the inner minimax value.
    pub witness: Vec<f64>,
}

/// Computes the feasibility gap of a pool from its miss-indicator history.
/// Rows are rounds, columns are experts.
pub fn feasibility_diagnostic(errs: &[Vec<bool>], alpha: f64) -> FeasibilityReport {
    let rows = distinct_rows(errs);
    if rows.is_empty() {
        return FeasibilityReport {
            rho: 0.0,
            witness: Vec::new(),
        };
    }
    let k = rows[0].len();
    let (value, witness) = if k <= 3 {
        exact_minimax(&rows, k)
    } else {
        subgradient_minimax(&rows, k)
    };
    FeasibilityReport {
        rho: (value - alpha).max(0.0),
        witness,
    }
}

/// Binary rows repeat heavily; only distinct ones matter for the max.
fn distinct_rows(errs: &[Vec<bool>]) -> Vec<Vec<f64>> {
    let mut seen: Vec<Vec<bool>> = Vec::new();
    for row in errs {
        if !row.is_empty() && !seen.contains(row) {
            seen.push(row.clone());
        }
    }
    seen.iter()
        .map(|r| r.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn value_at(rows: &[Vec<f64>], u: &[f64]) -> f64 {
    rows.iter()
        .map(|row| row.iter().zip(u).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Exact minimizer of max_t <e_t, u> over the simplex for K <= 3.
fn exact_minimax(rows: &[Vec<f64>], k: usize) -> (f64, Vec<f64>) {
    let mut best_val = f64::INFINITY;
    let mut best_u = vec![0.0; k];
    let mut consider = |u: &[f64]| {
        if u.iter().any(|&x| !(-1e-12..=1.0 + 1e-12).contains(&x)) {
            return;
        }
        let mut u = u.to_vec();
        for x in &mut u {
            *x = x.clamp(0.0, 1.0);
        }
        let s: f64 = u.iter().sum();
        for x in &mut u {
            *x /= s;
        }
        let v = value_at(rows, &u);
        if v < best_val {
            best_val = v;
            best_u = u;
        }
    };

    // simplex vertices
    for i in 0..k {
        let mut u = vec![0.0; k];
        u[i] = 1.0;
        consider(&u);
    }

    // edges: minimize along u = (1 - s) e_i + s e_j; the minimum of a 1-D
    // piecewise-linear convex function sits at an endpoint or where two
    // pieces cross
    for i in 0..k {
        for j in (i + 1)..k {
            for a in 0..rows.len() {
                for b in (a + 1)..rows.len() {
                    let ca = rows[a][i] - rows[a][j];
                    let cb = rows[b][i] - rows[b][j];
                    // <e_a, u(s)> = e_a[i] + s (e_a[j] - e_a[i]); equate with e_b
                    let denom = ca - cb;
                    if denom.abs() < 1e-15 {
                        continue;
                    }
                    let s = (rows[a][i] - rows[b][i]) / denom;
                    if (0.0..=1.0).contains(&s) {
                        let mut u = vec![0.0; k];
                        u[i] = 1.0 - s;
                        u[j] = s;
                        consider(&u);
                    }
                }
            }
        }
    }

    // interior: triple-equality points <e_a, u> = <e_b, u> = <e_c, u>,
    // sum u = 1 (only meaningful for k = 3)
    if k == 3 {
        for a in 0..rows.len() {
            for b in (a + 1)..rows.len() {
                for c in (b + 1)..rows.len() {
                    let m = [
                        [
                            rows[a][0] - rows[b][0],
                            rows[a][1] - rows[b][1],
                            rows[a][2] - rows[b][2],
                        ],
                        [
                            rows[a][0] - rows[c][0],
                            rows[a][1] - rows[c][1],
                            rows[a][2] - rows[c][2],
                        ],
                        [1.0, 1.0, 1.0],
                    ];
                    if let Some(u) = solve3(m, [0.0, 0.0, 1.0]) {
                        consider(&u);
                    }
                }
            }
        }
    }

    (best_val, best_u)
}

/// Cramer's-rule solve of a 3x3 system; `None` when near-singular (those
/// candidates are already covered by lower-dimensional faces).
fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    if d.abs() < 1e-12 {
        return None;
    }
    let mut out = [0.0; 3];
    for col in 0..3 {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = b[row];
        }
        out[col] = det(&mc) / d;
    }
    Some(out)
}

const SUBGRADIENT_ITERS: usize = 10_000;

/// Projected subgradient descent with iterate averaging and best-iterate
/// tracking; diagnostic-grade accuracy for pools of more than three experts.
fn subgradient_minimax(rows: &[Vec<f64>], k: usize) -> (f64, Vec<f64>) {
    let mut u = vec![1.0 / k as f64; k];
    let mut avg = vec![0.0; k];
    let mut best_val = value_at(rows, &u);
    let mut best_u = u.clone();
    let step0 = (2.0 / k as f64).sqrt();
    for iter in 0..SUBGRADIENT_ITERS {
        let active = rows
            .iter()
            .max_by(|a, b| {
                let va: f64 = a.iter().zip(&u).map(|(x, y)| x * y).sum();
                let vb: f64 = b.iter().zip(&u).map(|(x, y)| x * y).sum();
                va.partial_cmp(&vb).unwrap()
            })
            .unwrap();
        let step = step0 / ((iter + 1) as f64).sqrt();
        for (x, g) in u.iter_mut().zip(active) {
            *x -= step * g;
        }
        project_to_simplex(&mut u);
        for (a, &x) in avg.iter_mut().zip(&u) {
            *a += x;
        }
        let v = value_at(rows, &u);
        if v < best_val {
            best_val = v;
            best_u = u.clone();
        }
    }
    for a in &mut avg {
        *a /= SUBGRADIENT_ITERS as f64;
    }
    let avg_val = value_at(rows, &avg);
    if avg_val < best_val {
        (avg_val, avg)
    } else {
        (best_val, best_u)
    }
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_to_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        cum += x;
        let candidate = (cum - 1.0) / (i + 1) as f64;
        if x - candidate > 0.0 {
            theta = candidate;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}
