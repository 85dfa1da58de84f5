//! Derivative-free minimizer used as an independent reference for the
//! penalized solvers: a coarse grid over a box followed by a pattern search
//! over all 3^d - 1 sign directions plus fixed pseudo-random directions.

#![allow(dead_code)]

pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, dim: usize, half_width: f64, grid_steps: usize) -> Vec<f64> {
    let h = 2.0 * half_width / grid_steps as f64;
    let mut best = vec![0.0; dim];
    let mut best_val = f(&best);
    let mut idx = vec![0usize; dim];
    let mut point = vec![0.0; dim];
    loop {
        for (k, &i) in idx.iter().enumerate() {
            point[k] = -half_width + h * i as f64;
        }
        let v = f(&point);
        if v < best_val {
            best_val = v;
            best.copy_from_slice(&point);
        }
        let mut k = 0;
        while k < dim {
            idx[k] += 1;
            if idx[k] <= grid_steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == dim {
            break;
        }
    }
    pattern_search(&f, best, h)
}

fn directions(dim: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let total = 3usize.pow(dim as u32);
    for code in 0..total {
        let mut c = code;
        let d: Vec<f64> = (0..dim)
            .map(|_| {
                let v = (c % 3) as f64 - 1.0;
                c /= 3;
                v
            })
            .collect();
        if d.iter().any(|&v| v != 0.0) {
            out.push(d);
        }
    }
    // a fixed LCG keeps the extra directions reproducible
    let mut state: u64 = 0x2545_f491_4f6c_dd1d;
    for _ in 0..8 * dim {
        let d: Vec<f64> = (0..dim)
            .map(|_| {
                state = state.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407);
                (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect();
        out.push(d);
    }
    out
}

pub fn pattern_search<F: Fn(&[f64]) -> f64>(f: &F, start: Vec<f64>, step: f64) -> Vec<f64> {
    let dirs = directions(start.len());
    let mut x = start;
    let mut fx = f(&x);
    let mut step = step;
    let mut trial = x.clone();
    while step > 1e-11 {
        let mut improved = false;
        for d in &dirs {
            for (t, (xi, di)) in trial.iter_mut().zip(x.iter().zip(d)) {
                *t = xi + step * di;
            }
            let v = f(&trial);
            if v < fx {
                fx = v;
                x.copy_from_slice(&trial);
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    x
}

/// Mean negative log-likelihood plus `lambda * ||beta||_1`; `theta[0]` is
/// the intercept when `intercept` is set.
pub fn glm_objective(family: &str, x: &[Vec<f64>], y: &[f64], lambda: f64, intercept: bool, theta: &[f64]) -> f64 {
    let (b0, beta) = if intercept { (theta[0], &theta[1..]) } else { (0.0, theta) };
    let n = y.len() as f64;
    let mut loss = 0.0;
    for (row, &yi) in x.iter().zip(y) {
        let eta: f64 = b0 + row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
        loss += match family {
            "logistic" => (1.0 + eta.exp()).ln() - yi * eta,
            "poisson" => eta.exp() - yi * eta,
            "gaussian" => 0.5 * (yi - eta) * (yi - eta),
            _ => unreachable!(),
        };
    }
    loss / n + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// `||D(t - X beta)||_2 / sqrt(n) + lambda * sum_{j not exempt} |beta_j|`.
pub fn sqrt_objective(x: &[Vec<f64>], t: &[f64], d: &[f64], lambda: f64, exempt: &[usize], beta: &[f64]) -> f64 {
    let n = t.len() as f64;
    let ss: f64 = x
        .iter()
        .zip(t)
        .zip(d)
        .map(|((row, &ti), &di)| {
            let r = di * (ti - row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>());
            r * r
        })
        .sum();
    let pen: f64 = beta
        .iter()
        .enumerate()
        .filter(|(j, _)| !exempt.contains(j))
        .map(|(_, b)| b.abs())
        .sum();
    ss.sqrt() / n.sqrt() + lambda * pen
}
