//! Levenberg-Marquardt with a central-difference Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Sum of squared residuals at `params`.
    pub sse: f64,
    pub iterations: usize,
}

fn sse(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimizes `sum(residuals(p)^2)` over the parameters with `free[i]` set.
///
/// `residuals` returns `None` where the model is undefined; such steps are
/// rejected. Never returns a point worse than `start`.
pub fn levenberg_marquardt<F>(residuals: F, start: &[f64], free: &[bool], max_iter: usize) -> LmOutcome
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let mut p = start.to_vec();
    let Some(mut r) = residuals(&p) else {
        return LmOutcome {
            params: p,
            sse: f64::INFINITY,
            iterations: 0,
        };
    };
    let mut cost = sse(&r);
    let idx: Vec<usize> = (0..p.len()).filter(|&i| free[i]).collect();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    if idx.is_empty() {
        return LmOutcome {
            params: p,
            sse: cost,
            iterations,
        };
    }
    while iterations < max_iter && cost > 0.0 {
        iterations += 1;
        let m = r.len();
        let mut jac = DMatrix::<f64>::zeros(m, idx.len());
        let mut ok = true;
        for (c, &i) in idx.iter().enumerate() {
            let h = 1e-6 * p[i].abs().max(1e-3);
            let mut up = p.clone();
            up[i] += h;
            let mut dn = p.clone();
            dn[i] -= h;
            match (residuals(&up), residuals(&dn)) {
                (Some(a), Some(b)) => {
                    for row in 0..m {
                        jac[(row, c)] = (a[row] - b[row]) / (2.0 * h);
                    }
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * rv;
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for d in 0..idx.len() {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&jtr),
                None => match a.svd(true, true).solve(&jtr, 1e-14) {
                    Ok(s) => s,
                    Err(_) => break,
                },
            };
            let mut trial = p.clone();
            for (c, &i) in idx.iter().enumerate() {
                trial[i] -= step[c];
            }
            if let Some(rt) = residuals(&trial) {
                let ct = sse(&rt);
                if ct.is_finite() && ct < cost {
                    let rel = (cost - ct) / cost;
                    p = trial;
                    r = rt;
                    cost = ct;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = rel > 1e-15;
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    LmOutcome {
        params: p,
        sse: cost,
        iterations,
    }
}
