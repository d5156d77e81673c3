//! L2-regularized binary logistic regression fitted by damped Newton.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UneError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub l2_lambda: f64,
    pub max_iters: usize,
    /// Stop once the full gradient (weights and bias) has 2-norm at most this.
    pub grad_tol: f64,
}

impl LogisticConfig {
    pub fn new(l2_lambda: f64) -> Self {
        Self {
            l2_lambda,
            max_iters: 100,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub w: DVector<f64>,
    pub b: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn check_inputs(x: &DMatrix<f64>, y: &[u8]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(UneError::Alignment(format!(
            "{} feature rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    Ok(())
}

/// Mean logistic loss plus `(lambda / 2) * ||w||²`; the bias is not penalized.
pub fn logistic_objective(x: &DMatrix<f64>, y: &[u8], lambda: f64, w: &DVector<f64>, b: f64) -> f64 {
    let margins = x * w;
    let n = y.len() as f64;
    let loss: f64 = margins
        .iter()
        .zip(y)
        .map(|(&m, &yi)| {
            let s = if yi == 1 { 1.0 } else { -1.0 };
            softplus(-s * (m + b))
        })
        .sum();
    loss / n + 0.5 * lambda * w.norm_squared()
}

/// Gradient of [`logistic_objective`] with respect to `(w, b)`.
pub fn logistic_gradient(
    x: &DMatrix<f64>,
    y: &[u8],
    lambda: f64,
    w: &DVector<f64>,
    b: f64,
) -> (DVector<f64>, f64) {
    let n = y.len() as f64;
    let r = residuals(x, y, w, b);
    let gw = x.tr_mul(&r) / n + w * lambda;
    (gw, r.sum() / n)
}

/// `sigmoid(xw + b) - y`
fn residuals(x: &DMatrix<f64>, y: &[u8], w: &DVector<f64>, b: f64) -> DVector<f64> {
    let mut r = x * w;
    for (ri, &yi) in r.iter_mut().zip(y) {
        *ri = sigmoid(*ri + b) - yi as f64;
    }
    r
}

pub fn fit_logistic(x: &DMatrix<f64>, y: &[u8], cfg: &LogisticConfig) -> Result<LogisticFit> {
    check_inputs(x, y)?;
    if !(cfg.l2_lambda > 0.0) {
        return Err(UneError::Config(format!(
            "l2_lambda must be positive, got {}",
            cfg.l2_lambda
        )));
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(UneError::DegenerateLabels(
            "logistic regression needs both classes".into(),
        ));
    }
    let (n, k) = x.shape();
    let nf = n as f64;
    let lambda = cfg.l2_lambda;
    let mut w = DVector::zeros(k);
    // start at the intercept-only optimum
    let p0 = positives as f64 / nf;
    let mut b = (p0 / (1.0 - p0)).ln();
    let mut f = logistic_objective(x, y, lambda, &w, b);
    let mut iterations = 0;
    let mut grad_norm;
    loop {
        let (gw, gb) = logistic_gradient(x, y, lambda, &w, b);
        grad_norm = (gw.norm_squared() + gb * gb).sqrt();
        if grad_norm <= cfg.grad_tol || iterations >= cfg.max_iters {
            break;
        }
        iterations += 1;

        // Hessian of the augmented parameter vector [w; b].
        let mut margins = x * &w;
        margins.add_scalar_mut(b);
        let d = margins.map(|m| {
            let p = sigmoid(m);
            p * (1.0 - p) / nf
        });
        let mut xd = x.clone();
        for (mut row, di) in xd.row_iter_mut().zip(d.iter()) {
            row *= *di;
        }
        let mut h = DMatrix::zeros(k + 1, k + 1);
        h.view_mut((0, 0), (k, k)).copy_from(&(x.tr_mul(&xd)));
        for j in 0..k {
            h[(j, j)] += lambda;
        }
        let hb: DVector<f64> = xd.row_sum().transpose();
        h.view_mut((0, k), (k, 1)).copy_from(&hb);
        h.view_mut((k, 0), (1, k)).copy_from(&hb.transpose());
        h[(k, k)] = d.sum() + 1e-12;
        let mut g = DVector::zeros(k + 1);
        g.rows_mut(0, k).copy_from(&gw);
        g[k] = gb;

        let step = match h.cholesky() {
            Some(ch) => ch.solve(&g),
            None => g.clone(),
        };
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let w_new = &w - step.rows(0, k) * t;
            let b_new = b - step[k] * t;
            let f_new = logistic_objective(x, y, lambda, &w_new, b_new);
            if f_new <= f - 1e-4 * t * slope {
                w = w_new;
                b = b_new;
                f = f_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no further decrease is representable
            let (gw, gb) = logistic_gradient(x, y, lambda, &w, b);
            grad_norm = (gw.norm_squared() + gb * gb).sqrt();
            break;
        }
    }
    Ok(LogisticFit {
        w,
        b,
        grad_norm,
        iterations,
        converged: grad_norm <= cfg.grad_tol,
    })
}
