//! Small dense linear-algebra helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector};

/// Thin SVD with singular values sorted in non-increasing order.
pub struct ThinSvd {
    /// `n x r`
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    /// `r x d`
    pub v_t: DMatrix<f64>,
}

impl ThinSvd {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let svd = m.clone().svd(true, true);
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v_t requested");
        let s = svd.singular_values;
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
        Self {
            u: u.select_columns(order.iter()),
            singular_values: DVector::from_iterator(order.len(), order.iter().map(|&i| s[i])),
            v_t: v_t.select_rows(order.iter()),
        }
    }

    /// Number of singular values above `rel_tol * s_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let s_max = self.singular_values.iter().cloned().fold(0.0, f64::max);
        if s_max == 0.0 {
            return 0;
        }
        self.singular_values
            .iter()
            .filter(|&&s| s > rel_tol * s_max)
            .count()
    }
}

/// Column means and the column-centered copy.
pub fn center_columns(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = m.nrows() as f64;
    let mean = DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n));
    let mut centered = m.clone();
    for (mut col, mu) in centered.column_iter_mut().zip(mean.iter()) {
        col.add_scalar_mut(-mu);
    }
    (centered, mean)
}

/// Subtracts `mean` from every row.
pub fn subtract_row(m: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut col, mu) in out.column_iter_mut().zip(mean.iter()) {
        col.add_scalar_mut(-mu);
    }
    out
}

/// Orthonormal basis of the column space of `m`, truncated at `rel_tol * s_max`.
pub fn column_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = ThinSvd::new(m);
    let r = svd.rank(rel_tol);
    svd.u.columns(0, r).into_owned()
}

/// Flips each row so that its largest-magnitude entry is positive
/// (ties resolved toward the lowest index).
pub fn fix_row_signs(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        if largest_entry_is_negative(m.row(i).iter().copied()) {
            m.row_mut(i).neg_mut();
        }
    }
}

/// Column analogue of [`fix_row_signs`].
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        if largest_entry_is_negative(m.column(j).iter().copied()) {
            m.column_mut(j).neg_mut();
        }
    }
}

fn largest_entry_is_negative(values: impl Iterator<Item = f64>) -> bool {
    let mut best = 0.0f64;
    for v in values {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    best < 0.0
}

/// Principal angles (radians, ascending) between the column spans of `a` and `b`.
///
/// Cosines and sines are both taken from SVDs and combined with `atan2`,
/// which keeps small angles accurate.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> Vec<f64> {
    let qa = column_basis(a, rel_tol);
    let qb = column_basis(b, rel_tol);
    let (qa, qb) = if qa.ncols() >= qb.ncols() { (qa, qb) } else { (qb, qa) };
    let p = qb.ncols();
    if p == 0 {
        return Vec::new();
    }
    let cross = qa.transpose() * &qb;
    let cos = ThinSvd::new(&cross).singular_values;
    let residual = &qb - &qa * &cross;
    let mut sin: Vec<f64> = ThinSvd::new(&residual).singular_values.iter().copied().collect();
    sin.resize(p, 0.0);
    sin.sort_by(|x, y| x.total_cmp(y));
    (0..p)
        .map(|i| {
            let c = cos.get(i).copied().unwrap_or(0.0).min(1.0);
            sin[i].atan2(c)
        })
        .collect()
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_is_sorted_and_reconstructs() {
        let m = DMatrix::from_row_slice(4, 3, &[1., 2., 0., 0., 1., 5., 3., 0., 1., 2., 2., 2.]);
        let svd = ThinSvd::new(&m);
        let s = &svd.singular_values;
        assert!(s.iter().zip(s.iter().skip(1)).all(|(a, b)| a >= b));
        let back = &svd.u * DMatrix::from_diagonal(s) * &svd.v_t;
        assert!((back - m).amax() < 1e-12);
    }

    #[test]
    fn angles_between_planes() {
        // span{e1, e2} vs span{e1, cos t e2 + sin t e3}
        let t = 0.3f64;
        let a = DMatrix::from_row_slice(3, 2, &[1., 0., 0., 1., 0., 0.]);
        let b = DMatrix::from_row_slice(3, 2, &[1., 0., 0., t.cos(), 0., t.sin()]);
        let ang = principal_angles(&a, &b, 1e-12);
        assert!(ang[0].abs() < 1e-12);
        assert!((ang[1] - t).abs() < 1e-12);
        let tiny = 1e-9f64;
        let c = DMatrix::from_row_slice(3, 2, &[1., 0., 0., tiny.cos(), 0., tiny.sin()]);
        let ang = principal_angles(&a, &c, 1e-12);
        assert!((ang[1] - tiny).abs() < 1e-15);
    }

    #[test]
    fn cosine_of_zero_is_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
        assert!((cosine(&[1.0, 0.0], &[-2.0, 0.0]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn sign_convention() {
        let mut m = DMatrix::from_row_slice(2, 3, &[0.1, -0.9, 0.2, 0.5, 0.1, -0.2]);
        fix_row_signs(&mut m);
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![-0.1, 0.9, -0.2]);
        assert_eq!(m[(1, 0)], 0.5);
    }
}
