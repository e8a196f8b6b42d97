//! Least-squares helpers shared by the benchmark, SUR and determinant fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default bound on the condition number of a column-scaled design.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `(X'X)^{-1}` in the original column scaling.
    pub xtx_inverse: DMatrix<f64>,
    /// Condition number of X after scaling each column to unit norm.
    pub condition: f64,
}

impl LeastSquares {
    pub fn leverage(&self, row: &[f64]) -> f64 {
        quad_form(&self.xtx_inverse, row)
    }
}

pub fn quad_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let k = v.len();
    let mut acc = 0.0;
    for i in 0..k {
        if v[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..k {
            row += m[(i, j)] * v[j];
        }
        acc += v[i] * row;
    }
    acc
}

/// Scaled R factor of a Householder QR, its singular structure, and the
/// column norms used for scaling.
struct ScaledQr {
    qr: nalgebra::linalg::QR<f64, nalgebra::Dyn, nalgebra::Dyn>,
    r: DMatrix<f64>,
    norms: Vec<f64>,
    condition: f64,
    /// Right singular vector of the smallest singular value of R.
    null_direction: DVector<f64>,
}

fn scaled_qr(x: &DMatrix<f64>) -> ScaledQr {
    let (n, k) = x.shape();
    let norms: Vec<f64> = (0..k).map(|j| x.column(j).norm()).collect();
    let mut xs = x.clone();
    for (j, nj) in norms.iter().enumerate() {
        if *nj > 0.0 {
            xs.column_mut(j).scale_mut(1.0 / nj);
        }
    }
    let qr = xs.qr();
    let r = qr.r();
    let (condition, null_direction) = if norms.contains(&0.0) || n < k {
        let mut v = DVector::zeros(k);
        if let Some(j) = norms.iter().position(|v| *v == 0.0) {
            v[j] = 1.0;
        }
        (f64::INFINITY, v)
    } else {
        let svd = r.clone().svd(false, true);
        let sv = &svd.singular_values;
        let (imin, smin) = sv
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, s)| if *s < acc.1 { (i, *s) } else { acc });
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let vt = svd.v_t.expect("requested v_t");
        let dir = vt.row(imin).transpose();
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        (cond, dir)
    };
    ScaledQr {
        qr,
        r,
        norms,
        condition,
        null_direction,
    }
}

/// Condition number of `x` after scaling columns to unit norm, and the
/// indices of columns taking part in the weakest linear combination.
pub fn collinearity(x: &DMatrix<f64>) -> (f64, Vec<usize>) {
    let s = scaled_qr(x);
    let v = &s.null_direction;
    let vmax = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let cols = (0..v.len()).filter(|&j| v[j].abs() > 1e-6 * vmax.max(1e-300)).collect();
    (s.condition, cols)
}

/// Ordinary least squares through QR of the column-scaled design.
///
/// Fails with [`Error::SingularDesign`] when the scaled condition number
/// exceeds `max_condition` or there are not more rows than columns.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, max_condition: f64) -> Result<LeastSquares> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::Contract(format!("response has {} rows, design {n}", y.len())));
    }
    if n <= k {
        return Err(Error::SingularDesign {
            message: format!("{n} rows for {k} columns"),
            condition: f64::INFINITY,
        });
    }
    let s = scaled_qr(x);
    if !(s.condition <= max_condition) {
        return Err(Error::SingularDesign {
            message: format!("design with {k} columns is rank deficient"),
            condition: s.condition,
        });
    }
    let mut qty = y.clone();
    s.qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, k).into_owned();
    let scaled = s
        .r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let r_inv = s
        .r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Numerical("triangular inverse failed".into()))?;
    let mut xtx_inverse = &r_inv * r_inv.transpose();
    let mut coefficients = scaled;
    for j in 0..k {
        coefficients[j] /= s.norms[j];
        for i in 0..k {
            xtx_inverse[(i, j)] /= s.norms[i] * s.norms[j];
        }
    }
    let residuals = y - x * &coefficients;
    Ok(LeastSquares {
        coefficients,
        residuals,
        xtx_inverse,
        condition: s.condition,
    })
}

/// Unbiased sample variance; `None` below two observations.
pub fn sample_variance(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    Some(values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Pearson correlation of two equal-length slices.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_linear_fit() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let ls = least_squares(&x, &y, MAX_CONDITION).unwrap();
        assert!((ls.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((ls.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(ls.residuals.norm() < 1e-12);
        let direct = (x.transpose() * &x).try_inverse().unwrap();
        assert!((&ls.xtx_inverse - direct).norm() < 1e-12);
    }

    #[test]
    fn duplicated_column_is_singular() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 5.0, 5.0, 1.0, 0.5, 0.5]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            least_squares(&x, &y, MAX_CONDITION),
            Err(Error::SingularDesign { .. })
        ));
        let (cond, cols) = collinearity(&x);
        assert!(cond > 1e10);
        assert_eq!(cols, vec![1, 2]);
    }

    #[test]
    fn variance_and_correlation() {
        assert_eq!(sample_variance(&[1.0]), None);
        assert!((sample_variance(&[2.0, 1.0, 0.0, 1.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((correlation(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-15);
    }
}
