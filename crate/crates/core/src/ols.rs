//! Ordinary least squares on basis-function design matrices.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::parallel::Workers;

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Row-major `M x (N+1)` matrix of basis evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    labels: Vec<String>,
}

impl DesignMatrix {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if labels.len() != cols {
            return Err(Error::LengthMismatch {
                expected: cols,
                got: labels.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            data,
            labels,
        })
    }

    /// Evaluates `basis` at each state of the flat `states` buffer
    /// (`dim` values per state).
    pub fn build(basis: &BasisSet, states: &[f64], dim: usize, workers: &Workers) -> Self {
        let cols = basis.len();
        let rows = states.len().checked_div(dim).unwrap_or(0);
        let chunks = workers.map(rows, |i| {
            let mut row = vec![0.0; cols];
            basis.eval_into(&states[i * dim..(i + 1) * dim], &mut row);
            row
        });
        Self {
            rows,
            cols,
            data: chunks.concat(),
            labels: basis.labels().to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn fitted(&self, beta: &Coefficients) -> Vec<f64> {
        (0..self.rows).map(|i| beta.dot(self.row(i))).collect()
    }
}

/// Regression coefficients, intercept first.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients(pub Vec<f64>);

impl Coefficients {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn dot(&self, phi: &[f64]) -> f64 {
        self.0.iter().zip(phi).map(|(b, p)| b * p).sum()
    }

    /// `self - other / (1 + eta)`, componentwise.
    pub fn coc_combine(&self, other: &Coefficients, eta: f64) -> Coefficients {
        Coefficients(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(r, e)| r - e / (1.0 + eta))
                .collect(),
        )
    }
}

/// Least-squares coefficients via Householder QR on unit-norm columns.
pub fn ols_fit(x: &DesignMatrix, y: &[f64]) -> Result<Coefficients> {
    let (m, p) = (x.rows, x.cols);
    if y.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: y.len() });
    }
    if m < p || p == 0 {
        return Err(Error::Underdetermined { rows: m, cols: p });
    }

    let mut norms = vec![0.0f64; p];
    for i in 0..m {
        for (n, v) in norms.iter_mut().zip(x.row(i)) {
            *n += v * v;
        }
    }
    for n in norms.iter_mut() {
        *n = n.sqrt();
    }
    let dead: Vec<String> = norms
        .iter()
        .enumerate()
        .filter(|(_, n)| !n.is_finite() || **n <= 0.0)
        .map(|(j, _)| x.labels[j].clone())
        .collect();
    if !dead.is_empty() {
        return Err(Error::RankDeficient {
            rank: p - dead.len(),
            cols: p,
            columns: dead,
        });
    }

    let scaled = DMatrix::from_fn(m, p, |i, j| x.data[i * p + j] / norms[j]);
    let qr = scaled.qr();
    let r = qr.r();

    let svd = r.clone().svd(false, true);
    let smax = svd.singular_values.max();
    let cutoff = RANK_TOLERANCE * smax;
    let small: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= cutoff)
        .map(|(k, _)| k)
        .collect();
    if !small.is_empty() {
        let v_t = svd.v_t.expect("right singular vectors requested");
        let mut involved = vec![false; p];
        for &k in &small {
            let row = v_t.row(k);
            let peak = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (j, v) in row.iter().enumerate() {
                if v.abs() > 0.01 * peak {
                    involved[j] = true;
                }
            }
        }
        return Err(Error::RankDeficient {
            rank: p - small.len(),
            cols: p,
            columns: involved
                .iter()
                .enumerate()
                .filter(|(_, b)| **b)
                .map(|(j, _)| x.labels[j].clone())
                .collect(),
        });
    }

    let mut qty = DVector::from_column_slice(y);
    qr.q_tr_mul(&mut qty);
    let head = qty.rows(0, p).into_owned();
    let sol = r
        .solve_upper_triangular(&head)
        .ok_or(Error::RankDeficient {
            rank: 0,
            cols: p,
            columns: vec![],
        })?;
    let beta: Vec<f64> = sol.iter().zip(&norms).map(|(b, n)| b / n).collect();
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite {
            t: 0,
            index: 0,
            what: "regression coefficient",
        });
    }
    Ok(Coefficients(beta))
}

/// `beta^T Phi(state)`.
pub fn predict(beta: &Coefficients, basis: &BasisSet, state: &[f64]) -> Result<f64> {
    if beta.len() != basis.len() {
        return Err(Error::LengthMismatch {
            expected: basis.len(),
            got: beta.len(),
        });
    }
    let mut phi = vec![0.0; basis.len()];
    basis.eval_into(state, &mut phi);
    Ok(beta.dot(&phi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(cols: &[&[f64]]) -> DesignMatrix {
        let rows = cols[0].len();
        let p = cols.len();
        let data = (0..rows).flat_map(|i| cols.iter().map(move |c| c[i])).collect();
        let labels = (0..p).map(|j| format!("c{j}")).collect();
        DesignMatrix::from_rows(rows, p, data, labels).unwrap()
    }

    #[test]
    fn exact_line() {
        let x = matrix(&[&[1.0; 4], &[0.0, 1.0, 2.0, 3.0]]);
        let y = [2.0, 5.0, 8.0, 11.0];
        let b = ols_fit(&x, &y).unwrap();
        assert!((b.0[0] - 2.0).abs() < 1e-13 && (b.0[1] - 3.0).abs() < 1e-13, "{b:?}");
    }

    #[test]
    fn orthogonal_target_gives_zero() {
        let x = matrix(&[&[1.0; 4], &[0.0, 1.0, 2.0, 3.0]]);
        let y = [1.0, -1.0, -1.0, 1.0];
        let b = ols_fit(&x, &y).unwrap();
        assert!(b.0.iter().all(|v| v.abs() < 1e-14), "{b:?}");
    }

    #[test]
    fn duplicated_column_is_named() {
        let x = matrix(&[&[1.0; 5], &[0.0, 1.0, 2.0, 3.0, 4.0], &[0.0, 1.0, 2.0, 3.0, 4.0]]);
        match ols_fit(&x, &[1.0; 5]) {
            Err(Error::RankDeficient { rank, columns, .. }) => {
                assert_eq!(rank, 2);
                assert_eq!(columns, vec!["c1".to_string(), "c2".to_string()]);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn zero_column_is_named() {
        let x = matrix(&[&[1.0; 4], &[0.0; 4]]);
        match ols_fit(&x, &[1.0; 4]) {
            Err(Error::RankDeficient { columns, .. }) => assert_eq!(columns, vec!["c1".to_string()]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn too_few_rows() {
        let x = matrix(&[&[1.0], &[2.0]]);
        assert!(matches!(ols_fit(&x, &[1.0]), Err(Error::Underdetermined { .. })));
    }

    #[test]
    fn residuals_are_orthogonal_and_intercept_reproduces_mean() {
        let m = 500;
        let xs: Vec<f64> = (0..m).map(|i| ((i * 7919) % 1000) as f64 / 100.0).collect();
        let x2: Vec<f64> = xs.iter().map(|v| v * v).collect();
        let y: Vec<f64> = xs.iter().map(|v| (v * 1.3).sin() * 4.0 + v).collect();
        let x = matrix(&[&vec![1.0; m], &xs, &x2]);
        let b = ols_fit(&x, &y).unwrap();
        let fitted = x.fitted(&b);
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, f)| a - f).collect();
        let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for j in 0..3 {
            let col: Vec<f64> = (0..m).map(|i| x.row(i)[j]).collect();
            let xnorm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            let g: f64 = col.iter().zip(&resid).map(|(a, r)| a * r).sum();
            assert!(g.abs() <= 1e-12 * ynorm * xnorm, "column {j}: {g}");
        }
        let mean_y = y.iter().sum::<f64>() / m as f64;
        let mean_fit = fitted.iter().sum::<f64>() / m as f64;
        assert!((mean_y - mean_fit).abs() < 1e-12 * (1.0 + mean_y.abs()));
    }

    #[test]
    fn rescaling_columns_leaves_fit_unchanged() {
        let m = 300;
        let xs: Vec<f64> = (0..m).map(|i| ((i * 131) % 300) as f64 / 30.0).collect();
        let y: Vec<f64> = xs.iter().map(|v| v.exp().ln_1p()).collect();
        let a = matrix(&[&vec![1.0; m], &xs, &xs.iter().map(|v| v * v).collect::<Vec<_>>()]);
        let b = matrix(&[
            &vec![7.0; m],
            &xs.iter().map(|v| v * 1e4).collect::<Vec<_>>(),
            &xs.iter().map(|v| v * v * 1e-3).collect::<Vec<_>>(),
        ]);
        let fa = a.fitted(&ols_fit(&a, &y).unwrap());
        let fb = b.fitted(&ols_fit(&b, &y).unwrap());
        for (u, v) in fa.iter().zip(&fb) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn noisy_line_within_sampling_error() {
        use crate::rng::{stream, Domain};
        use rand::Rng;
        use rand_distr::StandardNormal;
        let m = 10_000;
        let mut rng = stream(11, Domain::Test, 0, 0);
        let xs: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 10.0).collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|x| 2.0 + 3.0 * x + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let x = matrix(&[&vec![1.0; m], &xs]);
        let b = ols_fit(&x, &y).unwrap();
        // Classical OLS covariance sigma^2 (X^T X)^{-1} with sigma = 1.
        let n = m as f64;
        let sx: f64 = xs.iter().sum();
        let sxx: f64 = xs.iter().map(|v| v * v).sum();
        let det = n * sxx - sx * sx;
        let se0 = (sxx / det).sqrt();
        let se1 = (n / det).sqrt();
        assert!((b.0[0] - 2.0).abs() < 4.0 * se0, "{b:?}");
        assert!((b.0[1] - 3.0).abs() < 4.0 * se1, "{b:?}");
    }
}
