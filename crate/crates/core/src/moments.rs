//! Centered second and fourth moments and the constants of the MSE model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Dataset;

/// Relative floor on σ4 − σ⁴ below which the kurtosis is treated as degenerate.
pub const KURTOSIS_FLOOR: f64 = 1e-12;

/// The scalar functionals c1..c4 of the moment arrays.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

/// Constants entering the BLB tuner objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TildeConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// Moment arrays of a p-dimensional sample (divisor N) and their c-constants.
///
/// `sigma[j*p+k]` is E(X_j − μ_j)(X_k − μ_k); `sigma2[j*p+k]` is
/// E(X_j − μ_j)²(X_k − μ_k)², so its diagonal holds the fourth moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentConstants {
    pub p: usize,
    pub sigma: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub c: CConstants,
}

impl MomentConstants {
    pub fn from_arrays(p: usize, sigma: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        if p == 0 || sigma.len() != p * p || sigma2.len() != p * p {
            return Err(Error::InvalidShape(format!("moment arrays must be {p}x{p}")));
        }
        let c = mse_constants(p, &sigma, &sigma2);
        Ok(Self { p, sigma, sigma2, c })
    }

    /// Univariate moments σ² and σ4.
    pub fn univariate(sigma_sq: f64, sigma4: f64) -> Self {
        Self::from_arrays(1, vec![sigma_sq], vec![sigma4]).expect("1x1 arrays")
    }

    /// σ² (first coordinate).
    pub fn sigma_sq(&self) -> f64 {
        self.sigma[0]
    }

    /// σ4 (first coordinate).
    pub fn sigma4(&self) -> f64 {
        self.sigma2[0]
    }

    /// Constants for the BLB objective: the normalized univariate form when
    /// p = 1, the raw (c1, c2, c3) otherwise.
    pub fn tuner_constants(&self) -> Result<TildeConstants> {
        if self.p == 1 {
            univariate_tilde_constants(self.sigma_sq(), self.sigma4())
        } else {
            Ok(TildeConstants { c1: self.c.c1, c2: self.c.c2, c3: self.c.c3 })
        }
    }

    /// (c1', c2') for the SB/SDB objective.
    pub fn sb_constants(&self) -> (f64, f64) {
        (self.c.c1, self.c.c3)
    }
}

/// Covariance matrix with divisor N, row-major p×p.
pub fn covariance(data: &Dataset) -> Vec<f64> {
    let p = data.n_cols();
    let mean = column_means(data);
    let mut cov = vec![0.0; p * p];
    let mut dev = vec![0.0; p];
    for i in 0..data.n_rows() {
        for ((d, x), m) in dev.iter_mut().zip(data.row(i)).zip(&mean) {
            *d = x - m;
        }
        for j in 0..p {
            for k in j..p {
                cov[j * p + k] += dev[j] * dev[k];
            }
        }
    }
    finish_symmetric(&mut cov, p, data.n_rows() as f64);
    cov
}

fn column_means(data: &Dataset) -> Vec<f64> {
    let p = data.n_cols();
    let mut mean = vec![0.0; p];
    for i in 0..data.n_rows() {
        for (m, x) in mean.iter_mut().zip(data.row(i)) {
            *m += x;
        }
    }
    let n = data.n_rows() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn finish_symmetric(m: &mut [f64], p: usize, n: f64) {
    for j in 0..p {
        for k in j..p {
            m[j * p + k] /= n;
            m[k * p + j] = m[j * p + k];
        }
    }
}

/// All centered second and fourth moments of `data`, plus c1..c4.
pub fn central_moments(data: &Dataset) -> Result<MomentConstants> {
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let p = data.n_cols();
    let mean = column_means(data);
    let mut sigma = vec![0.0; p * p];
    let mut sigma2 = vec![0.0; p * p];
    let mut dev = vec![0.0; p];
    for i in 0..n {
        for ((d, x), m) in dev.iter_mut().zip(data.row(i)).zip(&mean) {
            *d = x - m;
        }
        for j in 0..p {
            for k in j..p {
                let prod = dev[j] * dev[k];
                sigma[j * p + k] += prod;
                sigma2[j * p + k] += prod * prod;
            }
        }
    }
    finish_symmetric(&mut sigma, p, n as f64);
    finish_symmetric(&mut sigma2, p, n as f64);
    MomentConstants::from_arrays(p, sigma, sigma2)
}

/// c1..c4 from the moment arrays. At p = 1 these are 2σ⁴, σ4 − σ⁴, σ⁴ and 0.
pub fn mse_constants(p: usize, sigma: &[f64], sigma2: &[f64]) -> CConstants {
    let (mut c1, mut c2, mut c3, mut c4) = (0.0, 0.0, 0.0, 0.0);
    for j in 0..p {
        let s = sigma[j * p + j];
        c1 += 2.0 * s * s;
        c2 += sigma2[j * p + j] - s * s;
        c3 += s * s;
        for k in (0..p).filter(|&k| k != j) {
            let cross = sigma[j * p + k];
            let diag_prod = s * sigma[k * p + k];
            c1 += diag_prod + cross * cross;
            c2 += sigma2[j * p + k] + cross * cross;
            c3 += cross * cross;
            c4 += sigma2[j * p + k] - diag_prod;
        }
    }
    CConstants { c1, c2, c3, c4 }
}

/// Normalized univariate constants (2σ⁴, σ4 − σ⁴, σ⁴) / (σ4 − σ⁴).
pub fn univariate_tilde_constants(sigma_sq: f64, sigma4: f64) -> Result<TildeConstants> {
    let s4 = sigma_sq * sigma_sq;
    let excess = sigma4 - s4;
    if !(excess > KURTOSIS_FLOOR * s4) || !(s4 > 0.0) {
        return Err(Error::DegenerateKurtosis);
    }
    Ok(TildeConstants { c1: 2.0 * s4 / excess, c2: 1.0, c3: s4 / excess })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn symmetric_two_points() {
        let m = central_moments(&Dataset::univariate(vec![-1.0, 1.0]).unwrap()).unwrap();
        assert_eq!((m.sigma_sq(), m.sigma4()), (1.0, 1.0));
    }

    #[test]
    fn hand_variance() {
        let m = central_moments(&Dataset::univariate(vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        assert!(close(m.sigma_sq(), 1.25));
        // deviations ±0.5, ±1.5: (2·0.0625 + 2·5.0625)/4
        assert!(close(m.sigma4(), 2.5625));
    }

    #[test]
    fn too_few_rows() {
        let d = Dataset::univariate(vec![3.0]).unwrap();
        assert!(matches!(central_moments(&d), Err(Error::InsufficientData { needed: 2, got: 1 })));
    }

    #[test]
    fn duplicated_columns() {
        let v = vec![0.3, -1.0, 2.5, 4.0, 0.0];
        let d = Dataset::from_columns(vec![("a".into(), v.clone()), ("b".into(), v)]).unwrap();
        let m = central_moments(&d).unwrap();
        assert!(close(m.sigma[1], m.sigma[0]));
        assert!(close(m.sigma2[1], m.sigma2[0]));
    }

    #[test]
    fn gaussian_population_constants() {
        let c = mse_constants(2, &[1.0, 0.0, 0.0, 1.0], &[3.0, 1.0, 1.0, 3.0]);
        assert_eq!(c, CConstants { c1: 6.0, c2: 6.0, c3: 2.0, c4: 0.0 });
    }

    #[test]
    fn univariate_collapse() {
        let m = MomentConstants::univariate(1.0, 3.0);
        assert_eq!(m.c, CConstants { c1: 2.0, c2: 2.0, c3: 1.0, c4: 0.0 });
        let m = MomentConstants::univariate(1.7, 11.3);
        let s4 = 1.7f64 * 1.7;
        assert_eq!(m.c, CConstants { c1: 2.0 * s4, c2: 11.3 - s4, c3: s4, c4: 0.0 });
    }

    #[test]
    fn constant_column_contributes_nothing() {
        let d = Dataset::from_columns(vec![("a".into(), vec![2.0; 6])]).unwrap();
        let m = central_moments(&d).unwrap();
        assert_eq!(m.c, CConstants { c1: 0.0, c2: 0.0, c3: 0.0, c4: 0.0 });
    }

    #[test]
    fn tilde_examples() {
        assert_eq!(univariate_tilde_constants(1.0, 3.0).unwrap(), TildeConstants { c1: 1.0, c2: 1.0, c3: 0.5 });
        assert_eq!(univariate_tilde_constants(1.0, 9.0).unwrap(), TildeConstants { c1: 0.25, c2: 1.0, c3: 0.125 });
        assert!(matches!(univariate_tilde_constants(0.25, 0.0625), Err(Error::DegenerateKurtosis)));
        assert!(matches!(univariate_tilde_constants(0.0, 0.0), Err(Error::DegenerateKurtosis)));
    }

    #[test]
    fn covariance_matches_moments() {
        let d = Dataset::from_columns(vec![
            ("a".into(), vec![1.0, 2.0, 4.0, 7.0]),
            ("b".into(), vec![0.0, -1.0, 3.0, 2.0]),
        ])
        .unwrap();
        let m = central_moments(&d).unwrap();
        assert_eq!(covariance(&d), m.sigma);
        assert_eq!(m.sigma[1], m.sigma[2]);
    }
}
