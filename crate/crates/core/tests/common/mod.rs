//! Property checks shared by the proptest suite and the acceptance run.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use subboot::bench::generate::{generate_data, Generator};
use subboot::engines::{run_engine, EngineOptions, HyperParams, Method};
use subboot::estimators::{resolve_estimator, ColumnRoles};
use subboot::moments::{central_moments, CConstants, TildeConstants};
use subboot::msemodel::{predict_mse, ModelParams};
use subboot::tuner::{optimal_general_blb, optimal_general_linear};
use subboot::{Dataset, Estimator, SeedSpec};

pub const ESTIMATORS: [&str; 5] = ["mean", "ols", "logit1", "misscorr", "iv"];

pub struct Case {
    pub name: &'static str,
    pub data: Dataset,
    pub est: Arc<dyn Estimator>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn dataset_for(name: &str, rows: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match name {
        "mean" => generate_data(Generator::CenteredExponential, rows, 3, SeedSpec::new(seed)).unwrap(),
        "ols" => generate_data(Generator::Linear, rows, 1, SeedSpec::new(seed)).unwrap(),
        "logit1" => generate_data(Generator::Logistic, rows, 1, SeedSpec::new(seed)).unwrap(),
        "misscorr" => {
            let (mut x, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
            for _ in 0..rows {
                let a = normal(&mut rng);
                x.push(a);
                y.push(0.5 * a + normal(&mut rng));
                w.push(if rng.random::<f64>() < 0.7 { 1.0 } else { 0.0 });
            }
            Dataset::from_columns(vec![("x".into(), x), ("y".into(), y), ("w".into(), w)]).unwrap()
        }
        "iv" => {
            let (mut x, mut y, mut z) = (Vec::new(), Vec::new(), Vec::new());
            for _ in 0..rows {
                let (zi, u) = (normal(&mut rng), normal(&mut rng));
                let xi = zi + u + normal(&mut rng);
                x.push(xi);
                y.push(0.5 * xi + u + normal(&mut rng));
                z.push(zi);
            }
            Dataset::from_columns(vec![("x".into(), x), ("y".into(), y), ("z".into(), z)]).unwrap()
        }
        other => panic!("no dataset for {other}"),
    }
}

/// A bound estimator of every registered kind on a suitable random dataset.
/// Small logistic samples can be separable; those are redrawn.
pub fn case(name: &'static str, rows: usize, seed: u64) -> Case {
    for attempt in 0..100 {
        let s = seed.wrapping_add(attempt * 7919);
        let data = dataset_for(name, rows, s);
        let est = resolve_estimator(name, &ColumnRoles::default(), &data).unwrap();
        if let Ok(est) = est.bind(&data, SeedSpec::new(s)) {
            return Case { name, data, est };
        }
    }
    panic!("no usable {name} dataset with {rows} rows");
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Integer weights against physically repeated rows.
pub fn duplication_equivalence(c: &Case, counts: &[u32]) -> Result<(), String> {
    let weights: Vec<f64> = counts.iter().map(|&k| k as f64).collect();
    let rows: Vec<usize> = counts.iter().enumerate().flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize)).collect();
    let weighted = c.est.evaluate(&c.data.view(&weights).unwrap());
    if rows.is_empty() {
        return match weighted {
            Err(_) => Ok(()),
            Ok(v) => Err(format!("{}: all-zero weights gave {v:?}", c.name)),
        };
    }
    let dup = c.data.select_rows(&rows).unwrap();
    let ones = vec![1.0; rows.len()];
    let duplicated = c.est.evaluate(&dup.view(&ones).unwrap());
    match (weighted, duplicated) {
        (Ok(a), Ok(b)) => {
            if a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| close(*x, *y, 1e-10)) {
                Ok(())
            } else {
                Err(format!("{}: weighted {a:?} vs duplicated {b:?}", c.name))
            }
        }
        (Err(_), Err(_)) => Ok(()),
        (a, b) => Err(format!("{}: weighted {a:?} vs duplicated {b:?}", c.name)),
    }
}

/// Symmetric with no eigenvalue below −1e-12·trace.
pub fn symmetric_psd(matrix: &[f64], d: usize) -> Result<(), String> {
    for i in 0..d {
        for j in 0..d {
            if matrix[i * d + j] != matrix[j * d + i] {
                return Err(format!("asymmetric at ({i}, {j})"));
            }
        }
    }
    let m = DMatrix::from_row_slice(d, d, matrix);
    let trace = m.trace();
    let min = SymmetricEigen::new(m).eigenvalues.min();
    if min < -1e-12 * trace.abs().max(f64::MIN_POSITIVE) {
        return Err(format!("eigenvalue {min} with trace {trace}"));
    }
    Ok(())
}

pub fn engine_psd(c: &Case, method: Method, params: HyperParams, seed: u64) -> Result<(), String> {
    let v = run_engine(method, &c.data, &c.est, params, SeedSpec::new(seed), &EngineOptions::default()).map_err(|e| format!("{} {method}: {e}", c.name))?;
    symmetric_psd(&v.matrix, v.dim).map_err(|e| format!("{} {method}: {e}", c.name))
}

/// SDB must be the B = 1 case of BLB, bit for bit.
pub fn sdb_is_blb_with_one_resample(c: &Case, n: usize, r: usize, seed: u64) -> Result<(), String> {
    let opts = EngineOptions::default();
    let s = run_engine(Method::Sdb, &c.data, &c.est, HyperParams::new(n, r, 1), SeedSpec::new(seed), &opts).map_err(|e| e.to_string())?;
    let b = run_engine(Method::Blb, &c.data, &c.est, HyperParams::new(n, r, 1), SeedSpec::new(seed), &opts).map_err(|e| e.to_string())?;
    let bits = |m: &[f64]| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    if bits(&s.matrix) == bits(&b.matrix) {
        Ok(())
    } else {
        Err(format!("{}: SDB {:?} vs BLB(B=1) {:?}", c.name, s.matrix, b.matrix))
    }
}

/// Constants of a random p-variate sample.
pub fn random_constants(p: usize, seed: u64) -> CConstants {
    let data = generate_data(Generator::CenteredExponential, 200, p, SeedSpec::new(seed)).unwrap();
    central_moments(&data).unwrap().c
}

/// predict_mse never increases when n, R or B grows.
pub fn mse_monotone(c: &CConstants, big_n: usize, n: usize, r: usize, b: usize) -> Result<(), String> {
    let total = |m: Method, n: usize, r: usize, b: usize| {
        predict_mse(m, big_n, ModelParams::for_method(m, &HyperParams::new(n, r, b)), c, false).unwrap().total
    };
    for m in [Method::Tb, Method::Blb, Method::Sb, Method::Sdb] {
        let base = total(m, n, r, b);
        let grown = [(n + 1).min(big_n), n, n];
        for (nn, rr, bb) in [(grown[0], r, b), (n, r + 1, b), (n, r, b + 1), (n, 2 * r, 2 * b)] {
            let next = total(m, nn, rr, bb);
            if next > base * (1.0 + 1e-12) {
                return Err(format!("{m}: MSE rose from {base} to {next} at (n, R, B) = ({nn}, {rr}, {bb})"));
            }
        }
    }
    Ok(())
}

/// Multiplying all c-constants by λ leaves the tuned (n, R, B) unchanged, and
/// an infeasible budget stays infeasible.
#[allow(clippy::too_many_arguments)]
pub fn tuner_scale_invariant(t: &TildeConstants, c1p: f64, c2p: f64, alpha1: f64, alpha2: f64, c_max: f64, big_n: usize, gamma: f64, lambda: f64) -> Result<(), String> {
    let key = |r: subboot::Result<subboot::tuner::TunedParams>| r.map(|t| (t.params.n, t.params.r, t.params.b)).map_err(|e| e.to_string());
    let scaled = TildeConstants { c1: t.c1 * lambda, c2: t.c2 * lambda, c3: t.c3 * lambda };
    let a = key(optimal_general_blb(t, alpha1, alpha2, c_max, big_n, None, gamma));
    let b = key(optimal_general_blb(&scaled, alpha1, alpha2, c_max, big_n, None, gamma));
    if a != b {
        return Err(format!("BLB {a:?} vs scaled {b:?}"));
    }
    for m in [Method::Sb, Method::Sdb] {
        let a = key(optimal_general_linear(m, c1p, c2p, alpha1, c_max, big_n, gamma, false));
        let b = key(optimal_general_linear(m, c1p * lambda, c2p * lambda, alpha1, c_max, big_n, gamma, false));
        if a != b {
            return Err(format!("{m} {a:?} vs scaled {b:?}"));
        }
    }
    Ok(())
}
