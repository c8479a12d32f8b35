//! Kernel matrices derived from a gram matrix.
//!
//! Only inner products are needed: `|x - y|^2 = x.x - 2 x.y + y.y`, so the
//! RBF kernel `exp(-gamma |x - y|^2)` follows from `G_ii`, `G_jj`, `G_ij`.
//! The width is exposed as `gamma`; in terms of a bandwidth `sigma`,
//! `gamma = 1 / (2 sigma^2)`.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelConfig {
    Linear,
    Polynomial { degree: u32, offset: f64 },
    Rbf { gamma: f64 },
}

impl KernelConfig {
    pub fn rbf(gamma: f64) -> Self {
        KernelConfig::Rbf { gamma }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelConfig::Linear => Ok(()),
            KernelConfig::Polynomial { degree, offset } => {
                if degree < 1 {
                    return Err(Error::InvalidConfig(
                        "polynomial degree must be >= 1".into(),
                    ));
                }
                if !(offset >= 0.0 && offset.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "polynomial offset must be finite and >= 0, got {offset}"
                    )));
                }
                Ok(())
            }
            KernelConfig::Rbf { gamma } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "rbf gamma must be finite and > 0, got {gamma}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Kernel value from `x.x`, `y.y` and `x.y`.
    #[inline]
    pub fn eval(&self, xx: f64, yy: f64, xy: f64) -> f64 {
        match *self {
            KernelConfig::Linear => xy,
            KernelConfig::Polynomial { degree, offset } => (xy + offset).powi(degree as i32),
            KernelConfig::Rbf { gamma } => {
                // rounding can leave a tiny negative distance
                let d2 = (xx + yy - 2.0 * xy).max(0.0);
                (-gamma * d2).exp()
            }
        }
    }
}

/// Applies `cfg` to every entry of a symmetric gram matrix.
pub fn kernel_from_gram(gram: &DenseMatrix, cfg: &KernelConfig) -> Result<DenseMatrix> {
    cfg.validate()?;
    if !gram.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "gram matrix is {}x{}",
            gram.rows(),
            gram.cols()
        )));
    }
    let all: Vec<usize> = (0..gram.rows()).collect();
    let mut k = kernel_block(gram, &all, &all, cfg)?;
    if matches!(cfg, KernelConfig::Rbf { .. }) {
        for i in 0..k.rows() {
            k.set(i, i, 1.0);
        }
    }
    Ok(k)
}

/// Kernel values between the samples `rows` and `cols` of a pooled gram
/// matrix, e.g. test rows against training columns.
pub fn kernel_block(
    gram: &DenseMatrix,
    rows: &[usize],
    cols: &[usize],
    cfg: &KernelConfig,
) -> Result<DenseMatrix> {
    cfg.validate()?;
    let diag = gram.diagonal();
    let mut out = DenseMatrix::zeros(rows.len(), cols.len());
    for (oi, &i) in rows.iter().enumerate() {
        let g_row = gram.row(i);
        let dst = out.row_mut(oi);
        for (d, &j) in dst.iter_mut().zip(cols) {
            *d = cfg.eval(diag[i], diag[j], g_row[j]);
        }
    }
    Ok(out)
}

/// Kernel values between new samples and training samples, straight from
/// features.
pub fn kernel_rows(
    queries: &[Vec<f64>],
    train: &[Vec<f64>],
    cfg: &KernelConfig,
) -> Result<DenseMatrix> {
    cfg.validate()?;
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    if let (Some(q), Some(t)) = (queries.first(), train.first()) {
        if q.len() != t.len() {
            return Err(Error::DimensionMismatch(format!(
                "queries have {} features, training samples {}",
                q.len(),
                t.len()
            )));
        }
    }
    let train_sq: Vec<f64> = train.iter().map(|t| dot(t, t)).collect();
    let mut out = DenseMatrix::zeros(queries.len(), train.len());
    for (i, q) in queries.iter().enumerate() {
        let qq = dot(q, q);
        for ((d, t), tt) in out.row_mut(i).iter_mut().zip(train).zip(&train_sq) {
            *d = cfg.eval(qq, *tt, dot(q, t));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::plaintext_gram;
    use proptest::prelude::*;

    #[test]
    fn rbf_example() {
        let g = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]);
        let k = kernel_from_gram(&g, &KernelConfig::rbf(0.25)).unwrap();
        let e = (-1.0f64).exp();
        assert_eq!(k.get(0, 0), 1.0);
        assert_eq!(k.get(1, 1), 1.0);
        assert!((k.get(0, 1) - e).abs() < 1e-15);
        assert!((k.get(0, 1) - 0.367879).abs() < 1e-6);
        assert_eq!(k.get(0, 1), k.get(1, 0));
    }

    #[test]
    fn linear_is_identity() {
        let g = DenseMatrix::from_rows(&[vec![1.0, -2.5], vec![-2.5, 7.0]]);
        assert_eq!(kernel_from_gram(&g, &KernelConfig::Linear).unwrap(), g);
    }

    #[test]
    fn polynomial_example() {
        let g = DenseMatrix::from_rows(&[vec![3.0, 3.0], vec![3.0, 3.0]]);
        let k = kernel_from_gram(
            &g,
            &KernelConfig::Polynomial {
                degree: 2,
                offset: 1.0,
            },
        )
        .unwrap();
        assert_eq!(k.get(0, 1), 16.0);
    }

    #[test]
    fn invalid_configs() {
        let g = DenseMatrix::zeros(2, 2);
        for cfg in [
            KernelConfig::rbf(0.0),
            KernelConfig::rbf(-1.0),
            KernelConfig::rbf(f64::NAN),
            KernelConfig::Polynomial {
                degree: 0,
                offset: 1.0,
            },
            KernelConfig::Polynomial {
                degree: 2,
                offset: -0.5,
            },
        ] {
            assert!(matches!(
                kernel_from_gram(&g, &cfg),
                Err(Error::InvalidConfig(_))
            ));
        }
        assert!(kernel_from_gram(&DenseMatrix::zeros(2, 3), &KernelConfig::Linear).is_err());
    }

    #[test]
    fn rbf_monotone_in_inner_product() {
        let cfg = KernelConfig::rbf(0.7);
        let mut prev = 0.0;
        for step in -20..=20 {
            let v = cfg.eval(2.0, 3.0, step as f64 * 0.1);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn rows_match_gram_block() {
        let xs = vec![vec![0.5, -1.0], vec![2.0, 0.25], vec![-0.75, 1.5]];
        let g = plaintext_gram(&xs);
        let cfg = KernelConfig::rbf(0.3);
        let rows = kernel_rows(&xs[2..], &xs[..2], &cfg).unwrap();
        assert_eq!(rows, kernel_block(&g, &[2], &[0, 1], &cfg).unwrap());
        assert!(kernel_rows(&[vec![1.0]], &xs, &cfg).is_err());
    }

    fn samples() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..8).prop_flat_map(|n_f| {
            proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, n_f), 2..10)
        })
    }

    proptest! {
        #[test]
        fn rbf_matches_direct_distance(xs in samples(), gamma in 0.01f64..4.0) {
            let g = plaintext_gram(&xs);
            let k = kernel_from_gram(&g, &KernelConfig::rbf(gamma)).unwrap();
            for i in 0..xs.len() {
                prop_assert_eq!(k.get(i, i), 1.0);
                for j in 0..xs.len() {
                    let d2: f64 = xs[i].iter().zip(&xs[j]).map(|(a, b)| (a - b).powi(2)).sum();
                    let direct = (-gamma * d2).exp();
                    let kij = k.get(i, j);
                    prop_assert!(kij > 0.0 && kij <= 1.0);
                    prop_assert_eq!(kij, k.get(j, i));
                    prop_assert!(((kij - direct) / direct).abs() <= 1e-12, "{} vs {}", kij, direct);
                }
            }
        }
    }
}
