//! Kernel functions and dense Gram matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest sample count for which a dense Gram matrix is materialized.
pub const MAX_GRAM_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `exp(-||x - z||^2 / sigma^2)`
    Gaussian { sigma: f64 },
    Linear,
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Self {
        KernelSpec::Gaussian { sigma }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { sigma } if !(sigma.is_finite() && sigma > 0.0) => {
                Err(Error::param("sigma", sigma, "must be finite and > 0"))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        self.validate()?;
        if x.len() != z.len() {
            return Err(Error::Shape {
                expected: x.len(),
                actual: z.len(),
            });
        }
        Ok(self.eval_unchecked(x, z))
    }

    /// Symmetric in its arguments bit-for-bit: `(a - b)^2 == (b - a)^2` in IEEE
    /// arithmetic and the dot product sums in the same order.
    pub(crate) fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        match *self {
            KernelSpec::Gaussian { sigma } => {
                let sq: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (sigma * sigma)).exp()
            }
            KernelSpec::Linear => x.iter().zip(z).map(|(a, b)| a * b).sum(),
        }
    }
}

/// Dense symmetric `n x n` kernel matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    entries: Vec<f64>,
    spec: KernelSpec,
}

impl KernelMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Borrowed view of row `j`.
    pub fn row(&self, j: usize) -> Result<&[f64]> {
        if j >= self.n {
            return Err(Error::Index {
                index: j,
                len: self.n,
            });
        }
        Ok(self.row_unchecked(j))
    }

    pub(crate) fn row_unchecked(&self, j: usize) -> &[f64] {
        &self.entries[j * self.n..(j + 1) * self.n]
    }

    /// `K v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n);
        self.entries
            .chunks_exact(self.n.max(1))
            .map(|row| dot(row, v))
            .collect()
    }

    /// Principal submatrix on `indices`, in the given order.
    pub fn submatrix(&self, indices: &[usize]) -> Result<KernelMatrix> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n) {
            return Err(Error::Index {
                index: bad,
                len: self.n,
            });
        }
        let m = indices.len();
        let mut entries = Vec::with_capacity(m * m);
        for &i in indices {
            let row = self.row_unchecked(i);
            entries.extend(indices.iter().map(|&j| row[j]));
        }
        Ok(KernelMatrix {
            n: m,
            entries,
            spec: self.spec,
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks that `rows` is non-empty and rectangular, returning the row width.
pub(crate) fn check_rectangular(rows: &[Vec<f64>]) -> Result<usize> {
    let first = rows
        .first()
        .ok_or_else(|| Error::Invalid("sample matrix is empty".into()))?;
    let dim = first.len();
    for row in rows {
        if row.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                actual: row.len(),
            });
        }
    }
    Ok(dim)
}

/// Builds the Gram matrix of `spec` over the rows of `samples`.
///
/// Only the upper triangle is evaluated; the lower triangle is a mirror, so
/// the result is exactly symmetric.
pub fn gram_matrix(spec: KernelSpec, samples: &[Vec<f64>]) -> Result<KernelMatrix> {
    spec.validate()?;
    check_rectangular(samples)?;
    let n = samples.len();
    if n > MAX_GRAM_SAMPLES {
        return Err(Error::Capacity {
            n,
            cap: MAX_GRAM_SAMPLES,
        });
    }

    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            samples[i..]
                .iter()
                .map(|z| spec.eval_unchecked(&samples[i], z))
                .collect()
        })
        .collect();

    let mut entries = vec![0.0; n * n];
    for (i, tail) in upper.iter().enumerate() {
        for (offset, &k) in tail.iter().enumerate() {
            let j = i + offset;
            entries[i * n + j] = k;
            entries[j * n + i] = k;
        }
    }
    Ok(KernelMatrix { n, entries, spec })
}

/// Row-major `queries.len() x basis.len()` matrix of kernel values.
pub fn cross_kernel(
    spec: KernelSpec,
    queries: &[Vec<f64>],
    basis: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let dim = check_rectangular(basis)?;
    for q in queries {
        if q.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                actual: q.len(),
            });
        }
    }
    Ok(queries
        .par_iter()
        .map(|q| basis.iter().map(|b| spec.eval_unchecked(b, q)).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        let g1 = KernelSpec::gaussian(1.0);
        assert_eq!(g1.eval(&[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        let g2 = KernelSpec::gaussian(2.0);
        let v = g2.eval(&[0.0, 0.0], &[2.0, 0.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-16);
        assert_eq!(KernelSpec::Linear.eval(&[1.0, 2.0], &[3.0, -1.0]).unwrap(), 1.0);
    }

    #[test]
    fn eval_dimension_mismatch() {
        let err = KernelSpec::Linear.eval(&[1.0], &[1.0, 2.0]).unwrap_err();
        assert!(matches!(
            err,
            Error::Shape {
                expected: 1,
                actual: 2
            }
        ));
    }

    #[test]
    fn invalid_sigma() {
        assert!(KernelSpec::gaussian(0.0).eval(&[1.0], &[1.0]).is_err());
        assert!(gram_matrix(KernelSpec::gaussian(-1.0), &[vec![0.0]]).is_err());
    }

    #[test]
    fn gram_examples() {
        let same = gram_matrix(KernelSpec::gaussian(1.0), &[vec![0.5, 1.0], vec![0.5, 1.0]])
            .unwrap();
        assert_eq!(same.entries, vec![1.0; 4]);

        let lin = gram_matrix(KernelSpec::Linear, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(lin.entries, vec![1.0, 0.0, 0.0, 1.0]);

        let k = gram_matrix(KernelSpec::gaussian(1.0), &[vec![0.0], vec![1.0], vec![2.0]])
            .unwrap();
        let e1 = (-1.0f64).exp();
        let e4 = (-4.0f64).exp();
        for i in 0..3 {
            assert_eq!(k.get(i, i), 1.0);
        }
        assert!((k.get(0, 1) - e1).abs() < 1e-16);
        assert!((k.get(1, 2) - e1).abs() < 1e-16);
        assert!((k.get(0, 2) - e4).abs() < 1e-17);

        let row = k.row(1).unwrap();
        assert!((row[0] - e1).abs() < 1e-16 && row[1] == 1.0 && (row[2] - e1).abs() < 1e-16);
    }

    #[test]
    fn row_bounds() {
        let lin = gram_matrix(KernelSpec::Linear, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(lin.row(0).unwrap(), &[1.0, 0.0]);
        assert!(matches!(lin.row(2), Err(Error::Index { index: 2, len: 2 })));
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = gram_matrix(KernelSpec::Linear, &[vec![1.0, 0.0], vec![0.0]]).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
        assert!(gram_matrix(KernelSpec::Linear, &[]).is_err());
    }

    #[test]
    fn submatrix_matches_direct_build() {
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.3, (i * i) as f64 * 0.1]).collect();
        let spec = KernelSpec::gaussian(0.7);
        let full = gram_matrix(spec, &xs).unwrap();
        let idx = [4, 0, 3];
        let sub = full.submatrix(&idx).unwrap();
        let picked: Vec<Vec<f64>> = idx.iter().map(|&i| xs[i].clone()).collect();
        assert_eq!(sub, gram_matrix(spec, &picked).unwrap());
    }

    #[test]
    fn capacity_cap() {
        let xs = vec![vec![0.0]; MAX_GRAM_SAMPLES + 1];
        assert!(matches!(
            gram_matrix(KernelSpec::Linear, &xs),
            Err(Error::Capacity { .. })
        ));
    }
}
