//! Image-quality and classification metrics: MSE, Fréchet distance between
//! Gaussian feature fits (FID), unbiased polynomial-kernel MMD² (KID), and
//! accuracy / precision / recall / F1.

mod classification;
pub mod linalg;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ImagePlane, Tensor};
use crate::par::Execution;

pub use classification::{cls_metrics, Average, ClassScores, ClsReport};
pub use linalg::{sqrtm_psd, symmetric_eigen, trace_sqrtm_psd, Matrix};

/// Mean of `(a - b)^2` over every value.
pub fn mse(a: &ImagePlane<f32>, b: &ImagePlane<f32>) -> Result<f64> {
    if a.dims() != b.dims() || a.channels() != b.channels() {
        return Err(Error::DimMismatch(format!(
            "{:?}x{} vs {:?}x{}",
            a.dims(),
            a.channels(),
            b.dims(),
            b.channels()
        )));
    }
    let n = a.data().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum / n as f64)
}

/// `n x d` feature matrix, one row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    n: usize,
    d: usize,
    rows: Vec<f32>,
}

impl FeatureSet {
    pub fn new(n: usize, d: usize, rows: Vec<f32>) -> Result<Self> {
        if rows.len() != n * d {
            return Err(Error::DimMismatch(format!(
                "{} values for {n}x{d}",
                rows.len()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite feature value".into()));
        }
        Ok(FeatureSet { n, d, rows })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimMismatch("ragged feature rows".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match (t.dims(), t.as_f32()) {
            (&[n, d], Some(data)) => Self::new(n, d, data.to_vec()),
            (dims, _) => Err(Error::Format(format!(
                "feature tensor must be f32 [n, d], got {:?} {dims:?}",
                t.dtype()
            ))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::f32(vec![self.n, self.d], self.rows.clone()).expect("shape matches")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.d..(i + 1) * self.d]
    }

    /// Rows `start..end` as a new set.
    pub fn slice(&self, start: usize, end: usize) -> FeatureSet {
        FeatureSet {
            n: end - start,
            d: self.d,
            rows: self.rows[start * self.d..end * self.d].to_vec(),
        }
    }
}

/// Sample mean and unbiased (divisor `n - 1`) covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

pub fn moments(f: &FeatureSet) -> Result<Moments> {
    moments_with(Execution::default(), f)
}

pub fn moments_with(exec: Execution, f: &FeatureSet) -> Result<Moments> {
    if f.n < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            found: f.n,
        });
    }
    let d = f.d;
    let mut mean = vec![0.0f64; d];
    for i in 0..f.n {
        for (m, &v) in mean.iter_mut().zip(f.row(i)) {
            *m += f64::from(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= f.n as f64);
    let centered: Vec<f64> = (0..f.n)
        .flat_map(|i| f.row(i).iter().zip(&mean).map(|(&v, &m)| f64::from(v) - m))
        .collect();
    let denom = (f.n - 1) as f64;
    let rows = exec.map_range(d, |a| {
        (0..d)
            .map(|b| {
                let mut s = 0.0;
                for i in 0..f.n {
                    s += centered[i * d + a] * centered[i * d + b];
                }
                s / denom
            })
            .collect::<Vec<f64>>()
    });
    let cov = Matrix::from_row_major(d, rows.concat())?;
    Ok(Moments { mean, cov })
}

/// Fréchet distance between two Gaussians, with the cross term evaluated as
/// `Tr((S1 Σ2 S1)^{1/2})`, `S1 = Σ1^{1/2}`, so only PSD roots are taken.
pub fn fid_from_moments(a: &Moments, b: &Moments) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::DimMismatch(format!(
            "feature dims {} vs {}",
            a.mean.len(),
            b.mean.len()
        )));
    }
    let mean_term: f64 = a
        .mean
        .iter()
        .zip(&b.mean)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let s1 = sqrtm_psd(&a.cov)?;
    let inner = s1.matmul(&b.cov).matmul(&s1).symmetrized();
    let cross = trace_sqrtm_psd(&inner)?;
    let fid = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(fid.max(0.0))
}

pub fn fid(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    if a.d != b.d {
        return Err(Error::DimMismatch(format!(
            "feature dims {} vs {}",
            a.d, b.d
        )));
    }
    fid_from_moments(&moments(a)?, &moments(b)?)
}

#[inline]
fn poly_kernel(x: &[f32], y: &[f32], d: f64) -> f64 {
    let dot: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| f64::from(a) * f64::from(b))
        .sum();
    let k = dot / d + 1.0;
    k * k * k
}

/// Unbiased MMD² with kernel `k(x, y) = (xᵀy / d + 1)^3`. May be negative.
pub fn kid(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    kid_with(Execution::default(), a, b)
}

pub fn kid_with(exec: Execution, a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    if a.d != b.d {
        return Err(Error::DimMismatch(format!(
            "feature dims {} vs {}",
            a.d, b.d
        )));
    }
    for f in [a, b] {
        if f.n < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                found: f.n,
            });
        }
    }
    let d = a.d.max(1) as f64;
    let within = |f: &FeatureSet| -> f64 {
        exec.map_range(f.n, |i| {
            (0..f.n)
                .filter(|&j| j != i)
                .map(|j| poly_kernel(f.row(i), f.row(j), d))
                .sum::<f64>()
        })
        .into_iter()
        .sum()
    };
    let cross: f64 = exec
        .map_range(a.n, |i| {
            (0..b.n)
                .map(|j| poly_kernel(a.row(i), b.row(j), d))
                .sum::<f64>()
        })
        .into_iter()
        .sum();
    let (n, m) = (a.n as f64, b.n as f64);
    Ok(within(a) / (n * (n - 1.0)) + within(b) / (m * (m - 1.0)) - 2.0 * cross / (n * m))
}

pub const KID_BLOCK: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KidBlocks {
    pub mean: f64,
    pub std: f64,
    pub blocks: usize,
    pub block_size: usize,
}

/// KID over consecutive disjoint `block_size`-row blocks of both sets;
/// `None` when either set has fewer rows than one block.
pub fn kid_blocks(a: &FeatureSet, b: &FeatureSet, block_size: usize) -> Result<Option<KidBlocks>> {
    let block_size = block_size.max(2);
    let blocks = (a.n / block_size).min(b.n / block_size);
    if blocks == 0 {
        return Ok(None);
    }
    let values = (0..blocks)
        .map(|k| {
            let (s, e) = (k * block_size, (k + 1) * block_size);
            kid(&a.slice(s, e), &b.slice(s, e))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = values.iter().sum::<f64>() / blocks as f64;
    let std = if blocks > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (blocks - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(Some(KidBlocks {
        mean,
        std,
        blocks,
        block_size,
    }))
}
