//! Seeded synthetic datasets with known regression functions.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, LabeledExample};
use crate::error::{Error, Result};
use crate::oracle::sample_analytic_example;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticKind {
    /// `X ~ U[0, 1]`, class 0 with probability `X`.
    AnalyticExample,
    GaussianMixture {
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<Vec<f64>>>,
        priors: Vec<f64>,
    },
    /// Equiprobable classes, uniform on balls of radius `radius` around centres spaced
    /// `separation` apart (on a line for two classes, on a circle otherwise).
    SeparableBlobs {
        num_classes: usize,
        dim: usize,
        separation: f64,
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(flatten)]
    pub kind: SyntheticKind,
    pub n: usize,
    pub seed: u64,
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = a.len();
    if a.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("covariance must be square"));
    }
    for i in 0..d {
        for j in 0..i {
            if (a[i][j] - a[j][i]).abs() > 1e-12 * (1.0 + a[i][j].abs()) {
                return Err(Error::invalid("covariance must be symmetric"));
            }
        }
    }
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|m| l[i][m] * l[j][m]).sum();
            if i == j {
                let v = a[i][i] - s;
                if !(v > 0.0) {
                    return Err(Error::invalid("covariance must be positive definite"));
                }
                l[i][i] = v.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

/// A validated Gaussian mixture with exact class posteriors.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    means: Vec<Vec<f64>>,
    factors: Vec<Vec<Vec<f64>>>,
    priors: Vec<f64>,
    log_norms: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(means: Vec<Vec<f64>>, covariances: Vec<Vec<Vec<f64>>>, priors: Vec<f64>) -> Result<Self> {
        let k = means.len();
        if k == 0 || covariances.len() != k || priors.len() != k {
            return Err(Error::invalid("mixture needs matching means, covariances and priors"));
        }
        let d = means[0].len();
        if d == 0 || means.iter().any(|m| m.len() != d) || covariances.iter().any(|c| c.len() != d) {
            return Err(Error::invalid("mixture components must share a positive dimension"));
        }
        if priors.iter().any(|p| !(*p >= 0.0)) || (priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("priors must be nonnegative and sum to 1"));
        }
        let factors = covariances.iter().map(|c| cholesky(c)).collect::<Result<Vec<_>>>()?;
        let log_norms = factors
            .iter()
            .map(|l| -(0..d).map(|i| l[i][i].ln()).sum::<f64>())
            .collect();
        Ok(Self {
            means,
            factors,
            priors,
            log_norms,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// `log(π_k) + log N(x; m_k, Σ_k)` up to a constant shared by all classes.
    fn log_joint(&self, k: usize, x: &[f64]) -> f64 {
        let l = &self.factors[k];
        let d = self.dim();
        // Forward substitution: z = L⁻¹ (x − m).
        let mut z = vec![0.0; d];
        for i in 0..d {
            let s: f64 = (0..i).map(|j| l[i][j] * z[j]).sum();
            z[i] = (x[i] - self.means[k][i] - s) / l[i][i];
        }
        self.priors[k].ln() + self.log_norms[k] - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
    }

    /// `η_k(x) = P(Y = k | X = x)`.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let logs: Vec<f64> = (0..self.num_classes()).map(|k| self.log_joint(k, x)).collect();
        crate::net::softmax(&logs)
    }

    /// Density of `X` at `x`.
    pub fn density(&self, x: &[f64]) -> f64 {
        let c = -0.5 * self.dim() as f64 * (2.0 * std::f64::consts::PI).ln();
        (0..self.num_classes()).map(|k| (c + self.log_joint(k, x)).exp()).sum()
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<LabeledDataset> {
        let pick = WeightedIndex::new(&self.priors).map_err(|e| Error::invalid(e.to_string()))?;
        let d = self.dim();
        let examples = (0..n)
            .map(|_| {
                let k = pick.sample(rng);
                let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let l = &self.factors[k];
                let x = (0..d)
                    .map(|i| self.means[k][i] + (0..=i).map(|j| l[i][j] * z[j]).sum::<f64>())
                    .collect();
                LabeledExample::new(x, k)
            })
            .collect();
        LabeledDataset::with_dim(examples, self.num_classes(), d)
    }
}

fn blob_centres(num_classes: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    if num_classes == 2 {
        return [-0.5, 0.5]
            .iter()
            .map(|s| {
                let mut c = vec![0.0; dim];
                c[0] = s * separation;
                c
            })
            .collect();
    }
    // Neighbouring points on a circle of radius r sit 2 r sin(π/K) apart.
    let r = separation / (2.0 * (std::f64::consts::PI / num_classes as f64).sin());
    (0..num_classes)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / num_classes as f64;
            let mut c = vec![0.0; dim];
            c[0] = r * a.cos();
            if num_classes > 1 {
                c[1] = r * a.sin();
            }
            c
        })
        .collect()
}

pub fn synthesize(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    if spec.n == 0 {
        return Err(Error::invalid("synthetic datasets need n ≥ 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match &spec.kind {
        SyntheticKind::AnalyticExample => sample_analytic_example(spec.n, spec.seed),
        SyntheticKind::GaussianMixture {
            means,
            covariances,
            priors,
        } => GaussianMixture::new(means.clone(), covariances.clone(), priors.clone())?.sample(spec.n, &mut rng),
        &SyntheticKind::SeparableBlobs {
            num_classes,
            dim,
            separation,
            radius,
        } => {
            if num_classes < 2 || dim == 0 || (num_classes > 2 && dim < 2) {
                return Err(Error::invalid("blobs need ≥ 2 classes and enough dimensions to place them"));
            }
            if !(radius >= 0.0) || !(2.0 * radius < separation) {
                return Err(Error::invalid("blob radius must be below half the separation"));
            }
            let centres = blob_centres(num_classes, dim, separation);
            let examples = (0..spec.n)
                .map(|_| {
                    let k = rng.random_range(0..num_classes);
                    let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
                    let x = centres[k].iter().zip(&dir).map(|(c, v)| c + r * v / norm).collect();
                    LabeledExample::new(x, k)
                })
                .collect();
            LabeledDataset::with_dim(examples, num_classes, dim)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixture_spec(n: usize) -> SyntheticSpec {
        SyntheticSpec {
            kind: SyntheticKind::GaussianMixture {
                means: vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
                covariances: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 2],
                priors: vec![0.5, 0.5],
            },
            n,
            seed: 4,
        }
    }

    #[test]
    fn analytic_is_reproducible() {
        let s = SyntheticSpec {
            kind: SyntheticKind::AnalyticExample,
            n: 10,
            seed: 9,
        };
        assert_eq!(synthesize(&s).unwrap(), synthesize(&s).unwrap());
    }

    #[test]
    fn non_pd_covariance_is_rejected() {
        let mut s = mixture_spec(10);
        if let SyntheticKind::GaussianMixture { covariances, .. } = &mut s.kind {
            covariances[1] = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        }
        assert!(matches!(synthesize(&s), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn posterior_of_symmetric_pair_is_logistic() {
        let g = GaussianMixture::new(
            vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 2],
            vec![0.5, 0.5],
        )
        .unwrap();
        // log-odds of class 1 is 2 x_0 for unit-variance means at ±1.
        let p = g.posterior(&[0.3, 5.0]);
        assert!((p[1] - 1.0 / (1.0 + (-0.6f64).exp())).abs() < 1e-12);
        let c = cholesky(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        assert!((c[0][0] - 2.0).abs() < 1e-12 && (c[1][0] - 1.0).abs() < 1e-12);
        assert!((c[1][1] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn blobs_stay_inside_their_balls() {
        let s = SyntheticSpec {
            kind: SyntheticKind::SeparableBlobs {
                num_classes: 3,
                dim: 2,
                separation: 4.0,
                radius: 1.0,
            },
            n: 300,
            seed: 1,
        };
        let d = synthesize(&s).unwrap();
        let centres = blob_centres(3, 2, 4.0);
        for e in &d {
            let c = &centres[e.label];
            let r = ((e.features[0] - c[0]).powi(2) + (e.features[1] - c[1]).powi(2)).sqrt();
            assert!(r <= 1.0 + 1e-12);
        }
    }
}
