//! Gaussian mixtures with exact densities, scores and samples, plus the
//! pairwise ratio field used throughout for optimal-discriminator math.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;
const MIN_EIGENVALUE: f64 = 1e-9;

/// One mixture component with cached Cholesky factor and log normalizer.
#[derive(Debug, Clone)]
pub struct Component {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: cov.nrows(),
            });
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * (1.0 + cov[(i, j)].abs()) {
                    return Err(Error::InvalidArgument(format!(
                        "covariance not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let min_eig = cov
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        if min_eig < MIN_EIGENVALUE {
            return Err(Error::InvalidArgument(format!(
                "covariance minimum eigenvalue {min_eig:.3e} below floor {MIN_EIGENVALUE:.0e}"
            )));
        }
        let chol = Cholesky::new(cov.clone()).ok_or_else(|| {
            Error::InvalidArgument("covariance not positive definite".to_string())
        })?;
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let log_norm = -0.5 * (dim as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self {
            weight,
            mean,
            cov,
            chol,
            log_norm,
        })
    }

    /// log N(x; mean, cov)
    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let diff = x - &self.mean;
        let w = self.chol.l().solve_lower_triangular(&diff).unwrap();
        self.log_norm - 0.5 * w.norm_squared()
    }

    /// Sigma^{-1} (mean - x)
    fn pull_to_mean(&self, x: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(&(&self.mean - x))
    }
}

/// A finite Gaussian mixture on R^dim.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    dim: usize,
    comps: Vec<Component>,
}

impl GaussianMixture {
    /// Build a mixture from (weight, mean, covariance) triples.
    ///
    /// Weights must be positive and sum to 1 within 1e-12; covariances must
    /// be symmetric with minimum eigenvalue at least 1e-9.
    pub fn new(components: Vec<(f64, DVector<f64>, DMatrix<f64>)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs >= 1 component".into()));
        }
        let dim = components[0].1.len();
        let mut total = 0.0;
        let mut comps = Vec::with_capacity(components.len());
        for (w, mean, cov) in components {
            if !(w > 0.0) {
                return Err(Error::InvalidArgument(format!("weight {w} not positive")));
            }
            if mean.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: mean.len(),
                });
            }
            total += w;
            comps.push(Component::new(w, mean, cov)?);
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { dim, comps })
    }

    /// Isotropic single Gaussian N(mean, var I).
    pub fn isotropic(mean: DVector<f64>, var: f64) -> Result<Self> {
        let dim = mean.len();
        Self::new(vec![(1.0, mean, DMatrix::identity(dim, dim) * var)])
    }

    /// Standard normal N(0, I_dim).
    pub fn standard(dim: usize) -> Self {
        Self::isotropic(DVector::zeros(dim), 1.0).expect("identity covariance is valid")
    }

    /// 1D Gaussian N(mean, var).
    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::isotropic(DVector::from_element(1, mean), var)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component] {
        &self.comps
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// log p(x) via log-sum-exp over components.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        let mut terms = Vec::with_capacity(self.comps.len());
        for c in &self.comps {
            terms.push(c.weight.ln() + c.log_density(x));
        }
        Ok(log_sum_exp(&terms))
    }

    /// grad_x log p(x): responsibility-weighted sum of Sigma_i^{-1}(mu_i - x).
    pub fn score(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let log_terms: Vec<f64> = self
            .comps
            .iter()
            .map(|c| c.weight.ln() + c.log_density(x))
            .collect();
        let lse = log_sum_exp(&log_terms);
        let mut out = DVector::zeros(self.dim);
        for (c, &lt) in self.comps.iter().zip(&log_terms) {
            let resp = (lt - lse).exp();
            out += c.pull_to_mean(x) * resp;
        }
        Ok(out)
    }

    /// n i.i.d. draws, one row per sample. Component chosen by weight, then
    /// a Gaussian draw through the cached Cholesky factor.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(n, self.dim);
        for i in 0..n {
            let x = self.sample_one(rng);
            out.row_mut(i).copy_from(&x.transpose());
        }
        out
    }

    pub fn sample_one<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut idx = self.comps.len() - 1;
        for (i, c) in self.comps.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                idx = i;
                break;
            }
        }
        let c = &self.comps[idx];
        let xi = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        &c.mean + c.chol.l() * xi
    }

    /// Mean of the mixture.
    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for c in &self.comps {
            m += &c.mean * c.weight;
        }
        m
    }
}

/// A pair of mixtures defining the pointwise density ratio numerator/denominator.
#[derive(Debug, Clone)]
pub struct RatioField {
    num: GaussianMixture,
    den: GaussianMixture,
}

impl RatioField {
    pub fn new(numerator: GaussianMixture, denominator: GaussianMixture) -> Result<Self> {
        if numerator.dim() != denominator.dim() {
            return Err(Error::DimensionMismatch {
                expected: numerator.dim(),
                got: denominator.dim(),
            });
        }
        Ok(Self {
            num: numerator,
            den: denominator,
        })
    }

    pub fn dim(&self) -> usize {
        self.num.dim()
    }

    pub fn numerator(&self) -> &GaussianMixture {
        &self.num
    }

    pub fn denominator(&self) -> &GaussianMixture {
        &self.den
    }

    /// log p(x) - log p_hat(x)
    pub fn log_ratio(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.num.log_density(x)? - self.den.log_density(x)?)
    }

    /// grad_x log (p/p_hat) = score(p, x) - score(p_hat, x)
    pub fn ratio_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.num.score(x)? - self.den.score(x)?)
    }
}

/// Numerically stable log(sum(exp(terms))).
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    let s: f64 = terms.iter().map(|&t| (t - m).exp()).sum();
    m + s.ln()
}

/// JSON shape for a mixture: {dim, components: [{weight, mean, cov}]},
/// covariance flattened row-major.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    pub dim: usize,
    pub components: Vec<ComponentConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
}

impl MixtureConfig {
    pub fn build(&self) -> Result<GaussianMixture> {
        let mut comps = Vec::with_capacity(self.components.len());
        for c in &self.components {
            if c.mean.len() != self.dim {
                return Err(Error::Config(format!(
                    "component mean length {} != dim {}",
                    c.mean.len(),
                    self.dim
                )));
            }
            if c.cov.len() != self.dim * self.dim {
                return Err(Error::Config(format!(
                    "component cov length {} != dim^2 {}",
                    c.cov.len(),
                    self.dim * self.dim
                )));
            }
            let mean = DVector::from_column_slice(&c.mean);
            let cov = DMatrix::from_row_slice(self.dim, self.dim, &c.cov);
            comps.push((c.weight, mean, cov));
        }
        GaussianMixture::new(comps)
    }

    pub fn from_mixture(g: &GaussianMixture) -> Self {
        Self {
            dim: g.dim(),
            components: g
                .components()
                .iter()
                .map(|c| ComponentConfig {
                    weight: c.weight,
                    mean: c.mean.iter().copied().collect(),
                    cov: c.cov.transpose().iter().copied().collect(),
                })
                .collect(),
        }
    }
}
