//! Discriminator families d(x, t): the trainable network, the exact optimal
//! discriminator log(p_t/p_hat_t), and the oscillatory construction that
//! reaches near-optimal cross-entropy with arbitrarily bad gradients.

mod mlp;

pub use mlp::{loss_param_gradient, Activation, DiscCotangent, DiscEval, MlpDiscriminator, MlpScratch};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::mixture::{GaussianMixture, RatioField};
use crate::quad::{Grid, Region};
use crate::sde::{DiffusedMixtureCache, SdeSchedule};

/// Common evaluation surface for every discriminator family. The estimated
/// density ratio is exp(value); refinement uses input_gradient.
pub trait Discriminator: Sync {
    fn data_dim(&self) -> usize;

    /// d(x, t)
    fn value(&self, x: &DVector<f64>, t: f64) -> Result<f64>;

    /// grad_x d(x, t)
    fn input_gradient(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>>;
}

impl Discriminator for MlpDiscriminator {
    fn data_dim(&self) -> usize {
        self.data_dim()
    }

    fn value(&self, x: &DVector<f64>, t: f64) -> Result<f64> {
        MlpDiscriminator::value(self, x, t)
    }

    fn input_gradient(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        MlpDiscriminator::input_gradient(self, x, t)
    }
}

/// d identically zero; the no-op baseline.
#[derive(Debug, Clone)]
pub struct ZeroDiscriminator {
    pub dim: usize,
}

impl Discriminator for ZeroDiscriminator {
    fn data_dim(&self) -> usize {
        self.dim
    }

    fn value(&self, _x: &DVector<f64>, _t: f64) -> Result<f64> {
        Ok(0.0)
    }

    fn input_gradient(&self, _x: &DVector<f64>, _t: f64) -> Result<DVector<f64>> {
        Ok(DVector::zeros(self.dim))
    }
}

/// The exact optimal discriminator d*(x, t) = log(p_t(x)/p_hat_t(x)) for an
/// analytic mixture pair under a given schedule. Diffused marginals are
/// cached per timestep.
pub struct OptimalDiscriminator {
    p: DiffusedMixtureCache,
    p_hat: DiffusedMixtureCache,
    dim: usize,
}

impl OptimalDiscriminator {
    pub fn new(
        p: GaussianMixture,
        p_hat: GaussianMixture,
        schedule: SdeSchedule,
    ) -> Result<Self> {
        if p.dim() != p_hat.dim() {
            return Err(Error::DimensionMismatch {
                expected: p.dim(),
                got: p_hat.dim(),
            });
        }
        let dim = p.dim();
        Ok(Self {
            p: DiffusedMixtureCache::new(p, schedule),
            p_hat: DiffusedMixtureCache::new(p_hat, schedule),
            dim,
        })
    }
}

impl Discriminator for OptimalDiscriminator {
    fn data_dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>, t: f64) -> Result<f64> {
        let pt = self.p.at(t)?;
        let qt = self.p_hat.at(t)?;
        Ok(pt.log_density(x)? - qt.log_density(x)?)
    }

    fn input_gradient(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let pt = self.p.at(t)?;
        let qt = self.p_hat.at(t)?;
        Ok(pt.score(x)? - qt.score(x)?)
    }
}

/// Time-independent construction d(x) = log(r(x) + sin(omega u.x) sqrt(eps r(x)))
/// over the ratio field of a fixed pair. The perturbation keeps the
/// cross-entropy within eps of optimal while its gradient error grows
/// without bound in omega.
pub struct OscillatoryDiscriminator {
    base: RatioField,
    epsilon: f64,
    omega: f64,
    direction: DVector<f64>,
    region: Region,
}

impl OscillatoryDiscriminator {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn base(&self) -> &RatioField {
        &self.base
    }

    fn inner(&self, x: &DVector<f64>) -> Result<(f64, f64, f64)> {
        let r = self.base.log_ratio(x)?.exp();
        let phase = self.omega * self.direction.dot(x);
        let h = phase.sin() * (self.epsilon * r).sqrt();
        Ok((r, phase, r + h))
    }
}

impl Discriminator for OscillatoryDiscriminator {
    fn data_dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, x: &DVector<f64>, _t: f64) -> Result<f64> {
        let (_, _, inner) = self.inner(x)?;
        if inner <= 0.0 {
            return Err(Error::ConstructionViolated { value: inner });
        }
        Ok(inner.ln())
    }

    fn input_gradient(&self, x: &DVector<f64>, _t: f64) -> Result<DVector<f64>> {
        let (r, phase, inner) = self.inner(x)?;
        if inner <= 0.0 {
            return Err(Error::ConstructionViolated { value: inner });
        }
        let rg = self.base.ratio_gradient(x)?; // grad log r
        let sq = (self.epsilon * r).sqrt();
        // grad inner = r rg + cos(phase) omega u sq + sin(phase) (sq/2) rg
        let grad_inner = &rg * (r + 0.5 * phase.sin() * sq)
            + &self.direction * (phase.cos() * self.omega * sq);
        Ok(grad_inner / inner)
    }
}

/// Build the oscillatory construction after verifying inf r_opt > epsilon on
/// a dense grid over the region, which guarantees the pointwise bound
/// h(x)^2 / r_opt(x) <= epsilon.
pub fn build_oscillatory(
    field: &RatioField,
    epsilon: f64,
    omega: f64,
    region: Region,
    direction: Option<DVector<f64>>,
) -> Result<OscillatoryDiscriminator> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    if omega < 0.0 {
        return Err(Error::InvalidArgument("omega must be nonnegative".into()));
    }
    let dim = field.dim();
    if region.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: region.dim(),
        });
    }
    let direction = match direction {
        Some(u) => {
            if u.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: u.len(),
                });
            }
            let n = u.norm();
            if n == 0.0 {
                return Err(Error::InvalidArgument("direction must be nonzero".into()));
            }
            u / n
        }
        None => DVector::from_element(dim, 1.0 / (dim as f64).sqrt()),
    };
    let points = match dim {
        1 => 4097,
        2 => 129,
        _ => 33,
    };
    let grid = Grid::new(region.clone(), points)?;
    for x in grid.nodes() {
        let r = field.log_ratio(x)?.exp();
        if r <= epsilon {
            return Err(Error::ConstructionInfeasible {
                r_opt: r,
                epsilon,
                point: x.iter().copied().collect(),
            });
        }
    }
    Ok(OscillatoryDiscriminator {
        base: field.clone(),
        epsilon,
        omega,
        direction,
        region,
    })
}
