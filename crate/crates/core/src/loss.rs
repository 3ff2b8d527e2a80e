//! Training and evaluation objectives: batch cross-entropy and
//! gradient-matching losses, their combination, quadrature references for
//! the score-matching form, KL functionals, and the plotting field of
//! pointwise gradient errors.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::disc::Discriminator;
use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::quad::{trapezoid_nodes, Grid, Region};
use crate::sde::{DiffusedMixtureCache, SdeSchedule};

/// Weighting function lambda(t) applied inside every time integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaKind {
    /// lambda(t) = g(t)^2, which makes the training loss the integrand of
    /// the refined KL bound.
    GSquared,
    Uniform,
}

/// Which term the gamma hyperparameter multiplies in the combined loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSide {
    /// total = mse + gamma * ce
    Ce,
    /// total = ce + gamma * mse
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestepDistribution {
    Uniform,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_kind: LambdaKind,
    pub gamma: f64,
    pub gamma_on: GammaSide,
    pub t_min: f64,
    pub timestep_distribution: TimestepDistribution,
}

impl LossConfig {
    pub fn for_schedule(schedule: &SdeSchedule) -> Self {
        Self {
            lambda_kind: LambdaKind::GSquared,
            gamma: 0.1,
            gamma_on: GammaSide::Ce,
            t_min: schedule.t_min(),
            timestep_distribution: TimestepDistribution::Uniform,
        }
    }

    pub fn with_gamma(mut self, gamma: f64, side: GammaSide) -> Self {
        self.gamma = gamma;
        self.gamma_on = side;
        self
    }

    pub fn with_lambda(mut self, kind: LambdaKind) -> Self {
        self.lambda_kind = kind;
        self
    }

    pub fn lambda(&self, schedule: &SdeSchedule, t: f64) -> f64 {
        match self.lambda_kind {
            LambdaKind::GSquared => schedule.g2(t),
            LambdaKind::Uniform => 1.0,
        }
    }

    /// (ce coefficient, mse coefficient) in the combined training loss.
    pub fn term_coefficients(&self) -> (f64, f64) {
        match self.gamma_on {
            GammaSide::Ce => (self.gamma, 1.0),
            GammaSide::Mse => (1.0, self.gamma),
        }
    }
}

/// log(1 + exp(z)) without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A score model s(x, t).
pub trait ScoreFn: Sync {
    fn dim(&self) -> usize;
    fn score(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>>;
}

/// Exact score of the diffused marginals of an analytic mixture.
pub struct ExactScore {
    cache: DiffusedMixtureCache,
}

impl ExactScore {
    pub fn new(gmm: GaussianMixture, schedule: SdeSchedule) -> Self {
        Self {
            cache: DiffusedMixtureCache::new(gmm, schedule),
        }
    }

    pub fn base(&self) -> &GaussianMixture {
        self.cache.base()
    }
}

impl ScoreFn for ExactScore {
    fn dim(&self) -> usize {
        self.cache.base().dim()
    }

    fn score(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        self.cache.at(t)?.score(x)
    }
}

/// s(x, t) + w * grad_x d(x, t)
pub struct GuidedScore<'a> {
    pub base: &'a dyn ScoreFn,
    pub disc: &'a dyn Discriminator,
    pub weight: f64,
}

impl ScoreFn for GuidedScore<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn score(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let s = self.base.score(x, t)?;
        if self.weight == 0.0 {
            return Ok(s);
        }
        Ok(s + self.disc.input_gradient(x, t)? * self.weight)
    }
}

/// One perturbed sample: clean point, timestep, and its kernel draw.
#[derive(Debug, Clone)]
pub struct PerturbedItem {
    pub x0: DVector<f64>,
    pub t: f64,
    pub xt: DVector<f64>,
}

/// Batch cross-entropy between real and generated perturbed samples:
/// (1/b) sum lambda(t_i) [ -log sigma(d(x_i, t_i)) - log(1 - sigma(d(xhat_i, t_i))) ].
pub fn ce_loss(
    disc: &dyn Discriminator,
    real: &[PerturbedItem],
    fake: &[PerturbedItem],
    cfg: &LossConfig,
    schedule: &SdeSchedule,
) -> Result<f64> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::InvalidArgument("ce_loss needs nonempty batches".into()));
    }
    if real.len() != fake.len() {
        return Err(Error::InvalidArgument(format!(
            "ce_loss batch sizes differ: {} vs {}",
            real.len(),
            fake.len()
        )));
    }
    let mut acc = 0.0;
    for (r, f) in real.iter().zip(fake) {
        let lam = cfg.lambda(schedule, r.t);
        let dr = disc.value(&r.xt, r.t)?;
        let df = disc.value(&f.xt, f.t)?;
        if !dr.is_finite() || !df.is_finite() {
            return Err(Error::DivergedLoss);
        }
        acc += lam * (softplus(-dr) + softplus(df));
    }
    Ok(acc / real.len() as f64)
}

/// Batch gradient-matching loss on kernel-perturbed real samples:
/// (1/b) sum lambda(t_i) || kernel_score(x0_i, xt_i) - s(xt_i, t_i) - grad d(xt_i, t_i) ||^2.
pub fn mse_d_loss(
    disc: &dyn Discriminator,
    score_model: &dyn ScoreFn,
    batch: &[PerturbedItem],
    cfg: &LossConfig,
    schedule: &SdeSchedule,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("mse_d_loss needs a nonempty batch".into()));
    }
    let mut acc = 0.0;
    for item in batch {
        let lam = cfg.lambda(schedule, item.t);
        let kernel = schedule.kernel_at(item.t)?;
        let ks = kernel.score(&item.x0, &item.xt)?;
        let s = score_model.score(&item.xt, item.t)?;
        let g = disc.input_gradient(&item.xt, item.t)?;
        let resid = ks - s - g;
        if resid.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedLoss);
        }
        acc += lam * resid.norm_squared();
    }
    Ok(acc / batch.len() as f64)
}

/// Combined training loss; which side carries gamma is configurable.
pub fn train_loss(
    disc: &dyn Discriminator,
    score_model: &dyn ScoreFn,
    real: &[PerturbedItem],
    fake: &[PerturbedItem],
    cfg: &LossConfig,
    schedule: &SdeSchedule,
) -> Result<f64> {
    let (ce_w, mse_w) = cfg.term_coefficients();
    let ce = ce_loss(disc, real, fake, cfg, schedule)?;
    let mse = mse_d_loss(disc, score_model, real, cfg, schedule)?;
    Ok(mse_w * mse + ce_w * ce)
}

/// Smallest box holding `pad_sigmas` standard deviations around every
/// component mean of the given mixtures, and the origin-centered unit-scale
/// cloud the diffusion contracts onto.
pub fn bounding_region(mixtures: &[&GaussianMixture], pad_sigmas: f64) -> Result<Region> {
    let dim = mixtures
        .first()
        .ok_or_else(|| Error::InvalidArgument("need at least one mixture".into()))?
        .dim();
    let mut lo = vec![-pad_sigmas; dim];
    let mut hi = vec![pad_sigmas; dim];
    for g in mixtures {
        for c in g.components() {
            for a in 0..dim {
                let sd = c.cov[(a, a)].sqrt();
                lo[a] = lo[a].min(c.mean[a] - pad_sigmas * sd);
                hi[a] = hi[a].max(c.mean[a] + pad_sigmas * sd);
            }
        }
    }
    Region::new(lo, hi)
}

const COVERAGE: f64 = 1.0 - 1e-6;

/// Quadrature reference for the score-matching form of the discriminator
/// loss: int lambda(t) E_{P_t} || grad log(p_t/p_hat_t) - grad d ||^2 dt,
/// trapezoid over t, tensor-product trapezoid over x.
pub fn sm_d_loss_quadrature(
    disc: &dyn Discriminator,
    p: &GaussianMixture,
    p_hat: &GaussianMixture,
    schedule: &SdeSchedule,
    cfg: &LossConfig,
    grid: &Grid,
    n_time: usize,
) -> Result<f64> {
    if p.dim() > 2 {
        return Err(Error::InvalidArgument(
            "quadrature reference supports dim <= 2".into(),
        ));
    }
    if n_time < 50 {
        return Err(Error::InvalidArgument(
            "score-matching quadrature needs >= 50 time nodes".into(),
        ));
    }
    let (nodes, weights) = trapezoid_nodes(cfg.t_min, schedule.horizon, n_time);
    let mut total = 0.0;
    for (&t, &wt) in nodes.iter().zip(&weights) {
        let pt = schedule.diffuse(p, t)?;
        let qt = schedule.diffuse(p_hat, t)?;
        let lam = cfg.lambda(schedule, t);
        let inner = grid.expectation_checked(&pt, COVERAGE, |x| {
            let rg = pt.score(x).unwrap() - qt.score(x).unwrap();
            let g = disc.input_gradient(x, t).unwrap();
            (rg - g).norm_squared()
        })?;
        total += wt * lam * inner;
    }
    Ok(total)
}

/// E_{P_t}-weighted squared gradient error at one fixed t-slice of a ratio
/// field (no lambda weighting). The weighting density is the field numerator.
pub fn gradient_error_quadrature(
    field: &crate::mixture::RatioField,
    disc: &dyn Discriminator,
    t: f64,
    grid: &Grid,
) -> Result<f64> {
    grid.expectation_checked(field.numerator(), COVERAGE, |x| {
        let rg = field.ratio_gradient(x).unwrap();
        let g = disc.input_gradient(x, t).unwrap();
        (rg - g).norm_squared()
    })
}

/// Fixed-t cross-entropy of a discriminator against a mixture pair by
/// quadrature (lambda = 1): E_p[-log sigma(d)] + E_phat[-log(1 - sigma(d))].
pub fn ce_quadrature(
    field: &crate::mixture::RatioField,
    disc: &dyn Discriminator,
    t: f64,
    grid: &Grid,
) -> Result<f64> {
    let real = grid.expectation_checked(field.numerator(), COVERAGE, |x| {
        softplus(-disc.value(x, t).unwrap())
    })?;
    let fake = grid.expectation_checked(field.denominator(), COVERAGE, |x| {
        softplus(disc.value(x, t).unwrap())
    })?;
    Ok(real + fake)
}

/// Monte-Carlo / trapezoid estimate of a KL functional with standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KlEstimate {
    pub value: f64,
    /// Combined uncertainty: Monte-Carlo standard error plus a Richardson
    /// estimate of the time-discretization error.
    pub std_error: f64,
    /// The terminal KL(P_T || Q) component of the estimate.
    pub terminal_kl: f64,
}

/// KL(P || model) through the path-space identity: KL(P_T || Q) plus
/// 1/2 int g^2(t) E_{P_t} || grad log p_t - s(x,t) ||^2 dt, Monte Carlo over
/// x at each of `n_nodes` trapezoid nodes with `mc` draws per node.
pub fn kl_learned(
    p: &GaussianMixture,
    s_theta: &dyn ScoreFn,
    schedule: &SdeSchedule,
    mc: usize,
    n_nodes: usize,
    seed: u64,
) -> Result<KlEstimate> {
    kl_path_estimate(p, s_theta, schedule, mc, n_nodes, seed)
}

/// Same estimator with the refined score s + w grad d. At w = 0 this is
/// bit-for-bit kl_learned on the same seed.
pub fn kl_refined(
    p: &GaussianMixture,
    s_theta: &dyn ScoreFn,
    disc: &dyn Discriminator,
    w: f64,
    schedule: &SdeSchedule,
    mc: usize,
    n_nodes: usize,
    seed: u64,
) -> Result<KlEstimate> {
    if w == 0.0 {
        return kl_learned(p, s_theta, schedule, mc, n_nodes, seed);
    }
    let guided = GuidedScore {
        base: s_theta,
        disc,
        weight: w,
    };
    kl_path_estimate(p, &guided, schedule, mc, n_nodes, seed)
}

fn kl_path_estimate(
    p: &GaussianMixture,
    s_eff: &dyn ScoreFn,
    schedule: &SdeSchedule,
    mc: usize,
    n_nodes: usize,
    seed: u64,
) -> Result<KlEstimate> {
    if mc < 2 {
        return Err(Error::InvalidArgument("kl estimate needs mc >= 2".into()));
    }
    if n_nodes < 3 || n_nodes % 2 == 0 {
        return Err(Error::InvalidArgument(
            "kl estimate needs an odd number of time nodes >= 3".into(),
        ));
    }
    let cache = DiffusedMixtureCache::new(p.clone(), *schedule);
    let (nodes, weights) = trapezoid_nodes(schedule.t_min(), schedule.horizon, n_nodes);
    let mut means = vec![0.0; n_nodes];
    let mut vars = vec![0.0; n_nodes];
    for (k, &t) in nodes.iter().enumerate() {
        let pt = cache.at(t)?;
        let g2 = schedule.g2(t);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64 + 1);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..mc {
            let x = pt.sample_one(&mut rng);
            let diff = pt.score(&x)? - s_eff.score(&x, t)?;
            let v = 0.5 * g2 * diff.norm_squared();
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / mc as f64;
        means[k] = mean;
        vars[k] = (sumsq / mc as f64 - mean * mean).max(0.0) * mc as f64 / (mc - 1) as f64;
    }
    let integral_fine: f64 = means.iter().zip(&weights).map(|(m, w)| m * w).sum();
    // coarse trapezoid on every other node for a Richardson error estimate
    let m_half = (n_nodes - 1) / 2;
    let h2 = (schedule.horizon - schedule.t_min()) / m_half as f64;
    let mut integral_coarse = 0.0;
    for j in 0..=m_half {
        let w = if j == 0 || j == m_half { 0.5 * h2 } else { h2 };
        integral_coarse += w * means[2 * j];
    }
    let quad_err = (integral_fine - integral_coarse).abs() / 3.0;

    // terminal KL(P_T || Q) by Monte Carlo of log(p_T / q) under P_T
    let p_terminal = cache.at(schedule.horizon)?;
    let q = GaussianMixture::standard(p.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n_nodes as u64 + 1);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..mc {
        let x = p_terminal.sample_one(&mut rng);
        let v = p_terminal.log_density(&x)? - q.log_density(&x)?;
        sum += v;
        sumsq += v * v;
    }
    let terminal_mean = sum / mc as f64;
    let terminal_var =
        (sumsq / mc as f64 - terminal_mean * terminal_mean).max(0.0) * mc as f64 / (mc - 1) as f64;

    let mc_var: f64 = vars
        .iter()
        .zip(&weights)
        .map(|(v, w)| w * w * v / mc as f64)
        .sum::<f64>()
        + terminal_var / mc as f64;
    Ok(KlEstimate {
        value: integral_fine + terminal_mean,
        std_error: (mc_var + quad_err * quad_err).sqrt(),
        terminal_kl: terminal_mean,
    })
}

/// Monte-Carlo estimate of the expectation of the batch gradient-matching
/// loss: time-stratified over trapezoid nodes with antithetic kernel noise,
/// so that estimates for different discriminators under one seed share all
/// discriminator-independent randomness.
pub fn expected_mse_d_loss(
    disc: &dyn Discriminator,
    s_theta: &dyn ScoreFn,
    p: &GaussianMixture,
    schedule: &SdeSchedule,
    cfg: &LossConfig,
    n_nodes: usize,
    pairs_per_node: usize,
    seed: u64,
) -> Result<f64> {
    if n_nodes < 2 || pairs_per_node == 0 {
        return Err(Error::InvalidArgument(
            "expected_mse_d_loss needs >= 2 nodes and >= 1 pair per node".into(),
        ));
    }
    let (nodes, weights) = trapezoid_nodes(cfg.t_min, schedule.horizon, n_nodes);
    let dim = p.dim();
    let mut total = 0.0;
    for (k, (&t, &wt)) in nodes.iter().zip(&weights).enumerate() {
        let kernel = schedule.kernel_at(t)?;
        let lam = cfg.lambda(schedule, t);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64 + 1);
        let mut acc = 0.0;
        for _ in 0..pairs_per_node {
            let x0 = p.sample_one(&mut rng);
            let xi = DVector::from_fn(dim, |_, _| {
                rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal)
            });
            for sign in [1.0, -1.0] {
                let xt = &x0 * kernel.mean_scale + &xi * (sign * kernel.std);
                let ks = &xi * (-sign / kernel.std);
                let resid = ks - s_theta.score(&xt, t)? - disc.input_gradient(&xt, t)?;
                acc += 0.5 * resid.norm_squared();
            }
        }
        total += wt * lam * acc / pairs_per_node as f64;
    }
    Ok(total)
}

/// Pointwise squared gradient error on a grid at each requested timestep,
/// plus its P_t-weighted mean, for plotting and comparisons.
#[derive(Debug, Clone)]
pub struct GradientFieldSlice {
    pub t: f64,
    /// E_{P_t}[ ||grad log(p_t/p_hat_t) - grad d||^2 ] normalized by captured mass.
    pub weighted_mean: f64,
    pub mass: f64,
    /// (grid node, squared error, p_t density), grid row-major.
    pub points: Vec<(Vec<f64>, f64, f64)>,
}

pub fn gradient_field_mse(
    disc: &dyn Discriminator,
    p: &GaussianMixture,
    p_hat: &GaussianMixture,
    schedule: &SdeSchedule,
    grid: &Grid,
    t_set: &[f64],
) -> Result<Vec<GradientFieldSlice>> {
    if p.dim() > 2 {
        return Err(Error::InvalidArgument("gradient field supports dim <= 2".into()));
    }
    let mut out = Vec::with_capacity(t_set.len());
    for &t in t_set {
        let pt = schedule.diffuse(p, t)?;
        let qt = schedule.diffuse(p_hat, t)?;
        let mut points = Vec::with_capacity(grid.len());
        let mut mass = 0.0;
        let mut acc = 0.0;
        for (x, w) in grid.nodes().iter().zip(grid.weights()) {
            let rg = pt.score(x)? - qt.score(x)?;
            let g = disc.input_gradient(x, t)?;
            let sq = (rg - g).norm_squared();
            let dens = pt.log_density(x)?.exp();
            mass += w * dens;
            acc += w * dens * sq;
            points.push((x.iter().copied().collect(), sq, dens));
        }
        out.push(GradientFieldSlice {
            t,
            weighted_mean: acc / mass,
            mass,
            points,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disc::{build_oscillatory, OptimalDiscriminator, ZeroDiscriminator};
    use crate::mixture::RatioField;
    use approx::assert_relative_eq;
    use rand::Rng;

    struct ConstantDisc {
        dim: usize,
        value: f64,
    }

    impl Discriminator for ConstantDisc {
        fn data_dim(&self) -> usize {
            self.dim
        }
        fn value(&self, _x: &DVector<f64>, _t: f64) -> Result<f64> {
            Ok(self.value)
        }
        fn input_gradient(&self, _x: &DVector<f64>, _t: f64) -> Result<DVector<f64>> {
            Ok(DVector::zeros(self.dim))
        }
    }

    fn uniform_cfg(schedule: &SdeSchedule) -> LossConfig {
        LossConfig::for_schedule(schedule).with_lambda(LambdaKind::Uniform)
    }

    fn batch_at(t: f64, xs: &[f64]) -> Vec<PerturbedItem> {
        xs.iter()
            .map(|&x| PerturbedItem {
                x0: DVector::from_element(1, x),
                t,
                xt: DVector::from_element(1, x),
            })
            .collect()
    }

    #[test]
    fn ce_of_zero_discriminator_is_two_log_two() {
        let schedule = SdeSchedule::default_subvp();
        let cfg = uniform_cfg(&schedule);
        let d = ZeroDiscriminator { dim: 1 };
        let real = batch_at(0.5, &[0.1, -0.7, 2.0]);
        let fake = batch_at(0.5, &[0.4, 1.0, -0.2]);
        let v = ce_loss(&d, &real, &fake, &cfg, &schedule).unwrap();
        assert_relative_eq!(v, 2.0 * std::f64::consts::LN_2, max_relative = 1e-14);
    }

    #[test]
    fn ce_real_term_saturates_for_large_positive_d() {
        let schedule = SdeSchedule::default_subvp();
        let cfg = uniform_cfg(&schedule);
        let d = ConstantDisc { dim: 1, value: 50.0 };
        let real = batch_at(0.5, &[0.0]);
        let fake = batch_at(0.5, &[0.0]);
        let v = ce_loss(&d, &real, &fake, &cfg, &schedule).unwrap();
        // real term ~ 0; fake term ~ 50
        assert!((v - 50.0).abs() < 1e-9, "v = {v}");
    }

    #[test]
    fn ce_is_invariant_under_swap_and_negation() {
        struct Neg<'a>(&'a dyn Discriminator);
        impl Discriminator for Neg<'_> {
            fn data_dim(&self) -> usize {
                self.0.data_dim()
            }
            fn value(&self, x: &DVector<f64>, t: f64) -> Result<f64> {
                Ok(-self.0.value(x, t)?)
            }
            fn input_gradient(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
                Ok(-self.0.input_gradient(x, t)?)
            }
        }
        let schedule = SdeSchedule::default_subvp();
        let cfg = LossConfig::for_schedule(&schedule);
        let p = GaussianMixture::standard(1);
        let q = GaussianMixture::scalar(0.8, 1.2).unwrap();
        let d = OptimalDiscriminator::new(p, q, schedule).unwrap();
        let real = batch_at(0.3, &[0.2, -1.0, 0.9]);
        let fake = batch_at(0.3, &[1.1, 0.0, -0.4]);
        let a = ce_loss(&d, &real, &fake, &cfg, &schedule).unwrap();
        let b = ce_loss(&Neg(&d), &fake, &real, &cfg, &schedule).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-13);
    }

    #[test]
    fn ce_quadrature_of_identical_pair_at_optimum_is_two_log_two() {
        let p = GaussianMixture::standard(1);
        let field = RatioField::new(p.clone(), p).unwrap();
        let d = ZeroDiscriminator { dim: 1 };
        let grid = Grid::new(Region::new(vec![-8.0], vec![8.0]).unwrap(), 2001).unwrap();
        let v = ce_quadrature(&field, &d, 0.0, &grid).unwrap();
        assert!((v - 2.0 * std::f64::consts::LN_2).abs() < 1e-8, "v = {v}");
    }

    #[test]
    fn mse_term_at_kernel_mode_is_lambda_times_score_norm() {
        let schedule = SdeSchedule::default_subvp();
        let cfg = LossConfig::for_schedule(&schedule);
        let p_hat = GaussianMixture::scalar(1.0, 1.0).unwrap();
        let s_theta = ExactScore::new(p_hat, schedule);
        let d = ZeroDiscriminator { dim: 1 };
        let t = 0.5;
        let k = schedule.kernel_at(t).unwrap();
        let x0 = DVector::from_element(1, 0.7);
        let batch = vec![PerturbedItem {
            x0: x0.clone(),
            t,
            xt: &x0 * k.mean_scale,
        }];
        let v = mse_d_loss(&d, &s_theta, &batch, &cfg, &schedule).unwrap();
        let s = s_theta.score(&(&x0 * k.mean_scale), t).unwrap();
        assert_relative_eq!(
            v,
            cfg.lambda(&schedule, t) * s.norm_squared(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn train_loss_composition() {
        let schedule = SdeSchedule::default_subvp();
        let p = GaussianMixture::standard(1);
        let p_hat = GaussianMixture::scalar(0.5, 1.0).unwrap();
        let s_theta = ExactScore::new(p_hat.clone(), schedule);
        let d = OptimalDiscriminator::new(p, p_hat, schedule).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = 0.4;
        let k = schedule.kernel_at(t).unwrap();
        let make = |rng: &mut ChaCha8Rng| {
            (0..8)
                .map(|_| {
                    let x0 = DVector::from_element(1, rng.gen_range(-2.0..2.0));
                    let xi: f64 = rng.sample(rand_distr::StandardNormal);
                    let xt = &x0 * k.mean_scale + DVector::from_element(1, xi * k.std);
                    PerturbedItem { x0, t, xt }
                })
                .collect::<Vec<_>>()
        };
        let real = make(&mut rng);
        let fake = make(&mut rng);

        // gamma = 0 on the ce side: total equals the mse term exactly
        let cfg0 = LossConfig::for_schedule(&schedule).with_gamma(0.0, GammaSide::Ce);
        let mse = mse_d_loss(&d, &s_theta, &real, &cfg0, &schedule).unwrap();
        let tot = train_loss(&d, &s_theta, &real, &fake, &cfg0, &schedule).unwrap();
        assert_eq!(tot, mse);

        // gamma = 1: exact sum of the two precomputed terms
        let cfg1 = LossConfig::for_schedule(&schedule).with_gamma(1.0, GammaSide::Ce);
        let ce = ce_loss(&d, &real, &fake, &cfg1, &schedule).unwrap();
        let mse1 = mse_d_loss(&d, &s_theta, &real, &cfg1, &schedule).unwrap();
        let tot1 = train_loss(&d, &s_theta, &real, &fake, &cfg1, &schedule).unwrap();
        assert!((tot1 - (ce + mse1)).abs() < 1e-12);

        // gamma on the mse side with gamma = 0: pure ce
        let cfg2 = LossConfig::for_schedule(&schedule).with_gamma(0.0, GammaSide::Mse);
        let tot2 = train_loss(&d, &s_theta, &real, &fake, &cfg2, &schedule).unwrap();
        assert_eq!(tot2, ce_loss(&d, &real, &fake, &cfg2, &schedule).unwrap());
    }

    #[test]
    fn sm_quadrature_vanishes_for_optimal_discriminator() {
        let schedule = SdeSchedule::default_subvp();
        let cfg = LossConfig::for_schedule(&schedule);
        let p = GaussianMixture::standard(1);
        let p_hat = GaussianMixture::scalar(0.6, 1.0).unwrap();
        let d = OptimalDiscriminator::new(p.clone(), p_hat.clone(), schedule).unwrap();
        let grid = Grid::new(Region::new(vec![-9.0], vec![9.0]).unwrap(), 513).unwrap();
        let v = sm_d_loss_quadrature(&d, &p, &p_hat, &schedule, &cfg, &grid, 51).unwrap();
        assert!(v.abs() < 1e-8, "v = {v}");
    }

    #[test]
    fn sm_quadrature_of_zero_disc_matches_mc_oracle() {
        let schedule = SdeSchedule::default_subvp();
        let cfg = LossConfig::for_schedule(&schedule);
        let p = GaussianMixture::standard(1);
        let p_hat = GaussianMixture::scalar(0.6, 1.0).unwrap();
        let d = ZeroDiscriminator { dim: 1 };
        let grid = Grid::new(Region::new(vec![-9.0], vec![9.0]).unwrap(), 513).unwrap();
        let quad = sm_d_loss_quadrature(&d, &p, &p_hat, &schedule, &cfg, &grid, 201).unwrap();

        // independent MC oracle: t ~ U[t_min, T], x ~ P_t
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let t = rng.gen_range(cfg.t_min..schedule.horizon);
            let pt = schedule.diffuse(&p, t).unwrap();
            let qt = schedule.diffuse(&p_hat, t).unwrap();
            let x = pt.sample_one(&mut rng);
            let rg = (pt.score(&x).unwrap() - qt.score(&x).unwrap()).norm_squared();
            let v = (schedule.horizon - cfg.t_min) * cfg.lambda(&schedule, t) * rg;
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(
            (quad - mean).abs() <= 2.0 * se + 1e-4,
            "quad {quad} vs mc {mean} +- {se}"
        );
    }

    #[test]
    fn sm_quadrature_grows_with_oscillation_frequency() {
        let p = GaussianMixture::standard(1);
        let p_hat = GaussianMixture::scalar(0.6, 1.0).unwrap();
        let field = RatioField::new(p.clone(), p_hat.clone()).unwrap();
        let region = Region::new(vec![-8.0], vec![7.0]).unwrap();
        let grid = Grid::new(region.clone(), 8193).unwrap();
        let mut prev = -1.0;
        for omega in [1.0, 4.0, 16.0, 64.0] {
            let d = build_oscillatory(&field, 0.01, omega, region.clone(), None).unwrap();
            let v = gradient_error_quadrature(&field, &d, 0.0, &grid).unwrap();
            assert!(v > prev, "omega {omega}: {v} <= {prev}");
            prev = v;
        }
    }

    #[test]
    fn kl_of_exact_score_is_terminal_only() {
        let schedule = SdeSchedule::default_subvp();
        let p = GaussianMixture::standard(1);
        let s = ExactScore::new(p.clone(), schedule);
        let est = kl_learned(&p, &s, &schedule, 512, 65, 7).unwrap();
        assert!(est.value.abs() <= 1e-3, "value {}", est.value);
    }

    #[test]
    fn kl_matches_analytic_gaussian_divergence() {
        // P = N(0,1), s_theta = exact diffused score of N(mu,1).
        // For the subVP schedule the path integral has the closed form
        // mu^2/2 (F(a(t_min)) - F(a(T))) with a = exp(-int beta) and
        // F(a) = a/(1 - a + a^2), approaching KL(P||N(mu,1)) = mu^2/2.
        let schedule = SdeSchedule::default_subvp();
        let mu = 0.5;
        let p = GaussianMixture::standard(1);
        let s = ExactScore::new(GaussianMixture::scalar(mu, 1.0).unwrap(), schedule);
        let est = kl_learned(&p, &s, &schedule, 512, 201, 11).unwrap();
        let cap_f = |a: f64| a / (1.0 - a + a * a);
        let a_lo = (-schedule.beta_integral(schedule.t_min())).exp();
        let a_hi = (-schedule.beta_integral(schedule.horizon)).exp();
        let v_t = a_hi + (1.0 - a_hi) * (1.0 - a_hi);
        let expected =
            0.5 * mu * mu * (cap_f(a_lo) - cap_f(a_hi)) + 0.5 * (v_t - 1.0 - v_t.ln());
        assert!((expected - 0.125).abs() < 1e-4, "analytic sanity: {expected}");
        assert!(
            (est.value - expected).abs() <= 3.0 * est.std_error,
            "value {} +- {} vs analytic {expected}",
            est.value,
            est.std_error
        );
    }

    #[test]
    fn kl_std_error_shrinks_with_more_draws() {
        let schedule = SdeSchedule::default_subvp();
        let p = GaussianMixture::new(vec![
            (
                0.5,
                DVector::from_element(1, -1.0),
                nalgebra::DMatrix::from_element(1, 1, 0.6),
            ),
            (
                0.5,
                DVector::from_element(1, 1.0),
                nalgebra::DMatrix::from_element(1, 1, 1.1),
            ),
        ])
        .unwrap();
        let s = ExactScore::new(GaussianMixture::scalar(0.4, 1.0).unwrap(), schedule);
        let lo = kl_learned(&p, &s, &schedule, 256, 65, 3).unwrap();
        let hi = kl_learned(&p, &s, &schedule, 1024, 65, 3).unwrap();
        // doubling mc twice should halve the MC part of the SE within 30%
        let ratio = lo.std_error / hi.std_error;
        assert!(ratio > 1.4 && ratio < 2.6, "ratio {ratio}");
    }

    #[test]
    fn kl_refined_with_zero_weight_is_bitwise_kl_learned() {
        let schedule = SdeSchedule::default_subvp();
        let p = GaussianMixture::standard(1);
        let p_hat = GaussianMixture::scalar(0.5, 1.0).unwrap();
        let s = ExactScore::new(p_hat.clone(), schedule);
        let d = OptimalDiscriminator::new(p.clone(), p_hat, schedule).unwrap();
        let a = kl_learned(&p, &s, &schedule, 128, 33, 5).unwrap();
        let b = kl_refined(&p, &s, &d, 0.0, &schedule, 128, 33, 5).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn kl_refined_with_optimal_disc_reaches_terminal_kl() {
        let schedule = SdeSchedule::default_subvp();
        let p = GaussianMixture::standard(1);
        let p_hat = GaussianMixture::scalar(0.7, 1.0).unwrap();
        let s = ExactScore::new(p_hat.clone(), schedule);
        let d = OptimalDiscriminator::new(p.clone(), p_hat, schedule).unwrap();
        let est = kl_refined(&p, &s, &d, 1.0, &schedule, 256, 65, 9).unwrap();
        assert!(
            (est.value - est.terminal_kl).abs() <= 3.0 * est.std_error + 1e-12,
            "value {} terminal {}",
            est.value,
            est.terminal_kl
        );
    }

    #[test]
    fn gradient_field_is_zero_for_optimal_and_ratio_norm_for_zero() {
        let schedule = SdeSchedule::default_subvp();
        let p = GaussianMixture::standard(2);
        let p_hat = GaussianMixture::isotropic(DVector::from_column_slice(&[1.0, -0.5]), 1.0)
            .unwrap();
        let grid = Grid::new(
            Region::new(vec![-4.0, -4.0], vec![4.0, 4.0]).unwrap(),
            17,
        )
        .unwrap();
        let d_opt = OptimalDiscriminator::new(p.clone(), p_hat.clone(), schedule).unwrap();
        let slices =
            gradient_field_mse(&d_opt, &p, &p_hat, &schedule, &grid, &[0.1, 0.5]).unwrap();
        for s in &slices {
            assert!(s.weighted_mean < 1e-20, "mean {}", s.weighted_mean);
        }
        let d0 = ZeroDiscriminator { dim: 2 };
        let slices0 =
            gradient_field_mse(&d0, &p, &p_hat, &schedule, &grid, &[0.3]).unwrap();
        let t = 0.3;
        let pt = schedule.diffuse(&p, t).unwrap();
        let qt = schedule.diffuse(&p_hat, t).unwrap();
        for (x, sq, _) in &slices0[0].points {
            let xv = DVector::from_column_slice(x);
            let rg = (pt.score(&xv).unwrap() - qt.score(&xv).unwrap()).norm_squared();
            assert_relative_eq!(*sq, rg, max_relative = 1e-12);
        }
    }

    #[test]
    fn nonempty_batch_required() {
        let schedule = SdeSchedule::default_subvp();
        let cfg = LossConfig::for_schedule(&schedule);
        let d = ZeroDiscriminator { dim: 1 };
        assert!(ce_loss(&d, &[], &[], &cfg, &schedule).is_err());
    }
}
