//! VP / subVP noise schedules with closed-form perturbation kernels,
//! exact mixture diffusion, and Euler-Maruyama reverse-time sampling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdeKind {
    Vp,
    SubVp,
}

/// Linear-beta schedule beta(t) = beta_min + t (beta_max - beta_min) / T.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SdeSchedule {
    pub kind: SdeKind,
    pub beta_min: f64,
    pub beta_max: f64,
    pub horizon: f64,
    /// t_min = t_min_factor * horizon; the kernel is singular at t = 0.
    pub t_min_factor: f64,
}

impl SdeSchedule {
    pub fn new(kind: SdeKind, beta_min: f64, beta_max: f64, horizon: f64) -> Result<Self> {
        if !(beta_min > 0.0) || beta_max < beta_min || !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bad schedule: beta_min={beta_min}, beta_max={beta_max}, T={horizon}"
            )));
        }
        Ok(Self {
            kind,
            beta_min,
            beta_max,
            horizon,
            t_min_factor: 1e-3,
        })
    }

    /// Default subVP schedule with the standard (0.1, 20) beta range.
    pub fn default_subvp() -> Self {
        Self::new(SdeKind::SubVp, 0.1, 20.0, 1.0).unwrap()
    }

    pub fn default_vp() -> Self {
        Self::new(SdeKind::Vp, 0.1, 20.0, 1.0).unwrap()
    }

    pub fn with_t_min_factor(mut self, f: f64) -> Self {
        self.t_min_factor = f;
        self
    }

    pub fn t_min(&self) -> f64 {
        self.t_min_factor * self.horizon
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.beta_min + t * (self.beta_max - self.beta_min) / self.horizon
    }

    /// Closed form of int_0^t beta(s) ds for the linear schedule.
    pub fn beta_integral(&self, t: f64) -> f64 {
        self.beta_min * t + (self.beta_max - self.beta_min) * t * t / (2.0 * self.horizon)
    }

    /// Kernel mean scale m(t) = exp(-1/2 int_0^t beta).
    pub fn mean_scale(&self, t: f64) -> f64 {
        (-0.5 * self.beta_integral(t)).exp()
    }

    /// Squared diffusion coefficient g(t)^2.
    pub fn g2(&self, t: f64) -> f64 {
        let b = self.beta(t);
        match self.kind {
            SdeKind::Vp => b,
            SdeKind::SubVp => b * (1.0 - (-2.0 * self.beta_integral(t)).exp()),
        }
    }

    /// Drift f(x, t) = -1/2 beta(t) x for both kinds.
    pub fn drift_coeff(&self, t: f64) -> f64 {
        -0.5 * self.beta(t)
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "t={t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Closed-form Gaussian perturbation kernel x_t | x_0 at time t.
    pub fn kernel_at(&self, t: f64) -> Result<PerturbationKernel> {
        self.check_t(t)?;
        let m = self.mean_scale(t);
        let var = match self.kind {
            SdeKind::Vp => 1.0 - m * m,
            SdeKind::SubVp => {
                let v = 1.0 - m * m;
                v * v
            }
        };
        Ok(PerturbationKernel {
            t,
            mean_scale: m,
            std: var.max(0.0).sqrt(),
        })
    }

    /// Exact diffused marginal of a Gaussian mixture at time t:
    /// component (w, mu, Sigma) becomes (w, m mu, m^2 Sigma + sigma^2 I).
    pub fn diffuse(&self, gmm: &GaussianMixture, t: f64) -> Result<GaussianMixture> {
        let k = self.kernel_at(t)?;
        let dim = gmm.dim();
        let eye = DMatrix::<f64>::identity(dim, dim);
        let comps = gmm
            .components()
            .iter()
            .map(|c| {
                (
                    c.weight,
                    &c.mean * k.mean_scale,
                    &c.cov * (k.mean_scale * k.mean_scale) + &eye * (k.std * k.std),
                )
            })
            .collect();
        GaussianMixture::new(comps)
    }

    /// One-shot exact forward draw x_t = m(t) x_0 + sigma(t) xi.
    pub fn forward_sample_path<R: Rng>(
        &self,
        x0: &DVector<f64>,
        t: f64,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        let k = self.kernel_at(t)?;
        let xi = DVector::from_fn(x0.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        Ok(x0 * k.mean_scale + xi * k.std)
    }

    /// Euler-Maruyama integration of the reverse SDE from x_T ~ N(0, I)
    /// down to t_min on a uniform grid. One deterministic RNG substream per
    /// sample path, so the output is independent of thread scheduling.
    pub fn reverse_sample<F>(
        &self,
        score_fn: F,
        n_steps: usize,
        n_samples: usize,
        dim: usize,
        seed: u64,
    ) -> Result<DMatrix<f64>>
    where
        F: Fn(&DVector<f64>, f64) -> DVector<f64> + Sync,
    {
        if n_steps < 1 {
            return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
        }
        let t_min = self.t_min();
        let dt = (self.horizon - t_min) / n_steps as f64;
        let paths: Vec<std::result::Result<DVector<f64>, usize>> = (0..n_samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64 + 1);
                let mut x =
                    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                for step in 0..n_steps {
                    let t = self.horizon - step as f64 * dt;
                    let s = score_fn(&x, t);
                    if s.iter().any(|v| !v.is_finite()) {
                        return Err(step);
                    }
                    let g2 = self.g2(t);
                    let drift = &x * self.drift_coeff(t) - &s * g2;
                    let noise = DVector::from_fn(dim, |_, _| {
                        rng.sample::<f64, _>(StandardNormal)
                    });
                    x -= drift * dt;
                    x += noise * (g2 * dt).sqrt();
                }
                Ok(x)
            })
            .collect();
        let mut out = DMatrix::zeros(n_samples, dim);
        for (i, p) in paths.into_iter().enumerate() {
            match p {
                Ok(x) => out.row_mut(i).copy_from(&x.transpose()),
                Err(step) => return Err(Error::DivergedSampler { step }),
            }
        }
        Ok(out)
    }

    /// Forward Euler-Maruyama simulation of the noising SDE from x0 up to
    /// time t. Used as a Monte-Carlo cross-check of the closed-form kernel.
    pub fn forward_simulate<R: Rng>(
        &self,
        x0: &DVector<f64>,
        t: f64,
        n_steps: usize,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        self.check_t(t)?;
        let dt = t / n_steps as f64;
        let mut x = x0.clone();
        for step in 0..n_steps {
            let s = step as f64 * dt;
            let g2 = self.g2(s);
            let noise =
                DVector::from_fn(x.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            x += &x * (self.drift_coeff(s) * dt) + noise * (g2 * dt).sqrt();
        }
        Ok(x)
    }
}

/// Diffused marginals of one mixture, cached per timestep. Evaluation-heavy
/// consumers (exact scores, optimal discriminators) hit the same grid of
/// timesteps over and over; the cache makes those lookups cheap and is safe
/// to share across worker threads.
pub struct DiffusedMixtureCache {
    gmm: GaussianMixture,
    schedule: SdeSchedule,
    cache: std::sync::RwLock<std::collections::BTreeMap<u64, std::sync::Arc<GaussianMixture>>>,
}

impl DiffusedMixtureCache {
    pub fn new(gmm: GaussianMixture, schedule: SdeSchedule) -> Self {
        Self {
            gmm,
            schedule,
            cache: std::sync::RwLock::new(std::collections::BTreeMap::new()),
        }
    }

    pub fn base(&self) -> &GaussianMixture {
        &self.gmm
    }

    pub fn schedule(&self) -> &SdeSchedule {
        &self.schedule
    }

    pub fn at(&self, t: f64) -> Result<std::sync::Arc<GaussianMixture>> {
        let key = t.to_bits();
        if let Some(hit) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let diffused = std::sync::Arc::new(self.schedule.diffuse(&self.gmm, t)?);
        let mut map = self.cache.write().expect("cache lock");
        Ok(map.entry(key).or_insert(diffused).clone())
    }
}

/// Gaussian law of x_t given x_0: N(m(t) x_0, sigma(t)^2 I).
#[derive(Debug, Clone, Copy)]
pub struct PerturbationKernel {
    pub t: f64,
    pub mean_scale: f64,
    pub std: f64,
}

impl PerturbationKernel {
    /// grad_{x_t} log p(x_t | x_0) = -(x_t - m x_0) / sigma^2
    pub fn score(&self, x0: &DVector<f64>, xt: &DVector<f64>) -> Result<DVector<f64>> {
        if self.std <= 0.0 {
            return Err(Error::SingularKernel { t: self.t });
        }
        if x0.len() != xt.len() {
            return Err(Error::DimensionMismatch {
                expected: x0.len(),
                got: xt.len(),
            });
        }
        Ok(-(xt - x0 * self.mean_scale) / (self.std * self.std))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_at_zero_is_identity() {
        let s = SdeSchedule::default_vp();
        let k = s.kernel_at(0.0).unwrap();
        assert_eq!(k.mean_scale, 1.0);
        assert_eq!(k.std, 0.0);
    }

    #[test]
    fn vp_kernel_closed_form_matches_quadrature_of_beta() {
        let s = SdeSchedule::default_vp();
        let k = s.kernel_at(1.0).unwrap();
        // closed form: m(1) = exp(-(0.1 + 20)/2 / 2) = exp(-5.025)
        assert_relative_eq!(k.mean_scale, 0.006_571_586_494_929_615, max_relative = 1e-12);
        // numerical quadrature of beta as an independent check
        let n = 200_001;
        let h = 1.0 / (n - 1) as f64;
        let mut integral = 0.0;
        for i in 0..n {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            integral += w * h * s.beta(i as f64 * h);
        }
        assert_relative_eq!(k.mean_scale, (-0.5 * integral).exp(), max_relative = 1e-9);
        assert_relative_eq!(
            k.std * k.std,
            1.0 - k.mean_scale * k.mean_scale,
            max_relative = 1e-12
        );
    }

    #[test]
    fn subvp_variance_is_square_of_vp_variance() {
        let vp = SdeSchedule::default_vp();
        let sub = SdeSchedule::default_subvp();
        for t in [0.05, 0.3, 0.7, 1.0] {
            let kv = vp.kernel_at(t).unwrap();
            let ks = sub.kernel_at(t).unwrap();
            assert_relative_eq!(
                ks.std * ks.std,
                (kv.std * kv.std).powi(2),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn vp_mean_scale_variance_identity() {
        let s = SdeSchedule::default_vp();
        for i in 0..=50 {
            let t = i as f64 / 50.0;
            let k = s.kernel_at(t).unwrap();
            assert!(k.mean_scale * k.mean_scale + k.std * k.std <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn t_out_of_range_is_rejected() {
        let s = SdeSchedule::default_vp();
        assert!(s.kernel_at(-0.1).is_err());
        assert!(s.kernel_at(1.1).is_err());
    }

    #[test]
    fn kernel_score_zero_at_mode_and_linear() {
        let s = SdeSchedule::default_vp();
        let k = s.kernel_at(0.5).unwrap();
        let x0 = DVector::from_column_slice(&[1.0, -2.0]);
        let mode = &x0 * k.mean_scale;
        assert!(k.score(&x0, &mode).unwrap().norm() < 1e-14);
        // linear in (xt - m x0)
        let d = DVector::from_column_slice(&[0.3, 0.1]);
        let s1 = k.score(&x0, &(&mode + &d)).unwrap();
        let s2 = k.score(&x0, &(&mode + &d * 2.0)).unwrap();
        assert_relative_eq!((s2 - &s1 * 2.0).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn kernel_score_matches_gaussian_log_density_fd() {
        let s = SdeSchedule::default_subvp();
        let k = s.kernel_at(0.4).unwrap();
        let x0 = DVector::from_column_slice(&[0.7, -1.1]);
        let gauss = GaussianMixture::isotropic(&x0 * k.mean_scale, k.std * k.std).unwrap();
        let xt = DVector::from_column_slice(&[0.2, 0.5]);
        let exact = k.score(&x0, &xt).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut xp = xt.clone();
            let mut xm = xt.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd =
                (gauss.log_density(&xp).unwrap() - gauss.log_density(&xm).unwrap()) / (2.0 * h);
            let rel = (exact[i] - fd).abs() / exact[i].abs().max(1e-9);
            assert!(rel <= 1e-6, "rel {rel}");
        }
    }

    #[test]
    fn kernel_score_singular_at_zero() {
        let s = SdeSchedule::default_vp();
        let k = s.kernel_at(0.0).unwrap();
        let x = DVector::zeros(1);
        assert!(matches!(
            k.score(&x, &x),
            Err(Error::SingularKernel { .. })
        ));
    }

    #[test]
    fn diffuse_at_zero_is_identity() {
        let g = GaussianMixture::scalar(1.3, 0.6).unwrap();
        let s = SdeSchedule::default_subvp();
        let d = s.diffuse(&g, 0.0).unwrap();
        let x = DVector::from_element(1, 0.4);
        assert_relative_eq!(
            g.log_density(&x).unwrap(),
            d.log_density(&x).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn diffuse_large_t_under_vp_approaches_standard_normal() {
        let g = GaussianMixture::new(vec![
            (
                0.5,
                DVector::from_column_slice(&[3.0, -1.0]),
                DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]),
            ),
            (
                0.5,
                DVector::from_column_slice(&[-2.0, 2.0]),
                DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.9]),
            ),
        ])
        .unwrap();
        let s = SdeSchedule::default_vp();
        let d = s.diffuse(&g, 1.0).unwrap();
        assert!(d.mean().norm() < 0.05);
        for c in d.components() {
            let dev = (&c.cov - DMatrix::<f64>::identity(2, 2)).norm();
            assert!(dev < 0.05, "cov deviation {dev}");
        }
    }

    #[test]
    fn forward_sample_path_at_zero_returns_x0() {
        let s = SdeSchedule::default_vp();
        let x0 = DVector::from_column_slice(&[0.3, -0.9]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xt = s.forward_sample_path(&x0, 0.0, &mut rng).unwrap();
        assert_eq!(xt, x0);
    }

    #[test]
    fn forward_sample_path_moments() {
        let s = SdeSchedule::default_subvp();
        let t = 0.6;
        let k = s.kernel_at(t).unwrap();
        let x0 = DVector::from_element(1, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let v = s.forward_sample_path(&x0, t, &mut rng).unwrap()[0];
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(
            (mean - k.mean_scale * 2.0).abs() < 4.0 * k.std / (n as f64).sqrt(),
            "mean {mean}"
        );
        assert!(
            (var - k.std * k.std).abs() / (k.std * k.std) < 0.05,
            "var {var} expected {}",
            k.std * k.std
        );
    }

    #[test]
    fn reverse_sample_is_deterministic() {
        let s = SdeSchedule::default_vp();
        let f = |x: &DVector<f64>, _t: f64| -x.clone();
        let a = s.reverse_sample(f, 50, 16, 2, 99).unwrap();
        let b = s.reverse_sample(f, 50, 16, 2, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reverse_sample_reports_divergence_step() {
        let s = SdeSchedule::default_vp();
        let f = |_x: &DVector<f64>, t: f64| {
            if t < 0.5 {
                DVector::from_element(1, f64::NAN)
            } else {
                DVector::zeros(1)
            }
        };
        match s.reverse_sample(f, 10, 4, 1, 0) {
            Err(Error::DivergedSampler { step }) => assert!(step > 0),
            other => panic!("expected diverged sampler, got {other:?}"),
        }
    }

    #[test]
    fn standard_normal_is_fixed_point_of_vp_reverse() {
        let s = SdeSchedule::default_vp();
        let target = GaussianMixture::standard(2);
        let f = |x: &DVector<f64>, _t: f64| -x.clone();
        let n = 10_000;
        let out = s.reverse_sample(f, 500, n, 2, 31).unwrap();
        for j in 0..2 {
            let mean: f64 = out.column(j).iter().sum::<f64>() / n as f64;
            assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
            let var: f64 =
                out.column(j).iter().map(|v| v * v).sum::<f64>() / n as f64 - mean * mean;
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
        let _ = target;
    }
}
