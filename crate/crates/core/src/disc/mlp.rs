//! Small dense discriminator network d(x, t) with exact input gradients and
//! exact parameter gradients of losses that involve the input gradient.
//!
//! The second-order path (parameter derivative of the input gradient) is
//! computed forward-over-reverse: an R-operator pass along the cotangent
//! direction, then an R-differentiated backward recurrence. This needs a C^2
//! activation, which is why the architecture rejects relu for training.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    /// Present to exercise the smoothness guard; not usable for training.
    Relu,
}

impl Activation {
    /// (phi(x), phi'(x))
    #[inline]
    fn with_prime(self, x: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let z = x.tanh();
                (z, 1.0 - z * z)
            }
            Activation::Relu => {
                let z = x.max(0.0);
                (z, if x > 0.0 { 1.0 } else { 0.0 })
            }
        }
    }

    /// phi''(x) given (phi, phi')
    #[inline]
    fn second(self, z: f64, zp: f64) -> f64 {
        match self {
            Activation::Tanh => -2.0 * z * zp,
            Activation::Relu => 0.0,
        }
    }

    pub fn is_smooth(self) -> bool {
        matches!(self, Activation::Tanh)
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    w_off: usize,
    b_off: usize,
    rows: usize,
    cols: usize,
}

/// Dense network on input (x, t/time_scale) with scalar output and a flat
/// parameter vector.
#[derive(Debug, Clone)]
pub struct MlpDiscriminator {
    data_dim: usize,
    hidden: Vec<usize>,
    activation: Activation,
    time_scale: f64,
    params: Vec<f64>,
    layers: Vec<Layer>,
    out_layer: Layer,
}

/// Reusable work buffers for one evaluation thread.
#[derive(Debug, Clone, Default)]
pub struct MlpScratch {
    z: Vec<Vec<f64>>,  // z_0 .. z_L (activations, z_0 = input)
    a: Vec<Vec<f64>>,  // a_1 .. a_L (pre-activations)
    ap: Vec<Vec<f64>>, // phi'(a_k)
    r: Vec<Vec<f64>>,  // adjoints of z_k
    q: Vec<Vec<f64>>,  // adjoints of a_k
    rz: Vec<Vec<f64>>, // R(z_k)
    ra: Vec<Vec<f64>>, // R(a_k)
    rr: Vec<Vec<f64>>, // R(r_k)
    rq: Vec<Vec<f64>>, // R(q_k)
}

impl MlpScratch {
    fn prepare(&mut self, widths: &[usize]) {
        let fit = |v: &mut Vec<Vec<f64>>| {
            v.resize(widths.len(), Vec::new());
            for (buf, &w) in v.iter_mut().zip(widths) {
                buf.resize(w, 0.0);
            }
        };
        fit(&mut self.z);
        fit(&mut self.a);
        fit(&mut self.ap);
        fit(&mut self.r);
        fit(&mut self.q);
        fit(&mut self.rz);
        fit(&mut self.ra);
        fit(&mut self.rr);
        fit(&mut self.rq);
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    data_dim: usize,
    hidden: Vec<usize>,
    activation: Activation,
    time_scale: f64,
    param_count: usize,
}

impl MlpDiscriminator {
    pub fn new(
        data_dim: usize,
        hidden: &[usize],
        activation: Activation,
        time_scale: f64,
    ) -> Result<Self> {
        if data_dim == 0 || hidden.is_empty() || hidden.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArgument(
                "discriminator needs data_dim >= 1 and nonempty positive hidden widths".into(),
            ));
        }
        if !(time_scale > 0.0) {
            return Err(Error::InvalidArgument("time_scale must be positive".into()));
        }
        let input_dim = data_dim + 1;
        let mut layers = Vec::with_capacity(hidden.len());
        let mut off = 0;
        let mut prev = input_dim;
        for &w in hidden {
            layers.push(Layer {
                w_off: off,
                b_off: off + w * prev,
                rows: w,
                cols: prev,
            });
            off += w * prev + w;
            prev = w;
        }
        let out_layer = Layer {
            w_off: off,
            b_off: off + prev,
            rows: 1,
            cols: prev,
        };
        off += prev + 1;
        Ok(Self {
            data_dim,
            hidden: hidden.to_vec(),
            activation,
            time_scale,
            params: vec![0.0; off],
            layers,
            out_layer,
        })
    }

    /// Fan-in-scaled hidden weights, zero biases, zero output layer, so the
    /// initial discriminator is identically zero and refinement starts as a
    /// no-op.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &self.layers {
            let std = 1.0 / (l.cols as f64).sqrt();
            for i in 0..l.rows * l.cols {
                self.params[l.w_off + i] = std * rng.sample::<f64, _>(StandardNormal);
            }
            for i in 0..l.rows {
                self.params[l.b_off + i] = 0.0;
            }
        }
        for i in self.out_layer.w_off..self.params.len() {
            self.params[i] = 0.0;
        }
    }

    /// Analytic parameter count for the architecture.
    pub fn param_count(data_dim: usize, hidden: &[usize]) -> usize {
        let mut prev = data_dim + 1;
        let mut n = 0;
        for &w in hidden {
            n += w * prev + w;
            prev = w;
        }
        n + prev + 1
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.params.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                p.len()
            )));
        }
        self.params.copy_from_slice(p);
        Ok(())
    }

    /// Widths of z_0 .. z_L.
    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 1);
        w.push(self.data_dim + 1);
        w.extend_from_slice(&self.hidden);
        w
    }

    pub fn make_scratch(&self) -> MlpScratch {
        let mut s = MlpScratch::default();
        s.prepare(&self.widths());
        s
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.data_dim {
            return Err(Error::DimensionMismatch {
                expected: self.data_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    #[inline]
    fn matvec(&self, l: &Layer, x: &[f64], out: &mut [f64]) {
        let w = &self.params[l.w_off..l.w_off + l.rows * l.cols];
        let b = &self.params[l.b_off..l.b_off + l.rows];
        for i in 0..l.rows {
            let row = &w[i * l.cols..(i + 1) * l.cols];
            let mut acc = b[i];
            for j in 0..l.cols {
                acc += row[j] * x[j];
            }
            out[i] = acc;
        }
    }

    /// out = W^T v (no bias)
    #[inline]
    fn matvec_t(&self, l: &Layer, v: &[f64], out: &mut [f64]) {
        let w = &self.params[l.w_off..l.w_off + l.rows * l.cols];
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..l.rows {
            let row = &w[i * l.cols..(i + 1) * l.cols];
            let vi = v[i];
            for j in 0..l.cols {
                out[j] += row[j] * vi;
            }
        }
    }

    /// out = W v (no bias)
    #[inline]
    fn matvec_nb(&self, l: &Layer, x: &[f64], out: &mut [f64]) {
        let w = &self.params[l.w_off..l.w_off + l.rows * l.cols];
        for i in 0..l.rows {
            let row = &w[i * l.cols..(i + 1) * l.cols];
            let mut acc = 0.0;
            for j in 0..l.cols {
                acc += row[j] * x[j];
            }
            out[i] = acc;
        }
    }

    /// Forward pass: fills scratch.z / scratch.a / scratch.ap, returns d(x, t).
    pub fn forward_scratch(&self, x: &[f64], t: f64, s: &mut MlpScratch) -> Result<f64> {
        self.check_x(x)?;
        let nl = self.layers.len();
        if s.z.len() != nl + 1 || s.z[0].len() != self.data_dim + 1 {
            s.prepare(&self.widths());
        }
        s.z[0][..self.data_dim].copy_from_slice(x);
        s.z[0][self.data_dim] = t / self.time_scale;
        for k in 0..nl {
            let l = self.layers[k];
            self.matvec(&l, &s.z[k], &mut s.a[k + 1]);
            for i in 0..l.rows {
                let (z, zp) = self.activation.with_prime(s.a[k + 1][i]);
                s.z[k + 1][i] = z;
                s.ap[k + 1][i] = zp;
            }
        }
        let l = self.out_layer;
        let w = &self.params[l.w_off..l.w_off + l.cols];
        let mut y = self.params[l.b_off];
        for j in 0..l.cols {
            y += w[j] * s.z[nl][j];
        }
        Ok(y)
    }

    /// Backward pass after forward_scratch: fills scratch.r / scratch.q.
    /// scratch.r[0] then holds the gradient of d w.r.t. the full input.
    fn backward_input_scratch(&self, s: &mut MlpScratch) {
        let nl = self.layers.len();
        let l = self.out_layer;
        let w = &self.params[l.w_off..l.w_off + l.cols];
        s.r[nl].copy_from_slice(w);
        for k in (0..nl).rev() {
            for i in 0..self.layers[k].rows {
                s.q[k + 1][i] = s.r[k + 1][i] * s.ap[k + 1][i];
            }
            self.matvec_t(&self.layers[k], &s.q[k + 1], &mut s.r[k]);
        }
    }

    /// d(x, t)
    pub fn value(&self, x: &DVector<f64>, t: f64) -> Result<f64> {
        let mut s = self.make_scratch();
        self.forward_scratch(x.as_slice(), t, &mut s)
    }

    /// Exact gradient of d w.r.t. x (time channel excluded).
    pub fn input_gradient(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let mut s = self.make_scratch();
        let _ = self.forward_scratch(x.as_slice(), t, &mut s)?;
        self.backward_input_scratch(&mut s);
        Ok(DVector::from_column_slice(&s.r[0][..self.data_dim]))
    }

    /// Value and input gradient in one pass, writing the gradient into `grad`.
    pub fn value_and_input_gradient_scratch(
        &self,
        x: &[f64],
        t: f64,
        s: &mut MlpScratch,
        grad: &mut [f64],
    ) -> Result<f64> {
        let y = self.forward_scratch(x, t, s)?;
        self.backward_input_scratch(s);
        grad.copy_from_slice(&s.r[0][..self.data_dim]);
        Ok(y)
    }

    /// Accumulate into `out` the gradient w.r.t. the flat parameter vector of
    ///
    ///   coeff_value * d(x, t)  +  <coeff_grad, grad_x d(x, t)>
    ///
    /// with coeff_value and coeff_grad held constant. This is the exact
    /// chain-rule building block for any smooth scalar loss of the
    /// discriminator value and its input gradient.
    pub fn accumulate_param_gradient(
        &self,
        x: &[f64],
        t: f64,
        coeff_value: f64,
        coeff_grad: &[f64],
        s: &mut MlpScratch,
        out: &mut [f64],
    ) -> Result<f64> {
        if !self.activation.is_smooth() {
            return Err(Error::UnsupportedArchitecture(format!(
                "{:?} activation is not twice differentiable; training the input \
                 gradient requires a smooth activation",
                self.activation
            )));
        }
        if coeff_grad.len() != self.data_dim {
            return Err(Error::DimensionMismatch {
                expected: self.data_dim,
                got: coeff_grad.len(),
            });
        }
        let y = self.forward_scratch(x, t, s)?;
        self.backward_input_scratch(s);
        let nl = self.layers.len();

        // first-order part: coeff_value * dy/dphi
        if coeff_value != 0.0 {
            for k in 0..nl {
                let l = self.layers[k];
                for i in 0..l.rows {
                    let qv = coeff_value * s.q[k + 1][i];
                    let row = &mut out[l.w_off + i * l.cols..l.w_off + (i + 1) * l.cols];
                    for j in 0..l.cols {
                        row[j] += qv * s.z[k][j];
                    }
                    out[l.b_off + i] += qv;
                }
            }
            let l = self.out_layer;
            for j in 0..l.cols {
                out[l.w_off + j] += coeff_value * s.z[nl][j];
            }
            out[l.b_off] += coeff_value;
        }

        let needs_second = coeff_grad.iter().any(|&v| v != 0.0);
        if !needs_second {
            return Ok(y);
        }

        // R-forward along v = (coeff_grad, 0): R(z_0) = v
        s.rz[0][..self.data_dim].copy_from_slice(coeff_grad);
        s.rz[0][self.data_dim] = 0.0;
        for k in 0..nl {
            self.matvec_nb(&self.layers[k], &s.rz[k], &mut s.ra[k + 1]);
            for i in 0..self.layers[k].rows {
                s.rz[k + 1][i] = s.ap[k + 1][i] * s.ra[k + 1][i];
            }
        }

        // R-backward: R(r_L) = 0 since r_L = W_out^T is parameter-constant
        s.rr[nl].iter_mut().for_each(|v| *v = 0.0);
        for k in (0..nl).rev() {
            for i in 0..self.layers[k].rows {
                let z = s.z[k + 1][i];
                let zp = s.ap[k + 1][i];
                let app = self.activation.second(z, zp);
                s.rq[k + 1][i] = s.rr[k + 1][i] * zp + s.r[k + 1][i] * app * s.ra[k + 1][i];
            }
            self.matvec_t(&self.layers[k], &s.rq[k + 1], &mut s.rr[k]);
        }

        // parameter gradient of s = <v, grad_x d>:
        //   dW_k += Rq_k z_{k-1}^T + q_k Rz_{k-1}^T,  db_k += Rq_k
        //   dW_out += Rz_L^T, db_out += 0
        for k in 0..nl {
            let l = self.layers[k];
            for i in 0..l.rows {
                let rqv = s.rq[k + 1][i];
                let qv = s.q[k + 1][i];
                let row = &mut out[l.w_off + i * l.cols..l.w_off + (i + 1) * l.cols];
                for j in 0..l.cols {
                    row[j] += rqv * s.z[k][j] + qv * s.rz[k][j];
                }
                out[l.b_off + i] += rqv;
            }
        }
        let l = self.out_layer;
        for j in 0..l.cols {
            out[l.w_off + j] += s.rz[nl][j];
        }
        Ok(y)
    }

    /// Serialize as JSON header (length-prefixed) plus raw little-endian f64
    /// parameter blob.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            version: 1,
            data_dim: self.data_dim,
            hidden: self.hidden.clone(),
            activation: self.activation,
            time_scale: self.time_scale,
            param_count: self.params.len(),
        };
        let hbytes = serde_json::to_vec(&header)?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&(hbytes.len() as u32).to_le_bytes())?;
        f.write_all(&hbytes)?;
        for p in &self.params {
            f.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path)?;
        let mut len4 = [0u8; 4];
        f.read_exact(&mut len4)?;
        let hlen = u32::from_le_bytes(len4) as usize;
        let mut hbytes = vec![0u8; hlen];
        f.read_exact(&mut hbytes)?;
        let header: CheckpointHeader = serde_json::from_slice(&hbytes)?;
        if header.version != 1 {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                header.version
            )));
        }
        let mut disc = Self::new(
            header.data_dim,
            &header.hidden,
            header.activation,
            header.time_scale,
        )?;
        if header.param_count != disc.params.len() {
            return Err(Error::Config(format!(
                "checkpoint parameter count {} does not match architecture ({})",
                header.param_count,
                disc.params.len()
            )));
        }
        let mut blob = vec![0u8; 8 * disc.params.len()];
        f.read_exact(&mut blob)?;
        for (i, chunk) in blob.chunks_exact(8).enumerate() {
            disc.params[i] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(disc)
    }
}

/// One batch point evaluation handed to a loss closure.
#[derive(Debug, Clone)]
pub struct DiscEval {
    pub value: f64,
    pub input_gradient: DVector<f64>,
}

/// Per-point partial derivatives of the loss w.r.t. value and input gradient.
#[derive(Debug, Clone)]
pub struct DiscCotangent {
    pub value: f64,
    pub input_gradient: DVector<f64>,
}

/// Exact gradient w.r.t. the flat parameter vector of a scalar loss built
/// from per-point discriminator values and input gradients. The closure
/// receives the batch evaluations and returns the loss with one cotangent
/// per point; the second-order path through the input gradient is handled
/// exactly.
pub fn loss_param_gradient<F>(
    disc: &MlpDiscriminator,
    batch: &[(DVector<f64>, f64)],
    loss: F,
) -> Result<(f64, DVector<f64>)>
where
    F: FnOnce(&[DiscEval]) -> (f64, Vec<DiscCotangent>),
{
    if !disc.activation().is_smooth() {
        return Err(Error::UnsupportedArchitecture(
            "loss_param_gradient requires a twice-differentiable activation".into(),
        ));
    }
    let mut scratch = disc.make_scratch();
    let mut evals = Vec::with_capacity(batch.len());
    let mut grad_buf = vec![0.0; disc.data_dim()];
    for (x, t) in batch {
        let v = disc.value_and_input_gradient_scratch(
            x.as_slice(),
            *t,
            &mut scratch,
            &mut grad_buf,
        )?;
        evals.push(DiscEval {
            value: v,
            input_gradient: DVector::from_column_slice(&grad_buf),
        });
    }
    let (loss_value, cotangents) = loss(&evals);
    if cotangents.len() != batch.len() {
        return Err(Error::InvalidArgument(format!(
            "loss returned {} cotangents for batch of {}",
            cotangents.len(),
            batch.len()
        )));
    }
    let mut out = vec![0.0; disc.params().len()];
    for ((x, t), ct) in batch.iter().zip(&cotangents) {
        disc.accumulate_param_gradient(
            x.as_slice(),
            *t,
            ct.value,
            ct.input_gradient.as_slice(),
            &mut scratch,
            &mut out,
        )?;
    }
    Ok((loss_value, DVector::from_vec(out)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn test_mlp(seed: u64) -> MlpDiscriminator {
        let mut d = MlpDiscriminator::new(2, &[16, 16], Activation::Tanh, 1.0).unwrap();
        d.init_params(seed);
        // give the output layer structure so gradients flow
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let n = d.params().len();
        for i in (n - 17)..n {
            d.params_mut()[i] = 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
        d
    }

    #[test]
    fn param_count_matches_analytic_formula() {
        let d = MlpDiscriminator::new(2, &[64, 64], Activation::Tanh, 1.0).unwrap();
        let expect = 64 * 3 + 64 + 64 * 64 + 64 + 64 + 1;
        assert_eq!(d.params().len(), expect);
        assert_eq!(MlpDiscriminator::param_count(2, &[64, 64]), expect);
    }

    #[test]
    fn zero_initialized_output_layer_gives_constant_zero() {
        let mut d = MlpDiscriminator::new(2, &[8], Activation::Tanh, 1.0).unwrap();
        d.init_params(4);
        for (x, t) in [([0.0, 0.0], 0.1), ([2.0, -3.0], 0.9), ([-5.0, 1.0], 0.5)] {
            let v = d.value(&DVector::from_column_slice(&x), t).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let d = test_mlp(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-6;
        for _ in 0..100 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let t: f64 = rng.gen_range(0.0..1.0);
            let g = d.input_gradient(&x, t).unwrap();
            for i in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (d.value(&xp, t).unwrap() - d.value(&xm, t).unwrap()) / (2.0 * h);
                let rel = (g[i] - fd).abs() / fd.abs().max(1e-8);
                assert!(rel <= 1e-5, "rel {rel} at coord {i}");
            }
        }
    }

    #[test]
    fn zero_weight_network_mean_value_gradient_hits_only_output_bias() {
        let d = MlpDiscriminator::new(2, &[8, 8], Activation::Tanh, 1.0).unwrap();
        // all parameters zero
        let batch = vec![
            (DVector::from_column_slice(&[0.4, -0.2]), 0.3),
            (DVector::from_column_slice(&[1.0, 0.7]), 0.8),
        ];
        let (loss, grad) = loss_param_gradient(&d, &batch, |evals| {
            let n = evals.len() as f64;
            let loss = evals.iter().map(|e| e.value).sum::<f64>() / n;
            let cts = evals
                .iter()
                .map(|_| DiscCotangent {
                    value: 1.0 / n,
                    input_gradient: DVector::zeros(2),
                })
                .collect();
            (loss, cts)
        })
        .unwrap();
        assert_eq!(loss, 0.0);
        let bias_idx = d.params().len() - 1;
        for (i, g) in grad.iter().enumerate() {
            if i == bias_idx {
                assert_relative_eq!(*g, 1.0, max_relative = 1e-12);
            } else {
                assert_eq!(*g, 0.0, "unexpected gradient at {i}");
            }
        }
    }

    /// FD over parameters of a loss evaluated through fresh network copies.
    fn fd_param_gradient(
        d: &MlpDiscriminator,
        loss: impl Fn(&MlpDiscriminator) -> f64,
        h: f64,
    ) -> Vec<f64> {
        let mut out = vec![0.0; d.params().len()];
        let mut work = d.clone();
        for i in 0..out.len() {
            let orig = d.params()[i];
            work.params_mut()[i] = orig + h;
            let up = loss(&work);
            work.params_mut()[i] = orig - h;
            let dn = loss(&work);
            work.params_mut()[i] = orig;
            out[i] = (up - dn) / (2.0 * h);
        }
        out
    }

    #[test]
    fn squared_input_gradient_param_gradient_matches_fd() {
        let d = test_mlp(5);
        let x = DVector::from_column_slice(&[0.6, -1.1]);
        let t = 0.4;
        let (_, grad) = loss_param_gradient(&d, &[(x.clone(), t)], |evals| {
            let g = &evals[0].input_gradient;
            (g.norm_squared(), vec![DiscCotangent {
                value: 0.0,
                input_gradient: g * 2.0,
            }])
        })
        .unwrap();
        let fd = fd_param_gradient(
            &d,
            |m| m.input_gradient(&x, t).unwrap().norm_squared(),
            1e-5,
        );
        let num: f64 = grad
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(num / den <= 1e-3, "rel {}", num / den);
    }

    #[test]
    fn relu_is_rejected_for_training() {
        let d = MlpDiscriminator::new(1, &[4], Activation::Relu, 1.0).unwrap();
        let r = loss_param_gradient(&d, &[(DVector::zeros(1), 0.5)], |e| {
            (e[0].value, vec![DiscCotangent {
                value: 1.0,
                input_gradient: DVector::zeros(1),
            }])
        });
        assert!(matches!(r, Err(Error::UnsupportedArchitecture(_))));
    }

    #[test]
    fn checkpoint_roundtrip_preserves_evaluation() {
        let d = test_mlp(9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("disc.ckpt");
        d.save(&path).unwrap();
        let d2 = MlpDiscriminator::load(&path).unwrap();
        assert_eq!(d.params(), d2.params());
        let x = DVector::from_column_slice(&[0.2, 0.9]);
        assert_eq!(d.value(&x, 0.7).unwrap(), d2.value(&x, 0.7).unwrap());
    }
}
