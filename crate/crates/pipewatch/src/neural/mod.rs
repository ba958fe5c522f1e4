//! Minimal neural substrate for the sequence model: LSTM cells, dense
//! heads, He-normal initialisation, dropout, Adam, and the LSTM-VAE with
//! its reconstruction + KL loss, trained from scratch via backpropagation
//! through time.
//!
//! All parameters live in one flat `Vec<f64>` addressed through a
//! [`Layout`] of named ranges; gradients mirror that layout, which keeps
//! Adam, checkpointing, and finite-difference checks straightforward.
//!
//! Architecture: a single-feature input window runs through an encoder
//! LSTM; the final hidden state (after dropout in train mode) feeds a
//! leaky-ReLU dense trunk with linear heads for the latent mean and
//! log-variance. The sampled latent is repeated at every step of a decoder
//! LSTM whose per-step output passes a second leaky-ReLU trunk and a linear
//! readout. The readout is identity by default; an optional softmax over
//! the reconstructed window exists behind [`ModelConfig::softmax_output`].

mod train;

pub use train::TrainReport;

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::ops::Range;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Window length in stream steps.
    #[serde(default = "default_timestep")]
    pub timestep: usize,
    /// LSTM hidden width for both encoder and decoder.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Latent dimension.
    #[serde(default = "default_latent")]
    pub latent: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// KL weight in the total loss.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_leaky")]
    pub leaky_slope: f64,
    /// Softmax over the reconstructed window instead of identity readout.
    #[serde(default)]
    pub softmax_output: bool,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_timestep() -> usize {
    10
}
fn default_hidden() -> usize {
    8
}
fn default_latent() -> usize {
    2
}
fn default_dropout() -> f64 {
    0.1
}
fn default_beta() -> f64 {
    0.01
}
fn default_leaky() -> f64 {
    0.01
}
fn default_lr() -> f64 {
    0.001
}
fn default_batch() -> usize {
    64
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            timestep: default_timestep(),
            hidden: default_hidden(),
            latent: default_latent(),
            dropout: default_dropout(),
            beta: default_beta(),
            leaky_slope: default_leaky(),
            softmax_output: false,
            learning_rate: default_lr(),
            batch_size: default_batch(),
        }
    }
}

/// Named parameter ranges inside the flat vector. Gate rows are ordered
/// input, forget, cell, output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub enc_w_ih: Range<usize>,
    pub enc_w_hh: Range<usize>,
    pub enc_b: Range<usize>,
    pub enc_trunk_w: Range<usize>,
    pub enc_trunk_b: Range<usize>,
    pub mu_w: Range<usize>,
    pub mu_b: Range<usize>,
    pub lv_w: Range<usize>,
    pub lv_b: Range<usize>,
    pub dec_w_ih: Range<usize>,
    pub dec_w_hh: Range<usize>,
    pub dec_b: Range<usize>,
    pub out_trunk_w: Range<usize>,
    pub out_trunk_b: Range<usize>,
    pub out_w: Range<usize>,
    pub out_b: Range<usize>,
    pub total: usize,
}

impl Layout {
    fn new(hidden: usize, latent: usize) -> Layout {
        let h = hidden;
        let l = latent;
        let mut cursor = 0;
        let mut take = |len: usize| {
            let r = cursor..cursor + len;
            cursor += len;
            r
        };
        Layout {
            enc_w_ih: take(4 * h),
            enc_w_hh: take(4 * h * h),
            enc_b: take(4 * h),
            enc_trunk_w: take(h * h),
            enc_trunk_b: take(h),
            mu_w: take(l * h),
            mu_b: take(l),
            lv_w: take(l * h),
            lv_b: take(l),
            dec_w_ih: take(4 * h * l),
            dec_w_hh: take(4 * h * h),
            dec_b: take(4 * h),
            out_trunk_w: take(h * h),
            out_trunk_b: take(h),
            out_w: take(h),
            out_b: take(1),
            total: cursor,
        }
    }

    pub fn groups(&self) -> Vec<(&'static str, Range<usize>)> {
        vec![
            ("enc_w_ih", self.enc_w_ih.clone()),
            ("enc_w_hh", self.enc_w_hh.clone()),
            ("enc_b", self.enc_b.clone()),
            ("enc_trunk_w", self.enc_trunk_w.clone()),
            ("enc_trunk_b", self.enc_trunk_b.clone()),
            ("mu_w", self.mu_w.clone()),
            ("mu_b", self.mu_b.clone()),
            ("lv_w", self.lv_w.clone()),
            ("lv_b", self.lv_b.clone()),
            ("dec_w_ih", self.dec_w_ih.clone()),
            ("dec_w_hh", self.dec_w_hh.clone()),
            ("dec_b", self.dec_b.clone()),
            ("out_trunk_w", self.out_trunk_w.clone()),
            ("out_trunk_b", self.out_trunk_b.clone()),
            ("out_w", self.out_w.clone()),
            ("out_b", self.out_b.clone()),
        ]
    }
}

/// Split loss per the training objective: `total = recon + beta * kl`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Mean squared reconstruction error plus the closed-form Gaussian KL
/// against the standard normal prior.
pub fn loss(x: &[f64], recon: &[f64], mu: &[f64], log_var: &[f64], beta: f64) -> LossParts {
    debug_assert_eq!(x.len(), recon.len());
    let t = x.len() as f64;
    let recon_err = x
        .iter()
        .zip(recon)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / t;
    let kl = -0.5
        * mu.iter()
            .zip(log_var)
            .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
            .sum::<f64>();
    LossParts {
        total: recon_err + beta * kl,
        recon: recon_err,
        kl,
    }
}

/// Overlapping stride-1 windows over a series, oldest value first.
pub fn windows_from_series(series: &[f64], timestep: usize) -> Vec<Vec<f64>> {
    if series.len() < timestep {
        return Vec::new();
    }
    series.windows(timestep).map(|w| w.to_vec()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub reconstruction: Vec<f64>,
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
    pub z: Vec<f64>,
}

/// The per-sensor sequence model.
#[derive(Debug, Clone)]
pub struct LstmVae {
    pub config: ModelConfig,
    layout: Layout,
    params: Vec<f64>,
    rng: ChaCha8Rng,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmVae {
    /// He-normal initialised model. Dense weights draw from
    /// N(0, 2/fan_in); LSTM weights use fan_in = input + hidden. Biases are
    /// zero except the forget gates, which start at 1.
    pub fn new(config: ModelConfig, seed: u64) -> LstmVae {
        let layout = Layout::new(config.hidden, config.latent);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.total];
        let h = config.hidden;
        let l = config.latent;

        let he = |range: Range<usize>, fan_in: usize, rng: &mut ChaCha8Rng, p: &mut [f64]| {
            let std = (2.0 / fan_in as f64).sqrt();
            for i in range {
                let n: f64 = StandardNormal.sample(rng);
                p[i] = n * std;
            }
        };
        he(layout.enc_w_ih.clone(), 1 + h, &mut rng, &mut params);
        he(layout.enc_w_hh.clone(), 1 + h, &mut rng, &mut params);
        he(layout.enc_trunk_w.clone(), h, &mut rng, &mut params);
        he(layout.mu_w.clone(), h, &mut rng, &mut params);
        he(layout.lv_w.clone(), h, &mut rng, &mut params);
        he(layout.dec_w_ih.clone(), l + h, &mut rng, &mut params);
        he(layout.dec_w_hh.clone(), l + h, &mut rng, &mut params);
        he(layout.out_trunk_w.clone(), h, &mut rng, &mut params);
        he(layout.out_w.clone(), h, &mut rng, &mut params);
        // Forget-gate bias 1.0 stabilises early training.
        for b in [&layout.enc_b, &layout.dec_b] {
            for i in 0..h {
                params[b.start + h + i] = 1.0;
            }
        }
        LstmVae {
            config,
            layout,
            params,
            rng,
        }
    }

    /// Zero-parameter model, mainly useful in tests.
    pub fn zeroed(config: ModelConfig) -> LstmVae {
        let layout = Layout::new(config.hidden, config.latent);
        LstmVae {
            params: vec![0.0; layout.total],
            layout,
            config,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn parameter_count(&self) -> usize {
        self.layout.total
    }

    /// Additive parameter perturbation, for finite-difference checks.
    pub fn nudge_parameter(&mut self, index: usize, delta: f64) {
        self.params[index] += delta;
    }

    pub fn all_parameters_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Deterministic eval-mode pass: no dropout, latent noise pinned to
    /// zero so `z == mu`.
    pub fn infer(&self, window: &[f64]) -> ForwardOutput {
        let eps = vec![0.0; self.config.latent];
        let mut cache = Cache::new(&self.config);
        self.forward_into(window, &eps, None, &mut cache);
        cache.output()
    }

    /// Train-mode pass: samples latent noise and a dropout mask from the
    /// model's own rng.
    pub fn forward_train(&mut self, window: &[f64]) -> ForwardOutput {
        let (eps, keep) = self.draw(window.len());
        let mut cache = Cache::new(&self.config);
        self.forward_into(window, &eps, Some(&keep), &mut cache);
        cache.output()
    }

    fn draw(&mut self, _len: usize) -> (Vec<f64>, Vec<bool>) {
        let eps: Vec<f64> = (0..self.config.latent)
            .map(|_| StandardNormal.sample(&mut self.rng))
            .collect();
        let keep: Vec<bool> = (0..self.config.hidden)
            .map(|_| self.rng.random::<f64>() >= self.config.dropout)
            .collect();
        (eps, keep)
    }

    /// Eval-mode total loss of a window; the detector's anomaly score.
    pub fn score(&self, window: &[f64]) -> f64 {
        let out = self.infer(window);
        loss(window, &out.reconstruction, &out.mu, &out.log_var, self.config.beta).total
    }

    /// Eval-mode latent mean.
    pub fn encode(&self, window: &[f64]) -> Vec<f64> {
        self.infer(window).mu
    }

    /// Train-mode loss under externally fixed stochastic draws. Pairs with
    /// [`Self::gradient_deterministic`] for finite-difference checks.
    pub fn loss_deterministic(&self, window: &[f64], eps: &[f64], keep: &[bool]) -> LossParts {
        let mut cache = Cache::new(&self.config);
        self.forward_into(window, eps, Some(keep), &mut cache);
        let out = cache.output();
        loss(window, &out.reconstruction, &out.mu, &out.log_var, self.config.beta)
    }

    /// Analytic gradient of [`Self::loss_deterministic`] with respect to
    /// every parameter.
    pub fn gradient_deterministic(&self, window: &[f64], eps: &[f64], keep: &[bool]) -> Vec<f64> {
        let mut cache = Cache::new(&self.config);
        self.forward_into(window, eps, Some(keep), &mut cache);
        let mut grads = vec![0.0; self.layout.total];
        self.backward_into(window, eps, Some(keep), &cache, &mut grads);
        grads
    }

    // ---- checkpointing ----

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let blob = Checkpoint {
            format_version: 1,
            config: self.config.clone(),
            params: self.params.clone(),
        };
        std::fs::write(path, serde_json::to_string(&blob)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<LstmVae> {
        let blob: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if blob.format_version != 1 {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint version {}",
                blob.format_version
            )));
        }
        let layout = Layout::new(blob.config.hidden, blob.config.latent);
        if blob.params.len() != layout.total {
            return Err(Error::MalformedData(format!(
                "checkpoint has {} parameters, layout needs {}",
                blob.params.len(),
                layout.total
            )));
        }
        Ok(LstmVae {
            layout,
            params: blob.params,
            rng: ChaCha8Rng::seed_from_u64(0),
            config: blob.config,
        })
    }

    #[cfg(test)]
    pub(crate) fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut Vec<f64> {
        &mut self.params
    }

    pub(crate) fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Final encoder hidden state for a window; test hook for checking the
    /// gate equations against hand-computed values.
    #[cfg(test)]
    pub(crate) fn encoder_hidden(&self, window: &[f64]) -> Vec<f64> {
        let eps = vec![0.0; self.config.latent];
        let mut cache = Cache::new(&self.config);
        self.forward_into(window, &eps, None, &mut cache);
        cache.enc.step(window.len() - 1).h.to_vec()
    }

    // ---- forward/backward core ----

    fn leaky(&self, x: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            self.config.leaky_slope * x
        }
    }

    fn leaky_grad(&self, pre: f64) -> f64 {
        if pre > 0.0 {
            1.0
        } else {
            self.config.leaky_slope
        }
    }

    /// One LSTM step. `x` is the step input, `w_ih` is 4H x in,
    /// `w_hh` is 4H x H; gate pre-activations land in `gates`.
    #[allow(clippy::too_many_arguments)]
    fn lstm_step(
        &self,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
        w_ih: &[f64],
        w_hh: &[f64],
        b: &[f64],
        gates: &mut [f64],
        c: &mut [f64],
        tc: &mut [f64],
        h: &mut [f64],
    ) {
        let hid = self.config.hidden;
        let in_dim = x.len();
        for r in 0..4 * hid {
            let mut acc = b[r];
            let wi = &w_ih[r * in_dim..(r + 1) * in_dim];
            for (wv, xv) in wi.iter().zip(x) {
                acc += wv * xv;
            }
            let wh = &w_hh[r * hid..(r + 1) * hid];
            for (wv, hv) in wh.iter().zip(h_prev) {
                acc += wv * hv;
            }
            gates[r] = acc;
        }
        for j in 0..hid {
            let i_g = sigmoid(gates[j]);
            let f_g = sigmoid(gates[hid + j]);
            let g_g = gates[2 * hid + j].tanh();
            let o_g = sigmoid(gates[3 * hid + j]);
            gates[j] = i_g;
            gates[hid + j] = f_g;
            gates[2 * hid + j] = g_g;
            gates[3 * hid + j] = o_g;
            c[j] = f_g * c_prev[j] + i_g * g_g;
            tc[j] = c[j].tanh();
            h[j] = o_g * tc[j];
        }
    }

    fn forward_into(&self, window: &[f64], eps: &[f64], keep: Option<&[bool]>, cache: &mut Cache) {
        let cfg = &self.config;
        let h = cfg.hidden;
        let t_len = window.len();
        debug_assert_eq!(eps.len(), cfg.latent);
        cache.reset(t_len, h, cfg.latent);
        let p = &self.params;
        let lay = &self.layout;

        // Encoder over the window.
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for (t, &x) in window.iter().enumerate() {
            let row = cache.enc.step_mut(t);
            self.lstm_step(
                &[x],
                &h_prev,
                &c_prev,
                &p[lay.enc_w_ih.clone()],
                &p[lay.enc_w_hh.clone()],
                &p[lay.enc_b.clone()],
                row.gates,
                row.c,
                row.tc,
                row.h,
            );
            row.h_prev.copy_from_slice(&h_prev);
            row.c_prev.copy_from_slice(&c_prev);
            h_prev.copy_from_slice(row.h);
            c_prev.copy_from_slice(row.c);
        }

        // Dropout (inverted) on the encoder summary.
        let scale = 1.0 / (1.0 - cfg.dropout);
        for j in 0..h {
            cache.dropped[j] = match keep {
                Some(mask) => {
                    if mask[j] {
                        h_prev[j] * scale
                    } else {
                        0.0
                    }
                }
                None => h_prev[j],
            };
        }

        // Latent heads.
        dense(
            &p[lay.enc_trunk_w.clone()],
            &p[lay.enc_trunk_b.clone()],
            &cache.dropped,
            &mut cache.enc_trunk_pre,
        );
        for j in 0..h {
            cache.enc_trunk[j] = self.leaky(cache.enc_trunk_pre[j]);
        }
        dense(
            &p[lay.mu_w.clone()],
            &p[lay.mu_b.clone()],
            &cache.enc_trunk,
            &mut cache.mu,
        );
        dense(
            &p[lay.lv_w.clone()],
            &p[lay.lv_b.clone()],
            &cache.enc_trunk,
            &mut cache.log_var,
        );
        for j in 0..cfg.latent {
            cache.z[j] = cache.mu[j] + (0.5 * cache.log_var[j]).exp() * eps[j];
        }

        // Decoder fed the latent at every step.
        let mut hd_prev = vec![0.0; h];
        let mut cd_prev = vec![0.0; h];
        for t in 0..t_len {
            let row = cache.dec.step_mut(t);
            self.lstm_step(
                &cache.z,
                &hd_prev,
                &cd_prev,
                &p[lay.dec_w_ih.clone()],
                &p[lay.dec_w_hh.clone()],
                &p[lay.dec_b.clone()],
                row.gates,
                row.c,
                row.tc,
                row.h,
            );
            row.h_prev.copy_from_slice(&hd_prev);
            row.c_prev.copy_from_slice(&cd_prev);
            hd_prev.copy_from_slice(row.h);
            cd_prev.copy_from_slice(row.c);

            let pre = &mut cache.out_trunk_pre[t * h..(t + 1) * h];
            dense(
                &p[lay.out_trunk_w.clone()],
                &p[lay.out_trunk_b.clone()],
                row.h,
                pre,
            );
            let act = &mut cache.out_trunk[t * h..(t + 1) * h];
            for j in 0..h {
                act[j] = if pre[j] > 0.0 {
                    pre[j]
                } else {
                    cfg.leaky_slope * pre[j]
                };
            }
            let mut y = p[lay.out_b.clone()][0];
            for (wv, av) in p[lay.out_w.clone()].iter().zip(act.iter()) {
                y += wv * av;
            }
            cache.raw_out[t] = y;
        }
        if cfg.softmax_output {
            softmax(&cache.raw_out, &mut cache.recon);
        } else {
            cache.recon.copy_from_slice(&cache.raw_out);
        }
    }

    fn backward_into(
        &self,
        window: &[f64],
        eps: &[f64],
        keep: Option<&[bool]>,
        cache: &Cache,
        grads: &mut [f64],
    ) {
        let cfg = &self.config;
        let h = cfg.hidden;
        let l = cfg.latent;
        let t_len = window.len();
        let p = &self.params;
        let lay = &self.layout;

        // d total / d reconstruction.
        let t_f = t_len as f64;
        let mut d_recon: Vec<f64> = (0..t_len)
            .map(|t| 2.0 * (cache.recon[t] - window[t]) / t_f)
            .collect();
        if cfg.softmax_output {
            let dot: f64 = d_recon.iter().zip(&cache.recon).map(|(d, s)| d * s).sum();
            for t in 0..t_len {
                d_recon[t] = cache.recon[t] * (d_recon[t] - dot);
            }
        }

        // Decoder stack, reversed.
        let mut dh = vec![0.0; h];
        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; l];
        let mut da = vec![0.0; 4 * h];
        let mut d_trunk = vec![0.0; h];
        for t in (0..t_len).rev() {
            let row = cache.dec.step(t);
            let act = &cache.out_trunk[t * h..(t + 1) * h];
            let pre = &cache.out_trunk_pre[t * h..(t + 1) * h];
            let dy = d_recon[t];
            grads[lay.out_b.start] += dy;
            for j in 0..h {
                grads[lay.out_w.start + j] += dy * act[j];
                d_trunk[j] = dy * p[lay.out_w.start + j] * self.leaky_grad(pre[j]);
            }
            for j in 0..h {
                grads[lay.out_trunk_b.start + j] += d_trunk[j];
                for k in 0..h {
                    grads[lay.out_trunk_w.start + j * h + k] += d_trunk[j] * row.h[k];
                }
            }
            for k in 0..h {
                let mut acc = dh[k];
                for j in 0..h {
                    acc += d_trunk[j] * p[lay.out_trunk_w.start + j * h + k];
                }
                dh[k] = acc;
            }

            self.lstm_backstep(
                row,
                &cache.z,
                &p[lay.dec_w_ih.clone()],
                &p[lay.dec_w_hh.clone()],
                lay.dec_w_ih.start,
                lay.dec_w_hh.start,
                lay.dec_b.start,
                &mut dh,
                &mut dc,
                Some(&mut dz),
                &mut da,
                grads,
            );
        }

        // Latent heads: reparameterisation plus the KL terms.
        let beta = cfg.beta;
        let mut d_mu = vec![0.0; l];
        let mut d_lv = vec![0.0; l];
        for j in 0..l {
            d_mu[j] = dz[j] + beta * cache.mu[j];
            d_lv[j] = dz[j] * eps[j] * 0.5 * (0.5 * cache.log_var[j]).exp()
                + beta * 0.5 * (cache.log_var[j].exp() - 1.0);
        }
        let mut d_et = vec![0.0; h];
        for j in 0..l {
            grads[lay.mu_b.start + j] += d_mu[j];
            grads[lay.lv_b.start + j] += d_lv[j];
            for k in 0..h {
                grads[lay.mu_w.start + j * h + k] += d_mu[j] * cache.enc_trunk[k];
                grads[lay.lv_w.start + j * h + k] += d_lv[j] * cache.enc_trunk[k];
                d_et[k] += d_mu[j] * p[lay.mu_w.start + j * h + k]
                    + d_lv[j] * p[lay.lv_w.start + j * h + k];
            }
        }
        let mut dd = vec![0.0; h];
        for j in 0..h {
            let d_pre = d_et[j] * self.leaky_grad(cache.enc_trunk_pre[j]);
            grads[lay.enc_trunk_b.start + j] += d_pre;
            for k in 0..h {
                grads[lay.enc_trunk_w.start + j * h + k] += d_pre * cache.dropped[k];
                dd[k] += d_pre * p[lay.enc_trunk_w.start + j * h + k];
            }
        }

        // Dropout backward into the encoder summary.
        let scale = 1.0 / (1.0 - cfg.dropout);
        let mut dh_enc = vec![0.0; h];
        for j in 0..h {
            dh_enc[j] = match keep {
                Some(mask) => {
                    if mask[j] {
                        dd[j] * scale
                    } else {
                        0.0
                    }
                }
                None => dd[j],
            };
        }

        // Encoder stack, reversed; only the final hidden state feeds loss.
        let mut dc_enc = vec![0.0; h];
        for t in (0..t_len).rev() {
            let row = cache.enc.step(t);
            self.lstm_backstep(
                row,
                &[window[t]],
                &p[lay.enc_w_ih.clone()],
                &p[lay.enc_w_hh.clone()],
                lay.enc_w_ih.start,
                lay.enc_w_hh.start,
                lay.enc_b.start,
                &mut dh_enc,
                &mut dc_enc,
                None,
                &mut da,
                grads,
            );
        }
    }

    /// Backward through one cached LSTM step. On entry `dh`/`dc` hold the
    /// gradients flowing into this step's outputs; on exit they hold the
    /// gradients for the previous step. Input gradients accumulate into
    /// `dx_acc` when given.
    #[allow(clippy::too_many_arguments)]
    fn lstm_backstep(
        &self,
        row: StepRef<'_>,
        x: &[f64],
        w_ih: &[f64],
        w_hh: &[f64],
        g_w_ih: usize,
        g_w_hh: usize,
        g_b: usize,
        dh: &mut [f64],
        dc: &mut [f64],
        mut dx_acc: Option<&mut [f64]>,
        da: &mut [f64],
        grads: &mut [f64],
    ) {
        let h = self.config.hidden;
        let in_dim = x.len();
        for j in 0..h {
            let i_g = row.gates[j];
            let f_g = row.gates[h + j];
            let g_g = row.gates[2 * h + j];
            let o_g = row.gates[3 * h + j];
            let tc = row.tc[j];
            let d_o = dh[j] * tc;
            let dcj = dc[j] + dh[j] * o_g * (1.0 - tc * tc);
            let d_i = dcj * g_g;
            let d_g = dcj * i_g;
            let d_f = dcj * row.c_prev[j];
            dc[j] = dcj * f_g;
            da[j] = d_i * i_g * (1.0 - i_g);
            da[h + j] = d_f * f_g * (1.0 - f_g);
            da[2 * h + j] = d_g * (1.0 - g_g * g_g);
            da[3 * h + j] = d_o * o_g * (1.0 - o_g);
        }
        for r in 0..4 * h {
            let d = da[r];
            if d == 0.0 {
                continue;
            }
            grads[g_b + r] += d;
            for (k, xv) in x.iter().enumerate() {
                grads[g_w_ih + r * in_dim + k] += d * xv;
            }
            for k in 0..h {
                grads[g_w_hh + r * h + k] += d * row.h_prev[k];
            }
        }
        for j in 0..h {
            let mut acc = 0.0;
            for r in 0..4 * h {
                acc += da[r] * w_hh[r * h + j];
            }
            dh[j] = acc;
        }
        if let Some(dx) = dx_acc.as_deref_mut() {
            for (k, d) in dx.iter_mut().enumerate() {
                let mut acc = 0.0;
                for r in 0..4 * h {
                    acc += da[r] * w_ih[r * in_dim + k];
                }
                *d += acc;
            }
        }
    }
}

fn dense(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = b[j];
        for (wv, xv) in w[j * cols..(j + 1) * cols].iter().zip(x) {
            acc += wv * xv;
        }
        *o = acc;
    }
}

fn softmax(x: &[f64], out: &mut [f64]) {
    let max = x.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    config: ModelConfig,
    params: Vec<f64>,
}

// ---- forward caches ----

/// Per-step LSTM activations, stored flat per layer.
struct LstmCache {
    gates: Vec<f64>,
    c: Vec<f64>,
    tc: Vec<f64>,
    h: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    hidden: usize,
}

struct StepRef<'a> {
    gates: &'a [f64],
    c_prev: &'a [f64],
    h_prev: &'a [f64],
    tc: &'a [f64],
    h: &'a [f64],
}

struct StepMut<'a> {
    gates: &'a mut [f64],
    c: &'a mut [f64],
    tc: &'a mut [f64],
    h: &'a mut [f64],
    h_prev: &'a mut [f64],
    c_prev: &'a mut [f64],
}

impl LstmCache {
    fn new() -> LstmCache {
        LstmCache {
            gates: Vec::new(),
            c: Vec::new(),
            tc: Vec::new(),
            h: Vec::new(),
            h_prev: Vec::new(),
            c_prev: Vec::new(),
            hidden: 0,
        }
    }

    fn reset(&mut self, steps: usize, hidden: usize) {
        self.hidden = hidden;
        self.gates.resize(steps * 4 * hidden, 0.0);
        for v in [
            &mut self.c,
            &mut self.tc,
            &mut self.h,
            &mut self.h_prev,
            &mut self.c_prev,
        ] {
            v.resize(steps * hidden, 0.0);
        }
    }

    fn step(&self, t: usize) -> StepRef<'_> {
        let h = self.hidden;
        StepRef {
            gates: &self.gates[t * 4 * h..(t + 1) * 4 * h],
            c_prev: &self.c_prev[t * h..(t + 1) * h],
            h_prev: &self.h_prev[t * h..(t + 1) * h],
            tc: &self.tc[t * h..(t + 1) * h],
            h: &self.h[t * h..(t + 1) * h],
        }
    }

    fn step_mut(&mut self, t: usize) -> StepMut<'_> {
        let h = self.hidden;
        StepMut {
            gates: &mut self.gates[t * 4 * h..(t + 1) * 4 * h],
            c: &mut self.c[t * h..(t + 1) * h],
            tc: &mut self.tc[t * h..(t + 1) * h],
            h: &mut self.h[t * h..(t + 1) * h],
            h_prev: &mut self.h_prev[t * h..(t + 1) * h],
            c_prev: &mut self.c_prev[t * h..(t + 1) * h],
        }
    }
}

pub(crate) struct Cache {
    enc: LstmCache,
    dec: LstmCache,
    dropped: Vec<f64>,
    enc_trunk_pre: Vec<f64>,
    enc_trunk: Vec<f64>,
    mu: Vec<f64>,
    log_var: Vec<f64>,
    z: Vec<f64>,
    out_trunk_pre: Vec<f64>,
    out_trunk: Vec<f64>,
    raw_out: Vec<f64>,
    recon: Vec<f64>,
}

impl Cache {
    pub(crate) fn new(cfg: &ModelConfig) -> Cache {
        let mut c = Cache {
            enc: LstmCache::new(),
            dec: LstmCache::new(),
            dropped: Vec::new(),
            enc_trunk_pre: Vec::new(),
            enc_trunk: Vec::new(),
            mu: Vec::new(),
            log_var: Vec::new(),
            z: Vec::new(),
            out_trunk_pre: Vec::new(),
            out_trunk: Vec::new(),
            raw_out: Vec::new(),
            recon: Vec::new(),
        };
        c.reset(cfg.timestep, cfg.hidden, cfg.latent);
        c
    }

    fn reset(&mut self, steps: usize, hidden: usize, latent: usize) {
        self.enc.reset(steps, hidden);
        self.dec.reset(steps, hidden);
        self.dropped.resize(hidden, 0.0);
        self.enc_trunk_pre.resize(hidden, 0.0);
        self.enc_trunk.resize(hidden, 0.0);
        self.mu.resize(latent, 0.0);
        self.log_var.resize(latent, 0.0);
        self.z.resize(latent, 0.0);
        self.out_trunk_pre.resize(steps * hidden, 0.0);
        self.out_trunk.resize(steps * hidden, 0.0);
        self.raw_out.resize(steps, 0.0);
        self.recon.resize(steps, 0.0);
    }

    fn output(&self) -> ForwardOutput {
        ForwardOutput {
            reconstruction: self.recon.clone(),
            mu: self.mu.clone(),
            log_var: self.log_var.clone(),
            z: self.z.clone(),
        }
    }
}
