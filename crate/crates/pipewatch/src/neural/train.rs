//! Minibatch Adam training over window sets.

use super::{loss, Cache, LstmVae};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    fn new(n: usize, lr: f64) -> Adam {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}

/// What a training run did, plus the per-window eval losses the adaptive
/// threshold is built from.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: usize,
    pub final_losses: Vec<f64>,
    pub first_epoch_mean_loss: f64,
    pub last_epoch_mean_loss: f64,
}

impl LstmVae {
    /// Adam over the total loss, backpropagated through time. Window order
    /// reshuffles per epoch from the model rng, so runs are reproducible
    /// given the construction seed. Returns eval-mode losses per training
    /// window after the final epoch.
    pub fn train(&mut self, windows: &[Vec<f64>], epochs: usize) -> Result<TrainReport> {
        if windows.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let batch_size = self.config.batch_size.max(1);
        let dropout = self.config.dropout;
        let mut adam = Adam::new(self.parameter_count(), self.config.learning_rate);
        let mut grads = vec![0.0; self.parameter_count()];
        let mut cache = Cache::new(&self.config);
        let mut order: Vec<usize> = (0..windows.len()).collect();
        let mut eps = vec![0.0; self.config.latent];
        let mut keep = vec![true; self.config.hidden];
        let mut first_mean = 0.0;
        let mut last_mean = 0.0;

        for epoch in 0..epochs {
            order.shuffle(self.rng_mut());
            let mut epoch_loss = 0.0;
            for (batch_idx, batch) in order.chunks(batch_size).enumerate() {
                grads.fill(0.0);
                let mut batch_loss = 0.0;
                for &wi in batch {
                    let window = &windows[wi];
                    {
                        let rng = self.rng_mut();
                        for e in eps.iter_mut() {
                            *e = StandardNormal.sample(rng);
                        }
                        for k in keep.iter_mut() {
                            *k = rng.random::<f64>() >= dropout;
                        }
                    }
                    self.forward_into(window, &eps, Some(&keep), &mut cache);
                    let parts = loss(
                        window,
                        &cache.recon,
                        &cache.mu,
                        &cache.log_var,
                        self.config.beta,
                    );
                    if !parts.total.is_finite() {
                        return Err(Error::NaNLoss {
                            epoch,
                            batch: batch_idx,
                        });
                    }
                    batch_loss += parts.total;
                    self.backward_into(window, &eps, Some(&keep), &cache, &mut grads);
                }
                let inv = 1.0 / batch.len() as f64;
                for g in grads.iter_mut() {
                    *g *= inv;
                }
                epoch_loss += batch_loss;
                let mut params = std::mem::take(self.params_mut());
                adam.step(&mut params, &grads);
                *self.params_mut() = params;
            }
            epoch_loss /= windows.len() as f64;
            if epoch == 0 {
                first_mean = epoch_loss;
            }
            last_mean = epoch_loss;
        }

        let final_losses = windows.iter().map(|w| self.score(w)).collect();
        Ok(TrainReport {
            epochs,
            final_losses,
            first_epoch_mean_loss: first_mean,
            last_epoch_mean_loss: last_mean,
        })
    }
}
