use crate::cells::{ParamBank, ParamGrads};

/// Adam hyper-parameters plus decoupled weight decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 2e-5,
        }
    }
}

/// Moment estimates for every tensor of a bank.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub lr: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(bank: &ParamBank, lr: f64, config: AdamConfig) -> Self {
        let zeros = || bank.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Adam {
            config,
            lr,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update followed by `θ ← θ − lr·wd·θ`.
    /// Parameters absent from `grads` are treated as having zero gradient.
    pub fn step(&mut self, bank: &mut ParamBank, grads: &ParamGrads) {
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let ids: Vec<_> = bank.ids().collect();
        for id in ids {
            let g = grads.get(id);
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            let theta = bank.get_mut(id).data_mut();
            for i in 0..theta.len() {
                let gi = g.map_or(0.0, |g| g[i]);
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let update = (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                theta[i] -= self.lr * update + self.lr * weight_decay * theta[i];
            }
        }
    }
}

/// Tracks validation accuracy and halves the learning rate after
/// `patience` epochs without a strict improvement. The first observation
/// only sets the reference value, so it counts toward the patience.
#[derive(Clone, Debug)]
pub struct Plateau {
    patience: usize,
    best: Option<f64>,
    stale: usize,
}

impl Plateau {
    pub fn new(patience: usize) -> Self {
        Plateau {
            patience: patience.max(1),
            best: None,
            stale: 0,
        }
    }

    /// Records one epoch and returns the learning-rate multiplier.
    pub fn observe(&mut self, value: f64) -> f64 {
        match self.best {
            Some(b) if value > b => {
                self.best = Some(value);
                self.stale = 0;
            }
            Some(_) => self.stale += 1,
            None => {
                self.best = Some(value);
                self.stale = 1;
            }
        }
        if self.stale >= self.patience {
            self.stale = 0;
            0.5
        } else {
            1.0
        }
    }
}

/// Multiplier for the last epoch of `history`: 0.5 when it completes a run
/// of `patience` epochs without improvement, else 1.0.
pub fn plateau_halve(history: &[f64], patience: usize) -> f64 {
    let mut p = Plateau::new(patience);
    history.iter().map(|&v| p.observe(v)).last().unwrap_or(1.0)
}
