//! One-hidden-layer multi-label scorer: multi-hot input over the catalog,
//! rectified hidden layer, independent sigmoid output per item, trained on
//! binary cross-entropy with plain mini-batch SGD.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{split_input_output, Session, SplitRule, TrainView};
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    pub n_items: usize,
    pub hidden: usize,
    /// `n_items x hidden`, row per input item.
    pub w_in: Vec<f64>,
    pub b_in: Vec<f64>,
    /// `n_items x hidden`, row per output item.
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

impl MlpWeights {
    pub fn zeros(n_items: usize, hidden: usize) -> Self {
        Self {
            n_items,
            hidden,
            w_in: vec![0.0; n_items * hidden],
            b_in: vec![0.0; hidden],
            w_out: vec![0.0; n_items * hidden],
            b_out: vec![0.0; n_items],
        }
    }

    /// Uniform Glorot initialization for both layers.
    pub fn random<R: Rng>(n_items: usize, hidden: usize, rng: &mut R) -> Self {
        let mut w = Self::zeros(n_items, hidden);
        let a = (6.0 / (n_items + hidden) as f64).sqrt();
        for v in w.w_in.iter_mut().chain(w.w_out.iter_mut()) {
            *v = rng.gen_range(-a..a);
        }
        w
    }

    pub fn n_params(&self) -> usize {
        self.w_in.len() + self.b_in.len() + self.w_out.len() + self.b_out.len()
    }

    /// Flat view over all parameters in the order w_in, b_in, w_out, b_out.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.w_in
            .iter()
            .chain(&self.b_in)
            .chain(&self.w_out)
            .chain(&self.b_out)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w_in
            .iter_mut()
            .chain(self.b_in.iter_mut())
            .chain(self.w_out.iter_mut())
            .chain(self.b_out.iter_mut())
    }

    pub fn param_mut(&mut self, idx: usize) -> &mut f64 {
        self.params_mut()
            .nth(idx)
            .expect("parameter index in range")
    }

    fn hidden_activation(&self, input: &[u32], out: &mut [f64]) {
        out.copy_from_slice(&self.b_in);
        for &i in input {
            let row = &self.w_in[i as usize * self.hidden..(i as usize + 1) * self.hidden];
            for (h, w) in out.iter_mut().zip(row) {
                *h += w;
            }
        }
        for h in out.iter_mut() {
            *h = h.max(0.0);
        }
    }

    /// Output logits for a multi-hot input.
    pub fn logits(&self, input: &[u32]) -> Vec<f64> {
        let input = dedup_sorted(input);
        let mut h = vec![0.0; self.hidden];
        self.hidden_activation(&input, &mut h);
        (0..self.n_items)
            .map(|j| self.b_out[j] + dot(&self.w_out[j * self.hidden..(j + 1) * self.hidden], &h))
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dedup_sorted(items: &[u32]) -> Vec<u32> {
    let mut v = items.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// One training example: input items and the items that should fire.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpExample {
    pub input: Vec<u32>,
    pub targets: Vec<u32>,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Loss is the batch mean of the per-example cross-entropy summed over all
/// output units; the gradient is exact.
pub fn mlp_loss_and_grad(w: &MlpWeights, batch: &[MlpExample]) -> Result<(f64, MlpWeights)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if w.params().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (n, hd) = (w.n_items, w.hidden);
    let scale = 1.0 / batch.len() as f64;
    let mut grad = MlpWeights::zeros(n, hd);
    let mut loss = 0.0;
    let mut h = vec![0.0; hd];
    let mut dh = vec![0.0; hd];
    let mut target = vec![false; n];

    for ex in batch {
        let input = dedup_sorted(&ex.input);
        if input.iter().chain(&ex.targets).any(|&i| i as usize >= n) {
            return Err(Error::InvalidArgument("item index outside catalog".into()));
        }
        w.hidden_activation(&input, &mut h);
        for &t in &ex.targets {
            target[t as usize] = true;
        }
        dh.iter_mut().for_each(|v| *v = 0.0);

        #[allow(clippy::needless_range_loop)]
        for j in 0..n {
            let row = j * hd..(j + 1) * hd;
            let z = w.b_out[j] + dot(&w.w_out[row.clone()], &h);
            let y = if target[j] { 1.0 } else { 0.0 };
            loss += softplus(z) - y * z;
            let dz = (sigmoid(z) - y) * scale;
            grad.b_out[j] += dz;
            let w_row = &w.w_out[row.clone()];
            let g_row = &mut grad.w_out[row];
            for k in 0..hd {
                g_row[k] += dz * h[k];
                dh[k] += dz * w_row[k];
            }
        }
        for &t in &ex.targets {
            target[t as usize] = false;
        }

        for k in 0..hd {
            if h[k] <= 0.0 {
                dh[k] = 0.0;
            }
        }
        for (g, d) in grad.b_in.iter_mut().zip(&dh) {
            *g += d;
        }
        for &i in &input {
            let g_row = &mut grad.w_in[i as usize * hd..(i as usize + 1) * hd];
            for (g, d) in g_row.iter_mut().zip(&dh) {
                *g += d;
            }
        }
    }
    Ok((loss * scale, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpParams {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub pairs_per_session: usize,
}

/// Examples for one epoch: every train session contributes its full-length
/// split plus `pairs_per_session - 1` splits of random-length prefixes.
pub fn training_examples(
    sessions: &[Session],
    rule: SplitRule,
    pairs_per_session: usize,
    seed: u64,
) -> Vec<MlpExample> {
    let mut rng = rng_from(seed);
    let mut out = Vec::new();
    for s in sessions {
        if s.len() < rule.n_out + 1 {
            continue;
        }
        for r in 0..pairs_per_session.max(1) {
            let len = if r == 0 {
                s.len()
            } else {
                rng.gen_range(rule.n_out + 1..=s.len())
            };
            let prefix = Session {
                user_id: s.user_id,
                events: s.events[..len].to_vec(),
            };
            if let Some((input, output)) = split_input_output(&prefix, rule, rng.gen()) {
                out.push(MlpExample {
                    input: input.items().collect(),
                    targets: output,
                });
            }
        }
    }
    out
}

pub fn train_mlp(train: TrainView<'_>, params: MlpParams, seed: u64) -> Result<MlpWeights> {
    let n = train.n_items;
    let mut rng = rng_from(derive_seed(&[seed, 0x1417]));
    let mut w = MlpWeights::random(n, params.hidden_dim, &mut rng);

    // output biases start at the log-odds of each item's train frequency
    let mut counts = vec![0.0f64; n];
    for s in train.sessions {
        for item in s.items() {
            counts[item as usize] += 1.0;
        }
    }
    let denom = train.sessions.len().max(1) as f64;
    for (b, c) in w.b_out.iter_mut().zip(&counts) {
        let p = ((c + 0.5) / (denom + 1.0)).clamp(1e-4, 1.0 - 1e-4);
        *b = (p / (1.0 - p)).ln();
    }

    for epoch in 0..params.epochs {
        let mut examples = training_examples(
            train.sessions,
            train.split,
            params.pairs_per_session,
            derive_seed(&[seed, epoch as u64, 0xE0]),
        );
        if examples.is_empty() {
            return Err(Error::InvalidArgument(
                "no train session long enough to form an mlp example".into(),
            ));
        }
        examples.shuffle(&mut rng);
        for batch in examples.chunks(params.batch_size.max(1)) {
            let (loss, grad) = mlp_loss_and_grad(&w, batch)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged);
            }
            for (p, g) in w.params_mut().zip(grad.params()) {
                *p -= params.learning_rate * g;
            }
        }
        log::debug!("mlp epoch {epoch} done ({} examples)", examples.len());
    }
    if w.params().any(|v| !v.is_finite()) {
        return Err(Error::TrainingDiverged);
    }
    Ok(w)
}
