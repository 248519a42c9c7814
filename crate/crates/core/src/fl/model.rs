//! Multinomial logistic regression and a one-hidden-layer ReLU MLP with
//! hand-derived cross-entropy gradients.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::DataView;
use crate::error::{Error, Result};

/// Architecture and parameter layout.
///
/// Logistic: `W (classes × inputs)`, `b (classes)`.
/// MLP: `W1 (hidden × inputs)`, `b1 (hidden)`, `W2 (classes × hidden)`, `b2 (classes)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Layout {
    Logistic { inputs: usize, classes: usize },
    Mlp { inputs: usize, hidden: usize, classes: usize },
}

impl Layout {
    pub fn param_count(&self) -> usize {
        match *self {
            Layout::Logistic { inputs, classes } => classes * (inputs + 1),
            Layout::Mlp { inputs, hidden, classes } => hidden * (inputs + 1) + classes * (hidden + 1),
        }
    }

    pub fn inputs(&self) -> usize {
        match *self {
            Layout::Logistic { inputs, .. } | Layout::Mlp { inputs, .. } => inputs,
        }
    }

    pub fn classes(&self) -> usize {
        match *self {
            Layout::Logistic { classes, .. } | Layout::Mlp { classes, .. } => classes,
        }
    }

    /// Initial parameters: zeros for logistic, He-scaled Gaussian weights for the MLP.
    pub fn init<R: Rng>(&self, rng: &mut R) -> ModelParams {
        let theta = match *self {
            Layout::Logistic { .. } => vec![0.0; self.param_count()],
            Layout::Mlp { inputs, hidden, classes } => {
                let w1 = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).unwrap();
                let w2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).unwrap();
                let mut t = Vec::with_capacity(self.param_count());
                t.extend((0..hidden * inputs).map(|_| w1.sample(rng)));
                t.extend(std::iter::repeat_n(0.0, hidden));
                t.extend((0..classes * hidden).map(|_| w2.sample(rng)));
                t.extend(std::iter::repeat_n(0.0, classes));
                t
            }
        };
        ModelParams { layout: *self, theta }
    }
}

/// Flat parameter vector tagged with its layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layout: Layout,
    pub theta: Vec<f64>,
}

impl ModelParams {
    pub fn new(layout: Layout, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != layout.param_count() {
            return Err(Error::LayoutMismatch { expected: layout.param_count(), found: theta.len() });
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Training("non-finite parameter".into()));
        }
        Ok(ModelParams { layout, theta })
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|x| x.is_finite())
    }

    pub fn check_layout(&self, other: &Layout) -> Result<()> {
        if self.layout != *other {
            return Err(Error::LayoutMismatch { expected: other.param_count(), found: self.theta.len() });
        }
        Ok(())
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// `−ln softmax(z)[y]` as `(max − z_y) + ln(1 + Σ_{c ≠ argmax} e^{z_c − max})`,
/// accurate even when the loss is tiny.
fn cross_entropy(z: &[f64], y: usize) -> f64 {
    let top = argmax(z);
    let rest: f64 = z.iter().enumerate().filter(|&(c, _)| c != top).map(|(_, &v)| (v - z[top]).exp()).sum();
    (z[top] - z[y]) + rest.ln_1p()
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (o, (row, &bias)) in out.iter_mut().zip(w.chunks_exact(n).zip(b)) {
        *o = bias + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

/// Logits of one sample; `hidden` is scratch space for the MLP activations.
fn logits(layout: &Layout, theta: &[f64], x: &[f64], hidden: &mut Vec<f64>, out: &mut [f64]) {
    match *layout {
        Layout::Logistic { inputs, classes } => {
            let (w, b) = theta.split_at(classes * inputs);
            affine(w, b, x, out);
        }
        Layout::Mlp { inputs, hidden: h, classes } => {
            let (w1, rest) = theta.split_at(h * inputs);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(classes * h);
            hidden.resize(h, 0.0);
            affine(w1, b1, x, hidden);
            for v in hidden.iter_mut() {
                *v = v.max(0.0);
            }
            affine(w2, b2, hidden, out);
        }
    }
}

/// Predicted class (lowest index on ties).
pub fn predict(params: &ModelParams, x: &[f64]) -> usize {
    let mut out = vec![0.0; params.layout.classes()];
    let mut hidden = Vec::new();
    logits(&params.layout, &params.theta, x, &mut hidden, &mut out);
    argmax(&out)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy over `rows` of `data`.
pub fn mean_loss(layout: &Layout, theta: &[f64], data: DataView<'_>) -> f64 {
    let mut out = vec![0.0; layout.classes()];
    let mut hidden = Vec::new();
    let total: f64 = data
        .indices
        .iter()
        .map(|&i| {
            logits(layout, theta, data.data.row(i), &mut hidden, &mut out);
            cross_entropy(&out, data.data.label(i))
        })
        .sum();
    total / data.len().max(1) as f64
}

/// Mean cross-entropy over the batch and its gradient, written to `grad`.
pub fn loss_and_grad(layout: &Layout, theta: &[f64], batch: DataView<'_>, grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let classes = layout.classes();
    let mut p = vec![0.0; classes];
    let mut hidden = Vec::new();
    let mut loss = 0.0;
    for &i in batch.indices {
        let x = batch.data.row(i);
        let y = batch.data.label(i);
        logits(layout, theta, x, &mut hidden, &mut p);
        loss += cross_entropy(&p, y);
        softmax_in_place(&mut p);
        p[y] -= 1.0;
        match *layout {
            Layout::Logistic { inputs, .. } => {
                let (gw, gb) = grad.split_at_mut(classes * inputs);
                for (c, &dz) in p.iter().enumerate() {
                    gb[c] += dz;
                    for (g, &xv) in gw[c * inputs..(c + 1) * inputs].iter_mut().zip(x) {
                        *g += dz * xv;
                    }
                }
            }
            Layout::Mlp { inputs, hidden: h, .. } => {
                let w2 = &theta[h * inputs + h..h * inputs + h + classes * h];
                let (gw1, rest) = grad.split_at_mut(h * inputs);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(classes * h);
                let mut dh = vec![0.0; h];
                for (c, &dz) in p.iter().enumerate() {
                    gb2[c] += dz;
                    let row = &w2[c * h..(c + 1) * h];
                    for j in 0..h {
                        gw2[c * h + j] += dz * hidden[j];
                        dh[j] += dz * row[j];
                    }
                }
                for j in 0..h {
                    // hidden[j] > 0 exactly when the pre-activation is positive
                    if hidden[j] > 0.0 {
                        gb1[j] += dh[j];
                        for (g, &xv) in gw1[j * inputs..(j + 1) * inputs].iter_mut().zip(x) {
                            *g += dh[j] * xv;
                        }
                    }
                }
            }
        }
    }
    let n = batch.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    loss / n
}
