//! Multi-stream network: an LSTM over the step sequence plus one dense
//! rectifier layer per static stream, fused by a dense rectifier layer,
//! dropout, and a linear softmax output over the three label classes.
//!
//! Forward caches every intermediate so the gradient of the class-weighted
//! cross-entropy can be back-propagated through time by hand.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Example, N_CLASSES, N_ENV, N_PERSONALITY, N_STIMULUS};
use crate::scalar::Scalar;

/// Probability floor inside the log of the loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    /// Row-major.
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    fn glorot(name: &str, shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut t = Self::zeros(name, shape);
        for v in &mut t.data {
            *v = T::lit(rng.random_range(-a..a));
        }
        t
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// `w` is `out × in`, `b` has `out` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    fn zeros(name: &str, out: usize, inp: usize) -> Self {
        Self {
            w: Tensor::zeros(&format!("{name}.w"), &[out, inp]),
            b: Tensor::zeros(&format!("{name}.b"), &[out]),
        }
    }

    fn init(name: &str, out: usize, inp: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: Tensor::glorot(&format!("{name}.w"), &[out, inp], inp, out, rng),
            b: Tensor::zeros(&format!("{name}.b"), &[out]),
        }
    }

    fn out(&self) -> usize {
        self.b.len()
    }

    fn inp(&self) -> usize {
        self.w.shape[1]
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        let n = self.inp();
        for (r, yr) in y.iter_mut().enumerate() {
            let row = &self.w.data[r * n..(r + 1) * n];
            *yr = self.b.data[r] + row.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>();
        }
    }

    /// Accumulates parameter gradients for upstream `dy` and returns the
    /// input gradient.
    fn backward(&self, x: &[T], dy: &[T], grad: &mut Dense<T>) -> Vec<T> {
        let n = self.inp();
        let mut dx = vec![T::zero(); n];
        for (r, &d) in dy.iter().enumerate() {
            if d == T::zero() {
                continue;
            }
            grad.b.data[r] += d;
            let row = &self.w.data[r * n..(r + 1) * n];
            let grow = &mut grad.w.data[r * n..(r + 1) * n];
            for c in 0..n {
                grow[c] += d * x[c];
                dx[c] += d * row[c];
            }
        }
        dx
    }
}

/// Layer sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub seq_width: usize,
    pub hidden: usize,
    /// Width of the personality stream, absent when the variant omits it.
    pub personality: Option<usize>,
    pub stimulus: Option<usize>,
    pub environment: usize,
    pub fusion: usize,
}

impl Architecture {
    fn fusion_input(&self) -> usize {
        self.hidden + self.personality.unwrap_or(0) + self.stimulus.unwrap_or(0) + self.environment
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f64> {
    pub arch: Architecture,
    /// `4H × D`, gate blocks ordered input, forget, cell, output.
    pub lstm_wx: Tensor<T>,
    /// `4H × H`.
    pub lstm_wh: Tensor<T>,
    pub lstm_b: Tensor<T>,
    pub personality: Option<Dense<T>>,
    pub stimulus: Option<Dense<T>>,
    pub environment: Dense<T>,
    pub fusion: Dense<T>,
    pub output: Dense<T>,
}

/// Train-mode randomness for one example, drawn up front so a batch can be
/// replayed exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation<T> {
    pub personality_noise: [T; N_PERSONALITY],
    pub env_noise: [T; N_ENV],
    /// Inverted-dropout multipliers on the fusion layer (0 or 1/(1-rate)).
    pub dropout_mask: Vec<T>,
}

impl<T: Scalar> Perturbation<T> {
    pub fn draw(fusion: usize, dropout: f64, noise_sigma: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut noise = || T::lit(noise_sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng));
        let personality_noise = std::array::from_fn(|_| noise());
        let env_noise = std::array::from_fn(|_| noise());
        let keep = T::lit(1.0 / (1.0 - dropout));
        let dropout_mask = (0..fusion)
            .map(|_| if rng.random::<f64>() < dropout { T::zero() } else { keep })
            .collect();
        Self {
            personality_noise,
            env_noise,
            dropout_mask,
        }
    }
}

/// Forward mode. Evaluation is deterministic: no noise, no dropout.
pub enum Mode<'a> {
    Eval,
    Train {
        rng: &'a mut ChaCha8Rng,
        dropout: f64,
        noise_sigma: f64,
    },
}

/// Gaussian noise on the personality and environment inputs; identity for
/// `sigma = 0`.
pub fn noise_augment<T: Scalar>(inputs: &[T], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<T> {
    inputs
        .iter()
        .map(|&v| {
            if sigma == 0.0 {
                v
            } else {
                v + T::lit(sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            }
        })
        .collect()
}

struct Cache<T> {
    /// `h_0 .. h_T`.
    h: Vec<Vec<T>>,
    /// `c_0 .. c_T`.
    c: Vec<Vec<T>>,
    /// Activated gates per step, `4H` each.
    gates: Vec<Vec<T>>,
    personality_in: Vec<T>,
    env_in: Vec<T>,
    personality_act: Vec<T>,
    stimulus_act: Vec<T>,
    env_act: Vec<T>,
    fusion_in: Vec<T>,
    fusion_act: Vec<T>,
    dropped: Vec<T>,
    probs: [T; N_CLASSES],
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn relu_in_place<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

pub fn softmax<T: Scalar>(logits: &[T; N_CLASSES]) -> [T; N_CLASSES] {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e = logits.map(|l| (l - m).exp());
    let s: T = e.iter().copied().sum();
    e.map(|v| v / s)
}

/// `-w_y ln max(p_y, 1e-12)`.
pub fn loss<T: Scalar>(probs: &[T; N_CLASSES], class: usize, weights: &[T; N_CLASSES]) -> T {
    -weights[class] * probs[class].max(T::lit(PROB_FLOOR)).ln()
}

impl<T: Scalar> Network<T> {
    pub fn zeros(arch: Architecture) -> Self {
        let h4 = 4 * arch.hidden;
        Self {
            arch,
            lstm_wx: Tensor::zeros("lstm.wx", &[h4, arch.seq_width]),
            lstm_wh: Tensor::zeros("lstm.wh", &[h4, arch.hidden]),
            lstm_b: Tensor::zeros("lstm.b", &[h4]),
            personality: arch.personality.map(|w| Dense::zeros("personality", w, N_PERSONALITY)),
            stimulus: arch.stimulus.map(|w| Dense::zeros("stimulus", w, N_STIMULUS)),
            environment: Dense::zeros("environment", arch.environment, N_ENV),
            fusion: Dense::zeros("fusion", arch.fusion, arch.fusion_input()),
            output: Dense::zeros("output", N_CLASSES, arch.fusion),
        }
    }

    /// Glorot-uniform weights, zero biases except a forget-gate bias of one.
    pub fn init(arch: Architecture, rng: &mut ChaCha8Rng) -> Self {
        let h = arch.hidden;
        let mut lstm_b = Tensor::zeros("lstm.b", &[4 * h]);
        for v in &mut lstm_b.data[h..2 * h] {
            *v = T::one();
        }
        Self {
            arch,
            lstm_wx: Tensor::glorot("lstm.wx", &[4 * h, arch.seq_width], arch.seq_width, h, rng),
            lstm_wh: Tensor::glorot("lstm.wh", &[4 * h, h], h, h, rng),
            lstm_b,
            personality: arch.personality.map(|w| Dense::init("personality", w, N_PERSONALITY, rng)),
            stimulus: arch.stimulus.map(|w| Dense::init("stimulus", w, N_STIMULUS, rng)),
            environment: Dense::init("environment", arch.environment, N_ENV, rng),
            fusion: Dense::init("fusion", arch.fusion, arch.fusion_input(), rng),
            output: Dense::init("output", N_CLASSES, arch.fusion, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.arch)
    }

    /// Every parameter tensor in checkpoint order.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![&self.lstm_wx, &self.lstm_wh, &self.lstm_b];
        for d in [&self.personality, &self.stimulus].into_iter().flatten() {
            v.push(&d.w);
            v.push(&d.b);
        }
        for d in [&self.environment, &self.fusion, &self.output] {
            v.push(&d.w);
            v.push(&d.b);
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = vec![&mut self.lstm_wx, &mut self.lstm_wh, &mut self.lstm_b];
        for d in [&mut self.personality, &mut self.stimulus].into_iter().flatten() {
            v.push(&mut d.w);
            v.push(&mut d.b);
        }
        for d in [&mut self.environment, &mut self.fusion, &mut self.output] {
            v.push(&mut d.w);
            v.push(&mut d.b);
        }
        v
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn check_shape(&self, ex: &Example<T>) -> Result<()> {
        if ex.steps == 0 || ex.seq.len() != ex.steps * self.arch.seq_width {
            return Err(Error::ShapeMismatch {
                expected: format!("steps x {} sequence values", self.arch.seq_width),
                found: format!("{} values over {} steps", ex.seq.len(), ex.steps),
            });
        }
        Ok(())
    }

    fn forward_cached(&self, ex: &Example<T>, perturb: Option<&Perturbation<T>>) -> Result<Cache<T>> {
        self.check_shape(ex)?;
        let hdim = self.arch.hidden;
        let d = self.arch.seq_width;
        let mut h = vec![vec![T::zero(); hdim]];
        let mut c = vec![vec![T::zero(); hdim]];
        let mut gates = Vec::with_capacity(ex.steps);
        let mut z = vec![T::zero(); 4 * hdim];
        for t in 0..ex.steps {
            let x = &ex.seq[t * d..(t + 1) * d];
            let hp = &h[t];
            for (r, zr) in z.iter_mut().enumerate() {
                let wx = &self.lstm_wx.data[r * d..(r + 1) * d];
                let wh = &self.lstm_wh.data[r * hdim..(r + 1) * hdim];
                *zr = self.lstm_b.data[r]
                    + wx.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>()
                    + wh.iter().zip(hp).map(|(&a, &b)| a * b).sum::<T>();
            }
            let mut g = vec![T::zero(); 4 * hdim];
            for k in 0..hdim {
                g[k] = sigmoid(z[k]);
                g[hdim + k] = sigmoid(z[hdim + k]);
                g[2 * hdim + k] = z[2 * hdim + k].tanh();
                g[3 * hdim + k] = sigmoid(z[3 * hdim + k]);
            }
            let cp = &c[t];
            let cn: Vec<T> = (0..hdim).map(|k| g[hdim + k] * cp[k] + g[k] * g[2 * hdim + k]).collect();
            let hn: Vec<T> = (0..hdim).map(|k| g[3 * hdim + k] * cn[k].tanh()).collect();
            gates.push(g);
            c.push(cn);
            h.push(hn);
        }

        let mut personality_in: Vec<T> = ex.personality.to_vec();
        let mut env_in: Vec<T> = ex.env.to_vec();
        if let Some(p) = perturb {
            for (v, n) in personality_in.iter_mut().zip(&p.personality_noise) {
                *v += *n;
            }
            for (v, n) in env_in.iter_mut().zip(&p.env_noise) {
                *v += *n;
            }
        }
        let stream = |dense: Option<&Dense<T>>, x: &[T]| -> Vec<T> {
            match dense {
                Some(dn) => {
                    let mut y = vec![T::zero(); dn.out()];
                    dn.apply(x, &mut y);
                    relu_in_place(&mut y);
                    y
                }
                None => Vec::new(),
            }
        };
        let personality_act = stream(self.personality.as_ref(), &personality_in);
        let stimulus_act = stream(self.stimulus.as_ref(), &ex.stimulus);
        let env_act = stream(Some(&self.environment), &env_in);

        let mut fusion_in = h[ex.steps].clone();
        fusion_in.extend_from_slice(&personality_act);
        fusion_in.extend_from_slice(&stimulus_act);
        fusion_in.extend_from_slice(&env_act);
        let mut fusion_act = vec![T::zero(); self.arch.fusion];
        self.fusion.apply(&fusion_in, &mut fusion_act);
        relu_in_place(&mut fusion_act);
        let dropped: Vec<T> = match perturb {
            Some(p) => fusion_act.iter().zip(&p.dropout_mask).map(|(&a, &m)| a * m).collect(),
            None => fusion_act.clone(),
        };
        let mut logits = [T::zero(); N_CLASSES];
        self.output.apply(&dropped, &mut logits);
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFiniteActivation("logits"));
        }
        let probs = softmax(&logits);
        Ok(Cache {
            h,
            c,
            gates,
            personality_in,
            env_in,
            personality_act,
            stimulus_act,
            env_act,
            fusion_in,
            fusion_act,
            dropped,
            probs,
        })
    }

    /// Class probabilities for one example.
    pub fn forward(&self, ex: &Example<T>, mode: Mode<'_>) -> Result<[T; N_CLASSES]> {
        let perturb = match mode {
            Mode::Eval => None,
            Mode::Train {
                rng,
                dropout,
                noise_sigma,
            } => Some(Perturbation::draw(self.arch.fusion, dropout, noise_sigma, rng)),
        };
        Ok(self.forward_cached(ex, perturb.as_ref())?.probs)
    }

    pub fn predict(&self, ex: &Example<T>) -> Result<usize> {
        let p = self.forward(ex, Mode::Eval)?;
        Ok(argmax(&p))
    }

    /// Adds the gradient of `scale * loss(example)` to `grad`.
    fn backward(&self, ex: &Example<T>, cache: &Cache<T>, scale: T, grad: &mut Network<T>) {
        let y = ex.label;
        let mut dlogits = [T::zero(); N_CLASSES];
        if cache.probs[y] >= T::lit(PROB_FLOOR) {
            for k in 0..N_CLASSES {
                let target = if k == y { T::one() } else { T::zero() };
                dlogits[k] = scale * (cache.probs[k] - target);
            }
        }
        let mut dfusion = self.output.backward(&cache.dropped, &dlogits, &mut grad.output);
        // undo the dropout multiplier, then the rectifier
        for k in 0..dfusion.len() {
            let a = cache.fusion_act[k];
            let m = if a > T::zero() { cache.dropped[k] / a } else { T::zero() };
            dfusion[k] *= m;
        }
        let dcat = self.fusion.backward(&cache.fusion_in, &dfusion, &mut grad.fusion);

        let hdim = self.arch.hidden;
        let mut off = hdim;
        let stream_back =
            |dense: &Option<Dense<T>>, g: &mut Option<Dense<T>>, input: &[T], act: &[T], off: &mut usize| {
                if let (Some(dn), Some(gd)) = (dense, g) {
                    let w = dn.out();
                    let dy: Vec<T> = (0..w)
                        .map(|k| if act[k] > T::zero() { dcat[*off + k] } else { T::zero() })
                        .collect();
                    dn.backward(input, &dy, gd);
                    *off += w;
                }
            };
        stream_back(&self.personality, &mut grad.personality, &cache.personality_in, &cache.personality_act, &mut off);
        stream_back(
            &self.stimulus,
            &mut grad.stimulus,
            &ex.stimulus,
            &cache.stimulus_act,
            &mut off,
        );
        {
            let w = self.environment.out();
            let dy: Vec<T> = (0..w)
                .map(|k| if cache.env_act[k] > T::zero() { dcat[off + k] } else { T::zero() })
                .collect();
            self.environment.backward(&cache.env_in, &dy, &mut grad.environment);
        }

        // back-propagation through time from the final hidden state
        let d = self.arch.seq_width;
        let mut dh: Vec<T> = dcat[..hdim].to_vec();
        let mut dc = vec![T::zero(); hdim];
        let mut dz = vec![T::zero(); 4 * hdim];
        for t in (0..ex.steps).rev() {
            let g = &cache.gates[t];
            let c_prev = &cache.c[t];
            let c_t = &cache.c[t + 1];
            for k in 0..hdim {
                let (i, f, gg, o) = (g[k], g[hdim + k], g[2 * hdim + k], g[3 * hdim + k]);
                let tc = c_t[k].tanh();
                let d_o = dh[k] * tc;
                let dct = dc[k] + dh[k] * o * (T::one() - tc * tc);
                let d_i = dct * gg;
                let d_g = dct * i;
                let d_f = dct * c_prev[k];
                dc[k] = dct * f;
                dz[k] = d_i * i * (T::one() - i);
                dz[hdim + k] = d_f * f * (T::one() - f);
                dz[2 * hdim + k] = d_g * (T::one() - gg * gg);
                dz[3 * hdim + k] = d_o * o * (T::one() - o);
            }
            let x = &ex.seq[t * d..(t + 1) * d];
            let h_prev = &cache.h[t];
            let mut dh_prev = vec![T::zero(); hdim];
            for (r, &dzr) in dz.iter().enumerate() {
                if dzr == T::zero() {
                    continue;
                }
                grad.lstm_b.data[r] += dzr;
                let gx = &mut grad.lstm_wx.data[r * d..(r + 1) * d];
                for c in 0..d {
                    gx[c] += dzr * x[c];
                }
                let wh = &self.lstm_wh.data[r * hdim..(r + 1) * hdim];
                let gh = &mut grad.lstm_wh.data[r * hdim..(r + 1) * hdim];
                for c in 0..hdim {
                    gh[c] += dzr * h_prev[c];
                    dh_prev[c] += dzr * wh[c];
                }
            }
            dh = dh_prev;
        }
    }

    /// Mean class-weighted loss over `batch` and its exact gradient.
    /// `perturb`, when given, holds one perturbation per example.
    pub fn loss_and_gradient(
        &self,
        batch: &[&Example<T>],
        perturb: Option<&[Perturbation<T>]>,
        weights: &[T; N_CLASSES],
    ) -> Result<(T, Network<T>)> {
        if batch.is_empty() {
            return Err(Error::EmptySplit);
        }
        let n = T::from_usize_lossy(batch.len());
        let mut grad = self.zeros_like();
        let mut total = T::zero();
        for (i, ex) in batch.iter().enumerate() {
            let cache = self.forward_cached(ex, perturb.map(|p| &p[i]))?;
            total += loss(&cache.probs, ex.label, weights);
            self.backward(ex, &cache, weights[ex.label] / n, &mut grad);
        }
        for t in grad.tensors() {
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(t.name.clone()));
            }
        }
        Ok((total / n, grad))
    }

    /// Plain-text checkpoint: a header line with the architecture as JSON,
    /// then per tensor a `tensor <name> <dims...>` line followed by one line
    /// of row-major values per leading index.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let arch = serde_json::to_string(&self.arch).unwrap_or_default();
        let _ = writeln!(s, "emogaze-network 1");
        let _ = writeln!(s, "architecture {arch}");
        for t in self.tensors() {
            let dims: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(s, "tensor {} {}", t.name, dims.join(" "));
            let row = if t.shape.len() > 1 { t.shape[1..].iter().product() } else { t.len() };
            for chunk in t.data.chunks(row.max(1)) {
                let vals: Vec<String> = chunk.iter().map(|v| format!("{:?}", v.to_f64_lossy())).collect();
                let _ = writeln!(s, "{}", vals.join(" "));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidValue(format!("checkpoint: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some("emogaze-network 1") {
            return Err(bad("missing header".into()));
        }
        let arch_line = lines.next().ok_or_else(|| bad("missing architecture".into()))?;
        let arch: Architecture = arch_line
            .strip_prefix("architecture ")
            .and_then(|j| serde_json::from_str(j).ok())
            .ok_or_else(|| bad("unreadable architecture".into()))?;
        let mut net = Self::zeros(arch);
        for t in net.tensors_mut() {
            let head = lines.next().ok_or_else(|| bad(format!("missing tensor {}", t.name)))?;
            let mut parts = head.split_whitespace();
            let expected_dims: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            if parts.next() != Some("tensor") || parts.next() != Some(t.name.as_str()) {
                return Err(bad(format!("expected tensor {}, found {head:?}", t.name)));
            }
            let dims: Vec<&str> = parts.collect();
            if dims != expected_dims.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} {:?}", t.name, t.shape),
                    found: dims.join(" "),
                });
            }
            let rows = if t.shape.len() > 1 { t.shape[0] } else { 1 };
            let mut k = 0;
            for _ in 0..rows {
                let line = lines.next().ok_or_else(|| bad(format!("truncated tensor {}", t.name)))?;
                for tok in line.split_whitespace() {
                    let v: f64 = tok.parse().map_err(|_| bad(format!("bad value {tok:?} in {}", t.name)))?;
                    if k >= t.data.len() {
                        return Err(bad(format!("too many values in {}", t.name)));
                    }
                    t.data[k] = T::lit(v);
                    k += 1;
                }
            }
            if k != t.data.len() {
                return Err(bad(format!("tensor {} has {k} of {} values", t.name, t.data.len())));
            }
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_lines(path, |w| w.write_all(self.to_text().as_bytes()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

pub fn argmax<T: Scalar>(p: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn arch(hidden: usize) -> Architecture {
        Architecture {
            seq_width: 3,
            hidden,
            personality: Some(2),
            stimulus: Some(3),
            environment: 2,
            fusion: 5,
        }
    }

    fn example(rng: &mut ChaCha8Rng, steps: usize, width: usize, label: usize) -> Example<f64> {
        let mut n = || -> f64 { StandardNormal.sample(rng) };
        Example {
            trial_id: String::new(),
            participant_id: String::new(),
            steps,
            seq: (0..steps * width).map(|_| n()).collect(),
            personality: std::array::from_fn(|_| n()),
            stimulus: {
                let mut s = [0.0; N_STIMULUS];
                s[label * 2] = 1.0;
                s
            },
            env: std::array::from_fn(|_| n()),
            label,
        }
    }

    fn relative_error(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }

    #[test]
    fn zero_network_is_uniform() {
        let net: Network<f64> = Network::zeros(arch(4));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ex = example(&mut rng, 5, 3, 0);
        let p = net.forward(&ex, Mode::Eval).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn output_bias_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net: Network<f64> = Network::init(arch(4), &mut rng);
        let ex = example(&mut rng, 6, 3, 1);
        let p = net.forward(&ex, Mode::Eval).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for b in &mut net.output.b.data {
            *b += 3.7;
        }
        let q = net.forward(&ex, Mode::Eval).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_examples() {
        let w = [1.0, 1.0, 1.0];
        assert_eq!(loss(&[0.0, 1.0, 0.0], 1, &[2.0, 3.0, 4.0]), 0.0);
        assert!((loss(&[1.0 / 3.0; 3], 2, &w) - 3f64.ln()).abs() < 1e-15);
        let p = [0.2, 0.5, 0.3];
        assert!((loss(&p, 0, &[2.0, 2.0, 2.0]) - 2.0 * loss(&p, 0, &w)).abs() < 1e-15);
        // clipped at the floor
        assert!((loss(&[0.0, 0.5, 0.5], 0, &w) + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    fn finite_difference_check(perturbed: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net: Network<f64> = Network::init(arch(4), &mut rng);
        let batch: Vec<Example<f64>> = (0..3).map(|i| example(&mut rng, 5, 3, i % 3)).collect();
        let refs: Vec<&Example<f64>> = batch.iter().collect();
        let weights = [0.7, 1.3, 2.1];
        let perturb: Option<Vec<Perturbation<f64>>> =
            perturbed.then(|| (0..3).map(|_| Perturbation::draw(5, 0.3, 0.05, &mut rng)).collect());
        let (_, grad) = net.loss_and_gradient(&refs, perturb.as_deref(), &weights).unwrap();
        let h = 1e-5;
        let n_tensors = net.tensors().len();
        for ti in 0..n_tensors {
            let len = net.tensors()[ti].len();
            let mut numeric = vec![0.0; len];
            for k in 0..len {
                let mut plus = net.clone();
                plus.tensors_mut()[ti].data[k] += h;
                let mut minus = net.clone();
                minus.tensors_mut()[ti].data[k] -= h;
                let lp = plus.loss_and_gradient(&refs, perturb.as_deref(), &weights).unwrap().0;
                let lm = minus.loss_and_gradient(&refs, perturb.as_deref(), &weights).unwrap().0;
                numeric[k] = (lp - lm) / (2.0 * h);
            }
            let analytic = &grad.tensors()[ti].data;
            let err = relative_error(analytic, &numeric);
            assert!(err < 1e-4, "tensor {}: relative error {err:e}", grad.tensors()[ti].name);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        finite_difference_check(false);
    }

    #[test]
    fn gradient_matches_finite_differences_with_dropout_and_noise() {
        finite_difference_check(true);
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net: Network<f64> = Network::init(arch(4), &mut rng);
        let batch: Vec<Example<f64>> = (0..3).map(|i| example(&mut rng, 4, 3, i)).collect();
        let refs: Vec<&Example<f64>> = batch.iter().collect();
        let (l, g) = net.loss_and_gradient(&refs, None, &[0.0; 3]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.tensors().iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn duplicating_an_example_keeps_mean_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net: Network<f64> = Network::init(arch(4), &mut rng);
        let a = example(&mut rng, 4, 3, 2);
        let w = [1.0, 2.0, 0.5];
        let (_, g1) = net.loss_and_gradient(&[&a], None, &w).unwrap();
        let (_, g2) = net.loss_and_gradient(&[&a, &a], None, &w).unwrap();
        for (x, y) in g1.tensors().iter().zip(g2.tensors()) {
            for (u, v) in x.data.iter().zip(&y.data) {
                assert!((u - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net: Network<f64> = Network::zeros(arch(4));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ex = example(&mut rng, 5, 3, 0);
        ex.seq.pop();
        assert!(matches!(net.forward(&ex, Mode::Eval), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net: Network<f64> = Network::init(arch(3), &mut rng);
        let back = Network::<f64>::from_text(&net.to_text()).unwrap();
        assert_eq!(back, net);
        let eye_only = Architecture {
            personality: None,
            stimulus: None,
            ..arch(3)
        };
        let net: Network<f64> = Network::init(eye_only, &mut rng);
        assert_eq!(Network::<f64>::from_text(&net.to_text()).unwrap(), net);
        assert!(Network::<f64>::from_text("garbage").is_err());
    }

    #[test]
    fn noise_is_identity_at_zero_and_has_requested_sd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = vec![1.5; 10];
        assert_eq!(noise_augment(&x, 0.0, &mut rng), x);
        let zeros = vec![0.0f64; 100_000];
        let y = noise_augment(&zeros, 0.05, &mut rng);
        let m = y.iter().sum::<f64>() / y.len() as f64;
        let sd = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (y.len() - 1) as f64).sqrt();
        assert!((0.049..=0.051).contains(&sd), "{sd}");
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net: Network<f64> = Network::init(arch(4), &mut rng);
        let ex = example(&mut rng, 5, 3, 0);
        assert_eq!(net.forward(&ex, Mode::Eval).unwrap(), net.forward(&ex, Mode::Eval).unwrap());
    }

    #[test]
    fn works_in_f32() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net: Network<f32> = Network::init(arch(4), &mut rng);
        let ex = Example {
            trial_id: String::new(),
            participant_id: String::new(),
            steps: 2,
            seq: vec![0.1f32; 6],
            personality: [0.5; 5],
            stimulus: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            env: [0.0; 3],
            label: 1,
        };
        let p = net.forward(&ex, Mode::Eval).unwrap();
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }
}
