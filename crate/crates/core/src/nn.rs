//! Dense neural-network kernel: fully connected layers with ReLU, batch
//! normalization and a linear or (block-)softmax head; exact backprop
//! including through batch statistics; Adam; soft target updates; text
//! checkpoints bound to a topology hash.
//!
//! Everything is f64. Forward never mutates parameters: in the train phase
//! the updated running statistics are returned in the cache and applied by
//! the caller via [`commit_running_stats`].

use ndarray::{Array1, Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient in layer {0}")]
    NonFiniteGrad(usize),
    #[error("checkpoint parse error: {0}")]
    Checkpoint(String),
    #[error("checkpoint topology hash {found} does not match expected {expected}")]
    HashMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Output head. `Softmax` normalizes each listed block independently so a
/// single network can emit several splitting simplices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Head {
    Linear,
    Softmax { blocks: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub batch_norm: bool,
    pub head: Head,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: Vec<usize>, output: usize, batch_norm: bool, head: Head) -> Self {
        assert!(!hidden.is_empty(), "at least one hidden layer required");
        if let Head::Softmax { blocks } = &head {
            assert_eq!(blocks.iter().sum::<usize>(), output, "softmax blocks must cover the output");
        }
        MlpSpec { input, hidden, output, batch_norm, head }
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut sizes = vec![self.input];
        sizes.extend(&self.hidden);
        sizes.push(self.output);
        sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub bn: Vec<BnParams>,
}

/// Gradient (or moment) container shaped like the trainable parameters.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub bn: Vec<(Array1<f64>, Array1<f64>)>, // (dgamma, dbeta)
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        MlpGrads {
            weights: params.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: params.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            bn: params
                .bn
                .iter()
                .map(|b| (Array1::zeros(b.gamma.raw_dim()), Array1::zeros(b.beta.raw_dim())))
                .collect(),
        }
    }

    pub fn scale(&mut self, c: f64) {
        for w in &mut self.weights {
            w.mapv_inplace(|x| x * c);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|x| x * c);
        }
        for (g, b) in &mut self.bn {
            g.mapv_inplace(|x| x * c);
            b.mapv_inplace(|x| x * c);
        }
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for w in &self.weights {
            for &x in w.iter() {
                m = m.max(x.abs());
            }
        }
        for b in &self.biases {
            for &x in b.iter() {
                m = m.max(x.abs());
            }
        }
        for (g, b) in &self.bn {
            for &x in g.iter().chain(b.iter()) {
                m = m.max(x.abs());
            }
        }
        m
    }
}

/// Hidden weights uniform in ±sqrt(6/fan_in), final layer uniform in ±3e-3,
/// biases zero, BN scale 1 / shift 0 with running mean 0 and variance 1.
pub fn init(spec: &MlpSpec, seed: u64) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = spec.layer_dims();
    let last = dims.len() - 1;
    let mut weights = Vec::with_capacity(dims.len());
    let mut biases = Vec::with_capacity(dims.len());
    for (i, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let bound = if i == last { 3e-3 } else { (6.0 / fan_in as f64).sqrt() };
        let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound));
        weights.push(w);
        biases.push(Array1::zeros(fan_out));
    }
    let bn = if spec.batch_norm {
        spec.hidden
            .iter()
            .map(|&d| BnParams {
                gamma: Array1::ones(d),
                beta: Array1::zeros(d),
                running_mean: Array1::zeros(d),
                running_var: Array1::ones(d),
            })
            .collect()
    } else {
        Vec::new()
    };
    MlpParams { spec: spec.clone(), weights, biases, bn }
}

struct HiddenCache {
    z_hat: Option<Array2<f64>>,
    inv_std: Option<Array1<f64>>,
    pre_act: Array2<f64>,
    post_act: Array2<f64>,
}

pub struct Cache {
    input: Array2<f64>,
    hidden: Vec<HiddenCache>,
    output: Array2<f64>,
    phase: Phase,
    new_running: Vec<(Array1<f64>, Array1<f64>)>,
}

impl Cache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Forward pass. Train phase normalizes with batch statistics (batch size
/// must be ≥ 2 when batch norm is on) and records updated running stats in
/// the cache; eval phase uses running stats and is batch-size-1 safe.
pub fn forward(params: &MlpParams, x: &Array2<f64>, phase: Phase) -> Result<Cache, NnError> {
    let spec = &params.spec;
    if x.ncols() != spec.input {
        return Err(NnError::Shape(format!(
            "input width {} does not match spec input {}",
            x.ncols(),
            spec.input
        )));
    }
    if phase == Phase::Train && spec.batch_norm && x.nrows() < 2 {
        return Err(NnError::Shape("batch size must be >= 2 in train phase with batch norm".into()));
    }
    let mut cur = x.clone();
    let mut hidden = Vec::with_capacity(spec.hidden.len());
    let mut new_running = Vec::new();
    for layer in 0..spec.hidden.len() {
        let z = cur.dot(&params.weights[layer]) + &params.biases[layer];
        let (pre_act, z_hat, inv_std) = if spec.batch_norm {
            let bn = &params.bn[layer];
            let (mean, var) = match phase {
                Phase::Train => {
                    let mean = z.mean_axis(Axis(0)).unwrap();
                    let centered = &z - &mean;
                    let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).unwrap();
                    let rm = &bn.running_mean * BN_MOMENTUM + &mean * (1.0 - BN_MOMENTUM);
                    let rv = &bn.running_var * BN_MOMENTUM + &var * (1.0 - BN_MOMENTUM);
                    new_running.push((rm, rv));
                    (mean, var)
                }
                Phase::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
            };
            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let z_hat = (&z - &mean) * &inv_std;
            let pre_act = &z_hat * &bn.gamma + &bn.beta;
            (pre_act, Some(z_hat), Some(inv_std))
        } else {
            (z, None, None)
        };
        let post_act = pre_act.mapv(|v| v.max(0.0));
        cur = post_act.clone();
        hidden.push(HiddenCache { z_hat, inv_std, pre_act, post_act });
    }
    let logits = cur.dot(params.weights.last().unwrap()) + params.biases.last().unwrap();
    let output = match &spec.head {
        Head::Linear => logits,
        Head::Softmax { blocks } => block_softmax(&logits, blocks),
    };
    Ok(Cache { input: x.clone(), hidden, output, phase, new_running })
}

fn block_softmax(logits: &Array2<f64>, blocks: &[usize]) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let mut start = 0;
        for &b in blocks {
            let slice = &mut row.as_slice_mut().unwrap()[start..start + b];
            let max = slice.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in slice.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in slice.iter_mut() {
                *v /= sum;
            }
            start += b;
        }
    }
    out
}

/// Applies the train-phase running-statistics update recorded in `cache`.
pub fn commit_running_stats(params: &mut MlpParams, cache: &Cache) {
    debug_assert_eq!(cache.phase, Phase::Train);
    for (bn, (rm, rv)) in params.bn.iter_mut().zip(&cache.new_running) {
        bn.running_mean = rm.clone();
        bn.running_var = rv.clone();
    }
}

/// Exact gradients of the forward computation. `output_grads` is dLoss/dOutput
/// (after the head); returns parameter gradients and dLoss/dInput.
pub fn backward(
    params: &MlpParams,
    cache: &Cache,
    output_grads: &Array2<f64>,
) -> Result<(MlpGrads, Array2<f64>), NnError> {
    let spec = &params.spec;
    if output_grads.raw_dim() != cache.output.raw_dim() {
        return Err(NnError::Shape("output_grads shape does not match cached output".into()));
    }
    let mut grads = MlpGrads::zeros_like(params);
    if spec.batch_norm {
        grads.bn = spec
            .hidden
            .iter()
            .map(|&d| (Array1::zeros(d), Array1::zeros(d)))
            .collect();
    }

    // head
    let dlogits = match &spec.head {
        Head::Linear => output_grads.clone(),
        Head::Softmax { blocks } => {
            let mut d = Array2::zeros(output_grads.raw_dim());
            for (r, (g_row, y_row)) in output_grads.rows().into_iter().zip(cache.output.rows()).enumerate() {
                let mut start = 0;
                for &b in blocks {
                    let mut dot = 0.0;
                    for i in start..start + b {
                        dot += g_row[i] * y_row[i];
                    }
                    for i in start..start + b {
                        d[[r, i]] = y_row[i] * (g_row[i] - dot);
                    }
                    start += b;
                }
            }
            d
        }
    };

    // output affine layer
    let last = spec.hidden.len();
    let prev_act = if last == 0 { &cache.input } else { &cache.hidden[last - 1].post_act };
    grads.weights[last] = prev_act.t().dot(&dlogits);
    grads.biases[last] = dlogits.sum_axis(Axis(0));
    let mut dcur = dlogits.dot(&params.weights[last].t());

    // hidden layers, top down
    for layer in (0..spec.hidden.len()).rev() {
        let hc = &cache.hidden[layer];
        // ReLU
        let relu_mask = hc.pre_act.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let dpre = &dcur * &relu_mask;
        let dz = if spec.batch_norm {
            let z_hat = hc.z_hat.as_ref().unwrap();
            let inv_std = hc.inv_std.as_ref().unwrap();
            let bn = &params.bn[layer];
            grads.bn[layer].0 = (&dpre * z_hat).sum_axis(Axis(0));
            grads.bn[layer].1 = dpre.sum_axis(Axis(0));
            let dzh = &dpre * &bn.gamma;
            match cache.phase {
                Phase::Train => {
                    let mean_dzh = dzh.mean_axis(Axis(0)).unwrap();
                    let mean_dzh_zh = (&dzh * z_hat).mean_axis(Axis(0)).unwrap();
                    (&dzh - &mean_dzh - &(z_hat * &mean_dzh_zh)) * inv_std
                }
                Phase::Eval => dzh * inv_std,
            }
        } else {
            dpre
        };
        let prev_act = if layer == 0 { &cache.input } else { &cache.hidden[layer - 1].post_act };
        grads.weights[layer] = prev_act.t().dot(&dz);
        grads.biases[layer] = dz.sum_axis(Axis(0));
        dcur = dz.dot(&params.weights[layer].t());
    }
    Ok((grads, dcur))
}

/// Adam optimizer state (β1 0.9, β2 0.999, ε 1e-8).
#[derive(Debug, Clone)]
pub struct OptState {
    pub lr: f64,
    pub step: u64,
    m: MlpGrads,
    v: MlpGrads,
}

impl OptState {
    pub fn new(params: &MlpParams, lr: f64) -> Self {
        OptState { lr, step: 0, m: MlpGrads::zeros_like(params), v: MlpGrads::zeros_like(params) }
    }
}

fn adam_update(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64, t: u64) {
    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
    let m_hat = *m / (1.0 - ADAM_BETA1.powi(t as i32));
    let v_hat = *v / (1.0 - ADAM_BETA2.powi(t as i32));
    *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
}

/// One Adam step. Errors on non-finite gradients, naming the layer.
pub fn opt_step(params: &mut MlpParams, grads: &MlpGrads, opt: &mut OptState) -> Result<(), NnError> {
    for (layer, w) in grads.weights.iter().enumerate() {
        if w.iter().any(|x| !x.is_finite()) || grads.biases[layer].iter().any(|x| !x.is_finite()) {
            return Err(NnError::NonFiniteGrad(layer));
        }
    }
    for (layer, (dg, db)) in grads.bn.iter().enumerate() {
        if dg.iter().any(|x| !x.is_finite()) || db.iter().any(|x| !x.is_finite()) {
            return Err(NnError::NonFiniteGrad(layer));
        }
    }
    opt.step += 1;
    let t = opt.step;
    let lr = opt.lr;
    for layer in 0..params.weights.len() {
        for ((p, &g), (m, v)) in params.weights[layer]
            .iter_mut()
            .zip(grads.weights[layer].iter())
            .zip(opt.m.weights[layer].iter_mut().zip(opt.v.weights[layer].iter_mut()))
        {
            adam_update(p, g, m, v, lr, t);
        }
        for ((p, &g), (m, v)) in params.biases[layer]
            .iter_mut()
            .zip(grads.biases[layer].iter())
            .zip(opt.m.biases[layer].iter_mut().zip(opt.v.biases[layer].iter_mut()))
        {
            adam_update(p, g, m, v, lr, t);
        }
    }
    for layer in 0..params.bn.len() {
        let (dg, db) = &grads.bn[layer];
        let (mg, mb) = &mut opt.m.bn[layer];
        let (vg, vb) = &mut opt.v.bn[layer];
        for ((p, &g), (m, v)) in params.bn[layer].gamma.iter_mut().zip(dg.iter()).zip(mg.iter_mut().zip(vg.iter_mut())) {
            adam_update(p, g, m, v, lr, t);
        }
        for ((p, &g), (m, v)) in params.bn[layer].beta.iter_mut().zip(db.iter()).zip(mb.iter_mut().zip(vb.iter_mut())) {
            adam_update(p, g, m, v, lr, t);
        }
    }
    Ok(())
}

/// target ← τ·online + (1−τ)·target for every parameter, including BN
/// scale/shift and running statistics.
pub fn soft_update(target: &mut MlpParams, online: &MlpParams, tau: f64) {
    assert!(tau > 0.0 && tau <= 1.0);
    assert_eq!(target.spec, online.spec, "soft update requires matching specs");
    let blend1 = |t: &mut Array1<f64>, o: &Array1<f64>| {
        t.zip_mut_with(o, |t, &o| *t = tau * o + (1.0 - tau) * *t);
    };
    for (t, o) in target.weights.iter_mut().zip(&online.weights) {
        t.zip_mut_with(o, |t, &o| *t = tau * o + (1.0 - tau) * *t);
    }
    for (t, o) in target.biases.iter_mut().zip(&online.biases) {
        blend1(t, o);
    }
    for (t, o) in target.bn.iter_mut().zip(&online.bn) {
        blend1(&mut t.gamma, &o.gamma);
        blend1(&mut t.beta, &o.beta);
        blend1(&mut t.running_mean, &o.running_mean);
        blend1(&mut t.running_var, &o.running_var);
    }
}

/// What a checkpoint belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Role {
    Actor(usize),
    /// Full-state single-agent actor (no owning switch).
    SingleActor,
    Critic,
}

/// Text checkpoint with full-precision decimals and a topology hash binding.
pub fn serialize(params: &MlpParams, topology_hash: &str, role: &Role) -> String {
    let spec = &params.spec;
    let mut out = String::from("CMRL-CKPT v1\n");
    out.push_str(&format!("topology_hash {topology_hash}\n"));
    match role {
        Role::Actor(h) => out.push_str(&format!("role actor {h}\n")),
        Role::SingleActor => out.push_str("role actor-single\n"),
        Role::Critic => out.push_str("role critic\n"),
    }
    let hidden: Vec<String> = spec.hidden.iter().map(|h| h.to_string()).collect();
    let head = match &spec.head {
        Head::Linear => "linear".to_string(),
        Head::Softmax { blocks } => format!(
            "softmax {}",
            blocks.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(",")
        ),
    };
    out.push_str(&format!(
        "spec input {} hidden {} batch_norm {} head {}\n",
        spec.input,
        hidden.join(","),
        spec.batch_norm as u8,
        head
    ));
    let fmt_row = |vals: &mut dyn Iterator<Item = &f64>| -> String {
        vals.map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(" ")
    };
    for (i, w) in params.weights.iter().enumerate() {
        out.push_str(&format!("weight {} {} {}\n", i, w.nrows(), w.ncols()));
        for row in w.rows() {
            out.push_str(&fmt_row(&mut row.iter()));
            out.push('\n');
        }
        out.push_str(&format!("bias {} {}\n", i, params.biases[i].len()));
        out.push_str(&fmt_row(&mut params.biases[i].iter()));
        out.push('\n');
    }
    for (i, bn) in params.bn.iter().enumerate() {
        out.push_str(&format!("bn {} {}\n", i, bn.gamma.len()));
        for arr in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
            out.push_str(&fmt_row(&mut arr.iter()));
            out.push('\n');
        }
    }
    out
}

/// Parses a checkpoint; errors if the embedded topology hash does not match
/// `expected_hash` (pass `None` to skip the check).
pub fn deserialize(text: &str, expected_hash: Option<&str>) -> Result<(MlpParams, Role, String), NnError> {
    let err = |msg: &str| NnError::Checkpoint(msg.to_string());
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("CMRL-CKPT v1") {
        return Err(err("missing CMRL-CKPT v1 header"));
    }
    let hash_line = lines.next().ok_or_else(|| err("missing topology_hash"))?;
    let hash = hash_line
        .strip_prefix("topology_hash ")
        .ok_or_else(|| err("missing topology_hash"))?
        .trim()
        .to_string();
    if let Some(expected) = expected_hash {
        if hash != expected {
            return Err(NnError::HashMismatch { expected: expected.to_string(), found: hash });
        }
    }
    let role_line = lines.next().ok_or_else(|| err("missing role"))?;
    let role = if role_line.trim() == "role critic" {
        Role::Critic
    } else if role_line.trim() == "role actor-single" {
        Role::SingleActor
    } else if let Some(h) = role_line.strip_prefix("role actor ") {
        Role::Actor(h.trim().parse().map_err(|_| err("bad actor node id"))?)
    } else {
        return Err(err("bad role line"));
    };
    let spec_line = lines.next().ok_or_else(|| err("missing spec"))?;
    let toks: Vec<&str> = spec_line.split_whitespace().collect();
    if toks.len() < 9 || toks[0] != "spec" {
        return Err(err("bad spec line"));
    }
    let input: usize = toks[2].parse().map_err(|_| err("bad input size"))?;
    let hidden: Vec<usize> = toks[4]
        .split(',')
        .map(|s| s.parse().map_err(|_| err("bad hidden sizes")))
        .collect::<Result<_, _>>()?;
    let batch_norm = toks[6] == "1";
    let head = match toks[8] {
        "linear" => Head::Linear,
        "softmax" => {
            let blocks: Vec<usize> = toks
                .get(9)
                .ok_or_else(|| err("missing softmax blocks"))?
                .split(',')
                .map(|s| s.parse().map_err(|_| err("bad softmax blocks")))
                .collect::<Result<_, _>>()?;
            Head::Softmax { blocks }
        }
        _ => return Err(err("bad head")),
    };
    let output = match &head {
        Head::Linear => 0, // fixed up from the last weight matrix below
        Head::Softmax { blocks } => blocks.iter().sum(),
    };

    let parse_row = |line: &str, want: usize| -> Result<Vec<f64>, NnError> {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err("bad number")))
            .collect::<Result<_, _>>()?;
        if vals.len() != want {
            return Err(err("row length mismatch"));
        }
        Ok(vals)
    };

    let n_layers = hidden.len() + 1;
    let mut weights = Vec::with_capacity(n_layers);
    let mut biases = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let hdr = lines.next().ok_or_else(|| err("truncated (weight header)"))?;
        let h: Vec<&str> = hdr.split_whitespace().collect();
        if h.len() != 4 || h[0] != "weight" || h[1] != i.to_string() {
            return Err(err("bad weight header"));
        }
        let rows: usize = h[2].parse().map_err(|_| err("bad weight rows"))?;
        let cols: usize = h[3].parse().map_err(|_| err("bad weight cols"))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let row = parse_row(lines.next().ok_or_else(|| err("truncated (weight row)"))?, cols)?;
            data.extend(row);
        }
        weights.push(Array2::from_shape_vec((rows, cols), data).map_err(|_| err("bad weight shape"))?);
        let bhdr = lines.next().ok_or_else(|| err("truncated (bias header)"))?;
        let b: Vec<&str> = bhdr.split_whitespace().collect();
        if b.len() != 3 || b[0] != "bias" {
            return Err(err("bad bias header"));
        }
        let len: usize = b[2].parse().map_err(|_| err("bad bias len"))?;
        let row = parse_row(lines.next().ok_or_else(|| err("truncated (bias row)"))?, len)?;
        biases.push(Array1::from_vec(row));
    }
    let output = if output == 0 { weights.last().unwrap().ncols() } else { output };
    let mut bn = Vec::new();
    if batch_norm {
        for i in 0..hidden.len() {
            let hdr = lines.next().ok_or_else(|| err("truncated (bn header)"))?;
            let h: Vec<&str> = hdr.split_whitespace().collect();
            if h.len() != 3 || h[0] != "bn" || h[1] != i.to_string() {
                return Err(err("bad bn header"));
            }
            let len: usize = h[2].parse().map_err(|_| err("bad bn len"))?;
            let mut arrs = Vec::with_capacity(4);
            for _ in 0..4 {
                let row = parse_row(lines.next().ok_or_else(|| err("truncated (bn row)"))?, len)?;
                arrs.push(Array1::from_vec(row));
            }
            let running_var = arrs.pop().unwrap();
            let running_mean = arrs.pop().unwrap();
            let beta = arrs.pop().unwrap();
            let gamma = arrs.pop().unwrap();
            bn.push(BnParams { gamma, beta, running_mean, running_var });
        }
    }
    let spec = MlpSpec::new(input, hidden, output, batch_norm, head);
    Ok((MlpParams { spec, weights, biases, bn }, role, hash))
}
