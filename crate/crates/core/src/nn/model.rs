use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::layers::{self, Conv};
use super::loss::{LossBreakdown, LossWeights, LOG_CLAMP};
use crate::rng;
use crate::{Error, Result};

/// I/Q columns of every input tensor.
pub const IQ_WIDTH: usize = 2;

/// Layer stack: encoder `Conv(10x1) -> Pool -> Conv(3x2) -> Pool`, decoder
/// `Conv(3x2) -> Up -> Conv(10x1) -> Up -> Conv(3x1, sigmoid)`, classifier
/// `Flatten -> Dense(ReLU) -> Dropout -> Dense(softmax)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Length `L` of the `L x 2` input.
    pub input_rows: usize,
    pub n_classes: usize,
    pub filters: usize,
    pub dense_units: usize,
    /// Pooling and upsampling factor along the length axis.
    pub pool: usize,
    pub dropout: f64,
    /// L2 penalty on the hidden dense layer's kernel.
    pub l2_dense: f64,
    /// `false` for the plain CNN (encoder + classifier only).
    pub decoder: bool,
}

impl NetworkSpec {
    /// Full-width stack with 128 filters and 1024 hidden units.
    pub fn full_width(input_rows: usize, n_classes: usize) -> Self {
        Self {
            input_rows,
            n_classes,
            filters: 128,
            dense_units: 1024,
            pool: Self::pool_for_rows(input_rows),
            dropout: 0.5,
            l2_dense: 0.001,
            decoder: true,
        }
    }

    /// 4 for six- and eight-symbol inputs, 2 for shorter ones.
    pub fn pool_for_rows(rows: usize) -> usize {
        if rows >= 960 {
            4
        } else {
            2
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.pool < 1 || self.input_rows == 0 || self.input_rows % (self.pool * self.pool) != 0 {
            return bad(format!("input_rows {} must be a positive multiple of pool^2 = {}", self.input_rows, self.pool * self.pool));
        }
        if self.n_classes < 2 || self.filters == 0 || self.dense_units == 0 {
            return bad("n_classes >= 2, filters > 0 and dense_units > 0 required".into());
        }
        if !(0.0..1.0).contains(&self.dropout) || !(self.l2_dense >= 0.0) {
            return bad(format!("dropout must be in [0, 1) and l2 >= 0, got {} / {}", self.dropout, self.l2_dense));
        }
        Ok(())
    }

    pub fn input_dims(&self) -> usize {
        self.input_rows * IQ_WIDTH
    }

    fn lengths(&self) -> (usize, usize, usize) {
        let l0 = self.input_rows;
        (l0, l0 / self.pool, l0 / (self.pool * self.pool))
    }

    /// Width of the flattened encoder output.
    pub fn feature_dims(&self) -> usize {
        self.lengths().2 * IQ_WIDTH * self.filters
    }

    fn convs(&self) -> [Conv; 5] {
        let c = self.filters;
        [
            Conv::new(10, 1, 1, c),
            Conv::new(3, 2, c, c),
            Conv::new(3, 2, c, c),
            Conv::new(10, 1, c, c),
            Conv::new(3, 1, c, 1),
        ]
    }

    /// Names, groups, shapes and initializer of each parameter tensor, in
    /// storage order. Decoder tensors come last so the CNN is a prefix.
    pub fn layout(&self) -> Vec<ParamInfo> {
        let [e1, e2, d1, d2, out] = self.convs();
        let (f, d, n) = (self.feature_dims(), self.dense_units, self.n_classes);
        let conv_w = |c: Conv| vec![c.kh, c.kw, c.cin, c.cout];
        let mut v = vec![
            ParamInfo::new("encoder.conv1.weight", Group::Encoder, conv_w(e1), Init::He(e1.fan_in())),
            ParamInfo::new("encoder.conv1.bias", Group::Encoder, vec![e1.cout], Init::Zero),
            ParamInfo::new("encoder.conv2.weight", Group::Encoder, conv_w(e2), Init::He(e2.fan_in())),
            ParamInfo::new("encoder.conv2.bias", Group::Encoder, vec![e2.cout], Init::Zero),
            ParamInfo::new("classifier.dense1.weight", Group::Classifier, vec![f, d], Init::He(f)),
            ParamInfo::new("classifier.dense1.bias", Group::Classifier, vec![d], Init::Zero),
            ParamInfo::new("classifier.dense2.weight", Group::Classifier, vec![d, n], Init::Glorot(d, n)),
            ParamInfo::new("classifier.dense2.bias", Group::Classifier, vec![n], Init::Zero),
        ];
        if self.decoder {
            v.extend([
                ParamInfo::new("decoder.conv1.weight", Group::Decoder, conv_w(d1), Init::He(d1.fan_in())),
                ParamInfo::new("decoder.conv1.bias", Group::Decoder, vec![d1.cout], Init::Zero),
                ParamInfo::new("decoder.conv2.weight", Group::Decoder, conv_w(d2), Init::He(d2.fan_in())),
                ParamInfo::new("decoder.conv2.bias", Group::Decoder, vec![d2.cout], Init::Zero),
                ParamInfo::new("decoder.out.weight", Group::Decoder, conv_w(out), Init::Glorot(out.fan_in(), 1)),
                ParamInfo::new("decoder.out.bias", Group::Decoder, vec![1], Init::Zero),
            ]);
        }
        v
    }
}

/// Same spec with the reconstruction branch removed.
pub fn degenerate_to_cnn(spec: &NetworkSpec) -> NetworkSpec {
    NetworkSpec { decoder: false, ..*spec }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Encoder,
    Decoder,
    Classifier,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zero,
    /// Uniform in `+-sqrt(6 / fan_in)`.
    He(usize),
    /// Uniform in `+-sqrt(6 / (fan_in + fan_out))`.
    Glorot(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamInfo {
    pub name: &'static str,
    pub group: Group,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamInfo {
    fn new(name: &'static str, group: Group, shape: Vec<usize>, init: Init) -> Self {
        Self { name, group, shape, init }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub group: Group,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

const ENC1_W: usize = 0;
const ENC1_B: usize = 1;
const ENC2_W: usize = 2;
const ENC2_B: usize = 3;
const CLS1_W: usize = 4;
const CLS1_B: usize = 5;
const CLS2_W: usize = 6;
const CLS2_B: usize = 7;
const DEC1_W: usize = 8;
const DEC1_B: usize = 9;
const DEC2_W: usize = 10;
const DEC2_B: usize = 11;
const OUT_W: usize = 12;
const OUT_B: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, intermediates recorded for [`ModelState::backward`].
    Train,
    /// Deterministic, dropout-free, nothing recorded.
    Eval,
}

/// Forward activations for one batch.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub batch: usize,
    recorded: bool,
    z: Vec<f64>,
    a1: Vec<f64>,
    p1: Vec<f64>,
    idx1: Vec<u32>,
    a2: Vec<f64>,
    idx2: Vec<u32>,
    /// Encoder output, flattened per sample.
    pub h: Vec<f64>,
    d1: Vec<f64>,
    u1: Vec<f64>,
    d2: Vec<f64>,
    u2: Vec<f64>,
    /// Reconstruction in `[0, 1]`, empty without a decoder.
    pub z_tilde: Vec<f64>,
    e1: Vec<f64>,
    mask: Option<Vec<f64>>,
    dropped: Vec<f64>,
    logits: Vec<f64>,
    lse: Vec<f64>,
    /// Class probabilities, `batch x n_classes`.
    pub y_hat: Vec<f64>,
}

impl Trace {
    pub fn is_recorded(&self) -> bool {
        self.recorded
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
}

/// Inputs are min-max normalized into `[0, 1]` and sit near the mid-range.
/// Without compensation that common mode reaches the dense layer as a
/// large shared offset, the first Adam steps move every hidden unit
/// together and most of them die. Setting the first bias to
/// `-0.5 * sum(kernel)` makes a constant 0.5 input map to zero.
fn centre_first_conv(params: &mut [ParamTensor], filters: usize) {
    let taps = params[ENC1_W].values.len() / filters;
    for ch in 0..filters {
        let sum: f64 = (0..taps).map(|k| params[ENC1_W].values[k * filters + ch]).sum();
        params[ENC1_B].values[ch] = -0.5 * sum;
    }
}

/// Parameters, optimizer moments and the dropout stream of one model.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub spec: NetworkSpec,
    pub params: Vec<ParamTensor>,
    pub adam: AdamState,
    pub dropout_rng: ChaCha8Rng,
}

impl ModelState {
    /// Every tensor draws from its own stream keyed by name, so the encoder
    /// and classifier initialize identically with or without a decoder.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let params: Vec<ParamTensor> = spec
            .layout()
            .into_iter()
            .map(|info| {
                let mut g = rng::stream(seed, &[rng::tag("init"), rng::tag(info.name)]);
                let limit = match info.init {
                    Init::Zero => 0.0,
                    Init::He(fan_in) => (6.0 / fan_in as f64).sqrt(),
                    Init::Glorot(fan_in, fan_out) => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                let values = (0..info.len())
                    .map(|_| if limit == 0.0 { 0.0 } else { g.random_range(-limit..limit) })
                    .collect();
                ParamTensor { name: info.name.to_string(), group: info.group, shape: info.shape, values }
            })
            .collect();
        let mut params = params;
        centre_first_conv(&mut params, spec.filters);
        let adam = AdamState::zeros(&params);
        Ok(Self { spec, params, adam, dropout_rng: rng::stream(seed, &[rng::tag("dropout")]) })
    }

    pub fn param(&self, name: &str) -> Option<&ParamTensor> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut ParamTensor> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    /// Run the network on `batch` inputs laid out `[batch][L][2]`.
    pub fn forward(&mut self, z: &[f64], batch: usize, mode: Mode) -> Result<Trace> {
        let mask = match mode {
            Mode::Train if self.spec.dropout > 0.0 => {
                let q = self.spec.dropout;
                let scale = 1.0 / (1.0 - q);
                let n = batch * self.spec.dense_units;
                Some((0..n).map(|_| if self.dropout_rng.random::<f64>() < q { 0.0 } else { scale }).collect())
            }
            _ => None,
        };
        self.run(z, batch, mask, mode == Mode::Train)
    }

    /// Class probabilities in eval mode.
    pub fn predict(&self, z: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.run(z, batch, None, false)?.y_hat)
    }

    fn run(&self, z: &[f64], batch: usize, mask: Option<Vec<f64>>, record: bool) -> Result<Trace> {
        let spec = &self.spec;
        if z.len() != batch * spec.input_dims() || batch == 0 {
            return Err(Error::ShapeMismatch(format!(
                "input of {} values is not a batch of {} x {}",
                z.len(),
                spec.input_rows,
                IQ_WIDTH
            )));
        }
        let p = &self.params;
        let [e1, e2, dc1, dc2, out_conv] = spec.convs();
        let (l0, l1, l2) = spec.lengths();
        let c = spec.filters;
        let (s0, s1, s2) = (l0 * IQ_WIDTH * c, l1 * IQ_WIDTH * c, l2 * IQ_WIDTH * c);

        let mut a1 = vec![0.0; batch * s0];
        let mut p1 = vec![0.0; batch * s1];
        let mut idx1 = vec![0u32; batch * s1];
        let mut a2 = vec![0.0; batch * s1];
        let mut h = vec![0.0; batch * s2];
        let mut idx2 = vec![0u32; batch * s2];
        for b in 0..batch {
            let x = &z[b * l0 * IQ_WIDTH..(b + 1) * l0 * IQ_WIDTH];
            let a1b = &mut a1[b * s0..(b + 1) * s0];
            e1.forward(x, l0, IQ_WIDTH, &p[ENC1_W].values, &p[ENC1_B].values, a1b);
            layers::relu_inplace(a1b);
            layers::maxpool_forward(a1b, l0, IQ_WIDTH * c, spec.pool, &mut p1[b * s1..(b + 1) * s1], &mut idx1[b * s1..(b + 1) * s1]);
            let a2b = &mut a2[b * s1..(b + 1) * s1];
            e2.forward(&p1[b * s1..(b + 1) * s1], l1, IQ_WIDTH, &p[ENC2_W].values, &p[ENC2_B].values, a2b);
            layers::relu_inplace(a2b);
            layers::maxpool_forward(a2b, l1, IQ_WIDTH * c, spec.pool, &mut h[b * s2..(b + 1) * s2], &mut idx2[b * s2..(b + 1) * s2]);
        }

        let (mut d1, mut u1, mut d2, mut u2, mut z_tilde) = Default::default();
        if spec.decoder {
            let (mut vd1, mut vu1, mut vd2, mut vu2) =
                (vec![0.0; batch * s2], vec![0.0; batch * s1], vec![0.0; batch * s1], vec![0.0; batch * s0]);
            let mut zt = vec![0.0; batch * l0 * IQ_WIDTH];
            for b in 0..batch {
                let d1b = &mut vd1[b * s2..(b + 1) * s2];
                dc1.forward(&h[b * s2..(b + 1) * s2], l2, IQ_WIDTH, &p[DEC1_W].values, &p[DEC1_B].values, d1b);
                layers::relu_inplace(d1b);
                layers::upsample_forward(d1b, l2, IQ_WIDTH * c, spec.pool, &mut vu1[b * s1..(b + 1) * s1]);
                let d2b = &mut vd2[b * s1..(b + 1) * s1];
                dc2.forward(&vu1[b * s1..(b + 1) * s1], l1, IQ_WIDTH, &p[DEC2_W].values, &p[DEC2_B].values, d2b);
                layers::relu_inplace(d2b);
                layers::upsample_forward(d2b, l1, IQ_WIDTH * c, spec.pool, &mut vu2[b * s0..(b + 1) * s0]);
                let ztb = &mut zt[b * l0 * IQ_WIDTH..(b + 1) * l0 * IQ_WIDTH];
                out_conv.forward(&vu2[b * s0..(b + 1) * s0], l0, IQ_WIDTH, &p[OUT_W].values, &p[OUT_B].values, ztb);
                ztb.iter_mut().for_each(|v| *v = layers::sigmoid(*v));
            }
            (d1, u1, d2, u2, z_tilde) = (vd1, vu1, vd2, vu2, zt);
        }

        let (du, nc) = (spec.dense_units, spec.n_classes);
        let mut e1v = vec![0.0; batch * du];
        layers::dense_forward(&h, batch, s2, &p[CLS1_W].values, &p[CLS1_B].values, &mut e1v);
        layers::relu_inplace(&mut e1v);
        let dropped = match &mask {
            Some(m) => e1v.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => e1v.clone(),
        };
        let mut logits = vec![0.0; batch * nc];
        layers::dense_forward(&dropped, batch, du, &p[CLS2_W].values, &p[CLS2_B].values, &mut logits);
        let mut y_hat = vec![0.0; batch * nc];
        let lse = logits
            .chunks_exact(nc)
            .zip(y_hat.chunks_exact_mut(nc))
            .map(|(l, y)| layers::softmax_row(l, y))
            .collect();

        let mut trace = Trace { batch, recorded: record, h, z_tilde, y_hat, logits, lse, ..Default::default() };
        if record {
            trace.z = z.to_vec();
            trace.a1 = a1;
            trace.p1 = p1;
            trace.idx1 = idx1;
            trace.a2 = a2;
            trace.idx2 = idx2;
            trace.d1 = d1;
            trace.u1 = u1;
            trace.d2 = d2;
            trace.u2 = u2;
            trace.e1 = e1v;
            trace.mask = mask;
            trace.dropped = dropped;
        }
        Ok(trace)
    }

    /// Loss terms of a traced batch against its targets, via the
    /// log-sum-exp path.
    pub fn loss(&self, trace: &Trace, z_hat: &[f64], labels: &[usize], w: LossWeights) -> Result<LossBreakdown> {
        self.check_targets(trace, z_hat, labels)?;
        let nc = self.spec.n_classes;
        let b = trace.batch as f64;
        let mse = if self.spec.decoder {
            trace.z_tilde.iter().zip(z_hat).map(|(a, t)| (a - t).powi(2)).sum::<f64>() / b
        } else {
            0.0
        };
        let cce = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -(trace.logits[i * nc + y] - trace.lse[i]).max(LOG_CLAMP))
            .sum::<f64>()
            / b;
        let l2 = self.spec.l2_dense * self.params[CLS1_W].values.iter().map(|v| v * v).sum::<f64>();
        Ok(LossBreakdown { total: w.lambda1 * mse + w.lambda2 * cce, mse, cce, l2 })
    }

    fn check_targets(&self, trace: &Trace, z_hat: &[f64], labels: &[usize]) -> Result<()> {
        if labels.len() != trace.batch || labels.iter().any(|&y| y >= self.spec.n_classes) {
            return Err(Error::ShapeMismatch(format!("{} labels for a batch of {}", labels.len(), trace.batch)));
        }
        if self.spec.decoder && z_hat.len() != trace.batch * self.spec.input_dims() {
            return Err(Error::ShapeMismatch(format!("reconstruction target has {} values", z_hat.len())));
        }
        Ok(())
    }

    /// Exact gradients of `lambda1 * MSE + lambda2 * CCE + l2 * ||W_dense1||^2`.
    pub fn backward(
        &self,
        trace: &Trace,
        z_hat: &[f64],
        labels: &[usize],
        w: LossWeights,
    ) -> Result<(Vec<Vec<f64>>, LossBreakdown)> {
        if !trace.recorded {
            return Err(Error::MissingIntermediates);
        }
        let loss = self.loss(trace, z_hat, labels, w)?;
        let spec = &self.spec;
        let p = &self.params;
        let mut grads: Vec<Vec<f64>> = p.iter().map(|t| vec![0.0; t.values.len()]).collect();
        let [e1, e2, dc1, dc2, out_conv] = spec.convs();
        let (l0, l1, l2) = spec.lengths();
        let c = spec.filters;
        let (s0, s1, s2) = (l0 * IQ_WIDTH * c, l1 * IQ_WIDTH * c, l2 * IQ_WIDTH * c);
        let batch = trace.batch;
        let bf = batch as f64;
        let (du, nc) = (spec.dense_units, spec.n_classes);

        // classifier
        let mut g_logits = vec![0.0; batch * nc];
        for (i, &y) in labels.iter().enumerate() {
            if trace.logits[i * nc + y] - trace.lse[i] < LOG_CLAMP {
                continue;
            }
            for k in 0..nc {
                let target = if k == y { 1.0 } else { 0.0 };
                g_logits[i * nc + k] = w.lambda2 * (trace.y_hat[i * nc + k] - target) / bf;
            }
        }
        let mut g_e1 = vec![0.0; batch * du];
        {
            let (gw, rest) = grads.split_at_mut(CLS2_B);
            layers::dense_backward(&trace.dropped, batch, du, &p[CLS2_W].values, &g_logits, &mut gw[CLS2_W], &mut rest[0], Some(g_e1.as_mut_slice()));
        }
        if let Some(m) = &trace.mask {
            g_e1.iter_mut().zip(m).for_each(|(g, k)| *g *= k);
        }
        layers::relu_backward_inplace(&trace.e1, &mut g_e1);
        let mut g_h = vec![0.0; batch * s2];
        {
            let (gw, rest) = grads.split_at_mut(CLS1_B);
            layers::dense_backward(&trace.h, batch, s2, &p[CLS1_W].values, &g_e1, &mut gw[CLS1_W], &mut rest[0], Some(g_h.as_mut_slice()));
        }
        let l2c = 2.0 * spec.l2_dense;
        grads[CLS1_W].iter_mut().zip(&p[CLS1_W].values).for_each(|(g, v)| *g += l2c * v);

        // decoder
        if spec.decoder {
            let scale = 2.0 * w.lambda1 / bf;
            let mut g_pre: Vec<f64> = trace
                .z_tilde
                .iter()
                .zip(z_hat)
                .map(|(&a, &t)| scale * (a - t) * a * (1.0 - a))
                .collect();
            let mut g_u2 = vec![0.0; s0];
            let mut g_d2 = vec![0.0; s1];
            let mut g_u1 = vec![0.0; s1];
            let mut g_d1 = vec![0.0; s2];
            for b in 0..batch {
                let gp = &mut g_pre[b * l0 * IQ_WIDTH..(b + 1) * l0 * IQ_WIDTH];
                g_u2.fill(0.0);
                let (head, tail) = grads.split_at_mut(OUT_B);
                out_conv.backward(&trace.u2[b * s0..(b + 1) * s0], l0, IQ_WIDTH, &p[OUT_W].values, gp, &mut head[OUT_W], &mut tail[0], Some(g_u2.as_mut_slice()));
                layers::upsample_backward(&g_u2, l1, IQ_WIDTH * c, spec.pool, &mut g_d2);
                layers::relu_backward_inplace(&trace.d2[b * s1..(b + 1) * s1], &mut g_d2);
                g_u1.fill(0.0);
                let (head, tail) = grads.split_at_mut(DEC2_B);
                dc2.backward(&trace.u1[b * s1..(b + 1) * s1], l1, IQ_WIDTH, &p[DEC2_W].values, &g_d2, &mut head[DEC2_W], &mut tail[0], Some(g_u1.as_mut_slice()));
                layers::upsample_backward(&g_u1, l2, IQ_WIDTH * c, spec.pool, &mut g_d1);
                layers::relu_backward_inplace(&trace.d1[b * s2..(b + 1) * s2], &mut g_d1);
                let (head, tail) = grads.split_at_mut(DEC1_B);
                dc1.backward(&trace.h[b * s2..(b + 1) * s2], l2, IQ_WIDTH, &p[DEC1_W].values, &g_d1, &mut head[DEC1_W], &mut tail[0], Some(&mut g_h[b * s2..(b + 1) * s2]));
            }
        }

        // encoder
        let mut g_a2 = vec![0.0; s1];
        let mut g_p1 = vec![0.0; s1];
        let mut g_a1 = vec![0.0; s0];
        for b in 0..batch {
            layers::maxpool_backward(&g_h[b * s2..(b + 1) * s2], &trace.idx2[b * s2..(b + 1) * s2], &mut g_a2);
            layers::relu_backward_inplace(&trace.a2[b * s1..(b + 1) * s1], &mut g_a2);
            g_p1.fill(0.0);
            let (head, tail) = grads.split_at_mut(ENC2_B);
            e2.backward(&trace.p1[b * s1..(b + 1) * s1], l1, IQ_WIDTH, &p[ENC2_W].values, &g_a2, &mut head[ENC2_W], &mut tail[0], Some(g_p1.as_mut_slice()));
            layers::maxpool_backward(&g_p1, &trace.idx1[b * s1..(b + 1) * s1], &mut g_a1);
            layers::relu_backward_inplace(&trace.a1[b * s0..(b + 1) * s0], &mut g_a1);
            let (head, tail) = grads.split_at_mut(ENC1_B);
            let x = &trace.z[b * l0 * IQ_WIDTH..(b + 1) * l0 * IQ_WIDTH];
            e1.backward(x, l0, IQ_WIDTH, &p[ENC1_W].values, &g_a1, &mut head[ENC1_W], &mut tail[0], None);
        }
        Ok((grads, loss))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{AdamConfig, LossWeights};

    fn small(rows: usize, decoder: bool) -> NetworkSpec {
        NetworkSpec {
            input_rows: rows,
            n_classes: 5,
            filters: 4,
            dense_units: 8,
            pool: NetworkSpec::pool_for_rows(rows),
            dropout: 0.5,
            l2_dense: 0.001,
            decoder,
        }
    }

    #[test]
    fn mid_range_input_gives_zero_features() {
        // Only the zero-padded edges may respond to a constant mid-range input.
        let mut m = ModelState::init(small(320, false), 3).unwrap();
        let t = m.forward(&vec![0.5; 640], 1, Mode::Eval).unwrap();
        let live = t.h.iter().filter(|v| v.abs() > 1e-12).count();
        assert!(live * 10 < t.h.len(), "{live} of {}", t.h.len());
        let t = m.forward(&vec![0.9; 640], 1, Mode::Eval).unwrap();
        assert!(t.h.iter().any(|&v| v > 0.0));
    }

    fn inputs(spec: &NetworkSpec, n: usize, seed: u64) -> Vec<f64> {
        let mut g = rng::stream(seed, &[0]);
        (0..n * spec.input_dims()).map(|_| g.random::<f64>()).collect()
    }

    #[test]
    fn decoder_restores_input_dims() {
        for rows in [1280, 960, 480, 320] {
            let spec = small(rows, true);
            assert_eq!(spec.pool, if rows >= 960 { 4 } else { 2 });
            let mut m = ModelState::init(spec, 1).unwrap();
            let t = m.forward(&inputs(&spec, 2, 2), 2, Mode::Eval).unwrap();
            assert_eq!(t.z_tilde.len(), 2 * rows * IQ_WIDTH);
            assert!(t.z_tilde.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(t.h.len(), 2 * spec.feature_dims());
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let spec = small(320, true);
        let mut m = ModelState::init(spec, 1).unwrap();
        assert!(matches!(m.forward(&[0.0; 10], 1, Mode::Eval), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn eval_trace_cannot_backprop() {
        let spec = small(320, true);
        let mut m = ModelState::init(spec, 1).unwrap();
        let z = inputs(&spec, 1, 3);
        let t = m.forward(&z, 1, Mode::Eval).unwrap();
        assert!(matches!(m.backward(&t, &z, &[0], LossWeights::default()), Err(Error::MissingIntermediates)));
    }

    #[test]
    fn zero_head_is_uniform() {
        let spec = NetworkSpec { n_classes: 27, ..small(320, false) };
        let mut m = ModelState::init(spec, 1).unwrap();
        m.param_mut("classifier.dense2.weight").unwrap().values.fill(0.0);
        let t = m.forward(&inputs(&spec, 3, 4), 3, Mode::Train).unwrap();
        assert!(t.y_hat.iter().all(|&p| (p - 1.0 / 27.0).abs() < 1e-15));
        let l = m.loss(&t, &[], &[0, 5, 26], LossWeights::default()).unwrap();
        assert!((l.cce - 27f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let spec = small(320, false);
        let mut m = ModelState::init(spec, 1).unwrap();
        m.param_mut("classifier.dense2.bias").unwrap().values = vec![1e4, -1e4, 0.0, 5e3, -3.0];
        m.param_mut("classifier.dense2.weight").unwrap().values.fill(0.0);
        let t = m.forward(&inputs(&spec, 1, 4), 1, Mode::Train).unwrap();
        assert!(t.y_hat.iter().all(|v| v.is_finite()));
        let (g, l) = m.backward(&t, &[], &[1], LossWeights::default()).unwrap();
        assert!((l.cce - 27.631021115928547).abs() < 1e-9);
        assert!(g.iter().flatten().all(|v| v.is_finite()));
        // Clamped example contributes nothing to the classifier gradient.
        assert!(g[CLS2_B].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dropout_statistics() {
        let spec = NetworkSpec { dense_units: 4000, ..small(320, false) };
        let mut m = ModelState::init(spec, 9).unwrap();
        let z = inputs(&spec, 1, 5);
        let t = m.forward(&z, 1, Mode::Train).unwrap();
        let mask = t.mask.as_ref().unwrap();
        let zeros = mask.iter().filter(|&&v| v == 0.0).count() as f64 / mask.len() as f64;
        assert!((zeros - 0.5).abs() < 0.03, "{zeros}");
        assert!(mask.iter().all(|&v| v == 0.0 || v == 2.0));
        let a = m.forward(&z, 1, Mode::Eval).unwrap();
        let b = m.forward(&z, 1, Mode::Eval).unwrap();
        assert_eq!(a.y_hat, b.y_hat);
    }

    #[test]
    fn lambda1_zero_silences_decoder() {
        let spec = small(320, true);
        let mut m = ModelState::init(spec, 2).unwrap();
        let z = inputs(&spec, 4, 6);
        let t = m.forward(&z, 4, Mode::Train).unwrap();
        let (g, _) = m.backward(&t, &z, &[0, 1, 2, 3], LossWeights::cnn(10.0)).unwrap();
        for (p, g) in m.params.iter().zip(&g) {
            if p.group == Group::Decoder {
                assert!(g.iter().all(|&v| v == 0.0), "{}", p.name);
            }
        }
    }

    #[test]
    fn l2_adds_twice_weight() {
        let spec = small(320, false);
        let mut a = ModelState::init(spec, 2).unwrap();
        let mut b = ModelState::init(NetworkSpec { l2_dense: 0.0, ..spec }, 2).unwrap();
        let z = inputs(&spec, 2, 6);
        let ta = a.forward(&z, 2, Mode::Train).unwrap();
        let tb = b.forward(&z, 2, Mode::Train).unwrap();
        let (ga, _) = a.backward(&ta, &[], &[0, 1], LossWeights::default()).unwrap();
        let (gb, _) = b.backward(&tb, &[], &[0, 1], LossWeights::default()).unwrap();
        for ((x, y), w) in ga[CLS1_W].iter().zip(&gb[CLS1_W]).zip(&a.params[CLS1_W].values) {
            assert!((x - y - 2.0 * 0.001 * w).abs() < 1e-15 * (1.0 + x.abs()) * 4.0, "{x} {y} {w}");
        }
        assert_eq!(ga[CLS2_W], gb[CLS2_W]);
    }

    #[test]
    fn degenerate_model_is_a_prefix() {
        let full = small(480, true);
        let cnn = degenerate_to_cnn(&full);
        assert!(!cnn.decoder);
        let mut a = ModelState::init(full, 7).unwrap();
        let mut b = ModelState::init(cnn, 7).unwrap();
        assert!(b.params.iter().all(|p| p.group != Group::Decoder));
        assert_eq!(a.params[..b.params.len()], b.params[..]);
        let z = inputs(&full, 3, 1);
        assert_eq!(a.forward(&z, 3, Mode::Eval).unwrap().y_hat, b.forward(&z, 3, Mode::Eval).unwrap().y_hat);
    }

    #[test]
    fn training_is_reproducible() {
        let spec = small(320, true);
        let run = || {
            let mut m = ModelState::init(spec, 3).unwrap();
            let z = inputs(&spec, 4, 8);
            for _ in 0..3 {
                let t = m.forward(&z, 4, Mode::Train).unwrap();
                let (g, _) = m.backward(&t, &z, &[0, 1, 2, 3], LossWeights::default()).unwrap();
                m.apply_gradients(&g, &AdamConfig::default()).unwrap();
            }
            m.params
        };
        assert_eq!(run(), run());
    }
}
