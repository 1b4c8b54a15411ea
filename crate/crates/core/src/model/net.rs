use super::{ConfigError, ModelParams};
use crate::tensor::{EVENTS, WORDS};

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Cache {
    /// Convolution pre-activations, `[F][od][ow][oe]`.
    pub conv: Vec<f64>,
    /// For each pooled unit, the index into `conv` that won the max.
    pub argmax: Vec<usize>,
    pub pooled: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// Gradient vector laid out like [`ModelParams::values`].
pub type Gradients = Vec<f64>;

/// Mean squared error.
pub fn loss(prediction: &[f64], target: &[f64]) -> f64 {
    debug_assert_eq!(prediction.len(), target.len());
    let n = prediction.len() as f64;
    prediction
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

struct Geometry {
    ch: usize,
    kernel: [usize; 3],
    conv: [usize; 3],
    pool: [usize; 3],
    pooled: [usize; 3],
    kvol: usize,
}

impl Geometry {
    fn of(p: &ModelParams) -> Self {
        let c = &p.config;
        Geometry {
            ch: c.channels(),
            kernel: c.kernel,
            conv: c.conv_extents(),
            pool: c.pool,
            pooled: c.pool_extents(),
            kvol: c.kernel.iter().product::<usize>() * c.channels(),
        }
    }

    fn input_offset(&self, d: usize, w: usize, e: usize) -> usize {
        ((d * WORDS + w) * EVENTS + e) * self.ch
    }

    fn kernel_offset(&self, f: usize, a: usize, b: usize, c: usize) -> usize {
        f * self.kvol + ((a * self.kernel[1] + b) * self.kernel[2] + c) * self.ch
    }

    fn conv_index(&self, f: usize, i: usize, j: usize, l: usize) -> usize {
        ((f * self.conv[0] + i) * self.conv[1] + j) * self.conv[2] + l
    }
}

pub fn forward(params: &ModelParams, input: &[f64]) -> Result<(Vec<f64>, Cache), ConfigError> {
    let cfg = &params.config;
    if input.len() != cfg.input_len() {
        return Err(ConfigError::InputShape {
            expected: cfg.input_len(),
            found: input.len(),
        });
    }
    let g = Geometry::of(params);
    let l = params.layout();
    let v = &params.values;
    let (cw, cb) = (&v[l.conv_w.clone()], &v[l.conv_b.clone()]);

    let [od, ow, oe] = g.conv;
    let mut conv = vec![0.0; cfg.filters * od * ow * oe];
    for f in 0..cfg.filters {
        for i in 0..od {
            for j in 0..ow {
                for e in 0..oe {
                    let mut s = cb[f];
                    for a in 0..g.kernel[0] {
                        for b in 0..g.kernel[1] {
                            for c in 0..g.kernel[2] {
                                let xo = g.input_offset(i + a, j + b, e + c);
                                let wo = g.kernel_offset(f, a, b, c);
                                s += dot(&cw[wo..wo + g.ch], &input[xo..xo + g.ch]);
                            }
                        }
                    }
                    conv[g.conv_index(f, i, j, e)] = s;
                }
            }
        }
    }

    // ReLU then max-pool; max(relu(x)) = relu(max(x)), so pool the raw
    // values and clamp the winner.
    let [pd, pw, pe] = g.pooled;
    let mut pooled = Vec::with_capacity(cfg.flat_len());
    let mut argmax = Vec::with_capacity(cfg.flat_len());
    for f in 0..cfg.filters {
        for i in 0..pd {
            for j in 0..pw {
                for e in 0..pe {
                    let mut best = usize::MAX;
                    let mut best_v = f64::NEG_INFINITY;
                    for a in 0..g.pool[0] {
                        for b in 0..g.pool[1] {
                            for c in 0..g.pool[2] {
                                let idx = g.conv_index(
                                    f,
                                    i * g.pool[0] + a,
                                    j * g.pool[1] + b,
                                    e * g.pool[2] + c,
                                );
                                if conv[idx] > best_v {
                                    best_v = conv[idx];
                                    best = idx;
                                }
                            }
                        }
                    }
                    pooled.push(best_v.max(0.0));
                    argmax.push(best);
                }
            }
        }
    }

    let (dw, db) = (&v[l.dense_w.clone()], &v[l.dense_b.clone()]);
    let n = pooled.len();
    let hidden_pre: Vec<f64> = (0..cfg.hidden)
        .map(|u| db[u] + dot(&dw[u * n..(u + 1) * n], &pooled))
        .collect();
    let hidden: Vec<f64> = hidden_pre.iter().map(|&z| z.max(0.0)).collect();

    let (ow_, ob) = (&v[l.out_w.clone()], &v[l.out_b.clone()]);
    let hn = cfg.hidden;
    let y: Vec<f64> = (0..cfg.h)
        .map(|o| ob[o] + dot(&ow_[o * hn..(o + 1) * hn], &hidden))
        .collect();

    Ok((
        y,
        Cache {
            conv,
            argmax,
            pooled,
            hidden_pre,
            hidden,
        },
    ))
}

/// Adds `weight * dL/dθ` for one sample into `grad`, where `dy` is the
/// derivative of the loss with respect to the outputs.
pub(crate) fn accumulate(
    params: &ModelParams,
    input: &[f64],
    cache: &Cache,
    dy: &[f64],
    grad: &mut [f64],
) {
    let cfg = &params.config;
    let g = Geometry::of(params);
    let l = params.layout();
    let v = &params.values;
    let hn = cfg.hidden;

    let mut d_hidden = vec![0.0; hn];
    for (o, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        axpy(d, &cache.hidden, &mut grad[l.out_w.start + o * hn..][..hn]);
        grad[l.out_b.start + o] += d;
        axpy(d, &v[l.out_w.start + o * hn..][..hn], &mut d_hidden);
    }

    let n = cache.pooled.len();
    let mut d_pooled = vec![0.0; n];
    for u in 0..hn {
        if cache.hidden_pre[u] <= 0.0 || d_hidden[u] == 0.0 {
            continue;
        }
        let d = d_hidden[u];
        axpy(d, &cache.pooled, &mut grad[l.dense_w.start + u * n..][..n]);
        grad[l.dense_b.start + u] += d;
        axpy(d, &v[l.dense_w.start + u * n..][..n], &mut d_pooled);
    }

    let [od, ow, oe] = g.conv;
    for (p, &d) in d_pooled.iter().enumerate() {
        let idx = cache.argmax[p];
        if d == 0.0 || cache.conv[idx] <= 0.0 {
            continue;
        }
        let f = idx / (od * ow * oe);
        let rest = idx % (od * ow * oe);
        let (i, j, e) = (rest / (ow * oe), (rest / oe) % ow, rest % oe);
        grad[l.conv_b.start + f] += d;
        for a in 0..g.kernel[0] {
            for b in 0..g.kernel[1] {
                for c in 0..g.kernel[2] {
                    let xo = g.input_offset(i + a, j + b, e + c);
                    let wo = l.conv_w.start + g.kernel_offset(f, a, b, c);
                    axpy(d, &input[xo..xo + g.ch], &mut grad[wo..wo + g.ch]);
                }
            }
        }
    }
}

/// Gradient of the single-sample loss `mse(forward(input), target)`.
pub fn backward(
    params: &ModelParams,
    input: &[f64],
    cache: &Cache,
    prediction: &[f64],
    target: &[f64],
) -> Result<Gradients, ConfigError> {
    if target.len() != params.config.h {
        return Err(ConfigError::TargetShape {
            expected: params.config.h,
            found: target.len(),
        });
    }
    let h = target.len() as f64;
    let dy: Vec<f64> = prediction
        .iter()
        .zip(target)
        .map(|(p, t)| 2.0 * (p - t) / h)
        .collect();
    let mut grad = vec![0.0; params.values.len()];
    accumulate(params, input, cache, &dy, &mut grad);
    Ok(grad)
}
