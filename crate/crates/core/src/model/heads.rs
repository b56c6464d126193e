//! Graph builders for the three classifier heads.
//!
//! Recurrent heads run bidirectionally over the real (unpadded) positions
//! only, so padding can never influence the output. Convolutional heads use
//! valid windows over the real positions with max-over-time pooling.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::nn::{Bindings, Graph, Mat, ParamStore, Var};

use super::{CnnMode, CnnSpec, FeatureMode, HeadConfig, HeadSpec, RnnSpec};
use crate::MAX_SEQUENCE_LEN;

/// Shared context for building one head forward pass.
pub(crate) struct HeadCtx<'a> {
    pub g: &'a mut Graph,
    pub bind: &'a mut Bindings,
    pub params: &'a ParamStore,
    /// Dropout RNG; `None` means evaluation mode (no dropout).
    pub dropout_rng: Option<&'a mut ChaCha20Rng>,
}

impl HeadCtx<'_> {
    /// Inverted dropout on a variable, identity when evaluating or rate 0.
    fn dropout(&mut self, x: Var, rate: f64) -> Var {
        let rng = match self.dropout_rng.as_deref_mut() {
            Some(rng) if rate > 0.0 => rng,
            _ => return x,
        };
        let keep = 1.0 - rate;
        let dim = self.g.value(x).dim();
        let mask = Mat::from_shape_fn(dim, |_| {
            if rng.gen::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        self.g.mask_mul(x, Arc::new(mask))
    }
}

/// Builds the feature vector `[1, F]` for one sequence of `n` real positions.
pub(crate) fn head_feature(
    ctx: &mut HeadCtx<'_>,
    head: &HeadConfig,
    x: Var,
    n: usize,
    feature_mode: FeatureMode,
) -> Var {
    match &head.spec {
        HeadSpec::Gru(spec) => rnn_feature(ctx, spec, x, n, feature_mode, RnnKind::Gru, "head.gru"),
        HeadSpec::Lstm(spec) => {
            rnn_feature(ctx, spec, x, n, feature_mode, RnnKind::Lstm, "head.lstm")
        }
        HeadSpec::Cnn(spec) => cnn_feature(ctx, spec, x),
    }
}

#[derive(Clone, Copy)]
enum RnnKind {
    Gru,
    Lstm,
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn name(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
        }
    }
}

fn rnn_feature(
    ctx: &mut HeadCtx<'_>,
    spec: &RnnSpec,
    x: Var,
    n: usize,
    feature_mode: FeatureMode,
    kind: RnnKind,
    prefix: &str,
) -> Var {
    let mut layer_input = x;
    let mut per_pos = x;
    let mut finals: (Option<Var>, Option<Var>) = (None, None);
    for layer in 0..spec.layers {
        let fwd = rnn_direction(ctx, spec, layer_input, n, kind, prefix, layer, Direction::Forward);
        let bwd =
            rnn_direction(ctx, spec, layer_input, n, kind, prefix, layer, Direction::Backward);
        per_pos = ctx.g.concat_cols(&[fwd.stack, bwd.stack]);
        finals = (Some(fwd.last), Some(bwd.last));
        layer_input = if layer + 1 < spec.layers {
            // Dropout between stacked recurrent layers.
            ctx.dropout(per_pos, spec.dropout)
        } else {
            per_pos
        };
    }
    let feature = match feature_mode {
        FeatureMode::ConcatPositions => {
            let padded = ctx.g.pad_rows(per_pos, MAX_SEQUENCE_LEN);
            let width = spec.per_word_width;
            ctx.g.reshape(padded, 1, MAX_SEQUENCE_LEN * width)
        }
        FeatureMode::FinalState => {
            let fwd_last = finals.0.expect("at least one layer");
            let bwd_last = finals.1.expect("at least one layer");
            ctx.g.concat_cols(&[fwd_last, bwd_last])
        }
    };
    // Dropout on head outputs before the dense layer.
    ctx.dropout(feature, spec.dropout)
}

struct DirectionOutput {
    /// Per-position hidden states in position order, `[n, hidden]`.
    stack: Var,
    /// Hidden state after the direction's final step, `[1, hidden]`.
    last: Var,
}

#[allow(clippy::too_many_arguments)]
fn rnn_direction(
    ctx: &mut HeadCtx<'_>,
    spec: &RnnSpec,
    x: Var,
    n: usize,
    kind: RnnKind,
    prefix: &str,
    layer: usize,
    direction: Direction,
) -> DirectionOutput {
    let hidden = spec.per_word_width / 2;
    let p = |gate: &str, part: &str| {
        format!("{prefix}.l{layer}.{}.{gate}.{part}", direction.name())
    };
    let gates: &[&str] = match kind {
        RnnKind::Gru => &["z", "r", "n"],
        RnnKind::Lstm => &["i", "f", "g", "o"],
    };
    // Input projections for all steps at once: [n, hidden] per gate, bias folded in.
    let mut xw = Vec::with_capacity(gates.len());
    let mut u = Vec::with_capacity(gates.len());
    for gate in gates {
        let w = ctx.bind.var(ctx.g, ctx.params, &p(gate, "w"));
        let b = ctx.bind.var(ctx.g, ctx.params, &p(gate, "b"));
        let uu = ctx.bind.var(ctx.g, ctx.params, &p(gate, "u"));
        let proj = ctx.g.matmul(x, w);
        xw.push(ctx.g.add_row(proj, b));
        u.push(uu);
    }

    let steps: Vec<usize> = match direction {
        Direction::Forward => (0..n).collect(),
        Direction::Backward => (0..n).rev().collect(),
    };
    let mut h = ctx.g.zeros(1, hidden);
    let mut c = ctx.g.zeros(1, hidden);
    let mut by_position: Vec<Option<Var>> = vec![None; n];
    for &t in &steps {
        match kind {
            RnnKind::Gru => {
                let xz = ctx.g.row(xw[0], t);
                let xr = ctx.g.row(xw[1], t);
                let xn = ctx.g.row(xw[2], t);
                let hz = ctx.g.matmul(h, u[0]);
                let zs = ctx.g.add(xz, hz);
                let z = ctx.g.sigmoid(zs);
                let hr = ctx.g.matmul(h, u[1]);
                let rs = ctx.g.add(xr, hr);
                let r = ctx.g.sigmoid(rs);
                let hn = ctx.g.matmul(h, u[2]);
                let rn = ctx.g.mul(r, hn);
                let ns = ctx.g.add(xn, rn);
                let n_t = ctx.g.tanh(ns);
                // h' = (1 - z) * n + z * h
                let diff = ctx.g.sub(h, n_t);
                let zd = ctx.g.mul(z, diff);
                h = ctx.g.add(n_t, zd);
            }
            RnnKind::Lstm => {
                let xi = ctx.g.row(xw[0], t);
                let xf = ctx.g.row(xw[1], t);
                let xg = ctx.g.row(xw[2], t);
                let xo = ctx.g.row(xw[3], t);
                let hi = ctx.g.matmul(h, u[0]);
                let is = ctx.g.add(xi, hi);
                let i = ctx.g.sigmoid(is);
                let hf = ctx.g.matmul(h, u[1]);
                let fs = ctx.g.add(xf, hf);
                let f = ctx.g.sigmoid(fs);
                let hg = ctx.g.matmul(h, u[2]);
                let gs = ctx.g.add(xg, hg);
                let gate_g = ctx.g.tanh(gs);
                let ho = ctx.g.matmul(h, u[3]);
                let os = ctx.g.add(xo, ho);
                let o = ctx.g.sigmoid(os);
                let fc = ctx.g.mul(f, c);
                let ig = ctx.g.mul(i, gate_g);
                c = ctx.g.add(fc, ig);
                let tc = ctx.g.tanh(c);
                h = ctx.g.mul(o, tc);
            }
        }
        by_position[t] = Some(h);
    }
    let rows: Vec<Var> = by_position
        .into_iter()
        .map(|v| v.expect("every position visited"))
        .collect();
    DirectionOutput {
        stack: ctx.g.concat_rows(&rows),
        last: h,
    }
}

fn cnn_feature(ctx: &mut HeadCtx<'_>, spec: &CnnSpec, x: Var) -> Var {
    match spec.mode {
        CnnMode::Stacked => {
            let mut cur = x;
            for (layer, (&k, &_f)) in spec
                .kernel_sizes
                .iter()
                .zip(&spec.filter_counts)
                .enumerate()
            {
                cur = conv_relu(ctx, cur, k, &format!("head.cnn.layer{layer}"));
            }
            ctx.g.max_rows(cur)
        }
        CnnMode::Parallel => {
            let mut pooled = Vec::with_capacity(spec.kernel_sizes.len());
            for (branch, &k) in spec.kernel_sizes.iter().enumerate() {
                let conv = conv_relu(ctx, x, k, &format!("head.cnn.branch{branch}"));
                pooled.push(ctx.g.max_rows(conv));
            }
            ctx.g.concat_cols(&pooled)
        }
    }
}

/// Valid convolution over rows followed by ReLU; inputs shorter than the
/// kernel are zero-padded up to it so one window always exists.
fn conv_relu(ctx: &mut HeadCtx<'_>, x: Var, kernel: usize, prefix: &str) -> Var {
    let src = if ctx.g.value(x).nrows() < kernel {
        ctx.g.pad_rows(x, kernel)
    } else {
        x
    };
    let w = ctx.bind.var(ctx.g, ctx.params, &format!("{prefix}.w"));
    let b = ctx.bind.var(ctx.g, ctx.params, &format!("{prefix}.b"));
    let win = ctx.g.windows(src, kernel);
    let conv = ctx.g.matmul(win, w);
    let conv = ctx.g.add_row(conv, b);
    ctx.g.relu(conv)
}
