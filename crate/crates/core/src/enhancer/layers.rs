//! Same-padded 2-D convolution and a single LSTM layer, forward and
//! reverse mode, built on strided GEMM calls.

/// `C = alpha·A·B + beta·C` for an `m×k` by `k×n` product, with row and
/// column strides for every operand.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |r: usize, c: usize, rs: usize, cs: usize| (r - 1) * rs + (c - 1) * cs;
    assert!(last(m, n, rsc, csc) < c.len(), "gemm: C out of bounds");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[i * rsc + j * csc] *= beta;
            }
        }
        return;
    }
    assert!(last(m, k, rsa, csa) < a.len(), "gemm: A out of bounds");
    assert!(last(k, n, rsb, csb) < b.len(), "gemm: B out of bounds");
    // SAFETY: every element the kernel touches lies inside the slices, as
    // checked above, and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvShape {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kt: usize,
    pub kq: usize,
    pub t: usize,
    pub q: usize,
}

/// Zero-padded layout: each channel is a `(t + kt - 1) × (q + kq - 1)` plane
/// plus `kq` spare entries, so every tap of the kernel becomes a constant
/// offset into a flat "wide" output of `t × (q + kq - 1)` positions. Columns
/// of the wide output at or past `q` are scratch.
impl ConvShape {
    fn wide(&self) -> usize {
        self.q + self.kq - 1
    }

    fn stride(&self) -> usize {
        (self.t + self.kt - 1) * self.wide() + self.kq
    }

    fn positions(&self) -> usize {
        self.t * self.wide()
    }

    fn taps(&self) -> usize {
        self.kt * self.kq
    }

    fn pad(&self, x: &[f64], channels: usize) -> Vec<f64> {
        let (w, s) = (self.wide(), self.stride());
        let mut out = vec![0.0; channels * s];
        for c in 0..channels {
            for tt in 0..self.t {
                let dst = c * s + (tt + self.kt / 2) * w + self.kq / 2;
                let src = (c * self.t + tt) * self.q;
                out[dst..dst + self.q].copy_from_slice(&x[src..src + self.q]);
            }
        }
        out
    }

    fn unpad(&self, x: &[f64], channels: usize) -> Vec<f64> {
        let (w, s) = (self.wide(), self.stride());
        let mut out = vec![0.0; channels * self.t * self.q];
        for c in 0..channels {
            for tt in 0..self.t {
                let src = c * s + (tt + self.kt / 2) * w + self.kq / 2;
                let dst = (c * self.t + tt) * self.q;
                out[dst..dst + self.q].copy_from_slice(&x[src..src + self.q]);
            }
        }
        out
    }

    fn widen(&self, x: &[f64], channels: usize) -> Vec<f64> {
        let (w, n) = (self.wide(), self.positions());
        let mut out = vec![0.0; channels * n];
        for c in 0..channels {
            for tt in 0..self.t {
                let src = (c * self.t + tt) * self.q;
                out[c * n + tt * w..c * n + tt * w + self.q].copy_from_slice(&x[src..src + self.q]);
            }
        }
        out
    }

    fn narrow(&self, x: &[f64], channels: usize) -> Vec<f64> {
        let (w, n) = (self.wide(), self.positions());
        let mut out = vec![0.0; channels * self.t * self.q];
        for c in 0..channels {
            for tt in 0..self.t {
                let dst = (c * self.t + tt) * self.q;
                out[dst..dst + self.q].copy_from_slice(&x[c * n + tt * w..c * n + tt * w + self.q]);
            }
        }
        out
    }

    fn offset(&self, dt: usize, dq: usize) -> usize {
        dt * self.wide() + dq
    }
}

/// Pre-activation output `[out_ch][t][q]` of a zero-padded convolution of
/// `input` `[in_ch][t][q]` with `weight` `[out_ch][in_ch][kt][kq]`.
pub(crate) fn conv_forward(input: &[f64], weight: &[f64], bias: &[f64], s: ConvShape) -> Vec<f64> {
    let padded = s.pad(input, s.in_ch);
    let (n, stride, taps) = (s.positions(), s.stride(), s.taps());
    let mut wide = vec![0.0; s.out_ch * n];
    for (co, row) in wide.chunks_mut(n).enumerate() {
        row.iter_mut().for_each(|v| *v = bias[co]);
    }
    for dt in 0..s.kt {
        for dq in 0..s.kq {
            let tap = dt * s.kq + dq;
            gemm(
                s.out_ch,
                s.in_ch,
                n,
                1.0,
                &weight[tap..],
                (s.in_ch * taps, taps),
                &padded[s.offset(dt, dq)..],
                (stride, 1),
                1.0,
                &mut wide,
                (n, 1),
            );
        }
    }
    s.narrow(&wide, s.out_ch)
}

pub(crate) struct ConvGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Option<Vec<f64>>,
}

/// Gradients given `grad_pre`, the loss gradient w.r.t. the pre-activation
/// output.
pub(crate) fn conv_backward(
    input: &[f64],
    weight: &[f64],
    grad_pre: &[f64],
    s: ConvShape,
    need_input: bool,
) -> ConvGrads {
    let padded = s.pad(input, s.in_ch);
    let grad_wide = s.widen(grad_pre, s.out_ch);
    let (n, stride, taps) = (s.positions(), s.stride(), s.taps());
    let plane = s.t * s.q;
    let mut dw = vec![0.0; s.out_ch * s.in_ch * taps];
    let mut din = need_input.then(|| vec![0.0; s.in_ch * stride]);
    for dt in 0..s.kt {
        for dq in 0..s.kq {
            let tap = dt * s.kq + dq;
            let off = s.offset(dt, dq);
            gemm(
                s.out_ch,
                n,
                s.in_ch,
                1.0,
                &grad_wide,
                (n, 1),
                &padded[off..],
                (1, stride),
                0.0,
                &mut dw[tap..],
                (s.in_ch * taps, taps),
            );
            if let Some(din) = din.as_mut() {
                gemm(
                    s.in_ch,
                    s.out_ch,
                    n,
                    1.0,
                    &weight[tap..],
                    (taps, s.in_ch * taps),
                    &grad_wide,
                    (n, 1),
                    1.0,
                    &mut din[off..],
                    (stride, 1),
                );
            }
        }
    }
    let db = (0..s.out_ch)
        .map(|co| grad_pre[co * plane..(co + 1) * plane].iter().sum())
        .collect();
    ConvGrads {
        weight: dw,
        bias: db,
        input: din.map(|d| s.unpad(&d, s.in_ch)),
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations recorded by [`lstm_forward`]; all row-major over time.
#[derive(Debug, Clone, Default)]
pub(crate) struct LstmCache {
    /// `[T][4H]`, post-nonlinearity, gate blocks i, f, g, o.
    pub gates: Vec<f64>,
    /// `[T][H]`
    pub cells: Vec<f64>,
    pub cell_tanh: Vec<f64>,
    pub hidden: Vec<f64>,
}

pub(crate) fn lstm_forward(
    x: &[f64],
    steps: usize,
    input: usize,
    hidden: usize,
    w_in: &[f64],
    w_rec: &[f64],
    bias: &[f64],
) -> LstmCache {
    let g4 = 4 * hidden;
    let mut pre = vec![0.0; steps * g4];
    for row in pre.chunks_mut(g4) {
        row.copy_from_slice(bias);
    }
    gemm(
        steps,
        input,
        g4,
        1.0,
        x,
        (input, 1),
        w_in,
        (1, input),
        1.0,
        &mut pre,
        (g4, 1),
    );
    let mut cache = LstmCache {
        gates: vec![0.0; steps * g4],
        cells: vec![0.0; steps * hidden],
        cell_tanh: vec![0.0; steps * hidden],
        hidden: vec![0.0; steps * hidden],
    };
    for t in 0..steps {
        let z = &mut pre[t * g4..(t + 1) * g4];
        if t > 0 {
            let h_prev = &cache.hidden[(t - 1) * hidden..t * hidden];
            gemm(
                1,
                hidden,
                g4,
                1.0,
                h_prev,
                (hidden, 1),
                w_rec,
                (1, hidden),
                1.0,
                z,
                (g4, 1),
            );
        }
        let gates = &mut cache.gates[t * g4..(t + 1) * g4];
        for j in 0..hidden {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[hidden + j]);
            let g = z[2 * hidden + j].tanh();
            let o = sigmoid(z[3 * hidden + j]);
            let c_prev = if t == 0 {
                0.0
            } else {
                cache.cells[(t - 1) * hidden + j]
            };
            let c = f * c_prev + i * g;
            let tc = c.tanh();
            gates[j] = i;
            gates[hidden + j] = f;
            gates[2 * hidden + j] = g;
            gates[3 * hidden + j] = o;
            cache.cells[t * hidden + j] = c;
            cache.cell_tanh[t * hidden + j] = tc;
            cache.hidden[t * hidden + j] = o * tc;
        }
    }
    cache
}

pub(crate) struct LstmGrads {
    pub w_in: Vec<f64>,
    pub w_rec: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Option<Vec<f64>>,
}

/// Backpropagation through time over all steps, given the loss gradient
/// w.r.t. every hidden output.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_backward(
    x: &[f64],
    steps: usize,
    input: usize,
    hidden: usize,
    w_in: &[f64],
    w_rec: &[f64],
    cache: &LstmCache,
    grad_hidden: &[f64],
    need_input: bool,
) -> LstmGrads {
    let g4 = 4 * hidden;
    // dz[t]: loss gradient w.r.t. the gate pre-activations at step t.
    let mut dz = vec![0.0; steps * g4];
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    for t in (0..steps).rev() {
        let gates = &cache.gates[t * g4..(t + 1) * g4];
        let row = &mut dz[t * g4..(t + 1) * g4];
        for j in 0..hidden {
            let (i, f, g, o) = (
                gates[j],
                gates[hidden + j],
                gates[2 * hidden + j],
                gates[3 * hidden + j],
            );
            let tc = cache.cell_tanh[t * hidden + j];
            let c_prev = if t == 0 {
                0.0
            } else {
                cache.cells[(t - 1) * hidden + j]
            };
            let dh = grad_hidden[t * hidden + j] + dh_next[j];
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            row[j] = dc * g * i * (1.0 - i);
            row[hidden + j] = dc * c_prev * f * (1.0 - f);
            row[2 * hidden + j] = dc * i * (1.0 - g * g);
            row[3 * hidden + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        gemm(
            1,
            g4,
            hidden,
            1.0,
            row,
            (g4, 1),
            w_rec,
            (hidden, 1),
            0.0,
            &mut dh_next,
            (hidden, 1),
        );
    }
    let mut dw_in = vec![0.0; g4 * input];
    gemm(
        g4,
        steps,
        input,
        1.0,
        &dz,
        (1, g4),
        x,
        (input, 1),
        0.0,
        &mut dw_in,
        (input, 1),
    );
    let mut dw_rec = vec![0.0; g4 * hidden];
    if steps > 1 {
        gemm(
            g4,
            steps - 1,
            hidden,
            1.0,
            &dz[g4..],
            (1, g4),
            &cache.hidden,
            (hidden, 1),
            0.0,
            &mut dw_rec,
            (hidden, 1),
        );
    }
    let mut db = vec![0.0; g4];
    for row in dz.chunks(g4) {
        for (o, d) in db.iter_mut().zip(row) {
            *o += d;
        }
    }
    let dx = need_input.then(|| {
        let mut dx = vec![0.0; steps * input];
        gemm(
            steps,
            g4,
            input,
            1.0,
            &dz,
            (g4, 1),
            w_in,
            (input, 1),
            0.0,
            &mut dx,
            (input, 1),
        );
        dx
    });
    LstmGrads {
        w_in: dw_in,
        w_rec: dw_rec,
        bias: db,
        input: dx,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn widx(s: &ConvShape, co: usize, ci: usize, dt: usize, dq: usize) -> usize {
        ((co * s.in_ch + ci) * s.kt + dt) * s.kq + dq
    }

    fn conv_direct(input: &[f64], weight: &[f64], bias: &[f64], s: ConvShape) -> Vec<f64> {
        let mut out = vec![0.0; s.out_ch * s.t * s.q];
        for co in 0..s.out_ch {
            for t in 0..s.t {
                for q in 0..s.q {
                    let mut acc = bias[co];
                    for ci in 0..s.in_ch {
                        for dt in 0..s.kt {
                            for dq in 0..s.kq {
                                let ti = t as isize + dt as isize - (s.kt / 2) as isize;
                                let qi = q as isize + dq as isize - (s.kq / 2) as isize;
                                if ti < 0 || qi < 0 || ti >= s.t as isize || qi >= s.q as isize {
                                    continue;
                                }
                                acc += weight[widx(&s, co, ci, dt, dq)]
                                    * input[(ci * s.t + ti as usize) * s.q + qi as usize];
                            }
                        }
                    }
                    out[(co * s.t + t) * s.q + q] = acc;
                }
            }
        }
        out
    }

    fn shape() -> ConvShape {
        ConvShape {
            in_ch: 2,
            out_ch: 3,
            kt: 5,
            kq: 3,
            t: 7,
            q: 4,
        }
    }

    fn operands(s: ConvShape) -> (Vec<f64>, Vec<f64>) {
        let input = (0..s.in_ch * s.t * s.q)
            .map(|i| ((i * 7) % 11) as f64 - 5.0)
            .collect();
        let weight = (0..s.out_ch * s.in_ch * s.kt * s.kq)
            .map(|i| ((i * 5) % 13) as f64 * 0.1 - 0.6)
            .collect();
        (input, weight)
    }

    #[test]
    fn conv_matches_direct_and_preserves_shape() {
        let s = shape();
        let (input, weight) = operands(s);
        let bias = [0.5, -0.25, 0.0];
        let fast = conv_forward(&input, &weight, &bias, s);
        assert_eq!(fast.len(), 3 * 7 * 4);
        for (a, b) in fast.iter().zip(conv_direct(&input, &weight, &bias, s)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_backward_is_the_adjoint_of_forward() {
        // <conv(x; w), g> is bilinear, so its gradients are recovered by
        // probing the direct convolution with unit inputs and weights.
        let s = shape();
        let (input, weight) = operands(s);
        let g: Vec<f64> = (0..s.out_ch * s.t * s.q)
            .map(|i| ((i * 3) % 5) as f64 - 2.0)
            .collect();
        let zero_bias = [0.0; 3];
        let inner = |x: &[f64], w: &[f64]| -> f64 {
            conv_direct(x, w, &zero_bias, s)
                .iter()
                .zip(&g)
                .map(|(a, b)| a * b)
                .sum()
        };
        let grads = conv_backward(&input, &weight, &g, s, true);
        for k in 0..weight.len() {
            let mut e = vec![0.0; weight.len()];
            e[k] = 1.0;
            assert!((grads.weight[k] - inner(&input, &e)).abs() < 1e-9);
        }
        let din = grads.input.unwrap();
        for k in 0..input.len() {
            let mut e = vec![0.0; input.len()];
            e[k] = 1.0;
            assert!((din[k] - inner(&e, &weight)).abs() < 1e-9);
        }
        for co in 0..3 {
            let plane = s.t * s.q;
            assert_eq!(
                grads.bias[co],
                g[co * plane..(co + 1) * plane].iter().sum::<f64>()
            );
        }
    }

    #[test]
    fn kernel_taps_that_only_see_padding_get_zero_gradient() {
        // With t = 1 every off-centre time tap reads padding.
        let s = ConvShape {
            in_ch: 1,
            out_ch: 1,
            kt: 3,
            kq: 1,
            t: 1,
            q: 4,
        };
        let input = [1.0, 2.0, 3.0, 4.0];
        let grads = conv_backward(&input, &[0.3, 0.7, -0.2], &[1.0; 4], s, true);
        assert_eq!(grads.weight[0], 0.0);
        assert_eq!(grads.weight[2], 0.0);
        assert_eq!(grads.weight[1], 10.0);
        assert_eq!(grads.input.unwrap(), vec![0.7; 4]);
    }
}
