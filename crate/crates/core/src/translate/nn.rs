//! A small static computation graph over `[channels, rows, cols]` tensors
//! with hand-written reverse-mode gradients.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), c * h * w, "tensor data length");
        Self { c, h, w, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    fn plane(&self, ch: usize) -> &[f64] {
        let n = self.h * self.w;
        &self.data[ch * n..(ch + 1) * n]
    }
}

/// One trainable tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamTensor {
    pub offset: usize,
    pub dims: Vec<usize>,
    pub fan_in: usize,
}

impl ParamTensor {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Input,
    Conv {
        src: usize,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        w: usize,
        b: usize,
    },
    Silu {
        src: usize,
    },
    /// Nearest-neighbour ×2 upsampling cropped to the shape of node `like`.
    Upsample {
        src: usize,
        like: usize,
    },
    Concat {
        a: usize,
        b: usize,
    },
    /// Adaptive average pooling onto a `rows × cols` grid.
    Pool {
        src: usize,
        rows: usize,
        cols: usize,
    },
    Dense {
        src: usize,
        nin: usize,
        nout: usize,
        w: usize,
        b: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub ops: Vec<Op>,
    pub shapes: Vec<(usize, usize, usize)>,
    pub params: Vec<ParamTensor>,
    pub n_params: usize,
}

fn conv_out(n: usize, stride: usize) -> usize {
    (n - 1) / stride + 1
}

/// Output index range `[lo, hi)` whose taps land inside `[0, n_in)`.
#[inline]
fn tap_range(n_in: usize, n_out: usize, stride: usize, tap: usize, pad: usize) -> (usize, usize) {
    let lo = if tap >= pad { 0 } else { (pad - tap).div_ceil(stride) };
    let top = n_in as isize - 1 + pad as isize - tap as isize;
    if top < 0 {
        return (0, 0);
    }
    let hi = (top as usize / stride + 1).min(n_out);
    (lo.min(hi), hi)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn pool_span(i: usize, n_out: usize, n_in: usize) -> (usize, usize) {
    (i * n_in / n_out, ((i + 1) * n_in).div_ceil(n_out))
}

impl Graph {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Self {
            ops: vec![Op::Input],
            shapes: vec![(c, h, w)],
            params: Vec::new(),
            n_params: 0,
        }
    }

    pub fn output(&self) -> usize {
        self.ops.len() - 1
    }

    pub fn output_shape(&self) -> (usize, usize, usize) {
        self.shapes[self.output()]
    }

    fn param(&mut self, dims: Vec<usize>, fan_in: usize) -> usize {
        let idx = self.params.len();
        let t = ParamTensor {
            offset: self.n_params,
            dims,
            fan_in,
        };
        self.n_params += t.len();
        self.params.push(t);
        idx
    }

    fn push(&mut self, op: Op, shape: (usize, usize, usize)) -> usize {
        self.ops.push(op);
        self.shapes.push(shape);
        self.ops.len() - 1
    }

    pub fn conv(&mut self, src: usize, cout: usize, k: usize, stride: usize) -> usize {
        let (cin, h, w) = self.shapes[src];
        let fan_in = cin * k * k;
        let wi = self.param(vec![cout, cin, k, k], fan_in);
        let bi = self.param(vec![cout], fan_in);
        self.push(
            Op::Conv {
                src,
                cin,
                cout,
                k,
                stride,
                w: wi,
                b: bi,
            },
            (cout, conv_out(h, stride), conv_out(w, stride)),
        )
    }

    pub fn silu(&mut self, src: usize) -> usize {
        let s = self.shapes[src];
        self.push(Op::Silu { src }, s)
    }

    pub fn conv_silu(&mut self, src: usize, cout: usize, stride: usize) -> usize {
        let c = self.conv(src, cout, 3, stride);
        self.silu(c)
    }

    pub fn upsample(&mut self, src: usize, like: usize) -> usize {
        let (c, _, _) = self.shapes[src];
        let (_, h, w) = self.shapes[like];
        self.push(Op::Upsample { src, like }, (c, h, w))
    }

    pub fn concat(&mut self, a: usize, b: usize) -> usize {
        let (ca, h, w) = self.shapes[a];
        let (cb, hb, wb) = self.shapes[b];
        assert_eq!((h, w), (hb, wb), "concat spatial shapes");
        self.push(Op::Concat { a, b }, (ca + cb, h, w))
    }

    pub fn pool(&mut self, src: usize, rows: usize, cols: usize) -> usize {
        let (c, h, w) = self.shapes[src];
        let (rows, cols) = (rows.min(h), cols.min(w));
        self.push(Op::Pool { src, rows, cols }, (c, rows, cols))
    }

    pub fn dense(&mut self, src: usize, nout: usize) -> usize {
        let (c, h, w) = self.shapes[src];
        let nin = c * h * w;
        let wi = self.param(vec![nout, nin], nin);
        let bi = self.param(vec![nout], nin);
        self.push(
            Op::Dense {
                src,
                nin,
                nout,
                w: wi,
                b: bi,
            },
            (nout, 1, 1),
        )
    }

    /// Uniform `[-s, s]` with `s = 1/√fan_in` for every tensor.
    pub fn init(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut out = vec![0.0; self.n_params];
        for t in &self.params {
            let s = 1.0 / (t.fan_in as f64).sqrt();
            for v in &mut out[t.offset..t.offset + t.len()] {
                *v = rng.random_range(-s..=s);
            }
        }
        out
    }

    fn slice<'a>(&self, params: &'a [f64], idx: usize) -> &'a [f64] {
        let t = &self.params[idx];
        &params[t.offset..t.offset + t.len()]
    }

    /// Runs the graph and returns every node's activation.
    pub fn forward(&self, params: &[f64], input: Tensor) -> Vec<Tensor> {
        assert_eq!(params.len(), self.n_params, "parameter count");
        assert_eq!(input.shape(), self.shapes[0], "input shape");
        let mut acts: Vec<Tensor> = Vec::with_capacity(self.ops.len());
        acts.push(input);
        for (i, op) in self.ops.iter().enumerate().skip(1) {
            let (c, h, w) = self.shapes[i];
            let out = match *op {
                Op::Input => unreachable!("input is node 0"),
                Op::Conv {
                    src,
                    cin,
                    cout,
                    k,
                    stride,
                    w: wi,
                    b: bi,
                } => {
                    let x = &acts[src];
                    let wt = self.slice(params, wi);
                    let bias = self.slice(params, bi);
                    let mut out = Tensor::zeros(c, h, w);
                    let pad = k / 2;
                    let n_out = h * w;
                    for co in 0..cout {
                        let o = &mut out.data[co * n_out..(co + 1) * n_out];
                        o.iter_mut().for_each(|v| *v = bias[co]);
                        for ci in 0..cin {
                            let plane = x.plane(ci);
                            for ky in 0..k {
                                let (oy0, oy1) = tap_range(x.h, h, stride, ky, pad);
                                for kx in 0..k {
                                    let (ox0, ox1) = tap_range(x.w, w, stride, kx, pad);
                                    let wv = wt[((co * cin + ci) * k + ky) * k + kx];
                                    for oy in oy0..oy1 {
                                        let iy = oy * stride + ky - pad;
                                        let row_in = &plane[iy * x.w..(iy + 1) * x.w];
                                        let row_out = &mut o[oy * w..(oy + 1) * w];
                                        if stride == 1 {
                                            let shift = ox0 + kx - pad;
                                            for (ov, iv) in
                                                row_out[ox0..ox1].iter_mut().zip(&row_in[shift..shift + (ox1 - ox0)])
                                            {
                                                *ov += wv * iv;
                                            }
                                        } else {
                                            for ox in ox0..ox1 {
                                                row_out[ox] += wv * row_in[ox * stride + kx - pad];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    out
                }
                Op::Silu { src } => {
                    let x = &acts[src];
                    Tensor::from_vec(c, h, w, x.data.iter().map(|&v| v * sigmoid(v)).collect())
                }
                Op::Upsample { src, .. } => {
                    let x = &acts[src];
                    let mut out = Tensor::zeros(c, h, w);
                    for ch in 0..c {
                        for y in 0..h {
                            let sy = (y / 2).min(x.h - 1);
                            for xx in 0..w {
                                let sx = (xx / 2).min(x.w - 1);
                                out.data[(ch * h + y) * w + xx] = x.data[(ch * x.h + sy) * x.w + sx];
                            }
                        }
                    }
                    out
                }
                Op::Concat { a, b } => {
                    let mut data = acts[a].data.clone();
                    data.extend_from_slice(&acts[b].data);
                    Tensor::from_vec(c, h, w, data)
                }
                Op::Pool { src, rows, cols } => {
                    let x = &acts[src];
                    let mut out = Tensor::zeros(c, rows, cols);
                    for ch in 0..c {
                        for i in 0..rows {
                            let (y0, y1) = pool_span(i, rows, x.h);
                            for j in 0..cols {
                                let (x0, x1) = pool_span(j, cols, x.w);
                                let mut acc = 0.0;
                                for y in y0..y1 {
                                    acc += x.data[(ch * x.h + y) * x.w + x0..(ch * x.h + y) * x.w + x1]
                                        .iter()
                                        .sum::<f64>();
                                }
                                out.data[(ch * rows + i) * cols + j] = acc / ((y1 - y0) * (x1 - x0)) as f64;
                            }
                        }
                    }
                    out
                }
                Op::Dense {
                    src,
                    nin,
                    nout,
                    w: wi,
                    b: bi,
                } => {
                    let x = &acts[src].data;
                    let wt = self.slice(params, wi);
                    let bias = self.slice(params, bi);
                    let data = (0..nout)
                        .map(|o| {
                            bias[o]
                                + wt[o * nin..(o + 1) * nin]
                                    .iter()
                                    .zip(x)
                                    .map(|(a, b)| a * b)
                                    .sum::<f64>()
                        })
                        .collect();
                    Tensor::from_vec(nout, 1, 1, data)
                }
            };
            acts.push(out);
        }
        acts
    }

    /// Accumulates into `grad` the parameter gradient for an output gradient
    /// `grad_out`, given activations from [`Graph::forward`].
    pub fn backward(&self, params: &[f64], acts: &[Tensor], grad_out: Vec<f64>, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.n_params, "gradient length");
        let mut g: Vec<Option<Vec<f64>>> = vec![None; self.ops.len()];
        g[self.output()] = Some(grad_out);
        fn acc(slot: &mut Option<Vec<f64>>, n: usize) -> &mut Vec<f64> {
            slot.get_or_insert_with(|| vec![0.0; n])
        }
        for i in (1..self.ops.len()).rev() {
            let Some(go) = g[i].take() else { continue };
            let (c, h, w) = self.shapes[i];
            match self.ops[i] {
                Op::Input => unreachable!("input is node 0"),
                Op::Conv {
                    src,
                    cin,
                    cout,
                    k,
                    stride,
                    w: wi,
                    b: bi,
                } => {
                    let x = &acts[src];
                    let (w_off, b_off) = (self.params[wi].offset, self.params[bi].offset);
                    let wt = self.slice(params, wi);
                    let pad = k / 2;
                    let n_out = h * w;
                    let need_input = src != 0;
                    let mut gi = if need_input {
                        vec![0.0; x.data.len()]
                    } else {
                        Vec::new()
                    };
                    for co in 0..cout {
                        let o = &go[co * n_out..(co + 1) * n_out];
                        grad[b_off + co] += o.iter().sum::<f64>();
                        for ci in 0..cin {
                            let plane = x.plane(ci);
                            let base = ci * x.h * x.w;
                            for ky in 0..k {
                                let (oy0, oy1) = tap_range(x.h, h, stride, ky, pad);
                                for kx in 0..k {
                                    let (ox0, ox1) = tap_range(x.w, w, stride, kx, pad);
                                    let widx = ((co * cin + ci) * k + ky) * k + kx;
                                    let wv = wt[widx];
                                    let mut gw = 0.0;
                                    for oy in oy0..oy1 {
                                        let iy = oy * stride + ky - pad;
                                        let row_out = &o[oy * w..(oy + 1) * w];
                                        let row_in = &plane[iy * x.w..(iy + 1) * x.w];
                                        if stride == 1 {
                                            let shift = ox0 + kx - pad;
                                            let span = ox1 - ox0;
                                            gw += row_out[ox0..ox1]
                                                .iter()
                                                .zip(&row_in[shift..shift + span])
                                                .map(|(a, b)| a * b)
                                                .sum::<f64>();
                                            if need_input {
                                                let gi_row =
                                                    &mut gi[base + iy * x.w + shift..base + iy * x.w + shift + span];
                                                for (gv, ov) in gi_row.iter_mut().zip(&row_out[ox0..ox1]) {
                                                    *gv += wv * ov;
                                                }
                                            }
                                        } else {
                                            for (ox, &ro) in row_out.iter().enumerate().take(ox1).skip(ox0) {
                                                let ix = ox * stride + kx - pad;
                                                gw += ro * row_in[ix];
                                                if need_input {
                                                    gi[base + iy * x.w + ix] += wv * ro;
                                                }
                                            }
                                        }
                                    }
                                    grad[w_off + widx] += gw;
                                }
                            }
                        }
                    }
                    if need_input {
                        let slot = acc(&mut g[src], x.data.len());
                        slot.iter_mut().zip(&gi).for_each(|(a, b)| *a += b);
                    }
                }
                Op::Silu { src } => {
                    let x = &acts[src].data;
                    let slot = acc(&mut g[src], x.len());
                    for ((s, &v), &o) in slot.iter_mut().zip(x).zip(&go) {
                        let sg = sigmoid(v);
                        *s += o * sg * (1.0 + v * (1.0 - sg));
                    }
                }
                Op::Upsample { src, .. } => {
                    let x = &acts[src];
                    let slot = acc(&mut g[src], x.data.len());
                    for ch in 0..c {
                        for y in 0..h {
                            let sy = (y / 2).min(x.h - 1);
                            for xx in 0..w {
                                let sx = (xx / 2).min(x.w - 1);
                                slot[(ch * x.h + sy) * x.w + sx] += go[(ch * h + y) * w + xx];
                            }
                        }
                    }
                }
                Op::Concat { a, b } => {
                    let na = acts[a].data.len();
                    let sa = acc(&mut g[a], na);
                    sa.iter_mut().zip(&go[..na]).for_each(|(s, v)| *s += v);
                    let nb = acts[b].data.len();
                    let sb = acc(&mut g[b], nb);
                    sb.iter_mut().zip(&go[na..]).for_each(|(s, v)| *s += v);
                }
                Op::Pool { src, rows, cols } => {
                    let x = &acts[src];
                    let slot = acc(&mut g[src], x.data.len());
                    for ch in 0..c {
                        for i in 0..rows {
                            let (y0, y1) = pool_span(i, rows, x.h);
                            for j in 0..cols {
                                let (x0, x1) = pool_span(j, cols, x.w);
                                let v = go[(ch * rows + i) * cols + j] / ((y1 - y0) * (x1 - x0)) as f64;
                                for y in y0..y1 {
                                    for xx in x0..x1 {
                                        slot[(ch * x.h + y) * x.w + xx] += v;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Dense {
                    src,
                    nin,
                    nout,
                    w: wi,
                    b: bi,
                } => {
                    let x = &acts[src].data;
                    let (w_off, b_off) = (self.params[wi].offset, self.params[bi].offset);
                    let wt = self.slice(params, wi);
                    let need_input = src != 0;
                    let mut gi = vec![0.0; if need_input { nin } else { 0 }];
                    for o in 0..nout {
                        let go_o = go[o];
                        grad[b_off + o] += go_o;
                        let gw = &mut grad[w_off + o * nin..w_off + (o + 1) * nin];
                        for (gv, xv) in gw.iter_mut().zip(x) {
                            *gv += go_o * xv;
                        }
                        if need_input {
                            for (gv, wv) in gi.iter_mut().zip(&wt[o * nin..(o + 1) * nin]) {
                                *gv += go_o * wv;
                            }
                        }
                    }
                    if need_input {
                        let slot = acc(&mut g[src], nin);
                        slot.iter_mut().zip(&gi).for_each(|(a, b)| *a += b);
                    }
                }
            }
        }
    }
}

/// Encoder–decoder with skip connections: `channels[l]` features at level
/// `l`, each level below the first at half the resolution of the one above;
/// a 1×1 head yields one output channel at input resolution.
pub fn unet(rows: usize, cols: usize, channels: &[usize]) -> Graph {
    assert!(!channels.is_empty(), "unet needs at least one level");
    let mut g = Graph::new(1, rows, cols);
    let mut skips = Vec::with_capacity(channels.len());
    let mut x = 0;
    for (level, &ch) in channels.iter().enumerate() {
        x = g.conv_silu(x, ch, if level == 0 { 1 } else { 2 });
        x = g.conv_silu(x, ch, 1);
        skips.push(x);
    }
    for level in (0..channels.len() - 1).rev() {
        let up = g.upsample(x, skips[level]);
        let cat = g.concat(up, skips[level]);
        x = g.conv_silu(cat, channels[level], 1);
    }
    g.conv(x, 1, 1, 1);
    g
}

/// Strided convolution blocks, average pooling onto a `pool` grid and an
/// affine head of size `n_out`.
pub fn regressor(rows: usize, cols: usize, channels: &[usize], pool: [usize; 2], n_out: usize) -> Graph {
    let mut g = Graph::new(1, rows, cols);
    let mut x = 0;
    for &ch in channels {
        x = g.conv_silu(x, ch, 2);
        x = g.conv_silu(x, ch, 1);
    }
    let p = g.pool(x, pool[0], pool[1]);
    g.dense(p, n_out);
    g
}
