//! Layer kernels and the forward/backward pass over a flat parameter vector.

use rand::Rng;

use super::{Layout, ModelConfig};
use crate::features::{FeatureTensor, CHANNELS, SEGMENTS};

/// 3x3 convolution, zero padding 1, accumulating into `out` (pre-filled with
/// the bias).
pub(crate) fn conv3x3(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    out: &mut [f64],
) {
    let cout = bias.len();
    for co in 0..cout {
        out[co * h * w..(co + 1) * h * w].fill(bias[co]);
    }
    for co in 0..cout {
        let o = &mut out[co * h * w..(co + 1) * h * w];
        for ci in 0..cin {
            let inp = &input[ci * h * w..(ci + 1) * h * w];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = weight[((co * cin + ci) * 3 + ky) * 3 + kx];
                    let (y0, y1) = (1usize.saturating_sub(ky), (h + 1 - ky).min(h));
                    let (x0, x1) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
                    for y in y0..y1 {
                        let iy = y + ky - 1;
                        let orow = &mut o[y * w + x0..y * w + x1];
                        let irow = &inp[iy * w + x0 + kx - 1..iy * w + x1 + kx - 1];
                        for (a, b) in orow.iter_mut().zip(irow) {
                            *a += wv * b;
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of [`conv3x3`]. `d_input` may be `None` for the first layer.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv3x3_backward(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    d_out: &[f64],
    cout: usize,
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    mut d_input: Option<&mut [f64]>,
) {
    for co in 0..cout {
        let g = &d_out[co * h * w..(co + 1) * h * w];
        d_bias[co] += g.iter().sum::<f64>();
        for ci in 0..cin {
            let inp = &input[ci * h * w..(ci + 1) * h * w];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wi = ((co * cin + ci) * 3 + ky) * 3 + kx;
                    let (y0, y1) = (1usize.saturating_sub(ky), (h + 1 - ky).min(h));
                    let (x0, x1) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let iy = y + ky - 1;
                        let grow = &g[y * w + x0..y * w + x1];
                        let irow = &inp[iy * w + x0 + kx - 1..iy * w + x1 + kx - 1];
                        for (a, b) in grow.iter().zip(irow) {
                            acc += a * b;
                        }
                    }
                    d_weight[wi] += acc;
                    if let Some(di) = d_input.as_deref_mut() {
                        let wv = weight[wi];
                        let di = &mut di[ci * h * w..(ci + 1) * h * w];
                        for y in y0..y1 {
                            let iy = y + ky - 1;
                            let grow = &g[y * w + x0..y * w + x1];
                            let drow = &mut di[iy * w + x0 + kx - 1..iy * w + x1 + kx - 1];
                            for (d, a) in drow.iter_mut().zip(grow) {
                                *d += wv * a;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 1x1 convolution: `out[co][p] = b[co] + sum_ci w[co][ci] * in[ci][p]`.
pub(crate) fn conv1x1(
    input: &[f64],
    cin: usize,
    pixels: usize,
    weight: &[f64],
    bias: &[f64],
    out: &mut [f64],
) {
    for (co, &b) in bias.iter().enumerate() {
        let o = &mut out[co * pixels..(co + 1) * pixels];
        o.fill(b);
        for ci in 0..cin {
            let wv = weight[co * cin + ci];
            for (a, x) in o.iter_mut().zip(&input[ci * pixels..(ci + 1) * pixels]) {
                *a += wv * x;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1x1_backward(
    input: &[f64],
    cin: usize,
    pixels: usize,
    weight: &[f64],
    d_out: &[f64],
    cout: usize,
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    mut d_input: Option<&mut [f64]>,
) {
    for co in 0..cout {
        let g = &d_out[co * pixels..(co + 1) * pixels];
        d_bias[co] += g.iter().sum::<f64>();
        for ci in 0..cin {
            let x = &input[ci * pixels..(ci + 1) * pixels];
            d_weight[co * cin + ci] += g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            if let Some(di) = d_input.as_deref_mut() {
                let wv = weight[co * cin + ci];
                for (d, a) in di[ci * pixels..(ci + 1) * pixels].iter_mut().zip(g) {
                    *d += wv * a;
                }
            }
        }
    }
}

/// 2x2 max pool with floor; returns the pooled map and the argmax index of
/// each output in the input (first maximum wins).
pub(crate) fn max_pool2(input: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; c * oh * ow];
    let mut idx = vec![0u32; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = ch * h * w + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = ch * h * w + (2 * y + dy) * w + 2 * x + dx;
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                let o = (ch * oh + y) * ow + x;
                out[o] = input[best];
                idx[o] = best as u32;
            }
        }
    }
    (out, idx)
}

/// Intermediate values of one segment's pass.
#[derive(Debug, Clone)]
pub(crate) struct SegmentCache {
    pub input: Vec<f64>,
    /// Pre-activation of each trunk block.
    pub pre: Vec<Vec<f64>>,
    /// Input to each trunk block (index 0 is the segment input).
    pub acts: Vec<Vec<f64>>,
    pub pool_idx: Vec<Vec<u32>>,
}

#[derive(Debug, Clone)]
pub(crate) struct Cache {
    pub segments: Vec<SegmentCache>,
    /// Concatenated features before dropout.
    pub features: Vec<f64>,
    /// Dropout multipliers (1 when inactive).
    pub mask: Vec<f64>,
    pub output: Vec<f64>,
}

impl Cache {
    /// Compact record of every ReLU sign and pooling choice; a change means
    /// the loss is not smooth between two parameter settings.
    pub fn pattern(&self) -> Vec<u32> {
        let mut p = Vec::new();
        for s in &self.segments {
            for pre in &s.pre {
                p.extend(pre.iter().map(|&v| (v > 0.0) as u32));
            }
            for idx in &s.pool_idx {
                p.extend_from_slice(idx);
            }
        }
        p
    }
}

pub(crate) fn forward(
    cfg: &ModelConfig,
    layout: &Layout,
    params: &[f64],
    x: &FeatureTensor,
    dropout_rng: Option<&mut dyn rand::RngCore>,
) -> Cache {
    let (h, w) = (cfg.input_height, cfg.input_width);
    let mut segments = Vec::with_capacity(SEGMENTS);
    let mut features = Vec::with_capacity(layout.feature_len);
    for s in 0..SEGMENTS {
        let set = &layout.sets[layout.set_of(s)];
        let mut input = vec![0.0; CHANNELS * h * w];
        for c in 0..CHANNELS {
            let scale = cfg.input_scale[c];
            for (d, &v) in input[c * h * w..(c + 1) * h * w]
                .iter_mut()
                .zip(x.plane(s, c))
            {
                *d = v as f64 * scale;
            }
        }
        let mut acts = vec![input.clone()];
        let mut pre = Vec::new();
        let mut pool_idx = Vec::new();
        let (mut ch, mut cw, mut cin) = (h, w, CHANNELS);
        for (b, conv) in set.convs.iter().enumerate() {
            let cout = cfg.channels[b];
            let mut z = vec![0.0; cout * ch * cw];
            conv3x3(
                &acts[b],
                cin,
                ch,
                cw,
                conv.weight.of(params),
                conv.bias.of(params),
                &mut z,
            );
            let r: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
            let (p, idx) = max_pool2(&r, cout, ch, cw);
            pre.push(z);
            pool_idx.push(idx);
            acts.push(p);
            (ch, cw, cin) = (ch / 2, cw / 2, cout);
        }
        let mut skip_in = vec![0.0; super::INPUT_SKIP * h * w];
        conv1x1(
            &input,
            CHANNELS,
            h * w,
            set.skip_in.weight.of(params),
            set.skip_in.bias.of(params),
            &mut skip_in,
        );
        let mut skip_tr = vec![0.0; super::TRUNK_SKIP * ch * cw];
        conv1x1(
            acts.last().unwrap(),
            cin,
            ch * cw,
            set.skip_trunk.weight.of(params),
            set.skip_trunk.bias.of(params),
            &mut skip_tr,
        );
        features.extend_from_slice(&skip_in);
        features.extend_from_slice(&skip_tr);
        segments.push(SegmentCache {
            input,
            pre,
            acts,
            pool_idx,
        });
    }

    let mask: Vec<f64> = match dropout_rng {
        Some(rng) if cfg.dropout > 0.0 => {
            let keep = 1.0 / (1.0 - cfg.dropout);
            (0..features.len())
                .map(|_| {
                    if rng.gen::<f64>() < cfg.dropout {
                        0.0
                    } else {
                        keep
                    }
                })
                .collect()
        }
        _ => vec![1.0; features.len()],
    };
    let dropped: Vec<f64> = features.iter().zip(&mask).map(|(f, m)| f * m).collect();
    let fw = layout.fc.weight.of(params);
    let fb = layout.fc.bias.of(params);
    let n = dropped.len();
    let output = (0..cfg.outputs)
        .map(|j| {
            let row = &fw[j * n..(j + 1) * n];
            let z = fb[j] + row.iter().zip(&dropped).map(|(a, b)| a * b).sum::<f64>();
            cfg.output_scale * z
        })
        .collect();
    Cache {
        segments,
        features,
        mask,
        output,
    }
}

/// Accumulates the gradient of a loss with output gradient `d_output` into
/// `grad`.
pub(crate) fn backward(
    cfg: &ModelConfig,
    layout: &Layout,
    params: &[f64],
    cache: &Cache,
    d_output: &[f64],
    grad: &mut [f64],
) {
    let (h, w) = (cfg.input_height, cfg.input_width);
    let n = cache.features.len();
    let dz: Vec<f64> = d_output.iter().map(|g| g * cfg.output_scale).collect();
    let mut d_dropped = vec![0.0; n];
    {
        let fw = layout.fc.weight.of(params);
        let dropped: Vec<f64> = cache
            .features
            .iter()
            .zip(&cache.mask)
            .map(|(f, m)| f * m)
            .collect();
        let (gw, gb) = layout.fc.split_mut(grad);
        for (j, &g) in dz.iter().enumerate() {
            gb[j] += g;
            if g == 0.0 {
                continue;
            }
            let row = &fw[j * n..(j + 1) * n];
            for ((gwi, &x), (d, &wv)) in gw[j * n..(j + 1) * n]
                .iter_mut()
                .zip(&dropped)
                .zip(d_dropped.iter_mut().zip(row))
            {
                *gwi += g * x;
                *d += g * wv;
            }
        }
    }
    let d_feat: Vec<f64> = d_dropped
        .iter()
        .zip(&cache.mask)
        .map(|(d, m)| d * m)
        .collect();

    let mut offset = 0;
    for (s, seg) in cache.segments.iter().enumerate() {
        let set = &layout.sets[layout.set_of(s)];
        let in_len = super::INPUT_SKIP * h * w;
        let d_skip_in = &d_feat[offset..offset + in_len];
        offset += in_len;
        {
            let (gw, gb) = set.skip_in.split_mut(grad);
            conv1x1_backward(
                &seg.input,
                CHANNELS,
                h * w,
                &[],
                d_skip_in,
                super::INPUT_SKIP,
                gw,
                gb,
                None,
            );
        }

        let depth = set.convs.len();
        let (mut ch, mut cw) = (h, w);
        let mut dims = vec![(h, w)];
        for _ in 0..depth {
            (ch, cw) = (ch / 2, cw / 2);
            dims.push((ch, cw));
        }
        let trunk_c = cfg.channels[depth - 1];
        let tr_len = super::TRUNK_SKIP * ch * cw;
        let d_skip_tr = &d_feat[offset..offset + tr_len];
        offset += tr_len;
        let mut d_act = vec![0.0; trunk_c * ch * cw];
        {
            let wt = set.skip_trunk.weight.of(params);
            let (gw, gb) = set.skip_trunk.split_mut(grad);
            conv1x1_backward(
                &seg.acts[depth],
                trunk_c,
                ch * cw,
                wt,
                d_skip_tr,
                super::TRUNK_SKIP,
                gw,
                gb,
                Some(&mut d_act),
            );
        }

        for b in (0..depth).rev() {
            let (bh, bw) = dims[b];
            let cout = cfg.channels[b];
            let cin = if b == 0 {
                CHANNELS
            } else {
                cfg.channels[b - 1]
            };
            let mut d_pre = vec![0.0; cout * bh * bw];
            for (o, &i) in seg.pool_idx[b].iter().enumerate() {
                d_pre[i as usize] += d_act[o];
            }
            for (d, &z) in d_pre.iter_mut().zip(&seg.pre[b]) {
                if z <= 0.0 {
                    *d = 0.0;
                }
            }
            let weight = set.convs[b].weight.of(params);
            let mut d_in = if b > 0 {
                vec![0.0; cin * bh * bw]
            } else {
                Vec::new()
            };
            let (gw, gb) = set.convs[b].split_mut(grad);
            conv3x3_backward(
                &seg.acts[b],
                cin,
                bh,
                bw,
                weight,
                &d_pre,
                cout,
                gw,
                gb,
                if b > 0 { Some(&mut d_in) } else { None },
            );
            d_act = d_in;
        }
    }
}
