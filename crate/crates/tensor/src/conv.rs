//! 3x3 dilated convolution with "same" zero padding.
//!
//! Each sample is lowered to a column matrix whose rows are ordered
//! channel-major, then `ky`, then `kx`, and multiplied by the `[O, C*9]`
//! weight matrix. Inputs may be split across several tensors; their channels
//! are consumed in order, which lets dense blocks skip materialising the
//! concatenated feature stack.

use crate::array::Array;
use crate::error::{Result, TensorError};
use crate::real::{gemm, Layout, Real};
use crate::tensor::{Backward, Tensor};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Geometry of one 3x3 convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub dilation: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, dilation: usize) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || dilation == 0 {
            return Err(TensorError::InvalidArgument {
                op: "ConvSpec",
                reason: format!(
                    "channels and dilation must be positive (in {in_channels}, out {out_channels}, dilation {dilation})"
                ),
            });
        }
        Ok(Self {
            in_channels,
            out_channels,
            dilation,
        })
    }

    /// Zero padding on each border; equal to the dilation so H x W is preserved.
    pub fn padding(&self) -> usize {
        self.dilation
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, KERNEL, KERNEL]
    }

    pub fn param_count(&self) -> usize {
        self.out_channels * self.in_channels * TAPS + self.out_channels
    }
}

/// Lowers one `[C, H, W]` sample into rows `[C*9, H*W]`.
fn im2col<T: Real>(src: &[T], c: usize, h: usize, w: usize, d: usize, cols: &mut [T]) {
    let hw = h * w;
    let d = d as isize;
    for ci in 0..c {
        let plane = &src[ci * hw..(ci + 1) * hw];
        for ky in 0..KERNEL {
            let dy = (ky as isize - 1) * d;
            for kx in 0..KERNEL {
                let dx = (kx as isize - 1) * d;
                let row = &mut cols[(ci * TAPS + ky * KERNEL + kx) * hw..][..hw];
                let x_lo = (-dx).clamp(0, w as isize) as usize;
                let x_hi = (w as isize - dx).clamp(0, w as isize) as usize;
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    dst[..x_lo].fill(T::zero());
                    let s0 = (x_lo as isize + dx) as usize;
                    dst[x_lo..x_hi].copy_from_slice(&src_row[s0..s0 + (x_hi - x_lo)]);
                    dst[x_hi..].fill(T::zero());
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto `[C, H, W]`.
fn col2im_add<T: Real>(cols: &[T], c: usize, h: usize, w: usize, d: usize, dst: &mut [T]) {
    let hw = h * w;
    let d = d as isize;
    for ci in 0..c {
        let plane = &mut dst[ci * hw..(ci + 1) * hw];
        for ky in 0..KERNEL {
            let dy = (ky as isize - 1) * d;
            for kx in 0..KERNEL {
                let dx = (kx as isize - 1) * d;
                let row = &cols[(ci * TAPS + ky * KERNEL + kx) * hw..][..hw];
                let x_lo = (-dx).clamp(0, w as isize) as usize;
                let x_hi = (w as isize - dx).clamp(0, w as isize) as usize;
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s0 = (x_lo as isize + dx) as usize;
                    let dst_row = &mut plane[sy as usize * w + s0..][..x_hi - x_lo];
                    for (acc, g) in dst_row.iter_mut().zip(&row[y * w + x_lo..y * w + x_hi]) {
                        *acc += *g;
                    }
                }
            }
        }
    }
}

struct ConvRule {
    /// Channels contributed by each input tensor, in weight order.
    channels: Vec<usize>,
    dilation: usize,
}

impl ConvRule {
    fn fill_cols<T: Real>(&self, inputs: &[Tensor<T>], sample: usize, h: usize, w: usize, cols: &mut [T]) {
        let hw = h * w;
        let mut row = 0;
        for (input, &c) in inputs.iter().zip(&self.channels) {
            let src = &input.data()[sample * c * hw..(sample + 1) * c * hw];
            im2col(src, c, h, w, self.dilation, &mut cols[row * hw..(row + c * TAPS) * hw]);
            row += c * TAPS;
        }
    }
}

impl<T: Real> Backward<T> for ConvRule {
    fn backward(&self, parents: &[Tensor<T>], _: &Array<T>, grad: &Array<T>, needs: &[bool]) -> Vec<Option<Array<T>>> {
        let k_inputs = self.channels.len();
        let inputs = &parents[..k_inputs];
        let weight = &parents[k_inputs];
        let [n, o, h, w] = grad.dims4("conv2d").expect("rank checked in forward");
        let hw = h * w;
        let c_total: usize = self.channels.iter().sum();
        let k = c_total * TAPS;
        let need_w = needs[k_inputs];
        let need_b = needs[k_inputs + 1];
        let need_any_input = needs[..k_inputs].iter().any(|&b| b);

        let mut g_inputs: Vec<Option<Vec<T>>> = self
            .channels
            .iter()
            .zip(needs)
            .map(|(&c, &need)| need.then(|| vec![T::zero(); n * c * hw]))
            .collect();
        let mut g_w = need_w.then(|| vec![T::zero(); o * k]);
        let mut g_b = need_b.then(|| vec![T::zero(); o]);
        let mut cols = if need_w { vec![T::zero(); k * hw] } else { Vec::new() };
        let mut d_cols = if need_any_input { vec![T::zero(); k * hw] } else { Vec::new() };

        for s in 0..n {
            let g = &grad.data()[s * o * hw..(s + 1) * o * hw];
            if let Some(gb) = g_b.as_mut() {
                for (oc, acc) in gb.iter_mut().enumerate() {
                    *acc += g[oc * hw..(oc + 1) * hw].iter().copied().sum::<T>();
                }
            }
            if let Some(gw) = g_w.as_mut() {
                self.fill_cols(inputs, s, h, w, &mut cols);
                gemm(o, hw, k, g, Layout::Normal, &cols, Layout::Transposed, T::one(), gw);
            }
            if need_any_input {
                gemm(k, o, hw, weight.data(), Layout::Transposed, g, Layout::Normal, T::zero(), &mut d_cols);
                let mut row = 0;
                for (gi, &c) in g_inputs.iter_mut().zip(&self.channels) {
                    if let Some(gi) = gi.as_mut() {
                        col2im_add(
                            &d_cols[row * hw..(row + c * TAPS) * hw],
                            c,
                            h,
                            w,
                            self.dilation,
                            &mut gi[s * c * hw..(s + 1) * c * hw],
                        );
                    }
                    row += c * TAPS;
                }
            }
        }

        let mut out: Vec<Option<Array<T>>> = g_inputs
            .into_iter()
            .zip(inputs)
            .map(|(g, input)| g.map(|g| Array::new(input.shape().to_vec(), g).expect("input shape")))
            .collect();
        out.push(g_w.map(|g| Array::new(weight.shape().to_vec(), g).expect("weight shape")));
        out.push(g_b.map(|g| Array::new([o], g).expect("bias shape")));
        out
    }
}

/// `output[n,o,y,x] = bias[o] + sum_{c,ky,kx} weight[o,c,ky,kx] * padded[n,c,y+ky*d,x+kx*d]`.
pub fn conv2d<T: Real>(input: &Tensor<T>, spec: &ConvSpec, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    conv2d_multi(&[input], spec, weight, bias)
}

/// [`conv2d`] over the channel concatenation of `inputs`, without building it.
pub fn conv2d_multi<T: Real>(
    inputs: &[&Tensor<T>],
    spec: &ConvSpec,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let first = inputs.first().ok_or(TensorError::InvalidArgument {
        op: "conv2d",
        reason: "no inputs".into(),
    })?;
    let [n, _, h, w] = first.value().dims4("conv2d")?;
    let mut channels = Vec::with_capacity(inputs.len());
    for input in inputs {
        let [xn, xc, xh, xw] = input.value().dims4("conv2d")?;
        for (dim, want, got) in [(0, n, xn), (2, h, xh), (3, w, xw)] {
            if want != got {
                return Err(TensorError::ShapeMismatch {
                    op: "conv2d input",
                    dim,
                    expected: want,
                    found: got,
                });
            }
        }
        channels.push(xc);
    }
    let c_total: usize = channels.iter().sum();
    if c_total != spec.in_channels {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d input",
            dim: 1,
            expected: spec.in_channels,
            found: c_total,
        });
    }
    let ws = weight.shape();
    if ws.len() != 4 {
        return Err(TensorError::RankMismatch {
            op: "conv2d weight",
            expected: 4,
            found: ws.len(),
        });
    }
    for (dim, (&want, &got)) in spec.weight_shape().iter().zip(ws).enumerate() {
        if want != got {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d weight",
                dim,
                expected: want,
                found: got,
            });
        }
    }
    if bias.shape() != [spec.out_channels] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d bias",
            dim: 0,
            expected: spec.out_channels,
            found: bias.shape().first().copied().unwrap_or(0),
        });
    }

    let o = spec.out_channels;
    let hw = h * w;
    let k = c_total * TAPS;
    let rule = ConvRule {
        channels,
        dilation: spec.dilation,
    };
    let owned: Vec<Tensor<T>> = inputs.iter().map(|t| (*t).clone()).collect();
    let mut out = vec![T::zero(); n * o * hw];
    let mut cols = vec![T::zero(); k * hw];
    for s in 0..n {
        rule.fill_cols(&owned, s, h, w, &mut cols);
        let dst = &mut out[s * o * hw..(s + 1) * o * hw];
        for (oc, b) in bias.data().iter().enumerate() {
            dst[oc * hw..(oc + 1) * hw].fill(*b);
        }
        gemm(o, k, hw, weight.data(), Layout::Normal, &cols, Layout::Normal, T::one(), dst);
    }
    let value = Array::new([n, o, h, w], out)?;
    let mut parents = owned;
    parents.push(weight.clone());
    parents.push(bias.clone());
    Ok(Tensor::from_op(value, parents, rule))
}
