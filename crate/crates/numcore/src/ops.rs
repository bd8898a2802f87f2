//! Kernel catalog.
//!
//! Every kernel is a pure forward function plus a vector-Jacobian product.
//! Kernels read 2-D views: a tensor of shape `[.., c]` is `rows x c`.

use crate::error::{NumError, Result};
use crate::tensor::Tensor;

/// Operation kind together with its attributes.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    /// `op(A) @ op(B)` where `op` optionally transposes.
    MatMul { trans_a: bool, trans_b: bool },
    /// Elementwise sum; the right operand may be a row vector or a scalar.
    Add,
    Sub,
    /// Elementwise product with the same broadcasting as [`OpKind::Add`].
    Mul,
    Scale(f64),
    /// Concatenation along rows (`axis == 0`) or columns (`axis == 1`).
    Concat { axis: usize },
    Slice { axis: usize, start: usize, end: usize },
    GatherRows(Vec<usize>),
    MeanAll,
    /// Mean over consecutive blocks of `group` rows: `[g*group, c] -> [g, c]`.
    MeanGroups { group: usize },
    /// Row sums: `[r, c] -> [r, 1]`.
    SumCols,
    Transpose,
    Gelu,
    Silu,
    Relu,
    LayerNorm { eps: f64 },
    Softmax,
    /// Scaled dot-product multi-head attention over `groups` independent
    /// token sets. Inputs are `q, k, v` of shape `[groups * tokens, dim]`.
    Attention { groups: usize, heads: usize },
    /// `sum |a - b|` as a scalar.
    L1Distance,
    /// Row-wise log-sum-exp: `[r, c] -> [r, 1]`.
    LogSumExp,
    L2Normalize { eps: f64 },
}

/// Names of every kernel in the catalog, in a stable order.
pub const CATALOG: &[&str] = &[
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "concat",
    "slice",
    "gather_rows",
    "mean",
    "mean_groups",
    "sum_cols",
    "transpose",
    "gelu",
    "silu",
    "relu",
    "layer_norm",
    "softmax",
    "attention",
    "l1_distance",
    "log_sum_exp",
    "l2_normalize",
];

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl OpKind {
    /// Looks up a kernel by catalog name with default attributes.
    pub fn parse(name: &str) -> Result<OpKind> {
        Ok(match name {
            "matmul" => OpKind::MatMul {
                trans_a: false,
                trans_b: false,
            },
            "add" => OpKind::Add,
            "sub" => OpKind::Sub,
            "mul" => OpKind::Mul,
            "scale" => OpKind::Scale(1.0),
            "concat" => OpKind::Concat { axis: 1 },
            "slice" => OpKind::Slice {
                axis: 1,
                start: 0,
                end: 1,
            },
            "gather_rows" => OpKind::GatherRows(vec![0]),
            "mean" => OpKind::MeanAll,
            "mean_groups" => OpKind::MeanGroups { group: 1 },
            "sum_cols" => OpKind::SumCols,
            "transpose" => OpKind::Transpose,
            "gelu" => OpKind::Gelu,
            "silu" => OpKind::Silu,
            "relu" => OpKind::Relu,
            "layer_norm" => OpKind::LayerNorm {
                eps: LAYER_NORM_EPS,
            },
            "softmax" => OpKind::Softmax,
            "attention" => OpKind::Attention {
                groups: 1,
                heads: 1,
            },
            "l1_distance" => OpKind::L1Distance,
            "log_sum_exp" => OpKind::LogSumExp,
            "l2_normalize" => OpKind::L2Normalize { eps: 1e-12 },
            other => return Err(NumError::UnknownKind(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul { .. } => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale(_) => "scale",
            OpKind::Concat { .. } => "concat",
            OpKind::Slice { .. } => "slice",
            OpKind::GatherRows(_) => "gather_rows",
            OpKind::MeanAll => "mean",
            OpKind::MeanGroups { .. } => "mean_groups",
            OpKind::SumCols => "sum_cols",
            OpKind::Transpose => "transpose",
            OpKind::Gelu => "gelu",
            OpKind::Silu => "silu",
            OpKind::Relu => "relu",
            OpKind::LayerNorm { .. } => "layer_norm",
            OpKind::Softmax => "softmax",
            OpKind::Attention { .. } => "attention",
            OpKind::L1Distance => "l1_distance",
            OpKind::LogSumExp => "log_sum_exp",
            OpKind::L2Normalize { .. } => "l2_normalize",
        }
    }

    pub fn arity(&self) -> Option<usize> {
        match self {
            OpKind::MatMul { .. }
            | OpKind::Add
            | OpKind::Sub
            | OpKind::Mul
            | OpKind::L1Distance => Some(2),
            OpKind::Attention { .. } => Some(3),
            OpKind::Concat { .. } => None,
            _ => Some(1),
        }
    }
}

/// Forward function plus vector-Jacobian product.
///
/// `forward` returns the output and an opaque cache that `backward` receives
/// unchanged. `backward` returns one gradient per input, shaped like it.
pub trait Kernel {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<(Tensor, Vec<f64>)>;
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        cache: &[f64],
        grad_out: &Tensor,
    ) -> Vec<Tensor>;
}

impl Kernel for OpKind {
    fn name(&self) -> &'static str {
        OpKind::name(self)
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<(Tensor, Vec<f64>)> {
        if let Some(n) = self.arity() {
            if inputs.len() != n {
                return Err(NumError::shape(
                    self.name(),
                    &inputs.iter().map(|t| t.shape()).collect::<Vec<_>>(),
                ));
            }
        } else if inputs.is_empty() {
            return Err(NumError::shape(self.name(), &[]));
        }
        let (out, cache) = match self {
            OpKind::MatMul { trans_a, trans_b } => {
                (matmul_fwd(inputs[0], inputs[1], *trans_a, *trans_b)?, vec![])
            }
            OpKind::Add => (binary_fwd("add", inputs[0], inputs[1], |a, b| a + b)?, vec![]),
            OpKind::Sub => (binary_fwd("sub", inputs[0], inputs[1], |a, b| a - b)?, vec![]),
            OpKind::Mul => (binary_fwd("mul", inputs[0], inputs[1], |a, b| a * b)?, vec![]),
            OpKind::Scale(s) => (map(inputs[0], |x| x * s), vec![]),
            OpKind::Concat { axis } => (concat_fwd(inputs, *axis)?, vec![]),
            OpKind::Slice { axis, start, end } => {
                (slice_fwd(inputs[0], *axis, *start, *end)?, vec![])
            }
            OpKind::GatherRows(idx) => (gather_fwd(inputs[0], idx)?, vec![]),
            OpKind::MeanAll => {
                let x = inputs[0];
                (
                    Tensor::scalar(x.data().iter().sum::<f64>() / x.numel() as f64),
                    vec![],
                )
            }
            OpKind::MeanGroups { group } => (mean_groups_fwd(inputs[0], *group)?, vec![]),
            OpKind::SumCols => {
                let x = inputs[0];
                let c = x.cols();
                let data = x.data().chunks(c).map(|r| r.iter().sum()).collect();
                (Tensor::matrix(x.rows(), 1, data), vec![])
            }
            OpKind::Transpose => (transpose(inputs[0]), vec![]),
            OpKind::Gelu => {
                let x = inputs[0];
                let t: Vec<f64> = x.data().iter().map(|&v| tanh(GELU_C * (v + 0.044715 * v * v * v))).collect();
                let data = x.data().iter().zip(&t).map(|(&v, &t)| 0.5 * v * (1.0 + t)).collect();
                (Tensor::new(x.shape().to_vec(), data)?, t)
            }
            OpKind::Silu => (map(inputs[0], |x| x * sigmoid(x)), vec![]),
            OpKind::Relu => (map(inputs[0], |x| x.max(0.0)), vec![]),
            OpKind::LayerNorm { eps } => layer_norm_fwd(inputs[0], *eps),
            OpKind::Softmax => (softmax_rows(inputs[0]), vec![]),
            OpKind::Attention { groups, heads } => {
                attention_fwd(inputs[0], inputs[1], inputs[2], *groups, *heads)?
            }
            OpKind::L1Distance => {
                let (a, b) = (inputs[0], inputs[1]);
                if a.shape() != b.shape() {
                    return Err(NumError::shape("l1_distance", &[a.shape(), b.shape()]));
                }
                let s = a
                    .data()
                    .iter()
                    .zip(b.data())
                    .map(|(x, y)| (x - y).abs())
                    .sum();
                (Tensor::scalar(s), vec![])
            }
            OpKind::LogSumExp => {
                let x = inputs[0];
                let c = x.cols();
                let data = x.data().chunks(c).map(log_sum_exp).collect();
                (Tensor::matrix(x.rows(), 1, data), vec![])
            }
            OpKind::L2Normalize { eps } => l2_normalize_fwd(inputs[0], *eps),
        };
        if !out.all_finite() {
            return Err(NumError::NonFinite {
                op: self.name().to_string(),
            });
        }
        Ok((out, cache))
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        cache: &[f64],
        g: &Tensor,
    ) -> Vec<Tensor> {
        match self {
            OpKind::MatMul { trans_a, trans_b } => {
                matmul_bwd(inputs[0], inputs[1], *trans_a, *trans_b, g)
            }
            OpKind::Add => {
                vec![g.clone(), reduce_broadcast(g, inputs[1], |_| 1.0)]
            }
            OpKind::Sub => {
                let gb = reduce_broadcast(g, inputs[1], |_| 1.0);
                vec![g.clone(), map(&gb, |x| -x)]
            }
            OpKind::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                let ga = binary_fwd("mul", g, b, |x, y| x * y).expect("checked in forward");
                let ag = zip_same(a, g, |x, y| x * y);
                let gb = reduce_broadcast(&ag, b, |_| 1.0);
                vec![ga, gb]
            }
            OpKind::Scale(s) => vec![map(g, |x| x * s)],
            OpKind::Concat { axis } => concat_bwd(inputs, *axis, g),
            OpKind::Slice { axis, start, .. } => vec![slice_bwd(inputs[0], *axis, *start, g)],
            OpKind::GatherRows(idx) => {
                let x = inputs[0];
                let c = x.cols();
                let mut gx = Tensor::zeros(x.shape());
                for (r, &src) in idx.iter().enumerate() {
                    let dst = &mut gx.data_mut()[src * c..(src + 1) * c];
                    for (d, v) in dst.iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                vec![gx]
            }
            OpKind::MeanAll => {
                let x = inputs[0];
                vec![Tensor::full(x.shape(), g.item() / x.numel() as f64)]
            }
            OpKind::MeanGroups { group } => {
                let x = inputs[0];
                let c = x.cols();
                let inv = 1.0 / *group as f64;
                let mut gx = Tensor::zeros(x.shape());
                for (r, row) in gx.data_mut().chunks_mut(c).enumerate() {
                    for (d, v) in row.iter_mut().zip(g.row(r / group)) {
                        *d = v * inv;
                    }
                }
                vec![gx]
            }
            OpKind::SumCols => {
                let x = inputs[0];
                let c = x.cols();
                let mut gx = Tensor::zeros(x.shape());
                for (r, row) in gx.data_mut().chunks_mut(c).enumerate() {
                    row.fill(g.data()[r]);
                }
                vec![gx]
            }
            OpKind::Transpose => vec![transpose(g)],
            OpKind::Gelu => {
                let x = inputs[0];
                let data = x
                    .data()
                    .iter()
                    .zip(cache)
                    .zip(g.data())
                    .map(|((&v, &t), &d)| {
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * v * v);
                        d * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
                    })
                    .collect();
                vec![Tensor::new(x.shape().to_vec(), data).unwrap()]
            }
            OpKind::Silu => vec![zip_same(inputs[0], g, |x, d| {
                let s = sigmoid(x);
                d * (s + x * s * (1.0 - s))
            })],
            OpKind::Relu => vec![zip_same(inputs[0], g, |x, d| if x > 0.0 { d } else { 0.0 })],
            OpKind::LayerNorm { .. } => vec![layer_norm_bwd(output, cache, g)],
            OpKind::Softmax => vec![softmax_bwd(output, g)],
            OpKind::Attention { groups, heads } => {
                attention_bwd(inputs[0], inputs[1], inputs[2], *groups, *heads, cache, g)
            }
            OpKind::L1Distance => {
                let s = g.item();
                let ga = zip_same(inputs[0], inputs[1], |a, b| s * sign(a - b));
                let gb = map(&ga, |x| -x);
                vec![ga, gb]
            }
            OpKind::LogSumExp => {
                let x = inputs[0];
                let c = x.cols();
                let mut gx = softmax_rows(x);
                for (r, row) in gx.data_mut().chunks_mut(c).enumerate() {
                    let d = g.data()[r];
                    row.iter_mut().for_each(|p| *p *= d);
                }
                vec![gx]
            }
            OpKind::L2Normalize { .. } => {
                let c = output.cols();
                let mut gx = Tensor::zeros(output.shape());
                for r in 0..output.rows() {
                    let y = output.row(r);
                    let dy = g.row(r);
                    let inv_norm = cache[r];
                    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
                    let dst = &mut gx.data_mut()[r * c..(r + 1) * c];
                    for j in 0..c {
                        dst[j] = (dy[j] - y[j] * dot) * inv_norm;
                    }
                }
                vec![gx]
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh approximation of GELU.
/// `tanh` through one `exp`; faster than the libm routine and accurate to
/// a few ulps away from zero.
fn tanh(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        return u.tanh();
    }
    1.0 - 2.0 / ((2.0 * u).exp() + 1.0)
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + tanh(GELU_C * (x + 0.044715 * x * x * x)))
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = x.data().iter().map(|&v| f(v)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

fn zip_same(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

#[derive(Clone, Copy, PartialEq)]
enum Broadcast {
    Same,
    Row,
    Scalar,
}

fn broadcast_kind(a: &Tensor, b: &Tensor) -> Option<Broadcast> {
    if a.numel() == b.numel() && a.cols() == b.cols() {
        Some(Broadcast::Same)
    } else if b.numel() == a.cols() {
        Some(Broadcast::Row)
    } else if b.numel() == 1 {
        Some(Broadcast::Scalar)
    } else {
        None
    }
}

fn binary_fwd(op: &str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let kind = broadcast_kind(a, b).ok_or_else(|| NumError::shape(op, &[a.shape(), b.shape()]))?;
    let c = a.cols();
    let bd = b.data();
    let data = match kind {
        Broadcast::Same => a.data().iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
        Broadcast::Row => a
            .data()
            .chunks(c)
            .flat_map(|row| row.iter().zip(bd).map(|(&x, &y)| f(x, y)))
            .collect(),
        Broadcast::Scalar => a.data().iter().map(|&x| f(x, bd[0])).collect(),
    };
    Tensor::new(a.shape().to_vec(), data)
}

/// Sums an output-shaped gradient back onto the (possibly broadcast) operand.
fn reduce_broadcast(g: &Tensor, b: &Tensor, _f: impl Fn(f64) -> f64) -> Tensor {
    match broadcast_kind(g, b).expect("checked in forward") {
        Broadcast::Same => Tensor::new(b.shape().to_vec(), g.data().to_vec()).unwrap(),
        Broadcast::Row => {
            let c = g.cols();
            let mut out = vec![0.0; c];
            for row in g.data().chunks(c) {
                for (o, v) in out.iter_mut().zip(row) {
                    *o += v;
                }
            }
            Tensor::new(b.shape().to_vec(), out).unwrap()
        }
        Broadcast::Scalar => {
            Tensor::new(b.shape().to_vec(), vec![g.data().iter().sum()]).unwrap()
        }
    }
}

/// `op(A) @ op(B)` on raw row-major buffers. `a` is stored as
/// `[a_rows, a_cols]`; with `ta` the logical operand is its transpose.
pub fn gemm(
    a: &[f64],
    a_rows: usize,
    a_cols: usize,
    ta: bool,
    b: &[f64],
    b_rows: usize,
    b_cols: usize,
    tb: bool,
) -> (Vec<f64>, usize, usize) {
    let (m, k) = if ta { (a_cols, a_rows) } else { (a_rows, a_cols) };
    let (k2, n) = if tb { (b_cols, b_rows) } else { (b_rows, b_cols) };
    debug_assert_eq!(k, k2);
    let (rsa, csa) = if ta { (1, a_cols) } else { (a_cols, 1) };
    let (rsb, csb) = if tb { (1, b_cols) } else { (b_cols, 1) };
    let mut c = vec![0.0; m * n];
    // SAFETY: strides describe in-bounds row-major views of `a` (a_rows x
    // a_cols), `b` (b_rows x b_cols) and `c` (m x n).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    (c, m, n)
}

fn matmul_fwd(a: &Tensor, b: &Tensor, ta: bool, tb: bool) -> Result<Tensor> {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let k = if ta { ar } else { ac };
    let k2 = if tb { bc } else { br };
    if k != k2 {
        return Err(NumError::shape("matmul", &[a.shape(), b.shape()]));
    }
    let (c, m, n) = gemm(a.data(), ar, ac, ta, b.data(), br, bc, tb);
    Tensor::new(vec![m, n], c)
}

fn matmul_bwd(a: &Tensor, b: &Tensor, ta: bool, tb: bool, g: &Tensor) -> Vec<Tensor> {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let (gr, gc) = (g.rows(), g.cols());
    let (ga, _, _) = if ta {
        gemm(b.data(), br, bc, tb, g.data(), gr, gc, true)
    } else {
        gemm(g.data(), gr, gc, false, b.data(), br, bc, !tb)
    };
    let (gb, _, _) = if tb {
        gemm(g.data(), gr, gc, true, a.data(), ar, ac, ta)
    } else {
        gemm(a.data(), ar, ac, !ta, g.data(), gr, gc, false)
    };
    vec![
        Tensor::new(a.shape().to_vec(), ga).unwrap(),
        Tensor::new(b.shape().to_vec(), gb).unwrap(),
    ]
}

fn transpose(x: &Tensor) -> Tensor {
    let (r, c) = (x.rows(), x.cols());
    let mut out = vec![0.0; r * c];
    let d = x.data();
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = d[i * c + j];
        }
    }
    Tensor::matrix(c, r, out)
}

fn concat_fwd(inputs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let shapes: Vec<&[usize]> = inputs.iter().map(|t| t.shape()).collect();
    match axis {
        0 => {
            let c = inputs[0].cols();
            if inputs.iter().any(|t| t.cols() != c) {
                return Err(NumError::shape("concat", &shapes));
            }
            let mut data = Vec::with_capacity(inputs.iter().map(|t| t.numel()).sum());
            for t in inputs {
                data.extend_from_slice(t.data());
            }
            let rows = data.len() / c;
            Tensor::new(vec![rows, c], data)
        }
        1 => {
            let r = inputs[0].rows();
            if inputs.iter().any(|t| t.rows() != r) {
                return Err(NumError::shape("concat", &shapes));
            }
            let total: usize = inputs.iter().map(|t| t.cols()).sum();
            let mut data = Vec::with_capacity(r * total);
            for i in 0..r {
                for t in inputs {
                    data.extend_from_slice(t.row(i));
                }
            }
            Tensor::new(vec![r, total], data)
        }
        _ => Err(NumError::shape("concat", &shapes)),
    }
}

fn concat_bwd(inputs: &[&Tensor], axis: usize, g: &Tensor) -> Vec<Tensor> {
    let mut out = Vec::with_capacity(inputs.len());
    if axis == 0 {
        let mut off = 0;
        for t in inputs {
            let n = t.numel();
            out.push(Tensor::new(t.shape().to_vec(), g.data()[off..off + n].to_vec()).unwrap());
            off += n;
        }
    } else {
        let r = g.rows();
        let mut off = 0;
        for t in inputs {
            let c = t.cols();
            let mut data = Vec::with_capacity(r * c);
            for i in 0..r {
                data.extend_from_slice(&g.row(i)[off..off + c]);
            }
            out.push(Tensor::new(t.shape().to_vec(), data).unwrap());
            off += c;
        }
    }
    out
}

fn slice_fwd(x: &Tensor, axis: usize, start: usize, end: usize) -> Result<Tensor> {
    let (r, c) = (x.rows(), x.cols());
    let bad = || NumError::shape("slice", &[x.shape(), &[axis, start, end]]);
    match axis {
        0 if start < end && end <= r => {
            Tensor::new(vec![end - start, c], x.data()[start * c..end * c].to_vec())
        }
        1 if start < end && end <= c => {
            let mut data = Vec::with_capacity(r * (end - start));
            for i in 0..r {
                data.extend_from_slice(&x.row(i)[start..end]);
            }
            Tensor::new(vec![r, end - start], data)
        }
        _ => Err(bad()),
    }
}

fn slice_bwd(x: &Tensor, axis: usize, start: usize, g: &Tensor) -> Tensor {
    let c = x.cols();
    let mut gx = Tensor::zeros(x.shape());
    if axis == 0 {
        gx.data_mut()[start * c..start * c + g.numel()].copy_from_slice(g.data());
    } else {
        let w = g.cols();
        for i in 0..g.rows() {
            gx.data_mut()[i * c + start..i * c + start + w].copy_from_slice(g.row(i));
        }
    }
    gx
}

fn gather_fwd(x: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let r = x.rows();
    if idx.is_empty() || idx.iter().any(|&i| i >= r) {
        return Err(NumError::shape("gather_rows", &[x.shape(), &[idx.len()]]));
    }
    let c = x.cols();
    let mut data = Vec::with_capacity(idx.len() * c);
    for &i in idx {
        data.extend_from_slice(x.row(i));
    }
    Tensor::new(vec![idx.len(), c], data)
}

fn mean_groups_fwd(x: &Tensor, group: usize) -> Result<Tensor> {
    let r = x.rows();
    if group == 0 || r % group != 0 {
        return Err(NumError::shape("mean_groups", &[x.shape(), &[group]]));
    }
    let c = x.cols();
    let g = r / group;
    let inv = 1.0 / group as f64;
    let mut out = vec![0.0; g * c];
    for i in 0..r {
        let dst = &mut out[(i / group) * c..(i / group + 1) * c];
        for (d, v) in dst.iter_mut().zip(x.row(i)) {
            *d += v * inv;
        }
    }
    Tensor::new(vec![g, c], out)
}

fn softmax_rows(x: &Tensor) -> Tensor {
    let c = x.cols();
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(c) {
        softmax_in_place(row);
    }
    Tensor::new(x.shape().to_vec(), out).unwrap()
}

fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    let inv = 1.0 / s;
    row.iter_mut().for_each(|v| *v *= inv);
}

fn softmax_bwd(y: &Tensor, g: &Tensor) -> Tensor {
    let c = y.cols();
    let mut gx = Tensor::zeros(y.shape());
    for r in 0..y.rows() {
        let yr = y.row(r);
        let gr = g.row(r);
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        let dst = &mut gx.data_mut()[r * c..(r + 1) * c];
        for j in 0..c {
            dst[j] = yr[j] * (gr[j] - dot);
        }
    }
    gx
}

fn layer_norm_fwd(x: &Tensor, eps: f64) -> (Tensor, Vec<f64>) {
    let c = x.cols();
    let mut out = Vec::with_capacity(x.numel());
    let mut rstd = Vec::with_capacity(x.rows());
    for row in x.data().chunks(c) {
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let rs = 1.0 / (var + eps).sqrt();
        out.extend(row.iter().map(|v| (v - mean) * rs));
        rstd.push(rs);
    }
    (Tensor::new(x.shape().to_vec(), out).unwrap(), rstd)
}

fn layer_norm_bwd(y: &Tensor, rstd: &[f64], g: &Tensor) -> Tensor {
    let c = y.cols();
    let inv_c = 1.0 / c as f64;
    let mut gx = Tensor::zeros(y.shape());
    for r in 0..y.rows() {
        let yr = y.row(r);
        let gr = g.row(r);
        let mean_g: f64 = gr.iter().sum::<f64>() * inv_c;
        let mean_gy: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() * inv_c;
        let dst = &mut gx.data_mut()[r * c..(r + 1) * c];
        for j in 0..c {
            dst[j] = rstd[r] * (gr[j] - mean_g - yr[j] * mean_gy);
        }
    }
    gx
}

fn l2_normalize_fwd(x: &Tensor, eps: f64) -> (Tensor, Vec<f64>) {
    let c = x.cols();
    let mut out = Vec::with_capacity(x.numel());
    let mut inv = Vec::with_capacity(x.rows());
    for row in x.data().chunks(c) {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(eps);
        let i = 1.0 / n;
        out.extend(row.iter().map(|v| v * i));
        inv.push(i);
    }
    (Tensor::new(x.shape().to_vec(), out).unwrap(), inv)
}

fn attention_dims(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    groups: usize,
    heads: usize,
) -> Result<(usize, usize, usize)> {
    let err = || NumError::shape("attention", &[q.shape(), k.shape(), v.shape()]);
    let rows = q.rows();
    let dim = q.cols();
    if k.rows() != rows
        || v.rows() != rows
        || k.cols() != dim
        || v.cols() != dim
        || groups == 0
        || heads == 0
        || rows % groups != 0
        || dim % heads != 0
    {
        return Err(err());
    }
    Ok((rows / groups, dim, dim / heads))
}

/// `C = alpha * A @ B` on strided views, overwriting `C`.
///
/// # Safety
/// Every view must lie inside its allocation.
#[allow(clippy::too_many_arguments)]
unsafe fn gemm_view(
    (m, k, n): (usize, usize, usize),
    alpha: f64,
    a: *const f64,
    (rsa, csa): (usize, usize),
    b: *const f64,
    (rsb, csb): (usize, usize),
    c: *mut f64,
    (rsc, csc): (usize, usize),
) {
    matrixmultiply::dgemm(
        m,
        k,
        n,
        alpha,
        a,
        rsa as isize,
        csa as isize,
        b,
        rsb as isize,
        csb as isize,
        0.0,
        c,
        rsc as isize,
        csc as isize,
    );
}

/// Cache layout: softmax probabilities `[groups][heads][t][t]`.
fn attention_fwd(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    groups: usize,
    heads: usize,
) -> Result<(Tensor, Vec<f64>)> {
    let (t, dim, dh) = attention_dims(q, k, v, groups, heads)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    let mut out = vec![0.0; q.numel()];
    let mut probs = vec![0.0; groups * heads * t * t];
    for g in 0..groups {
        for h in 0..heads {
            let o = g * t * dim + h * dh;
            let p = &mut probs[(g * heads + h) * t * t..(g * heads + h + 1) * t * t];
            // SAFETY: head `h` of group `g` is the t x dh block at offset `o`
            // with row stride `dim`, inside q, k, v and out; `p` is t x t.
            unsafe {
                gemm_view((t, dh, t), scale, qd.as_ptr().add(o), (dim, 1), kd.as_ptr().add(o), (1, dim), p.as_mut_ptr(), (t, 1));
            }
            for row in p.chunks_mut(t) {
                softmax_in_place(row);
            }
            unsafe {
                gemm_view((t, t, dh), 1.0, p.as_ptr(), (t, 1), vd.as_ptr().add(o), (dim, 1), out.as_mut_ptr().add(o), (dim, 1));
            }
        }
    }
    Ok((Tensor::new(q.shape().to_vec(), out)?, probs))
}

fn attention_bwd(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    groups: usize,
    heads: usize,
    probs: &[f64],
    g: &Tensor,
) -> Vec<Tensor> {
    let (t, dim, dh) = attention_dims(q, k, v, groups, heads).expect("checked in forward");
    let scale = 1.0 / (dh as f64).sqrt();
    let (qd, kd, vd, gd) = (q.data(), k.data(), v.data(), g.data());
    let mut gq = vec![0.0; q.numel()];
    let mut gk = vec![0.0; k.numel()];
    let mut gv = vec![0.0; v.numel()];
    let mut ds = vec![0.0; t * t];
    for gi in 0..groups {
        for h in 0..heads {
            let o = gi * t * dim + h * dh;
            let p = &probs[(gi * heads + h) * t * t..(gi * heads + h + 1) * t * t];
            // SAFETY: as in the forward pass; `ds` is t x t.
            unsafe {
                // dP = dO V^T ; dV = P^T dO
                gemm_view((t, dh, t), 1.0, gd.as_ptr().add(o), (dim, 1), vd.as_ptr().add(o), (1, dim), ds.as_mut_ptr(), (t, 1));
                gemm_view((t, t, dh), 1.0, p.as_ptr(), (1, t), gd.as_ptr().add(o), (dim, 1), gv.as_mut_ptr().add(o), (dim, 1));
            }
            for (drow, prow) in ds.chunks_mut(t).zip(p.chunks(t)) {
                let dot: f64 = drow.iter().zip(prow).map(|(a, b)| a * b).sum();
                for (d, &pj) in drow.iter_mut().zip(prow) {
                    *d = pj * (*d - dot) * scale;
                }
            }
            unsafe {
                // dQ = dS K ; dK = dS^T Q
                gemm_view((t, t, dh), 1.0, ds.as_ptr(), (t, 1), kd.as_ptr().add(o), (dim, 1), gq.as_mut_ptr().add(o), (dim, 1));
                gemm_view((t, t, dh), 1.0, ds.as_ptr(), (1, t), qd.as_ptr().add(o), (dim, 1), gk.as_mut_ptr().add(o), (dim, 1));
            }
        }
    }
    vec![
        Tensor::new(q.shape().to_vec(), gq).unwrap(),
        Tensor::new(k.shape().to_vec(), gk).unwrap(),
        Tensor::new(v.shape().to_vec(), gv).unwrap(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fwd(kind: OpKind, inputs: &[&Tensor]) -> Tensor {
        kind.forward(inputs).unwrap().0
    }

    #[test]
    fn identity_matmul() {
        let a = Tensor::matrix(3, 2, vec![1.0, -2.0, 0.5, 4.0, 3.0, 7.0]);
        let out = fwd(
            OpKind::MatMul {
                trans_a: false,
                trans_b: false,
            },
            &[&Tensor::identity(3), &a],
        );
        assert_eq!(out, a);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let out = fwd(OpKind::Softmax, &[&Tensor::zeros(&[1, 3])]);
        for v in out.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn layer_norm_of_constant_is_zero() {
        let out = fwd(
            OpKind::LayerNorm {
                eps: LAYER_NORM_EPS,
            },
            &[&Tensor::full(&[2, 5], 3.7)],
        );
        assert!(out.data().iter().all(|&v| v == 0.0));
        // hand expansion: x=[1,3] -> mean 2, var 1 -> (+-1)/sqrt(1+eps)
        let out = fwd(
            OpKind::LayerNorm {
                eps: LAYER_NORM_EPS,
            },
            &[&Tensor::matrix(1, 2, vec![1.0, 3.0])],
        );
        let expect = 1.0 / (1.0 + LAYER_NORM_EPS).sqrt();
        assert!((out.data()[0] + expect).abs() < 1e-15);
        assert!((out.data()[1] - expect).abs() < 1e-15);
    }

    #[test]
    fn shape_errors_name_shapes() {
        let err = OpKind::MatMul {
            trans_a: false,
            trans_b: false,
        }
        .forward(&[&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2, 3])])
        .unwrap_err();
        match err {
            NumError::ShapeMismatch { op, shapes } => {
                assert_eq!(op, "matmul");
                assert_eq!(shapes, vec![vec![2, 3], vec![2, 3]]);
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(matches!(
            OpKind::parse("conv2d"),
            Err(NumError::UnknownKind(_))
        ));
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let x = Tensor::matrix(1, 2, vec![f64::MAX, f64::MAX]);
        let err = OpKind::Scale(10.0).forward(&[&x]).unwrap_err();
        assert!(matches!(err, NumError::NonFinite { .. }));
    }

    #[test]
    fn l2_normalized_rows_are_unit() {
        let x = Tensor::matrix(2, 3, vec![3.0, 4.0, 12.0, -0.1, 1e-3, 7.0]);
        let y = fwd(OpKind::L2Normalize { eps: 1e-12 }, &[&x]);
        for r in 0..2 {
            let n: f64 = y.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn attention_single_token_copies_values() {
        let q = Tensor::matrix(1, 4, vec![0.3, -1.0, 2.0, 0.1]);
        let k = Tensor::matrix(1, 4, vec![1.0, 1.0, 1.0, 1.0]);
        let v = Tensor::matrix(1, 4, vec![5.0, 6.0, 7.0, 8.0]);
        let out = fwd(
            OpKind::Attention {
                groups: 1,
                heads: 2,
            },
            &[&q, &k, &v],
        );
        assert_eq!(out, v);
    }

    #[test]
    fn catalog_names_parse_back() {
        for name in CATALOG {
            assert_eq!(OpKind::parse(name).unwrap().name(), *name);
        }
    }
}
