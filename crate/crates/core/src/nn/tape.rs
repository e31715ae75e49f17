//! Reverse-mode differentiation over a linear tape of 2-D matrix operations.
//!
//! Every value on the tape is a row-major `rows × cols` matrix. Batched
//! sequence data uses a time-major row layout (`row = t * batch + b`), and
//! convolutional activations pack `channels × height × width` into the
//! columns of a row.

use std::collections::HashMap;

use super::params::ParameterSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub channels_in: usize,
    pub channels_out: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulConst(Var, Vec<f64>),
    WeightedSum(Var, Vec<f64>),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Square(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    LogSoftmax(Var),
    Gather(Var, Vec<usize>),
    SumAll(Var),
    Conv3x3 {
        input: Var,
        weight: Var,
        bias: Var,
        geom: ConvGeometry,
    },
    Lstm {
        gates: Var,
        c_prev: Var,
        hidden: usize,
        /// Activated gates (i, f, g, o) followed by tanh(c) for every row.
        cache: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<(String, String), Var>,
}

/// Gradients of a scalar with respect to every node of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    // a is m×k (stored k×m when transposed), b is k×n (stored n×k when transposed)
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the slices cover the strided extents computed above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn im2col(input: &[f64], geom: &ConvGeometry, cols: &mut [f64]) {
    let (h, w) = (geom.height, geom.width);
    let hw = h * w;
    for c in 0..geom.channels_in {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (c * 9 + ky * 3 + kx) * hw;
                for y in 0..h {
                    for x in 0..w {
                        let iy = y as isize + ky as isize - 1;
                        let ix = x as isize + kx as isize - 1;
                        cols[row + y * w + x] =
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                0.0
                            } else {
                                input[c * hw + iy as usize * w + ix as usize]
                            };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], geom: &ConvGeometry, out: &mut [f64]) {
    let (h, w) = (geom.height, geom.width);
    let hw = h * w;
    for c in 0..geom.channels_in {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (c * 9 + ky * 3 + kx) * hw;
                for y in 0..h {
                    for x in 0..w {
                        let iy = y as isize + ky as isize - 1;
                        let ix = x as isize + kx as isize - 1;
                        if iy >= 0 && ix >= 0 && iy < h as isize && ix < w as isize {
                            out[c * hw + iy as usize * w + ix as usize] += cols[row + y * w + x];
                        }
                    }
                }
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    /// A constant leaf; receives no gradient outside the tape.
    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if rows * cols != data.len() {
            return Err(Error::config(format!(
                "input of {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(self.push(rows, cols, data, Op::Input))
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.push(rows, cols, vec![0.0; rows * cols], Op::Input)
    }

    /// Registers (once per tape) the parameter `name` of `params` under `scope`.
    /// Parameters of rank > 2 are viewed as `dim0 × rest`; vectors as `1 × n`.
    pub fn param(&mut self, scope: &str, params: &ParameterSet, name: &str) -> Result<Var> {
        let key = (scope.to_string(), name.to_string());
        if let Some(v) = self.params.get(&key) {
            return Ok(*v);
        }
        let value = params.value(name)?;
        let (rows, cols) = match value.shape().len() {
            0 => (1, 1),
            1 => (1, value.len()),
            _ => (value.rows(), value.cols()),
        };
        let v = self.push(rows, cols, value.data().to_vec(), Op::Param);
        self.params.insert(key, v);
        Ok(v)
    }

    fn check_same(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::config(format!(
                "{what}: shape mismatch {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::config(format!(
                "matmul: {m}x{k} times {k2}x{n} does not conform"
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), false, self.value(b), false, &mut out, 0.0);
        Ok(self.push(m, n, out, Op::MatMul(a, b)))
    }

    /// `a + row` with `row` (1×n) broadcast over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        if self.shape(row) != (1, n) {
            return Err(Error::config(format!(
                "add_row: bias {:?} does not match {m}x{n}",
                self.shape(row)
            )));
        }
        let av = self.value(a);
        let bv = self.value(row);
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            out.extend(av[r * n..(r + 1) * n].iter().zip(bv).map(|(x, y)| x + y));
        }
        Ok(self.push(m, n, out, Op::AddRow(a, row)))
    }

    fn elementwise2(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (m, n) = self.shape(a);
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        self.push(m, n, out, op)
    }

    fn elementwise1(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (m, n) = self.shape(a);
        let out = self.value(a).iter().map(|x| f(*x)).collect();
        self.push(m, n, out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "add")?;
        Ok(self.elementwise2(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "sub")?;
        Ok(self.elementwise2(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "mul")?;
        Ok(self.elementwise2(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.elementwise1(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.elementwise1(a, |x| x + s, Op::AddScalar(a))
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, a: Var, c: Vec<f64>) -> Result<Var> {
        let (m, n) = self.shape(a);
        if c.len() != m * n {
            return Err(Error::config("mul_const: constant shape mismatch"));
        }
        let out = self.value(a).iter().zip(&c).map(|(x, y)| x * y).collect();
        Ok(self.push(m, n, out, Op::MulConst(a, c)))
    }

    /// `sum(a ⊙ c)` for a constant `c`, as a 1×1 node.
    pub fn weighted_sum(&mut self, a: Var, c: Vec<f64>) -> Result<Var> {
        let (m, n) = self.shape(a);
        if c.len() != m * n {
            return Err(Error::config("weighted_sum: constant shape mismatch"));
        }
        let s = self.value(a).iter().zip(&c).map(|(x, y)| x * y).sum();
        Ok(self.push(1, 1, vec![s], Op::WeightedSum(a, c)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.elementwise1(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.elementwise1(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.elementwise1(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.elementwise1(a, f64::exp, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.elementwise1(a, |x| x * x, Op::Square(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = self.shape(parts[0]).0;
        if parts.iter().any(|p| self.shape(*p).0 != m) {
            return Err(Error::config("concat_cols: row counts differ"));
        }
        let n: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for p in parts {
                let c = self.shape(*p).1;
                out.extend_from_slice(&self.value(*p)[r * c..(r + 1) * c]);
            }
        }
        Ok(self.push(m, n, out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.shape(a);
        if start + len > n {
            return Err(Error::config("slice_cols: out of range"));
        }
        let av = self.value(a);
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&av[r * n + start..r * n + start + len]);
        }
        Ok(self.push(m, len, out, Op::SliceCols(a, start)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let n = self.shape(parts[0]).1;
        if parts.iter().any(|p| self.shape(*p).1 != n) {
            return Err(Error::config("concat_rows: column counts differ"));
        }
        let m: usize = parts.iter().map(|p| self.shape(*p).0).sum();
        let mut out = Vec::with_capacity(m * n);
        for p in parts {
            out.extend_from_slice(self.value(*p));
        }
        Ok(self.push(m, n, out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.shape(a);
        if start + len > m {
            return Err(Error::config("slice_rows: out of range"));
        }
        let out = self.value(a)[start * n..(start + len) * n].to_vec();
        Ok(self.push(len, n, out, Op::SliceRows(a, start)))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let av = self.value(a);
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            let row = &av[r * n..(r + 1) * n];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
            out.extend(row.iter().map(|x| x - lse));
        }
        self.push(m, n, out, Op::LogSoftmax(a))
    }

    /// Picks column `idx[r]` of every row `r`, giving an m×1 node.
    pub fn gather(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        let (m, n) = self.shape(a);
        if idx.len() != m || idx.iter().any(|i| *i >= n) {
            return Err(Error::usage("gather: index out of range"));
        }
        let av = self.value(a);
        let out = idx.iter().enumerate().map(|(r, i)| av[r * n + i]).collect();
        Ok(self.push(m, 1, out, Op::Gather(a, idx)))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(1, 1, vec![s], Op::SumAll(a))
    }

    /// 3×3 convolution with zero padding (spatial size preserved).
    /// `input` rows hold `C_in × H × W`; `weight` is `C_out × (C_in·9)`; `bias` is `1 × C_out`.
    pub fn conv3x3(&mut self, input: Var, weight: Var, bias: Var, geom: ConvGeometry) -> Result<Var> {
        let (batch, cols) = self.shape(input);
        let hw = geom.height * geom.width;
        if cols != geom.channels_in * hw {
            return Err(Error::config(format!(
                "conv3x3: input has {cols} columns, expected {}x{}x{}",
                geom.channels_in, geom.height, geom.width
            )));
        }
        if self.shape(weight) != (geom.channels_out, geom.channels_in * 9) {
            return Err(Error::config(format!(
                "conv3x3: weight {:?} does not match {} -> {} channels",
                self.shape(weight),
                geom.channels_in,
                geom.channels_out
            )));
        }
        if self.shape(bias) != (1, geom.channels_out) {
            return Err(Error::config("conv3x3: bias shape mismatch"));
        }
        let out_cols = geom.channels_out * hw;
        let mut out = vec![0.0; batch * out_cols];
        let mut colbuf = vec![0.0; geom.channels_in * 9 * hw];
        let (iv, wv, bv) = (self.value(input), self.value(weight), self.value(bias));
        for b in 0..batch {
            im2col(&iv[b * cols..(b + 1) * cols], &geom, &mut colbuf);
            let o = &mut out[b * out_cols..(b + 1) * out_cols];
            for (c, bias_c) in bv.iter().enumerate() {
                o[c * hw..(c + 1) * hw].iter_mut().for_each(|x| *x = *bias_c);
            }
            gemm(
                geom.channels_out,
                geom.channels_in * 9,
                hw,
                wv,
                false,
                &colbuf,
                false,
                o,
                1.0,
            );
        }
        Ok(self.push(
            batch,
            out_cols,
            out,
            Op::Conv3x3 {
                input,
                weight,
                bias,
                geom,
            },
        ))
    }

    /// Fused LSTM cell nonlinearity. `gates` holds pre-activations ordered
    /// (input, forget, cell, output), `c_prev` the previous cell state. The
    /// result is `m × 2H`: new hidden state followed by new cell state.
    pub fn lstm_cell(&mut self, gates: Var, c_prev: Var) -> Result<Var> {
        let (m, g4) = self.shape(gates);
        let hidden = g4 / 4;
        if g4 != 4 * hidden || self.shape(c_prev) != (m, hidden) {
            return Err(Error::config(format!(
                "lstm_cell: gates {:?} and state {:?} do not match",
                self.shape(gates),
                self.shape(c_prev)
            )));
        }
        let gv = self.value(gates);
        let cv = self.value(c_prev);
        let mut out = vec![0.0; m * 2 * hidden];
        let mut cache = vec![0.0; m * 5 * hidden];
        for r in 0..m {
            let g = &gv[r * g4..(r + 1) * g4];
            let cache_r = &mut cache[r * 5 * hidden..(r + 1) * 5 * hidden];
            for j in 0..hidden {
                let i = sigmoid(g[j]);
                let f = sigmoid(g[hidden + j]);
                let gg = g[2 * hidden + j].tanh();
                let o = sigmoid(g[3 * hidden + j]);
                let c = f * cv[r * hidden + j] + i * gg;
                let tc = c.tanh();
                out[r * 2 * hidden + j] = o * tc;
                out[r * 2 * hidden + hidden + j] = c;
                cache_r[j] = i;
                cache_r[hidden + j] = f;
                cache_r[2 * hidden + j] = gg;
                cache_r[3 * hidden + j] = o;
                cache_r[4 * hidden + j] = tc;
            }
        }
        Ok(self.push(
            m,
            2 * hidden,
            out,
            Op::Lstm {
                gates,
                c_prev,
                hidden,
                cache,
            },
        ))
    }

    /// Reverse sweep from a 1×1 node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::usage("backward called on a value not recorded on this tape"));
        }
        if self.shape(loss) != (1, 1) {
            return Err(Error::usage("backward requires a scalar (1x1) loss"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        fn acc<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut Vec<f64> {
            let len = nodes[v.0].value.len();
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let (m, n) = (node.rows, node.cols);
            match &node.op {
                Op::Input | Op::Param => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let k = self.nodes[a.0].cols;
                    let da = acc(&mut grads, &self.nodes, *a);
                    gemm(m, n, k, &g, false, &self.nodes[b.0].value, true, da, 1.0);
                    let db = acc(&mut grads, &self.nodes, *b);
                    gemm(k, m, n, &self.nodes[a.0].value, true, &g, false, db, 1.0);
                }
                Op::AddRow(a, row) => {
                    let da = acc(&mut grads, &self.nodes, *a);
                    da.iter_mut().zip(&g).for_each(|(d, x)| *d += x);
                    let db = acc(&mut grads, &self.nodes, *row);
                    for r in 0..m {
                        for c in 0..n {
                            db[c] += g[r * n + c];
                        }
                    }
                }
                Op::Add(a, b) => {
                    let da = acc(&mut grads, &self.nodes, *a);
                    da.iter_mut().zip(&g).for_each(|(d, x)| *d += x);
                    let db = acc(&mut grads, &self.nodes, *b);
                    db.iter_mut().zip(&g).for_each(|(d, x)| *d += x);
                }
                Op::Sub(a, b) => {
                    let da = acc(&mut grads, &self.nodes, *a);
                    da.iter_mut().zip(&g).for_each(|(d, x)| *d += x);
                    let db = acc(&mut grads, &self.nodes, *b);
                    db.iter_mut().zip(&g).for_each(|(d, x)| *d -= x);
                }
                Op::Mul(a, b) => {
                    let bv = &self.nodes[b.0].value;
                    let da = acc(&mut grads, &self.nodes, *a);
                    for ((d, x), y) in da.iter_mut().zip(&g).zip(bv) {
                        *d += x * y;
                    }
                    let av = &self.nodes[a.0].value;
                    let db = acc(&mut grads, &self.nodes, *b);
                    for ((d, x), y) in db.iter_mut().zip(&g).zip(av) {
                        *d += x * y;
                    }
                }
                Op::Scale(a, s) => {
                    let da = acc(&mut grads, &self.nodes, *a);
                    da.iter_mut().zip(&g).for_each(|(d, x)| *d += x * s);
                }
                Op::AddScalar(a) => {
                    let da = acc(&mut grads, &self.nodes, *a);
                    da.iter_mut().zip(&g).for_each(|(d, x)| *d += x);
                }
                Op::MulConst(a, c) => {
                    let da = acc(&mut grads, &self.nodes, *a);
                    for ((d, x), y) in da.iter_mut().zip(&g).zip(c) {
                        *d += x * y;
                    }
                }
                Op::WeightedSum(a, c) => {
                    let g0 = g[0];
                    let da = acc(&mut grads, &self.nodes, *a);
                    da.iter_mut().zip(c).for_each(|(d, y)| *d += g0 * y);
                }
                Op::Relu(a) => {
                    let av = &self.nodes[a.0].value;
                    let da = acc(&mut grads, &self.nodes, *a);
                    for ((d, x), y) in da.iter_mut().zip(&g).zip(av) {
                        if *y > 0.0 {
                            *d += x;
                        }
                    }
                }
                Op::Tanh(a) => {
                    let da = acc(&mut grads, &self.nodes, *a);
                    for ((d, x), y) in da.iter_mut().zip(&g).zip(&node.value) {
                        *d += x * (1.0 - y * y);
                    }
                }
                Op::Sigmoid(a) => {
                    let da = acc(&mut grads, &self.nodes, *a);
                    for ((d, x), y) in da.iter_mut().zip(&g).zip(&node.value) {
                        *d += x * y * (1.0 - y);
                    }
                }
                Op::Exp(a) => {
                    let da = acc(&mut grads, &self.nodes, *a);
                    for ((d, x), y) in da.iter_mut().zip(&g).zip(&node.value) {
                        *d += x * y;
                    }
                }
                Op::Square(a) => {
                    let av = &self.nodes[a.0].value;
                    let da = acc(&mut grads, &self.nodes, *a);
                    for ((d, x), y) in da.iter_mut().zip(&g).zip(av) {
                        *d += 2.0 * x * y;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let c = self.nodes[p.0].cols;
                        let dp = acc(&mut grads, &self.nodes, *p);
                        for r in 0..m {
                            for j in 0..c {
                                dp[r * c + j] += g[r * n + offset + j];
                            }
                        }
                        offset += c;
                    }
                }
                Op::SliceCols(a, start) => {
                    let an = self.nodes[a.0].cols;
                    let da = acc(&mut grads, &self.nodes, *a);
                    for r in 0..m {
                        for j in 0..n {
                            da[r * an + start + j] += g[r * n + j];
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        let dp = acc(&mut grads, &self.nodes, *p);
                        dp.iter_mut()
                            .zip(&g[offset..offset + len])
                            .for_each(|(d, x)| *d += x);
                        offset += len;
                    }
                }
                Op::SliceRows(a, start) => {
                    let da = acc(&mut grads, &self.nodes, *a);
                    da[start * n..(start + m) * n]
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(d, x)| *d += x);
                }
                Op::LogSoftmax(a) => {
                    let da = acc(&mut grads, &self.nodes, *a);
                    for r in 0..m {
                        let gs: f64 = g[r * n..(r + 1) * n].iter().sum();
                        for j in 0..n {
                            let p = node.value[r * n + j].exp();
                            da[r * n + j] += g[r * n + j] - p * gs;
                        }
                    }
                }
                Op::Gather(a, idx) => {
                    let an = self.nodes[a.0].cols;
                    let da = acc(&mut grads, &self.nodes, *a);
                    for (r, j) in idx.iter().enumerate() {
                        da[r * an + j] += g[r];
                    }
                }
                Op::SumAll(a) => {
                    let g0 = g[0];
                    let da = acc(&mut grads, &self.nodes, *a);
                    da.iter_mut().for_each(|d| *d += g0);
                }
                Op::Conv3x3 {
                    input,
                    weight,
                    bias,
                    geom,
                } => {
                    let hw = geom.height * geom.width;
                    let in_cols = geom.channels_in * hw;
                    let kdim = geom.channels_in * 9;
                    let mut colbuf = vec![0.0; kdim * hw];
                    let mut dcol = vec![0.0; kdim * hw];
                    let mut dw = vec![0.0; geom.channels_out * kdim];
                    let mut db = vec![0.0; geom.channels_out];
                    let mut din = vec![0.0; m * in_cols];
                    let iv = &self.nodes[input.0].value;
                    let wv = &self.nodes[weight.0].value;
                    for b in 0..m {
                        let gb = &g[b * n..(b + 1) * n];
                        for c in 0..geom.channels_out {
                            db[c] += gb[c * hw..(c + 1) * hw].iter().sum::<f64>();
                        }
                        im2col(&iv[b * in_cols..(b + 1) * in_cols], geom, &mut colbuf);
                        gemm(geom.channels_out, hw, kdim, gb, false, &colbuf, true, &mut dw, 1.0);
                        gemm(kdim, geom.channels_out, hw, wv, true, gb, false, &mut dcol, 0.0);
                        col2im(&dcol, geom, &mut din[b * in_cols..(b + 1) * in_cols]);
                    }
                    for (v, d) in [(*input, din), (*weight, dw), (*bias, db)] {
                        let dv = acc(&mut grads, &self.nodes, v);
                        dv.iter_mut().zip(&d).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Lstm {
                    gates,
                    c_prev,
                    hidden,
                    cache,
                } => {
                    let h = *hidden;
                    let cv = &self.nodes[c_prev.0].value;
                    let mut dgates = vec![0.0; m * 4 * h];
                    let mut dcp = vec![0.0; m * h];
                    for r in 0..m {
                        let cr = &cache[r * 5 * h..(r + 1) * 5 * h];
                        for j in 0..h {
                            let (i, f, gg, o, tc) =
                                (cr[j], cr[h + j], cr[2 * h + j], cr[3 * h + j], cr[4 * h + j]);
                            let dh = g[r * 2 * h + j];
                            let dc = g[r * 2 * h + h + j] + dh * o * (1.0 - tc * tc);
                            let d = &mut dgates[r * 4 * h..(r + 1) * 4 * h];
                            d[j] = dc * gg * i * (1.0 - i);
                            d[h + j] = dc * cv[r * h + j] * f * (1.0 - f);
                            d[2 * h + j] = dc * i * (1.0 - gg * gg);
                            d[3 * h + j] = dh * tc * o * (1.0 - o);
                            dcp[r * h + j] = dc * f;
                        }
                    }
                    let dg = acc(&mut grads, &self.nodes, *gates);
                    dg.iter_mut().zip(&dgates).for_each(|(x, y)| *x += y);
                    let dc = acc(&mut grads, &self.nodes, *c_prev);
                    dc.iter_mut().zip(&dcp).for_each(|(x, y)| *x += y);
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Adds the gradients of every parameter registered under `scope` into `params`.
    pub fn accumulate_into(&self, grads: &Gradients, scope: &str, params: &mut ParameterSet) -> Result<()> {
        for ((s, name), v) in &self.params {
            if s != scope {
                continue;
            }
            if let Some(g) = &grads.grads[v.0] {
                params.accumulate_grad(name, g)?;
            }
        }
        Ok(())
    }
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` if `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}
