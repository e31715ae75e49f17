use rand::Rng;
use rand_distr::StandardNormal;

use super::params::ParameterSet;
use super::tape::{ConvGeometry, Tape, Var};
use super::tensor::RealArray;
use crate::error::{Error, Result};

fn uniform_fan_in(rng: &mut impl Rng, fan_in: usize, n: usize, gain: f64) -> Vec<f64> {
    let limit = gain * (3.0 / fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..=limit)).collect()
}

/// Square orthogonal matrix via Gram-Schmidt on a Gaussian draw.
fn orthogonal(rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for r in &rows {
            let d: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            rows.push(v);
        }
    }
    rows
}

/// Fully connected layer `y = x·W + b` with `W: inputs × outputs`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(name: impl Into<String>, inputs: usize, outputs: usize) -> Self {
        Self {
            name: name.into(),
            inputs,
            outputs,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut impl Rng, gain: f64) -> Result<()> {
        let w = uniform_fan_in(rng, self.inputs, self.inputs * self.outputs, gain);
        params.insert(self.weight_name(), RealArray::new(vec![self.inputs, self.outputs], w)?)?;
        params.insert(self.bias_name(), RealArray::zeros(&[self.outputs]))?;
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, scope: &str, params: &ParameterSet, x: Var) -> Result<Var> {
        let (_, cols) = tape.shape(x);
        if cols != self.inputs {
            return Err(Error::config(format!(
                "{}: expected {} input features, got {cols}",
                self.name, self.inputs
            )));
        }
        let w = tape.param(scope, params, &self.weight_name())?;
        let b = tape.param(scope, params, &self.bias_name())?;
        let y = tape.matmul(x, w)?;
        tape.add_row(y, b)
    }
}

/// 3×3 same-padding convolution.
#[derive(Debug, Clone)]
pub struct Conv3x3 {
    pub name: String,
    pub geom: ConvGeometry,
}

impl Conv3x3 {
    pub fn new(name: impl Into<String>, geom: ConvGeometry) -> Self {
        Self {
            name: name.into(),
            geom,
        }
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut impl Rng, gain: f64) -> Result<()> {
        let fan_in = self.geom.channels_in * 9;
        let w = uniform_fan_in(rng, fan_in, self.geom.channels_out * fan_in, gain);
        params.insert(
            format!("{}.w", self.name),
            RealArray::new(vec![self.geom.channels_out, self.geom.channels_in, 3, 3], w)?,
        )?;
        params.insert(format!("{}.b", self.name), RealArray::zeros(&[self.geom.channels_out]))?;
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, scope: &str, params: &ParameterSet, x: Var) -> Result<Var> {
        let w = tape.param(scope, params, &format!("{}.w", self.name))?;
        let b = tape.param(scope, params, &format!("{}.b", self.name))?;
        tape.conv3x3(x, w, b, self.geom)
    }
}

/// `x + F(x)` where `F` is a stack of (ReLU, 3×3 conv) pairs that keeps the channel count.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub name: String,
    pub convs: Vec<Conv3x3>,
}

impl ResidualBlock {
    pub fn new(name: impl Into<String>, channels: usize, height: usize, width: usize, depth: usize) -> Self {
        let name = name.into();
        let geom = ConvGeometry {
            channels_in: channels,
            channels_out: channels,
            height,
            width,
        };
        let convs = (0..depth)
            .map(|i| Conv3x3::new(format!("{name}.conv{i}"), geom))
            .collect();
        Self { name, convs }
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut impl Rng) -> Result<()> {
        for c in &self.convs {
            c.init(params, rng, 1.0)?;
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, scope: &str, params: &ParameterSet, x: Var) -> Result<Var> {
        let mut h = x;
        for c in &self.convs {
            let a = tape.relu(h);
            h = c.forward(tape, scope, params, a)?;
        }
        tape.add(x, h)
    }
}

/// Standard LSTM cell with gate order (input, forget, cell, output).
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub name: String,
    pub inputs: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(name: impl Into<String>, inputs: usize, hidden: usize) -> Self {
        Self {
            name: name.into(),
            inputs,
            hidden,
        }
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut impl Rng) -> Result<()> {
        let h = self.hidden;
        let wx = uniform_fan_in(rng, self.inputs, self.inputs * 4 * h, 1.0);
        params.insert(format!("{}.wx", self.name), RealArray::new(vec![self.inputs, 4 * h], wx)?)?;
        // one orthogonal block per gate
        let mut wh = vec![0.0; h * 4 * h];
        for gate in 0..4 {
            let q = orthogonal(rng, h);
            for (r, row) in q.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    wh[r * 4 * h + gate * h + c] = *v;
                }
            }
        }
        params.insert(format!("{}.wh", self.name), RealArray::new(vec![h, 4 * h], wh)?)?;
        let mut b = vec![0.0; 4 * h];
        b[h..2 * h].iter_mut().for_each(|x| *x = 1.0);
        params.insert(format!("{}.b", self.name), RealArray::new(vec![4 * h], b)?)?;
        Ok(())
    }

    /// One recurrence step; returns `(h', c')`.
    pub fn step(
        &self,
        tape: &mut Tape,
        scope: &str,
        params: &ParameterSet,
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var)> {
        let (rows, cols) = tape.shape(x);
        if cols != self.inputs {
            return Err(Error::config(format!(
                "{}: expected {} input features, got {cols}",
                self.name, self.inputs
            )));
        }
        if tape.shape(h) != (rows, self.hidden) || tape.shape(c) != (rows, self.hidden) {
            return Err(Error::config(format!(
                "{}: recurrent state must be {rows}x{}",
                self.name, self.hidden
            )));
        }
        let wx = tape.param(scope, params, &format!("{}.wx", self.name))?;
        let wh = tape.param(scope, params, &format!("{}.wh", self.name))?;
        let b = tape.param(scope, params, &format!("{}.b", self.name))?;
        let gx = tape.matmul(x, wx)?;
        let gh = tape.matmul(h, wh)?;
        let g = tape.add(gx, gh)?;
        let g = tape.add_row(g, b)?;
        let hc = tape.lstm_cell(g, c)?;
        let h2 = tape.slice_cols(hc, 0, self.hidden)?;
        let c2 = tape.slice_cols(hc, self.hidden, self.hidden)?;
        Ok((h2, c2))
    }

    /// Input projection for a whole time-major sequence at once (`x·Wx`).
    pub fn project_inputs(&self, tape: &mut Tape, scope: &str, params: &ParameterSet, x: Var) -> Result<Var> {
        let wx = tape.param(scope, params, &format!("{}.wx", self.name))?;
        tape.matmul(x, wx)
    }

    /// Recurrence step given a precomputed input projection for this step.
    pub fn step_projected(
        &self,
        tape: &mut Tape,
        scope: &str,
        params: &ParameterSet,
        gx: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var)> {
        let wh = tape.param(scope, params, &format!("{}.wh", self.name))?;
        let b = tape.param(scope, params, &format!("{}.b", self.name))?;
        let gh = tape.matmul(h, wh)?;
        let g = tape.add(gx, gh)?;
        let g = tape.add_row(g, b)?;
        let hc = tape.lstm_cell(g, c)?;
        let h2 = tape.slice_cols(hc, 0, self.hidden)?;
        let c2 = tape.slice_cols(hc, self.hidden, self.hidden)?;
        Ok((h2, c2))
    }
}

/// Evaluates a dense layer outside any tape: `input·W + b`.
pub fn linear_forward(input: &RealArray, weights: &RealArray, bias: &RealArray) -> Result<RealArray> {
    let (m, k) = (input.rows(), input.cols());
    if weights.shape().len() != 2 || weights.shape()[0] != k {
        return Err(Error::config(format!(
            "linear: weights {:?} do not accept {k} inputs",
            weights.shape()
        )));
    }
    let n = weights.shape()[1];
    if bias.len() != n {
        return Err(Error::config("linear: bias length mismatch"));
    }
    let mut tape = Tape::new();
    let x = tape.input(m, k, input.data().to_vec())?;
    let w = tape.input(k, n, weights.data().to_vec())?;
    let b = tape.input(1, n, bias.data().to_vec())?;
    let y = tape.matmul(x, w)?;
    let y = tape.add_row(y, b)?;
    RealArray::matrix(m, n, tape.value(y).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weights_pass_input_through() {
        let x = RealArray::matrix(2, 3, vec![1.0, 2.0, 3.0, -4.0, 5.0, 0.5]).unwrap();
        let mut w = RealArray::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let y = linear_forward(&x, &w, &RealArray::zeros(&[3])).unwrap();
        assert_eq!(y.data(), x.data());
        let zero = linear_forward(&RealArray::zeros(&[2, 3]), &w, &RealArray::zeros(&[3])).unwrap();
        assert!(zero.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_rejects_bad_shapes() {
        let x = RealArray::zeros(&[2, 3]);
        let w = RealArray::zeros(&[4, 3]);
        assert!(matches!(
            linear_forward(&x, &w, &RealArray::zeros(&[3])),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = orthogonal(&mut rng, 6);
        for i in 0..6 {
            for j in 0..6 {
                let d: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn residual_block_with_zero_weights_is_identity() {
        let block = ResidualBlock::new("rb", 2, 3, 3, 2);
        let mut ps = ParameterSet::new();
        block.init(&mut ps, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for (_, p) in ps.iter_mut() {
            p.value.fill(0.0);
        }
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..36).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = tape.input(2, 18, data.clone()).unwrap();
        let y = block.forward(&mut tape, "s", &ps, x).unwrap();
        assert_eq!(tape.value(y), &data[..]);
    }

    #[test]
    fn residual_block_rejects_channel_mismatch() {
        let block = ResidualBlock::new("rb", 2, 3, 3, 1);
        let mut ps = ParameterSet::new();
        block.init(&mut ps, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut tape = Tape::new();
        let x = tape.zeros(1, 27);
        assert!(matches!(block.forward(&mut tape, "s", &ps, x), Err(Error::Config(_))));
    }

    #[test]
    fn lstm_zero_weights_zero_state_outputs_zero() {
        let cell = LstmCell::new("lstm", 3, 4);
        let mut ps = ParameterSet::new();
        cell.init(&mut ps, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for (_, p) in ps.iter_mut() {
            p.value.fill(0.0);
        }
        let mut tape = Tape::new();
        let x = tape.input(2, 3, vec![1.0, -1.0, 2.0, 0.5, 0.1, -3.0]).unwrap();
        let h = tape.zeros(2, 4);
        let c = tape.zeros(2, 4);
        let (h2, c2) = cell.step(&mut tape, "s", &ps, x, h, c).unwrap();
        assert!(tape.value(h2).iter().all(|v| *v == 0.0));
        assert!(tape.value(c2).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lstm_forget_bias_starts_at_one() {
        let cell = LstmCell::new("lstm", 2, 3);
        let mut ps = ParameterSet::new();
        cell.init(&mut ps, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = ps.value("lstm.b").unwrap().data();
        assert_eq!(&b[3..6], &[1.0, 1.0, 1.0]);
        assert!(b[..3].iter().chain(&b[6..]).all(|v| *v == 0.0));
    }
}
