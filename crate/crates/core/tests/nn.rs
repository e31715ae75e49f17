use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use craftrl::nn::{ConvGeometry, LstmCell, ParameterSet, Tape};

fn randn(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn matmul_matches_nested_loops() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for (m, k, n) in [(3, 4, 5), (1, 7, 1), (6, 2, 3)] {
        let a = randn(&mut r, m * k);
        let b = randn(&mut r, k * n);
        let mut tape = Tape::new();
        let va = tape.input(m, k, a.clone()).unwrap();
        let vb = tape.input(k, n, b.clone()).unwrap();
        let c = tape.matmul(va, vb).unwrap();
        assert_eq!(tape.shape(c), (m, n));
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for t in 0..k {
                    s += a[i * k + t] * b[t * n + j];
                }
                assert!((tape.value(c)[i * n + j] - s).abs() < 1e-12);
            }
        }
    }
}

/// Zero-padded 3×3 convolution, one output pixel at a time.
fn conv_oracle(x: &[f64], w: &[f64], b: &[f64], g: ConvGeometry) -> Vec<f64> {
    let (h, wd) = (g.height as i64, g.width as i64);
    let mut out = vec![0.0; g.channels_out * g.height * g.width];
    for co in 0..g.channels_out {
        for y in 0..h {
            for x0 in 0..wd {
                let mut s = b[co];
                for ci in 0..g.channels_in {
                    for dy in -1..=1i64 {
                        for dx in -1..=1i64 {
                            let (yy, xx) = (y + dy, x0 + dx);
                            if yy < 0 || yy >= h || xx < 0 || xx >= wd {
                                continue;
                            }
                            let wi = ((co * g.channels_in + ci) * 3 + (dy + 1) as usize) * 3 + (dx + 1) as usize;
                            s += w[wi] * x[(ci * g.height + yy as usize) * g.width + xx as usize];
                        }
                    }
                }
                out[(co * g.height + y as usize) * g.width + x0 as usize] = s;
            }
        }
    }
    out
}

#[test]
fn conv_matches_direct_loops() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let geoms = [
        ConvGeometry { channels_in: 1, channels_out: 1, height: 4, width: 4 },
        ConvGeometry { channels_in: 3, channels_out: 2, height: 5, width: 3 },
    ];
    for g in geoms {
        let batch = 2;
        let cols = g.channels_in * g.height * g.width;
        let x = randn(&mut r, batch * cols);
        let w = randn(&mut r, g.channels_out * g.channels_in * 9);
        let b = randn(&mut r, g.channels_out);
        let mut tape = Tape::new();
        let vx = tape.input(batch, cols, x.clone()).unwrap();
        let vw = tape.input(g.channels_out, g.channels_in * 9, w.clone()).unwrap();
        let vb = tape.input(1, g.channels_out, b.clone()).unwrap();
        let y = tape.conv3x3(vx, vw, vb, g).unwrap();
        let out_cols = g.channels_out * g.height * g.width;
        for s in 0..batch {
            let want = conv_oracle(&x[s * cols..(s + 1) * cols], &w, &b, g);
            for (got, want) in tape.value(y)[s * out_cols..(s + 1) * out_cols].iter().zip(want) {
                assert!((got - want).abs() < 1e-10, "{got} vs {want}");
            }
        }
    }
}

#[test]
fn conv_with_centre_tap_copies_the_input() {
    let g = ConvGeometry { channels_in: 1, channels_out: 1, height: 4, width: 4 };
    let x: Vec<f64> = (0..16).map(f64::from).collect();
    let mut w = vec![0.0; 9];
    w[4] = 1.0;
    let mut tape = Tape::new();
    let vx = tape.input(1, 16, x.clone()).unwrap();
    let vw = tape.input(1, 9, w).unwrap();
    let vb = tape.input(1, 1, vec![0.0]).unwrap();
    let y = tape.conv3x3(vx, vw, vb, g).unwrap();
    assert_eq!(tape.value(y), &x[..]);
}

#[test]
fn lstm_step_matches_gate_by_gate_scalars() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let (inputs, hidden, rows) = (3, 2, 2);
    let cell = LstmCell::new("cell", inputs, hidden);
    let mut params = ParameterSet::new();
    cell.init(&mut params, &mut r).unwrap();
    for (_, p) in params.iter_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v += r.gen_range(-0.5..0.5));
    }
    let x = randn(&mut r, rows * inputs);
    let h0 = randn(&mut r, rows * hidden);
    let c0 = randn(&mut r, rows * hidden);

    let mut tape = Tape::new();
    let vx = tape.input(rows, inputs, x.clone()).unwrap();
    let vh = tape.input(rows, hidden, h0.clone()).unwrap();
    let vc = tape.input(rows, hidden, c0.clone()).unwrap();
    let (h1, c1) = cell.step(&mut tape, "", &params, vx, vh, vc).unwrap();

    let wx = params.value("cell.wx").unwrap().data();
    let wh = params.value("cell.wh").unwrap().data();
    let b = params.value("cell.b").unwrap().data();
    let four = 4 * hidden;
    for row in 0..rows {
        for j in 0..hidden {
            let pre = |gate: usize| {
                let col = gate * hidden + j;
                let mut s = b[col];
                for k in 0..inputs {
                    s += x[row * inputs + k] * wx[k * four + col];
                }
                for k in 0..hidden {
                    s += h0[row * hidden + k] * wh[k * four + col];
                }
                s
            };
            let i = sigmoid(pre(0));
            let f = sigmoid(pre(1));
            let g = pre(2).tanh();
            let o = sigmoid(pre(3));
            let c = f * c0[row * hidden + j] + i * g;
            let h = o * c.tanh();
            assert!((tape.value(c1)[row * hidden + j] - c).abs() < 1e-12);
            assert!((tape.value(h1)[row * hidden + j] - h).abs() < 1e-12);
        }
    }
}
