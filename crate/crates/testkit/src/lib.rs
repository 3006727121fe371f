//! Reference implementations for tests. Nothing here depends on the
//! engine, so agreement with it is meaningful.

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`. The floor keeps elements whose true
/// gradient is essentially zero from being judged on rounding noise.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest elementwise [`rel_err`] and its index.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> (f64, usize) {
    assert_eq!(a.len(), b.len(), "gradient lengths differ");
    a.iter()
        .zip(b)
        .map(|(x, y)| rel_err(*x, *y, floor))
        .enumerate()
        .fold(
            (0.0, 0),
            |best, (i, e)| if e > best.0 { (e, i) } else { best },
        )
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn affine(rows: &[Vec<f64>], x: &[f64], bias: &[f64]) -> Vec<f64> {
    rows.iter()
        .zip(bias)
        .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
        .collect()
}

/// One layer of a textbook LSTM. Gate order is forget, input, candidate,
/// output; each weight matrix is a list of rows.
#[derive(Debug, Clone)]
pub struct RefLayer {
    pub w: [Vec<Vec<f64>>; 4],
    pub u: [Vec<Vec<f64>>; 4],
    pub b: [Vec<f64>; 4],
}

/// Stacked LSTM (no dilation, no shortcuts) followed by a linear read-out.
#[derive(Debug, Clone)]
pub struct StackedLstm {
    pub layers: Vec<RefLayer>,
    pub out_w: Vec<Vec<f64>>,
    pub out_b: Vec<f64>,
}

impl StackedLstm {
    /// Runs from zero state; one read-out per input.
    pub fn run(&self, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut h: Vec<Vec<f64>> = self
            .layers
            .iter()
            .map(|l| vec![0.0; l.b[0].len()])
            .collect();
        let mut c = h.clone();
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in inputs {
            let mut below = x.clone();
            for (l, layer) in self.layers.iter().enumerate() {
                let pre = |g: usize| -> Vec<f64> {
                    let wx = affine(&layer.w[g], &below, &layer.b[g]);
                    let uh = affine(&layer.u[g], &h[l], &vec![0.0; wx.len()]);
                    wx.iter().zip(&uh).map(|(a, b)| a + b).collect()
                };
                let (f, i, g, o) = (pre(0), pre(1), pre(2), pre(3));
                for k in 0..c[l].len() {
                    c[l][k] = sigmoid(f[k]) * c[l][k] + sigmoid(i[k]) * g[k].tanh();
                    h[l][k] = sigmoid(o[k]) * c[l][k].tanh();
                }
                below = h[l].clone();
            }
            outputs.push(affine(&self.out_w, &below, &self.out_b));
        }
        outputs
    }
}
