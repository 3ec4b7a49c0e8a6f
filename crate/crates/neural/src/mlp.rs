use std::ops::Deref;

use ndarray::{s, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, NeuralError, Result};

/// Fully connected network: tanh on hidden layers, identity on the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    params: Vec<f64>,
}

/// Seeds returned by a loss evaluator: the loss value and its derivatives
/// with respect to the outputs `(n, out)` and the output tangents
/// `(K, n, out)`.
#[derive(Debug, Clone)]
pub struct LossSeeds {
    pub loss: f64,
    pub d_output: Array2<f64>,
    pub d_tangent: Array3<f64>,
}

struct Tape {
    /// Layer inputs; `h[0]` is the network input.
    h: Vec<Array2<f64>>,
    /// Input tangents per layer, `K` blocks of `n` rows stacked.
    t: Vec<Array2<f64>>,
    /// Pre-activation tangents of hidden layers.
    ta: Vec<Array2<f64>>,
    /// Activations of hidden layers.
    act: Vec<Array2<f64>>,
    y: Array2<f64>,
    ydot: Array2<f64>,
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(NeuralError::Widths(widths.to_vec()));
    }
    Ok(())
}

impl Mlp {
    pub fn param_count(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        validate_widths(widths)?;
        Ok(Self {
            widths: widths.to_vec(),
            params: vec![0.0; Self::param_count(widths)],
        })
    }

    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn init(seed: u64, widths: &[usize]) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut off = 0;
        for w in widths.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for p in &mut net.params[off..off + w[0] * w[1]] {
                *p = rng.random_range(-bound..bound);
            }
            off += w[0] * w[1] + w[1];
        }
        Ok(net)
    }

    pub fn from_params(widths: &[usize], params: Vec<f64>) -> Result<Self> {
        validate_widths(widths)?;
        check_len("parameter count", Self::param_count(widths), params.len())?;
        Ok(Self {
            widths: widths.to_vec(),
            params,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offset(&self, layer: usize) -> usize {
        Self::param_count(&self.widths[..=layer])
    }

    /// Weight matrix of a layer, shape `(out, in)`.
    pub fn weight(&self, layer: usize) -> ArrayView2<'_, f64> {
        let (i, o) = (self.widths[layer], self.widths[layer + 1]);
        let off = self.offset(layer);
        ArrayView2::from_shape((o, i), &self.params[off..off + o * i]).unwrap()
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let (i, o) = (self.widths[layer], self.widths[layer + 1]);
        let off = self.offset(layer) + o * i;
        ArrayView1::from(&self.params[off..off + o])
    }

    /// Outputs for a batch of inputs `(n, d)`.
    pub fn forward_batch(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len("input width", self.input_dim(), z.ncols())?;
        let mut h = z.to_owned();
        for l in 0..self.num_layers() {
            let mut a = h.dot(&self.weight(l).t()) + self.bias(l);
            if l + 1 < self.num_layers() {
                a.mapv_inplace(f64::tanh);
            }
            h = a;
        }
        Ok(h)
    }

    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        let z = ArrayView2::from_shape((1, z.len()), z).unwrap();
        Ok(self.forward_batch(z)?.into_raw_vec_and_offset().0)
    }

    fn record(&self, z: ArrayView2<f64>, tangents: ArrayView3<f64>) -> Result<Tape> {
        check_len("input width", self.input_dim(), z.ncols())?;
        check_len("tangent width", self.input_dim(), tangents.len_of(Axis(2)))?;
        check_len("tangent batch", z.nrows(), tangents.len_of(Axis(1)))?;
        let (k, n) = (tangents.len_of(Axis(0)), z.nrows());
        let t0 = tangents
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((k * n, self.input_dim()))
            .unwrap();
        let mut tape = Tape {
            h: vec![z.to_owned()],
            t: vec![t0],
            ta: Vec::new(),
            act: Vec::new(),
            y: Array2::zeros((0, 0)),
            ydot: Array2::zeros((0, 0)),
        };
        let last = self.num_layers() - 1;
        for l in 0..=last {
            let w = self.weight(l);
            let a = tape.h[l].dot(&w.t()) + self.bias(l);
            let ta = tape.t[l].dot(&w.t());
            if l == last {
                tape.y = a;
                tape.ydot = ta;
                break;
            }
            let h = a.mapv(f64::tanh);
            let mut t = ta.clone();
            for b in 0..k {
                let mut blk = t.slice_mut(s![b * n..(b + 1) * n, ..]);
                blk.zip_mut_with(&h, |tv, hv| *tv *= 1.0 - hv * hv);
            }
            tape.h.push(h.clone());
            tape.t.push(t);
            tape.ta.push(ta);
            tape.act.push(h);
        }
        Ok(tape)
    }

    /// Outputs and directional derivatives along `K` input tangents.
    /// `tangents` has shape `(K, n, d)`; the result tangents `(K, n, out)`.
    pub fn jvp_batch(
        &self,
        z: ArrayView2<f64>,
        tangents: ArrayView3<f64>,
    ) -> Result<(Array2<f64>, Array3<f64>)> {
        let (k, n) = (tangents.len_of(Axis(0)), z.nrows());
        let tape = self.record(z, tangents)?;
        let ydot = tape
            .ydot
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((k, n, self.output_dim()))
            .unwrap();
        Ok((tape.y, ydot))
    }

    /// Input Jacobians for a batch, shape `(n, out, d)`.
    pub fn input_jacobian_batch(&self, z: ArrayView2<f64>) -> Result<Array3<f64>> {
        let (n, d) = (z.nrows(), self.input_dim());
        let mut tangents = Array3::zeros((d, n, d));
        for j in 0..d {
            tangents.slice_mut(s![j, .., j]).fill(1.0);
        }
        let (_, ydot) = self.jvp_batch(z, tangents.view())?;
        Ok(ydot.permuted_axes([1, 2, 0]).as_standard_layout().into_owned())
    }

    /// Outputs and input Jacobians `(n, out, d)` by one reverse sweep per
    /// output; cheaper than [`Mlp::input_jacobian_batch`] for wide inputs.
    pub fn output_and_jacobian(&self, z: ArrayView2<f64>) -> Result<(Array2<f64>, Array3<f64>)> {
        check_len("input width", self.input_dim(), z.ncols())?;
        let layers = self.num_layers();
        let mut hs = vec![z.to_owned()];
        for l in 0..layers {
            let mut a = hs[l].dot(&self.weight(l).t()) + self.bias(l);
            if l + 1 < layers {
                a.mapv_inplace(f64::tanh);
            }
            hs.push(a);
        }
        let y = hs.pop().unwrap();
        let (n, out, d) = (z.nrows(), self.output_dim(), self.input_dim());
        let mut jac = Array3::zeros((n, out, d));
        for o in 0..out {
            // d y_o / d h_{L-1} is the o-th head row for every sample
            let head = self.weight(layers - 1);
            let mut delta = Array2::from_shape_fn((n, head.ncols()), |(_, c)| head[(o, c)]);
            for l in (0..layers - 1).rev() {
                delta.zip_mut_with(&hs[l + 1], |dv, hv| *dv *= 1.0 - hv * hv);
                delta = delta.dot(&self.weight(l));
            }
            jac.slice_mut(s![.., o, ..]).assign(&delta);
        }
        Ok((y, jac))
    }

    /// Jacobian `(out, d)` of the outputs at one input.
    pub fn input_gradient(&self, z: &[f64]) -> Result<Array2<f64>> {
        let zv = ArrayView2::from_shape((1, z.len()), z).unwrap();
        Ok(self.input_jacobian_batch(zv)?.index_axis_move(Axis(0), 0))
    }

    /// Gradient of a scalar loss of the outputs and output tangents with
    /// respect to every parameter, by reverse mode through the tangent
    /// computation.
    pub fn loss_gradient<F>(
        &self,
        z: ArrayView2<f64>,
        tangents: ArrayView3<f64>,
        eval: F,
    ) -> Result<(f64, Vec<f64>)>
    where
        F: FnOnce(ArrayView2<f64>, ArrayView3<f64>) -> Result<LossSeeds>,
    {
        let (k, n, out) = (tangents.len_of(Axis(0)), z.nrows(), self.output_dim());
        let tape = self.record(z, tangents)?;
        let ydot = tape.ydot.as_standard_layout();
        let ydot = ydot.view().into_shape_with_order((k, n, out)).unwrap();
        let seeds = eval(tape.y.view(), ydot)?;
        if !seeds.loss.is_finite() {
            return Err(NeuralError::NonFinite(format!(
                "loss evaluated to {} on a batch of {n}",
                seeds.loss
            )));
        }
        if seeds.d_output.dim() != (n, out) || seeds.d_tangent.dim() != (k, n, out) {
            return Err(NeuralError::Dimension {
                what: "loss seed shape",
                expected: n * out * (k + 1),
                got: seeds.d_output.len() + seeds.d_tangent.len(),
            });
        }
        let mut grad = vec![0.0; self.num_params()];
        let mut dh = seeds.d_output;
        let mut dt = seeds
            .d_tangent
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((k * n, out))
            .unwrap();
        for l in (0..self.num_layers()).rev() {
            let (da, dta) = if l + 1 == self.num_layers() {
                (dh, dt)
            } else {
                let h = &tape.act[l];
                let ta = &tape.ta[l];
                let sd = h.mapv(|v| 1.0 - v * v);
                let mut dta = dt;
                let mut ds = Array2::<f64>::zeros(sd.dim());
                for b in 0..k {
                    let rows = s![b * n..(b + 1) * n, ..];
                    // d(s * ta)/ds accumulates over all tangent blocks
                    ds.zip_mut_with(&(&dta.slice(rows) * &ta.slice(rows)), |a, v| *a += v);
                    dta.slice_mut(rows).zip_mut_with(&sd, |a, sv| *a *= sv);
                }
                let mut da = dh;
                ndarray::Zip::from(&mut da)
                    .and(&sd)
                    .and(&ds)
                    .and(h)
                    .for_each(|a, &sv, &dsv, &hv| *a = *a * sv - 2.0 * dsv * hv * sv);
                (da, dta)
            };
            let (i, o) = (self.widths[l], self.widths[l + 1]);
            let off = self.offset(l);
            let mut dw = da.t().dot(&tape.h[l]);
            if k > 0 {
                dw += &dta.t().dot(&tape.t[l]);
            }
            let db = da.sum_axis(Axis(0));
            for (g, v) in grad[off..off + o * i].iter_mut().zip(dw.iter()) {
                *g = *v;
            }
            for (g, v) in grad[off + o * i..off + o * i + o].iter_mut().zip(db.iter()) {
                *g = *v;
            }
            if l > 0 {
                let w = self.weight(l);
                dh = da.dot(&w);
                dt = dta.dot(&w);
            } else {
                break;
            }
        }
        Ok((seeds.loss, grad))
    }
}

/// Two-output network approximating both players' values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet(Mlp);

impl ValueNet {
    pub const OUTPUTS: usize = 2;

    pub fn init(seed: u64, widths: &[usize]) -> Result<Self> {
        Self::from_mlp(Mlp::init(seed, widths)?)
    }

    pub fn from_mlp(mlp: Mlp) -> Result<Self> {
        check_len("value net outputs", Self::OUTPUTS, mlp.output_dim())?;
        Ok(Self(mlp))
    }

    pub fn mlp(&self) -> &Mlp {
        &self.0
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.0
    }

    pub fn into_mlp(self) -> Mlp {
        self.0
    }
}

impl Deref for ValueNet {
    type Target = Mlp;

    fn deref(&self) -> &Mlp {
        &self.0
    }
}
