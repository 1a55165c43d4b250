//! Bidirectional LSTM encoder with exact analytic backpropagation.
//!
//! Standard LSTM cells (forget gate, no peepholes, tanh cell and output
//! nonlinearities). Each layer runs one pass per direction and concatenates
//! the two hidden sequences, so the hidden width is twice the per-direction
//! cell count. Forward passes cache every intermediate needed by
//! [`backward`], which returns exact gradients for all parameters and for
//! the input sequence.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{dot, Mat};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub layers: usize,
    pub cells_per_direction: usize,
}

impl EncoderConfig {
    pub fn new(input_dim: usize, layers: usize, cells_per_direction: usize) -> Self {
        assert!(input_dim > 0 && layers > 0 && cells_per_direction > 0);
        EncoderConfig {
            input_dim,
            layers,
            cells_per_direction,
        }
    }

    /// Output width: forward and backward halves concatenated.
    pub fn hidden_dim(&self) -> usize {
        2 * self.cells_per_direction
    }

    fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.hidden_dim()
        }
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        // Desk-scale defaults; production-scale models simply use larger
        // values (e.g. 5 layers of 320 cells on 40-dimensional features).
        EncoderConfig::new(40, 2, 32)
    }
}

/// Parameters of one direction of one layer. Gate rows are stacked in the
/// order input, forget, cell, output: rows `[g*c, (g+1)*c)` belong to gate
/// `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirParams<S> {
    pub w: Mat<S>,
    pub u: Mat<S>,
    pub b: Vec<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<S> {
    pub fwd: DirParams<S>,
    pub bwd: DirParams<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<S> {
    pub config: EncoderConfig,
    pub layers: Vec<LayerParams<S>>,
}

impl<S: Scalar> EncoderParams<S> {
    pub fn zeros(config: EncoderConfig) -> Self {
        let c = config.cells_per_direction;
        let layers = (0..config.layers)
            .map(|l| {
                let input = config.layer_input_dim(l);
                let dir = || DirParams {
                    w: Mat::zeros(4 * c, input),
                    u: Mat::zeros(4 * c, c),
                    b: vec![S::zero(); 4 * c],
                };
                LayerParams { fwd: dir(), bwd: dir() }
            })
            .collect();
        EncoderParams { config, layers }
    }

    /// Seeded initialization: weights uniform in `[-s, s]` with
    /// `s = 1/sqrt(fan_in)`, biases zero except the forget gate at 1.0.
    pub fn init(config: EncoderConfig, rng: &mut impl Rng) -> Self {
        let c = config.cells_per_direction;
        let mut params = Self::zeros(config);
        for (l, layer) in params.layers.iter_mut().enumerate() {
            let input = config.layer_input_dim(l);
            for dir in [&mut layer.fwd, &mut layer.bwd] {
                let sw = 1.0 / (input as f64).sqrt();
                for v in dir.w.data_mut() {
                    *v = S::of(rng.gen_range(-sw..=sw));
                }
                let su = 1.0 / (c as f64).sqrt();
                for v in dir.u.data_mut() {
                    *v = S::of(rng.gen_range(-su..=su));
                }
                for v in &mut dir.b[c..2 * c] {
                    *v = S::one();
                }
            }
        }
        params
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| [&l.fwd, &l.bwd])
            .map(|d| d.w.data().len() + d.u.data().len() + d.b.len())
            .sum()
    }

    /// Canonical flat order: layers bottom-up, forward then backward, and
    /// within a direction `w` row-major, `u` row-major, `b`. Checkpoints and
    /// the SGD update both rely on this order.
    pub fn flatten_into(&self, out: &mut Vec<S>) {
        for layer in &self.layers {
            for dir in [&layer.fwd, &layer.bwd] {
                out.extend_from_slice(dir.w.data());
                out.extend_from_slice(dir.u.data());
                out.extend_from_slice(&dir.b);
            }
        }
    }

    pub fn flatten(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.param_count());
        self.flatten_into(&mut out);
        out
    }

    /// Inverse of [`flatten`]. Panics if the slice length is wrong.
    pub fn assign_flat(&mut self, flat: &[S]) {
        let mut pos = 0;
        for layer in &mut self.layers {
            for dir in [&mut layer.fwd, &mut layer.bwd] {
                for dst in dir.w.data_mut() {
                    *dst = flat[pos];
                    pos += 1;
                }
                for dst in dir.u.data_mut() {
                    *dst = flat[pos];
                    pos += 1;
                }
                for dst in &mut dir.b {
                    *dst = flat[pos];
                    pos += 1;
                }
            }
        }
        assert_eq!(pos, flat.len(), "flat parameter length mismatch");
    }
}

/// Per-direction forward cache: everything indexed by absolute time.
#[derive(Clone, Debug)]
struct DirCache<S> {
    gate_i: Mat<S>,
    gate_f: Mat<S>,
    gate_g: Mat<S>,
    gate_o: Mat<S>,
    cell: Mat<S>,
    cell_tanh: Mat<S>,
    hidden: Mat<S>,
}

#[derive(Clone, Debug)]
struct LayerCache<S> {
    input: Mat<S>,
    fwd: DirCache<S>,
    bwd: DirCache<S>,
}

/// The encoded sequence plus the intermediates backprop needs. Holding the
/// cache inside the output makes a "missing cache" state unrepresentable.
#[derive(Clone, Debug)]
pub struct HiddenSequence<S> {
    values: Mat<S>,
    layers: Vec<LayerCache<S>>,
}

impl<S: Scalar> HiddenSequence<S> {
    /// `T x hidden_dim` matrix of hidden states.
    pub fn values(&self) -> &Mat<S> {
        &self.values
    }

    pub fn frames(&self) -> usize {
        self.values.rows()
    }
}

fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

enum Direction {
    Forward,
    Backward,
}

impl Direction {
    /// Absolute time of processing step `s` out of `frames`.
    fn time(&self, step: usize, frames: usize) -> usize {
        match self {
            Direction::Forward => step,
            Direction::Backward => frames - 1 - step,
        }
    }
}

fn run_direction<S: Scalar>(params: &DirParams<S>, input: &Mat<S>, dir: Direction) -> DirCache<S> {
    let frames = input.rows();
    let c = params.u.cols();
    let mut cache = DirCache {
        gate_i: Mat::zeros(frames, c),
        gate_f: Mat::zeros(frames, c),
        gate_g: Mat::zeros(frames, c),
        gate_o: Mat::zeros(frames, c),
        cell: Mat::zeros(frames, c),
        cell_tanh: Mat::zeros(frames, c),
        hidden: Mat::zeros(frames, c),
    };
    let mut h_prev = vec![S::zero(); c];
    let mut c_prev = vec![S::zero(); c];
    for step in 0..frames {
        let t = dir.time(step, frames);
        let x = input.row(t);
        for k in 0..c {
            let pre = |gate: usize| {
                let row = gate * c + k;
                dot(params.w.row(row), x) + dot(params.u.row(row), &h_prev) + params.b[row]
            };
            let i = sigmoid(pre(0));
            let f = sigmoid(pre(1));
            let g = pre(2).tanh();
            let o = sigmoid(pre(3));
            let cell = f * c_prev[k] + i * g;
            let tc = cell.tanh();
            cache.gate_i[(t, k)] = i;
            cache.gate_f[(t, k)] = f;
            cache.gate_g[(t, k)] = g;
            cache.gate_o[(t, k)] = o;
            cache.cell[(t, k)] = cell;
            cache.cell_tanh[(t, k)] = tc;
            cache.hidden[(t, k)] = o * tc;
        }
        h_prev.copy_from_slice(cache.hidden.row(t));
        c_prev.copy_from_slice(cache.cell.row(t));
    }
    cache
}

/// Encode a `T x input_dim` feature matrix into `T x hidden_dim` hidden
/// states. Every output coordinate lies in `(-1, 1)`.
pub fn forward<S: Scalar>(params: &EncoderParams<S>, x: &Mat<S>) -> Result<HiddenSequence<S>> {
    let config = &params.config;
    if x.rows() == 0 {
        return Err(Error::shape("encoder input must have at least one frame"));
    }
    if x.cols() != config.input_dim {
        return Err(Error::shape(format!(
            "encoder expects {} input dims, got {}",
            config.input_dim,
            x.cols()
        )));
    }
    let frames = x.rows();
    let c = config.cells_per_direction;
    let mut layers = Vec::with_capacity(config.layers);
    let mut input = x.clone();
    for layer in &params.layers {
        let fwd = run_direction(&layer.fwd, &input, Direction::Forward);
        let bwd = run_direction(&layer.bwd, &input, Direction::Backward);
        let mut out = Mat::zeros(frames, 2 * c);
        for t in 0..frames {
            out.row_mut(t)[..c].copy_from_slice(fwd.hidden.row(t));
            out.row_mut(t)[c..].copy_from_slice(bwd.hidden.row(t));
        }
        layers.push(LayerCache { input, fwd, bwd });
        input = out;
    }
    Ok(HiddenSequence {
        values: input,
        layers,
    })
}

fn backward_direction<S: Scalar>(
    params: &DirParams<S>,
    grads: &mut DirParams<S>,
    cache: &DirCache<S>,
    input: &Mat<S>,
    grad_input: &mut Mat<S>,
    grad_hidden: impl Fn(usize, usize) -> S,
    dir: Direction,
) {
    let frames = input.rows();
    let c = params.u.cols();
    let mut dh_carry = vec![S::zero(); c];
    let mut dc_carry = vec![S::zero(); c];
    let mut da = vec![S::zero(); 4 * c];
    let zeros = vec![S::zero(); c];
    // Reverse of the processing order.
    for step in (0..frames).rev() {
        let t = dir.time(step, frames);
        let prev = if step > 0 {
            Some(dir.time(step - 1, frames))
        } else {
            None
        };
        let h_prev = prev.map_or(zeros.as_slice(), |p| cache.hidden.row(p));
        let c_prev = prev.map_or(zeros.as_slice(), |p| cache.cell.row(p));
        for k in 0..c {
            let i = cache.gate_i[(t, k)];
            let f = cache.gate_f[(t, k)];
            let g = cache.gate_g[(t, k)];
            let o = cache.gate_o[(t, k)];
            let tc = cache.cell_tanh[(t, k)];
            let dh = grad_hidden(t, k) + dh_carry[k];
            let dc = dh * o * (S::one() - tc * tc) + dc_carry[k];
            let di = dc * g;
            let df = dc * c_prev[k];
            let dg = dc * i;
            let do_ = dh * tc;
            da[k] = di * i * (S::one() - i);
            da[c + k] = df * f * (S::one() - f);
            da[2 * c + k] = dg * (S::one() - g * g);
            da[3 * c + k] = do_ * o * (S::one() - o);
            dc_carry[k] = dc * f;
        }
        let x = input.row(t);
        for j in &mut dh_carry {
            *j = S::zero();
        }
        for (row, &a) in da.iter().enumerate() {
            if a == S::zero() {
                continue;
            }
            let gw = grads.w.row_mut(row);
            for (dst, &xv) in gw.iter_mut().zip(x) {
                *dst += a * xv;
            }
            let gu = grads.u.row_mut(row);
            for (dst, &hv) in gu.iter_mut().zip(h_prev) {
                *dst += a * hv;
            }
            grads.b[row] += a;
            let wrow = params.w.row(row);
            let gi = grad_input.row_mut(t);
            for (dst, &wv) in gi.iter_mut().zip(wrow) {
                *dst += a * wv;
            }
            let urow = params.u.row(row);
            for (dst, &uv) in dh_carry.iter_mut().zip(urow) {
                *dst += a * uv;
            }
        }
    }
}

/// Exact gradients of `sum_t <grad_h[t], h[t]>` with respect to every
/// parameter and to the input. `seq` must come from [`forward`] on the same
/// parameters and input.
pub fn backward<S: Scalar>(
    params: &EncoderParams<S>,
    seq: &HiddenSequence<S>,
    grad_h: &Mat<S>,
) -> Result<(EncoderParams<S>, Mat<S>)> {
    let config = &params.config;
    let frames = seq.values.rows();
    let c = config.cells_per_direction;
    if grad_h.rows() != frames || grad_h.cols() != config.hidden_dim() {
        return Err(Error::shape(format!(
            "grad_h must be {}x{}, got {}x{}",
            frames,
            config.hidden_dim(),
            grad_h.rows(),
            grad_h.cols()
        )));
    }
    if seq.layers.len() != params.layers.len() {
        return Err(Error::shape("cache does not match encoder depth"));
    }

    let mut grads = EncoderParams::zeros(*config);
    let mut grad_top = grad_h.clone();
    for (layer, (lp, gp)) in seq
        .layers
        .iter()
        .zip(params.layers.iter().zip(&mut grads.layers))
        .rev()
    {
        let mut grad_input = Mat::zeros(layer.input.rows(), layer.input.cols());
        backward_direction(
            &lp.fwd,
            &mut gp.fwd,
            &layer.fwd,
            &layer.input,
            &mut grad_input,
            |t, k| grad_top[(t, k)],
            Direction::Forward,
        );
        backward_direction(
            &lp.bwd,
            &mut gp.bwd,
            &layer.bwd,
            &layer.input,
            &mut grad_input,
            |t, k| grad_top[(t, c + k)],
            Direction::Backward,
        );
        grad_top = grad_input;
    }
    Ok((grads, grad_top))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat<f64> {
        Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_params(rng: &mut impl Rng, config: EncoderConfig) -> EncoderParams<f64> {
        let mut p = EncoderParams::zeros(config);
        let flat: Vec<f64> = (0..p.param_count()).map(|_| rng.gen_range(-0.8..0.8)).collect();
        p.assign_flat(&flat);
        p
    }

    /// Independent step-by-step scalar reference for the whole stack,
    /// written directly from the LSTM recurrence.
    fn reference_forward(params: &EncoderParams<f64>, x: &Mat<f64>) -> Mat<f64> {
        fn sig(v: f64) -> f64 {
            1.0 / (1.0 + (-v).exp())
        }
        let frames = x.rows();
        let c = params.config.cells_per_direction;
        let mut input: Vec<Vec<f64>> = (0..frames).map(|t| x.row(t).to_vec()).collect();
        for layer in &params.layers {
            let mut out = vec![vec![0.0; 2 * c]; frames];
            for (half, (d, reversed)) in
                [(&layer.fwd, false), (&layer.bwd, true)].into_iter().enumerate()
            {
                let mut h = vec![0.0; c];
                let mut cell = vec![0.0; c];
                let order: Vec<usize> = if reversed {
                    (0..frames).rev().collect()
                } else {
                    (0..frames).collect()
                };
                for &t in &order {
                    let mut h_new = vec![0.0; c];
                    let mut c_new = vec![0.0; c];
                    for k in 0..c {
                        let mut acc = [0.0f64; 4];
                        for (gate, a) in acc.iter_mut().enumerate() {
                            let row = gate * c + k;
                            for (j, v) in input[t].iter().enumerate() {
                                *a += d.w[(row, j)] * v;
                            }
                            for (j, v) in h.iter().enumerate() {
                                *a += d.u[(row, j)] * v;
                            }
                            *a += d.b[row];
                        }
                        let (i, f, g, o) = (sig(acc[0]), sig(acc[1]), acc[2].tanh(), sig(acc[3]));
                        c_new[k] = f * cell[k] + i * g;
                        h_new[k] = o * c_new[k].tanh();
                    }
                    h = h_new;
                    cell = c_new;
                    for k in 0..c {
                        out[t][half * c + k] = h[k];
                    }
                }
            }
            input = out;
        }
        Mat::from_fn(frames, 2 * c, |t, j| input[t][j])
    }

    #[test]
    fn zero_input_zero_params_is_a_fixed_point() {
        let config = EncoderConfig::new(4, 2, 3);
        let params = EncoderParams::<f64>::zeros(config);
        let x = Mat::zeros(5, 4);
        let h = forward(&params, &x).unwrap();
        assert!(h.values().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_shape() {
        let config = EncoderConfig::new(4, 1, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = random_params(&mut rng, config);
        let x = random_mat(&mut rng, 3, 4);
        let h = forward(&params, &x).unwrap();
        assert_eq!((h.values().rows(), h.values().cols()), (3, 10));
    }

    #[test]
    fn matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (layers, c, t, d_in) in [(1, 3, 4, 2), (2, 2, 5, 3), (3, 1, 2, 4)] {
            let config = EncoderConfig::new(d_in, layers, c);
            let params = random_params(&mut rng, config);
            let x = random_mat(&mut rng, t, d_in);
            let h = forward(&params, &x).unwrap();
            let want = reference_forward(&params, &x);
            for (a, b) in h.values().data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn hidden_values_stay_in_the_open_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let config = EncoderConfig::new(3, 2, 4);
        let params = random_params(&mut rng, config);
        let x = random_mat(&mut rng, 6, 3).map(|v| v * 50.0);
        let h = forward(&params, &x).unwrap();
        assert!(h.values().data().iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let config = EncoderConfig::new(3, 2, 2);
        let params = random_params(&mut rng, config);
        let x = random_mat(&mut rng, 4, 3);
        let a = forward(&params, &x).unwrap();
        let b = forward(&params, &x).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn time_reversal_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for layers in [1, 2] {
            let config = EncoderConfig::new(3, layers, 2);
            let params = random_params(&mut rng, config);
            let frames = 5;
            let c = config.cells_per_direction;
            let x = random_mat(&mut rng, frames, 3);

            // Swap the direction blocks; in stacked layers the input halves
            // arrive swapped too, so the input weight columns of every layer
            // above the first must swap their direction blocks as well.
            let mut swapped = params.clone();
            for (l, layer) in swapped.layers.iter_mut().enumerate() {
                std::mem::swap(&mut layer.fwd, &mut layer.bwd);
                if l > 0 {
                    for dir in [&mut layer.fwd, &mut layer.bwd] {
                        dir.w = Mat::from_fn(4 * c, 2 * c, |r, j| {
                            dir.w[(r, if j < c { c + j } else { j - c })]
                        });
                    }
                }
            }
            let x_rev = Mat::from_fn(frames, 3, |t, j| x[(frames - 1 - t, j)]);

            let h = forward(&params, &x).unwrap();
            let h_rev = forward(&swapped, &x_rev).unwrap();
            for t in 0..frames {
                for k in 0..c {
                    let a = h.values()[(t, k)];
                    let b = h_rev.values()[(frames - 1 - t, c + k)];
                    assert!((a - b).abs() < 1e-12, "layers={layers}");
                    let a2 = h.values()[(t, c + k)];
                    let b2 = h_rev.values()[(frames - 1 - t, k)];
                    assert!((a2 - b2).abs() < 1e-12, "layers={layers}");
                }
            }
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let config = EncoderConfig::new(3, 1, 2);
        let params = random_params(&mut rng, config);
        let x = random_mat(&mut rng, 4, 3);
        let h = forward(&params, &x).unwrap();
        let (grads, gx) = backward(&params, &h, &Mat::zeros(4, 4)).unwrap();
        assert!(grads.flatten().iter().all(|&v| v == 0.0));
        assert!(gx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_is_linear_in_the_upstream_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let config = EncoderConfig::new(2, 2, 2);
        let params = random_params(&mut rng, config);
        let x = random_mat(&mut rng, 3, 2);
        let h = forward(&params, &x).unwrap();
        let g = random_mat(&mut rng, 3, 4);
        let (g1, gx1) = backward(&params, &h, &g).unwrap();
        let doubled = g.map(|v| 2.0 * v);
        let (g2, gx2) = backward(&params, &h, &doubled).unwrap();
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        for (a, b) in gx1.data().iter().zip(gx2.data()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (layers, c, t, d_in) in [(1, 3, 4, 2), (2, 2, 3, 3)] {
            let config = EncoderConfig::new(d_in, layers, c);
            let params = random_params(&mut rng, config);
            let x = random_mat(&mut rng, t, d_in);
            let grad_h = random_mat(&mut rng, t, 2 * c);

            let h = forward(&params, &x).unwrap();
            let (grads, grad_x) = backward(&params, &h, &grad_h).unwrap();

            // Check d(sum <grad_h, h>)/d(theta) over params and input jointly.
            let mut theta = params.flatten();
            theta.extend_from_slice(x.data());
            let mut analytic = grads.flatten();
            analytic.extend_from_slice(grad_x.data());

            let n_params = params.param_count();
            let f = |v: &[f64]| {
                let mut p = EncoderParams::zeros(config);
                p.assign_flat(&v[..n_params]);
                let xm = Mat::from_vec(t, d_in, v[n_params..].to_vec());
                let h = forward(&p, &xm).unwrap();
                let mut acc = 0.0;
                for (hv, gv) in h.values().data().iter().zip(grad_h.data()) {
                    acc += hv * gv;
                }
                acc
            };
            let err = grad_check(f, &theta, &analytic, 1e-5);
            assert!(err < 1e-6, "layers={layers} err={err}");
        }
    }
}
