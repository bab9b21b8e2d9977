use crate::error::{Error, Result};
use crate::model::params::{CellParams, GATE_C, GATE_F, GATE_I, GATE_O};
use crate::model::CellVariant;
use crate::numerics::{sigmoid_scalar, Matrix};

/// Activations of one recurrent step, sufficient for the exact backward pass.
#[derive(Debug, Clone)]
pub struct CellCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Gate pre-activations `W x + U h_prev + b`, one per gate.
    pub pre: Vec<Vec<f64>>,
    /// LSTM: `[i, o, f, g]` with `g` the tanh candidate; tanh RNN: `[h]`.
    pub act: Vec<Vec<f64>>,
    /// Multiplier of the candidate in the cell update: `i` or `1 − f`.
    pub input_mix: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Advances one cell by a step on raw slices.
pub(crate) fn cell_step(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &CellParams,
    variant: CellVariant,
) -> CellCache {
    let pre: Vec<Vec<f64>> = p
        .gates
        .iter()
        .map(|g| {
            let mut z = g.b.as_slice().to_vec();
            g.w.matvec_add(x, &mut z);
            g.u.matvec_add(h_prev, &mut z);
            z
        })
        .collect();

    if variant == CellVariant::SimpleTanhRnn {
        let h: Vec<f64> = pre[0].iter().map(|z| z.tanh()).collect();
        return CellCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            act: vec![h.clone()],
            pre,
            input_mix: Vec::new(),
            c: vec![0.0; h.len()],
            tanh_c: Vec::new(),
            h,
        };
    }

    let i: Vec<f64> = pre[GATE_I].iter().map(|&z| sigmoid_scalar(z)).collect();
    let o: Vec<f64> = pre[GATE_O].iter().map(|&z| sigmoid_scalar(z)).collect();
    let f: Vec<f64> = pre[GATE_F].iter().map(|&z| sigmoid_scalar(z)).collect();
    let g: Vec<f64> = pre[GATE_C].iter().map(|z| z.tanh()).collect();
    let input_mix: Vec<f64> = match variant {
        // 1 − σ(z) evaluated as σ(−z)
        CellVariant::PaperCifg => pre[GATE_F].iter().map(|&z| sigmoid_scalar(-z)).collect(),
        _ => i.clone(),
    };
    let c: Vec<f64> = (0..g.len())
        .map(|k| f[k] * c_prev[k] + input_mix[k] * g[k])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();
    CellCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        pre,
        act: vec![i, o, f, g],
        input_mix,
        c,
        tanh_c,
        h,
    }
}

/// One recurrent step on column vectors, returning `(h_t, c_t, cache)`.
///
/// For the tanh RNN the returned cell state is all zeros.
pub fn cell_forward(
    x: &Matrix,
    h_prev: &Matrix,
    c_prev: &Matrix,
    p: &CellParams,
    variant: CellVariant,
) -> Result<(Matrix, Matrix, CellCache)> {
    if p.gates.len() != variant.num_gates() {
        return Err(Error::Config(format!(
            "{variant:?} needs {} gates, parameters have {}",
            variant.num_gates(),
            p.gates.len()
        )));
    }
    let hidden = p.hidden_dim();
    if x.shape() != (p.input_dim(), 1) {
        return Err(Error::shape("cell_forward x", x.shape(), (p.input_dim(), 1)));
    }
    if h_prev.shape() != (hidden, 1) {
        return Err(Error::shape("cell_forward h_prev", h_prev.shape(), (hidden, 1)));
    }
    if c_prev.shape() != (hidden, 1) {
        return Err(Error::shape("cell_forward c_prev", c_prev.shape(), (hidden, 1)));
    }
    let cache = cell_step(x.as_slice(), h_prev.as_slice(), c_prev.as_slice(), p, variant);
    Ok((Matrix::column(&cache.h), Matrix::column(&cache.c), cache))
}

/// Output of [`cell_backward`]: gradients with respect to the step's inputs.
pub(crate) struct CellInputGrads {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

/// Backpropagates `dh`, `dc` (gradients w.r.t. this step's `h` and `c`)
/// through one step, accumulating parameter gradients into `grads`.
pub(crate) fn cell_backward(
    cache: &CellCache,
    p: &CellParams,
    variant: CellVariant,
    dh: &[f64],
    dc: &[f64],
    grads: &mut CellParams,
) -> CellInputGrads {
    let n = cache.h.len();
    let mut dpre: Vec<Vec<f64>> = vec![vec![0.0; n]; p.gates.len()];
    let mut dc_prev = vec![0.0; n];

    if variant == CellVariant::SimpleTanhRnn {
        let h = &cache.act[0];
        for k in 0..n {
            dpre[0][k] = dh[k] * (1.0 - h[k] * h[k]);
        }
    } else {
        let (i, o, f, g) = (&cache.act[0], &cache.act[1], &cache.act[2], &cache.act[3]);
        for k in 0..n {
            let dc_total = dc[k] + dh[k] * o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
            let d_o = dh[k] * cache.tanh_c[k];
            let d_mix = dc_total * g[k];
            let d_f = dc_total * cache.c_prev[k];
            let d_g = dc_total * cache.input_mix[k];
            dc_prev[k] = dc_total * f[k];
            dpre[GATE_O][k] = d_o * o[k] * (1.0 - o[k]);
            dpre[GATE_C][k] = d_g * (1.0 - g[k] * g[k]);
            match variant {
                CellVariant::PaperCifg => {
                    // mix = σ(−z_f): d mix / d z_f = −mix (1 − mix)
                    let m = cache.input_mix[k];
                    dpre[GATE_F][k] = d_f * f[k] * (1.0 - f[k]) - d_mix * m * (1.0 - m);
                }
                _ => {
                    dpre[GATE_F][k] = d_f * f[k] * (1.0 - f[k]);
                    dpre[GATE_I][k] = d_mix * i[k] * (1.0 - i[k]);
                }
            }
        }
    }

    let mut dx = vec![0.0; cache.x.len()];
    let mut dh_prev = vec![0.0; n];
    for ((gate, grad), dz) in p.gates.iter().zip(grads.gates.iter_mut()).zip(&dpre) {
        if dz.iter().all(|&v| v == 0.0) {
            continue;
        }
        grad.w.add_outer(dz, &cache.x);
        grad.u.add_outer(dz, &cache.h_prev);
        grad.b.add_flat(dz);
        gate.w.matvec_t_add(dz, &mut dx);
        gate.u.matvec_t_add(dz, &mut dh_prev);
    }
    CellInputGrads {
        dx,
        dh_prev,
        dc_prev,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, max_relative_error, Rng};

    fn random_cell(variant: CellVariant, input: usize, hidden: usize, seed: u64) -> CellParams {
        let mut rng = Rng::new(seed);
        let mut p = CellParams::init(variant, input, hidden, &mut rng);
        for g in &mut p.gates {
            for v in g.b.as_mut_slice() {
                *v = rng.uniform(-0.5, 0.5);
            }
        }
        p
    }

    fn random_vec(n: usize, rng: &mut Rng) -> Vec<f64> {
        (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
    }

    /// Straight transcription of the gate equations with scalar loops.
    fn oracle_lstm(x: &[f64], h: &[f64], c: &[f64], p: &CellParams, coupled: bool) -> (Vec<f64>, Vec<f64>) {
        let n = h.len();
        let affine = |gate: usize, k: usize| {
            let g = &p.gates[gate];
            let mut s = g.b.get(k, 0);
            for j in 0..x.len() {
                s += g.w.get(k, j) * x[j];
            }
            for j in 0..n {
                s += g.u.get(k, j) * h[j];
            }
            s
        };
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let mut h_new = vec![0.0; n];
        let mut c_new = vec![0.0; n];
        for k in 0..n {
            let i = sig(affine(0, k));
            let o = sig(affine(1, k));
            let f = sig(affine(2, k));
            let cand = affine(3, k).tanh();
            let mix = if coupled { 1.0 - f } else { i };
            c_new[k] = f * c[k] + mix * cand;
            h_new[k] = o * c_new[k].tanh();
        }
        (h_new, c_new)
    }

    #[test]
    fn zero_params_halve_the_cell_state() {
        let p = CellParams {
            gates: random_cell(CellVariant::PaperCifg, 3, 4, 1)
                .gates
                .into_iter()
                .map(|mut g| {
                    g.w.fill(0.0);
                    g.u.fill(0.0);
                    g.b.fill(0.0);
                    g
                })
                .collect(),
        };
        let c_prev = [0.8, -1.5, 3.0, 0.0];
        let cache = cell_step(&[0.3, -0.2, 0.9], &[0.1, 0.2, 0.3, 0.4], &c_prev, &p, CellVariant::PaperCifg);
        for k in 0..4 {
            assert_eq!(cache.c[k], 0.5 * c_prev[k]);
            assert_eq!(cache.h[k], 0.5 * (0.5 * c_prev[k]).tanh());
        }
    }

    #[test]
    fn saturated_forget_gate_keeps_memory() {
        let mut p = random_cell(CellVariant::PaperCifg, 3, 3, 2);
        p.gates[GATE_F].b.fill(50.0);
        let c_prev = [0.7, -0.3, 1.2];
        let cache = cell_step(&[1.0, 0.0, -1.0], &[0.2, 0.1, -0.4], &c_prev, &p, CellVariant::PaperCifg);
        for k in 0..3 {
            assert!((cache.c[k] - c_prev[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = Rng::new(1337);
        for (variant, coupled) in [(CellVariant::PaperCifg, true), (CellVariant::StandardLstm, false)] {
            let p = random_cell(variant, 4, 3, 1337);
            let x = random_vec(4, &mut rng);
            let h = random_vec(3, &mut rng);
            let c = random_vec(3, &mut rng);
            let cache = cell_step(&x, &h, &c, &p, variant);
            let (oh, oc) = oracle_lstm(&x, &h, &c, &p, coupled);
            for k in 0..3 {
                assert!((cache.h[k] - oh[k]).abs() < 1e-14);
                assert!((cache.c[k] - oc[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn tanh_rnn_step() {
        let p = random_cell(CellVariant::SimpleTanhRnn, 2, 3, 4);
        let x = [0.5, -1.0];
        let h = [0.1, 0.0, -0.2];
        let cache = cell_step(&x, &h, &[0.0; 3], &p, CellVariant::SimpleTanhRnn);
        let g = &p.gates[0];
        for k in 0..3 {
            let z = g.b.get(k, 0)
                + g.w.get(k, 0) * x[0]
                + g.w.get(k, 1) * x[1]
                + (0..3).map(|j| g.u.get(k, j) * h[j]).sum::<f64>();
            assert!((cache.h[k] - z.tanh()).abs() < 1e-14);
        }
    }

    #[test]
    fn tied_standard_lstm_equals_cifg_bitwise() {
        let cifg = random_cell(CellVariant::PaperCifg, 5, 4, 9);
        let mut tied = cifg.clone();
        let neg = |m: &Matrix| m.map(|v| -v);
        tied.gates[GATE_I].w = neg(&cifg.gates[GATE_F].w);
        tied.gates[GATE_I].u = neg(&cifg.gates[GATE_F].u);
        tied.gates[GATE_I].b = neg(&cifg.gates[GATE_F].b);
        let mut rng = Rng::new(10);
        for _ in 0..50 {
            let x = random_vec(5, &mut rng);
            let h = random_vec(4, &mut rng);
            let c = random_vec(4, &mut rng);
            let a = cell_step(&x, &h, &c, &cifg, CellVariant::PaperCifg);
            let b = cell_step(&x, &h, &c, &tied, CellVariant::StandardLstm);
            assert_eq!(a.h, b.h);
            assert_eq!(a.c, b.c);
        }
    }

    #[test]
    fn public_wrapper_checks_shapes() {
        let p = random_cell(CellVariant::StandardLstm, 3, 2, 5);
        let ok = cell_forward(
            &Matrix::zeros(3, 1),
            &Matrix::zeros(2, 1),
            &Matrix::zeros(2, 1),
            &p,
            CellVariant::StandardLstm,
        );
        assert!(ok.is_ok());
        let bad = cell_forward(
            &Matrix::zeros(4, 1),
            &Matrix::zeros(2, 1),
            &Matrix::zeros(2, 1),
            &p,
            CellVariant::StandardLstm,
        );
        assert!(matches!(bad, Err(Error::Shape { .. })));
        let wrong_variant = cell_forward(
            &Matrix::zeros(3, 1),
            &Matrix::zeros(2, 1),
            &Matrix::zeros(2, 1),
            &p,
            CellVariant::SimpleTanhRnn,
        );
        assert!(wrong_variant.is_err());
    }

    /// Scalar objective `w_h · h + w_c · c` of one step.
    fn step_objective(x: &[f64], h: &[f64], c: &[f64], p: &CellParams, v: CellVariant, wh: &[f64], wc: &[f64]) -> f64 {
        let s = cell_step(x, h, c, p, v);
        s.h.iter().zip(wh).map(|(a, b)| a * b).sum::<f64>()
            + s.c.iter().zip(wc).map(|(a, b)| a * b).sum::<f64>()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(77);
        for variant in [CellVariant::PaperCifg, CellVariant::StandardLstm, CellVariant::SimpleTanhRnn] {
            let p = random_cell(variant, 3, 4, 78);
            let x = random_vec(3, &mut rng);
            let h = random_vec(4, &mut rng);
            let c = random_vec(4, &mut rng);
            let wh = random_vec(4, &mut rng);
            let wc = if variant == CellVariant::SimpleTanhRnn { vec![0.0; 4] } else { random_vec(4, &mut rng) };
            let cache = cell_step(&x, &h, &c, &p, variant);
            let mut grads = p.clone();
            for g in &mut grads.gates {
                g.w.fill(0.0);
                g.u.fill(0.0);
                g.b.fill(0.0);
            }
            let back = cell_backward(&cache, &p, variant, &wh, &wc, &mut grads);

            for (k, gate_grad) in grads.gates.iter().enumerate() {
                let fd_w = finite_diff_grad(
                    |m| {
                        let mut q = p.clone();
                        q.gates[k].w = m.clone();
                        step_objective(&x, &h, &c, &q, variant, &wh, &wc)
                    },
                    &p.gates[k].w,
                    1e-5,
                )
                .unwrap();
                assert!(max_relative_error(&gate_grad.w, &fd_w).unwrap() < 1e-6, "{variant:?} gate {k}");
                let fd_b = finite_diff_grad(
                    |m| {
                        let mut q = p.clone();
                        q.gates[k].b = m.clone();
                        step_objective(&x, &h, &c, &q, variant, &wh, &wc)
                    },
                    &p.gates[k].b,
                    1e-5,
                )
                .unwrap();
                assert!(max_relative_error(&gate_grad.b, &fd_b).unwrap() < 1e-6);
            }
            let fd_x = finite_diff_grad(
                |m| step_objective(m.as_slice(), &h, &c, &p, variant, &wh, &wc),
                &Matrix::column(&x),
                1e-5,
            )
            .unwrap();
            assert!(max_relative_error(&Matrix::column(&back.dx), &fd_x).unwrap() < 1e-6);
            let fd_h = finite_diff_grad(
                |m| step_objective(&x, m.as_slice(), &c, &p, variant, &wh, &wc),
                &Matrix::column(&h),
                1e-5,
            )
            .unwrap();
            assert!(max_relative_error(&Matrix::column(&back.dh_prev), &fd_h).unwrap() < 1e-6);
            if variant != CellVariant::SimpleTanhRnn {
                let fd_c = finite_diff_grad(
                    |m| step_objective(&x, &h, m.as_slice(), &p, variant, &wh, &wc),
                    &Matrix::column(&c),
                    1e-5,
                )
                .unwrap();
                assert!(max_relative_error(&Matrix::column(&back.dc_prev), &fd_c).unwrap() < 1e-6);
            }
        }
    }

    #[test]
    fn cifg_input_gate_gets_no_gradient() {
        let p = random_cell(CellVariant::PaperCifg, 2, 3, 3);
        let cache = cell_step(&[0.3, 0.4], &[0.1, 0.2, 0.3], &[1.0, -1.0, 0.5], &p, CellVariant::PaperCifg);
        let mut grads = p.clone();
        for g in &mut grads.gates {
            g.w.fill(0.0);
            g.u.fill(0.0);
            g.b.fill(0.0);
        }
        cell_backward(&cache, &p, CellVariant::PaperCifg, &[1.0; 3], &[0.5; 3], &mut grads);
        assert!(grads.gates[GATE_I].w.as_slice().iter().all(|&v| v == 0.0));
        assert!(grads.gates[GATE_F].w.as_slice().iter().any(|&v| v != 0.0));
    }
}
