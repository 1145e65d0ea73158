// Backpropagation through the decode recorded in a `Trace`.

use alloc::vec;

use super::{ModelParameters, Trace};
use crate::alignment::{AlignmentMatrix, PROB_FLOOR};
use crate::data::SampleRecord;
use crate::linalg::{matvec_t_acc, outer_acc};

/// Gradient of `Σ_t -log max(p_t[T(t)], floor)` with inputs and targets held
/// fixed. Steps whose target probability sits below the clamp floor
/// contribute no gradient, matching the clamped loss.
pub fn backward(
    trace: &Trace,
    sample: &SampleRecord,
    params: &ModelParameters,
    targets: &AlignmentMatrix,
) -> ModelParameters {
    let d = params.dims;
    let hsz = d.hidden;
    let mut g = ModelParameters::zeros(d);
    let mut dh_next = vec![0.0; hsz];
    let mut dc_next = vec![0.0; hsz];

    for (t, step) in trace.steps.iter().enumerate().rev() {
        let target = targets.step_to_label[t];
        let h: alloc::vec::Vec<f64> = (0..hsz)
            .map(|k| step.gates[2 * hsz + k] * step.tanh_c[k])
            .collect();

        // Softmax + cross-entropy.
        let mut dh = dh_next.clone();
        if step.probs[target] >= PROB_FLOOR {
            let mut dlogits = step.probs.clone();
            dlogits[target] -= 1.0;
            outer_acc(&mut g.out_w, &dlogits, &h);
            g.out_b.iter_mut().zip(&dlogits).for_each(|(b, v)| *b += v);
            matvec_t_acc(&params.out_w, &dlogits, &mut dh);
        }

        // LSTM cell.
        let (f, rest) = step.gates.split_at(hsz);
        let (i, rest) = rest.split_at(hsz);
        let (o, gc) = rest.split_at(hsz);
        let mut dz = vec![0.0; 4 * hsz];
        let mut dc_prev = vec![0.0; hsz];
        for k in 0..hsz {
            let tc = step.tanh_c[k];
            let dc = dh[k] * o[k] * (1.0 - tc * tc) + dc_next[k];
            let d_o = dh[k] * tc;
            let d_f = dc * step.c_prev[k];
            let d_i = dc * gc[k];
            let d_g = dc * i[k];
            dc_prev[k] = dc * f[k];
            dz[k] = d_f * f[k] * (1.0 - f[k]);
            dz[hsz + k] = d_i * i[k] * (1.0 - i[k]);
            dz[2 * hsz + k] = d_o * o[k] * (1.0 - o[k]);
            dz[3 * hsz + k] = d_g * (1.0 - gc[k] * gc[k]);
        }
        outer_acc(&mut g.gate_w, &dz, &step.x);
        outer_acc(&mut g.gate_u, &dz, &step.h_prev);
        g.gate_b.iter_mut().zip(&dz).for_each(|(b, v)| *b += v);

        let mut dx = vec![0.0; d.input()];
        matvec_t_acc(&params.gate_w, &dz, &mut dx);
        let mut dh_prev = vec![0.0; hsz];
        matvec_t_acc(&params.gate_u, &dz, &mut dh_prev);

        let row = step.token * d.embed;
        g.embedding[row..row + d.embed]
            .iter_mut()
            .zip(&dx[..d.embed])
            .for_each(|(e, v)| *e += v);

        if let Some(att) = &step.attention {
            let dctx = &dx[d.embed..];
            // α-weighted context: dα_j = dctx · s_j, then softmax Jacobian.
            let dalpha: alloc::vec::Vec<f64> = sample
                .spatial_features
                .iter()
                .map(|cell| cell.iter().zip(dctx).map(|(s, g)| s * g).sum())
                .collect();
            let mean: f64 = att.alpha.iter().zip(&dalpha).map(|(a, da)| a * da).sum();
            let mut dz_sum = vec![0.0; d.attention];
            for ((act, &alpha), (&da, cell)) in att
                .act
                .iter()
                .zip(&att.alpha)
                .zip(dalpha.iter().zip(&sample.spatial_features))
            {
                let de = alpha * (da - mean);
                if de == 0.0 {
                    continue;
                }
                let dzj: alloc::vec::Vec<f64> = act
                    .iter()
                    .zip(&params.att_v)
                    .map(|(a, v)| de * v * (1.0 - a * a))
                    .collect();
                g.att_v.iter_mut().zip(act).for_each(|(gv, a)| *gv += de * a);
                outer_acc(&mut g.att_w, &dzj, cell);
                dz_sum.iter_mut().zip(&dzj).for_each(|(s, v)| *s += v);
            }
            outer_acc(&mut g.att_u, &dz_sum, &step.h_prev);
            g.att_b.iter_mut().zip(&dz_sum).for_each(|(b, v)| *b += v);
            matvec_t_acc(&params.att_u, &dz_sum, &mut dh_prev);
        }

        dh_next = dh_prev;
        dc_next = dc_prev;
    }

    // h0 = enc_w · feature + enc_b; c0 is constant.
    outer_acc(&mut g.enc_w, &dh_next, &sample.global_feature);
    g.enc_b.iter_mut().zip(&dh_next).for_each(|(b, v)| *b += v);
    g
}
