//! Reference implementations shared by the integration tests. They are
//! written directly from the definitions, without the library's buffers or
//! index tricks.

#![allow(dead_code)]

use depbound::model::{TcnConfig, TcnWeights};

/// Output of every step: `y[t] = Σⱼ v[j]·h_D[j][t]`, with
/// `h_ℓ[j][t] = relu(Σ_{k,i} W_ℓ[k,i,j]·h_{ℓ−1}[i][t − k·b^ℓ])` and zero
/// before the start of the sequence. `x` is time-major.
pub fn naive_forward(cfg: &TcnConfig, w: &TcnWeights, x: &[f64]) -> Vec<f64> {
    let n = cfg.in_dim;
    let len = x.len() / n;
    // h[c][t]
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| (0..len).map(|t| x[t * n + i]).collect()).collect();
    for (l, kernel) in w.layers.iter().enumerate() {
        let [p, r_in, r_out] = kernel.shape;
        let dil = cfg.dilation_base.pow(l as u32) as i64;
        let mut next = vec![vec![0.0; len]; r_out];
        for (j, row) in next.iter_mut().enumerate() {
            for (t, cell) in row.iter_mut().enumerate() {
                let mut z = 0.0;
                for k in 0..p {
                    let src = t as i64 - k as i64 * dil;
                    if src < 0 {
                        continue;
                    }
                    for (i, hi) in h.iter().enumerate().take(r_in) {
                        z += kernel.get(k, i, j) * hi[src as usize];
                    }
                }
                *cell = if z > 0.0 { z } else { 0.0 };
            }
        }
        h = next;
    }
    (0..len)
        .map(|t| h.iter().zip(&w.readout).map(|(hj, v)| hj[t] * v).sum())
        .collect()
}

/// Mean `min((ŷ − y)², 1)` over one-step-ahead predictions whose input
/// window lies entirely inside the series.
pub fn naive_eval_loss(cfg: &TcnConfig, w: &TcnWeights, x: &[f64]) -> f64 {
    let span: usize = (0..cfg.depth).map(|l| cfg.dilation_base.pow(l as u32)).sum();
    let rf = 1 + (cfg.kernel_size - 1) * span;
    let out = naive_forward(cfg, w, &x[..x.len() - 1]);
    let mut total = 0.0;
    let mut count = 0;
    for s in rf..x.len() {
        let r = out[s - 1] - x[s];
        total += (r * r).min(1.0);
        count += 1;
    }
    total / count as f64
}
