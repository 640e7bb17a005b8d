use alloc::vec::Vec;

use rand::Rng;

use super::{Graph, ParamId, Var};
use crate::error::{Error, Result};

/// Weights of one LSTM layer. `weight` is `4H × (input + H)` with gate
/// blocks in the order input, forget, output, candidate; `bias` is `1 × 4H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmParams {
    pub weight: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// One LSTM step: `c = f∘c_prev + i∘g`, `h = o∘tanh(c)`.
pub fn lstm_cell(g: &mut Graph<'_>, x: Var, prev: LstmState, p: LstmParams) -> Result<LstmState> {
    let hs = p.hidden;
    let w = g.param(p.weight);
    let b = g.param(p.bias);
    let xh = g.concat_cols(&[x, prev.h])?;
    let z = g.matmul_nt(xh, w)?;
    let z = g.add(z, b)?;
    let gates = g.slice_cols(z, 0, 3 * hs)?;
    let gates = g.sigmoid(gates);
    let cand = g.slice_cols(z, 3 * hs, hs)?;
    let cand = g.tanh(cand);
    let i = g.slice_cols(gates, 0, hs)?;
    let f = g.slice_cols(gates, hs, hs)?;
    let o = g.slice_cols(gates, 2 * hs, hs)?;
    let keep = g.mul(f, prev.c)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok(LstmState { h, c })
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, otherwise
/// `1 / (1 - p)`.
pub fn dropout_mask<R: Rng>(len: usize, p: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
        .collect()
}

impl Graph<'_> {
    /// Inverted dropout; the identity when not training or `p == 0`.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(alloc::format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let (r, c) = self.shape(x);
        let mask = dropout_mask(r * c, p, rng);
        self.mask(x, mask)
    }
}
