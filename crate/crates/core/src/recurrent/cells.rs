//! Single-step cells and the layers that unroll them over time.

use crate::numkit::{NumError, Tape, Tensor, Var};

use super::params::{GruCellParams, LstmCellParams};
use super::ModelError;

/// Recurrent state at one step. `c` is only present for LSTM cells.
#[derive(Debug, Clone, Copy)]
pub struct HiddenState {
    pub h: Var,
    pub c: Option<Var>,
}

impl HiddenState {
    /// Zero state at sequence start.
    pub fn zeros(tape: &mut Tape, batch: usize, hidden: usize, with_cell: bool) -> Self {
        let zero = Tensor::zeros(&[batch, hidden]);
        let h = tape.leaf(&zero);
        let c = with_cell.then(|| tape.leaf(&zero));
        Self { h, c }
    }
}

/// `x · Wᵀ + h · Uᵀ + b`
fn gate_input(tape: &mut Tape, x: Var, h: Var, w: Var, u: Var, b: Var) -> Result<Var, NumError> {
    let wx = tape.matmul_t(x, w)?;
    let uh = tape.matmul_t(h, u)?;
    let sum = tape.add(wx, uh)?;
    tape.add_row(sum, b)
}

fn hidden_size(tape: &Tape, w: Var) -> usize {
    tape.shape(w)[0]
}

/// Standard LSTM update with a forget gate:
/// `i, f, o = σ(·)`, `g = tanh(·)`, `c' = f∘c + i∘g`, `h' = o∘tanh(c')`.
pub fn lstm_step(
    tape: &mut Tape,
    p: &LstmCellParams<Var>,
    x: Var,
    state: HiddenState,
) -> Result<HiddenState, ModelError> {
    let c = state.c.ok_or(ModelError::Config("LSTM step needs a cell state".into()))?;
    let h = state.h;
    let pre_i = gate_input(tape, x, h, p.w_i, p.u_i, p.b_i)?;
    let pre_f = gate_input(tape, x, h, p.w_f, p.u_f, p.b_f)?;
    let pre_g = gate_input(tape, x, h, p.w_g, p.u_g, p.b_g)?;
    let pre_o = gate_input(tape, x, h, p.w_o, p.u_o, p.b_o)?;
    let i = tape.sigmoid(pre_i);
    let f = tape.sigmoid(pre_f);
    let g = tape.tanh(pre_g);
    let o = tape.sigmoid(pre_o);
    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c_next = tape.add(keep, write)?;
    let squashed = tape.tanh(c_next);
    let h_next = tape.mul(o, squashed)?;
    Ok(HiddenState {
        h: h_next,
        c: Some(c_next),
    })
}

/// GRU update: reset gate `m`, update gate `n`,
/// candidate `h̃ = tanh([m∘h, x] · W_cᵀ + b_c)`, `h' = (1 − n)∘h + n∘h̃`.
pub fn gru_step(
    tape: &mut Tape,
    p: &GruCellParams<Var>,
    x: Var,
    state: HiddenState,
) -> Result<HiddenState, ModelError> {
    let h = state.h;
    let pre_m = gate_input(tape, x, h, p.w_m, p.u_m, p.b_m)?;
    let pre_n = gate_input(tape, x, h, p.w_n, p.u_n, p.b_n)?;
    let reset = tape.sigmoid(pre_m);
    let update = tape.sigmoid(pre_n);
    let gated = tape.mul(reset, h)?;
    let cand_in = tape.concat_cols(gated, x)?;
    let cand_pre = tape.matmul_t(cand_in, p.w_c)?;
    let cand_pre = tape.add_row(cand_pre, p.b_c)?;
    let candidate = tape.tanh(cand_pre);
    let carry = tape.one_minus(update);
    let kept = tape.mul(carry, h)?;
    let fresh = tape.mul(update, candidate)?;
    let h_next = tape.add(kept, fresh)?;
    Ok(HiddenState { h: h_next, c: None })
}

fn seq_dims(tape: &Tape, seq: Var) -> Result<(usize, usize), ModelError> {
    match *tape.shape(seq) {
        [b, t, _] if t >= 1 => Ok((b, t)),
        [_, 0, _] => Err(ModelError::EmptySequence),
        ref other => Err(ModelError::Config(format!(
            "expected a batch × time × feature sequence, got shape {other:?}"
        ))),
    }
}

/// Runs one LSTM direction; returns the hidden state at every step in time
/// order (for `reverse`, step `t` has seen inputs `t..T`).
pub fn lstm_layer(
    tape: &mut Tape,
    p: &LstmCellParams<Var>,
    seq: Var,
    reverse: bool,
) -> Result<Vec<Var>, ModelError> {
    let (batch, steps) = seq_dims(tape, seq)?;
    let hidden = hidden_size(tape, p.w_i);
    let mut state = HiddenState::zeros(tape, batch, hidden, true);
    let mut out = vec![state.h; steps];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..steps).rev())
    } else {
        Box::new(0..steps)
    };
    for t in order {
        let x = tape.time_step(seq, t)?;
        state = lstm_step(tape, p, x, state)?;
        out[t] = state.h;
    }
    Ok(out)
}

/// Bidirectional LSTM: `[→h_t, ←h_t]` for every step, shape
/// `batch × T × 2·hidden`.
pub fn bilstm_layer(
    tape: &mut Tape,
    fwd: &LstmCellParams<Var>,
    bwd: &LstmCellParams<Var>,
    seq: Var,
) -> Result<Var, ModelError> {
    let forward = lstm_layer(tape, fwd, seq, false)?;
    let backward = lstm_layer(tape, bwd, seq, true)?;
    let mut joined = Vec::with_capacity(forward.len());
    for (f, b) in forward.into_iter().zip(backward) {
        joined.push(tape.concat_cols(f, b)?);
    }
    Ok(tape.stack_time(&joined)?)
}

/// Unidirectional GRU; returns the hidden state after every step.
pub fn gru_layer(tape: &mut Tape, p: &GruCellParams<Var>, seq: Var) -> Result<Vec<Var>, ModelError> {
    let (batch, steps) = seq_dims(tape, seq)?;
    let hidden = hidden_size(tape, p.w_m);
    let mut state = HiddenState::zeros(tape, batch, hidden, false);
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let x = tape.time_step(seq, t)?;
        state = gru_step(tape, p, x, state)?;
        out.push(state.h);
    }
    Ok(out)
}
