use rand::Rng;

use super::{init, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// Weights of a gated recurrent unit with hidden size `H` and input size `I`.
///
/// `w*` are `H x I`, `u*` are `H x H`, `b*` are `1 x H`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GruParams {
    pub wr: ParamId,
    pub wz: ParamId,
    pub wn: ParamId,
    pub ur: ParamId,
    pub uz: ParamId,
    pub un: ParamId,
    pub br: ParamId,
    pub bz: ParamId,
    pub bn: ParamId,
}

impl GruParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let mut w = |name: &str, rows: usize, cols: usize, rng: &mut R| {
            store.add(format!("{prefix}.{name}"), init::glorot(rng, rows, cols))
        };
        let wr = w("wr", hidden, input, rng);
        let wz = w("wz", hidden, input, rng);
        let wn = w("wn", hidden, input, rng);
        let ur = w("ur", hidden, hidden, rng);
        let uz = w("uz", hidden, hidden, rng);
        let un = w("un", hidden, hidden, rng);
        let br = store.add(format!("{prefix}.br"), Tensor::zeros(1, hidden));
        let bz = store.add(format!("{prefix}.bz"), Tensor::zeros(1, hidden));
        let bn = store.add(format!("{prefix}.bn"), Tensor::zeros(1, hidden));
        Self {
            wr,
            wz,
            wn,
            ur,
            uz,
            un,
            br,
            bz,
            bn,
        }
    }

    pub fn hidden(&self, store: &ParamStore) -> usize {
        store.get(self.ur).rows()
    }

    pub fn input(&self, store: &ParamStore) -> usize {
        store.get(self.wr).cols()
    }
}

/// One GRU step for a batch of rows.
///
/// ```text
/// r  = σ(Wr m + Ur h + br)
/// z  = σ(Wz m + Uz h + bz)
/// n  = tanh(Wn m + r ⊙ (Un h) + bn)
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
///
/// `h` is `B x H`, `m` is `B x I`.
pub fn gru_cell(tape: &mut Tape, store: &ParamStore, p: &GruParams, h: Var, m: Var) -> Result<Var> {
    let wr = tape.param(store, p.wr);
    let wz = tape.param(store, p.wz);
    let wn = tape.param(store, p.wn);
    let ur = tape.param(store, p.ur);
    let uz = tape.param(store, p.uz);
    let un = tape.param(store, p.un);
    let br = tape.param(store, p.br);
    let bz = tape.param(store, p.bz);
    let bn = tape.param(store, p.bn);

    let gate = |tape: &mut Tape, w: Var, u: Var, b: Var| -> Result<Var> {
        let a = tape.matmul_t(m, w)?;
        let c = tape.matmul_t(h, u)?;
        let s = tape.add(a, c)?;
        let s = tape.add_row(s, b)?;
        Ok(tape.sigmoid(s))
    };
    let r = gate(tape, wr, ur, br)?;
    let z = gate(tape, wz, uz, bz)?;

    let a = tape.matmul_t(m, wn)?;
    let uh = tape.matmul_t(h, un)?;
    let ruh = tape.mul(r, uh)?;
    let s = tape.add(a, ruh)?;
    let s = tape.add_row(s, bn)?;
    let n = tape.tanh(s);

    let one_minus_z = tape.one_minus(z);
    let left = tape.mul(one_minus_z, n)?;
    let right = tape.mul(z, h)?;
    tape.add(left, right)
}
