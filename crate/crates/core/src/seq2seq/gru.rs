use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Parameter handles of one GRU cell.
///
/// Gate columns are packed as `[z | r | candidate]`:
/// `w` is `[input, 3H]`, `u_zr` is `[H, 2H]`, `u_h` is `[H, H]`, `b` is `[3H]`.
#[derive(Clone, Copy, Debug)]
pub struct GruCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w: ParamId,
    pub u_zr: ParamId,
    pub u_h: ParamId,
    pub b: ParamId,
}

/// A cell's parameters bound onto a graph.
#[derive(Clone, Copy, Debug)]
pub struct BoundGru {
    pub hidden_dim: usize,
    w: Var,
    u_zr: Var,
    u_h: Var,
    b: Var,
}

impl GruCell {
    /// Registers parameters under `prefix`, uniform in `[-1/sqrt(H), 1/sqrt(H)]`.
    pub fn register<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let w = store.add(format!("{prefix}.w"), Tensor::uniform(&[input_dim, 3 * hidden_dim], bound, rng));
        let u_zr = store.add(format!("{prefix}.u_zr"), Tensor::uniform(&[hidden_dim, 2 * hidden_dim], bound, rng));
        let u_h = store.add(format!("{prefix}.u_h"), Tensor::uniform(&[hidden_dim, hidden_dim], bound, rng));
        let b = store.add(format!("{prefix}.b"), Tensor::uniform(&[3 * hidden_dim], bound, rng));
        GruCell { input_dim, hidden_dim, w, u_zr, u_h, b }
    }

    /// Resolves an existing cell by name, checking its shapes.
    pub fn lookup<T: Scalar>(store: &ParamStore<T>, prefix: &str) -> Option<Self> {
        let w = store.find(&format!("{prefix}.w"))?;
        let u_zr = store.find(&format!("{prefix}.u_zr"))?;
        let u_h = store.find(&format!("{prefix}.u_h"))?;
        let b = store.find(&format!("{prefix}.b"))?;
        let ws = store.get(w).shape();
        let (input_dim, hidden_dim) = (ws[0], ws[1] / 3);
        let ok = store.get(u_zr).shape() == [hidden_dim, 2 * hidden_dim]
            && store.get(u_h).shape() == [hidden_dim, hidden_dim]
            && store.get(b).shape() == [3 * hidden_dim];
        ok.then_some(GruCell { input_dim, hidden_dim, w, u_zr, u_h, b })
    }

    pub fn bind<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, trainable: bool) -> BoundGru {
        let mut get = |id| if trainable { g.param(store, id) } else { g.frozen(store, id) };
        BoundGru { hidden_dim: self.hidden_dim, w: get(self.w), u_zr: get(self.u_zr), u_h: get(self.u_h), b: get(self.b) }
    }
}

/// `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
/// `h~ = tanh(W_h x + U_h (r ⊙ h) + b_h)`, `h' = (1 − z) ⊙ h + z ⊙ h~`.
pub fn gru_step<T: Scalar>(g: &mut Graph<T>, cell: &BoundGru, x: Var, h: Var) -> Result<Var> {
    let hd = cell.hidden_dim;
    let xw = g.matmul(x, cell.w)?;
    let xw = g.add_row(xw, cell.b)?;
    let hu = g.matmul(h, cell.u_zr)?;
    let xz = g.slice_cols(xw, 0, hd)?;
    let xr = g.slice_cols(xw, hd, hd)?;
    let xh = g.slice_cols(xw, 2 * hd, hd)?;
    let hz = g.slice_cols(hu, 0, hd)?;
    let hr = g.slice_cols(hu, hd, hd)?;
    let z = g.add(xz, hz)?;
    let z = g.sigmoid(z);
    let r = g.add(xr, hr)?;
    let r = g.sigmoid(r);
    let rh = g.mul(r, h)?;
    let cand = g.matmul(rh, cell.u_h)?;
    let cand = g.add(xh, cand)?;
    let cand = g.tanh(cand);
    let delta = g.sub(cand, h)?;
    let step = g.mul(z, delta)?;
    g.add(h, step)
}
