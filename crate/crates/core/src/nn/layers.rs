use std::rc::Rc;

use ragbind_autograd::{Mat, Var};

use super::{Fwd, Init, ParamId, ParamStore};

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, fan_in: usize, fan_out: usize, bias: bool) -> Self {
        let w = store.add(format!("{name}.w"), init.uniform(fan_in, fan_out, fan_in));
        let b = bias.then(|| store.add(format!("{name}.b"), Mat::zeros(1, fan_out)));
        Self { w, b, fan_in, fan_out }
    }

    /// All weights start at zero.
    pub fn zeros(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let w = store.add(format!("{name}.w"), Mat::zeros(fan_in, fan_out));
        let b = Some(store.add(format!("{name}.b"), Mat::zeros(1, fan_out)));
        Self { w, b, fan_in, fan_out }
    }

    pub fn forward(&self, f: &Fwd, x: Var) -> Var {
        let y = f.g.matmul(x, f.param(self.w));
        match self.b {
            Some(b) => f.g.add(y, f.param(b)),
            None => y,
        }
    }
}

/// Linear layers with SiLU between them.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, sizes: &[usize]) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, init, &format!("{name}.{i}"), w[0], w[1], true))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, f: &Fwd, mut x: Var) -> Var {
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(f, x);
            if i + 1 < n {
                x = f.g.silu(x);
            }
        }
        x
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Mat::filled(1, dim, 1.0)),
            beta: store.add(format!("{name}.beta"), Mat::zeros(1, dim)),
        }
    }

    pub fn forward(&self, f: &Fwd, x: Var) -> Var {
        let n = f.g.layer_norm_rows(x, Self::EPS);
        f.g.add(f.g.mul(n, f.param(self.gamma)), f.param(self.beta))
    }
}

/// Gaussian radial basis expansion of an `E x 1` distance column, with
/// centers spread evenly over `[0, cutoff]`.
pub fn rbf(f: &Fwd, d: Var, n: usize, cutoff: f64) -> Var {
    let step = cutoff / (n.max(2) - 1) as f64;
    let centers: Vec<f64> = (0..n).map(|k| k as f64 * step).collect();
    let c = f.g.constant(Mat::row(&centers));
    let diff = f.g.scale(f.g.sub(d, c), 1.0 / step);
    f.g.exp(f.g.neg(f.g.square(diff)))
}

/// Sinusoidal embedding of scalar positions, `n x dim`.
pub fn sinusoidal_embedding(t: &[f64], dim: usize) -> Mat {
    let half = dim / 2;
    let mut out = Mat::zeros(t.len(), dim);
    for (r, &tv) in t.iter().enumerate() {
        for k in 0..half {
            let freq = (-(10000f64.ln()) * k as f64 / half.max(1) as f64).exp();
            out.set(r, k, (tv * freq).sin());
            out.set(r, half + k, (tv * freq).cos());
        }
    }
    out
}

/// `hidden x heads` 0/1 matrix summing each head's slice of features.
pub fn head_sum_matrix(hidden: usize, heads: usize) -> Mat {
    assert!(heads > 0 && hidden.is_multiple_of(heads), "hidden {hidden} not divisible by {heads} heads");
    let dh = hidden / heads;
    let mut m = Mat::zeros(hidden, heads);
    for i in 0..hidden {
        m.set(i, i / dh, 1.0);
    }
    m
}

/// Multi-head dot-product attention of every row of `q` (`n x h`) over all
/// rows of `k`, `v` (`m x h`). Returns `n x h`.
pub fn cross_attention(f: &Fwd, q: Var, k: Var, v: Var, heads: usize) -> Var {
    let g = f.g;
    let (n, h) = g.shape(q);
    let m = g.shape(k).0;
    let dh = (h / heads) as f64;
    let qi: Rc<[usize]> = (0..n).flat_map(|i| std::iter::repeat_n(i, m)).collect();
    let kj: Rc<[usize]> = (0..n).flat_map(|_| 0..m).collect();
    let qe = g.gather_rows(q, qi.clone());
    let ke = g.gather_rows(k, kj.clone());
    let ve = g.gather_rows(v, kj);
    let sum = g.constant(head_sum_matrix(h, heads));
    let logits = g.scale(g.matmul(g.mul(qe, ke), sum), 1.0 / dh.sqrt());
    let alpha = g.segment_softmax(logits, qi.clone());
    let expand = g.constant(head_sum_matrix(h, heads).transpose());
    let weighted = g.mul(g.matmul(alpha, expand), ve);
    g.scatter_add_rows(weighted, qi, n)
}
