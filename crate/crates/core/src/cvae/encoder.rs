//! Equivariant attention encoder over block graphs.

use std::rc::Rc;

use ragbind_autograd::{Mat, Var};

use super::VaeConfig;
use crate::molgraph::vocab::{self, MAX_ATOMS, VOCAB_SIZE};
use crate::molgraph::{MolecularGraph, Role};
use crate::nn::{head_sum_matrix, rbf, Fwd, Init, LayerNorm, Linear, Mlp, ParamStore};

pub(crate) const NODE_FEATURES: usize = VOCAB_SIZE + 2 + MAX_ATOMS;

/// Per-block invariant input features: type one-hot, role one-hot and the
/// distance of each template atom to the block center.
pub(crate) fn node_features(graph: &MolecularGraph) -> Mat {
    let mut m = Mat::zeros(graph.len(), NODE_FEATURES);
    let role = match graph.role {
        Role::Binder => 0,
        Role::BindingSite => 1,
    };
    for (i, b) in graph.blocks.iter().enumerate() {
        m.set(i, b.block_type, 1.0);
        m.set(i, VOCAB_SIZE + role, 1.0);
        let c = b.center();
        for a in &b.atoms {
            if let Some(slot) = vocab::atom_slot(b.block_type, &a.name) {
                m.set(i, VOCAB_SIZE + 2 + slot, crate::geometry::dist(a.coord, c) / 5.0);
            }
        }
    }
    m
}

/// Receiver/sender index lists for a graph's directed edges.
pub(crate) fn edge_lists(graph: &MolecularGraph) -> (Rc<[usize]>, Rc<[usize]>) {
    let recv: Rc<[usize]> = graph.edges.iter().map(|e| e.src).collect();
    let send: Rc<[usize]> = graph.edges.iter().map(|e| e.dst).collect();
    (recv, send)
}

/// Difference vectors `x[recv] - x[send]` and their lengths.
pub(crate) fn edge_geometry(f: &Fwd, x: Var, recv: &Rc<[usize]>, send: &Rc<[usize]>) -> (Var, Var) {
    let g = f.g;
    let r = g.sub(g.gather_rows(x, recv.clone()), g.gather_rows(x, send.clone()));
    let d = g.sqrt(g.add_scalar(g.sum_cols(g.square(r)), 1e-8));
    (r, d)
}

/// One multi-head attention message-passing layer with an EGNN-style
/// coordinate update.
#[derive(Clone, Debug)]
pub(crate) struct EquivariantLayer {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    edge: Linear,
    coord: Linear,
    ln1: LayerNorm,
    ffn: Mlp,
    ln2: LayerNorm,
    heads: usize,
    n_rbf: usize,
    cutoff: f64,
}

impl EquivariantLayer {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        hidden: usize,
        heads: usize,
        edge_size: usize,
        n_rbf: usize,
        cutoff: f64,
    ) -> Self {
        Self {
            q: Linear::new(store, init, &format!("{name}.q"), hidden, hidden, false),
            k: Linear::new(store, init, &format!("{name}.k"), hidden + edge_size, hidden, false),
            v: Linear::new(store, init, &format!("{name}.v"), hidden + edge_size, hidden, false),
            o: Linear::new(store, init, &format!("{name}.o"), hidden, hidden, true),
            edge: Linear::new(store, init, &format!("{name}.edge"), n_rbf, edge_size, true),
            coord: Linear::new(store, init, &format!("{name}.coord"), hidden, 1, true),
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), hidden),
            ffn: Mlp::new(store, init, &format!("{name}.ffn"), &[hidden, 2 * hidden, hidden]),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), hidden),
            heads,
            n_rbf,
            cutoff,
        }
    }

    /// Attention messages and coordinate displacement; `h` and `x` untouched.
    pub(crate) fn messages(&self, f: &Fwd, h: Var, x: Var, recv: &Rc<[usize]>, send: &Rc<[usize]>, inv_deg: Var) -> (Var, Var) {
        let g = f.g;
        let (n, hidden) = g.shape(h);
        let (r, d) = edge_geometry(f, x, recv, send);
        let e = self.edge.forward(f, rbf(f, d, self.n_rbf, self.cutoff));
        let kin = g.concat_cols(&[g.gather_rows(h, send.clone()), e]);
        let qe = g.gather_rows(self.q.forward(f, h), recv.clone());
        let ke = self.k.forward(f, kin);
        let ve = self.v.forward(f, kin);
        let sum = head_sum_matrix(hidden, self.heads);
        let dh = (hidden / self.heads) as f64;
        let logits = g.scale(g.matmul(g.mul(qe, ke), g.constant(sum.clone())), 1.0 / dh.sqrt());
        let alpha = g.segment_softmax(logits, recv.clone());
        let m = g.mul(g.matmul(alpha, g.constant(sum.transpose())), ve);
        let agg = g.scatter_add_rows(m, recv.clone(), n);
        let phi = g.tanh(self.coord.forward(f, m));
        let dx = g.mul(g.scatter_add_rows(g.mul(r, phi), recv.clone(), n), inv_deg);
        (agg, dx)
    }

    pub(crate) fn attend(&self, f: &Fwd, h: Var, agg: Var) -> Var {
        self.attend_gated(f, h, agg, None)
    }

    pub(crate) fn feed_forward(&self, f: &Fwd, h: Var) -> Var {
        self.feed_forward_gated(f, h, None)
    }

    /// Residual branch scaled by `1 + gate` when a gate row is given.
    pub(crate) fn attend_gated(&self, f: &Fwd, h: Var, agg: Var, gate: Option<Var>) -> Var {
        let out = gated(f, self.o.forward(f, agg), gate);
        self.ln1.forward(f, f.g.add(h, out))
    }

    pub(crate) fn feed_forward_gated(&self, f: &Fwd, h: Var, gate: Option<Var>) -> Var {
        let out = gated(f, self.ffn.forward(f, h), gate);
        self.ln2.forward(f, f.g.add(h, out))
    }
}

fn gated(f: &Fwd, x: Var, gate: Option<Var>) -> Var {
    match gate {
        Some(a) => f.g.add(x, f.g.mul(x, a)),
        None => x,
    }
}

/// `n x 1` column of `1 / max(deg, 1)` over receivers.
pub(crate) fn inverse_degree(recv: &[usize], n: usize) -> Mat {
    let mut deg = vec![0usize; n];
    for &i in recv {
        deg[i] += 1;
    }
    Mat::column(&deg.iter().map(|&d| 1.0 / d.max(1) as f64).collect::<Vec<_>>())
}

#[derive(Clone, Debug)]
pub(crate) struct Encoder {
    input: Linear,
    layers: Vec<EquivariantLayer>,
    mu: Linear,
    sigma: Linear,
    sigma_vec: Linear,
}

/// Encoder outputs on the tape.
pub(crate) struct EncOut {
    pub mu: Var,
    pub sigma: Var,
    pub mu_vec: Var,
    /// `n x 1`; the coordinate posterior is isotropic.
    pub sigma_vec: Var,
    /// `1 x hidden` mean of final hidden states.
    pub pooled: Var,
}

pub(crate) const SIGMA_FLOOR: f64 = 1e-6;

impl Encoder {
    pub(crate) fn new(store: &mut ParamStore, init: &mut Init, c: &VaeConfig) -> Self {
        Self {
            input: Linear::new(store, init, "enc.input", NODE_FEATURES, c.hidden, true),
            layers: (0..c.layers)
                .map(|l| {
                    EquivariantLayer::new(store, init, &format!("enc.layer{l}"), c.hidden, c.heads, c.edge_size, c.n_rbf, c.rbf_cutoff)
                })
                .collect(),
            mu: Linear::new(store, init, "enc.mu", c.hidden, c.latent, true),
            sigma: Linear::new(store, init, "enc.sigma", c.hidden, c.latent, true),
            sigma_vec: Linear::new(store, init, "enc.sigma_vec", c.hidden, 1, true),
        }
    }

    pub(crate) fn forward(&self, f: &Fwd, graph: &MolecularGraph) -> EncOut {
        let g = f.g;
        let n = graph.len();
        let mut h = self.input.forward(f, g.constant(node_features(graph)));
        let centers: Vec<Vec<f64>> = graph.centers().iter().map(|c| c.to_vec()).collect();
        let mut x = g.constant(Mat::from_rows(&centers));
        let (recv, send) = edge_lists(graph);
        if !recv.is_empty() {
            let inv_deg = g.constant(inverse_degree(&recv, n));
            for layer in &self.layers {
                let (agg, dx) = layer.messages(f, h, x, &recv, &send, inv_deg);
                x = g.add(x, dx);
                h = layer.feed_forward(f, layer.attend(f, h, agg));
            }
        }
        let pos = |v: Var| g.add_scalar(g.softplus(v), SIGMA_FLOOR);
        EncOut {
            mu: self.mu.forward(f, h),
            sigma: pos(self.sigma.forward(f, h)),
            mu_vec: x,
            sigma_vec: pos(self.sigma_vec.forward(f, h)),
            pooled: g.mean_rows(h),
        }
    }
}
