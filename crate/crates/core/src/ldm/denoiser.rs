//! Time-conditioned equivariant noise predictor over binder and site nodes.

use std::rc::Rc;

use ragbind_autograd::{Mat, Var};

use super::{ConditioningMode, LdmConfig};
use crate::cvae::encoder::{inverse_degree, EquivariantLayer};
use crate::molgraph::graph::knn_edges;
use crate::nn::{cross_attention, sinusoidal_embedding, Fwd, Init, LayerNorm, Linear, Mlp, ParamStore};

#[derive(Clone, Debug)]
pub(crate) enum Conditioning {
    CrossAttention { q: Linear, k: Linear, v: Linear, ln: LayerNorm },
    AdalnZero { scale: Linear },
    InContext { q: Linear, k: Linear, v: Linear, fuse: Mlp },
}

impl Conditioning {
    fn new(store: &mut ParamStore, init: &mut Init, name: &str, c: &LdmConfig) -> Self {
        let (h, p) = (c.hidden, c.prompt_dim);
        let qkv = |store: &mut ParamStore, init: &mut Init| {
            (
                Linear::new(store, init, &format!("{name}.q"), h, h, false),
                Linear::new(store, init, &format!("{name}.k"), p, h, false),
                Linear::new(store, init, &format!("{name}.v"), p, h, false),
            )
        };
        match c.conditioning {
            ConditioningMode::CrossAttention => {
                let (q, k, v) = qkv(store, init);
                Self::CrossAttention {
                    q,
                    k,
                    v,
                    ln: LayerNorm::new(store, &format!("{name}.ln"), h),
                }
            }
            ConditioningMode::AdalnZero => Self::AdalnZero {
                scale: Linear::zeros(store, &format!("{name}.scale"), p, 2 * h),
            },
            ConditioningMode::InContext => {
                let (q, k, v) = qkv(store, init);
                let fuse = Mlp::new(store, init, &format!("{name}.fuse"), &[2 * h, h, h]);
                let last = fuse.layers.last().unwrap();
                *store.get_mut(last.w) = Mat::zeros(h, h);
                Self::InContext { q, k, v, fuse }
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn param_ids(&self) -> Vec<crate::nn::ParamId> {
        let lin = |l: &Linear| std::iter::once(l.w).chain(l.b).collect::<Vec<_>>();
        match self {
            Self::CrossAttention { q, k, v, ln } => [lin(q), lin(k), lin(v), vec![ln.gamma, ln.beta]].concat(),
            Self::AdalnZero { scale } => lin(scale),
            Self::InContext { q, k, v, fuse } => [lin(q), lin(k), lin(v), fuse.layers.iter().flat_map(lin).collect()].concat(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct DenoiserLayer {
    attn: EquivariantLayer,
    pub(crate) cond: Conditioning,
}

/// Fixed site nodes in the diffusion frame.
pub(crate) struct SiteNodes {
    pub z: Mat,
    pub x: Mat,
}

#[derive(Clone, Debug)]
pub(crate) struct Denoiser {
    input: Linear,
    time: Mlp,
    pub(crate) layers: Vec<DenoiserLayer>,
    eps_scalar: Linear,
    heads: usize,
    hidden: usize,
    latent: usize,
    k_neighbors: usize,
    time_dim: usize,
}

impl Denoiser {
    pub(crate) fn new(store: &mut ParamStore, init: &mut Init, c: &LdmConfig) -> Self {
        Self {
            input: Linear::new(store, init, "ldm.input", c.latent + 2, c.hidden, true),
            time: Mlp::new(store, init, "ldm.time", &[c.time_dim, c.hidden, c.hidden]),
            layers: (0..c.layers)
                .map(|l| {
                    let name = format!("ldm.layer{l}");
                    DenoiserLayer {
                        attn: EquivariantLayer::new(store, init, &name, c.hidden, c.heads, c.edge_size, c.n_rbf, c.rbf_cutoff),
                        cond: Conditioning::new(store, init, &format!("{name}.cond"), c),
                    }
                })
                .collect(),
            eps_scalar: Linear::new(store, init, "ldm.eps", c.hidden, c.latent, true),
            heads: c.cross_heads,
            hidden: c.hidden,
            latent: c.latent,
            k_neighbors: c.k_neighbors,
            time_dim: c.time_dim,
        }
    }

    fn attend_prompt(&self, f: &Fwd, h: Var, prompt: Var, q: &Linear, k: &Linear, v: &Linear) -> Var {
        cross_attention(f, q.forward(f, h), k.forward(f, prompt), v.forward(f, prompt), self.heads)
    }

    /// Noise prediction for the binder rows of `u` (`n x (latent + 3)`) at a
    /// step with cumulative signal level `alpha_bar`. The network output `v`
    /// enters as `sqrt(1 - alpha_bar) u + sqrt(alpha_bar) v`, with binder
    /// coordinates taken relative to the site centroid. An empty or absent
    /// prompt skips every conditioning block.
    pub(crate) fn forward(&self, f: &Fwd, u: Var, site: &SiteNodes, prompt: Option<&Mat>, t: usize, alpha_bar: f64) -> Var {
        let g = f.g;
        let n = g.shape(u).0;
        let m = site.z.rows();
        let d = self.latent;
        let prompt = prompt.filter(|p| p.rows() > 0).map(|p| g.constant(p.clone()));

        let zx = g.slice_cols(u, 0, d);
        let xx = g.slice_cols(u, d, d + 3);
        let mut role = Mat::zeros(n + m, 2);
        for i in 0..n + m {
            role.set(i, usize::from(i >= n), 1.0);
        }
        let z_all = g.concat_rows(&[zx, g.constant(site.z.clone())]);
        let x0 = g.concat_rows(&[xx, g.constant(site.x.clone())]);
        let temb = self.time.forward(f, g.constant(sinusoidal_embedding(&[t as f64], self.time_dim)));
        let mut h = g.add(self.input.forward(f, g.concat_cols(&[z_all, g.constant(role)])), temb);

        let xv = g.value(x0);
        let points: Vec<[f64; 3]> = (0..n + m).map(|i| xv.row_slice(i).try_into().unwrap()).collect();
        let pairs = knn_edges(&points, self.k_neighbors);
        let recv: Rc<[usize]> = pairs.iter().map(|p| p.0).collect();
        let send: Rc<[usize]> = pairs.iter().map(|p| p.1).collect();
        let inv_deg = g.constant(inverse_degree(&recv, n + m));

        let mut x = x0;
        for layer in &self.layers {
            let mut gates = None;
            match (&layer.cond, prompt) {
                (Conditioning::InContext { q, k, v, fuse }, Some(p)) => {
                    let sel = self.attend_prompt(f, h, p, q, k, v);
                    h = g.add(h, fuse.forward(f, g.concat_cols(&[h, sel])));
                }
                (Conditioning::AdalnZero { scale }, Some(p)) => {
                    let a = scale.forward(f, g.mean_rows(p));
                    gates = Some((g.slice_cols(a, 0, self.hidden), g.slice_cols(a, self.hidden, 2 * self.hidden)));
                }
                _ => {}
            }
            if !recv.is_empty() {
                let (agg, dx) = layer.attn.messages(f, h, x, &recv, &send, inv_deg);
                x = g.add(x, dx);
                h = layer.attn.attend_gated(f, h, agg, gates.map(|p| p.0));
            }
            if let (Conditioning::CrossAttention { q, k, v, ln }, Some(p)) = (&layer.cond, prompt) {
                h = ln.forward(f, g.add(h, self.attend_prompt(f, h, p, q, k, v)));
            }
            h = layer.attn.feed_forward_gated(f, h, gates.map(|p| p.1));
        }
        let binder: Rc<[usize]> = (0..n).collect();
        let v_z = self.eps_scalar.forward(f, g.gather_rows(h, binder.clone()));
        let v_x = g.gather_rows(g.sub(x, x0), binder);
        let offset = if m > 0 { g.sub(xx, g.constant(site.x.sum_rows().map(|v| v / m as f64))) } else { xx };
        let (skip, out) = ((1.0 - alpha_bar).sqrt(), alpha_bar.sqrt());
        g.add(g.scale(g.concat_cols(&[zx, offset]), skip), g.scale(g.concat_cols(&[v_z, v_x]), out))
    }
}
