//! Type head plus an equivariant flow-matching velocity field over atoms.

use std::rc::Rc;

use ragbind_autograd::{Mat, Var};

use super::encoder::{edge_geometry, inverse_degree};
use super::VaeConfig;
use crate::molgraph::vocab::{self, MAX_ATOMS, VOCAB_SIZE};
use crate::nn::{rbf, sinusoidal_embedding, Fwd, Init, LayerNorm, Linear, Mlp, ParamStore};

const TIME_DIM: usize = 16;

/// Flattened atom list for a sequence of blocks.
#[derive(Clone, Debug)]
pub(crate) struct AtomLayout {
    pub types: Vec<usize>,
    pub blk: Vec<usize>,
    pub slot: Vec<usize>,
    pub offsets: Vec<usize>,
    pub counts: Vec<usize>,
}

impl AtomLayout {
    /// Full templates for each block type.
    pub(crate) fn new(types: &[usize]) -> Self {
        let slots: Vec<Vec<usize>> = types.iter().map(|&t| (0..vocab::template(t).atoms.len()).collect()).collect();
        Self::from_slots(types, &slots)
    }

    /// The atoms actually present in `blocks`, with their coordinates.
    pub(crate) fn from_blocks(blocks: &[crate::molgraph::Block]) -> (Self, Mat) {
        let types: Vec<usize> = blocks.iter().map(|b| b.block_type).collect();
        let mut coords = Vec::new();
        let slots: Vec<Vec<usize>> = blocks
            .iter()
            .map(|b| {
                b.atoms
                    .iter()
                    .filter_map(|a| {
                        let s = vocab::atom_slot(b.block_type, &a.name)?;
                        coords.push(a.coord.to_vec());
                        Some(s)
                    })
                    .collect()
            })
            .collect();
        let layout = Self::from_slots(&types, &slots);
        let coords = if coords.is_empty() { Mat::zeros(0, 3) } else { Mat::from_rows(&coords) };
        (layout, coords)
    }

    fn from_slots(types: &[usize], slots: &[Vec<usize>]) -> Self {
        let (mut blk, mut slot, mut offsets, mut counts) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, s) in slots.iter().enumerate() {
            offsets.push(blk.len());
            counts.push(s.len());
            for &x in s {
                blk.push(i);
                slot.push(x);
            }
        }
        Self {
            types: types.to_vec(),
            blk,
            slot,
            offsets,
            counts,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.blk.len()
    }

    /// Atom index of block `i`'s Cα, if present.
    pub(crate) fn ca(&self, i: usize) -> Option<usize> {
        (self.offsets[i]..self.offsets[i] + self.counts[i]).find(|&a| self.slot[a] == 1)
    }

    fn features(&self) -> Mat {
        let mut m = Mat::zeros(self.len(), VOCAB_SIZE + MAX_ATOMS);
        for a in 0..self.len() {
            m.set(a, self.types[self.blk[a]], 1.0);
            m.set(a, VOCAB_SIZE + self.slot[a], 1.0);
        }
        m
    }
}

fn nearest(points: &Mat, query: &[f64], k: usize, skip: Option<usize>) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = (0..points.rows())
        .filter(|&j| Some(j) != skip)
        .map(|j| {
            let p = points.row_slice(j);
            ((0..3).map(|c| (p[c] - query[c]).powi(2)).sum::<f64>(), j)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d.into_iter().map(|(_, j)| j).collect()
}

/// Receiver atoms and sender points. Points are indexed as
/// `[atoms | binder latents | site latents]`.
#[derive(Clone, Debug)]
pub(crate) struct DecoderEdges {
    pub recv: Rc<[usize]>,
    pub send: Rc<[usize]>,
}

impl DecoderEdges {
    pub(crate) fn new(layout: &AtomLayout, zvec: &Mat, zyvec: &Mat, k: usize, k_site: usize) -> Self {
        let (na, nb) = (layout.len(), zvec.rows());
        let mut recv = Vec::new();
        let mut send = Vec::new();
        let mut block_nbrs = Vec::with_capacity(nb);
        for i in 0..nb {
            let q = zvec.row_slice(i);
            let mut pts: Vec<usize> = vec![na + i];
            pts.extend(nearest(zvec, q, k, Some(i)).into_iter().map(|j| na + j));
            pts.extend(nearest(zyvec, q, k_site, None).into_iter().map(|s| na + nb + s));
            block_nbrs.push(pts);
        }
        for a in 0..na {
            let i = layout.blk[a];
            let start = layout.offsets[i];
            let end = start + layout.counts[i];
            for b in (start..end).filter(|&b| b != a) {
                recv.push(a);
                send.push(b);
            }
            for &p in &block_nbrs[i] {
                recv.push(a);
                send.push(p);
            }
        }
        Self {
            recv: recv.into(),
            send: send.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Decoder {
    pub type_head: Mlp,
    atom_in: Linear,
    z_in: Linear,
    point_in: Linear,
    time_in: Linear,
    layers: Vec<(Mlp, LayerNorm)>,
    velocity: Mlp,
    bond_head: Mlp,
    n_rbf: usize,
    cutoff: f64,
}

/// Latents entering the velocity field.
pub(crate) struct LatentInputs {
    pub z: Var,
    pub zvec: Var,
    pub zy: Var,
    pub zyvec: Var,
}

impl Decoder {
    pub(crate) fn new(store: &mut ParamStore, init: &mut Init, c: &VaeConfig) -> Self {
        let h = c.hidden;
        Self {
            type_head: Mlp::new(store, init, "dec.type", &[c.latent, h, VOCAB_SIZE]),
            atom_in: Linear::new(store, init, "dec.atom_in", VOCAB_SIZE + MAX_ATOMS, h, true),
            z_in: Linear::new(store, init, "dec.z_in", c.latent, h, false),
            point_in: Linear::new(store, init, "dec.point_in", c.latent + 2, h, true),
            time_in: Linear::new(store, init, "dec.time_in", TIME_DIM, h, false),
            layers: (0..c.decoder_layers)
                .map(|l| {
                    (
                        Mlp::new(store, init, &format!("dec.layer{l}.msg"), &[2 * h + c.n_rbf, h, h]),
                        LayerNorm::new(store, &format!("dec.layer{l}.ln"), h),
                    )
                })
                .collect(),
            velocity: Mlp::new(store, init, "dec.velocity", &[2 * h + c.n_rbf, h, 1]),
            bond_head: Mlp::new(store, init, "dec.bond", &[2 * c.latent + c.n_rbf, h, 2]),
            n_rbf: c.n_rbf,
            cutoff: c.rbf_cutoff,
        }
    }

    /// Velocity at atom positions `xt` (`A x 3`) and flow time `t`.
    pub(crate) fn velocity(&self, f: &Fwd, layout: &AtomLayout, edges: &DecoderEdges, xt: Var, lat: &LatentInputs, t: f64) -> Var {
        let g = f.g;
        let na = layout.len();
        let (nb, ns) = (g.shape(lat.z).0, g.shape(lat.zy).0);
        let time = self.time_in.forward(f, g.constant(sinusoidal_embedding(&[100.0 * t], TIME_DIM)));
        let blk: Rc<[usize]> = layout.blk.clone().into();
        let mut ha = g.add(
            g.add(self.atom_in.forward(f, g.constant(layout.features())), g.gather_rows(self.z_in.forward(f, lat.z), blk)),
            time,
        );
        let role = |n: usize, r: usize| {
            let mut m = Mat::zeros(n, 2);
            for i in 0..n {
                m.set(i, r, 1.0);
            }
            g.constant(m)
        };
        let hb = g.add(self.point_in.forward(f, g.concat_cols(&[lat.z, role(nb, 0)])), time);
        let mut points = vec![xt, lat.zvec];
        let mut feats = vec![hb];
        if ns > 0 {
            points.push(lat.zyvec);
            feats.push(g.add(self.point_in.forward(f, g.concat_cols(&[lat.zy, role(ns, 1)])), time));
        }
        let x = g.concat_rows(&points);
        let (r, d) = edge_geometry(f, x, &edges.recv, &edges.send);
        let e = rbf(f, d, self.n_rbf, self.cutoff);
        let inv_deg = g.constant(inverse_degree(&edges.recv, na));
        let edge_feat = |ha: Var| {
            let mut all = vec![ha];
            all.extend(&feats);
            let h = g.concat_rows(&all);
            g.concat_cols(&[g.gather_rows(h, edges.recv.clone()), g.gather_rows(h, edges.send.clone()), e])
        };
        for (msg, ln) in &self.layers {
            let m = msg.forward(f, edge_feat(ha));
            let agg = g.mul(g.scatter_add_rows(m, edges.recv.clone(), na), inv_deg);
            ha = ln.forward(f, g.add(ha, agg));
        }
        let phi = self.velocity.forward(f, edge_feat(ha));
        g.scatter_add_rows(g.mul(r, phi), edges.recv.clone(), na)
    }

    /// Two-class bond logits (none, peptide) for block pairs.
    pub(crate) fn bond_logits(&self, f: &Fwd, z: Var, zvec: Var, pairs: &[(usize, usize)]) -> Var {
        let g = f.g;
        let a: Rc<[usize]> = pairs.iter().map(|p| p.0).collect();
        let b: Rc<[usize]> = pairs.iter().map(|p| p.1).collect();
        let (za, zb) = (g.gather_rows(z, a.clone()), g.gather_rows(z, b.clone()));
        let (_, d) = edge_geometry(f, zvec, &a, &b);
        let feat = g.concat_cols(&[g.add(za, zb), g.mul(za, zb), rbf(f, d, self.n_rbf, self.cutoff)]);
        self.bond_head.forward(f, feat)
    }
}
