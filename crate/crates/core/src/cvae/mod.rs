//! Contrastive variational autoencoder over block graphs.
//!
//! Binders and binding sites share one equivariant encoder. Each block gets a
//! Gaussian scalar latent and an isotropic Gaussian coordinate latent; the
//! mean of the final hidden states is the graph embedding (a key for sites, a
//! value for binders). The decoder predicts block types from the scalar
//! latents and moves atoms by a flow-matching velocity field.

mod decoder;
pub(crate) mod encoder;
mod losses;

use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use ragbind_autograd::{Graph, Mat, Var};
use serde::{Deserialize, Serialize};

use crate::geometry::RigidTransform;
use crate::molgraph::vocab::{self, VOCAB_SIZE};
use crate::molgraph::{build_block_graph, Atom, Block, BondKind, ComplexRecord, MolecularGraph, Role};
use crate::nn::{Adam, Checkpoint, Fwd, Init, ParamStore};
use crate::{Error, Result};

pub(crate) use decoder::{AtomLayout, DecoderEdges, LatentInputs};
pub use losses::{contrastive_loss, contrastive_terms, gaussian_kl, kl_loss, recon_loss};

use decoder::Decoder;
use encoder::{EncOut, Encoder, SIGMA_FLOOR};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub block_type: f64,
    pub atom_coord: f64,
    pub contrastive: f64,
    pub local_distance: f64,
    pub bond: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            block_type: 1.0,
            atom_coord: 1.0,
            contrastive: 1.0,
            local_distance: 0.5,
            bond: 0.5,
        }
    }
}

impl LossWeights {
    pub fn total(&self, r: &VaeLossReport) -> f64 {
        self.block_type * r.recon_type
            + self.atom_coord * r.recon_field
            + r.kl_scalar
            + r.kl_coord
            + self.contrastive * r.contrastive
            + self.local_distance * r.local_distance
            + self.bond * r.bond
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeConfig {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub edge_size: usize,
    pub n_rbf: usize,
    pub rbf_cutoff: f64,
    pub latent: usize,
    pub k_neighbors: usize,
    pub decoder_layers: usize,
    /// Site latent points each binder block attends to in the decoder.
    pub site_neighbors: usize,
    pub flow_steps: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub tau: f64,
    /// Cα pairs closer than this (Å) enter the local distance loss.
    pub local_distance_cutoff: f64,
    pub weights: LossWeights,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            hidden: 512,
            layers: 6,
            heads: 8,
            edge_size: 64,
            n_rbf: 16,
            rbf_cutoff: 10.0,
            latent: 8,
            k_neighbors: 9,
            decoder_layers: 2,
            site_neighbors: 4,
            flow_steps: 10,
            lambda1: 0.8,
            lambda2: 0.6,
            tau: 0.07,
            local_distance_cutoff: 6.0,
            weights: LossWeights::default(),
        }
    }
}

impl VaeConfig {
    /// Small network for tests and desk-scale runs.
    pub fn toy() -> Self {
        Self {
            hidden: 32,
            layers: 2,
            heads: 4,
            edge_size: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden == 0 || self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return bad("vae hidden size must be a positive multiple of heads");
        }
        if self.latent == 0 || self.n_rbf < 2 || self.flow_steps == 0 {
            return bad("vae latent, n_rbf (>= 2) and flow_steps must be positive");
        }
        if self.tau <= 0.0 || self.rbf_cutoff <= 0.0 {
            return bad("vae tau and rbf_cutoff must be positive");
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return bad("KL weights must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentBlock {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub z: Vec<f64>,
    pub mu_vec: [f64; 3],
    pub sigma_vec: [f64; 3],
    pub z_vec: [f64; 3],
    pub block_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentCloud {
    pub blocks: Vec<LatentBlock>,
    /// Maps latent coordinates back to the original frame.
    pub frame: RigidTransform,
}

impl LatentCloud {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn z_matrix(&self) -> Mat {
        Mat::from_rows(&self.blocks.iter().map(|b| b.z.clone()).collect::<Vec<_>>())
    }

    pub fn z_vec_matrix(&self) -> Mat {
        Mat::from_rows(&self.blocks.iter().map(|b| b.z_vec.to_vec()).collect::<Vec<_>>())
    }

    /// Posterior means as the sample.
    pub fn at_mean(&self) -> Self {
        let mut out = self.clone();
        for b in &mut out.blocks {
            b.z = b.mu.clone();
            b.z_vec = b.mu_vec;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Key,
    Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEmbedding {
    pub vec: Vec<f64>,
    pub kind: EmbeddingKind,
}

/// Loss components. The KL fields already include their λ weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VaeLossReport {
    pub recon_type: f64,
    pub recon_field: f64,
    pub kl_scalar: f64,
    pub kl_coord: f64,
    pub contrastive: f64,
    pub bond: f64,
    pub local_distance: f64,
    pub total: f64,
}

impl VaeLossReport {
    /// First non-finite component, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        [
            ("recon_type", self.recon_type),
            ("recon_field", self.recon_field),
            ("kl_scalar", self.kl_scalar),
            ("kl_coord", self.kl_coord),
            ("contrastive", self.contrastive),
            ("bond", self.bond),
            ("local_distance", self.local_distance),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }

    fn accumulate(&mut self, other: &Self, w: f64) {
        self.recon_type += w * other.recon_type;
        self.recon_field += w * other.recon_field;
        self.kl_scalar += w * other.kl_scalar;
        self.kl_coord += w * other.kl_coord;
        self.contrastive += w * other.contrastive;
        self.bond += w * other.bond;
        self.local_distance += w * other.local_distance;
        self.total += w * other.total;
    }

    /// Mean of several reports.
    pub fn mean(reports: &[Self]) -> Self {
        let mut out = Self::default();
        for r in reports {
            out.accumulate(r, 1.0 / reports.len().max(1) as f64);
        }
        out
    }
}

/// `z = mu + sigma * eps`, `z_vec = mu_vec + sigma_vec * eps_vec`, with sigmas
/// floored at 1e-6.
pub fn reparameterize<R: Rng + ?Sized>(lb: &LatentBlock, rng: &mut R) -> LatentBlock {
    let mut out = lb.clone();
    out.z = lb
        .mu
        .iter()
        .zip(&lb.sigma)
        .map(|(m, s)| {
            let e: f64 = StandardNormal.sample(rng);
            m + s.max(SIGMA_FLOOR) * e
        })
        .collect();
    for c in 0..3 {
        let e: f64 = StandardNormal.sample(rng);
        out.z_vec[c] = lb.mu_vec[c] + lb.sigma_vec[c].max(SIGMA_FLOOR) * e;
    }
    out
}

/// Integrate `dx/dt = field(x, t)` from `t = 0` to `1` in `steps` uniform
/// Euler steps.
pub fn euler_integrate(x0: &Mat, steps: usize, mut field: impl FnMut(&Mat, f64) -> Mat) -> Mat {
    let steps = steps.max(1);
    let dt = 1.0 / steps as f64;
    let mut x = x0.clone();
    for k in 0..steps {
        let v = field(&x, k as f64 * dt);
        for (xi, vi) in x.data_mut().iter_mut().zip(v.data()) {
            *xi += vi * dt;
        }
    }
    x
}

fn normal_mat<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect())
}

/// Graph-level terms for one complex.
struct ComplexTerms {
    recon_type: Var,
    recon_field: Var,
    kl_scalar: Var,
    kl_coord: Var,
    bond: Var,
    local_distance: Var,
    key: Var,
    value: Var,
}

#[derive(Clone, Debug)]
pub struct Vae {
    pub config: VaeConfig,
    pub params: ParamStore,
    encoder: Encoder,
    decoder: Decoder,
}

impl Vae {
    pub const SECTION: &'static str = "vae";

    pub fn new(config: VaeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut init = Init::new(seed);
        let encoder = Encoder::new(&mut params, &mut init, &config);
        let decoder = Decoder::new(&mut params, &mut init, &config);
        Ok(Self {
            config,
            params,
            encoder,
            decoder,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let s = ck.section(Self::SECTION)?;
        let config: VaeConfig = serde_json::from_value(s.config.clone())?;
        let mut vae = Self::new(config, 0)?;
        vae.params.load_from(&s.params)?;
        Ok(vae)
    }

    pub fn write_to(&self, ck: &mut Checkpoint) -> Result<()> {
        ck.insert(Self::SECTION, serde_json::to_value(&self.config)?, self.params.clone());
        Ok(())
    }

    fn check_graph(graph: &MolecularGraph) -> Result<()> {
        if graph.is_empty() {
            return Err(Error::EmptyGraph("encode"));
        }
        Ok(())
    }

    /// Posterior parameters (with `z = mu`) and the pooled embedding.
    pub fn encode(&self, graph: &MolecularGraph) -> Result<(LatentCloud, GraphEmbedding)> {
        Self::check_graph(graph)?;
        let g = Graph::new();
        let p = self.params.bind(&g, false);
        let f = Fwd { g: &g, p: &p };
        let out = self.encoder.forward(&f, graph);
        let (mu, sigma, mu_vec, sigma_vec) = (g.value(out.mu), g.value(out.sigma), g.value(out.mu_vec), g.value(out.sigma_vec));
        let blocks = (0..graph.len())
            .map(|i| {
                let mv = [mu_vec.get(i, 0), mu_vec.get(i, 1), mu_vec.get(i, 2)];
                LatentBlock {
                    mu: mu.row_slice(i).to_vec(),
                    sigma: sigma.row_slice(i).to_vec(),
                    z: mu.row_slice(i).to_vec(),
                    mu_vec: mv,
                    sigma_vec: [sigma_vec.get(i, 0); 3],
                    z_vec: mv,
                    block_index: i,
                }
            })
            .collect();
        let kind = match graph.role {
            Role::Binder => EmbeddingKind::Value,
            Role::BindingSite => EmbeddingKind::Key,
        };
        let embedding = GraphEmbedding {
            vec: g.value(out.pooled).data().to_vec(),
            kind,
        };
        Ok((
            LatentCloud {
                blocks,
                frame: RigidTransform::identity(),
            },
            embedding,
        ))
    }

    /// Argmax of the type head for each block.
    pub fn predict_types(&self, z: &Mat) -> Vec<usize> {
        let g = Graph::new();
        let p = self.params.bind(&g, false);
        let f = Fwd { g: &g, p: &p };
        let logits = g.value(self.decoder.type_head.forward(&f, g.constant(z.clone())));
        (0..logits.rows())
            .map(|i| {
                let row = logits.row_slice(i);
                (0..VOCAB_SIZE).fold(0, |best, j| if row[j] > row[best] { j } else { best })
            })
            .collect()
    }

    /// Decode binder latents next to site latents. Atoms start at
    /// `N(z_vec, I)` and follow the learned velocity for `steps` Euler steps.
    pub fn decode<R: Rng + ?Sized>(&self, zx: &LatentCloud, zy: &LatentCloud, steps: usize, rng: &mut R) -> Result<MolecularGraph> {
        if zx.is_empty() || zy.is_empty() {
            return Err(Error::EmptyGraph("decode"));
        }
        let types = self.predict_types(&zx.z_matrix());
        let layout = AtomLayout::new(&types);
        let zvec = zx.z_vec_matrix();
        let x0 = Mat::from_vec(
            layout.len(),
            3,
            (0..layout.len())
                .flat_map(|a| {
                    let c = zvec.row_slice(layout.blk[a]).to_vec();
                    (0..3).map(move |k| c[k]).collect::<Vec<_>>()
                })
                .zip(normal_mat(rng, layout.len(), 3).into_vec())
                .map(|(c, e)| c + e)
                .collect(),
        );
        Ok(self.decode_from(zx, zy, &types, &x0, steps))
    }

    /// Deterministic part of [`Vae::decode`] from given initial atom positions.
    pub fn decode_from(&self, zx: &LatentCloud, zy: &LatentCloud, types: &[usize], x0: &Mat, steps: usize) -> MolecularGraph {
        let layout = AtomLayout::new(types);
        let (z, zvec, zyz, zyvec) = (zx.z_matrix(), zx.z_vec_matrix(), zy.z_matrix(), zy.z_vec_matrix());
        let edges = DecoderEdges::new(&layout, &zvec, &zyvec, self.config.k_neighbors, self.config.site_neighbors);
        let x = euler_integrate(x0, steps, |x, t| self.velocity_value(&layout, &edges, x, [&z, &zvec, &zyz, &zyvec], t));
        let blocks = types
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let tpl = vocab::template(t);
                let mut block = Block {
                    block_type: t,
                    atoms: tpl
                        .atoms
                        .iter()
                        .enumerate()
                        .map(|(s, name)| Atom {
                            element: vocab::element_of(name).to_string(),
                            name: name.to_string(),
                            coord: zx.frame.apply(x.row_slice(layout.offsets[i] + s).try_into().unwrap()),
                        })
                        .collect(),
                    chain_id: "A".into(),
                    residue_index: i as i32 + 1,
                    insertion_code: String::new(),
                    intra_bonds: vec![],
                };
                block.assign_intra_bonds();
                block
            })
            .collect();
        build_block_graph(&MolecularGraph::new(blocks, Role::Binder), self.config.k_neighbors)
    }

    fn velocity_value(&self, layout: &AtomLayout, edges: &DecoderEdges, x: &Mat, lat: [&Mat; 4], t: f64) -> Mat {
        let g = Graph::new();
        let p = self.params.bind(&g, false);
        let f = Fwd { g: &g, p: &p };
        let inputs = LatentInputs {
            z: g.constant(lat[0].clone()),
            zvec: g.constant(lat[1].clone()),
            zy: g.constant(lat[2].clone()),
            zyvec: g.constant(lat[3].clone()),
        };
        let v = self.decoder.velocity(&f, layout, edges, g.constant(x.clone()), &inputs, t);
        (*g.value(v)).clone()
    }

    /// Encode a prepared complex and decode its binder from the posterior means.
    pub fn reconstruct<R: Rng + ?Sized>(&self, rec: &ComplexRecord, rng: &mut R) -> Result<MolecularGraph> {
        let (zx, _) = self.encode(&rec.binder)?;
        let (zy, _) = self.encode(&rec.site)?;
        self.decode(&zx.at_mean(), &zy.at_mean(), self.config.flow_steps, rng)
    }

    fn complex_terms<R: Rng + ?Sized>(&self, f: &Fwd, rec: &ComplexRecord, rng: &mut R) -> Result<ComplexTerms> {
        Self::check_graph(&rec.binder)?;
        Self::check_graph(&rec.site)?;
        let g = f.g;
        let c = &self.config;
        let site: EncOut = self.encoder.forward(f, &rec.site);
        let bind: EncOut = self.encoder.forward(f, &rec.binder);
        let n = rec.binder.len();

        let z = g.add(bind.mu, g.mul(bind.sigma, g.constant(normal_mat(rng, n, c.latent))));
        let zvec = g.add(bind.mu_vec, g.mul(bind.sigma_vec, g.constant(normal_mat(rng, n, 3))));

        let s2 = g.square(bind.sigma);
        let kl_s = g.sum(g.sub(g.add(s2, g.square(bind.mu)), g.add_scalar(g.log(s2), 1.0)));
        let kl_scalar = g.scale(kl_s, 0.5 * c.lambda1 / n as f64);
        let centers: Vec<Vec<f64>> = rec.binder.centers().iter().map(|p| p.to_vec()).collect();
        let v2 = g.square(bind.sigma_vec);
        let iso = g.scale(g.sum(g.sub(v2, g.add_scalar(g.log(v2), 1.0))), 3.0);
        let shift = g.sum(g.square(g.sub(bind.mu_vec, g.constant(Mat::from_rows(&centers)))));
        let kl_coord = g.scale(g.add(iso, shift), 0.5 * c.lambda2 / n as f64);

        let types = rec.binder.block_types();
        let mut onehot = Mat::zeros(n, VOCAB_SIZE);
        for (i, &t) in types.iter().enumerate() {
            onehot.set(i, t, 1.0);
        }
        let logp = g.log_softmax_rows(self.decoder.type_head.forward(f, z));
        let recon_type = g.scale(g.sum(g.mul(logp, g.constant(onehot))), -1.0 / n as f64);

        let (layout, x1) = AtomLayout::from_blocks(&rec.binder.blocks);
        let na = layout.len();
        let t: f64 = rng.random();
        let blk: Rc<[usize]> = layout.blk.clone().into();
        let x0 = g.add(g.gather_rows(zvec, blk), g.constant(normal_mat(rng, na, 3)));
        let x1v = g.constant(x1);
        let xt = g.add(g.scale(x0, 1.0 - t), g.scale(x1v, t));
        let target = g.sub(x1v, x0);
        let zvec_val = (*g.value(zvec)).clone();
        let site_vec_val = (*g.value(site.mu_vec)).clone();
        let edges = DecoderEdges::new(&layout, &zvec_val, &site_vec_val, c.k_neighbors, c.site_neighbors);
        let lat = LatentInputs {
            z,
            zvec,
            zy: site.mu,
            zyvec: site.mu_vec,
        };
        let v = self.decoder.velocity(f, &layout, &edges, xt, &lat, t);
        let recon_field = g.mean(g.square(g.sub(v, target)));

        let x1_hat = g.add(xt, g.scale(v, 1.0 - t));
        let ca = rec.binder.ca_coords();
        let mut pairs = Vec::new();
        let mut true_d = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let d = crate::geometry::dist(ca[i], ca[j]);
                if let (Some(a), Some(b), true) = (layout.ca(i), layout.ca(j), d < c.local_distance_cutoff) {
                    pairs.push((a, b));
                    true_d.push(d);
                }
            }
        }
        let local_distance = if pairs.is_empty() {
            g.scalar(0.0)
        } else {
            let a: Rc<[usize]> = pairs.iter().map(|p| p.0).collect();
            let b: Rc<[usize]> = pairs.iter().map(|p| p.1).collect();
            let (_, d) = encoder::edge_geometry(f, x1_hat, &a, &b);
            g.mean(g.square(g.sub(d, g.constant(Mat::column(&true_d)))))
        };

        let bond_pairs: Vec<(usize, usize, usize)> = rec
            .binder
            .edges
            .iter()
            .filter(|e| e.src < e.dst)
            .map(|e| (e.src, e.dst, usize::from(e.bond == Some(BondKind::Peptide))))
            .collect();
        let bond = if bond_pairs.is_empty() {
            g.scalar(0.0)
        } else {
            let pairs: Vec<(usize, usize)> = bond_pairs.iter().map(|p| (p.0, p.1)).collect();
            let mut labels = Mat::zeros(pairs.len(), 2);
            for (r, p) in bond_pairs.iter().enumerate() {
                labels.set(r, p.2, 1.0);
            }
            let logp = g.log_softmax_rows(self.decoder.bond_logits(f, z, zvec, &pairs));
            g.scale(g.sum(g.mul(logp, g.constant(labels))), -1.0 / pairs.len() as f64)
        };

        Ok(ComplexTerms {
            recon_type,
            recon_field,
            kl_scalar,
            kl_coord,
            bond,
            local_distance,
            key: site.pooled,
            value: bind.pooled,
        })
    }

    /// Batch objective on the tape and its component report. Per-complex terms
    /// are averaged over the batch; the contrastive term is computed across it.
    pub fn loss<R: Rng + ?Sized>(&self, f: &Fwd, batch: &[ComplexRecord], rng: &mut R) -> Result<(Var, VaeLossReport)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let g = f.g;
        let terms = batch.iter().map(|r| self.complex_terms(f, r, rng)).collect::<Result<Vec<_>>>()?;
        let b = terms.len() as f64;
        let avg = |sel: fn(&ComplexTerms) -> Var| {
            let parts: Vec<Var> = terms.iter().map(sel).collect();
            g.scale(g.sum(g.concat_rows(&parts)), 1.0 / b)
        };
        let recon_type = avg(|t| t.recon_type);
        let recon_field = avg(|t| t.recon_field);
        let kl_scalar = avg(|t| t.kl_scalar);
        let kl_coord = avg(|t| t.kl_coord);
        let bond = avg(|t| t.bond);
        let local_distance = avg(|t| t.local_distance);
        let contrastive = self.contrastive_var(f, &terms);
        let w = &self.config.weights;
        let weighted = [
            g.scale(recon_type, w.block_type),
            g.scale(recon_field, w.atom_coord),
            kl_scalar,
            kl_coord,
            g.scale(contrastive, w.contrastive),
            g.scale(local_distance, w.local_distance),
            g.scale(bond, w.bond),
        ];
        let total = g.sum(g.concat_rows(&weighted));
        let mut report = VaeLossReport {
            recon_type: g.item(recon_type),
            recon_field: g.item(recon_field),
            kl_scalar: g.item(kl_scalar),
            kl_coord: g.item(kl_coord),
            contrastive: g.item(contrastive),
            bond: g.item(bond),
            local_distance: g.item(local_distance),
            total: 0.0,
        };
        report.total = w.total(&report);
        Ok((total, report))
    }

    fn contrastive_var(&self, f: &Fwd, terms: &[ComplexTerms]) -> Var {
        let g = f.g;
        let keys = g.concat_rows(&terms.iter().map(|t| t.key).collect::<Vec<_>>());
        let values = g.concat_rows(&terms.iter().map(|t| t.value).collect::<Vec<_>>());
        let s = g.scale(g.matmul(keys, g.transpose(values)), 1.0 / self.config.tau);
        let eye = g.constant(Mat::identity(terms.len()));
        let both = g.add(g.mul(g.log_softmax_rows(s), eye), g.mul(g.log_softmax_rows(g.transpose(s)), eye));
        g.scale(g.sum(both), -1.0 / terms.len() as f64)
    }

    /// Loss value without gradients.
    pub fn evaluate<R: Rng + ?Sized>(&self, batch: &[ComplexRecord], rng: &mut R) -> Result<VaeLossReport> {
        let g = Graph::new();
        let p = self.params.bind(&g, false);
        let (_, report) = self.loss(&Fwd { g: &g, p: &p }, batch, rng)?;
        Ok(report)
    }

    /// Total loss and its gradient with respect to every parameter, in store
    /// order. Random draws come from `rng`.
    pub fn loss_and_gradients<R: Rng + ?Sized>(&self, batch: &[ComplexRecord], rng: &mut R) -> Result<(f64, Vec<Mat>)> {
        let g = Graph::new();
        let p = self.params.bind(&g, true);
        let (total, report) = self.loss(&Fwd { g: &g, p: &p }, batch, rng)?;
        let mut grads = g.backward(total);
        Ok((report.total, p.grads(&mut grads, &self.params)))
    }

    /// One optimizer step on `batch`.
    pub fn train_step<R: Rng + ?Sized>(&mut self, opt: &mut Adam, batch: &[ComplexRecord], rng: &mut R) -> Result<VaeLossReport> {
        let g = Graph::new();
        let p = self.params.bind(&g, true);
        let (total, report) = self.loss(&Fwd { g: &g, p: &p }, batch, rng)?;
        if let Some(component) = report.non_finite() {
            return Err(Error::NonFiniteLoss {
                component: component.to_string(),
                step: opt.steps() as usize,
            });
        }
        let mut grads = g.backward(total);
        let grads = p.grads(&mut grads, &self.params);
        opt.update(&mut self.params, &grads);
        Ok(report)
    }
}
