//! Latent diffusion over per-block states `u = [z ‖ z⃗]` conditioned on the
//! binding site and on retrieved binder embeddings.

mod denoiser;
mod schedule;

use std::collections::HashSet;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use ragbind_autograd::{Graph, Mat, Var};
use serde::{Deserialize, Serialize};

use crate::cvae::{LatentBlock, LatentCloud, Vae};
use crate::geometry::{centroid, RigidTransform};
use crate::molgraph::ComplexRecord;
use crate::nn::{Adam, Checkpoint, Fwd, Init, ParamStore};
use crate::retrieval::{query_adaptive_with, query_mode_with, Database, QueryMode, RetrievalResult, Scoring};
use crate::{Error, Result};
use denoiser::{Denoiser, SiteNodes};
pub use schedule::{cosine_schedule, NoiseSchedule, BETA_MAX};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    #[default]
    CrossAttention,
    AdalnZero,
    InContext,
}

impl FromStr for ConditioningMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross_attention" => Ok(Self::CrossAttention),
            "adaln_zero" => Ok(Self::AdalnZero),
            "in_context" => Ok(Self::InContext),
            other => Err(Error::InvalidArgument(format!("unknown conditioning mode '{other}'"))),
        }
    }
}

/// How prompts are drawn from the database.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalSettings {
    pub mode: QueryMode,
    pub n: usize,
    /// When set, keep only hits scoring above it (at most `n`).
    pub threshold: Option<f64>,
    pub scoring: Scoring,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        Self {
            mode: QueryMode::TopN,
            n: 10,
            threshold: None,
            scoring: Scoring::KeyKey,
        }
    }
}

impl RetrievalSettings {
    /// Retrieve up to `n` entries, fewer when the database is small.
    pub fn retrieve<R: Rng + ?Sized>(&self, db: &Database, key: &[f64], exclude: &HashSet<String>, rng: &mut R) -> Result<RetrievalResult> {
        if let Some(t) = self.threshold {
            let mut r = query_adaptive_with(db, key, t, exclude, self.scoring)?;
            r.entry_ids.truncate(self.n);
            r.scores.truncate(self.n);
            r.prompt.truncate(self.n);
            return Ok(r);
        }
        let available = db.entries().iter().filter(|e| !exclude.contains(&e.id)).count();
        query_mode_with(db, key, self.mode, self.n.min(available), exclude, rng, self.scoring)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdmConfig {
    /// Diffusion steps `T`.
    pub steps: usize,
    pub schedule_offset: f64,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub cross_heads: usize,
    pub edge_size: usize,
    pub n_rbf: usize,
    pub rbf_cutoff: f64,
    pub k_neighbors: usize,
    pub time_dim: usize,
    pub latent: usize,
    /// Dimension of prompt vectors (the autoencoder's hidden size).
    pub prompt_dim: usize,
    pub conditioning: ConditioningMode,
    pub retrieval: RetrievalSettings,
}

impl Default for LdmConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            schedule_offset: 0.008,
            hidden: 512,
            layers: 6,
            heads: 8,
            cross_heads: 8,
            edge_size: 64,
            n_rbf: 64,
            rbf_cutoff: 3.0,
            k_neighbors: 9,
            time_dim: 32,
            latent: 8,
            prompt_dim: 512,
            conditioning: ConditioningMode::CrossAttention,
            retrieval: RetrievalSettings::default(),
        }
    }
}

impl LdmConfig {
    pub fn toy() -> Self {
        Self {
            hidden: 32,
            layers: 2,
            heads: 4,
            cross_heads: 4,
            edge_size: 16,
            n_rbf: 16,
            time_dim: 16,
            prompt_dim: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.steps == 0 {
            return bad("ldm steps must be positive");
        }
        if self.hidden == 0 || !self.hidden.is_multiple_of(self.heads.max(1)) || !self.hidden.is_multiple_of(self.cross_heads.max(1)) {
            return bad("ldm hidden size must be a positive multiple of both head counts");
        }
        if self.heads == 0 || self.cross_heads == 0 || self.latent == 0 || self.prompt_dim == 0 {
            return bad("ldm heads, latent and prompt_dim must be positive");
        }
        if self.n_rbf < 2 || self.rbf_cutoff <= 0.0 || self.time_dim < 2 {
            return bad("ldm n_rbf (>= 2), time_dim (>= 2) and rbf_cutoff must be positive");
        }
        Ok(())
    }
}

/// Noisy binder state in the diffusion frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionState {
    /// `n x (latent + 3)`.
    pub u: Mat,
    pub t: usize,
    /// Maps diffusion-frame coordinates back to the original frame.
    pub frame: RigidTransform,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub vectors: Vec<Vec<f64>>,
}

impl PromptSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    fn matrix(&self, dim: usize) -> Result<Option<Mat>> {
        if let Some(v) = self.vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimMismatch { expected: dim, got: v.len() });
        }
        Ok((!self.is_empty()).then(|| Mat::from_rows(&self.vectors)))
    }
}

impl From<&RetrievalResult> for PromptSet {
    fn from(r: &RetrievalResult) -> Self {
        Self { vectors: r.prompt.clone() }
    }
}

/// Translation placing the site latent centroid at the origin, as the map
/// back to the original frame.
pub fn site_frame(zy: &LatentCloud) -> RigidTransform {
    let pts: Vec<[f64; 3]> = zy.blocks.iter().map(|b| b.z_vec).collect();
    RigidTransform::translation(centroid(&pts))
}

/// `cloud` with coordinates mapped by `t` and its frame composed so that the
/// original frame is still recoverable.
pub fn reframe(cloud: &LatentCloud, t: &RigidTransform) -> LatentCloud {
    let mut out = cloud.clone();
    for b in &mut out.blocks {
        b.mu_vec = t.apply(b.mu_vec);
        b.z_vec = t.apply(b.z_vec);
    }
    out.frame = cloud.frame.compose(&t.inverse());
    out
}

/// `[z ‖ z⃗]` rows of a latent cloud.
pub fn pack(cloud: &LatentCloud) -> Mat {
    Mat::from_rows(
        &cloud
            .blocks
            .iter()
            .map(|b| b.z.iter().copied().chain(b.z_vec).collect::<Vec<f64>>())
            .collect::<Vec<_>>(),
    )
}

/// Mean over blocks of the squared noise error summed over channels.
pub fn noise_loss(eps: &Mat, eps_hat: &Mat) -> f64 {
    eps.zip_map(eps_hat, |a, b| (a - b).powi(2)).sum() / eps.rows().max(1) as f64
}

fn normal_mat<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect())
}

/// One training example with latents already encoded.
#[derive(Clone, Debug)]
pub struct LdmSample {
    pub id: String,
    /// Binder posterior means in the diffusion frame.
    pub u0: Mat,
    /// Site posterior means in the diffusion frame.
    pub site: LatentCloud,
    pub key: Vec<f64>,
}

impl LdmSample {
    pub fn encode(vae: &Vae, rec: &ComplexRecord) -> Result<Self> {
        let (zx, _) = vae.encode(&rec.binder)?;
        let (zy, key) = vae.encode(&rec.site)?;
        let frame = site_frame(&zy);
        let to_local = frame.inverse();
        Ok(Self {
            id: rec.id.clone(),
            u0: pack(&reframe(&zx, &to_local)),
            site: reframe(&zy, &to_local),
            key: key.vec,
        })
    }
}

/// Timestep, noise and prompt drawn for one training example.
#[derive(Clone, Debug)]
pub struct Draw {
    pub t: usize,
    pub eps: Mat,
    pub prompt: Option<Mat>,
    pub prompt_ids: Vec<String>,
}

/// Outcome of one optimizer step.
#[derive(Clone, Debug, PartialEq)]
pub struct LdmStep {
    pub loss: f64,
    /// Retrieved entry ids used as each sample's prompt.
    pub prompt_ids: Vec<Vec<String>>,
}

#[derive(Clone, Debug)]
pub struct Ldm {
    pub config: LdmConfig,
    pub params: ParamStore,
    pub schedule: NoiseSchedule,
    denoiser: Denoiser,
}

impl Ldm {
    pub const SECTION: &'static str = "ldm";

    pub fn new(config: LdmConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut init = Init::new(seed);
        let denoiser = Denoiser::new(&mut params, &mut init, &config);
        let schedule = cosine_schedule(config.steps, config.schedule_offset)?;
        Ok(Self {
            config,
            params,
            schedule,
            denoiser,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let s = ck.section(Self::SECTION)?;
        let config: LdmConfig = serde_json::from_value(s.config.clone())?;
        let mut ldm = Self::new(config, 0)?;
        ldm.params.load_from(&s.params)?;
        Ok(ldm)
    }

    pub fn write_to(&self, ck: &mut Checkpoint) -> Result<()> {
        ck.insert(Self::SECTION, serde_json::to_value(&self.config)?, self.params.clone());
        Ok(())
    }

    fn site_nodes(&self, zy: &LatentCloud) -> Result<SiteNodes> {
        if zy.is_empty() {
            return Err(Error::EmptyGraph("site latents"));
        }
        let z = zy.z_matrix();
        if z.cols() != self.config.latent {
            return Err(Error::DimMismatch {
                expected: self.config.latent,
                got: z.cols(),
            });
        }
        Ok(SiteNodes { z, x: zy.z_vec_matrix() })
    }

    fn check_state(&self, u: &Mat, t: usize) -> Result<()> {
        if u.cols() != self.config.latent + 3 || u.rows() == 0 {
            return Err(Error::DimMismatch {
                expected: self.config.latent + 3,
                got: u.cols(),
            });
        }
        if t == 0 || t > self.config.steps {
            return Err(Error::InvalidArgument(format!("timestep {t} outside 1..={}", self.config.steps)));
        }
        Ok(())
    }

    /// Predicted noise for every binder block; `zy` must be in the state's
    /// diffusion frame.
    pub fn predict_noise(&self, state: &DiffusionState, zy: &LatentCloud, prompt: &PromptSet) -> Result<Mat> {
        self.check_state(&state.u, state.t)?;
        let site = self.site_nodes(zy)?;
        let prompt = prompt.matrix(self.config.prompt_dim)?;
        let g = Graph::new();
        let p = self.params.bind(&g, false);
        let f = Fwd { g: &g, p: &p };
        let out = self.denoiser.forward(&f, g.constant(state.u.clone()), &site, prompt.as_ref(), state.t, self.schedule.alpha_bar(state.t));
        Ok((*g.value(out)).clone())
    }

    /// One ancestral step `t -> t - 1`; the final step returns the mean.
    pub fn denoise_step<R: Rng + ?Sized>(
        &self,
        state: &DiffusionState,
        zy: &LatentCloud,
        prompt: &PromptSet,
        rng: &mut R,
    ) -> Result<DiffusionState> {
        let eps = self.predict_noise(state, zy, prompt)?;
        let mut u = self.schedule.reverse_mean(&state.u, state.t, &eps)?;
        if state.t > 1 {
            let s = self.schedule.beta(state.t).sqrt();
            u.add_assign(&normal_mat(rng, u.rows(), u.cols()).map(|e| s * e));
        }
        Ok(DiffusionState {
            u,
            t: state.t - 1,
            frame: state.frame.clone(),
        })
    }

    /// Sample `n_blocks` binder latents next to `zy` (original frame). The
    /// result lives in the diffusion frame with `frame` mapping back.
    pub fn sample<R: Rng + ?Sized>(&self, n_blocks: usize, zy: &LatentCloud, prompt: &PromptSet, rng: &mut R) -> Result<(LatentCloud, LatentCloud)> {
        if n_blocks == 0 {
            return Err(Error::InvalidArgument("cannot sample an empty binder".into()));
        }
        let frame = site_frame(zy);
        let site = reframe(zy, &frame.inverse());
        let mut state = DiffusionState {
            u: normal_mat(rng, n_blocks, self.config.latent + 3),
            t: self.config.steps,
            frame,
        };
        while state.t > 0 {
            state = self.denoise_step(&state, &site, prompt, rng)?;
        }
        Ok((self.unpack(&state), site))
    }

    fn unpack(&self, state: &DiffusionState) -> LatentCloud {
        let d = self.config.latent;
        let blocks = (0..state.u.rows())
            .map(|i| {
                let row = state.u.row_slice(i);
                let x = [row[d], row[d + 1], row[d + 2]];
                LatentBlock {
                    mu: row[..d].to_vec(),
                    sigma: vec![crate::cvae::encoder::SIGMA_FLOOR; d],
                    z: row[..d].to_vec(),
                    mu_vec: x,
                    sigma_vec: [crate::cvae::encoder::SIGMA_FLOOR; 3],
                    z_vec: x,
                    block_index: i,
                }
            })
            .collect();
        LatentCloud {
            blocks,
            frame: state.frame.clone(),
        }
    }

    pub(crate) fn loss_on_tape(&self, f: &Fwd, samples: &[LdmSample], draws: &[Draw]) -> Result<Var> {
        if samples.is_empty() || samples.len() != draws.len() {
            return Err(Error::InvalidArgument("ldm batch is empty or draws do not match samples".into()));
        }
        let g = f.g;
        let mut parts = Vec::with_capacity(samples.len());
        for (s, d) in samples.iter().zip(draws) {
            self.check_state(&s.u0, d.t)?;
            let ut = self.schedule.forward_sample(&s.u0, d.t, &d.eps)?;
            let site = self.site_nodes(&s.site)?;
            let pred = self.denoiser.forward(f, g.constant(ut), &site, d.prompt.as_ref(), d.t, self.schedule.alpha_bar(d.t));
            let err = g.sum(g.square(g.sub(pred, g.constant(d.eps.clone()))));
            parts.push(g.scale(err, 1.0 / s.u0.rows() as f64));
        }
        Ok(g.scale(g.sum(g.concat_rows(&parts)), 1.0 / samples.len() as f64))
    }

    /// Draws for a batch, as [`Ldm::train_step`] makes them.
    pub fn draws<R: Rng + ?Sized>(&self, samples: &[LdmSample], db: Option<&Database>, rng: &mut R) -> Result<Vec<Draw>> {
        samples.iter().map(|s| self.draw(s, db, rng)).collect()
    }

    /// Noise-prediction loss for fixed draws and its gradient with respect to
    /// every parameter, in store order.
    pub fn loss_and_gradients(&self, samples: &[LdmSample], draws: &[Draw]) -> Result<(f64, Vec<Mat>)> {
        let g = Graph::new();
        let p = self.params.bind(&g, true);
        let loss = self.loss_on_tape(&Fwd { g: &g, p: &p }, samples, draws)?;
        let value = g.item(loss);
        let mut grads = g.backward(loss);
        Ok((value, p.grads(&mut grads, &self.params)))
    }

    fn draw<R: Rng + ?Sized>(&self, s: &LdmSample, db: Option<&Database>, rng: &mut R) -> Result<Draw> {
        let (prompt, prompt_ids) = match db {
            Some(db) if self.config.retrieval.n > 0 => {
                let exclude: HashSet<String> = [s.id.clone()].into();
                let r = self.config.retrieval.retrieve(db, &s.key, &exclude, rng)?;
                (PromptSet::from(&r).matrix(self.config.prompt_dim)?, r.entry_ids)
            }
            _ => (None, Vec::new()),
        };
        Ok(Draw {
            t: rng.random_range(1..=self.config.steps),
            eps: normal_mat(rng, s.u0.rows(), s.u0.cols()),
            prompt,
            prompt_ids,
        })
    }

    /// Noise-prediction loss of a batch without gradients.
    pub fn evaluate<R: Rng + ?Sized>(&self, samples: &[LdmSample], db: Option<&Database>, rng: &mut R) -> Result<f64> {
        let draws = samples.iter().map(|s| self.draw(s, db, rng)).collect::<Result<Vec<_>>>()?;
        let g = Graph::new();
        let p = self.params.bind(&g, false);
        let loss = self.loss_on_tape(&Fwd { g: &g, p: &p }, samples, &draws)?;
        Ok(g.item(loss))
    }

    /// One optimizer step. Each sample's prompt is retrieved from `db` with
    /// its own entry excluded.
    pub fn train_step<R: Rng + ?Sized>(&mut self, opt: &mut Adam, samples: &[LdmSample], db: Option<&Database>, rng: &mut R) -> Result<LdmStep> {
        let draws = samples.iter().map(|s| self.draw(s, db, rng)).collect::<Result<Vec<_>>>()?;
        let g = Graph::new();
        let p = self.params.bind(&g, true);
        let loss = self.loss_on_tape(&Fwd { g: &g, p: &p }, samples, &draws)?;
        let value = g.item(loss);
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                component: "noise".into(),
                step: opt.steps() as usize,
            });
        }
        let mut grads = g.backward(loss);
        let grads = p.grads(&mut grads, &self.params);
        opt.update(&mut self.params, &grads);
        Ok(LdmStep {
            loss: value,
            prompt_ids: draws.into_iter().map(|d| d.prompt_ids).collect(),
        })
    }
}
