//! Training, database construction, generation and redesign orchestration.

mod config;
mod evaluate;
mod redesign;

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{RunConfig, CONFIG_SNAPSHOT};
pub use evaluate::{evaluate_case, evaluate_dirs, summarize, Aggregate, CaseReport, EvaluationReport, REPORT_SCHEMA};
pub use redesign::{iterative_redesign, ContactScorer, ExternalScorer, RedesignEvent, RedesignTarget, Redesign};

use crate::cvae::{Vae, VaeLossReport};
use crate::ldm::{Ldm, LdmSample, PromptSet};
use crate::molgraph::{ComplexRecord, MolecularGraph};
use crate::nn::{Adam, Checkpoint};
use crate::retrieval::{Database, DatabaseEntry};
use crate::{Error, Result};

/// Caps the worker count of non-deterministic runs.
pub const THREADS_ENV: &str = "RADIANCE_NUM_THREADS";

pub const VAE_CHECKPOINT: &str = "vae.ckpt";
pub const LDM_CHECKPOINT: &str = "ldm.ckpt";
pub const DATABASE_FILE: &str = "db.radb";
pub const VAE_LOG: &str = "vae_log.jsonl";
pub const LDM_LOG: &str = "ldm_log.jsonl";

/// Worker pool honoring `--deterministic` and the thread cap.
pub fn thread_pool(deterministic: bool) -> Result<rayon::ThreadPool> {
    let n = if deterministic {
        1
    } else {
        std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()).unwrap_or(0)
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Prepared complexes from every `*.json` file in `dir`, in file-name order.
pub fn load_dataset(dir: &Path) -> Result<Vec<ComplexRecord>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| ComplexRecord::read(p)).collect()
}

fn append_line(log: &mut dyn Write, value: &serde_json::Value) -> Result<()> {
    writeln!(log, "{value}").map_err(|e| Error::io("<log>", e))
}

fn batches<'a, T>(items: &'a [T], order: &[usize], size: usize) -> impl Iterator<Item = Vec<T>> + 'a
where
    T: Clone,
{
    order.chunks(size).map(|c| c.iter().map(|&i| items[i].clone()).collect()).collect::<Vec<_>>().into_iter()
}

/// Seed for a named sub-stream of a run.
fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// Epoch summary of VAE training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeEpoch {
    pub epoch: usize,
    pub steps: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub train: VaeLossReport,
    pub held_out: Option<VaeLossReport>,
}

/// Train the VAE. One JSON line per epoch goes to `log`.
pub fn train_vae(config: &RunConfig, train: &[ComplexRecord], held_out: &[ComplexRecord], log: &mut dyn Write) -> Result<(Vae, Vec<VaeEpoch>)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut vae = Vae::new(config.vae.clone(), config.seed)?;
    let mut opt = Adam::new(config.learning_rate);
    let mut rng = stream(config.seed, 1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.vae_epochs);
    for epoch in 1..=config.vae_epochs {
        order.shuffle(&mut rng);
        let mut reports = Vec::new();
        for batch in batches(train, &order, config.batch_size) {
            reports.push(vae.train_step(&mut opt, &batch, &mut rng)?);
        }
        let held = if held_out.is_empty() {
            None
        } else {
            Some(vae.evaluate(held_out, &mut stream(config.seed, 2))?)
        };
        let record = VaeEpoch {
            epoch,
            steps: opt.steps(),
            lambda1: config.vae.lambda1,
            lambda2: config.vae.lambda2,
            train: VaeLossReport::mean(&reports),
            held_out: held,
        };
        append_line(log, &serde_json::to_value(&record)?)?;
        log::info!("vae epoch {epoch}: total {:.4}", record.train.total);
        history.push(record);
    }
    Ok((vae, history))
}

/// Outcome of [`encode_database`].
#[derive(Clone, Debug)]
pub struct DatabaseBuild {
    pub db: Database,
    /// Ids that failed to encode, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Key/value entries for every complex; failures are skipped and reported.
pub fn encode_database(vae: &Vae, dataset: &[ComplexRecord], pool: &rayon::ThreadPool) -> Result<DatabaseBuild> {
    let encoded: Vec<Result<DatabaseEntry>> = pool.install(|| {
        dataset
            .par_iter()
            .map(|rec| {
                let (_, key) = vae.encode(&rec.site)?;
                let (_, value) = vae.encode(&rec.binder)?;
                Ok(DatabaseEntry::new(rec.id.clone(), &key.vec, &value.vec, rec.domain_tag))
            })
            .collect()
    });
    let mut db = Database::new(vae.config.hidden);
    let mut skipped = Vec::new();
    for (rec, entry) in dataset.iter().zip(encoded) {
        match entry.and_then(|e| db.push(e)) {
            Ok(()) => {}
            Err(e) => skipped.push((rec.id.clone(), e.to_string())),
        }
    }
    if !skipped.is_empty() {
        log::warn!("skipped {} complexes while building the database", skipped.len());
    }
    Ok(DatabaseBuild { db, skipped })
}

/// Epoch summary of diffusion training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdmEpoch {
    pub epoch: usize,
    pub steps: u64,
    pub loss: f64,
    pub held_out: Option<f64>,
}

/// Encode complexes into diffusion training samples.
pub fn ldm_samples(vae: &Vae, dataset: &[ComplexRecord], pool: &rayon::ThreadPool) -> Result<Vec<LdmSample>> {
    pool.install(|| dataset.par_iter().map(|r| LdmSample::encode(vae, r)).collect())
}

/// Train the diffusion model with prompts retrieved from `db`.
pub fn train_ldm(
    config: &RunConfig,
    train: &[LdmSample],
    held_out: &[LdmSample],
    db: Option<&Database>,
    log: &mut dyn Write,
) -> Result<(Ldm, Vec<LdmEpoch>)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut ldm = Ldm::new(config.ldm.clone(), config.seed.wrapping_add(1))?;
    let mut opt = Adam::new(config.learning_rate);
    let mut rng = stream(config.seed, 3);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.ldm_epochs);
    for epoch in 1..=config.ldm_epochs {
        order.shuffle(&mut rng);
        let mut losses = Vec::new();
        for batch in batches(train, &order, config.batch_size) {
            let step = ldm.train_step(&mut opt, &batch, db, &mut rng)?;
            debug_assert!(batch.iter().zip(&step.prompt_ids).all(|(s, ids)| !ids.contains(&s.id)));
            losses.push(step.loss);
        }
        let held = if held_out.is_empty() {
            None
        } else {
            Some(ldm.evaluate(held_out, db, &mut stream(config.seed, 4))?)
        };
        let record = LdmEpoch {
            epoch,
            steps: opt.steps(),
            loss: losses.iter().sum::<f64>() / losses.len() as f64,
            held_out: held,
        };
        append_line(log, &serde_json::to_value(&record)?)?;
        log::info!("ldm epoch {epoch}: loss {:.4}", record.loss);
        history.push(record);
    }
    Ok((ldm, history))
}

pub fn save_models(dir: &Path, vae: Option<&Vae>, ldm: Option<&Ldm>) -> Result<()> {
    if let Some(vae) = vae {
        let mut ck = Checkpoint::new();
        vae.write_to(&mut ck)?;
        ck.save(&dir.join(VAE_CHECKPOINT))?;
    }
    if let Some(ldm) = ldm {
        let mut ck = Checkpoint::new();
        ldm.write_to(&mut ck)?;
        ck.save(&dir.join(LDM_CHECKPOINT))?;
    }
    Ok(())
}

/// Where a generated binder's prompt came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sample: usize,
    pub prompt_ids: Vec<String>,
    pub prompt_scores: Vec<f64>,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    pub binder: MolecularGraph,
    pub provenance: Provenance,
}

/// Generation settings besides the models.
#[derive(Clone, Debug, Default)]
pub struct GenerateOptions {
    pub n_samples: usize,
    pub binder_len: usize,
    pub seed: u64,
    /// Database ids never used as prompts.
    pub exclude: HashSet<String>,
}

/// Encode the site, retrieve prompts, run reverse diffusion and decode, once
/// per sample. Sample `i` draws from its own random stream, so the output
/// does not depend on scheduling.
pub fn generate(
    vae: &Vae,
    ldm: &Ldm,
    site: &MolecularGraph,
    db: Option<&Database>,
    opts: &GenerateOptions,
    pool: &rayon::ThreadPool,
) -> Result<Vec<Design>> {
    let (zy, key) = vae.encode(site)?;
    let zy = zy.at_mean();
    let settings = &ldm.config.retrieval;
    let mut warning = None;
    let (ids, scores, prompt) = match db {
        Some(db) if settings.n > 0 && !db.is_empty() => {
            let r = settings.retrieve(db, &key.vec, &opts.exclude, &mut stream(opts.seed, u64::MAX))?;
            let prompt = PromptSet::from(&r);
            (r.entry_ids, r.scores, prompt)
        }
        Some(_) if settings.n > 0 => {
            let w = "retrieval database is empty; generating unconditionally".to_string();
            log::warn!("{w}");
            warning = Some(w);
            (vec![], vec![], PromptSet::empty())
        }
        _ => (vec![], vec![], PromptSet::empty()),
    };
    pool.install(|| {
        (0..opts.n_samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(opts.seed, i as u64);
                let (zx, zy_local) = ldm.sample(opts.binder_len, &zy, &prompt, &mut rng)?;
                let binder = vae.decode(&zx, &zy_local, vae.config.flow_steps, &mut rng)?;
                Ok(Design {
                    binder,
                    provenance: Provenance {
                        sample: i,
                        prompt_ids: ids.clone(),
                        prompt_scores: scores.clone(),
                        warning: warning.clone(),
                    },
                })
            })
            .collect()
    })
}

/// Write designs for one case as `sample_{i}.json` (complex with the input
/// site), `sample_{i}.pdb` and `provenance.json`.
pub fn write_designs(dir: &Path, case: &ComplexRecord, designs: &[Design]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for d in designs {
        let rec = ComplexRecord {
            id: format!("{}_s{}", case.id, d.provenance.sample),
            binder: d.binder.clone(),
            site: case.site.clone(),
            domain_tag: case.domain_tag,
            source: format!("generated:{}", case.id),
        };
        rec.write(&dir.join(format!("sample_{}.json", d.provenance.sample)))?;
        let pdb = dir.join(format!("sample_{}.pdb", d.provenance.sample));
        std::fs::write(&pdb, crate::molgraph::write_pdb(&[&rec.binder, &rec.site])).map_err(|e| Error::io(&pdb, e))?;
    }
    let prov: Vec<&Provenance> = designs.iter().map(|d| &d.provenance).collect();
    let path = dir.join("provenance.json");
    std::fs::write(&path, serde_json::to_string_pretty(&json!({ "case": case.id, "samples": prov }))?).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests;
