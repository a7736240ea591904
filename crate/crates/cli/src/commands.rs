use std::collections::HashSet;
use std::fs::File;
use std::io::BufWriter;
use std::ops::Range;
use std::path::{Path, PathBuf};

use ragbind::cvae::Vae;
use ragbind::ldm::{Ldm, RetrievalSettings};
use ragbind::molgraph::{parse_pdb, synth_complex, write_pdb, ComplexRecord, DomainTag, MolecularGraph, K_NEIGHBORS};
use ragbind::nn::Checkpoint;
use ragbind::pipeline::{self, GenerateOptions, RedesignTarget, RunConfig};
use ragbind::retrieval::Database;
use ragbind::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::{Command, Common};

pub const SUMMARY_SCHEMA: u32 = 1;

/// Defaults, then the config file, then flags.
fn resolve(common: &Common, edit: impl FnOnce(&mut RunConfig)) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.deterministic |= common.deterministic;
    edit(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn summary(command: &str, mut body: Value) -> Value {
    body["schema_version"] = json!(SUMMARY_SCHEMA);
    body["command"] = json!(command);
    body
}

fn log_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn load_vae(path: &Path) -> Result<Vae> {
    Vae::from_checkpoint(&Checkpoint::load(path)?)
}

fn load_ldm(path: &Path) -> Result<Ldm> {
    Ldm::from_checkpoint(&Checkpoint::load(path)?)
}

fn load_optional(dir: Option<&PathBuf>) -> Result<Vec<ComplexRecord>> {
    dir.map_or(Ok(vec![]), |d| pipeline::load_dataset(d))
}

fn load_inputs(path: &Path) -> Result<Vec<ComplexRecord>> {
    if path.is_dir() {
        pipeline::load_dataset(path)
    } else {
        Ok(vec![ComplexRecord::read(path)?])
    }
}

fn parse_region(s: &str) -> Result<Range<usize>> {
    let bad = || Error::InvalidArgument(format!("region '{s}' is not START-END"));
    let (a, b) = s.split_once('-').ok_or_else(bad)?;
    let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a >= b {
        return Err(bad());
    }
    Ok(a..b)
}

pub fn dispatch(command: Command) -> Result<Value> {
    match command {
        Command::Prepare {
            pdb,
            binder_chains,
            target_chains,
            out,
            id,
            domain,
            common,
        } => {
            let cfg = resolve(&common, |_| {})?;
            let mut rec = parse_pdb(&pdb, &binder_chains, &target_chains)?;
            rec.id = id.unwrap_or_else(|| pdb.file_stem().and_then(|s| s.to_str()).unwrap_or("complex").to_string());
            rec.domain_tag = domain.parse::<DomainTag>()?;
            let rec = rec.prepared(cfg.site_cutoff, K_NEIGHBORS)?;
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
            }
            rec.write(&out)?;
            Ok(summary(
                "prepare",
                json!({ "id": rec.id, "binder_blocks": rec.binder.len(), "site_blocks": rec.site.len(), "out": out }),
            ))
        }
        Command::Synth {
            out,
            count,
            binder_len,
            site_len,
            pdb,
            common,
        } => {
            let cfg = resolve(&common, |_| {})?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            let mut ids = Vec::new();
            for i in 0..count {
                let rec = synth_complex(cfg.seed.wrapping_mul(1_000_003).wrapping_add(i), binder_len, site_len);
                let id = format!("synth_{i:05}");
                if pdb {
                    let path = out.join(format!("{id}.pdb"));
                    std::fs::write(&path, write_pdb(&[&rec.binder, &rec.site])).map_err(|e| Error::Io { path, source: e })?;
                } else {
                    let rec = ComplexRecord { id: id.clone(), ..rec }.prepared(cfg.site_cutoff, K_NEIGHBORS)?;
                    rec.write(&out.join(format!("{id}.json")))?;
                }
                ids.push(id);
            }
            Ok(summary("synth", json!({ "count": ids.len(), "out": out, "format": if pdb { "pdb" } else { "json" } })))
        }
        Command::TrainVae {
            data,
            held_out,
            out,
            epochs,
            common,
        } => {
            let cfg = resolve(&common, |c| {
                c.data = data.unwrap_or(c.data.clone());
                c.held_out = held_out.or(c.held_out.clone());
                c.output = out.unwrap_or(c.output.clone());
                c.vae_epochs = epochs.unwrap_or(c.vae_epochs);
            })?;
            cfg.snapshot(&cfg.output)?;
            let train = pipeline::load_dataset(&cfg.data)?;
            let held = load_optional(cfg.held_out.as_ref())?;
            let mut log = log_file(&cfg.output.join(pipeline::VAE_LOG))?;
            let (vae, history) = pipeline::train_vae(&cfg, &train, &held, &mut log)?;
            pipeline::save_models(&cfg.output, Some(&vae), None)?;
            Ok(summary(
                "train-vae",
                json!({
                    "checkpoint": cfg.output.join(pipeline::VAE_CHECKPOINT),
                    "epochs": history.len(),
                    "train_size": train.len(),
                    "first": history.first(),
                    "last": history.last(),
                }),
            ))
        }
        Command::BuildDb { checkpoint, data, out, common } => {
            let cfg = resolve(&common, |_| {})?;
            let vae = load_vae(&checkpoint)?;
            let dataset = pipeline::load_dataset(&data)?;
            let build = pipeline::encode_database(&vae, &dataset, &pipeline::thread_pool(cfg.deterministic)?)?;
            build.db.save(&out)?;
            let skipped: Vec<Value> = build.skipped.iter().map(|(id, why)| json!({ "id": id, "reason": why })).collect();
            Ok(summary("build-db", json!({ "entries": build.db.len(), "skipped": skipped, "out": out })))
        }
        Command::TrainLdm {
            vae,
            db,
            data,
            held_out,
            out,
            epochs,
            conditioning,
            common,
        } => {
            let cfg = resolve(&common, |c| {
                c.data = data.unwrap_or(c.data.clone());
                c.held_out = held_out.or(c.held_out.clone());
                c.output = out.unwrap_or(c.output.clone());
                c.ldm_epochs = epochs.unwrap_or(c.ldm_epochs);
                c.ldm.conditioning = conditioning.unwrap_or(c.ldm.conditioning);
            })?;
            cfg.snapshot(&cfg.output)?;
            let vae = load_vae(&vae)?;
            if vae.config.latent != cfg.ldm.latent || vae.config.hidden != cfg.ldm.prompt_dim {
                return Err(Error::Config("ldm latent/prompt_dim do not match the VAE checkpoint".into()));
            }
            let db = db.map(|p| Database::load(&p)).transpose()?;
            let pool = pipeline::thread_pool(cfg.deterministic)?;
            let train = pipeline::ldm_samples(&vae, &pipeline::load_dataset(&cfg.data)?, &pool)?;
            let held = pipeline::ldm_samples(&vae, &load_optional(cfg.held_out.as_ref())?, &pool)?;
            let mut log = log_file(&cfg.output.join(pipeline::LDM_LOG))?;
            let (ldm, history) = pipeline::train_ldm(&cfg, &train, &held, db.as_ref(), &mut log)?;
            pipeline::save_models(&cfg.output, None, Some(&ldm))?;
            Ok(summary(
                "train-ldm",
                json!({
                    "checkpoint": cfg.output.join(pipeline::LDM_CHECKPOINT),
                    "epochs": history.len(),
                    "conditioning": cfg.ldm.conditioning,
                    "first": history.first(),
                    "last": history.last(),
                }),
            ))
        }
        Command::Retrieve {
            db,
            query,
            k,
            threshold,
            mode,
            scoring,
            checkpoint,
            common,
        } => {
            let cfg = resolve(&common, |_| {})?;
            let db = Database::load(&db)?;
            let key = query_key(&query, checkpoint.as_deref())?;
            let settings = RetrievalSettings { mode, n: k, threshold, scoring };
            let result = settings.retrieve(&db, &key, &HashSet::new(), &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
            Ok(summary("retrieve", json!({ "ids": result.entry_ids, "scores": result.scores })))
        }
        Command::Generate {
            vae,
            ldm,
            db,
            input,
            out,
            n,
            binder_len,
            k,
            threshold,
            mode,
            scoring,
            common,
        } => {
            let cfg = resolve(&common, |c| {
                c.n_samples = n.unwrap_or(c.n_samples);
                c.binder_len = binder_len.or(c.binder_len);
                c.ldm.retrieval.n = k.unwrap_or(c.ldm.retrieval.n);
                c.ldm.retrieval.threshold = threshold.or(c.ldm.retrieval.threshold);
                c.ldm.retrieval.mode = mode.unwrap_or(c.ldm.retrieval.mode);
                c.ldm.retrieval.scoring = scoring.unwrap_or(c.ldm.retrieval.scoring);
                c.output = out.clone();
            })?;
            cfg.snapshot(&out)?;
            let vae = load_vae(&vae)?;
            let mut ldm = load_ldm(&ldm)?;
            ldm.config.retrieval = cfg.ldm.retrieval.clone();
            let db = db.map(|p| Database::load(&p)).transpose()?;
            let pool = pipeline::thread_pool(cfg.deterministic)?;
            let mut cases = Vec::new();
            for (ci, case) in load_inputs(&input)?.iter().enumerate() {
                let opts = GenerateOptions {
                    n_samples: cfg.n_samples,
                    binder_len: cfg.binder_len.unwrap_or(case.binder.len()),
                    seed: cfg.seed.wrapping_add((ci as u64) << 32),
                    exclude: [case.id.clone()].into(),
                };
                let designs = pipeline::generate(&vae, &ldm, &case.site, db.as_ref(), &opts, &pool)?;
                pipeline::write_designs(&out.join(&case.id), case, &designs)?;
                cases.push(json!({
                    "id": case.id,
                    "samples": designs.len(),
                    "prompt_ids": designs.first().map(|d| d.provenance.prompt_ids.clone()),
                    "sequences": designs.iter().map(|d| d.binder.sequence()).collect::<Vec<_>>(),
                }));
            }
            Ok(summary("generate", json!({ "out": out, "cases": cases })))
        }
        Command::Evaluate { reference, gen, out, common } => {
            resolve(&common, |_| {})?;
            let refs = load_inputs(&reference)?;
            let report = pipeline::evaluate_dirs(&refs, &gen)?;
            let text = serde_json::to_string_pretty(&report)?;
            std::fs::write(&out, text).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            Ok(summary("evaluate", json!({ "out": out, "aggregate": report.aggregate, "missing": report.missing })))
        }
        Command::Redesign {
            vae,
            ldm,
            db,
            input,
            regions,
            rounds,
            candidates,
            out,
            common,
        } => {
            let cfg = resolve(&common, |c| {
                c.redesign_rounds = rounds.unwrap_or(c.redesign_rounds);
                c.output = out.clone();
            })?;
            cfg.snapshot(&out)?;
            let vae = load_vae(&vae)?;
            let mut ldm = load_ldm(&ldm)?;
            ldm.config.retrieval = cfg.ldm.retrieval.clone();
            let db = db.map(|p| Database::load(&p)).transpose()?;
            let pool = pipeline::thread_pool(cfg.deterministic)?;
            let target = RedesignTarget {
                complex: ComplexRecord::read(&input)?,
                regions: regions.iter().map(|r| parse_region(r)).collect::<Result<_>>()?,
            };
            let mut regenerate = |site: &MolecularGraph, len: usize, event: u64| -> Result<Vec<MolecularGraph>> {
                let opts = GenerateOptions {
                    n_samples: candidates.max(1),
                    binder_len: len,
                    seed: cfg.seed.wrapping_add(event << 32),
                    exclude: [target.complex.id.clone()].into(),
                };
                Ok(pipeline::generate(&vae, &ldm, site, db.as_ref(), &opts, &pool)?.into_iter().map(|d| d.binder).collect())
            };
            let scorer = pipeline::ContactScorer::default();
            let result = pipeline::iterative_redesign(&target, &scorer, cfg.redesign_rounds, &mut regenerate)?;
            let path = out.join("trajectory.json");
            std::fs::write(&path, serde_json::to_string_pretty(&result.events)?).map_err(|e| Error::Io { path, source: e })?;
            let best_score = result.best.as_ref().map(|b| b.1);
            if let Some((best, _)) = &result.best {
                best.write(&out.join("best.json"))?;
                let path = out.join("best.pdb");
                std::fs::write(&path, write_pdb(&[&best.binder, &best.site])).map_err(|e| Error::Io { path, source: e })?;
            }
            Ok(summary(
                "redesign",
                json!({ "events": result.events.len(), "best_score": best_score, "scorer": "contacts", "out": out }),
            ))
        }
    }
}

/// Key vector from a JSON query file, encoding structures with the VAE.
fn query_key(path: &Path, checkpoint: Option<&Path>) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    let value: Value = serde_json::from_str(&text)?;
    let numbers = |v: &Value| -> Option<Vec<f64>> { v.as_array()?.iter().map(Value::as_f64).collect() };
    if let Some(k) = numbers(&value).or_else(|| numbers(&value["key"])) {
        return Ok(k);
    }
    let site: MolecularGraph = match serde_json::from_value::<ComplexRecord>(value.clone()) {
        Ok(rec) => rec.site,
        Err(_) => serde_json::from_value(value)?,
    };
    let ckpt = checkpoint.ok_or_else(|| Error::InvalidArgument("--checkpoint is required to encode a structure query".into()))?;
    Ok(load_vae(ckpt)?.encode(&site)?.1.vec)
}
