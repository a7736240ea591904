use std::collections::HashSet;
use std::ops::Range;

use super::*;
use crate::ldm::RetrievalSettings;
use crate::molgraph::synth_complex;
use crate::retrieval::query_topk;

fn toy_config() -> RunConfig {
    let mut c = RunConfig::toy();
    c.vae.hidden = 16;
    c.vae.edge_size = 8;
    c.ldm.hidden = 16;
    c.ldm.edge_size = 8;
    c.ldm.prompt_dim = 16;
    c.ldm.steps = 10;
    c.batch_size = 4;
    c.learning_rate = 3e-3;
    c.deterministic = true;
    c
}

fn dataset(n: u64, offset: u64) -> Vec<ComplexRecord> {
    (0..n).map(|s| synth_complex(offset + s, 5, 12).prepared(10.0, 9).unwrap()).collect()
}

fn serial() -> rayon::ThreadPool {
    thread_pool(true).unwrap()
}

#[test]
fn config_round_trips_and_validates() {
    let mut c = toy_config();
    c.binder_len = Some(7);
    c.held_out = Some("held".into());
    let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
    assert_eq!(back, c);
    let flat = RunConfig::from_toml("seed = 5\nvae.lambda1 = 0.3\nldm.retrieval.mode = \"random\"\n").unwrap();
    assert_eq!((flat.seed, flat.vae.lambda1), (5, 0.3));
    assert!(matches!(RunConfig::from_toml("sed = 5"), Err(Error::Config(_))));

    let mut bad = toy_config();
    bad.ldm.prompt_dim = 8;
    assert!(bad.validate().is_err());
    bad = toy_config();
    bad.learning_rate = f64::NAN;
    assert!(bad.validate().is_err());
    bad = toy_config();
    bad.batch_size = 0;
    assert!(bad.validate().is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = c.snapshot(&dir.path().join("run")).unwrap();
    assert_eq!(RunConfig::load(&path).unwrap(), c);
}

#[test]
fn vae_training_is_deterministic_and_logs_lambdas() {
    let mut c = toy_config();
    c.vae_epochs = 6;
    c.vae.lambda1 = 0.25;
    let (train, held) = (dataset(12, 0), dataset(4, 100));
    let run = || {
        let mut log = Vec::new();
        let (vae, hist) = train_vae(&c, &train, &held, &mut log).unwrap();
        let mut ck = Checkpoint::new();
        vae.write_to(&mut ck).unwrap();
        (ck.to_bytes().unwrap(), hist, String::from_utf8(log).unwrap())
    };
    let (a, hist, log) = run();
    let (b, _, _) = run();
    assert_eq!(a, b);
    let lines: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 6);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["epoch"], i + 1);
        assert_eq!(l["lambda1"], 0.25);
        assert_eq!(l["lambda2"], 0.6);
        assert!(l["train"]["contrastive"].is_number());
    }
    let first = hist[0].held_out.as_ref().unwrap().total;
    let last = hist.last().unwrap().held_out.as_ref().unwrap().total;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn database_has_one_entry_per_complex() {
    let c = toy_config();
    let vae = Vae::new(c.vae.clone(), 3).unwrap();
    let data = dataset(50, 0);
    let build = encode_database(&vae, &data, &serial()).unwrap();
    assert_eq!(build.db.len(), 50);
    assert!(build.skipped.is_empty());
    for i in [0, 7, 19, 33, 49] {
        let e = &build.db.entries()[i];
        assert_eq!(e.id, data[i].id);
        assert_eq!(e.domain_tag, data[i].domain_tag);
        let key = vae.encode(&data[i].site).unwrap().1.vec;
        let value = vae.encode(&data[i].binder).unwrap().1.vec;
        assert_eq!(e.key, key.iter().map(|&x| x as f32).collect::<Vec<_>>());
        assert_eq!(e.value_f64(), value.iter().map(|&x| x as f32 as f64).collect::<Vec<_>>());
    }
    let again = encode_database(&vae, &data, &thread_pool(false).unwrap()).unwrap();
    assert_eq!(again.db.to_bytes().unwrap(), build.db.to_bytes().unwrap());
}

#[test]
fn broken_complexes_are_skipped() {
    let vae = Vae::new(toy_config().vae, 3).unwrap();
    let mut data = dataset(3, 0);
    data[1].site.blocks.clear();
    let build = encode_database(&vae, &data, &serial()).unwrap();
    assert_eq!(build.db.len(), 2);
    assert_eq!(build.skipped.len(), 1);
    assert_eq!(build.skipped[0].0, data[1].id);
}

#[test]
fn ldm_training_never_prompts_with_own_entry() {
    let mut c = toy_config();
    c.ldm.retrieval.n = 3;
    let vae = Vae::new(c.vae.clone(), 3).unwrap();
    let data = dataset(10, 0);
    let db = encode_database(&vae, &data, &serial()).unwrap().db;
    let samples = ldm_samples(&vae, &data, &serial()).unwrap();
    let mut ldm = Ldm::new(c.ldm.clone(), 1).unwrap();
    let mut opt = Adam::new(1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut seen = 0;
    for batch in samples.chunks(3) {
        let step = ldm.train_step(&mut opt, batch, Some(&db), &mut rng).unwrap();
        for (s, ids) in batch.iter().zip(&step.prompt_ids) {
            assert_eq!(ids.len(), 3);
            assert!(!ids.contains(&s.id));
            seen += 1;
        }
    }
    assert_eq!(seen, 10);

    c.ldm_epochs = 2;
    let mut log = Vec::new();
    let (_, hist) = train_ldm(&c, &samples, &samples[..2], Some(&db), &mut log).unwrap();
    assert_eq!(hist.len(), 2);
    assert_eq!(String::from_utf8(log).unwrap().lines().count(), 2);
    assert!(hist.iter().all(|h| h.loss.is_finite() && h.held_out.unwrap().is_finite()));
}

struct Models {
    vae: Vae,
    ldm: Ldm,
    db: Database,
    data: Vec<ComplexRecord>,
}

fn models(retrieval: RetrievalSettings) -> Models {
    let mut c = toy_config();
    c.ldm.retrieval = retrieval;
    let vae = Vae::new(c.vae.clone(), 3).unwrap();
    let data = dataset(8, 0);
    let db = encode_database(&vae, &data, &serial()).unwrap().db;
    Models {
        ldm: Ldm::new(c.ldm, 4).unwrap(),
        vae,
        db,
        data,
    }
}

fn opts(n: usize, seed: u64) -> GenerateOptions {
    GenerateOptions {
        n_samples: n,
        binder_len: 5,
        seed,
        exclude: HashSet::new(),
    }
}

#[test]
fn generation_is_reproducible_with_distinct_samples() {
    let m = models(RetrievalSettings { n: 3, ..Default::default() });
    let site = &m.data[0].site;
    let a = generate(&m.vae, &m.ldm, site, Some(&m.db), &opts(3, 9), &serial()).unwrap();
    let b = generate(&m.vae, &m.ldm, site, Some(&m.db), &opts(3, 9), &thread_pool(false).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 3);
    for i in 0..3 {
        assert_eq!(a[i].binder.len(), 5);
        assert_eq!(a[i].provenance.sample, i);
        for j in 0..i {
            assert_ne!(a[i].binder, a[j].binder);
        }
    }
    let other = generate(&m.vae, &m.ldm, site, Some(&m.db), &opts(3, 10), &serial()).unwrap();
    assert_ne!(other[0].binder, a[0].binder);
}

#[test]
fn provenance_is_the_topk_result() {
    let m = models(RetrievalSettings { n: 3, ..Default::default() });
    let site = &m.data[2].site;
    let mut o = opts(2, 1);
    o.exclude.insert(m.data[2].id.clone());
    let designs = generate(&m.vae, &m.ldm, site, Some(&m.db), &o, &serial()).unwrap();
    let key = m.vae.encode(site).unwrap().1.vec;
    let direct = query_topk(&m.db, &key, 3, &o.exclude).unwrap();
    for d in &designs {
        assert_eq!(d.provenance.prompt_ids, direct.entry_ids);
        assert_eq!(d.provenance.prompt_scores, direct.scores);
        assert!(!d.provenance.prompt_ids.contains(&m.data[2].id));
    }
}

#[test]
fn threshold_above_every_score_gives_empty_prompt() {
    let probe = models(RetrievalSettings::default());
    let site = &probe.data[1].site;
    let key = probe.vae.encode(site).unwrap().1.vec;
    let max = query_topk(&probe.db, &key, 1, &HashSet::new()).unwrap().scores[0];
    let m = models(RetrievalSettings {
        threshold: Some(max + 1e-6),
        ..Default::default()
    });
    let designs = generate(&m.vae, &m.ldm, site, Some(&m.db), &opts(2, 0), &serial()).unwrap();
    assert_eq!(designs.len(), 2);
    assert!(designs.iter().all(|d| d.provenance.prompt_ids.is_empty() && d.provenance.warning.is_none()));
    let unconditional = generate(&m.vae, &m.ldm, site, None, &opts(2, 0), &serial()).unwrap();
    assert_eq!(designs[0].binder, unconditional[0].binder);
}

#[test]
fn empty_database_falls_back_with_warning() {
    let m = models(RetrievalSettings::default());
    let empty = Database::new(m.vae.config.hidden);
    let designs = generate(&m.vae, &m.ldm, &m.data[0].site, Some(&empty), &opts(1, 0), &serial()).unwrap();
    assert!(designs[0].provenance.warning.is_some());
    assert!(designs[0].provenance.prompt_ids.is_empty());
}

#[test]
fn designs_are_written_with_provenance() {
    let m = models(RetrievalSettings { n: 2, ..Default::default() });
    let case = &m.data[0];
    let designs = generate(&m.vae, &m.ldm, &case.site, Some(&m.db), &opts(2, 0), &serial()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_designs(dir.path(), case, &designs).unwrap();
    let rec = ComplexRecord::read(&dir.path().join("sample_1.json")).unwrap();
    assert_eq!(rec.binder, designs[1].binder);
    assert_eq!(rec.site, case.site);
    assert!(dir.path().join("sample_0.pdb").exists());
    let prov: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["samples"][1]["prompt_ids"].as_array().unwrap().len(), 2);
}

struct Constant;

impl ExternalScorer for Constant {
    fn name(&self) -> &str {
        "constant"
    }
    fn score(&self, _: &ComplexRecord) -> Result<f64> {
        Ok(-1.0)
    }
}

struct Failing;

impl ExternalScorer for Failing {
    fn name(&self) -> &str {
        "failing"
    }
    fn score(&self, _: &ComplexRecord) -> Result<f64> {
        Err(Error::Scorer {
            name: "failing".into(),
            message: "no binary".into(),
        })
    }
}

fn framework() -> RedesignTarget {
    let rec = synth_complex(4, 18, 24).prepared(10.0, 9).unwrap();
    let regions: Vec<Range<usize>> = (0..6).map(|i| 3 * i..3 * i + 2).collect();
    RedesignTarget { complex: rec, regions }
}

/// Candidates copied from jittered framework blocks, three per event.
fn jitter_generator(target: &RedesignTarget) -> impl FnMut(&MolecularGraph, usize, u64) -> Result<Vec<MolecularGraph>> + '_ {
    move |_, len, event| {
        Ok((0..3)
            .map(|c| {
                let shift = ((event * 3 + c) % 7) as f64 - 3.0;
                let mut blocks = target.complex.binder.blocks[..len].to_vec();
                for b in &mut blocks {
                    for a in &mut b.atoms {
                        a.coord[2] += shift;
                    }
                }
                MolecularGraph::new(blocks, crate::molgraph::Role::Binder)
            })
            .collect())
    }
}

#[test]
fn redesign_counts_events_and_keeps_best() {
    let target = framework();
    let mut calls = 0;
    let mut gen = jitter_generator(&target);
    let mut counting = |s: &MolecularGraph, n: usize, e: u64| {
        calls += 1;
        assert_eq!(n, 2);
        gen(s, n, e)
    };
    let out = iterative_redesign(&target, &ContactScorer::default(), 3, &mut counting).unwrap();
    assert_eq!(out.events.len(), 18);
    assert_eq!(calls, 18);
    let bests: Vec<f64> = out.events.iter().map(|e| e.best_so_far.unwrap()).collect();
    assert!(bests.windows(2).all(|w| w[1] <= w[0]), "{bests:?}");
    let (best, score) = out.best.unwrap();
    assert_eq!(ContactScorer::default().score(&best).unwrap(), score);
    assert_eq!(score, *bests.last().unwrap());
    for e in &out.events {
        let min = e.candidate_scores.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(e.candidate_scores[e.chosen.unwrap()], min);
    }
}

#[test]
fn constant_scorer_keeps_first_candidate() {
    let target = framework();
    let mut gen = jitter_generator(&target);
    let out = iterative_redesign(&target, &Constant, 3, &mut gen).unwrap();
    assert!(out.events.iter().all(|e| e.best_so_far == Some(-1.0) && e.chosen == Some(0)));
    let (best, _) = out.best.unwrap();
    // Only the first event replaced the design: region 0 holds candidate 0 of event 0.
    let first = jitter_generator(&target)(&target.complex.site, 2, 0).unwrap().remove(0);
    assert_eq!(best.binder.blocks[0].atoms, first.blocks[0].atoms);
    assert_eq!(best.binder.blocks[3..], target.complex.binder.blocks[3..]);
}

#[test]
fn scorer_failures_skip_events() {
    let target = framework();
    let mut gen = jitter_generator(&target);
    let out = iterative_redesign(&target, &Failing, 1, &mut gen).unwrap();
    assert_eq!(out.events.len(), 6);
    assert!(out.best.is_none());
    assert!(out.events.iter().all(|e| e.error.is_some() && e.chosen.is_none()));
    let bad = RedesignTarget {
        regions: vec![0..100],
        ..framework()
    };
    assert!(iterative_redesign(&bad, &Constant, 1, &mut gen).is_err());
}

#[test]
fn contact_score_counts_residue_pairs() {
    let mut rec = synth_complex(0, 3, 6);
    let far = ContactScorer { cutoff: 0.1 }.score(&rec).unwrap();
    assert_eq!(far, 0.0);
    let all = ContactScorer { cutoff: 1e3 }.score(&rec).unwrap();
    assert_eq!(all, -18.0);
    rec.site.blocks.truncate(1);
    assert_eq!(ContactScorer { cutoff: 1e3 }.score(&rec).unwrap(), -3.0);
}

#[test]
fn evaluating_references_against_themselves() {
    let refs = dataset(3, 40);
    let dir = tempfile::tempdir().unwrap();
    for r in &refs[..2] {
        let case = dir.path().join(&r.id);
        std::fs::create_dir_all(&case).unwrap();
        for k in 0..2 {
            r.write(&case.join(format!("sample_{k}.json"))).unwrap();
        }
    }
    let report = evaluate_dirs(&refs, dir.path()).unwrap();
    assert_eq!(report.missing, vec![refs[2].id.clone()]);
    assert_eq!(report.cases.len(), 2);
    for c in &report.cases {
        assert_eq!(c.samples, 2);
        assert_eq!(c.aar, 100.0);
        assert!(c.rmsd.unwrap() < 1e-9);
        assert_eq!(c.diversity_sequence, 0.5);
        if !c.ism.is_nan() {
            assert_eq!((c.ism, c.ito), (1.0, 1.0));
        }
    }
    assert_eq!(report.aggregate.samples, 4);
    assert_eq!(report.aggregate.aar, 100.0);
}

#[test]
fn missing_interactions_are_excluded_and_serialized_as_null() {
    let mut reference = dataset(1, 0).remove(0);
    for b in &mut reference.site.blocks {
        for a in &mut b.atoms {
            a.coord[2] -= 100.0;
        }
    }
    let case = evaluate_case(&reference, &[reference.clone()]).unwrap();
    assert!(case.ism.is_nan() && case.ito.is_nan());
    let other = CaseReport {
        id: "b".into(),
        ism: 0.5,
        ito: 1.0,
        ..case.clone()
    };
    let report = summarize(vec![case, other], vec![]);
    assert_eq!((report.aggregate.ism, report.aggregate.ism_excluded), (0.5, 1));
    assert_eq!((report.aggregate.ito, report.aggregate.ito_excluded), (1.0, 1));
    let json = serde_json::to_value(&report).unwrap();
    assert!(json["cases"][0]["ism"].is_null());
    assert_eq!(json["schema_version"], 1);
}
