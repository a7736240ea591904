use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::{aar, detect_interactions, diversity, ism, ito, nan_mean, rmsd_ca, DesignSample, DiversityCriterion};
use crate::molgraph::ComplexRecord;
use crate::{Error, Result};

pub const REPORT_SCHEMA: u32 = 1;

/// Metrics of one reference case averaged over its generated samples. NaN
/// values serialize as `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub id: String,
    pub samples: usize,
    pub aar: f64,
    /// `None` when no sample has the reference length.
    pub rmsd: Option<f64>,
    /// NaN when the reference has no interactions.
    pub ism: f64,
    pub ito: f64,
    pub diversity_sequence: f64,
    pub diversity_structure: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub cases: usize,
    pub samples: usize,
    pub aar: f64,
    pub rmsd: f64,
    pub rmsd_skipped: usize,
    pub ism: f64,
    pub ism_excluded: usize,
    pub ito: f64,
    pub ito_excluded: usize,
    pub diversity_sequence: f64,
    pub diversity_structure: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub cases: Vec<CaseReport>,
    /// Reference ids without generated samples.
    pub missing: Vec<String>,
    pub aggregate: Aggregate,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn evaluate_case(reference: &ComplexRecord, generated: &[ComplexRecord]) -> Result<CaseReport> {
    if generated.is_empty() {
        return Err(Error::InvalidArgument(format!("no samples for case {}", reference.id)));
    }
    let ref_seq = reference.binder.sequence();
    let ref_ca = reference.binder.ca_coords();
    let ref_site = reference.site.ca_coords();
    let ref_int = detect_interactions(&reference.binder, &reference.site);
    let mut aars = Vec::new();
    let mut rmsds = Vec::new();
    let mut isms = Vec::new();
    let mut itos = Vec::new();
    let mut designs = Vec::new();
    for g in generated {
        let seq = g.binder.sequence();
        aars.push(aar(&seq, &ref_seq)?);
        let ca = g.binder.ca_coords();
        if ca.len() == ref_ca.len() {
            rmsds.push(rmsd_ca(&ca, &ref_ca, &g.site.ca_coords(), &ref_site)?);
        }
        let found = detect_interactions(&g.binder, &g.site);
        isms.push(ism(&found, &ref_int));
        itos.push(ito(&found, &ref_int));
        designs.push(DesignSample { sequence: seq, ca });
    }
    Ok(CaseReport {
        id: reference.id.clone(),
        samples: generated.len(),
        aar: mean(&aars),
        rmsd: (!rmsds.is_empty()).then(|| mean(&rmsds)),
        ism: mean(&isms),
        ito: mean(&itos),
        diversity_sequence: diversity(&designs, DiversityCriterion::Sequence)?,
        diversity_structure: diversity(&designs, DiversityCriterion::Structure)?,
    })
}

fn sample_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("sample_"))
        })
        .collect();
    paths.sort_by_key(|p| {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        (stem.trim_start_matches("sample_").parse::<usize>().unwrap_or(usize::MAX), p.clone())
    });
    Ok(paths)
}

/// Compare every reference complex with the samples in `gen_dir/<id>/`.
pub fn evaluate_dirs(references: &[ComplexRecord], gen_dir: &Path) -> Result<EvaluationReport> {
    let mut cases = Vec::new();
    let mut missing = Vec::new();
    for r in references {
        let dir = gen_dir.join(&r.id);
        let files = if dir.is_dir() { sample_files(&dir)? } else { vec![] };
        if files.is_empty() {
            missing.push(r.id.clone());
            continue;
        }
        let generated = files.iter().map(|p| ComplexRecord::read(p)).collect::<Result<Vec<_>>>()?;
        cases.push(evaluate_case(r, &generated)?);
    }
    Ok(summarize(cases, missing))
}

pub fn summarize(cases: Vec<CaseReport>, missing: Vec<String>) -> EvaluationReport {
    let col = |f: fn(&CaseReport) -> f64| nan_mean(&cases.iter().map(f).collect::<Vec<_>>());
    let (ism_mean, ism_excluded) = col(|c| c.ism);
    let (ito_mean, ito_excluded) = col(|c| c.ito);
    let rmsds: Vec<f64> = cases.iter().filter_map(|c| c.rmsd).collect();
    let aggregate = Aggregate {
        cases: cases.len(),
        samples: cases.iter().map(|c| c.samples).sum(),
        aar: col(|c| c.aar).0,
        rmsd: if rmsds.is_empty() { f64::NAN } else { mean(&rmsds) },
        rmsd_skipped: cases.len() - rmsds.len(),
        ism: ism_mean,
        ism_excluded,
        ito: ito_mean,
        ito_excluded,
        diversity_sequence: col(|c| c.diversity_sequence).0,
        diversity_structure: col(|c| c.diversity_structure).0,
    };
    EvaluationReport {
        schema_version: REPORT_SCHEMA,
        cases,
        missing,
        aggregate,
    }
}
