//! Sequence and structure metrics for generated binders.

mod align;
mod interactions;

use serde::{Deserialize, Serialize};

use crate::geometry::{kabsch, rmsd};
use crate::{Error, Result};
pub use align::{align, blosum62, GAP_EXTEND, GAP_OPEN};
pub use interactions::{
    detect_interactions, InteractionRecord, InteractionSet, InteractionType, ResidueId, HBOND_MAX, HYDROPHOBIC_MAX, SALT_BRIDGE_MAX,
};

/// Fraction of reference interactions matched exactly (type, site residue
/// and binder residue). `NaN` when the reference is empty.
pub fn ism(pred: &InteractionSet, reference: &InteractionSet) -> f64 {
    if reference.is_empty() {
        return f64::NAN;
    }
    let pred = pred.record_counts();
    let matched: usize = reference
        .record_counts()
        .iter()
        .map(|(r, &c)| c.min(pred.get(r).copied().unwrap_or(0)))
        .sum();
    matched as f64 / reference.len() as f64
}

/// `Σ_type min(ref, pred) / Σ_type ref` over interaction-type counts.
/// `NaN` when the reference is empty.
pub fn ito(pred: &InteractionSet, reference: &InteractionSet) -> f64 {
    if reference.is_empty() {
        return f64::NAN;
    }
    let pred = pred.type_counts();
    let overlap: usize = reference
        .type_counts()
        .iter()
        .map(|(t, &c)| c.min(pred.get(t).copied().unwrap_or(0)))
        .sum();
    overlap as f64 / reference.len() as f64
}

/// Amino-acid recovery in percent. Equal lengths compare position by
/// position; otherwise identical pairs of the global alignment are counted.
/// Either way the count is divided by the reference length.
pub fn aar(generated: &str, reference: &str) -> Result<f64> {
    let (g, r) = (align::encode(generated)?, align::encode(reference)?);
    if g.is_empty() || r.is_empty() {
        return Err(Error::InvalidArgument("aar needs non-empty sequences".into()));
    }
    let matches = if g.len() == r.len() {
        g.iter().zip(&r).filter(|(a, b)| a == b).count()
    } else {
        align::align_codes(&g, &r).1
    };
    Ok(100.0 * matches as f64 / r.len() as f64)
}

/// Identical aligned pairs over the longer length; symmetric in its
/// arguments.
pub fn sequence_identity(a: &str, b: &str) -> Result<f64> {
    let (x, y) = (align::encode(a)?, align::encode(b)?);
    let longest = x.len().max(y.len());
    if longest == 0 {
        return Ok(1.0);
    }
    let matches = if x.len() == y.len() {
        x.iter().zip(&y).filter(|(p, q)| p == q).count()
    } else {
        align::align_codes(&x, &y).1
    };
    Ok(matches as f64 / longest as f64)
}

/// Cα RMSD of the binders after superposing the generated site onto the
/// reference site.
pub fn rmsd_ca(gen: &[[f64; 3]], reference: &[[f64; 3]], site_gen: &[[f64; 3]], site_ref: &[[f64; 3]]) -> Result<f64> {
    if gen.len() != reference.len() || gen.is_empty() {
        return Err(Error::LengthMismatch(format!("binder Cα counts {} vs {}", gen.len(), reference.len())));
    }
    if site_gen.len() != site_ref.len() || site_gen.is_empty() {
        return Err(Error::LengthMismatch(format!("site Cα counts {} vs {}", site_gen.len(), site_ref.len())));
    }
    let t = kabsch(site_gen, site_ref);
    let moved: Vec<_> = gen.iter().map(|p| t.apply(*p)).collect();
    Ok(rmsd(&moved, reference))
}

/// Criterion joining two generations into one cluster.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiversityCriterion {
    /// Sequence identity above 40 %.
    #[default]
    Sequence,
    /// Cα RMSD below 2 Å after superposing the binders.
    Structure,
}

pub const DIVERSITY_IDENTITY: f64 = 0.4;
pub const DIVERSITY_RMSD: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSample {
    pub sequence: String,
    pub ca: Vec<[f64; 3]>,
}

fn similar(a: &DesignSample, b: &DesignSample, criterion: DiversityCriterion) -> Result<bool> {
    Ok(match criterion {
        DiversityCriterion::Sequence => sequence_identity(&a.sequence, &b.sequence)? > DIVERSITY_IDENTITY,
        DiversityCriterion::Structure => {
            a.ca.len() == b.ca.len() && !a.ca.is_empty() && {
                let t = kabsch(&a.ca, &b.ca);
                let moved: Vec<_> = a.ca.iter().map(|p| t.apply(*p)).collect();
                rmsd(&moved, &b.ca) < DIVERSITY_RMSD
            }
        }
    })
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage cluster count over samples.
pub fn cluster_count(samples: &[DesignSample], criterion: DiversityCriterion) -> Result<usize> {
    let mut parent: Vec<usize> = (0..samples.len()).collect();
    for i in 0..samples.len() {
        for j in 0..i {
            if similar(&samples[i], &samples[j], criterion)? {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    Ok((0..samples.len()).filter(|&i| find(&mut parent, i) == i).count())
}

/// Clusters per generation, in `[1/N, 1]`.
pub fn diversity(samples: &[DesignSample], criterion: DiversityCriterion) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("diversity needs at least one sample".into()));
    }
    Ok(cluster_count(samples, criterion)? as f64 / samples.len() as f64)
}

/// Mean over finite values and the number of `NaN` values left out.
pub fn nan_mean(values: &[f64]) -> (f64, usize) {
    let kept: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    let excluded = values.len() - kept.len();
    if kept.is_empty() {
        (f64::NAN, excluded)
    } else {
        (kept.iter().sum::<f64>() / kept.len() as f64, excluded)
    }
}
