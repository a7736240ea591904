use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::molgraph::{build_block_graph, Block, ComplexRecord, MolecularGraph, Role, K_NEIGHBORS};
use crate::{Error, Result};

/// Scores a complex; lower is better.
pub trait ExternalScorer {
    fn name(&self) -> &str;
    fn score(&self, complex: &ComplexRecord) -> Result<f64>;
}

/// Negative count of binder/site residue pairs with any heavy atoms closer
/// than `cutoff` Å.
#[derive(Clone, Debug)]
pub struct ContactScorer {
    pub cutoff: f64,
}

impl Default for ContactScorer {
    fn default() -> Self {
        Self { cutoff: 4.5 }
    }
}

impl ExternalScorer for ContactScorer {
    fn name(&self) -> &str {
        "contacts"
    }

    fn score(&self, complex: &ComplexRecord) -> Result<f64> {
        let c2 = self.cutoff * self.cutoff;
        let touching = |a: &Block, b: &Block| {
            a.atoms.iter().any(|x| {
                b.atoms
                    .iter()
                    .any(|y| (0..3).map(|k| (x.coord[k] - y.coord[k]).powi(2)).sum::<f64>() < c2)
            })
        };
        let n = complex
            .binder
            .blocks
            .iter()
            .map(|a| complex.site.blocks.iter().filter(|b| touching(a, b)).count())
            .sum::<usize>();
        Ok(-(n as f64))
    }
}

/// A framework binder with designable block ranges, next to its target site.
#[derive(Clone, Debug)]
pub struct RedesignTarget {
    pub complex: ComplexRecord,
    pub regions: Vec<Range<usize>>,
}

/// One regeneration of one region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RedesignEvent {
    pub round: usize,
    pub region: usize,
    pub candidate_scores: Vec<f64>,
    /// Index of the best candidate of this event.
    pub chosen: Option<usize>,
    pub best_so_far: Option<f64>,
    /// Set when scoring failed and the event was skipped.
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Redesign {
    pub best: Option<(ComplexRecord, f64)>,
    pub events: Vec<RedesignEvent>,
}

/// Site graph made of the target site plus every framework block outside
/// `region`.
fn context_site(complex: &ComplexRecord, region: &Range<usize>) -> MolecularGraph {
    let blocks: Vec<Block> = complex
        .site
        .blocks
        .iter()
        .cloned()
        .chain(
            complex
                .binder
                .blocks
                .iter()
                .enumerate()
                .filter(|(i, _)| !region.contains(i))
                .map(|(_, b)| b.clone()),
        )
        .collect();
    build_block_graph(&MolecularGraph::new(blocks, Role::BindingSite), K_NEIGHBORS)
}

fn splice(complex: &ComplexRecord, region: &Range<usize>, generated: &MolecularGraph) -> ComplexRecord {
    let mut blocks = complex.binder.blocks.clone();
    for (slot, new) in region.clone().zip(&generated.blocks) {
        let old = &blocks[slot];
        blocks[slot] = Block {
            chain_id: old.chain_id.clone(),
            residue_index: old.residue_index,
            insertion_code: old.insertion_code.clone(),
            ..new.clone()
        };
    }
    let mut out = complex.clone();
    out.binder = build_block_graph(&MolecularGraph::new(blocks, Role::Binder), K_NEIGHBORS);
    out
}

/// Alternate region regeneration and scoring for `rounds` rounds. For every
/// round and region, `regenerate(context_site, region_len, event_index)`
/// proposes candidates for the region of the current best complex. The best
/// candidate replaces the current design when it scores strictly lower;
/// earlier candidates win ties.
pub fn iterative_redesign(
    target: &RedesignTarget,
    scorer: &dyn ExternalScorer,
    rounds: usize,
    regenerate: &mut dyn FnMut(&MolecularGraph, usize, u64) -> Result<Vec<MolecularGraph>>,
) -> Result<Redesign> {
    let n = target.complex.binder.len();
    if let Some(r) = target.regions.iter().find(|r| r.is_empty() || r.end > n) {
        return Err(Error::InvalidArgument(format!("region {r:?} outside binder of {n} blocks")));
    }
    let mut current = target.complex.clone();
    let mut best: Option<(ComplexRecord, f64)> = None;
    let mut events = Vec::with_capacity(rounds * target.regions.len());
    for round in 0..rounds {
        for (ri, region) in target.regions.iter().enumerate() {
            let context = context_site(&current, region);
            let candidates = regenerate(&context, region.len(), events.len() as u64)?;
            let mut scores = Vec::with_capacity(candidates.len());
            let mut error = None;
            for c in &candidates {
                match scorer.score(&splice(&current, region, c)) {
                    Ok(s) => scores.push(s),
                    Err(e) => {
                        log::warn!("scorer {} failed in round {round}, region {ri}: {e}", scorer.name());
                        error = Some(e.to_string());
                        break;
                    }
                }
            }
            let chosen = if error.is_some() {
                None
            } else {
                (0..scores.len()).fold(None, |acc: Option<usize>, i| match acc {
                    Some(b) if scores[b] <= scores[i] => Some(b),
                    _ => Some(i),
                })
            };
            if let Some(i) = chosen {
                if best.as_ref().is_none_or(|(_, b)| scores[i] < *b) {
                    current = splice(&current, region, &candidates[i]);
                    best = Some((current.clone(), scores[i]));
                }
            }
            events.push(RedesignEvent {
                round,
                region: ri,
                candidate_scores: if error.is_some() { vec![] } else { scores },
                chosen,
                best_so_far: best.as_ref().map(|b| b.1),
                error,
            });
        }
    }
    Ok(Redesign { best, events })
}
