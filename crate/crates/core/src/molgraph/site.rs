use super::{Block, ComplexRecord, MolecularGraph, Role};
use crate::geometry::dist;
use crate::{Error, Result};

/// Cβ position, or Cα for glycine and residues missing Cβ; the block center
/// when neither is resolved.
pub fn cb_proxy(block: &Block) -> [f64; 3] {
    block
        .atom("CB")
        .or_else(|| block.atom("CA"))
        .map(|a| a.coord)
        .unwrap_or_else(|| block.center())
}

/// Target residues whose Cβ proxy lies within `cutoff` (inclusive) of any
/// binder Cβ proxy, in original order.
pub fn extract_binding_site(complex: &ComplexRecord, cutoff: f64) -> Result<MolecularGraph> {
    let binder: Vec<_> = complex.binder.blocks.iter().map(cb_proxy).collect();
    let blocks: Vec<Block> = complex
        .site
        .blocks
        .iter()
        .filter(|b| {
            let p = cb_proxy(b);
            binder.iter().any(|q| dist(p, *q) <= cutoff)
        })
        .cloned()
        .collect();
    if blocks.is_empty() {
        return Err(Error::NoContacts);
    }
    Ok(MolecularGraph::new(blocks, Role::BindingSite))
}
