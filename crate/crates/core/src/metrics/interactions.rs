//! Geometric interaction rules between binder and site residues.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::dist;
use crate::molgraph::{Block, MolecularGraph};

pub const HBOND_MAX: f64 = 3.5;
pub const HYDROPHOBIC_MAX: f64 = 4.0;
pub const SALT_BRIDGE_MAX: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionType {
    HydrogenBond,
    Hydrophobic,
    SaltBridge,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ResidueId {
    pub chain: String,
    pub index: i32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub insertion: String,
}

impl ResidueId {
    pub fn new(chain: &str, index: i32) -> Self {
        Self {
            chain: chain.to_string(),
            index,
            insertion: String::new(),
        }
    }

    fn of(b: &Block) -> Self {
        Self {
            chain: b.chain_id.clone(),
            index: b.residue_index,
            insertion: b.insertion_code.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub itype: InteractionType,
    pub site_residue: ResidueId,
    pub binder_residue: ResidueId,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractionSet {
    pub records: Vec<InteractionRecord>,
}

impl InteractionSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn type_counts(&self) -> BTreeMap<InteractionType, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(r.itype).or_insert(0) += 1;
        }
        out
    }

    pub(crate) fn record_counts(&self) -> BTreeMap<&InteractionRecord, usize> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            *out.entry(r).or_insert(0) += 1;
        }
        out
    }
}

/// Side-chain hydrogen-bond donors by residue; backbone N (except Pro) is
/// added separately.
fn side_donors(code3: &str) -> &'static [&'static str] {
    match code3 {
        "ARG" => &["NE", "NH1", "NH2"],
        "ASN" => &["ND2"],
        "GLN" => &["NE2"],
        "HIS" => &["ND1", "NE2"],
        "LYS" => &["NZ"],
        "SER" => &["OG"],
        "THR" => &["OG1"],
        "TYR" => &["OH"],
        "TRP" => &["NE1"],
        _ => &[],
    }
}

/// Side-chain acceptors; backbone O is added separately.
fn side_acceptors(code3: &str) -> &'static [&'static str] {
    match code3 {
        "ASP" => &["OD1", "OD2"],
        "GLU" => &["OE1", "OE2"],
        "ASN" => &["OD1"],
        "GLN" => &["OE1"],
        "HIS" => &["ND1", "NE2"],
        "SER" => &["OG"],
        "THR" => &["OG1"],
        "TYR" => &["OH"],
        _ => &[],
    }
}

fn cationic(code3: &str) -> &'static [&'static str] {
    match code3 {
        "LYS" => &["NZ"],
        "ARG" => &["NE", "NH1", "NH2"],
        "HIS" => &["ND1", "NE2"],
        _ => &[],
    }
}

fn anionic(code3: &str) -> &'static [&'static str] {
    match code3 {
        "ASP" => &["OD1", "OD2"],
        "GLU" => &["OE1", "OE2"],
        _ => &[],
    }
}

const HYDROPHOBIC: [&str; 9] = ["ALA", "VAL", "LEU", "ILE", "MET", "PHE", "TRP", "PRO", "TYR"];

fn code3(b: &Block) -> &'static str {
    crate::molgraph::vocab::template(b.block_type).code3
}

fn coords<'a>(b: &'a Block, names: &'a [&str]) -> impl Iterator<Item = [f64; 3]> + 'a {
    b.atoms.iter().filter(|a| names.contains(&a.name.as_str())).map(|a| a.coord)
}

fn donors(b: &Block) -> Vec<[f64; 3]> {
    let mut out: Vec<_> = coords(b, side_donors(code3(b))).collect();
    if code3(b) != "PRO" {
        out.extend(coords(b, &["N"]));
    }
    out
}

fn acceptors(b: &Block) -> Vec<[f64; 3]> {
    let mut out: Vec<_> = coords(b, side_acceptors(code3(b))).collect();
    out.extend(coords(b, &["O"]));
    out
}

/// Carbons other than the backbone carbonyl.
fn carbons(b: &Block) -> Vec<[f64; 3]> {
    b.atoms
        .iter()
        .filter(|a| a.element == "C" && a.name != "C")
        .map(|a| a.coord)
        .collect()
}

fn any_within(xs: &[[f64; 3]], ys: &[[f64; 3]], cutoff: f64) -> bool {
    xs.iter().any(|x| ys.iter().any(|y| dist(*x, *y) <= cutoff))
}

fn pair_types(binder: &Block, site: &Block) -> Vec<InteractionType> {
    let mut out = Vec::new();
    if any_within(&donors(binder), &acceptors(site), HBOND_MAX) || any_within(&donors(site), &acceptors(binder), HBOND_MAX) {
        out.push(InteractionType::HydrogenBond);
    }
    if HYDROPHOBIC.contains(&code3(binder))
        && HYDROPHOBIC.contains(&code3(site))
        && any_within(&carbons(binder), &carbons(site), HYDROPHOBIC_MAX)
    {
        out.push(InteractionType::Hydrophobic);
    }
    let pos_neg = |p: &Block, n: &Block| {
        let (c, a): (Vec<_>, Vec<_>) = (coords(p, cationic(code3(p))).collect(), coords(n, anionic(code3(n))).collect());
        any_within(&c, &a, SALT_BRIDGE_MAX)
    };
    if pos_neg(binder, site) || pos_neg(site, binder) {
        out.push(InteractionType::SaltBridge);
    }
    out
}

/// One record per interaction type and residue pair.
pub fn detect_interactions(binder: &MolecularGraph, site: &MolecularGraph) -> InteractionSet {
    let mut set = BTreeSet::new();
    for b in &binder.blocks {
        for s in &site.blocks {
            for itype in pair_types(b, s) {
                set.insert(InteractionRecord {
                    itype,
                    site_residue: ResidueId::of(s),
                    binder_residue: ResidueId::of(b),
                });
            }
        }
    }
    InteractionSet {
        records: set.into_iter().collect(),
    }
}
