//! Molecular data model: atoms grouped into residue blocks, block graphs for
//! binders and binding sites, and complex records pairing the two.

pub(crate) mod graph;
mod pdb;
mod site;
mod synth;
pub mod vocab;

use serde::{Deserialize, Serialize};

use crate::geometry::{centroid, dist};

pub use graph::build_block_graph;
pub use pdb::{parse_pdb, parse_pdb_str, write_pdb};
pub use site::{cb_proxy, extract_binding_site};
pub use synth::{synth_complex, Coupling, SyntheticFamily};

/// Default k for the block kNN graph.
pub const K_NEIGHBORS: usize = 9;
/// Default binding-site cutoff (Å, inclusive).
pub const SITE_CUTOFF: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub element: String,
    pub name: String,
    pub coord: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    /// Index into [`vocab::TEMPLATES`].
    pub block_type: usize,
    /// Heavy atoms in template order.
    pub atoms: Vec<Atom>,
    pub chain_id: String,
    pub residue_index: i32,
    #[serde(default)]
    pub insertion_code: String,
    /// Covalent bonds inside the block as pairs of atom indices.
    #[serde(default)]
    pub intra_bonds: Vec<(usize, usize)>,
}

impl Block {
    /// Unweighted mean of the heavy-atom coordinates.
    pub fn center(&self) -> [f64; 3] {
        let coords: Vec<_> = self.atoms.iter().map(|a| a.coord).collect();
        centroid(&coords)
    }

    pub fn atom(&self, name: &str) -> Option<&Atom> {
        self.atoms.iter().find(|a| a.name == name)
    }

    pub fn ca(&self) -> Option<[f64; 3]> {
        self.atom("CA").map(|a| a.coord)
    }

    /// Cα, falling back to the block center for incomplete residues.
    pub fn ca_or_center(&self) -> [f64; 3] {
        self.ca().unwrap_or_else(|| self.center())
    }

    pub fn code1(&self) -> char {
        vocab::TEMPLATES[self.block_type].code1
    }

    /// Recompute intra-block bonds from interatomic distances.
    pub fn assign_intra_bonds(&mut self) {
        self.intra_bonds.clear();
        for i in 0..self.atoms.len() {
            for j in i + 1..self.atoms.len() {
                let limit = if self.atoms[i].element == "S" || self.atoms[j].element == "S" {
                    2.2
                } else {
                    1.9
                };
                if dist(self.atoms[i].coord, self.atoms[j].coord) <= limit {
                    self.intra_bonds.push((i, j));
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BondKind {
    Peptide,
}

/// Directed half of a symmetric block edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    #[serde(default)]
    pub bond: Option<BondKind>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Binder,
    BindingSite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MolecularGraph {
    pub blocks: Vec<Block>,
    #[serde(default)]
    pub edges: Vec<Edge>,
    pub role: Role,
}

impl MolecularGraph {
    pub fn new(blocks: Vec<Block>, role: Role) -> Self {
        Self {
            blocks,
            edges: Vec::new(),
            role,
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn centers(&self) -> Vec<[f64; 3]> {
        self.blocks.iter().map(Block::center).collect()
    }

    pub fn ca_coords(&self) -> Vec<[f64; 3]> {
        self.blocks.iter().map(Block::ca_or_center).collect()
    }

    pub fn block_types(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.block_type).collect()
    }

    pub fn sequence(&self) -> String {
        vocab::sequence_string(self.block_types())
    }

    /// True when blocks `i` and `j` are consecutive residues of one chain.
    pub fn sequential(&self, i: usize, j: usize) -> bool {
        let (a, b) = (&self.blocks[i], &self.blocks[j]);
        a.chain_id == b.chain_id && (a.residue_index - b.residue_index).abs() == 1
    }

    /// Apply a rigid transform to every atom.
    pub fn transformed(&self, t: &crate::geometry::RigidTransform) -> Self {
        let mut out = self.clone();
        for b in &mut out.blocks {
            for a in &mut b.atoms {
                a.coord = t.apply(a.coord);
            }
        }
        out
    }

    /// Neighbor lists derived from `edges`.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.blocks.len()];
        for e in &self.edges {
            adj[e.src].push(e.dst);
        }
        adj
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    Peptide,
    Antibody,
    Protfrag,
    Synthetic,
}

impl DomainTag {
    pub fn code(self) -> u8 {
        match self {
            DomainTag::Peptide => 0,
            DomainTag::Antibody => 1,
            DomainTag::Protfrag => 2,
            DomainTag::Synthetic => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => DomainTag::Peptide,
            1 => DomainTag::Antibody,
            2 => DomainTag::Protfrag,
            3 => DomainTag::Synthetic,
            _ => return None,
        })
    }
}

impl std::str::FromStr for DomainTag {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "peptide" => Ok(DomainTag::Peptide),
            "antibody" => Ok(DomainTag::Antibody),
            "protfrag" => Ok(DomainTag::Protfrag),
            "synthetic" => Ok(DomainTag::Synthetic),
            other => Err(crate::Error::InvalidArgument(format!("unknown domain tag {other}"))),
        }
    }
}

/// A binder paired with its target residues. After
/// [`extract_binding_site`] the `site` graph holds only the binding site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexRecord {
    pub id: String,
    pub binder: MolecularGraph,
    pub site: MolecularGraph,
    pub domain_tag: DomainTag,
    pub source: String,
}

impl ComplexRecord {
    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read(path: &std::path::Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &std::path::Path) -> crate::Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| crate::Error::io(path, e))
    }

    /// Narrow `site` to the binding site and build kNN graphs on both sides.
    pub fn prepared(mut self, cutoff: f64, k: usize) -> crate::Result<Self> {
        let site = extract_binding_site(&self, cutoff)?;
        self.site = build_block_graph(&site, k);
        self.binder = build_block_graph(&self.binder, k);
        Ok(self)
    }
}
