//! PDB ingestion (ATOM/HETATM of the first model) and a matching writer.
//!
//! Only template heavy atoms are retained; hydrogens, waters and extra atoms
//! such as OXT are dropped. Alternate locations keep the highest occupancy,
//! first-listed on ties.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use super::vocab::{self, atom_slot, index_of_code3};
use super::{Atom, Block, ComplexRecord, DomainTag, MolecularGraph, Role};
use crate::{Error, Result};

struct AtomLine {
    name: String,
    res_name: String,
    chain: String,
    res_seq: i32,
    icode: String,
    coord: [f64; 3],
    occupancy: f64,
    element: String,
}

fn field(line: &str, start: usize, end: usize) -> &str {
    let end = end.min(line.len());
    if start >= end {
        ""
    } else {
        line.get(start..end).unwrap_or("").trim()
    }
}

fn parse_atom_line(line: &str, lineno: usize) -> Result<AtomLine> {
    let err = |message: String| Error::PdbParse {
        line: lineno,
        message,
    };
    if !line.is_ascii() {
        return Err(err("non-ASCII characters in coordinate record".into()));
    }
    if line.len() < 54 {
        return Err(err(format!("record too short ({} columns)", line.len())));
    }
    let num = |s: &str, what: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| err(format!("cannot parse {what} from {s:?}")))
    };
    let coord = [
        num(field(line, 30, 38), "x")?,
        num(field(line, 38, 46), "y")?,
        num(field(line, 46, 54), "z")?,
    ];
    if coord.iter().any(|c| !c.is_finite()) {
        return Err(err("non-finite coordinate".into()));
    }
    let res_seq = field(line, 22, 26)
        .parse::<i32>()
        .map_err(|_| err(format!("cannot parse residue number from {:?}", field(line, 22, 26))))?;
    let occupancy = match field(line, 54, 60) {
        "" => 1.0,
        s => num(s, "occupancy")?,
    };
    let name = field(line, 12, 16).to_string();
    if name.is_empty() {
        return Err(err("empty atom name".into()));
    }
    let element = match field(line, 76, 78) {
        "" => vocab::element_of(&name).to_string(),
        e => e.to_ascii_uppercase(),
    };
    Ok(AtomLine {
        res_name: field(line, 17, 20).to_string(),
        chain: field(line, 21, 22).to_string(),
        res_seq,
        icode: field(line, 26, 27).to_string(),
        coord,
        occupancy,
        element,
        name,
    })
}

type ResidueKey = (i32, String);

#[derive(Default)]
struct ChainAtoms {
    // (resSeq, iCode) ordering puts insertion codes after the plain number.
    residues: BTreeMap<ResidueKey, (String, HashMap<String, (f64, Atom)>)>,
}

/// Parse PDB text. `source` is recorded verbatim in the result.
pub fn parse_pdb_str(
    text: &str,
    binder_chains: &[String],
    target_chains: &[String],
    source: &str,
) -> Result<ComplexRecord> {
    let mut chains: HashMap<String, ChainAtoms> = HashMap::new();
    let mut chain_order: Vec<String> = Vec::new();
    let mut n_atoms = 0usize;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.starts_with("ENDMDL") {
            break;
        }
        if !(line.starts_with("ATOM") || line.starts_with("HETATM")) {
            continue;
        }
        let rec = parse_atom_line(line, lineno)?;
        n_atoms += 1;
        if rec.element == "H" || rec.element == "D" || rec.res_name == "HOH" {
            continue;
        }
        let block_type = index_of_code3(&rec.res_name);
        if atom_slot(block_type, &rec.name).is_none() {
            continue;
        }
        if !chains.contains_key(&rec.chain) {
            chain_order.push(rec.chain.clone());
        }
        let chain = chains.entry(rec.chain.clone()).or_default();
        let (_, atoms) = chain
            .residues
            .entry((rec.res_seq, rec.icode.clone()))
            .or_insert_with(|| (rec.res_name.clone(), HashMap::new()));
        let atom = Atom {
            element: rec.element,
            name: rec.name.clone(),
            coord: rec.coord,
        };
        match atoms.get(&rec.name) {
            Some((occ, _)) if *occ >= rec.occupancy => {}
            _ => {
                atoms.insert(rec.name, (rec.occupancy, atom));
            }
        }
    }
    if n_atoms == 0 {
        return Err(Error::NoAtoms);
    }
    for c in binder_chains.iter().chain(target_chains) {
        if !chains.contains_key(c) {
            return Err(Error::MissingChain(c.clone()));
        }
    }
    let build = |wanted: &[String], role: Role| -> MolecularGraph {
        let mut blocks = Vec::new();
        for chain_id in chain_order.iter().filter(|c| wanted.contains(c)) {
            for ((res_seq, icode), (res_name, atoms)) in &chains[chain_id].residues {
                let block_type = index_of_code3(res_name);
                let mut ordered: Vec<_> = atoms.values().map(|(_, a)| a.clone()).collect();
                ordered.sort_by_key(|a| atom_slot(block_type, &a.name));
                let mut block = Block {
                    block_type,
                    atoms: ordered,
                    chain_id: chain_id.clone(),
                    residue_index: *res_seq,
                    insertion_code: icode.clone(),
                    intra_bonds: Vec::new(),
                };
                block.assign_intra_bonds();
                blocks.push(block);
            }
        }
        MolecularGraph::new(blocks, role)
    };
    let binder = build(binder_chains, Role::Binder);
    let site = build(target_chains, Role::BindingSite);
    if binder.is_empty() || site.is_empty() {
        return Err(Error::NoAtoms);
    }
    let stem = Path::new(source)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(source);
    Ok(ComplexRecord {
        id: format!("{stem}_{}_{}", binder_chains.join(""), target_chains.join("")),
        binder,
        site,
        domain_tag: DomainTag::Protfrag,
        source: source.to_string(),
    })
}

/// Read and parse a PDB file.
pub fn parse_pdb(path: &Path, binder_chains: &[String], target_chains: &[String]) -> Result<ComplexRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pdb_str(&text, binder_chains, target_chains, &path.display().to_string())
}

fn format_atom_name(name: &str, element: &str) -> String {
    if name.len() >= 4 || element.len() == 2 {
        format!("{name:<4}")
    } else {
        format!(" {name:<3}")
    }
}

/// Write the given graphs as ATOM records, one TER per chain break.
pub fn write_pdb(graphs: &[&MolecularGraph]) -> String {
    let mut out = String::new();
    let mut serial = 1;
    for g in graphs {
        let mut last_chain: Option<&str> = None;
        for block in &g.blocks {
            if let Some(prev) = last_chain {
                if prev != block.chain_id {
                    let _ = writeln!(out, "TER");
                }
            }
            last_chain = Some(&block.chain_id);
            let res_name = vocab::TEMPLATES[block.block_type].code3;
            for atom in &block.atoms {
                let _ = writeln!(
                    out,
                    "ATOM  {:>5} {} {:>3} {:1}{:>4}{:1}   {:>8.3}{:>8.3}{:>8.3}{:>6.2}{:>6.2}          {:>2}",
                    serial % 100000,
                    format_atom_name(&atom.name, &atom.element),
                    res_name,
                    block.chain_id,
                    block.residue_index,
                    block.insertion_code,
                    atom.coord[0],
                    atom.coord[1],
                    atom.coord[2],
                    1.0,
                    0.0,
                    atom.element,
                );
                serial += 1;
            }
        }
        if last_chain.is_some() {
            let _ = writeln!(out, "TER");
        }
    }
    let _ = writeln!(out, "END");
    out
}
