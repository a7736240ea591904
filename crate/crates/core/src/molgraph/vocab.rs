//! Block vocabulary: the 20 standard amino acids plus `UNK`.
//!
//! Each entry carries its heavy-atom template. The `(depth, branch)` pairs
//! place side-chain atoms when synthesizing toy structures: depth counts bonds
//! from Cα, branch picks a side of the side-chain axis.

pub const VOCAB_SIZE: usize = 21;
pub const UNK: usize = 20;
pub const GLY: usize = 7;
/// Largest template (Trp).
pub const MAX_ATOMS: usize = 14;

pub struct ResidueTemplate {
    pub code3: &'static str,
    pub code1: char,
    pub atoms: &'static [&'static str],
    pub side_chain: &'static [(i8, i8)],
}

const BB: [&str; 4] = ["N", "CA", "C", "O"];

macro_rules! template {
    ($c3:literal, $c1:literal, [$($a:literal),*], [$($d:expr),*]) => {
        ResidueTemplate {
            code3: $c3,
            code1: $c1,
            atoms: &[BB[0], BB[1], BB[2], BB[3] $(, $a)*],
            side_chain: &[$($d),*],
        }
    };
}

pub static TEMPLATES: [ResidueTemplate; VOCAB_SIZE] = [
    template!("ALA", 'A', ["CB"], [(1, 0)]),
    template!("ARG", 'R', ["CB", "CG", "CD", "NE", "CZ", "NH1", "NH2"], [(1, 0), (2, 0), (3, 0), (4, 0), (5, 0), (6, -1), (6, 1)]),
    template!("ASN", 'N', ["CB", "CG", "OD1", "ND2"], [(1, 0), (2, 0), (3, -1), (3, 1)]),
    template!("ASP", 'D', ["CB", "CG", "OD1", "OD2"], [(1, 0), (2, 0), (3, -1), (3, 1)]),
    template!("CYS", 'C', ["CB", "SG"], [(1, 0), (2, 0)]),
    template!("GLN", 'Q', ["CB", "CG", "CD", "OE1", "NE2"], [(1, 0), (2, 0), (3, 0), (4, -1), (4, 1)]),
    template!("GLU", 'E', ["CB", "CG", "CD", "OE1", "OE2"], [(1, 0), (2, 0), (3, 0), (4, -1), (4, 1)]),
    template!("GLY", 'G', [], []),
    template!("HIS", 'H', ["CB", "CG", "ND1", "CD2", "CE1", "NE2"], [(1, 0), (2, 0), (3, -1), (3, 1), (4, -1), (4, 1)]),
    template!("ILE", 'I', ["CB", "CG1", "CG2", "CD1"], [(1, 0), (2, -1), (2, 1), (3, -1)]),
    template!("LEU", 'L', ["CB", "CG", "CD1", "CD2"], [(1, 0), (2, 0), (3, -1), (3, 1)]),
    template!("LYS", 'K', ["CB", "CG", "CD", "CE", "NZ"], [(1, 0), (2, 0), (3, 0), (4, 0), (5, 0)]),
    template!("MET", 'M', ["CB", "CG", "SD", "CE"], [(1, 0), (2, 0), (3, 0), (4, 0)]),
    template!("PHE", 'F', ["CB", "CG", "CD1", "CD2", "CE1", "CE2", "CZ"], [(1, 0), (2, 0), (3, -1), (3, 1), (4, -1), (4, 1), (5, 0)]),
    template!("PRO", 'P', ["CB", "CG", "CD"], [(1, 0), (2, 0), (3, 0)]),
    template!("SER", 'S', ["CB", "OG"], [(1, 0), (2, 0)]),
    template!("THR", 'T', ["CB", "OG1", "CG2"], [(1, 0), (2, -1), (2, 1)]),
    template!("TRP", 'W', ["CB", "CG", "CD1", "CD2", "NE1", "CE2", "CE3", "CZ2", "CZ3", "CH2"], [(1, 0), (2, 0), (3, -1), (3, 1), (4, -1), (4, 0), (4, 1), (5, -1), (5, 1), (6, 0)]),
    template!("TYR", 'Y', ["CB", "CG", "CD1", "CD2", "CE1", "CE2", "CZ", "OH"], [(1, 0), (2, 0), (3, -1), (3, 1), (4, -1), (4, 1), (5, 0), (6, 0)]),
    template!("VAL", 'V', ["CB", "CG1", "CG2"], [(1, 0), (2, -1), (2, 1)]),
    template!("UNK", 'X', ["CB"], [(1, 0)]),
];

/// Vocabulary index for a three-letter residue name; anything unknown is `UNK`.
pub fn index_of_code3(name: &str) -> usize {
    let name = name.trim();
    TEMPLATES[..UNK]
        .iter()
        .position(|t| t.code3.eq_ignore_ascii_case(name))
        .unwrap_or(UNK)
}

pub fn index_of_code1(c: char) -> Option<usize> {
    let c = c.to_ascii_uppercase();
    TEMPLATES.iter().position(|t| t.code1 == c)
}

pub fn template(block_type: usize) -> &'static ResidueTemplate {
    &TEMPLATES[block_type]
}

/// Slot of `atom_name` in the template of `block_type`.
pub fn atom_slot(block_type: usize, atom_name: &str) -> Option<usize> {
    TEMPLATES[block_type].atoms.iter().position(|a| *a == atom_name)
}

/// Element symbol implied by a PDB atom name (first letter for the standard set).
pub fn element_of(atom_name: &str) -> &'static str {
    match atom_name.chars().next() {
        Some('N') => "N",
        Some('O') => "O",
        Some('S') => "S",
        _ => "C",
    }
}

pub fn sequence_string(types: impl IntoIterator<Item = usize>) -> String {
    types.into_iter().map(|t| TEMPLATES[t].code1).collect()
}

/// Fixed pairing used by the synthetic generator to couple site and binder
/// compositions (charge pairs, aromatic pairs and so on).
pub fn partner(block_type: usize) -> usize {
    const PAIRS: [(&str, &str); 10] = [
        ("ASP", "LYS"),
        ("GLU", "ARG"),
        ("PHE", "TRP"),
        ("LEU", "ILE"),
        ("VAL", "MET"),
        ("SER", "THR"),
        ("ASN", "GLN"),
        ("TYR", "HIS"),
        ("ALA", "PRO"),
        ("CYS", "GLY"),
    ];
    let name = TEMPLATES[block_type].code3;
    for (a, b) in PAIRS {
        if name == a {
            return index_of_code3(b);
        }
        if name == b {
            return index_of_code3(a);
        }
    }
    block_type
}
