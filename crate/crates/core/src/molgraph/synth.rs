//! Toy complexes with protein-like backbone geometry.
//!
//! The binder is a single chain lying roughly along +x. The target is a
//! sheet of straight strands underneath it. Block types are coupled to the
//! site so that learned retrieval has something to find.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::vocab::{self, UNK};
use super::{Atom, Block, ComplexRecord, DomainTag, MolecularGraph, Role};
use crate::geometry::{arr, v3, RigidTransform, Vec3};

const CA_STEP: f64 = 3.8;
const STRAND_GAP: f64 = 4.8;
const SHEET_DEPTH: f64 = -6.5;
/// Site residue types are drawn from a few per-complex motif types.
const MOTIF_TYPES: usize = 4;
const MOTIF_FRACTION: f64 = 0.85;

/// How binder block types relate to the site.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coupling {
    /// Each binder residue is the partner type of the nearest site residue.
    Partner,
    /// Binder sequence is dominated by one type unrelated to the site.
    Independent,
}

/// Deterministic toy complex; the whole target is kept as `site`.
pub fn synth_complex(seed: u64, binder_len: usize, site_len: usize) -> ComplexRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rec = generate(&mut rng, binder_len.max(1), site_len.max(1), Coupling::Partner);
    rec.id = format!("synth_{seed}");
    rec.source = format!("synth:seed={seed}");
    rec
}

fn random_type<R: Rng>(rng: &mut R) -> usize {
    rng.random_range(0..UNK)
}

fn generate<R: Rng>(rng: &mut R, binder_len: usize, site_len: usize, coupling: Coupling) -> ComplexRecord {
    let wobble = Normal::new(0.0, 0.1).unwrap();
    let mut binder_ca = vec![Vec3::zeros()];
    for _ in 1..binder_len {
        let dir = Vec3::new(1.0, wobble.sample(rng), wobble.sample(rng)).normalize();
        let step = CA_STEP * (1.0 + rng.random_range(-0.03..0.03));
        let last = *binder_ca.last().unwrap();
        binder_ca.push(last + dir * step);
    }

    let strand_len = (binder_len + 2).max(4);
    let n_strands = site_len.div_ceil(strand_len);
    let x0 = -((strand_len as f64 - binder_len as f64) / 2.0) * CA_STEP;
    let mut strands = Vec::new();
    for s in 0..n_strands {
        let lo = s * strand_len;
        let hi = (lo + strand_len).min(site_len);
        let y = (s as f64 - (n_strands as f64 - 1.0) / 2.0) * STRAND_GAP;
        let ca: Vec<Vec3> = (lo..hi)
            .map(|i| Vec3::new(x0 + (i - lo) as f64 * CA_STEP, y, SHEET_DEPTH))
            .collect();
        strands.push((lo..hi, ca));
    }
    let site_ca: Vec<Vec3> = strands.iter().flat_map(|(_, ca)| ca.iter().copied()).collect();

    let motifs: Vec<usize> = rand::seq::index::sample(rng, UNK, MOTIF_TYPES.min(UNK)).into_vec();
    let site_types: Vec<usize> = (0..site_len)
        .map(|_| {
            if rng.random::<f64>() < MOTIF_FRACTION {
                motifs[rng.random_range(0..motifs.len())]
            } else {
                random_type(rng)
            }
        })
        .collect();
    let binder_types: Vec<usize> = match coupling {
        Coupling::Partner => binder_ca
            .iter()
            .map(|p| {
                let below = (0..site_len)
                    .min_by(|&a, &b| (site_ca[a] - p).norm().total_cmp(&(site_ca[b] - p).norm()))
                    .unwrap();
                vocab::partner(site_types[below])
            })
            .collect(),
        Coupling::Independent => {
            let dominant = random_type(rng);
            (0..binder_len)
                .map(|_| if rng.random::<f64>() < 0.75 { dominant } else { random_type(rng) })
                .collect()
        }
    };

    let binder_blocks = chain_blocks("A", &binder_types, &binder_ca, Vec3::new(0.0, 0.0, -1.0));
    let mut site_blocks = Vec::new();
    for (s, (range, ca)) in strands.into_iter().enumerate() {
        let chain = ((b'B' + (s % 25) as u8) as char).to_string();
        site_blocks.extend(chain_blocks(&chain, &site_types[range], &ca, Vec3::new(0.0, 0.0, 1.0)));
    }

    ComplexRecord {
        id: String::new(),
        binder: MolecularGraph::new(binder_blocks, Role::Binder),
        site: MolecularGraph::new(site_blocks, Role::BindingSite),
        domain_tag: DomainTag::Synthetic,
        source: String::new(),
    }
}

/// Full heavy-atom residues along a Cα trace. Side chains alternate between
/// `toward` and its opposite.
fn chain_blocks(chain: &str, types: &[usize], ca: &[Vec3], toward: Vec3) -> Vec<Block> {
    let n = ca.len();
    (0..n)
        .map(|i| {
            let t = if n == 1 {
                Vec3::x()
            } else {
                let (a, b) = (ca[i.saturating_sub(1)], ca[(i + 1).min(n - 1)]);
                (b - a).normalize()
            };
            let up = (toward - t * toward.dot(&t)).normalize();
            let side = if i % 2 == 0 { up } else { -up };
            let w = t.cross(&up).normalize();
            let (c35, s35) = (35f64.to_radians().cos(), 35f64.to_radians().sin());
            let c = ca[i] + (t * c35 + w * s35) * 1.52;
            let nn = ca[i] + (-t * c35 + w * s35) * 1.46;
            let o = c + (w * 0.8 - t * 0.2).normalize() * 1.23;
            let s = (w * 0.5 + side * 0.85).normalize();
            let b2 = s.cross(&t).normalize();
            let tpl = vocab::template(types[i]);
            let mut atoms = vec![atom("N", nn), atom("CA", ca[i]), atom("C", c), atom("O", o)];
            for (name, &(depth, branch)) in tpl.atoms[4..].iter().zip(tpl.side_chain) {
                let zig = if depth % 2 == 0 { 0.35 } else { -0.35 };
                let p = ca[i] + s * (1.53 + 1.25 * (depth as f64 - 1.0)) + b2 * (1.1 * branch as f64) + t * zig;
                atoms.push(atom(name, p));
            }
            let mut block = Block {
                block_type: types[i],
                atoms,
                chain_id: chain.to_string(),
                residue_index: i as i32 + 1,
                insertion_code: String::new(),
                intra_bonds: vec![],
            };
            block.assign_intra_bonds();
            block
        })
        .collect()
}

fn atom(name: &str, p: Vec3) -> Atom {
    Atom {
        element: vocab::element_of(name).to_string(),
        name: name.to_string(),
        coord: arr(&p),
    }
}

/// A family of near-duplicate interfaces sharing one template complex.
#[derive(Clone, Debug)]
pub struct SyntheticFamily {
    pub seed: u64,
    pub template: ComplexRecord,
}

impl SyntheticFamily {
    pub fn new(seed: u64, binder_len: usize, site_len: usize, coupling: Coupling) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_fa11);
        let mut template = generate(&mut rng, binder_len.max(1), site_len.max(1), coupling);
        template.id = format!("family_{seed}");
        template.source = format!("synth:family={seed}");
        Self { seed, template }
    }

    /// Member `index`: ~5% of block types mutated, coordinates jittered by
    /// `jitter` Å (Gaussian), then a random rigid motion.
    pub fn member(&self, index: u64, jitter: f64) -> ComplexRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(1_000_003).wrapping_add(index));
        let noise = Normal::new(0.0, jitter.max(0.0)).unwrap();
        let mut rec = self.template.clone();
        for graph in [&mut rec.binder, &mut rec.site] {
            for block in &mut graph.blocks {
                if rng.random::<f64>() < 0.05 {
                    let new_type = random_type(&mut rng);
                    let ca = v3(block.ca_or_center());
                    *block = mutate(block, new_type, ca);
                }
                for a in &mut block.atoms {
                    for c in &mut a.coord {
                        *c += noise.sample(&mut rng);
                    }
                }
            }
        }
        let motion = RigidTransform::random(&mut rng, 10.0);
        rec.binder = rec.binder.transformed(&motion);
        rec.site = rec.site.transformed(&motion);
        rec.id = format!("family_{}_{index}", self.seed);
        rec.source = format!("synth:family={},member={index}", self.seed);
        rec
    }
}

/// Swap the side chain of `block` for the one of `new_type`, keeping the backbone.
fn mutate(block: &Block, new_type: usize, ca: Vec3) -> Block {
    let get = |name: &str| block.atom(name).map(|a| v3(a.coord));
    let (Some(n), Some(c)) = (get("N"), get("C")) else {
        return block.clone();
    };
    let t = (c - n).normalize();
    let w = ((c - ca) + (n - ca)).normalize();
    let up = t.cross(&w).normalize();
    let side = match get("CB") {
        Some(cb) if (cb - ca).dot(&up) < 0.0 => -up,
        _ => up,
    };
    let trace = [ca - t * CA_STEP, ca, ca + t * CA_STEP];
    let mut blocks = chain_blocks(&block.chain_id, &[block.block_type, new_type, new_type], &trace, side);
    let mut out = blocks.swap_remove(1);
    out.residue_index = block.residue_index;
    out.insertion_code = block.insertion_code.clone();
    for a in &mut out.atoms {
        if let Some(orig) = block.atom(&a.name).filter(|_| matches!(a.name.as_str(), "N" | "CA" | "C" | "O")) {
            a.coord = orig.coord;
        }
    }
    out
}
