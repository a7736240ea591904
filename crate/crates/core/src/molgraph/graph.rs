use std::collections::BTreeSet;

use super::{BondKind, Edge, MolecularGraph};
use crate::geometry::dist;

/// Peptide C–N bond length threshold (Å).
const PEPTIDE_BOND_MAX: f64 = 1.8;

/// Indices of the `k` nearest points to `points[i]` (excluding `i`), ties by index.
pub(crate) fn knn(points: &[[f64; 3]], i: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(j, p)| (dist(points[i], *p), j))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    others.truncate(k);
    others.into_iter().map(|(_, j)| j).collect()
}

/// Symmetrized kNN edge set over `points`, as sorted `(src, dst)` pairs
/// containing both directions.
pub(crate) fn knn_edges(points: &[[f64; 3]], k: usize) -> Vec<(usize, usize)> {
    let mut set = BTreeSet::new();
    for i in 0..points.len() {
        for j in knn(points, i, k) {
            set.insert((i, j));
            set.insert((j, i));
        }
    }
    set.into_iter().collect()
}

/// Replace the edges of `graph` with the symmetrized kNN graph over block
/// centers, labelling peptide bonds between consecutive residues.
pub fn build_block_graph(graph: &MolecularGraph, k_neighbors: usize) -> MolecularGraph {
    let centers = graph.centers();
    let peptide = |i: usize, j: usize| {
        let (a, b) = (&graph.blocks[i], &graph.blocks[j]);
        match (a.atom("C"), b.atom("N")) {
            (Some(c), Some(n)) => dist(c.coord, n.coord) <= PEPTIDE_BOND_MAX,
            _ => false,
        }
    };
    let edges = knn_edges(&centers, k_neighbors)
        .into_iter()
        .map(|(src, dst)| Edge {
            src,
            dst,
            bond: (peptide(src, dst) || peptide(dst, src)).then_some(BondKind::Peptide),
        })
        .collect();
    MolecularGraph {
        blocks: graph.blocks.clone(),
        edges,
        role: graph.role,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::{synth_complex, Atom, Block, Role};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn points_graph(points: &[[f64; 3]]) -> MolecularGraph {
        let blocks = points
            .iter()
            .enumerate()
            .map(|(i, p)| Block {
                block_type: 0,
                atoms: vec![Atom {
                    element: "C".into(),
                    name: "CA".into(),
                    coord: *p,
                }],
                chain_id: "A".into(),
                residue_index: i as i32,
                insertion_code: String::new(),
                intra_bonds: vec![],
            })
            .collect();
        MolecularGraph::new(blocks, Role::Binder)
    }

    fn pairs(g: &MolecularGraph) -> HashSet<(usize, usize)> {
        g.edges.iter().map(|e| (e.src, e.dst)).collect()
    }

    #[test]
    fn small_graphs_are_complete() {
        let g = build_block_graph(&points_graph(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]), 9);
        assert_eq!(g.edges.len(), 6);
    }

    #[test]
    fn single_block_has_no_edges() {
        assert!(build_block_graph(&points_graph(&[[0.0; 3]]), 9).edges.is_empty());
    }

    #[test]
    fn collinear_chain_matches_brute_force_knn() {
        let pts: Vec<[f64; 3]> = (0..5).map(|i| [i as f64 * 3.8, 0.0, 0.0]).collect();
        let g = build_block_graph(&points_graph(&pts), 2);
        // Oracle: for each node, sort every other node by distance then index.
        let mut expected = HashSet::new();
        for i in 0..5usize {
            let mut d: Vec<(usize, usize)> = (0..5).filter(|&j| j != i).map(|j| (i.abs_diff(j), j)).collect();
            d.sort();
            for &(_, j) in d.iter().take(2) {
                expected.insert((i, j));
                expected.insert((j, i));
            }
        }
        assert_eq!(pairs(&g), expected);
        // interior nodes see both chain neighbours
        for i in 1..4 {
            assert!(expected.contains(&(i, i - 1)) && expected.contains(&(i, i + 1)));
        }
    }

    #[test]
    fn synthetic_backbones_get_peptide_labels() {
        let rec = synth_complex(3, 8, 16);
        let g = build_block_graph(&rec.binder, 9);
        for e in &g.edges {
            let labelled = e.bond == Some(BondKind::Peptide);
            assert_eq!(labelled, e.src.abs_diff(e.dst) == 1, "edge {e:?}");
        }
    }

    proptest! {
        #[test]
        fn edges_are_symmetric_without_self_loops(
            pts in proptest::collection::vec(proptest::array::uniform3(-20.0f64..20.0), 1..30),
            k in 1usize..12,
        ) {
            let g = build_block_graph(&points_graph(&pts), k);
            let set = pairs(&g);
            for &(a, b) in &set {
                prop_assert!(a != b);
                prop_assert!(set.contains(&(b, a)));
                prop_assert!(a < pts.len() && b < pts.len());
            }
            for i in 0..pts.len() {
                let deg = set.iter().filter(|(a, _)| *a == i).count();
                prop_assert!(deg >= k.min(pts.len() - 1));
            }
        }
    }
}
