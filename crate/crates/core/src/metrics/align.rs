//! Global alignment with affine gaps (Gotoh) under BLOSUM62.

use crate::{Error, Result};

const ORDER: &[u8; 20] = b"ARNDCQEGHILKMFPSTWYV";

#[rustfmt::skip]
const BLOSUM62: [[i8; 20]; 20] = [
    [ 4, -1, -2, -2,  0, -1, -1,  0, -2, -1, -1, -1, -1, -2, -1,  1,  0, -3, -2,  0],
    [-1,  5,  0, -2, -3,  1,  0, -2,  0, -3, -2,  2, -1, -3, -2, -1, -1, -3, -2, -3],
    [-2,  0,  6,  1, -3,  0,  0,  0,  1, -3, -3,  0, -2, -3, -2,  1,  0, -4, -2, -3],
    [-2, -2,  1,  6, -3,  0,  2, -1, -1, -3, -4, -1, -3, -3, -1,  0, -1, -4, -3, -3],
    [ 0, -3, -3, -3,  9, -3, -4, -3, -3, -1, -1, -3, -1, -2, -3, -1, -1, -2, -2, -1],
    [-1,  1,  0,  0, -3,  5,  2, -2,  0, -3, -2,  1,  0, -3, -1,  0, -1, -2, -1, -2],
    [-1,  0,  0,  2, -4,  2,  5, -2,  0, -3, -3,  1, -2, -3, -1,  0, -1, -3, -2, -2],
    [ 0, -2,  0, -1, -3, -2, -2,  6, -2, -4, -4, -2, -3, -3, -2,  0, -2, -2, -3, -3],
    [-2,  0,  1, -1, -3,  0,  0, -2,  8, -3, -3, -1, -2, -1, -2, -1, -2, -2,  2, -3],
    [-1, -3, -3, -3, -1, -3, -3, -4, -3,  4,  2, -3,  1,  0, -3, -2, -1, -3, -1,  3],
    [-1, -2, -3, -4, -1, -2, -3, -4, -3,  2,  4, -2,  2,  0, -3, -2, -1, -2, -1,  1],
    [-1,  2,  0, -1, -3,  1,  1, -2, -1, -3, -2,  5, -1, -3, -1,  0, -1, -3, -2, -2],
    [-1, -1, -2, -3, -1,  0, -2, -3, -2,  1,  2, -1,  5,  0, -2, -1, -1, -1, -1,  1],
    [-2, -3, -3, -3, -2, -3, -3, -3, -1,  0,  0, -3,  0,  6, -4, -2, -2,  1,  3, -1],
    [-1, -2, -2, -1, -3, -1, -1, -2, -2, -3, -3, -1, -2, -4,  7, -1, -1, -4, -3, -2],
    [ 1, -1,  1,  0, -1,  0,  0,  0, -1, -2, -2,  0, -1, -2, -1,  4,  1, -3, -2, -2],
    [ 0, -1,  0, -1, -1, -1, -1, -2, -2, -1, -1, -1, -1, -2, -1,  1,  5, -2, -2,  0],
    [-3, -3, -4, -4, -2, -2, -3, -2, -2, -3, -2, -3, -1,  1, -4, -3, -2, 11,  2, -3],
    [-2, -2, -2, -3, -2, -1, -2, -3,  2, -1, -1, -2, -1,  3, -3, -2, -2,  2,  7, -1],
    [ 0, -3, -3, -3, -1, -2, -2, -3, -3,  3,  1, -2,  1, -1, -2, -2,  0, -3, -1,  4],
];

/// Cost of opening a gap (its first position).
pub const GAP_OPEN: i64 = -10;
/// Cost of each further gap position.
pub const GAP_EXTEND: i64 = -1;

/// Residue code to matrix index; `X` (unknown) maps to 20.
fn code(c: char) -> Result<usize> {
    let u = c.to_ascii_uppercase();
    if u == 'X' {
        return Ok(20);
    }
    ORDER.iter().position(|&o| o as char == u).ok_or(Error::InvalidSymbol(c))
}

pub(crate) fn encode(seq: &str) -> Result<Vec<usize>> {
    seq.chars().map(code).collect()
}

/// BLOSUM62 score; `X` scores -1 against everything.
pub fn blosum62(a: char, b: char) -> Result<i64> {
    Ok(pair_score(code(a)?, code(b)?))
}

pub(crate) fn pair_score(a: usize, b: usize) -> i64 {
    if a == 20 || b == 20 {
        -1
    } else {
        BLOSUM62[a][b] as i64
    }
}

/// Score and number of identical aligned pairs, compared lexicographically.
type Cell = (i64, usize);

const NEG: Cell = (i64::MIN / 4, 0);

fn plus(c: Cell, s: i64, m: usize) -> Cell {
    if c.0 <= NEG.0 {
        NEG
    } else {
        (c.0 + s, c.1 + m)
    }
}

/// Optimal global alignment score and, among optimal alignments, the largest
/// count of identical aligned pairs.
pub(crate) fn align_codes(a: &[usize], b: &[usize]) -> Cell {
    let (n, m) = (a.len(), b.len());
    // mat: ends with a[i-1]~b[j-1]; gap_a: ends with b[j-1] against a gap;
    // gap_b: ends with a[i-1] against a gap.
    let mut mat = vec![vec![NEG; m + 1]; n + 1];
    let mut gap_a = vec![vec![NEG; m + 1]; n + 1];
    let mut gap_b = vec![vec![NEG; m + 1]; n + 1];
    mat[0][0] = (0, 0);
    for i in 0..=n {
        for j in 0..=m {
            if i > 0 && j > 0 {
                let best = mat[i - 1][j - 1].max(gap_a[i - 1][j - 1]).max(gap_b[i - 1][j - 1]);
                mat[i][j] = plus(best, pair_score(a[i - 1], b[j - 1]), usize::from(a[i - 1] == b[j - 1]));
            }
            if j > 0 {
                let open = mat[i][j - 1].max(gap_b[i][j - 1]);
                gap_a[i][j] = plus(open, GAP_OPEN, 0).max(plus(gap_a[i][j - 1], GAP_EXTEND, 0));
            }
            if i > 0 {
                let open = mat[i - 1][j].max(gap_a[i - 1][j]);
                gap_b[i][j] = plus(open, GAP_OPEN, 0).max(plus(gap_b[i - 1][j], GAP_EXTEND, 0));
            }
        }
    }
    mat[n][m].max(gap_a[n][m]).max(gap_b[n][m])
}

/// Global alignment of two residue strings: `(score, identical pairs)`.
pub fn align(a: &str, b: &str) -> Result<(i64, usize)> {
    Ok(align_codes(&encode(a)?, &encode(b)?))
}
