//! Exact rank and inverse of small integer matrices.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

fn to_rational(m: &[Vec<u32>]) -> Vec<Vec<BigRational>> {
    m.iter()
        .map(|row| {
            row.iter()
                .map(|&x| BigRational::from_integer(BigInt::from(x)))
                .collect()
        })
        .collect()
}

/// Row-reduces `a` in place; returns the pivot columns.
fn reduce(a: &mut [Vec<BigRational>], cols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        if row == a.len() {
            break;
        }
        let Some(p) = (row..a.len()).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(row, p);
        let inv = a[row][col].recip();
        for x in a[row].iter_mut() {
            *x = &*x * &inv;
        }
        for r in 0..a.len() {
            if r != row && !a[r][col].is_zero() {
                let factor = a[r][col].clone();
                let pivot_row = a[row].clone();
                for (x, p) in a[r].iter_mut().zip(pivot_row.iter()) {
                    *x = &*x - &factor * p;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    pivots
}

/// Rank over the rationals.
pub fn rank(m: &[Vec<u32>]) -> usize {
    let Some(cols) = m.first().map(Vec::len) else {
        return 0;
    };
    let mut a = to_rational(m);
    reduce(&mut a, cols).len()
}

/// Exact inverse of a square matrix, or `None` when singular or non-square.
pub fn inverse(m: &[Vec<u32>]) -> Option<Vec<Vec<BigRational>>> {
    let n = m.len();
    if n == 0 || m.iter().any(|r| r.len() != n) {
        return None;
    }
    let mut a: Vec<Vec<BigRational>> = to_rational(m)
        .into_iter()
        .enumerate()
        .map(|(i, mut row)| {
            row.extend((0..n).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }));
            row
        })
        .collect();
    if reduce(&mut a, n).len() < n {
        return None;
    }
    Some(a.into_iter().map(|row| row[n..].to_vec()).collect())
}
