//! Integer right nullspace of the stoichiometry matrix and the finite
//! lattice of small combinations used by the joint-probability estimate.

use std::collections::HashSet;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use super::StoichiometryMatrix;

type Q = Ratio<i128>;

/// Default cap on the number of lattice points.
pub const DEFAULT_LATTICE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("lattice would contain {size} points, above the cap of {cap}")]
    TooLarge { size: u128, cap: usize },
}

/// Basis of `{k in Z^R : S' k = 0}` where `S'` keeps only `marginal_rows`
/// (all rows when `None`). Each vector is primitive (entry gcd 1) with a
/// positive leading entry.
pub fn integer_nullspace_basis(
    s: &StoichiometryMatrix,
    marginal_rows: Option<&[usize]>,
) -> Vec<Vec<i64>> {
    let rows: Vec<usize> = match marginal_rows {
        Some(r) => r.to_vec(),
        None => (0..s.rows).collect(),
    };
    let ncols = s.cols;
    let mut a: Vec<Vec<Q>> = rows
        .iter()
        .map(|&i| (0..ncols).map(|j| Q::from_integer(i128::from(s.get(i, j)))).collect())
        .collect();

    // reduced row echelon form
    let mut pivots: Vec<usize> = Vec::new();
    let mut row = 0;
    for col in 0..ncols {
        if row >= a.len() {
            break;
        }
        let Some(p) = (row..a.len()).find(|&i| !a[i][col].is_zero()) else {
            continue;
        };
        a.swap(row, p);
        let inv = a[row][col].recip();
        for v in a[row].iter_mut() {
            *v *= inv;
        }
        let pivot = a[row].clone();
        for (i, r) in a.iter_mut().enumerate() {
            if i != row && !r[col].is_zero() {
                let f = r[col];
                for (v, p) in r.iter_mut().zip(&pivot) {
                    *v -= f * p;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }

    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![Q::zero(); ncols];
            v[f] = Q::one();
            for (r, &pc) in pivots.iter().enumerate() {
                v[pc] = -a[r][f];
            }
            primitive(&v)
        })
        .collect()
}

fn primitive(v: &[Q]) -> Vec<i64> {
    let lcm = v.iter().fold(1i128, |acc, q| acc.lcm(q.denom()));
    let ints: Vec<i128> = v.iter().map(|q| (q * lcm).to_integer()).collect();
    let g = ints.iter().fold(0i128, |acc, &x| acc.gcd(&x)).max(1);
    let sign = match ints.iter().find(|x| !x.is_zero()) {
        Some(x) if x.is_negative() => -1,
        _ => 1,
    };
    ints.iter()
        .map(|&x| i64::try_from(sign * x / g).expect("nullspace entry exceeds i64"))
        .collect()
}

/// All combinations `sum_j a_j b_j` with `a_j in {-c, ..., c}`, deduplicated,
/// in lexicographic order of the coefficient vectors. Vectors have length
/// `num_reactions`; an empty basis yields just the zero vector.
pub fn nullspace_lattice(
    basis: &[Vec<i64>],
    num_reactions: usize,
    coeff_bound: u32,
    cap: usize,
) -> Result<Vec<Vec<i64>>, LatticeError> {
    let side = 2 * u128::from(coeff_bound) + 1;
    let size = side.checked_pow(basis.len() as u32).unwrap_or(u128::MAX);
    if size > cap as u128 {
        return Err(LatticeError::TooLarge { size, cap });
    }
    let c = i64::from(coeff_bound);
    let mut out = Vec::with_capacity(size as usize);
    let mut seen = HashSet::with_capacity(size as usize);
    let mut coeffs = vec![-c; basis.len()];
    loop {
        let mut k = vec![0i64; num_reactions];
        for (a, b) in coeffs.iter().zip(basis) {
            for (kr, br) in k.iter_mut().zip(b) {
                *kr += a * br;
            }
        }
        if seen.insert(k.clone()) {
            out.push(k);
        }
        // odometer increment
        let mut idx = 0;
        loop {
            if idx == coeffs.len() {
                return Ok(out);
            }
            if coeffs[idx] < c {
                coeffs[idx] += 1;
                break;
            }
            coeffs[idx] = -c;
            idx += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;

    fn basis_of(name: &str) -> Vec<Vec<i64>> {
        let net = builtin(name).unwrap();
        integer_nullspace_basis(&net.stoichiometry(), None)
    }

    #[test]
    fn birth_has_trivial_nullspace() {
        assert!(basis_of("birth").is_empty());
    }

    #[test]
    fn birth_death_basis() {
        assert_eq!(basis_of("birth-death"), vec![vec![1, 1]]);
    }

    #[test]
    fn fast_slow_basis() {
        assert_eq!(basis_of("fast-slow"), vec![vec![1, 1, 0]]);
    }

    #[test]
    fn builtin_bases_are_primitive_and_in_kernel() {
        for name in crate::model::builtin_names() {
            let net = builtin(name).unwrap();
            let s = net.stoichiometry();
            let basis = integer_nullspace_basis(&s, None);
            for b in &basis {
                assert!(s.apply(b, None).iter().all(|&v| v == 0), "{name}");
                let g = b.iter().fold(0i64, |acc, &x| acc.gcd(&x));
                assert_eq!(g, 1, "{name}");
            }
        }
        assert_eq!(basis_of("lotka-volterra"), vec![vec![1, 1, 1]]);
        assert_eq!(basis_of("dimerization").len(), 2);
        assert_eq!(basis_of("toggle").len(), 2);
    }

    #[test]
    fn fractional_pivots_are_cleared() {
        // single row [2, 3]: kernel spanned by (3, -2) -> normalized (-3, 2)*-1
        let s = StoichiometryMatrix {
            rows: 1,
            cols: 2,
            entries: vec![2, 3],
        };
        assert_eq!(integer_nullspace_basis(&s, None), vec![vec![3, -2]]);
    }

    #[test]
    fn marginal_rows_enlarge_the_kernel() {
        let net = builtin("fast-slow").unwrap();
        let s = net.stoichiometry();
        // keep only C: any k with k_3 = 0
        let b = integer_nullspace_basis(&s, Some(&[2]));
        assert_eq!(b.len(), 2);
        for v in &b {
            assert_eq!(s.apply(v, Some(&[2])), vec![0]);
        }
    }

    #[test]
    fn lattice_examples() {
        assert_eq!(nullspace_lattice(&[], 1, 4, DEFAULT_LATTICE_CAP).unwrap(), vec![vec![0]]);
        let l = nullspace_lattice(&[vec![1, 1]], 2, 2, DEFAULT_LATTICE_CAP).unwrap();
        assert_eq!(
            l,
            vec![vec![-2, -2], vec![-1, -1], vec![0, 0], vec![1, 1], vec![2, 2]]
        );
        let l = nullspace_lattice(&[vec![1, 1, 0]], 3, 4, DEFAULT_LATTICE_CAP).unwrap();
        assert_eq!(l.len(), 9);
        assert!(l.iter().all(|k| k[0] == k[1] && k[2] == 0));
    }

    #[test]
    fn lattice_cap() {
        let basis = vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]];
        assert!(matches!(
            nullspace_lattice(&basis, 3, 50, 1000),
            Err(LatticeError::TooLarge { .. })
        ));
    }

    #[test]
    fn lattice_is_symmetric_and_in_kernel() {
        let net = builtin("dimerization").unwrap();
        let s = net.stoichiometry();
        let basis = integer_nullspace_basis(&s, None);
        let l = nullspace_lattice(&basis, net.num_reactions(), 3, DEFAULT_LATTICE_CAP).unwrap();
        assert_eq!(l.len(), 49);
        let set: HashSet<_> = l.iter().cloned().collect();
        for k in &l {
            assert!(s.apply(k, None).iter().all(|&v| v == 0));
            let neg: Vec<i64> = k.iter().map(|v| -v).collect();
            assert!(set.contains(&neg));
        }
        assert!(set.contains(&vec![0; 5]));
    }
}
