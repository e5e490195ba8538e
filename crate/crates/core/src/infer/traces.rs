//! Trace estimates of the family-count covariance and of its square.

use std::collections::HashMap;

use serde::Serialize;

use super::InferError;
use crate::estimate::{EmpiricalPmf, SparseCounts};
use crate::model::State;
use crate::optimize::kahan_sum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEstimates {
    pub n: u64,
    pub m: u32,
    pub tr_sigma: f64,
    pub tr_sigma_sq: f64,
}

fn check(counts: &[SparseCounts]) -> Result<u32, InferError> {
    if counts.len() < 2 {
        return Err(InferError::TooFewFamilies(counts.len()));
    }
    let m = counts[0].m();
    if counts.iter().any(|c| c.m() != m) {
        return Err(InferError::BadArgument("families have different branch counts".into()));
    }
    Ok(m)
}

/// Families re-keyed by dense state ids, plus the inverted index.
struct Interned {
    families: Vec<Vec<(u32, u64)>>,
    members: Vec<Vec<(u32, u64)>>,
    pooled: Vec<u64>,
}

fn intern(counts: &[SparseCounts]) -> Interned {
    let mut ids: HashMap<&State, u32> = HashMap::new();
    let mut next = 0u32;
    let mut families = Vec::with_capacity(counts.len());
    for c in counts {
        let fam: Vec<(u32, u64)> = c
            .entries()
            .iter()
            .map(|(x, k)| {
                let id = *ids.entry(x).or_insert_with(|| {
                    next += 1;
                    next - 1
                });
                (id, u64::from(*k))
            })
            .collect();
        families.push(fam);
    }
    let mut members = vec![Vec::new(); next as usize];
    let mut pooled = vec![0u64; next as usize];
    for (i, fam) in families.iter().enumerate() {
        for &(id, k) in fam {
            members[id as usize].push((i as u32, k));
            pooled[id as usize] += k;
        }
    }
    Interned {
        families,
        members,
        pooled,
    }
}

fn overflow() -> InferError {
    InferError::Overflow
}

/// `tr Sigma_hat = 1/(n-1) sum_i M_i^T M_i - n m^2/(n-1) p_hat^T p_hat`.
pub fn trace_sigma(counts: &[SparseCounts]) -> Result<f64, InferError> {
    Ok(traces(counts)?.tr_sigma)
}

/// `tr Sigma_hat` from running moments: `n` families, `sum_i M_i^T M_i` and
/// the pooled pmf (whose counts are `N = sum_i M_i`).
pub fn trace_sigma_from_moments(n: u64, family_sq_sum: u128, pooled: &EmpiricalPmf) -> Result<f64, InferError> {
    if n < 2 {
        return Err(InferError::TooFewFamilies(n as usize));
    }
    let pooled_sq: u128 = pooled.counts().map(|(_, c)| u128::from(c) * u128::from(c)).sum();
    let num = u128::from(n)
        .checked_mul(family_sq_sum)
        .and_then(|v| v.checked_sub(pooled_sq))
        .ok_or_else(overflow)?;
    Ok(num as f64 / (n as f64 * (n as f64 - 1.0)))
}

/// `tr Sigma_hat^2`, the squared Frobenius norm of the sample covariance.
pub fn trace_sigma_sq(counts: &[SparseCounts]) -> Result<f64, InferError> {
    Ok(traces(counts)?.tr_sigma_sq)
}

/// Both traces in exact integer arithmetic.
///
/// With `N = sum_i M_i` and `G = sum_i M_i M_i^T`,
/// `n(n-1) tr Sigma_hat = n sum_i |M_i|^2 - |N|^2` and
/// `n^2 (n-1)^2 tr Sigma_hat^2 = n^2 |G|_F^2 - 2n sum_i (N.M_i)^2 + |N|^4`.
/// `|G|_F^2` is accumulated one row of `G` at a time through the inverted
/// index, so the cost is `sum_i |supp M_i|^2`.
pub fn traces(counts: &[SparseCounts]) -> Result<TraceEstimates, InferError> {
    let m = check(counts)?;
    let n = counts.len() as u128;
    let data = intern(counts);

    let mut s1: u128 = 0;
    let mut cross: u128 = 0;
    for fam in &data.families {
        for &(_, k) in fam {
            s1 += u128::from(k) * u128::from(k);
        }
        let dot: u128 = fam.iter().map(|&(id, k)| u128::from(k) * u128::from(data.pooled[id as usize])).sum();
        cross = dot.checked_mul(dot).and_then(|d| cross.checked_add(d)).ok_or_else(overflow)?;
    }
    let pooled_sq: u128 = data.pooled.iter().map(|&v| u128::from(v) * u128::from(v)).sum();

    let mut gram_sq: u128 = 0;
    let mut row = vec![0u64; data.pooled.len()];
    let mut touched: Vec<u32> = Vec::new();
    for list in &data.members {
        for &(fam, kx) in list {
            for &(y, ky) in &data.families[fam as usize] {
                if row[y as usize] == 0 {
                    touched.push(y);
                }
                row[y as usize] += kx * ky;
            }
        }
        for &y in &touched {
            let g = u128::from(row[y as usize]);
            gram_sq = g.checked_mul(g).and_then(|v| gram_sq.checked_add(v)).ok_or_else(overflow)?;
            row[y as usize] = 0;
        }
        touched.clear();
    }

    let num1 = (n * s1).checked_sub(pooled_sq).ok_or_else(overflow)?;
    let a = n.checked_mul(n).and_then(|nn| nn.checked_mul(gram_sq)).ok_or_else(overflow)?;
    let b = (2 * n).checked_mul(cross).ok_or_else(overflow)?;
    let c = pooled_sq.checked_mul(pooled_sq).ok_or_else(overflow)?;
    let num2 = a.checked_add(c).and_then(|v| v.checked_sub(b)).ok_or_else(overflow)?;
    let (nf, n1) = (n as f64, n as f64 - 1.0);
    Ok(TraceEstimates {
        n: n as u64,
        m,
        tr_sigma: num1 as f64 / (nf * n1),
        tr_sigma_sq: num2 as f64 / (nf * nf * n1 * n1),
    })
}

/// `tr Sigma_hat^2` by the direct pairwise sum over families, in floating
/// point: `(n-1)^{-2} [sum_i O_ii^2 + 2 sum_{i<j} O_ij^2]` with
/// `O_ij = M_i^T M_j - M_bar^T M_i - M_bar^T M_j + m^2 p_hat^T p_hat`.
/// Quadratic in `n`; used to cross-check [`traces`].
pub fn trace_sigma_sq_pairwise(counts: &[SparseCounts]) -> Result<f64, InferError> {
    check(counts)?;
    let n = counts.len();
    let data = intern(counts);
    let nf = n as f64;
    let mbar: Vec<f64> = data.pooled.iter().map(|&v| v as f64 / nf).collect();
    let mbar_sq = kahan_sum(mbar.iter().map(|v| v * v));
    let proj: Vec<f64> = data
        .families
        .iter()
        .map(|fam| kahan_sum(fam.iter().map(|&(id, k)| k as f64 * mbar[id as usize])))
        .collect();
    let mut dense = vec![0u64; data.pooled.len()];
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        for &(id, k) in &data.families[i] {
            dense[id as usize] = k;
        }
        let diag = {
            let s: u64 = data.families[i].iter().map(|&(_, k)| k * k).sum();
            let o = s as f64 - 2.0 * proj[i] + mbar_sq;
            o * o
        };
        let off = kahan_sum((i + 1..n).map(|j| {
            let dot: u64 = data.families[j].iter().map(|&(id, k)| k * dense[id as usize]).sum();
            let o = dot as f64 - proj[i] - proj[j] + mbar_sq;
            o * o
        }));
        terms.push(diag + 2.0 * off);
        for &(id, _) in &data.families[i] {
            dense[id as usize] = 0;
        }
    }
    Ok(kahan_sum(terms) / ((nf - 1.0) * (nf - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam(states: &[i64]) -> SparseCounts {
        SparseCounts::from_states(states.iter().map(|&x| vec![x]))
    }

    #[test]
    fn identical_families_have_zero_traces() {
        let c = vec![fam(&[1, 2, 2]); 6];
        let t = traces(&c).unwrap();
        assert_eq!(t.tr_sigma, 0.0);
        assert_eq!(t.tr_sigma_sq, 0.0);
        assert_eq!(trace_sigma_sq_pairwise(&c).unwrap(), 0.0);
    }

    #[test]
    fn two_point_instance() {
        let c = vec![fam(&[0]), fam(&[1])];
        let t = traces(&c).unwrap();
        assert_eq!(t.tr_sigma, 1.0);
        assert_eq!(t.tr_sigma_sq, 1.0);
        assert_eq!(trace_sigma_sq_pairwise(&c).unwrap(), 1.0);
    }

    #[test]
    fn moments_route_matches() {
        let c = vec![fam(&[0, 1, 1]), fam(&[2, 2, 2]), fam(&[1, 3, 0])];
        let pmf = EmpiricalPmf::from_counts(&c, 3, 0.1);
        let sq: u128 = c.iter().map(|f| u128::from(f.norm_sq())).sum();
        let a = trace_sigma_from_moments(3, sq, &pmf).unwrap();
        assert!((a - trace_sigma(&c).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn needs_two_families_of_equal_size() {
        assert!(matches!(traces(&[fam(&[1])]), Err(InferError::TooFewFamilies(1))));
        assert!(traces(&[fam(&[1]), fam(&[1, 2])]).is_err());
    }
}
