use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::model::State;
use crate::simulate::SeedSpec;

/// Projects `x` onto the coordinates `dims` (in the given order).
pub fn project(x: &[i64], dims: &[usize]) -> State {
    dims.iter().map(|&i| x[i]).collect()
}

/// Branch end-state counts `M_i` of one family: state to multiplicity,
/// sorted by state.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparseCounts {
    entries: Vec<(State, u32)>,
}

impl SparseCounts {
    pub fn from_states<I: IntoIterator<Item = State>>(states: I) -> Self {
        let mut all: Vec<State> = states.into_iter().collect();
        all.sort_unstable();
        let mut entries: Vec<(State, u32)> = Vec::new();
        for x in all {
            match entries.last_mut() {
                Some((last, c)) if *last == x => *c += 1,
                _ => entries.push((x, 1)),
            }
        }
        Self { entries }
    }

    /// From `(state, count)` pairs; zero counts are dropped and repeated
    /// states merged.
    pub fn from_pairs<I: IntoIterator<Item = (State, u32)>>(pairs: I) -> Self {
        let mut map: BTreeMap<State, u32> = BTreeMap::new();
        for (x, c) in pairs {
            if c > 0 {
                *map.entry(x).or_default() += c;
            }
        }
        Self {
            entries: map.into_iter().collect(),
        }
    }

    pub fn entries(&self) -> &[(State, u32)] {
        &self.entries
    }

    /// Number of branches, the sum of all counts.
    pub fn m(&self) -> u32 {
        self.entries.iter().map(|(_, c)| c).sum()
    }

    pub fn get(&self, x: &[i64]) -> u32 {
        self.entries
            .binary_search_by(|(s, _)| s.as_slice().cmp(x))
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    /// `M_i^T M_j` by a sorted merge.
    pub fn dot(&self, other: &SparseCounts) -> u64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut sum) = (0, 0, 0u64);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += u64::from(a[i].1) * u64::from(b[j].1);
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }

    pub fn norm_sq(&self) -> u64 {
        self.entries.iter().map(|(_, c)| u64::from(*c).pow(2)).sum()
    }

    pub fn marginalize(&self, dims: &[usize]) -> SparseCounts {
        Self::from_pairs(self.entries.iter().map(|(x, c)| (project(x, dims), *c)))
    }
}

/// Anything that assigns probabilities to states.
pub trait MassFunction {
    fn prob(&self, x: &[i64]) -> f64;
    /// Visits every state with positive probability.
    fn for_each_state(&self, f: &mut dyn FnMut(&[i64], f64));

    fn sum_sq(&self) -> f64 {
        let mut s = 0.0;
        self.for_each_state(&mut |_, p| s += p * p);
        s
    }

    fn total(&self) -> f64 {
        let mut s = 0.0;
        self.for_each_state(&mut |_, p| s += p);
        s
    }

    fn states(&self) -> Vec<State> {
        let mut out = Vec::new();
        self.for_each_state(&mut |x, _| out.push(x.to_vec()));
        out
    }
}

/// A general sparse pmf, e.g. an oracle or a marginal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pmf {
    probs: HashMap<State, f64>,
}

impl Pmf {
    /// Zero probabilities are skipped; repeated states are summed.
    pub fn from_pairs<I: IntoIterator<Item = (State, f64)>>(pairs: I) -> Self {
        let mut probs: HashMap<State, f64> = HashMap::new();
        for (x, p) in pairs {
            if p != 0.0 {
                *probs.entry(x).or_default() += p;
            }
        }
        Self { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Entries sorted lexicographically by state.
    pub fn sorted(&self) -> Vec<(State, f64)> {
        let mut v: Vec<(State, f64)> = self.probs.iter().map(|(x, p)| (x.clone(), *p)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    /// Drops states with probability below `eps`.
    pub fn prune(&self, eps: f64) -> Pmf {
        Pmf {
            probs: self.probs.iter().filter(|(_, &p)| p >= eps).map(|(x, p)| (x.clone(), *p)).collect(),
        }
    }
}

impl MassFunction for Pmf {
    fn prob(&self, x: &[i64]) -> f64 {
        self.probs.get(x).copied().unwrap_or(0.0)
    }

    fn for_each_state(&self, f: &mut dyn FnMut(&[i64], f64)) {
        for (x, p) in &self.probs {
            f(x, *p);
        }
    }
}

/// Sums probabilities over the dropped coordinates.
pub fn marginalize(pmf: &dyn MassFunction, dims: &[usize]) -> Pmf {
    let mut probs: HashMap<State, f64> = HashMap::new();
    pmf.for_each_state(&mut |x, p| *probs.entry(project(x, dims)).or_default() += p);
    Pmf { probs }
}

/// The state set S~ an integrated squared error is summed over.
#[derive(Debug, Clone, Copy)]
pub enum Support<'a> {
    /// Every state where either pmf is positive.
    Union,
    States(&'a [State]),
}

/// Integrated squared error `sum_{x in S~} (p_hat(x) - p(x))^2`.
pub fn ise(p_hat: &dyn MassFunction, p_ref: &dyn MassFunction, support: Support<'_>) -> f64 {
    match support {
        Support::States(states) => states
            .iter()
            .map(|x| (p_hat.prob(x) - p_ref.prob(x)).powi(2))
            .sum(),
        Support::Union => {
            let mut sum = 0.0;
            p_hat.for_each_state(&mut |x, p| sum += (p - p_ref.prob(x)).powi(2));
            p_ref.for_each_state(&mut |x, p| {
                if p_hat.prob(x) == 0.0 {
                    sum += p * p;
                }
            });
            sum
        }
    }
}

/// A fixed reference pmf for repeated ISE evaluations. The sum runs over
/// either the reference support (`restrict`) or the union of supports, and
/// costs one lookup per state of the estimate.
#[derive(Debug, Clone)]
pub struct IseTarget {
    reference: Pmf,
    sum_sq: f64,
    restrict: bool,
}

impl IseTarget {
    pub fn new(reference: Pmf, restrict: bool) -> Self {
        let sum_sq = reference.sum_sq();
        Self {
            reference,
            sum_sq,
            restrict,
        }
    }

    pub fn reference(&self) -> &Pmf {
        &self.reference
    }

    /// Equals `ise(p_hat, reference, S~)` with S~ the reference support when
    /// restricted, the union of supports otherwise.
    pub fn ise(&self, p_hat: &dyn MassFunction) -> f64 {
        let mut sum = self.sum_sq;
        p_hat.for_each_state(&mut |x, p| {
            let q = self.reference.prob(x);
            if q > 0.0 || !self.restrict {
                sum += p * (p - 2.0 * q);
            }
        });
        sum.max(0.0)
    }
}

/// A Monte Carlo pmf estimate: integer counts over `n * m` branch end
/// states, so every probability is a multiple of `1 / (n m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPmf {
    counts: BTreeMap<State, u64>,
    n: u64,
    m: u32,
    h: f64,
    marginal_dims: Option<Vec<usize>>,
    seed: Option<SeedSpec>,
}

/// Metadata sidecar written next to a pmf CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmfMeta {
    pub n: u64,
    pub m: u32,
    pub h: f64,
    pub seed: Option<u64>,
    pub marginal_dims: Option<Vec<usize>>,
    pub model_hash: String,
    pub states: usize,
}

impl EmpiricalPmf {
    /// Pools family counts; every family must have `m` branches.
    pub fn from_counts(counts: &[SparseCounts], m: u32, h: f64) -> Self {
        let mut pooled: BTreeMap<State, u64> = BTreeMap::new();
        for c in counts {
            debug_assert_eq!(c.m(), m);
            for (x, k) in c.entries() {
                *pooled.entry(x.clone()).or_default() += u64::from(*k);
            }
        }
        Self {
            counts: pooled,
            n: counts.len() as u64,
            m,
            h,
            marginal_dims: None,
            seed: None,
        }
    }

    /// From pooled counts over `n` families of `m` branches.
    pub fn from_pooled(counts: BTreeMap<State, u64>, n: u64, m: u32, h: f64) -> Self {
        debug_assert_eq!(counts.values().sum::<u64>(), n * u64::from(m));
        Self {
            counts,
            n,
            m,
            h,
            marginal_dims: None,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: SeedSpec) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_marginal_dims(mut self, dims: Option<Vec<usize>>) -> Self {
        self.marginal_dims = dims;
        self
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn seed(&self) -> Option<SeedSpec> {
        self.seed
    }

    pub fn marginal_dims(&self) -> Option<&[usize]> {
        self.marginal_dims.as_deref()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Total count, `n * m`.
    pub fn total_count(&self) -> u64 {
        self.n * u64::from(self.m)
    }

    pub fn count(&self, x: &[i64]) -> u64 {
        self.counts.get(x).copied().unwrap_or(0)
    }

    /// `(state, count)` in lexicographic state order.
    pub fn counts(&self) -> impl Iterator<Item = (&State, u64)> {
        self.counts.iter().map(|(x, c)| (x, *c))
    }

    /// `(state, probability)` in lexicographic state order.
    pub fn iter(&self) -> impl Iterator<Item = (&State, f64)> {
        let total = self.total_count() as f64;
        self.counts.iter().map(move |(x, c)| (x, *c as f64 / total))
    }

    pub fn to_pmf(&self) -> Pmf {
        Pmf::from_pairs(self.iter().map(|(x, p)| (x.clone(), p)))
    }

    /// Sum of squared probabilities, `p_hat^T p_hat`.
    pub fn sum_sq(&self) -> f64 {
        let total = self.total_count() as f64;
        let s: u128 = self.counts.values().map(|&c| u128::from(c) * u128::from(c)).sum();
        s as f64 / (total * total)
    }

    pub fn meta(&self, model_hash: &str) -> PmfMeta {
        PmfMeta {
            n: self.n,
            m: self.m,
            h: self.h,
            seed: self.seed.map(|s| s.master_seed),
            marginal_dims: self.marginal_dims.clone(),
            model_hash: model_hash.to_string(),
            states: self.counts.len(),
        }
    }

    /// CSV with header `names...,probability`, one row per state.
    pub fn write_csv<W: Write>(&self, mut w: W, names: &[String]) -> io::Result<()> {
        writeln!(w, "{},probability", names.join(","))?;
        for (x, p) in self.iter() {
            for v in x {
                write!(w, "{v},")?;
            }
            writeln!(w, "{p}")?;
        }
        Ok(())
    }
}

impl MassFunction for EmpiricalPmf {
    fn prob(&self, x: &[i64]) -> f64 {
        self.count(x) as f64 / self.total_count() as f64
    }

    fn for_each_state(&self, f: &mut dyn FnMut(&[i64], f64)) {
        for (x, p) in self.iter() {
            f(x, p);
        }
    }

    fn sum_sq(&self) -> f64 {
        EmpiricalPmf::sum_sq(self)
    }
}

/// Writes family counts as `family,names...,count`.
pub fn write_counts_csv<W: Write>(mut w: W, counts: &[SparseCounts], names: &[String]) -> io::Result<()> {
    writeln!(w, "family,{},count", names.join(","))?;
    for (i, c) in counts.iter().enumerate() {
        for (x, k) in c.entries() {
            write!(w, "{i}")?;
            for v in x {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{k}")?;
        }
    }
    Ok(())
}

/// Reads the format of [`write_counts_csv`]. Families must be numbered
/// `0..n` without gaps.
pub fn read_counts_csv<R: BufRead>(r: R) -> Result<(Vec<String>, Vec<SparseCounts>), String> {
    let mut lines = r.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| e.to_string())?,
        None => return Err("empty counts file".into()),
    };
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 2 || cols[0] != "family" || cols[cols.len() - 1] != "count" {
        return Err("counts header must be `family,<species...>,count`".into());
    }
    let names: Vec<String> = cols[1..cols.len() - 1].iter().map(|s| s.to_string()).collect();
    let mut families: Vec<Vec<(State, u32)>> = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| e.to_string())?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(format!("line {lineno}: expected {} fields", cols.len()));
        }
        let bad = |what: &str| format!("line {lineno}: invalid {what}");
        let fam: usize = fields[0].parse().map_err(|_| bad("family index"))?;
        let x: State = fields[1..fields.len() - 1]
            .iter()
            .map(|f| f.parse::<i64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("state"))?;
        let c: u32 = fields[fields.len() - 1].parse().map_err(|_| bad("count"))?;
        if fam >= families.len() {
            families.resize_with(fam + 1, Vec::new);
        }
        families[fam].push((x, c));
    }
    let counts: Vec<SparseCounts> = families.into_iter().map(SparseCounts::from_pairs).collect();
    if let Some(i) = counts.iter().position(|c| c.m() == 0) {
        return Err(format!("family {i} has no entries"));
    }
    Ok((names, counts))
}

/// Union of the supports of several mass functions, sorted.
pub fn union_support(pmfs: &[&dyn MassFunction]) -> Vec<State> {
    let mut set: HashSet<State> = HashSet::new();
    for p in pmfs {
        p.for_each_state(&mut |x, _| {
            if !set.contains(x) {
                set.insert(x.to_vec());
            }
        });
    }
    let mut v: Vec<State> = set.into_iter().collect();
    v.sort();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(x: i64) -> Pmf {
        Pmf::from_pairs([(vec![x], 1.0)])
    }

    #[test]
    fn counts_merge_and_dot() {
        let a = SparseCounts::from_states([vec![1], vec![2], vec![1]]);
        assert_eq!(a.entries(), &[(vec![1], 2), (vec![2], 1)]);
        assert_eq!(a.m(), 3);
        assert_eq!(a.get(&[1]), 2);
        assert_eq!(a.get(&[7]), 0);
        let b = SparseCounts::from_pairs([(vec![2], 4), (vec![3], 1), (vec![9], 0)]);
        assert_eq!(b.entries().len(), 2);
        assert_eq!(a.dot(&b), 4);
        assert_eq!(a.norm_sq(), 5);
    }

    #[test]
    fn ise_examples() {
        let p = Pmf::from_pairs([(vec![0], 0.6), (vec![1], 0.4)]);
        assert_eq!(ise(&p, &p, Support::Union), 0.0);
        assert_eq!(ise(&point(3), &point(5), Support::Union), 2.0);
        let s = vec![vec![3], vec![5], vec![8]];
        assert_eq!(ise(&point(3), &point(5), Support::States(&s)), 2.0);
        let q = Pmf::from_pairs([(vec![0], 0.5), (vec![1], 0.5)]);
        assert!((ise(&q, &p, Support::Union) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn ise_grows_with_support() {
        let p = Pmf::from_pairs([(vec![0], 0.2), (vec![1], 0.5), (vec![2], 0.3)]);
        let q = Pmf::from_pairs([(vec![1], 0.6), (vec![3], 0.4)]);
        let all = union_support(&[&p, &q]);
        let mut last = 0.0;
        for k in 0..=all.len() {
            let v = ise(&q, &p, Support::States(&all[..k]));
            assert!(v >= last);
            last = v;
        }
        assert!((last - ise(&q, &p, Support::Union)).abs() < 1e-15);
    }

    #[test]
    fn ise_target_matches_direct_sum() {
        let p = Pmf::from_pairs([(vec![0], 0.2), (vec![1], 0.5), (vec![2], 0.3)]);
        let q = Pmf::from_pairs([(vec![1], 0.6), (vec![3], 0.4)]);
        let union = IseTarget::new(p.clone(), false);
        assert!((union.ise(&q) - ise(&q, &p, Support::Union)).abs() < 1e-15);
        let restricted = IseTarget::new(p.clone(), true);
        let states = p.states();
        assert!((restricted.ise(&q) - ise(&q, &p, Support::States(&states))).abs() < 1e-15);
    }

    #[test]
    fn marginals() {
        let p = Pmf::from_pairs([
            (vec![0, 0], 0.1),
            (vec![0, 1], 0.2),
            (vec![1, 0], 0.3),
            (vec![1, 1], 0.4),
        ]);
        assert_eq!(marginalize(&p, &[0, 1]), p);
        let empty = marginalize(&p, &[]);
        assert!((empty.prob(&[]) - 1.0).abs() < 1e-15);
        let first = marginalize(&p, &[0]);
        assert!((first.prob(&[0]) - 0.3).abs() < 1e-15);
        assert!((first.prob(&[1]) - 0.7).abs() < 1e-15);
        let c = SparseCounts::from_states([vec![1, 5], vec![1, 6], vec![2, 5]]);
        assert_eq!(c.marginalize(&[0]).entries(), &[(vec![1], 2), (vec![2], 1)]);
    }

    #[test]
    fn empirical_pmf_is_normalized_multiples() {
        let fams = vec![
            SparseCounts::from_states([vec![1], vec![2]]),
            SparseCounts::from_states([vec![2], vec![2]]),
            SparseCounts::from_states([vec![5], vec![1]]),
        ];
        let p = EmpiricalPmf::from_counts(&fams, 2, 0.3);
        assert_eq!(p.total_count(), 6);
        assert!((p.total() - 1.0).abs() < 1e-12);
        assert_eq!(p.prob(&[2]), 0.5);
        assert!((p.sum_sq() - (4.0 + 9.0 + 1.0) / 36.0).abs() < 1e-15);
        let mut buf = Vec::new();
        p.write_csv(&mut buf, &["X".to_string()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "X,probability\n1,0.3333333333333333\n2,0.5\n5,0.16666666666666666\n");
    }

    #[test]
    fn counts_csv_round_trip() {
        let fams = vec![
            SparseCounts::from_states([vec![1, 0], vec![2, 3]]),
            SparseCounts::from_states([vec![2, 3], vec![2, 3]]),
        ];
        let names = vec!["A".to_string(), "B".to_string()];
        let mut buf = Vec::new();
        write_counts_csv(&mut buf, &fams, &names).unwrap();
        let (n2, f2) = read_counts_csv(io::Cursor::new(buf)).unwrap();
        assert_eq!(n2, names);
        assert_eq!(f2, fams);
        assert!(read_counts_csv(io::Cursor::new("family,A,count\n1,3,1\n")).is_err());
        assert!(read_counts_csv(io::Cursor::new("fam,A,count\n")).is_err());
    }
}
