//! Brute-force reference constructions, written directly from the set
//! definitions and independent of the library's index arithmetic.

#![allow(dead_code)]

use std::collections::BTreeSet;

use hypercdc::analysis::Rational;
use hypercdc::NetworkSpec;
use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Brute {
    pub k: usize,
    pub n: usize,
    pub q: usize,
    pub node_sets: Vec<Vec<usize>>,
    /// Groups in odometer order, last dimension fastest.
    pub groups: Vec<Vec<usize>>,
    pub batches: Vec<Vec<usize>>,
    pub files: Vec<BTreeSet<usize>>,
    pub functions: Vec<BTreeSet<usize>>,
}

fn lcm_by_search(values: &[usize]) -> usize {
    (1..).find(|c| values.iter().all(|v| c % v == 0)).unwrap()
}

pub fn brute(spec: &NetworkSpec) -> Brute {
    let mut node_sets = Vec::new();
    let mut next = 1;
    let mut class_of = Vec::new();
    for c in &spec.classes {
        for _ in 0..c.r {
            node_sets.push((next..next + c.m).collect::<Vec<_>>());
            next += c.m;
            class_of.extend(std::iter::repeat_n(*c, c.m));
        }
    }
    let k = next - 1;

    let mut groups = Vec::new();
    let mut coords = vec![0usize; node_sets.len()];
    'odometer: loop {
        groups.push(
            coords
                .iter()
                .zip(&node_sets)
                .map(|(&c, s)| s[c])
                .collect::<Vec<_>>(),
        );
        for i in (0..coords.len()).rev() {
            coords[i] += 1;
            if coords[i] < node_sets[i].len() {
                continue 'odometer;
            }
            coords[i] = 0;
        }
        break;
    }

    let mut batches = Vec::new();
    let mut file = 1;
    for _ in &groups {
        batches.push((file..file + spec.eta1).collect::<Vec<_>>());
        file += spec.eta1;
    }
    let n = file - 1;

    let files = (1..=k)
        .map(|node| {
            groups
                .iter()
                .zip(&batches)
                .filter(|(g, _)| g.contains(&node))
                .flat_map(|(_, b)| b.iter().copied())
                .collect()
        })
        .collect();

    let y = lcm_by_search(&spec.classes.iter().map(|c| c.m - 1).collect::<Vec<_>>());
    let mut functions = Vec::new();
    let mut f = 1;
    for c in &class_of {
        let count = spec.eta2 * y / (c.m - 1);
        functions.push((f..f + count).collect());
        f += count;
    }

    Brute {
        k,
        n,
        q: f - 1,
        node_sets,
        groups,
        batches,
        files,
        functions,
    }
}

impl Brute {
    pub fn dim_of(&self, node: usize) -> usize {
        self.node_sets
            .iter()
            .position(|s| s.contains(&node))
            .unwrap()
    }

    /// Groups differing from group `alpha` (1-based) in exactly `z`'s dimension.
    pub fn substitutes(&self, alpha: usize, z: usize) -> Vec<usize> {
        let base = &self.groups[alpha - 1];
        let h = self.dim_of(z);
        self.groups
            .iter()
            .enumerate()
            .filter(|(_, g)| {
                let diff: Vec<usize> = (0..g.len()).filter(|&i| g[i] != base[i]).collect();
                diff == [h]
            })
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// IVs wanted by `z` from files every other member holds and `z` lacks.
    pub fn v_set(&self, alpha: usize, z: usize) -> BTreeSet<(usize, usize)> {
        let others: Vec<usize> = self.groups[alpha - 1]
            .iter()
            .copied()
            .filter(|&n| n != z)
            .collect();
        let mut out = BTreeSet::new();
        for j in 1..=self.n {
            if self.files[z - 1].contains(&j) {
                continue;
            }
            if others.iter().all(|&o| self.files[o - 1].contains(&j)) {
                for &q in &self.functions[z - 1] {
                    out.insert((q, j));
                }
            }
        }
        out
    }

    pub fn uncoded_ivs(&self) -> usize {
        (0..self.k)
            .map(|i| self.functions[i].len() * (self.n - self.files[i].len()))
            .sum()
    }

    /// Cumulative-union count over a node permutation.
    pub fn permutation_bound(&self, perm: &[usize]) -> Rational {
        let mut union = BTreeSet::new();
        let mut total = 0usize;
        for &node in perm {
            union.extend(self.files[node - 1].iter().copied());
            total += self.functions[node - 1].len() * (self.n - union.len());
        }
        Rational::new(BigInt::from(total), BigInt::from(self.q * self.n))
    }
}

/// `Σ r_p·m_p/(m_p - 1)` as a fraction, summed with a common denominator.
pub fn weight(spec: &NetworkSpec) -> Rational {
    let mut acc = Rational::from_integer(0.into());
    for c in &spec.classes {
        acc += Rational::new(BigInt::from(c.r * c.m), BigInt::from(c.m - 1));
    }
    acc
}

pub fn frac(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Random valid specs: `P` cycles through 1..=3, `m_p ∈ 2..=5`,
/// `r_p ∈ 1..=3`, `η1, η2 ∈ {1, 2}`, `T` a multiple of `r - 1`. Specs whose
/// IV table would exceed `max_qn` entries are resampled.
pub fn random_specs(seed: u64, count: usize, max_qn: usize) -> Vec<NetworkSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = out.len() % 3 + 1;
        let classes: Vec<(usize, usize)> = (0..p)
            .map(|_| (rng.gen_range(1..=3), rng.gen_range(2..=5)))
            .collect();
        let r: usize = classes.iter().map(|c| c.0).sum();
        if r < 2 {
            continue;
        }
        let eta1 = rng.gen_range(1..=2);
        let eta2 = rng.gen_range(1..=2);
        let t = (r - 1) * rng.gen_range(1..=3);
        let spec = NetworkSpec::new(classes)
            .with_eta(eta1, eta2)
            .with_iv_bytes(t)
            .with_file_bytes(rng.gen_range(8..=48))
            .with_seed(rng.gen());
        let x: usize = spec.classes.iter().map(|c| c.m.pow(c.r as u32)).product();
        let y = spec.lcm_y();
        let q: usize = spec
            .classes
            .iter()
            .map(|c| eta2 * y * c.r * c.m / (c.m - 1))
            .sum();
        if q * x * eta1 > max_qn {
            continue;
        }
        out.push(spec);
    }
    out
}
