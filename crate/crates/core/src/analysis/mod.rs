//! Closed-form loads, counts and bounds, all in exact arithmetic.
//!
//! Loads are normalized by `Q·N·T`. For a spec with weight
//! `S = Σ_p r_p·m_p/(m_p - 1)`:
//!
//! ```text
//! uncoded        L_u = r / S
//! coded          L_c = L_u / (r - 1)
//! baseline       L_1 = (1/r)(1 - r/K)         (homogeneous design over all r-subsets)
//! lower bound    L*  ≥ 1 / (2S)
//! ```

mod sweep;

pub use sweep::{sweep, write_csv, SweepFamily, CSV_HEADER};

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::design::{Design, DesignError, NetworkSpec, NodeId};

pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("need 1 <= r <= K, got K = {k}, r = {r}")]
    BadBaseline { k: usize, r: usize },
    #[error("not a permutation of 1..={k}: {detail}")]
    NotAPermutation { k: usize, detail: String },
    #[error("bad sweep configuration: {0}")]
    Sweep(String),
}

pub fn rational(numer: usize, denom: usize) -> Rational {
    Rational::new(numer.into(), denom.into())
}

fn int(value: usize) -> Rational {
    Rational::from_integer(value.into())
}

/// `Σ_p r_p·m_p/(m_p - 1)`.
pub fn class_weight(spec: &NetworkSpec) -> Rational {
    spec.classes
        .iter()
        .map(|c| rational(c.r * c.m, c.m - 1))
        .fold(Rational::zero(), |acc, w| acc + w)
}

pub fn load_uncoded(spec: &NetworkSpec) -> Rational {
    int(spec.load()) / class_weight(spec)
}

pub fn load_coded(spec: &NetworkSpec) -> Rational {
    load_uncoded(spec) / int(spec.load() - 1)
}

/// Load of the homogeneous scheme that places files on every `r`-subset.
pub fn baseline_load(k: usize, r: usize) -> Result<Rational, AnalysisError> {
    if r == 0 || r > k {
        return Err(AnalysisError::BadBaseline { k, r });
    }
    Ok(rational(1, r) * (Rational::one() - rational(r, k)))
}

/// `(N_1, U_1) = (C(K, r)·η1, C(K, r + 1))`.
pub fn baseline_counts(
    k: usize,
    r: usize,
    eta1: usize,
) -> Result<(BigUint, BigUint), AnalysisError> {
    if r == 0 || r > k {
        return Err(AnalysisError::BadBaseline { k, r });
    }
    let files = num_integer::binomial(BigUint::from(k), BigUint::from(r)) * BigUint::from(eta1);
    let groups = if r == k {
        BigUint::zero()
    } else {
        num_integer::binomial(BigUint::from(k), BigUint::from(r + 1))
    };
    Ok((files, groups))
}

/// File, group and multicast-group counts of the hypercuboid design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypercubeCounts {
    pub files: BigUint,
    pub groups: BigUint,
    pub multicast_groups: BigUint,
}

pub fn hypercube_counts(spec: &NetworkSpec) -> HypercubeCounts {
    let groups = spec.classes.iter().fold(BigUint::one(), |acc, c| {
        acc * BigUint::from(c.m).pow(c.r as u32)
    });
    HypercubeCounts {
        files: &groups * BigUint::from(spec.eta1),
        multicast_groups: groups.clone(),
        groups,
    }
}

/// `Q = η2·Y·Σ_p r_p·m_p/(m_p - 1)`.
pub fn function_count(spec: &NetworkSpec) -> BigUint {
    let q = class_weight(spec) * int(spec.eta2 * spec.lcm_y());
    debug_assert!(q.is_integer());
    q.to_integer().to_biguint().expect("positive")
}

/// `L_c / L_1 = r/(r - 1)` for a homogeneous network.
pub fn ratio_homogeneous(r: usize) -> Rational {
    rational(r, r - 1)
}

/// `2r/(r - 1)`, the ceiling on `L_c / L*`.
pub fn optimality_ceiling(r: usize) -> Rational {
    rational(2 * r, r - 1)
}

/// Both sides of the Jensen comparison `L_u ≤ 1 - r/K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JensenGap {
    pub local_gain: Rational,
    pub homogeneous_gain: Rational,
    /// True iff the classes do not all share one `m_p`.
    pub strict: bool,
}

pub fn jensen_gap(spec: &NetworkSpec) -> JensenGap {
    let local_gain = load_uncoded(spec);
    let homogeneous_gain = Rational::one() - rational(spec.load(), spec.node_count());
    let strict = !spec.is_homogeneous();
    if strict {
        assert!(local_gain < homogeneous_gain, "Jensen gap must be strict");
    } else {
        assert_eq!(local_gain, homogeneous_gain, "Jensen gap must close");
    }
    JensenGap {
        local_gain,
        homogeneous_gain,
        strict,
    }
}

/// Counting form of the permutation lower bound:
/// `(1/QN)·Σ_i |W_{k_i}|·(N - |∪_{j≤i} M_{k_j}|)`.
///
/// IVs are modeled as independent uniform strings, so each conditional
/// entropy is `T` times the number of IVs not yet determined.
pub fn lower_bound_permutation(
    design: &Design,
    perm: &[NodeId],
) -> Result<Rational, AnalysisError> {
    let k = design.k();
    let bad = |detail: String| AnalysisError::NotAPermutation { k, detail };
    if perm.len() != k {
        return Err(bad(format!("length {} != {k}", perm.len())));
    }
    let mut seen = vec![false; k];
    for &node in perm {
        if node == 0 || node > k {
            return Err(bad(format!("node {node} out of range")));
        }
        if std::mem::replace(&mut seen[node - 1], true) {
            return Err(bad(format!("node {node} repeated")));
        }
    }

    let mut covered = vec![false; design.n()];
    let mut union = 0usize;
    let mut total = BigUint::zero();
    for &node in perm {
        for &f in design.files_of_node(node) {
            if !std::mem::replace(&mut covered[f - 1], true) {
                union += 1;
            }
        }
        total += BigUint::from(design.functions_of_node(node).len() * (design.n() - union));
    }
    Ok(Rational::new(
        total.into(),
        (BigUint::from(design.q()) * BigUint::from(design.n())).into(),
    ))
}

/// One permutation per node set: the nodes of `K_i`, then every other node
/// in ascending order.
pub fn prefix_permutations(design: &Design) -> Vec<Vec<NodeId>> {
    design
        .node_sets()
        .iter()
        .map(|set| {
            let mut perm = set.clone();
            perm.extend((1..=design.k()).filter(|n| !set.contains(n)));
            perm
        })
        .collect()
}

/// `1 / (2·Σ_p r_p·m_p/(m_p - 1))`, attained by every node-set prefix
/// permutation.
pub fn lower_bound_best(spec: &NetworkSpec) -> Rational {
    (int(2) * class_weight(spec)).recip()
}

/// `N_1 / N_c` for a homogeneous network with `r | K`.
pub fn file_count_advantage(k: usize, r: usize) -> Result<Rational, AnalysisError> {
    if r < 2 || !k.is_multiple_of(r) || k / r < 2 {
        return Err(AnalysisError::BadBaseline { k, r });
    }
    let (n1, _) = baseline_counts(k, r, 1)?;
    let nc = hypercube_counts(&NetworkSpec::homogeneous(r, k / r)).files;
    Ok(Rational::new(n1.into(), nc.into()))
}

/// Theoretical loads and counts for one spec, plus measured loads when a
/// simulation was run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadReport {
    pub spec: NetworkSpec,
    pub k: usize,
    pub r: usize,
    pub y: usize,
    pub n: BigUint,
    pub q: BigUint,
    pub x: BigUint,
    pub l_u: Rational,
    pub l_c: Rational,
    pub l_u_measured: Option<Rational>,
    pub l_c_measured: Option<Rational>,
    pub l_1: Rational,
    pub lower_bound: Rational,
    pub baseline_files: BigUint,
    pub baseline_groups: BigUint,
    pub ratio_c_over_1: Rational,
}

pub fn load_report(spec: &NetworkSpec) -> Result<LoadReport, AnalysisError> {
    spec.validate()?;
    let k = spec.node_count();
    let r = spec.load();
    let l_c = load_coded(spec);
    let l_1 = baseline_load(k, r)?;
    let (baseline_files, baseline_groups) = baseline_counts(k, r, spec.eta1)?;
    let counts = hypercube_counts(spec);
    Ok(LoadReport {
        spec: spec.clone(),
        k,
        r,
        y: spec.lcm_y(),
        n: counts.files,
        q: function_count(spec),
        x: counts.groups,
        l_u: load_uncoded(spec),
        l_u_measured: None,
        l_c_measured: None,
        ratio_c_over_1: &l_c / &l_1,
        l_c,
        l_1,
        lower_bound: lower_bound_best(spec),
        baseline_files,
        baseline_groups,
    })
}

/// Load measured from a transcript: `bits / (Q·N·T·8)`.
pub fn measured_load(design: &Design, bits: u64) -> Rational {
    let denom = BigUint::from(design.q())
        * BigUint::from(design.n())
        * BigUint::from(design.spec().iv_bytes)
        * BigUint::from(8u32);
    Rational::new(BigUint::from(bits).into(), denom.into())
}

/// Decimal rendering rounded half-up to `digits` significant digits, with
/// trailing zeros dropped.
pub fn to_decimal(value: &Rational, digits: usize) -> String {
    use num_bigint::BigInt;

    if value.is_zero() {
        return "0".into();
    }
    let negative = value.is_negative();
    let num = value.numer().abs();
    let den = value.denom().clone();
    let ten = BigInt::from(10);

    // exponent e with 10^e <= |value| < 10^(e+1)
    let mut e = num.to_string().len() as i64 - den.to_string().len() as i64;
    let at_least = |e: i64| {
        if e >= 0 {
            num >= &den * ten.pow(e as u32)
        } else {
            &num * ten.pow((-e) as u32) >= den
        }
    };
    if !at_least(e) {
        e -= 1;
    }

    let shift = digits as i64 - 1 - e;
    let (n, d) = if shift >= 0 {
        (&num * ten.pow(shift as u32), den.clone())
    } else {
        (num.clone(), &den * ten.pow((-shift) as u32))
    };
    let mut mantissa: BigInt = (&n * 2 + &d) / (&d * 2);
    if mantissa == ten.pow(digits as u32) {
        mantissa /= 10;
        e += 1;
    }
    let s = mantissa.to_string();

    let mut out = if e >= digits as i64 - 1 {
        format!("{s}{}", "0".repeat((e - digits as i64 + 1) as usize))
    } else if e >= 0 {
        let point = e as usize + 1;
        format!("{}.{}", &s[..point], &s[point..])
    } else {
        format!("0.{}{s}", "0".repeat((-e - 1) as usize))
    };
    if out.contains('.') {
        let trimmed = out.trim_end_matches('0').trim_end_matches('.').len();
        out.truncate(trimmed);
    }
    if negative {
        out.insert(0, '-');
    }
    out
}

/// `p/q=decimal` with 12 significant digits, as written to sweep CSVs.
pub fn format_rational(value: &Rational) -> String {
    format!("{value}={}", to_decimal(value, 12))
}

/// Lossy conversion for display.
pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// Row of the sweep CSV. See [`CSV_HEADER`].
#[derive(Debug, Clone, Serialize)]
pub struct CsvRow {
    #[serde(rename = "K")]
    pub k: usize,
    pub r: usize,
    #[serde(rename = "P")]
    pub p: usize,
    pub classes: String,
    #[serde(rename = "L_u")]
    pub l_u: String,
    #[serde(rename = "L_c")]
    pub l_c: String,
    #[serde(rename = "L_1")]
    pub l_1: String,
    pub lower_bound: String,
    pub ratio_c_over_1: String,
    #[serde(rename = "N")]
    pub n: String,
    #[serde(rename = "Q")]
    pub q: String,
    #[serde(rename = "X")]
    pub x: String,
    #[serde(rename = "N1")]
    pub n1: String,
    #[serde(rename = "U1")]
    pub u1: String,
}

impl From<&LoadReport> for CsvRow {
    fn from(report: &LoadReport) -> Self {
        Self {
            k: report.k,
            r: report.r,
            p: report.spec.classes.len(),
            classes: report.spec.classes_label(),
            l_u: format_rational(&report.l_u),
            l_c: format_rational(&report.l_c),
            l_1: format_rational(&report.l_1),
            lower_bound: format_rational(&report.lower_bound),
            ratio_c_over_1: format_rational(&report.ratio_c_over_1),
            n: report.n.to_string(),
            q: report.q.to_string(),
            x: report.x.to_string(),
            n1: report.baseline_files.to_string(),
            u1: report.baseline_groups.to_string(),
        }
    }
}
