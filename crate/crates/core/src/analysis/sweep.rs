use std::io::Write;

use rayon::prelude::*;

use super::{load_report, AnalysisError, CsvRow, LoadReport};
use crate::design::{NetworkSpec, NodeClass};

pub const CSV_HEADER: &str = "K,r,P,classes,L_u,L_c,L_1,lower_bound,ratio_c_over_1,N,Q,X,N1,U1";

/// A family of specs to tabulate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SweepFamily {
    /// Fixed `K`; for each `r`, `r - 1` dimensions of 2 nodes plus one
    /// dimension of `K - 2(r - 1)` nodes.
    Fig4 {
        k: usize,
        r_min: usize,
        r_max: usize,
    },
    /// Fixed `r_p`; every `m_p` doubles at each step, so `K` doubles.
    Case1 {
        base: Vec<NodeClass>,
        steps: usize,
    },
    /// Fixed `m_p`; every `r_p` doubles at each step, so `K` and `r` double
    /// with constant `r_p/K`.
    Case2 {
        base: Vec<NodeClass>,
        steps: usize,
    },
    Custom(Vec<NetworkSpec>),
}

impl SweepFamily {
    pub fn specs(&self) -> Result<Vec<NetworkSpec>, AnalysisError> {
        let bad = |msg: String| Err(AnalysisError::Sweep(msg));
        match self {
            SweepFamily::Fig4 { k, r_min, r_max } => {
                if *r_min < 2 || r_min > r_max {
                    return bad(format!(
                        "r range {r_min}..{r_max} must satisfy 2 <= min <= max"
                    ));
                }
                (*r_min..=*r_max)
                    .map(|r| {
                        let weak = k.checked_sub(2 * (r - 1)).filter(|&m| m >= 2);
                        match weak {
                            Some(m) => Ok(NetworkSpec::new([(r - 1, 2), (1, m)])),
                            None => Err(AnalysisError::Sweep(format!(
                                "K = {k} leaves fewer than 2 weak nodes at r = {r}"
                            ))),
                        }
                    })
                    .collect()
            }
            SweepFamily::Case1 { base, steps } => Ok((0..*steps)
                .map(|s| NetworkSpec::new(base.iter().map(|c| (c.r, c.m << s))))
                .collect()),
            SweepFamily::Case2 { base, steps } => Ok((0..*steps)
                .map(|s| NetworkSpec::new(base.iter().map(|c| (c.r << s, c.m))))
                .collect()),
            SweepFamily::Custom(specs) => Ok(specs.clone()),
        }
    }
}

/// One report per spec of the family, in family order.
pub fn sweep(family: &SweepFamily) -> Result<Vec<LoadReport>, AnalysisError> {
    family.specs()?.par_iter().map(load_report).collect()
}

pub fn write_csv<W: Write>(reports: &[LoadReport], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for report in reports {
        writer.serialize(CsvRow::from(report))?;
    }
    if reports.is_empty() {
        writer.write_record(CSV_HEADER.split(','))?;
    }
    writer.flush()?;
    Ok(())
}
