//! End-to-end Map / Shuffle / Reduce run with verification against the
//! centrally computed oracle.

use std::collections::BTreeMap;

use serde_json::json;

use crate::analysis::{load_report, measured_load, rational, LoadReport, Rational};
use crate::design::{Design, FuncId};
use crate::engine::{map_all, oracle_outputs, reduce_node, synthesize_files, FileStore, NodeState};
use crate::shuffle::{decode_all, shuffle_coded, shuffle_uncoded, MessageMeta, Transcript};

/// Byte flip applied to the coded transcript before decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tamper {
    pub message: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimulationOptions {
    pub tamper: Option<Tamper>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub report: LoadReport,
    pub map_ivs: usize,
    pub uncoded_messages: usize,
    pub coded_messages: usize,
    /// Extra coded load caused by segment padding.
    pub padding_load: Rational,
    pub checks: Vec<Check>,
    pub uncoded: Option<Transcript>,
    pub coded: Option<Transcript>,
}

impl SimulationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let opt = |r: &Option<Rational>| r.as_ref().map(ToString::to_string);
        json!({
            "classes": self.report.spec.classes_label(),
            "K": self.report.k,
            "N": self.report.n.to_string(),
            "Q": self.report.q.to_string(),
            "X": self.report.x.to_string(),
            "r": self.report.r,
            "Y": self.report.y,
            "map_ivs": self.map_ivs,
            "uncoded_messages": self.uncoded_messages,
            "coded_messages": self.coded_messages,
            "L_u": self.report.l_u.to_string(),
            "L_u_measured": opt(&self.report.l_u_measured),
            "L_c": self.report.l_c.to_string(),
            "L_c_measured": opt(&self.report.l_c_measured),
            "padding_load": self.padding_load.to_string(),
            "checks": self.checks.iter().map(|c| json!({
                "name": c.name,
                "passed": c.passed,
                "detail": c.detail,
            })).collect::<Vec<_>>(),
            "passed": self.passed(),
        })
    }
}

fn reduce_and_compare(
    design: &Design,
    states: Vec<NodeState>,
    oracle: &BTreeMap<FuncId, Vec<u8>>,
) -> Result<usize, String> {
    let mut checked = 0;
    for state in states {
        let state = reduce_node(design, state).map_err(|e| e.to_string())?;
        for (q, out) in &state.outputs {
            if oracle[q] != *out {
                return Err(format!(
                    "node {} output for function {q} differs from oracle",
                    state.node
                ));
            }
            checked += 1;
        }
    }
    if checked != design.q() {
        return Err(format!(
            "{checked} outputs reduced, expected {}",
            design.q()
        ));
    }
    Ok(checked)
}

fn shuffle_phase(
    design: &Design,
    store: &FileStore,
    states: &[NodeState],
    oracle: &BTreeMap<FuncId, Vec<u8>>,
    transcript: Result<Transcript, String>,
    tamper: Option<Tamper>,
) -> (Option<Transcript>, Result<usize, String>) {
    let mut transcript = match transcript {
        Ok(t) => t,
        Err(e) => return (None, Err(e)),
    };
    if let Some(t) = tamper {
        transcript.corrupt(t.message, t.offset);
    }
    let outcome = decode_all(design, store, states.to_vec(), &transcript)
        .map_err(|e| e.to_string())
        .and_then(|decoded| reduce_and_compare(design, decoded, oracle));
    (Some(transcript), outcome)
}

/// Runs Map, both shuffles, decoding and Reduce on `design`.
pub fn simulate(design: &Design, options: SimulationOptions) -> SimulationReport {
    let mut checks = Vec::new();
    let mut report = load_report(design.spec()).expect("design spec is valid");

    let store = synthesize_files(design);
    let (oracle, states) = rayon::join(
        || oracle_outputs(design, &store),
        || map_all(design, &store),
    );

    let map_ivs: usize = states.iter().map(|s| s.local_ivs.len()).sum();
    let qn = design.q() * design.n();
    let local_only = states.iter().all(|s| {
        s.local_ivs
            .iter()
            .all(|((_, j), _)| design.has_file(s.node, j))
    });
    checks.push(Check {
        name: "map",
        passed: map_ivs == design.r() * qn && local_only,
        detail: format!(
            "computed {map_ivs} IVs, computation load {} (expected {})",
            rational(map_ivs, qn),
            design.r()
        ),
    });

    // Uncoded baseline.
    let (uncoded, outcome) = shuffle_phase(
        design,
        &store,
        &states,
        &oracle,
        shuffle_uncoded(design, &states).map_err(|e| e.to_string()),
        None,
    );
    let uncoded_messages = uncoded.as_ref().map_or(0, Transcript::len);
    if let Some(t) = &uncoded {
        let measured = measured_load(design, t.unicast_bits);
        checks.push(Check {
            name: "uncoded load",
            passed: measured == report.l_u,
            detail: format!("L_u measured {measured}, theory {}", report.l_u),
        });
        report.l_u_measured = Some(measured);
    }
    checks.push(Check {
        name: "uncoded reduce",
        passed: outcome.is_ok(),
        detail: match outcome {
            Ok(n) => format!("{n} outputs match oracle"),
            Err(e) => e,
        },
    });

    // Coded multicast.
    let (coded, outcome) = shuffle_phase(
        design,
        &store,
        &states,
        &oracle,
        shuffle_coded(design, &states).map_err(|e| e.to_string()),
        options.tamper,
    );
    let coded_messages = coded.as_ref().map_or(0, Transcript::len);
    let mut padding_load = Rational::default();
    if let Some(t) = &coded {
        let measured = measured_load(design, t.coded_bits);
        let padding: usize = t
            .messages
            .iter()
            .map(|m| match m.meta {
                MessageMeta::Coded { padding, .. } => padding,
                MessageMeta::Unicast { .. } => 0,
            })
            .sum();
        // Each message carries padding/(r-1) of its requests' zero bytes.
        padding_load = measured_load(design, padding as u64 * 8)
            / Rational::from_integer((design.r() - 1).into());
        let expected = &report.l_c + &padding_load;
        checks.push(Check {
            name: "coded load",
            passed: t.len() == design.x() * design.r() && measured == expected,
            detail: if padding == 0 {
                format!("L_c measured {measured}, theory {}", report.l_c)
            } else {
                format!(
                    "L_c measured {measured}, theory {} + padding {padding_load}",
                    report.l_c
                )
            },
        });
        report.l_c_measured = Some(measured);
    }
    checks.push(Check {
        name: "coded decode",
        passed: outcome.is_ok(),
        detail: match outcome {
            Ok(n) => format!("{n} outputs match oracle"),
            Err(e) => e,
        },
    });

    SimulationReport {
        report,
        map_ivs,
        uncoded_messages,
        coded_messages,
        padding_load,
        checks,
        uncoded,
        coded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_design, NetworkSpec};

    #[test]
    fn hypercuboid_passes() {
        let d = build_design(&NetworkSpec::new([(2, 2), (1, 3)])).unwrap();
        let rep = simulate(&d, SimulationOptions::default());
        assert!(rep.passed(), "{:?}", rep.checks);
        assert_eq!(rep.report.l_c_measured, Some(rational(3, 11)));
        assert_eq!(rep.report.l_u_measured, Some(rational(6, 11)));
        assert_eq!(rep.coded_messages, 36);
        assert_eq!(rep.uncoded_messages, 72);
    }

    #[test]
    fn padding_accounted() {
        // r = 4, each request one 5-byte IV split into 3 segments of 2 bytes.
        let d = build_design(&NetworkSpec::homogeneous(4, 2).with_iv_bytes(5)).unwrap();
        let rep = simulate(&d, SimulationOptions::default());
        assert!(rep.passed(), "{:?}", rep.checks);
        let measured = rep.report.l_c_measured.clone().unwrap();
        assert!(measured > rep.report.l_c);
        assert_eq!(measured, &rep.report.l_c + &rep.padding_load);
    }

    #[test]
    fn tamper_fails_decode_only() {
        let d = build_design(&NetworkSpec::homogeneous(3, 3)).unwrap();
        let rep = simulate(
            &d,
            SimulationOptions {
                tamper: Some(Tamper {
                    message: 0,
                    offset: 0,
                }),
            },
        );
        assert!(!rep.passed());
        let failed: Vec<_> = rep
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect();
        assert_eq!(failed, vec!["coded decode"]);
        assert!(rep
            .checks
            .iter()
            .any(|c| c.detail.contains("decode mismatch")));
    }
}
