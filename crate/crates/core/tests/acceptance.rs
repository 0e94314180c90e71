//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{brute, frac, random_specs, weight};
use hypercdc::analysis::{
    baseline_load, file_count_advantage, jensen_gap, load_coded, load_uncoded, lower_bound_best,
    lower_bound_permutation, optimality_ceiling, prefix_permutations, ratio_homogeneous, sweep,
    Rational, SweepFamily,
};
use hypercdc::design::{build_design, Design, NetworkSpec, NodeClass, NodeId};
use hypercdc::engine::{map_all, synthesize_files, true_iv};
use hypercdc::shuffle::{decode, shuffle_coded, v_set, MessageMeta};
use hypercdc::simulation::{simulate, SimulationOptions};
use num_traits::{One, Zero};

/// Specs for criteria 6 and 7.
const MATRIX_SEED: u64 = 0x05ee_dcdc;
const MATRIX_SIZE: usize = 60;
const MATRIX_MAX_QN: usize = 6_000;

fn group_of(design: &Design, members: &[NodeId]) -> usize {
    design
        .groups()
        .iter()
        .position(|g| g == members)
        .expect("group exists")
        + 1
}

fn xor(a: &[u8], b: &[u8]) -> Vec<u8> {
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

fn within(start: Instant, limit: Duration, what: &str) {
    let elapsed = start.elapsed();
    assert!(elapsed < limit, "{what} took {elapsed:?}, limit {limit:?}");
}

/// Checks that `sender`'s message in `members` XORs exactly one IV for each
/// other member `z`, taken from `z`'s request, and that every recipient
/// decodes. Requires single-IV segments.
fn check_group_messages(design: &Design, members: &[NodeId]) {
    let store = synthesize_files(design);
    let states = map_all(design, &store);
    let transcript = shuffle_coded(design, &states).unwrap();
    let alpha = group_of(design, members);
    let messages = transcript.group_messages(alpha);
    assert_eq!(messages.len(), members.len());

    for message in messages {
        let MessageMeta::Coded { segments, padding } = &message.meta else {
            panic!("coded message expected");
        };
        assert_eq!(*padding, 0);
        assert_eq!(segments.len(), members.len() - 1);
        assert_eq!(message.payload.len(), design.spec().iv_bytes);

        // Some choice of one requested IV per other member reproduces the payload.
        let requests: Vec<Vec<_>> = members
            .iter()
            .filter(|&&z| z != message.sender)
            .map(|&z| v_set(design, alpha, z).unwrap())
            .collect();
        let mut found = false;
        let mut stack = vec![(0usize, vec![0u8; design.spec().iv_bytes])];
        while let Some((depth, acc)) = stack.pop() {
            if depth == requests.len() {
                found |= acc == message.payload;
                continue;
            }
            for &id in &requests[depth] {
                stack.push((depth + 1, xor(&acc, &true_iv(design, &store, id))));
            }
        }
        assert!(
            found,
            "message from {} is not a one-per-requester XOR",
            message.sender
        );
    }
    for &z in members {
        decode(design, &store, states[z - 1].clone(), &transcript)
            .unwrap_or_else(|e| panic!("node {z} failed to decode: {e}"));
    }
}

fn criterion_1() {
    let start = Instant::now();
    let design = build_design(&NetworkSpec::homogeneous(2, 3)).unwrap();
    assert_eq!(design.files_of_node(1), &[1, 2, 3]);
    assert_eq!(design.files_of_node(5), &[2, 5, 8]);
    let sim = simulate(&design, SimulationOptions::default());
    assert!(sim.passed(), "{:?}", sim.checks);
    assert_eq!(design.q() * design.n(), 54);
    assert_eq!(sim.uncoded_messages, 36);
    assert_eq!(sim.report.l_u_measured, Some(frac(2, 3)));
    within(start, Duration::from_secs(1), "criterion 1");
}

fn criterion_2() {
    let start = Instant::now();
    let design = build_design(&NetworkSpec::homogeneous(3, 3)).unwrap();
    let sim = simulate(&design, SimulationOptions::default());
    assert!(sim.passed(), "{:?}", sim.checks);
    let coded = sim.coded.as_ref().unwrap();
    assert_eq!(coded.len(), 81);
    let t = design.spec().iv_bytes;
    assert!(coded.messages.iter().all(|m| m.payload.len() == t));
    assert_eq!(sim.report.l_c_measured, Some(frac(1, 3)));

    // Node 3 in {3,5,9}: one IV of function 5 over a file of {3,4,9} or
    // {3,6,9}, XORed with one IV of function 9.
    let alpha = group_of(&design, &[3, 5, 9]);
    let store = synthesize_files(&design);
    let from3 = coded
        .group_messages(alpha)
        .iter()
        .find(|m| m.sender == 3)
        .unwrap();
    let files_for_5: Vec<usize> = [vec![3, 4, 9], vec![3, 6, 9]]
        .iter()
        .flat_map(|g| design.files_of_group(group_of(&design, g)))
        .collect();
    let files_for_9: Vec<usize> = [vec![3, 5, 7], vec![3, 5, 8]]
        .iter()
        .flat_map(|g| design.files_of_group(group_of(&design, g)))
        .collect();
    let hit = files_for_5.iter().any(|&a| {
        files_for_9.iter().any(|&b| {
            xor(
                &true_iv(&design, &store, (5, a)),
                &true_iv(&design, &store, (9, b)),
            ) == from3.payload
        })
    });
    assert!(hit, "node 3's message is not v[5,*] xor v[9,*]");
    check_group_messages(&design, &[3, 5, 9]);
    within(start, Duration::from_secs(1), "criterion 2");
}

fn criterion_3() {
    let start = Instant::now();
    let design = build_design(&NetworkSpec::new([(2, 2), (1, 3)])).unwrap();
    assert_eq!((design.k(), design.n(), design.q()), (7, 12, 11));
    let sim = simulate(&design, SimulationOptions::default());
    assert!(sim.passed(), "{:?}", sim.checks);
    assert_eq!(sim.report.l_c_measured, Some(frac(3, 11)));
    assert_eq!(sim.report.l_u_measured, Some(frac(6, 11)));
    check_group_messages(&design, &[2, 3, 7]);
    within(start, Duration::from_secs(1), "criterion 3");
}

fn criterion_4() {
    let spec = NetworkSpec::new([(4, 2), (2, 8)]);
    assert_eq!(load_uncoded(&spec), frac(7, 12));
    assert_eq!(load_coded(&spec), frac(7, 60));
    let l1 = baseline_load(24, 6).unwrap();
    assert_eq!(l1, frac(1, 8));
    assert!(load_coded(&spec) < l1);
}

fn criterion_5() {
    let rows = sweep(&SweepFamily::Fig4 {
        k: 20,
        r_min: 2,
        r_max: 9,
    })
    .unwrap();
    assert_eq!(rows.len(), 8);
    for row in &rows {
        assert_eq!(row.k, 20);
        let better = row.l_c < row.l_1;
        assert_eq!(
            better,
            (4..=7).contains(&row.r),
            "r = {}: L_c {} vs L_1 {}",
            row.r,
            row.l_c,
            row.l_1
        );
    }
}

fn criterion_6() {
    let start = Instant::now();
    let specs = random_specs(MATRIX_SEED, MATRIX_SIZE, MATRIX_MAX_QN);
    assert!(specs.len() >= 50);
    for p in 1..=3 {
        assert!(specs.iter().any(|s| s.classes.len() == p));
    }
    for spec in &specs {
        let design = build_design(spec).unwrap();
        assert_eq!(spec.iv_bytes % (design.r() - 1), 0);
        let sim = simulate(&design, SimulationOptions::default());
        assert!(sim.passed(), "{}: {:?}", spec.classes_label(), sim.checks);
        assert_eq!(sim.report.l_c_measured.as_ref(), Some(&load_coded(spec)));
        assert_eq!(sim.report.l_u_measured.as_ref(), Some(&load_uncoded(spec)));

        let reference = brute(spec);
        let expected = spec.eta1 * spec.eta2 * spec.lcm_y();
        for alpha in 1..=design.x() {
            for &z in design.group(alpha) {
                let set = v_set(&design, alpha, z).unwrap();
                assert_eq!(set.len(), expected);
                assert_eq!(
                    set.into_iter().collect::<std::collections::BTreeSet<_>>(),
                    reference.v_set(alpha, z)
                );
            }
        }
    }
    within(start, Duration::from_secs(60), "criterion 6");
}

fn criterion_7() {
    for spec in random_specs(MATRIX_SEED, MATRIX_SIZE, MATRIX_MAX_QN) {
        let design = build_design(&spec).unwrap();
        let r = spec.load();
        let two = Rational::from_integer(2.into());
        let best = lower_bound_best(&spec);
        assert_eq!(best, (two * weight(&spec)).recip());
        let ratio = load_coded(&spec) / &best;
        assert_eq!(ratio, optimality_ceiling(r));
        assert!(ratio <= Rational::from_integer(4.into()));
        let reference = brute(&spec);
        for perm in prefix_permutations(&design) {
            let value = lower_bound_permutation(&design, &perm).unwrap();
            assert_eq!(value, reference.permutation_bound(&perm));
            assert!(value <= load_coded(&spec));
            assert!(value <= best);
        }
    }
}

fn criterion_8() {
    for r in 2..=6 {
        for m in 2..=6 {
            let spec = NetworkSpec::homogeneous(r, m);
            let k = (r * m) as i64;
            let r64 = r as i64;
            let l_c = load_coded(&spec);
            assert_eq!(l_c, frac(k - r64, k * (r64 - 1)));
            assert_eq!(
                &l_c / baseline_load(r * m, r).unwrap(),
                ratio_homogeneous(r)
            );
            let gap = jensen_gap(&spec);
            assert!(!gap.strict);
            assert_eq!(gap.local_gain, gap.homogeneous_gain);
        }
    }
}

fn criterion_9() {
    // Case 1: r_p fixed, m_p doubling.
    let base = vec![NodeClass::new(2, 2), NodeClass::new(1, 4)];
    let rows = sweep(&SweepFamily::Case1 { base, steps: 5 }).unwrap();
    let ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    assert!(ks.windows(2).all(|w| w[1] == 2 * w[0]), "K ladder {ks:?}");
    let target = ratio_homogeneous(rows[0].r);
    let gaps: Vec<Rational> = rows
        .iter()
        .map(|row| {
            let d = &row.ratio_c_over_1 - &target;
            if d < Rational::zero() {
                -d
            } else {
                d
            }
        })
        .collect();
    assert!(
        gaps.windows(2).all(|w| w[1] < w[0]),
        "case 1 gaps not shrinking"
    );

    // Case 2: m_p fixed, r_p/K fixed, truly heterogeneous.
    let base = vec![NodeClass::new(4, 2), NodeClass::new(4, 8)];
    let rows = sweep(&SweepFamily::Case2 { base, steps: 5 }).unwrap();
    let ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    assert!(ks.windows(2).all(|w| w[1] == 2 * w[0]), "K ladder {ks:?}");
    for row in &rows {
        assert!(
            row.ratio_c_over_1 < Rational::one(),
            "K = {}: ratio {}",
            row.k,
            row.ratio_c_over_1
        );
    }

    // N_1/N_c at fixed r/K = 1/2 and 1/3.
    for (r_of_k, ks) in [(2usize, [4usize, 8, 16, 32, 64]), (3, [6, 12, 24, 48, 96])] {
        let adv: Vec<Rational> = ks
            .iter()
            .map(|&k| file_count_advantage(k, k / r_of_k).unwrap())
            .collect();
        assert!(adv.iter().all(|a| *a >= Rational::one()));
        assert!(
            adv.windows(2).all(|w| w[1] > w[0]),
            "N_1/N_c not increasing"
        );
    }
}

fn main() {
    let criteria: [(&str, fn()); 9] = [
        (
            "1 two-dimensional cube: files, 36 of 54 unicasts, L_u = 2/3",
            criterion_1,
        ),
        (
            "2 three-dimensional cube: 81 coded messages, L_c = 1/3, group {3,5,9}",
            criterion_2,
        ),
        (
            "3 hypercuboid (2,2)+(1,3): L_c = 3/11, L_u = 6/11, group {2,3,7}",
            criterion_3,
        ),
        (
            "4 (4,2)+(2,8): L_u = 7/12, L_c = 7/60 < L_1 = 1/8",
            criterion_4,
        ),
        ("5 fig4 K=20: L_c < L_1 exactly for r in 4..=7", criterion_5),
        (
            "6 randomized matrix: measured loads, oracle outputs, |v_set|",
            criterion_6,
        ),
        (
            "7 bounds: closed form, 2r/(r-1) ratio, prefix permutations",
            criterion_7,
        ),
        ("8 homogeneous consistency", criterion_8),
        ("9 large-network trends", criterion_9),
    ];

    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(()) => println!("PASS criterion {name} ({:.2?})", start.elapsed()),
            Err(payload) => {
                failed += 1;
                let msg = payload
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL criterion {name}: {msg}");
            }
        }
    }
    let _ = panic::take_hook();
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
