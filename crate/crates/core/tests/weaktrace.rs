mod oracle;

use nested_mzi::evolution::{joint_outcome_distribution, Experiment};
use nested_mzi::histories::{Framework, ProjectorExpr, DEFAULT_TOL};
use nested_mzi::interferometer::{
    default_nested_mzi, Interferometer, InterferometerSpec, ProbeDecl,
};
use nested_mzi::probes::ProbeRegister;
use nested_mzi::weaktrace::{
    compare_ch_weaktrace, forward_norms, weak_trace_table, weak_value, ChVerdict, DEFAULT_THRESHOLD,
};
use nested_mzi::Error;
use num_complex::Complex64;
use proptest::prelude::*;

const DETECTORS: [&str; 3] = ["D1", "D2", "D3"];

/// Projector, its slot and the raw channels a path must cross.
const EXPRS: [(&str, usize, &[&str]); 6] = [
    ("A", 3, &["A"]),
    ("B", 3, &["B"]),
    ("C", 3, &["C"]),
    ("B+C", 3, &["B", "C"]),
    ("D", 1, &["D"]),
    ("E", 4, &["E"]),
];

fn wv(spec: &InterferometerSpec, label: &str, slot: usize, det: &str) -> Complex64 {
    let itf = Interferometer::new(spec.clone());
    weak_value(&itf, &ProjectorExpr::parse(slot, label).unwrap(), det).unwrap()
}

#[test]
fn canonical_weak_values_post_d1() {
    let spec = default_nested_mzi();
    let expected = [1.0, 0.5, -0.5, 0.0, 0.0, 0.0];
    for ((label, slot, through), want) in EXPRS.iter().zip(expected) {
        let got = wv(&spec, label, *slot, "D1");
        let oracle = oracle::weak_value(&spec, through, "D1");
        assert!(
            (got - oracle).norm() <= 1e-10,
            "{label}: {got} vs oracle {oracle}"
        );
        assert!(
            (got - Complex64::new(want, 0.0)).norm() <= 1e-10,
            "{label}: {got}"
        );
    }
}

#[test]
fn weak_values_match_oracle_for_every_detector() {
    let spec = default_nested_mzi();
    for det in DETECTORS {
        for (label, slot, through) in EXPRS {
            let got = wv(&spec, label, slot, det);
            let oracle = oracle::weak_value(&spec, through, det);
            assert!(
                (got - oracle).norm() <= 1e-10,
                "{label}|{det}: {got} vs {oracle}"
            );
        }
    }
}

#[test]
fn presence_table_post_d1() {
    let itf = Interferometer::new(default_nested_mzi());
    let table = weak_trace_table(&itf, "D1", DEFAULT_THRESHOLD, &[]).unwrap();
    let present = |l: &str| {
        table
            .rows
            .iter()
            .any(|r| r.label == l && r.slot == 3 && r.present)
    };
    assert!(present("A") && present("B") && present("C"));
    let absent = table.absent();
    for l in ["D", "E"] {
        assert!(absent.contains(&l.to_string()), "{l} in {absent:?}");
    }
}

#[test]
fn slot_sums_are_one() {
    let spec = default_nested_mzi()
        .with_beamsplitter("BS2", 0.4, 1.1)
        .unwrap();
    let itf = Interferometer::new(spec.clone());
    for det in DETECTORS {
        let table = weak_trace_table(&itf, det, DEFAULT_THRESHOLD, &[]).unwrap();
        for slot in 0..=spec.final_slot() {
            let s = table.slot_sum(slot);
            assert!(
                (s - Complex64::new(1.0, 0.0)).norm() <= 1e-10,
                "{det} slot {slot}: {s}"
            );
        }
    }
}

#[test]
fn forward_norm_is_conserved() {
    let itf = Interferometer::new(default_nested_mzi());
    let norms = forward_norms(&itf);
    assert_eq!(norms.len(), 6);
    for n in norms {
        assert!((n - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn orthogonal_post_selection_is_an_error() {
    // all flux into D, which the inner interferometer sends to D3
    let spec = default_nested_mzi()
        .with_beamsplitter("BS1", 0.0, 0.0)
        .unwrap();
    let itf = Interferometer::new(spec);
    let e = weak_value(&itf, &ProjectorExpr::parse(3, "B").unwrap(), "D1").unwrap_err();
    assert_eq!(
        e,
        Error::OrthogonalPostSelection {
            detector: "D1".into()
        }
    );
}

fn trigger_rate(spec: &InterferometerSpec, targets: &[&str], eps: f64, det: &str) -> f64 {
    let decl = ProbeDecl {
        name: "p".into(),
        targets: targets.iter().map(|s| s.to_string()).collect(),
        epsilon: eps,
        slot: None,
    };
    let reg = ProbeRegister::new(spec, &[decl]).unwrap();
    let dist = joint_outcome_distribution(&Experiment::new(spec.clone(), reg).evolve()).unwrap();
    let fired = dist.prob(det, "1").unwrap();
    fired / (fired + dist.prob(det, "0").unwrap())
}

#[test]
fn bridge_law_at_small_epsilon() {
    let spec = default_nested_mzi();
    let eps: f64 = 1e-3;
    for det in DETECTORS {
        for (label, slot, through) in EXPRS.iter().filter(|e| e.1 == 3) {
            let ratio = trigger_rate(&spec, through, eps, det) / eps.sin().powi(2);
            let w2 = wv(&spec, label, *slot, det).norm_sqr();
            let oracle_probs = oracle::probabilities(&spec, &[oracle::probe(through, eps)]);
            let o_fired = oracle_probs[&(det.to_string(), 1)];
            let o_ratio =
                o_fired / (o_fired + oracle_probs[&(det.to_string(), 0)]) / eps.sin().powi(2);
            assert!((ratio - o_ratio).abs() <= 1e-9, "{label}|{det}");
            if w2 > 1e-12 {
                assert!(
                    (ratio - w2).abs() / w2 <= 1e-3,
                    "{label}|{det}: {ratio} vs {w2}"
                );
            } else {
                assert!(ratio <= 1e-12, "{label}|{det}: {ratio}");
            }
        }
    }
}

#[test]
fn comparison_flags_inner_arms() {
    let spec = default_nested_mzi();
    let fw = Framework::parse(&spec, "probe:{A,B+C}").unwrap();
    let cmp = compare_ch_weaktrace(&spec, "D1", &fw, DEFAULT_THRESHOLD, DEFAULT_TOL).unwrap();
    assert_eq!(cmp.disagreements(), ["B", "C"]);
    let b = cmp.row("B").unwrap();
    assert!(b.weak_trace);
    assert!(matches!(b.ch, ChVerdict::Absent { .. }));
    assert!(cmp.row("A").unwrap().agree());
    for row in &cmp.bridge {
        assert!(row.deviation() <= 1e-3, "{row:?}");
    }
    let null = cmp
        .null_evidence
        .iter()
        .find(|n| n.target == "B+C")
        .unwrap();
    assert!(null.joint <= 1e-15);

    let fine = Framework::parse(&spec, "probe:{A,B,C}").unwrap();
    assert!(matches!(
        compare_ch_weaktrace(&spec, "D1", &fine, DEFAULT_THRESHOLD, DEFAULT_TOL),
        Err(Error::InconsistentFramework { .. })
    ));
}

fn random_spec() -> impl Strategy<Value = InterferometerSpec> {
    let angle = 0.05f64..1.5;
    let phase = -3.1f64..3.1;
    (prop::array::uniform4(angle), prop::array::uniform4(phase)).prop_map(|(t, p)| {
        let mut spec = default_nested_mzi();
        for (k, name) in ["BS1", "BS2", "BS3", "BS4"].iter().enumerate() {
            spec = spec.with_beamsplitter(name, t[k], p[k]).unwrap();
        }
        spec
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn additivity_and_oracle_agreement(spec in random_spec()) {
        for det in DETECTORS {
            if oracle::restricted_amplitude(&spec, &[], det).norm() < 1e-3 {
                continue;
            }
            let b = wv(&spec, "B", 3, det);
            let c = wv(&spec, "C", 3, det);
            let bc = wv(&spec, "B+C", 3, det);
            prop_assert!((bc - b - c).norm() <= 1e-9);
            let a = wv(&spec, "A", 3, det);
            prop_assert!((a + bc - Complex64::new(1.0, 0.0)).norm() <= 1e-9);
            for (label, slot, through) in EXPRS {
                let got = wv(&spec, label, slot, det);
                let want = oracle::weak_value(&spec, through, det);
                prop_assert!((got - want).norm() <= 1e-8 * want.norm().max(1.0));
            }
        }
    }
}
