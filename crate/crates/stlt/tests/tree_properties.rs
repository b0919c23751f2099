use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stlt::cbf::{build_cbfs, time_domain};
use stlt::formula::{horizon, PredicateDecl};
use stlt::reach::ReachEngine;
use stlt::tree::{build_tree, OpKind, TreeError};
use stlt::{Dynamics, Region};

mod common;

fn preds() -> Vec<PredicateDecl> {
    vec![
        PredicateDecl { name: "a".into(), region: Region::disk(&[0.0, 0.0], 2.0) },
        PredicateDecl { name: "b".into(), region: Region::disk(&[2.0, 1.0], 2.0) },
        PredicateDecl { name: "c".into(), region: Region::disk(&[-1.0, 2.0], 2.5) },
    ]
}

/// Trees the analytic engine can represent; empty or non-disk intersections are skipped.
fn analytic_trees(seed: u64, count: usize) -> Vec<(stlt::Formula, stlt::tree::Stlt)> {
    let dynamics = Dynamics::single_integrator(2, 1.0);
    let preds = preds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        assert!(attempts < 20 * count, "analytic engine rejected too many formulas");
        let phi = common::random_desired(&mut rng, &["a", "b", "c"], 3);
        match build_tree(&phi, &preds, &dynamics, &ReachEngine::Analytic) {
            Ok(tree) => out.push((phi, tree)),
            Err(TreeError::Reach { .. }) => continue,
            Err(e) => panic!("{phi}: {e}"),
        }
    }
    out
}

#[test]
fn barrier_domains_are_ordered_along_every_path() {
    let dynamics = Dynamics::single_integrator(2, 1.0);
    let mut checked_pairs = 0;
    for (phi, tree) in analytic_trees(2024, 100) {
        tree.check_structure().unwrap();
        assert!(tree.or_only_at_top(), "{phi}");
        let frags = tree.temporal_fragments();
        let cbfs = build_cbfs(&tree, &dynamics, &ReachEngine::Analytic, 1.0).unwrap();
        for (i, f) in frags.iter().enumerate() {
            let di = time_domain(f, &tree);
            assert_eq!(di, cbfs[i].domain);
            assert!(di.lo <= di.hi + 1e-12, "{phi}: {di}");
            assert!(di.hi <= horizon(&phi) + 1e-9, "{phi}: {di} beyond horizon");
            match f.predecessor {
                Some(j) => {
                    assert!(!f.top_layer);
                    let dj = time_domain(&frags[j], &tree);
                    assert!(dj.lo <= di.lo + 1e-12 && di.lo <= dj.hi + 1e-12 && dj.hi <= di.hi + 1e-12, "{phi}: f{} {dj} then f{} {di}", j + 1, i + 1);
                    checked_pairs += 1;
                }
                None => assert!(f.top_layer, "{phi}: fragment {i} without predecessor"),
            }
        }
    }
    assert!(checked_pairs >= 50, "only {checked_pairs} predecessor pairs");
}

#[test]
fn time_codes_follow_operator_offsets() {
    for (_, tree) in analytic_trees(99, 100) {
        for &id in tree.set_nodes() {
            let Some(op) = tree.parent(id) else {
                assert_eq!(tree.start(id), (0.0, 0.0));
                continue;
            };
            let parent = tree.parent(op).unwrap();
            let (plo, phi_) = tree.start(parent);
            let (lo, hi) = tree.start(id);
            match tree.op(op) {
                OpKind::And | OpKind::Or => assert_eq!((lo, hi), (plo, phi_)),
                OpKind::Eventually(i) => assert_eq!((lo, hi), (plo + i.lo, phi_ + i.hi)),
                OpKind::Always(i) => assert_eq!((lo, hi), (plo + i.lo, phi_ + i.lo)),
            }
        }
    }
}
