#![allow(dead_code)]

use stlt::formula::{parse_formula, to_desired_form, Formula, PredicateDecl};
use stlt::reach::ReachEngine;
use stlt::regions::Region;
use stlt::tree::{build_tree, Stlt};
use stlt::Dynamics;

pub const EXAMPLE1: &str = "F[0,15](G[2,10] mu1 | (mu2 U[5,10] mu3))";

pub fn example1_preds() -> Vec<PredicateDecl> {
    vec![
        PredicateDecl { name: "mu1".into(), region: Region::disk(&[-4.0, -4.0], 1.0) },
        PredicateDecl { name: "mu2".into(), region: Region::disk(&[4.0, 0.0], 4.0) },
        PredicateDecl { name: "mu3".into(), region: Region::disk(&[1.0, -4.0], 2.0) },
    ]
}

pub fn example1_phi() -> Formula {
    parse_formula(EXAMPLE1).unwrap()
}

pub fn example1_tree(dynamics: &Dynamics, engine: &ReachEngine) -> Stlt {
    build_tree(&to_desired_form(&example1_phi()).unwrap(), &example1_preds(), dynamics, engine).unwrap()
}

pub fn disk(region: &Region) -> (Vec<f64>, f64) {
    match region {
        Region::Disk { center, radius } => (center.clone(), *radius),
        other => panic!("not a disk: {other:?}"),
    }
}

/// Integer-bounded interval `[a, a + w]` with `a + w <= max`.
pub fn interval<R: rand::Rng>(rng: &mut R, max: u32) -> (f64, f64) {
    let a = rng.gen_range(0..max);
    let b = rng.gen_range(a..=max);
    (a as f64, b as f64)
}

fn atom<R: rand::Rng>(rng: &mut R, names: &[&str]) -> Formula {
    let n = names[rng.gen_range(0..names.len())];
    if rng.gen_bool(0.25) {
        Formula::not_pred(n)
    } else {
        Formula::pred(n)
    }
}

/// Desired-form formula: disjunction only at the top, no `U`, no disjunction under `G`.
pub fn random_desired<R: rand::Rng>(rng: &mut R, names: &[&str], depth: usize) -> Formula {
    fn body<R: rand::Rng>(rng: &mut R, names: &[&str], depth: usize) -> Formula {
        if depth == 0 {
            return atom(rng, names);
        }
        match rng.gen_range(0..4) {
            0 => atom(rng, names),
            1 => {
                let (a, b) = interval(rng, 4);
                Formula::eventually(body(rng, names, depth - 1), a, b)
            }
            2 => {
                let (a, b) = interval(rng, 4);
                Formula::always(body(rng, names, depth - 1), a, b)
            }
            _ => Formula::and(vec![body(rng, names, depth - 1), body(rng, names, depth - 1)]),
        }
    }
    let k = if rng.gen_bool(0.3) { 2 } else { 1 };
    Formula::or((0..k).map(|_| body(rng, names, depth)).collect())
}

/// Desired-form formula whose tree regions are exact: no conjunction below a temporal operator and no `F` below `G`.
pub fn random_exact<R: rand::Rng>(rng: &mut R, names: &[&str], depth: usize) -> Formula {
    fn temporal<R: rand::Rng>(rng: &mut R, names: &[&str], depth: usize, under_g: bool) -> Formula {
        if depth == 0 || rng.gen_bool(0.25) {
            return atom(rng, names);
        }
        let (a, b) = interval(rng, 3);
        if under_g || rng.gen_bool(0.5) {
            Formula::always(temporal(rng, names, depth - 1, true), a, b)
        } else {
            Formula::eventually(temporal(rng, names, depth - 1, under_g), a, b)
        }
    }
    let conj = |rng: &mut R| {
        let k = rng.gen_range(1..=2);
        Formula::and((0..k).map(|_| temporal(rng, names, depth, false)).collect())
    };
    let k = if rng.gen_bool(0.3) { 2 } else { 1 };
    Formula::or((0..k).map(|_| conj(rng)).collect())
}

/// Positive normal form formula with `U` and disjunctions anywhere.
pub fn random_general<R: rand::Rng>(rng: &mut R, names: &[&str], depth: usize) -> Formula {
    if depth == 0 {
        return atom(rng, names);
    }
    let (a, b) = interval(rng, 3);
    match rng.gen_range(0..6) {
        0 => atom(rng, names),
        1 => Formula::eventually(random_general(rng, names, depth - 1), a, b),
        2 => Formula::always(random_general(rng, names, depth - 1), a, b),
        3 => Formula::until(random_general(rng, names, depth - 1), random_general(rng, names, depth - 1), a, b),
        4 => Formula::and(vec![random_general(rng, names, depth - 1), random_general(rng, names, depth - 1)]),
        _ => Formula::or(vec![random_general(rng, names, depth - 1), random_general(rng, names, depth - 1)]),
    }
}
