//! Independent brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use emodm::diffusion::NoiseModel;
use emodm::diffusion::PretrainedLibrary;
use emodm::moea::nsga2_run;
use emodm::{make_problem, FeLedger, Suite};

/// `a` is no worse everywhere and better somewhere.
pub fn brute_dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

pub fn brute_nondominated(points: &[Vec<f64>]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|q| brute_dominates(q, &points[i])))
        .collect()
}

/// Fronts by repeated peeling of the non-dominated layer.
pub fn brute_fronts(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| brute_dominates(&points[j], &points[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

/// Library of `sigs.len()` copies of a tiny trained model whose step
/// signatures are all overwritten by the given values.
pub fn library_with_signatures(sigs: &[f64]) -> PretrainedLibrary {
    let inst = make_problem(Suite::Zdt, 1, 2, 3).unwrap();
    let tr = nsga2_run(&inst, 10, 3, 1, &FeLedger::new()).unwrap();
    let base: NoiseModel = emodm::diffusion::train_model(&tr, true).unwrap();
    let entries = sigs
        .iter()
        .map(|&s| {
            let mut e = base.clone();
            for st in &mut e.steps {
                st.signature = s;
            }
            e
        })
        .collect();
    PretrainedLibrary { entries, t: 3, m: 2, max_d: 3 }
}

/// Linear scan argmin with lowest-index ties.
pub fn scan_argmin(values: &[f64], query: f64) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if (query - values[i]).abs() < (query - values[best]).abs() {
            best = i;
        }
    }
    best
}
