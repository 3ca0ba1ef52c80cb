#![allow(dead_code)]

use mmem_core::{build_constraint_groups, HmmParams, Matrix};
use proptest::prelude::*;

fn normalize(weights: Vec<f64>) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, len).prop_map(normalize)
}

/// Arbitrary strictly positive HMM with `states` states.
pub fn hmm(states: usize) -> impl Strategy<Value = HmmParams> {
    (
        prop::collection::vec(-2.0f64..2.0, states),
        prop::collection::vec(0.2f64..5.0, states),
        prop::collection::vec(distribution(states), states),
        distribution(states),
    )
        .prop_map(|(means, variances, rows, initial_dist)| HmmParams {
            means,
            variances,
            transitions: Matrix::from_rows(rows).unwrap(),
            initial_dist,
        })
}

/// HMM on the joint layout with `2 * noise_states` states.
pub fn joint_hmm(noise_states: usize) -> impl Strategy<Value = HmmParams> {
    hmm(2 * noise_states)
}

/// Joint HMM that already satisfies every tie of the constrained model.
pub fn tied_hmm(noise_states: usize) -> impl Strategy<Value = HmmParams> {
    joint_hmm(noise_states).prop_map(move |mut p| {
        build_constraint_groups(noise_states).unwrap().tie(&mut p, true);
        for i in 0..p.num_states() {
            let row = p.transitions.row_mut(i);
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
        }
        p
    })
}

pub fn observations(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, len)
}

pub fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tolerance {tol})");
}
