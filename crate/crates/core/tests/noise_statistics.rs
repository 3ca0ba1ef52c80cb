mod common;

use common::assert_close;
use mmem_core::{generate_noise, noise_transition_matrix, state_probabilities, state_variances, transmit, MiddletonParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stationary_by_power_iteration(p: &MiddletonParams) -> Vec<f64> {
    let m = noise_transition_matrix(p);
    let w = p.num_noise_states();
    let mut dist = vec![1.0 / w as f64; w];
    for _ in 0..100_000 {
        let next: Vec<f64> = (0..w).map(|j| (0..w).map(|i| dist[i] * m[(i, j)]).sum()).collect();
        let moved = next.iter().zip(&dist).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        dist = next;
        if moved < 1e-16 {
            break;
        }
    }
    dist
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn state_probabilities_are_stationary(
        a in 0.05f64..2.0,
        lambda in 0.5f64..50.0,
        r in 0.0f64..0.95,
        w in 2usize..8,
    ) {
        let p = MiddletonParams::new(a, lambda, r, w, 1.0).unwrap();
        let probs = state_probabilities(&p);
        let stationary = stationary_by_power_iteration(&p);
        assert_close(probs.iter().sum::<f64>(), 1.0, 1e-12, "probability mass");
        for (x, y) in probs.iter().zip(&stationary) {
            assert_close(*x, *y, 1e-10, "stationary distribution");
        }
        let m = noise_transition_matrix(&p);
        for i in 0..w {
            assert_close(m.row(i).iter().sum::<f64>(), 1.0, 1e-12, "row mass");
        }
    }
}

#[test]
fn long_realization_matches_chain_statistics() {
    let p = MiddletonParams::two_state(0.3, 10.0, 0.9).unwrap();
    let n = 1_000_000;
    let noise = generate_noise(&p, n, 7).unwrap();
    let probs = state_probabilities(&p);
    let variances = state_variances(&p);

    let impulsive = noise.states.iter().filter(|&&s| s == 1).count() as f64 / n as f64;
    assert_close(impulsive, probs[1], 0.01, "impulsive-state occupancy");

    let stays = noise.states.windows(2).filter(|w| w[0] == w[1]).count() as f64 / (n - 1) as f64;
    let expected_stay = 0.9 + 0.1 * probs.iter().map(|q| q * q).sum::<f64>();
    assert_close(stays, expected_stay, 0.005, "stay probability");

    for state in 0..2 {
        let (sum, count) = noise
            .states
            .iter()
            .zip(&noise.samples)
            .filter(|(&s, _)| s == state)
            .fold((0.0, 0usize), |(acc, c), (_, &x)| (acc + x * x, c + 1));
        assert_close(sum / count as f64, variances[state], 0.03 * variances[state], "per-state variance");
    }
}

#[test]
fn received_power_is_signal_plus_noise() {
    let p = MiddletonParams::two_state(0.3, 10.0, 0.9).unwrap();
    let n = 1_000_000;
    let noise = generate_noise(&p, n, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bits: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    let y = transmit(&bits, &noise).unwrap();
    let power = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let noise_power: f64 = state_probabilities(&p).iter().zip(state_variances(&p)).map(|(q, v)| q * v).sum();
    assert_close(power, 1.0 + noise_power, 0.05 * (1.0 + noise_power), "received power");
}
