//! Simulates one frame over bursty impulsive noise and estimates the channel
//! blindly with both EM variants.
//!
//! cargo run --release -p mmem-core --example blind_estimate

use mmem_core::{
    build_constraint_groups, build_reference_hmm, generate_noise_with, run_em, transmit, EmConfig, EmVariant,
    MetricReport, MiddletonParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), mmem_core::Error> {
    let channel = MiddletonParams::two_state(0.3, 10.0, 0.9)?;
    let guess = MiddletonParams::two_state(0.1, 1.0, 0.0)?;
    let frame = 32_768;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bits: Vec<bool> = (0..frame).map(|_| rng.random()).collect();
    let noise = generate_noise_with(&channel, frame, &mut rng)?;
    let y = transmit(&bits, &noise)?;

    let reference = build_reference_hmm(&channel, 0.5)?;
    let init = build_reference_hmm(&guess, 0.5)?;
    let groups = build_constraint_groups(channel.num_noise_states())?;

    for variant in [EmVariant::Standard, EmVariant::Constrained] {
        let trace = run_em(&y, &init, &groups, &EmConfig::default().with_variant(variant))?;
        let estimate = trace.final_params().expect("trace holds the initial guess");
        let report = MetricReport::compare(&reference, estimate)?;
        println!(
            "{variant:>11}: {:>3} iterations, variance NMSE {:.2e}, transition KL {:.2e}, variances {:.3?}",
            trace.num_updates(),
            report.nmse_variance,
            report.kl_transition,
            estimate.variances
        );
    }
    Ok(())
}
