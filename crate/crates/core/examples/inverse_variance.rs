//! Folding synthetic per-horizon candidates with every weighting strategy.
//!
//! Horizon `i` carries candidates centred on the same return with noise that
//! grows with `i`, except horizon 2 which is made deliberately noisy.
//! STEVE moves weight off the noisy horizon; fixed schemes do not.
//!
//! `cargo run --release --example inverse_variance`

use rand_distr::{Distribution, Normal};
use steve::numerics::seeded;
use steve::value_expansion::{combine, CandidateTargetMatrix, Weighting, WeightingStrategy};

fn main() {
    let (m, n, l) = (4, 4, 4);
    let truth = 10.0;
    let spreads = [0.5, 0.3, 3.0, 0.4];
    let mut rng = seeded(0);
    let candidates: Vec<Vec<f64>> = spreads
        .iter()
        .enumerate()
        .map(|(i, &sd)| {
            let count = if i == 0 { l } else { m * n * l };
            let noise = Normal::new(0.0, sd).unwrap();
            (0..count).map(|_| truth + noise.sample(&mut rng)).collect()
        })
        .collect();
    let matrix = CandidateTargetMatrix::from_candidates(m, n, l, candidates);
    println!("horizon means     {:?}", rounded(matrix.means()));
    println!("horizon variances {:?}", rounded(matrix.variances()));
    for kind in [
        Weighting::Td,
        Weighting::Mve,
        Weighting::Mean,
        Weighting::TdLambda(0.5),
        Weighting::Steve,
        Weighting::CovSteve,
    ] {
        let c = combine(&matrix, &WeightingStrategy::new(kind));
        println!(
            "{:<10} target {:>8.4}  weights {:?}",
            kind.name(),
            c.target,
            rounded(&c.weights)
        );
    }
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e3).round() / 1e3).collect()
}
