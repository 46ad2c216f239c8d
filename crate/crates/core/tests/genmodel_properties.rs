//! Monte-Carlo checks of the synthetic generative model. Sample sizes and
//! tolerances match the lab defaults (D = 20, N = 50 000).

use dtd_core::genmodel::{
    fit_projection, pattern_vs_filter_demo, sample, verify_filter_conditions, GenerativeSpec,
};
use dtd_core::linalg::{cosine, dot};

const N: usize = 50_000;

#[test]
fn signal_and_distractors_are_uncorrelated() {
    let spec = GenerativeSpec::random(4, 3, 0.1, 17).unwrap();
    let n = 100_000;
    let batch = sample(&spec, n);
    let k = batch.source_count();
    for c in 0..k {
        let mut mean_s = 0.0;
        let mut mean_n = 0.0;
        let mut cross = 0.0;
        for i in 0..n {
            let (s, d) = (batch.signal[i], batch.sources_of(i)[c]);
            mean_s += s;
            mean_n += d;
            cross += s * d;
        }
        let cov = cross / n as f64 - (mean_s / n as f64) * (mean_n / n as f64);
        assert!(cov.abs() <= 0.02, "source {c}: cov {cov}");
    }
}

#[test]
fn fitted_projection_generalizes() {
    let spec = GenerativeSpec::random(20, 5, 0.1, 3).unwrap();
    let w = fit_projection(&sample(&spec, N), 0.0).unwrap();
    let test = sample(&spec.with_seed(1_000_003), N);
    let (mut sy, mut ss, mut syy, mut sss, mut sys) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..N {
        let y = dot(&w, test.x(i));
        let s = test.signal[i];
        sy += y;
        ss += s;
        syy += y * y;
        sss += s * s;
        sys += y * s;
    }
    let n = N as f64;
    let cov = sys / n - sy / n * ss / n;
    let corr = cov / ((syy / n - (sy / n).powi(2)).sqrt() * (sss / n - (ss / n).powi(2)).sqrt());
    assert!(corr >= 0.95, "correlation {corr}");
    assert!(((sy - ss) / n).abs() <= 0.02, "bias {}", (sy - ss) / n);
}

#[test]
fn expected_output_recovers_the_signal() {
    for (seed, sigma) in [(5u64, 0.02), (6, 0.1), (7, 0.2)] {
        let spec = GenerativeSpec::random(20, 5, sigma, seed).unwrap();
        let w = fit_projection(&sample(&spec, N), 0.0).unwrap();
        let test = sample(&spec.with_seed(seed + 77), N);
        let mean_err: f64 = (0..N)
            .map(|i| dot(&w, test.x(i)) - test.signal[i])
            .sum::<f64>()
            / N as f64;
        assert!(mean_err.abs() <= 0.02, "sigma {sigma}: {mean_err}");
    }
}

#[test]
fn noise_free_data_with_few_distractors_is_singular() {
    // Rank K + 1 < D without isotropic noise.
    let spec = GenerativeSpec::random(20, 5, 0.0, 5).unwrap();
    assert!(matches!(
        fit_projection(&sample(&spec, 1000), 0.0),
        Err(dtd_core::Error::Singular)
    ));
}

#[test]
fn filter_conditions_hold_at_lab_scale() {
    let spec = GenerativeSpec::random(20, 5, 0.1, 42).unwrap();
    let w = fit_projection(&sample(&spec, N), 0.0).unwrap();
    let diag = verify_filter_conditions(&w, &spec).unwrap();
    assert!((diag.task_gain - 1.0).abs() <= 0.02, "{diag:?}");
    assert!(diag.max_leak <= 0.02, "{diag:?}");
}

#[test]
fn patterns_recover_the_task_direction() {
    for k in [0usize, 3, 5, 8] {
        for sigma in [0.05, 0.2] {
            let spec = GenerativeSpec::random(20, k, sigma, 100 + k as u64).unwrap();
            let report = pattern_vs_filter_demo(&spec, N, 0.0).unwrap();
            assert!(
                report.pattern_cosine >= 0.99,
                "K={k} sigma={sigma}: {}",
                report.pattern_cosine
            );
        }
    }
}

#[test]
fn overlapping_distractors_pull_the_filter_away_from_the_pattern() {
    let spec = GenerativeSpec::random(20, 5, 0.1, 9).unwrap();
    let overlap = spec
        .distractors
        .iter()
        .map(|c| cosine(c, &spec.pattern).abs())
        .fold(0.0, f64::max);
    assert!(overlap > 0.1, "fixture should have overlapping distractors");
    let report = pattern_vs_filter_demo(&spec, N, 0.0).unwrap();
    assert!(report.pattern_cosine >= 0.99);
    assert!(report.filter_cosine < report.pattern_cosine);
}
