//! Paired t-test p-values against statrs' Student's t implementation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use screenprio::analysis::stats::student_t_two_tailed;
use screenprio::paired_ttest;
use statrs::distribution::{ContinuousCDF, StudentsT};

fn reference_p(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    2.0 * (1.0 - dist.cdf(t.abs()))
}

#[test]
fn textbook_example() {
    let c = paired_ttest(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5], 1).unwrap();
    assert!((c.t_statistic - 4.2426).abs() < 1e-4);
    assert_eq!(c.df, 4);
    assert!((c.p_value - reference_p(c.t_statistic, 4.0)).abs() < 1e-10);
    assert!((c.p_value - 0.0132).abs() < 1e-4);
}

#[test]
fn random_samples_agree_with_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let n = rng.gen_range(2..60);
        let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = a.iter().map(|x| x + rng.gen_range(-0.4..0.3)).collect();
        let c = paired_ttest(&a, &b, 1).unwrap();
        let expected = reference_p(c.t_statistic, c.df as f64);
        assert!((c.p_value - expected).abs() < 1e-6, "n={n} t={} ours={} ref={expected}", c.t_statistic, c.p_value);
    }
}

#[test]
fn antisymmetry_and_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.gen_range(2..30);
        let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let m = rng.gen_range(1..8);
        let ab = paired_ttest(&a, &b, m).unwrap();
        let ba = paired_ttest(&b, &a, m).unwrap();
        assert!((ab.t_statistic + ba.t_statistic).abs() < 1e-12);
        assert!((ab.p_value - ba.p_value).abs() < 1e-15);
        assert!(ab.corrected_p >= ab.p_value && ab.corrected_p <= 1.0);
        assert!((0.0..=1.0).contains(&ab.p_value));
    }
}

#[test]
fn extreme_t_values() {
    for &(t, df) in &[(0.001, 3.0), (12.0, 2.0), (40.0, 50.0), (-3.3, 9.0), (1.96, 1000.0)] {
        let ours = student_t_two_tailed(t, df);
        let theirs = reference_p(t, df);
        assert!((ours - theirs).abs() < 1e-10, "t={t} df={df}: {ours} vs {theirs}");
    }
}
