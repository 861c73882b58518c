//! Binomial confidence intervals for error-rate estimates.

use statrs::distribution::{Beta, ContinuousCDF};

/// Two-sided Clopper-Pearson interval for `errors` successes in `trials`.
pub fn clopper_pearson(errors: u64, trials: u64, confidence: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let alpha = 1.0 - confidence;
    let k = errors as f64;
    let n = trials as f64;
    let low = if errors == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0)
            .expect("positive shape parameters")
            .inverse_cdf(alpha / 2.0)
    };
    let high = if errors == trials {
        1.0
    } else {
        Beta::new(k + 1.0, n - k)
            .expect("positive shape parameters")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (low, high)
}

/// 95% Clopper-Pearson interval.
pub fn ci95(errors: u64, trials: u64) -> (f64, f64) {
    clopper_pearson(errors, trials, 0.95)
}

/// Standard error of a binomial proportion estimate.
pub fn proportion_standard_error(p: f64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / trials as f64).sqrt()
}
