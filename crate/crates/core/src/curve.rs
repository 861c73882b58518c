//! SER curves over a swept parameter.

use crate::link::SerEstimate;
use crate::stats;

/// One swept point; the interval is the 95% Clopper-Pearson interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SerPoint {
    pub x: f64,
    pub errors: u64,
    pub trials: u64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SerPoint {
    pub fn new(x: f64, errors: u64, trials: u64) -> Self {
        let (ci_low, ci_high) = stats::ci95(errors, trials);
        Self {
            x,
            errors,
            trials,
            ci_low,
            ci_high,
        }
    }

    pub fn from_estimate(x: f64, est: &SerEstimate) -> Self {
        Self::new(x, est.errors, est.trials)
    }

    pub fn ser(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.errors as f64 / self.trials as f64
        }
    }
}

/// Provenance attached to emitted curves.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CurveMetadata {
    pub config_digest: String,
    pub seed: u64,
    pub tool_version: String,
}

/// SER against one swept parameter, points sorted by `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SerCurve {
    pub parameter: String,
    pub unit: String,
    pub series: String,
    pub points: Vec<SerPoint>,
    pub metadata: CurveMetadata,
}

impl SerCurve {
    pub fn new(
        parameter: impl Into<String>,
        unit: impl Into<String>,
        series: impl Into<String>,
        mut points: Vec<SerPoint>,
    ) -> Self {
        points.sort_by(|a, b| a.x.total_cmp(&b.x));
        Self {
            parameter: parameter.into(),
            unit: unit.into(),
            series: series.into(),
            points,
            metadata: CurveMetadata {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                ..Default::default()
            },
        }
    }

    pub fn at(&self, x: f64) -> Option<&SerPoint> {
        self.points.iter().find(|p| p.x == x)
    }

    /// Smallest `x` at which the curve first reaches `target`, interpolating
    /// linearly in `log10(SER)` between bracketing points. `None` if no point
    /// gets down to `target`.
    pub fn x_at_ser(&self, target: f64) -> Option<f64> {
        let first = self.points.first()?;
        if first.ser() <= target {
            return Some(first.x);
        }
        self.points.windows(2).find_map(|w| {
            let (a, b) = (&w[0], &w[1]);
            if a.ser() > target && b.ser() <= target {
                if b.ser() == 0.0 {
                    return Some(b.x);
                }
                let (la, lb, lt) = (a.ser().log10(), b.ser().log10(), target.log10());
                Some(a.x + (b.x - a.x) * (la - lt) / (la - lb))
            } else {
                None
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_and_interpolated() {
        let c = SerCurve::new(
            "snr",
            "dB",
            "test",
            vec![SerPoint::new(10.0, 1, 1000), SerPoint::new(0.0, 100, 1000)],
        );
        assert_eq!(c.points[0].x, 0.0);
        // log10 drops from -1 to -3 over 10 dB; 1e-2 sits halfway
        assert!((c.x_at_ser(1e-2).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(c.x_at_ser(0.5), Some(0.0));
        assert_eq!(c.x_at_ser(1e-4), None);
        let p = c.points[1];
        assert!(p.ci_low <= p.ser() && p.ser() <= p.ci_high);
    }
}
