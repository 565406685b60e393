//! Sample statistics over seeds.

use crate::analytics::NeumaierSum;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut acc = NeumaierSum::default();
    xs.iter().for_each(|&x| acc.add(x));
    acc.value() / xs.len() as f64
}

/// Unbiased sample standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let mut acc = NeumaierSum::default();
    xs.iter().for_each(|&x| acc.add((x - m) * (x - m)));
    (acc.value() / (xs.len() - 1) as f64).sqrt()
}

/// Standard error of the mean.
pub fn std_err(xs: &[f64]) -> f64 {
    std_dev(xs) / (xs.len() as f64).sqrt()
}

/// Mean and standard error of `a − b` over paired samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedDiff {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl PairedDiff {
    pub fn new(a: &[f64], b: &[f64]) -> Self {
        assert_eq!(a.len(), b.len(), "paired samples must have equal length");
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        Self {
            mean: mean(&d),
            se: std_err(&d),
            n: d.len(),
        }
    }

    /// Lower end of the 95% interval.
    pub fn lower(&self) -> f64 {
        self.mean - Z95 * self.se
    }

    /// Upper end of the 95% interval.
    pub fn upper(&self) -> f64 {
        self.mean + Z95 * self.se
    }

    /// `a ≤ b` is not rejected at the 95% level.
    pub fn consistent_with_le(&self) -> bool {
        self.lower() <= 0.0
    }

    /// `a < b` is established at the 95% level.
    pub fn significantly_below(&self) -> bool {
        self.upper() < 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_seed_summary() {
        let j = [3.0, 3.2];
        assert_relative_eq!(mean(&j), 3.1, epsilon = 1e-15);
        assert_relative_eq!(std_err(&j), 0.1, epsilon = 1e-14);
    }

    #[test]
    fn single_sample_has_no_error_bar() {
        assert!(std_err(&[1.0]).is_nan());
        assert!(mean(&[]).is_nan());
    }

    #[test]
    fn paired_difference() {
        let d = PairedDiff::new(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5]);
        assert_relative_eq!(d.mean, -0.5);
        assert_eq!(d.se, 0.0);
        assert!(d.significantly_below());
        assert!(d.consistent_with_le());
    }
}
