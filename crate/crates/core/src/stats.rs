use serde::{Deserialize, Serialize};

/// Descriptive statistics of classify latencies, in seconds.
///
/// `std` is the sample standard deviation (n - 1 denominator); quartiles
/// interpolate linearly between order statistics at rank `p * (n - 1)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: u64,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub min: Option<f64>,
    pub p25: Option<f64>,
    pub median: Option<f64>,
    pub p75: Option<f64>,
    pub max: Option<f64>,
}

pub fn linear_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl LatencySummary {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let mean = s.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            let ss: f64 = s.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Self {
            count: n as u64,
            mean: Some(mean),
            std,
            min: Some(s[0]),
            p25: Some(linear_quantile(&s, 0.25)),
            median: Some(linear_quantile(&s, 0.5)),
            p75: Some(linear_quantile(&s, 0.75)),
            max: Some(s[n - 1]),
        }
    }

    /// Two-column Metric/Value table, values in seconds per request.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.7}"));
        let rows = [
            ("Count", self.count.to_string()),
            ("Mean", fmt(self.mean)),
            ("Std", fmt(self.std)),
            ("Min", fmt(self.min)),
            ("25%", fmt(self.p25)),
            ("Median", fmt(self.median)),
            ("75%", fmt(self.p75)),
            ("Max", fmt(self.max)),
        ];
        let mut out = format!("{:<8} {:>12}\n", "Metric", "Value");
        for (k, v) in rows {
            out.push_str(&format!("{k:<8} {v:>12}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_has_no_quantiles() {
        let s = LatencySummary::from_samples(&[]);
        assert_eq!(s.count, 0);
        assert!(s.mean.is_none() && s.median.is_none() && s.max.is_none());
    }

    #[test]
    fn one_two_three_ms() {
        let s = LatencySummary::from_samples(&[0.003, 0.001, 0.002]);
        assert!((s.mean.unwrap() - 0.002).abs() < 1e-15);
        assert_eq!(s.median, Some(0.002));
        assert_eq!((s.min, s.max), (Some(0.001), Some(0.003)));
        assert!((s.std.unwrap() - 0.001).abs() < 1e-15);
        assert!(s.to_table().contains("Median      0.0020000"));
    }
}
