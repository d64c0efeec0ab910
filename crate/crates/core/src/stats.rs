use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Quantile of ascending-sorted data, linear interpolation between closest
/// ranks (position `p * (n - 1)`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(Quartiles {
        q1: quantile_sorted(&sorted, 0.25)?,
        median: quantile_sorted(&sorted, 0.5)?,
        q3: quantile_sorted(&sorted, 0.75)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_of_four() {
        let q = quartiles(&[0.7, 0.4, 0.6, 0.5]).unwrap();
        assert!((q.q1 - 0.475).abs() < 1e-12);
        assert!((q.median - 0.55).abs() < 1e-12);
        assert!((q.q3 - 0.625).abs() < 1e-12);
        assert!((mean(&[0.4, 0.5, 0.6, 0.7]).unwrap() - 0.55).abs() < 1e-12);
    }

    #[test]
    fn single_value() {
        let q = quartiles(&[0.3]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (0.3, 0.3, 0.3));
        assert!(quartiles(&[]).is_none());
    }
}
