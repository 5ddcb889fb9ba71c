//! Agreement and classification metrics, plus the report tables.

mod report;

pub use report::{Report, ReportRow};

use crate::affect::Concept;
use crate::error::{Error, Result};

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Validation(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Validation(format!("need at least 2 paired values, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Validation("series contain non-finite values".into()));
    }
    Ok(())
}

fn moments(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let vx = x.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / n;
    let vy = y.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / n;
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    (mx, my, vx, vy, cov)
}

/// Concordance correlation coefficient with population moments. Two constant
/// series score 1 if equal and 0 otherwise.
pub fn ccc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (mx, my, vx, vy, cov) = moments(x, y);
    let den = vx + vy + (mx - my) * (mx - my);
    if den == 0.0 {
        return Ok(1.0);
    }
    if vx == 0.0 && vy == 0.0 {
        return Ok(0.0);
    }
    Ok((2.0 * cov / den).clamp(-1.0, 1.0))
}

/// Pearson correlation; 0 when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (_, _, vx, vy, cov) = moments(x, y);
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

pub fn accuracy(predicted: &[Concept], reference: &[Concept]) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(Error::Validation(format!(
            "label lengths differ: {} vs {}",
            predicted.len(),
            reference.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Validation("accuracy of an empty label set".into()));
    }
    let hits = predicted.iter().zip(reference).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Mean and sample (n - 1) standard deviation; std is 0 for a single run.
pub fn mean_over_runs(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Validation("no runs to aggregate".into()));
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((m, 0.0));
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    Ok((m, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_conventions() {
        assert_eq!(ccc(&[2.0, 2.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(ccc(&[2.0, 2.0], &[3.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ccc(&[1.0], &[1.0]).is_err());
        assert!(ccc(&[1.0, 2.0], &[1.0]).is_err());
        assert!(ccc(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
        assert!(accuracy(&[], &[]).is_err());
        assert!(mean_over_runs(&[]).is_err());
    }
}
