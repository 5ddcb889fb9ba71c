//! Central finite-difference verification of tape gradients.

use super::tape::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// Default central-difference step.
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Gradients smaller than this are compared absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (tensor index, element index) of the worst element.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares reverse-mode gradients of the scalar built by `f` against central
/// differences, for every element of every tensor in `point` (or an evenly
/// strided subset of at most `max_per_tensor` elements).
pub fn finite_diff_check<F>(
    point: &[Tensor],
    epsilon: f64,
    max_per_tensor: Option<usize>,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |pt: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = pt.iter().map(|t| tape.input(t.clone())).collect::<Result<Vec<_>>>()?;
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).data()[0])
    };

    let mut tape = Tape::new();
    let vars = point.iter().map(|t| tape.input(t.clone())).collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (0, 0), checked: 0 };
    let mut probe: Vec<Tensor> = point.to_vec();
    for (ti, t) in point.iter().enumerate() {
        let analytic = grads.wrt(vars[ti]).cloned().unwrap_or_else(|| Tensor::zeros(t.shape()));
        let step = match max_per_tensor {
            Some(m) if m > 0 && t.len() > m => t.len().div_ceil(m),
            _ => 1,
        };
        for ei in (0..t.len()).step_by(step) {
            let orig = t.data()[ei];
            probe[ti].data_mut()[ei] = orig + epsilon;
            let plus = eval(&probe)?;
            probe[ti].data_mut()[ei] = orig - epsilon;
            let minus = eval(&probe)?;
            probe[ti].data_mut()[ei] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = relative_error(analytic.data()[ei], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (ti, ei);
            }
        }
    }
    Ok(report)
}
