use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Outcome of a finite-difference gradient comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (parameter index, flat entry index) of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub entries: usize,
}

/// Compare analytic gradients of `f` against central differences.
///
/// `f` builds a scalar loss on the given tape from one leaf per parameter.
/// The relative error of an entry is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<T, F>(mut f: F, params: &[Tensor<T>], eps: f64) -> Result<GradCheckReport>
where
    T: Scalar,
    F: for<'t> FnMut(&'t Tape<T>, &[Var<'t, T>]) -> Result<Var<'t, T>>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::config(format!("finite-difference step {eps} outside (0, 1e-2]")));
    }

    let tape = Tape::new();
    let vars: Vec<Var<'_, T>> = params.iter().map(|p| tape.leaf(p.clone(), true)).collect();
    let loss = f(&tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor<T>> = vars
        .iter()
        .zip(params)
        .map(|(v, p)| v.grad().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    for g in &analytic {
        if !g.all_finite() {
            return Err(Error::NumericInstability("analytic gradient".into()));
        }
    }

    let mut work: Vec<Tensor<T>> = params.to_vec();
    let mut eval = |work: &[Tensor<T>]| -> Result<f64> {
        let tape = Tape::inference();
        let vars: Vec<Var<'_, T>> = work.iter().map(|p| tape.leaf(p.clone(), false)).collect();
        let v = f(&tape, &vars)?.value().item().to_f64().unwrap_or(f64::NAN);
        if !v.is_finite() {
            return Err(Error::NumericInstability(format!("loss evaluated to {v}")));
        }
        Ok(v)
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        entries: 0,
    };
    for pi in 0..work.len() {
        for ei in 0..work[pi].len() {
            let orig = work[pi].data()[ei];
            work[pi].data_mut()[ei] = orig + T::of(eps);
            let plus = eval(&work)?;
            work[pi].data_mut()[ei] = orig - T::of(eps);
            let minus = eval(&work)?;
            work[pi].data_mut()[ei] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi].data()[ei].to_f64().unwrap_or(f64::NAN);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.entries += 1;
            if rel > report.max_rel_err || report.entries == 1 {
                report.max_rel_err = rel;
                report.worst = (pi, ei);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let x = Tensor::<f64>::scalar(3.0);
        let r = grad_check(|_t, v| Ok(v[0].mul(&v[0])?.sum()), &[x], 1e-5).unwrap();
        assert!(r.max_rel_err < 1e-8, "{r:?}");
    }

    #[test]
    fn rejects_bad_step() {
        let x = Tensor::<f64>::scalar(3.0);
        assert!(grad_check(|_t, v| Ok(v[0].sum()), &[x], 0.1).is_err());
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let x = Tensor::<f64>::scalar(f64::INFINITY);
        let err = grad_check(|_t, v| Ok(v[0].sum()), &[x], 1e-5).unwrap_err();
        assert!(matches!(err, Error::NumericInstability(_)));
    }
}
