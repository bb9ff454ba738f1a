use super::{Matrix, Tape, TensorError, Var};

/// Compares tape gradients of a scalar function against central differences.
///
/// `f` receives a fresh tape and one parameter node per entry of `params`
/// and must return a 1×1 node. Returns the maximum over all coordinates of
/// `|analytic − numeric| / max(1, |analytic|)`.
pub fn finite_diff_check<F>(f: F, params: &[Matrix], h: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    assert!(h > 0.0, "finite difference step must be positive");
    let eval = |values: &[Matrix]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|m| tape.param(m.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape
            .value(out)
            .item()
            .ok_or(TensorError::NotScalar { shape: tape.shape(out) })?;
        if !v.is_finite() {
            return Err(TensorError::NonFinite {
                op: "finite_diff_check",
            });
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|m| tape.param(m.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let analytic = tape.backward(loss)?;

    let mut work: Vec<Matrix> = params.to_vec();
    let mut worst = 0.0f64;
    for (p, grad) in analytic.as_slice().iter().enumerate() {
        for k in 0..params[p].data().len() {
            let base = params[p].data()[k];
            work[p].data_mut()[k] = base + h;
            let plus = eval(&work)?;
            work[p].data_mut()[k] = base - h;
            let minus = eval(&work)?;
            work[p].data_mut()[k] = base;
            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}
