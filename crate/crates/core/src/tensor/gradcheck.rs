use super::{Matrix, Tape, TensorError, Var};

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Compares the tape gradient of a scalar expression against central
/// differences and returns `max |analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(f: F, theta: &Matrix, h: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, TensorError>,
{
    grad_check_many(|t, vars| f(t, vars[0]), std::slice::from_ref(theta), h)
}

/// [`grad_check`] over several parameter matrices at once.
pub fn grad_check_many<F>(f: F, thetas: &[Matrix], h: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |params: &[Matrix]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|m| tape.constant(m.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out)[(0, 0)])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = thetas.iter().map(|m| tape.leaf(m.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut params = thetas.to_vec();
    let mut worst = 0.0f64;
    for (p, &var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(var, thetas[p].shape());
        for k in 0..thetas[p].len() {
            let orig = thetas[p].as_slice()[k];
            params[p].as_mut_slice()[k] = orig + h;
            let plus = eval(&params)?;
            params[p].as_mut_slice()[k] = orig - h;
            let minus = eval(&params)?;
            params[p].as_mut_slice()[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.as_slice()[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}
