use super::{NumericsError, Scalar, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference half step.
    pub step: f64,
    /// Floor of the relative-error denominator.
    pub eps: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { step: 1e-4, eps: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, eps)` over all components.
    pub max_rel_error: f64,
    /// `(input index, flat component)` where the maximum occurred.
    pub worst: Option<(usize, usize)>,
    pub components: usize,
}

/// Compares tape gradients of a scalar function against central differences.
///
/// `f` receives a fresh tape with every input bound as a trainable leaf.
pub fn grad_check<T, F>(inputs: &[Tensor<T>], f: F, opts: GradCheckOptions) -> Result<GradCheckReport, NumericsError>
where
    T: Scalar,
    F: for<'a> Fn(&mut Tape<'a, T>, &[Var]) -> Result<Var, NumericsError>,
{
    let eval = |values: &[Tensor<T>]| -> Result<f64, NumericsError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t)).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        if v.len() != 1 {
            return Err(NumericsError::Contract(format!("grad_check needs a scalar output, got {:?}", v.shape())));
        }
        Ok(v.data()[0].as_f64())
    };

    let analytic: Vec<Tensor<T>> = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t)).collect();
        let out = f(&mut tape, &vars)?;
        let mut grads = tape.backward(out)?;
        vars.iter()
            .zip(inputs)
            .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    };

    let mut work: Vec<Tensor<T>> = inputs.to_vec();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, components: 0 };
    for (i, grad) in analytic.iter().enumerate() {
        for j in 0..grad.len() {
            let orig = work[i].data()[j];
            let plus = orig + T::of(opts.step);
            let minus = orig - T::of(opts.step);
            work[i].data_mut()[j] = plus;
            let fp = eval(&work)?;
            work[i].data_mut()[j] = minus;
            let fm = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (fp - fm) / (plus.as_f64() - minus.as_f64());
            let a = grad.data()[j].as_f64();
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.eps);
            report.components += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((i, j));
            }
        }
    }
    Ok(report)
}
