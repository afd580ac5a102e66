use super::{ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    pub tol: f64,
    /// Entries checked per parameter tensor; larger tensors are strided.
    pub max_entries: usize,
    /// Gradients smaller than this in magnitude are compared absolutely.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { step: 1e-5, tol: 1e-4, max_entries: 64, floor: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Entries that only agreed at a smaller step, i.e. sat within one step of a kink.
    pub retried: usize,
    pub passed: bool,
}

/// Compares the tape gradient of `loss` against central differences for `params`.
///
/// `loss` must be deterministic: any noise it consumes has to be fixed up front.
pub fn grad_check<E>(
    store: &ParamStore,
    params: &[ParamId],
    opts: GradCheckOptions,
    loss: impl Fn(&mut Tape, &ParamStore) -> Result<Var, E>,
) -> Result<GradCheckReport, E> {
    let mut tape = Tape::new();
    let out = loss(&mut tape, store)?;
    let grads = tape.backward(out);
    let all = tape.param_grads(&grads, store);
    let analytic: Vec<Tensor> = params.iter().map(|id| all[id.index()].clone()).collect();
    check_against(store, params, &analytic, opts, |s| {
        let mut tape = Tape::new();
        let out = loss(&mut tape, s)?;
        Ok(tape.value(out).item())
    })
}

/// Checks supplied gradients (one tensor per entry of `params`) against central differences of `value`.
///
/// An entry that disagrees at `opts.step` is retried at a tenth and a hundredth of the
/// step: piecewise-linear activations make the difference quotient wrong whenever a
/// kink lies inside the interval, while a wrong gradient disagrees at every step.
pub fn check_against<E>(
    store: &ParamStore,
    params: &[ParamId],
    analytic: &[Tensor],
    opts: GradCheckOptions,
    value: impl Fn(&ParamStore) -> Result<f64, E>,
) -> Result<GradCheckReport, E> {
    let mut work = store.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, checked: 0, retried: 0, passed: true };
    for (id, grad) in params.iter().zip(analytic) {
        let n = store.value(*id).len();
        let stride = n.div_ceil(opts.max_entries.max(1)).max(1);
        for i in (0..n).step_by(stride) {
            let original = store.value(*id).data()[i];
            let a = grad.data()[i];
            let mut err = f64::INFINITY;
            for (attempt, step) in [opts.step, opts.step / 10.0, opts.step / 100.0].into_iter().enumerate() {
                work.value_mut(*id).data_mut()[i] = original + step;
                let up = value(&work)?;
                work.value_mut(*id).data_mut()[i] = original - step;
                let down = value(&work)?;
                work.value_mut(*id).data_mut()[i] = original;
                let numeric = (up - down) / (2.0 * step);
                let e = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
                err = if e.is_nan() { e } else { err.min(e) };
                if err <= opts.tol {
                    report.retried += usize::from(attempt > 0);
                    break;
                }
            }
            report.checked += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
                report.worst = Some((store.entry(*id).name.clone(), i));
            }
        }
    }
    report.passed = report.max_rel_error <= opts.tol;
    Ok(report)
}
