use super::Parameters;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max over coordinates of |a - n| / max(|a|, |n|, 1e-6)
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    pub passed: bool,
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares `analytic` against central differences of `f` around `x0`.
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    analytic: &[f64],
    h: f64,
    tol: f64,
) -> GradCheckReport {
    assert_eq!(x0.len(), analytic.len(), "gradient length mismatch");
    let mut x = x0.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: x0.len(),
        passed: true,
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(&x);
        x[i] = orig - h;
        let fm = f(&x);
        x[i] = orig;
        let num = (fp - fm) / (2.0 * h);
        let err = rel_error(analytic[i], num);
        if err > report.max_rel_error || !err.is_finite() {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = num;
        }
    }
    report.passed = report.max_rel_error.is_finite() && report.max_rel_error < tol;
    report
}

/// Gradient check over every scalar of a parameter set.
pub fn grad_check_params<P: Parameters + Clone>(
    params: &P,
    grads: &P,
    mut loss: impl FnMut(&P) -> f64,
    h: f64,
    tol: f64,
) -> GradCheckReport {
    let mut probe = params.clone();
    grad_check(
        |flat| {
            probe.assign_flat(flat);
            loss(&probe)
        },
        &params.flatten(),
        &grads.flatten(),
        h,
        tol,
    )
}
