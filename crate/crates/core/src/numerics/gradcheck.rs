use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_coordinate: usize,
    pub checked: usize,
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares `analytic[i]` with the central difference
/// `(f(p + h e_i) - f(p - h e_i)) / 2h` for each `i` in `coords`.
pub fn gradient_check<F>(
    mut f: F,
    params: &[f64],
    analytic: &[f64],
    coords: &[usize],
    h: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if analytic.len() != params.len() {
        return Err(Error::Shape(format!(
            "{} parameters, {} analytic gradients",
            params.len(),
            analytic.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h must be > 0, got {h}")));
    }
    let mut p = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_coordinate: 0,
        checked: 0,
    };
    for &i in coords {
        if i >= p.len() {
            return Err(Error::InvalidArgument(format!("coordinate {i} out of range")));
        }
        let orig = p[i];
        p[i] = orig + h;
        let plus = f(&p);
        p[i] = orig - h;
        let minus = f(&p);
        p[i] = orig;
        let cd = (plus - minus) / (2.0 * h);
        if !cd.is_finite() || !analytic[i].is_finite() {
            return Err(Error::NonFinite(format!("gradient check at coordinate {i}")));
        }
        let err = relative_error(analytic[i], cd);
        if err > report.max_rel_error || report.checked == 0 {
            report.max_rel_error = err;
            report.worst_coordinate = i;
        }
        report.checked += 1;
    }
    Ok(report)
}
