use std::fmt::Display;

use super::{Tape, Tensor, Var};

/// Denominator floor for relative errors, so entries whose true gradient is
/// numerically zero are judged on absolute error instead.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct LeafCheck {
    pub leaf: usize,
    pub max_rel_error: f64,
    pub worst_element: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub leaves: Vec<LeafCheck>,
    pub tolerance: f64,
    pub passed: bool,
    /// Set when evaluation failed or produced a non-finite value.
    pub failure: Option<String>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.leaves
            .iter()
            .map(|l| l.max_rel_error)
            .fold(0.0, f64::max)
    }

    fn failed(tolerance: f64, leaves: Vec<LeafCheck>, why: String) -> Self {
        Self {
            leaves,
            tolerance,
            passed: false,
            failure: Some(why),
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs().max(numeric.abs())).max(REL_FLOOR)
}

fn evaluate<E: Display>(
    leaves: &[Tensor],
    build: &impl Fn(&mut Tape<'_>, &[Var]) -> Result<Var, E>,
) -> Result<f64, String> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &vars).map_err(|e| e.to_string())?;
    Ok(tape.value(loss).data()[0])
}

/// Compares tape gradients with fourth-order central finite differences
/// (spacing `step`; around `1e-3` balances truncation against rounding) for
/// every element of every leaf.
pub fn grad_check<E: Display>(
    leaves: &[Tensor],
    build: impl Fn(&mut Tape<'_>, &[Var]) -> Result<Var, E>,
    step: f64,
    tolerance: f64,
) -> GradCheckReport {
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = match build(&mut tape, &vars) {
        Ok(l) => l,
        Err(e) => return GradCheckReport::failed(tolerance, vec![], format!("forward: {e}")),
    };
    let value = tape.value(loss).data()[0];
    if !value.is_finite() {
        return GradCheckReport::failed(tolerance, vec![], format!("loss is {value}"));
    }
    let grads = match tape.backward(loss) {
        Ok(g) => g,
        Err(e) => return GradCheckReport::failed(tolerance, vec![], format!("backward: {e}")),
    };
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();
    drop(tape);

    let mut work = leaves.to_vec();
    let mut checks = Vec::with_capacity(leaves.len());
    for (li, leaf) in leaves.iter().enumerate() {
        let mut worst = LeafCheck {
            leaf: li,
            max_rel_error: 0.0,
            worst_element: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for k in 0..leaf.len() {
            let a = analytic[li].data()[k];
            if !a.is_finite() {
                return GradCheckReport::failed(
                    tolerance,
                    checks,
                    format!("non-finite analytic gradient at leaf {li}, element {k}"),
                );
            }
            let orig = leaf.data()[k];
            let mut probe = |offset: f64| {
                work[li].data_mut()[k] = orig + offset;
                let v = evaluate(&work, &build);
                work[li].data_mut()[k] = orig;
                match v {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(_) => Err(format!("non-finite loss perturbing leaf {li}, element {k}")),
                    Err(e) => Err(e),
                }
            };
            let values = [2.0 * step, step, -step, -2.0 * step].map(&mut probe);
            let [p2, p1, m1, m2] = match values {
                [Ok(a), Ok(b), Ok(c), Ok(d)] => [a, b, c, d],
                _ => {
                    let e = values.into_iter().find_map(Result::err).unwrap_or_default();
                    return GradCheckReport::failed(tolerance, checks, e);
                }
            };
            let numeric = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * step);
            let err = relative_error(a, numeric);
            if err > worst.max_rel_error || k == 0 {
                worst = LeafCheck {
                    leaf: li,
                    max_rel_error: err.max(worst.max_rel_error),
                    worst_element: k,
                    analytic: a,
                    numeric,
                };
            }
        }
        checks.push(worst);
    }
    let passed = checks.iter().all(|c| c.max_rel_error < tolerance);
    GradCheckReport {
        leaves: checks,
        tolerance,
        passed,
        failure: None,
    }
}
