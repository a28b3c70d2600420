// adaptive Dormand-Prince 5(4) via ode_solvers, behind a slice-based interface

use ode_solvers::{DVector, Dopri5, OutputType, System};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
}

struct Rhs<F>(F);

impl<F: Fn(f64, &[f64], &mut [f64])> System<f64, DVector<f64>> for Rhs<F> {
    fn system(&self, t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        (self.0)(t, y.as_slice(), dy.as_mut_slice());
    }
}

/// Integrates y' = f(t, y) from t0 to t1 with rtol = atol = `tol`.
/// `observe(t, y)` sees the initial state and then every accepted step, in order.
pub fn dopri5<F, O>(f: F, t0: f64, t1: f64, y0: &[f64], tol: f64, mut observe: O) -> Result<(Vec<f64>, Stats)>
where
    F: Fn(f64, &[f64], &mut [f64]),
    O: FnMut(f64, &[f64]),
{
    observe(t0, y0);
    if t1 == t0 {
        return Ok((y0.to_vec(), Stats { accepted: 0, rejected: 0 }));
    }
    let span = (t1 - t0).abs();
    let mut solver = Dopri5::from_param(
        Rhs(f),
        t0,
        t1,
        0.0,
        DVector::from_column_slice(y0),
        tol,
        tol,
        0.9,
        0.04,
        0.2,
        10.0,
        span,
        0.0,
        1_000_000,
        1000,
        OutputType::Sparse,
    );
    let st = solver.integrate().map_err(|e| Error::Integration(e.to_string()))?;
    let (ts, ys) = solver.results().get();
    for (t, y) in ts.iter().zip(ys).filter(|(t, _)| **t != t0) {
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::Integration(format!("non-finite state at t = {t}")));
        }
        observe(*t, y.as_slice());
    }
    let last = ys.last().map_or_else(|| y0.to_vec(), |y| y.as_slice().to_vec());
    if ts.last().is_none_or(|t| (t - t1).abs() > 1e-12 * span.max(1.0)) {
        return Err(Error::Integration(format!("stopped short of t = {t1}")));
    }
    Ok((last, Stats { accepted: st.accepted_steps as usize, rejected: st.rejected_steps as usize }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_full_period() {
        let (y, st) = dopri5(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            2.0 * std::f64::consts::PI,
            &[1.0, 0.0],
            1e-10,
            |_, _| {},
        )
        .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-8 && y[1].abs() < 1e-8);
        assert!(st.accepted > 10);
    }

    #[test]
    fn exponential_backwards() {
        let (y, _) = dopri5(|_, y, dy| dy[0] = y[0], 1.0, 0.0, &[1f64.exp()], 1e-11, |_, _| {})
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn blowup_reports_integration_error() {
        let r = dopri5(|_, y, dy| dy[0] = y[0] * y[0], 0.0, 2.0, &[1.0], 1e-10, |_, _| {});
        assert!(matches!(r, Err(Error::Integration(_))));
    }
}
