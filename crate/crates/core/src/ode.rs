//! Adaptive Dormand-Prince 5(4) integrator for small non-stiff systems.

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Options {
    pub rtol: f64,
    /// Absolute tolerance per component. A single entry is broadcast.
    pub atol: Vec<f64>,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            rtol: 1e-9,
            atol: vec![1e-12],
            max_steps: 1_000_000,
            initial_step: None,
        }
    }
}

/// Counters for a finished integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `grid[0]` and returns the state at every
/// grid time (the first entry is `y0`). Steps are clipped so that each grid
/// time is hit exactly.
pub fn integrate<F>(f: F, grid: &[f64], y0: &[f64], opts: &Options) -> Result<(Vec<Vec<f64>>, Stats)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let partial = integrate_partial(f, grid, y0, opts)?;
    match partial.failure {
        Some(e) => Err(e),
        None => Ok((partial.states, partial.stats)),
    }
}

/// Output of [`integrate_partial`]: the grid states reached before a
/// failure, if any.
#[derive(Debug)]
pub struct Partial {
    pub states: Vec<Vec<f64>>,
    pub stats: Stats,
    pub failure: Option<Error>,
}

/// Like [`integrate`], but a failure part-way keeps the states already
/// computed. Invalid arguments are still reported as `Err`.
pub fn integrate_partial<F>(mut f: F, grid: &[f64], y0: &[f64], opts: &Options) -> Result<Partial>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    if grid.is_empty() {
        return Err(Error::invalid("empty time grid"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("time grid must be strictly increasing"));
    }
    if opts.atol.len() != 1 && opts.atol.len() != n {
        return Err(Error::invalid("atol must have one entry or one per component"));
    }

    let mut out = Vec::with_capacity(grid.len());
    out.push(y0.to_vec());
    let mut stats = Stats::default();
    if grid.len() == 1 {
        return Ok(Partial { states: out, stats, failure: None });
    }

    let span = grid[grid.len() - 1] - grid[0];
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    if let Err(e) = f(grid[0], &y, &mut k[0]) {
        return Ok(Partial { states: out, stats, failure: Some(e) });
    }
    stats.evaluations += 1;
    let mut h = opts.initial_step.unwrap_or(1e-3 * span);
    let failure = run(&mut f, grid, &mut y, &mut k, &mut h, &mut out, &mut stats, opts, span).err();
    Ok(Partial { states: out, stats, failure })
}

#[allow(clippy::too_many_arguments)]
fn run<F>(
    f: &mut F,
    grid: &[f64],
    y: &mut Vec<f64>,
    k: &mut Vec<Vec<f64>>,
    h: &mut f64,
    out: &mut Vec<Vec<f64>>,
    stats: &mut Stats,
    opts: &Options,
    span: f64,
) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    let atol = |i: usize| {
        if opts.atol.len() == 1 {
            opts.atol[0]
        } else {
            opts.atol[i]
        }
    };
    let mut t = grid[0];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    for &target in &grid[1..] {
        while t < target {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::NumericalFailure {
                    message: format!("step budget of {} exhausted at t = {t:e}", opts.max_steps),
                    estimate: *h,
                });
            }
            let remaining = target - t;
            let clipped = remaining <= *h * (1.0 + 1e-12);
            let step = if clipped { remaining } else { *h };
            if step <= 1e-14 * t.abs().max(span) && !clipped {
                return Err(Error::NumericalFailure {
                    message: format!("step size underflow at t = {t:e}"),
                    estimate: step,
                });
            }

            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += step * A[s][j] * kj[i];
                    }
                    stage[i] = acc;
                }
                f(t + C[s] * step, &stage, &mut k[s])?;
                stats.evaluations += 1;
            }
            // stage 7 is evaluated at the fifth-order solution itself
            y_new.copy_from_slice(&stage);

            let mut err_sq = 0.0;
            for i in 0..n {
                let e: f64 = (0..7).map(|j| E[j] * k[j][i]).sum::<f64>() * step;
                let scale = atol(i) + opts.rtol * y[i].abs().max(y_new[i].abs());
                err_sq += (e / scale).powi(2);
            }
            let err = (err_sq / n as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::NumericalFailure {
                    message: format!("non-finite state at t = {t:e}"),
                    estimate: err,
                });
            }

            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                t = if clipped { target } else { t + step };
                std::mem::swap(y, &mut y_new);
                let last = k.pop().expect("seven stages");
                k.insert(0, last);
                stats.accepted += 1;
                if !clipped || factor < 1.0 {
                    *h = step * factor;
                }
            } else {
                stats.rejected += 1;
                *h = step * factor;
            }
        }
        out.push(y.clone());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_decay() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let (ys, stats) = integrate(
            |_, y, dy| {
                dy[0] = -0.3 * y[0];
                Ok(())
            },
            &grid,
            &[2.0],
            &Options::default(),
        )
        .unwrap();
        for (t, y) in grid.iter().zip(&ys) {
            assert_relative_eq!(y[0], 2.0 * (-0.3 * t).exp(), max_relative = 1e-8, epsilon = 0.0);
        }
        assert!(stats.accepted > 0);
    }

    #[test]
    fn harmonic_oscillator_keeps_energy() {
        let grid = [0.0, 50.0];
        let (ys, _) = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
                Ok(())
            },
            &grid,
            &[1.0, 0.0],
            &Options { rtol: 1e-11, atol: vec![1e-13], ..Options::default() },
        )
        .unwrap();
        assert_relative_eq!(ys[1][0], 50f64.cos(), epsilon = 1e-8);
        assert_relative_eq!(ys[1][1], -50f64.sin(), epsilon = 1e-8);
    }

    #[test]
    fn rejects_bad_grids() {
        let f = |_: f64, _: &[f64], dy: &mut [f64]| {
            dy[0] = 0.0;
            Ok(())
        };
        assert!(integrate(f, &[0.0, 0.0], &[1.0], &Options::default()).is_err());
        assert!(integrate(f, &[], &[1.0], &Options::default()).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        // y' = y² from y = 1 diverges at t = 1
        let err = integrate(
            |_, y, dy| {
                dy[0] = y[0] * y[0];
                Ok(())
            },
            &[0.0, 2.0],
            &[1.0],
            &Options::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NumericalFailure { .. }));
    }
}
