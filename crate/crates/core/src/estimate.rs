//! Least-squares recovery of rate constants from measured or simulated time
//! series.
//!
//! Four estimators are provided, one per observable:
//!
//! | function            | data used                 | recovers |
//! |---------------------|---------------------------|----------|
//! | [`fit_method_i`]    | `N₃(t)` with an rf shield | `β°`     |
//! | [`fit_method_ii`]   | `N₃(t)`, `V̄(t)`, no shield | `β̃`      |
//! | [`fit_method_iii`]  | `T(t)`, `N₃`, `V̄`          | `β̃`      |
//! | [`fit_beta2`]       | `N₂(t)`, `N₃(t)`, `V̄`      | `β₂`     |
//!
//! All of them run on the same damped Gauss-Newton engine,
//! [`nonlinear_least_squares`]. Parameters are reported in SI units.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::channels::{temperature_step, Species};
use crate::dynamics::{mean_volume, thermalized_m2_volume, Trajectory};
use crate::units::Unit;
use crate::{Error, Result};

/// Data columns of a [`TimeSeries`], in their canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Column {
    N3,
    N2,
    N1,
    Temperature,
    SigmaX,
    SigmaY,
    SigmaZ,
    Volume,
}

impl Column {
    pub const ALL: [Column; 8] = [
        Column::N3,
        Column::N2,
        Column::N1,
        Column::Temperature,
        Column::SigmaX,
        Column::SigmaY,
        Column::SigmaZ,
        Column::Volume,
    ];

    /// CSV header name.
    pub fn header(self) -> &'static str {
        match self {
            Column::N3 => "N3",
            Column::N2 => "N2",
            Column::N1 => "N1",
            Column::Temperature => "T_uK",
            Column::SigmaX => "sigma_x_m",
            Column::SigmaY => "sigma_y_m",
            Column::SigmaZ => "sigma_z_m",
            Column::Volume => "V_cm3",
        }
    }

    /// Unit the column is written in; `None` for plain atom numbers.
    pub fn unit(self) -> Option<Unit> {
        match self {
            Column::N3 | Column::N2 | Column::N1 => None,
            Column::Temperature => Some(Unit::MicroKelvin),
            Column::SigmaX | Column::SigmaY | Column::SigmaZ => Some(Unit::Metre),
            Column::Volume => Some(Unit::CubicCentimetre),
        }
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.header())
    }
}

impl FromStr for Column {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Column::ALL
            .into_iter()
            .find(|c| c.header() == s)
            .ok_or_else(|| Error::invalid(format!("unknown column `{s}`")))
    }
}

/// Time-ordered samples of one or more observables, all in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    columns: BTreeMap<Column, Vec<f64>>,
    noise_sigma: Option<Vec<f64>>,
}

impl TimeSeries {
    /// Rows are sorted by time. Repeated times are rejected.
    pub fn new(times: Vec<f64>, columns: Vec<(Column, Vec<f64>)>) -> Result<Self> {
        let n = times.len();
        if columns.is_empty() {
            return Err(Error::invalid("a time series needs at least one data column"));
        }
        let mut map = BTreeMap::new();
        for (col, values) in columns {
            if values.len() != n {
                return Err(Error::invalid(format!(
                    "column {col} has {} values for {n} times",
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("column {col} contains a non-finite value")));
            }
            if map.insert(col, values).is_some() {
                return Err(Error::invalid(format!("column {col} given twice")));
            }
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("non-finite time"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        if let Some(w) = order.windows(2).find(|w| times[w[0]] == times[w[1]]) {
            return Err(Error::invalid(format!("duplicate time {}", times[w[0]])));
        }
        let permute = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(TimeSeries {
            times: permute(&times),
            columns: map.into_iter().map(|(c, v)| (c, permute(&v))).collect(),
            noise_sigma: None,
        })
    }

    /// Per-point standard deviations of the fitted observable.
    pub fn with_noise_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != self.len() || sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("noise sigmas must be positive, one per time"));
        }
        self.noise_sigma = Some(sigma);
        Ok(self)
    }

    /// All observables of a simulated trajectory.
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let pick = |f: &dyn Fn(&crate::dynamics::TrajectoryPoint) -> f64| traj.points.iter().map(f).collect();
        TimeSeries::new(
            traj.times(),
            vec![
                (Column::N3, pick(&|p| p.state.n3)),
                (Column::N2, pick(&|p| p.state.n2)),
                (Column::N1, pick(&|p| p.state.n1)),
                (Column::Temperature, pick(&|p| p.state.temperature)),
                (Column::SigmaX, pick(&|p| p.widths[0])),
                (Column::SigmaY, pick(&|p| p.widths[1])),
                (Column::SigmaZ, pick(&|p| p.widths[2])),
                (Column::Volume, pick(&|p| p.volume)),
            ],
        )
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn column(&self, col: Column) -> Option<&[f64]> {
        self.columns.get(&col).map(Vec::as_slice)
    }

    pub fn columns(&self) -> impl Iterator<Item = (Column, &[f64])> {
        self.columns.iter().map(|(c, v)| (*c, v.as_slice()))
    }

    pub fn noise_sigma(&self) -> Option<&[f64]> {
        self.noise_sigma.as_deref()
    }

    fn require(&self, col: Column, method: &str) -> Result<&[f64]> {
        self.column(col)
            .ok_or_else(|| Error::InsufficientData(format!("{method} needs a {col} column")))
    }

    /// Mean volume per row: the `V_cm3` column if present, otherwise from
    /// the three widths.
    pub fn volumes(&self) -> Option<Vec<f64>> {
        if let Some(v) = self.column(Column::Volume) {
            return Some(v.to_vec());
        }
        let (x, y, z) = (
            self.column(Column::SigmaX)?,
            self.column(Column::SigmaY)?,
            self.column(Column::SigmaZ)?,
        );
        (0..self.len())
            .map(|i| mean_volume([x[i], y[i], z[i]]).ok())
            .collect()
    }

    fn select(&self, keep: impl Fn(usize) -> bool) -> TimeSeries {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        let take = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        TimeSeries {
            times: take(&self.times),
            columns: self.columns.iter().map(|(c, v)| (*c, take(v))).collect(),
            noise_sigma: self.noise_sigma.as_deref().map(take),
        }
    }

    /// Rows with `start <= t <= end`.
    pub fn window(&self, start: f64, end: f64) -> TimeSeries {
        self.select(|i| self.times[i] >= start && self.times[i] <= end)
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> TimeSeries {
        self.select(|i| i < n)
    }
}

/// Mean volume as a function of time, in m³.
#[derive(Debug, Clone, PartialEq)]
pub enum VolumeModel {
    Constant(f64),
    /// `V₀ (1 + c (t − t₀))`.
    Linear { t0: f64, v0: f64, rate: f64 },
    /// Piecewise linear through the given points, flat outside them.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl VolumeModel {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            VolumeModel::Constant(v) => *v,
            VolumeModel::Linear { t0, v0, rate } => v0 * (1.0 + rate * (t - t0)),
            VolumeModel::Tabulated { times, values } => {
                let k = times.partition_point(|&x| x <= t);
                if k == 0 {
                    values[0]
                } else if k == times.len() {
                    values[k - 1]
                } else {
                    let f = (t - times[k - 1]) / (times[k] - times[k - 1]);
                    values[k - 1] + f * (values[k] - values[k - 1])
                }
            }
        }
    }

    /// Tabulated volume of a series, or an error if it has none.
    pub fn from_series(ts: &TimeSeries) -> Result<Self> {
        let values = ts
            .volumes()
            .ok_or_else(|| Error::InsufficientData("series has no volume or width columns".into()))?;
        Ok(VolumeModel::Tabulated {
            times: ts.times().to_vec(),
            values,
        })
    }

    fn breakpoints(&self) -> &[f64] {
        match self {
            VolumeModel::Tabulated { times, .. } => times,
            _ => &[],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            VolumeModel::Constant(v) => *v > 0.0 && v.is_finite(),
            VolumeModel::Linear { v0, .. } => *v0 > 0.0 && v0.is_finite(),
            VolumeModel::Tabulated { times, values } => {
                !times.is_empty()
                    && times.len() == values.len()
                    && values.iter().all(|v| *v > 0.0 && v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("volume model must be positive"))
        }
    }
}

/// One fitted parameter, in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct FitParam {
    pub name: &'static str,
    pub value: f64,
    pub uncertainty: f64,
    /// Unit the value is conventionally quoted in.
    pub unit: Option<Unit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model_tag: &'static str,
    pub params: Vec<FitParam>,
    pub covariance: DMatrix<f64>,
    /// `√(Σ rᵢ²)` of the weighted residuals.
    pub residual_norm: f64,
    pub points_used: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Warnings a caller should surface.
    pub flags: Vec<String>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.param(name).map(|p| p.value)
    }

    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        self.param(name).map(|p| p.uncertainty)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative cost reduction and relative step size below which the
    /// iteration stops.
    pub tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            tolerance: 1e-13,
        }
    }
}

/// Shape of a least-squares problem handed to [`nonlinear_least_squares`].
pub struct Problem<'a> {
    pub tag: &'static str,
    pub names: &'a [&'static str],
    pub units: &'a [Option<Unit>],
    /// Starting point.
    pub init: &'a [f64],
    /// Typical magnitude of each parameter. The engine works on `p / scale`.
    pub scale: &'a [f64],
    pub data: &'a [f64],
    pub sigma: Option<&'a [f64]>,
}

/// Levenberg-Marquardt minimization of `Σ ((yᵢ − mᵢ(p)) / σᵢ)²`.
///
/// `model` maps a parameter vector to the predicted value of every data
/// point. The Jacobian is taken by central differences. The covariance is
/// `s² (JᵀWJ)⁻¹` with `s²` the residual variance per degree of freedom.
pub fn nonlinear_least_squares<F>(mut model: F, problem: &Problem<'_>, opts: &LmOptions) -> Result<FitResult>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let np = problem.init.len();
    let n = problem.data.len();
    if problem.names.len() != np || problem.units.len() != np || problem.scale.len() != np {
        return Err(Error::invalid("parameter names, units and scales must match init"));
    }
    if n < np {
        return Err(Error::InsufficientData(format!(
            "{n} points for {np} parameters"
        )));
    }
    if problem.init.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial parameters must be finite"));
    }
    if problem.scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::invalid("parameter scales must be positive"));
    }
    if let Some(s) = problem.sigma {
        if s.len() != n || s.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("sigmas must be positive, one per point"));
        }
    }
    let weight = |i: usize| problem.sigma.map_or(1.0, |s| 1.0 / s[i]);
    let to_p = |q: &DVector<f64>| -> Vec<f64> { q.iter().zip(problem.scale).map(|(q, s)| q * s).collect() };

    let mut residuals = |q: &DVector<f64>| -> Result<DVector<f64>> {
        let m = model(&to_p(q))?;
        if m.len() != n {
            return Err(Error::invalid("model returned the wrong number of points"));
        }
        let r = DVector::from_fn(n, |i, _| (problem.data[i] - m[i]) * weight(i));
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                message: "model produced a non-finite value".into(),
                estimate: f64::NAN,
            });
        }
        Ok(r)
    };
    // Jacobian of the residuals with respect to the scaled parameters.
    let jacobian = |q: &DVector<f64>, residuals: &mut dyn FnMut(&DVector<f64>) -> Result<DVector<f64>>| {
        let mut j = DMatrix::zeros(n, np);
        for k in 0..np {
            let h = 6e-6 * q[k].abs().max(1.0);
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            let d = (residuals(&qp)? - residuals(&qm)?) / (2.0 * h);
            j.set_column(k, &d);
        }
        Ok::<_, Error>(j)
    };

    let mut q = DVector::from_fn(np, |k, _| problem.init[k] / problem.scale[k]);
    let mut r = residuals(&q)?;
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = cost == 0.0;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let j = jacobian(&q, &mut residuals)?;
        let a = j.transpose() * &j;
        let g = -(j.transpose() * &r);
        let diag_floor = 1e-12 * a.diagonal().max();
        loop {
            let mut damped = a.clone();
            for k in 0..np {
                damped[(k, k)] += lambda * a[(k, k)].max(diag_floor);
            }
            let step = match damped.cholesky() {
                Some(c) => c.solve(&g),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        return Err(Error::DegenerateFit("normal matrix is singular".into()));
                    }
                    continue;
                }
            };
            let q_new = &q + &step;
            let r_new = residuals(&q_new)?;
            let cost_new = r_new.norm_squared();
            if cost_new < cost {
                let reduction = (cost - cost_new) / cost;
                let small_step = step.amax() <= opts.tolerance.sqrt() * (q.amax() + opts.tolerance.sqrt());
                q = q_new;
                r = r_new;
                cost = cost_new;
                lambda = (lambda / 10.0).max(1e-12);
                converged = cost == 0.0 || reduction <= opts.tolerance || small_step;
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                // no direction lowers the cost any further
                converged = true;
                break;
            }
        }
    }

    let j = jacobian(&q, &mut residuals)?;
    let a = j.transpose() * &j;
    let inv = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::DegenerateFit("normal matrix is singular at the solution".into()))?
        .inverse();
    let dof = (n - np).max(1) as f64;
    let s2 = cost / dof;
    let scale = DMatrix::from_diagonal(&DVector::from_column_slice(problem.scale));
    let covariance = &scale * (inv * s2) * &scale;
    let p = to_p(&q);
    let params = (0..np)
        .map(|k| FitParam {
            name: problem.names[k],
            value: p[k],
            uncertainty: covariance[(k, k)].max(0.0).sqrt(),
            unit: problem.units[k],
        })
        .collect();
    let mut flags = Vec::new();
    if !converged {
        flags.push(format!("no convergence after {iterations} iterations; best point returned"));
    }
    Ok(FitResult {
        model_tag: problem.tag,
        params,
        covariance,
        residual_norm: cost.sqrt(),
        points_used: n,
        iterations,
        converged,
        flags,
    })
}

// 5-point Gauss-Legendre on [-1, 1]
const GL_X: [f64; 5] = [
    0.0,
    0.538_469_310_105_683_1,
    -0.538_469_310_105_683_1,
    0.906_179_845_938_664,
    -0.906_179_845_938_664,
];
const GL_W: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// `∫_{t₀}^{tₖ} e^{−γ(s−t₀)} / V̄(s) ds` at every sample time.
fn decay_integrals(times: &[f64], gamma: f64, volume: &VolumeModel) -> Vec<f64> {
    let t0 = times[0];
    let f = |s: f64| (-gamma * (s - t0)).exp() / volume.at(s);
    let mut out = Vec::with_capacity(times.len());
    out.push(0.0);
    let mut acc = 0.0;
    for w in times.windows(2) {
        let mut cuts = vec![w[0]];
        cuts.extend(volume.breakpoints().iter().copied().filter(|&b| b > w[0] && b < w[1]));
        cuts.push(w[1]);
        for c in cuts.windows(2) {
            let (mid, half) = (0.5 * (c[0] + c[1]), 0.5 * (c[1] - c[0]));
            acc += half * GL_X.iter().zip(GL_W).map(|(x, wt)| wt * f(mid + half * x)).sum::<f64>();
        }
        out.push(acc);
    }
    out
}

fn check_rate(gamma: f64) -> Result<()> {
    if gamma >= 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "background rate",
            value: gamma,
            domain: ">= 0 1/s",
        })
    }
}

/// Fits `N(t) = e^{−γτ} / (1/N₀ + β I(τ))`, the solution of
/// `dN/dt = −γN − β N²/V̄(t)`.
fn fit_two_body(
    ts: &TimeSeries,
    gamma: f64,
    volume: &VolumeModel,
    tag: &'static str,
    beta_name: &'static str,
) -> Result<FitResult> {
    check_rate(gamma)?;
    volume.validate()?;
    let n3 = ts.require(Column::N3, tag)?;
    if ts.len() < 3 {
        return Err(Error::InsufficientData(format!("{tag} needs at least 3 points, got {}", ts.len())));
    }
    let times = ts.times();
    let t0 = times[0];
    let span = times[times.len() - 1] - t0;
    let integrals = decay_integrals(times, gamma, volume);
    let v0 = volume.at(t0);

    let n0 = n3[0];
    if !(n0 > 0.0) {
        return Err(Error::InsufficientData("first N3 value must be positive".into()));
    }
    let slope = (n3[1] - n3[0]) / (times[1] - t0);
    let beta_init = ((-slope - gamma * n0) * v0 / (n0 * n0)).max(0.0);
    let beta_scale = v0 / (n0 * span);

    let model = |p: &[f64]| -> Result<Vec<f64>> {
        Ok(times
            .iter()
            .zip(&integrals)
            .map(|(t, i)| (-gamma * (t - t0)).exp() / (1.0 / p[0] + p[1] * i))
            .collect())
    };
    nonlinear_least_squares(
        model,
        &Problem {
            tag,
            names: &["N0", beta_name],
            units: &[None, Some(Unit::CubicCentimetrePerSecond)],
            init: &[n0, beta_init],
            scale: &[n0, beta_scale],
            data: n3,
            sigma: ts.noise_sigma(),
        },
        &LmOptions::default(),
    )
}

fn apply_window(ts: &TimeSeries, window: Option<(f64, f64)>) -> TimeSeries {
    match window {
        Some((a, b)) => ts.window(a, b),
        None => ts.clone(),
    }
}

/// Method (i): decay of the stretched state with an rf shield. `γ_bg` is
/// fixed, `N₀` and `β°` are fitted.
pub fn fit_method_i(
    ts: &TimeSeries,
    background_rate: f64,
    volume: &VolumeModel,
    window: Option<(f64, f64)>,
) -> Result<FitResult> {
    fit_two_body(&apply_window(ts, window), background_rate, volume, "method_i", "beta_event")
}

/// Rows before the `m_S = 2` population first reaches 25% of the total.
pub fn population_window(ts: &TimeSeries) -> Option<TimeSeries> {
    let n2 = ts.column(Column::N2)?;
    let n3 = ts.column(Column::N3)?;
    let n1 = ts.column(Column::N1);
    let end = (0..ts.len())
        .find(|&i| {
            let total = n3[i] + n2[i] + n1.map_or(0.0, |v| v[i]);
            n2[i] >= 0.25 * total
        })
        .unwrap_or(ts.len());
    Some(ts.head(end))
}

/// `V̄(t) ≈ V̄₀ (1 + c t)` by ordinary least squares.
pub fn linear_volume_fit(times: &[f64], volumes: &[f64]) -> Result<VolumeModel> {
    if times.len() < 2 {
        return Err(Error::InsufficientData("need two volumes for a linear fit".into()));
    }
    let t0 = times[0];
    let n = times.len() as f64;
    let mt = times.iter().map(|t| t - t0).sum::<f64>() / n;
    let mv = volumes.iter().sum::<f64>() / n;
    let sxx: f64 = times.iter().map(|t| (t - t0 - mt).powi(2)).sum();
    let sxy: f64 = times.iter().zip(volumes).map(|(t, v)| (t - t0 - mt) * (v - mv)).sum();
    let slope = sxy / sxx;
    let v0 = mv - slope * mt;
    Ok(VolumeModel::Linear {
        t0,
        v0,
        rate: slope / v0,
    })
}

/// Method (ii): stretched-state decay without a shield, with the volume
/// growing linearly. Uses the rows before `N₂` reaches 25% of the atoms when
/// an `N2` column exists, otherwise `window` (or everything).
pub fn fit_method_ii(ts: &TimeSeries, background_rate: f64, window: Option<(f64, f64)>) -> Result<FitResult> {
    let data = match (population_window(ts), window) {
        (Some(w), None) => w,
        (Some(w), Some((a, b))) => w.window(a, b),
        (None, _) => apply_window(ts, window),
    };
    if data.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "only {} points left in the fit window",
            data.len()
        )));
    }
    let volumes = data
        .volumes()
        .ok_or_else(|| Error::InsufficientData("method ii needs a volume or width columns".into()))?;
    let volume = linear_volume_fit(data.times(), &volumes)?;
    fit_two_body(&data, background_rate, &volume, "method_ii", "beta_loss")
}

/// Largest relative drop of the stretched-state density `N₃/V̄` inside the
/// default method (iii) window. The slope bias is about half of it.
pub const HEATING_DENSITY_DROP: f64 = 0.05;

/// Rows while `N₃/V̄` stays within [`HEATING_DENSITY_DROP`] of its first
/// value, but at least three.
fn early_window(ts: &TimeSeries) -> Option<TimeSeries> {
    let n3 = ts.column(Column::N3)?;
    let v = ts.volumes()?;
    let n0 = n3[0] / v[0];
    let end = (0..ts.len())
        .position(|i| n3[i] / v[i] < (1.0 - HEATING_DENSITY_DROP) * n0)
        .unwrap_or(ts.len());
    Some(ts.head(end.max(3)))
}

/// Method (iii): linear fit `T ≈ T₀ + β̃ n₀ ΔT t` to the heating of an
/// unshielded cloud, with `n₀ = N₃/V̄` at the first point. Assumes the
/// cloud stays in thermal equilibrium. Without a `window` only the early
/// rows picked by [`HEATING_DENSITY_DROP`] are used.
pub fn fit_method_iii(
    ts: &TimeSeries,
    species: &Species,
    field: f64,
    window: Option<(f64, f64)>,
) -> Result<FitResult> {
    let data = match window {
        Some(_) => apply_window(ts, window),
        None => early_window(ts).unwrap_or_else(|| ts.clone()),
    };
    if data.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "only {} points left in the fit window",
            data.len()
        )));
    }
    let temps = data.require(Column::Temperature, "method_iii")?;
    let n3 = data.require(Column::N3, "method_iii")?;
    let volumes = data
        .volumes()
        .ok_or_else(|| Error::InsufficientData("method iii needs a volume or width columns".into()))?;
    let step = temperature_step(species, field)?;
    if step == 0.0 {
        return Err(Error::Domain {
            what: "magnetic field",
            value: field,
            domain: "> 0 T (no heating without Zeeman energy)",
        });
    }
    let density = n3[0] / volumes[0];
    let gain = density * step;

    let times = data.times();
    let t0 = times[0];
    let span = times[times.len() - 1] - t0;
    let slope_init = (temps[temps.len() - 1] - temps[0]) / span;
    let slope_scale = if slope_init != 0.0 { slope_init.abs() } else { temps[0] / span };
    let line = nonlinear_least_squares(
        |p: &[f64]| Ok(times.iter().map(|t| p[0] + p[1] * (t - t0)).collect()),
        &Problem {
            tag: "method_iii",
            names: &["T0", "heating_rate"],
            units: &[Some(Unit::MicroKelvin), None],
            init: &[temps[0], slope_init],
            scale: &[temps[0].abs().max(f64::MIN_POSITIVE), slope_scale],
            data: temps,
            sigma: data.noise_sigma(),
        },
        &LmOptions::default(),
    )?;

    // [T0, s] → [β̃, T0] with β̃ = s / (n₀ ΔT)
    let jac = DMatrix::from_row_slice(2, 2, &[0.0, 1.0 / gain, 1.0, 0.0]);
    let covariance = &jac * &line.covariance * jac.transpose();
    let beta = line.params[1].value / gain;
    let mut flags = line.flags.clone();
    if beta <= 0.0 {
        flags.push("non-positive heating slope".into());
    }
    Ok(FitResult {
        model_tag: "method_iii",
        params: vec![
            FitParam {
                name: "beta_loss",
                value: beta,
                uncertainty: covariance[(0, 0)].sqrt(),
                unit: Some(Unit::CubicCentimetrePerSecond),
            },
            FitParam {
                name: "T0",
                value: line.params[0].value,
                uncertainty: covariance[(1, 1)].sqrt(),
                unit: Some(Unit::MicroKelvin),
            },
        ],
        covariance,
        flags,
        ..line
    })
}

/// Largest first-order loss correction, relative to the uncorrected `N₂`,
/// kept inside the `β₂` fit window.
pub const BETA2_SERIES_LIMIT: f64 = 0.05;

fn cumulative_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; times.len()];
    for i in 1..times.len() {
        out[i] = out[i - 1] + 0.5 * (values[i] + values[i - 1]) * (times[i] - times[i - 1]);
    }
    out
}

/// `β₂` from the loading of `m_S = 2` at constant volume. To first order in
/// `β₂` the solution of `dN₂/dt = F(t) − β₂ N₂²/V̄₂` is
///
/// ```text
/// N₂(t) ≈ a + D(t) − (β₂/V̄₂) ∫ (a + D)² ds,     D(t) = N₃(t₀) − N₃(t)
/// ```
///
/// with `V̄₂ = (3/2)^{3/2} V̄` and `D` the measured feeding. Background loss is
/// neglected. The window starts as for method (ii) and is then shortened
/// until the first-order term stays below [`BETA2_SERIES_LIMIT`] of `a + D`.
pub fn fit_beta2(ts: &TimeSeries, volume: Option<f64>, window: Option<(f64, f64)>) -> Result<FitResult> {
    let mut data = match (population_window(ts), window) {
        (Some(w), None) => w,
        (Some(w), Some((a, b))) => w.window(a, b),
        (None, _) => apply_window(ts, window),
    };
    let v = match volume {
        Some(v) if v > 0.0 => v,
        Some(v) => return Err(Error::invalid(format!("volume must be positive, got {v}"))),
        None => data
            .volumes()
            .and_then(|v| v.first().copied())
            .ok_or_else(|| Error::InsufficientData("beta2 fit needs a volume".into()))?,
    };
    let v2 = thermalized_m2_volume(v);
    loop {
        if data.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "only {} points left in the beta2 window",
                data.len()
            )));
        }
        let n3 = data.require(Column::N3, "beta2")?;
        let n2 = data.require(Column::N2, "beta2")?;
        let times = data.times();
        let t0 = times[0];
        let tau: Vec<f64> = times.iter().map(|t| t - t0).collect();
        let feed: Vec<f64> = n3.iter().map(|n| n3[0] - n).collect();
        let i1 = cumulative_trapezoid(times, &feed);
        let sq: Vec<f64> = feed.iter().map(|d| d * d).collect();
        let i2 = cumulative_trapezoid(times, &sq);
        let loss = |a: f64, k: f64, i: usize| k / v2 * (a * a * tau[i] + 2.0 * a * i1[i] + i2[i]);

        let scale_n = n3[0].abs().max(n2.iter().cloned().fold(0.0, f64::max)).max(1.0);
        let span = tau[tau.len() - 1];
        let fed = feed[feed.len() - 1].abs().max(1.0);
        let fit = nonlinear_least_squares(
            |p: &[f64]| Ok((0..tau.len()).map(|i| p[0] + feed[i] - loss(p[0], p[1], i)).collect()),
            &Problem {
                tag: "beta2",
                names: &["N2_0", "beta2"],
                units: &[None, Some(Unit::CubicCentimetrePerSecond)],
                init: &[n2[0], 0.0],
                scale: &[scale_n, v2 / (fed * span)],
                data: n2,
                sigma: data.noise_sigma(),
            },
            &LmOptions::default(),
        )?;
        let (a, k) = (fit.params[0].value, fit.params[1].value);
        let keep = (0..tau.len())
            .take_while(|&i| {
                let base = (a + feed[i]).abs();
                base == 0.0 || loss(a, k, i).abs() <= BETA2_SERIES_LIMIT * base
            })
            .count();
        if keep >= data.len() || keep < 3 {
            let mut fit = fit;
            if keep < 3 {
                fit.flags.push("first-order series not valid anywhere in the window".into());
            }
            return Ok(fit);
        }
        data = data.head(keep);
    }
}
