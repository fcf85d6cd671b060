//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `cargo test -p dipolar-acceptance -- 4 7` runs only criteria 4 and 7.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dipolar::born::{coupling_prefactor, cross_sections, exchange_ratio_h, CollisionKinematics};
use dipolar::channels::Species;
use dipolar::dynamics::{
    analytic_two_body_decay, apply_relative_noise, cloud_volume, evolve, initial_heating_rate, uniform_grid,
    CloudState, EvolutionMode, RateInputs, Scenario, TrapConfig,
};
use dipolar::estimate::{
    fit_beta2, fit_method_i, fit_method_ii, fit_method_iii, Column, TimeSeries, VolumeModel,
};
use dipolar::io::{read_timeseries_csv, write_timeseries_csv};
use dipolar::oracle::monte_carlo_thermal_average;
use dipolar::thermal::{beta_event_rate, beta_loss_rate, thermal_average, ChannelWeights, ThermalConditions};
use dipolar::units::{Unit, CODATA_2018};

type Check = fn() -> Verdict;

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Verdict {
            passed,
            detail: detail.into(),
        }
    }
}

const CRITERIA: [(u32, &str, Check); 13] = [
    (1, "exchange function h(x)", exchange_function),
    (2, "coupling identity", coupling_identity),
    (3, "channel ratio at zero field", channel_ratio),
    (4, "event rate at high field", high_field_rate),
    (5, "loss rate at low field", low_field_rate),
    (6, "square-root field asymptote", sqrt_field_asymptote),
    (7, "quadrature vs Monte-Carlo oracle", quadrature_oracle),
    (8, "integrator vs closed form, conservation", dynamics_oracle),
    (9, "initial heating rates", heating_scenarios),
    (10, "isotope insensitivity", isotope_insensitivity),
    (11, "estimator round trips and calibration", estimator_round_trips),
    (12, "end-to-end redistribution", redistribution),
    (13, "command-line contract", cli_contract),
];

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (n, name, check) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::new(false, format!("panicked: {msg}"))
        });
        if !verdict.passed {
            failures += 1;
        }
        println!(
            "{} criterion {n:>2} {name}: {} [{:.2} s]",
            if verdict.passed { "PASS" } else { "FAIL" },
            verdict.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criterion(s) failed");
        ExitCode::FAILURE
    }
}

fn gauss(b: f64) -> f64 {
    Unit::Gauss.to_si(b)
}

fn micro_kelvin(t: f64) -> f64 {
    Unit::MicroKelvin.to_si(t)
}

fn cm3s(beta: f64) -> f64 {
    Unit::CubicCentimetrePerSecond.to_si(beta)
}

fn in_cm3s(beta: f64) -> f64 {
    Unit::CubicCentimetrePerSecond.from_si(beta).value
}

fn rel_err(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn within_time(start: Instant, limit: Duration) -> (bool, String) {
    let t = start.elapsed();
    (t < limit, format!("{:.2} s of {} s", t.as_secs_f64(), limit.as_secs()))
}

fn exchange_function() -> Verdict {
    let start = Instant::now();
    let at_one = exchange_ratio_h(1.0).unwrap();
    let xs: Vec<f64> = (0..10_000).map(|i| 1.0 + 99.0 * f64::from(i) / 9_999.0).collect();
    let hs: Vec<f64> = xs.iter().map(|&x| exchange_ratio_h(x).unwrap()).collect();
    let monotone = hs.windows(2).all(|w| w[1] >= w[0]);
    let asymptote = xs
        .iter()
        .chain(&[200.0, 1e3, 1e5, 1e8])
        .filter(|&&x| x >= 50.0)
        .map(|&x| (exchange_ratio_h(x).unwrap() - (1.0 - 4.0 / (x * x))).abs())
        .fold(0.0, f64::max);
    let (fast, time) = within_time(start, Duration::from_secs(1));
    Verdict::new(
        at_one == -0.5 && monotone && asymptote <= 1e-3 && fast,
        format!("h(1) = {at_one}, monotone = {monotone}, max |h - (1 - 4/x^2)| = {asymptote:.2e} for x >= 50, {time}"),
    )
}

fn coupling_identity() -> Verdict {
    let c = CODATA_2018;
    let mut worst = 0.0_f64;
    for sp in [Species::cr52(), Species::cr50(), Species::he4_metastable()] {
        let shortcut = (sp.mass() / c.electron_mass * c.classical_electron_radius).powi(2);
        worst = worst.max(rel_err(coupling_prefactor(&sp), shortcut));
    }
    Verdict::new(worst <= 1e-6, format!("max relative deviation {worst:.2e} over 52Cr, 50Cr, 4He*"))
}

fn channel_ratio() -> Verdict {
    let cr = Species::cr52();
    let mut worst = 0.0_f64;
    for energy_uk in [1.0, 50.0, 275.0, 5000.0] {
        let energy = CODATA_2018.boltzmann * micro_kelvin(energy_uk);
        let kin = CollisionKinematics::from_energy(&cr, energy).unwrap();
        let xs = cross_sections(&cr, &kin, 0.0).unwrap();
        worst = worst.max(rel_err(xs.sigma1 / xs.sigma2, 3.0));
    }
    Verdict::new(worst <= 1e-12, format!("max |sigma1/sigma2 / 3 - 1| = {worst:.2e}"))
}

fn high_field_rate() -> Verdict {
    let start = Instant::now();
    let cr = Species::cr52();
    let at = |b: f64| {
        in_cm3s(beta_event_rate(&cr, &ThermalConditions::new(micro_kelvin(275.0), gauss(b)).unwrap()).unwrap())
    };
    let (b27, b44) = (at(27.0), at(44.0));
    let (fast, time) = within_time(start, Duration::from_secs(1));
    Verdict::new(
        (1.2e-11..=5.6e-11).contains(&b27) && (1.5e-11..=7e-11).contains(&b44) && fast,
        format!("27 G: {b27:.3e} cm3/s, 44 G: {b44:.3e} cm3/s, {time}"),
    )
}

fn low_field_rate() -> Verdict {
    let start = Instant::now();
    let cr = Species::cr52();
    let at = |b: f64| {
        in_cm3s(beta_loss_rate(&cr, &ThermalConditions::new(micro_kelvin(50.0), gauss(b)).unwrap()).unwrap())
    };
    let factor = |x: f64, target: f64| (x / target).max(target / x);
    let (b07, b1) = (at(0.7), at(1.0));
    let (f07, f1) = (factor(b07, 3.1e-12), factor(b1, 4e-12));
    let (fast, time) = within_time(start, Duration::from_secs(1));
    Verdict::new(
        f07 <= 2.5 && f1 <= 2.5 && fast,
        format!("0.7 G: {b07:.3e} cm3/s (factor {f07:.2}), 1 G: {b1:.3e} cm3/s (factor {f1:.2}), {time}"),
    )
}

fn sqrt_field_asymptote() -> Verdict {
    let cr = Species::cr52();
    let n = 9;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|i| {
            let b = 10.0 * 5f64.powf(f64::from(i) / f64::from(n - 1));
            let beta = beta_loss_rate(&cr, &ThermalConditions::new(micro_kelvin(10.0), gauss(b)).unwrap()).unwrap();
            (b.ln(), beta.ln())
        })
        .unzip();
    let (mx, my) = (xs.iter().sum::<f64>() / n as f64, ys.iter().sum::<f64>() / n as f64);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Verdict::new((0.40..=0.60).contains(&slope), format!("log-log slope {slope:.4} over 10-50 G at 10 uK"))
}

fn quadrature_oracle() -> Verdict {
    let start = Instant::now();
    let species = Species::cr52();
    let fields = [0.0, 0.5, 3.0, 20.0, 50.0];
    let temps = [5.0, 25.0, 50.0, 150.0, 500.0];
    let mut worst = (0.0_f64, 0.0, 0.0);
    let mut seed = 1000;
    for b in fields {
        for t in temps {
            let cond = ThermalConditions::new(micro_kelvin(t), gauss(b)).unwrap();
            let quad = thermal_average(&species, &cond, ChannelWeights::LOSS).unwrap();
            let mc = monte_carlo_thermal_average(&species, &cond, ChannelWeights::LOSS, 10_000_000, seed).unwrap();
            seed += 1;
            let err = rel_err(quad, mc.mean);
            if err > worst.0 {
                worst = (err, b, t);
            }
        }
    }
    let (fast, time) = within_time(start, Duration::from_secs(120));
    Verdict::new(
        worst.0 <= 1e-3 && fast,
        format!(
            "max relative deviation {:.2e} (at {} G, {} uK) on a 5x5 grid with 1e7 samples each, {time}",
            worst.0, worst.1, worst.2
        ),
    )
}

fn dynamics_oracle() -> Verdict {
    let sc = Scenario::high_field_shielded();
    let rates = sc.theory_rates().unwrap();
    let initial = sc.initial_state().unwrap();
    let grid = uniform_grid(100.0, 201).unwrap();
    let traj = evolve(&initial, &sc.trap, &sc.species, EvolutionMode::RfShield, &rates, &grid).unwrap();
    let v = cloud_volume(sc.temperature, &sc.trap, &sc.species).unwrap();
    let gamma = sc.trap.background_rate();
    let decay = traj
        .points
        .iter()
        .map(|p| {
            let exact = analytic_two_body_decay(initial.n3, gamma, rates.beta_event / v, p.state.time);
            rel_err(p.state.n3, exact)
        })
        .fold(0.0, f64::max);

    let free = Scenario::low_field_free();
    let trap = free.trap.with_background_rate(0.0).unwrap();
    let start = free.initial_state().unwrap();
    let traj = evolve(
        &start,
        &trap,
        &free.species,
        EvolutionMode::FreeEvolution,
        &free.theory_rates().unwrap(),
        &grid,
    )
    .unwrap();
    let drift = traj
        .points
        .iter()
        .map(|p| rel_err(p.state.total(), start.total()))
        .fold(0.0, f64::max);
    Verdict::new(
        decay <= 1e-6 && drift <= 1e-8,
        format!("closed-form deviation {decay:.2e} over 100 s, N_tot drift {drift:.2e}"),
    )
}

fn heating_at(trap: TrapConfig, t_uk: f64, density_cm3: f64) -> f64 {
    let cr = Species::cr52();
    let temperature = micro_kelvin(t_uk);
    let n = Unit::PerCubicCentimetre.to_si(density_cm3) * cloud_volume(temperature, &trap, &cr).unwrap();
    let state = CloudState::new(n, 0.0, 0.0, temperature, 0.0).unwrap();
    let rates = RateInputs::theory(&cr, &trap, temperature, 0.0).unwrap();
    let rate = initial_heating_rate(&state, &trap, &cr, EvolutionMode::FreeEvolution, &rates).unwrap();
    Unit::MicroKelvin.from_si(rate).value
}

fn heating_scenarios() -> Verdict {
    let low = heating_at(TrapConfig::new([806.0, 806.0, 42.0], gauss(0.7), 0.0).unwrap(), 50.0, 6e10);
    let high = heating_at(TrapConfig::new([120.0, 120.0, 73.0], gauss(27.0), 0.0).unwrap(), 275.0, 1e11);
    Verdict::new(
        rel_err(low, 3.0) <= 0.4 && high > 600.0,
        format!("0.7 G: {low:.3} uK/s, 27 G: {high:.1} uK/s"),
    )
}

fn isotope_insensitivity() -> Verdict {
    let cond = ThermalConditions::new(micro_kelvin(275.0), gauss(20.0)).unwrap();
    let ratio = beta_loss_rate(&Species::cr50(), &cond).unwrap() / beta_loss_rate(&Species::cr52(), &cond).unwrap();
    Verdict::new(
        (ratio - 1.0).abs() <= 0.05,
        format!("beta_loss(50Cr) / beta_loss(52Cr) = {ratio:.4} at 20 G, 275 uK"),
    )
}

fn shielded_decay(beta: f64) -> (TimeSeries, Scenario) {
    let sc = Scenario::high_field_shielded();
    let rates = RateInputs::fixed(beta, beta, 0.0).unwrap();
    let traj = evolve(
        &sc.initial_state().unwrap(),
        &sc.trap,
        &sc.species,
        EvolutionMode::RfShield,
        &rates,
        &sc.time_grid().unwrap(),
    )
    .unwrap();
    (TimeSeries::from_trajectory(&traj).unwrap(), sc)
}

fn free_decay(field_gauss: f64, beta_loss: f64, beta2: f64, duration: f64, samples: usize) -> TimeSeries {
    let sc = Scenario::low_field_free();
    let trap = TrapConfig::new(sc.trap.frequencies(), gauss(field_gauss), 0.0).unwrap();
    let rates = RateInputs::fixed(beta_loss, beta_loss, beta2).unwrap();
    let traj = evolve(
        &sc.initial_state().unwrap(),
        &trap,
        &sc.species,
        EvolutionMode::FreeEvolution,
        &rates,
        &uniform_grid(duration, samples).unwrap(),
    )
    .unwrap();
    TimeSeries::from_trajectory(&traj).unwrap()
}

fn estimator_round_trips() -> Verdict {
    let start = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();
    let mut record = |label: &str, got: f64, truth: f64, tol: f64| {
        let e = rel_err(got, truth);
        ok &= e <= tol;
        notes.push(format!("{label} {:.2}% (<= {}%)", 100.0 * e, 100.0 * tol));
    };

    let beta_event = cm3s(2.5e-11);
    let (ts, sc) = shielded_decay(beta_event);
    let fit = fit_method_i(&ts, sc.trap.background_rate(), &VolumeModel::from_series(&ts).unwrap(), None).unwrap();
    record("i", fit.value("beta_event").unwrap(), beta_event, 5e-3);

    let beta_loss = cm3s(3.1e-12);
    let flat = free_decay(0.0, beta_loss, 0.0, 15.0, 31);
    record("ii const-V", fit_method_ii(&flat, 0.0, None).unwrap().value("beta_loss").unwrap(), beta_loss, 5e-3);

    let heated = free_decay(0.7, beta_loss, cm3s(1.1e-10), 15.0, 61);
    record("ii", fit_method_ii(&heated, 0.0, None).unwrap().value("beta_loss").unwrap(), beta_loss, 0.05);
    let heat = fit_method_iii(&heated, &Species::cr52(), gauss(0.7), None).unwrap();
    record("iii", heat.value("beta_loss").unwrap(), beta_loss, 0.05);

    let beta2 = cm3s(1.1e-10);
    let loading = free_decay(0.7, beta_loss, beta2, 4.0, 81);
    record("beta2", fit_beta2(&loading, None, None).unwrap().value("beta2").unwrap(), beta2, 0.10);

    // noisy calibration: 5% relative counting noise, known per point
    let (clean, sc) = shielded_decay(beta_event);
    let volume = VolumeModel::from_series(&clean).unwrap();
    let n3 = clean.column(Column::N3).unwrap().to_vec();
    let replicates = 1000;
    let mut covered = 0;
    for seed in 0..replicates {
        let mut noisy = n3.clone();
        apply_relative_noise(&mut noisy, 0.05, seed).unwrap();
        let sigma: Vec<f64> = n3.iter().map(|n| 0.05 * n).collect();
        let ts = TimeSeries::new(clean.times().to_vec(), vec![(Column::N3, noisy)])
            .unwrap()
            .with_noise_sigma(sigma)
            .unwrap();
        let fit = fit_method_i(&ts, sc.trap.background_rate(), &volume, None).unwrap();
        let p = fit.param("beta_event").unwrap();
        if (p.value - beta_event).abs() <= 3.0 * p.uncertainty {
            covered += 1;
        }
    }
    let coverage = f64::from(covered) / replicates as f64;
    ok &= coverage >= 0.99;
    notes.push(format!("3-sigma coverage {covered}/{replicates}"));

    let (fast, time) = within_time(start, Duration::from_secs(300));
    Verdict::new(ok && fast, format!("{}, {time}", notes.join(", ")))
}

fn redistribution() -> Verdict {
    let sc = Scenario::low_field_free();
    let traj = sc.run().unwrap();
    let first = traj.points.first().unwrap().state;
    let last = traj.points.last().unwrap().state;
    let moved = 1.0 - last.n3 / first.n3;
    let drift = traj
        .points
        .iter()
        .map(|p| rel_err(p.state.total(), first.total()))
        .fold(0.0, f64::max);
    Verdict::new(
        sc.trap.background_rate() == 0.0 && (0.20..=0.50).contains(&moved) && drift <= 1e-8,
        format!(
            "{:.1}% of N3 redistributed after {} s, N_tot drift {drift:.2e}",
            100.0 * moved,
            last.time
        ),
    )
}

fn cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = dipolar_cli::run(std::iter::once("dipolar").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap())
}

fn cli_contract() -> Verdict {
    let start = Instant::now();
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let golden = root.join("crates/cli/tests/golden");
    let mut problems = Vec::new();

    for name in ["27G-methodI", "0.7G-methodII", "20G-isotope"] {
        let conf = root.join(format!("presets/{name}.conf"));
        let (code, text) = cli(&["simulate", "--config", conf.to_str().unwrap()]);
        let expected = std::fs::read_to_string(golden.join(format!("simulate_{name}.csv"))).unwrap_or_default();
        if code != 0 || text != expected {
            problems.push(format!("simulate {name} differs from golden output"));
        }
        match read_timeseries_csv(text.as_bytes()) {
            Ok(ts) => {
                let cols = [Column::N3, Column::N2, Column::N1, Column::Temperature, Column::Volume];
                if write_timeseries_csv(&ts, &cols) != text {
                    problems.push(format!("{name} CSV does not re-emit identically"));
                }
            }
            Err(e) => problems.push(format!("{name} CSV does not parse: {e}")),
        }
    }

    let noisy = golden.join("noisy.conf");
    let runs: Vec<String> = (0..2).map(|_| cli(&["simulate", "--config", noisy.to_str().unwrap(), "--seed", "7"]).1).collect();
    let expected = std::fs::read_to_string(golden.join("simulate_noisy_seed7.csv")).unwrap_or_default();
    if runs[0] != runs[1] || runs[0] != expected {
        problems.push("seeded noisy run is not byte-identical".into());
    }

    let dir = tempfile::tempdir().unwrap();
    let short = dir.path().join("short.csv");
    std::fs::write(&short, "t_s,N3\n0,100\n").unwrap();
    let codes = [
        (cli(&["rate", "--species", "52Cr", "--field-gauss", "27", "--temp-uk", "275"]).0, 0),
        (cli(&["rate", "--species", "53Cr", "--field-gauss", "27", "--temp-uk", "275"]).0, 2),
        (cli(&["rate", "--species", "52Cr", "--field-gauss", "-1", "--temp-uk", "275"]).0, 2),
        (cli(&["simulate", "--preset", "no-such-preset"]).0, 2),
        (cli(&["fit", "i", short.to_str().unwrap(), "--preset", "27G-methodI"]).0, 1),
    ];
    for (i, (got, want)) in codes.iter().enumerate() {
        if got != want {
            problems.push(format!("exit code case {i}: got {got}, want {want}"));
        }
    }

    let (fast, time) = within_time(start, Duration::from_secs(30));
    let passed = problems.is_empty() && fast;
    let detail = if problems.is_empty() {
        format!("golden files, emit/ingest closure and exit codes match, {time}")
    } else {
        format!("{}, {time}", problems.join("; "))
    };
    Verdict::new(passed, detail)
}
