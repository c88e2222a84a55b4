//! Acceptance criteria. Each test writes one `PASS`/`FAIL` line to stdout
//! (uncaptured) and then asserts.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use fracheat::analysis::{fit_exponent, xi_sweep, SweepMethod, SweepSetup, SweepStatus};
use fracheat::heatkernel::{
    lemma_integral_with, verify_kernel_bounds, LemmaId, LemmaOptions, VERDICT_FINITE, VERDICT_VIOLATED,
};
use fracheat::moments::{energy_curve, estimate_moments, solve_volterra_colored, solve_volterra_white, VolterraSetup};
use fracheat::noise::build_covariance;
use fracheat::sde::{simulate_ensemble, NoiseQuadrature, SimulationConfig};
use fracheat::spectral::spectrum_for;
use fracheat::{CorrelationModel, DomainGrid, GeneratorSpec, HeatKernelEvaluator, SigmaFunction};

fn report(n: u32, label: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {n:>2} [{verdict}] {label}: {detail}").unwrap();
}

fn fractional(alpha: f64) -> GeneratorSpec {
    GeneratorSpec::Fractional { alpha, nu: 1.0 }
}

/// Evaluators at N = 511 shared by the kernel and lemma criteria.
fn fine_evaluators() -> &'static [(f64, HeatKernelEvaluator)] {
    static CELL: OnceLock<Vec<(f64, HeatKernelEvaluator)>> = OnceLock::new();
    CELL.get_or_init(|| {
        let grid = DomainGrid::new(1.0, 511).unwrap();
        [1.2, 1.5, 2.0]
            .iter()
            .map(|&a| (a, HeatKernelEvaluator::for_spec(fractional(a), &grid).unwrap()))
            .collect()
    })
}

fn record_grid(step: f64, horizon: f64) -> Vec<f64> {
    let k = (horizon / step).round() as usize;
    (0..=k).map(|i| i as f64 * step).collect()
}

/// White noise, linear sigma, flat initial data on `(-1, 1)`.
fn base_config(spec: GeneratorSpec, noise: CorrelationModel, n: usize, dt: f64, horizon: f64) -> SimulationConfig {
    SimulationConfig {
        spec,
        grid: DomainGrid::new(1.0, n).unwrap(),
        noise,
        sigma: SigmaFunction::Linear { c: 1.0 },
        xi: 1.0,
        u0: vec![1.0; n],
        initial_support: [-0.5, 0.5],
        dt,
        horizon,
        paths: 1,
        seed: 20240917,
        record_times: record_grid(0.1, horizon),
        moment_orders: vec![2.0],
        quadrature: NoiseQuadrature::VarianceMatched,
    }
}

#[test]
fn criterion_01_principal_eigenvalue_classical() {
    let start = Instant::now();
    let grid = DomainGrid::new(1.0, 511).unwrap();
    let spec = spectrum_for(fractional(2.0), &grid).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let exact = PI * PI / 4.0;
    let mu = spec.mu1_extrapolated.unwrap();
    let rel = (mu - exact).abs() / exact;
    let pass = rel < 0.01 && elapsed < 30.0;
    report(
        1,
        "principal eigenvalue (alpha = 2, N = 511, extrapolated)",
        pass,
        &format!("mu1 = {mu:.8}, pi^2/4 = {exact:.8}, rel err {rel:.2e}, {elapsed:.1} s"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_kernel_long_time_rate() {
    let mut pass = true;
    let mut details = Vec::new();
    for (alpha, eval) in fine_evaluators() {
        let grid = eval.grid();
        let mu = eval.mu1();
        let t = 10.0 / mu;
        let c = grid.nearest(0.0);
        let centre = -eval.evaluate_kernel(t, c, c).unwrap().ln() / t;
        let centre_err = (centre - mu).abs() / mu;

        // decay rate -d/dt log p over one e-fold of the principal mode
        let tau = 1.0 / mu;
        let p_t = eval.kernel_matrix(t).unwrap();
        let p_later = eval.kernel_matrix(t + tau).unwrap();
        let interior = grid.interior(0.2);
        let mut slope_err = 0.0f64;
        let mut literal_err = 0.0f64;
        for &i in &interior {
            for &j in &interior {
                let rate = (p_t[(i, j)].ln() - p_later[(i, j)].ln()) / tau;
                slope_err = slope_err.max((rate - mu).abs() / mu);
                literal_err = literal_err.max((-p_t[(i, j)].ln() / t - mu).abs() / mu);
            }
        }

        // sub-Markov mass and Chapman-Kolmogorov
        let mut mass_excess = 0.0f64;
        for s in [1e-3, 0.05, 0.5, t] {
            for m in eval.mass(s).unwrap() {
                mass_excess = mass_excess.max(m - 1.0);
            }
        }
        let h = grid.h();
        let (a, b) = (0.07, 0.19);
        let lhs = eval.kernel_matrix(a + b).unwrap();
        let rhs = eval.kernel_matrix(a).unwrap() * (eval.kernel_matrix(b).unwrap() * h);
        let ck = (&lhs - &rhs).amax() / lhs.amax();

        let ok = centre_err < 0.02 && slope_err < 0.02 && mass_excess <= 1e-8 && ck <= 1e-9;
        pass &= ok;
        details.push(format!(
            "alpha {alpha}: centre {centre_err:.2e}, interior slope {slope_err:.2e} (pointwise -log p / t up to {literal_err:.2e}), mass excess {mass_excess:.1e}, CK {ck:.1e}"
        ));
    }
    report(2, "kernel decays at the principal eigenvalue", pass, &details.join("; "));
    assert!(pass);
}

#[test]
fn criterion_03_lemma_suite() {
    let mut pass = true;
    let mut details = Vec::new();
    for (alpha, eval) in fine_evaluators() {
        let mu = eval.mu1();
        let bounds = verify_kernel_bounds(eval, 0.2).unwrap();
        let opts = LemmaOptions::from_bounds(&bounds);
        let diagonal = |beta: f64| lemma_integral_with(eval, LemmaId::DiagonalLaplace, beta, &[0.0], None, &opts).unwrap();
        let half = diagonal(0.5 * mu);
        let near = diagonal(0.99 * mu);
        let over = diagonal(1.5 * mu);
        let tail_ratio = near.tail / half.tail;
        let riesz = CorrelationModel::Riesz { gamma: 0.5 };
        let correlated =
            lemma_integral_with(eval, LemmaId::CorrelatedPair, 1.5 * mu, &[0.0, 0.3], Some(&riesz), &opts).unwrap();
        let pair = lemma_integral_with(eval, LemmaId::InteriorPairLower, 1.0, &[-0.3, 0.3, 0.3, -0.3], None, &opts)
            .unwrap();
        let lower = pair.lower_bound.unwrap_or(f64::INFINITY);
        let ok = half.verdict == VERDICT_FINITE
            && half.value.is_finite()
            && over.verdict == VERDICT_VIOLATED
            && tail_ratio >= 10.0
            && correlated.verdict == VERDICT_FINITE
            && correlated.value.is_finite()
            && pair.value >= lower;
        pass &= ok;
        details.push(format!(
            "alpha {alpha}: diag(0.5 mu1) = {:.4e} {}, diag(1.5 mu1) {}, tail ratio {tail_ratio:.1}, correlated(1.5 mu1) = {:.4e} {}, pair lower {:.3e} >= {lower:.3e}",
            half.value, half.verdict, over.verdict, correlated.value, correlated.verdict, pair.value
        ));
    }
    report(3, "Laplace-type kernel integrals", pass, &details.join("; "));
    assert!(pass);
}

#[test]
fn criterion_04_oracle_matches_monte_carlo() {
    let start = Instant::now();
    let mut cfg = base_config(fractional(1.5), CorrelationModel::White, 64, 1e-3, 1.0);
    cfg.paths = 20_000;
    cfg.record_times = vec![0.25, 0.5, 1.0];
    let summary = simulate_ensemble(&cfg).unwrap();
    let eval = HeatKernelEvaluator::for_spec(cfg.spec, &cfg.grid).unwrap();
    let setup = VolterraSetup::new(1.0, 1.0, 1e-3, 1.0, cfg.record_times.clone());
    let oracle = solve_volterra_white(&eval, &cfg.u0, &setup).unwrap();
    let mut within = 0usize;
    let mut total = 0usize;
    for t in 0..cfg.record_times.len() {
        for i in 0..cfg.grid.len() {
            let mc = summary.moment(2.0, t, i).unwrap();
            let exact = oracle.value(t, i);
            total += 1;
            if (mc.value - exact).abs() <= 3.0 * mc.stderr {
                within += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let frac = within as f64 / total as f64;
    let pass = frac >= 0.95 && elapsed < 300.0;
    report(
        4,
        "second moments: Volterra oracle vs Monte Carlo",
        pass,
        &format!("{within}/{total} record points within 3 SE ({:.1}%), {elapsed:.1} s", 100.0 * frac),
    );
    assert!(pass);
}

fn sweep_check(n: u32, label: &str, setup: SweepSetup, extra: &str, extra_ok: bool) {
    let d = xi_sweep(&setup).unwrap();
    let first = &d.points.first().unwrap().estimate;
    let last = &d.points.last().unwrap().estimate;
    let width = d.bracket_width().unwrap_or(f64::INFINITY);
    let pass = first.rate < -0.1
        && last.rate > 0.1
        && d.status == SweepStatus::Bracketed
        && width <= 0.1
        && d.monotone
        && d.points.iter().all(|p| p.estimate.is_resolved())
        && extra_ok;
    report(
        n,
        label,
        pass,
        &format!(
            "rate {:.3} at xi = {}, {:.3} at xi = {}, bracket {:?} (width {width:.3}), monotone {}{extra}",
            first.rate,
            d.points.first().unwrap().xi,
            last.rate,
            d.points.last().unwrap().xi,
            d.bracket.unwrap_or([f64::NAN; 2]),
            d.monotone
        ),
    );
    assert!(pass);
}

fn xi_range(lo: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| lo + k as f64 * step).collect()
}

#[test]
fn criterion_05_white_noise_transition() {
    let base = base_config(fractional(1.5), CorrelationModel::White, 64, 5e-3, 6.0);
    let setup = SweepSetup::new(base, xi_range(0.4, 0.2, 9), SweepMethod::Oracle);
    sweep_check(5, "white-noise decay/growth transition", setup, "", true);
}

#[test]
fn criterion_06_colored_noise_transition() {
    for model in [CorrelationModel::Riesz { gamma: 0.5 }, CorrelationModel::ConstantFloor { level: 1.0 }] {
        let base = base_config(fractional(1.5), model, 64, 1e-2, 6.0);
        let floor = build_covariance(model, &base.grid, 0).unwrap().floor.unwrap();
        let xs = match model {
            CorrelationModel::Riesz { .. } => xi_range(0.2, 0.2, 8),
            _ => xi_range(0.8, 0.2, 9),
        };
        let setup = SweepSetup::new(base, xs, SweepMethod::Oracle);
        sweep_check(
            6,
            &format!("colored-noise transition, {}", model.label()),
            setup,
            &format!(", correlation floor {floor:.4}"),
            floor > 0.0,
        );
    }
}

#[test]
fn criterion_07_energy_sandwich_and_free_decay() {
    let grid = DomainGrid::new(1.0, 64).unwrap();
    let eval = HeatKernelEvaluator::for_spec(fractional(1.5), &grid).unwrap();
    let mu = eval.mu1();
    let u0 = vec![1.0; 64];
    let times = record_grid(0.1, 6.0);
    let mut sandwich = true;
    let mut rates = None;
    for xi in [0.0, 1.0, 2.0] {
        let setup = VolterraSetup::new(xi, 1.0, 5e-3, 6.0, times.clone());
        let curve = solve_volterra_white(&eval, &u0, &setup).unwrap();
        let energy = energy_curve(&curve, &grid, 0.2).unwrap();
        sandwich &= energy.sandwich_ok();
        if xi == 0.0 {
            let e = fit_exponent(&energy.series(), 2.0, None).unwrap();
            let p = fit_exponent(&curve.series_at(curve.nearest(0.0)), 2.0, None).unwrap();
            rates = Some((e.rate, p.rate));
        }
    }
    // the Monte Carlo energy obeys the same sandwich
    let mut cfg = base_config(fractional(1.5), CorrelationModel::White, 32, 5e-3, 1.0);
    cfg.paths = 500;
    let summary = simulate_ensemble(&cfg).unwrap();
    let (_, mc_energy) = estimate_moments(&summary, &cfg.grid, 2.0, 0.2).unwrap();
    sandwich &= mc_energy.sandwich_ok();

    let (energy_rate, point_rate) = rates.unwrap();
    let e_err = (energy_rate + mu).abs() / mu;
    let p_err = (point_rate + 2.0 * mu).abs() / (2.0 * mu);
    let pass = sandwich && e_err <= 0.05 && p_err <= 0.05;
    report(
        7,
        "energy sandwich and noiseless decay rates",
        pass,
        &format!(
            "sandwich {sandwich}; xi = 0 energy rate {energy_rate:.4} vs -mu1 = {:.4} ({e_err:.1e}), pointwise {point_rate:.4} vs -2 mu1 ({p_err:.1e})",
            -mu
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_drift_shifts_rate() {
    let lambda = 0.5;
    let xs = vec![0.5, 1.0, 1.5];
    let run = |spec: GeneratorSpec| {
        let base = base_config(spec, CorrelationModel::White, 64, 5e-3, 6.0);
        let mut setup = SweepSetup::new(base, xs.clone(), SweepMethod::Oracle);
        setup.bisect = false;
        xi_sweep(&setup).unwrap()
    };
    let plain = run(fractional(1.5));
    let shifted = run(GeneratorSpec::FractionalWithDrift {
        alpha: 1.5,
        nu: 1.0,
        drift: lambda,
    });
    let mut pass = true;
    let mut details = Vec::new();
    for (a, b) in plain.points.iter().zip(&shifted.points) {
        let diff = b.estimate.rate - a.estimate.rate;
        let err = (diff - 2.0 * lambda).abs() / (2.0 * lambda);
        pass &= err <= 0.05;
        details.push(format!("xi {}: shift {diff:.4} ({err:.1e})", a.xi));
    }
    report(8, "constant drift shifts the rate by 2 lambda", pass, &details.join(", "));
    assert!(pass);
}

#[test]
fn criterion_09_higher_moments() {
    // Spatially constant noise on a wider ball: the transition sits at a
    // small xi, so the growing moments stay within reach of sampling.
    let xi = 0.85;
    let model = CorrelationModel::ConstantFloor { level: 1.0 };
    let mut cfg = base_config(fractional(1.5), model, 32, 1e-2, 2.0);
    cfg.grid = DomainGrid::new(4.0, 32).unwrap();
    cfg.xi = xi;
    cfg.paths = 20_000;
    cfg.moment_orders = vec![2.0, 4.0];
    let eval = HeatKernelEvaluator::for_spec(cfg.spec, &cfg.grid).unwrap();
    let setup = VolterraSetup::new(xi, 1.0, cfg.dt, cfg.horizon, cfg.record_times.clone());
    let oracle = solve_volterra_colored(&eval, &cfg.u0, &setup, &model).unwrap().curve;
    let oracle_rate = fit_exponent(&oracle.series_at(oracle.nearest(0.0)), 2.0, None).unwrap().rate;

    let summary = simulate_ensemble(&cfg).unwrap();
    let mut cauchy_schwarz = true;
    for t in 0..summary.times.len() {
        for i in 0..summary.nodes.len() {
            let e2 = summary.moment(2.0, t, i).unwrap().value;
            let e4 = summary.moment(4.0, t, i).unwrap().value;
            cauchy_schwarz &= e4 >= e2 * e2;
        }
    }
    let (c2, _) = estimate_moments(&summary, &cfg.grid, 2.0, 0.2).unwrap();
    let (c4, _) = estimate_moments(&summary, &cfg.grid, 4.0, 0.2).unwrap();
    let node = c2.nearest(0.0);
    let r2 = fit_exponent(&c2.series_at(node), 2.0, None).unwrap();
    let r4 = fit_exponent(&c4.series_at(node), 4.0, None).unwrap();
    let ordered = r4.rate >= r2.rate - 2.0 * (r2.stderr + r4.stderr);
    let pass = cauchy_schwarz && oracle_rate > 0.0 && r2.is_resolved() && r4.is_resolved() && ordered;
    report(
        9,
        "fourth moment dominates the second",
        pass,
        &format!(
            "E4 >= E2^2 everywhere: {cauchy_schwarz}; {} on R = 4, xi = {xi} (oracle p = 2 rate {oracle_rate:.3}): p = 4 rate {:.3} +- {:.3}, p = 2 rate {:.3} +- {:.3}",
            model.label(),
            r4.rate, r4.stderr, r2.rate, r2.stderr
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_thread_count_reproducibility() {
    let mut outputs = Vec::new();
    for model in [CorrelationModel::White, CorrelationModel::Riesz { gamma: 0.5 }] {
        let mut cfg = base_config(fractional(1.5), model, 32, 1e-2, 0.5);
        cfg.paths = 300;
        cfg.xi = 1.5;
        cfg.moment_orders = vec![2.0, 3.0, 4.0];
        let mut bytes = Vec::new();
        for threads in [1, 4, 8] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let summary = pool.install(|| simulate_ensemble(&cfg)).unwrap();
            bytes.push(serde_json::to_vec(&summary).unwrap());
        }
        outputs.push((model.label(), bytes));
    }
    let pass = outputs.iter().all(|(_, b)| b[0] == b[1] && b[0] == b[2]);
    let detail = outputs
        .iter()
        .map(|(l, b)| format!("{l}: {} bytes, identical {}", b[0].len(), b[0] == b[1] && b[0] == b[2]))
        .collect::<Vec<_>>()
        .join("; ");
    report(10, "byte-identical output at 1, 4 and 8 threads", pass, &detail);
    assert!(pass);
}
