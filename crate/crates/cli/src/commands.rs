//! One function per subcommand; each returns artifacts and writes nothing.

use fracheat::analysis::{fit_exponent, xi_sweep, SweepMethod, SweepSetup, SweepStatus, SweepTarget};
use fracheat::heatkernel::{lemma_integral_with, verify_kernel_bounds, LemmaId, LemmaOptions, LemmaReport};
use fracheat::moments::{
    energy_curve, estimate_moments, solve_volterra_colored, solve_volterra_white, EnergyCurve, MomentCurve,
    VolterraSetup,
};
use fracheat::sde::simulate_ensemble_with;
use fracheat::{build_operator, eigendecompose, validate_operator, CorrelationModel, HeatKernelEvaluator};
use serde_json::json;

use crate::config::{LemmaRequest, RunConfig};
use crate::error::CliError;
use crate::report::{num, opt, Artifacts, Table};

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn evaluator(cfg: &RunConfig) -> Result<HeatKernelEvaluator, CliError> {
    Ok(HeatKernelEvaluator::for_spec(cfg.operator()?, cfg.grid()?)?)
}

pub fn operator_info(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let op = build_operator(cfg.operator()?, cfg.grid()?)?;
    let checks = validate_operator(&op);
    let spectrum = eigendecompose(&op)?;
    let record = spectrum.record(false);
    let mut art = Artifacts::new(
        "operator-info",
        json!({
            "label": op.spec.label(),
            "mu1": spectrum.mu1(),
            "mu1_extrapolated": spectrum.mu1_extrapolated,
            "checks": checks,
            "spectrum": record,
        }),
    )?;
    let mut table = Table::new("eigenvalues.csv", &["k", "eigenvalue"]);
    for (k, v) in spectrum.eigenvalues.iter().enumerate() {
        table.push(vec![(k + 1).to_string(), num(*v)]);
    }
    art.tables.push(table);
    art.summary.push(format!("generator: {}", op.spec.label()));
    art.summary.push(format!(
        "principal Dirichlet eigenvalue: mu1 = {} (extrapolated {})",
        spectrum.mu1(),
        opt(spectrum.mu1_extrapolated)
    ));
    for c in &checks.checks {
        art.summary.push(format!(
            "operator check, {}: {} (measured {}, tolerance {})",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.measured,
            c.tolerance
        ));
    }
    if op.spec.is_surrogate() {
        art.warnings
            .push("relativistic surrogate: a spectral function of the killed Laplacian, not the killed process".into());
    }
    Ok(art)
}

pub fn kernel_verify(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let eval = evaluator(cfg)?;
    let analysis = cfg.analysis();
    let bounds = verify_kernel_bounds(&eval, analysis.epsilon)?;
    let mut art = Artifacts::new("kernel-verify", &bounds)?;
    let mut table = Table::new("kernel_bounds.csv", &["quantity", "value"]);
    let rows: [(&str, f64); 12] = [
        ("epsilon", bounds.epsilon),
        ("c1_small_t", bounds.c1_small_t),
        ("c2_small_t", bounds.c2_small_t),
        ("small_t_exponent", bounds.small_t_exponent),
        ("small_t_exponent_expected", bounds.small_t_exponent_expected),
        ("mu1", bounds.mu1),
        ("mu1_fit", bounds.mu1_fit),
        ("mu1_fit_r_squared", bounds.mu1_fit_r_squared),
        ("c1_long", bounds.c1_long),
        ("c2_long", bounds.c2_long),
        ("t0", bounds.t0),
        ("limiting_spread", bounds.limiting_spread),
    ];
    for (k, v) in rows {
        table.push(vec![k.to_owned(), num(v)]);
    }
    art.tables.push(table);
    art.summary.push(format!(
        "small-time on-diagonal decay: p(t,0,0) ~ t^{} (expected t^{})",
        bounds.small_t_exponent, bounds.small_t_exponent_expected
    ));
    art.summary.push(format!(
        "small-time two-sided bounds: c1 = {}, c2 = {}",
        bounds.c1_small_t, bounds.c2_small_t
    ));
    art.summary.push(format!(
        "long-time decay at the principal eigenvalue: fitted rate {} vs mu1 = {} (R^2 = {})",
        bounds.mu1_fit, bounds.mu1, bounds.mu1_fit_r_squared
    ));
    art.summary.push(format!(
        "long-time two-sided bounds beyond t0 = {} ({}): c1 = {}, c2 = {}",
        bounds.t0, bounds.t0_criterion, bounds.c1_long, bounds.c2_long
    ));
    Ok(art)
}

fn default_lemmas(noise: CorrelationModel) -> Vec<LemmaRequest> {
    let req = |integral, beta_factor, points: &[f64], correlation| LemmaRequest {
        integral,
        beta: None,
        beta_factor: Some(beta_factor),
        points: points.to_vec(),
        correlation,
    };
    let colored = if noise.is_white() {
        CorrelationModel::Riesz { gamma: 0.5 }
    } else {
        noise
    };
    vec![
        req(LemmaId::DiagonalLaplace, 0.5, &[0.0], None),
        req(LemmaId::DiagonalLaplace, 0.99, &[0.0], None),
        req(LemmaId::DiagonalLaplace, 1.5, &[0.0], None),
        req(LemmaId::MassSupremum, 0.5, &[0.0], None),
        req(LemmaId::CorrelatedPair, 1.5, &[0.0, 0.3], Some(colored)),
        LemmaRequest {
            integral: LemmaId::InteriorPairLower,
            beta: Some(1.0),
            beta_factor: None,
            points: vec![-0.3, 0.3, 0.3, -0.3],
            correlation: None,
        },
    ]
}

fn lemma_label(id: LemmaId) -> &'static str {
    match id {
        LemmaId::DiagonalLaplace => "diagonal Laplace transform of the kernel",
        LemmaId::MassSupremum => "weighted supremum of the surviving mass",
        LemmaId::CorrelatedPair => "correlated two-point kernel integral",
        LemmaId::InteriorPairLower => "interior two-point lower bound",
    }
}

pub fn lemma_check(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let eval = evaluator(cfg)?;
    let mu1 = eval.mu1();
    let analysis = cfg.analysis();
    let bounds = verify_kernel_bounds(&eval, analysis.epsilon)?;
    let opts = LemmaOptions::from_bounds(&bounds);
    let requests = if analysis.lemmas.is_empty() {
        default_lemmas(cfg.noise())
    } else {
        analysis.lemmas.clone()
    };
    let mut reports: Vec<LemmaReport> = Vec::new();
    for r in &requests {
        let beta = match (r.beta, r.beta_factor) {
            (Some(b), None) => b,
            (None, Some(f)) => f * mu1,
            _ => {
                return Err(CliError::Config(format!(
                    "{}: give exactly one of beta and beta_factor",
                    r.integral.id()
                )))
            }
        };
        let correlation = match (r.integral, r.correlation) {
            (LemmaId::CorrelatedPair, None) if !cfg.noise().is_white() => Some(cfg.noise()),
            (_, c) => c,
        };
        reports.push(lemma_integral_with(
            &eval,
            r.integral,
            beta,
            &r.points,
            correlation.as_ref(),
            &opts,
        )?);
    }
    let mut art = Artifacts::new("lemma-check", json!({ "bounds": bounds, "integrals": reports }))?;
    let mut table = Table::new(
        "lemmas.csv",
        &[
            "integral",
            "beta",
            "beta_over_mu1",
            "points",
            "value",
            "finite",
            "verdict",
            "hypothesis_holds",
            "quadrature_error",
            "lower_bound",
        ],
    );
    for rep in &reports {
        let points = rep.points.iter().map(|p| num(*p)).collect::<Vec<_>>().join(" ");
        table.push(vec![
            rep.lemma_id.id().to_owned(),
            num(rep.beta),
            num(rep.beta / mu1),
            points.clone(),
            num(rep.value),
            rep.finite.to_string(),
            rep.verdict.clone(),
            rep.hypothesis_holds.to_string(),
            num(rep.quadrature_error),
            opt(rep.lower_bound),
        ]);
        let mut line = format!(
            "{} at beta = {} mu1, points [{}]: {} ({})",
            lemma_label(rep.lemma_id),
            rep.beta / mu1,
            points,
            rep.value,
            rep.verdict
        );
        if let Some(lb) = rep.lower_bound {
            line.push_str(&format!(", lower bound {lb}: {}", if rep.value >= lb { "holds" } else { "FAILS" }));
        }
        art.summary.push(line);
    }
    art.tables.push(table);
    Ok(art)
}

fn energy_table(energy: &EnergyCurve) -> Table {
    let mut t = Table::new(
        "energy.csv",
        &["t", "energy", "stderr", "sandwich_lower", "sandwich_upper", "sandwich_holds", "provenance"],
    );
    for k in 0..energy.times.len() {
        let scale = energy.log_scale[k].exp();
        t.push(vec![
            num(energy.times[k]),
            num(energy.ln_value(k).exp()),
            opt(energy.stderr.as_ref().map(|s| s[k] * scale.sqrt())),
            num(energy.sandwich_lower[k] * scale),
            num(energy.sandwich_upper[k] * scale),
            energy.sandwich_holds[k].to_string(),
            energy.provenance.tag().to_owned(),
        ]);
    }
    t
}

fn rate_lines(art: &mut Artifacts, curve: &MomentCurve, energy: &EnergyCurve) {
    let centre = curve.series_at(curve.nearest(0.0));
    match fit_exponent(&centre, curve.p, None) {
        Ok(e) => art.summary.push(format!(
            "moment Lyapunov exponent of E|u|^{} at x = {}: {} +- {} (R^2 = {}, {:?})",
            curve.p, curve.nodes[curve.nearest(0.0)], e.rate, e.stderr, e.r_squared, e.status
        )),
        Err(e) => art.warnings.push(format!("pointwise rate not fitted: {e}")),
    }
    if curve.p == 2.0 {
        match fit_exponent(&energy.series(), 2.0, None) {
            Ok(e) => art.summary.push(format!(
                "energy growth rate: {} +- {} (R^2 = {}, {:?})",
                e.rate, e.stderr, e.r_squared, e.status
            )),
            Err(e) => art.warnings.push(format!("energy rate not fitted: {e}")),
        }
    }
    art.summary.push(format!(
        "energy sandwich between interior minimum and global maximum: {} at every record time",
        if energy.sandwich_ok() { "holds" } else { "FAILS" }
    ));
}

pub fn simulate(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let sim = cfg.simulation()?;
    sim.validate()?;
    let eval = HeatKernelEvaluator::for_spec(sim.spec, &sim.grid)?;
    let summary = simulate_ensemble_with(&sim, &eval)?;
    let epsilon = cfg.analysis().epsilon;
    let mut moments = Table::new("moments.csv", &["t", "x", "p", "moment", "stderr", "M_effective"]);
    let mut orders = vec![2.0];
    orders.extend(sim.moment_orders.iter().copied().filter(|&p| p != 2.0));
    let mut energy = None;
    let mut curves = Vec::new();
    for &p in &orders {
        let (curve, e) = estimate_moments(&summary, &sim.grid, p, epsilon)?;
        for t in 0..curve.times.len() {
            for i in 0..curve.nodes.len() {
                moments.push(vec![
                    num(curve.times[t]),
                    num(curve.nodes[i]),
                    num(p),
                    num(curve.values[t][i]),
                    opt(curve.stderr.as_ref().map(|s| s[t][i])),
                    summary.effective_paths[t].to_string(),
                ]);
            }
        }
        energy.get_or_insert(e);
        curves.push(curve);
    }
    let energy = energy.expect("order 2 is always estimated");
    let mut art = Artifacts::new("simulate", json!({ "ensemble": summary, "energy": energy }))?;
    art.summary.push(format!(
        "Monte Carlo ensemble: {} paths, {} steps of {}, noise {}, xi = {}, status {:?}",
        sim.paths,
        sim.steps()?,
        sim.dt,
        sim.noise.label(),
        sim.xi,
        summary.status
    ));
    art.summary.push(format!(
        "diverged paths: {} ({} events recorded)",
        summary.diverged_paths,
        summary.divergence_events.len()
    ));
    if let Some(frac) = summary.negative_fraction.last() {
        art.summary.push(format!("negative-value fraction at the last record time: {frac}"));
    }
    for curve in &curves {
        rate_lines(&mut art, curve, &energy);
    }
    if summary.diverged_paths > 0 {
        art.warnings.push(format!(
            "{} paths left the finite range; later moments use the surviving paths",
            summary.diverged_paths
        ));
    }
    art.tables.push(moments);
    art.tables.push(energy_table(&energy));
    Ok(art)
}

pub fn oracle(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let sim = cfg.simulation()?;
    sim.validate()?;
    let analysis = cfg.analysis();
    let eval = HeatKernelEvaluator::for_spec(sim.spec, &sim.grid)?;
    let slope = sim.sigma.linear_slope().ok_or_else(|| {
        fracheat::Error::Precondition(format!("the Volterra oracle needs a linear sigma, got {}", sim.sigma.label()))
    })?;
    let dt = analysis.oracle_dt.unwrap_or(sim.dt);
    let setup = VolterraSetup::new(sim.xi, slope, dt, sim.horizon, sim.record_times.clone());
    let curve = if sim.noise.is_white() {
        solve_volterra_white(&eval, &sim.u0, &setup)?
    } else {
        solve_volterra_colored(&eval, &sim.u0, &setup, &sim.noise)?.curve
    };
    let energy = energy_curve(&curve, &sim.grid, analysis.epsilon)?;
    let mut moments = Table::new("moments.csv", &["t", "x", "p", "value", "stderr", "provenance"]);
    for t in 0..curve.times.len() {
        for i in 0..curve.nodes.len() {
            moments.push(vec![
                num(curve.times[t]),
                num(curve.nodes[i]),
                num(2.0),
                num(curve.ln_value(t, i).exp()),
                String::new(),
                curve.provenance.tag().to_owned(),
            ]);
        }
    }
    let mut art = Artifacts::new("oracle", json!({ "curve": curve, "energy": energy }))?;
    let refinement = curve.refinement.as_ref().map(|r| r.iter().copied().fold(0.0, f64::max));
    art.summary.push(format!(
        "second-moment Volterra oracle: noise {}, xi = {}, dt = {dt}, largest step-halving change {}",
        sim.noise.label(),
        sim.xi,
        opt(refinement)
    ));
    rate_lines(&mut art, &curve, &energy);
    art.tables.push(moments);
    art.tables.push(energy_table(&energy));
    Ok(art)
}

pub fn sweep(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let mut base = cfg.simulation()?;
    let analysis = cfg.analysis();
    if analysis.xi_values.is_empty() {
        return Err(CliError::Config("[analysis] xi_values is empty".into()));
    }
    if analysis.method == SweepMethod::Oracle {
        base.dt = analysis.oracle_dt.unwrap_or(base.dt);
    }
    let noise = base.noise;
    let mut setup = SweepSetup::new(base, analysis.xi_values.clone(), analysis.method);
    setup.p = analysis.p;
    setup.target = analysis.target;
    setup.window = analysis.window;
    setup.bracket_width = analysis.bracket_width;
    setup.bisect = analysis.bisect;
    let diagram = xi_sweep(&setup)?;

    let mut phase = Table::new("phase.csv", &["xi", "rate", "stderr", "r_squared", "status", "bisection"]);
    let mut moments = Table::new("moments.csv", &["xi", "t", "p", "target", "ln_moment"]);
    for pt in &diagram.points {
        let e = &pt.estimate;
        phase.push(vec![
            num(pt.xi),
            num(e.rate),
            num(e.stderr),
            num(e.r_squared),
            format!("{:?}", e.status).to_lowercase(),
            pt.bisection.to_string(),
        ]);
        for (t, v) in pt.series.times.iter().zip(&pt.series.log_values) {
            moments.push(vec![num(pt.xi), num(*t), num(e.p), e.target.clone(), num(*v)]);
        }
    }
    let mut art = Artifacts::new("sweep", &diagram)?;
    let regime = if noise.is_white() {
        "decay/growth transition under space-time white noise".to_owned()
    } else {
        format!("decay/growth transition under colored noise {}", noise.label())
    };
    let target = match diagram.target {
        SweepTarget::Node { x } => format!("E|u|^{} at x = {x}", diagram.p),
        SweepTarget::Energy { .. } => "the energy".to_owned(),
        SweepTarget::InteriorInfimum { epsilon } => format!("the interior infimum (margin {epsilon})"),
    };
    match (diagram.status, diagram.bracket) {
        (SweepStatus::Bracketed, Some([lo, hi])) => art.summary.push(format!(
            "{regime}: rate of {target} changes sign in xi in [{lo}, {hi}] (width {})",
            hi - lo
        )),
        _ => art.summary.push(format!("{regime}: no crossover in range for {target}")),
    }
    if let Some(x) = diagram.crossover_estimate {
        art.summary.push(format!("Monte Carlo rate indistinguishable from zero at xi = {x}"));
    }
    art.summary.push(format!(
        "rates nondecreasing in xi within 2 standard errors: {}",
        yes_no(diagram.monotone)
    ));
    let unresolved = diagram.points.iter().filter(|p| !p.estimate.is_resolved()).count();
    if unresolved > 0 {
        art.warnings.push(format!("{unresolved} sweep points have R^2 below 0.9 and are flagged unresolved"));
    }
    art.tables.push(phase);
    art.tables.push(moments);
    Ok(art)
}
