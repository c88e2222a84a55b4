//! Exponential-Euler time stepping of the mild formulation and streaming
//! Monte Carlo ensembles.
//!
//! One step maps `u_n` to
//!
//! ```text
//! u_{n+1} = E(dt) u_n + xi * B(dt) (sigma(u_n) * dF_n)
//! ```
//!
//! with `E(dt) = h P(dt)` and `dF_n` the increment of the noise over the
//! step (`N(0, dt/h)` per node for white noise, covariance `dt C` for colored
//! noise). `B(dt) = E(dt)` is the left-point rule; the default replaces each
//! modal factor `e^{-lambda dt}` by `sqrt((1 - e^{-2 lambda dt}) / (2 lambda dt))`
//! so the per-step variance of every mode matches the exact stochastic
//! convolution.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DomainGrid;
use crate::heatkernel::HeatKernelEvaluator;
use crate::noise::{dalang_check, CorrelationModel, NoiseIncrementSampler};
use crate::operator::GeneratorSpec;
use crate::rng::fill_standard_normal;
use crate::sigma::{validate_sigma, SigmaFunction};
use crate::stats::{CompensatedSum, Welford};

/// Paths advanced together as one matrix; fixed so results do not depend on
/// the worker count.
pub const BLOCK_PATHS: usize = 64;

/// Blocks reduced per wave (bounds peak memory of per-block accumulators).
const WAVE_BLOCKS: usize = 64;

/// How the noise term is propagated across one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseQuadrature {
    /// `B = E(dt)`: noise injected at the left end and carried by the kernel.
    LeftPoint,
    /// Modal factor `sqrt(-expm1(-2 lambda dt) / (2 lambda dt))`.
    #[default]
    VarianceMatched,
}

/// Propagators for a fixed step size.
#[derive(Debug, Clone)]
pub struct ExponentialEuler {
    pub dt: f64,
    pub quadrature: NoiseQuadrature,
    /// `E(dt) = h P(dt)`.
    pub transition: DMatrix<f64>,
    /// Noise propagator `B(dt)`.
    pub noise: DMatrix<f64>,
}

fn variance_matched_factor(lambda: f64, dt: f64) -> f64 {
    let z = 2.0 * lambda * dt;
    if z.abs() < 1e-8 {
        (1.0 - 0.5 * z).sqrt()
    } else {
        (-(-z).exp_m1() / z).sqrt()
    }
}

impl ExponentialEuler {
    pub fn new(eval: &HeatKernelEvaluator, dt: f64, quadrature: NoiseQuadrature) -> Result<Self> {
        let transition = eval.transition(dt)?;
        let noise = match quadrature {
            NoiseQuadrature::LeftPoint => transition.clone(),
            NoiseQuadrature::VarianceMatched => {
                let q = &eval.spectrum().vectors;
                let mut scaled = q.clone();
                for (k, &l) in eval.spectrum().eigenvalues.iter().enumerate() {
                    scaled.column_mut(k).scale_mut(variance_matched_factor(l, dt));
                }
                let m = scaled * q.transpose();
                (&m + m.transpose()) * 0.5
            }
        };
        Ok(Self {
            dt,
            quadrature,
            transition,
            noise,
        })
    }

    /// One step for a single path with a given noise increment `dF`.
    pub fn step(&self, state: &[f64], sigma: &SigmaFunction, xi: f64, increment: &[f64]) -> Result<Vec<f64>> {
        let n = self.transition.nrows();
        if state.len() != n || increment.len() != n {
            return Err(Error::Data(format!(
                "state/increment lengths {} / {} do not match the grid ({n})",
                state.len(),
                increment.len()
            )));
        }
        if let Some(i) = state.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite state {} at node {i}", state[i])));
        }
        let u = nalgebra::DVector::from_column_slice(state);
        let forcing = nalgebra::DVector::from_iterator(
            n,
            state.iter().zip(increment).map(|(&x, &df)| sigma.eval(x) * df),
        );
        let mut next = &self.transition * u;
        if xi != 0.0 {
            next.gemv(xi, &self.noise, &forcing, 1.0);
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("step overflowed to non-finite values".into()));
        }
        Ok(next.as_slice().to_vec())
    }
}

/// Everything needed to run one ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub spec: GeneratorSpec,
    pub grid: DomainGrid,
    pub noise: CorrelationModel,
    pub sigma: SigmaFunction,
    pub xi: f64,
    /// Initial grid function (nonnegative, bounded).
    pub u0: Vec<f64>,
    /// Interval `K` on which `u0` must carry positive mass.
    pub initial_support: [f64; 2],
    pub dt: f64,
    pub horizon: f64,
    pub paths: u64,
    pub seed: u64,
    /// Output times; each must be a multiple of `dt` in `[0, horizon]`.
    pub record_times: Vec<f64>,
    /// Moment orders `p >= 2`.
    pub moment_orders: Vec<f64>,
    #[serde(default)]
    pub quadrature: NoiseQuadrature,
}

fn step_index(t: f64, dt: f64, what: &str) -> Result<u64> {
    let k = (t / dt).round();
    if !(k >= 0.0) || (k * dt - t).abs() > 1e-9 * t.abs().max(dt) {
        return Err(Error::Config(format!("{what} {t} is not a multiple of the step {dt}")));
    }
    Ok(k as u64)
}

impl SimulationConfig {
    pub fn steps(&self) -> Result<u64> {
        step_index(self.horizon, self.dt, "horizon")
    }

    pub fn record_steps(&self) -> Result<Vec<u64>> {
        self.record_times.iter().map(|&t| step_index(t, self.dt, "record time")).collect()
    }

    /// `h * sum_{x_i in K} u0(x_i)`.
    pub fn initial_mass(&self) -> f64 {
        let [lo, hi] = self.initial_support;
        let idx = self.grid.indices_in(lo, hi);
        self.grid.h() * idx.iter().map(|&i| self.u0[i]).sum::<f64>()
    }

    /// Parameter checks that do not need the spectrum. Dalang failures are
    /// [`Error::Assumption`].
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.noise.validate()?;
        validate_sigma(&self.sigma)?;
        let verdict = dalang_check(&self.noise, self.spec.alpha());
        if !verdict.passed {
            return Err(Error::Assumption(format!(
                "Dalang condition fails for {} with alpha = {}: {}",
                self.noise.label(),
                self.spec.alpha(),
                verdict.note
            )));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::Validation(format!("noise level xi must be >= 0, got {}", self.xi)));
        }
        if self.u0.len() != self.grid.len() {
            return Err(Error::Validation(format!(
                "u0 has {} entries, grid has {}",
                self.u0.len(),
                self.grid.len()
            )));
        }
        if let Some(v) = self.u0.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Validation(format!("u0 must be finite and >= 0, found {v}")));
        }
        if !(self.initial_mass() > 0.0) {
            return Err(Error::Validation(format!(
                "u0 has no mass on K = [{}, {}]",
                self.initial_support[0], self.initial_support[1]
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Validation(format!("horizon must be positive, got {}", self.horizon)));
        }
        self.steps()?;
        if self.paths == 0 {
            return Err(Error::Validation("path count must be at least 1".into()));
        }
        if self.record_times.is_empty() {
            return Err(Error::Config("at least one record time is required".into()));
        }
        if self.record_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("record times must be strictly increasing".into()));
        }
        if let Some(t) = self.record_times.iter().find(|&&t| t < 0.0 || t > self.horizon * (1.0 + 1e-12)) {
            return Err(Error::Config(format!("record time {t} lies outside [0, {}]", self.horizon)));
        }
        self.record_steps()?;
        if self.moment_orders.is_empty() {
            return Err(Error::Config("at least one moment order is required".into()));
        }
        if let Some(p) = self.moment_orders.iter().find(|&&p| !(p >= 2.0 && p.is_finite())) {
            return Err(Error::Validation(format!("moment orders must be >= 2, got {p}")));
        }
        Ok(())
    }

    /// The accuracy guard `dt <= 0.1 / |mu1|`.
    pub fn check_step(&self, mu1: f64) -> Result<()> {
        let limit = 0.1 / mu1.abs();
        if mu1 != 0.0 && self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "dt = {} exceeds the accuracy guard 0.1 / mu1 = {limit}",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Streaming statistics at one `(time, node)` cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    /// Running mean / deviation of `u`.
    pub first: Welford,
    /// Running mean / deviation of `u^2`; gives `E|u|^2` and `E|u|^4`.
    pub second: Welford,
    /// `sum |u|^p` and `sum |u|^{2p}` per requested order.
    pub powers: Vec<[CompensatedSum; 2]>,
}

impl CellStats {
    fn new(orders: usize) -> Self {
        Self {
            powers: vec![[CompensatedSum::default(); 2]; orders],
            ..Self::default()
        }
    }

    #[inline]
    fn add(&mut self, u: f64, orders: &[f64]) {
        self.first.add(u);
        let a = u.abs();
        self.second.add(a * a);
        for (acc, &p) in self.powers.iter_mut().zip(orders) {
            let v = a.powf(p);
            acc[0].add(v);
            acc[1].add(v * v);
        }
    }

    fn merge(&mut self, other: &CellStats) {
        self.first.merge(&other.first);
        self.second.merge(&other.second);
        for (a, b) in self.powers.iter_mut().zip(&other.powers) {
            a[0].merge(&b[0]);
            a[1].merge(&b[1]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    /// More than 1% of paths diverged.
    Warning,
    /// More than half of the paths diverged.
    Unusable,
}

/// First step at which a path left the finite range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivergenceEvent {
    pub path: u64,
    pub step: u64,
}

/// Monte Carlo moments at the record times, reduced in path order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub nodes: Vec<f64>,
    pub moment_orders: Vec<f64>,
    pub paths: u64,
    /// Paths still finite at each record time.
    pub effective_paths: Vec<u64>,
    pub diverged_paths: u64,
    pub divergence_events: Vec<DivergenceEvent>,
    pub status: RunStatus,
    /// Fraction of negative values over live paths and nodes, per time.
    pub negative_fraction: Vec<f64>,
    /// `cells[t * nodes + i]`.
    pub cells: Vec<CellStats>,
    pub xi: f64,
    pub dt: f64,
}

/// A sample moment with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl EnsembleSummary {
    pub fn cell(&self, time: usize, node: usize) -> &CellStats {
        &self.cells[time * self.nodes.len() + node]
    }

    /// Sample mean of `u_t(x)`.
    pub fn mean(&self, time: usize, node: usize) -> Estimate {
        let w = &self.cell(time, node).first;
        Estimate {
            value: w.mean,
            stderr: w.stderr(),
        }
    }

    pub fn has_order(&self, p: f64) -> bool {
        p == 2.0 || p == 4.0 || self.moment_orders.contains(&p)
    }

    /// Sample `E|u_t(x)|^p`. Orders 2 and 4 come from the running moments of
    /// `u^2`, so the fourth sample moment is never below the squared second.
    pub fn moment(&self, p: f64, time: usize, node: usize) -> Result<Estimate> {
        let c = self.cell(time, node);
        let m = c.second.count;
        if p == 2.0 {
            return Ok(Estimate {
                value: c.second.mean,
                stderr: c.second.stderr(),
            });
        }
        if p == 4.0 {
            let e2 = c.second.mean;
            let value = e2 * e2 + c.second.population_variance();
            let k = self.moment_orders.iter().position(|&q| q == 4.0);
            let stderr = match k {
                Some(k) if m > 1 => {
                    let s2 = c.powers[k][1].value() / m as f64;
                    ((s2 - value * value).max(0.0) / (m - 1) as f64).sqrt()
                }
                _ => f64::NAN,
            };
            return Ok(Estimate { value, stderr });
        }
        let k = self
            .moment_orders
            .iter()
            .position(|&q| q == p)
            .ok_or_else(|| Error::Query(format!("moment order {p} was not recorded (have {:?})", self.moment_orders)))?;
        if m == 0 {
            return Ok(Estimate {
                value: f64::NAN,
                stderr: f64::NAN,
            });
        }
        let mf = m as f64;
        let value = c.powers[k][0].value() / mf;
        let s2 = c.powers[k][1].value() / mf;
        let stderr = if m > 1 {
            ((s2 - value * value).max(0.0) / (mf - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Estimate { value, stderr })
    }
}

struct BlockResult {
    cells: Vec<CellStats>,
    alive: Vec<u64>,
    negatives: Vec<u64>,
    events: Vec<DivergenceEvent>,
}

/// Values beyond this magnitude count as divergence: their `2p`-th powers
/// would overflow the accumulators.
fn overflow_guard(max_order: f64) -> f64 {
    1e300f64.powf(1.0 / (2.0 * max_order.max(4.0)))
}

struct Prepared<'a> {
    cfg: &'a SimulationConfig,
    stepper: ExponentialEuler,
    factor: Option<DMatrix<f64>>,
    record_steps: Vec<u64>,
    steps: u64,
    guard: f64,
}

impl Prepared<'_> {
    fn run_block(&self, first_path: u64, count: usize) -> BlockResult {
        let cfg = self.cfg;
        let n = cfg.grid.len();
        let h = cfg.grid.h();
        let nt = self.record_steps.len();
        let orders = &cfg.moment_orders;
        let mut cells = vec![CellStats::new(orders.len()); nt * n];
        let mut alive_at = vec![0u64; nt];
        let mut negatives = vec![0u64; nt];
        let mut events = Vec::new();
        let mut alive = vec![true; count];
        let mut u = DMatrix::<f64>::from_fn(n, count, |i, _| cfg.u0[i]);
        let mut next = DMatrix::<f64>::zeros(n, count);
        let mut z = DMatrix::<f64>::zeros(n, count);
        let mut forcing = DMatrix::<f64>::zeros(n, count);
        let white_scale = (cfg.dt / h).sqrt();
        let colored_scale = cfg.dt.sqrt();
        let mut rec = 0usize;

        let record = |u: &DMatrix<f64>, alive: &[bool], ti: usize, cells: &mut [CellStats], alive_at: &mut [u64], negatives: &mut [u64]| {
            for (j, &ok) in alive.iter().enumerate() {
                if !ok {
                    continue;
                }
                alive_at[ti] += 1;
                for i in 0..n {
                    let v = u[(i, j)];
                    if v < 0.0 {
                        negatives[ti] += 1;
                    }
                    cells[ti * n + i].add(v, orders);
                }
            }
        };

        while rec < nt && self.record_steps[rec] == 0 {
            record(&u, &alive, rec, &mut cells, &mut alive_at, &mut negatives);
            rec += 1;
        }
        for step in 0..self.steps {
            if cfg.xi != 0.0 {
                for (j, col) in z.column_iter_mut().enumerate() {
                    let path = first_path + j as u64;
                    fill_standard_normal(cfg.seed, path, step, col.data.into_slice_mut());
                }
                match &self.factor {
                    None => {
                        for ((f, zi), ui) in forcing.iter_mut().zip(z.iter()).zip(u.iter()) {
                            *f = cfg.sigma.eval(*ui) * white_scale * zi;
                        }
                    }
                    Some(l) => {
                        forcing.gemm(colored_scale, l, &z, 0.0);
                        for (f, ui) in forcing.iter_mut().zip(u.iter()) {
                            *f *= cfg.sigma.eval(*ui);
                        }
                    }
                }
            }
            next.gemm(1.0, &self.stepper.transition, &u, 0.0);
            if cfg.xi != 0.0 {
                next.gemm(cfg.xi, &self.stepper.noise, &forcing, 1.0);
            }
            std::mem::swap(&mut u, &mut next);
            for (j, ok) in alive.iter_mut().enumerate() {
                if !*ok {
                    continue;
                }
                let mut col = u.column_mut(j);
                if col.iter().any(|v| !(v.abs() <= self.guard)) {
                    *ok = false;
                    events.push(DivergenceEvent {
                        path: first_path + j as u64,
                        step: step + 1,
                    });
                    col.fill(0.0);
                }
            }
            while rec < nt && self.record_steps[rec] == step + 1 {
                record(&u, &alive, rec, &mut cells, &mut alive_at, &mut negatives);
                rec += 1;
            }
        }
        BlockResult {
            cells,
            alive: alive_at,
            negatives,
            events,
        }
    }
}

/// Run `cfg.paths` independent paths and reduce their statistics.
pub fn simulate_ensemble(cfg: &SimulationConfig) -> Result<EnsembleSummary> {
    cfg.validate()?;
    let eval = HeatKernelEvaluator::for_spec(cfg.spec, &cfg.grid)?;
    simulate_ensemble_with(cfg, &eval)
}

/// [`simulate_ensemble`] reusing an existing spectrum.
pub fn simulate_ensemble_with(cfg: &SimulationConfig, eval: &HeatKernelEvaluator) -> Result<EnsembleSummary> {
    cfg.validate()?;
    if eval.grid() != &cfg.grid || eval.spectrum().spec != cfg.spec {
        return Err(Error::Config("evaluator does not match the simulation operator/grid".into()));
    }
    cfg.check_step(eval.mu1())?;
    let stepper = ExponentialEuler::new(eval, cfg.dt, cfg.quadrature)?;
    let factor = if cfg.noise.is_white() {
        None
    } else {
        let sampler = NoiseIncrementSampler::for_model(cfg.noise, &cfg.grid, cfg.seed)?;
        sampler.factor().cloned()
    };
    let max_order = cfg.moment_orders.iter().copied().fold(4.0, f64::max);
    let prepared = Prepared {
        cfg,
        stepper,
        factor,
        record_steps: cfg.record_steps()?,
        steps: cfg.steps()?,
        guard: overflow_guard(max_order),
    };
    let n = cfg.grid.len();
    let nt = cfg.record_times.len();
    let blocks = cfg.paths.div_ceil(BLOCK_PATHS as u64);
    let mut cells = vec![CellStats::new(cfg.moment_orders.len()); nt * n];
    let mut alive = vec![0u64; nt];
    let mut negatives = vec![0u64; nt];
    let mut events = Vec::new();
    let mut wave_start = 0u64;
    while wave_start < blocks {
        let wave_end = (wave_start + WAVE_BLOCKS as u64).min(blocks);
        let results: Vec<BlockResult> = (wave_start..wave_end)
            .into_par_iter()
            .map(|b| {
                let first = b * BLOCK_PATHS as u64;
                let count = (cfg.paths - first).min(BLOCK_PATHS as u64) as usize;
                prepared.run_block(first, count)
            })
            .collect();
        for r in results {
            for (a, b) in cells.iter_mut().zip(&r.cells) {
                a.merge(b);
            }
            for t in 0..nt {
                alive[t] += r.alive[t];
                negatives[t] += r.negatives[t];
            }
            events.extend(r.events);
        }
        wave_start = wave_end;
    }
    let diverged = events.len() as u64;
    let frac = diverged as f64 / cfg.paths as f64;
    let status = if frac > 0.5 {
        RunStatus::Unusable
    } else if frac > 0.01 {
        RunStatus::Warning
    } else {
        RunStatus::Ok
    };
    let negative_fraction = (0..nt)
        .map(|t| {
            if alive[t] == 0 {
                0.0
            } else {
                negatives[t] as f64 / (alive[t] as f64 * n as f64)
            }
        })
        .collect();
    Ok(EnsembleSummary {
        times: cfg.record_times.clone(),
        nodes: cfg.grid.nodes().to_vec(),
        moment_orders: cfg.moment_orders.clone(),
        paths: cfg.paths,
        effective_paths: alive,
        diverged_paths: diverged,
        divergence_events: events,
        status,
        negative_fraction,
        cells,
        xi: cfg.xi,
        dt: cfg.dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(n: usize, xi: f64, paths: u64) -> SimulationConfig {
        let grid = DomainGrid::new(1.0, n).unwrap();
        SimulationConfig {
            spec: GeneratorSpec::Fractional { alpha: 1.5, nu: 1.0 },
            u0: vec![1.0; n],
            grid,
            noise: CorrelationModel::White,
            sigma: SigmaFunction::Linear { c: 1.0 },
            xi,
            initial_support: [-0.5, 0.5],
            dt: 0.01,
            horizon: 0.2,
            paths,
            seed: 42,
            record_times: vec![0.0, 0.1, 0.2],
            moment_orders: vec![2.0, 3.0, 4.0],
            quadrature: NoiseQuadrature::VarianceMatched,
        }
    }

    #[test]
    fn zero_noise_is_the_semigroup() {
        let cfg = config(24, 0.0, 70);
        let s = simulate_ensemble(&cfg).unwrap();
        let eval = HeatKernelEvaluator::for_spec(cfg.spec, &cfg.grid).unwrap();
        let exact = eval.apply_semigroup(0.2, &cfg.u0).unwrap();
        for (i, e) in exact.iter().enumerate() {
            let m = s.moment(2.0, 2, i).unwrap();
            assert!((m.value - e * e).abs() <= 1e-11 * e * e);
            assert!(m.stderr <= 1e-12 * e * e);
        }
    }

    #[test]
    fn zero_state_is_absorbing() {
        let cfg = config(16, 3.0, 1);
        let eval = HeatKernelEvaluator::for_spec(cfg.spec, &cfg.grid).unwrap();
        let st = ExponentialEuler::new(&eval, 0.01, NoiseQuadrature::LeftPoint).unwrap();
        let df = vec![0.7; 16];
        assert_eq!(st.step(&[0.0; 16], &cfg.sigma, 3.0, &df).unwrap(), vec![0.0; 16]);
    }

    #[test]
    fn cauchy_schwarz_exact_and_worker_independent() {
        let cfg = config(16, 2.0, 200);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| simulate_ensemble(&cfg)).unwrap();
        let b = three.install(|| simulate_ensemble(&cfg)).unwrap();
        assert_eq!(a, b);
        for t in 0..3 {
            for i in 0..16 {
                let e2 = a.moment(2.0, t, i).unwrap().value;
                let e4 = a.moment(4.0, t, i).unwrap().value;
                assert!(e4 >= e2 * e2);
            }
        }
        assert!(a.moment(5.0, 1, 0).is_err());
    }

    #[test]
    fn step_guard_and_validation() {
        let mut cfg = config(16, 1.0, 4);
        cfg.dt = 0.2;
        cfg.record_times = vec![0.2];
        assert_eq!(simulate_ensemble(&cfg).unwrap_err().kind(), "config");
        let mut bad = config(16, 1.0, 4);
        bad.u0[3] = -1.0;
        assert_eq!(bad.validate().unwrap_err().kind(), "validation");
        let mut dalang = config(16, 1.0, 4);
        dalang.spec = GeneratorSpec::Fractional { alpha: 0.9, nu: 1.0 };
        assert_eq!(dalang.validate().unwrap_err().kind(), "assumption");
    }

    #[test]
    fn divergence_is_counted() {
        let mut cfg = config(16, 400.0, 64);
        cfg.horizon = 1.0;
        cfg.dt = 0.05;
        cfg.record_times = vec![0.0, 1.0];
        let s = simulate_ensemble(&cfg).unwrap();
        assert!(s.diverged_paths > 0);
        assert_eq!(s.effective_paths[0], 64);
        assert_eq!(s.effective_paths[1], 64 - s.diverged_paths);
        assert_eq!(s.status, RunStatus::Unusable);
    }
}
