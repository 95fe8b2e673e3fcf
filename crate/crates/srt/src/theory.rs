//! Convergence-theorem verification: admissibility of the threshold pair,
//! the derived constants (k₀, η, rate), the step-length settling interval,
//! and the expected-optimality-gap envelope, all checked against controller
//! runs on synthetic quadratics whose population constants are exact by
//! construction.

use crate::controller::{ControllerError, SrtConfig, SrtController, VarianceMode};
use crate::datasets::{sample_batch, DatasetError, SyntheticQuadratic};
use crate::models::{ModelError, Objective};
use crate::numerics::SeededRng;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("constants are not admissible: {0}")]
    Inadmissible(String),
    #[error("invalid parameters: {0}")]
    Parameter(String),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Constants entering the convergence theorem.
#[derive(Debug, Clone)]
pub struct TheoremConstants {
    pub mu: f64,
    pub lipschitz: f64,
    /// Relative gradient-noise bound `M_V`.
    pub m_v: f64,
    /// Absolute gradient-noise bound `M`.
    pub m: f64,
    pub tau: f64,
    pub c1: f64,
    pub c2: f64,
    /// Ring buffer length `N`.
    pub buffer_len: usize,
    pub alpha0: f64,
}

impl TheoremConstants {
    /// Pull `μ, L, M_V, M` from a synthetic problem's exact population
    /// constants and combine with controller parameters.
    pub fn for_problem(
        problem: &SyntheticQuadratic,
        c1: f64,
        c2: f64,
        tau: f64,
        buffer_len: usize,
        alpha0: f64,
    ) -> Self {
        Self {
            mu: problem.mu(),
            lipschitz: problem.lipschitz(),
            m_v: problem.population_m_v(),
            m: problem.population_m(),
            tau,
            c1,
            c2,
            buffer_len,
            alpha0,
        }
    }

    /// `[μ/(τL²), 1/L]`, the interval the trial step settles into.
    pub fn settling_interval(&self) -> (f64, f64) {
        (
            self.mu / (self.tau * self.lipschitz * self.lipschitz),
            1.0 / self.lipschitz,
        )
    }

    fn controller_config(&self) -> SrtConfig {
        SrtConfig {
            alpha0: self.alpha0,
            c1: self.c1,
            c2: self.c2,
            tau: self.tau,
            buffer_len: self.buffer_len,
            variance_mode: VarianceMode::Oracle(self.m_v),
            denom_floor: 1e-12,
        }
    }
}

/// Result of the strict admissibility chain
/// `1 - μ/(2L) < c1 < c2 < 1 - μ/(2τL)`.
#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    /// Lower end `1 - μ/(2L)` the pair must exceed.
    pub lower: f64,
    /// Upper end `1 - μ/(2τL)` the pair must stay below.
    pub upper: f64,
    pub violations: Vec<String>,
}

impl fmt::Display for AdmissibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "admissible interval for (c1, c2): ({}, {})",
            self.lower, self.upper
        )?;
        if self.admissible {
            writeln!(f, "admissibility: PASS")
        } else {
            for v in &self.violations {
                writeln!(f, "violated: {v}")?;
            }
            writeln!(f, "admissibility: FAIL")
        }
    }
}

/// Check the strict chain `1 - μ/(2L) < c1 < c2 < 1 - μ/(2τL)` and report
/// every violated inequality.
pub fn check_admissible(tc: &TheoremConstants) -> AdmissibilityReport {
    let lower = 1.0 - tc.mu / (2.0 * tc.lipschitz);
    let upper = 1.0 - tc.mu / (2.0 * tc.tau * tc.lipschitz);
    let mut violations = Vec::new();
    if !(tc.mu > 0.0 && tc.lipschitz >= tc.mu) {
        violations.push(format!("0 < mu <= L (mu={}, L={})", tc.mu, tc.lipschitz));
    }
    if !(tc.tau > 1.0) {
        violations.push(format!("tau > 1 (tau={})", tc.tau));
    }
    if !(lower < tc.c1) {
        violations.push(format!("1 - mu/(2L) = {lower} < c1 = {}", tc.c1));
    }
    if !(tc.c1 < tc.c2) {
        violations.push(format!("c1 = {} < c2 = {}", tc.c1, tc.c2));
    }
    if !(tc.c2 < upper) {
        violations.push(format!("c2 = {} < 1 - mu/(2*tau*L) = {upper}", tc.c2));
    }
    AdmissibilityReport {
        admissible: violations.is_empty(),
        lower,
        upper,
        violations,
    }
}

/// Quantities the theorem derives from admissible constants.
#[derive(Debug, Clone, Copy)]
pub struct TheoremDerived {
    /// Settling iteration bound `N·⌈max(0, log_τ(μ/(τL²α₀)), log_τ(α₀/L))⌉`,
    /// with the ceiling turning the real-valued formula into an iteration
    /// count.
    pub k0: u64,
    /// Stationary-neighborhood radius `τM / (4μ(1-c1)(M_V+1))`.
    pub eta: f64,
    /// Geometric factor `1 - 2(1-c1)μ / (τ(M_V+1)L)`.
    pub rate: f64,
}

impl fmt::Display for TheoremDerived {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k0={} eta={} rate={}", self.k0, self.eta, self.rate)
    }
}

pub fn derive_constants(tc: &TheoremConstants) -> Result<TheoremDerived, TheoryError> {
    let adm = check_admissible(tc);
    if !adm.admissible {
        return Err(TheoryError::Inadmissible(adm.violations.join("; ")));
    }
    if !(tc.alpha0 > 0.0) || tc.buffer_len == 0 {
        return Err(TheoryError::Parameter(
            "need alpha0 > 0 and buffer_len >= 1".into(),
        ));
    }
    let log_tau = |x: f64| x.ln() / tc.tau.ln();
    let up = log_tau(tc.mu / (tc.tau * tc.lipschitz * tc.lipschitz * tc.alpha0));
    let down = log_tau(tc.alpha0 / tc.lipschitz);
    let k0_real = 0.0f64.max(up).max(down);
    let k0 = tc.buffer_len as u64 * k0_real.ceil() as u64;
    let eta = tc.tau * tc.m / (4.0 * tc.mu * (1.0 - tc.c1) * (tc.m_v + 1.0));
    let rate = 1.0 - 2.0 * (1.0 - tc.c1) * tc.mu / (tc.tau * (tc.m_v + 1.0) * tc.lipschitz);
    debug_assert!(rate > 0.0 && rate < 1.0);
    Ok(TheoremDerived { k0, eta, rate })
}

/// One controller run on a synthetic problem: per-iteration true optimality
/// gaps and trial-step trace.
struct Trajectory {
    gaps: Vec<f64>,
    alphas: Vec<f64>,
    final_alpha: f64,
    adjustments: u64,
}

fn run_trajectory(
    problem: &SyntheticQuadratic,
    tc: &TheoremConstants,
    horizon: usize,
    batch_size: Option<usize>,
    rng: &mut SeededRng,
) -> Result<Trajectory, TheoryError> {
    let n = Objective::num_samples(problem);
    let mut controller = SrtController::new(tc.controller_config())?;
    let mut w = Objective::initial_point(problem, rng);
    let mut gaps = Vec::with_capacity(horizon);
    let mut alphas = Vec::with_capacity(horizon);
    let full_batch: Vec<usize> = (0..n).collect();
    for _ in 0..horizon {
        gaps.push(problem.true_gap(&w));
        let batch = match batch_size {
            // independent uniform batches, matching the analysis
            Some(m) => sample_batch(n, m, rng)?,
            None => full_batch.clone(),
        };
        let out = controller.step(problem, &w, &batch)?;
        alphas.push(out.alpha_used);
        w = out.w_next;
    }
    Ok(Trajectory {
        gaps,
        alphas,
        final_alpha: controller.alpha(),
        adjustments: controller.state().adjustments(),
    })
}

/// Iteration index after the last observed trial-step change (0 when the
/// step never changed), i.e. the first iteration of the settled regime.
fn first_settled_iteration(alphas: &[f64]) -> u64 {
    let mut k_obs = 0;
    for k in 1..alphas.len() {
        if alphas[k] != alphas[k - 1] {
            k_obs = k;
        }
    }
    k_obs as u64
}

#[derive(Debug, Clone)]
pub struct SettlingReport {
    pub interval_low: f64,
    pub interval_high: f64,
    pub horizon: usize,
    /// Step constant from here to the end of the horizon.
    pub k_obs: u64,
    pub settled: bool,
    pub settled_alpha: f64,
    pub in_interval: bool,
    pub adjustments: u64,
    /// `N·max(0, log_τ(μ/(τL²α₀)), log_τ(α₀/L))` as printed in the theorem.
    pub k0_formula_printed: f64,
    /// Alternative reading with `log_τ(α₀·L)`, which matches how many
    /// decreases a too-large α₀ actually needs.
    pub k0_formula_alternative: f64,
    /// Empirical bound `N·(side_count + ⌈log_τ(τL/μ)⌉ + 1)` with the
    /// side-appropriate one-sided adjustment count.
    pub k_bound_one_sided: u64,
    /// Tail of the trial-step trace for diagnostics.
    pub alpha_tail: Vec<f64>,
}

impl SettlingReport {
    pub fn passed(&self) -> bool {
        self.settled && self.in_interval && self.k_obs <= self.k_bound_one_sided
    }
}

impl fmt::Display for SettlingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "== settling check ==")?;
        writeln!(
            f,
            "settling interval [{}, {}], horizon {}",
            self.interval_low, self.interval_high, self.horizon
        )?;
        writeln!(
            f,
            "K_obs={} settled={} settled_alpha={} in_interval={} adjustments={}",
            self.k_obs, self.settled, self.settled_alpha, self.in_interval, self.adjustments
        )?;
        writeln!(
            f,
            "k0 candidates: printed={} alternative={}; one-sided bound N*(side+span+1)={}",
            self.k0_formula_printed, self.k0_formula_alternative, self.k_bound_one_sided
        )?;
        if !self.settled {
            writeln!(f, "alpha trace tail: {:?}", self.alpha_tail)?;
        }
        writeln!(
            f,
            "settling: {}",
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Run the controller on a noiseless problem with full (deterministic)
/// batches and verify the trial step enters `[μ/(τL²), 1/L]` and stays
/// exactly constant, within the one-sided adjustment-count bound.
pub fn settling_check(
    problem: &SyntheticQuadratic,
    tc: &TheoremConstants,
    horizon: usize,
) -> Result<SettlingReport, TheoryError> {
    let adm = check_admissible(tc);
    if !adm.admissible {
        return Err(TheoryError::Inadmissible(adm.violations.join("; ")));
    }
    if horizon == 0 {
        return Err(TheoryError::Parameter("horizon must be >= 1".into()));
    }
    if problem.population_m() > 1e-12 || problem.population_m_v() > 1e-12 {
        return Err(TheoryError::Parameter(
            "settling check requires a noiseless problem".into(),
        ));
    }
    check_problem_matches(problem, tc)?;

    let mut rng = SeededRng::new(0); // unused: deterministic start, full batches
    let trajectory = run_trajectory(problem, tc, horizon, None, &mut rng)?;
    let (low, high) = tc.settling_interval();
    let k_obs = first_settled_iteration(&trajectory.alphas);
    let settled_alpha = *trajectory.alphas.last().expect("horizon >= 1");
    // settled means: a constant tail exists within the horizon and no
    // adjustment is pending at the end (controller alpha equals the tail)
    let settled = (k_obs as usize) < horizon && trajectory.final_alpha == settled_alpha;
    let slack = 1e-12;
    let in_interval =
        settled_alpha >= low * (1.0 - slack) && settled_alpha <= high * (1.0 + slack);

    let log_tau = |x: f64| x.ln() / tc.tau.ln();
    let k0_printed = tc.buffer_len as f64
        * 0.0f64
            .max(log_tau(
                tc.mu / (tc.tau * tc.lipschitz * tc.lipschitz * tc.alpha0),
            ))
            .max(log_tau(tc.alpha0 / tc.lipschitz));
    let k0_alt = tc.buffer_len as f64
        * 0.0f64
            .max(log_tau(
                tc.mu / (tc.tau * tc.lipschitz * tc.lipschitz * tc.alpha0),
            ))
            .max(log_tau(tc.alpha0 * tc.lipschitz));
    let side = if tc.alpha0 > high {
        log_tau(tc.alpha0 * tc.lipschitz).ceil() as u64
    } else if tc.alpha0 < low {
        log_tau(low / tc.alpha0).ceil() as u64
    } else {
        0
    };
    let span = log_tau(tc.tau * tc.lipschitz / tc.mu).ceil() as u64;
    let k_bound_one_sided = tc.buffer_len as u64 * (side + span + 1);

    let tail_len = trajectory.alphas.len().min(32);
    Ok(SettlingReport {
        interval_low: low,
        interval_high: high,
        horizon,
        k_obs,
        settled,
        settled_alpha,
        in_interval,
        adjustments: trajectory.adjustments,
        k0_formula_printed: k0_printed,
        k0_formula_alternative: k0_alt,
        k_bound_one_sided,
        alpha_tail: trajectory.alphas[trajectory.alphas.len() - tail_len..].to_vec(),
    })
}

fn check_problem_matches(
    problem: &SyntheticQuadratic,
    tc: &TheoremConstants,
) -> Result<(), TheoryError> {
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    if rel(problem.mu(), tc.mu) > 1e-9 || rel(problem.lipschitz(), tc.lipschitz) > 1e-9 {
        return Err(TheoryError::Parameter(format!(
            "problem has (mu, L) = ({}, {}), constants claim ({}, {})",
            problem.mu(),
            problem.lipschitz(),
            tc.mu,
            tc.lipschitz
        )));
    }
    if rel(problem.population_m(), tc.m) > 1e-9 || rel(problem.population_m_v(), tc.m_v) > 1e-9 {
        return Err(TheoryError::Parameter(format!(
            "problem has (M, M_V) = ({}, {}), constants claim ({}, {})",
            problem.population_m(),
            problem.population_m_v(),
            tc.m,
            tc.m_v
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeStatus {
    Passed,
    Failed,
    /// The step had not settled before the horizon ran out.
    NoPostSettlingIterations,
}

/// One checked iteration of the envelope comparison.
#[derive(Debug, Clone, Copy)]
pub struct EnvelopeCheckRow {
    pub k: u64,
    pub mean_gap: f64,
    pub bound: f64,
    pub std_error: f64,
    /// `bound - mean_gap`; negative means the envelope was violated.
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct EnvelopeReport {
    pub derived: TheoremDerived,
    pub num_seeds: usize,
    pub horizon: usize,
    pub batch_size: usize,
    pub k_obs: u64,
    pub status: EnvelopeStatus,
    pub rows: Vec<EnvelopeCheckRow>,
    pub failures: usize,
    pub worst_margin: f64,
}

impl fmt::Display for EnvelopeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "== envelope check ==")?;
        writeln!(
            f,
            "derived: {}; seeds={} horizon={} batch_size={} K_obs={}",
            self.derived, self.num_seeds, self.horizon, self.batch_size, self.k_obs
        )?;
        if self.status == EnvelopeStatus::NoPostSettlingIterations {
            return writeln!(f, "no post-settling iterations to check");
        }
        for row in &self.rows {
            writeln!(
                f,
                "k={} mean_gap={:.6e} bound={:.6e} se={:.3e} margin={:.6e} {}",
                row.k,
                row.mean_gap,
                row.bound,
                row.std_error,
                row.margin,
                if row.margin >= 0.0 { "PASS" } else { "FAIL" }
            )?;
        }
        writeln!(
            f,
            "checked {} iterations, {} failures, worst margin {:.6e}",
            self.rows.len(),
            self.failures,
            self.worst_margin
        )?;
        writeln!(
            f,
            "envelope: {}",
            if self.status == EnvelopeStatus::Passed {
                "PASS"
            } else {
                "FAIL"
            }
        )
    }
}

/// Run the controller in oracle variance mode over independent seeds and
/// compare the seed-averaged optimality gap at every post-settling iteration
/// against `η + rate^(k-K_obs)·(gap(K_obs) - η) + 3·SE(k)`.
///
/// Batches are drawn independently and uniformly each iteration; all seeds
/// share the deterministic starting point, so only sampling noise differs.
pub fn envelope_check(
    problem: &SyntheticQuadratic,
    tc: &TheoremConstants,
    num_seeds: usize,
    horizon: usize,
    batch_size: usize,
    base_seed: u64,
) -> Result<EnvelopeReport, TheoryError> {
    let derived = derive_constants(tc)?;
    if num_seeds == 0 || horizon == 0 {
        return Err(TheoryError::Parameter(
            "need num_seeds >= 1 and horizon >= 1".into(),
        ));
    }
    if batch_size == 0 || batch_size > Objective::num_samples(problem) {
        return Err(TheoryError::Parameter(format!(
            "batch_size {batch_size} invalid for {} samples",
            Objective::num_samples(problem)
        )));
    }
    check_problem_matches(problem, tc)?;

    let root = SeededRng::new(base_seed);
    let mut trajectories = Vec::with_capacity(num_seeds);
    for seed_index in 0..num_seeds {
        let mut rng = root.derive(seed_index as u64);
        trajectories.push(run_trajectory(
            problem,
            tc,
            horizon,
            Some(batch_size),
            &mut rng,
        )?);
    }

    let k_obs = trajectories
        .iter()
        .map(|t| first_settled_iteration(&t.alphas))
        .max()
        .expect("at least one seed");

    if k_obs as usize + 1 >= horizon {
        return Ok(EnvelopeReport {
            derived,
            num_seeds,
            horizon,
            batch_size,
            k_obs,
            status: EnvelopeStatus::NoPostSettlingIterations,
            rows: Vec::new(),
            failures: 0,
            worst_margin: 0.0,
        });
    }

    let mean_gap_at = |k: usize| -> (f64, f64) {
        let column: Vec<f64> = trajectories.iter().map(|t| t.gaps[k]).collect();
        let (mean, std) = crate::trainer::mean_std(&column);
        (mean, std / (num_seeds as f64).sqrt())
    };

    let (anchor_gap, _) = mean_gap_at(k_obs as usize);
    let mut rows = Vec::new();
    let mut failures = 0;
    let mut worst_margin = f64::INFINITY;
    for k in (k_obs as usize + 1)..horizon {
        let (mean_gap, std_error) = mean_gap_at(k);
        let decay = derived.rate.powi((k as u64 - k_obs) as i32);
        let bound = derived.eta + decay * (anchor_gap - derived.eta) + 3.0 * std_error;
        let margin = bound - mean_gap;
        if margin < 0.0 {
            failures += 1;
        }
        worst_margin = worst_margin.min(margin);
        rows.push(EnvelopeCheckRow {
            k: k as u64,
            mean_gap,
            bound,
            std_error,
            margin,
        });
    }

    Ok(EnvelopeReport {
        derived,
        num_seeds,
        horizon,
        batch_size,
        k_obs,
        status: if failures == 0 {
            EnvelopeStatus::Passed
        } else {
            EnvelopeStatus::Failed
        },
        rows,
        failures,
        worst_margin,
    })
}
