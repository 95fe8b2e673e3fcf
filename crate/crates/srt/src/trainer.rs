//! Training loops in three modes — adaptive (SRT), fixed step, and the
//! theoretical step `α = 1/(L(M_V+1))` — streaming one telemetry record per
//! iteration. All three record the progress and variance ratios, so a fixed
//! step length reproduces the ratio studies unchanged.

use crate::controller::{
    progress_ratio, variance_ratio, ControllerError, SrtConfig, SrtController,
};
use crate::datasets::{epoch_batches, DatasetError};
use crate::models::{ModelError, Objective};
use crate::numerics::{axpy, DenseVector, SeededRng};
use std::io::Write;
use thiserror::Error;

/// Batch losses above this (or non-finite) terminate a run as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Telemetry is flushed to the sink every this many records.
pub const FLUSH_INTERVAL: u64 = 1000;

/// Exact column set of `records.csv`.
pub const CSV_HEADER: &str =
    "iter,epoch,batch_loss,alpha,alpha_eff,rho_hat,m_hat,v_hat,grad_sq_norm,full_loss";

/// Salts for deriving independent per-purpose streams from one run seed.
const INIT_STREAM_SALT: u64 = 0x1;
const BATCH_STREAM_SALT: u64 = 0x2;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("telemetry write failed: {0}")]
    Sink(#[from] std::io::Error),
    #[error("invalid run config: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub enum RunMode {
    /// Adaptive step lengths via the ratio-tracking controller.
    Srt(SrtConfig),
    /// Constant step `w ← w - α∇F_S`; ratios are recorded but never acted on.
    Fixed { alpha: f64 },
    /// Constant step `α = 1/(L(M_V+1))` from known problem constants.
    Theoretical { lipschitz: f64, variance_ratio: f64 },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: RunMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Evaluate the full-dataset loss every this many iterations; 0 = never.
    pub eval_full_loss_every: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        match &self.mode {
            RunMode::Srt(cfg) => cfg.validate().map_err(TrainError::from)?,
            RunMode::Fixed { alpha } => {
                if !(alpha.is_finite() && *alpha > 0.0) {
                    return Err(TrainError::Config(format!(
                        "fixed alpha must be positive, got {alpha}"
                    )));
                }
            }
            RunMode::Theoretical {
                lipschitz,
                variance_ratio,
            } => {
                if !(*lipschitz > 0.0 && lipschitz.is_finite()) {
                    return Err(TrainError::Config(format!(
                        "lipschitz constant must be positive, got {lipschitz}"
                    )));
                }
                if !(*variance_ratio >= 0.0 && variance_ratio.is_finite()) {
                    return Err(TrainError::Config(format!(
                        "variance ratio must be nonnegative, got {variance_ratio}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One CSV row of training telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: u64,
    pub epoch: usize,
    pub batch_loss: f64,
    /// Trial step `α_k` the ratios were evaluated at.
    pub alpha: f64,
    /// Step actually applied to the iterate (≤ alpha).
    pub alpha_eff: f64,
    /// None when the progress-ratio sample was invalid.
    pub rho_hat: Option<f64>,
    pub m_hat: f64,
    pub v_hat: f64,
    pub grad_sq_norm: f64,
    /// None when the full loss was not evaluated this iteration.
    pub full_loss: Option<f64>,
}

impl IterationRecord {
    pub fn all_finite(&self) -> bool {
        self.batch_loss.is_finite()
            && self.alpha.is_finite()
            && self.alpha_eff.is_finite()
            && self.rho_hat.map_or(true, f64::is_finite)
            && self.m_hat.is_finite()
            && self.v_hat.is_finite()
            && self.grad_sq_norm.is_finite()
            && self.full_loss.map_or(true, f64::is_finite)
    }

    /// Shortest round-trip decimal formatting; empty cells for absent values.
    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.iter,
            self.epoch,
            self.batch_loss,
            self.alpha,
            self.alpha_eff,
            opt(self.rho_hat),
            self.m_hat,
            self.v_hat,
            self.grad_sq_norm,
            opt(self.full_loss),
        )
    }
}

/// Destination for streamed iteration records.
pub trait RecordSink: Send {
    fn record(&mut self, record: &IterationRecord) -> std::io::Result<()>;
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// CSV writer emitting the fixed header up front and flushing every
/// [`FLUSH_INTERVAL`] records so a crash loses at most one buffer.
pub struct CsvSink<W: Write + Send> {
    writer: W,
    written: u64,
}

impl<W: Write + Send> CsvSink<W> {
    pub fn new(mut writer: W) -> std::io::Result<Self> {
        writeln!(writer, "{CSV_HEADER}")?;
        Ok(Self { writer, written: 0 })
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: Write + Send> RecordSink for CsvSink<W> {
    fn record(&mut self, record: &IterationRecord) -> std::io::Result<()> {
        writeln!(self.writer, "{}", record.to_csv_row())?;
        self.written += 1;
        if self.written % FLUSH_INTERVAL == 0 {
            self.writer.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.writer.flush()
    }
}

/// Keeps all records in memory; used by tests and the theory checks.
#[derive(Default)]
pub struct MemorySink {
    pub records: Vec<IterationRecord>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }
}

impl RecordSink for MemorySink {
    fn record(&mut self, record: &IterationRecord) -> std::io::Result<()> {
        self.records.push(record.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrainStatus {
    Completed,
    Diverged { iteration: u64 },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_parameters: DenseVector,
    pub status: TrainStatus,
    pub iterations: u64,
    /// Final trial step (the constant α in fixed/theoretical modes).
    pub final_alpha: f64,
    pub final_batch_loss: f64,
    pub increases: u64,
    pub decreases: u64,
}

/// Run `epochs · ⌈n/m⌉` iterations of the configured mode, emitting one
/// record per iteration. Initialization and batch order derive from the run
/// seed through independent streams, so identical configs produce
/// byte-identical telemetry.
pub fn train<O: Objective + ?Sized>(
    objective: &O,
    config: &RunConfig,
    sink: &mut dyn RecordSink,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let n = objective.num_samples();
    if config.batch_size > n {
        return Err(TrainError::Config(format!(
            "batch_size {} exceeds dataset size {n}",
            config.batch_size
        )));
    }

    let root = SeededRng::new(config.seed);
    let mut init_rng = root.derive(INIT_STREAM_SALT);
    let mut batch_rng = root.derive(BATCH_STREAM_SALT);
    let mut w = objective.initial_point(&mut init_rng);

    let mut controller = match &config.mode {
        RunMode::Srt(cfg) => Some(SrtController::new(cfg.clone())?),
        _ => None,
    };
    let denom_floor = match &config.mode {
        RunMode::Srt(cfg) => cfg.denom_floor,
        _ => 1e-12,
    };

    let mut iter: u64 = 0;
    let mut final_batch_loss = f64::NAN;
    for epoch in 0..config.epochs {
        for batch in epoch_batches(n, config.batch_size, &mut batch_rng)? {
            let indices = &batch.indices;

            let (record, w_next, batch_loss) = match &config.mode {
                RunMode::Srt(_) => {
                    let controller = controller.as_mut().expect("srt mode has a controller");
                    let out = controller.step(objective, &w, indices)?;
                    let record = IterationRecord {
                        iter,
                        epoch,
                        batch_loss: out.batch_loss,
                        alpha: out.alpha_used,
                        alpha_eff: out.alpha_eff,
                        rho_hat: out.sample.valid_rho.then_some(out.sample.rho_hat),
                        m_hat: out.sample.m_hat,
                        v_hat: out.sample.v_hat,
                        grad_sq_norm: out.grad_sq_norm,
                        full_loss: None,
                    };
                    (record, out.w_next, out.batch_loss)
                }
                RunMode::Fixed { alpha } => {
                    fixed_alpha_step(objective, &w, indices, *alpha, denom_floor, iter, epoch)?
                }
                RunMode::Theoretical {
                    lipschitz,
                    variance_ratio,
                } => {
                    let alpha = 1.0 / (lipschitz * (variance_ratio + 1.0));
                    fixed_alpha_step(objective, &w, indices, alpha, denom_floor, iter, epoch)?
                }
            };

            let mut record = record;
            if config.eval_full_loss_every > 0 && iter % config.eval_full_loss_every as u64 == 0 {
                record.full_loss = Some(objective.full_loss(&w)?);
            }

            let diverged = !batch_loss.is_finite() || batch_loss > DIVERGENCE_THRESHOLD;
            if record.all_finite() {
                sink.record(&record)?;
            }
            if diverged {
                sink.flush()?;
                return Ok(TrainOutcome {
                    final_parameters: w,
                    status: TrainStatus::Diverged { iteration: iter },
                    iterations: iter,
                    final_alpha: record.alpha,
                    final_batch_loss: batch_loss,
                    increases: controller.as_ref().map_or(0, |c| c.state().increases()),
                    decreases: controller.as_ref().map_or(0, |c| c.state().decreases()),
                });
            }

            w = w_next;
            final_batch_loss = batch_loss;
            iter += 1;
        }
    }
    sink.flush()?;

    let final_alpha = match &config.mode {
        RunMode::Srt(_) => controller.as_ref().expect("srt controller").alpha(),
        RunMode::Fixed { alpha } => *alpha,
        RunMode::Theoretical {
            lipschitz,
            variance_ratio,
        } => 1.0 / (lipschitz * (variance_ratio + 1.0)),
    };
    Ok(TrainOutcome {
        final_parameters: w,
        status: TrainStatus::Completed,
        iterations: iter,
        final_alpha,
        final_batch_loss,
        increases: controller.as_ref().map_or(0, |c| c.state().increases()),
        decreases: controller.as_ref().map_or(0, |c| c.state().decreases()),
    })
}

/// One constant-step iteration: `w ← w - α∇F_S`, ratios recorded for
/// telemetry only. The trial point of ρ̂ is exactly the next iterate, so no
/// second vector update is needed.
fn fixed_alpha_step<O: Objective + ?Sized>(
    objective: &O,
    w: &DenseVector,
    indices: &[usize],
    alpha: f64,
    denom_floor: f64,
    iter: u64,
    epoch: usize,
) -> Result<(IterationRecord, DenseVector, f64), TrainError> {
    let eval = objective.evaluate_batch(w, indices)?;
    let grad_sq = eval.gradient.squared_norm();
    let direction = eval.gradient.scaled(-1.0);
    let trial = axpy(alpha, &direction, w).map_err(ModelError::from)?;
    let loss_at_trial = objective.evaluate_loss(&trial, indices)?;
    let (rho_raw, denom_ok) = progress_ratio(loss_at_trial, eval.loss, alpha, -grad_sq, denom_floor);
    let valid_rho = denom_ok && loss_at_trial.is_finite() && rho_raw.is_finite();
    let (m_hat, v_hat) = variance_ratio(eval.mean_per_sample_sq_norm, grad_sq, denom_floor);
    let record = IterationRecord {
        iter,
        epoch,
        batch_loss: eval.loss,
        alpha,
        alpha_eff: alpha,
        rho_hat: valid_rho.then_some(rho_raw),
        m_hat,
        v_hat,
        grad_sq_norm: grad_sq,
        full_loss: None,
    };
    let batch_loss = eval.loss;
    Ok((record, trial, batch_loss))
}

/// One `(alpha, batch_size)` cell of a ratio study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub alpha: f64,
    pub batch_size: usize,
}

/// Summary of one cell: ratio statistics over the cell's records (ρ̂ over
/// valid samples only).
#[derive(Debug, Clone)]
pub struct GridCellResult {
    pub cell: GridCell,
    pub status: TrainStatus,
    pub iterations: u64,
    pub rho_count: u64,
    pub mean_rho: f64,
    pub std_rho: f64,
    pub mean_m_hat: f64,
    pub std_m_hat: f64,
    pub final_batch_loss: f64,
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = crate::numerics::sum_slice(values) / n;
    let mut acc = 0.0;
    for v in values {
        let d = v - mean;
        acc += d * d;
    }
    (mean, (acc / n).sqrt())
}

struct StatsSink<'a> {
    inner: &'a mut dyn RecordSink,
    rho: Vec<f64>,
    m_hat: Vec<f64>,
}

impl RecordSink for StatsSink<'_> {
    fn record(&mut self, record: &IterationRecord) -> std::io::Result<()> {
        if let Some(rho) = record.rho_hat {
            self.rho.push(rho);
        }
        self.m_hat.push(record.m_hat);
        self.inner.record(record)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

/// Run a fixed-step training for every `(alpha, batch_size)` grid cell.
///
/// Cell seeds derive as `seed ⊕ cell_index` (row-major over alphas ×
/// batch_sizes) so cells are reproducible independently of scheduling. With
/// `threads > 1` cells run concurrently; records never interleave because
/// each cell owns its sink. A diverged cell is reported in its result and
/// the grid continues.
pub fn fixed_step_ratio_study<O, F>(
    objective: &O,
    alphas: &[f64],
    batch_sizes: &[usize],
    epochs: usize,
    seed: u64,
    threads: usize,
    mut make_sink: F,
) -> Result<Vec<GridCellResult>, TrainError>
where
    O: Objective + Sync + ?Sized,
    F: FnMut(&GridCell) -> Result<Box<dyn RecordSink>, TrainError>,
{
    if alphas.is_empty() || batch_sizes.is_empty() {
        return Err(TrainError::Config(
            "ratio study needs at least one alpha and one batch size".into(),
        ));
    }
    let mut cells = Vec::new();
    for &alpha in alphas {
        for &batch_size in batch_sizes {
            cells.push(GridCell { alpha, batch_size });
        }
    }
    let mut sinks = Vec::with_capacity(cells.len());
    for cell in &cells {
        sinks.push(make_sink(cell)?);
    }

    let run_cell = |index: usize,
                    cell: GridCell,
                    sink: &mut dyn RecordSink|
     -> Result<GridCellResult, TrainError> {
        let config = RunConfig {
            mode: RunMode::Fixed { alpha: cell.alpha },
            epochs,
            batch_size: cell.batch_size,
            seed: seed ^ index as u64,
            eval_full_loss_every: 0,
        };
        let mut stats = StatsSink {
            inner: sink,
            rho: Vec::new(),
            m_hat: Vec::new(),
        };
        let outcome = train(objective, &config, &mut stats)?;
        let (mean_rho, std_rho) = mean_std(&stats.rho);
        let (mean_m_hat, std_m_hat) = mean_std(&stats.m_hat);
        Ok(GridCellResult {
            cell,
            status: outcome.status,
            iterations: outcome.iterations,
            rho_count: stats.rho.len() as u64,
            mean_rho,
            std_rho,
            mean_m_hat,
            std_m_hat,
            final_batch_loss: outcome.final_batch_loss,
        })
    };

    let threads = threads.max(1).min(cells.len());
    let jobs: Vec<(usize, GridCell, Box<dyn RecordSink>)> = cells
        .into_iter()
        .enumerate()
        .zip(sinks)
        .map(|((index, cell), sink)| (index, cell, sink))
        .collect();
    let mut results: Vec<Option<GridCellResult>> = Vec::new();
    results.resize_with(jobs.len(), || None);

    if threads == 1 {
        for (index, cell, mut sink) in jobs {
            results[index] = Some(run_cell(index, cell, sink.as_mut())?);
        }
    } else {
        let errors: std::sync::Mutex<Vec<TrainError>> = std::sync::Mutex::new(Vec::new());
        let done: std::sync::Mutex<Vec<(usize, GridCellResult)>> =
            std::sync::Mutex::new(Vec::new());
        let queue: std::sync::Mutex<Vec<(usize, GridCell, Box<dyn RecordSink>)>> =
            std::sync::Mutex::new(jobs);
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| loop {
                    let job = queue.lock().expect("queue lock").pop();
                    let Some((index, cell, mut sink)) = job else {
                        break;
                    };
                    match run_cell(index, cell, sink.as_mut()) {
                        Ok(result) => done.lock().expect("done lock").push((index, result)),
                        Err(err) => errors.lock().expect("error lock").push(err),
                    }
                });
            }
        });
        if let Some(err) = errors.into_inner().expect("error lock").into_iter().next() {
            return Err(err);
        }
        for (index, result) in done.into_inner().expect("done lock") {
            results[index] = Some(result);
        }
    }

    Ok(results
        .into_iter()
        .map(|r| r.expect("every cell produced a result"))
        .collect())
}
