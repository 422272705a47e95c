//! Experiment pipeline: split, distance model, global models, anchors,
//! local models, ensemble and evaluation, swept over ranks and anchor
//! counts.
//!
//! Every random choice is driven by a seed derived from the master seed, so
//! a run is a pure function of the input bytes and the configuration. The
//! worker count only changes how fast it runs.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;

use crate::data::{parse_ratings, split_train_test, ObservedMatrix, RatingFormat, RatingScale};
use crate::ensemble::{evaluate_with, global_prediction, EnsembleModel, Metrics};
use crate::error::{LrmaError, Result};
use crate::factor::{train_global, FactorPair, Solver, TrainConfig};
use crate::kernel::{DistanceModel, KernelConfig, KernelKind};
use crate::local::{anchor_candidates, anchor_seed, train_local, Anchor, LocalModel};
use crate::nuclear::{svt_complete, svt_local, SvtConfig};

/// Relative singular-value cutoff when turning dense solutions into factors.
const DENSE_RANK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverTag {
    Als,
    Sgd,
    /// Dense nuclear-norm solver; ranks come out of the solution.
    Svt,
}

impl FromStr for SolverTag {
    type Err = LrmaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "als" => Ok(SolverTag::Als),
            "sgd" => Ok(SolverTag::Sgd),
            "svt" => Ok(SolverTag::Svt),
            other => Err(LrmaError::invalid(format!("unknown solver '{other}'"))),
        }
    }
}

impl fmt::Display for SolverTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverTag::Als => "als",
            SolverTag::Sgd => "sgd",
            SolverTag::Svt => "svt",
        })
    }
}

/// Everything that shapes the models, independent of the data source.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub kernel: KernelConfig,
    pub lambda: f64,
    pub solver: SolverTag,
    /// Rank of the global fit whose factors feed the arccos distance.
    pub distance_rank: usize,
    pub max_epochs: usize,
    pub tolerance: f64,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        ModelSettings {
            kernel: KernelConfig::default(),
            lambda: t.lambda,
            solver: SolverTag::Als,
            distance_rank: 10,
            max_epochs: t.max_epochs,
            tolerance: t.tolerance,
            learning_rate: t.learning_rate,
            seed: 0,
        }
    }
}

fn derive_seed(master: u64, stream: u64, index: usize) -> u64 {
    anchor_seed(anchor_seed(master, stream as usize), index)
}

const STREAM_DISTANCE: u64 = 1;
const STREAM_GLOBAL: u64 = 2;
const STREAM_ANCHORS: u64 = 3;
const STREAM_LOCAL: u64 = 4;

/// Models trained on one training split.
pub struct Pipeline<'a> {
    train: &'a ObservedMatrix,
    settings: ModelSettings,
    dm: DistanceModel,
    svt: SvtConfig,
}

impl<'a> Pipeline<'a> {
    /// Fits the distance model (always ALS, at `distance_rank`).
    pub fn new(train: &'a ObservedMatrix, settings: ModelSettings) -> Result<Self> {
        settings.kernel.validate()?;
        let distance_rank = settings
            .distance_rank
            .min(train.n_rows().min(train.n_cols()))
            .max(1);
        let cfg = TrainConfig {
            rank: distance_rank,
            solver: Solver::Als,
            seed: derive_seed(settings.seed, STREAM_DISTANCE, 0),
            ..Self::train_config_for(&settings, distance_rank)
        };
        let factors = train_global(train, &cfg)?;
        let dm = DistanceModel::from_factors(&factors);
        let zero_rows = dm.zero_rows().len();
        if zero_rows > 0 {
            info!("{zero_rows} rows have zero distance features");
        }
        let svt = SvtConfig::for_observed(train);
        Ok(Pipeline {
            train,
            settings,
            dm,
            svt,
        })
    }

    fn train_config_for(settings: &ModelSettings, rank: usize) -> TrainConfig {
        TrainConfig {
            rank,
            lambda: settings.lambda,
            learning_rate: settings.learning_rate,
            max_epochs: settings.max_epochs,
            tolerance: settings.tolerance,
            seed: settings.seed,
            solver: match settings.solver {
                SolverTag::Sgd => Solver::Sgd,
                _ => Solver::Als,
            },
        }
    }

    pub fn distance_model(&self) -> &DistanceModel {
        &self.dm
    }

    pub fn settings(&self) -> &ModelSettings {
        &self.settings
    }

    /// Replaces the fitted distance model (dimensions must match).
    pub fn with_distance_model(mut self, dm: DistanceModel) -> Result<Self> {
        if dm.n_rows() != self.train.n_rows() || dm.n_cols() != self.train.n_cols() {
            return Err(LrmaError::shape(
                format!("{}x{}", self.train.n_rows(), self.train.n_cols()),
                format!("{}x{}", dm.n_rows(), dm.n_cols()),
            ));
        }
        self.dm = dm;
        Ok(self)
    }

    /// Overrides the data-scaled nuclear-norm settings.
    pub fn with_svt_config(mut self, cfg: SvtConfig) -> Self {
        self.svt = cfg;
        self
    }

    pub fn global(&self, rank: usize) -> Result<FactorPair> {
        match self.settings.solver {
            SolverTag::Svt => {
                let report = svt_complete(self.train, &self.svt)?;
                if !report.converged {
                    warn!("global nuclear-norm solve stopped at max_iters");
                }
                FactorPair::from_dense(&report.x, DENSE_RANK_TOL)
            }
            _ => {
                let cfg = TrainConfig {
                    seed: derive_seed(self.settings.seed, STREAM_GLOBAL, rank),
                    ..Self::train_config_for(&self.settings, rank)
                };
                train_global(self.train, &cfg)
            }
        }
    }

    fn fit_local(&self, rank: usize, index: usize, anchor: Anchor) -> Result<LocalModel> {
        match self.settings.solver {
            SolverTag::Svt => {
                let report = svt_local(
                    self.train,
                    anchor,
                    &self.dm,
                    &self.settings.kernel,
                    &self.svt,
                )?;
                Ok(LocalModel {
                    anchor,
                    factors: FactorPair::from_dense(&report.x, DENSE_RANK_TOL)?,
                })
            }
            _ => {
                let cfg = TrainConfig {
                    seed: anchor_seed(derive_seed(self.settings.seed, STREAM_LOCAL, rank), index),
                    ..Self::train_config_for(&self.settings, rank)
                };
                train_local(self.train, anchor, &self.dm, &self.settings.kernel, &cfg)
            }
        }
    }

    /// Trains up to `q` local models on anchors drawn in a seeded order.
    /// Anchors with an empty neighborhood are skipped and replaced by the
    /// next candidate; the returned list may be shorter than `q` only if
    /// candidates run out. The first `k` models do not depend on `q`.
    pub fn local_models(&self, rank: usize, q: usize) -> Result<Vec<LocalModel>> {
        if q == 0 {
            return Err(LrmaError::invalid("anchor count must be at least 1"));
        }
        if q > self.train.len() {
            return Err(LrmaError::InsufficientEntries {
                requested: q,
                available: self.train.len(),
            });
        }
        let candidates = anchor_candidates(
            self.train,
            derive_seed(self.settings.seed, STREAM_ANCHORS, 0),
        );
        let mut models = Vec::with_capacity(q);
        let mut next = 0;
        while models.len() < q && next < candidates.len() {
            let take = (q - models.len()).min(candidates.len() - next);
            let batch: Vec<(usize, Anchor)> =
                (next..next + take).map(|c| (c, candidates[c])).collect();
            next += take;
            let fitted: Vec<Result<LocalModel>> = batch
                .par_iter()
                .map(|&(c, anchor)| self.fit_local(rank, c, anchor))
                .collect();
            for result in fitted {
                match result {
                    Ok(m) => models.push(m),
                    Err(LrmaError::EmptyNeighborhood { row, col }) => {
                        warn!("anchor ({row}, {col}) has an empty neighborhood; resampling");
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        if models.is_empty() {
            return Err(LrmaError::EmptyNeighborhood {
                row: candidates[0].row,
                col: candidates[0].col,
            });
        }
        if models.len() < q {
            warn!(
                "only {} of {q} anchors have non-empty neighborhoods",
                models.len()
            );
        }
        Ok(models)
    }

    pub fn ensemble(&self, locals: Vec<LocalModel>, fallback: FactorPair) -> Result<EnsembleModel> {
        EnsembleModel::new(
            locals,
            self.dm.clone(),
            self.settings.kernel,
            fallback,
            self.train,
        )
    }

    pub fn evaluate_global(&self, model: &FactorPair, test: &ObservedMatrix) -> Result<Metrics> {
        evaluate_with(|i, j| global_prediction(model, self.train, i, j), test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Global,
    Local,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Global => "global",
            ModelKind::Local => "local",
        }
    }
}

impl FromStr for ModelKind {
    type Err = LrmaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(ModelKind::Global),
            "local" => Ok(ModelKind::Local),
            other => Err(LrmaError::invalid(format!("unknown model kind '{other}'"))),
        }
    }
}

/// One point of the RMSE-versus-anchors series. Global rows have `q = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub kind: ModelKind,
    pub rank: usize,
    pub q: usize,
    pub rmse: f64,
    pub coverage: f64,
    pub fallback_unseen: usize,
    pub fallback_empty: usize,
}

impl SeriesRow {
    pub fn new(kind: ModelKind, rank: usize, q: usize, m: &Metrics) -> Self {
        SeriesRow {
            kind,
            rank,
            q,
            rmse: m.rmse,
            coverage: m.coverage,
            fallback_unseen: m.fallback_unseen,
            fallback_empty: m.fallback_empty,
        }
    }
}

pub const SERIES_HEADER: &str = "kind,rank,q,rmse,coverage,fallback_unseen,fallback_empty";

fn sort_key(r: &SeriesRow) -> (ModelKind, usize, usize) {
    (r.kind, r.rank, r.q)
}

/// Writes the header and the rows sorted by (kind, rank, q).
pub fn write_series<W: Write>(mut w: W, rows: &[SeriesRow]) -> Result<()> {
    let mut rows = rows.to_vec();
    rows.sort_by_key(sort_key);
    writeln!(w, "{SERIES_HEADER}")?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.kind.as_str(),
            r.rank,
            r.q,
            r.rmse,
            r.coverage,
            r.fallback_unseen,
            r.fallback_empty
        )?;
    }
    Ok(())
}

pub fn emit_series(rows: &[SeriesRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(LrmaError::EmptyInput("metrics table has no rows"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_series(&mut w, rows)?;
    w.flush()?;
    Ok(())
}

pub fn parse_series<R: BufRead>(reader: R) -> Result<Vec<SeriesRow>> {
    let mut rows = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if n == 0 {
            if line != SERIES_HEADER {
                return Err(LrmaError::Parse {
                    line: 1,
                    message: format!("unexpected header '{line}'"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| LrmaError::Parse {
            line: n + 1,
            message: format!("bad {what}"),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad("field count"));
        }
        rows.push(SeriesRow {
            kind: f[0].parse().map_err(|_| bad("kind"))?,
            rank: f[1].parse().map_err(|_| bad("rank"))?,
            q: f[2].parse().map_err(|_| bad("q"))?,
            rmse: f[3].parse().map_err(|_| bad("rmse"))?,
            coverage: f[4].parse().map_err(|_| bad("coverage"))?,
            fallback_unseen: f[5].parse().map_err(|_| bad("fallback_unseen"))?,
            fallback_empty: f[6].parse().map_err(|_| bad("fallback_empty"))?,
        });
    }
    Ok(rows)
}

/// Full experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub input: PathBuf,
    pub format: RatingFormat,
    pub scale: RatingScale,
    pub test_fraction: f64,
    pub ranks: Vec<usize>,
    pub anchors: Vec<usize>,
    pub model: ModelSettings,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(input: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            input: input.into(),
            format: RatingFormat::MovielensDat,
            scale: RatingScale::MOVIELENS,
            test_fraction: 0.1,
            ranks: vec![5],
            anchors: vec![50],
            model: ModelSettings::default(),
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ranks.is_empty() || self.anchors.is_empty() {
            return Err(LrmaError::invalid(
                "rank and anchor lists must be non-empty",
            ));
        }
        if self.ranks.contains(&0) || self.anchors.contains(&0) {
            return Err(LrmaError::invalid(
                "ranks and anchor counts must be positive",
            ));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(LrmaError::invalid("test fraction must lie in (0, 1)"));
        }
        if self.model.distance_rank == 0 {
            return Err(LrmaError::invalid("distance rank must be positive"));
        }
        if !(self.model.lambda >= 0.0) {
            return Err(LrmaError::invalid("lambda must be non-negative"));
        }
        self.model.kernel.validate()
    }

    /// Applies `key = value` lines. Keys are the long flag names without the
    /// leading dashes; `#` starts a comment.
    pub fn apply_key_values(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                LrmaError::invalid(format!("config line {}: expected key = value", n + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| LrmaError::invalid(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Sets one option by its long flag name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| LrmaError::invalid(format!("invalid value '{v}' for {key}")))
        }
        fn list(key: &str, v: &str) -> Result<Vec<usize>> {
            v.split(',').map(|x| num(key, x.trim())).collect()
        }
        match key {
            "input" => self.input = PathBuf::from(value),
            "format" => self.format = value.parse()?,
            "test-fraction" => self.test_fraction = num(key, value)?,
            "ranks" => self.ranks = list(key, value)?,
            "anchors" => self.anchors = list(key, value)?,
            "h1" => self.model.kernel.h1 = num(key, value)?,
            "h2" => self.model.kernel.h2 = num(key, value)?,
            "kernel" => self.model.kernel.kind = value.parse::<KernelKind>()?,
            "lambda" => self.model.lambda = num(key, value)?,
            "solver" => self.model.solver = value.parse()?,
            "distance-rank" => self.model.distance_rank = num(key, value)?,
            "seed" => self.model.seed = num(key, value)?,
            "max-epochs" => self.model.max_epochs = num(key, value)?,
            "tolerance" => self.model.tolerance = num(key, value)?,
            "learning-rate" => self.model.learning_rate = num(key, value)?,
            "out" => self.output = Some(PathBuf::from(value)),
            other => return Err(LrmaError::invalid(format!("unknown option '{other}'"))),
        }
        Ok(())
    }
}

pub fn load_ratings(
    path: &Path,
    format: RatingFormat,
    scale: RatingScale,
) -> Result<ObservedMatrix> {
    let file = File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    parse_ratings(BufReader::new(file), format, scale)
}

/// Reads, splits and sweeps. Rows come back sorted by (kind, rank, q).
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<SeriesRow>> {
    config.validate()?;
    let data = load_ratings(&config.input, config.format, config.scale)?;
    info!(
        "loaded {} ratings ({} rows x {} cols)",
        data.len(),
        data.n_rows(),
        data.n_cols()
    );
    let (train, test) = split_train_test(&data, config.test_fraction, config.model.seed)?;
    run_on_split(&train, &test, config)
}

/// Sweeps ranks and anchor counts on a given split.
pub fn run_on_split(
    train: &ObservedMatrix,
    test: &ObservedMatrix,
    config: &ExperimentConfig,
) -> Result<Vec<SeriesRow>> {
    config.validate()?;
    let max_q = *config.anchors.iter().max().expect("validated non-empty");
    if max_q > train.len() {
        return Err(LrmaError::InsufficientEntries {
            requested: max_q,
            available: train.len(),
        });
    }
    let pipeline = Pipeline::new(train, config.model.clone())?;
    let mut rows = Vec::new();
    let ranks: Vec<usize> = match config.model.solver {
        // The nuclear-norm solution does not depend on the requested rank.
        SolverTag::Svt => vec![config.ranks[0]],
        _ => config.ranks.clone(),
    };
    for &rank in &ranks {
        let started = std::time::Instant::now();
        let global = pipeline.global(rank)?;
        let reported_rank = match config.model.solver {
            SolverTag::Svt => global.rank(),
            _ => rank,
        };
        let gm = pipeline.evaluate_global(&global, test)?;
        info!(
            "global rank {reported_rank}: rmse {:.4} ({:.1?})",
            gm.rmse,
            started.elapsed()
        );
        rows.push(SeriesRow::new(ModelKind::Global, reported_rank, 0, &gm));

        let started = std::time::Instant::now();
        let locals = pipeline.local_models(rank, max_q)?;
        info!(
            "trained {} local models in {:.1?}",
            locals.len(),
            started.elapsed()
        );
        for &q in &config.anchors {
            let take = q.min(locals.len());
            let ensemble = pipeline.ensemble(locals[..take].to_vec(), global.clone())?;
            let m = ensemble.evaluate(test)?;
            info!(
                "local rank {reported_rank} q {take}: rmse {:.4} coverage {:.3}",
                m.rmse, m.coverage
            );
            rows.push(SeriesRow::new(ModelKind::Local, reported_rank, take, &m));
        }
    }
    rows.sort_by_key(sort_key);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(kind: ModelKind, rank: usize, q: usize, rmse: f64) -> SeriesRow {
        SeriesRow {
            kind,
            rank,
            q,
            rmse,
            coverage: 0.5,
            fallback_unseen: 1,
            fallback_empty: 2,
        }
    }

    #[test]
    fn series_is_sorted_and_round_trips() {
        let rows = vec![
            row(ModelKind::Local, 5, 10, 0.91),
            row(ModelKind::Global, 5, 0, 0.95),
            row(ModelKind::Local, 1, 50, 0.1 + 0.2),
            row(ModelKind::Global, 1, 0, 1.0 / 3.0),
        ];
        let mut out = Vec::new();
        write_series(&mut out, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SERIES_HEADER);
        assert!(lines[1].starts_with("global,1,0,"));
        assert!(lines[2].starts_with("global,5,0,"));
        assert!(lines[3].starts_with("local,1,50,"));
        assert!(lines[4].starts_with("local,5,10,"));

        let parsed = parse_series(text.as_bytes()).unwrap();
        let mut sorted = rows.clone();
        sorted.sort_by_key(sort_key);
        assert_eq!(parsed, sorted);
    }

    #[test]
    fn single_row_file_has_two_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        emit_series(&[row(ModelKind::Global, 3, 0, 0.9)], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(emit_series(&[], &path).is_err());
        assert!(matches!(
            emit_series(
                &[row(ModelKind::Global, 3, 0, 0.9)],
                &dir.path().join("no/such/dir.csv")
            ),
            Err(LrmaError::Io(_))
        ));
    }

    #[test]
    fn key_value_config() {
        let mut cfg = ExperimentConfig::new("x");
        cfg.apply_key_values(
            "# sweep\nranks = 1, 3,5\nanchors=10\nh1 = 0.5\nsolver = sgd\nformat = tsv\nseed = 42\n",
        )
        .unwrap();
        assert_eq!(cfg.ranks, vec![1, 3, 5]);
        assert_eq!(cfg.anchors, vec![10]);
        assert_eq!(cfg.model.kernel.h1, 0.5);
        assert_eq!(cfg.model.kernel.h2, 0.8);
        assert_eq!(cfg.model.solver, SolverTag::Sgd);
        assert_eq!(cfg.format, RatingFormat::Tsv);
        assert_eq!(cfg.model.seed, 42);
        assert!(cfg.apply_key_values("bogus = 1").is_err());
        assert!(cfg.apply_key_values("ranks = a").is_err());
        assert!(cfg.apply_key_values("no equals sign").is_err());
    }

    fn small_train() -> ObservedMatrix {
        let mut entries = Vec::new();
        for i in 0..6 {
            for j in 0..5 {
                if (i + 2 * j) % 3 != 0 {
                    entries.push(crate::data::Rating::new(i, j, ((i * j) % 5 + 1) as f64));
                }
            }
        }
        ObservedMatrix::new(6, 5, entries, RatingScale::MOVIELENS).unwrap()
    }

    #[test]
    fn distance_model_is_the_rank_r_global_fit() {
        let train = small_train();
        let settings = ModelSettings {
            distance_rank: 3,
            seed: 12,
            ..Default::default()
        };
        let p = Pipeline::new(&train, settings.clone()).unwrap();
        let cfg = TrainConfig {
            rank: 3,
            solver: Solver::Als,
            seed: derive_seed(12, STREAM_DISTANCE, 0),
            ..Pipeline::train_config_for(&settings, 3)
        };
        let f = train_global(&train, &cfg).unwrap();
        assert_eq!(p.distance_model().row_features(), f.u());
        assert_eq!(p.distance_model().col_features(), f.v());
    }

    #[test]
    fn empty_neighborhoods_are_replaced() {
        let train = small_train();
        let p = Pipeline::new(&train, ModelSettings::default()).unwrap();
        // Rows 0-2 have zero features, so anchors there cover nothing.
        let rows =
            nalgebra::DMatrix::from_fn(6, 2, |i, k| if i < 3 { 0.0 } else { 1.0 + k as f64 });
        let cols = nalgebra::DMatrix::from_fn(5, 2, |_, k| 1.0 + k as f64);
        let p = p
            .with_distance_model(DistanceModel::new(rows, cols).unwrap())
            .unwrap();
        let models = p.local_models(1, 4).unwrap();
        assert_eq!(models.len(), 4);
        assert!(models.iter().all(|m| m.anchor.row >= 3));
        // Prefixes do not depend on the requested count.
        assert_eq!(p.local_models(1, 2).unwrap()[..], models[..2]);
        // Asking for more than the coverable anchors returns what exists.
        let n_coverable = train.entries().iter().filter(|e| e.row >= 3).count();
        assert_eq!(p.local_models(1, train.len()).unwrap().len(), n_coverable);
    }

    #[test]
    fn infeasible_anchor_count_is_config_error() {
        let train = small_train();
        let p = Pipeline::new(&train, ModelSettings::default()).unwrap();
        assert!(matches!(
            p.local_models(1, train.len() + 1),
            Err(LrmaError::InsufficientEntries { .. })
        ));
        assert!(p.local_models(1, 0).is_err());
    }

    #[test]
    fn defaults_follow_protocol() {
        let cfg = ExperimentConfig::new("x");
        assert_eq!(cfg.test_fraction, 0.1);
        assert_eq!(cfg.model.kernel.h1, 0.8);
        assert_eq!(cfg.model.kernel.h2, 0.8);
        assert_eq!(cfg.model.kernel.kind, KernelKind::Epanechnikov);
        assert_eq!(cfg.scale.default, 3.0);
        cfg.validate().unwrap();
        let mut bad = cfg.clone();
        bad.ranks.clear();
        assert!(bad.validate().is_err());
    }
}
