//! The commands: generate data, train one model per β, certify, evaluate
//! empirical W1, draw samples, and rebuild both tables.
//!
//! Every random choice is seeded from the master seed through
//! [`sub_seed`]. Initialization, minibatch order and measurement noise are
//! shared across the β grid, so rows of a table differ only through β.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
use super::config::{DiameterChoice, ExperimentConfig};
use super::io::{self, fmt_f64, fmt_opt, DatasetMetadata};
use super::{exact_match_diameter, sub_seed, svg, Purpose};
use crate::certificates::{
    cert_generation, cert_rec_bounded, cert_rec_manifold_gauss, cert_rec_manifold_uniform, cert_regeneration,
    confidence_to_a, measure_empirical_terms, measure_terms_unchecked, CertParams, CertificateKind,
    CertificateReport, DiameterSource, EmpiricalTerms, Geometry, GeometryBounded, GeometryManifold,
};
use crate::data::{geometry::empirical_diameter, DatasetParams, DatasetSpec, LatentPrior, Splits};
use crate::error::{Error, Result};
use crate::math::{Matrix, Rng};
use crate::transport::{sample_generated, sample_regenerated, w1_empirical};
use crate::vae::{train, VaeModel};

/// File locations under an output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn checkpoint(&self, beta: f64) -> PathBuf {
        self.root.join("checkpoints").join(format!("beta_{beta}.json"))
    }

    pub fn train_log(&self, beta: f64) -> PathBuf {
        self.root.join("logs").join(format!("train_beta_{beta}.csv"))
    }

    pub fn certificates_csv(&self) -> PathBuf {
        self.root.join("certificates.csv")
    }

    pub fn certificates_json(&self) -> PathBuf {
        self.root.join("certificates.json")
    }

    pub fn eval_w1_csv(&self) -> PathBuf {
        self.root.join("eval_w1.csv")
    }

    pub fn samples(&self, target: Target, beta: f64) -> PathBuf {
        self.root.join("samples").join(format!("{}_beta_{beta}.csv", target.name()))
    }

    pub fn figures_dir(&self) -> PathBuf {
        self.root.join("figures")
    }
}

/// Which model distribution to draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Decoder pushforward of the posteriors of the certification points.
    Regenerated,
    /// Decoder pushforward of the prior.
    Generated,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Regenerated => "regenerated",
            Target::Generated => "generated",
        }
    }

    fn matches(self, kind: CertificateKind) -> bool {
        match self {
            Target::Regenerated => matches!(kind, CertificateKind::RegenBounded | CertificateKind::RegenManifold),
            Target::Generated => matches!(kind, CertificateKind::GenBounded | CertificateKind::GenManifold),
        }
    }
}

/// Writes the three splits and their metadata.
pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<(Splits, DatasetMetadata)> {
    cfg.validate()?;
    let splits = Splits::generate(&cfg.dataset.spec, cfg.dataset.split_sizes, cfg.dataset_seed())?;
    let meta = io::save_splits(&Layout::new(&cfg.output_dir).data_dir(), &splits)?;
    info!("wrote {} dataset {:?} to {}", meta.kind, meta.split_sizes, cfg.output_dir.display());
    Ok((splits, meta))
}

/// Initial weights; the same for every β.
pub fn initial_model(cfg: &ExperimentConfig, data_dim: usize) -> Result<(VaeModel, u64)> {
    let seed = sub_seed(cfg.seed, Purpose::Init, 0);
    Ok((VaeModel::new(&cfg.model.vae_spec(data_dim), &mut Rng::new(seed))?, seed))
}

/// Trains one model for `beta` on the training split.
pub fn train_one(cfg: &ExperimentConfig, splits: &Splits, beta: f64) -> Result<Checkpoint> {
    let data_dim = splits.train.dim();
    let (model, init_seed) = initial_model(cfg, data_dim)?;
    let tc = cfg.training.train_config(beta, sub_seed(cfg.seed, Purpose::Train, 0));
    let out = train(model, &splits.train.samples, &tc)
        .map_err(|e| if let Error::Numerical(m) = e { Error::Numerical(format!("beta {beta}: {m}")) } else { e })?;
    Ok(Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        spec: cfg.model.vae_spec(data_dim),
        model: out.model,
        master_seed: cfg.seed,
        init_seed,
        train: tc,
        history: out.history,
        dataset: cfg.dataset.spec.clone(),
        trained_on: splits.train.id(),
    })
}

fn write_train_log(path: &Path, ck: &Checkpoint) -> Result<()> {
    let rows: Vec<Vec<String>> = ck
        .history
        .iter()
        .map(|h| vec![h.epoch.to_string(), fmt_f64(h.mean_mse), fmt_f64(h.mean_kl), fmt_f64(h.mean_loss)])
        .collect();
    io::write_csv(path, &["epoch", "mean_mse", "mean_kl", "mean_loss"], &rows)
}

/// Trains every β of the grid on the stored training split and writes a
/// checkpoint and a per-epoch log for each.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<Checkpoint>> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    let (splits, _) = io::load_splits(&layout.data_dir())?;
    let mut out = Vec::with_capacity(cfg.certificate.beta_grid.len());
    for &beta in &cfg.certificate.beta_grid {
        let t0 = std::time::Instant::now();
        let ck = train_one(cfg, &splits, beta)?;
        ck.save(&layout.checkpoint(beta))?;
        write_train_log(&layout.train_log(beta), &ck)?;
        let last = ck.history.last().expect("at least one epoch");
        info!("beta {beta}: mse {:.4}, kl {:.4} ({:.1?})", last.mean_mse, last.mean_kl, t0.elapsed());
        out.push(ck);
    }
    Ok(out)
}

/// Everything `certify` reports for one checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyOutcome {
    pub beta: f64,
    /// Held-out reconstruction RMSE on the test split.
    pub test_rec: f64,
    pub test_rec_std_err: f64,
    pub terms: EmpiricalTerms,
    pub reports: Vec<CertificateReport>,
}

impl CertifyOutcome {
    pub fn report(&self, kind: CertificateKind) -> Option<&CertificateReport> {
        self.reports.iter().find(|r| r.kind == kind)
    }
}

/// Diameter for bounded certificates under the configured choice.
pub fn bounded_geometry(cfg: &ExperimentConfig, splits: &Splits, meta: &DatasetMetadata) -> Result<GeometryBounded> {
    Ok(match cfg.certificate.diameter {
        DiameterChoice::Analytic => GeometryBounded {
            delta_diam: meta.analytic_diameter.ok_or_else(|| {
                Error::Config(format!("no closed-form diameter for a {} dataset", meta.kind))
            })?,
            source: DiameterSource::Analytic,
        },
        DiameterChoice::Empirical => {
            let all = Matrix::vstack(&[
                splits.train.samples.clone(),
                splits.val.samples.clone(),
                splits.test.samples.clone(),
            ])?;
            GeometryBounded { delta_diam: empirical_diameter(&all), source: DiameterSource::Empirical }
        }
        DiameterChoice::ExactMatch => GeometryBounded {
            delta_diam: exact_match_diameter(&cfg.dataset.spec).ok_or_else(|| {
                Error::Config(format!("no pinned diameter for a {} dataset", cfg.dataset.spec.name()))
            })?,
            source: DiameterSource::ExactMatch,
        },
    })
}

/// Manifold constants from the dataset metadata; the box width for a
/// Gaussian latent comes from `delta_prime`.
pub fn manifold_geometry(cfg: &ExperimentConfig, meta: &DatasetMetadata, n: usize) -> Result<GeometryManifold> {
    let DatasetParams::Manifold { d_star, k_star, prior, .. } = meta.params else {
        return Err(Error::Config(format!("manifold certificates need a manifold dataset, got {}", meta.kind)));
    };
    let a = match prior {
        LatentPrior::Uniform => None,
        LatentPrior::Gaussian => {
            let dp = cfg.certificate.delta_prime.ok_or_else(|| {
                Error::Config("Gaussian manifold certificates need certificate.delta_prime".into())
            })?;
            let w = confidence_to_a(n, d_star, dp)?;
            if w.degenerate {
                return Err(Error::Config(format!("delta_prime {dp} leaves no latent box to certify")));
            }
            Some(w.a)
        }
    };
    Ok(GeometryManifold { k_star, d_star, a, prior })
}

fn require_prior(g: &GeometryManifold, want: LatentPrior, kind: CertificateKind) -> Result<()> {
    if g.prior != want {
        return Err(Error::Config(format!("{} needs a {want:?} latent prior, the dataset has {:?}", kind.name(), g.prior)));
    }
    Ok(())
}

/// Computes every requested certificate for one model. The split protocol
/// is checked twice: the checkpoint must come from this dataset's training
/// split, and the certification split must differ from it.
pub fn certify_checkpoint(
    cfg: &ExperimentConfig,
    ck: &Checkpoint,
    splits: &Splits,
    meta: &DatasetMetadata,
) -> Result<CertifyOutcome> {
    if &ck.trained_on != meta.split_id(crate::data::Split::Train)? {
        return Err(Error::Protocol(
            "checkpoint was trained on data other than this dataset's training split; disjointness cannot be verified"
                .into(),
        ));
    }
    let c = &cfg.certificate;
    let cert = splits.get(c.split);
    let mut rng = Rng::new(sub_seed(cfg.seed, Purpose::Certify, 0));
    let terms = measure_empirical_terms(&ck.model, cert, &ck.trained_on, c.mc_samples_cert, &mut rng)?;
    let mut rng = Rng::new(sub_seed(cfg.seed, Purpose::TestRec, 0));
    let test = measure_terms_unchecked(&ck.model, &splits.test.samples, c.mc_samples_cert, &mut rng)?;

    let p = CertParams::from_beta(terms.n, ck.beta(), c.delta, ck.model.k_phi(), ck.model.k_theta());
    let needs_bounded = c.kinds.iter().any(|k| {
        matches!(k, CertificateKind::RecBounded | CertificateKind::RegenBounded | CertificateKind::GenBounded)
    });
    let bounded = if needs_bounded { Some(bounded_geometry(cfg, splits, meta)?) } else { None };
    let mut reports = Vec::with_capacity(c.kinds.len());
    for &kind in &c.kinds {
        let r = match kind {
            CertificateKind::RecBounded => cert_rec_bounded(&terms, bounded.as_ref().expect("resolved"), &p)?,
            CertificateKind::RegenBounded => {
                cert_regeneration(&terms, &Geometry::Bounded(bounded.expect("resolved")), &p)?
            }
            CertificateKind::GenBounded => cert_generation(&terms, &Geometry::Bounded(bounded.expect("resolved")), &p)?,
            CertificateKind::RecManifoldGauss => {
                let g = manifold_geometry(cfg, meta, terms.n)?;
                require_prior(&g, LatentPrior::Gaussian, kind)?;
                cert_rec_manifold_gauss(&terms, &g, &p)?
            }
            CertificateKind::RecManifoldUniform => {
                let g = manifold_geometry(cfg, meta, terms.n)?;
                require_prior(&g, LatentPrior::Uniform, kind)?;
                cert_rec_manifold_uniform(&terms, &g, &p)?
            }
            CertificateKind::RegenManifold | CertificateKind::GenManifold => {
                let g = manifold_geometry(cfg, meta, terms.n)?;
                require_prior(&g, LatentPrior::Gaussian, kind)?;
                let g = Geometry::Manifold(g);
                if kind == CertificateKind::RegenManifold {
                    cert_regeneration(&terms, &g, &p)?
                } else {
                    cert_generation(&terms, &g, &p)?
                }
            }
        };
        reports.push(r);
    }
    Ok(CertifyOutcome { beta: ck.beta(), test_rec: test.rec_mean, test_rec_std_err: test.rec_std_err, terms, reports })
}

fn checkpoint_paths(cfg: &ExperimentConfig, explicit: &[PathBuf]) -> Vec<PathBuf> {
    if explicit.is_empty() {
        let layout = Layout::new(&cfg.output_dir);
        cfg.certificate.beta_grid.iter().map(|&b| layout.checkpoint(b)).collect()
    } else {
        explicit.to_vec()
    }
}

pub const CERTIFICATE_COLUMNS: [&str; 14] = [
    "beta",
    "kind",
    "n",
    "lambda",
    "delta",
    "confidence",
    "test_rec",
    "emp_rec",
    "kl_term",
    "avg_dist_term",
    "exp_moment_term",
    "delta_term",
    "prior_gap_term",
    "bound",
];

fn certificate_rows(outcomes: &[CertifyOutcome]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for o in outcomes {
        for r in &o.reports {
            let c = &r.components;
            rows.push(vec![
                fmt_f64(o.beta),
                r.kind.name().to_string(),
                r.n.to_string(),
                fmt_f64(r.lambda),
                fmt_f64(r.delta),
                fmt_f64(r.confidence),
                fmt_f64(o.test_rec),
                fmt_f64(c.emp_rec),
                fmt_f64(c.kl_term),
                fmt_opt(c.avg_dist_term),
                fmt_f64(c.exp_moment_term),
                fmt_f64(c.delta_term),
                fmt_opt(c.prior_gap_term),
                fmt_f64(r.bound),
            ]);
        }
    }
    rows
}

/// Certifies the given checkpoints (default: the whole β grid) and writes
/// `certificates.csv` and `certificates.json`.
pub fn cmd_certify(cfg: &ExperimentConfig, checkpoints: &[PathBuf]) -> Result<Vec<CertifyOutcome>> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    let (splits, meta) = io::load_splits(&layout.data_dir())?;
    let mut outcomes = Vec::new();
    for path in checkpoint_paths(cfg, checkpoints) {
        let ck = Checkpoint::load(&path)?;
        let o = certify_checkpoint(cfg, &ck, &splits, &meta)?;
        info!("beta {}: test_rec {:.4}, {} certificates", o.beta, o.test_rec, o.reports.len());
        outcomes.push(o);
    }
    io::write_csv(&layout.certificates_csv(), &CERTIFICATE_COLUMNS, &certificate_rows(&outcomes))?;
    io::write_json(&layout.certificates_json(), &outcomes)?;
    Ok(outcomes)
}

/// One empirical W1 estimate next to the certificate it should respect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct W1Row {
    pub beta: f64,
    pub seed: u64,
    pub m: usize,
    pub target: Target,
    pub w1: f64,
    pub kind: CertificateKind,
    pub bound: f64,
}

impl W1Row {
    pub fn holds(&self) -> bool {
        self.w1 <= self.bound
    }
}

/// `m` distinct rows of `x`.
fn subsample(x: &Matrix, m: usize, rng: &mut Rng) -> Result<Matrix> {
    if m > x.rows() {
        return Err(Error::Config(format!("cannot draw {m} distinct rows from {}", x.rows())));
    }
    let mut idx: Vec<usize> = (0..x.rows()).collect();
    rng.shuffle(&mut idx);
    Ok(x.select_rows(&idx[..m]))
}

/// Empirical W1 between a test subsample and a model sample, for each
/// configured seed.
pub fn w1_estimates(
    cfg: &ExperimentConfig,
    model: &VaeModel,
    splits: &Splits,
    target: Target,
) -> Result<Vec<(u64, f64)>> {
    let m = cfg.w1.m;
    let mut out = Vec::with_capacity(cfg.w1.seeds.len());
    for &seed in &cfg.w1.seeds {
        let mut rng = Rng::new(sub_seed(cfg.seed, Purpose::W1, seed));
        let data = subsample(&splits.test.samples, m, &mut rng)?;
        let sample = match target {
            Target::Regenerated => sample_regenerated(model, &splits.get(cfg.certificate.split).samples, &mut rng, m)?,
            Target::Generated => sample_generated(model, &mut rng, m)?,
        };
        out.push((seed, w1_empirical(&data, &sample)?.value));
    }
    Ok(out)
}

/// Empirical W1 for every checkpoint, seed and target that has a
/// certificate among the configured kinds; writes `eval_w1.csv`.
pub fn cmd_eval_w1(cfg: &ExperimentConfig, checkpoints: &[PathBuf]) -> Result<Vec<W1Row>> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    let (splits, meta) = io::load_splits(&layout.data_dir())?;
    let mut rows = Vec::new();
    for path in checkpoint_paths(cfg, checkpoints) {
        let ck = Checkpoint::load(&path)?;
        let outcome = certify_checkpoint(cfg, &ck, &splits, &meta)?;
        for target in [Target::Regenerated, Target::Generated] {
            let reports: Vec<&CertificateReport> = outcome.reports.iter().filter(|r| target.matches(r.kind)).collect();
            if reports.is_empty() {
                continue;
            }
            for (seed, w1) in w1_estimates(cfg, &ck.model, &splits, target)? {
                for r in &reports {
                    rows.push(W1Row { beta: ck.beta(), seed, m: cfg.w1.m, target, w1, kind: r.kind, bound: r.bound });
                }
            }
        }
        info!("beta {}: W1 evaluated", ck.beta());
    }
    if rows.is_empty() {
        return Err(Error::Config("no regeneration or generation certificate requested".into()));
    }
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.beta),
                r.seed.to_string(),
                r.m.to_string(),
                r.target.name().into(),
                fmt_f64(r.w1),
                r.kind.name().into(),
                fmt_f64(r.bound),
                r.holds().to_string(),
            ]
        })
        .collect();
    io::write_csv(&layout.eval_w1_csv(), &["beta", "seed", "m", "target", "w1", "kind", "bound", "holds"], &csv)?;
    Ok(rows)
}

/// Draws `m` points from a checkpoint's model and writes them as CSV.
pub fn cmd_sample(cfg: &ExperimentConfig, checkpoint: &Path, m: usize, target: Target) -> Result<Matrix> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    let ck = Checkpoint::load(checkpoint)?;
    let mut rng = Rng::new(sub_seed(cfg.seed, Purpose::Sample, 0));
    let x = match target {
        Target::Generated => sample_generated(&ck.model, &mut rng, m)?,
        Target::Regenerated => {
            let (splits, _) = io::load_splits(&layout.data_dir())?;
            sample_regenerated(&ck.model, &splits.get(cfg.certificate.split).samples, &mut rng, m)?
        }
    };
    io::write_matrix_csv(&layout.samples(target, ck.beta()), &x)?;
    Ok(x)
}

/// One row of a reproduced table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub beta: f64,
    pub test_rec: f64,
    pub emp_rec: f64,
    /// `(1/λ) Σ KL`.
    pub emp_kl: f64,
    pub avg_dist: f64,
    pub exp_moment: f64,
    pub delta_term: f64,
    pub bound: f64,
}

pub const TABLE_COLUMNS: [&str; 8] =
    ["beta", "test_rec", "emp_rec", "emp_kl", "avg_dist", "exp_moment", "delta_term", "bound"];

impl TableRow {
    pub fn from_outcome(o: &CertifyOutcome) -> Result<Self> {
        let r = o
            .report(CertificateKind::RecBounded)
            .ok_or_else(|| Error::Config("tables need the rec_bounded certificate".into()))?;
        let c = &r.components;
        Ok(TableRow {
            beta: o.beta,
            test_rec: o.test_rec,
            emp_rec: c.emp_rec,
            emp_kl: c.kl_term,
            avg_dist: c.avg_dist_term.unwrap_or(0.0),
            exp_moment: c.exp_moment_term,
            delta_term: c.delta_term,
            bound: r.bound,
        })
    }

    fn cells(&self) -> Vec<String> {
        [self.beta, self.test_rec, self.emp_rec, self.emp_kl, self.avg_dist, self.exp_moment, self.delta_term, self.bound]
            .iter()
            .map(|&v| fmt_f64(v))
            .collect()
    }
}

pub fn write_table(path: &Path, rows: &[TableRow]) -> Result<()> {
    io::write_csv(path, &TABLE_COLUMNS, &rows.iter().map(TableRow::cells).collect::<Vec<_>>())
}

/// A reproduced table and where its run lives.
#[derive(Clone, Debug)]
pub struct TableOutput {
    pub dataset: DatasetSpec,
    pub run_dir: PathBuf,
    pub table: PathBuf,
    pub rows: Vec<TableRow>,
}

/// Points drawn for each scatter plot.
const PLOT_POINTS: usize = 2000;

fn write_figures(cfg: &ExperimentConfig, fig_dir: &Path, splits: &Splits, checkpoints: &[Checkpoint]) -> Result<()> {
    let name = cfg.dataset.spec.name();
    let mut rng = Rng::new(sub_seed(cfg.seed, Purpose::Plot, 0));
    let real = subsample(&splits.test.samples, PLOT_POINTS.min(splits.test.len()), &mut rng)?;
    let real_series = svg::Series { label: "data", color: "#4d4d4d", points: &real };
    let path = fig_dir.join(format!("{name}_data.svg"));
    std::fs::write(&path, svg::scatter(&format!("{name}: test samples"), &[real_series]))?;
    for ck in checkpoints {
        let mut rng = Rng::new(sub_seed(cfg.seed, Purpose::Plot, 1));
        let generated = sample_generated(&ck.model, &mut rng, PLOT_POINTS)?;
        let regenerated = sample_regenerated(&ck.model, &splits.get(cfg.certificate.split).samples, &mut rng, PLOT_POINTS)?;
        let series = [
            svg::Series { label: "data", color: "#4d4d4d", points: &real },
            svg::Series { label: "regenerated", color: "#1f77b4", points: &regenerated },
            svg::Series { label: "generated", color: "#d62728", points: &generated },
        ];
        let title = format!("{name}, beta = {}", ck.beta());
        std::fs::write(fig_dir.join(format!("{name}_beta_{}.svg", ck.beta())), svg::scatter(&title, &series))?;
    }
    Ok(())
}

/// Runs the full pipeline for the 2-Gaussian and circle datasets and
/// writes `table1.csv`, `table2.csv` and scatter plots under the output
/// directory. Each dataset's run lives in its own subdirectory.
pub fn cmd_reproduce_tables(cfg: &ExperimentConfig) -> Result<Vec<TableOutput>> {
    cfg.validate()?;
    let mut outputs = Vec::new();
    let fig_dir = Layout::new(&cfg.output_dir).figures_dir();
    io::ensure_dir(&fig_dir)?;
    for (spec, table) in [(DatasetSpec::TwoGaussians, "table1.csv"), (DatasetSpec::Circle, "table2.csv")] {
        let mut sub = cfg.clone();
        sub.dataset.spec = spec.clone();
        sub.output_dir = cfg.output_dir.join(spec.name());
        if !sub.certificate.kinds.contains(&CertificateKind::RecBounded) {
            sub.certificate.kinds.insert(0, CertificateKind::RecBounded);
        }
        let (splits, meta) = cmd_gen_data(&sub)?;
        let checkpoints = cmd_train(&sub)?;
        let layout = Layout::new(&sub.output_dir);
        let outcomes = checkpoints
            .iter()
            .map(|ck| certify_checkpoint(&sub, ck, &splits, &meta))
            .collect::<Result<Vec<_>>>()?;
        io::write_csv(&layout.certificates_csv(), &CERTIFICATE_COLUMNS, &certificate_rows(&outcomes))?;
        io::write_json(&layout.certificates_json(), &outcomes)?;
        let rows = outcomes.iter().map(TableRow::from_outcome).collect::<Result<Vec<_>>>()?;
        let table_path = cfg.output_dir.join(table);
        write_table(&table_path, &rows)?;
        write_figures(&sub, &fig_dir, &splits, &checkpoints)?;
        info!("wrote {}", table_path.display());
        outputs.push(TableOutput { dataset: spec, run_dir: sub.output_dir, table: table_path, rows });
    }
    Ok(outputs)
}
