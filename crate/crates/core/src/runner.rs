//! Experiment configuration and the pipelines behind each subcommand.
//!
//! Every pipeline is deterministic in `(config, seed)`: work item `i` at
//! `(L, p)` draws from `derive_seed(seed, [L, p bits, i])`, results are
//! collected in index order, and the worker count only changes wall time.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::io::{read_records, write_records};
use crate::circuit::{MeasurementRecord, Model};
use crate::decoders::{
    accuracy, bond_scaling, decode, mass_above_half, pcorr_histogram, threshold_crossing, AccuracySummary,
    ChiDefinition, DecoderKind, Posterior,
};
use crate::error::{Error, Result};
use crate::mps::TruncationPolicy;
use crate::rng::{derive_seed, stream};
use crate::statevector::run_generation_with;
use crate::swssb::{compare_decay, run_swssb_experiment, CorrelatorSeries};
use crate::symmetry::ChargeLabel;
use crate::u1::{decode_classical, generate_u1_record, run_classical_swssb};

pub mod log;
pub mod validate;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "CHARGELAB_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    pub cutoff: f64,
    pub max_chi: Option<usize>,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig { cutoff: crate::mps::DEFAULT_CUTOFF, max_chi: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub decoder: String,
    pub hist_bins: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { decoder: "noisy".into(), hist_bins: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwssbConfig {
    pub n_traj: usize,
    pub max_chi: usize,
    pub grid_points: usize,
}

impl Default for SwssbConfig {
    fn default() -> Self {
        SwssbConfig { n_traj: 100, max_chi: 256, grid_points: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub n_records: usize,
    pub sampler_max_chi: usize,
    pub definitions: Vec<String>,
    pub target_alpha: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            n_records: 10,
            sampler_max_chi: 256,
            definitions: ChiDefinition::ALL.iter().map(|d| d.tag().to_string()).collect(),
            target_alpha: 2.5,
        }
    }
}

/// One experiment manifest. Serialized as TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    #[serde(rename = "L")]
    pub lengths: Vec<usize>,
    #[serde(rename = "p")]
    pub rates: Vec<f64>,
    pub n_records: usize,
    pub seed: u64,
    /// Overrides the `L²` scramble depth.
    pub scramble_steps: Option<usize>,
    pub out_dir: PathBuf,
    /// Worker threads; `0` uses every core.
    pub workers: usize,
    pub truncation: TruncationConfig,
    pub decode: DecodeConfig,
    pub swssb: SwssbConfig,
    pub scaling: ScalingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: Model::U1xZ2.tag().into(),
            lengths: vec![8, 12],
            rates: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            n_records: 100,
            seed: 1,
            scramble_steps: None,
            out_dir: PathBuf::from("out"),
            workers: 0,
            truncation: TruncationConfig::default(),
            decode: DecodeConfig::default(),
            swssb: SwssbConfig::default(),
            scaling: ScalingConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn model(&self) -> Result<Model> {
        Model::from_tag(&self.model).ok_or_else(|| Error::Config(format!("unknown model {:?}", self.model)))
    }

    pub fn decoder(&self) -> Result<DecoderKind> {
        DecoderKind::from_tag(&self.decode.decoder)
            .ok_or_else(|| Error::Config(format!("unknown decoder {:?}", self.decode.decoder)))
    }

    pub fn policy(&self) -> Result<TruncationPolicy> {
        TruncationPolicy::new(self.truncation.cutoff, self.truncation.max_chi)
    }

    pub fn definitions(&self) -> Result<Vec<ChiDefinition>> {
        self.scaling
            .definitions
            .iter()
            .map(|t| ChiDefinition::from_tag(t).ok_or_else(|| Error::Config(format!("unknown bond definition {t:?}"))))
            .collect()
    }

    pub fn scramble_steps(&self, len: usize) -> usize {
        self.scramble_steps.unwrap_or(len * len)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.model()?;
        self.decoder()?;
        self.policy()?;
        self.definitions()?;
        if self.lengths.is_empty() || self.rates.is_empty() {
            return bad("L and p lists must be nonempty".into());
        }
        if let Some(&l) = self.lengths.iter().find(|&&l| l < 2 || l % 2 != 0) {
            return bad(format!("L = {l} is not an even length >= 2"));
        }
        if let Some(&p) = self.rates.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("p = {p} is outside [0, 1]"));
        }
        if self.n_records == 0 || self.swssb.n_traj == 0 || self.scaling.n_records == 0 {
            return bad("record and trajectory counts must be positive".into());
        }
        if self.decode.hist_bins == 0 || self.swssb.max_chi == 0 || self.scaling.sampler_max_chi == 0 {
            return bad("hist_bins and bond caps must be positive".into());
        }
        Ok(())
    }

    /// Run `f` inside a pool with the configured worker count.
    pub fn with_pool<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(f)
    }
}

/// `records/{model}_L{L}_p{p}.jsonl` under the output directory.
pub fn record_path(out: &Path, model: Model, len: usize, p: f64) -> PathBuf {
    out.join("records").join(format!("{}_L{len}_p{p}.jsonl", model.tag()))
}

/// Label of record `i` of `n`: the first half `0+`, the rest `1`.
pub fn label_for(i: usize, n: usize) -> ChargeLabel {
    if i < n / 2 {
        ChargeLabel::ZeroPlus
    } else {
        ChargeLabel::One
    }
}

pub fn record_seed(master: u64, len: usize, p: f64, i: usize) -> u64 {
    derive_seed(master, &[len as u64, p.to_bits(), i as u64])
}

/// Generate the records of one `(L, p)` cell.
pub fn generate_cell(cfg: &ExperimentConfig, len: usize, p: f64) -> Result<Vec<MeasurementRecord>> {
    let model = cfg.model()?;
    let n = cfg.n_records;
    let steps = cfg.scramble_steps(len);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let (label, seed) = (label_for(i, n), record_seed(cfg.seed, len, p, i));
            Ok(match model {
                Model::U1xZ2 => run_generation_with(label, len, p, seed, steps)?.0,
                Model::U1 => generate_u1_record(label, len, p, seed, steps)?.0,
            })
        })
        .collect()
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    create_parent(path)?;
    let mut w = BufWriter::new(File::create(path)?);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

/// One JSONL file per `(L, p)`. Returns the files written.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let model = cfg.model()?;
    cfg.with_pool(|| {
        let mut written = Vec::new();
        for &len in &cfg.lengths {
            for &p in &cfg.rates {
                let t = Instant::now();
                let recs = generate_cell(cfg, len, p)?;
                let path = record_path(&cfg.out_dir, model, len, p);
                write_file(&path, |w| write_records(w, &recs))?;
                log::event("generate", &[
                    ("L", len.into()),
                    ("p", p.into()),
                    ("n", recs.len().into()),
                    ("seconds", t.elapsed().as_secs_f64().into()),
                    ("file", path.display().to_string().into()),
                ]);
                written.push(path);
            }
        }
        Ok(written)
    })
}

pub fn load_records(path: &Path) -> Result<Vec<MeasurementRecord>> {
    let file = File::open(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    let recs = read_records(BufReader::new(file))?;
    if recs.is_empty() {
        return Err(Error::EmptyInput("record file contains no records"));
    }
    Ok(recs)
}

/// Posterior of a record under the given decoder, dispatching on the model.
pub fn decode_record(record: &MeasurementRecord, decoder: DecoderKind, policy: &TruncationPolicy) -> Result<Posterior> {
    match (record.model, decoder) {
        (Model::U1, DecoderKind::Noisy) => decode_classical(record, policy),
        _ => decode(record, decoder, policy),
    }
}

/// Decoded cell: posteriors in file order plus their summary.
#[derive(Clone, Debug)]
pub struct DecodedCell {
    pub len: usize,
    pub p: f64,
    pub posteriors: Vec<Posterior>,
    pub summary: AccuracySummary,
}

pub fn decode_cell(
    records: &[MeasurementRecord],
    decoder: DecoderKind,
    policy: &TruncationPolicy,
    seed: u64,
    len: usize,
    p: f64,
) -> Result<DecodedCell> {
    let posteriors: Vec<Posterior> =
        records.par_iter().map(|r| decode_record(r, decoder, policy)).collect::<Result<_>>()?;
    // ties are settled by a stream of their own
    let mut coin = stream(derive_seed(seed, &[len as u64, p.to_bits()]), 1);
    let summary = accuracy(decoder, len, p, &posteriors, &mut coin)?;
    Ok(DecodedCell { len, p, posteriors, summary })
}

pub const ACCURACY_HEADER: &str = "decoder,L,p,n,acc,stderr,mass_above_half";
pub const HISTOGRAM_HEADER: &str = "decoder,L,p,bin_lo,bin_hi,count,density";
pub const POSTERIOR_HEADER: &str = "decoder,L,p,index,label,loglik_corr,loglik_wrong,p_corr,tie";
pub const THRESHOLD_HEADER: &str = "decoder,L_small,L_large,p_cross,ci_lo,ci_hi";
pub const CORRELATOR_HEADER: &str = "model,L,p,x,mean_c2,stderr,n_traj,missing,typical_c2,phi_c2";
pub const DECAY_HEADER: &str = "model,L,p,n_points,power_rss,exp_rss,preferred";
pub const SCALING_HEADER: &str = "definition,L,p,n,median_chi,min_chi,max_chi";
pub const SCALING_FIT_HEADER: &str = "definition,p,alpha,alpha_stderr,ci_lo,ci_hi,nearest_target";

/// Reals in CSV files: 17 significant digits, empty for non-finite values.
fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

/// Output files of the decode pipeline.
pub struct DecodeOutputs {
    pub accuracy: PathBuf,
    pub histogram: PathBuf,
    pub posteriors: PathBuf,
    pub thresholds: PathBuf,
    pub cells: Vec<DecodedCell>,
}

/// Decode every `(L, p)` record file and write accuracy, histogram,
/// per-record posterior and threshold-crossing CSVs.
pub fn cmd_decode(cfg: &ExperimentConfig) -> Result<DecodeOutputs> {
    cfg.validate()?;
    let (model, decoder, policy) = (cfg.model()?, cfg.decoder()?, cfg.policy()?);
    let cells: Vec<DecodedCell> = cfg.with_pool(|| {
        let mut cells = Vec::new();
        for &len in &cfg.lengths {
            for &p in &cfg.rates {
                let t = Instant::now();
                let recs = load_records(&record_path(&cfg.out_dir, model, len, p))?;
                let cell = decode_cell(&recs, decoder, &policy, cfg.seed, len, p)?;
                log::event("decode", &[
                    ("decoder", decoder.tag().into()),
                    ("L", len.into()),
                    ("p", p.into()),
                    ("n", recs.len().into()),
                    ("accuracy", cell.summary.accuracy.into()),
                    ("seconds", t.elapsed().as_secs_f64().into()),
                ]);
                cells.push(cell);
            }
        }
        Ok(cells)
    })?;
    let tag = decoder.tag();
    let out = &cfg.out_dir;
    let accuracy_path = out.join(format!("accuracy_{tag}.csv"));
    write_file(&accuracy_path, |w| {
        writeln!(w, "{ACCURACY_HEADER}")?;
        for c in &cells {
            let s = &c.summary;
            writeln!(
                w,
                "{tag},{},{},{},{},{},{}",
                s.len,
                s.p,
                s.n_records,
                real(s.accuracy),
                real(s.stderr),
                real(mass_above_half(&c.posteriors))
            )?;
        }
        Ok(())
    })?;
    let histogram_path = out.join(format!("histogram_{tag}.csv"));
    write_file(&histogram_path, |w| {
        writeln!(w, "{HISTOGRAM_HEADER}")?;
        for c in &cells {
            let h = pcorr_histogram(&c.posteriors, cfg.decode.hist_bins)?;
            for ((e, count), dens) in h.edges.windows(2).zip(&h.counts).zip(h.density()) {
                writeln!(w, "{tag},{},{},{},{},{count},{}", c.len, c.p, e[0], e[1], real(dens))?;
            }
        }
        Ok(())
    })?;
    let posteriors_path = out.join(format!("posteriors_{tag}.csv"));
    write_file(&posteriors_path, |w| {
        writeln!(w, "{POSTERIOR_HEADER}")?;
        for c in &cells {
            for (i, post) in c.posteriors.iter().enumerate() {
                writeln!(
                    w,
                    "{tag},{},{},{i},{},{},{},{},{}",
                    c.len,
                    c.p,
                    post.truth.symbol(),
                    real(post.loglik_corr),
                    real(post.loglik_wrong),
                    real(post.p_corr),
                    post.tie
                )?;
            }
        }
        Ok(())
    })?;
    let thresholds_path = out.join(format!("threshold_{tag}.csv"));
    write_file(&thresholds_path, |w| {
        writeln!(w, "{THRESHOLD_HEADER}")?;
        let mut lens = cfg.lengths.clone();
        lens.sort_unstable();
        lens.dedup();
        for pair in lens.windows(2) {
            let curve = |len: usize| -> Vec<AccuracySummary> {
                let mut v: Vec<AccuracySummary> =
                    cells.iter().filter(|c| c.len == len).map(|c| c.summary).collect();
                v.sort_by(|a, b| a.p.total_cmp(&b.p));
                v
            };
            match threshold_crossing(&curve(pair[0]), &curve(pair[1])) {
                Ok(f) => writeln!(w, "{tag},{},{},{},{},{}", pair[0], pair[1], real(f.p_cross), real(f.ci_lo), real(f.ci_hi))?,
                Err(e) => log::event("threshold_skipped", &[
                    ("L_small", pair[0].into()),
                    ("L_large", pair[1].into()),
                    ("reason", e.to_string().into()),
                ]),
            }
        }
        Ok(())
    })?;
    Ok(DecodeOutputs {
        accuracy: accuracy_path,
        histogram: histogram_path,
        posteriors: posteriors_path,
        thresholds: thresholds_path,
        cells,
    })
}

/// Correlator experiments for every `(L, p)`; writes the correlator and decay-fit CSVs.
pub fn cmd_swssb(cfg: &ExperimentConfig) -> Result<(PathBuf, PathBuf, Vec<CorrelatorSeries>)> {
    cfg.validate()?;
    let model = cfg.model()?;
    let policy = TruncationPolicy::new(cfg.truncation.cutoff, Some(cfg.swssb.max_chi))?;
    let series: Vec<CorrelatorSeries> = cfg.with_pool(|| {
        let mut all = Vec::new();
        for &len in &cfg.lengths {
            for &p in &cfg.rates {
                let t = Instant::now();
                let s = match model {
                    Model::U1xZ2 => run_swssb_experiment(len, p, cfg.swssb.n_traj, &policy, cfg.seed, cfg.swssb.grid_points)?,
                    Model::U1 => run_classical_swssb(len, p, cfg.swssb.n_traj, &policy, cfg.seed, cfg.swssb.grid_points)?,
                };
                log::event("swssb", &[
                    ("model", model.tag().into()),
                    ("L", len.into()),
                    ("p", p.into()),
                    ("n_traj", s.n_traj().into()),
                    ("peak_bond", s.peak_bond.into()),
                    ("seconds", t.elapsed().as_secs_f64().into()),
                ]);
                all.push(s);
            }
        }
        Ok(all)
    })?;
    let corr_path = cfg.out_dir.join("correlator.csv");
    let fit_path = cfg.out_dir.join("correlator_fits.csv");
    let mut all_rows = Vec::new();
    for s in &series {
        all_rows.push(s.rows()?);
    }
    write_file(&corr_path, |w| {
        writeln!(w, "{CORRELATOR_HEADER}")?;
        for r in all_rows.iter().flatten() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.model.tag(),
                r.len,
                r.p,
                r.x,
                real(r.mean_c2),
                real(r.stderr),
                r.n_traj,
                r.missing,
                real(r.typical_c2),
                real(r.phi_c2)
            )?;
        }
        Ok(())
    })?;
    write_file(&fit_path, |w| {
        writeln!(w, "{DECAY_HEADER}")?;
        for rows in &all_rows {
            let n_points = rows.iter().filter(|r| !r.missing).count();
            let (pw, ex, pref) = match compare_decay(rows) {
                Ok(c) => (
                    real(c.power_law.rss),
                    real(c.exponential.rss),
                    if c.prefers_power_law() { "power_law" } else { "exponential" },
                ),
                Err(_) => (String::new(), String::new(), "unresolved"),
            };
            writeln!(w, "{},{},{},{n_points},{pw},{ex},{pref}", rows[0].model.tag(), rows[0].len, rows[0].p)?;
        }
        Ok(())
    })?;
    Ok((corr_path, fit_path, series))
}

/// Bond-dimension scaling at every configured rate; writes the scaling and fit CSVs.
pub fn cmd_scaling(cfg: &ExperimentConfig) -> Result<(PathBuf, PathBuf)> {
    cfg.validate()?;
    if cfg.model()? != Model::U1xZ2 {
        return Err(Error::Config("bond scaling is defined for the u1xz2 model".into()));
    }
    let policy = cfg.policy()?;
    let sampler = TruncationPolicy::new(cfg.truncation.cutoff, Some(cfg.scaling.sampler_max_chi))?;
    let defs = cfg.definitions()?;
    let mut lens = cfg.lengths.clone();
    lens.sort_unstable();
    lens.dedup();
    let results = cfg.with_pool(|| {
        cfg.rates
            .iter()
            .map(|&p| {
                let t = Instant::now();
                let b = bond_scaling(&lens, p, cfg.scaling.n_records, &policy, &sampler, cfg.seed, &defs)?;
                log::event("scaling", &[("p", p.into()), ("seconds", t.elapsed().as_secs_f64().into())]);
                Ok((p, b))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let table = cfg.out_dir.join("scaling.csv");
    let fits = cfg.out_dir.join("scaling_fit.csv");
    write_file(&table, |w| {
        writeln!(w, "{SCALING_HEADER}")?;
        for (_, b) in &results {
            for r in &b.rows {
                writeln!(w, "{},{},{},{},{},{},{}", r.definition.tag(), r.len, r.p, r.n, r.median_chi, r.min_chi, r.max_chi)?;
            }
        }
        Ok(())
    })?;
    write_file(&fits, |w| {
        writeln!(w, "{SCALING_FIT_HEADER}")?;
        for (p, b) in &results {
            let nearest = b.nearest(cfg.scaling.target_alpha).map(|n| n.0);
            for (d, f) in &b.fits {
                writeln!(
                    w,
                    "{},{p},{},{},{},{},{}",
                    d.tag(),
                    real(f.exponent),
                    real(f.exponent_stderr),
                    real(f.ci_lo),
                    real(f.ci_hi),
                    nearest == Some(*d)
                )?;
            }
        }
        Ok(())
    })?;
    Ok((table, fits))
}
