use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use super::curves::{mislabeled_fraction_overlay, selection_occurrence_curve, windowed_counts};
use super::stats::confidence_interval;
use super::svg::{self, Chart, Series};
use crate::data::{read_manifest, DataError, NoiseRecord};
use crate::harness::{read_records, EpochRecord, FailureRecord, HarnessError, Record, RunMeta, SamplerKind};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no run records found in {0}")]
    NoRuns(PathBuf),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("unknown figure {0:?} (expected errors, occurrence, overlay, entropy, sensitivity)")]
    UnknownFigure(String),
    #[error("{path}: {message}")]
    BadRun { path: PathBuf, message: String },
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Figure {
    Errors,
    Occurrence,
    Overlay,
    Entropy,
    Sensitivity,
}

impl Figure {
    pub const ALL: [Figure; 5] = [
        Figure::Errors,
        Figure::Occurrence,
        Figure::Overlay,
        Figure::Entropy,
        Figure::Sensitivity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Errors => "errors",
            Figure::Occurrence => "occurrence",
            Figure::Overlay => "overlay",
            Figure::Entropy => "entropy",
            Figure::Sensitivity => "sensitivity",
        }
    }
}

impl FromStr for Figure {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| AnalysisError::UnknownFigure(s.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub figures: Vec<Figure>,
    /// Overlay window; defaults to `1000 * n_train / 50000`.
    pub window: Option<usize>,
    /// Epochs in the initial and final occurrence windows.
    pub span_epochs: usize,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            figures: vec![Figure::Errors, Figure::Occurrence, Figure::Overlay, Figure::Entropy],
            window: None,
            span_epochs: 5,
        }
    }
}

/// One run file with its noise manifest.
#[derive(Debug, Clone)]
pub struct RunData {
    pub path: PathBuf,
    pub meta: RunMeta,
    pub epochs: Vec<EpochRecord>,
    pub failure: Option<FailureRecord>,
    pub manifest: Vec<NoiseRecord>,
}

impl RunData {
    pub fn completed(&self) -> bool {
        self.failure.is_none() && self.epochs.len() == self.meta.epochs
    }

    pub fn last_error(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.test_error)
    }

    pub fn best_error(&self) -> Option<f64> {
        self.epochs.iter().map(|e| e.test_error).reduce(f64::min)
    }

    /// Latest cumulative count snapshot at or before `epoch`; zeros before
    /// the first epoch.
    pub fn counts_at(&self, epoch: Option<usize>) -> Vec<u64> {
        epoch
            .and_then(|target| {
                self.epochs
                    .iter()
                    .rev()
                    .filter(|e| e.epoch <= target)
                    .find_map(|e| e.counts.clone())
            })
            .unwrap_or_else(|| vec![0; self.meta.n_train])
    }

    pub fn final_counts(&self) -> Vec<u64> {
        self.counts_at(self.epochs.last().map(|e| e.epoch))
    }
}

/// Loads every run record file (`*.jsonl`, excluding noise manifests and
/// timing files) in `dir`, sorted by file name.
pub fn load_runs(dir: impl AsRef<Path>) -> Result<Vec<RunData>, AnalysisError> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".jsonl") && !name.ends_with(".noise.jsonl") && !name.ends_with(".timing.jsonl")
        })
        .collect();
    paths.sort();
    let mut runs = Vec::with_capacity(paths.len());
    for path in paths {
        let mut records = read_records(&path)?.into_iter();
        let Some(Record::Meta(meta)) = records.next() else {
            // Runs that failed during setup have no meta line; nothing to plot.
            continue;
        };
        let mut epochs = Vec::new();
        let mut failure = None;
        for r in records {
            match r {
                Record::Epoch(e) => epochs.push(e),
                Record::Failure(f) => failure = Some(f),
                Record::Meta(_) => {
                    return Err(AnalysisError::BadRun {
                        path,
                        message: "second meta record".into(),
                    })
                }
                Record::Iteration(_) => {}
            }
        }
        let manifest_path = path.with_extension("noise.jsonl");
        let manifest = if manifest_path.exists() {
            read_manifest(&manifest_path)?
        } else {
            Vec::new()
        };
        runs.push(RunData {
            path,
            meta,
            epochs,
            failure,
            manifest,
        });
    }
    Ok(runs)
}

type GroupKey = (String, String);

fn group(runs: &[RunData]) -> BTreeMap<GroupKey, Vec<&RunData>> {
    let mut groups: BTreeMap<GroupKey, Vec<&RunData>> = BTreeMap::new();
    for r in runs {
        groups
            .entry((r.meta.label.clone(), format!("{:.2}", r.meta.noise_ratio)))
            .or_default()
            .push(r);
    }
    groups
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_ci(values: &[f64]) -> (f64, Option<f64>) {
    match confidence_interval(values) {
        Ok((m, h)) => (m, Some(h)),
        Err(_) => (mean(values), None),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Best-epoch and last-epoch error over the completed runs of one
/// `(label, noise ratio)` group.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub noise_ratio: String,
    pub runs: usize,
    pub failed: usize,
    pub best_mean: f64,
    pub best_half_width: Option<f64>,
    pub last_mean: f64,
    pub last_half_width: Option<f64>,
}

pub fn summary_table(runs: &[RunData]) -> Vec<SummaryRow> {
    group(runs)
        .into_iter()
        .filter_map(|((label, noise_ratio), members)| {
            let done: Vec<&&RunData> = members.iter().filter(|r| r.completed() && !r.epochs.is_empty()).collect();
            if done.is_empty() {
                return None;
            }
            let best: Vec<f64> = done.iter().filter_map(|r| r.best_error()).collect();
            let last: Vec<f64> = done.iter().filter_map(|r| r.last_error()).collect();
            let (best_mean, best_half_width) = mean_ci(&best);
            let (last_mean, last_half_width) = mean_ci(&last);
            Some(SummaryRow {
                label,
                noise_ratio,
                runs: done.len(),
                failed: members.len() - done.len(),
                best_mean,
                best_half_width,
                last_mean,
                last_half_width,
            })
        })
        .collect()
}

struct Emitter<'a> {
    out: &'a Path,
    written: Vec<PathBuf>,
    provenance: Vec<String>,
}

impl Emitter<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), AnalysisError> {
        let path = self.out.join(name);
        std::fs::write(&path, contents).map_err(|source| AnalysisError::Write {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    fn svg(&mut self, name: &str, panels: &[Chart]) -> Result<(), AnalysisError> {
        let doc = svg::render(panels, &self.provenance);
        self.write(name, &doc)
    }
}

/// Writes the CSV and SVG files for each requested figure family into
/// `out` and returns their paths.
pub fn emit_plots(runs: &[RunData], out: impl AsRef<Path>, options: &AnalyzeOptions) -> Result<Vec<PathBuf>, AnalysisError> {
    let out = out.as_ref();
    if runs.is_empty() {
        return Err(AnalysisError::MissingInput("no run records to analyze".into()));
    }
    std::fs::create_dir_all(out).map_err(|source| AnalysisError::Write {
        path: out.to_path_buf(),
        source,
    })?;
    let mut provenance: Vec<String> = runs.iter().map(|r| r.meta.config_hash.clone()).collect();
    provenance.sort();
    provenance.dedup();
    let mut em = Emitter {
        out,
        written: Vec::new(),
        provenance,
    };
    let mut figures = options.figures.clone();
    figures.sort();
    figures.dedup();
    for figure in figures {
        match figure {
            Figure::Errors => errors(&mut em, runs)?,
            Figure::Occurrence => occurrence(&mut em, runs, options.span_epochs)?,
            Figure::Overlay => overlay(&mut em, runs, options.window)?,
            Figure::Entropy => entropy(&mut em, runs)?,
            Figure::Sensitivity => sensitivity(&mut em, runs)?,
        }
    }
    Ok(em.written)
}

fn errors(em: &mut Emitter, runs: &[RunData]) -> Result<(), AnalysisError> {
    let mut csv = String::from("label,noise_ratio,runs,failed,best_mean,best_half_width,last_mean,last_half_width\n");
    for row in summary_table(runs) {
        let _ = writeln!(
            csv,
            "{},{},{},{},{:.6},{},{:.6},{}",
            row.label,
            row.noise_ratio,
            row.runs,
            row.failed,
            row.best_mean,
            opt(row.best_half_width),
            row.last_mean,
            opt(row.last_half_width)
        );
    }
    em.write("errors_summary.csv", &csv)?;

    let mut curve = String::from("label,noise_ratio,epoch,mean,half_width\n");
    let mut panels: BTreeMap<String, Chart> = BTreeMap::new();
    for ((label, noise), members) in group(runs) {
        let done: Vec<&&RunData> = members.iter().filter(|r| r.completed()).collect();
        let epochs = done.iter().map(|r| r.epochs.len()).min().unwrap_or(0);
        let mut series = Series {
            name: label.clone(),
            ..Default::default()
        };
        for e in 0..epochs {
            let values: Vec<f64> = done.iter().map(|r| r.epochs[e].test_error).collect();
            let (m, h) = mean_ci(&values);
            let _ = writeln!(curve, "{label},{noise},{},{m:.6},{}", e + 1, opt(h));
            series.points.push(((e + 1) as f64, m));
            if let Some(h) = h {
                series.band.push(((e + 1) as f64, m - h, m + h));
            }
        }
        panels
            .entry(noise.clone())
            .or_insert_with(|| Chart {
                title: format!("test error, noise {noise}"),
                x_label: "epoch".into(),
                y_label: "test error".into(),
                series: Vec::new(),
            })
            .series
            .push(series);
    }
    em.write("errors_curve.csv", &curve)?;
    let panels: Vec<Chart> = panels.into_values().collect();
    em.svg("errors.svg", &panels)
}

fn occurrence(em: &mut Emitter, runs: &[RunData], span: usize) -> Result<(), AnalysisError> {
    let span = span.max(1);
    let mut csv = String::from("label,noise_ratio,window,rank,count\n");
    let names = ["initial", "final", "total"];
    let mut panels: Vec<Chart> = names
        .iter()
        .map(|w| Chart {
            title: format!("selection occurrence ({w})"),
            x_label: "sorted instance".into(),
            y_label: "selections".into(),
            series: Vec::new(),
        })
        .collect();
    for ((label, noise), members) in group(runs) {
        let done: Vec<&&RunData> = members.iter().filter(|r| r.completed() && !r.epochs.is_empty()).collect();
        if done.is_empty() {
            continue;
        }
        let curves_for = |r: &RunData| -> [Vec<u64>; 3] {
            let last = r.epochs.last().map(|e| e.epoch).unwrap_or(0);
            let warm = r.meta.warmup_epochs.min(last);
            let before_initial = warm.checked_sub(1);
            let initial_end = (warm + span - 1).min(last);
            let final_start = last.checked_sub(span);
            let total = r.final_counts();
            [
                selection_occurrence_curve(&windowed_counts(&r.counts_at(before_initial), &r.counts_at(Some(initial_end)))),
                selection_occurrence_curve(&windowed_counts(&r.counts_at(final_start), &total)),
                selection_occurrence_curve(&total),
            ]
        };
        let per_run: Vec<[Vec<u64>; 3]> = done.iter().map(|r| curves_for(r)).collect();
        for (w, name) in names.iter().enumerate() {
            let len = per_run.iter().map(|c| c[w].len()).min().unwrap_or(0);
            let mut series = Series {
                name: format!("{label} {noise}"),
                ..Default::default()
            };
            for rank in 0..len {
                let avg = per_run.iter().map(|c| c[w][rank] as f64).sum::<f64>() / per_run.len() as f64;
                let _ = writeln!(csv, "{label},{noise},{name},{rank},{avg:.3}");
                series.points.push((rank as f64, avg));
            }
            panels[w].series.push(series);
        }
    }
    em.write("occurrence.csv", &csv)?;
    em.svg("occurrence.svg", &panels)
}

fn overlay(em: &mut Emitter, runs: &[RunData], window: Option<usize>) -> Result<(), AnalysisError> {
    let mut csv = String::from("label,noise_ratio,window,position,fraction,count\n");
    let mut counts_panel = Chart {
        title: "total selections (sorted)".into(),
        x_label: "sorted instance".into(),
        y_label: "selections".into(),
        series: Vec::new(),
    };
    let mut overlay_panel = Chart {
        title: "mislabeled fraction in window".into(),
        x_label: "window start (sorted instance)".into(),
        y_label: "mislabeled fraction".into(),
        series: Vec::new(),
    };
    for ((label, noise), members) in group(runs) {
        let done: Vec<&&RunData> = members.iter().filter(|r| r.completed() && !r.epochs.is_empty()).collect();
        let Some(first) = done.first() else { continue };
        let n = first.meta.n_train;
        let w = window
            .unwrap_or_else(|| ((1000.0 * n as f64 / 50_000.0).round() as usize).max(1))
            .min(n);
        let overlays: Vec<Vec<f64>> = done
            .iter()
            .map(|r| mislabeled_fraction_overlay(&r.final_counts(), &r.manifest, w))
            .collect();
        let sorted: Vec<Vec<u64>> = done.iter().map(|r| selection_occurrence_curve(&r.final_counts())).collect();
        let len = overlays.iter().map(Vec::len).min().unwrap_or(0);
        let mut frac_series = Series {
            name: format!("{label} {noise}"),
            ..Default::default()
        };
        let mut count_series = frac_series.clone();
        for pos in 0..len {
            let f = overlays.iter().map(|o| o[pos]).sum::<f64>() / overlays.len() as f64;
            let c = sorted.iter().map(|s| s[pos] as f64).sum::<f64>() / sorted.len() as f64;
            let _ = writeln!(csv, "{label},{noise},{w},{pos},{f:.6},{c:.3}");
            frac_series.points.push((pos as f64, f));
        }
        let clen = sorted.iter().map(Vec::len).min().unwrap_or(0);
        for pos in 0..clen {
            let c = sorted.iter().map(|s| s[pos] as f64).sum::<f64>() / sorted.len() as f64;
            count_series.points.push((pos as f64, c));
        }
        overlay_panel.series.push(frac_series);
        counts_panel.series.push(count_series);
    }
    em.write("overlay.csv", &csv)?;
    em.svg("overlay.svg", &[counts_panel, overlay_panel])
}

fn entropy(em: &mut Emitter, runs: &[RunData]) -> Result<(), AnalysisError> {
    let mut csv = String::from("label,noise_ratio,epoch,entropy\n");
    let mut chart = Chart {
        title: "sampler weight entropy".into(),
        x_label: "epoch".into(),
        y_label: "entropy (nats)".into(),
        series: Vec::new(),
    };
    for ((label, noise), members) in group(runs) {
        let done: Vec<&&RunData> = members
            .iter()
            .filter(|r| r.completed() && r.epochs.iter().all(|e| e.weights.is_some()) && !r.epochs.is_empty())
            .collect();
        if done.is_empty() {
            continue;
        }
        let epochs = done.iter().map(|r| r.epochs.len()).min().unwrap_or(0);
        let mut series = Series {
            name: format!("{label} {noise}"),
            ..Default::default()
        };
        for e in 0..epochs {
            let h = done
                .iter()
                .filter_map(|r| r.epochs[e].weights.as_ref().map(|w| w.entropy))
                .sum::<f64>()
                / done.len() as f64;
            let _ = writeln!(csv, "{label},{noise},{},{h:.6}", e + 1);
            series.points.push(((e + 1) as f64, h));
        }
        chart.series.push(series);
    }
    em.write("entropy.csv", &csv)?;
    em.svg("entropy.svg", &[chart])
}

fn sensitivity(em: &mut Emitter, runs: &[RunData]) -> Result<(), AnalysisError> {
    let fpl: Vec<&RunData> = runs.iter().filter(|r| r.meta.sampler == SamplerKind::Fpl).collect();
    if fpl.is_empty() {
        return Err(AnalysisError::MissingInput("sensitivity needs fpl runs".into()));
    }
    // (noise, eta, beta, shape) -> last errors of completed runs, failures
    type Key = (String, String, String, String);
    let mut cells: BTreeMap<Key, (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for r in &fpl {
        let p = &r.meta.sampler_config.fpl;
        let key = (
            format!("{:.2}", r.meta.noise_ratio),
            format!("{}", p.eta),
            format!("{}", p.beta),
            format!("{}", p.shape),
        );
        let cell = cells.entry(key).or_default();
        match (r.completed(), r.last_error(), r.best_error()) {
            (true, Some(last), Some(best)) => {
                cell.0.push(last);
                cell.1.push(best);
            }
            _ => cell.2 += 1,
        }
    }
    let mut csv = String::from("noise_ratio,eta,beta,shape,runs,failed,last_mean,last_half_width,best_mean\n");
    for ((noise, eta, beta, shape), (last, best, failed)) in &cells {
        let (lm, lh) = if last.is_empty() { (f64::NAN, None) } else { mean_ci(last) };
        let bm = if best.is_empty() { f64::NAN } else { mean(best) };
        let _ = writeln!(
            csv,
            "{noise},{eta},{beta},{shape},{},{failed},{lm:.6},{},{bm:.6}",
            last.len(),
            opt(lh)
        );
    }
    em.write("sensitivity.csv", &csv)?;

    // Marginal mean last-epoch error against each hyperparameter.
    let axes = ["eta", "beta", "shape"];
    let mut panels = Vec::new();
    for (a, axis) in axes.iter().enumerate() {
        let mut by_noise: BTreeMap<&str, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
        for ((noise, eta, beta, shape), (last, _, _)) in &cells {
            let value = [eta, beta, shape][a].clone();
            by_noise.entry(noise).or_default().entry(value).or_default().extend(last);
        }
        let series = by_noise
            .into_iter()
            .map(|(noise, values)| {
                let mut points: Vec<(f64, f64)> = values
                    .into_iter()
                    .filter(|(_, v)| !v.is_empty())
                    .filter_map(|(x, v)| x.parse::<f64>().ok().map(|x| (x, mean(&v))))
                    .collect();
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                Series {
                    name: format!("noise {noise}"),
                    points,
                    band: Vec::new(),
                }
            })
            .collect();
        panels.push(Chart {
            title: format!("last-epoch error vs {axis}"),
            x_label: (*axis).into(),
            y_label: "test error".into(),
            series,
        });
    }
    em.svg("sensitivity.svg", &panels)
}
