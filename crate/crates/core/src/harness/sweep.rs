use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{RunConfig, SweepSpec, D_UTD};
use super::run::{run, RunSummary};
use crate::error::{Error, Result};
use crate::rng;

pub const SUMMARY_FILE: &str = "summary.csv";
const SUMMARY_HEADER: &str =
    "cell,label,seeds_ok,seeds_failed,final_return_mean,final_return_ci95,final_mmse_mean,final_mmse_ci95";

/// One point of the Cartesian product of sweep axes.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub index: usize,
    pub label: String,
    pub config: RunConfig,
}

/// Across-seed aggregate for one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub index: usize,
    pub label: String,
    pub runs: Vec<RunSummary>,
    pub failures: Vec<String>,
    pub final_return: MeanCi,
    pub final_mmse: MeanCi,
}

/// Mean with a 95% normal-approximation half-width `1.96 s / sqrt(n)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub ci95: f64,
}

impl MeanCi {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                ci95: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, ci95: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self {
            mean,
            ci95: 1.96 * (var / n as f64).sqrt(),
        }
    }
}

/// Seeds fit in a TOML integer.
fn toml_seed(s: u64) -> u64 {
    s & (i64::MAX as u64)
}

/// Enumerates cells in a fixed order: the last axis varies fastest.
pub fn cells(spec: &SweepSpec) -> Vec<SweepCell> {
    type Apply = Box<dyn Fn(&mut RunConfig)>;
    let a = &spec.axes;
    let mut axes: Vec<Vec<(String, Apply)>> = Vec::new();
    let mut push = |v: Vec<(String, Apply)>| {
        if !v.is_empty() {
            axes.push(v);
        }
    };
    push(a.model_utd_multiplier.iter().map(|&m| {
        (format!("um={m}x"), Box::new(move |c: &mut RunConfig| c.model_utd = m * D_UTD) as Apply)
    }).collect());
    push(a.agent_utd.iter().map(|&u| {
        (format!("ua={u}"), Box::new(move |c: &mut RunConfig| c.agent_utd = u) as Apply)
    }).collect());
    push(a.ensemble_size.iter().map(|&m| {
        (format!("M={m}"), Box::new(move |c: &mut RunConfig| c.model.ensemble_size = m) as Apply)
    }).collect());
    push(a.reset_target.iter().map(|&t| {
        (format!("reset={t:?}"), Box::new(move |c: &mut RunConfig| c.reset.target = t) as Apply)
    }).collect());
    push(a.layer_scope.iter().map(|&s| {
        (format!("layers={s:?}"), Box::new(move |c: &mut RunConfig| c.reset.layer_scope = s) as Apply)
    }).collect());
    push(a.member_scope.iter().map(|&s| {
        (format!("members={s:?}"), Box::new(move |c: &mut RunConfig| c.reset.member_scope = s) as Apply)
    }).collect());
    push(a.reset_interval.iter().map(|&i| {
        (format!("Ir={i}"), Box::new(move |c: &mut RunConfig| c.reset.interval = i) as Apply)
    }).collect());

    let total: usize = axes.iter().map(Vec::len).product();
    (0..total)
        .map(|index| {
            let mut cfg = spec.base.clone();
            let mut labels = Vec::new();
            let mut rem = index;
            let mut picks = vec![0; axes.len()];
            for (k, axis) in axes.iter().enumerate().rev() {
                picks[k] = rem % axis.len();
                rem /= axis.len();
            }
            for (axis, &p) in axes.iter().zip(&picks) {
                (axis[p].1)(&mut cfg);
                labels.push(axis[p].0.clone());
            }
            SweepCell {
                index,
                label: if labels.is_empty() { "base".into() } else { labels.join(" ") },
                config: cfg,
            }
        })
        .collect()
}

/// Seed of run `j` in cell `index`.
pub fn cell_seed(spec: &SweepSpec, index: usize, j: usize) -> u64 {
    if spec.paired_seeds {
        toml_seed(rng::derive_seed(spec.base.seed, &[j as u64]))
    } else {
        toml_seed(rng::derive_seed(spec.base.seed, &[index as u64, j as u64]))
    }
}

fn cell_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("cell{index:03}"))
}

/// Runs every cell and seed on a pool of `jobs` threads and writes
/// `summary.csv`. Failing runs are recorded and the sweep continues.
pub fn sweep(spec: &SweepSpec, jobs: usize) -> Result<Vec<CellSummary>> {
    if spec.seeds == 0 {
        return Err(Error::config("sweep needs at least one seed per cell"));
    }
    let cells = cells(spec);
    for c in &cells {
        c.config.validate()?;
    }
    let mut work = Vec::new();
    for c in &cells {
        for j in 0..spec.seeds {
            let mut cfg = c.config.clone();
            cfg.seed = cell_seed(spec, c.index, j);
            cfg.variant = c.label.clone();
            cfg.out_dir = cell_dir(&spec.out_dir, c.index).join(format!("seed{j}"));
            work.push((c.index, cfg));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let results: Vec<(usize, Result<RunSummary>)> =
        pool.install(|| work.par_iter().map(|(i, cfg)| (*i, run(cfg))).collect());

    let mut out: Vec<CellSummary> = cells
        .iter()
        .map(|c| CellSummary {
            index: c.index,
            label: c.label.clone(),
            runs: Vec::new(),
            failures: Vec::new(),
            final_return: MeanCi::of(&[]),
            final_mmse: MeanCi::of(&[]),
        })
        .collect();
    for (i, r) in results {
        match r {
            Ok(s) => out[i].runs.push(s),
            Err(e) => out[i].failures.push(e.to_string()),
        }
    }
    for c in &mut out {
        let ret: Vec<f64> = c.runs.iter().map(|r| r.final_window_return).collect();
        let mse: Vec<f64> = c.runs.iter().map(|r| r.final_window_mmse).collect();
        c.final_return = MeanCi::of(&ret);
        c.final_mmse = MeanCi::of(&mse);
    }
    write_summary(&spec.out_dir.join(SUMMARY_FILE), &out)?;
    Ok(out)
}

fn write_summary(path: &Path, cells: &[CellSummary]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = format!("{SUMMARY_HEADER}\n");
    for c in cells {
        text += &format!(
            "{},\"{}\",{},{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            c.index,
            c.label,
            c.runs.len(),
            c.failures.len(),
            c.final_return.mean,
            c.final_return.ci95,
            c.final_mmse.mean,
            c.final_mmse.ci95
        );
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
