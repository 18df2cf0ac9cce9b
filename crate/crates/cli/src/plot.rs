//! Tidy CSV tables for plotting fitted models.

use crate::commands::{csv_writer, Status};
use crate::error::{CliError, CliResult};
use crate::fitfile::{FitFile, Loaded};
use dvine_vbda::data::SeriesData;
use dvine_vbda::dvine::DvineSpec;
use dvine_vbda::paircopula::PairCopula;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Points per axis of the pair-copula density grid.
pub const GRID: usize = 30;

/// Trailing window of the lower-bound trace used for the LB-vs-K table.
pub const LB_WINDOW: usize = 500;

/// `(u, v, log c(u, v))` on the midpoints of a `GRID x GRID` partition of the unit square.
pub fn log_density_grid(spec: &DvineSpec, block: usize) -> Vec<(f64, f64, f64)> {
    let c = PairCopula::new(spec.params()[block]);
    let mid = |i: usize| (i as f64 + 0.5) / GRID as f64;
    (0..GRID)
        .flat_map(|i| (0..GRID).map(move |j| (i, j)))
        .map(|(i, j)| (mid(i), mid(j), c.log_pdf(mid(i), mid(j))))
        .collect()
}

fn label(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn moments(rows: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let n = rows.len() as f64;
    let dim = rows.first().map_or(0, Vec::len);
    (0..dim)
        .map(|c| {
            let m = rows.iter().map(|r| r[c]).sum::<f64>() / n;
            let v = rows.iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            (m, v.sqrt())
        })
        .collect()
}

pub fn cmd_plotdata(fits: &[PathBuf], out_dir: &Path) -> CliResult<Status> {
    if fits.is_empty() {
        return Err(CliError::input("plotdata needs at least one --fit"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", out_dir.display())))?;
    let loaded: Vec<(String, FitFile, Loaded)> = fits
        .iter()
        .map(|p| {
            let f = FitFile::load(p)?;
            let l = Loaded::from_file(&f)?;
            Ok((label(p), f, l))
        })
        .collect::<CliResult<_>>()?;

    let mut steps = csv_writer(&out_dir.join("lb_vs_step.csv"))?;
    steps.write_record(["fit", "step", "lb"])?;
    let mut by_k = csv_writer(&out_dir.join("lb_vs_k.csv"))?;
    by_k.write_record(["fit", "va", "k", "lb"])?;
    for (name, _, l) in &loaded {
        if let Loaded::Vb(f) = l {
            for (s, lb) in f.lb_trace.iter().enumerate() {
                steps.write_record([name.clone(), (s + 1).to_string(), lb.to_string()])?;
            }
            by_k.write_record([
                name.clone(),
                f.config.variant.number().to_string(),
                f.config.factors.to_string(),
                f.lb_tail_mean(LB_WINDOW).to_string(),
            ])?;
        }
    }
    steps.flush()?;
    by_k.flush()?;

    let mut grid = csv_writer(&out_dir.join("copula_grid.csv"))?;
    grid.write_record(["fit", "k", "l1", "l2", "u", "v", "log_density"])?;
    for (name, f, _) in &loaded {
        let spec = f.mean_spec()?;
        for (b, idx) in f.layout.iter().enumerate() {
            for (u, v, ld) in log_density_grid(&spec, b) {
                grid.write_record([
                    name.clone(),
                    idx.k.to_string(),
                    idx.l1.to_string(),
                    idx.l2.to_string(),
                    u.to_string(),
                    v.to_string(),
                    ld.to_string(),
                ])?;
            }
        }
    }
    grid.flush()?;

    let mut mom = csv_writer(&out_dir.join("moments.csv"))?;
    mom.write_record(["vb_fit", "mcmc_fit", "index", "vb_mean", "vb_sd", "mcmc_mean", "mcmc_sd"])?;
    for (mname, mf, ml) in &loaded {
        let Loaded::Mcmc(m) = ml else { continue };
        let chain = moments(&m.draws);
        for (vname, vf, vl) in &loaded {
            let Loaded::Vb(v) = vl else { continue };
            if vf.template != mf.template {
                eprintln!("warning: {vname} and {mname} have different models; skipped in moments.csv");
                continue;
            }
            let q = v.state()?.factor;
            for (i, ((&mu, sd), (cm, csd))) in q.mu().iter().zip(q.sd()).zip(&chain).enumerate() {
                mom.write_record([
                    vname.clone(),
                    mname.clone(),
                    mf.template.free[i].to_string(),
                    mu.to_string(),
                    sd.to_string(),
                    cm.to_string(),
                    csd.to_string(),
                ])?;
            }
        }
    }
    mom.flush()?;

    let (_, first, _) = &loaded[0];
    let table = first.table()?;
    let mut freq = csv_writer(&out_dir.join("frequencies.csv"))?;
    freq.write_record(["series", "value", "count", "frequency"])?;
    for (l, col) in table.columns.iter().enumerate() {
        if let SeriesData::Discrete(y) = col {
            let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
            for &v in y {
                *counts.entry(v).or_default() += 1;
            }
            for (v, c) in counts {
                freq.write_record([
                    (l + 1).to_string(),
                    v.to_string(),
                    c.to_string(),
                    (c as f64 / y.len() as f64).to_string(),
                ])?;
            }
        }
    }
    freq.flush()?;
    Ok(Status::Ok)
}
