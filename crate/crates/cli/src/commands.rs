use crate::error::{CliError, CliResult};
use crate::fitfile::{FitFile, Loaded, RunConfig};
use crate::input::{empirical_margins, parse_types, read_margins, read_table, Table};
use dvine_vbda::analysis::{
    chain_spec_draws, chain_summaries, predict, spearman_report, vb_spec_draws, vb_summaries, ParamSummary,
};
use dvine_vbda::data::{AugmentedData, SeriesData};
use dvine_vbda::dgp::{autologistic, dvine_series};
use dvine_vbda::dvine::{Dvine, DvineSpec};
use dvine_vbda::margins::{Margin, SeriesKind};
use dvine_vbda::mcmc::{run_sampler, McmcConfig};
use dvine_vbda::vbda::latent::Variant;
use dvine_vbda::vbda::{fit_dvine, ModelTemplate, VbConfig};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// The chain got stuck; outputs were still written (exit 4).
    Stuck,
}

pub const FAMILY: &str = "gumbel_mix";

/// Names of the five transformed coordinates of a pair copula.
const PSI_NAMES: [&str; 5] = ["tau_a", "delta_a", "tau_b", "delta_b", "w"];

pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn csv_writer(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

fn check_family(family: &str) -> CliResult<()> {
    if family != FAMILY {
        return Err(CliError::input(format!("unsupported family '{family}', only '{FAMILY}' is available")));
    }
    Ok(())
}

fn load_data(input: &Path, types: &[SeriesKind], margins: Option<&Path>) -> CliResult<(Table, Vec<Margin>, AugmentedData)> {
    let table = read_table(input, types)?;
    let margins = match margins {
        Some(m) => read_margins(m, types)?,
        None => empirical_margins(&table)?,
    };
    let data = AugmentedData::new(&table.columns, &margins)?;
    Ok((table, margins, data))
}

pub struct VbOptions {
    pub input: PathBuf,
    pub types: String,
    pub family: String,
    pub p: usize,
    pub k: usize,
    pub s: usize,
    pub steps: usize,
    pub va: u8,
    pub seed: u64,
    pub margins: Option<PathBuf>,
    pub output: PathBuf,
    pub lb_trace: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

pub fn fit_vb(command: &str, o: &VbOptions) -> CliResult<Status> {
    check_family(&o.family)?;
    let types = parse_types(&o.types)?;
    if command == "fit-uni" && types.len() != 1 {
        return Err(CliError::input("fit-uni takes a single series; use fit-multi"));
    }
    if o.p == 0 {
        return Err(CliError::input("--p must be at least 1"));
    }
    let variant = Variant::from_number(o.va)?;
    let template = ModelTemplate::all_free(types.len(), o.p);
    let config = VbConfig {
        samples: o.s,
        steps: o.steps,
        factors: o.k,
        variant,
        seed: o.seed,
        checkpoint: o.checkpoint.clone(),
        ..VbConfig::default()
    };
    config.validate(template.n_free())?;
    let (table, margins, data) = load_data(&o.input, &types, o.margins.as_deref())?;
    let fit = fit_dvine(&data, &template, &config)?;
    if fit.dropped > 0 {
        eprintln!("warning: {} non-finite samples dropped", fit.dropped);
    }
    let run = RunConfig {
        command: command.to_string(),
        input: o.input.display().to_string(),
        types,
        family: o.family.clone(),
        p: o.p,
        k: Some(o.k),
        s: Some(o.s),
        steps: Some(o.steps),
        va: Some(o.va),
        burnin: None,
        iterates: None,
        seed: o.seed,
    };
    let file = FitFile::from_vb(run, &table, margins, template, &fit)?;
    file.save(&o.output)?;
    let trace_path = o.lb_trace.clone().unwrap_or_else(|| sibling(&o.output, "_lb_trace.csv"));
    let mut w = csv_writer(&trace_path)?;
    w.write_record(["step", "lb"])?;
    for (s, lb) in fit.lb_trace.iter().enumerate() {
        w.write_record([(s + 1).to_string(), lb.to_string()])?;
    }
    w.flush()?;
    eprintln!("lower bound (last 100 steps): {:.4}", fit.lb_tail_mean(100));
    Ok(Status::Ok)
}

pub struct McmcOptions {
    pub input: PathBuf,
    pub types: String,
    pub family: String,
    pub p: usize,
    pub burnin: usize,
    pub iterates: usize,
    pub seed: u64,
    pub margins: Option<PathBuf>,
    pub output: PathBuf,
    pub draws: Option<PathBuf>,
}

pub fn fit_mcmc(o: &McmcOptions) -> CliResult<Status> {
    check_family(&o.family)?;
    let types = parse_types(&o.types)?;
    if o.p == 0 {
        return Err(CliError::input("--p must be at least 1"));
    }
    let template = ModelTemplate::all_free(types.len(), o.p);
    let config = McmcConfig {
        burnin: o.burnin,
        iterates: o.iterates,
        seed: o.seed,
        ..McmcConfig::default()
    };
    config.validate(dvine_vbda::mcmc::theta_blocks(&template).len())?;
    let (table, margins, data) = load_data(&o.input, &types, o.margins.as_deref())?;
    let res = run_sampler(&data, &template, &config)?;
    let run = RunConfig {
        command: "mcmc-fit".into(),
        input: o.input.display().to_string(),
        types,
        family: o.family.clone(),
        p: o.p,
        k: None,
        s: None,
        steps: None,
        va: None,
        burnin: Some(o.burnin),
        iterates: Some(o.iterates),
        seed: o.seed,
    };
    let file = FitFile::from_mcmc(run, &table, margins, &res)?;
    file.save(&o.output)?;

    let draws_path = o.draws.clone().unwrap_or_else(|| sibling(&o.output, "_draws.csv"));
    let mut w = csv_writer(&draws_path)?;
    let layout = &file.layout;
    let mut header = vec!["sweep".to_string()];
    header.extend(res.template.free.iter().map(|&f| {
        let b = &layout[f / 5];
        format!("k{}_{}_{}_{}", b.k, b.l1, b.l2, PSI_NAMES[f % 5])
    }));
    w.write_record(&header)?;
    for (s, row) in res.draws.iter().enumerate() {
        let mut rec = vec![(o.burnin + s + 1).to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let d = &res.diagnostics;
    eprintln!(
        "u acceptance {:.3}, theta acceptance {:?}, proposal failures {}",
        d.u_acceptance, d.theta_acceptance, d.proposal_failures
    );
    if d.stuck {
        eprintln!(
            "warning: latent sampler stuck (u acceptance below 0.1% over 1000 sweeps, first at sweep {})",
            d.stuck_at.unwrap_or(0)
        );
        return Ok(Status::Stuck);
    }
    Ok(Status::Ok)
}

pub fn cmd_predict(fit_path: &Path, horizon: usize, n: usize, seed: u64, output: &Path) -> CliResult<Status> {
    let fit = FitFile::load(fit_path)?;
    let data = fit.data()?;
    let loaded = Loaded::from_file(&fit)?;
    let pred = predict(loaded.posterior(), &data, &fit.margins, &fit.template, horizon, n, seed)?;
    let mut w = csv_writer(output)?;
    w.write_record(["step", "series", "draw", "value"])?;
    for h in 0..pred.horizon {
        for l in 0..pred.r {
            for d in 0..pred.n_draws {
                w.write_record([
                    (h + 1).to_string(),
                    (l + 1).to_string(),
                    (d + 1).to_string(),
                    pred.get(h, l, d).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(Status::Ok)
}

fn posterior_specs(fit: &FitFile, n: usize, seed: u64) -> CliResult<Vec<DvineSpec>> {
    Ok(match Loaded::from_file(fit)? {
        Loaded::Vb(f) => vb_spec_draws(&f, &fit.template, n, seed)?,
        Loaded::Mcmc(m) => chain_spec_draws(&m, n)?,
    })
}

#[derive(Serialize)]
struct SpearmanOutput<'a> {
    version: &'a str,
    fit: String,
    n_sim: usize,
    param_draws: usize,
    seed: u64,
    report: &'a dvine_vbda::analysis::SpearmanReport,
}

pub fn cmd_spearman(
    fit_path: &Path,
    n_sim: usize,
    param_draws: usize,
    seed: u64,
    output: &Path,
    json: Option<&Path>,
) -> CliResult<Status> {
    let fit = FitFile::load(fit_path)?;
    if param_draws == 0 {
        return Err(CliError::input("--param-draws must be at least 1"));
    }
    let specs = posterior_specs(&fit, param_draws, seed)?;
    let report = spearman_report(&specs, &fit.margins, n_sim, seed)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let mut w = csv_writer(output)?;
    w.write_record(["i", "j", "k", "mean", "q05", "q95"])?;
    for e in &report.entries {
        w.write_record([
            e.i.to_string(),
            e.j.to_string(),
            e.k.to_string(),
            e.mean.to_string(),
            e.q05.to_string(),
            e.q95.to_string(),
        ])?;
    }
    w.flush()?;
    let json_path = json.map(Path::to_path_buf).unwrap_or_else(|| output.with_extension("json"));
    write_json(
        &json_path,
        &SpearmanOutput {
            version: dvine_vbda::VERSION,
            fit: fit_path.display().to_string(),
            n_sim,
            param_draws,
            seed,
            report: &report,
        },
    )?;
    Ok(Status::Ok)
}

pub enum DgpKind {
    Autologistic { intercept: f64, slope: f64 },
    Dvine { spec: PathBuf, margins: PathBuf },
}

pub fn cmd_simulate(kind: &DgpKind, t_len: usize, seed: u64, output: &Path) -> CliResult<Status> {
    if t_len == 0 {
        return Err(CliError::input("--t must be at least 1"));
    }
    let columns = match kind {
        DgpKind::Autologistic { intercept, slope } => {
            vec![SeriesData::Discrete(autologistic(t_len, *intercept, *slope, seed)?)]
        }
        DgpKind::Dvine { spec, margins } => {
            let text = std::fs::read_to_string(spec).map_err(|e| CliError::input(format!("{}: {e}", spec.display())))?;
            let spec: DvineSpec =
                serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", spec.display())))?;
            let text =
                std::fs::read_to_string(margins).map_err(|e| CliError::input(format!("{}: {e}", margins.display())))?;
            let margins: Vec<Margin> =
                serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", margins.display())))?;
            dvine_series(&Dvine::new(spec), &margins, t_len, seed)?
        }
    };
    let mut w = csv_writer(output)?;
    let r = columns.len();
    let header: Vec<String> = if r == 1 { vec!["y".into()] } else { (1..=r).map(|l| format!("y{l}")).collect() };
    w.write_record(&header)?;
    for t in 0..t_len {
        let row: Vec<String> = columns
            .iter()
            .map(|c| match c {
                SeriesData::Discrete(v) => v[t].to_string(),
                SeriesData::Continuous(v) => v[t].to_string(),
            })
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(Status::Ok)
}

pub fn cmd_summary(fit_path: &Path, draws: usize, seed: u64, output: Option<&Path>) -> CliResult<Status> {
    let fit = FitFile::load(fit_path)?;
    let rows: Vec<ParamSummary> = match Loaded::from_file(&fit)? {
        Loaded::Vb(f) => {
            eprintln!(
                "variational fit, VA{}, K={}, lower bound (last 100 steps) {:.4}",
                f.config.variant.number(),
                f.config.factors,
                f.lb_tail_mean(100)
            );
            vb_summaries(&f, &fit.template, draws, seed)?
        }
        Loaded::Mcmc(m) => {
            let d = &m.diagnostics;
            eprintln!(
                "chain fit, {} sweeps, u acceptance {:.3}, stuck {}",
                d.sweeps, d.u_acceptance, d.stuck
            );
            chain_summaries(&m)?
        }
    };
    let sink: Box<dyn std::io::Write> = match output {
        Some(p) => Box::new(
            std::fs::File::create(p).map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display())))?,
        ),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["k", "l1", "l2", "name", "mean", "sd", "q05", "q50", "q95"])?;
    for s in &rows {
        w.write_record([
            s.k.to_string(),
            s.l1.to_string(),
            s.l2.to_string(),
            s.name.clone(),
            s.mean.to_string(),
            s.sd.to_string(),
            s.q05.to_string(),
            s.q50.to_string(),
            s.q95.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(Status::Ok)
}
