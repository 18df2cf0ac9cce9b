//! The fit JSON written by `fit-uni`, `fit-multi` and `mcmc-fit` and read by
//! every downstream command.

use crate::error::{CliError, CliResult};
use crate::input::Table;
use dvine_vbda::analysis::{vb_spec_draws, Posterior};
use dvine_vbda::data::AugmentedData;
use dvine_vbda::dvine::{pair_layout, DvineSpec, PairIndex};
use dvine_vbda::margins::{Margin, SeriesKind};
use dvine_vbda::mcmc::{McmcConfig, McmcDiagnostics, McmcResult};
use dvine_vbda::vbda::latent::Variant;
use dvine_vbda::vbda::{FitResult, ModelTemplate, VbConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Draws of the variational posterior behind `gamma_mean` and `gamma_sd`.
pub const GAMMA_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vb,
    Mcmc,
}

/// Echo of the options a fit was run with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub input: String,
    pub types: Vec<SeriesKind>,
    pub family: String,
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub va: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burnin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterates: Option<usize>,
    pub seed: u64,
}

/// VA3 band-1 Cholesky factor of the latent precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandFactor {
    pub diag: Vec<f64>,
    pub band: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub version: String,
    pub method: Method,
    pub config: RunConfig,
    pub seed: u64,
    pub r: usize,
    pub p: usize,
    pub types: Vec<SeriesKind>,
    /// Observations, one row per time point.
    pub y: Vec<Vec<f64>>,
    pub margins: Vec<Margin>,
    pub layout: Vec<PairIndex>,
    pub template: ModelTemplate,
    /// Posterior mean of the five parameters of each pair copula, in layout order.
    pub gamma_mean: Vec<f64>,
    pub gamma_sd: Vec<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vb_config: Option<VbConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub muz: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logsigmaz: Option<Vec<f64>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<BandFactor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    /// Lower-bound estimate at each step.
    #[serde(rename = "LB", default, skip_serializing_if = "Option::is_none")]
    pub lb: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_latent: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropped: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcmc_config: Option<McmcConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<McmcDiagnostics>,
    /// Post-burnin draws of the free transformed parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<Vec<Vec<f64>>>,
}

fn mean_sd_columns(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let Some(first) = rows.first() else {
        return (vec![], vec![]);
    };
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..first.len()).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / n).collect();
    let sd = (0..first.len())
        .map(|c| {
            if rows.len() < 2 {
                return 0.0;
            }
            (rows.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect();
    (mean, sd)
}

fn flatten(specs: &[DvineSpec]) -> Vec<Vec<f64>> {
    specs
        .iter()
        .map(|s| s.params().iter().flat_map(|p| p.to_array()).collect())
        .collect()
}

struct Common<'a> {
    config: RunConfig,
    table: &'a Table,
    margins: Vec<Margin>,
    template: ModelTemplate,
}

impl FitFile {
    fn base(c: Common<'_>, method: Method, gamma: (Vec<f64>, Vec<f64>)) -> Self {
        let (r, p) = (c.template.r(), c.template.p());
        Self {
            version: dvine_vbda::VERSION.to_string(),
            method,
            seed: c.config.seed,
            types: c.config.types.clone(),
            config: c.config,
            r,
            p,
            y: c.table.rows(),
            margins: c.margins,
            layout: pair_layout(r, p),
            template: c.template,
            gamma_mean: gamma.0,
            gamma_sd: gamma.1,
            vb_config: None,
            mu: None,
            b: None,
            d: None,
            muz: None,
            logsigmaz: None,
            c: None,
            lambda: None,
            lb: None,
            n_latent: None,
            cv: None,
            dropped: None,
            mcmc_config: None,
            diagnostics: None,
            draws: None,
        }
    }

    pub fn from_vb(
        config: RunConfig,
        table: &Table,
        margins: Vec<Margin>,
        template: ModelTemplate,
        fit: &FitResult,
    ) -> CliResult<Self> {
        let specs = vb_spec_draws(fit, &template, GAMMA_DRAWS, fit.config.seed)?;
        let gamma = mean_sd_columns(&flatten(&specs));
        let state = fit.state()?;
        let q = &state.factor;
        let b = (0..q.n()).map(|i| q.b().row(i).iter().copied().collect()).collect();
        let variant = fit.config.variant;
        let mut out = Self::base(
            Common {
                config,
                table,
                margins,
                template,
            },
            Method::Vb,
            gamma,
        );
        out.vb_config = Some(fit.config.clone());
        out.mu = Some(q.mu().to_vec());
        out.b = Some(b);
        out.d = Some(q.d().to_vec());
        out.muz = Some(state.latent.eta().to_vec());
        out.logsigmaz = (variant == Variant::Va2).then(|| state.latent.log_omega().to_vec());
        out.c = (variant == Variant::Va3).then(|| BandFactor {
            diag: state.latent.l_diag().to_vec(),
            band: state.latent.l_band().to_vec(),
        });
        out.lambda = Some(fit.lambda.clone());
        out.lb = Some(fit.lb_trace.clone());
        out.n_latent = Some(fit.n_latent);
        out.cv = Some(fit.cv.clone());
        out.dropped = Some(fit.dropped);
        Ok(out)
    }

    pub fn from_mcmc(config: RunConfig, table: &Table, margins: Vec<Margin>, result: &McmcResult) -> CliResult<Self> {
        let gamma = mean_sd_columns(&result.constrained_draws()?);
        let mut out = Self::base(
            Common {
                config,
                table,
                margins,
                template: result.template.clone(),
            },
            Method::Mcmc,
            gamma,
        );
        out.mcmc_config = Some(result.config.clone());
        out.diagnostics = Some(result.diagnostics.clone());
        out.draws = Some(result.draws.clone());
        Ok(out)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read fit file {}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let version = value.get("version").and_then(|v| v.as_str()).unwrap_or("");
        if version != dvine_vbda::VERSION {
            return Err(CliError::input(format!(
                "{} was written by version '{version}', this is version '{}'",
                path.display(),
                dvine_vbda::VERSION
            )));
        }
        let fit: FitFile =
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        fit.check()?;
        Ok(fit)
    }

    fn check(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::input(format!("malformed fit file: {m}")));
        if self.template.r() != self.r || self.template.p() != self.p {
            return bad("template dimensions disagree with r and p");
        }
        if self.margins.len() != self.r || self.types.len() != self.r {
            return bad("margins or types disagree with r");
        }
        match self.method {
            Method::Vb if self.vb_config.is_none() || self.lambda.is_none() || self.n_latent.is_none() => {
                bad("variational fit without vb_config, lambda or n_latent")
            }
            Method::Mcmc if self.mcmc_config.is_none() || self.draws.is_none() || self.diagnostics.is_none() => {
                bad("chain fit without mcmc_config, draws or diagnostics")
            }
            _ => Ok(()),
        }
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
    }

    pub fn table(&self) -> CliResult<Table> {
        Table::from_rows(&self.y, &self.types)
    }

    pub fn data(&self) -> CliResult<AugmentedData> {
        Ok(AugmentedData::new(&self.table()?.columns, &self.margins)?)
    }

    pub fn vb_result(&self) -> Option<FitResult> {
        Some(FitResult {
            n_theta: self.template.n_free(),
            n_latent: self.n_latent?,
            lambda: self.lambda.clone()?,
            lb_trace: self.lb.clone().unwrap_or_default(),
            cv: self.cv.clone().unwrap_or_default(),
            dropped: self.dropped.unwrap_or(0),
            config: self.vb_config.clone()?,
        })
    }

    pub fn mcmc_result(&self) -> Option<McmcResult> {
        Some(McmcResult {
            template: self.template.clone(),
            draws: self.draws.clone()?,
            diagnostics: self.diagnostics.clone()?,
            config: self.mcmc_config.clone()?,
        })
    }

    /// Constrained posterior-mean spec, `gamma_mean` reshaped.
    pub fn mean_spec(&self) -> CliResult<DvineSpec> {
        let params = self
            .gamma_mean
            .chunks(5)
            .map(|c| dvine_vbda::paircopula::MixtureParam::from_array([c[0], c[1], c[2], c[3], c[4]]))
            .collect::<dvine_vbda::Result<Vec<_>>>()?;
        Ok(DvineSpec::new(self.r, self.p, params)?)
    }
}

/// Posterior handle borrowed from reconstructed results.
pub enum Loaded {
    Vb(FitResult),
    Mcmc(McmcResult),
}

impl Loaded {
    pub fn from_file(fit: &FitFile) -> CliResult<Self> {
        match fit.method {
            Method::Vb => fit.vb_result().map(Loaded::Vb),
            Method::Mcmc => fit.mcmc_result().map(Loaded::Mcmc),
        }
        .ok_or_else(|| CliError::input("fit file is missing posterior fields"))
    }

    pub fn posterior(&self) -> Posterior<'_> {
        match self {
            Loaded::Vb(f) => Posterior::Vb(f),
            Loaded::Mcmc(m) => Posterior::Mcmc(m),
        }
    }
}
