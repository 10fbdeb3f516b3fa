//! Run configuration: JSON config file merged with command-line flags, plus
//! the hash that identifies a run.

use std::fs;
use std::path::{Path, PathBuf};

use abc_core::region::{GridPlan, OptimizerBudget};
use abc_core::{parse_channel_spec, ChannelPair};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::Invalid;

/// Config file contents. Every field is optional; flags override them.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub channel: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid_gamma: Option<usize>,
    pub grid_mu: Option<usize>,
    pub bits: Option<bool>,
    pub budget: Option<BudgetChoice>,
    /// Rate pairs in nats.
    pub rates: Option<Vec<[f64; 2]>>,
    pub rate_grid: Option<RateGrid>,
    /// Also compute the region and label each rate point.
    pub classify: Option<bool>,
    /// Code documents, as paths or inline objects.
    pub codes: Option<Vec<CodeSource>>,
    /// Explicit exponent parameter tuples for bound checks.
    pub params: Option<Vec<ParamTuple>>,
    /// Number of grid-sampled parameter tuples per code.
    pub param_samples: Option<usize>,
    /// Include the optimized exponent parameters at each code's rates.
    pub include_optimum: Option<bool>,
    pub etas: Option<Vec<f64>>,
    pub random_laws: Option<usize>,
    /// Factor applied to the exponent before the bound is formed. Values
    /// other than 1 are for exercising the failure path.
    pub exponent_scale: Option<f64>,
    pub optimize_decoders: Option<bool>,
    /// Budget presets compared by the `sweep` command.
    pub budgets: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum BudgetChoice {
    Preset(String),
    Custom(OptimizerBudget),
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RateGrid {
    pub r1: [f64; 2],
    pub r2: [f64; 2],
    pub steps: [usize; 2],
}

impl RateGrid {
    pub fn points(&self) -> Vec<[f64; 2]> {
        let axis = |[lo, hi]: [f64; 2], n: usize| -> Vec<f64> {
            if n <= 1 {
                vec![lo]
            } else {
                (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
            }
        };
        let a = axis(self.r1, self.steps[0]);
        let b = axis(self.r2, self.steps[1]);
        a.iter().flat_map(|&x| b.iter().map(move |&y| [x, y])).collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CodeSource {
    Path(PathBuf),
    Inline(Value),
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ParamTuple {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
    pub lambda: f64,
}

/// A code as given, before parsing against the channel.
#[derive(Debug, Clone, Serialize)]
pub struct CodeText {
    pub source: String,
    pub text: String,
}

/// Fully resolved settings. Its JSON form is what the config hash covers,
/// so it holds contents rather than paths.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub channel_spec: String,
    pub seed: u64,
    pub grid_gamma: usize,
    pub grid_mu: usize,
    pub budget: OptimizerBudget,
    pub rates: Vec<[f64; 2]>,
    pub classify: bool,
    pub codes: Vec<CodeText>,
    pub params: Vec<ParamTuple>,
    pub param_samples: usize,
    pub include_optimum: bool,
    pub etas: Vec<f64>,
    pub random_laws: usize,
    pub exponent_scale: f64,
    pub optimize_decoders: bool,
    pub budgets: Vec<String>,
    #[serde(skip)]
    pub channel: Option<ChannelPair>,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub bits: bool,
}

/// Flag values shared by every command.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub channel: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid_gamma: Option<usize>,
    pub grid_mu: Option<usize>,
    pub bits: bool,
    pub budget: Option<String>,
    pub rates: Vec<[f64; 2]>,
    pub codes: Vec<PathBuf>,
}

fn read(path: &Path) -> Result<String, Invalid> {
    fs::read_to_string(path).map_err(|e| Invalid(format!("cannot read {}: {e}", path.display())))
}

fn resolve_budget(choice: BudgetChoice, base: &Path) -> Result<OptimizerBudget, Invalid> {
    match choice {
        BudgetChoice::Custom(b) => Ok(b),
        BudgetChoice::Preset(name) => {
            if let Some(b) = OptimizerBudget::preset(&name) {
                return Ok(b);
            }
            let path = base.join(&name);
            let text = read(&path)?;
            serde_json::from_str(&text)
                .map_err(|e| Invalid(format!("budget {}: {e}", path.display())))
        }
    }
}

impl RunConfig {
    pub fn resolve(command: &str, ov: Overrides) -> Result<Self, Invalid> {
        let (file, base) = match &ov.config {
            Some(p) => {
                let text = read(p)?;
                let cfg: FileConfig = serde_json::from_str(&text)
                    .map_err(|e| Invalid(format!("config {}: {e}", p.display())))?;
                (cfg, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (FileConfig::default(), PathBuf::new()),
        };
        let here = PathBuf::new();

        let channel_path = match (ov.channel, file.channel) {
            (Some(p), _) => p,
            (None, Some(p)) => base.join(p),
            (None, None) => return Err(Invalid("no channel given (--channel)".into())),
        };
        let channel = parse_channel_spec(&read(&channel_path)?)
            .map_err(|e| Invalid(format!("channel {}: {e}", channel_path.display())))?;

        let budget_default = if command == "exponent" || command == "verify" {
            OptimizerBudget::fast()
        } else {
            OptimizerBudget::default()
        };
        let budget = match (ov.budget, file.budget) {
            (Some(b), _) => resolve_budget(BudgetChoice::Preset(b), &here)?,
            (None, Some(b)) => resolve_budget(b, &base)?,
            (None, None) => budget_default,
        };
        let seed = ov.seed.or(file.seed).unwrap_or(0);
        let budget = budget.with_seed(seed);

        let mut rates = if ov.rates.is_empty() {
            file.rates.unwrap_or_default()
        } else {
            ov.rates
        };
        if let Some(g) = file.rate_grid {
            if g.steps.contains(&0) {
                return Err(Invalid("rate_grid steps must be positive".into()));
            }
            rates.extend(g.points());
        }
        if rates.iter().flatten().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Invalid("rates must be finite and nonnegative".into()));
        }

        let mut codes = Vec::new();
        let sources: Vec<CodeSource> = if ov.codes.is_empty() {
            file.codes
                .unwrap_or_default()
                .into_iter()
                .map(|c| match c {
                    CodeSource::Path(p) => CodeSource::Path(base.join(p)),
                    other => other,
                })
                .collect()
        } else {
            ov.codes.into_iter().map(CodeSource::Path).collect()
        };
        for (i, src) in sources.into_iter().enumerate() {
            codes.push(match src {
                CodeSource::Path(p) => CodeText {
                    source: p.display().to_string(),
                    text: read(&p)?,
                },
                CodeSource::Inline(v) => CodeText {
                    source: format!("inline-{i}"),
                    text: v.to_string(),
                },
            });
        }

        let grid_gamma = ov.grid_gamma.or(file.grid_gamma).unwrap_or(GridPlan::default().n_gamma);
        let grid_mu = ov.grid_mu.or(file.grid_mu).unwrap_or(GridPlan::default().n_mu);
        if grid_gamma < 2 || grid_mu < 1 {
            return Err(Invalid("grid needs at least 2 gamma and 1 mu points".into()));
        }
        let etas = file.etas.unwrap_or_else(|| vec![0.05, 0.1, 0.5]);
        if etas.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Invalid("etas must be positive".into()));
        }
        let exponent_scale = file.exponent_scale.unwrap_or(1.0);
        if !exponent_scale.is_finite() {
            return Err(Invalid("exponent_scale must be finite".into()));
        }
        let params = file.params.unwrap_or_default();
        for p in &params {
            abc_core::exponent::ExponentParams::new(p.alpha, p.beta, p.gamma, p.mu, p.lambda)
                .map_err(|e| Invalid(format!("params: {e}")))?;
        }
        let budgets = file
            .budgets
            .unwrap_or_else(|| vec!["fast".into(), "default".into(), "thorough".into()]);
        for b in &budgets {
            if OptimizerBudget::preset(b).is_none() {
                return Err(Invalid(format!("unknown budget preset {b}")));
            }
        }

        Ok(RunConfig {
            command: command.to_string(),
            channel_spec: channel.to_spec_json(),
            seed,
            grid_gamma,
            grid_mu,
            budget,
            rates,
            classify: file.classify.unwrap_or(false),
            codes,
            params,
            param_samples: file.param_samples.unwrap_or(8),
            include_optimum: file.include_optimum.unwrap_or(true),
            etas,
            random_laws: file.random_laws.unwrap_or(10),
            exponent_scale,
            optimize_decoders: file.optimize_decoders.unwrap_or(true),
            budgets,
            channel: Some(channel),
            out: ov.out.or(file.out.map(|p| base.join(p))).unwrap_or_else(|| PathBuf::from(".")),
            bits: ov.bits || file.bits.unwrap_or(false),
        })
    }

    pub fn channel(&self) -> &ChannelPair {
        self.channel.as_ref().expect("resolved channel")
    }

    pub fn grid(&self) -> GridPlan {
        GridPlan {
            n_gamma: self.grid_gamma,
            n_mu: self.grid_mu,
        }
    }

    /// SHA-256 of the resolved settings in JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("plain config");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
