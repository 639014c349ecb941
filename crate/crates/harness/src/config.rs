//! Experiment configuration read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gwrw_core::offspring::{DerivedParams, OffspringLaw};
use gwrw_core::walk::validate_epsilon;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    pub seed: u64,
    pub replicas: u64,
    pub beta: f64,
    pub epsilon: f64,
    /// Offspring probabilities keyed by the number of children.
    pub offspring: BTreeMap<String, f64>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub scaling: ScalingParams,
    pub subsequence: SubsequenceParams,
    pub trap_time: TrapTimeParams,
    pub w_law: WLawParams,
    pub nonconvergence: NonconvergenceParams,
    pub limit_law: LimitLawParams,
    pub toy: ToyParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 1,
            replicas: 1000,
            beta: 5.0,
            epsilon: 0.1,
            offspring: BTreeMap::from([("0".to_string(), 0.2), ("2".to_string(), 0.8)]),
            output: None,
            workers: None,
            scaling: ScalingParams::default(),
            subsequence: SubsequenceParams::default(),
            trap_time: TrapTimeParams::default(),
            w_law: WLawParams::default(),
            nonconvergence: NonconvergenceParams::default(),
            limit_law: LimitLawParams::default(),
            toy: ToyParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingParams {
    pub n: Vec<u64>,
    /// Walk steps per replica.
    pub budget: u64,
    pub slope_tolerance: f64,
    pub bootstrap: usize,
}

impl Default for ScalingParams {
    fn default() -> Self {
        Self {
            n: vec![250, 500, 1000, 2000],
            budget: 10_000_000,
            slope_tolerance: 0.15,
            bootstrap: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubsequenceParams {
    pub lambda: f64,
    pub k: Vec<u32>,
    pub budget: u64,
    pub final_ks: f64,
}

impl Default for SubsequenceParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            k: vec![4, 5, 6, 7, 8],
            budget: 10_000_000,
            final_ks: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrapTimeParams {
    /// Levels on which the decrease of the median is asserted.
    pub n: Vec<u64>,
    /// Further levels reported without assertion.
    pub report_n: Vec<u64>,
    pub budget: u64,
    /// Levels for the comparison of `chi*/beta^H` with `Z_inf`.
    pub chi_star_n: Vec<u64>,
    pub chi_star_replicas: u64,
    pub final_ks: f64,
    pub direct_threshold: u64,
    pub block_moves: u64,
    pub block_runs: u64,
    pub s_tolerance: f64,
}

impl Default for TrapTimeParams {
    fn default() -> Self {
        Self {
            n: vec![250, 692, 1915],
            report_n: vec![500, 1000, 2000],
            budget: 10_000_000,
            chi_star_n: vec![1000, 10000],
            chi_star_replicas: 20_000,
            final_ks: 0.05,
            direct_threshold: 10_000,
            block_moves: 500_000,
            block_runs: 4,
            s_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WLawParams {
    pub n: Vec<u64>,
    /// Backbone moves allowed per direct draw.
    pub budget: u64,
    pub block_moves: u64,
    pub block_runs: u64,
    /// Asserted lower bound for `P[W_n >= 1]`.
    pub floor: f64,
    /// Lowest admissible p-value of the direct against the block route.
    pub route_pvalue: f64,
}

impl Default for WLawParams {
    fn default() -> Self {
        Self {
            n: vec![100, 250, 500, 1000, 2000],
            budget: 50_000_000,
            block_moves: 500_000,
            block_runs: 4,
            floor: 0.25,
            route_pvalue: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonconvergenceParams {
    pub beta: f64,
    /// Target number of terms of the triangular array.
    pub terms: u64,
    /// Size of the pool of `Z_inf` draws feeding the array.
    pub pool: u64,
    pub block_moves: u64,
    pub block_runs: u64,
    pub bootstrap: usize,
    pub floor: f64,
    pub control: f64,
    pub pvalue: f64,
    pub s_tolerance: f64,
}

impl Default for NonconvergenceParams {
    fn default() -> Self {
        Self {
            beta: 20.0,
            terms: 1500,
            pool: 100_000,
            block_moves: 500_000,
            block_runs: 4,
            bootstrap: 200,
            floor: 0.05,
            control: 0.03,
            pvalue: 0.01,
            s_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitLawParams {
    pub draws: u64,
    pub x: Vec<f64>,
    pub grid_points: usize,
    /// Draws of `S~` averaged in the density `psi`.
    pub psi_draws: usize,
    pub block_moves: u64,
    pub block_runs: u64,
    pub s_tolerance: f64,
    pub scaling_tolerance: f64,
    pub mass_tolerance: f64,
}

impl Default for LimitLawParams {
    fn default() -> Self {
        Self {
            draws: 100_000,
            x: vec![0.5, 1.0, 2.0, 5.0],
            grid_points: 4001,
            psi_draws: 2000,
            block_moves: 500_000,
            block_runs: 4,
            s_tolerance: 1e-3,
            scaling_tolerance: 1e-6,
            mass_tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyParams {
    pub replicas: u64,
    pub beta: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub k: Vec<u32>,
    pub tau: Vec<f64>,
    /// Betas at which the off-subsequence floor is compared.
    pub floor_betas: Vec<f64>,
    pub subsequence_ks: f64,
    pub floor: f64,
    /// Slack `epsilon` in the bound `C tau^(2 - alpha - epsilon)`.
    pub variance_slack: f64,
    /// Draws per row for single-term tails and truncated variances.
    pub tail_draws: u64,
    /// Exponential draws defining the law behind the series characteristic function.
    pub cf_pool: u64,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            replicas: 100_000,
            beta: 20.0,
            alpha: 0.5,
            lambda: 1.0,
            k: vec![1, 2, 3, 4, 5, 6],
            tau: vec![1.0, 0.1, 0.01, 0.001],
            floor_betas: vec![5.0, 20.0],
            subsequence_ks: 0.03,
            floor: 0.05,
            variance_slack: 0.05,
            tail_draws: 1_000_000,
            cf_pool: 20_000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn law(&self) -> Result<OffspringLaw, HarnessError> {
        let mut map = BTreeMap::new();
        for (k, &p) in &self.offspring {
            let k: usize = k.trim().parse().map_err(|_| {
                HarnessError::Config(format!("offspring key {k:?} is not a child count"))
            })?;
            map.insert(k, p);
        }
        OffspringLaw::from_map(&map).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn params(&self) -> Result<DerivedParams, HarnessError> {
        self.params_at(self.beta)
    }

    pub fn params_at(&self, beta: f64) -> Result<DerivedParams, HarnessError> {
        DerivedParams::new(&self.law()?, beta).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Checks the law, `beta > beta_c` and the `epsilon` window, for the main
    /// `beta` and the one of the non-convergence suite.
    pub fn validate(&self) -> Result<(), HarnessError> {
        for beta in [self.beta, self.nonconvergence.beta] {
            let p = self.params_at(beta)?;
            validate_epsilon(&p, self.epsilon).map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        let bad = |what: &str| Err(HarnessError::Config(what.to_string()));
        if !increasing(&self.scaling.n) || self.scaling.n.len() < 2 {
            return bad("scaling.n must hold at least two increasing levels");
        }
        if self.subsequence.k.len() < 2 || !self.subsequence.k.windows(2).all(|w| w[0] < w[1]) {
            return bad("subsequence.k must hold at least two increasing indices");
        }
        if !(self.subsequence.lambda > 0.0) {
            return bad("subsequence.lambda must be positive");
        }
        if !increasing(&self.trap_time.n) || !increasing(&self.trap_time.chi_star_n) {
            return bad("trap_time levels must be increasing");
        }
        if !increasing(&self.w_law.n) {
            return bad("w_law.n must be increasing");
        }
        if self.limit_law.grid_points < 3 || self.limit_law.grid_points % 2 == 0 {
            return bad("limit_law.grid_points must be odd and at least 3");
        }
        if self.limit_law.x.iter().any(|&x| !(x > 0.0)) {
            return bad("limit_law.x must be positive");
        }
        if !(self.toy.alpha > 0.0 && self.toy.alpha < 1.0) {
            return bad("toy.alpha must lie in (0, 1)");
        }
        if self.toy.floor_betas.iter().any(|&b| !(b > 1.0)) || !(self.toy.beta > 1.0) {
            return bad("toy betas must exceed 1");
        }
        if self.toy.tau.iter().any(|&t| !(t > 0.0)) {
            return bad("toy.tau must be positive");
        }
        Ok(())
    }

    /// SHA-256 of the configuration without the fields that cannot change
    /// results (output path and worker count).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        c.workers = None;
        let text = toml::to_string(&c).expect("configuration serialises");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn increasing(v: &[u64]) -> bool {
    !v.is_empty() && v.windows(2).all(|w| w[0] < w[1])
}
