//! Configuration, result tables and the named experiment suites driven by
//! the `gwrw` command line.

pub mod config;
pub mod suites;
pub mod table;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub use gwrw_core as core;
use gwrw_core::environment::EnvLaws;
use gwrw_core::offspring::{
    extinction_probability, h_law, height_tail, trap_constant, DerivedParams, HeightTail,
    OffspringLaw,
};
use thiserror::Error;

pub use config::ExperimentConfig;
pub use table::{Check, ResultTable};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Run(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Scaling,
    Subsequence,
    Nonconvergence,
    TrapTime,
    WLaw,
    LimitLaw,
    ToyIid,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Scaling,
        Suite::Subsequence,
        Suite::Nonconvergence,
        Suite::TrapTime,
        Suite::WLaw,
        Suite::LimitLaw,
        Suite::ToyIid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Scaling => "scaling",
            Suite::Subsequence => "subsequence",
            Suite::Nonconvergence => "nonconvergence",
            Suite::TrapTime => "trap-time",
            Suite::WLaw => "w-law",
            Suite::LimitLaw => "limit-law",
            Suite::ToyIid => "toy-iid",
        }
    }

    /// The result a suite probes, written into the table metadata.
    pub fn citation(self) -> &'static str {
        match self {
            Suite::Scaling => "ballisticity exponent: lim ln|X_n| / ln n = gamma",
            Suite::Subsequence => {
                "Delta_n / n^(1/gamma) converges along n_lambda(k) = floor(lambda f'(q)^(-k))"
            }
            Suite::Nonconvergence => "Delta_n / n^(1/gamma) does not converge in distribution",
            Suite::TrapTime => {
                "time spent outside big traps is negligible; chi*/beta^H converges to Z_inf"
            }
            Suite::WLaw => "law of the number W_n of entries into a big trap",
            Suite::LimitLaw => "spectral function L_1 of the limit laws and the law of Z_inf",
            Suite::ToyIid => "toy sum of beta^G and lattice triangular arrays",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Suite::ALL.iter().map(|x| x.name()).collect();
                HarnessError::Config(format!(
                    "unknown experiment {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Output of a suite: the table, its assertions and any JSON exports
/// (file suffix and content).
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: Suite,
    pub table: ResultTable,
    pub checks: Vec<Check>,
    pub exports: Vec<(String, String)>,
}

impl SuiteReport {
    pub fn new(suite: Suite, cfg: &ExperimentConfig) -> Self {
        let mut table = ResultTable::default();
        table.meta("suite", suite.name());
        table.meta("citation", suite.citation());
        table.meta("git_describe", table::git_describe());
        table.meta("config_hash", cfg.hash());
        table.meta("seed", cfg.seed);
        table.meta("replicas", cfg.replicas);
        Self {
            suite,
            table,
            checks: Vec::new(),
            exports: Vec::new(),
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// The table with one trailing row per assertion.
    pub fn to_csv(&self) -> String {
        let mut t = self.table.clone();
        for c in &self.checks {
            t.push_note(
                "check",
                &c.name,
                "",
                if c.passed { 1.0 } else { 0.0 },
                &c.detail,
            );
        }
        t.to_csv()
    }
}

/// Laws and constants shared by the suites for one value of `beta`.
#[derive(Debug, Clone)]
pub struct Setup {
    pub law: OffspringLaw,
    pub params: DerivedParams,
    pub laws: Arc<EnvLaws>,
    pub h: OffspringLaw,
    pub tail: HeightTail,
    /// `C_a`, with `P[a backbone vertex has a trap of height >= h] ~ C_a f'(q)^h`.
    pub c_a: f64,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig, beta: f64) -> Result<Self, HarnessError> {
        let law = cfg.law()?;
        let params = cfg.params_at(beta)?;
        let q = extinction_probability(&law);
        let h = h_law(&law, q);
        let tail = height_tail(&h, 200);
        let c_a = trap_constant(&params, &tail);
        Ok(Self {
            laws: Arc::new(EnvLaws::new(&law, q)),
            law,
            params,
            h,
            tail,
            c_a,
        })
    }
}

/// Runs `suite` on `workers` threads. With no replicas the table holds
/// metadata only.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    suite: Suite,
    workers: usize,
) -> Result<SuiteReport, HarnessError> {
    cfg.validate()?;
    if cfg.replicas == 0 {
        let mut report = SuiteReport::new(suite, cfg);
        report.table.meta("checks_passed", true);
        return Ok(report);
    }
    let mut report = match suite {
        Suite::Scaling => suites::hitting::scaling(cfg, workers, None)?,
        Suite::Subsequence => suites::hitting::subsequence(cfg, workers, None)?,
        Suite::TrapTime => suites::hitting::trap_time(cfg, workers, None)?,
        Suite::Nonconvergence => suites::nonconvergence::run(cfg, workers)?,
        Suite::WLaw => suites::wlaw::run(cfg, workers)?,
        Suite::LimitLaw => suites::limit::run(cfg, workers)?,
        Suite::ToyIid => suites::toy::run(cfg, workers)?,
    };
    let passed = report.passed();
    report.table.meta("checks_passed", passed);
    Ok(report)
}
