//! Run configuration: flag definitions, the JSON config file, and the
//! three-layer merge (command-line flags override the config file, which
//! overrides built-in defaults).

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;

use stackroute::problems::{fixture, Algorithm, ProblemSpec, ScgProblem, FIXTURE_NAMES};

/// Every tunable a command accepts. All fields are optional so that values
/// can be layered; `merge_under` fills the gaps from a lower-precedence
/// source, and each command applies its own defaults to whatever is left.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Problem description JSON (mutually exclusive with --fixture)
    #[arg(long, value_name = "PATH", conflicts_with = "fixture")]
    pub problem: Option<PathBuf>,

    /// Built-in fixture name (try `two_link`, `braess_design`, `parallel:1000`)
    #[arg(long, value_name = "NAME")]
    pub fixture: Option<String>,

    /// Solver: we | ce | dol | sil | ioa | so
    #[arg(long, value_name = "ALG")]
    pub alg: Option<String>,

    /// Anticipation depth of the single-loop gradient (also the unroll
    /// depth of gradient checks)
    #[arg(long = "T", value_name = "INT")]
    #[serde(rename = "T")]
    pub t: Option<usize>,

    /// Follower logit learning rate
    #[arg(long, value_name = "FLOAT")]
    pub r: Option<f64>,

    /// Leader step size
    #[arg(long, value_name = "FLOAT")]
    pub rho: Option<f64>,

    /// Follower gap tolerance
    #[arg(long, value_name = "FLOAT")]
    pub eps: Option<f64>,

    /// Leader stationarity tolerance
    #[arg(long, value_name = "FLOAT")]
    pub tau: Option<f64>,

    /// Base seed for randomized initial distributions
    #[arg(long, value_name = "INT")]
    pub seed: Option<u64>,

    /// Number of independent runs from seeded random starts
    #[arg(long, value_name = "INT")]
    pub multistart: Option<usize>,

    /// Initial route distribution: equal | random
    #[arg(long, value_name = "KIND")]
    pub init: Option<String>,

    /// Output directory for CSV/JSON results
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

impl Overrides {
    /// Fill unset fields from a lower-precedence layer.
    pub fn merge_under(mut self, lower: Overrides) -> Overrides {
        self.problem = self.problem.or(lower.problem);
        self.fixture = self.fixture.or(lower.fixture);
        self.alg = self.alg.or(lower.alg);
        self.t = self.t.or(lower.t);
        self.r = self.r.or(lower.r);
        self.rho = self.rho.or(lower.rho);
        self.eps = self.eps.or(lower.eps);
        self.tau = self.tau.or(lower.tau);
        self.seed = self.seed.or(lower.seed);
        self.multistart = self.multistart.or(lower.multistart);
        self.init = self.init.or(lower.init);
        self.out = self.out.or(lower.out);
        self
    }

    pub fn algorithm(&self, default: Algorithm) -> Result<Algorithm> {
        match &self.alg {
            None => Ok(default),
            Some(s) => Ok(Algorithm::from_str(s)?),
        }
    }

    pub fn init_kind(&self) -> Result<InitKind> {
        match self.init.as_deref() {
            None | Some("equal") => Ok(InitKind::Equal),
            Some("random") => Ok(InitKind::Random),
            Some(other) => bail!("unknown init `{other}` (expected equal|random)"),
        }
    }

    /// Output directory (created if missing); `fallback` names the default.
    pub fn out_dir(&self, fallback: &str) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from(fallback));
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(dir)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Equal,
    Random,
}

/// Load the JSON config file named by `--config`, if any.
pub fn load_config_file(path: Option<&PathBuf>) -> Result<Overrides> {
    match path {
        None => Ok(Overrides::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

/// Assemble the problem named by `--fixture` or described by `--problem`,
/// with any solver-parameter flags applied on top.
pub fn resolve_problem(ov: &Overrides) -> Result<ScgProblem> {
    let mut prob = match (&ov.problem, &ov.fixture) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading problem {}", path.display()))?;
            ProblemSpec::from_json(&text)?.build()?
        }
        (None, Some(name)) => fixture(name).map_err(|e| {
            anyhow::anyhow!("{e}; built-in fixtures: {}", FIXTURE_NAMES.join(", "))
        })?,
        (None, None) => bail!("one of --problem or --fixture is required"),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    apply_tuning(&mut prob, ov);
    Ok(prob)
}

/// Apply the solver-parameter flags to an already-built problem.
pub fn apply_tuning(prob: &mut ScgProblem, ov: &Overrides) {
    if let Some(r) = ov.r {
        prob.opts.r = r;
    }
    if let Some(rho) = ov.rho {
        prob.opts.rho = rho;
    }
    if let Some(eps) = ov.eps {
        prob.opts.eps = eps;
    }
    if let Some(tau) = ov.tau {
        prob.opts.tau = tau;
    }
    if let Some(t) = ov.t {
        prob.opts.t_lookahead = t;
    }
}
