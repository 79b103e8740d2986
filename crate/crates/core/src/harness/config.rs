//! Experiment configuration: flat `section.key = value` text, typed
//! extraction with per-algorithm defaults, and exhaustive validation that
//! reports every violation at once. Unknown keys are errors.

use std::collections::BTreeMap;

use crate::error::{QdError, Result};
use crate::td3::Td3Config;

pub const ALGORITHM_IDS: [&str; 5] = [
    "cma_mega_es",
    "cma_mega_td3_es",
    "map_elites",
    "pga_map_elites",
    "me_es",
];

#[derive(Debug, Clone, PartialEq)]
pub enum EnvConfig {
    LpSphere {
        solution_dim: usize,
    },
    GaitPoint {
        policy_hidden: Vec<usize>,
        noise_std: f64,
    },
}

impl EnvConfig {
    pub fn id(&self) -> &'static str {
        match self {
            EnvConfig::LpSphere { .. } => "lp_sphere",
            EnvConfig::GaitPoint { .. } => "gait_point",
        }
    }

    pub fn default_min_objective(&self) -> f64 {
        match self {
            // reaching measure-extreme cells requires large parameter norms,
            // so early elites in corner cells can score far below the
            // center-cell optimum; leave generous headroom by default and
            // renormalize post hoc with `rescore`
            EnvConfig::LpSphere { .. } => -10_000.0,
            // the per-step reward infimum is -0.1 (action penalty with
            // saturated actions and zero velocity), so episode returns can
            // round to just below -20; keep a unit of headroom
            EnvConfig::GaitPoint { .. } => -21.0,
        }
    }

    pub fn default_max_objective(&self) -> f64 {
        match self {
            EnvConfig::LpSphere { .. } => 0.0,
            EnvConfig::GaitPoint { .. } => 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accounting {
    /// Every evaluation counts against the budget.
    Strict,
    /// Iteration counts follow the nominal batch size (budget / lambda);
    /// the extra evaluation per iteration (search mean, greedy actor) is
    /// not charged.
    Nominal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub budget: u64,
    pub seed: u64,
    pub trials: u32,
    pub deterministic: bool,
    pub threads: usize,
    pub min_objective: f64,
    pub max_objective: f64,
    pub accounting: Accounting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveConfig {
    pub dims: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// TD3 hyperparameters plus the critic architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct Td3Settings {
    pub cfg: Td3Config,
    pub critic_hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlgorithmConfig {
    CmaMegaEs {
        lambda: usize,
        sigma_g: f64,
        eta: f64,
        lambda_es: usize,
        sigma_e: f64,
        exact_gradients: bool,
    },
    CmaMegaTd3Es {
        lambda: usize,
        sigma_g: f64,
        eta: f64,
        lambda_es: usize,
        sigma_e: f64,
        td3: Td3Settings,
    },
    MapElites {
        lambda: usize,
        sigma: f64,
    },
    PgaMapElites {
        lambda: usize,
        n_grad: usize,
        alpha_grad: f64,
        sigma1: f64,
        sigma2: f64,
        g_init: usize,
        td3: Td3Settings,
    },
    MeEs {
        lambda: usize,
        sigma: f64,
        n_optim_gens: usize,
        alpha: f64,
        l2_coeff: f64,
        k_novelty: usize,
    },
}

impl AlgorithmConfig {
    pub fn id(&self) -> &'static str {
        match self {
            AlgorithmConfig::CmaMegaEs { .. } => "cma_mega_es",
            AlgorithmConfig::CmaMegaTd3Es { .. } => "cma_mega_td3_es",
            AlgorithmConfig::MapElites { .. } => "map_elites",
            AlgorithmConfig::PgaMapElites { .. } => "pga_map_elites",
            AlgorithmConfig::MeEs { .. } => "me_es",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub archive: ArchiveConfig,
    pub run: RunConfig,
    pub algorithm: AlgorithmConfig,
}

struct KeyValues {
    values: BTreeMap<String, String>,
    problems: Vec<String>,
}

impl KeyValues {
    fn parse(text: &str) -> Self {
        let mut values = BTreeMap::new();
        let mut problems = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                None => problems.push(format!("line {}: expected `section.key = value`", no + 1)),
                Some((key, value)) => {
                    let key = key.trim().to_string();
                    if values.insert(key.clone(), value.trim().to_string()).is_some() {
                        problems.push(format!("line {}: duplicate key {key:?}", no + 1));
                    }
                }
            }
        }
        KeyValues { values, problems }
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, default: T) -> T {
        match self.take(key) {
            None => default,
            Some(raw) => match raw.parse::<T>() {
                Ok(v) => v,
                Err(_) => {
                    self.problems.push(format!("{key}: cannot parse {raw:?}"));
                    default
                }
            },
        }
    }

    fn parsed_list<T: std::str::FromStr>(&mut self, key: &str, default: &[T]) -> Vec<T>
    where
        T: Clone,
    {
        match self.take(key) {
            None => default.to_vec(),
            Some(raw) => {
                let mut out = Vec::new();
                for part in raw.split(',') {
                    match part.trim().parse::<T>() {
                        Ok(v) => out.push(v),
                        Err(_) => {
                            self.problems
                                .push(format!("{key}: cannot parse element {part:?}"));
                            return default.to_vec();
                        }
                    }
                }
                out
            }
        }
    }

    fn boolean(&mut self, key: &str, default: bool) -> bool {
        match self.take(key) {
            None => default,
            Some(raw) => match raw.as_str() {
                "true" | "1" | "yes" => true,
                "false" | "0" | "no" => false,
                other => {
                    self.problems
                        .push(format!("{key}: expected true/false, got {other:?}"));
                    default
                }
            },
        }
    }
}

fn td3_settings(kv: &mut KeyValues, default_critic_steps: usize, default_gradient_batch: usize) -> Td3Settings {
    let defaults = Td3Config::default();
    Td3Settings {
        cfg: Td3Config {
            gamma: kv.parsed("td3.gamma", defaults.gamma),
            tau: kv.parsed("td3.tau", defaults.tau),
            policy_delay: kv.parsed("td3.policy_delay", defaults.policy_delay),
            smoothing_sigma: kv.parsed("td3.smoothing_sigma", defaults.smoothing_sigma),
            smoothing_clip: kv.parsed("td3.smoothing_clip", defaults.smoothing_clip),
            critic_batch: kv.parsed("td3.critic_batch", defaults.critic_batch),
            critic_lr: kv.parsed("td3.critic_lr", defaults.critic_lr),
            critic_steps: kv.parsed("td3.critic_steps", default_critic_steps),
            gradient_batch: kv.parsed("td3.gradient_batch", default_gradient_batch),
            buffer_capacity: kv.parsed("td3.buffer_capacity", defaults.buffer_capacity),
        },
        critic_hidden: kv.parsed_list("td3.critic_hidden", &[32, 32]),
    }
}

/// Parses and validates a configuration. Every problem found is reported,
/// not just the first.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut kv = KeyValues::parse(text);

    let env = match kv.take("env.id") {
        None => {
            kv.problems.push("env.id is required".into());
            None
        }
        Some(id) => match id.as_str() {
            "lp_sphere" => Some(EnvConfig::LpSphere {
                solution_dim: kv.parsed("env.solution_dim", 20),
            }),
            "gait_point" => Some(EnvConfig::GaitPoint {
                policy_hidden: kv.parsed_list("env.policy_hidden", &[32, 32]),
                noise_std: kv.parsed("env.noise_std", 0.0),
            }),
            other => {
                kv.problems.push(format!(
                    "env.id: unknown environment {other:?} (expected lp_sphere or gait_point)"
                ));
                None
            }
        },
    };

    let algorithm = match kv.take("algorithm.id") {
        None => {
            kv.problems.push("algorithm.id is required".into());
            None
        }
        Some(id) => match id.as_str() {
            "cma_mega_es" => Some(AlgorithmConfig::CmaMegaEs {
                lambda: kv.parsed("cma_mega.lambda", 100),
                sigma_g: kv.parsed("cma_mega.sigma_g", 1.0),
                eta: kv.parsed("cma_mega.eta", 1.0),
                lambda_es: kv.parsed("cma_mega.lambda_es", 100),
                sigma_e: kv.parsed("cma_mega.sigma_e", 0.02),
                exact_gradients: kv.boolean("cma_mega.exact_gradients", false),
            }),
            "cma_mega_td3_es" => Some(AlgorithmConfig::CmaMegaTd3Es {
                lambda: kv.parsed("cma_mega.lambda", 100),
                sigma_g: kv.parsed("cma_mega.sigma_g", 1.0),
                eta: kv.parsed("cma_mega.eta", 1.0),
                lambda_es: kv.parsed("cma_mega.lambda_es", 100),
                sigma_e: kv.parsed("cma_mega.sigma_e", 0.02),
                td3: td3_settings(&mut kv, 600, 65_536),
            }),
            "map_elites" => Some(AlgorithmConfig::MapElites {
                lambda: kv.parsed("map_elites.lambda", 100),
                sigma: kv.parsed("map_elites.sigma", 0.02),
            }),
            "pga_map_elites" => Some(AlgorithmConfig::PgaMapElites {
                lambda: kv.parsed("pga_me.lambda", 100),
                n_grad: kv.parsed("pga_me.n_grad", 10),
                alpha_grad: kv.parsed("pga_me.alpha_grad", 0.001),
                sigma1: kv.parsed("pga_me.sigma1", 0.005),
                sigma2: kv.parsed("pga_me.sigma2", 0.05),
                g_init: kv.parsed("pga_me.g_init", 100),
                td3: td3_settings(&mut kv, 300, 256),
            }),
            "me_es" => Some(AlgorithmConfig::MeEs {
                lambda: kv.parsed("me_es.lambda", 200),
                sigma: kv.parsed("me_es.sigma", 0.02),
                n_optim_gens: kv.parsed("me_es.n_optim_gens", 10),
                alpha: kv.parsed("me_es.alpha", 0.01),
                l2_coeff: kv.parsed("me_es.l2_coeff", 0.005),
                k_novelty: kv.parsed("me_es.k_novelty", 10),
            }),
            other => {
                kv.problems.push(format!(
                    "algorithm.id: unknown algorithm {other:?} (expected one of {ALGORITHM_IDS:?})"
                ));
                None
            }
        },
    };

    let archive = ArchiveConfig {
        dims: kv.parsed_list("archive.dims", &[32, 32]),
        lower: kv.parsed_list("archive.lower", &[0.0, 0.0]),
        upper: kv.parsed_list("archive.upper", &[1.0, 1.0]),
    };

    let accounting = match kv.take("run.accounting").as_deref() {
        None | Some("strict") => Accounting::Strict,
        Some("nominal") => Accounting::Nominal,
        Some(other) => {
            kv.problems
                .push(format!("run.accounting: expected strict or nominal, got {other:?}"));
            Accounting::Strict
        }
    };
    let deterministic = match kv.take("run.mode").as_deref() {
        None | Some("deterministic") => true,
        Some("parallel") => false,
        Some(other) => {
            kv.problems.push(format!(
                "run.mode: expected deterministic or parallel, got {other:?}"
            ));
            true
        }
    };
    let budget = match kv.take("run.budget") {
        None => {
            kv.problems.push("run.budget is required".into());
            0
        }
        Some(raw) => raw.parse::<u64>().unwrap_or_else(|_| {
            kv.problems.push(format!("run.budget: cannot parse {raw:?}"));
            0
        }),
    };
    let (min_default, max_default) = env
        .as_ref()
        .map(|e| (e.default_min_objective(), e.default_max_objective()))
        .unwrap_or((0.0, 1.0));
    let run = RunConfig {
        budget,
        seed: kv.parsed("run.seed", 0),
        trials: kv.parsed("run.trials", 1),
        deterministic,
        threads: kv.parsed("run.threads", 1),
        min_objective: kv.parsed("run.min_objective", min_default),
        max_objective: kv.parsed("run.max_objective", max_default),
        accounting,
    };

    let mut problems = std::mem::take(&mut kv.problems);
    for key in kv.values.keys() {
        problems.push(format!("unknown key {key:?}"));
    }
    if run.trials == 0 {
        problems.push("run.trials must be at least 1".into());
    }
    if run.threads == 0 {
        problems.push("run.threads must be at least 1".into());
    }
    if !(run.min_objective <= run.max_objective) {
        problems.push(format!(
            "run.min_objective {} must not exceed run.max_objective {}",
            run.min_objective, run.max_objective
        ));
    }
    if !problems.is_empty() {
        return Err(QdError::Config(problems));
    }
    Ok(ExperimentConfig {
        env: env.expect("problems checked"),
        archive,
        run,
        algorithm: algorithm.expect("problems checked"),
    })
}

impl ExperimentConfig {
    /// Resolved configuration as canonical `key = value` lines; the fnv64
    /// hash of this text is the config hash recorded in summaries.
    pub fn canonical_lines(&self) -> Vec<String> {
        let mut lines = Vec::new();
        let fmt_list_f = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let fmt_list_u = |v: &[usize]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        match &self.env {
            EnvConfig::LpSphere { solution_dim } => {
                lines.push("env.id = lp_sphere".into());
                lines.push(format!("env.solution_dim = {solution_dim}"));
            }
            EnvConfig::GaitPoint {
                policy_hidden,
                noise_std,
            } => {
                lines.push("env.id = gait_point".into());
                lines.push(format!("env.policy_hidden = {}", fmt_list_u(policy_hidden)));
                lines.push(format!("env.noise_std = {noise_std}"));
            }
        }
        lines.push(format!("archive.dims = {}", fmt_list_u(&self.archive.dims)));
        lines.push(format!("archive.lower = {}", fmt_list_f(&self.archive.lower)));
        lines.push(format!("archive.upper = {}", fmt_list_f(&self.archive.upper)));
        lines.push(format!("run.budget = {}", self.run.budget));
        lines.push(format!("run.seed = {}", self.run.seed));
        lines.push(format!("run.trials = {}", self.run.trials));
        lines.push(format!(
            "run.mode = {}",
            if self.run.deterministic {
                "deterministic"
            } else {
                "parallel"
            }
        ));
        lines.push(format!("run.threads = {}", self.run.threads));
        lines.push(format!("run.min_objective = {}", self.run.min_objective));
        lines.push(format!("run.max_objective = {}", self.run.max_objective));
        lines.push(format!(
            "run.accounting = {}",
            match self.run.accounting {
                Accounting::Strict => "strict",
                Accounting::Nominal => "nominal",
            }
        ));
        lines.push(format!("algorithm.id = {}", self.algorithm.id()));
        let push_td3 = |td3: &Td3Settings, lines: &mut Vec<String>| {
            lines.push(format!("td3.gamma = {}", td3.cfg.gamma));
            lines.push(format!("td3.tau = {}", td3.cfg.tau));
            lines.push(format!("td3.policy_delay = {}", td3.cfg.policy_delay));
            lines.push(format!("td3.smoothing_sigma = {}", td3.cfg.smoothing_sigma));
            lines.push(format!("td3.smoothing_clip = {}", td3.cfg.smoothing_clip));
            lines.push(format!("td3.critic_batch = {}", td3.cfg.critic_batch));
            lines.push(format!("td3.critic_lr = {}", td3.cfg.critic_lr));
            lines.push(format!("td3.critic_steps = {}", td3.cfg.critic_steps));
            lines.push(format!("td3.gradient_batch = {}", td3.cfg.gradient_batch));
            lines.push(format!("td3.buffer_capacity = {}", td3.cfg.buffer_capacity));
            lines.push(format!("td3.critic_hidden = {}", fmt_list_u(&td3.critic_hidden)));
        };
        match &self.algorithm {
            AlgorithmConfig::CmaMegaEs {
                lambda,
                sigma_g,
                eta,
                lambda_es,
                sigma_e,
                exact_gradients,
            } => {
                lines.push(format!("cma_mega.lambda = {lambda}"));
                lines.push(format!("cma_mega.sigma_g = {sigma_g}"));
                lines.push(format!("cma_mega.eta = {eta}"));
                lines.push(format!("cma_mega.lambda_es = {lambda_es}"));
                lines.push(format!("cma_mega.sigma_e = {sigma_e}"));
                lines.push(format!("cma_mega.exact_gradients = {exact_gradients}"));
            }
            AlgorithmConfig::CmaMegaTd3Es {
                lambda,
                sigma_g,
                eta,
                lambda_es,
                sigma_e,
                td3,
            } => {
                lines.push(format!("cma_mega.lambda = {lambda}"));
                lines.push(format!("cma_mega.sigma_g = {sigma_g}"));
                lines.push(format!("cma_mega.eta = {eta}"));
                lines.push(format!("cma_mega.lambda_es = {lambda_es}"));
                lines.push(format!("cma_mega.sigma_e = {sigma_e}"));
                push_td3(td3, &mut lines);
            }
            AlgorithmConfig::MapElites { lambda, sigma } => {
                lines.push(format!("map_elites.lambda = {lambda}"));
                lines.push(format!("map_elites.sigma = {sigma}"));
            }
            AlgorithmConfig::PgaMapElites {
                lambda,
                n_grad,
                alpha_grad,
                sigma1,
                sigma2,
                g_init,
                td3,
            } => {
                lines.push(format!("pga_me.lambda = {lambda}"));
                lines.push(format!("pga_me.n_grad = {n_grad}"));
                lines.push(format!("pga_me.alpha_grad = {alpha_grad}"));
                lines.push(format!("pga_me.sigma1 = {sigma1}"));
                lines.push(format!("pga_me.sigma2 = {sigma2}"));
                lines.push(format!("pga_me.g_init = {g_init}"));
                push_td3(td3, &mut lines);
            }
            AlgorithmConfig::MeEs {
                lambda,
                sigma,
                n_optim_gens,
                alpha,
                l2_coeff,
                k_novelty,
            } => {
                lines.push(format!("me_es.lambda = {lambda}"));
                lines.push(format!("me_es.sigma = {sigma}"));
                lines.push(format!("me_es.n_optim_gens = {n_optim_gens}"));
                lines.push(format!("me_es.alpha = {alpha}"));
                lines.push(format!("me_es.l2_coeff = {l2_coeff}"));
                lines.push(format!("me_es.k_novelty = {k_novelty}"));
            }
        }
        lines
    }

    pub fn config_hash(&self) -> String {
        let text = self.canonical_lines().join("\n");
        format!("{:016x}", fnv1a64(text.as_bytes()))
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
