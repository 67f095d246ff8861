//! Effective run configuration: built-in defaults, then an optional TOML
//! file, then command-line flags.

use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use playdecay::eval::{ExperimentConfig, Method};
use playdecay::latent::TrainConfig;
use playdecay::neighbors::NeighborConfig;
use playdecay::playlog::{parse_offset, parse_timestamp, ContextSegment};
use playdecay::ratings::{DecayConfig, RatingVariant};

use crate::failure::Failure;

/// Factor-model hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Factors {
    pub dimensions: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub epochs: usize,
    pub wrmf_alpha: f64,
    pub wrmf_sweeps: usize,
}

impl Default for Factors {
    fn default() -> Self {
        let t = TrainConfig::default();
        Factors {
            dimensions: t.d,
            learning_rate: t.learning_rate,
            regularization: t.regularization,
            epochs: t.epochs,
            wrmf_alpha: t.wrmf_alpha,
            wrmf_sweeps: t.wrmf_iterations,
        }
    }
}

/// Everything that can change a result. Thread count and output directory
/// are deliberately absent, so they never alter file bodies or the hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub tz: String,
    /// Explicit split instant; when set the month counts are ignored.
    pub boundary: Option<String>,
    pub train_months: u32,
    pub test_months: u32,
    pub lambda: f64,
    pub k: usize,
    pub keep_negative: bool,
    pub topn: usize,
    pub contexts: Vec<ContextSegment>,
    pub methods: Vec<Method>,
    pub variants: Vec<RatingVariant>,
    pub seed: u64,
    /// Cold-start group size.
    pub m: usize,
    /// Habits: the single user to report next to the population.
    pub user: Option<String>,
    pub factors: Factors,
}

impl Default for RunConfig {
    fn default() -> Self {
        let exp = ExperimentConfig::default();
        RunConfig {
            input: None,
            tz: "UTC".into(),
            boundary: None,
            train_months: 15,
            test_months: 2,
            lambda: exp.decay.lambda,
            k: exp.neighbors.k,
            keep_negative: exp.neighbors.keep_negative,
            topn: exp.top_n,
            contexts: ContextSegment::ALL.to_vec(),
            methods: Method::ALL.to_vec(),
            variants: vec![RatingVariant::Plain, RatingVariant::Decay],
            seed: exp.train.seed,
            m: 5,
            user: None,
            factors: Factors::default(),
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// TOML file with any RunConfig keys; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Play log: `user<TAB>timestamp<TAB>artist-id<TAB>artist<TAB>track-id<TAB>track`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Fixed UTC offset for naive timestamps and time-of-day contexts, e.g. `+02:00`.
    #[arg(long)]
    pub tz: Option<String>,
    /// Split instant (RFC 3339, `YYYY-MM-DD HH:MM:SS` or `YYYY-MM-DD`, read in --tz).
    #[arg(long, conflicts_with_all = ["train_months", "test_months"])]
    pub boundary: Option<String>,
    #[arg(long)]
    pub train_months: Option<u32>,
    #[arg(long)]
    pub test_months: Option<u32>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Length of top-N lists and of each user's relevant set.
    #[arg(long)]
    pub topn: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub contexts: Option<Vec<ContextSegment>>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<RatingVariant>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }

    pub fn resolve(args: &CommonArgs) -> Result<Self, Failure> {
        let mut cfg = match &args.config {
            Some(path) => Self::load(path)?,
            None => RunConfig::default(),
        };
        if args.input.is_some() {
            cfg.input = args.input.clone();
        }
        set(&mut cfg.tz, args.tz.clone());
        if args.boundary.is_some() {
            cfg.boundary = args.boundary.clone();
        }
        if args.train_months.is_some() || args.test_months.is_some() {
            cfg.boundary = None;
        }
        set(&mut cfg.train_months, args.train_months);
        set(&mut cfg.test_months, args.test_months);
        set(&mut cfg.lambda, args.lambda);
        set(&mut cfg.k, args.k);
        set(&mut cfg.topn, args.topn);
        set(&mut cfg.contexts, args.contexts.clone());
        set(&mut cfg.methods, args.methods.clone());
        set(&mut cfg.variants, args.variants.clone());
        set(&mut cfg.seed, args.seed);
        for (name, empty) in [
            ("contexts", cfg.contexts.is_empty()),
            ("methods", cfg.methods.is_empty()),
            ("variants", cfg.variants.is_empty()),
        ] {
            if empty {
                return Err(Failure::Usage(format!("at least one of --{name} is required")));
            }
        }
        cfg.offset()?;
        cfg.experiment().validate()?;
        Ok(cfg)
    }

    pub fn offset(&self) -> Result<chrono::FixedOffset, Failure> {
        Ok(parse_offset(&self.tz)?)
    }

    pub fn boundary(&self) -> Result<Option<DateTime<Utc>>, Failure> {
        let Some(raw) = &self.boundary else {
            return Ok(None);
        };
        let offset = self.offset()?;
        if let Ok(t) = parse_timestamp(raw, offset) {
            return Ok(Some(t));
        }
        NaiveDate::parse_from_str(raw, "%Y-%m-%d")
            .ok()
            .and_then(|d| d.and_hms_opt(0, 0, 0)?.and_local_timezone(offset).single())
            .map(|t| Some(t.with_timezone(&Utc)))
            .ok_or_else(|| Failure::Usage(format!("invalid --boundary `{raw}`")))
    }

    pub fn experiment(&self) -> ExperimentConfig {
        let f = &self.factors;
        ExperimentConfig {
            decay: DecayConfig::with_lambda(self.lambda),
            neighbors: NeighborConfig {
                k: self.k,
                keep_negative: self.keep_negative,
                ..Default::default()
            },
            train: TrainConfig {
                d: f.dimensions,
                learning_rate: f.learning_rate,
                regularization: f.regularization,
                epochs: f.epochs,
                seed: self.seed,
                wrmf_alpha: f.wrmf_alpha,
                wrmf_iterations: f.wrmf_sweeps,
            },
            top_n: self.topn,
            dtavg_all_plays: false,
        }
    }

    /// Canonical TOML rendering; the config hash is taken over these bytes.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
