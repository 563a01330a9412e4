//! Flat `key=value` experiment configuration.
//!
//! Keys are the long command-line flag names, so a config file and a command
//! line share one vocabulary. Later assignments override earlier ones:
//! testbed defaults, then `--config` file, then explicit flags.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use delight::data::SyntheticSpec;
use delight::multictx::DescentArm;
use delight::neural::{Arm, BaselineKind};
use delight::EstimatorKind;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Testbed {
    Bandit,
    Multictx,
    Classify,
}

impl Testbed {
    pub const ALL: [Testbed; 3] = [Testbed::Bandit, Testbed::Multictx, Testbed::Classify];
}

impl fmt::Display for Testbed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Testbed::Bandit => "bandit",
            Testbed::Multictx => "multictx",
            Testbed::Classify => "classify",
        })
    }
}

impl FromStr for Testbed {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim() {
            "bandit" => Ok(Testbed::Bandit),
            "multictx" => Ok(Testbed::Multictx),
            "classify" => Ok(Testbed::Classify),
            other => Err(CliError::field("testbed", format!("unknown testbed `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Idx { images: PathBuf, labels: PathBuf },
}

/// One experiment invocation. Every field is concrete; testbed-specific
/// defaults are filled in by [`ExperimentConfig::defaults`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub testbed: Testbed,
    /// Arm names, parsed per testbed by [`ExperimentConfig::validate`].
    pub estimators: Vec<String>,
    pub eta: f64,
    pub seeds: usize,
    pub base_seed: u64,
    pub steps: usize,
    pub batch: usize,
    /// Normalized step size for the tabular testbeds.
    pub alpha: f64,
    // bandit
    pub k: usize,
    pub bandit_baseline: f64,
    pub init_error: Option<f64>,
    // multictx
    pub contexts: usize,
    pub actions: usize,
    // classify
    pub width: usize,
    pub lr: f64,
    pub samples_per_input: Vec<usize>,
    pub baselines: Vec<BaselineKind>,
    pub eval_every: usize,
    pub dataset: DatasetSource,
}

/// Keys accepted by [`ExperimentConfig::set`], in echo order.
pub const KEYS: &[&str] = &[
    "testbed",
    "estimators",
    "eta",
    "seeds",
    "base-seed",
    "steps",
    "batch",
    "alpha",
    "k",
    "bandit-baseline",
    "init-error",
    "contexts",
    "actions",
    "width",
    "lr",
    "samples-per-input",
    "baselines",
    "eval-every",
    "dataset",
    "images",
    "labels",
    "syn-classes",
    "syn-dim",
    "syn-per-class",
    "syn-spread",
    "syn-seed",
];

/// Keys that hold a single number and can therefore be swept.
pub const NUMERIC_KEYS: &[&str] = &[
    "eta",
    "seeds",
    "steps",
    "batch",
    "alpha",
    "k",
    "bandit-baseline",
    "contexts",
    "actions",
    "width",
    "lr",
    "samples-per-input",
    "eval-every",
    "syn-dim",
    "syn-per-class",
    "syn-spread",
];

fn parse_num<T: FromStr>(field: &'static str, v: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    v.trim()
        .parse()
        .map_err(|e| CliError::field(field, format!("`{v}`: {e}")))
}

fn parse_list<T, F>(field: &'static str, v: &str, f: F) -> Result<Vec<T>, CliError>
where
    F: Fn(&str) -> Result<T, CliError>,
{
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(f)
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(CliError::field(field, "list must not be empty"));
    }
    Ok(items)
}

fn static_key(key: &str) -> Option<&'static str> {
    KEYS.iter().copied().find(|k| *k == key)
}

impl ExperimentConfig {
    pub fn defaults(testbed: Testbed) -> Self {
        let (estimators, steps, seeds) = match testbed {
            Testbed::Bandit => (vec!["pg", "dg"], 2000, 100),
            Testbed::Multictx => (vec!["pg", "dg", "ce"], 1000, 100),
            Testbed::Classify => (vec!["pg", "dg"], 2000, 10),
        };
        Self {
            testbed,
            estimators: estimators.into_iter().map(String::from).collect(),
            eta: 1.0,
            seeds,
            base_seed: 0,
            steps,
            batch: 100,
            alpha: 0.1,
            k: 100,
            bandit_baseline: 0.5,
            init_error: None,
            contexts: 100,
            actions: 10,
            width: 100,
            lr: 1e-3,
            samples_per_input: vec![1],
            baselines: vec![BaselineKind::Expected],
            eval_every: 100,
            dataset: DatasetSource::Synthetic(SyntheticSpec::default()),
        }
    }

    fn synthetic_mut(&mut self, field: &'static str) -> Result<&mut SyntheticSpec, CliError> {
        match &mut self.dataset {
            DatasetSource::Synthetic(s) => Ok(s),
            DatasetSource::Idx { .. } => Err(CliError::field(field, "only applies to dataset=synthetic")),
        }
    }

    /// Assigns one key. Unknown keys and malformed values are usage errors
    /// naming the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = static_key(key.trim()).ok_or_else(|| CliError::UnknownKey(key.trim().to_string()))?;
        let v = value.trim();
        match key {
            "testbed" => {
                let t: Testbed = v.parse()?;
                if t != self.testbed {
                    return Err(CliError::field(
                        "testbed",
                        format!("config is for `{t}`, running `{}`", self.testbed),
                    ));
                }
            }
            "estimators" => self.estimators = parse_list(key, v, |s| Ok(s.to_string()))?,
            "eta" => self.eta = parse_num(key, v)?,
            "seeds" => self.seeds = parse_num(key, v)?,
            "base-seed" => self.base_seed = parse_num(key, v)?,
            "steps" => self.steps = parse_num(key, v)?,
            "batch" => self.batch = parse_num(key, v)?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "k" => self.k = parse_num(key, v)?,
            "bandit-baseline" => self.bandit_baseline = parse_num(key, v)?,
            "init-error" => {
                self.init_error = match v {
                    "" | "none" => None,
                    _ => Some(parse_num(key, v)?),
                }
            }
            "contexts" => self.contexts = parse_num(key, v)?,
            "actions" => self.actions = parse_num(key, v)?,
            "width" => self.width = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "samples-per-input" => self.samples_per_input = parse_list(key, v, |s| parse_num(key, s))?,
            "baselines" => {
                self.baselines = parse_list(key, v, |s| {
                    s.parse()
                        .map_err(|e: delight::Error| CliError::field("baselines", e.to_string()))
                })?
            }
            "eval-every" => self.eval_every = parse_num(key, v)?,
            "dataset" => {
                self.dataset = match v {
                    "synthetic" => match &self.dataset {
                        DatasetSource::Synthetic(_) => return Ok(()),
                        DatasetSource::Idx { .. } => DatasetSource::Synthetic(SyntheticSpec::default()),
                    },
                    "idx" => match &self.dataset {
                        DatasetSource::Idx { .. } => return Ok(()),
                        DatasetSource::Synthetic(_) => DatasetSource::Idx {
                            images: PathBuf::new(),
                            labels: PathBuf::new(),
                        },
                    },
                    other => {
                        return Err(CliError::field(
                            "dataset",
                            format!("expected synthetic or idx, got `{other}`"),
                        ))
                    }
                }
            }
            "images" | "labels" => match &mut self.dataset {
                DatasetSource::Idx { images, labels } => {
                    *(if key == "images" { images } else { labels }) = PathBuf::from(v);
                }
                DatasetSource::Synthetic(_) => return Err(CliError::field(key, "only applies to dataset=idx")),
            },
            "syn-classes" => self.synthetic_mut(key)?.num_classes = parse_num(key, v)?,
            "syn-dim" => self.synthetic_mut(key)?.dim = parse_num(key, v)?,
            "syn-per-class" => self.synthetic_mut(key)?.per_class = parse_num(key, v)?,
            "syn-spread" => self.synthetic_mut(key)?.spread = parse_num(key, v)?,
            "syn-seed" => self.synthetic_mut(key)?.seed = parse_num(key, v)?,
            _ => unreachable!("every key in KEYS is handled"),
        }
        Ok(())
    }

    /// Applies a `key=value` document. Blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| CliError::Syntax {
                line: n + 1,
                text: line.to_string(),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(testbed: Testbed, text: &str) -> Result<Self, CliError> {
        let mut c = Self::defaults(testbed);
        c.apply_text(text)?;
        Ok(c)
    }

    /// Canonical `key=value` form; re-parses to an equal config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let join = |xs: Vec<String>| xs.join(",");
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("testbed", self.testbed.to_string());
        put("estimators", self.estimators.join(","));
        put("eta", self.eta.to_string());
        put("seeds", self.seeds.to_string());
        put("base-seed", self.base_seed.to_string());
        put("steps", self.steps.to_string());
        put("batch", self.batch.to_string());
        put("alpha", self.alpha.to_string());
        put("k", self.k.to_string());
        put("bandit-baseline", self.bandit_baseline.to_string());
        put("init-error", self.init_error.map_or("none".into(), |e| e.to_string()));
        put("contexts", self.contexts.to_string());
        put("actions", self.actions.to_string());
        put("width", self.width.to_string());
        put("lr", self.lr.to_string());
        put(
            "samples-per-input",
            join(self.samples_per_input.iter().map(|x| x.to_string()).collect()),
        );
        put(
            "baselines",
            join(self.baselines.iter().map(|x| x.to_string()).collect()),
        );
        put("eval-every", self.eval_every.to_string());
        match &self.dataset {
            DatasetSource::Synthetic(sp) => {
                put("dataset", "synthetic".into());
                put("syn-classes", sp.num_classes.to_string());
                put("syn-dim", sp.dim.to_string());
                put("syn-per-class", sp.per_class.to_string());
                put("syn-spread", sp.spread.to_string());
                put("syn-seed", sp.seed.to_string());
            }
            DatasetSource::Idx { images, labels } => {
                put("dataset", "idx".into());
                put("images", images.display().to_string());
                put("labels", labels.display().to_string());
            }
        }
        s
    }

    /// Checks every field relevant to the testbed and resolves arm names.
    pub fn validate(&self) -> Result<(), CliError> {
        let counts = [
            ("seeds", self.seeds),
            ("steps", self.steps),
            ("batch", self.batch),
            ("k", self.k),
            ("contexts", self.contexts),
            ("actions", self.actions),
            ("width", self.width),
            ("eval-every", self.eval_every),
        ];
        for (field, v) in counts {
            if v == 0 {
                return Err(CliError::field(field, "must be at least 1"));
            }
        }
        if self.samples_per_input.contains(&0) {
            return Err(CliError::field("samples-per-input", "must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(CliError::field("eta", format!("must be positive, got {}", self.eta)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(CliError::field("alpha", format!("must be >= 0, got {}", self.alpha)));
        }
        if self.testbed == Testbed::Classify && !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(CliError::field(
                "lr",
                format!("must be positive for classify, got {}", self.lr),
            ));
        }
        if let DatasetSource::Idx { images, labels } = &self.dataset {
            if self.testbed == Testbed::Classify && (images.as_os_str().is_empty() || labels.as_os_str().is_empty()) {
                return Err(CliError::field(
                    "images",
                    "dataset=idx needs both images and labels paths",
                ));
            }
        }
        match self.testbed {
            Testbed::Bandit => {
                self.bandit_arms()?;
            }
            Testbed::Multictx => {
                self.multictx_arms()?;
            }
            Testbed::Classify => {
                self.classify_arms()?;
            }
        }
        Ok(())
    }

    pub fn bandit_arms(&self) -> Result<Vec<EstimatorKind>, CliError> {
        self.estimators
            .iter()
            .map(|s| {
                s.parse()
                    .map_err(|e: delight::Error| CliError::field("estimators", e.to_string()))
            })
            .collect()
    }

    pub fn multictx_arms(&self) -> Result<Vec<DescentArm>, CliError> {
        self.estimators
            .iter()
            .map(|s| {
                s.parse()
                    .map_err(|e: delight::Error| CliError::field("estimators", e.to_string()))
            })
            .collect()
    }

    pub fn classify_arms(&self) -> Result<Vec<Arm>, CliError> {
        self.estimators
            .iter()
            .map(|s| {
                s.parse()
                    .map_err(|e: delight::Error| CliError::field("estimators", e.to_string()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips_for_every_testbed() {
        for t in Testbed::ALL {
            let c = ExperimentConfig::defaults(t);
            assert_eq!(ExperimentConfig::from_text(t, &c.echo()).unwrap(), c);
        }
        let mut c = ExperimentConfig::defaults(Testbed::Classify);
        c.apply_text("estimators=ce,dg,beta:0.5\nlr=0.00025\nsamples-per-input=1,10,100\nbaselines=zero,oracle\ninit-error=0.3\nsyn-spread=2.5\n")
            .unwrap();
        assert_eq!(ExperimentConfig::from_text(Testbed::Classify, &c.echo()).unwrap(), c);
        c.apply_text("dataset=idx\nimages=/a b/img\nlabels=/x/lab").unwrap();
        assert_eq!(ExperimentConfig::from_text(Testbed::Classify, &c.echo()).unwrap(), c);
    }

    #[test]
    fn usage_errors_name_the_field() {
        let mut c = ExperimentConfig::defaults(Testbed::Bandit);
        match c.set("batch", "many") {
            Err(CliError::Field { field, .. }) => assert_eq!(field, "batch"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(c.set("nope", "1"), Err(CliError::UnknownKey(_))));
        c.set("seeds", "0").unwrap();
        match c.validate() {
            Err(CliError::Field { field, .. }) => assert_eq!(field, "seeds"),
            other => panic!("{other:?}"),
        }
        let mut c = ExperimentConfig::defaults(Testbed::Classify);
        c.set("lr", "0").unwrap();
        assert!(matches!(c.validate(), Err(CliError::Field { field: "lr", .. })));
        let mut c = ExperimentConfig::defaults(Testbed::Multictx);
        c.set("estimators", "pg,beta:2").unwrap();
        assert!(matches!(
            c.validate(),
            Err(CliError::Field {
                field: "estimators",
                ..
            })
        ));
        assert!(c.set("samples-per-input", " , ").is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = ExperimentConfig::from_text(Testbed::Bandit, "# header\n\nk = 10  # fewer arms\n").unwrap();
        assert_eq!(c.k, 10);
        assert!(matches!(
            ExperimentConfig::from_text(Testbed::Bandit, "k 10"),
            Err(CliError::Syntax { line: 1, .. })
        ));
    }
}
