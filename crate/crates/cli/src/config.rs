//! Line-oriented experiment configs.
//!
//! The format is deliberately small: `key = value` pairs, grouped under
//! `[section]` headers, with `#` comments and blank lines ignored. Keys
//! before the first header are top-level. Lists are comma-separated.
//! Parsing is strict — an unknown or duplicated key is an error naming its
//! line — and every omitted key takes a documented default, so the fully
//! resolved config can be echoed back out and re-parsed to an equal value.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value` or `[section]`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}` in section [{section}] for experiment `{experiment}`")]
    UnknownKey { line: usize, section: String, key: String, experiment: String },
    #[error("line {line}: duplicate key `{key}` in section [{section}]")]
    DuplicateKey { line: usize, section: String, key: String },
    #[error("line {line}: key `{key}`: expected {want}, got `{got}`")]
    BadValue { line: usize, key: String, want: String, got: String },
    #[error("missing required key `{key}`")]
    MissingKey { key: String },
    #[error("config sets experiment `{found}` but the subcommand runs `{pinned}`")]
    ExperimentMismatch { pinned: String, found: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// The six experiment kinds the runner knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    BiasSweep,
    RateStudy,
    Logistic,
    Maml,
    Iv,
    Floor,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::BiasSweep => "bias_sweep",
            Experiment::RateStudy => "rate_study",
            Experiment::Logistic => "logistic",
            Experiment::Maml => "maml",
            Experiment::Iv => "iv",
            Experiment::Floor => "floor",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "bias_sweep" => Experiment::BiasSweep,
            "rate_study" => Experiment::RateStudy,
            "logistic" => Experiment::Logistic,
            "maml" => Experiment::Maml,
            "iv" => Experiment::Iv,
            "floor" => Experiment::Floor,
            _ => return None,
        })
    }
}

/// Default stepsize grid shared by every tuned experiment:
/// `{10^k, 3*10^k : k = -3..1}`, ascending. Spelled as literals so the
/// values equal what the same numbers parse to from a config file
/// (computing `3.0 * 10f64.powi(-1)` lands one ulp off `0.3`).
pub fn default_step_grid() -> Vec<f64> {
    vec![0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0]
}

/// Outer-map shape for the closed-form problem family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindName {
    Quadratic,
    Absolute,
}

impl KindName {
    pub fn name(&self) -> &'static str {
        match self {
            KindName::Quadratic => "quadratic",
            KindName::Absolute => "absolute",
        }
    }
}

/// Scalar shift law for the closed-form family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShiftLaw {
    Constant(f64),
    TwoPoint(f64, f64),
    Normal(f64, f64),
}

impl ShiftLaw {
    fn law_name(&self) -> &'static str {
        match self {
            ShiftLaw::Constant(_) => "constant",
            ShiftLaw::TwoPoint(..) => "two_point",
            ShiftLaw::Normal(..) => "normal",
        }
    }

    fn params(&self) -> Vec<f64> {
        match self {
            ShiftLaw::Constant(a) => vec![*a],
            ShiftLaw::TwoPoint(a, b) | ShiftLaw::Normal(a, b) => vec![*a, *b],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    StronglyConvex,
    Convex,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::StronglyConvex => "strongly_convex",
            Regime::Convex => "convex",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MamlMethod {
    Bsgd,
    FoMaml,
    Adam,
}

impl MamlMethod {
    pub fn name(&self) -> &'static str {
        match self {
            MamlMethod::Bsgd => "bsgd",
            MamlMethod::FoMaml => "fo_maml",
            MamlMethod::Adam => "adam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IvMethod {
    Bsgd,
    TwoSls,
    PolyTwoSls,
    DirectNn,
}

impl IvMethod {
    pub fn name(&self) -> &'static str {
        match self {
            IvMethod::Bsgd => "bsgd",
            IvMethod::TwoSls => "two_sls",
            IvMethod::PolyTwoSls => "poly_two_sls",
            IvMethod::DirectNn => "direct_nn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthName {
    Abs,
    Linear,
    Sine,
    Step,
}

impl TruthName {
    pub fn name(&self) -> &'static str {
        match self {
            TruthName::Abs => "abs",
            TruthName::Linear => "linear",
            TruthName::Sine => "sine",
            TruthName::Step => "step",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantName {
    ConvexAbs,
    StronglyConvex,
}

impl VariantName {
    pub fn name(&self) -> &'static str {
        match self {
            VariantName::ConvexAbs => "convex_abs",
            VariantName::StronglyConvex => "strongly_convex",
        }
    }
}

/// Bias-versus-batch-size probe at the origin of a closed-form instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasSweepCfg {
    pub kind: KindName,
    pub sigma: f64,
    pub dim: usize,
    pub m_list: Vec<usize>,
    pub n_mc: usize,
}

/// Suboptimality-versus-iteration curves on the closed-form family.
#[derive(Debug, Clone, PartialEq)]
pub struct RateStudyCfg {
    pub regime: Regime,
    pub kind: KindName,
    pub sigma: f64,
    pub dim: usize,
    pub shift: ShiftLaw,
    pub domain_radius: f64,
    pub step_c: f64,
    pub outer_batch: usize,
    pub t_list: Vec<usize>,
    pub m: usize,
    pub measure_mapping: bool,
    pub moreau_lambda: f64,
}

/// Tuned BSGD-versus-SAA comparison on noisy-view logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticCfg {
    pub dim: usize,
    pub sigma1_sq: f64,
    pub instance_seed: u64,
    pub ref_samples: usize,
    pub domain_radius: f64,
    pub sigma2_sq_list: Vec<f64>,
    pub m_list: Vec<usize>,
    pub budget: usize,
    pub step_grid: Vec<f64>,
    pub saa: bool,
    pub saa_max_iters: usize,
    pub saa_tol: f64,
}

/// Tuned method comparison on sine-wave meta-learning.
#[derive(Debug, Clone, PartialEq)]
pub struct MamlCfg {
    pub net_dims: Vec<usize>,
    pub inner_lr: f64,
    pub m_list: Vec<usize>,
    pub budget: usize,
    pub methods: Vec<MamlMethod>,
    pub step_grid: Vec<f64>,
    pub eval_tasks: usize,
    pub eval_query: usize,
    pub eval_support: usize,
}

/// Structural-function recovery under confounding, four methods.
#[derive(Debug, Clone, PartialEq)]
pub struct IvCfg {
    pub truth_list: Vec<TruthName>,
    pub net_dims: Vec<usize>,
    pub z_first_only: bool,
    pub noise_e_std: f64,
    pub noise_extra_var: f64,
    pub budget: usize,
    pub m: usize,
    pub methods: Vec<IvMethod>,
    pub step_grid: Vec<f64>,
    pub poly_degrees: Vec<usize>,
    pub poly_lambdas: Vec<f64>,
    pub nn_epochs: usize,
    pub nn_tune_epochs: usize,
    pub nn_batch: usize,
    pub val_scenarios: usize,
    pub val_inner: usize,
}

/// Error floors of tuned projected descent under a biased oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorCfg {
    pub variant: VariantName,
    pub variance: f64,
    pub b_list: Vec<f64>,
    pub alpha_factor: f64,
    pub t_list: Vec<usize>,
    pub step_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentParams {
    BiasSweep(BiasSweepCfg),
    RateStudy(RateStudyCfg),
    Logistic(LogisticCfg),
    Maml(MamlCfg),
    Iv(IvCfg),
    Floor(FloorCfg),
}

/// A fully resolved experiment description: what to run, under which
/// seeds, with every default expanded.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub root_seed: u64,
    pub seeds: Vec<u64>,
    pub output_dir: Option<String>,
    pub params: ExperimentParams,
}

struct RawEntry {
    line: usize,
    section: String,
    key: String,
    value: String,
}

struct Fields {
    entries: Vec<RawEntry>,
    used: Vec<bool>,
}

impl Fields {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<RawEntry> = Vec::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(inner) = trimmed.strip_prefix('[') {
                match inner.strip_suffix(']') {
                    Some(name) if !name.trim().is_empty() => {
                        section = name.trim().to_string();
                        continue;
                    }
                    _ => {
                        return Err(ConfigError::Syntax { line, text: trimmed.to_string() });
                    }
                }
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(ConfigError::Syntax { line, text: trimmed.to_string() });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line, text: trimmed.to_string() });
            }
            if entries.iter().any(|e| e.section == section && e.key == key) {
                return Err(ConfigError::DuplicateKey { line, section, key });
            }
            entries.push(RawEntry { line, section: section.clone(), key, value });
        }
        let used = vec![false; entries.len()];
        Ok(Fields { entries, used })
    }

    fn take(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        for (i, e) in self.entries.iter().enumerate() {
            if !self.used[i] && e.section == section && e.key == key {
                self.used[i] = true;
                return Some((e.line, e.value.clone()));
            }
        }
        None
    }

    fn finish(self, experiment: &str) -> Result<(), ConfigError> {
        for (i, e) in self.entries.iter().enumerate() {
            if !self.used[i] {
                return Err(ConfigError::UnknownKey {
                    line: e.line,
                    section: e.section.clone(),
                    key: e.key.clone(),
                    experiment: experiment.to_string(),
                });
            }
        }
        Ok(())
    }
}

fn bad(line: usize, key: &str, want: &str, got: &str) -> ConfigError {
    ConfigError::BadValue {
        line,
        key: key.to_string(),
        want: want.to_string(),
        got: got.to_string(),
    }
}

fn parse_scalar<T: std::str::FromStr>(
    line: usize,
    key: &str,
    want: &str,
    value: &str,
) -> Result<T, ConfigError> {
    value.parse::<T>().map_err(|_| bad(line, key, want, value))
}

fn parse_list<T: std::str::FromStr>(
    line: usize,
    key: &str,
    want: &str,
    value: &str,
) -> Result<Vec<T>, ConfigError> {
    let items: Result<Vec<T>, _> =
        value.split(',').map(|s| s.trim().parse::<T>()).collect();
    let items = items.map_err(|_| bad(line, key, want, value))?;
    if items.is_empty() {
        return Err(bad(line, key, want, value));
    }
    Ok(items)
}

macro_rules! typed_takers {
    ($($fn_name:ident, $list_name:ident: $ty:ty => $want:literal;)*) => {
        impl Fields {
            $(
                fn $fn_name(
                    &mut self,
                    section: &str,
                    key: &str,
                    default: $ty,
                ) -> Result<$ty, ConfigError> {
                    match self.take(section, key) {
                        Some((line, v)) => parse_scalar(line, key, $want, &v),
                        None => Ok(default),
                    }
                }

                #[allow(dead_code)]
                fn $list_name(
                    &mut self,
                    section: &str,
                    key: &str,
                    default: Vec<$ty>,
                ) -> Result<Vec<$ty>, ConfigError> {
                    match self.take(section, key) {
                        Some((line, v)) => {
                            parse_list(line, key, concat!("comma list of ", $want), &v)
                        }
                        None => Ok(default),
                    }
                }
            )*
        }
    };
}

typed_takers! {
    take_f64, take_f64_list: f64 => "a number";
    take_usize, take_usize_list: usize => "a nonnegative integer";
    take_u64, take_u64_list: u64 => "a nonnegative integer";
}

impl Fields {
    fn take_bool(&mut self, section: &str, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.take(section, key) {
            Some((line, v)) => match v.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(bad(line, key, "true or false", &v)),
            },
            None => Ok(default),
        }
    }

    /// One token out of a closed name set, mapped through `options`.
    fn take_choice<T: Copy>(
        &mut self,
        section: &str,
        key: &str,
        options: &[(&str, T)],
        default: T,
    ) -> Result<T, ConfigError> {
        match self.take(section, key) {
            Some((line, v)) => options
                .iter()
                .find(|(name, _)| *name == v)
                .map(|(_, t)| *t)
                .ok_or_else(|| {
                    let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                    bad(line, key, &format!("one of {}", names.join("|")), &v)
                }),
            None => Ok(default),
        }
    }

    fn take_choice_list<T: Copy>(
        &mut self,
        section: &str,
        key: &str,
        options: &[(&str, T)],
        default: Vec<T>,
    ) -> Result<Vec<T>, ConfigError> {
        match self.take(section, key) {
            Some((line, v)) => {
                let mut out = Vec::new();
                for tok in v.split(',') {
                    let tok = tok.trim();
                    let found = options.iter().find(|(name, _)| *name == tok);
                    match found {
                        Some((_, t)) => out.push(*t),
                        None => {
                            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                            return Err(bad(
                                line,
                                key,
                                &format!("comma list from {}", names.join("|")),
                                &v,
                            ));
                        }
                    }
                }
                if out.is_empty() {
                    return Err(bad(line, key, "a nonempty list", &v));
                }
                Ok(out)
            }
            None => Ok(default),
        }
    }
}

const KIND_OPTIONS: &[(&str, KindName)] =
    &[("quadratic", KindName::Quadratic), ("absolute", KindName::Absolute)];
const REGIME_OPTIONS: &[(&str, Regime)] =
    &[("strongly_convex", Regime::StronglyConvex), ("convex", Regime::Convex)];
const MAML_METHOD_OPTIONS: &[(&str, MamlMethod)] = &[
    ("bsgd", MamlMethod::Bsgd),
    ("fo_maml", MamlMethod::FoMaml),
    ("adam", MamlMethod::Adam),
];
const IV_METHOD_OPTIONS: &[(&str, IvMethod)] = &[
    ("bsgd", IvMethod::Bsgd),
    ("two_sls", IvMethod::TwoSls),
    ("poly_two_sls", IvMethod::PolyTwoSls),
    ("direct_nn", IvMethod::DirectNn),
];
const TRUTH_OPTIONS: &[(&str, TruthName)] = &[
    ("abs", TruthName::Abs),
    ("linear", TruthName::Linear),
    ("sine", TruthName::Sine),
    ("step", TruthName::Step),
];
const VARIANT_OPTIONS: &[(&str, VariantName)] = &[
    ("convex_abs", VariantName::ConvexAbs),
    ("strongly_convex", VariantName::StronglyConvex),
];
const SHIFT_OPTIONS: &[(&str, u8)] = &[("constant", 0), ("two_point", 1), ("normal", 2)];

/// Parse a config, optionally pinning the experiment (subcommands do).
/// With no pinned experiment the `experiment` key is required.
pub fn parse_config(text: &str, pinned: Option<Experiment>) -> Result<ExperimentConfig, ConfigError> {
    let mut fields = Fields::parse(text)?;

    let experiment = match fields.take("", "experiment") {
        Some((line, v)) => {
            let found = Experiment::from_name(&v).ok_or_else(|| {
                bad(line, "experiment", "one of bias_sweep|rate_study|logistic|maml|iv|floor", &v)
            })?;
            if let Some(p) = pinned {
                if p != found {
                    return Err(ConfigError::ExperimentMismatch {
                        pinned: p.name().to_string(),
                        found: found.name().to_string(),
                    });
                }
            }
            found
        }
        None => pinned.ok_or(ConfigError::MissingKey { key: "experiment".to_string() })?,
    };

    let root_seed = fields.take_u64("", "root_seed", 0)?;
    let seeds = fields.take_u64_list("", "seeds", (0..10).collect())?;
    let output_dir = fields.take("", "output_dir").map(|(_, v)| v);

    let params = match experiment {
        Experiment::BiasSweep => ExperimentParams::BiasSweep(resolve_bias(&mut fields)?),
        Experiment::RateStudy => ExperimentParams::RateStudy(resolve_rate(&mut fields)?),
        Experiment::Logistic => ExperimentParams::Logistic(resolve_logistic(&mut fields)?),
        Experiment::Maml => ExperimentParams::Maml(resolve_maml(&mut fields)?),
        Experiment::Iv => ExperimentParams::Iv(resolve_iv(&mut fields)?),
        Experiment::Floor => ExperimentParams::Floor(resolve_floor(&mut fields)?),
    };

    fields.finish(experiment.name())?;
    let cfg = ExperimentConfig { experiment, root_seed, seeds, output_dir, params };
    validate(&cfg)?;
    Ok(cfg)
}

fn resolve_bias(f: &mut Fields) -> Result<BiasSweepCfg, ConfigError> {
    Ok(BiasSweepCfg {
        kind: f.take_choice("problem", "kind", KIND_OPTIONS, KindName::Quadratic)?,
        sigma: f.take_f64("problem", "sigma", 1.0)?,
        dim: f.take_usize("problem", "dim", 1)?,
        m_list: f.take_usize_list("sweep", "m_list", vec![1, 4, 16, 64, 256])?,
        n_mc: f.take_usize("sweep", "n_mc", 1_000_000)?,
    })
}

fn resolve_rate(f: &mut Fields) -> Result<RateStudyCfg, ConfigError> {
    let regime = f.take_choice("engine", "regime", REGIME_OPTIONS, Regime::StronglyConvex)?;
    let default_kind = match regime {
        Regime::StronglyConvex => KindName::Quadratic,
        Regime::Convex => KindName::Absolute,
    };
    let kind = f.take_choice("problem", "kind", KIND_OPTIONS, default_kind)?;
    let default_law = match regime {
        Regime::StronglyConvex => 1u8,
        Regime::Convex => 0u8,
    };
    let law = f.take_choice("problem", "shift_law", SHIFT_OPTIONS, default_law)?;
    let default_params = match law {
        0 => vec![1.0],
        _ => vec![0.0, 2.0],
    };
    let (params_line, raw_params) = match f.take("problem", "shift_params") {
        Some((line, v)) => (line, parse_list::<f64>(line, "shift_params", "comma list of numbers", &v)?),
        None => (0, default_params),
    };
    let shift = match (law, raw_params.as_slice()) {
        (0, [a]) => ShiftLaw::Constant(*a),
        (1, [a, b]) => ShiftLaw::TwoPoint(*a, *b),
        (2, [mean, std]) => ShiftLaw::Normal(*mean, *std),
        _ => {
            return Err(bad(
                params_line,
                "shift_params",
                "1 value for constant, 2 for two_point/normal",
                &format!("{} values", raw_params.len()),
            ))
        }
    };
    Ok(RateStudyCfg {
        regime,
        kind,
        sigma: f.take_f64("problem", "sigma", 1.0)?,
        dim: f.take_usize("problem", "dim", 1)?,
        shift,
        domain_radius: f.take_f64("engine", "domain_radius", 2.0)?,
        step_c: f.take_f64("engine", "step_c", 1.0)?,
        outer_batch: f.take_usize("engine", "outer_batch", 1)?,
        t_list: f.take_usize_list("sweep", "t_list", vec![100, 1000, 10_000])?,
        m: f.take_usize("sweep", "m", 1000)?,
        measure_mapping: f.take_bool("diagnostics", "grad_mapping", false)?,
        moreau_lambda: f.take_f64("diagnostics", "moreau_lambda", 0.25)?,
    })
}

fn resolve_logistic(f: &mut Fields) -> Result<LogisticCfg, ConfigError> {
    Ok(LogisticCfg {
        dim: f.take_usize("problem", "dim", 10)?,
        sigma1_sq: f.take_f64("problem", "sigma1_sq", 1.0)?,
        instance_seed: f.take_u64("problem", "instance_seed", 1)?,
        ref_samples: f.take_usize("problem", "ref_samples", 50_000)?,
        domain_radius: f.take_f64("engine", "domain_radius", 10.0)?,
        sigma2_sq_list: f.take_f64_list("sweep", "sigma2_sq_list", vec![1.0, 10.0, 100.0])?,
        m_list: f.take_usize_list("sweep", "m_list", vec![1, 5, 10, 20, 50, 100])?,
        budget: f.take_usize("sweep", "budget", 100_000)?,
        step_grid: f.take_f64_list("engine", "step_grid", default_step_grid())?,
        saa: f.take_bool("saa", "enabled", true)?,
        saa_max_iters: f.take_usize("saa", "max_iters", 300)?,
        saa_tol: f.take_f64("saa", "tol", 1e-7)?,
    })
}

fn resolve_maml(f: &mut Fields) -> Result<MamlCfg, ConfigError> {
    Ok(MamlCfg {
        net_dims: f.take_usize_list("problem", "net_dims", vec![1, 40, 40, 1])?,
        inner_lr: f.take_f64("problem", "inner_lr", 0.01)?,
        m_list: f.take_usize_list("sweep", "m_list", vec![5, 10, 20, 50, 100])?,
        budget: f.take_usize("sweep", "budget", 100_000)?,
        methods: f.take_choice_list(
            "sweep",
            "methods",
            MAML_METHOD_OPTIONS,
            vec![MamlMethod::Bsgd, MamlMethod::FoMaml, MamlMethod::Adam],
        )?,
        step_grid: f.take_f64_list("engine", "step_grid", default_step_grid())?,
        eval_tasks: f.take_usize("evaluation", "tasks", 100)?,
        eval_query: f.take_usize("evaluation", "query", 100)?,
        eval_support: f.take_usize("evaluation", "support", 100)?,
    })
}

fn resolve_iv(f: &mut Fields) -> Result<IvCfg, ConfigError> {
    Ok(IvCfg {
        truth_list: f.take_choice_list(
            "sweep",
            "truth_list",
            TRUTH_OPTIONS,
            vec![TruthName::Abs, TruthName::Linear, TruthName::Sine, TruthName::Step],
        )?,
        net_dims: f.take_usize_list("problem", "net_dims", vec![1, 40, 40, 1])?,
        z_first_only: f.take_bool("problem", "z_first_only", false)?,
        noise_e_std: f.take_f64("problem", "noise_e_std", 1.0)?,
        noise_extra_var: f.take_f64("problem", "noise_extra_var", 0.1)?,
        budget: f.take_usize("sweep", "budget", 10_000)?,
        m: f.take_usize("sweep", "m", 10)?,
        methods: f.take_choice_list(
            "sweep",
            "methods",
            IV_METHOD_OPTIONS,
            vec![IvMethod::Bsgd, IvMethod::TwoSls, IvMethod::PolyTwoSls, IvMethod::DirectNn],
        )?,
        step_grid: f.take_f64_list("engine", "step_grid", default_step_grid())?,
        poly_degrees: f.take_usize_list("baselines", "poly_degrees", vec![1, 2, 3])?,
        poly_lambdas: f.take_f64_list("baselines", "poly_lambdas", vec![0.0, 1e-4, 1e-2, 1.0])?,
        nn_epochs: f.take_usize("baselines", "nn_epochs", 30)?,
        nn_tune_epochs: f.take_usize("baselines", "nn_tune_epochs", 10)?,
        nn_batch: f.take_usize("baselines", "nn_batch", 32)?,
        val_scenarios: f.take_usize("evaluation", "val_scenarios", 500)?,
        val_inner: f.take_usize("evaluation", "val_inner", 16)?,
    })
}

fn resolve_floor(f: &mut Fields) -> Result<FloorCfg, ConfigError> {
    Ok(FloorCfg {
        variant: f.take_choice("problem", "variant", VARIANT_OPTIONS, VariantName::ConvexAbs)?,
        variance: f.take_f64("problem", "variance", 1.0)?,
        b_list: f.take_f64_list("sweep", "b_list", vec![0.05, 0.1, 0.2, 0.4])?,
        alpha_factor: f.take_f64("sweep", "alpha_factor", 2.0)?,
        t_list: f.take_usize_list("sweep", "t_list", vec![10_000])?,
        step_grid: f.take_f64_list("engine", "step_grid", default_step_grid())?,
    })
}

fn validate(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    let inv = |msg: String| Err(ConfigError::Invalid(msg));
    if cfg.seeds.is_empty() {
        return inv("seeds must not be empty".into());
    }
    match &cfg.params {
        ExperimentParams::BiasSweep(c) => {
            if c.sigma < 0.0 || c.dim == 0 || c.n_mc < 2 {
                return inv("bias_sweep needs sigma >= 0, dim >= 1, n_mc >= 2".into());
            }
            if c.m_list.iter().any(|&m| m == 0) {
                return inv("m_list entries must be >= 1".into());
            }
        }
        ExperimentParams::RateStudy(c) => {
            if c.regime == Regime::StronglyConvex && c.kind == KindName::Absolute {
                return inv(
                    "the absolute kind has no curvature; use regime = convex with it".into(),
                );
            }
            if c.kind == KindName::Absolute {
                if let ShiftLaw::Normal(_, std) = c.shift {
                    if std > 0.0 {
                        return inv(
                            "absolute kind with a spread-out normal shift has no closed-form \
                             objective to measure suboptimality against"
                                .into(),
                        );
                    }
                }
            }
            if c.m == 0 || c.t_list.iter().any(|&t| t < 2) {
                return inv("rate_study needs m >= 1 and every T >= 2".into());
            }
            if !(c.domain_radius > 0.0) || !(c.step_c > 0.0) || !(c.moreau_lambda > 0.0) {
                return inv("rate_study needs positive radius, step_c, moreau_lambda".into());
            }
            if c.outer_batch == 0 {
                return inv("outer_batch must be >= 1".into());
            }
        }
        ExperimentParams::Logistic(c) => {
            if c.dim == 0 || !(c.sigma1_sq > 0.0) || c.ref_samples < 2 {
                return inv("logistic needs dim >= 1, sigma1_sq > 0, ref_samples >= 2".into());
            }
            if c.sigma2_sq_list.iter().any(|&s| s < 0.0) {
                return inv("sigma2_sq_list entries must be >= 0".into());
            }
            check_budget(c.budget, &c.m_list)?;
            check_grid(&c.step_grid)?;
        }
        ExperimentParams::Maml(c) => {
            if c.net_dims.first() != Some(&1) || c.net_dims.last() != Some(&1) {
                return inv("maml net_dims must start and end at 1".into());
            }
            if c.eval_tasks == 0 || c.eval_query == 0 || c.eval_support == 0 {
                return inv("maml evaluation sizes must be >= 1".into());
            }
            check_budget(c.budget, &c.m_list)?;
            check_grid(&c.step_grid)?;
        }
        ExperimentParams::Iv(c) => {
            if c.net_dims.first() != Some(&1) || c.net_dims.last() != Some(&1) {
                return inv("iv net_dims must start and end at 1".into());
            }
            if c.val_scenarios == 0 || c.val_inner == 0 || c.nn_batch == 0 {
                return inv("iv evaluation and nn batch sizes must be >= 1".into());
            }
            check_budget(c.budget, &[c.m])?;
            check_grid(&c.step_grid)?;
        }
        ExperimentParams::Floor(c) => {
            if !(c.variance > 0.0) || !(c.alpha_factor > 0.0) {
                return inv("floor needs variance > 0 and alpha_factor > 0".into());
            }
            if c.b_list.iter().any(|&b| !(b > 0.0)) || c.t_list.iter().any(|&t| t == 0) {
                return inv("floor needs b_list > 0 and t_list >= 1".into());
            }
            check_grid(&c.step_grid)?;
        }
    }
    Ok(())
}

fn check_budget(budget: usize, m_list: &[usize]) -> Result<(), ConfigError> {
    for &m in m_list {
        if m == 0 {
            return Err(ConfigError::Invalid("inner batch sizes must be >= 1".into()));
        }
        if budget < m + 1 {
            return Err(ConfigError::Invalid(format!(
                "budget {budget} cannot pay for a single step at m = {m}"
            )));
        }
    }
    Ok(())
}

fn check_grid(grid: &[f64]) -> Result<(), ConfigError> {
    if grid.iter().any(|&c| !(c > 0.0)) {
        return Err(ConfigError::Invalid("step_grid entries must be positive".into()));
    }
    Ok(())
}

fn line_list<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Render the resolved config in canonical key order. Parsing the result
/// reproduces the config exactly; the runner writes this next to the CSVs.
pub fn echo_config(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment = {}", cfg.experiment.name());
    let _ = writeln!(s, "root_seed = {}", cfg.root_seed);
    let _ = writeln!(s, "seeds = {}", line_list(&cfg.seeds));
    if let Some(dir) = &cfg.output_dir {
        let _ = writeln!(s, "output_dir = {dir}");
    }
    match &cfg.params {
        ExperimentParams::BiasSweep(c) => {
            let _ = writeln!(s, "\n[problem]");
            let _ = writeln!(s, "kind = {}", c.kind.name());
            let _ = writeln!(s, "sigma = {}", c.sigma);
            let _ = writeln!(s, "dim = {}", c.dim);
            let _ = writeln!(s, "\n[sweep]");
            let _ = writeln!(s, "m_list = {}", line_list(&c.m_list));
            let _ = writeln!(s, "n_mc = {}", c.n_mc);
        }
        ExperimentParams::RateStudy(c) => {
            let _ = writeln!(s, "\n[problem]");
            let _ = writeln!(s, "kind = {}", c.kind.name());
            let _ = writeln!(s, "sigma = {}", c.sigma);
            let _ = writeln!(s, "dim = {}", c.dim);
            let _ = writeln!(s, "shift_law = {}", c.shift.law_name());
            let _ = writeln!(s, "shift_params = {}", line_list(&c.shift.params()));
            let _ = writeln!(s, "\n[engine]");
            let _ = writeln!(s, "regime = {}", c.regime.name());
            let _ = writeln!(s, "domain_radius = {}", c.domain_radius);
            let _ = writeln!(s, "step_c = {}", c.step_c);
            let _ = writeln!(s, "outer_batch = {}", c.outer_batch);
            let _ = writeln!(s, "\n[sweep]");
            let _ = writeln!(s, "t_list = {}", line_list(&c.t_list));
            let _ = writeln!(s, "m = {}", c.m);
            let _ = writeln!(s, "\n[diagnostics]");
            let _ = writeln!(s, "grad_mapping = {}", c.measure_mapping);
            let _ = writeln!(s, "moreau_lambda = {}", c.moreau_lambda);
        }
        ExperimentParams::Logistic(c) => {
            let _ = writeln!(s, "\n[problem]");
            let _ = writeln!(s, "dim = {}", c.dim);
            let _ = writeln!(s, "sigma1_sq = {}", c.sigma1_sq);
            let _ = writeln!(s, "instance_seed = {}", c.instance_seed);
            let _ = writeln!(s, "ref_samples = {}", c.ref_samples);
            let _ = writeln!(s, "\n[engine]");
            let _ = writeln!(s, "domain_radius = {}", c.domain_radius);
            let _ = writeln!(s, "step_grid = {}", line_list(&c.step_grid));
            let _ = writeln!(s, "\n[sweep]");
            let _ = writeln!(s, "sigma2_sq_list = {}", line_list(&c.sigma2_sq_list));
            let _ = writeln!(s, "m_list = {}", line_list(&c.m_list));
            let _ = writeln!(s, "budget = {}", c.budget);
            let _ = writeln!(s, "\n[saa]");
            let _ = writeln!(s, "enabled = {}", c.saa);
            let _ = writeln!(s, "max_iters = {}", c.saa_max_iters);
            let _ = writeln!(s, "tol = {}", c.saa_tol);
        }
        ExperimentParams::Maml(c) => {
            let _ = writeln!(s, "\n[problem]");
            let _ = writeln!(s, "net_dims = {}", line_list(&c.net_dims));
            let _ = writeln!(s, "inner_lr = {}", c.inner_lr);
            let _ = writeln!(s, "\n[engine]");
            let _ = writeln!(s, "step_grid = {}", line_list(&c.step_grid));
            let _ = writeln!(s, "\n[sweep]");
            let _ = writeln!(s, "m_list = {}", line_list(&c.m_list));
            let _ = writeln!(s, "budget = {}", c.budget);
            let methods: Vec<&str> = c.methods.iter().map(|m| m.name()).collect();
            let _ = writeln!(s, "methods = {}", methods.join(","));
            let _ = writeln!(s, "\n[evaluation]");
            let _ = writeln!(s, "tasks = {}", c.eval_tasks);
            let _ = writeln!(s, "query = {}", c.eval_query);
            let _ = writeln!(s, "support = {}", c.eval_support);
        }
        ExperimentParams::Iv(c) => {
            let _ = writeln!(s, "\n[problem]");
            let _ = writeln!(s, "net_dims = {}", line_list(&c.net_dims));
            let _ = writeln!(s, "z_first_only = {}", c.z_first_only);
            let _ = writeln!(s, "noise_e_std = {}", c.noise_e_std);
            let _ = writeln!(s, "noise_extra_var = {}", c.noise_extra_var);
            let _ = writeln!(s, "\n[engine]");
            let _ = writeln!(s, "step_grid = {}", line_list(&c.step_grid));
            let _ = writeln!(s, "\n[sweep]");
            let truths: Vec<&str> = c.truth_list.iter().map(|t| t.name()).collect();
            let _ = writeln!(s, "truth_list = {}", truths.join(","));
            let _ = writeln!(s, "budget = {}", c.budget);
            let _ = writeln!(s, "m = {}", c.m);
            let methods: Vec<&str> = c.methods.iter().map(|m| m.name()).collect();
            let _ = writeln!(s, "methods = {}", methods.join(","));
            let _ = writeln!(s, "\n[baselines]");
            let _ = writeln!(s, "poly_degrees = {}", line_list(&c.poly_degrees));
            let _ = writeln!(s, "poly_lambdas = {}", line_list(&c.poly_lambdas));
            let _ = writeln!(s, "nn_epochs = {}", c.nn_epochs);
            let _ = writeln!(s, "nn_tune_epochs = {}", c.nn_tune_epochs);
            let _ = writeln!(s, "nn_batch = {}", c.nn_batch);
            let _ = writeln!(s, "\n[evaluation]");
            let _ = writeln!(s, "val_scenarios = {}", c.val_scenarios);
            let _ = writeln!(s, "val_inner = {}", c.val_inner);
        }
        ExperimentParams::Floor(c) => {
            let _ = writeln!(s, "\n[problem]");
            let _ = writeln!(s, "variant = {}", c.variant.name());
            let _ = writeln!(s, "variance = {}", c.variance);
            let _ = writeln!(s, "\n[engine]");
            let _ = writeln!(s, "step_grid = {}", line_list(&c.step_grid));
            let _ = writeln!(s, "\n[sweep]");
            let _ = writeln!(s, "b_list = {}", line_list(&c.b_list));
            let _ = writeln!(s, "alpha_factor = {}", c.alpha_factor);
            let _ = writeln!(s, "t_list = {}", line_list(&c.t_list));
        }
    }
    s
}
