//! Run settings: command-line flags layered over an optional TOML file.
//!
//! Every flag has a file key of the same name (`--tol-delta` is
//! `tol-delta = 1e-10`). A value given on the command line replaces the
//! file's value; list-valued keys accept a scalar or an array.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use lspia::synth::{SyntheticKind, SyntheticSpec};
use lspia::{Alpha, BasisSpace, EmptyGroupPolicy, InitialControls, KnotVector, SolverConfig, StepForm, Variant};
use serde::de::{DeserializeOwned, IntoDeserializer};
use serde::{Deserialize, Deserializer};

use crate::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamChoice {
    Chord,
    Uniform,
    Given,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitChoice {
    #[default]
    Zero,
    Subset,
}

/// One knot vector, written on the command line as comma-separated values.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(transparent)]
pub struct KnotList(pub Vec<f64>);

impl FromStr for KnotList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|k| k.trim().parse::<f64>().map_err(|e| format!("knot `{k}`: {e}")))
            .collect::<Result<_, _>>()
            .map(KnotList)
    }
}

/// Parses a flag value through the type's serde names, so flags and file
/// keys accept exactly the same spellings.
fn by_name<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    T::deserialize(IntoDeserializer::<serde::de::value::Error>::into_deserializer(s)).map_err(|e| e.to_string())
}

fn one_or_many<'de, D, T>(d: D) -> Result<Option<Vec<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(Option::<OneOrMany<T>>::deserialize(d)?.map(|v| match v {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    }))
}

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    /// Parametric dimension of the basis (1 curve, 2 surface, 3 solid).
    #[arg(long, value_name = "1|2|3")]
    pub basis_dim: Option<usize>,
    /// Degree per direction; a single value applies to every direction.
    #[arg(long, value_name = "D[,D,D]", value_delimiter = ',')]
    #[serde(deserialize_with = "one_or_many")]
    pub degree: Option<Vec<usize>>,
    /// Control points per direction; a single value applies to every direction.
    #[arg(long, value_name = "N[,N,N]", value_delimiter = ',')]
    #[serde(deserialize_with = "one_or_many")]
    pub controls: Option<Vec<usize>>,
    /// Clamped knot vector, once per direction, instead of clamped uniform knots.
    #[arg(long, value_name = "K,K,...", action = clap::ArgAction::Append)]
    pub knots: Option<Vec<KnotList>>,

    #[arg(long, value_parser = by_name::<Variant>, value_name = "weighted|uniform")]
    pub variant: Option<Variant>,
    /// Step size of the uniform variant.
    #[arg(long, value_name = "auto|FLOAT")]
    pub alpha: Option<Alpha>,
    /// Stop once the largest control update is at most this (max norm).
    #[arg(long, value_name = "FLOAT")]
    pub tol_delta: Option<f64>,
    /// Relative residual change treated as flat by the stagnation test.
    #[arg(long, value_name = "FLOAT")]
    pub tol_residual_change: Option<f64>,
    #[arg(long, value_name = "N")]
    pub max_iters: Option<usize>,
    #[arg(long, value_parser = by_name::<StepForm>, value_name = "auto|direct|normal")]
    pub step_form: Option<StepForm>,
    /// Initial control points: all zero, or data points near each Greville point.
    #[arg(long, value_parser = by_name::<InitChoice>, value_name = "zero|subset")]
    pub init: Option<InitChoice>,

    /// Parameterization; defaults to `given` when the input carries
    /// parameter columns and to `chord` otherwise.
    #[arg(long, value_parser = by_name::<ParamChoice>, value_name = "chord|uniform|given")]
    pub param: Option<ParamChoice>,
    /// Basis functions with no data in their support: fix them or fail.
    #[arg(long, value_parser = by_name::<EmptyGroupPolicy>, value_name = "freeze|strict")]
    pub empty_group: Option<EmptyGroupPolicy>,

    /// Point file (CSV with header `x[,y[,z]][,u[,v[,w]]]`).
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Output files are written as `<PREFIX>_<name>`.
    #[arg(long, value_name = "PATH")]
    pub out_prefix: Option<PathBuf>,

    /// Synthetic generator used when no input file is given.
    #[arg(long, value_parser = by_name::<SyntheticKind>,
          value_name = "curve-samples|grid-samples|solid-samples|hole-punched|clustered-params")]
    pub kind: Option<SyntheticKind>,
    /// Total samples for curves, samples per direction otherwise.
    #[arg(long, value_name = "N")]
    pub samples: Option<usize>,
    /// Parametric dimension of the hole-punched generator.
    #[arg(long, value_name = "1|2|3")]
    pub param_dim: Option<usize>,
    /// Distinct parameter values of the clustered generator.
    #[arg(long, value_name = "N")]
    pub clusters: Option<usize>,
    #[arg(long, value_name = "U[,V[,W]]", value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(deserialize_with = "one_or_many")]
    pub hole_lo: Option<Vec<f64>>,
    #[arg(long, value_name = "U[,V[,W]]", value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(deserialize_with = "one_or_many")]
    pub hole_hi: Option<Vec<f64>>,
    /// Draw generator parameters at random instead of on a grid.
    #[arg(long, value_name = "BOOL", num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub random_params: Option<bool>,
    /// Half-width of the uniform noise added to generated points.
    #[arg(long, value_name = "FLOAT")]
    pub noise: Option<f64>,
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,

    /// Write zero wall times so traces are reproducible byte for byte.
    #[arg(long, value_name = "BOOL", num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub no_timing: Option<bool>,
    /// Largest number of controls the dense diagnostics will accept.
    #[arg(long, value_name = "N")]
    pub dense_limit: Option<usize>,
    /// Also write the minimum-norm pseudo-inverse solution (diagnose).
    #[arg(long, value_name = "BOOL", num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub with_pinv: Option<bool>,
}

macro_rules! layer {
    ($top:ident, $base:ident; $($field:ident),* $(,)?) => {
        Settings { $($field: $top.$field.or($base.$field)),* }
    };
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// `self` with unset values taken from `base`.
    pub fn over(self, base: Settings) -> Settings {
        let top = self;
        layer!(top, base;
            basis_dim, degree, controls, knots, variant, alpha, tol_delta, tol_residual_change,
            max_iters, step_form, init, param, empty_group, input, out_prefix, kind, samples,
            param_dim, clusters, hole_lo, hole_hi, random_params, noise, seed, no_timing,
            dense_limit, with_pinv,
        )
    }

    pub fn out_path(&self, name: &str) -> Result<PathBuf, Failure> {
        let prefix = self.out_prefix.as_ref().ok_or_else(|| Failure::config("--out-prefix is required"))?;
        let mut s = prefix.clone().into_os_string();
        s.push(format!("_{name}"));
        Ok(PathBuf::from(s))
    }

    pub fn policy(&self) -> EmptyGroupPolicy {
        self.empty_group.unwrap_or_default()
    }

    pub fn solver(&self) -> Result<SolverConfig, Failure> {
        let d = SolverConfig::default();
        let cfg = SolverConfig {
            variant: self.variant.unwrap_or(d.variant),
            alpha: self.alpha.unwrap_or(d.alpha),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tol_delta: self.tol_delta.unwrap_or(d.tol_delta),
            tol_residual_change: self.tol_residual_change.unwrap_or(d.tol_residual_change),
            empty_group_policy: self.policy(),
            step_form: self.step_form.unwrap_or(d.step_form),
            record_timing: !self.no_timing.unwrap_or(false),
        };
        cfg.validate().map_err(Failure::config)?;
        Ok(cfg)
    }

    pub fn initial_controls(&self) -> InitialControls {
        match self.init.unwrap_or_default() {
            InitChoice::Zero => InitialControls::Zero,
            InitChoice::Subset => InitialControls::Subset,
        }
    }

    fn generator_flags(&self) -> Vec<&'static str> {
        let set = [
            ("--kind", self.kind.is_some()),
            ("--samples", self.samples.is_some()),
            ("--param-dim", self.param_dim.is_some()),
            ("--clusters", self.clusters.is_some()),
            ("--hole-lo", self.hole_lo.is_some()),
            ("--hole-hi", self.hole_hi.is_some()),
            ("--random-params", self.random_params.is_some()),
            ("--noise", self.noise.is_some()),
            ("--seed", self.seed.is_some()),
        ];
        set.iter().filter(|(_, on)| *on).map(|(name, _)| *name).collect()
    }

    /// The generator spec, or `None` when data comes from `--input`.
    pub fn generator(&self) -> Result<Option<SyntheticSpec>, Failure> {
        let flags = self.generator_flags();
        if self.input.is_some() {
            if !flags.is_empty() {
                return Err(Failure::config(format!("--input conflicts with generator options {}", flags.join(", "))));
            }
            return Ok(None);
        }
        let kind = self.kind.ok_or_else(|| Failure::config("no data: pass --input or a generator --kind"))?;
        let d = SyntheticSpec::default();
        let dim = self.param_dim.unwrap_or(match kind {
            SyntheticKind::HolePunched => self.basis_dim.unwrap_or(d.param_dim),
            _ => d.param_dim,
        });
        let bounds = |v: &Option<Vec<f64>>, default: &[f64]| match v.as_deref() {
            Some([x]) => vec![*x; 3],
            Some(v) => v.to_vec(),
            None => default.to_vec(),
        };
        Ok(Some(SyntheticSpec {
            kind,
            samples: self.samples.unwrap_or(d.samples),
            param_dim: dim,
            clusters: self.clusters.unwrap_or(d.clusters),
            hole_lo: bounds(&self.hole_lo, &d.hole_lo),
            hole_hi: bounds(&self.hole_hi, &d.hole_hi),
            random_params: self.random_params.unwrap_or(d.random_params),
            noise: self.noise.unwrap_or(d.noise),
            seed: self.seed.unwrap_or(d.seed),
        }))
    }

    /// Basis for data whose parameters (if any) are `data_dim`-dimensional.
    pub fn basis(&self, data_dim: Option<usize>) -> Result<BasisSpace, Failure> {
        let listed = |v: &Option<Vec<usize>>| v.as_ref().map(Vec::len).filter(|&n| n > 1);
        let dim = self
            .basis_dim
            .or(self.knots.as_ref().map(Vec::len))
            .or(listed(&self.degree))
            .or(listed(&self.controls))
            .or(data_dim)
            .unwrap_or(1);
        if !(1..=3).contains(&dim) {
            return Err(Failure::config(format!("--basis-dim must be 1, 2 or 3, got {dim}")));
        }
        let per_direction = |name: &str, v: &[usize]| -> Result<Vec<usize>, Failure> {
            match v.len() {
                1 => Ok(vec![v[0]; dim]),
                n if n == dim => Ok(v.to_vec()),
                n => Err(Failure::config(format!("--{name} has {n} values for a {dim}-D basis"))),
            }
        };
        let degrees = per_direction("degree", self.degree.as_deref().unwrap_or(&[3]))?;
        let counts = self.controls.as_deref().map(|c| per_direction("controls", c)).transpose()?;

        let space = match &self.knots {
            Some(knots) => {
                if knots.len() != dim {
                    return Err(Failure::config(format!("{} knot vectors for a {dim}-D basis", knots.len())));
                }
                let dirs = knots
                    .iter()
                    .zip(&degrees)
                    .map(|(k, &p)| {
                        let kv = KnotVector::new(k.0.clone(), p).map_err(Failure::config)?;
                        if !kv.is_clamped() {
                            return Err(Failure::config(format!("knot vector {:?} is not clamped", k.0)));
                        }
                        Ok(kv)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let space = BasisSpace::new(dirs).map_err(Failure::config)?;
                if let Some(c) = counts.filter(|c| *c != space.counts()) {
                    return Err(Failure::config(format!(
                        "--controls {c:?} contradicts the knot vectors, which give {:?}",
                        space.counts()
                    )));
                }
                space
            }
            None => {
                let counts = counts.ok_or_else(|| Failure::config("--controls is required without --knots"))?;
                BasisSpace::clamped_uniform(&degrees, &counts).map_err(Failure::config)?
            }
        };
        Ok(space)
    }
}
