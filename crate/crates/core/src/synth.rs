//! Deterministic synthetic data sets, including the two singular regimes:
//! samples with holes and samples clustered on few distinct parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::basis::ParamPoint;
use crate::error::{Error, Result};
use crate::fitting::DataSet;
use crate::points::PointMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    CurveSamples,
    GridSamples,
    SolidSamples,
    HolePunched,
    ClusteredParams,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "curve-samples" => Self::CurveSamples,
            "grid-samples" => Self::GridSamples,
            "solid-samples" => Self::SolidSamples,
            "hole-punched" => Self::HolePunched,
            "clustered-params" => Self::ClusteredParams,
            other => return Err(Error::Config(format!("unknown generator kind `{other}`"))),
        })
    }
}

/// Generator description.
///
/// `samples` is the total count for curves and the per-direction grid size
/// otherwise. `param_dim` selects the parametric dimension of the
/// hole-punched generator. `clusters` is the number of distinct parameters
/// of the clustered generator (each repeated `samples / clusters` times).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub samples: usize,
    pub param_dim: usize,
    pub clusters: usize,
    pub hole_lo: Vec<f64>,
    pub hole_hi: Vec<f64>,
    /// Draw parameters uniformly at random instead of on a regular grid.
    pub random_params: bool,
    /// Half-width of uniform noise added to every coordinate.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            kind: SyntheticKind::CurveSamples,
            samples: 50,
            param_dim: 1,
            clusters: 8,
            hole_lo: vec![0.4; 3],
            hole_hi: vec![0.6; 3],
            random_params: false,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn param_dim(&self) -> usize {
        match self.kind {
            SyntheticKind::CurveSamples | SyntheticKind::ClusteredParams => 1,
            SyntheticKind::GridSamples => 2,
            SyntheticKind::SolidSamples => 3,
            SyntheticKind::HolePunched => self.param_dim,
        }
    }

    fn validate(&self) -> Result<()> {
        let d = self.param_dim();
        if !(1..=3).contains(&d) {
            return Err(Error::Config(format!("parameter dimension must be 1-3, got {d}")));
        }
        if self.samples == 0 {
            return Err(Error::Config("sample count must be positive".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise amplitude must be nonnegative, got {}", self.noise)));
        }
        if self.kind == SyntheticKind::ClusteredParams && (self.clusters == 0 || self.samples < self.clusters) {
            return Err(Error::Config(format!("{} samples cannot populate {} clusters", self.samples, self.clusters)));
        }
        if self.kind == SyntheticKind::HolePunched {
            if self.hole_lo.len() < d || self.hole_hi.len() < d {
                return Err(Error::Config(format!("hole bounds need {d} coordinates")));
            }
            if (0..d).all(|k| self.hole_lo[k] <= 0.0 && self.hole_hi[k] >= 1.0) {
                return Err(Error::Degenerate("hole covers the whole parameter domain".into()));
            }
        }
        Ok(())
    }

    fn in_hole(&self, t: &[f64]) -> bool {
        t.iter().enumerate().all(|(k, &u)| u >= self.hole_lo[k] && u <= self.hole_hi[k])
    }
}

/// Smooth reference field sampled by the generators; one point in R³ per parameter.
pub fn reference_field(t: &ParamPoint) -> [f64; 3] {
    match *t.coords() {
        [u] => [u, 0.5 * (PI * u).sin(), 0.25 * (2.0 * PI * u).cos()],
        [u, v] => [u, v, 0.3 * (PI * u).sin() * (PI * v).cos()],
        [u, v, w] => [u + 0.1 * (PI * v).sin(), v + 0.1 * (PI * w).sin(), w + 0.1 * (PI * u).sin()],
        _ => unreachable!("parameter points have 1-3 coordinates"),
    }
}

fn grid(samples: usize, dim: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> =
        if samples == 1 { vec![0.5] } else { (0..samples).map(|k| k as f64 / (samples - 1) as f64).collect() };
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&a| {
                    let mut p = prefix.clone();
                    p.push(a);
                    p
                })
            })
            .collect();
    }
    out
}

pub fn synthesize(spec: &SyntheticSpec) -> Result<DataSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.param_dim();

    let raw: Vec<Vec<f64>> = match spec.kind {
        SyntheticKind::ClusteredParams => {
            let per = spec.samples / spec.clusters;
            (0..spec.clusters)
                .flat_map(|c| std::iter::repeat_n(vec![(c as f64 + 0.5) / spec.clusters as f64], per))
                .collect()
        }
        SyntheticKind::CurveSamples if !spec.random_params => {
            if spec.samples == 1 {
                vec![vec![0.5]]
            } else {
                (0..spec.samples).map(|k| vec![k as f64 / (spec.samples - 1) as f64]).collect()
            }
        }
        _ if spec.random_params => {
            let total = if d == 1 { spec.samples } else { spec.samples.pow(d as u32) };
            (0..total).map(|_| (0..d).map(|_| rng.random_range(0.0..=1.0)).collect()).collect()
        }
        _ => grid(spec.samples, d),
    };

    let kept: Vec<Vec<f64>> = if spec.kind == SyntheticKind::HolePunched {
        raw.into_iter().filter(|t| !spec.in_hole(t)).collect()
    } else {
        raw
    };
    if kept.is_empty() {
        return Err(Error::Degenerate("no samples remain outside the hole".into()));
    }

    let params: Vec<ParamPoint> = kept.iter().map(|t| ParamPoint::new(t)).collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(params.len() * 3);
    for t in &params {
        for c in reference_field(t) {
            let e = if spec.noise > 0.0 { rng.random_range(-spec.noise..=spec.noise) } else { 0.0 };
            data.push(c + e);
        }
    }
    DataSet::new(PointMatrix::new(params.len(), 3, data)?, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clustered_repeats_parameters() {
        let spec = SyntheticSpec {
            kind: SyntheticKind::ClusteredParams,
            samples: 40,
            clusters: 8,
            noise: 0.01,
            seed: 3,
            ..Default::default()
        };
        let d = synthesize(&spec).unwrap();
        assert_eq!(d.len(), 40);
        let mut distinct: Vec<f64> = d.params().iter().map(|t| t.coords()[0]).collect();
        distinct.dedup();
        assert_eq!(distinct.len(), 8);
    }

    #[test]
    fn hole_removes_interior_samples() {
        let spec = SyntheticSpec {
            kind: SyntheticKind::HolePunched,
            param_dim: 2,
            samples: 11,
            hole_lo: vec![0.3, 0.3],
            hole_hi: vec![0.7, 0.7],
            ..Default::default()
        };
        let d = synthesize(&spec).unwrap();
        assert!(d.params().iter().all(|t| !spec.in_hole(t.coords())));
        // 0.3, 0.4, ..., 0.7 in each direction: 5x5 removed (up to rounding at the bounds)
        assert!(d.len() < 121 && d.len() >= 121 - 25);
    }

    #[test]
    fn whole_domain_hole_is_degenerate() {
        let spec = SyntheticSpec {
            kind: SyntheticKind::HolePunched,
            param_dim: 3,
            hole_lo: vec![-1.0; 3],
            hole_hi: vec![2.0; 3],
            ..Default::default()
        };
        assert!(matches!(synthesize(&spec), Err(Error::Degenerate(_))));
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let spec = SyntheticSpec {
            kind: SyntheticKind::SolidSamples,
            samples: 4,
            random_params: true,
            noise: 0.1,
            seed: 11,
            ..Default::default()
        };
        assert_eq!(synthesize(&spec).unwrap(), synthesize(&spec).unwrap());
        let other = SyntheticSpec { seed: 12, ..spec.clone() };
        assert_ne!(synthesize(&spec).unwrap(), synthesize(&other).unwrap());
    }

    #[test]
    fn kind_names_parse() {
        assert_eq!("hole-punched".parse::<SyntheticKind>().unwrap(), SyntheticKind::HolePunched);
        assert!("spiral".parse::<SyntheticKind>().is_err());
    }
}
