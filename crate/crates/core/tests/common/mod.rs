#![allow(dead_code)]

use lspia::synth::{synthesize, SyntheticKind, SyntheticSpec};
use lspia::{assemble, BasisSpace, DataSet, EmptyGroupPolicy, FitProblem, ParamPoint, PointMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct CorpusCase {
    pub name: String,
    pub problem: FitProblem,
}

fn case(name: String, degrees: &[usize], counts: &[usize], spec: SyntheticSpec) -> CorpusCase {
    let space = BasisSpace::clamped_uniform(degrees, counts).expect("valid basis");
    let data = synthesize(&spec).expect("valid generator");
    let problem = assemble(&space, &data, EmptyGroupPolicy::Freeze).expect("assembles");
    CorpusCase { name, problem }
}

/// Cubic curve with 10 controls fitted to 40 samples on 8 distinct parameters.
pub fn clustered_curve() -> FitProblem {
    case(
        "clustered cubic curve".into(),
        &[3],
        &[10],
        SyntheticSpec {
            kind: SyntheticKind::ClusteredParams,
            samples: 40,
            clusters: 8,
            noise: 0.01,
            seed: 1,
            ..Default::default()
        },
    )
    .problem
}

/// 8x8 bicubic patch over a grid with a void covering the supports of the
/// four basis functions nearest the origin corner.
pub fn holed_patch() -> FitProblem {
    case(
        "hole-punched bicubic patch".into(),
        &[3, 3],
        &[8, 8],
        SyntheticSpec {
            kind: SyntheticKind::HolePunched,
            param_dim: 2,
            samples: 30,
            hole_lo: vec![-0.01, -0.01],
            hole_hi: vec![0.41, 0.41],
            noise: 0.005,
            seed: 2,
            ..Default::default()
        },
    )
    .problem
}

/// Systems spanning dimensions 1-3, degrees 1-3, full-rank, clustered and
/// hole-punched sampling.
pub fn corpus() -> Vec<CorpusCase> {
    let mut out = Vec::new();
    for p in 1..=3usize {
        let n = p + 5;
        out.push(case(
            format!("curve p={p} uniform"),
            &[p],
            &[n],
            SyntheticSpec {
                kind: SyntheticKind::CurveSamples,
                samples: 40,
                noise: 0.01,
                seed: p as u64,
                ..Default::default()
            },
        ));
        out.push(case(
            format!("curve p={p} random"),
            &[p],
            &[n],
            SyntheticSpec {
                kind: SyntheticKind::CurveSamples,
                samples: 60,
                random_params: true,
                noise: 0.01,
                seed: 10 + p as u64,
                ..Default::default()
            },
        ));
        out.push(case(
            format!("curve p={p} clustered"),
            &[p],
            &[n + 3],
            SyntheticSpec {
                kind: SyntheticKind::ClusteredParams,
                samples: 3 * (n + 1),
                clusters: n + 1,
                noise: 0.01,
                seed: 20 + p as u64,
                ..Default::default()
            },
        ));
        out.push(case(
            format!("curve p={p} holed"),
            &[p],
            &[n],
            SyntheticSpec {
                kind: SyntheticKind::HolePunched,
                param_dim: 1,
                samples: 50,
                hole_lo: vec![-0.01],
                hole_hi: vec![0.3],
                noise: 0.01,
                seed: 30 + p as u64,
                ..Default::default()
            },
        ));

        out.push(case(
            format!("patch p={p} grid"),
            &[p, p],
            &[p + 3, p + 4],
            SyntheticSpec {
                kind: SyntheticKind::GridSamples,
                samples: 12,
                noise: 0.01,
                seed: 40 + p as u64,
                ..Default::default()
            },
        ));
        out.push(case(
            format!("patch p={p} random"),
            &[p, p],
            &[p + 3, p + 3],
            SyntheticSpec {
                kind: SyntheticKind::GridSamples,
                samples: 14,
                random_params: true,
                noise: 0.01,
                seed: 50 + p as u64,
                ..Default::default()
            },
        ));
        out.push(case(
            format!("patch p={p} holed"),
            &[p, p],
            &[p + 4, p + 4],
            SyntheticSpec {
                kind: SyntheticKind::HolePunched,
                param_dim: 2,
                samples: 16,
                hole_lo: vec![0.5, -0.01],
                hole_hi: vec![1.01, 0.45],
                noise: 0.01,
                seed: 60 + p as u64,
                ..Default::default()
            },
        ));

        out.push(case(
            format!("solid p={p} grid"),
            &[p, p, p],
            &[p + 2, p + 2, p + 3],
            SyntheticSpec {
                kind: SyntheticKind::SolidSamples,
                samples: 8,
                noise: 0.01,
                seed: 70 + p as u64,
                ..Default::default()
            },
        ));
        out.push(case(
            format!("solid p={p} holed"),
            &[p, p, p],
            &[p + 3, p + 3, p + 3],
            SyntheticSpec {
                kind: SyntheticKind::HolePunched,
                param_dim: 3,
                samples: 9,
                hole_lo: vec![-0.01, -0.01, -0.01],
                hole_hi: vec![0.4, 0.4, 1.01],
                noise: 0.01,
                seed: 80 + p as u64,
                ..Default::default()
            },
        ));
    }
    out.push(case(
        "patch mixed degrees".into(),
        &[1, 3],
        &[4, 7],
        SyntheticSpec { kind: SyntheticKind::GridSamples, samples: 11, noise: 0.01, seed: 90, ..Default::default() },
    ));
    out
}

pub fn random_points(rng: &mut ChaCha8Rng, rows: usize, dim: usize, scale: f64) -> PointMatrix {
    PointMatrix::new(rows, dim, (0..rows * dim).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Small system of random dimension, degrees and sampling; may be
/// rank-deficient or leave groups empty.
pub fn random_problem(rng: &mut ChaCha8Rng) -> FitProblem {
    let dim = rng.random_range(1..=3usize);
    let degrees: Vec<usize> = (0..dim).map(|_| rng.random_range(1..=3)).collect();
    let counts: Vec<usize> = degrees.iter().map(|&p| p + 1 + rng.random_range(0..3)).collect();
    let space = BasisSpace::clamped_uniform(&degrees, &counts).unwrap();
    let m = rng.random_range(1..40usize);
    let data_dim = rng.random_range(1..=3usize);
    let params: Vec<ParamPoint> = (0..m)
        .map(|_| {
            let c: Vec<f64> =
                (0..dim).map(|_| if rng.random_bool(0.1) { 1.0 } else { rng.random_range(0.0..1.0) }).collect();
            ParamPoint::new(&c).unwrap()
        })
        .collect();
    let q = random_points(rng, m, data_dim, 5.0);
    assemble(&space, &DataSet::new(q, params).unwrap(), EmptyGroupPolicy::Freeze).unwrap()
}
