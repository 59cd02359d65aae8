//! Heuristic search for low-distortion embeddings of `T_n` into `l_p^d`.
//!
//! The objective is a smoothed log-distortion over all vertex pairs,
//!
//! ```text
//! F_beta(phi) = softmax_beta(z) - softmin_beta(z),   z_uv = ln(|phi(u) - phi(v)| / d(u, v)),
//! ```
//!
//! which is scale invariant and tends to `ln(distortion)` as `beta` grows.
//! Each run is plain subgradient descent with a `1/sqrt(t)` step cap,
//! step halving on non-decrease, and `beta` doubled every tenth of the run.
//! Results are upper bounds only.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::convexity::SpaceSpec;
use crate::error::{Error, Result};
use crate::metric::{evaluate_distortion, heap_distance, normalize_embedding, BinaryTree, DistortionReport, Embedding};
use crate::seed::{derive_seed, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// `step_size / sqrt(t)`.
    InvSqrt,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub restarts: u32,
    pub steps: u32,
    /// Initial step, in units of the mean image length of a tree edge.
    pub step_size: f64,
    pub schedule: StepSchedule,
    /// Initial softmax temperature.
    pub beta: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            restarts: 8,
            steps: 5000,
            step_size: 1.0,
            schedule: StepSchedule::InvSqrt,
            beta: 4.0,
            seed: 42,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.steps == 0 {
            return Err(Error::domain("restarts and steps must be positive"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::domain(format!("step size {} must be positive", self.step_size)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::domain(format!(
                "temperature {} must be positive and finite",
                self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: u32,
    pub seed: u64,
    pub initial_distortion: f64,
    pub best_distortion: f64,
    /// Smoothed objective at the final temperature.
    pub best_objective: f64,
}

/// One sampled row of an optimisation trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub restart: u32,
    pub step: u32,
    pub objective: f64,
    pub exact_distortion_snapshot: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub embedding: Embedding,
    pub report: DistortionReport,
    pub history: Vec<RestartSummary>,
    pub trajectory: Vec<HistoryRow>,
    pub config: OptimizerConfig,
}

/// Gaussian points with standard deviation `n`, redrawn from a derived seed
/// if two vertices coincide.
pub fn random_embedding(n: u32, space: &SpaceSpec, seed: u64) -> Result<Embedding> {
    if n == 0 {
        return Err(Error::Depth { depth: 0, required: 1 });
    }
    let tree = BinaryTree::new(n)?;
    let len = tree.vertex_count() * space.dim;
    for attempt in 0u64.. {
        let stream = if attempt == 0 { seed } else { derive_seed(seed, attempt) };
        let mut r = rng(stream);
        let coords: Vec<f64> = (0..len)
            .map(|_| n as f64 * r.sample::<f64, _>(StandardNormal))
            .collect();
        let e = Embedding::from_flat(tree, *space, coords)?;
        match evaluate_distortion(&e) {
            Ok(_) => return Ok(e),
            Err(Error::DegenerateEmbedding { .. }) => continue,
            Err(other) => return Err(other),
        }
    }
    unreachable!()
}

/// Smoothed objective at the current point; `z` holds the pair log-ratios.
#[derive(Debug, Clone, Copy)]
struct Smoothed {
    value: f64,
    z_max: f64,
    z_min: f64,
    sum_max: f64,
    sum_min: f64,
}

impl Smoothed {
    fn distortion(&self) -> f64 {
        (self.z_max - self.z_min).exp()
    }
}

struct Workspace {
    space: SpaceSpec,
    vertices: usize,
    log_tree: Vec<f64>,
    z: Vec<f64>,
    diff: Vec<f64>,
    grad_dir: Vec<f64>,
}

impl Workspace {
    fn new(tree: &BinaryTree, space: SpaceSpec) -> Self {
        let max_d = 2 * tree.depth() as usize;
        Workspace {
            space,
            vertices: tree.vertex_count(),
            log_tree: (0..=max_d).map(|d| (d as f64).ln()).collect(),
            z: vec![0.0; tree.pair_count()],
            diff: vec![0.0; space.dim],
            grad_dir: vec![0.0; space.dim],
        }
    }

    fn point<'a>(&self, coords: &'a [f64], v: usize) -> &'a [f64] {
        let d = self.space.dim;
        &coords[(v - 1) * d..v * d]
    }

    fn evaluate(&mut self, coords: &[f64], beta: f64) -> Smoothed {
        let n = self.vertices;
        let mut k = 0;
        let mut z_max = f64::NEG_INFINITY;
        let mut z_min = f64::INFINITY;
        for u in 1..n {
            let pu = self.point(coords, u);
            for v in u + 1..=n {
                let dist = self.space.distance(pu, self.point(coords, v));
                let z = dist.ln() - self.log_tree[heap_distance(u, v) as usize];
                self.z[k] = z;
                k += 1;
                z_max = z_max.max(z);
                z_min = z_min.min(z);
            }
        }
        let mut sum_max = 0.0;
        let mut sum_min = 0.0;
        for &z in &self.z {
            sum_max += (beta * (z - z_max)).exp();
            sum_min += (-beta * (z - z_min)).exp();
        }
        let value = (z_max - z_min) + (sum_max.ln() + sum_min.ln()) / beta;
        Smoothed {
            value,
            z_max,
            z_min,
            sum_max,
            sum_min,
        }
    }

    fn mean_edge(&self, coords: &[f64]) -> f64 {
        let total: f64 = (2..=self.vertices)
            .map(|v| self.space.distance(self.point(coords, v), self.point(coords, v / 2)))
            .sum();
        total / (self.vertices - 1) as f64
    }

    /// Gradient of the smoothed objective; `self.z` must match `coords`.
    fn gradient(&mut self, coords: &[f64], beta: f64, s: &Smoothed, grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let n = self.vertices;
        let dim = self.space.dim;
        let mut k = 0;
        for u in 1..n {
            for v in u + 1..=n {
                let z = self.z[k];
                k += 1;
                let w = (beta * (z - s.z_max)).exp() / s.sum_max - (-beta * (z - s.z_min)).exp() / s.sum_min;
                if w.abs() < 1e-300 {
                    continue;
                }
                for i in 0..dim {
                    self.diff[i] = coords[(u - 1) * dim + i] - coords[(v - 1) * dim + i];
                }
                let norm = self.space.norm(&self.diff);
                self.space.norm_gradient(&self.diff, &mut self.grad_dir);
                let scale = w / norm;
                for i in 0..dim {
                    let g = scale * self.grad_dir[i];
                    grad[(u - 1) * dim + i] += g;
                    grad[(v - 1) * dim + i] -= g;
                }
            }
        }
    }
}

const MAX_BACKTRACK: u32 = 40;
const MAX_NONFINITE: u32 = 200;
const TRAJECTORY_SAMPLES: u32 = 200;

/// One descent run from `random_embedding(n, space, config.seed)`.
pub fn optimize_embedding(n: u32, space: &SpaceSpec, config: &OptimizerConfig) -> Result<OptimizationResult> {
    run_single(n, space, config, 0)
}

fn run_single(n: u32, space: &SpaceSpec, config: &OptimizerConfig, restart: u32) -> Result<OptimizationResult> {
    config.validate()?;
    let initial = normalize_embedding(&random_embedding(n, space, config.seed)?)?;
    let initial_report = evaluate_distortion(&initial)?;
    let tree = *initial.tree();

    let mut ws = Workspace::new(&tree, *space);
    let mut coords = initial.coords().to_vec();
    let mut trial = coords.clone();
    let mut grad = vec![0.0; coords.len()];

    let mut beta = config.beta;
    let anneal_every = (config.steps / 10).max(1);
    let sample_every = (config.steps / TRAJECTORY_SAMPLES).max(1);

    let mut current = ws.evaluate(&coords, beta);
    let mut best_coords = coords.clone();
    let mut best_snapshot = current.distortion();
    let mut multiplier = 1.0_f64;
    let mut nonfinite = 0;
    let mut trajectory = Vec::new();

    for t in 1..=config.steps {
        if t > 1 && (t - 1) % anneal_every == 0 {
            beta *= 2.0;
            current = ws.evaluate(&coords, beta);
        }
        ws.gradient(&coords, beta, &current, &mut grad);
        let base = match config.schedule {
            StepSchedule::InvSqrt => config.step_size / (t as f64).sqrt(),
            StepSchedule::Constant => config.step_size,
        };
        // Step lengths are measured in edge lengths: the largest vertex move is
        // `base * multiplier` times the mean image length of a tree edge.
        let g_max = grad
            .chunks(space.dim)
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .fold(0.0_f64, f64::max)
            .sqrt();
        if !(g_max > 0.0) {
            break;
        }
        let unit = ws.mean_edge(&coords) / g_max;

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let eta = base * multiplier * unit;
            for ((x, c), g) in trial.iter_mut().zip(&coords).zip(&grad) {
                *x = c - eta * g;
            }
            let cand = ws.evaluate(&trial, beta);
            if !cand.value.is_finite() {
                nonfinite += 1;
                multiplier *= 0.5;
                if nonfinite > MAX_NONFINITE {
                    let best = finish(&tree, space, &best_coords, &initial, initial_report, config, restart)?;
                    return Err(Error::Optimization {
                        message: format!("objective kept overflowing at step {t}"),
                        best: Some(Box::new(best)),
                    });
                }
                continue;
            }
            if cand.value < current.value {
                accepted = Some(cand);
                break;
            }
            multiplier *= 0.5;
        }

        match accepted {
            Some(cand) => {
                // Rescale to contraction 1; the objective and weights are scale free.
                let shrink = (-cand.z_min).exp();
                for (c, x) in coords.iter_mut().zip(&trial) {
                    *c = x * shrink;
                }
                current = Smoothed {
                    z_max: cand.z_max - cand.z_min,
                    z_min: 0.0,
                    ..cand
                };
                ws.z.iter_mut().for_each(|z| *z -= cand.z_min);
                multiplier = (multiplier * 2.0).min(1.0);
                if current.distortion() < best_snapshot {
                    best_snapshot = current.distortion();
                    best_coords.copy_from_slice(&coords);
                }
            }
            None => {
                multiplier = 1.0;
                current = ws.evaluate(&coords, beta);
            }
        }

        if t % sample_every == 0 || t == config.steps {
            trajectory.push(HistoryRow {
                restart,
                step: t,
                objective: current.value,
                exact_distortion_snapshot: current.distortion(),
            });
        }
    }

    let mut result = finish(&tree, space, &best_coords, &initial, initial_report, config, restart)?;
    result.history[0].best_objective = current.value;
    result.trajectory = trajectory;
    Ok(result)
}

fn finish(
    tree: &BinaryTree,
    space: &SpaceSpec,
    best_coords: &[f64],
    initial: &Embedding,
    initial_report: DistortionReport,
    config: &OptimizerConfig,
    restart: u32,
) -> Result<OptimizationResult> {
    let candidate = normalize_embedding(&Embedding::from_flat(*tree, *space, best_coords.to_vec())?)?;
    let report = evaluate_distortion(&candidate)?;
    let (embedding, report) = if report.distortion <= initial_report.distortion {
        (candidate, report)
    } else {
        (initial.clone(), initial_report)
    };
    Ok(OptimizationResult {
        embedding,
        report,
        history: vec![RestartSummary {
            restart,
            seed: config.seed,
            initial_distortion: initial_report.distortion,
            best_distortion: report.distortion,
            best_objective: f64::NAN,
        }],
        trajectory: Vec::new(),
        config: *config,
    })
}

/// Runs `config.restarts` descents with seeds `derive_seed(seed, i)` and keeps
/// the lowest distortion (ties go to the lower restart index).
pub fn multi_start(n: u32, space: &SpaceSpec, config: &OptimizerConfig) -> Result<OptimizationResult> {
    config.validate()?;
    let mut best: Option<OptimizationResult> = None;
    let mut history = Vec::new();
    let mut trajectory = Vec::new();
    for i in 0..config.restarts {
        let cfg = OptimizerConfig {
            seed: derive_seed(config.seed, i as u64),
            ..*config
        };
        let run = match run_single(n, space, &cfg, i) {
            Ok(run) => run,
            Err(Error::Optimization { message, best: partial }) => {
                if let Some(p) = &partial {
                    history.extend(p.history.iter().cloned());
                }
                let keep = match (best, partial) {
                    (Some(b), Some(p)) if p.report.distortion < b.report.distortion => Some(*p),
                    (Some(b), _) => Some(b),
                    (None, p) => p.map(|p| *p),
                };
                return Err(Error::Optimization {
                    message: format!("restart {i}: {message}"),
                    best: keep.map(|mut k| {
                        k.history = history;
                        Box::new(k)
                    }),
                });
            }
            Err(other) => return Err(other),
        };
        history.extend(run.history.iter().cloned());
        trajectory.extend(run.trajectory.iter().cloned());
        if best
            .as_ref()
            .is_none_or(|b| run.report.distortion < b.report.distortion)
        {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one restart");
    best.history = history;
    best.trajectory = trajectory;
    best.config = *config;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(restarts: u32, steps: u32) -> OptimizerConfig {
        OptimizerConfig {
            restarts,
            steps,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn random_embedding_determinism() {
        let s = SpaceSpec::euclidean(2);
        let a = random_embedding(3, &s, 5).unwrap();
        let b = random_embedding(3, &s, 5).unwrap();
        let c = random_embedding(3, &s, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let r = evaluate_distortion(&a).unwrap();
        assert!(r.distortion.is_finite() && r.distortion >= 1.0);
        assert!(random_embedding(0, &s, 1).is_err());
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let space = SpaceSpec::new(3.0, 2).unwrap();
        let e = random_embedding(2, &space, 11).unwrap();
        let mut ws = Workspace::new(e.tree(), space);
        let coords = e.coords().to_vec();
        let beta = 3.0;
        let s = ws.evaluate(&coords, beta);
        let mut grad = vec![0.0; coords.len()];
        ws.gradient(&coords, beta, &s, &mut grad);
        for i in 0..coords.len() {
            let h = 1e-6;
            let mut plus = coords.clone();
            let mut minus = coords.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (ws.evaluate(&plus, beta).value - ws.evaluate(&minus, beta).value) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                "coord {i}: {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn smoothed_objective_bounds_log_distortion() {
        let space = SpaceSpec::euclidean(3);
        let e = random_embedding(3, &space, 2).unwrap();
        let mut ws = Workspace::new(e.tree(), space);
        let exact = evaluate_distortion(&e).unwrap().distortion.ln();
        for beta in [1.0, 10.0, 1000.0] {
            let s = ws.evaluate(e.coords(), beta);
            assert!(s.value >= exact - 1e-12);
            assert!(s.value <= exact + 2.0 * (e.tree().pair_count() as f64).ln() / beta + 1e-12);
            assert!((s.distortion().ln() - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn three_point_line_is_solved() {
        let res = multi_start(1, &SpaceSpec::euclidean(1), &OptimizerConfig::default()).unwrap();
        assert!(res.report.distortion <= 1.0 + 1e-6, "{}", res.report.distortion);
    }

    #[test]
    fn never_worse_than_initial() {
        let res = multi_start(3, &SpaceSpec::euclidean(3), &quick(3, 200)).unwrap();
        assert_eq!(res.history.len(), 3);
        for h in &res.history {
            assert!(h.best_distortion <= h.initial_distortion);
        }
        let fresh = evaluate_distortion(&res.embedding).unwrap();
        assert!((fresh.distortion - res.report.distortion).abs() <= 1e-12 * fresh.distortion);
    }

    #[test]
    fn single_restart_matches_derived_seed() {
        let space = SpaceSpec::euclidean(2);
        let cfg = quick(1, 150);
        let multi = multi_start(2, &space, &cfg).unwrap();
        let single = optimize_embedding(
            2,
            &space,
            &OptimizerConfig {
                seed: derive_seed(cfg.seed, 0),
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(multi.embedding, single.embedding);
        assert_eq!(multi.report, single.report);
    }

    #[test]
    fn more_restarts_never_hurt() {
        let space = SpaceSpec::euclidean(2);
        let one = multi_start(3, &space, &quick(1, 150)).unwrap();
        let four = multi_start(3, &space, &quick(4, 150)).unwrap();
        assert!(four.report.distortion <= one.report.distortion);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let space = SpaceSpec::euclidean(2);
        for cfg in [
            quick(0, 10),
            quick(1, 0),
            OptimizerConfig {
                step_size: -1.0,
                ..quick(1, 1)
            },
            OptimizerConfig {
                beta: f64::INFINITY,
                ..quick(1, 1)
            },
        ] {
            assert!(matches!(multi_start(2, &space, &cfg), Err(Error::Domain(_))));
        }
    }
}
