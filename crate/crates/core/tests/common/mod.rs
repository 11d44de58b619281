#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution as _, Gamma};
use taes::emotion::{Character, EmotionSpace, ExperienceModel, EPS_FLOOR};
use taes::harness::ExperimentConfig;

pub fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn load_config(name: &str) -> ExperimentConfig {
    ExperimentConfig::from_path(&config_path(name)).unwrap()
}

/// Dirichlet(alpha, ..., alpha) draw, resampled until every component clears
/// the strictness floor by a wide margin.
pub fn dirichlet<R: Rng>(k: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).unwrap();
    loop {
        let g: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = g.iter().sum();
        let p: Vec<f64> = g.iter().map(|x| x / total).collect();
        if p.iter().all(|v| *v > 1e3 * EPS_FLOOR) {
            return p;
        }
    }
}

pub fn space(k: usize) -> EmotionSpace {
    EmotionSpace::new((0..k).map(|i| format!("e{i}"))).unwrap()
}

/// Model whose derived distribution is exactly `p`.
pub fn exact_model(space: &EmotionSpace, name: &str, p: &[f64]) -> ExperienceModel {
    ExperienceModel::with_counts(space.clone(), name, p.to_vec(), 0.0).unwrap()
}

/// Random character and `n` random activity models over `k` traits.
pub fn random_instance<R: Rng>(n: usize, k: usize, rng: &mut R) -> (Character, Vec<ExperienceModel>) {
    let s = space(k);
    let character = Character::new(s.clone(), dirichlet(k, 2.0, rng)).unwrap();
    let models = (0..n)
        .map(|a| exact_model(&s, &format!("a{a}"), &dirichlet(k, 1.0, rng)))
        .collect();
    (character, models)
}

/// `sum_i P_i ln(P_i / sum_a q_a p^a_i)`, written out independently of the
/// crate's objective.
pub fn brute_objective(target: &[f64], columns: &[Vec<f64>], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..target.len() {
        let mut m = 0.0;
        for a in 0..columns.len() {
            m += q[a] * columns[a][i];
        }
        total += target[i] * (target[i] / m).ln();
    }
    total
}

pub fn columns(models: &[ExperienceModel]) -> Vec<Vec<f64>> {
    models
        .iter()
        .map(|m| m.distribution().unwrap().values().to_vec())
        .collect()
}

/// Central finite-difference gradient of `brute_objective` in `q`.
pub fn fd_gradient(target: &[f64], columns: &[Vec<f64>], q: &[f64], h: f64) -> Vec<f64> {
    (0..q.len())
        .map(|a| {
            let mut up = q.to_vec();
            let mut down = q.to_vec();
            up[a] += h;
            down[a] -= h;
            (brute_objective(target, columns, &up) - brute_objective(target, columns, &down)) / (2.0 * h)
        })
        .collect()
}
