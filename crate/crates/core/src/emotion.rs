//! Emotion spaces, categorical distributions and the KL divergence.
//!
//! Every vector in this module is indexed by the trait ordering of an
//! [`EmotionSpace`]. A [`Character`] is the target distribution over those
//! traits, an [`ExperienceModel`] the smoothed empirical distribution one
//! activity has produced so far, and [`mixture_experience`] combines the
//! per-activity distributions with selection weights.

use std::fmt;
use std::ops::Index;
use std::sync::Arc;

use serde::Serialize;

use crate::{Error, Result};

/// Tolerance on `sum == 1` accepted by [`Distribution::new`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Smallest component a strict distribution may carry.
pub const EPS_FLOOR: f64 = 1e-9;

/// Ordered, fixed set of emotion trait identifiers.
#[derive(Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct EmotionSpace {
    traits: Arc<[String]>,
}

impl EmotionSpace {
    pub fn new<I, S>(traits: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let traits: Vec<String> = traits.into_iter().map(Into::into).collect();
        if traits.len() < 2 {
            return Err(Error::InvalidSpace(format!(
                "need at least 2 traits, got {}",
                traits.len()
            )));
        }
        for (i, t) in traits.iter().enumerate() {
            if t.trim().is_empty() {
                return Err(Error::InvalidSpace(format!("trait {i} is empty")));
            }
            if traits[..i].contains(t) {
                return Err(Error::InvalidSpace(format!("duplicate trait `{t}`")));
            }
        }
        Ok(EmotionSpace {
            traits: traits.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.traits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traits.is_empty()
    }

    pub fn traits(&self) -> &[String] {
        &self.traits
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.traits.iter().position(|t| t == id)
    }

    /// Like [`index_of`](Self::index_of) but fails on unknown identifiers.
    pub fn require(&self, id: &str) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| Error::UnknownTrait(id.to_string()))
    }
}

impl fmt::Debug for EmotionSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.traits.iter()).finish()
    }
}

/// A probability vector: nonnegative components summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Distribution {
    values: Vec<f64>,
}

impl Distribution {
    /// Validates `values` and rescales away the (at most 1e-9) normalization
    /// error.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDistribution("empty vector".into()));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "component {i} = {v} is negative or not finite"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "components sum to {sum}"
            )));
        }
        Ok(Distribution {
            values: values.into_iter().map(|v| v / sum).collect(),
        })
    }

    /// Normalizes a nonnegative weight vector with positive mass.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights have no mass".into()));
        }
        Ok(Distribution {
            values: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(k: usize) -> Self {
        Distribution {
            values: vec![1.0 / k as f64; k],
        }
    }

    /// The distribution with all mass on `index`.
    pub fn one_hot(k: usize, index: usize) -> Self {
        let mut values = vec![0.0; k];
        values[index] = 1.0;
        Distribution { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_strict(&self) -> bool {
        self.values.iter().all(|v| *v >= EPS_FLOOR)
    }

    pub fn require_strict(&self) -> Result<()> {
        match self.values.iter().enumerate().find(|(_, v)| **v < EPS_FLOOR) {
            Some((index, value)) => Err(Error::NotStrict {
                index,
                value: *value,
            }),
            None => Ok(()),
        }
    }

    /// Largest component; the peakedness statistic used by drive overrides.
    pub fn max_component(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Index<usize> for Distribution {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Target distribution of emotional states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Character {
    space: EmotionSpace,
    target: Distribution,
}

impl Character {
    pub fn new(space: EmotionSpace, target: Vec<f64>) -> Result<Self> {
        check_len(space.len(), target.len())?;
        let target = Distribution::new(target)?;
        target.require_strict()?;
        Ok(Character { space, target })
    }

    pub fn space(&self) -> &EmotionSpace {
        &self.space
    }

    pub fn target(&self) -> &Distribution {
        &self.target
    }
}

/// Accumulated emotion observations of a single activity.
///
/// The derived distribution applies additive smoothing:
/// `p_i = (counts_i + prior_weight) / (sum(counts) + K * prior_weight)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperienceModel {
    space: EmotionSpace,
    activity: String,
    counts: Vec<f64>,
    prior_weight: f64,
    plays: u64,
}

impl ExperienceModel {
    pub fn new(space: EmotionSpace, activity: impl Into<String>, prior_weight: f64) -> Result<Self> {
        let counts = vec![0.0; space.len()];
        Self::with_counts(space, activity, counts, prior_weight)
    }

    /// Builds a model from pre-aggregated counts. The play counter starts at
    /// zero.
    pub fn with_counts(
        space: EmotionSpace,
        activity: impl Into<String>,
        counts: Vec<f64>,
        prior_weight: f64,
    ) -> Result<Self> {
        check_len(space.len(), counts.len())?;
        if !prior_weight.is_finite() || prior_weight < 0.0 {
            return Err(Error::param("prior_weight", format!("{prior_weight} < 0")));
        }
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::param("counts", "must be finite and nonnegative"));
        }
        Ok(ExperienceModel {
            space,
            activity: activity.into(),
            counts,
            prior_weight,
            plays: 0,
        })
    }

    pub fn space(&self) -> &EmotionSpace {
        &self.space
    }

    pub fn activity(&self) -> &str {
        &self.activity
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn prior_weight(&self) -> f64 {
        self.prior_weight
    }

    /// Number of observed episodes.
    pub fn plays(&self) -> u64 {
        self.plays
    }

    /// The smoothed emotion distribution of this activity.
    pub fn distribution(&self) -> Result<Distribution> {
        let k = self.counts.len() as f64;
        let total = self.counts.iter().sum::<f64>() + k * self.prior_weight;
        if total <= 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "activity `{}` has no observations and no prior",
                self.activity
            )));
        }
        Distribution::from_weights(
            self.counts
                .iter()
                .map(|c| (c + self.prior_weight) / total)
                .collect(),
        )
    }

    /// Adds one (possibly fractional) emotion observation in place.
    pub fn observe(&mut self, emotion: &Distribution) -> Result<()> {
        check_len(self.counts.len(), emotion.len())?;
        for (c, e) in self.counts.iter_mut().zip(emotion.values()) {
            *c += e;
        }
        self.plays += 1;
        Ok(())
    }
}

/// Pure form of [`ExperienceModel::observe`].
pub fn update_experience(model: &ExperienceModel, emotion: &Distribution) -> Result<ExperienceModel> {
    let mut next = model.clone();
    next.observe(emotion)?;
    Ok(next)
}

/// Selection probabilities over activities.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct MixtureWeights {
    q: Vec<f64>,
}

impl MixtureWeights {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::NoActivities);
        }
        if q.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = q.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("weights sum to {sum}")));
        }
        Ok(MixtureWeights {
            q: q.into_iter().map(|v| v / sum).collect(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        MixtureWeights {
            q: vec![1.0 / n as f64; n],
        }
    }

    pub fn indicator(n: usize, index: usize) -> Self {
        let mut q = vec![0.0; n];
        q[index] = 1.0;
        MixtureWeights { q }
    }

    /// Used by the solver, whose iterates are normalized by construction.
    pub(crate) fn from_normalized(q: Vec<f64>) -> Self {
        MixtureWeights { q }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

impl Index<usize> for MixtureWeights {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.q[i]
    }
}

/// Raw emotion flags raised while evaluating one episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmotionFlags {
    raised: Vec<bool>,
}

impl EmotionFlags {
    pub fn new(k: usize) -> Self {
        EmotionFlags {
            raised: vec![false; k],
        }
    }

    pub fn raise(&mut self, index: usize) {
        self.raised[index] = true;
    }

    pub fn clear(&mut self, index: usize) {
        self.raised[index] = false;
    }

    pub fn is_raised(&self, index: usize) -> bool {
        self.raised[index]
    }

    pub fn count(&self) -> usize {
        self.raised.iter().filter(|r| **r).count()
    }

    pub fn len(&self) -> usize {
        self.raised.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raised.is_empty()
    }

    /// Spreads unit mass uniformly over the raised flags, or puts it all on
    /// `fallback` when nothing was raised.
    pub fn to_distribution(&self, fallback: usize) -> Distribution {
        let n = self.count();
        if n == 0 {
            return Distribution::one_hot(self.raised.len(), fallback);
        }
        let share = 1.0 / n as f64;
        Distribution {
            values: self
                .raised
                .iter()
                .map(|r| if *r { share } else { 0.0 })
                .collect(),
        }
    }
}

/// `D(p || r) = sum_i p_i ln(p_i / r_i)` in nats. Zero-mass terms of `p`
/// contribute nothing; `r` must be strict.
pub fn kl_divergence(p: &Distribution, r: &Distribution) -> Result<f64> {
    check_len(p.len(), r.len())?;
    r.require_strict()?;
    let d: f64 = p
        .values()
        .iter()
        .zip(r.values())
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, ri)| pi * (pi / ri).ln())
        .sum();
    Ok(d.max(0.0))
}

/// Half the L1 distance.
pub fn total_variation(p: &Distribution, r: &Distribution) -> Result<f64> {
    check_len(p.len(), r.len())?;
    let l1: f64 = p
        .values()
        .iter()
        .zip(r.values())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok((0.5 * l1).min(1.0))
}

/// The experience `sum_a q_a E^a` produced by selecting activities with
/// probabilities `q`.
pub fn mixture_experience(q: &MixtureWeights, models: &[ExperienceModel]) -> Result<Distribution> {
    if models.is_empty() {
        return Err(Error::NoActivities);
    }
    check_len(models.len(), q.len())?;
    let space = models[0].space();
    if models.iter().any(|m| m.space() != space) {
        return Err(Error::SpaceMismatch);
    }
    let mut mix = vec![0.0; space.len()];
    for (weight, model) in q.as_slice().iter().zip(models) {
        if *weight == 0.0 {
            continue;
        }
        let dist = model.distribution()?;
        for (m, p) in mix.iter_mut().zip(dist.values()) {
            *m += weight * p;
        }
    }
    Distribution::new(mix)
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sbc() -> EmotionSpace {
        EmotionSpace::new(["S", "C", "B"]).unwrap()
    }

    fn dist(v: &[f64]) -> Distribution {
        Distribution::new(v.to_vec()).unwrap()
    }

    fn model_with(space: &EmotionSpace, p: &[f64]) -> ExperienceModel {
        // zero prior with unit total mass: derived distribution == p
        ExperienceModel::with_counts(space.clone(), "a", p.to_vec(), 0.0).unwrap()
    }

    #[test]
    fn space_rejects_duplicates_and_tiny_spaces() {
        assert!(EmotionSpace::new(["S"]).is_err());
        assert!(EmotionSpace::new(["S", "S"]).is_err());
        assert!(EmotionSpace::new(["S", ""]).is_err());
        let s = sbc();
        assert_eq!(s.index_of("B"), Some(2));
        assert!(s.require("U").is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(Distribution::new(vec![0.5, 0.6]).is_err());
        assert!(Distribution::new(vec![-0.1, 1.1]).is_err());
        assert!(Distribution::new(vec![f64::NAN, 1.0]).is_err());
        assert!(Distribution::new(vec![]).is_err());
        let d = Distribution::new(vec![0.5, 0.5 + 5e-10]).unwrap();
        assert_abs_diff_eq!(d.values().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(!dist(&[1.0, 0.0]).is_strict());
    }

    #[test]
    fn character_requires_positive_targets() {
        assert!(Character::new(sbc(), vec![0.5, 0.5, 0.0]).is_err());
        assert!(Character::new(sbc(), vec![0.5, 0.5]).is_err());
        assert!(Character::new(sbc(), vec![0.4, 0.35, 0.25]).is_ok());
    }

    #[test]
    fn kl_examples() {
        let u = dist(&[1.0 / 3.0; 3]);
        assert_eq!(kl_divergence(&u, &u).unwrap(), 0.0);

        let d = kl_divergence(&dist(&[0.5, 0.25, 0.25]), &dist(&[0.25, 0.5, 0.25])).unwrap();
        assert_abs_diff_eq!(d, 0.25 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(d, 0.173287, epsilon = 1e-6);

        let d = kl_divergence(&dist(&[1.0, 0.0, 0.0]), &dist(&[0.5, 0.25, 0.25])).unwrap();
        assert_abs_diff_eq!(d, std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn kl_errors() {
        let p = dist(&[0.5, 0.5]);
        assert!(matches!(
            kl_divergence(&p, &dist(&[0.2, 0.3, 0.5])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            kl_divergence(&p, &dist(&[1.0, 0.0])),
            Err(Error::NotStrict { index: 1, .. })
        ));
    }

    #[test]
    fn mixture_examples() {
        let s = sbc();
        let m1 = model_with(&s, &[0.8, 0.1, 0.1]);
        let m2 = model_with(&s, &[0.2, 0.3, 0.5]);
        let models = [m1.clone(), m2];

        let e = mixture_experience(&MixtureWeights::new(vec![1.0, 0.0]).unwrap(), &models).unwrap();
        assert_eq!(e, m1.distribution().unwrap());

        let e = mixture_experience(&MixtureWeights::new(vec![0.5, 0.5]).unwrap(), &models).unwrap();
        for (a, b) in e.values().iter().zip([0.5, 0.2, 0.3]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }

        let s2 = EmotionSpace::new(["S", "B"]).unwrap();
        let models = [model_with(&s2, &[0.9, 0.1]), model_with(&s2, &[0.1, 0.9])];
        let e = mixture_experience(&MixtureWeights::new(vec![0.625, 0.375]).unwrap(), &models).unwrap();
        assert_abs_diff_eq!(e[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(e[1], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn mixture_length_mismatch() {
        let s = sbc();
        let models = [model_with(&s, &[0.8, 0.1, 0.1])];
        assert!(mixture_experience(&MixtureWeights::uniform(2), &models).is_err());
        assert!(mixture_experience(&MixtureWeights::uniform(1), &[]).is_err());
    }

    #[test]
    fn update_examples() {
        let m = ExperienceModel::new(sbc(), "go", 1.0).unwrap();
        let p = m.distribution().unwrap();
        for v in p.values() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }

        let m1 = update_experience(&m, &dist(&[0.5, 0.5, 0.0])).unwrap();
        assert_eq!(m1.counts(), &[0.5, 0.5, 0.0]);
        let p = m1.distribution().unwrap();
        for (a, b) in p.values().iter().zip([0.375, 0.375, 0.25]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        // the input model is untouched
        assert_eq!(m.counts(), &[0.0, 0.0, 0.0]);

        let m2 = update_experience(&m, &dist(&[1.0, 0.0, 0.0])).unwrap();
        let m2 = update_experience(&m2, &dist(&[0.0, 1.0, 0.0])).unwrap();
        assert_eq!(m2.counts(), &[1.0, 1.0, 0.0]);
        assert_eq!(m2.plays(), 2);
        let p = m2.distribution().unwrap();
        for (a, b) in p.values().iter().zip([0.4, 0.4, 0.2]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn update_rejects_wrong_dimension() {
        let m = ExperienceModel::new(sbc(), "go", 1.0).unwrap();
        assert!(update_experience(&m, &dist(&[0.5, 0.5])).is_err());
        assert!(ExperienceModel::new(sbc(), "go", -1.0).is_err());
    }

    #[test]
    fn empty_model_without_prior_has_no_distribution() {
        let m = ExperienceModel::new(sbc(), "go", 0.0).unwrap();
        assert!(m.distribution().is_err());
    }

    #[test]
    fn flags_fall_back_when_nothing_raised() {
        let mut f = EmotionFlags::new(3);
        assert_eq!(f.to_distribution(2).values(), &[0.0, 0.0, 1.0]);
        f.raise(0);
        f.raise(1);
        assert_eq!(f.to_distribution(2).values(), &[0.5, 0.5, 0.0]);
    }

    fn arb_dist(k: usize) -> impl Strategy<Value = Distribution> {
        prop::collection::vec(0.0f64..1.0, k)
            .prop_filter("mass", |w| w.iter().sum::<f64>() > 1e-3)
            .prop_map(|w| Distribution::from_weights(w).unwrap())
    }

    fn arb_strict(k: usize) -> impl Strategy<Value = Distribution> {
        prop::collection::vec(1e-3f64..1.0, k).prop_map(|w| Distribution::from_weights(w).unwrap())
    }

    proptest! {
        #[test]
        fn gibbs_inequality(p in arb_dist(4), r in arb_strict(4)) {
            let d = kl_divergence(&p, &r).unwrap();
            prop_assert!(d >= 0.0);
            let close = p.values().iter().zip(r.values()).all(|(a, b)| (a - b).abs() <= 1e-12);
            if d <= 1e-12 {
                // identity of indiscernibles, up to the quadratic KL scale
                let tv = total_variation(&p, &r).unwrap();
                prop_assert!(tv <= 2e-6);
            }
            if close {
                prop_assert!(d <= 1e-12);
            }
        }

        #[test]
        fn mixture_is_linear(
            ps in prop::collection::vec(arb_strict(3), 3),
            q1 in arb_strict(3),
            q2 in arb_strict(3),
            lambda in 0.0f64..1.0,
        ) {
            let s = sbc();
            let models: Vec<_> = ps.iter().map(|p| model_with(&s, p.values())).collect();
            let q1 = MixtureWeights::new(q1.values().to_vec()).unwrap();
            let q2 = MixtureWeights::new(q2.values().to_vec()).unwrap();
            let blend: Vec<f64> = q1.as_slice().iter().zip(q2.as_slice())
                .map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
            let lhs = mixture_experience(&MixtureWeights::new(blend).unwrap(), &models).unwrap();
            let e1 = mixture_experience(&q1, &models).unwrap();
            let e2 = mixture_experience(&q2, &models).unwrap();
            for i in 0..3 {
                prop_assert!((lhs[i] - (lambda * e1[i] + (1.0 - lambda) * e2[i])).abs() <= 1e-12);
            }
        }

        #[test]
        fn updates_commute_in_aggregate(
            obs in prop::collection::vec(arb_dist(3), 1..20),
            seed in any::<u64>(),
        ) {
            let base = ExperienceModel::new(sbc(), "x", 1.0).unwrap();
            let forward = obs.iter().fold(base.clone(), |m, e| update_experience(&m, e).unwrap());
            let mut shuffled = obs.clone();
            // deterministic permutation derived from the seed
            let n = shuffled.len();
            for i in (1..n).rev() {
                let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            let backward = shuffled.iter().fold(base, |m, e| update_experience(&m, e).unwrap());
            for (a, b) in forward.counts().iter().zip(backward.counts()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            prop_assert!(forward.distribution().unwrap().is_strict());
        }
    }
}
