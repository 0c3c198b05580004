use thiserror::Error;

use super::HybridArc;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("target set is empty")]
    EmptySet,
    #[error("arc has no channel named `{0}`")]
    MissingChannel(String),
    #[error("dimension mismatch: set has dimension {expected}, point has {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

type DistanceFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A target set `𝒜`, either sampled or given by a closed-form distance.
pub enum TargetSet {
    Points(Vec<Vec<f64>>),
    /// The unit sphere of the ambient space (any dimension).
    UnitSphere,
    Analytic(DistanceFn),
}

impl TargetSet {
    pub fn point(p: &[f64]) -> Self {
        TargetSet::Points(vec![p.to_vec()])
    }

    pub fn analytic(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        TargetSet::Analytic(Box::new(f))
    }
}

impl std::fmt::Debug for TargetSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TargetSet::Points(p) => f.debug_tuple("Points").field(p).finish(),
            TargetSet::UnitSphere => f.write_str("UnitSphere"),
            TargetSet::Analytic(_) => f.write_str("Analytic(..)"),
        }
    }
}

/// Euclidean distance `|x|_𝒜` from `x` to the set.
pub fn distance_to_set(set: &TargetSet, x: &[f64]) -> Result<f64, AnalysisError> {
    match set {
        TargetSet::Points(points) => {
            let mut best = f64::INFINITY;
            for p in points {
                if p.len() != x.len() {
                    return Err(AnalysisError::DimensionMismatch {
                        expected: p.len(),
                        got: x.len(),
                    });
                }
                let d2: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                best = best.min(d2);
            }
            if best.is_infinite() {
                Err(AnalysisError::EmptySet)
            } else {
                Ok(best.sqrt())
            }
        }
        TargetSet::UnitSphere => Ok((x.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs()),
        TargetSet::Analytic(f) => Ok(f(x).max(0.0)),
    }
}

/// A jump after which the monitored channel did not drop by the required amount.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpDecreaseViolation {
    pub jump: usize,
    pub t: f64,
    pub pre: f64,
    pub post: f64,
}

/// Check `V(post) ≤ V(pre) − δ + 1e-9` on every jump whose reason carries `tag`.
pub fn check_jump_decrease(
    arc: &HybridArc,
    channel: &str,
    delta: f64,
    tag: &str,
) -> Result<Vec<JumpDecreaseViolation>, AnalysisError> {
    let v = arc
        .channel(channel)
        .ok_or_else(|| AnalysisError::MissingChannel(channel.to_string()))?;
    Ok(arc
        .jumps
        .iter()
        .enumerate()
        .filter(|(_, r)| r.has_reason(tag))
        .filter_map(|(k, r)| {
            let (pre, post) = (v[r.sample], v[r.sample + 1]);
            (post > pre - delta + 1e-9).then_some(JumpDecreaseViolation {
                jump: k,
                t: r.time.t,
                pre,
                post,
            })
        })
        .collect())
}

/// Index of the first sample that breaks hybrid-time monotonicity, if any.
///
/// Consecutive samples must either flow (`t' > t`, `j' = j`) or jump
/// (`t' = t`, `j' = j + 1`).
pub fn check_hybrid_time_monotone(arc: &HybridArc) -> Result<(), usize> {
    for (k, w) in arc.times().windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let flow = b.j == a.j && b.t > a.t;
        let jump = b.j == a.j + 1 && b.t == a.t;
        if !(flow || jump) {
            return Err(k + 1);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::{HybridTime, JumpRecord};

    #[test]
    fn point_distances() {
        let set = TargetSet::point(&[0.0, 1.0]);
        assert_eq!(distance_to_set(&set, &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(distance_to_set(&set, &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(
            distance_to_set(&TargetSet::UnitSphere, &[2.0, 0.0]).unwrap(),
            1.0
        );
        assert_eq!(
            distance_to_set(&TargetSet::Points(vec![]), &[1.0]),
            Err(AnalysisError::EmptySet)
        );
        let ring = TargetSet::analytic(|x| (x[0].hypot(x[1]) - 1.0).abs());
        assert!((distance_to_set(&ring, &[0.0, 3.0]).unwrap() - 2.0).abs() < 1e-15);
    }

    fn one_jump_arc(v_pre: f64, v_post: f64, reason: &str) -> HybridArc {
        let mut arc = HybridArc::new(1, vec!["V".into()]);
        arc.push(HybridTime::new(0.0, 0), &[0.0], &[1.0]);
        arc.push(HybridTime::new(1.0, 0), &[1.0], &[v_pre]);
        arc.push(HybridTime::new(1.0, 1), &[2.0], &[v_post]);
        arc.jumps.push(JumpRecord {
            time: HybridTime::new(1.0, 0),
            pre: vec![1.0],
            post: vec![2.0],
            reason: reason.into(),
            sample: 1,
        });
        arc
    }

    #[test]
    fn jump_decrease_checks() {
        let empty = HybridArc::new(1, vec!["V".into()]);
        assert!(check_jump_decrease(&empty, "V", 0.25, "synergy")
            .unwrap()
            .is_empty());

        let ok = one_jump_arc(0.8, 0.4, "synergy");
        assert!(check_jump_decrease(&ok, "V", 0.25, "synergy")
            .unwrap()
            .is_empty());

        let bad = one_jump_arc(0.8, 0.7, "synergy+dwell");
        let v = check_jump_decrease(&bad, "V", 0.25, "synergy").unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].pre, 0.8);
        // Jumps with other reasons are not checked.
        assert!(check_jump_decrease(&one_jump_arc(0.8, 0.9, "dwell"), "V", 0.25, "synergy")
            .unwrap()
            .is_empty());

        assert_eq!(
            check_jump_decrease(&ok, "mu", 0.25, "synergy"),
            Err(AnalysisError::MissingChannel("mu".into()))
        );
    }

    #[test]
    fn monotone_time() {
        let arc = one_jump_arc(0.8, 0.4, "synergy");
        assert_eq!(check_hybrid_time_monotone(&arc), Ok(()));
        let mut bad = HybridArc::new(1, vec![]);
        bad.push(HybridTime::new(1.0, 0), &[0.0], &[]);
        bad.push(HybridTime::new(0.5, 0), &[0.0], &[]);
        assert_eq!(check_hybrid_time_monotone(&bad), Err(1));
    }
}
