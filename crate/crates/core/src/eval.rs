//! Trajectory metrics: rigid alignment, ATE, RTE, error CDFs and loop
//! rejection scores. Trajectories are matched by index.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::error::EvalError;
use crate::graph::Provenance;
use crate::lie::{LieGroup, Se3};
use crate::robust::{classify_rejections, Decision, REJECTION_THRESHOLD};

/// Default RTE segment lengths in meters.
pub const RTE_LENGTHS: [f64; 6] = [10.0, 50.0, 100.0, 150.0, 200.0, 250.0];

/// Lifts any pose trajectory into SE(3).
pub fn lift<P: LieGroup<D>, const D: usize>(poses: &[P]) -> Vec<Se3> {
    poses.iter().map(|p| p.to_se3()).collect()
}

/// Rigid transform applied on the left of every estimate pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    /// Set when the points were degenerate and the first poses were matched instead.
    pub fallback: bool,
}

impl Alignment {
    pub fn identity() -> Self {
        Self { rotation: UnitQuaternion::identity(), translation: Vector3::zeros(), fallback: false }
    }

    pub fn as_pose(&self) -> Se3 {
        Se3::new(self.translation, self.rotation)
    }

    pub fn apply(&self, trajectory: &[Se3]) -> Vec<Se3> {
        let a = self.as_pose();
        trajectory.iter().map(|p| a.compose(p)).collect()
    }
}

fn check_lengths(a: usize, b: usize) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(EvalError::TooShort(1));
    }
    Ok(())
}

/// Rigid transform minimizing `Σ ‖R·p_i + t − q_i‖²` for estimate positions
/// `p` and reference positions `q`. Collinear point sets fall back to
/// matching the first poses.
pub fn umeyama_align(estimate: &[Se3], reference: &[Se3]) -> Result<Alignment, EvalError> {
    check_lengths(estimate.len(), reference.len())?;
    let n = estimate.len() as f64;
    let p: Vec<Vector3<f64>> = estimate.iter().map(|x| *x.translation()).collect();
    let q: Vec<Vector3<f64>> = reference.iter().map(|x| *x.translation()).collect();
    let mp = p.iter().sum::<Vector3<f64>>() / n;
    let mq = q.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for (a, b) in p.iter().zip(&q) {
        cov += (b - mq) * (a - mp).transpose();
    }
    cov /= n;
    let svd = cov.svd(true, true);
    let mut sv = svd.singular_values;
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if estimate.len() < 3 || sv[1] <= 1e-9 * sv[0].max(f64::MIN_POSITIVE) {
        let a = reference[0].compose(&estimate[0].inverse());
        return Ok(Alignment { rotation: *a.rotation(), translation: *a.translation(), fallback: true });
    }
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut s = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    // nalgebra does not order singular values, so find the smallest one
    let k = (0..3).min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b])).expect("three values");
    if s[(2, 2)] < 0.0 && k != 2 {
        s[(2, 2)] = 1.0;
        s[(k, k)] = -1.0;
    }
    let r = u * s * vt;
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    Ok(Alignment { rotation, translation: mq - rotation * mp, fallback: false })
}

/// Root-mean-square and per-pose translation error, after alignment when `align`.
pub fn ate(estimate: &[Se3], reference: &[Se3], align: bool) -> Result<(f64, Vec<f64>), EvalError> {
    check_lengths(estimate.len(), reference.len())?;
    let a = if align { umeyama_align(estimate, reference)? } else { Alignment::identity() };
    let per_pose: Vec<f64> = a.apply(estimate).iter().zip(reference).map(|(e, r)| (e.translation() - r.translation()).norm()).collect();
    let rmse = (per_pose.iter().map(|e| e * e).sum::<f64>() / per_pose.len() as f64).sqrt();
    Ok((rmse, per_pose))
}

/// Relative errors over one segment length; `count == 0` when the reference
/// path is shorter than the segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RteStat {
    pub length: f64,
    pub count: usize,
    pub mean: f64,
    pub rmse: f64,
    /// Root-mean-square relative rotation error in radians.
    pub rotation_rmse: f64,
}

/// Relative translation error over path-length segments of the reference.
pub fn rte(estimate: &[Se3], reference: &[Se3], lengths: &[f64]) -> Result<Vec<RteStat>, EvalError> {
    check_lengths(estimate.len(), reference.len())?;
    let mut dist = Vec::with_capacity(reference.len());
    let mut acc = 0.0;
    dist.push(0.0);
    for w in reference.windows(2) {
        acc += (w[1].translation() - w[0].translation()).norm();
        dist.push(acc);
    }
    Ok(lengths
        .iter()
        .map(|&len| {
            let (mut n, mut sum, mut sq, mut rot) = (0usize, 0.0, 0.0, 0.0);
            for i in 0..reference.len() {
                // tolerate round-off accumulated along the path
                let target = dist[i] + len - 1e-9 * (dist[i] + len);
                let j = dist.partition_point(|&d| d < target);
                if j >= reference.len() {
                    break;
                }
                let re = estimate[i].between(&estimate[j]);
                let rr = reference[i].between(&reference[j]);
                let e = (re.translation() - rr.translation()).norm();
                n += 1;
                sum += e;
                sq += e * e;
                rot += rr.between(&re).rotation_angle().powi(2);
            }
            if n == 0 {
                RteStat { length: len, count: 0, mean: 0.0, rmse: 0.0, rotation_rmse: 0.0 }
            } else {
                let c = n as f64;
                RteStat { length: len, count: n, mean: sum / c, rmse: (sq / c).sqrt(), rotation_rmse: (rot / c).sqrt() }
            }
        })
        .collect())
}

/// Sorted distinct errors with the fraction of errors at or below each.
pub fn error_cdf(errors: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, e) in sorted.iter().enumerate() {
        let frac = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *e => last.1 = frac,
            _ => out.push((*e, frac)),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectionScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Zero when nothing was rejected.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Rejection (weight below 0.5) scored against injected-outlier labels.
/// Loops of unknown origin count as inliers.
pub fn rejection_score(provenance: &[Provenance], weights: &[f64]) -> Result<RejectionScore, EvalError> {
    if provenance.len() != weights.len() {
        return Err(EvalError::LengthMismatch(provenance.len(), weights.len()));
    }
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for (d, p) in classify_rejections(weights, provenance, REJECTION_THRESHOLD) {
        let outlier = p == Provenance::InjectedOutlier;
        match (d, outlier) {
            (Decision::Rejected, true) => tp += 1,
            (Decision::Rejected, false) => fp += 1,
            (Decision::Accepted, true) => fneg += 1,
            (Decision::Accepted, false) => {}
        }
    }
    if tp + fneg == 0 {
        return Err(EvalError::NoOutliers);
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = tp as f64 / (tp + fneg) as f64;
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(RejectionScore { true_positives: tp, false_positives: fp, false_negatives: fneg, precision, recall, f1 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSet {
    pub ate_rmse: f64,
    pub ate_per_pose: Vec<f64>,
    pub rte: Vec<RteStat>,
    pub cdf: Vec<(f64, f64)>,
}

pub fn evaluate(estimate: &[Se3], reference: &[Se3], lengths: &[f64], align: bool) -> Result<MetricSet, EvalError> {
    let (ate_rmse, ate_per_pose) = ate(estimate, reference, align)?;
    let rte = rte(estimate, reference, lengths)?;
    let cdf = error_cdf(&ate_per_pose);
    Ok(MetricSet { ate_rmse, ate_per_pose, rte, cdf })
}
