//! Jacobi-inequality machinery in the diagonal frame: the diagonalization
//! criterion, the trigonometric sums, constrained third fundamental forms
//! and the quantity `Q(ε)` whose lower bound `Q + n(H+J) ≥ 0` drives the
//! interior Hessian estimate.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::output::fmt17;
use crate::symfunc::{make_on_phase, sample_angles, KappaVector, Phase};

/// Slack values below this count as violations.
pub const SLACK_TOL: f64 = -1e-8;

/// Constraint residual allowed on a [`ThirdFormSample`], relative to
/// `max(1, max |h_{ijk}|)`.
pub const CONSTRAINT_TOL: f64 = 1e-10;

/// Curvature values pinned by the extreme-magnitude regimes.
pub const PINNED_CURVATURES: [f64; 3] = [1.0, 1e3, 1e6];

/// Scales of the third fundamental form explored by the sampler.
pub const THIRD_FORM_SCALES: [f64; 3] = [1.0, 1e3, 1e6];

/// `Σaᵢ²xᵢ² − (Σbᵢxᵢ)² ≥ 0` for all `x` iff `Σ bᵢ²/aᵢ² ≤ 1`.
pub fn diag_criterion(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::domain(format!(
            "coefficient lengths differ or are empty: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if let Some(bad) = a.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::domain(format!("diagonal weights must be positive, got {bad}")));
    }
    let s: f64 = a.iter().zip(b).map(|(a, b)| (b / a).powi(2)).sum();
    Ok(1.0 - s >= 0.0)
}

/// `Σ κᵢ/(1+κᵢ²)`, nonnegative on the critical phase.
pub fn trig_sin_sum(kappa: &KappaVector) -> f64 {
    kappa.as_slice().iter().map(|k| k / (1.0 + k * k)).sum()
}

/// `Σ 1/κᵢ`, nonpositive when `Θ ≥ (n−2)π/2` and `κₙ < 0`.
pub fn inverse_kappa_sum(kappa: &KappaVector) -> Result<f64> {
    if kappa.as_slice().contains(&0.0) {
        return Err(Error::domain("inverse curvature sum needs nonzero curvatures"));
    }
    Ok(kappa.as_slice().iter().map(|k| 1.0 / k).sum())
}

/// Diagonal curvatures with a fully symmetric third form `h_{ijk}` obeying
/// the differentiated equation `Σᵢ Gⁱⁱ h_{iiγ} = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThirdFormSample {
    kappa: KappaVector,
    h3: Vec<f64>,
}

impl ThirdFormSample {
    /// Validates symmetry (to 1e−12 relative) and the constraint.
    pub fn new(kappa: KappaVector, h3: Vec<f64>) -> Result<Self> {
        let n = kappa.n();
        if h3.len() != n * n * n {
            return Err(Error::domain(format!("third form needs {} entries, got {}", n * n * n, h3.len())));
        }
        let sample = Self { kappa, h3 };
        let scale = sample.scale();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = sample.get(i, j, k);
                    for w in [sample.get(i, k, j), sample.get(j, i, k), sample.get(k, j, i)] {
                        if (v - w).abs() > 1e-12 * scale {
                            return Err(Error::domain(format!("third form is not symmetric at ({i},{j},{k})")));
                        }
                    }
                }
            }
        }
        let residual = sample.constraint_residual();
        if residual > CONSTRAINT_TOL * scale {
            return Err(Error::domain(format!("third form violates the constraint by {residual:e}")));
        }
        Ok(sample)
    }

    pub fn kappa(&self) -> &KappaVector {
        &self.kappa
    }

    pub fn n(&self) -> usize {
        self.kappa.n()
    }

    /// Entries in `(i, j, k)` order, last index fastest.
    pub fn h3(&self) -> &[f64] {
        &self.h3
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.n();
        self.h3[(i * n + j) * n + k]
    }

    fn scale(&self) -> f64 {
        self.h3.iter().fold(1.0, |m, v| m.max(v.abs()))
    }

    /// `max_γ |Σᵢ Gⁱⁱ h_{iiγ}|`.
    pub fn constraint_residual(&self) -> f64 {
        let w = self.kappa.inverse_lift_diagonal();
        (0..self.n())
            .map(|g| (0..self.n()).map(|i| w[i] * self.get(i, i, g)).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// Same curvatures, third form multiplied by `t`.
    pub fn scaled(&self, t: f64) -> Self {
        Self {
            kappa: self.kappa.clone(),
            h3: self.h3.iter().map(|v| v * t).collect(),
        }
    }
}

fn symmetrize(n: usize, t: &[f64]) -> Vec<f64> {
    let at = |i: usize, j: usize, k: usize| t[(i * n + j) * n + k];
    let mut out = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out[(i * n + j) * n + k] =
                    (at(i, j, k) + at(i, k, j) + at(j, i, k) + at(j, k, i) + at(k, i, j) + at(k, j, i)) / 6.0;
            }
        }
    }
    out
}

/// Orthogonal projection (Frobenius inner product on fully symmetric
/// tensors) onto `{Σᵢ Gⁱⁱ h_{iiγ} = 0 for all γ}`. The input must already be
/// fully symmetric.
pub fn project_third_form(kappa: &KappaVector, h3: &[f64]) -> Vec<f64> {
    let n = kappa.n();
    let w = kappa.inverse_lift_diagonal();
    let constraints: Vec<Vec<f64>> = (0..n)
        .map(|g| {
            let mut raw = vec![0.0; n * n * n];
            for (i, wi) in w.iter().enumerate() {
                raw[(i * n + i) * n + g] = *wi;
            }
            symmetrize(n, &raw)
        })
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gram = DMatrix::from_fn(n, n, |a, b| dot(&constraints[a], &constraints[b]));
    let rhs = DVector::from_fn(n, |g, _| dot(&constraints[g], h3));
    let coeffs = gram
        .cholesky()
        .expect("constraint tensors are linearly independent")
        .solve(&rhs);
    let mut out = h3.to_vec();
    for (c, t) in coeffs.iter().zip(&constraints) {
        for (o, v) in out.iter_mut().zip(t) {
            *o -= c * v;
        }
    }
    out
}

/// Draws a symmetric tensor with `Uniform(−1,1)` entries, scaled by
/// `magnitude`, and projects it onto the constraint set.
pub fn sample_third_form<R: Rng + ?Sized>(kappa: &KappaVector, magnitude: f64, rng: &mut R) -> ThirdFormSample {
    let n = kappa.n();
    let raw: Vec<f64> = (0..n * n * n).map(|_| magnitude * rng.random_range(-1.0..1.0)).collect();
    let h3 = project_third_form(kappa, &symmetrize(n, &raw));
    ThirdFormSample {
        kappa: kappa.clone(),
        h3,
    }
}

/// The expansion of `Q(ε) = (H+J)(Δ_G b − ε|∇_G b|²)` in the diagonal
/// frame:
/// `Σ GⁱⁱGʲʲ(κᵢ+κⱼ)h²_{ijk} − (1+ε)Σ Gⁱⁱ(Σₖh_{kki})²/(H+J) + |A|²ΣGⁱⁱκᵢ − HΣGⁱⁱκᵢ²`.
pub fn jacobi_q(sample: &ThirdFormSample, epsilon: f64, j: f64) -> Result<f64> {
    let kappa = sample.kappa.as_slice();
    let n = kappa.len();
    let hj = sample.kappa.mean_curvature() + j;
    if !(hj > 0.0) {
        return Err(Error::domain(format!("H + J = {hj} must be positive")));
    }
    let w = sample.kappa.inverse_lift_diagonal();
    let mut third = 0.0;
    for a in 0..n {
        for b in 0..n {
            let coeff = w[a] * w[b] * (kappa[a] + kappa[b]);
            for c in 0..n {
                third += coeff * sample.get(a, b, c).powi(2);
            }
        }
    }
    let mut gradient = 0.0;
    for i in 0..n {
        let trace: f64 = (0..n).map(|k| sample.get(k, k, i)).sum();
        gradient += w[i] * trace * trace;
    }
    Ok(third - (1.0 + epsilon) * gradient / hj + curvature_tail(&sample.kappa, &w))
}

fn curvature_tail(kappa: &KappaVector, w: &[f64]) -> f64 {
    let k = kappa.as_slice();
    let first: f64 = k.iter().zip(w).map(|(k, w)| w * k).sum();
    let second: f64 = k.iter().zip(w).map(|(k, w)| w * k * k).sum();
    kappa.norm_sq() * first - kappa.mean_curvature() * second
}

/// `Q(ε) + n(H+J)`, the margin in `Δ_G b ≥ ε|∇_G b|² − n`.
pub fn jacobi_slack(sample: &ThirdFormSample, epsilon: f64, j: f64) -> Result<f64> {
    let n = sample.n() as f64;
    Ok(jacobi_q(sample, epsilon, j)? + n * (sample.kappa.mean_curvature() + j))
}

/// Curvature population for [`verify_jacobi`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplingMode {
    /// On-phase curvatures at `Θ = (n−2)π/2`.
    Critical,
    /// On-phase curvatures with every `κᵢ ≥ 0`.
    Convex,
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Critical => "critical",
            Self::Convex => "convex",
        })
    }
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "critical" => Ok(Self::Critical),
            "convex" => Ok(Self::Convex),
            other => Err(Error::Config(format!("unknown sampling mode {other:?}"))),
        }
    }
}

/// Draws on-phase curvatures for `mode`; with `pinned = Some(m)` one entry
/// equals `m` exactly and the others are drawn on the remaining phase.
pub fn sample_curvatures<R: Rng + ?Sized>(
    phase: &Phase,
    mode: SamplingMode,
    pinned: Option<f64>,
    rng: &mut R,
) -> Result<KappaVector> {
    let n = phase.n();
    let lo = match mode {
        SamplingMode::Critical => -FRAC_PI_2,
        SamplingMode::Convex => 0.0,
    };
    let Some(m) = pinned else {
        return match mode {
            SamplingMode::Critical => make_on_phase(n, phase, rng),
            SamplingMode::Convex => {
                let angles = sample_angles(n, phase.theta(), lo, FRAC_PI_2, rng)?;
                KappaVector::from_unsorted(angles.iter().map(|t| t.tan()).collect())
            }
        };
    };
    let rest = phase.theta() - m.atan();
    let mut values = if n == 2 {
        if !(rest >= lo && rest < FRAC_PI_2) {
            return Err(Error::Sampling(format!("no second angle completes the phase with kappa = {m}")));
        }
        vec![rest.tan()]
    } else {
        sample_angles(n - 1, rest, lo, FRAC_PI_2, rng)?
            .iter()
            .map(|t| t.tan())
            .collect()
    };
    values.push(m);
    KappaVector::from_unsorted(values)
}

/// Regime of a sample id: optional pinned curvature and third-form scale.
pub fn sample_regime(id: usize) -> (Option<f64>, f64) {
    let pinned = match id % 4 {
        0 => None,
        r => Some(PINNED_CURVATURES[r - 1]),
    };
    (pinned, THIRD_FORM_SCALES[(id / 4) % 3])
}

/// Deterministic per-sample generator, independent of scheduling.
pub fn sample_rng(seed: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct JacobiRow {
    pub id: usize,
    pub kappa: Vec<f64>,
    pub third_form_scale: f64,
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JacobiReport {
    pub n: usize,
    pub mode: SamplingMode,
    pub theta: f64,
    pub rows: Vec<JacobiRow>,
    pub min_slack: f64,
    /// Sample ids with slack below [`SLACK_TOL`].
    pub failures: Vec<usize>,
}

impl JacobiReport {
    pub fn samples(&self) -> usize {
        self.rows.len()
    }

    pub fn summary(&self) -> String {
        format!("min slack = {:e} over {} samples", self.min_slack, self.rows.len())
    }

    /// `id, kappa_1..kappa_n, h3_scale, slack`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = vec!["id".to_string()];
        header.extend((1..=self.n).map(|i| format!("kappa_{i}")));
        header.extend(["h3_scale".into(), "slack".into()]);
        writeln!(out, "{}", header.join(","))?;
        for row in &self.rows {
            let mut cells = vec![row.id.to_string()];
            cells.extend(row.kappa.iter().map(|v| fmt17(*v)));
            cells.push(fmt17(row.third_form_scale));
            cells.push(fmt17(row.slack));
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Checks `Q(ε) + n(H+J) ≥ −1e−8` on `num_samples` constrained samples,
/// cycling through the pinned-curvature and third-form regimes.
pub fn verify_jacobi(
    phase: &Phase,
    mode: SamplingMode,
    num_samples: usize,
    epsilon: f64,
    j: f64,
    seed: u64,
) -> Result<JacobiReport> {
    let n = phase.n();
    match mode {
        SamplingMode::Critical if !phase.is_critical() => {
            return Err(Error::UnsupportedPhase(format!(
                "critical mode needs Θ = (n−2)π/2 = {}, got {}; the supercritical case is not covered, use convex mode",
                phase.critical_value(),
                phase.theta()
            )))
        }
        SamplingMode::Convex if !(phase.theta() > 0.0) => {
            return Err(Error::UnsupportedPhase(format!(
                "convex mode needs Θ > 0, got {}",
                phase.theta()
            )))
        }
        _ => {}
    }
    let rows = (0..num_samples)
        .into_par_iter()
        .map(|id| {
            let mut rng = sample_rng(seed, id);
            let (pinned, scale) = sample_regime(id);
            let pinned = pinned.filter(|&m| pin_is_feasible(phase, mode, m));
            let kappa = sample_curvatures(phase, mode, pinned, &mut rng)?;
            let sample = sample_third_form(&kappa, scale, &mut rng);
            Ok(JacobiRow {
                id,
                slack: jacobi_slack(&sample, epsilon, j)?,
                kappa: kappa.into_vec(),
                third_form_scale: scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_slack = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    let failures = rows.iter().filter(|r| r.slack < SLACK_TOL).map(|r| r.id).collect();
    Ok(JacobiReport {
        n,
        mode,
        theta: phase.theta(),
        rows,
        min_slack,
        failures,
    })
}

/// Whether the remaining `n − 1` angles can complete the phase.
fn pin_is_feasible(phase: &Phase, mode: SamplingMode, m: f64) -> bool {
    let rest = phase.theta() - m.atan();
    let k = (phase.n() - 1) as f64;
    let lo = match mode {
        SamplingMode::Critical => -FRAC_PI_2,
        SamplingMode::Convex => 0.0,
    };
    rest > k * lo && rest < k * FRAC_PI_2
}

/// On-phase curvatures with `Θ` drawn from `[(n−2)π/2, (n−1)π/2)` and
/// `κₙ < 0`, the hypotheses of the inverse-curvature lemma.
pub fn sample_negative_tail<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<(Phase, KappaVector)> {
    let crit = (n as f64 - 2.0) * FRAC_PI_2;
    for _ in 0..crate::symfunc::MAX_REJECTION_DRAWS {
        let phase = Phase::new(rng.random_range(crit..crit + FRAC_PI_2), n)?;
        let kappa = make_on_phase(n, &phase, rng)?;
        if kappa.min() < 0.0 {
            return Ok((phase, kappa));
        }
    }
    Err(Error::Sampling("no sample with a negative curvature".into()))
}
