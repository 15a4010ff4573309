//! Randomized suites for the algebraic identities of the equation and its
//! behaviour on the phase surface. Each suite reports a worst error against
//! a fixed tolerance and the first counterexample, if any.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::output::fmt17;
use crate::symfunc::{
    lift_metric, linearization, make_on_phase, newton_magnitudes, newton_sequence, ordering_margin, reference,
    sigma_all, slc_algebraic, slc_algebraic_shifted, volume_factor, KappaVector, Phase,
};

#[derive(Clone, Debug)]
pub struct IdentityOptions {
    /// Samples per suite and dimension.
    pub samples: usize,
    pub dimensions: std::ops::RangeInclusive<usize>,
    pub seed: u64,
    /// Corrupts the first sample of the product suite; used to exercise the
    /// failure path.
    pub inject_fault: bool,
}

impl Default for IdentityOptions {
    fn default() -> Self {
        Self {
            samples: 10_000,
            dimensions: 2..=6,
            seed: 0,
            inject_fault: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteRow {
    pub sample: usize,
    pub n: usize,
    pub error: f64,
    /// The sampled curvatures, or the diagonal of the sampled matrix.
    pub data: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub tolerance: f64,
    pub rows: Vec<SuiteRow>,
    pub elapsed: Duration,
}

impl SuiteOutcome {
    pub fn max_error(&self) -> f64 {
        self.rows.iter().map(|r| r.error).fold(0.0, f64::max)
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !(r.error < self.tolerance)).count()
    }

    pub fn first_counterexample(&self) -> Option<&SuiteRow> {
        self.rows.iter().find(|r| !(r.error < self.tolerance))
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }

    /// `sample, n, error, violation, data` with `data` `;`-separated.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "sample,n,error,violation,data")?;
        for r in &self.rows {
            let data: Vec<String> = r.data.iter().map(|v| fmt17(*v)).collect();
            writeln!(
                out,
                "{},{},{},{},{}",
                r.sample,
                r.n,
                fmt17(r.error),
                u8::from(!(r.error < self.tolerance)),
                data.join(";")
            )?;
        }
        Ok(())
    }
}

fn suite_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn run_suite(
    name: &'static str,
    stream: u64,
    tolerance: f64,
    opts: &IdentityOptions,
    mut sample: impl FnMut(usize, &mut ChaCha8Rng) -> (f64, Vec<f64>),
) -> SuiteOutcome {
    let start = Instant::now();
    let mut rng = suite_rng(opts.seed, stream);
    let mut rows = Vec::new();
    for n in opts.dimensions.clone() {
        for _ in 0..opts.samples {
            let (error, data) = sample(n, &mut rng);
            rows.push(SuiteRow {
                sample: rows.len(),
                n,
                error,
                data,
            });
        }
    }
    SuiteOutcome {
        name,
        tolerance,
        rows,
        elapsed: start.elapsed(),
    }
}

/// Curvatures `tan α` with `α` uniform in `(−π/2, π/2)`: heavy tails.
fn random_kappa(n: usize, rng: &mut ChaCha8Rng) -> KappaVector {
    let v = (0..n)
        .map(|_| rng.random_range(-FRAC_PI_2 + 1e-6..FRAC_PI_2 - 1e-6).tan())
        .collect();
    KappaVector::from_unsorted(v).expect("finite curvatures")
}

fn random_phase(n: usize, lo: f64, rng: &mut ChaCha8Rng) -> Phase {
    let hi = n as f64 * FRAC_PI_2 - 1e-3;
    Phase::new(rng.random_range(lo..hi), n).expect("phase inside the range")
}

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
    (&a + a.transpose()) * 0.5
}

fn random_rotation(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).qr().q()
}

fn sigma_scale(kappa: &KappaVector) -> f64 {
    sigma_all(kappa.as_slice()).iter().map(|s| s.abs()).sum()
}

/// Rounding scale of the Newton recursion at order `k`.
fn newton_scale(h: &DMatrix<f64>, k: usize) -> f64 {
    newton_magnitudes(h)[k].amax().max(1.0)
}

/// `Π(1+κᵢ²) = V₁² + V₂²` for arbitrary curvatures.
pub fn product_identity_suite(opts: &IdentityOptions) -> SuiteOutcome {
    let mut first = opts.inject_fault;
    run_suite("product_identity", 1, 1e-9, opts, |n, rng| {
        let k = random_kappa(n, rng);
        let vf = volume_factor(&k, &Phase::new(0.0, n).expect("zero phase"));
        let prod: f64 = k.as_slice().iter().map(|x| 1.0 + x * x).product();
        let mut lhs = vf.v1 * vf.v1 + vf.v2 * vf.v2;
        if std::mem::take(&mut first) {
            lhs *= 1.0 + 1e-3;
        }
        ((lhs - prod).abs() / prod, k.into_vec())
    })
}

/// The `Θ`-form and the shifted `θ`-form agree everywhere and vanish on
/// the phase surface.
pub fn form_agreement_suite(opts: &IdentityOptions) -> SuiteOutcome {
    let mut toggle = false;
    run_suite("form_agreement", 2, 1e-9, opts, |n, rng| {
        toggle = !toggle;
        let phase = random_phase(n, -(n as f64) * FRAC_PI_2 + 1e-3, rng);
        let k = if toggle {
            random_kappa(n, rng)
        } else {
            make_on_phase(n, &phase, rng).expect("on-phase sample")
        };
        let a = slc_algebraic(&k, &phase);
        let b = slc_algebraic_shifted(&k, &phase);
        let scale = sigma_scale(&k).max(1.0);
        let err = if toggle { (a - b).abs() } else { a.abs().max(b.abs()) } / scale;
        (err, k.into_vec())
    })
}

/// Newton recursion against the Kronecker-delta contraction, every order.
pub fn newton_oracle_suite(opts: &IdentityOptions) -> SuiteOutcome {
    run_suite("newton_vs_kronecker", 3, 1e-9, opts, |n, rng| {
        let h = random_symmetric(n, rng);
        let (_, tensors) = newton_sequence(&h);
        let err = (0..=n)
            .map(|k| (&tensors[k] - reference::newton_tensor_kronecker(&h, k)).amax() / newton_scale(&h, k))
            .fold(0.0, f64::max);
        (err, h.diagonal().iter().copied().collect())
    })
}

/// `[T_k]` is symmetric whenever `h` is.
pub fn newton_symmetry_suite(opts: &IdentityOptions) -> SuiteOutcome {
    run_suite("newton_symmetry", 4, 1e-9, opts, |n, rng| {
        let h = random_symmetric(n, rng);
        let (_, tensors) = newton_sequence(&h);
        let err = (0..=n)
            .map(|k| (&tensors[k] - tensors[k].transpose()).amax() / newton_scale(&h, k))
            .fold(0.0, f64::max);
        (err, h.diagonal().iter().copied().collect())
    })
}

/// `V ≥ 1` on the phase surface; the error is the shortfall `1 − V`.
pub fn volume_lower_bound_suite(opts: &IdentityOptions) -> SuiteOutcome {
    run_suite("volume_at_least_one", 5, 1e-12, opts, |n, rng| {
        let phase = random_phase(n, -(n as f64) * FRAC_PI_2 + 1e-3, rng);
        let k = make_on_phase(n, &phase, rng).expect("on-phase sample");
        let v = volume_factor(&k, &phase).v;
        ((1.0 - v).max(0.0), k.into_vec())
    })
}

/// `F^{iq} G_{qj} = V δ_{ij}` in a randomly rotated frame, relative to the
/// rounding scale `Σ_k |T_k|·|G|` of the recursion.
pub fn linearization_suite(opts: &IdentityOptions) -> SuiteOutcome {
    run_suite("linearization_times_lift", 6, 1e-9, opts, |n, rng| {
        let phase = random_phase(n, -(n as f64) * FRAC_PI_2 + 1e-3, rng);
        let k = make_on_phase(n, &phase, rng).expect("on-phase sample");
        let q = random_rotation(n, rng);
        let h = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(k.as_slice())) * q.transpose();
        let h = (&h + h.transpose()) * 0.5;
        let f = linearization(&h, &phase).expect("symmetric input");
        let g = lift_metric(&h);
        let v = volume_factor(&k, &phase).v;
        let err = (&f * &g - DMatrix::<f64>::identity(n, n) * v).amax();
        let magnitude = newton_magnitudes(&h).iter().fold(DMatrix::zeros(n, n), |acc, t| acc + t);
        let scale = (magnitude * g.abs()).amax().max(1.0);
        (err / scale, k.into_vec())
    })
}

fn supercritical_sample(n: usize, rng: &mut ChaCha8Rng) -> KappaVector {
    let crit = (n as f64 - 2.0) * FRAC_PI_2;
    let phase = random_phase(n, crit, rng);
    make_on_phase(n, &phase, rng).expect("on-phase sample")
}

/// On-phase curvatures with `Θ ≥ (n−2)π/2` lie in `Γ_{n−1}`; the error is
/// `max(0, −σ_k/Σ|σ|)` over `k < n`.
pub fn admissibility_suite(opts: &IdentityOptions) -> SuiteOutcome {
    run_suite("admissible_above_critical", 7, 1e-12, opts, |n, rng| {
        let k = supercritical_sample(n, rng);
        let sig = sigma_all(k.as_slice());
        let scale = sigma_scale(&k).max(1.0);
        let err = sig[1..n].iter().map(|s| (-s / scale).max(0.0)).fold(0.0, f64::max);
        // open cone: an exact zero is a violation too
        let err = if sig[1..n].contains(&0.0) { 1.0 } else { err };
        (err, k.into_vec())
    })
}

/// `κᵢ + (n−i)κₙ ≥ 0` on `Γ_{n−1}`, relative to `max |κ|`.
pub fn ordering_suite(opts: &IdentityOptions) -> SuiteOutcome {
    run_suite("ordering_on_cone", 8, 1e-12, opts, |n, rng| {
        let k = supercritical_sample(n, rng);
        let scale = k.max().abs().max(k.min().abs()).max(1.0);
        ((-ordering_margin(&k) / scale).max(0.0), k.into_vec())
    })
}

/// The algebraic suites: product identity, form agreement, Newton recursion
/// against the oracle, symmetry.
pub fn algebraic_suites(opts: &IdentityOptions) -> Vec<SuiteOutcome> {
    vec![
        product_identity_suite(opts),
        form_agreement_suite(opts),
        newton_oracle_suite(opts),
        newton_symmetry_suite(opts),
    ]
}

/// The on-phase suites: volume bound, linearization identity,
/// admissibility, ordering.
pub fn on_phase_suites(opts: &IdentityOptions) -> Vec<SuiteOutcome> {
    vec![
        volume_lower_bound_suite(opts),
        linearization_suite(opts),
        admissibility_suite(opts),
        ordering_suite(opts),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> IdentityOptions {
        IdentityOptions {
            samples: 200,
            seed,
            ..IdentityOptions::default()
        }
    }

    #[test]
    fn all_suites_pass_on_small_runs() {
        for s in algebraic_suites(&small(1)).into_iter().chain(on_phase_suites(&small(1))) {
            assert!(s.passed(), "{} max error {:e}", s.name, s.max_error());
            assert_eq!(s.rows.len(), 5 * 200);
        }
    }

    #[test]
    fn fault_injection_is_reported() {
        let opts = IdentityOptions {
            inject_fault: true,
            ..small(2)
        };
        let s = product_identity_suite(&opts);
        assert_eq!(s.violations(), 1);
        assert_eq!(s.first_counterexample().unwrap().sample, 0);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().split(',').nth(3) == Some("1"));
    }

    #[test]
    fn seeds_change_samples_not_verdicts() {
        let a = product_identity_suite(&small(3));
        let b = product_identity_suite(&small(4));
        let c = product_identity_suite(&small(3));
        assert_ne!(a.rows[0].data, b.rows[0].data);
        assert_eq!(a.rows, c.rows);
        assert_eq!(a.passed(), b.passed());
    }
}
