//! Elementary symmetric functions, Γ_k cones, Newton transformation tensors
//! and the special Lagrangian curvature operator in its algebraic forms.
//!
//! All matrices here are expressed in an orthonormal frame (`g = I`), so
//! `(1,1)`- and `(2,0)`-versions of a tensor coincide.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

/// Above this dimension `σ_k` switches from subset enumeration to the
/// product-convolution recurrence.
pub const ENUMERATION_MAX_DIM: usize = 12;

/// A principal-curvature vector counts as on-phase when
/// `|Σ arctan κᵢ − Θ|` is below this.
pub const ON_PHASE_TOL: f64 = 1e-9;

/// Maximum number of proposals drawn by the rejection samplers.
pub const MAX_REJECTION_DRAWS: usize = 1_000_000;

const SYMMETRY_TOL: f64 = 1e-12;

/// Principal curvatures `κ₁ ≥ κ₂ ≥ … ≥ κₙ`.
#[derive(Clone, Debug, PartialEq)]
pub struct KappaVector {
    values: Vec<f64>,
}

impl KappaVector {
    /// Wraps already sorted (descending) curvatures.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::check_entries(&values)?;
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::domain(format!(
                "principal curvatures must be sorted descending, got {values:?}"
            )));
        }
        Ok(Self { values })
    }

    /// Sorts `values` descending and wraps them.
    pub fn from_unsorted(mut values: Vec<f64>) -> Result<Self> {
        Self::check_entries(&values)?;
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { values })
    }

    fn check_entries(values: &[f64]) -> Result<()> {
        if values.len() < 2 {
            return Err(Error::domain(format!(
                "dimension must be at least 2, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite curvature {bad}")));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Largest curvature `κ₁`.
    pub fn max(&self) -> f64 {
        self.values[0]
    }

    /// Smallest curvature `κₙ`.
    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Mean curvature `H = σ₁(κ)`.
    pub fn mean_curvature(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `|A|² = Σ κᵢ²`.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|k| k * k).sum()
    }

    /// `Σ arctan κᵢ`.
    pub fn arctan_sum(&self) -> f64 {
        self.values.iter().map(|k| k.atan()).sum()
    }

    /// Diagonal entries of the inverse lift metric, `Gⁱⁱ = 1/(1+κᵢ²)`.
    pub fn inverse_lift_diagonal(&self) -> Vec<f64> {
        self.values.iter().map(|k| 1.0 / (1.0 + k * k)).collect()
    }

    /// `√Π(1+κᵢ²) = √det G`.
    pub fn lift_volume(&self) -> f64 {
        self.values.iter().map(|k| (1.0 + k * k).sqrt()).product()
    }

    pub fn is_on_phase(&self, phase: &Phase) -> bool {
        slc_residual(self, phase).abs() < ON_PHASE_TOL
    }
}

/// Target phase `Θ` together with the shifted phase `θ = Θ − (n−1)π/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Phase {
    n: usize,
    theta_big: f64,
    theta_small: f64,
}

impl Phase {
    /// Requires `|Θ| < nπ/2`.
    pub fn new(theta: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("dimension must be at least 2, got {n}")));
        }
        let limit = n as f64 * FRAC_PI_2;
        if !theta.is_finite() || theta.abs() >= limit {
            return Err(Error::domain(format!(
                "phase {theta} outside the open range (-{limit}, {limit}) for n = {n}"
            )));
        }
        Ok(Self {
            n,
            theta_big: theta,
            theta_small: theta - (n - 1) as f64 * FRAC_PI_2,
        })
    }

    /// The critical phase `(n−2)π/2`.
    pub fn critical(n: usize) -> Result<Self> {
        Self::new((n as f64 - 2.0) * FRAC_PI_2, n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `Θ`.
    pub fn theta(&self) -> f64 {
        self.theta_big
    }

    /// `θ = Θ − (n−1)π/2`.
    pub fn theta_small(&self) -> f64 {
        self.theta_small
    }

    pub fn critical_value(&self) -> f64 {
        (self.n as f64 - 2.0) * FRAC_PI_2
    }

    pub fn is_critical(&self) -> bool {
        (self.theta_big - self.critical_value()).abs() < 1e-12
    }

    /// `Θ ≥ (n−2)π/2`, the range where solutions are admissible.
    pub fn is_at_least_critical(&self) -> bool {
        self.theta_big >= self.critical_value() - 1e-12
    }
}

/// Orthonormal-frame representation of `[T_k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonTensor {
    pub k: usize,
    pub entries: DMatrix<f64>,
}

/// `V`, `V1 = Σ(−1)^k σ_{2k}` and `V2 = Σ(−1)^k σ_{2k+1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolumeFactor {
    pub v: f64,
    pub v1: f64,
    pub v2: f64,
}

/// `σ_k` by summing products over all `k`-subsets (bitmask enumeration).
pub fn sigma_k_enumerate(values: &[f64], k: usize) -> f64 {
    let n = values.len();
    assert!(n < usize::BITS as usize, "enumeration dimension too large");
    if k > n {
        return 0.0;
    }
    (0usize..1 << n)
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| {
            (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| values[i])
                .product::<f64>()
        })
        .sum()
}

/// All of `σ_0 … σ_n` as coefficients of `Π(1 + κᵢ t)`, built one factor at
/// a time.
pub fn sigma_all_recurrence(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (i, &x) in values.iter().enumerate() {
        for j in (1..=i + 1).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

/// All of `σ_0 … σ_n`, by enumeration for `n ≤ 12` and by the recurrence
/// beyond.
pub fn sigma_all(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n > ENUMERATION_MAX_DIM {
        return sigma_all_recurrence(values);
    }
    let mut e = vec![0.0; n + 1];
    for mask in 0usize..1 << n {
        let prod: f64 = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| values[i])
            .product();
        e[mask.count_ones() as usize] += prod;
    }
    e
}

/// The `k`-th elementary symmetric function of `κ`.
pub fn sigma_k(kappa: &KappaVector, k: usize) -> Result<f64> {
    let n = kappa.n();
    if k > n {
        return Err(Error::domain(format!("sigma_k needs 0 <= k <= {n}, got {k}")));
    }
    Ok(if n > ENUMERATION_MAX_DIM {
        sigma_all_recurrence(kappa.as_slice())[k]
    } else {
        sigma_k_enumerate(kappa.as_slice(), k)
    })
}

/// `κ ∈ Γ_k`, i.e. `σ₁, …, σ_k` all strictly positive.
pub fn in_gamma_k(kappa: &KappaVector, k: usize) -> Result<bool> {
    let n = kappa.n();
    if k == 0 || k > n {
        return Err(Error::domain(format!("Gamma_k needs 1 <= k <= {n}, got {k}")));
    }
    let sig = sigma_all(kappa.as_slice());
    Ok(sig[1..=k].iter().all(|&s| s > 0.0))
}

pub(crate) fn in_gamma_slice(values: &[f64], k: usize) -> bool {
    let sig = sigma_all(values);
    sig[1..=k].iter().all(|&s| s > 0.0)
}

fn check_symmetric(h: &DMatrix<f64>) -> Result<()> {
    if !h.is_square() {
        return Err(Error::domain(format!(
            "expected a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let scale = h.amax().max(1.0);
    for i in 0..h.nrows() {
        for j in 0..i {
            if (h[(i, j)] - h[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::domain(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    h[(i, j)],
                    h[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// `σ_0 … σ_n` of a square matrix together with `[T_0] … [T_n]`, generated by
/// `[T_k] = σ_k I − [T_{k−1}] h` with `σ_k = tr([T_{k−1}] h) / k`.
///
/// Works for any square matrix, including the mixed Weingarten tensor
/// `h_i^j` of a graph in Cartesian coordinates (row `i`, column `j`).
pub fn newton_sequence(h: &DMatrix<f64>) -> (Vec<f64>, Vec<DMatrix<f64>>) {
    let n = h.nrows();
    let identity = DMatrix::<f64>::identity(n, n);
    let mut sigmas = Vec::with_capacity(n + 1);
    let mut tensors = Vec::with_capacity(n + 1);
    sigmas.push(1.0);
    tensors.push(identity.clone());
    for k in 1..=n {
        let prod = &tensors[k - 1] * h;
        let sigma = prod.trace() / k as f64;
        sigmas.push(sigma);
        tensors.push(&identity * sigma - prod);
    }
    (sigmas, tensors)
}

/// Entrywise magnitudes of the terms entering `[T_k] = σ_k I − [T_{k−1}] h`,
/// accumulated along the recursion: `M_0 = I`, `M_k = |σ_k| I + M_{k−1}|h|`.
///
/// Rounding error in `[T_k]` is a small multiple of `ε·M_k`, which makes
/// `M_k` the natural scale for relative comparisons when `h` has large
/// eigenvalues and the tensors themselves suffer cancellation.
pub fn newton_magnitudes(h: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let n = h.nrows();
    let (sigmas, _) = newton_sequence(h);
    let h_abs = h.abs();
    let identity = DMatrix::<f64>::identity(n, n);
    let mut out = Vec::with_capacity(n + 1);
    out.push(identity.clone());
    for k in 1..=n {
        let next = &identity * sigmas[k].abs() + &out[k - 1] * &h_abs;
        out.push(next);
    }
    out
}

/// `[T_k]` of a symmetric matrix; the zero tensor when `k > n`.
pub fn newton_tensor(h: &DMatrix<f64>, k: usize) -> Result<NewtonTensor> {
    check_symmetric(h)?;
    let n = h.nrows();
    let entries = if k > n {
        DMatrix::zeros(n, n)
    } else {
        let (_, mut tensors) = newton_sequence(h);
        tensors.swap_remove(k)
    };
    Ok(NewtonTensor { k, entries })
}

/// `Σ arctan κᵢ − Θ`.
pub fn slc_residual(kappa: &KappaVector, phase: &Phase) -> f64 {
    kappa.arctan_sum() - phase.theta()
}

fn alternating_parts(sig: &[f64]) -> (f64, f64) {
    let mut v1 = 0.0;
    let mut v2 = 0.0;
    for (k, &s) in sig.iter().enumerate() {
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            v1 += sign * s;
        } else {
            v2 += sign * s;
        }
    }
    (v1, v2)
}

/// `F(κ) = cosΘ Σ(−1)^k σ_{2k+1} − sinΘ Σ(−1)^k σ_{2k}`.
pub fn slc_algebraic(kappa: &KappaVector, phase: &Phase) -> f64 {
    let (v1, v2) = alternating_parts(&sigma_all(kappa.as_slice()));
    let (s, c) = phase.theta().sin_cos();
    c * v2 - s * v1
}

/// The same `F(κ)` written with `θ = Θ − (n−1)π/2`:
/// `cosθ Σ(−1)^k σ_{n−2k} − sinθ Σ(−1)^k σ_{n−2k−1}`.
pub fn slc_algebraic_shifted(kappa: &KappaVector, phase: &Phase) -> f64 {
    let sig = sigma_all(kappa.as_slice());
    let n = kappa.n();
    let (s, c) = phase.theta_small().sin_cos();
    let mut even = 0.0;
    let mut odd = 0.0;
    for k in 0..=n / 2 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        even += sign * sig[n - 2 * k];
        if 2 * k < n {
            odd += sign * sig[n - 2 * k - 1];
        }
    }
    c * even - s * odd
}

/// `V1`, `V2` and `V = cosΘ·V1 + sinΘ·V2`.
pub fn volume_factor(kappa: &KappaVector, phase: &Phase) -> VolumeFactor {
    let (v1, v2) = alternating_parts(&sigma_all(kappa.as_slice()));
    let (s, c) = phase.theta().sin_cos();
    VolumeFactor {
        v: c * v1 + s * v2,
        v1,
        v2,
    }
}

/// `F^{ij} = cosΘ Σ(−1)^k [T_{2k}] − sinΘ Σ(−1)^k [T_{2k−1}]`, the derivative
/// of `F` with respect to `h_{ij}`.
pub fn linearization(h: &DMatrix<f64>, phase: &Phase) -> Result<DMatrix<f64>> {
    check_symmetric(h)?;
    let n = h.nrows();
    if n != phase.n() {
        return Err(Error::domain(format!(
            "matrix dimension {n} does not match phase dimension {}",
            phase.n()
        )));
    }
    let (_, tensors) = newton_sequence(h);
    let (s, c) = phase.theta().sin_cos();
    let mut f = DMatrix::zeros(n, n);
    // even orders 0 ≤ 2k ≤ n−1
    for k in 0.. {
        let order = 2 * k;
        if order > n - 1 {
            break;
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        f += &tensors[order] * (c * sign);
    }
    // odd orders 1 ≤ 2k−1 ≤ n−1
    for k in 1.. {
        let order = 2 * k - 1;
        if order > n - 1 {
            break;
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        f -= &tensors[order] * (s * sign);
    }
    Ok(f)
}

/// Lift metric `G = I + h²` in an orthonormal frame.
pub fn lift_metric(h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = h.nrows();
    DMatrix::identity(n, n) + h * h
}

/// Draws `κ` with `Σ arctan κᵢ = Θ`: angles `θ₁ … θ_{n−1}` uniform, `θₙ` fixed
/// by the constraint, proposals rejected until `θₙ ∈ (−π/2, π/2)`.
pub fn make_on_phase<R: Rng + ?Sized>(n: usize, phase: &Phase, rng: &mut R) -> Result<KappaVector> {
    if phase.n() != n {
        return Err(Error::domain(format!(
            "phase built for n = {}, sampling n = {n}",
            phase.n()
        )));
    }
    let angles = sample_angles(n, phase.theta(), -FRAC_PI_2, FRAC_PI_2, rng)?;
    KappaVector::from_unsorted(angles.iter().map(|t| t.tan()).collect())
}

/// Uniform draw from `{t ∈ [lo, hi)ⁿ : Σ t = total}` (all entries also strictly
/// inside `(−π/2, π/2)`) by rejection on the last coordinate.
///
/// Proposals come from `[lo, hi)` clipped to the projection of the slice,
/// which contains every feasible point, so the accepted draws stay uniform.
pub(crate) fn sample_angles<R: Rng + ?Sized>(
    n: usize,
    total: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let rest = (n - 1) as f64;
    let prop_lo = lo.max(total - rest * hi);
    let prop_hi = hi.min(total - rest * lo);
    if !(prop_lo < prop_hi) {
        return Err(Error::Sampling(format!(
            "no angles in [{lo}, {hi}) can sum to {total}"
        )));
    }
    let inside = |t: f64| t >= lo && t < hi && t.abs() < FRAC_PI_2;
    let mut angles = vec![0.0; n];
    for _ in 0..MAX_REJECTION_DRAWS {
        let mut sum = 0.0;
        for a in angles.iter_mut().take(n - 1) {
            *a = rng.random_range(prop_lo..prop_hi);
            sum += *a;
        }
        let last = total - sum;
        angles[n - 1] = last;
        if angles.iter().all(|&t| inside(t)) {
            return Ok(angles);
        }
    }
    Err(Error::Sampling(format!(
        "no angles in [{lo}, {hi}) summing to {total} after {MAX_REJECTION_DRAWS} draws"
    )))
}

/// `min_{1≤i≤n−1} (κᵢ + (n−i)κₙ)`; nonnegative on `Γ_{n−1}`.
pub fn ordering_margin(kappa: &KappaVector) -> f64 {
    let v = kappa.as_slice();
    let n = v.len();
    let last = v[n - 1];
    (0..n - 1)
        .map(|i| v[i] + (n - 1 - i) as f64 * last)
        .fold(f64::INFINITY, f64::min)
}

/// `binom(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Smallest slack of `[T_{k−1}]^{ii} ≤ binom(n−1, k−1)·√(G^{ii})·√Π(1+κⱼ²)` over
/// `i`, in the diagonal frame `h = diag(κ)`.
///
/// The constant is not a sharp one: each monomial of `[T_{k−1}]^{ii}` is
/// bounded by `Π_{j≠i} √(1+κⱼ²)`, and there are `binom(n−1, k−1)` of them.
pub fn newton_diagonal_bound_slack(kappa: &KappaVector, k: usize) -> Result<f64> {
    let n = kappa.n();
    if k == 0 || k > n {
        return Err(Error::domain(format!("order k must be in 1..={n}, got {k}")));
    }
    let v = kappa.lift_volume();
    let values = kappa.as_slice();
    let constant = binomial(n - 1, k - 1);
    let mut slack = f64::INFINITY;
    for i in 0..n {
        let others: Vec<f64> = values
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &x)| x)
            .collect();
        let entry = sigma_all(&others)[k - 1];
        let bound = constant * v / (1.0 + values[i] * values[i]).sqrt();
        slack = slack.min(bound - entry);
    }
    Ok(slack)
}

/// Reference evaluations that deliberately avoid the recursions above.
pub mod reference {
    use nalgebra::DMatrix;

    /// `[T_k]_i^j = (1/k!) δ^{i i₁…i_k}_{j j₁…j_k} h_{j₁}^{i₁} ⋯ h_{j_k}^{i_k}`.
    ///
    /// Contracting the generalized Kronecker delta against the `h` factors
    /// one column at a time turns the inner sum over `j₁ … j_k` into the
    /// determinant of the `(k+1)×(k+1)` matrix with first column
    /// `δ^{a_p}_j` and remaining columns `h[a_p][a_q]`, where
    /// `(a_0, …, a_k) = (i, i₁, …, i_k)`. The outer sum runs over increasing
    /// `i₁ < … < i_k`, which absorbs the `1/k!`.
    pub fn newton_tensor_kronecker(h: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
        let n = h.nrows();
        let mut out = DMatrix::zeros(n, n);
        if k > n {
            return out;
        }
        for i in 0..n {
            let others: Vec<usize> = (0..n).filter(|&a| a != i).collect();
            for subset in subsets(&others, k) {
                let mut rows = Vec::with_capacity(k + 1);
                rows.push(i);
                rows.extend_from_slice(&subset);
                for j in 0..n {
                    let m = DMatrix::from_fn(k + 1, k + 1, |p, q| {
                        if q == 0 {
                            if rows[p] == j {
                                1.0
                            } else {
                                0.0
                            }
                        } else {
                            h[(rows[p], rows[q])]
                        }
                    });
                    out[(i, j)] += m.determinant();
                }
            }
        }
        out
    }

    /// Literal generalized-Kronecker-delta sum over all ordered index tuples.
    /// Exponential; intended for `n ≤ 3`.
    pub fn newton_tensor_brute_force(h: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
        let n = h.nrows();
        let mut out = DMatrix::zeros(n, n);
        if k > n {
            return out;
        }
        let tuples = tuples(n, k);
        let factorial: f64 = (1..=k).map(|x| x as f64).product();
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for upper in &tuples {
                    for lower in &tuples {
                        let mut up = vec![i];
                        up.extend_from_slice(upper);
                        let mut lo = vec![j];
                        lo.extend_from_slice(lower);
                        let d = kronecker_delta(&up, &lo);
                        if d == 0.0 {
                            continue;
                        }
                        let prod: f64 = (0..k).map(|m| h[(lower[m], upper[m])]).product();
                        acc += d * prod;
                    }
                }
                out[(i, j)] = acc / factorial;
            }
        }
        out
    }

    /// `δ^{a}_{b}`: the sign of the permutation taking `b` to `a` when both are
    /// tuples of distinct indices with the same entries, zero otherwise.
    pub fn kronecker_delta(upper: &[usize], lower: &[usize]) -> f64 {
        let m = upper.len();
        for p in 0..m {
            for q in 0..p {
                if upper[p] == upper[q] || lower[p] == lower[q] {
                    return 0.0;
                }
            }
        }
        let mut perm = Vec::with_capacity(m);
        for &b in lower {
            match upper.iter().position(|&a| a == b) {
                Some(pos) => perm.push(pos),
                None => return 0.0,
            }
        }
        let mut sign = 1.0;
        let mut seen = vec![false; m];
        for start in 0..m {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut cur = start;
            while !seen[cur] {
                seen[cur] = true;
                cur = perm[cur];
                len += 1;
            }
            if len % 2 == 0 {
                sign = -sign;
            }
        }
        sign
    }

    fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(k);
        fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for idx in start..items.len() {
                cur.push(items[idx]);
                rec(items, k, idx + 1, cur, out);
                cur.pop();
            }
        }
        rec(items, k, 0, &mut cur, &mut out);
        out
    }

    fn tuples(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for _ in 0..k {
            out = out
                .into_iter()
                .flat_map(|t| {
                    (0..n).map(move |x| {
                        let mut t = t.clone();
                        t.push(x);
                        t
                    })
                })
                .collect();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn kv(v: &[f64]) -> KappaVector {
        KappaVector::from_unsorted(v.to_vec()).unwrap()
    }

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(v))
    }

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn kappa_vector_rejects_unsorted_and_nonfinite() {
        assert!(KappaVector::new(vec![1.0, 2.0]).is_err());
        assert!(KappaVector::new(vec![2.0, f64::NAN]).is_err());
        assert!(KappaVector::new(vec![1.0]).is_err());
        assert_eq!(kv(&[-1.0, 3.0, 0.5]).as_slice(), &[3.0, 0.5, -1.0]);
    }

    #[test]
    fn phase_bounds_and_shift() {
        assert!(Phase::new(PI, 2).is_err());
        assert!(Phase::new(-PI, 2).is_err());
        let p = Phase::new(FRAC_PI_2, 3).unwrap();
        assert!((p.theta_small() - (FRAC_PI_2 - PI)).abs() < 1e-15);
        assert!(Phase::critical(3).unwrap().is_critical());
    }

    #[test]
    fn sigma_examples() {
        let k = kv(&[0.3, -1.2, 2.5]);
        let expected = 0.3 * -1.2 + 0.3 * 2.5 + -1.2 * 2.5;
        assert!((sigma_k(&k, 2).unwrap() - expected).abs() < 1e-14);
        assert_eq!(sigma_k(&kv(&[1.0, 1.0, 1.0]), 0).unwrap(), 1.0);
        assert!((sigma_k(&kv(&[2.0, 2.0, -0.75]), 2).unwrap() - 1.0).abs() < 1e-14);
        assert!(sigma_k(&k, 4).is_err());
    }

    #[test]
    fn sigma_paths_agree_up_to_twelve() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 2..=12 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
            let rec = sigma_all_recurrence(&v);
            for k in 0..=n {
                let e = sigma_k_enumerate(&v, k);
                assert!((e - rec[k]).abs() <= 1e-10 * (1.0 + e.abs()), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn sigma_large_dimension_uses_recurrence() {
        let k = KappaVector::new(vec![1.0; 20]).unwrap();
        assert!((sigma_k(&k, 3).unwrap() - binomial(20, 3)).abs() < 1e-9);
    }

    #[test]
    fn gamma_membership() {
        assert!(in_gamma_k(&kv(&[1.0, 1.0, 0.0]), 2).unwrap());
        assert!(!in_gamma_k(&kv(&[1.0, -1.0]), 1).unwrap());
        assert!(in_gamma_k(&kv(&[2.0, 2.0, -0.75]), 2).unwrap());
        assert!(in_gamma_k(&kv(&[1.0, 1.0]), 0).is_err());
    }

    #[test]
    fn newton_tensor_examples() {
        let h = diag(&[0.5, -1.0, 2.0]);
        let t1 = newton_tensor(&h, 1).unwrap().entries;
        assert!((t1 - diag(&[1.0, 2.5, -0.5])).amax() < 1e-14);
        assert_eq!(newton_tensor(&h, 4).unwrap().entries, DMatrix::zeros(3, 3));
        let t2 = newton_tensor(&diag(&[1.0, 1.0, 0.0]), 2).unwrap().entries;
        assert!((t2 - diag(&[0.0, 0.0, 1.0])).amax() < 1e-14);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(newton_tensor(&bad, 1).is_err());
    }

    #[test]
    fn newton_recursion_matches_brute_force_kronecker_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let h = random_symmetric(3, &mut rng);
            for k in 0..=4 {
                let rec = newton_tensor(&h, k).unwrap().entries;
                let brute = reference::newton_tensor_brute_force(&h, k);
                let fast = reference::newton_tensor_kronecker(&h, k);
                assert!((&rec - &brute).amax() < 1e-10, "k={k}");
                assert!((&fast - &brute).amax() < 1e-10, "k={k}");
            }
        }
    }

    #[test]
    fn kronecker_delta_signs() {
        assert_eq!(reference::kronecker_delta(&[0, 1], &[0, 1]), 1.0);
        assert_eq!(reference::kronecker_delta(&[0, 1], &[1, 0]), -1.0);
        assert_eq!(reference::kronecker_delta(&[0, 0], &[0, 0]), 0.0);
        assert_eq!(reference::kronecker_delta(&[0, 1, 2], &[1, 2, 0]), 1.0);
        assert_eq!(reference::kronecker_delta(&[0, 1], &[0, 2]), 0.0);
    }

    #[test]
    fn residual_examples() {
        let p2 = Phase::new(FRAC_PI_2, 2).unwrap();
        assert!(slc_residual(&kv(&[1.0, 1.0]), &p2).abs() < 1e-15);
        let zero = Phase::new(0.0, 4).unwrap();
        assert_eq!(slc_residual(&kv(&[0.0; 4]), &zero), 0.0);
        let p3 = Phase::new(FRAC_PI_2, 3).unwrap();
        assert!(slc_residual(&kv(&[2.0, 2.0, -0.75]), &p3).abs() < 1e-12);
    }

    #[test]
    fn algebraic_examples() {
        let p2 = Phase::new(FRAC_PI_2, 2).unwrap();
        assert!(slc_algebraic(&kv(&[1.0, 1.0]), &p2).abs() < 1e-15);
        assert!(slc_algebraic_shifted(&kv(&[1.0, 1.0]), &p2).abs() < 1e-15);
        let zero = Phase::new(0.0, 3).unwrap();
        assert_eq!(slc_algebraic(&kv(&[0.0; 3]), &zero), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..=6 {
            let phase = Phase::new(0.37 * n as f64, n).unwrap();
            for _ in 0..50 {
                let k = make_on_phase(n, &phase, &mut rng).unwrap();
                let scale = sigma_all(k.as_slice()).iter().map(|s| s.abs()).sum::<f64>();
                assert!(slc_algebraic(&k, &phase).abs() < 1e-9 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn volume_examples() {
        let p2 = Phase::new(FRAC_PI_2, 2).unwrap();
        let vf = volume_factor(&kv(&[1.0, 1.0]), &p2);
        assert!(vf.v1.abs() < 1e-15 && (vf.v2 - 2.0).abs() < 1e-15 && (vf.v - 2.0).abs() < 1e-15);
        let zero = Phase::new(0.0, 2).unwrap();
        assert_eq!(volume_factor(&kv(&[0.0, 0.0]), &zero).v, 1.0);
    }

    #[test]
    fn linearization_examples() {
        let p2 = Phase::new(FRAC_PI_2, 2).unwrap();
        let h = diag(&[1.0, 1.0]);
        let f = linearization(&h, &p2).unwrap();
        assert!((&f - diag(&[1.0, 1.0])).amax() < 1e-15);
        let g = lift_metric(&h);
        let v = volume_factor(&kv(&[1.0, 1.0]), &p2).v;
        let g_inv = g.clone().try_inverse().unwrap();
        assert!((&f / v - g_inv).amax() < 1e-15);

        let zero = Phase::new(0.0, 3).unwrap();
        let f0 = linearization(&DMatrix::zeros(3, 3), &zero).unwrap();
        assert!((f0 - DMatrix::<f64>::identity(3, 3)).amax() < 1e-15);
    }

    #[test]
    fn linearization_times_lift_metric_is_volume() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 3..=5 {
            let phase = Phase::new((n as f64 - 2.0) * FRAC_PI_2 + 0.2, n).unwrap();
            for _ in 0..30 {
                let k = make_on_phase(n, &phase, &mut rng).unwrap();
                let h = diag(k.as_slice());
                let f = linearization(&h, &phase).unwrap();
                let v = volume_factor(&k, &phase).v;
                let g = lift_metric(&h);
                let prod = &f * &g;
                let err = (prod - DMatrix::<f64>::identity(n, n) * v).amax();
                let abs_sum = newton_magnitudes(&h).iter().fold(DMatrix::zeros(n, n), |acc, t| acc + t);
                let scale = (abs_sum * g.abs()).amax();
                assert!(err < 1e-9 * scale, "err = {err}, scale = {scale}");
                assert!(f.symmetric_eigenvalues().min() > 0.0);
            }
        }
    }

    #[test]
    fn make_on_phase_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p2 = Phase::new(FRAC_PI_2, 2).unwrap();
        for _ in 0..100 {
            let k = make_on_phase(2, &p2, &mut rng).unwrap();
            assert!(k.max() >= 1.0);
            assert!((k.min() - 1.0 / k.max()).abs() < 1e-9 * k.max());
            assert!(slc_residual(&k, &p2).abs() < 1e-12);
        }
        let crit = Phase::critical(3).unwrap();
        for _ in 0..100 {
            let k = make_on_phase(3, &crit, &mut rng).unwrap();
            assert!(in_gamma_k(&k, 2).unwrap());
        }
        let near_max = Phase::new(1.5 * PI - 0.01, 3).unwrap();
        for _ in 0..100 {
            let k = make_on_phase(3, &near_max, &mut rng).unwrap();
            assert!(k.min() > 0.0);
            assert!(slc_residual(&k, &near_max).abs() < 1e-12);
        }
    }

    #[test]
    fn ordering_margin_on_small_example() {
        // κ = (2, 2, −3/4): κ₁ + 2κ₃ = 0.5, κ₂ + κ₃ = 1.25
        assert!((ordering_margin(&kv(&[2.0, 2.0, -0.75])) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn newton_bound_holds_at_unit_curvatures() {
        let k = kv(&[1.0, 1.0, 1.0]);
        for order in 1..=3 {
            assert!(newton_diagonal_bound_slack(&k, order).unwrap() >= 0.0);
        }
    }

    #[test]
    fn arctan_examples_agree_with_quarter_turns() {
        assert!((kv(&[1.0, 1.0]).arctan_sum() - 2.0 * FRAC_PI_4).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn product_identity_holds_off_phase(v in prop::collection::vec(-5.0f64..5.0, 2..7)) {
            let k = KappaVector::from_unsorted(v).unwrap();
            let phase = Phase::new(0.0, k.n()).unwrap();
            let vf = volume_factor(&k, &phase);
            let prod: f64 = k.as_slice().iter().map(|x| 1.0 + x * x).product();
            prop_assert!((vf.v1 * vf.v1 + vf.v2 * vf.v2 - prod).abs() <= 1e-9 * prod);
        }

        #[test]
        fn newton_tensors_are_symmetric(seed in any::<u64>(), n in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_symmetric(n, &mut rng);
            for k in 0..=n {
                let t = newton_tensor(&h, k).unwrap().entries;
                prop_assert!((&t - t.transpose()).amax() <= 1e-10 * t.amax().max(1.0));
            }
        }
    }
}
