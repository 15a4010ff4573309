//! The two-dimensional reduction to optimal transport. For `0 < Θ < π/2` a
//! solution `u` is a potential for the cost `c(x,y) = −√(tan²Θ − |x−y|²)`
//! between densities `f = 1/cos²Θ` and `g = 1`, with transport map
//! `T(x) = tanΘ·Du/W + x`. The cost fails the MTW condition: the tensor
//! below is strictly negative.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::GraphPatch;
use crate::output::fmt17;
use crate::symfunc::Phase;

pub type Point = [f64; 2];

fn require_plane(patch: &GraphPatch) -> Result<()> {
    if patch.n() != 2 {
        return Err(Error::domain(format!("the transport reduction is two-dimensional, got n = {}", patch.n())));
    }
    patch.require_extent(3, "the transport reduction")
}

fn require_acute(phase: &Phase) -> Result<()> {
    let t = phase.theta();
    if !(t > 0.0 && t < FRAC_PI_2) {
        return Err(Error::domain(format!("transport form needs 0 < Θ < π/2, got {t}")));
    }
    Ok(())
}

/// `det(D²u + W cotΘ g) − W⁴/sin²Θ` on the grid, NaN on the ring.
pub fn det_form_residual(patch: &GraphPatch, phase: &Phase) -> Result<Vec<f64>> {
    require_plane(patch)?;
    let (s, c) = phase.theta().sin_cos();
    if s.abs() < 1e-12 {
        return Err(Error::domain("det form needs sin Θ ≠ 0"));
    }
    let cot = c / s;
    let mut out = vec![f64::NAN; patch.len()];
    for f in patch.interior_indices() {
        let j = patch.jet(f);
        let p = j.grad;
        let w = j.w();
        let m = |a: usize, b: usize| j.hess[a][b] + w * cot * (f64::from(u8::from(a == b)) + p[a] * p[b]);
        let det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
        out[f] = det - w.powi(4) / (s * s);
    }
    Ok(out)
}

/// `−√(tan²Θ − |x−y|²)`, or `None` when `|x − y| ≥ tanΘ`.
pub fn cost(x: Point, y: Point, phase: &Phase) -> Option<f64> {
    let t2 = phase.theta().tan().powi(2);
    let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
    (d2 < t2).then(|| -(t2 - d2).sqrt())
}

/// `T(x) = tanΘ·p/W + x` for a gradient `p = Du(x)`.
pub fn map_from_gradient(x: Point, p: Point, phase: &Phase) -> Point {
    let w = (1.0 + p[0] * p[0] + p[1] * p[1]).sqrt();
    let t = phase.theta().tan();
    [x[0] + t * p[0] / w, x[1] + t * p[1] / w]
}

/// Transport map on a grid together with its Jacobian determinant.
#[derive(Clone, Debug)]
pub struct TransportMap {
    /// `T(x)` per grid index (`None` on the ring).
    pub map: Vec<Option<Point>>,
    /// `det DT` by central differences of `T` (NaN within two rings).
    pub jacobian: Vec<f64>,
}

impl TransportMap {
    /// `|det DT − 1/cos²Θ|` maximized over points inside the box `|x − center|∞ ≤ half`.
    pub fn max_measure_defect(&self, patch: &GraphPatch, phase: &Phase, center: Point, half: f64) -> f64 {
        let target = 1.0 / phase.theta().cos().powi(2);
        (0..patch.len())
            .filter(|&f| !self.jacobian[f].is_nan() && within(&patch.coords(f), center, half))
            .map(|f| (self.jacobian[f] - target).abs())
            .fold(0.0, f64::max)
    }

    /// Bilinear interpolation of `T` at `x`, using cells whose corners all
    /// carry a map value.
    pub fn interpolate(&self, patch: &GraphPatch, x: Point) -> Option<Point> {
        let h = patch.spacing();
        let o = patch.origin();
        let e = patch.extents();
        let gx = (x[0] - o[0]) / h;
        let gy = (x[1] - o[1]) / h;
        if gx < 0.0 || gy < 0.0 {
            return None;
        }
        let (i, j) = ((gx.floor() as usize).min(e[0] - 2), (gy.floor() as usize).min(e[1] - 2));
        let (a, b) = (gx - i as f64, gy - j as f64);
        if a > 1.0 || b > 1.0 {
            return None;
        }
        let at = |di: usize, dj: usize| self.map[patch.flat_index(&[i + di, j + dj])];
        let (p00, p10, p01, p11) = (at(0, 0)?, at(1, 0)?, at(0, 1)?, at(1, 1)?);
        let mix = |k: usize| {
            (1.0 - a) * (1.0 - b) * p00[k] + a * (1.0 - b) * p10[k] + (1.0 - a) * b * p01[k] + a * b * p11[k]
        };
        Some([mix(0), mix(1)])
    }
    /// `max |T(x) − reference(x)|∞` over grid points in the box.
    pub fn max_deviation(&self, patch: &GraphPatch, center: Point, half: f64, reference: impl Fn(Point) -> Point) -> f64 {
        (0..patch.len())
            .filter_map(|f| {
                let x = patch.coords(f);
                let y = self.map[f]?;
                within(&x, center, half).then(|| {
                    let r = reference([x[0], x[1]]);
                    (y[0] - r[0]).abs().max((y[1] - r[1]).abs())
                })
            })
            .fold(0.0, f64::max)
    }
}

/// Centers of a `per_side × per_side` cell grid on `[−half, half]²`.
pub fn cell_centers(half: f64, per_side: usize) -> Vec<Point> {
    let h = 2.0 * half / per_side as f64;
    let c = |i: usize| -half + h * (i as f64 + 0.5);
    (0..per_side).flat_map(|i| (0..per_side).map(move |j| [c(i), c(j)])).collect()
}

/// Discrete transport from `sources` to their images under `T`, solved
/// exactly; `agreement` is the fraction of sources the oracle sends to
/// their own image.
#[derive(Clone, Debug)]
pub struct ConsistencyReport {
    pub instance: OtInstance,
    pub assignment: Assignment,
    pub agreement: f64,
}

pub fn assignment_consistency(
    patch: &GraphPatch,
    map: &TransportMap,
    phase: &Phase,
    sources: Vec<Point>,
) -> Result<ConsistencyReport> {
    let targets = sources
        .iter()
        .map(|&x| {
            map.interpolate(patch, x)
                .ok_or_else(|| Error::domain(format!("no map value near ({}, {})", x[0], x[1])))
        })
        .collect::<Result<Vec<_>>>()?;
    let instance = OtInstance::new(*phase, sources, targets)?;
    let assignment = discrete_ot_oracle(&instance)?;
    let hits = assignment.target.iter().enumerate().filter(|(i, &j)| *i == j).count();
    let agreement = hits as f64 / assignment.target.len() as f64;
    Ok(ConsistencyReport {
        instance,
        assignment,
        agreement,
    })
}

fn within(x: &[f64], center: Point, half: f64) -> bool {
    (x[0] - center[0]).abs() <= half + 1e-12 && (x[1] - center[1]).abs() <= half + 1e-12
}

fn gradient_fourth_order(patch: &GraphPatch, f: usize) -> Vec<f64> {
    let u = patch.u();
    let h = patch.spacing();
    let multi = patch.multi_index(f);
    patch
        .strides()
        .iter()
        .zip(patch.extents())
        .zip(&multi)
        .map(|((&s, &e), &i)| {
            let at = |k: isize| u[(f as isize + k * s as isize) as usize];
            if i >= 2 && i + 2 < e {
                (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * h)
            } else if i == 1 {
                (-3.0 * at(-1) - 10.0 * at(0) + 18.0 * at(1) - 6.0 * at(2) + at(3)) / (12.0 * h)
            } else {
                (3.0 * at(1) + 10.0 * at(0) - 18.0 * at(-1) + 6.0 * at(-2) - at(-3)) / (12.0 * h)
            }
        })
        .collect()
}

/// `T_u` from fourth-order gradients (off-centre next to the boundary ring
/// when every axis has at least five points), and `det DT_u`.
pub fn ot_map(patch: &GraphPatch, phase: &Phase) -> Result<TransportMap> {
    require_plane(patch)?;
    require_acute(phase)?;
    let wide = patch.extents().iter().all(|&e| e >= 5);
    let mut map = vec![None; patch.len()];
    for f in patch.interior_indices() {
        let x = patch.coords(f);
        let p = if wide { gradient_fourth_order(patch, f) } else { patch.gradient(f) };
        map[f] = Some(map_from_gradient([x[0], x[1]], [p[0], p[1]], phase));
    }
    let h = patch.spacing();
    let s = patch.strides();
    let mut jacobian = vec![f64::NAN; patch.len()];
    for f in (0..patch.len()).filter(|&f| patch.depth(f) >= 2) {
        let d = |axis: usize, k: usize| {
            let plus = map[f + s[axis]].expect("depth >= 2 neighbour has a map value");
            let minus = map[f - s[axis]].expect("depth >= 2 neighbour has a map value");
            (plus[k] - minus[k]) / (2.0 * h)
        };
        jacobian[f] = d(0, 0) * d(1, 1) - d(0, 1) * d(1, 0);
    }
    Ok(TransportMap { map, jacobian })
}

/// Per grid point, whether `D²u + cotΘ·W·g ≥ −1e−8` (`None` on the ring).
pub fn c_convexity_check(patch: &GraphPatch, phase: &Phase) -> Result<Vec<Option<bool>>> {
    require_plane(patch)?;
    require_acute(phase)?;
    let cot = 1.0 / phase.theta().tan();
    let mut out = vec![None; patch.len()];
    for f in patch.interior_indices() {
        let j = patch.jet(f);
        let w = j.w();
        let p = j.grad;
        let a = j.hess[0][0] + cot * w * (1.0 + p[0] * p[0]);
        let b = j.hess[0][1] + cot * w * p[0] * p[1];
        let c = j.hess[1][1] + cot * w * (1.0 + p[1] * p[1]);
        let min = 0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt();
        out[f] = Some(min >= -1e-8);
    }
    Ok(out)
}

/// Equal-mass discrete transport problem.
#[derive(Clone, Debug, PartialEq)]
pub struct OtInstance {
    pub phase: Phase,
    pub sources: Vec<Point>,
    pub targets: Vec<Point>,
}

impl OtInstance {
    pub fn new(phase: Phase, sources: Vec<Point>, targets: Vec<Point>) -> Result<Self> {
        if phase.n() != 2 {
            return Err(Error::domain("transport instances are planar"));
        }
        require_acute(&phase)?;
        if sources.len() != targets.len() || sources.is_empty() {
            return Err(Error::domain(format!(
                "need equally many sources and targets, got {} and {}",
                sources.len(),
                targets.len()
            )));
        }
        Ok(Self { phase, sources, targets })
    }

    /// Source density `f = 1/cos²Θ`.
    pub fn source_density(&self) -> f64 {
        1.0 / self.phase.theta().cos().powi(2)
    }

    /// Target density `g = 1`.
    pub fn target_density(&self) -> f64 {
        1.0
    }

    /// Relative mismatch of `f·(source area)` and `g·(target area)`.
    pub fn mass_balance_error(&self, source_area: f64, target_area: f64) -> f64 {
        let a = self.source_density() * source_area;
        let b = self.target_density() * target_area;
        (a - b).abs() / a.abs().max(b.abs())
    }

    pub fn cost_of(&self, assignment: &[usize]) -> Option<f64> {
        assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| cost(self.sources[i], self.targets[j], &self.phase))
            .sum()
    }

    /// `source_x, source_y, target_x, target_y` for a given assignment.
    pub fn write_csv<W: Write>(&self, assignment: &[usize], mut out: W) -> std::io::Result<()> {
        writeln!(out, "source_x,source_y,target_x,target_y")?;
        for (i, &j) in assignment.iter().enumerate() {
            let (s, t) = (self.sources[i], self.targets[j]);
            writeln!(out, "{},{},{},{}", fmt17(s[0]), fmt17(s[1]), fmt17(t[0]), fmt17(t[1]))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `target[i]` receives source `i`.
    pub target: Vec<usize>,
    pub total_cost: f64,
}

/// Cost assigned to infeasible pairs inside the Hungarian solver.
const INFEASIBLE_COST: f64 = 1e9;

/// Exact min-cost assignment (Hungarian method with potentials, O(N³)).
pub fn discrete_ot_oracle(instance: &OtInstance) -> Result<Assignment> {
    let n = instance.sources.len();
    let c = |i: usize, j: usize| cost(instance.sources[i], instance.targets[j], &instance.phase).unwrap_or(INFEASIBLE_COST);
    // 1-based rows/columns; column 0 is a sentinel
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut target = vec![0; n];
    for j in 1..=n {
        target[row_of[j] - 1] = j - 1;
    }
    let mut total_cost = 0.0;
    for (i, &j) in target.iter().enumerate() {
        match cost(instance.sources[i], instance.targets[j], &instance.phase) {
            Some(v) => total_cost += v,
            None => {
                return Err(Error::InfeasiblePair {
                    source_index: i,
                    target_index: j,
                })
            }
        }
    }
    Ok(Assignment { target, total_cost })
}

/// `A_{ij}(p) = −cotΘ·W(p)·(δ_{ij} + pᵢpⱼ)`, the lower bound on `D²u` in
/// the c-convexity condition.
pub fn cost_hessian_matrix(p: Point, phase: &Phase) -> [[f64; 2]; 2] {
    let cot = 1.0 / phase.theta().tan();
    let w = (1.0 + p[0] * p[0] + p[1] * p[1]).sqrt();
    let mut a = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            a[i][j] = -cot * w * (f64::from(u8::from(i == j)) + p[i] * p[j]);
        }
    }
    a
}

/// `D²_{p_k p_l} A_{ij} ξᵢξⱼν_kν_l = −cotΘ (g_{ij}ξᵢξⱼ)(g^{kl}ν_kν_l)/W` for
/// `ξ ⊥ ν`.
pub fn mtw_tensor(p: Point, xi: Point, nu: Point, phase: &Phase) -> Result<f64> {
    let dot = |a: Point, b: Point| a[0] * b[0] + a[1] * b[1];
    let (nx, nn) = (dot(xi, xi).sqrt(), dot(nu, nu).sqrt());
    if nx == 0.0 || nn == 0.0 {
        return Err(Error::domain("MTW directions must be nonzero"));
    }
    if dot(xi, nu).abs() > 1e-12 * nx * nn {
        return Err(Error::domain("MTW tensor is evaluated on orthogonal directions only"));
    }
    let w2 = 1.0 + dot(p, p);
    let g_xi = dot(xi, xi) + dot(p, xi).powi(2);
    let ginv_nu = dot(nu, nu) - dot(p, nu).powi(2) / w2;
    Ok(-g_xi * ginv_nu / (phase.theta().tan() * w2.sqrt()))
}

/// Fourth-order central second difference of `s ↦ A(p + sν)(ξ, ξ)`.
pub fn mtw_finite_difference(p: Point, xi: Point, nu: Point, phase: &Phase, step: f64) -> f64 {
    let form = |s: f64| {
        let a = cost_hessian_matrix([p[0] + s * nu[0], p[1] + s * nu[1]], phase);
        (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| a[i][j] * xi[i] * xi[j]).sum::<f64>()
    };
    (-form(2.0 * step) + 16.0 * form(step) - 30.0 * form(0.0) + 16.0 * form(-step) - form(-2.0 * step))
        / (12.0 * step * step)
}

/// Random gradient and orthogonal pair: `p ∈ [−2,2]²`, `ξ` uniform on the
/// circle and `ν = r·ξ^⊥` with `r ∈ [0.5, 2]`.
pub fn random_mtw_arguments<R: Rng + ?Sized>(rng: &mut R) -> (Point, Point, Point) {
    let p = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let xi = [angle.cos(), angle.sin()];
    let r = rng.random_range(0.5..2.0);
    (p, xi, [-r * xi[1], r * xi[0]])
}

/// `(Θ, min 𝒜)` over random arguments for each phase.
pub fn mtw_scan<R: Rng + ?Sized>(thetas: &[f64], trials: usize, rng: &mut R) -> Result<Vec<(f64, f64)>> {
    thetas
        .iter()
        .map(|&t| {
            let phase = Phase::new(t, 2)?;
            require_acute(&phase)?;
            let mut worst = f64::NEG_INFINITY;
            for _ in 0..trials {
                let (p, xi, nu) = random_mtw_arguments(rng);
                worst = worst.max(mtw_tensor(p, xi, nu, &phase)?);
            }
            Ok((t, worst))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::solver::{max_abs, sphere_cap_reference};

    fn phase(t: f64) -> Phase {
        Phase::new(t, 2).unwrap()
    }

    #[test]
    fn cost_examples() {
        assert!((cost([0.0, 0.0], [0.0, 0.0], &phase(FRAC_PI_4)).unwrap() + 1.0).abs() < 1e-15);
        assert!((cost([0.0, 0.0], [1.0, 0.0], &phase(FRAC_PI_3)).unwrap() + 2f64.sqrt()).abs() < 1e-14);
        let near = cost([0.0, 0.0], [1.0 - 1e-9, 0.0], &phase(FRAC_PI_4)).unwrap();
        assert!(near < 0.0 && near > -1e-4);
        assert!(cost([0.0, 0.0], [2.0, 0.0], &phase(FRAC_PI_4)).is_none());
    }

    #[test]
    fn det_form_examples() {
        let flat = GraphPatch::centered(&[0.0, 0.0], 0.25, 0.125, |_| 0.0).unwrap();
        let r = det_form_residual(&flat, &phase(FRAC_PI_2)).unwrap();
        assert!(r.iter().filter(|v| !v.is_nan()).all(|&v| (v + 1.0).abs() < 1e-15));
        assert!(det_form_residual(&flat, &phase(0.0)).is_err());

        let mut prev = f64::INFINITY;
        for h in [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0] {
            let cap = sphere_cap_reference(1.0, &[0.0, 0.0], 0.4, h).unwrap();
            let e = max_abs(&det_form_residual(&cap, &phase(FRAC_PI_2)).unwrap());
            assert!(e < prev / 3.0);
            prev = e;
        }
    }

    #[test]
    fn map_examples() {
        let p = phase(FRAC_PI_3);
        let flat = GraphPatch::centered(&[0.0, 0.0], 0.25, 0.125, |_| 7.0).unwrap();
        let t = ot_map(&flat, &p).unwrap();
        for f in flat.interior_indices() {
            let x = flat.coords(f);
            assert_eq!(t.map[f].unwrap(), [x[0], x[1]]);
        }
        // Du/W = x/R on the cap
        let r = 3f64.sqrt();
        let x = [0.1, -0.05];
        let n2 = x[0] * x[0] + x[1] * x[1];
        let du = [x[0] / (r * r - n2).sqrt(), x[1] / (r * r - n2).sqrt()];
        let y = map_from_gradient(x, du, &p);
        assert!((y[0] - 0.2).abs() < 1e-15 && (y[1] + 0.1).abs() < 1e-15);
        assert!(ot_map(&flat, &phase(FRAC_PI_2 + 0.1)).is_err());
    }

    #[test]
    fn cap_map_is_dilation() {
        let p = phase(FRAC_PI_3);
        let cap = sphere_cap_reference(3f64.sqrt(), &[0.0, 0.0], 0.4, 1.0 / 128.0).unwrap();
        let t = ot_map(&cap, &p).unwrap();
        let worst = t.max_deviation(&cap, [0.0, 0.0], 0.4, |x| [2.0 * x[0], 2.0 * x[1]]);
        assert!(worst < 1e-6, "{worst}");
        assert!(t.map.iter().filter(|m| m.is_some()).count() == cap.interior_indices().len());
        assert!(t.max_measure_defect(&cap, &p, [0.0, 0.0], 0.35) < 5e-2);
        let y = t.interpolate(&cap, [0.013, -0.171]).unwrap();
        assert!((y[0] - 0.026).abs() < 1e-5 && (y[1] + 0.342).abs() < 1e-5);
    }

    #[test]
    fn cap_consistency_with_oracle() {
        let p = phase(FRAC_PI_3);
        let cap = sphere_cap_reference(3f64.sqrt(), &[0.0, 0.0], 0.375, 1.0 / 64.0).unwrap();
        let t = ot_map(&cap, &p).unwrap();
        assert!(t.max_deviation(&cap, [0.0, 0.0], 0.2, |x| [2.0 * x[0], 2.0 * x[1]]) < 1e-5);
        let sources = cell_centers(0.2, 6);
        assert_eq!(sources.len(), 36);
        assert!((sources[0][0] - (-0.2 + 0.2 / 6.0)).abs() < 1e-15);
        let report = assignment_consistency(&cap, &t, &p, sources).unwrap();
        assert!(report.agreement >= 0.95, "{}", report.agreement);
        assert!(assignment_consistency(&cap, &t, &p, vec![[5.0, 5.0]]).is_err());
    }

    #[test]
    fn c_convexity_examples() {
        let p = phase(FRAC_PI_3);
        let cap = sphere_cap_reference(3f64.sqrt(), &[0.0, 0.0], 0.4, 1.0 / 32.0).unwrap();
        assert!(c_convexity_check(&cap, &p).unwrap().iter().flatten().all(|&b| b));
        let flat = GraphPatch::centered(&[0.0, 0.0], 0.25, 0.125, |_| 0.0).unwrap();
        assert!(c_convexity_check(&flat, &phase(0.3)).unwrap().iter().flatten().all(|&b| b));
        let bowl = GraphPatch::centered(&[0.0, 0.0], 0.25, 0.125, |x| -10.0 * (x[0] * x[0] + x[1] * x[1])).unwrap();
        let res = c_convexity_check(&bowl, &phase(FRAC_PI_4)).unwrap();
        assert_eq!(res[bowl.center_index()], Some(false));
        assert!(res.iter().flatten().all(|&b| !b));
    }

    #[test]
    fn hungarian_small_cases() {
        let p = phase(FRAC_PI_3);
        let sources = vec![[0.0, 0.0], [0.3, 0.1]];
        let targets: Vec<Point> = sources.iter().map(|s| [s[0] + 0.05, s[1] - 0.02]).collect();
        let inst = OtInstance::new(p, sources, targets).unwrap();
        let a = discrete_ot_oracle(&inst).unwrap();
        assert_eq!(a.target, vec![0, 1]);

        let far = OtInstance::new(phase(0.1), vec![[0.0, 0.0], [0.01, 0.0]], vec![[5.0, 0.0], [0.0, 0.01]]).unwrap();
        assert!(matches!(discrete_ot_oracle(&far), Err(Error::InfeasiblePair { .. })));
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = phase(1.2);
        for _ in 0..30 {
            let n = 6;
            let pts = |rng: &mut ChaCha8Rng| -> Vec<Point> {
                (0..n).map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)]).collect()
            };
            let inst = OtInstance::new(p, pts(&mut rng), pts(&mut rng)).unwrap();
            let a = discrete_ot_oracle(&inst).unwrap();
            let mut best = f64::INFINITY;
            let mut perm: Vec<usize> = (0..n).collect();
            permutations(&mut perm, 0, &mut |q| best = best.min(inst.cost_of(q).unwrap()));
            assert!((a.total_cost - best).abs() < 1e-12);
            assert!(a.total_cost <= inst.cost_of(&(0..n).collect::<Vec<_>>()).unwrap() + 1e-15);
        }
    }

    fn permutations(v: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
        if k == v.len() {
            visit(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permutations(v, k + 1, visit);
            v.swap(k, i);
        }
    }

    #[test]
    fn mass_balance_of_dilation() {
        let inst = OtInstance::new(phase(FRAC_PI_3), vec![[0.0, 0.0]], vec![[0.0, 0.0]]).unwrap();
        assert!(inst.mass_balance_error(0.16, 0.64) < 1e-15);
    }

    #[test]
    fn mtw_examples() {
        let v = mtw_tensor([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], &phase(FRAC_PI_4)).unwrap();
        assert!((v + 1.0).abs() < 1e-15);
        let near = mtw_tensor([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], &phase(FRAC_PI_2 - 1e-9)).unwrap();
        assert!(near < 0.0 && near > -1e-8);
        assert!(mtw_tensor([0.0, 0.0], [1.0, 0.0], [1.0, 1.0], &phase(0.5)).is_err());
    }

    #[test]
    fn mtw_negative_and_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = phase(FRAC_PI_6);
        for _ in 0..1000 {
            let (g, xi, nu) = random_mtw_arguments(&mut rng);
            assert!(mtw_tensor(g, xi, nu, &p).unwrap() < 0.0);
        }
        for _ in 0..100 {
            let t = rng.random_range(0.05..FRAC_PI_2 - 0.05);
            let (g, xi, nu) = random_mtw_arguments(&mut rng);
            let exact = mtw_tensor(g, xi, nu, &phase(t)).unwrap();
            let fd = mtw_finite_difference(g, xi, nu, &phase(t), 1e-2);
            assert!((fd - exact).abs() < 1e-5 * exact.abs(), "{fd} vs {exact}");
        }
    }

    #[test]
    fn mtw_scan_all_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let thetas: Vec<f64> = (1..=5).map(|k| k as f64 * std::f64::consts::PI / 12.0).collect();
        let scan = mtw_scan(&thetas, 200, &mut rng).unwrap();
        assert_eq!(scan.len(), 5);
        assert!(scan.iter().all(|&(_, m)| m < 0.0));
    }
}
