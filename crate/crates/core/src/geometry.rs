//! Discrete geometry of graph hypersurfaces `X = (x, u(x))` sampled on a
//! uniform grid.
//!
//! Derivatives use second-order central differences only, so the outermost
//! ring of grid points carries no geometry. Sign conventions follow the
//! upward-convex normal `ν = (Du/W, −1/W)`: the lower hemisphere
//! `u = −√(R² − |x|²)` has `κᵢ = 1/R > 0`.

use std::io::Write;

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::output::fmt17;
use crate::symfunc::{newton_sequence, KappaVector};

/// Default `ε` in the Jacobi inequality `Δ_G b ≥ ε|∇_G b|² − n`.
pub const DEFAULT_EPSILON: f64 = 1.0 / 17.0;

/// Default `J` in `b = log(H + J)`: `4n³`.
pub fn default_j(n: usize) -> f64 {
    4.0 * (n as f64).powi(3)
}

/// Heights `u` on a uniform grid. Axis 0 varies slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphPatch {
    n: usize,
    origin: Vec<f64>,
    spacing: f64,
    extents: Vec<usize>,
    strides: Vec<usize>,
    u: Vec<f64>,
}

impl GraphPatch {
    pub fn new(origin: Vec<f64>, spacing: f64, extents: Vec<usize>, u: Vec<f64>) -> Result<Self> {
        let n = origin.len();
        if n == 0 || n != extents.len() {
            return Err(Error::domain(format!(
                "origin has {} axes but extents has {}",
                n,
                extents.len()
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::domain(format!("grid spacing must be positive, got {spacing}")));
        }
        let len: usize = extents.iter().product();
        if u.len() != len {
            return Err(Error::domain(format!(
                "expected {len} height values for extents {extents:?}, got {}",
                u.len()
            )));
        }
        if let Some(pos) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite height at grid index {pos}")));
        }
        let mut strides = vec![1; n];
        for d in (0..n - 1).rev() {
            strides[d] = strides[d + 1] * extents[d + 1];
        }
        Ok(Self {
            n,
            origin,
            spacing,
            extents,
            strides,
            u,
        })
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(
        origin: Vec<f64>,
        spacing: f64,
        extents: Vec<usize>,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let mut patch = Self::new(origin, spacing, extents.clone(), vec![0.0; extents.iter().product()])?;
        for flat in 0..patch.len() {
            let x = patch.coords(flat);
            patch.u[flat] = f(&x);
        }
        if let Some(pos) = patch.u.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "height function is not finite at {:?}",
                patch.coords(pos)
            )));
        }
        Ok(patch)
    }

    /// Grid covering the box `[lower, upper]` with the given spacing; the
    /// box edges must be multiples of the spacing away from `lower`.
    pub fn box_grid(lower: &[f64], upper: &[f64], spacing: f64, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let extents = box_extents(lower, upper, spacing)?;
        Self::from_fn(lower.to_vec(), spacing, extents, f)
    }

    /// Grid points `center + k·spacing` (integer `k` per axis) inside the
    /// cube `|x − center|∞ ≤ half_width`; the centre is always a node.
    pub fn centered(
        center: &[f64],
        half_width: f64,
        spacing: f64,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        if !(spacing > 0.0) || !(half_width > 0.0) {
            return Err(Error::domain(format!(
                "need positive spacing and half width, got {spacing} and {half_width}"
            )));
        }
        let k = (half_width / spacing + 1e-9).floor() as usize;
        if k < 1 {
            return Err(Error::domain(format!("half width {half_width} is below the spacing {spacing}")));
        }
        let origin = center.iter().map(|c| c - k as f64 * spacing).collect();
        Self::from_fn(origin, spacing, vec![2 * k + 1; center.len()], f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn u_mut(&mut self) -> &mut [f64] {
        &mut self.u
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        self.strides
            .iter()
            .map(|s| {
                let i = rem / s;
                rem %= s;
                i
            })
            .collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.origin)
            .map(|(&i, o)| o + i as f64 * self.spacing)
            .collect()
    }

    /// Distance (in grid steps) from the nearest face of the grid.
    pub fn depth(&self, flat: usize) -> usize {
        self.multi_index(flat)
            .iter()
            .zip(&self.extents)
            .map(|(&i, &e)| i.min(e - 1 - i))
            .min()
            .unwrap_or(0)
    }

    /// Points with a full central-difference stencil.
    pub fn is_interior(&self, flat: usize) -> bool {
        self.depth(flat) >= 1
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_interior(i)).collect()
    }

    /// Grid point closest to the centre of the box.
    pub fn center_index(&self) -> usize {
        let multi: Vec<usize> = self.extents.iter().map(|e| (e - 1) / 2).collect();
        self.flat_index(&multi)
    }

    pub(crate) fn require_extent(&self, min: usize, what: &str) -> Result<()> {
        if let Some(&e) = self.extents.iter().find(|&&e| e < min) {
            return Err(Error::domain(format!(
                "{what} needs at least {min} grid points per axis, got {e}"
            )));
        }
        Ok(())
    }

    /// Central-difference gradient and Hessian at an interior point.
    pub fn jet(&self, flat: usize) -> Jet {
        let n = self.n;
        let h = self.spacing;
        let u = &self.u;
        let mut jet = Jet {
            n,
            grad: [0.0; 3],
            hess: [[0.0; 3]; 3],
        };
        let c = u[flat];
        for i in 0..n.min(3) {
            let si = self.strides[i];
            let (up, um) = (u[flat + si], u[flat - si]);
            jet.grad[i] = (up - um) / (2.0 * h);
            jet.hess[i][i] = (up - 2.0 * c + um) / (h * h);
            for j in 0..i {
                let sj = self.strides[j];
                let v = (u[flat + si + sj] - u[flat + si - sj] - u[flat - si + sj] + u[flat - si - sj])
                    / (4.0 * h * h);
                jet.hess[i][j] = v;
                jet.hess[j][i] = v;
            }
        }
        jet
    }

    /// Central-difference gradient as a vector (any dimension).
    pub fn gradient(&self, flat: usize) -> Vec<f64> {
        let h = self.spacing;
        self.strides
            .iter()
            .map(|&s| (self.u[flat + s] - self.u[flat - s]) / (2.0 * h))
            .collect()
    }

    /// Central-difference Hessian (any dimension).
    pub fn hessian(&self, flat: usize) -> DMatrix<f64> {
        let n = self.n;
        let h2 = self.spacing * self.spacing;
        let u = &self.u;
        let c = u[flat];
        DMatrix::from_fn(n, n, |i, j| {
            let si = self.strides[i];
            if i == j {
                (u[flat + si] - 2.0 * c + u[flat - si]) / h2
            } else {
                let sj = self.strides[j];
                (u[flat + si + sj] - u[flat + si - sj] - u[flat - si + sj] + u[flat - si - sj]) / (4.0 * h2)
            }
        })
    }

    /// `sup u − inf u` over the whole patch.
    pub fn oscillation(&self) -> f64 {
        let (lo, hi) = self
            .u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }
}

/// Number of grid points per axis for a box and spacing.
pub fn box_extents(lower: &[f64], upper: &[f64], spacing: f64) -> Result<Vec<usize>> {
    if lower.len() != upper.len() || lower.is_empty() {
        return Err(Error::domain("box bounds must have the same, nonzero dimension"));
    }
    if !(spacing > 0.0) {
        return Err(Error::domain(format!("grid spacing must be positive, got {spacing}")));
    }
    lower
        .iter()
        .zip(upper)
        .map(|(lo, hi)| {
            let steps = (hi - lo) / spacing;
            let rounded = steps.round();
            if rounded < 2.0 || (steps - rounded).abs() > 1e-6 {
                return Err(Error::domain(format!(
                    "box side [{lo}, {hi}] is not a multiple (>= 2) of spacing {spacing}"
                )));
            }
            Ok(rounded as usize + 1)
        })
        .collect()
}

/// First and second derivatives at one point for `n ≤ 3`, on the stack.
#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub n: usize,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

impl Jet {
    pub fn w(&self) -> f64 {
        (1.0 + self.grad[..self.n].iter().map(|p| p * p).sum::<f64>()).sqrt()
    }

    /// Principal curvatures (descending) as eigenvalues of
    /// `g^{−1/2} h g^{−1/2}`, using `g^{−1/2} = I + (1/W − 1) p̂ p̂ᵀ`.
    pub fn principal_curvatures(&self) -> [f64; 3] {
        let n = self.n;
        let p = &self.grad;
        let p2: f64 = p[..n].iter().map(|v| v * v).sum();
        let w = (1.0 + p2).sqrt();
        let mut root = [[0.0; 3]; 3];
        for (i, row) in root.iter_mut().enumerate().take(n) {
            row[i] = 1.0;
        }
        if p2 > 0.0 {
            let c = (1.0 / w - 1.0) / p2;
            for i in 0..n {
                for j in 0..n {
                    root[i][j] += c * p[i] * p[j];
                }
            }
        }
        let mut tmp = [[0.0; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                tmp[i][j] = (0..n).map(|k| self.hess[i][k] * root[k][j]).sum::<f64>() / w;
            }
        }
        let mut s = [[0.0; 3]; 3];
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = (0..n).map(|k| root[i][k] * tmp[k][j]).sum();
                s[i][j] = v;
                s[j][i] = v;
            }
        }
        let mut out = [0.0; 3];
        match n {
            1 => out[0] = s[0][0],
            2 => {
                let mean = 0.5 * (s[0][0] + s[1][1]);
                let rad = (0.25 * (s[0][0] - s[1][1]).powi(2) + s[0][1] * s[0][1]).sqrt();
                out[0] = mean + rad;
                out[1] = mean - rad;
            }
            _ => {
                let m = Matrix3::from_fn(|i, j| s[i][j]);
                let ev = SymmetricEigen::new(m).eigenvalues;
                let mut v = [ev[0], ev[1], ev[2]];
                v.sort_by(|a, b| b.total_cmp(a));
                out = v;
            }
        }
        out
    }

    pub fn arctan_sum(&self) -> f64 {
        self.principal_curvatures()[..self.n].iter().map(|k| k.atan()).sum()
    }
}

/// Geometry at one interior grid point, in Cartesian chart coordinates.
#[derive(Clone, Debug)]
pub struct PointGeometry {
    pub index: usize,
    pub x: Vec<f64>,
    pub u: f64,
    pub du: Vec<f64>,
    /// `W = √(1 + |Du|²)`
    pub w: f64,
    /// `g_{ij} = δ_{ij} + uᵢuⱼ`
    pub g: DMatrix<f64>,
    /// `g^{ij} = δ_{ij} − uᵢuⱼ/W²`
    pub g_inv: DMatrix<f64>,
    /// `h_{ij} = u_{ij}/W`
    pub h: DMatrix<f64>,
    pub kappa: KappaVector,
    /// `H = σ₁(κ)`
    pub mean_curvature: f64,
    /// `|A|² = Σ κᵢ²`
    pub a2: f64,
    /// `√Π(1+κᵢ²)`, which equals `V` on solutions.
    pub volume: f64,
    /// Lift metric `G_{ij} = g_{ij} + h_{ik} g^{kl} h_{lj}` of `(X, ν)`.
    pub lift_metric: DMatrix<f64>,
}

impl PointGeometry {
    /// Mixed Weingarten tensor `h_i^j = g^{jk} h_{ki}` (row `i`, column `j`).
    pub fn weingarten(&self) -> DMatrix<f64> {
        &self.h * &self.g_inv
    }

    /// Second fundamental form in an orthonormal frame,
    /// `g^{−1/2} h g^{−1/2}`; its eigenvalues are the `κᵢ`.
    pub fn frame_second_form(&self) -> DMatrix<f64> {
        let n = self.du.len();
        let p2: f64 = self.du.iter().map(|p| p * p).sum();
        let mut root = DMatrix::<f64>::identity(n, n);
        if p2 > 0.0 {
            let c = (1.0 / self.w - 1.0) / p2;
            root += DMatrix::from_fn(n, n, |i, j| c * self.du[i] * self.du[j]);
        }
        let s = &root * &self.h * &root;
        (&s + s.transpose()) * 0.5
    }

    /// Unit normal `ν = (Du/W, −1/W)`.
    pub fn normal(&self) -> Vec<f64> {
        let mut nu: Vec<f64> = self.du.iter().map(|p| p / self.w).collect();
        nu.push(-1.0 / self.w);
        nu
    }
}

/// Per-point geometry over the interior of a [`GraphPatch`].
#[derive(Clone, Debug)]
pub struct CurvatureField {
    n: usize,
    spacing: f64,
    points: Vec<PointGeometry>,
    position: Vec<usize>,
}

/// Fundamental forms, curvatures and lift metric at every interior point.
pub fn curvature_field(patch: &GraphPatch) -> Result<CurvatureField> {
    patch.require_extent(3, "curvature_field")?;
    let n = patch.n();
    let mut position = vec![usize::MAX; patch.len()];
    let mut points = Vec::new();
    for flat in patch.interior_indices() {
        position[flat] = points.len();
        points.push(point_geometry(patch, flat)?);
    }
    Ok(CurvatureField {
        n,
        spacing: patch.spacing(),
        points,
        position,
    })
}

fn point_geometry(patch: &GraphPatch, flat: usize) -> Result<PointGeometry> {
    let n = patch.n();
    let du = patch.gradient(flat);
    let hess = patch.hessian(flat);
    let w = (1.0 + du.iter().map(|p| p * p).sum::<f64>()).sqrt();
    let g = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + du[i] * du[j]);
    let g_inv = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - du[i] * du[j] / (w * w));
    let h = hess / w;
    let kappa = if n <= 3 {
        let jet = patch.jet(flat);
        KappaVector::new(jet.principal_curvatures()[..n].to_vec())?
    } else {
        let p2: f64 = du.iter().map(|p| p * p).sum();
        let mut root = DMatrix::<f64>::identity(n, n);
        if p2 > 0.0 {
            let c = (1.0 / w - 1.0) / p2;
            root += DMatrix::from_fn(n, n, |i, j| c * du[i] * du[j]);
        }
        let s = &root * &h * &root;
        let s = (&s + s.transpose()) * 0.5;
        KappaVector::new(crate::linalg::symmetric_eigenvalues_desc(&s))?
    };
    let lift_metric = &g + &h * &g_inv * &h;
    Ok(PointGeometry {
        index: flat,
        x: patch.coords(flat),
        u: patch.u()[flat],
        w,
        mean_curvature: kappa.mean_curvature(),
        a2: kappa.norm_sq(),
        volume: kappa.lift_volume(),
        du,
        g,
        g_inv,
        h,
        kappa,
        lift_metric,
    })
}

impl CurvatureField {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn points(&self) -> &[PointGeometry] {
        &self.points
    }

    /// Geometry at a grid index, if it is an interior point.
    pub fn at(&self, flat: usize) -> Option<&PointGeometry> {
        match self.position.get(flat) {
            Some(&p) if p != usize::MAX => Some(&self.points[p]),
            _ => None,
        }
    }

    /// One row per interior point: `x1..xn, u, W, kappa_1..kappa_n, H, V`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.n;
        let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        header.extend(["u".into(), "W".into()]);
        header.extend((1..=n).map(|i| format!("kappa_{i}")));
        header.extend(["H".into(), "V".into()]);
        writeln!(out, "{}", header.join(","))?;
        for p in &self.points {
            let mut row: Vec<String> = p.x.iter().map(|v| fmt17(*v)).collect();
            row.push(fmt17(p.u));
            row.push(fmt17(p.w));
            row.extend(p.kappa.as_slice().iter().map(|v| fmt17(*v)));
            row.push(fmt17(p.mean_curvature));
            row.push(fmt17(p.volume));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `max |Σⱼ ∂ⱼ [T_k]_i^j|` over grid points whose neighbours all carry
/// geometry, with `h_i^j = Dᵢ(uⱼ/W)` and central differences.
pub fn divergence_free_check(patch: &GraphPatch, k: usize) -> Result<f64> {
    patch.require_extent(5, "divergence_free_check")?;
    let field = curvature_field(patch)?;
    let n = patch.n();
    let tensors: Vec<Option<DMatrix<f64>>> = (0..patch.len())
        .map(|flat| {
            field.at(flat).map(|p| {
                let (_, mut t) = newton_sequence(&p.weingarten());
                if k <= n {
                    t.swap_remove(k)
                } else {
                    DMatrix::zeros(n, n)
                }
            })
        })
        .collect();
    let h = patch.spacing();
    let mut worst: f64 = 0.0;
    for flat in (0..patch.len()).filter(|&f| patch.depth(f) >= 2) {
        for i in 0..n {
            let mut div = 0.0;
            for j in 0..n {
                let s = patch.strides()[j];
                let plus = tensors[flat + s].as_ref().expect("depth >= 2 neighbour is interior");
                let minus = tensors[flat - s].as_ref().expect("depth >= 2 neighbour is interior");
                div += (plus[(i, j)] - minus[(i, j)]) / (2.0 * h);
            }
            worst = worst.max(div.abs());
        }
    }
    Ok(worst)
}

/// `(n+2)·√(Σ κᵢ²/(1+κᵢ²))`, the bound on the mean curvature of the lift;
/// never exceeds `(n+2)√n`.
pub fn lift_mean_curvature_norm(kappa: &KappaVector) -> f64 {
    let n = kappa.n() as f64;
    let sum: f64 = kappa.as_slice().iter().map(|k| k * k / (1.0 + k * k)).sum();
    (n + 2.0) * sum.sqrt()
}

/// `b = log(H + J)`.
pub fn b_quantity(kappa: &KappaVector, j: f64) -> Result<f64> {
    let arg = kappa.mean_curvature() + j;
    if !(arg > 0.0) {
        return Err(Error::domain(format!(
            "H + J = {arg} is not positive; curvature is not admissible"
        )));
    }
    Ok(arg.ln())
}

/// Output of [`anisotropic_distance`].
#[derive(Clone, Debug)]
pub struct DistanceReport {
    /// `r` at every grid point carrying geometry, as `(grid index, r)`.
    pub r: Vec<(usize, f64)>,
    /// `max G^{ij} rᵢ rⱼ` over points with `r > spacing`.
    pub max_gradient_form: f64,
    /// Grid index where the maximum is attained.
    pub argmax: usize,
    /// Number of points entering the maximum.
    pub samples: usize,
}

/// `r² = |X − X(y₀)|² + |ν − ν(y₀)|²` and the largest `G^{ij} rᵢ rⱼ`, with
/// `rᵢ` by central differences in the chart and `G` the lift metric.
pub fn anisotropic_distance(patch: &GraphPatch, base: usize) -> Result<DistanceReport> {
    if base >= patch.len() || !patch.is_interior(base) {
        return Err(Error::domain(format!("base point {base} is not an interior grid point")));
    }
    let field = curvature_field(patch)?;
    let embed = |p: &PointGeometry| -> Vec<f64> {
        let mut v = p.x.clone();
        v.push(p.u);
        v.extend(p.normal());
        v
    };
    let base_point = embed(field.at(base).expect("interior base point"));
    let mut r_grid = vec![f64::NAN; patch.len()];
    let mut r = Vec::with_capacity(field.points().len());
    for p in field.points() {
        let e = embed(p);
        let d = e.iter().zip(&base_point).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        r_grid[p.index] = d;
        r.push((p.index, d));
    }
    let n = patch.n();
    let h = patch.spacing();
    let mut best = f64::NEG_INFINITY;
    let mut argmax = base;
    let mut samples = 0;
    for p in field.points() {
        if patch.depth(p.index) < 2 || r_grid[p.index] <= h {
            continue;
        }
        let grad = nalgebra::DVector::from_fn(n, |i, _| {
            let s = patch.strides()[i];
            (r_grid[p.index + s] - r_grid[p.index - s]) / (2.0 * h)
        });
        let g_inv = p
            .lift_metric
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::domain("singular lift metric"))?;
        let value = (grad.transpose() * g_inv * &grad)[(0, 0)];
        samples += 1;
        if value > best {
            best = value;
            argmax = p.index;
        }
    }
    if samples == 0 {
        return Err(Error::domain("no grid points with r > spacing and a full stencil"));
    }
    Ok(DistanceReport {
        r,
        max_gradient_form: best,
        argmax,
        samples,
    })
}

/// Midpoint-rule `∫ V dx` over grid cells centred within `radius` of
/// `center`, using `V = √Π(1+κᵢ²)`.
pub fn area_integral(field: &CurvatureField, center: &[f64], radius: f64) -> f64 {
    let cell = field.spacing().powi(field.n() as i32);
    field
        .points()
        .iter()
        .filter(|p| p.x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>() <= radius * radius)
        .map(|p| p.volume * cell)
        .sum()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn cap(r: f64) -> impl Fn(&[f64]) -> f64 {
        move |x: &[f64]| -(r * r - x.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    fn square(half: f64, h: f64, n: usize, f: impl Fn(&[f64]) -> f64) -> GraphPatch {
        GraphPatch::box_grid(&vec![-half; n], &vec![half; n], h, f).unwrap()
    }

    #[test]
    fn constant_patch_is_flat() {
        let p = square(0.5, 0.125, 2, |_| 3.0);
        let f = curvature_field(&p).unwrap();
        assert_eq!(f.points().len(), 7 * 7);
        for q in f.points() {
            assert_eq!(q.kappa.as_slice(), &[0.0, 0.0]);
            assert_eq!(q.w, 1.0);
            assert_eq!(q.volume, 1.0);
            assert_eq!(q.lift_metric, DMatrix::<f64>::identity(2, 2));
        }
    }

    #[test]
    fn paraboloid_at_origin() {
        for n in 2..=3 {
            let p = square(0.25, 0.125, n, |x| 0.5 * x.iter().map(|v| v * v).sum::<f64>());
            let f = curvature_field(&p).unwrap();
            let q = f.at(p.center_index()).unwrap();
            assert!(q.x.iter().all(|v| v.abs() < 1e-15));
            for k in q.kappa.as_slice() {
                assert!((k - 1.0).abs() < 1e-12);
            }
            assert_eq!(q.w, 1.0);
            assert!((&q.g - DMatrix::<f64>::identity(n, n)).amax() < 1e-15);
        }
    }

    #[test]
    fn sphere_curvature_converges_at_second_order() {
        for n in 2..=3 {
            let mut errs = Vec::new();
            for h in [1.0 / 16.0, 1.0 / 32.0] {
                let p = square(0.25, h, n, cap(1.0));
                let f = curvature_field(&p).unwrap();
                let err = f
                    .points()
                    .iter()
                    .flat_map(|q| q.kappa.as_slice().iter().map(|k| (k - 1.0).abs()))
                    .fold(0.0, f64::max);
                let h_err = f
                    .points()
                    .iter()
                    .map(|q| (q.mean_curvature - n as f64).abs())
                    .fold(0.0, f64::max);
                assert!(h_err <= n as f64 * err + 1e-12);
                errs.push(err);
            }
            let ratio = errs[0] / errs[1];
            assert!(ratio > 3.0 && ratio < 5.0, "n={n} ratio={ratio}");
        }
    }

    #[test]
    fn pencil_matches_nonsymmetric_eigensolve() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 2..=3 {
            for _ in 0..5 {
                let c: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                let p = square(0.25, 0.0625, n, |x| {
                    let y = if n == 3 { x[2] } else { 0.0 };
                    c[0] * x[0] * x[0] + c[1] * x[0] * x[1] + c[2] * x[1] * x[1] + c[3] * (2.0 * x[0]).sin()
                        + c[4] * x[1] * y
                        + c[5] * y * y * y
                });
                let f = curvature_field(&p).unwrap();
                for q in f.points() {
                    let shape = &q.g_inv * &q.h;
                    let mut ev: Vec<f64> = shape.complex_eigenvalues().iter().map(|z| z.re).collect();
                    ev.sort_by(|a, b| b.total_cmp(a));
                    for (a, b) in ev.iter().zip(q.kappa.as_slice()) {
                        assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn lift_metric_determinant_matches_product() {
        let p = square(0.3, 0.05, 2, |x| (x[0] * 2.0).sin() * x[1] + x[1].powi(3));
        let f = curvature_field(&p).unwrap();
        for q in f.points() {
            let frame_det = q.lift_metric.determinant() / q.g.determinant();
            let prod: f64 = q.kappa.as_slice().iter().map(|k| 1.0 + k * k).product();
            assert!((frame_det - prod).abs() < 1e-8 * prod);
        }
    }

    #[test]
    fn weingarten_matches_derivative_of_unit_gradient() {
        let u = |x: &[f64]| (x[0] + 0.3 * x[1]).sin() + 0.5 * x[0] * x[1] * x[1];
        let mut errs = Vec::new();
        for h in [1.0 / 16.0, 1.0 / 32.0] {
            let p = square(0.5, h, 2, u);
            let f = curvature_field(&p).unwrap();
            let mut worst: f64 = 0.0;
            for q in f.points() {
                if p.depth(q.index) < 2 {
                    continue;
                }
                let weingarten = q.weingarten();
                for i in 0..2 {
                    let s = p.strides()[i];
                    let plus = f.at(q.index + s).unwrap();
                    let minus = f.at(q.index - s).unwrap();
                    for j in 0..2 {
                        let d = (plus.du[j] / plus.w - minus.du[j] / minus.w) / (2.0 * h);
                        worst = worst.max((d - weingarten[(i, j)]).abs());
                    }
                }
            }
            errs.push(worst);
        }
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.0 && ratio < 5.0, "ratio = {ratio}");
    }

    #[test]
    fn curvature_field_needs_three_points() {
        let p = GraphPatch::new(vec![0.0, 0.0], 0.1, vec![2, 5], vec![0.0; 10]).unwrap();
        assert!(curvature_field(&p).is_err());
    }

    #[test]
    fn divergence_free_examples() {
        let quad = |x: &[f64]| 0.7 * x[0] * x[0] + 0.4 * x[0] * x[1] - 0.3 * x[1] * x[1] + 0.2 * x[0];
        let coarse = divergence_free_check(&square(0.5, 1.0 / 16.0, 2, quad), 1).unwrap();
        let fine = divergence_free_check(&square(0.5, 1.0 / 32.0, 2, quad), 1).unwrap();
        let ratio = coarse / fine;
        assert!((ratio - 4.0).abs() < 1.2, "ratio = {ratio}");

        let lin = |x: &[f64]| 0.3 * x[0] - 0.2 * x[1] + 1.0;
        for k in 0..=3 {
            assert!(divergence_free_check(&square(0.5, 0.125, 2, lin), k).unwrap() < 1e-12);
        }

        let sphere = divergence_free_check(&square(0.5, 1.0 / 64.0, 2, cap(1.0)), 1).unwrap();
        assert!(sphere < 1e-2, "sphere residual {sphere}");

        let small = square(0.1875, 0.125, 2, lin);
        assert!(divergence_free_check(&small, 1).is_err());
    }

    #[test]
    fn lift_mean_curvature_examples() {
        let zero = KappaVector::new(vec![0.0, 0.0, 0.0]).unwrap();
        assert_eq!(lift_mean_curvature_norm(&zero), 0.0);
        let one = KappaVector::new(vec![1.0, 1.0]).unwrap();
        assert!((lift_mean_curvature_norm(&one) - 4.0).abs() < 1e-15);
        let mut prev = 0.0;
        for t in [1.0, 10.0, 100.0, 1e4, 1e8] {
            let v = lift_mean_curvature_norm(&KappaVector::new(vec![t; 3]).unwrap());
            assert!(v > prev && v <= 5.0 * 3f64.sqrt());
            prev = v;
        }
        assert!((prev - 5.0 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn b_quantity_examples() {
        let zero = KappaVector::new(vec![0.0; 3]).unwrap();
        assert!((b_quantity(&zero, default_j(3)).unwrap() - 108f64.ln()).abs() < 1e-15);
        let k = KappaVector::new(vec![1.0, 1.0, 0.0]).unwrap();
        assert!((b_quantity(&k, 108.0).unwrap() - 110f64.ln()).abs() < 1e-15);
        let neg = KappaVector::new(vec![-50.0, -60.0, -70.0]).unwrap();
        assert!(b_quantity(&neg, 108.0).is_err());
    }

    #[test]
    fn flat_distance_gradient_is_one() {
        let p = square(0.5, 0.0625, 2, |_| 0.0);
        let rep = anisotropic_distance(&p, p.center_index()).unwrap();
        assert!((rep.max_gradient_form - 1.0).abs() < 1e-12, "{}", rep.max_gradient_form);
        let base = p.coords(p.center_index());
        for &(idx, r) in &rep.r {
            let x = p.coords(idx);
            let d = ((x[0] - base[0]).powi(2) + (x[1] - base[1]).powi(2)).sqrt();
            assert!((r - d).abs() < 1e-15);
        }
    }

    #[test]
    fn distance_rejects_boundary_base_point() {
        let p = square(0.5, 0.125, 2, |_| 0.0);
        assert!(anisotropic_distance(&p, 0).is_err());
    }

    #[test]
    fn sphere_distance_gradient_bounded() {
        let p = square(0.375, 1.0 / 64.0, 2, cap(1.0));
        let rep = anisotropic_distance(&p, p.center_index()).unwrap();
        assert!(rep.max_gradient_form <= 1.05, "{}", rep.max_gradient_form);
    }

    #[test]
    fn area_examples() {
        let p = square(0.5, 0.05, 2, |_| 0.0);
        let f = curvature_field(&p).unwrap();
        let all = area_integral(&f, &[0.0, 0.0], 10.0);
        assert!((all - 19.0 * 19.0 * 0.0025).abs() < 1e-12);

        // sphere of radius 1 has V = 2 at every point, so the integral over
        // the disc |x| <= 1/2 approaches 2 * pi / 4.
        let coarse = area_integral(&curvature_field(&square(0.6, 0.01, 2, cap(1.0))).unwrap(), &[0.0, 0.0], 0.5);
        let fine = area_integral(&curvature_field(&square(0.6, 0.001, 2, cap(1.0))).unwrap(), &[0.0, 0.0], 0.5);
        assert!((fine - std::f64::consts::FRAC_PI_2).abs() < 5e-3);
        assert!((coarse - fine).abs() / fine < 1e-2);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let p = square(0.25, 0.125, 2, |x| x[0] * x[1]);
        let f = curvature_field(&p).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x1,x2,u,W,kappa_1,kappa_2,H,V");
        assert_eq!(lines.count(), 9);
    }

    proptest! {
        #[test]
        fn lift_mean_curvature_is_bounded(v in prop::collection::vec(-1e6f64..1e6, 2..7)) {
            let k = KappaVector::from_unsorted(v).unwrap();
            let n = k.n() as f64;
            prop_assert!(lift_mean_curvature_norm(&k) <= (n + 2.0) * n.sqrt());
        }
    }
}
