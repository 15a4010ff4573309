//! Dirichlet problem for `Σ arctan κᵢ = Θ` on rectangular grids (n = 2, 3).
//!
//! The discrete residual at an interior node is `Σ arctan κᵢ − Θ` with the
//! curvatures taken from central differences. Newton's method runs on the
//! interior values with a Jacobian assembled by forward differences over a
//! 3ⁿ-coloring of the grid, so one residual sweep fills one color's
//! columns. Continuation follows the homotopy `t ↦ (tΘ, t·boundary)` from
//! the flat plane.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{curvature_field, GraphPatch};
use crate::linalg::{gmres_ilu, BandedLu, CsrMatrix, LinearSolveFailure};
use crate::output::fmt17;
use crate::symfunc::{in_gamma_slice, linearization, Phase};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Newton stops once the max-norm residual is below this.
    pub tolerance: f64,
    pub max_newton_iterations: usize,
    /// Uniform continuation steps from the flat plane.
    pub continuation_steps: usize,
    /// Continuation gives up once the phase increment drops below this.
    pub min_phase_step: f64,
    /// Relative residual for the linear solves.
    pub linear_tolerance: f64,
    /// Step halvings allowed in one line search.
    pub max_halvings: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_newton_iterations: 50,
            continuation_steps: 8,
            min_phase_step: 1e-4,
            linear_tolerance: 1e-10,
            max_halvings: 30,
        }
    }
}

/// Grid, boundary data, target phase and start strategy.
#[derive(Clone, Debug)]
pub struct DirichletProblem {
    /// Boundary ring holds the Dirichlet data; the interior is the initial
    /// guess when `warm_start` is set and is ignored otherwise.
    pub patch: GraphPatch,
    pub phase: Phase,
    pub warm_start: bool,
    pub options: SolverOptions,
}

impl DirichletProblem {
    pub fn new(patch: GraphPatch, theta: f64) -> Result<Self> {
        let n = patch.n();
        if !(2..=3).contains(&n) {
            return Err(Error::domain(format!("the solver handles n = 2 or 3, got {n}")));
        }
        patch.require_extent(3, "the Dirichlet solver")?;
        Ok(Self {
            phase: Phase::new(theta, n)?,
            patch,
            warm_start: false,
            options: SolverOptions::default(),
        })
    }

    pub fn with_warm_start(mut self) -> Self {
        self.warm_start = true;
        self
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_continuation_steps(mut self, steps: usize) -> Self {
        self.options.continuation_steps = steps.max(1);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolveStatus {
    Converged,
    /// The linearized system could not be solved.
    SingularJacobian(String),
    /// Newton did not converge at the target without continuation.
    NotConverged,
    /// Continuation halved its step below the minimum.
    Stalled { reached_theta: f64 },
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Converged => f.write_str("converged"),
            Self::SingularJacobian(why) => write!(f, "singular Jacobian: {why}"),
            Self::NotConverged => f.write_str("Newton did not converge"),
            Self::Stalled { reached_theta } => write!(f, "continuation stalled at theta = {reached_theta}"),
        }
    }
}

/// One Newton iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryEntry {
    /// Continuation parameter `t ∈ (0, 1]`.
    pub homotopy: f64,
    pub theta: f64,
    pub iteration: usize,
    pub max_residual: f64,
    /// Accepted step length.
    pub step: f64,
    /// Whether a trial step was rejected for leaving `Γ_{n−1}`.
    pub admissibility_cut: bool,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub solution: GraphPatch,
    pub phase: Phase,
    pub status: SolveStatus,
    pub history: Vec<HistoryEntry>,
    /// `Γ_{n−1}` membership per grid index; `None` on the boundary ring.
    pub admissible: Vec<Option<bool>>,
    pub final_residual: f64,
}

impl SolveReport {
    pub fn is_converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn newton_iterations(&self) -> usize {
        self.history.iter().filter(|h| h.iteration > 0).count()
    }

    pub fn all_admissible(&self) -> bool {
        self.admissible.iter().flatten().all(|&a| a)
    }

    /// `homotopy, theta, iteration, max_residual, step, admissibility_cut`.
    pub fn write_history_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "homotopy,theta,iteration,max_residual,step,admissibility_cut")?;
        for h in &self.history {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt17(h.homotopy),
                fmt17(h.theta),
                h.iteration,
                fmt17(h.max_residual),
                fmt17(h.step),
                u8::from(h.admissibility_cut)
            )?;
        }
        Ok(())
    }
}

/// `Σ arctan κᵢ − Θ` on the grid, NaN on the boundary ring.
pub fn residual_grid(patch: &GraphPatch, phase: &Phase) -> Result<Vec<f64>> {
    let field = curvature_field(patch)?;
    let mut out = vec![f64::NAN; patch.len()];
    for p in field.points() {
        out[p.index] = p.kappa.arctan_sum() - phase.theta();
    }
    Ok(out)
}

/// Largest finite absolute value, ignoring NaN placeholders.
pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().filter(|v| !v.is_nan()).fold(0.0, |m, v| m.max(v.abs()))
}

/// Lower hemisphere `u = −√(R² − |x|²)` sampled on the box grid; it has
/// `κᵢ = 1/R`, so it solves the equation with `Θ = n·arctan(1/R)`.
pub fn sphere_cap_reference(radius: f64, center: &[f64], half_width: f64, spacing: f64) -> Result<GraphPatch> {
    if !(radius > 0.0) {
        return Err(Error::domain(format!("cap radius must be positive, got {radius}")));
    }
    let far: f64 = center
        .iter()
        .map(|c| (c.abs() + half_width).powi(2))
        .sum::<f64>()
        .sqrt();
    if far >= radius {
        return Err(Error::domain(format!(
            "domain reaches |x| = {far}, not strictly inside the cap radius {radius}"
        )));
    }
    GraphPatch::centered(center, half_width, spacing, |x| {
        -(radius * radius - x.iter().map(|v| v * v).sum::<f64>()).sqrt()
    })
}

/// Radius of the constant-curvature cap solving the equation at `Θ`.
pub fn cap_radius(theta: f64, n: usize) -> Result<f64> {
    let per = theta / n as f64;
    if !(per > 0.0 && per < FRAC_PI_2) {
        return Err(Error::domain(format!("no spherical cap has phase {theta} in dimension {n}")));
    }
    Ok(1.0 / per.tan())
}

/// Interior unknowns, sparsity pattern and coloring of one grid.
struct Discretization {
    n: usize,
    /// Grid index of each unknown.
    nodes: Vec<usize>,
    /// Unknown index of each grid point, `usize::MAX` on the ring.
    unknown: Vec<usize>,
    colors: usize,
    /// Per unknown, its color.
    color_of: Vec<usize>,
    /// Per row, `(color, csr position)` of each stencil unknown.
    entries: Vec<Vec<(usize, usize)>>,
    pattern: CsrMatrix,
    /// `2n + 1`-point pattern for the flat-plane tangent.
    laplacian: CsrMatrix,
    ring: Vec<usize>,
    strides: Vec<usize>,
    spacing: f64,
    linear_tolerance: f64,
}

impl Discretization {
    fn new(patch: &GraphPatch, linear_tolerance: f64) -> Self {
        let n = patch.n();
        let nodes = patch.interior_indices();
        let mut unknown = vec![usize::MAX; patch.len()];
        for (k, &f) in nodes.iter().enumerate() {
            unknown[f] = k;
        }
        let mut offsets = vec![0isize];
        for &s in patch.strides() {
            offsets = offsets
                .iter()
                .flat_map(|&o| [o - s as isize, o, o + s as isize])
                .collect();
        }
        offsets.sort_unstable();
        let color_of: Vec<usize> = nodes
            .iter()
            .map(|&f| patch.multi_index(f).iter().fold(0, |c, i| 3 * c + i % 3))
            .collect();
        let columns: Vec<Vec<usize>> = nodes
            .iter()
            .map(|&f| {
                let mut cols: Vec<usize> = offsets
                    .iter()
                    .map(|&o| unknown[(f as isize + o) as usize])
                    .filter(|&u| u != usize::MAX)
                    .collect();
                cols.sort_unstable();
                cols
            })
            .collect();
        let pattern = CsrMatrix::from_pattern(&columns);
        let entries = columns
            .iter()
            .enumerate()
            .map(|(row, cols)| {
                cols.iter()
                    .map(|&c| (color_of[c], pattern.position(row, c).expect("column in pattern")))
                    .collect()
            })
            .collect();
        let laplacian = CsrMatrix::from_pattern(
            &nodes
                .iter()
                .map(|&f| {
                    let mut cols = vec![unknown[f]];
                    for &s in patch.strides() {
                        cols.extend([unknown[f - s], unknown[f + s]].into_iter().filter(|&u| u != usize::MAX));
                    }
                    cols.sort_unstable();
                    cols
                })
                .collect::<Vec<_>>(),
        );
        let ring = (0..patch.len()).filter(|&f| unknown[f] == usize::MAX).collect();
        Self {
            laplacian,
            ring,
            strides: patch.strides().to_vec(),
            spacing: patch.spacing(),
            linear_tolerance,
            n,
            nodes,
            unknown,
            colors: 3usize.pow(n as u32),
            color_of,
            entries,
            pattern,
        }
    }

    fn residual(&self, patch: &GraphPatch, theta: f64, out: &mut [f64]) {
        for (r, &f) in out.iter_mut().zip(&self.nodes) {
            *r = patch.jet(f).arctan_sum() - theta;
        }
    }

    fn admissible(&self, patch: &GraphPatch) -> bool {
        self.nodes.iter().all(|&f| {
            let k = patch.jet(f).principal_curvatures();
            in_gamma_slice(&k[..self.n], self.n - 1)
        })
    }

    fn jacobian(&self, patch: &mut GraphPatch, theta: f64, base: &[f64], a: &mut CsrMatrix) {
        let m = self.nodes.len();
        let mut perturbed = vec![0.0; m];
        let steps: Vec<f64> = self
            .nodes
            .iter()
            .map(|&f| 1.5e-8 * patch.spacing() * patch.u()[f].abs().max(1.0))
            .collect();
        for color in 0..self.colors {
            for (k, &f) in self.nodes.iter().enumerate() {
                if self.color_of[k] == color {
                    patch.u_mut()[f] += steps[k];
                }
            }
            self.residual(patch, theta, &mut perturbed);
            for (k, &f) in self.nodes.iter().enumerate() {
                if self.color_of[k] == color {
                    patch.u_mut()[f] -= steps[k];
                }
            }
            for row in 0..m {
                for &(c, pos) in &self.entries[row] {
                    if c == color {
                        let col = a.col_idx[pos];
                        a.values[pos] = (perturbed[row] - base[row]) / steps[col];
                    }
                }
            }
        }
    }

    /// Derivative of the homotopy at the flat plane: the linearization there
    /// is the Laplacian, so `Δv = Θ` inside and `v = boundary` on the ring.
    fn flat_tangent(&self, boundary: &[f64], theta: f64) -> Result<Vec<f64>, LinearSolveFailure> {
        let mut a = self.laplacian.clone();
        let h2 = self.spacing * self.spacing;
        let mut rhs = vec![theta; self.nodes.len()];
        for (row, &f) in self.nodes.iter().enumerate() {
            for p in a.row_ptr[row]..a.row_ptr[row + 1] {
                a.values[p] = if a.col_idx[p] == row { -2.0 * self.n as f64 / h2 } else { 1.0 / h2 };
            }
            for &s in &self.strides {
                for g in [f - s, f + s] {
                    if self.unknown[g] == usize::MAX {
                        rhs[row] -= boundary[g] / h2;
                    }
                }
            }
        }
        let x = self.solve_linear(&a, &rhs, self.linear_tolerance)?;
        let mut out = boundary.to_vec();
        for (k, &f) in self.nodes.iter().enumerate() {
            out[f] = x[k];
        }
        Ok(out)
    }

    fn solve_linear(&self, a: &CsrMatrix, rhs: &[f64], tol: f64) -> Result<Vec<f64>, LinearSolveFailure> {
        if self.n == 2 {
            let lu = BandedLu::factor(a)?;
            let mut x = rhs.to_vec();
            lu.solve(&mut x);
            Ok(x)
        } else {
            let mut x = vec![0.0; rhs.len()];
            gmres_ilu(a, rhs, &mut x, tol, 60, 3000)?;
            Ok(x)
        }
    }
}

enum NewtonOutcome {
    Converged,
    Failed,
    Singular(String),
}

struct Newton<'a> {
    disc: &'a Discretization,
    options: &'a SolverOptions,
    critical: f64,
}

impl Newton<'_> {
    fn run(&self, patch: &mut GraphPatch, theta: f64, homotopy: f64, history: &mut Vec<HistoryEntry>) -> NewtonOutcome {
        let m = self.disc.nodes.len();
        let mut r = vec![0.0; m];
        let mut trial_r = vec![0.0; m];
        self.disc.residual(patch, theta, &mut r);
        let mut norm = max_abs(&r);
        history.push(HistoryEntry {
            homotopy,
            theta,
            iteration: 0,
            max_residual: norm,
            step: 0.0,
            admissibility_cut: false,
        });
        let guard = theta >= self.critical - 1e-12;
        let mut a = self.disc.pattern.clone();
        for iteration in 1..=self.options.max_newton_iterations {
            if norm < self.options.tolerance {
                return NewtonOutcome::Converged;
            }
            if !norm.is_finite() {
                return NewtonOutcome::Failed;
            }
            self.disc.jacobian(patch, theta, &r, &mut a);
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let dir = match self.disc.solve_linear(&a, &rhs, self.options.linear_tolerance) {
                Ok(d) => d,
                Err(e @ LinearSolveFailure::Singular { .. }) => return NewtonOutcome::Singular(e.to_string()),
                Err(_) => return NewtonOutcome::Failed,
            };
            let keep_admissible = guard && self.disc.admissible(patch);
            let start: Vec<f64> = self.disc.nodes.iter().map(|&f| patch.u()[f]).collect();
            let mut step = 1.0;
            let mut cut = false;
            let mut accepted = false;
            for _ in 0..=self.options.max_halvings {
                for (k, &f) in self.disc.nodes.iter().enumerate() {
                    patch.u_mut()[f] = start[k] + step * dir[k];
                }
                if keep_admissible && !self.disc.admissible(patch) {
                    cut = true;
                    step *= 0.5;
                    continue;
                }
                self.disc.residual(patch, theta, &mut trial_r);
                let trial = max_abs(&trial_r);
                if trial < norm {
                    norm = trial;
                    std::mem::swap(&mut r, &mut trial_r);
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                for (k, &f) in self.disc.nodes.iter().enumerate() {
                    patch.u_mut()[f] = start[k];
                }
                return NewtonOutcome::Failed;
            }
            history.push(HistoryEntry {
                homotopy,
                theta,
                iteration,
                max_residual: norm,
                step,
                admissibility_cut: cut,
            });
        }
        if norm < self.options.tolerance {
            NewtonOutcome::Converged
        } else {
            NewtonOutcome::Failed
        }
    }
}

/// Damped Newton with continuation; see the module docs.
pub fn solve(problem: &DirichletProblem) -> SolveReport {
    let disc = Discretization::new(&problem.patch, problem.options.linear_tolerance);
    let options = &problem.options;
    let newton = Newton {
        disc: &disc,
        options,
        critical: problem.phase.critical_value(),
    };
    let target = problem.phase.theta();
    let boundary: Vec<f64> = problem.patch.u().to_vec();
    let mut patch = problem.patch.clone();
    let mut history = Vec::new();

    let status = if problem.warm_start {
        match newton.run(&mut patch, target, 1.0, &mut history) {
            NewtonOutcome::Converged => SolveStatus::Converged,
            NewtonOutcome::Failed => SolveStatus::NotConverged,
            NewtonOutcome::Singular(why) => SolveStatus::SingularJacobian(why),
        }
    } else {
        let scale_of = |t: f64| if target != 0.0 { t * target.abs() } else { t };
        let mut t = 0.0;
        let mut dt = 1.0 / options.continuation_steps.max(1) as f64;
        match disc.flat_tangent(&boundary, target) {
            Err(e) => SolveStatus::SingularJacobian(e.to_string()),
            Ok(tangent) => {
                let mut previous: (f64, Vec<f64>) = (0.0, vec![0.0; patch.len()]);
                let mut current: Vec<f64> = vec![0.0; patch.len()];
                loop {
                    if t >= 1.0 {
                        break SolveStatus::Converged;
                    }
                    let t_next = (t + dt).min(1.0);
                    if t == 0.0 {
                        for (u, v) in patch.u_mut().iter_mut().zip(&tangent) {
                            *u = t_next * v;
                        }
                    } else {
                        let w = (t_next - t) / (t - previous.0);
                        for ((u, c), p) in patch.u_mut().iter_mut().zip(&current).zip(&previous.1) {
                            *u = c + w * (c - p);
                        }
                        for &f in &disc.ring {
                            patch.u_mut()[f] = t_next * boundary[f];
                        }
                    }
                    match newton.run(&mut patch, t_next * target, t_next, &mut history) {
                        NewtonOutcome::Converged => {
                            previous = (t, std::mem::replace(&mut current, patch.u().to_vec()));
                            t = t_next;
                        }
                        NewtonOutcome::Singular(why) => break SolveStatus::SingularJacobian(why),
                        NewtonOutcome::Failed => {
                            patch.u_mut().copy_from_slice(&current);
                            dt *= 0.5;
                            if scale_of(dt) < options.min_phase_step {
                                break SolveStatus::Stalled {
                                    reached_theta: t * target,
                                };
                            }
                        }
                    }
                }
            }
        }
    };

    let mut r = vec![0.0; disc.nodes.len()];
    let reached = match &status {
        SolveStatus::Stalled { reached_theta } => *reached_theta,
        _ => target,
    };
    disc.residual(&patch, reached, &mut r);
    let mut admissible = vec![None; patch.len()];
    for &f in &disc.nodes {
        let k = patch.jet(f).principal_curvatures();
        admissible[f] = Some(in_gamma_slice(&k[..disc.n], disc.n - 1));
    }
    SolveReport {
        solution: patch,
        phase: problem.phase,
        status,
        history,
        admissible,
        final_residual: max_abs(&r),
    }
}

/// Smallest eigenvalue of the linearized operator `F^{ij}` (orthonormal
/// frame) over the interior.
pub fn min_linearization_eigenvalue(patch: &GraphPatch, phase: &Phase) -> Result<f64> {
    let field = curvature_field(patch)?;
    let mut worst = f64::INFINITY;
    for p in field.points() {
        let f = linearization(&p.frame_second_form(), phase)?;
        let ev = crate::linalg::symmetric_eigenvalues_desc(&f);
        worst = worst.min(*ev.last().expect("n >= 1"));
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureProbe {
    /// `sup |κ|∞` over grid points within the inner radius.
    pub sup_kappa: f64,
    /// `sup u − inf u` over the whole patch.
    pub oscillation: f64,
    /// `sup_kappa / oscillation` (0 for a flat patch).
    pub ratio: f64,
}

/// Interior curvature size on the ball of the given radius about `center`.
pub fn probe_interior_curvature(patch: &GraphPatch, center: &[f64], inner_radius: f64) -> Result<CurvatureProbe> {
    let field = curvature_field(patch)?;
    let sup_kappa = field
        .points()
        .iter()
        .filter(|p| p.x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>() <= inner_radius * inner_radius)
        .map(|p| p.kappa.max().abs().max(p.kappa.min().abs()))
        .fold(0.0, f64::max);
    let oscillation = patch.oscillation();
    Ok(CurvatureProbe {
        sup_kappa,
        oscillation,
        ratio: if oscillation > 0.0 { sup_kappa / oscillation } else { 0.0 },
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientProbe {
    /// `|Du|` at the centre grid point.
    pub gradient_norm: f64,
    pub oscillation: f64,
    /// `|Du(0)| / osc u` (0 for a flat patch).
    pub ratio: f64,
}

/// Central-difference `|Du|` at the centre of the patch against `osc u`.
pub fn probe_gradient_estimate(patch: &GraphPatch) -> Result<GradientProbe> {
    patch.require_extent(3, "the gradient probe")?;
    let c = patch.center_index();
    let gradient_norm = patch.gradient(c).iter().map(|v| v * v).sum::<f64>().sqrt();
    let oscillation = patch.oscillation();
    Ok(GradientProbe {
        gradient_norm,
        oscillation,
        ratio: if oscillation > 0.0 { gradient_norm / oscillation } else { 0.0 },
    })
}

/// Planar cap of radius `radius` plus `amplitude·(x₁ + x₁x₂)`: the boundary
/// data and warm start of the estimate-probe family.
pub fn perturbed_cap(radius: f64, amplitude: f64, half_width: f64, spacing: f64) -> Result<GraphPatch> {
    let cap = sphere_cap_reference(radius, &[0.0, 0.0], half_width, spacing)?;
    let mut out = cap.clone();
    for (f, v) in out.u_mut().iter_mut().enumerate() {
        let x = cap.coords(f);
        *v += amplitude * (x[0] + x[0] * x[1]);
    }
    Ok(out)
}

/// One member of the estimate-probe family after solving.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRow {
    pub amplitude: f64,
    pub spacing: f64,
    pub status: SolveStatus,
    pub curvature: CurvatureProbe,
    pub gradient: GradientProbe,
}

/// Solves the perturbed-cap problem warm-started from its boundary data and
/// probes the interior estimates on the ball of radius `inner_radius`.
pub fn run_estimate_probe(
    theta: f64,
    radius: f64,
    amplitude: f64,
    half_width: f64,
    spacing: f64,
    inner_radius: f64,
) -> Result<ProbeRow> {
    let start = perturbed_cap(radius, amplitude, half_width, spacing)?;
    let report = solve(&DirichletProblem::new(start, theta)?.with_warm_start());
    Ok(ProbeRow {
        amplitude,
        spacing,
        curvature: probe_interior_curvature(&report.solution, &[0.0, 0.0], inner_radius)?,
        gradient: probe_gradient_estimate(&report.solution)?,
        status: report.status,
    })
}

/// `max |u − reference|` over all grid points of two patches on one grid.
pub fn max_difference(a: &GraphPatch, b: &GraphPatch) -> Result<f64> {
    if a.extents() != b.extents() {
        return Err(Error::domain("patches live on different grids"));
    }
    Ok(a.u().iter().zip(b.u()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}
