//! Levenberg-Marquardt over `(log lambda, log g'_k, log rho'_i)` with Huber
//! IRLS weights refreshed every iteration.
//!
//! Each residual touches the scale, one gain and one albedo, so the albedo
//! block of the normal equations is diagonal. The default path eliminates it
//! with a Schur complement onto the small `(lambda, gains)` system; the dense
//! path solves the full system and exists to cross-check it.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::problem::{Problem, State};
use super::{LinearSolver, RobustLossConfig, SolverConfig};
use crate::error::{Error, Result};
use crate::photomodel::{self, robust_residual};

const MAX_DAMPING: f64 = 1e32;
const DIAGONAL_FLOOR: f64 = 1e-12;

/// Which camera-block slot each image's gain occupies (slot 0 is the scale).
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub gain_slot: Vec<Option<usize>>,
    pub n_camera: usize,
}

impl Layout {
    pub fn new(problem: &Problem, gains_fixed: bool) -> Self {
        let mut next = 1;
        let gain_slot = (0..problem.n_images())
            .map(|k| {
                if gains_fixed || k == problem.ref_image {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect();
        Layout { gain_slot, n_camera: next }
    }
}

/// IRLS-weighted normal equations in block form.
#[derive(Debug, Clone)]
pub(crate) struct NormalEquations {
    pub hcc: DMatrix<f64>,
    /// Row-major `n_points x n_camera` coupling block.
    pub hcp: Vec<f64>,
    pub hpp: Vec<f64>,
    pub gc: DVector<f64>,
    pub gp: Vec<f64>,
}

impl NormalEquations {
    fn max_gradient(&self) -> f64 {
        self.gc
            .iter()
            .chain(self.gp.iter())
            .fold(0.0f64, |m, g| m.max(g.abs()))
    }
}

struct Row {
    point: usize,
    gain_slot: Option<usize>,
    residual: f64,
    weight: f64,
    j_lambda: f64,
    j_albedo: f64,
    j_gain: f64,
}

pub(crate) fn linearize(problem: &Problem, state: &State, layout: &Layout, epsilon: f64) -> Result<NormalEquations> {
    let rows: Vec<Option<Row>> = problem
        .samples
        .par_iter()
        .map(|s| {
            let p = photomodel::partials(
                &problem.positions[s.point],
                &problem.normals[s.point],
                &problem.poses[s.image],
                problem.sample_params(s, state),
                &problem.rig,
                s.vignette,
            )?;
            if p.flagged {
                return Ok(None);
            }
            let (residual, weight) = robust_residual(p.intensity, s.observed, epsilon);
            Ok(Some(Row {
                point: s.point,
                gain_slot: layout.gain_slot[s.image],
                residual,
                weight,
                j_lambda: state.lambda * p.d_lambda,
                j_albedo: state.albedos[s.point] * p.d_albedo,
                j_gain: state.gains[s.image] * p.d_gain,
            }))
        })
        .collect::<Result<_>>()?;

    let nc = layout.n_camera;
    let np = problem.n_points();
    let mut eq = NormalEquations {
        hcc: DMatrix::zeros(nc, nc),
        hcp: vec![0.0; np * nc],
        hpp: vec![0.0; np],
        gc: DVector::zeros(nc),
        gp: vec![0.0; np],
    };
    // Sequential accumulation in sample order keeps results bit-reproducible.
    for row in rows.iter().flatten() {
        let w = row.weight;
        let mut idx = [(0usize, row.j_lambda), (0, 0.0)];
        let mut len = 1;
        if let Some(slot) = row.gain_slot {
            idx[1] = (slot, row.j_gain);
            len = 2;
        }
        for &(a, ja) in &idx[..len] {
            eq.gc[a] += w * ja * row.residual;
            eq.hcp[row.point * nc + a] += w * ja * row.j_albedo;
            for &(b, jb) in &idx[..len] {
                eq.hcc[(a, b)] += w * ja * jb;
            }
        }
        eq.hpp[row.point] += w * row.j_albedo * row.j_albedo;
        eq.gp[row.point] += w * row.j_albedo * row.residual;
    }
    Ok(eq)
}

fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    a.lu().solve(b)
}

/// Damped step via Schur elimination of the albedo block.
pub(crate) fn solve_schur(eq: &NormalEquations, damping: f64) -> Option<(DVector<f64>, Vec<f64>)> {
    let nc = eq.gc.len();
    let np = eq.hpp.len();
    let mut s = eq.hcc.clone();
    for j in 0..nc {
        s[(j, j)] += damping * eq.hcc[(j, j)].max(DIAGONAL_FLOOR);
    }
    let mut rhs = -eq.gc.clone();
    let mut inv_pp = vec![0.0; np];
    for i in 0..np {
        let d = eq.hpp[i] + damping * eq.hpp[i].max(DIAGONAL_FLOOR);
        if d <= 0.0 {
            continue;
        }
        inv_pp[i] = 1.0 / d;
        let row = &eq.hcp[i * nc..(i + 1) * nc];
        for a in 0..nc {
            rhs[a] += row[a] * eq.gp[i] * inv_pp[i];
            for b in 0..nc {
                s[(a, b)] -= row[a] * row[b] * inv_pp[i];
            }
        }
    }
    let dc = solve_spd(s, &rhs)?;
    let dp = (0..np)
        .map(|i| {
            let row = &eq.hcp[i * nc..(i + 1) * nc];
            let coupling: f64 = row.iter().zip(dc.iter()).map(|(h, d)| h * d).sum();
            (-eq.gp[i] - coupling) * inv_pp[i]
        })
        .collect();
    Some((dc, dp))
}

/// Undamped normal equations assembled as one dense system.
pub(crate) fn dense_system(eq: &NormalEquations) -> (DMatrix<f64>, DVector<f64>) {
    let nc = eq.gc.len();
    let np = eq.hpp.len();
    let n = nc + np;
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    h.view_mut((0, 0), (nc, nc)).copy_from(&eq.hcc);
    for i in 0..np {
        for a in 0..nc {
            let v = eq.hcp[i * nc + a];
            h[(a, nc + i)] = v;
            h[(nc + i, a)] = v;
        }
        h[(nc + i, nc + i)] = eq.hpp[i];
        g[nc + i] = eq.gp[i];
    }
    g.rows_mut(0, nc).copy_from(&eq.gc);
    (h, g)
}

/// Damped step from the full dense system.
pub(crate) fn solve_dense(eq: &NormalEquations, damping: f64) -> Option<(DVector<f64>, Vec<f64>)> {
    let nc = eq.gc.len();
    let np = eq.hpp.len();
    let (mut h, mut g) = dense_system(eq);
    for j in 0..nc + np {
        let d = h[(j, j)];
        h[(j, j)] += damping * d.max(DIAGONAL_FLOOR);
    }
    // Points with no active residual would make the system singular; pin them.
    for i in 0..np {
        if eq.hpp[i] <= 0.0 {
            h[(nc + i, nc + i)] = 1.0;
            g[nc + i] = 0.0;
        }
    }
    let x = solve_spd(h, &(-g))?;
    Some((x.rows(0, nc).into_owned(), x.rows(nc, np).iter().copied().collect()))
}

fn apply_step(state: &State, layout: &Layout, dc: &DVector<f64>, dp: &[f64]) -> State {
    let mut next = state.clone();
    next.lambda = state.lambda * dc[0].exp();
    for (k, slot) in layout.gain_slot.iter().enumerate() {
        if let Some(s) = slot {
            next.gains[k] = state.gains[k] * dc[*s].exp();
        }
    }
    for (a, d) in next.albedos.iter_mut().zip(dp) {
        *a *= d.exp();
    }
    next
}

fn log_norm(state: &State, layout: &Layout) -> f64 {
    let mut s = state.lambda.ln().powi(2);
    for (k, slot) in layout.gain_slot.iter().enumerate() {
        if slot.is_some() {
            s += state.gains[k].ln().powi(2);
        }
    }
    s += state.albedos.iter().map(|a| a.ln().powi(2)).sum::<f64>();
    s.sqrt()
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub state: State,
    pub iterations: usize,
    pub converged: bool,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub warnings: Vec<String>,
}

pub(crate) fn run(
    problem: &Problem,
    initial: State,
    gains_fixed: bool,
    loss: &RobustLossConfig,
    solver: &SolverConfig,
) -> Result<LmOutcome> {
    if !problem.rig.has_baseline() {
        return Err(Error::DegenerateBaseline);
    }
    let layout = Layout::new(problem, gains_fixed);
    let eps = loss.epsilon;
    let mut state = initial;
    let initial_cost = problem.robust_cost(&state, eps, None)?;
    let mut cost = initial_cost;
    let mut damping = solver.initial_damping;
    let mut converged = false;
    let mut iterations = 0;
    let mut warnings = Vec::new();

    'outer: while iterations < solver.max_iterations {
        let eq = linearize(problem, &state, &layout, eps)?;
        if eq.max_gradient() <= solver.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        loop {
            let step = match solver.linear_solver {
                LinearSolver::Schur => solve_schur(&eq, damping),
                LinearSolver::Dense => solve_dense(&eq, damping),
            };
            if let Some((dc, dp)) = step {
                let step_norm = (dc.norm_squared() + dp.iter().map(|d| d * d).sum::<f64>()).sqrt();
                if step_norm <= solver.parameter_tolerance * (log_norm(&state, &layout) + solver.parameter_tolerance) {
                    converged = true;
                    break 'outer;
                }
                let candidate = apply_step(&state, &layout, &dc, &dp);
                match problem.robust_cost(&candidate, eps, None) {
                    Ok(c) if c < cost => {
                        let decrease = cost - c;
                        state = candidate;
                        damping = (damping * 0.5).max(1e-15);
                        if decrease <= solver.function_tolerance * cost {
                            cost = c;
                            converged = true;
                            break 'outer;
                        }
                        cost = c;
                        break;
                    }
                    Ok(_) | Err(Error::SingularGeometry) => {}
                    Err(e) => return Err(e),
                }
            }
            damping *= 2.0;
            if damping > MAX_DAMPING {
                warnings.push("solver stopped: no step decreases the cost".to_string());
                converged = true;
                break 'outer;
            }
        }
    }
    if !converged {
        warnings.push(format!("solver hit the iteration limit ({})", solver.max_iterations));
    }
    Ok(LmOutcome {
        state,
        iterations,
        converged,
        initial_cost,
        final_cost: cost,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon_io::CalibrationRig;
    use crate::simulator::{simulate, SimulationSpec, Surface};

    fn problem(noise: f64, n_points: usize, rig: Option<CalibrationRig>) -> (Problem, State) {
        let mut spec = SimulationSpec::endoscope(Surface::Plane, 0.005, 11);
        spec.noise_sigma = noise;
        spec.scene.n_points = n_points;
        let ds = simulate(&spec).unwrap();
        let mut recon = ds.recon.clone();
        for (id, n) in &ds.truth.normals {
            recon.points.get_mut(id).unwrap().normal = Some(*n);
        }
        let rig = rig.unwrap_or(ds.rig);
        let p = Problem::build(&recon, &rig, &ds.observations, true).unwrap();
        let truth = crate::photomodel::PhotometricParams {
            lambda: 1.0,
            albedos: ds.truth.albedos.clone(),
            gains: ds.truth.gains.clone(),
        };
        let s = p.state_from(&truth).unwrap();
        (p, s)
    }

    fn perturbed(s: &State) -> State {
        let mut t = s.clone();
        t.lambda *= 1.3;
        for (i, a) in t.albedos.iter_mut().enumerate() {
            *a *= 1.0 + 0.05 * ((i % 7) as f64 - 3.0) / 3.0;
        }
        for (k, g) in t.gains.iter_mut().enumerate() {
            if k > 0 {
                *g *= 0.9;
            }
        }
        t
    }

    #[test]
    fn schur_step_equals_dense_step() {
        let (p, s) = problem(4.0 / 255.0, 120, None);
        let layout = Layout::new(&p, false);
        let eq = linearize(&p, &perturbed(&s), &layout, 5.0 / 255.0).unwrap();
        for damping in [0.0, 1e-4, 1.0] {
            let (sc, sp) = solve_schur(&eq, damping).unwrap();
            let (dc, dp) = solve_dense(&eq, damping).unwrap();
            let scale = dc.amax().max(1e-300);
            assert!((sc - &dc).amax() / scale < 1e-9);
            for (a, b) in sp.iter().zip(&dp) {
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn solver_paths_agree_on_scale() {
        let (p, s) = problem(4.0 / 255.0, 150, None);
        let loss = RobustLossConfig::default();
        let mut solver = SolverConfig::default();
        let schur = run(&p, perturbed(&s), false, &loss, &solver).unwrap();
        solver.linear_solver = LinearSolver::Dense;
        let dense = run(&p, perturbed(&s), false, &loss, &solver).unwrap();
        let rel = (schur.state.lambda / dense.state.lambda - 1.0).abs();
        assert!(rel < 1e-8, "relative difference {rel}");
    }

    #[test]
    fn hessian_has_no_null_direction_at_noise_free_optimum() {
        let (p, s) = problem(0.0, 80, None);
        let layout = Layout::new(&p, false);
        let eq = linearize(&p, &s, &layout, 1e9).unwrap();
        let (h, _) = dense_system(&eq);
        let eig = h.symmetric_eigenvalues();
        let max = eig.amax();
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min > 1e-12 * max, "min eigenvalue {min}, max {max}");
    }

    #[test]
    fn zero_baseline_fails_fast() {
        let flat = CalibrationRig::new(vec![nalgebra::Vector3::zeros()], 2.2, crate::recon_io::VignetteModel::none()).unwrap();
        let (p, s) = problem(0.0, 60, Some(flat));
        let err = run(&p, s, false, &RobustLossConfig::default(), &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateBaseline));
    }

    #[test]
    fn cost_never_increases_and_reference_gain_stays_one() {
        let (p, s) = problem(4.0 / 255.0, 100, None);
        let start = perturbed(&s);
        let out = run(&p, start, false, &RobustLossConfig::default(), &SolverConfig::default()).unwrap();
        assert!(out.final_cost <= out.initial_cost);
        assert_eq!(out.state.gains[p.ref_image], 1.0);
    }

    #[test]
    fn fixed_gains_are_left_alone() {
        let (p, s) = problem(4.0 / 255.0, 100, None);
        let out = run(&p, perturbed(&s), true, &RobustLossConfig::default(), &SolverConfig::default()).unwrap();
        assert_eq!(out.state.gains, perturbed(&s).gains);
    }
}
