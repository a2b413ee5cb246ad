//! Time-dependent systems X = Σ b_i(t) X_i: numeric integration (fixed-step
//! RK4 and adaptive Dormand–Prince RK45 with a chart-domain guard),
//! conserved-quantity drift measurement, Wronskian checks, and end-to-end
//! verification of superposition rules against directly integrated
//! references.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::exprs::{ExprError, RatFn, TimeExpr, VarSet};
use crate::geometry::{Chart, GeomError, ProductChart, VectorField};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynError {
    #[error("domain constraint {constraint} fell below the guard at t = {t}")]
    DomainExit { t: f64, constraint: usize },
    #[error("adaptive step size underflow at t = {t}")]
    StepFailure { t: f64 },
    #[error("trajectories live on different time grids")]
    GridMismatch,
    #[error("invariant has a pole on the trajectory at t = {t}")]
    PoleOnTrajectory { t: f64 },
    #[error("could not solve for the superposition constants: {0}")]
    ConstantSolveFailed(String),
    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

pub type DynResult<T> = Result<T, DynError>;

/// Default guard: integration aborts when a domain constraint's magnitude
/// falls below this threshold.
pub const DOMAIN_GUARD: f64 = 1e-9;

/// A time-dependent vector field Σ b_i(t) X_i with bound parameter values.
#[derive(Debug, Clone)]
pub struct TimeDependentField {
    pub chart: Arc<Chart>,
    pub generators: Vec<VectorField>,
    pub coeffs: Vec<TimeExpr>,
    /// Values for chart parameters and free symbols in the b_i(t).
    pub bindings: BTreeMap<String, f64>,
}

impl TimeDependentField {
    pub fn new(
        generators: Vec<VectorField>,
        coeffs: Vec<TimeExpr>,
        bindings: BTreeMap<String, f64>,
    ) -> Self {
        assert_eq!(generators.len(), coeffs.len(), "one coefficient per generator");
        assert!(!generators.is_empty());
        let chart = generators[0].chart.clone();
        for g in &generators {
            assert!(*g.chart == *chart, "generators share one chart");
        }
        TimeDependentField {
            chart,
            generators,
            coeffs,
            bindings,
        }
    }

    fn param_values(&self) -> Vec<f64> {
        self.chart
            .params()
            .iter()
            .map(|p| *self.bindings.get(p).unwrap_or(&f64::NAN))
            .collect()
    }

    fn rhs(&self, t: f64, state: &[f64], params: &[f64], out: &mut [f64]) -> DynResult<()> {
        let mut point = Vec::with_capacity(state.len() + params.len());
        point.extend_from_slice(state);
        point.extend_from_slice(params);
        out.fill(0.0);
        for (g, b) in self.generators.iter().zip(&self.coeffs) {
            let bv = b.eval(t, &self.bindings).map_err(|_| DynError::NonFinite { t })?;
            if bv == 0.0 {
                continue;
            }
            for (i, c) in g.comps().iter().enumerate() {
                if !c.is_zero() {
                    out[i] += bv * c.eval_f64(&point);
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(DynError::NonFinite { t });
        }
        Ok(())
    }

    fn guard(&self, t: f64, state: &[f64], params: &[f64], guard: f64) -> DynResult<()> {
        let mut point = Vec::with_capacity(state.len() + params.len());
        point.extend_from_slice(state);
        point.extend_from_slice(params);
        for (ci, c) in self.chart.constraints().iter().enumerate() {
            if c.eval_f64(&point).abs() < guard {
                return Err(DynError::DomainExit { t, constraint: ci });
            }
        }
        Ok(())
    }
}

/// Integration method selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Classical fixed-step fourth-order Runge–Kutta.
    Rk4 { step: f64 },
    /// Dormand–Prince 5(4) with proportional step control.
    Rk45 { rtol: f64, atol: f64, max_step: f64 },
}

impl Method {
    pub fn default_rk45() -> Method {
        Method::Rk45 {
            rtol: 1e-9,
            atol: 1e-12,
            max_step: 1e-1,
        }
    }
}

/// A computed trajectory on a uniform output grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub method: String,
}

impl Trajectory {
    pub fn state_at(&self, idx: usize) -> &[f64] {
        &self.states[idx]
    }

    /// CSV rows `t, coord...`.
    pub fn to_csv(&self, coords: &[String]) -> String {
        let mut out = String::from("t");
        for c in coords {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t:.12e}"));
            for v in row {
                out.push_str(&format!(",{v:.12e}"));
            }
            out.push('\n');
        }
        out
    }
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate the associated non-autonomous system from `ic` over [t0, t1],
/// producing `n_out` uniformly spaced output states (endpoints included).
pub fn integrate(
    field: &TimeDependentField,
    ic: &[f64],
    t0: f64,
    t1: f64,
    method: Method,
    n_out: usize,
) -> DynResult<Trajectory> {
    assert!(n_out >= 2 && t1 > t0);
    assert_eq!(ic.len(), field.chart.dim());
    let params = field.param_values();
    field.guard(t0, ic, &params, DOMAIN_GUARD)?;
    let times: Vec<f64> = (0..n_out)
        .map(|i| t0 + (t1 - t0) * i as f64 / (n_out - 1) as f64)
        .collect();
    let dim = ic.len();
    let mut states = Vec::with_capacity(n_out);
    states.push(ic.to_vec());
    let mut y = ic.to_vec();
    let mut t = t0;
    let mut h_guess = match method {
        Method::Rk4 { step } => step,
        Method::Rk45 { max_step, .. } => max_step.min((t1 - t0) / 10.0),
    };
    for &t_next in &times[1..] {
        match method {
            Method::Rk4 { step } => {
                while t < t_next - 1e-14 {
                    let h = step.min(t_next - t);
                    y = rk4_step(field, t, &y, &params, h, dim)?;
                    t += h;
                    field.guard(t, &y, &params, DOMAIN_GUARD)?;
                }
            }
            Method::Rk45 {
                rtol,
                atol,
                max_step,
            } => {
                while t < t_next - 1e-14 {
                    let mut h = h_guess.min(max_step).min(t_next - t);
                    loop {
                        let (y5, err) = dp_step(field, t, &y, &params, h, dim, rtol, atol)?;
                        if err <= 1.0 {
                            t += h;
                            y = y5;
                            field.guard(t, &y, &params, DOMAIN_GUARD)?;
                            h_guess = h * (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
                            break;
                        }
                        h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                        if h < 1e-14 * (1.0 + t.abs()) {
                            return Err(DynError::StepFailure { t });
                        }
                    }
                }
            }
        }
        states.push(y.clone());
    }
    Ok(Trajectory {
        times,
        states,
        method: match method {
            Method::Rk4 { .. } => "rk4".into(),
            Method::Rk45 { .. } => "rk45".into(),
        },
    })
}

fn rk4_step(
    field: &TimeDependentField,
    t: f64,
    y: &[f64],
    params: &[f64],
    h: f64,
    dim: usize,
) -> DynResult<Vec<f64>> {
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    field.rhs(t, y, params, &mut k1)?;
    let y2: Vec<f64> = (0..dim).map(|i| y[i] + 0.5 * h * k1[i]).collect();
    field.rhs(t + 0.5 * h, &y2, params, &mut k2)?;
    let y3: Vec<f64> = (0..dim).map(|i| y[i] + 0.5 * h * k2[i]).collect();
    field.rhs(t + 0.5 * h, &y3, params, &mut k3)?;
    let y4: Vec<f64> = (0..dim).map(|i| y[i] + h * k3[i]).collect();
    field.rhs(t + h, &y4, params, &mut k4)?;
    Ok((0..dim)
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn dp_step(
    field: &TimeDependentField,
    t: f64,
    y: &[f64],
    params: &[f64],
    h: f64,
    dim: usize,
    rtol: f64,
    atol: f64,
) -> DynResult<(Vec<f64>, f64)> {
    let mut k = vec![vec![0.0; dim]; 7];
    field.rhs(t, y, params, &mut k[0])?;
    for s in 1..7 {
        let mut ys = y.to_vec();
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = DP_A[s][j];
            if a != 0.0 {
                for i in 0..dim {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        let (head, tail) = k.split_at_mut(s);
        let _ = head;
        field.rhs(t + DP_C[s] * h, &ys, params, &mut tail[0])?;
    }
    let mut y5 = y.to_vec();
    let mut y4 = y.to_vec();
    for (j, kj) in k.iter().enumerate() {
        for i in 0..dim {
            y5[i] += h * DP_B5[j] * kj[i];
            y4[i] += h * DP_B4[j] * kj[i];
        }
    }
    let mut err_sq = 0.0;
    for i in 0..dim {
        let sc = atol + rtol * y[i].abs().max(y5[i].abs());
        let e = (y5[i] - y4[i]) / sc;
        err_sq += e * e;
    }
    let err = (err_sq / dim as f64).sqrt();
    if !err.is_finite() {
        return Err(DynError::NonFinite { t });
    }
    Ok((y5, err))
}

/// Join trajectories on a common grid into one wide trajectory.
pub fn join(trajs: &[&Trajectory]) -> DynResult<Trajectory> {
    assert!(!trajs.is_empty());
    let times = trajs[0].times.clone();
    for tr in trajs {
        if tr.times.len() != times.len()
            || tr
                .times
                .iter()
                .zip(&times)
                .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(DynError::GridMismatch);
        }
    }
    let states = (0..times.len())
        .map(|i| {
            trajs
                .iter()
                .flat_map(|tr| tr.states[i].iter().copied())
                .collect()
        })
        .collect();
    Ok(Trajectory {
        times,
        states,
        method: trajs[0].method.clone(),
    })
}

/// Apply a per-row output map (rational functions of the run's coordinates
/// and parameters) to a trajectory.
pub fn map_trajectory(
    traj: &Trajectory,
    exprs: &[RatFn],
    params: &[f64],
) -> DynResult<Trajectory> {
    let mut states = Vec::with_capacity(traj.states.len());
    for (t, row) in traj.times.iter().zip(&traj.states) {
        let mut point = row.clone();
        point.extend_from_slice(params);
        let mut out = Vec::with_capacity(exprs.len());
        for e in exprs {
            let v = e.eval_f64(&point);
            if !v.is_finite() {
                // Keep the row; downstream comparisons mask non-finite slots.
                out.push(f64::NAN);
            } else {
                out.push(v);
            }
        }
        let _ = t;
        states.push(out);
    }
    Ok(Trajectory {
        times: traj.times.clone(),
        states,
        method: traj.method.clone(),
    })
}

/// Per-invariant drift along a (joint) trajectory.
#[derive(Debug, Clone)]
pub struct DriftReport {
    pub entries: Vec<DriftEntry>,
}

#[derive(Debug, Clone)]
pub struct DriftEntry {
    pub initial: f64,
    pub max_abs_drift: f64,
    pub max_rel_drift: f64,
}

/// Evaluate each invariant along the rows and report |I(t) − I(t0)|,
/// absolute and relative.
pub fn drift(traj: &Trajectory, invariants: &[RatFn], params: &[f64]) -> DynResult<DriftReport> {
    let mut entries = Vec::with_capacity(invariants.len());
    for inv in invariants {
        let mut initial = None;
        let mut max_abs: f64 = 0.0;
        for (t, row) in traj.times.iter().zip(&traj.states) {
            let mut point = row.clone();
            point.extend_from_slice(params);
            let den = inv.den_f64(&point);
            if den.abs() < 1e-12 {
                return Err(DynError::PoleOnTrajectory { t: *t });
            }
            let v = inv.eval_f64(&point);
            if !v.is_finite() {
                return Err(DynError::PoleOnTrajectory { t: *t });
            }
            match initial {
                None => initial = Some(v),
                Some(i0) => max_abs = max_abs.max((v - i0).abs()),
            }
        }
        let i0 = initial.unwrap_or(0.0);
        let scale = i0.abs().max(1.0);
        entries.push(DriftEntry {
            initial: i0,
            max_abs_drift: max_abs,
            max_rel_drift: max_abs / scale,
        });
    }
    Ok(DriftReport { entries })
}

/// Wronskian drift of two planar homogeneous solutions:
/// W = x_B y_A − x_A y_B.
pub fn wronskian_check(a: &Trajectory, b: &Trajectory) -> DynResult<DriftEntry> {
    if a.times.len() != b.times.len() {
        return Err(DynError::GridMismatch);
    }
    let mut initial = None;
    let mut max_abs: f64 = 0.0;
    for i in 0..a.times.len() {
        let (xa, ya) = (a.states[i][0], a.states[i][1]);
        let (xb, yb) = (b.states[i][0], b.states[i][1]);
        let w = xb * ya - xa * yb;
        match initial {
            None => initial = Some(w),
            Some(w0) => max_abs = max_abs.max((w - w0).abs()),
        }
    }
    let w0 = initial.unwrap_or(0.0);
    Ok(DriftEntry {
        initial: w0,
        max_abs_drift: max_abs,
        max_rel_drift: max_abs / w0.abs().max(1.0),
    })
}

/// Reconstruction expression for one target coordinate: a rational function
/// of the input coordinates and constants, or a signed square root of one
/// (sign resolved by the initial condition and continuity).
#[derive(Debug, Clone)]
pub enum ReconExpr {
    Rf(RatFn),
    SqrtSigned(RatFn),
}

/// A (mixed) superposition rule: block 0 of the product chart is the target
/// system, the remaining blocks are the input systems.
#[derive(Debug, Clone)]
pub struct SuperpositionRule {
    pub product: ProductChart,
    pub constants: Vec<String>,
    /// One reconstruction expression per target coordinate, over the product
    /// coordinates, the parameters, and the constants.
    pub exprs: Vec<ReconExpr>,
    /// Constant-defining invariants: k_j = I_j(target ic, inputs(t0)).
    /// May be empty, in which case constants are found by damped Newton.
    pub invariants: Vec<RatFn>,
    /// Variable context of `exprs`: product coordinates ++ parameters ++
    /// constants.
    pub rule_vars: VarSet,
}

impl SuperpositionRule {
    pub fn rule_vars_for(product: &ProductChart, constants: &[String]) -> VarSet {
        let mut names: Vec<String> = (**product.chart.vars()).clone();
        names.extend(constants.iter().cloned());
        Arc::new(names)
    }
}

/// Result of verifying a superposition rule against a reference run.
#[derive(Debug, Clone)]
pub struct ReconReport {
    pub constants: Vec<f64>,
    pub sup_error: f64,
    pub compared_points: usize,
    pub total_points: usize,
    /// Constants re-solved at the end of the run (invariant path only).
    pub constants_end: Option<Vec<f64>>,
    /// Reconstructed rows; `None` where the rule was undefined at that point.
    pub reconstruction: Vec<Option<Vec<f64>>>,
}

/// Verify a rule: solve the constants at t0, reconstruct the target
/// trajectory from the inputs, and compare with the reference in sup norm.
/// Grid points where a denominator magnitude falls below `guard`, a square
/// root argument is non-positive, or a reference value exceeds `value_cap`
/// are excluded from the comparison (the rule holds on the open set where
/// the chart applies); the report carries the coverage.
pub fn verify_superposition(
    rule: &SuperpositionRule,
    reference: &Trajectory,
    inputs: &[&Trajectory],
    param_values: &[f64],
    guard: f64,
    value_cap: f64,
) -> DynResult<ReconReport> {
    let joined_inputs = join(inputs)?;
    if joined_inputs.times.len() != reference.times.len()
        || joined_inputs
            .times
            .iter()
            .zip(&reference.times)
            .any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(DynError::GridMismatch);
    }
    let target_dim = rule.product.block(0).factor.dim();
    let n_params = rule.product.chart.params().len();
    let n_consts = rule.constants.len();

    // Point layout for rule_vars: [target block, inputs, params, constants].
    let assemble = |target: &[f64], inp: &[f64], consts: &[f64]| -> Vec<f64> {
        let mut p = Vec::with_capacity(rule.rule_vars.len());
        p.extend_from_slice(target);
        p.extend_from_slice(inp);
        p.extend_from_slice(param_values);
        p.extend_from_slice(consts);
        debug_assert_eq!(p.len(), rule.product.chart.dim() + n_params + n_consts);
        p
    };

    // Solve the constants at t0.
    let ic = &reference.states[0];
    let inputs0 = &joined_inputs.states[0];
    let solve_at = |row: usize| -> DynResult<Vec<f64>> {
        if !rule.invariants.is_empty() {
            // Closed form: k_j = I_j at the joint point.
            let mut point = Vec::new();
            point.extend_from_slice(&reference.states[row]);
            point.extend_from_slice(&joined_inputs.states[row]);
            point.extend_from_slice(param_values);
            let mut ks = Vec::with_capacity(rule.invariants.len());
            for inv in &rule.invariants {
                if inv.den_f64(&point).abs() < guard {
                    return Err(DynError::ConstantSolveFailed(
                        "invariant pole at the solve point".into(),
                    ));
                }
                let v = inv.eval_f64(&point);
                if !v.is_finite() {
                    return Err(DynError::ConstantSolveFailed("non-finite invariant".into()));
                }
                ks.push(v);
            }
            Ok(ks)
        } else {
            newton_constants(rule, ic, inputs0, param_values, &assemble)
        }
    };
    let consts = solve_at(0)?;

    // Reconstruct along the grid.
    let zeros = vec![0.0; target_dim];
    let mut sup: f64 = 0.0;
    let mut compared = 0;
    let mut prev: Vec<Option<f64>> = vec![None; target_dim];
    let mut reconstruction: Vec<Option<Vec<f64>>> = Vec::with_capacity(reference.times.len());
    for row in 0..reference.times.len() {
        let point = assemble(&zeros, &joined_inputs.states[row], &consts);
        let mut ok = true;
        let mut rec = Vec::with_capacity(target_dim);
        for (ci, e) in rule.exprs.iter().enumerate() {
            match e {
                ReconExpr::Rf(f) => {
                    if f.den_f64(&point).abs() < guard {
                        ok = false;
                        break;
                    }
                    let v = f.eval_f64(&point);
                    if !v.is_finite() {
                        ok = false;
                        break;
                    }
                    rec.push(v);
                }
                ReconExpr::SqrtSigned(f) => {
                    if f.den_f64(&point).abs() < guard {
                        ok = false;
                        break;
                    }
                    let v = f.eval_f64(&point);
                    if !v.is_finite() || v <= 0.0 {
                        ok = false;
                        break;
                    }
                    let mag = v.sqrt();
                    let sign = match prev[ci] {
                        // First valid point: match the reference.
                        None => {
                            if reference.states[row][ci] >= 0.0 {
                                1.0
                            } else {
                                -1.0
                            }
                        }
                        Some(p) => {
                            // Continuity in the value and in its reciprocal
                            // (the latter rules the neighborhood of poles).
                            let d_plus = (mag - p).abs().min((1.0 / mag - 1.0 / p).abs());
                            let d_minus = (-mag - p).abs().min((-1.0 / mag - 1.0 / p).abs());
                            if d_plus <= d_minus {
                                1.0
                            } else {
                                -1.0
                            }
                        }
                    };
                    rec.push(sign * mag);
                }
            }
        }
        if !ok {
            reconstruction.push(None);
            continue;
        }
        for (ci, v) in rec.iter().enumerate() {
            prev[ci] = Some(*v);
        }
        let reference_row = &reference.states[row];
        let comparable = !reference_row
            .iter()
            .any(|v| !v.is_finite() || v.abs() > value_cap);
        if comparable {
            compared += 1;
            for (ci, v) in rec.iter().enumerate() {
                sup = sup.max((v - reference_row[ci]).abs());
            }
        }
        reconstruction.push(Some(rec));
    }
    // Re-solve the constants at the end of the run when a closed form exists.
    let constants_end = if !rule.invariants.is_empty() {
        solve_at(reference.times.len() - 1).ok()
    } else {
        None
    };
    Ok(ReconReport {
        constants: consts,
        sup_error: sup,
        compared_points: compared,
        total_points: reference.times.len(),
        constants_end,
        reconstruction,
    })
}

/// Damped Newton with a finite-difference Jacobian on the reconstruction
/// residual at t0; all expressions must be rational for this path.
fn newton_constants(
    rule: &SuperpositionRule,
    target_ic: &[f64],
    inputs0: &[f64],
    _params: &[f64],
    assemble: &dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64>,
) -> DynResult<Vec<f64>> {
    let m = rule.constants.len();
    let residual = |k: &[f64]| -> Option<Vec<f64>> {
        let point = assemble(&vec![0.0; target_ic.len()], inputs0, k);
        let mut r = Vec::with_capacity(target_ic.len());
        for (ci, e) in rule.exprs.iter().enumerate() {
            match e {
                ReconExpr::Rf(f) => {
                    let v = f.eval_f64(&point);
                    if !v.is_finite() {
                        return None;
                    }
                    r.push(v - target_ic[ci]);
                }
                ReconExpr::SqrtSigned(_) => return None,
            }
        }
        Some(r)
    };
    let mut k = vec![0.0; m];
    for _ in 0..50 {
        let r = residual(&k).ok_or_else(|| {
            DynError::ConstantSolveFailed("residual undefined during Newton".into())
        })?;
        let norm: f64 = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Ok(k);
        }
        // Finite-difference Jacobian (n_res × m).
        let eps = 1e-7;
        let nr = r.len();
        let mut jac = vec![vec![0.0; m]; nr];
        for j in 0..m {
            let mut kp = k.clone();
            kp[j] += eps;
            let rp = residual(&kp).ok_or_else(|| {
                DynError::ConstantSolveFailed("residual undefined during Newton".into())
            })?;
            for i in 0..nr {
                jac[i][j] = (rp[i] - r[i]) / eps;
            }
        }
        // Least-squares step via normal equations (problems here are tiny).
        let mut ata = vec![vec![0.0; m]; m];
        let mut atb = vec![0.0; m];
        for i in 0..nr {
            for a in 0..m {
                atb[a] += jac[i][a] * r[i];
                for b in 0..m {
                    ata[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        let step = solve_dense(&mut ata, &mut atb)
            .ok_or_else(|| DynError::ConstantSolveFailed("singular Newton system".into()))?;
        // Damped update.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let cand: Vec<f64> = (0..m).map(|j| k[j] - lambda * step[j]).collect();
            if let Some(rc) = residual(&cand) {
                let cn: f64 = rc.iter().map(|x| x * x).sum::<f64>().sqrt();
                if cn < norm {
                    k = cand;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(DynError::ConstantSolveFailed(
                "damped Newton stalled".into(),
            ));
        }
    }
    let r = residual(&k)
        .ok_or_else(|| DynError::ConstantSolveFailed("residual undefined".into()))?;
    let norm: f64 = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-8 {
        Ok(k)
    } else {
        Err(DynError::ConstantSolveFailed(format!(
            "Newton did not converge (residual {norm:.3e})"
        )))
    }
}

fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Generators of the perturbation hierarchy on (v_1..v_n, w_1..w_n):
/// v_j ∂_{v_k}, then per target w_ℓ the fields w_j ∂_{w_ℓ} and the quadratic
/// sources v_j v_k ∂_{w_ℓ} (j ≤ k). Dimension 2n² + n·n(n+1)/2.
pub fn perturbation_generators(n: usize) -> (Arc<Chart>, Vec<VectorField>) {
    assert!(n >= 1);
    let mut coords = Vec::with_capacity(2 * n);
    for i in 1..=n {
        coords.push(format!("v{i}"));
    }
    for i in 1..=n {
        coords.push(format!("w{i}"));
    }
    let chart = Chart::new("perturbation", &coords, &[], &[]).unwrap();
    let vars = chart.vars();
    let mut gens = Vec::new();
    let mut make = |target: usize, f: RatFn| {
        let mut comps = vec![RatFn::zero(vars); 2 * n];
        comps[target] = f;
        gens.push(VectorField::new(&chart, comps));
    };
    // v_j ∂_{v_k}, ordered by target coordinate then source.
    for k in 0..n {
        for j in 0..n {
            make(k, RatFn::var(vars, j));
        }
    }
    // Per w_ℓ: w_j ∂_{w_ℓ} then v_j v_k ∂_{w_ℓ} for j ≤ k.
    for l in 0..n {
        for j in 0..n {
            make(n + l, RatFn::var(vars, n + j));
        }
        for j in 0..n {
            for k in j..n {
                let f = RatFn::var(vars, j).mul(&RatFn::var(vars, k));
                make(n + l, f);
            }
        }
    }
    (chart, gens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprs::parse_time;

    fn oscillator_field(omega_expr: &str) -> TimeDependentField {
        // q' = p, p' = -Ω²(t) q as X3 + Ω²(t) X1 with X3 = p∂q, X1 = -q∂p.
        let c = Chart::new("T*R", &["q", "p"], &[], &[]).unwrap();
        let x1 = VectorField::parse(&c, &["0", "-q"]).unwrap();
        let x3 = VectorField::parse(&c, &["p", "0"]).unwrap();
        TimeDependentField::new(
            vec![x3, x1],
            vec![
                parse_time("1").unwrap(),
                parse_time(&format!("({omega_expr})^2")).unwrap(),
            ],
            BTreeMap::new(),
        )
    }

    #[test]
    fn oscillator_matches_closed_form() {
        let f = oscillator_field("1");
        let traj = integrate(
            &f,
            &[1.0, 0.0],
            0.0,
            2.0 * std::f64::consts::PI,
            Method::Rk45 {
                rtol: 1e-10,
                atol: 1e-13,
                max_step: 0.1,
            },
            101,
        )
        .unwrap();
        let mut max_err: f64 = 0.0;
        for (t, row) in traj.times.iter().zip(&traj.states) {
            max_err = max_err.max((row[0] - t.cos()).abs());
            max_err = max_err.max((row[1] + t.sin()).abs());
        }
        assert!(max_err < 1e-8, "max error {max_err}");
    }

    #[test]
    fn zero_field_constant_trajectory() {
        let c = Chart::new("R", &["x"], &[], &[]).unwrap();
        let z = VectorField::zero(&c);
        let f = TimeDependentField::new(
            vec![z],
            vec![parse_time("1").unwrap()],
            BTreeMap::new(),
        );
        let traj = integrate(&f, &[3.0], 0.0, 1.0, Method::Rk4 { step: 0.1 }, 11).unwrap();
        assert!(traj.states.iter().all(|s| s[0] == 3.0));
    }

    #[test]
    fn riccati_translation_case() {
        // b1 = b3 = b4 = 0, b2 = -1: x' = 1, y and z constant.
        let m = Chart::new("M", &["x", "y", "z"], &[], &["y*z"]).unwrap();
        let x1 = VectorField::parse(&m, &["4*x^2", "4*x*y", "-4*x*z"]).unwrap();
        let x2 = VectorField::parse(&m, &["-1", "0", "0"]).unwrap();
        let x3 = VectorField::parse(&m, &["2*x", "y", "0"]).unwrap();
        let x4 = VectorField::parse(&m, &["0", "0", "-2*z"]).unwrap();
        let f = TimeDependentField::new(
            vec![x1, x2, x3, x4],
            vec![
                parse_time("0").unwrap(),
                parse_time("-1").unwrap(),
                parse_time("0").unwrap(),
                parse_time("0").unwrap(),
            ],
            BTreeMap::new(),
        );
        let traj = integrate(&f, &[0.5, 1.0, 2.0], 0.0, 1.0, Method::default_rk45(), 21).unwrap();
        let last = traj.states.last().unwrap();
        assert!((last[0] - 1.5).abs() < 1e-9);
        assert!((last[1] - 1.0).abs() < 1e-10);
        assert!((last[2] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn domain_guard_fires() {
        // y' = -y crosses no zero, but z' = -10 z drives z to 0 fast enough
        // that a long integration hits the guard... instead use x' = -1 with
        // constraint x: exits when x reaches 0.
        let m = Chart::new("Mx", &["x"], &[], &["x"]).unwrap();
        let f = TimeDependentField::new(
            vec![VectorField::parse(&m, &["-1"]).unwrap()],
            vec![parse_time("1").unwrap()],
            BTreeMap::new(),
        );
        let r = integrate(&f, &[0.5], 0.0, 1.0, Method::default_rk45(), 11);
        assert!(matches!(r, Err(DynError::DomainExit { .. })));
    }

    #[test]
    fn rk4_is_fourth_order() {
        let f = oscillator_field("1");
        let endpoint_error = |h: f64| -> f64 {
            let traj = integrate(
                &f,
                &[1.0, 0.0],
                0.0,
                2.0 * std::f64::consts::PI,
                Method::Rk4 { step: h },
                2,
            )
            .unwrap();
            let last = traj.states.last().unwrap();
            ((last[0] - 1.0).powi(2) + last[1].powi(2)).sqrt()
        };
        let e1 = endpoint_error(0.02);
        let e2 = endpoint_error(0.01);
        let ratio = e1 / e2;
        assert!(
            (12.0..=20.0).contains(&ratio),
            "convergence ratio {ratio} outside [12, 20]"
        );
    }

    #[test]
    fn constant_invariant_has_zero_drift() {
        let f = oscillator_field("1");
        let traj = integrate(&f, &[1.0, 0.0], 0.0, 3.0, Method::default_rk45(), 61).unwrap();
        let c = &f.chart;
        let inv = c.parse("7").unwrap();
        let rep = drift(&traj, &[inv], &[]).unwrap();
        assert_eq!(rep.entries[0].max_abs_drift, 0.0);
        // Energy of the constant-frequency oscillator drifts within budget.
        let energy = c.parse("q^2 + p^2").unwrap();
        let rep = drift(&traj, &[energy], &[]).unwrap();
        assert!(rep.entries[0].max_rel_drift < 1e-8);
    }

    #[test]
    fn wronskian_of_trace_free_system() {
        // x' = y, y' = -x (trace-free): two independent solutions.
        let c = Chart::new("R2", &["x", "y"], &[], &[]).unwrap();
        let a = VectorField::parse(&c, &["y", "-x"]).unwrap();
        let f = TimeDependentField::new(
            vec![a],
            vec![parse_time("1").unwrap()],
            BTreeMap::new(),
        );
        let t1 = integrate(&f, &[1.0, 0.0], 0.0, 5.0, Method::default_rk45(), 101).unwrap();
        let t2 = integrate(&f, &[0.0, 1.0], 0.0, 5.0, Method::default_rk45(), 101).unwrap();
        let w = wronskian_check(&t1, &t2).unwrap();
        assert!(w.max_abs_drift < 1e-8);
        // Identical solutions: W ≡ 0.
        let w0 = wronskian_check(&t1, &t1).unwrap();
        assert_eq!(w0.initial, 0.0);
        assert_eq!(w0.max_abs_drift, 0.0);
    }

    #[test]
    fn perturbation_generator_counts() {
        let (_, g1) = perturbation_generators(1);
        assert_eq!(g1.len(), 3);
        let (_, g2) = perturbation_generators(2);
        assert_eq!(g2.len(), 14);
        let (_, g3) = perturbation_generators(3);
        assert_eq!(g3.len(), 2 * 9 + 3 * 6);
    }
}
