//! Batch front end: build the discretization from a configuration, run the
//! nested solves, recover the pressure and emit the output files.
//!
//! Exit policy: 0 for a converged run, 2 when the fixed points fail to
//! contract (after the configured number of time-window halvings), 1 for
//! configuration or input errors. Every failure leaves a machine-readable
//! `failure_report.csv` in the output directory.

use crate::assembly::Discretization;
use crate::config::{CompatMode, FieldSpec, RunConfig};
use crate::diagnostics::{
    check_compatibility, energy_ledger, interface_residuals, CompatibilityReport, PressureRates,
};
use crate::error::{Error, Result};
use crate::fields::RegionField;
use crate::kinematics::MapState;
use crate::mesh::{load_mesh, Region};
use crate::output::{fmt_full, OutputWriter};
use crate::pressure::{measure_infsup, recover_pressure, InfSupReport, PressureField};
use crate::solver::{
    map_state_at, nonlinear_solve, time_window_bisect, SolveContext, SolveOutput, SolverConfig,
};
use nalgebra::Vector3;

/// Initial data resolved from the configuration.
pub struct InitialData {
    pub v0: RegionField,
    pub xi1: RegionField,
    /// Nodal pressure values on the pressure space.
    pub p0: Vec<f64>,
    pub rates: PressureRates,
}

fn load_dof_file(path: &str, len: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = vec![0.0; len];
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(i), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::config(
                path,
                format!("line {}: expected `index value`", lineno + 1),
            ));
        };
        let idx: usize = i
            .parse()
            .map_err(|_| Error::config(path, format!("bad index `{i}`")))?;
        if idx >= len {
            return Err(Error::config(
                path,
                format!("index {idx} out of range (field has {len} entries)"),
            ));
        }
        out[idx] = v
            .parse()
            .map_err(|_| Error::config(path, format!("bad value `{v}`")))?;
    }
    Ok(out)
}

fn solid_centroid(disc: &Discretization) -> Vector3<f64> {
    let mut acc = Vector3::zeros();
    let mut vol = 0.0;
    for cell in disc.mesh.region_cells(Region::Solid) {
        let v = disc.mesh.cell_vertices(cell);
        let c = (v[0] + v[1] + v[2] + v[3]) / 4.0;
        let w = disc.mesh.cell_volume(cell);
        acc += w * c;
        vol += w;
    }
    acc / vol
}

fn eval_spec(
    disc: &Discretization,
    spec: &FieldSpec,
    region: Region,
    key: &str,
) -> Result<RegionField> {
    let scalar = &disc.space.scalar;
    match spec {
        FieldSpec::Zero => Ok(RegionField::zeros(scalar.n_nodes(), region)),
        FieldSpec::Shear(a) => {
            let a = *a;
            Ok(RegionField::from_fn(scalar, region, move |p| {
                Vector3::new(a * p.y, 0.0, 0.0)
            }))
        }
        FieldSpec::Dilation(a) => {
            let a = *a;
            let c = solid_centroid(disc);
            Ok(RegionField::from_fn(scalar, region, move |p| a * (p - c)))
        }
        FieldSpec::File(path) => {
            let values = load_dof_file(path, 3 * scalar.n_nodes())?;
            Ok(RegionField { region, values })
        }
    }
    .map_err(|e: Error| match e {
        Error::Config { msg, .. } => Error::config(key, msg),
        other => other,
    })
}

/// Resolve the configured initial data, projecting the raw pair into the
/// divergence-free space when requested (analytic presets rely on this for
/// interface compatibility).
pub fn build_initial_data(ctx: &SolveContext, cfg: &RunConfig) -> Result<InitialData> {
    let disc = &ctx.disc;
    let scalar = &disc.space.scalar;
    let v0_raw = eval_spec(disc, &cfg.v0, Region::Fluid, "initial.v0")?;
    let xi1_raw = eval_spec(disc, &cfg.xi1, Region::Solid, "initial.xi1")?;

    let (v0, xi1) = if cfg.project_initial {
        // merge the raw formulas (fluid wins on the shared interface
        // nodes), project onto the basis, split back per region
        let mut raw = vec![0.0; disc.n_dofs()];
        for n in 0..scalar.n_nodes() {
            let in_f = scalar.node_region[n] & crate::space::REGION_FLUID != 0;
            for c in 0..3 {
                raw[3 * n + c] = if in_f {
                    v0_raw.values[3 * n + c]
                } else {
                    xi1_raw.values[3 * n + c]
                };
            }
        }
        let coeffs = crate::assembly::project_initial(&ctx.basis, &ctx.mass_rho, &raw)?;
        let projected = crate::assembly::expand(&ctx.basis, &coeffs);
        let mut v0 = RegionField::zeros(scalar.n_nodes(), Region::Fluid);
        let mut xi1 = RegionField::zeros(scalar.n_nodes(), Region::Solid);
        for n in 0..scalar.n_nodes() {
            for c in 0..3 {
                if scalar.node_region[n] & crate::space::REGION_FLUID != 0 {
                    v0.values[3 * n + c] = projected[3 * n + c];
                }
                if scalar.node_region[n] & crate::space::REGION_SOLID != 0 {
                    xi1.values[3 * n + c] = projected[3 * n + c];
                }
            }
        }
        (v0, xi1)
    } else {
        (v0_raw, xi1_raw)
    };

    let np = disc.pressure_space.n_nodes();
    let p0 = match &cfg.p0 {
        FieldSpec::Zero => vec![0.0; np],
        FieldSpec::File(path) => load_dof_file(path, np)?,
        other => {
            return Err(Error::config(
                "initial.p0",
                format!("unsupported pressure spec {other:?}"),
            ))
        }
    };
    let rates = PressureRates {
        first: cfg
            .dp0_dt
            .as_ref()
            .map(|p| load_dof_file(p, np))
            .transpose()?,
        second: cfg
            .d2p0_dt2
            .as_ref()
            .map(|p| load_dof_file(p, np))
            .transpose()?,
    };
    Ok(InitialData { v0, xi1, p0, rates })
}

/// Everything a finished run hands back to callers and tests.
pub struct RunArtifacts {
    pub output: SolveOutput,
    pub pressures: Vec<PressureField>,
    pub compat: CompatibilityReport,
    pub config_used: SolverConfig,
    pub halvings: usize,
}

/// Recover the pressure at each step midpoint from the converged
/// trajectory; the velocity rate is the scheme's own difference quotient,
/// so the momentum residual vanishes to roundoff.
pub fn recover_trajectory_pressure(
    ctx: &SolveContext,
    out: &SolveOutput,
    cfg: &SolverConfig,
) -> Result<Vec<PressureField>> {
    let traj = &out.trajectory;
    let mut fields = Vec::with_capacity(traj.n_steps());
    for k in 0..traj.n_steps() {
        let dt = traj.times[k + 1] - traj.times[k];
        let t_mid = 0.5 * (traj.times[k] + traj.times[k + 1]);
        let map = map_state_at(ctx, &out.final_given, t_mid, cfg.det_floor)?;
        let v_mid: Vec<f64> = traj.gamma[k]
            .iter()
            .zip(&traj.gamma[k + 1])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let v_rate: Vec<f64> = traj.gamma[k + 1]
            .iter()
            .zip(&traj.gamma[k])
            .map(|(a, b)| (a - b) / dt)
            .collect();
        fields.push(recover_pressure(&ctx.disc, &map, &v_mid, &v_rate, t_mid)?);
    }
    Ok(fields)
}

/// Full batch run: solve, post-process, write outputs.
pub fn run(cfg: &RunConfig) -> Result<RunArtifacts> {
    let writer = OutputWriter::new(&cfg.output_dir);
    match run_inner(cfg, &writer) {
        Ok(artifacts) => Ok(artifacts),
        Err(e) => {
            // machine-readable failure plus header-only ledgers
            let _ = writer.failure(&e, "run");
            let _ = writer.empty_ledgers();
            Err(e)
        }
    }
}

fn run_inner(cfg: &RunConfig, writer: &OutputWriter) -> Result<RunArtifacts> {
    cfg.validate()?;
    let mesh = load_mesh(&cfg.mesh_path)?;
    let disc = Discretization::new(mesh, cfg.degree, cfg.material)?;
    let ctx = SolveContext::new(disc)?;
    let data = build_initial_data(&ctx, cfg)?;

    let compat = check_compatibility(&ctx.disc, &data.v0, &data.xi1, &data.p0, &data.rates)?;
    writer.compat(&compat)?;
    match cfg.compat {
        CompatMode::Strict if !compat.passed() => {
            return Err(Error::IncompatibleData(format!(
                "enforced conditions failed: {:?}",
                compat.failures()
            )));
        }
        _ => {}
    }

    let solver_cfg = cfg.solver_config();
    let (output, config_used, halvings) = time_window_bisect(&solver_cfg, |c| {
        nonlinear_solve(&ctx, &data.v0, &data.xi1, c)
    })?;

    let pressures = if cfg.recover_pressure {
        recover_trajectory_pressure(&ctx, &output, &config_used)?
    } else {
        Vec::new()
    };

    let residuals = interface_residuals(
        &ctx,
        &output.trajectory,
        &output.final_given,
        &output.final_datum.samples,
        config_used.det_floor,
    )?;
    let ledger = energy_ledger(&output.trajectory, cfg.ledger_tol);

    writer.timeseries(&output.trajectory, Some(&residuals.traction))?;
    writer.energy_ledger(&output.trajectory)?;
    writer.contraction_log(&output.outer_log, &output.inner_logs)?;
    writer.membership(&output.membership)?;
    writer.field_snapshot(
        "field_v_final.csv",
        &ctx.disc,
        output.trajectory.gamma.last().unwrap(),
    )?;
    writer.field_snapshot(
        "field_xi_final.csv",
        &ctx.disc,
        output.trajectory.xi.last().unwrap(),
    )?;
    if let Some(last) = pressures.last() {
        writer.pressure_series(&ctx.disc, &pressures)?;
        writer.pressure_snapshot("field_p_final.csv", &ctx.disc, last)?;
    }

    // conditioning of the weighted mass in the basis (near one by
    // orthonormalization; a factorization failing would have aborted)
    let mass_condition = {
        let gram = ctx.basis.basis.transpose() * &ctx.mass_rho * &ctx.basis.basis;
        let eig = gram.symmetric_eigenvalues();
        let max = eig.iter().cloned().fold(f64::MIN, f64::max);
        let min = eig.iter().cloned().fold(f64::MAX, f64::min);
        max / min.max(1e-300)
    };

    let summary = vec![
        ("exit_status".to_string(), "0".to_string()),
        ("mesh".to_string(), cfg.mesh_path.clone()),
        ("basis_dim".to_string(), ctx.n_basis().to_string()),
        (
            "mass_condition".to_string(),
            fmt_full(mass_condition),
        ),
        ("steps".to_string(), output.trajectory.n_steps().to_string()),
        ("t_end_used".to_string(), fmt_full(config_used.t_end)),
        ("dt_used".to_string(), fmt_full(config_used.dt)),
        ("halvings".to_string(), halvings.to_string()),
        (
            "outer_iterations".to_string(),
            output.outer_log.iters.len().to_string(),
        ),
        (
            "velocity_norm".to_string(),
            fmt_full(output.trajectory.velocity_norm()),
        ),
        (
            "displacement_norm".to_string(),
            fmt_full(output.trajectory.displacement_norm()),
        ),
        (
            "max_ledger_imbalance".to_string(),
            fmt_full(ledger.max_relative_imbalance),
        ),
        (
            "apriori_ratio".to_string(),
            fmt_full(output.trajectory.apriori.ratio),
        ),
        (
            "compat_passed".to_string(),
            compat.passed().to_string(),
        ),
    ];
    writer.summary(&summary)?;

    Ok(RunArtifacts {
        output,
        pressures,
        compat,
        config_used,
        halvings,
    })
}

/// `check` subcommand: compatibility report only.
pub fn check(cfg: &RunConfig) -> Result<CompatibilityReport> {
    cfg.validate()?;
    let mesh = load_mesh(&cfg.mesh_path)?;
    let disc = Discretization::new(mesh, cfg.degree, cfg.material)?;
    let ctx = SolveContext::new(disc)?;
    let data = build_initial_data(&ctx, cfg)?;
    let report = check_compatibility(&ctx.disc, &data.v0, &data.xi1, &data.p0, &data.rates)?;
    OutputWriter::new(&cfg.output_dir).compat(&report)?;
    Ok(report)
}

/// `infsup` subcommand: measure the discrete inf-sup constant of the
/// configured pair on the identity maps.
pub fn infsup(cfg: &RunConfig) -> Result<InfSupReport> {
    cfg.validate()?;
    let mesh = load_mesh(&cfg.mesh_path)?;
    let disc = Discretization::new(mesh, cfg.degree, cfg.material)?;
    let id = MapState::identity(&disc.mesh, disc.n_qp(), 0.0);
    let report = measure_infsup(&disc, &id)?;
    let writer = OutputWriter::new(&cfg.output_dir);
    let rows = vec![
        ("beta_h".to_string(), fmt_full(report.beta_h)),
        (
            "velocity_degree".to_string(),
            report.velocity_degree.to_string(),
        ),
        (
            "pressure_degree".to_string(),
            report.pressure_degree.to_string(),
        ),
        ("n_test_dofs".to_string(), report.n_test_dofs.to_string()),
        (
            "n_pressure_dofs".to_string(),
            report.n_pressure_dofs.to_string(),
        ),
        ("threshold".to_string(), fmt_full(report.threshold)),
        ("pass".to_string(), report.pass.to_string()),
    ];
    writer.summary(&rows)?;
    Ok(report)
}

/// Outcome of the constitutive self-test: worst relative error of the
/// analytic tangents against their central-difference oracles.
pub struct SelfTestReport {
    pub max_elastic_err: f64,
    pub max_penalty_err: f64,
    pub samples: usize,
    pub tolerance: f64,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.max_elastic_err <= self.tolerance && self.max_penalty_err <= self.tolerance
    }
}

/// `tensor-selftest` subcommand: finite-difference verification of the
/// analytic coefficient tensors on seeded random displacement gradients.
pub fn tensor_selftest() -> SelfTestReport {
    use crate::constitutive::{
        first_piola, penalty_stress, quasi_inc_coefficients, svk_coefficients, Coeffs81,
        MaterialParams,
    };
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};

    let params = MaterialParams {
        rho_f: 1.0,
        rho_s: 1.0,
        mu: 1.0,
        mu_s: 1.3,
        lambda_s: 0.7,
        c_penalty: 1.0,
    };
    let step = 1e-5;
    let fd = |h: &Matrix3<f64>, stress: &dyn Fn(&Matrix3<f64>) -> Matrix3<f64>| -> Coeffs81 {
        let mut out = Coeffs81::zeros();
        for j in 0..3 {
            for be in 0..3 {
                let mut hp = *h;
                let mut hm = *h;
                hp[(j, be)] += step;
                hm[(j, be)] -= step;
                let diff = (stress(&hp) - stress(&hm)) / (2.0 * step);
                for i in 0..3 {
                    for al in 0..3 {
                        out.set(i, al, j, be, diff[(i, al)]);
                    }
                }
            }
        }
        out
    };
    let rel = |analytic: &Coeffs81, oracle: &Coeffs81| -> f64 {
        let scale = analytic.max_abs().max(1.0);
        analytic
            .0
            .iter()
            .zip(&oracle.0)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / scale
    };

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let samples = 100;
    let mut max_c = 0.0f64;
    let mut max_d = 0.0f64;
    for _ in 0..samples {
        let raw = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let h = raw * (rng.gen_range(0.05..1.0) * 0.3 / raw.norm());
        let c = svk_coefficients(&h, &params).total();
        max_c = max_c.max(rel(&c, &fd(&h, &|m| first_piola(m, &params))));
        let d = quasi_inc_coefficients(&h).total();
        max_d = max_d.max(rel(&d, &fd(&h, &penalty_stress)));
    }
    SelfTestReport {
        max_elastic_err: max_c,
        max_penalty_err: max_d,
        samples,
        tolerance: 1e-6,
    }
}
