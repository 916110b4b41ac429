//! Plot-ready CSV outputs. Every file starts with a versioned schema
//! comment line followed by the column header; numbers are written with 17
//! significant digits so reruns reproduce files byte for byte.

use crate::assembly::Discretization;
use crate::diagnostics::{CompatibilityReport, ConditionStatus, Severity};
use crate::error::{Error, Result};
use crate::pressure::PressureField;
use crate::solver::{FixedPointLog, MembershipReport, TrajectoryState};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub fn fmt_full(v: f64) -> String {
    format!("{v:.17e}")
}

/// Write through a temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
    ));
    std::fs::write(&tmp, contents).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

pub struct OutputWriter {
    pub dir: PathBuf,
}

impl OutputWriter {
    pub fn new(dir: &str) -> Self {
        OutputWriter {
            dir: PathBuf::from(dir),
        }
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        atomic_write(&self.dir.join(name), contents)
    }

    /// Per-step norms and ledger digest.
    pub fn timeseries(
        &self,
        traj: &TrajectoryState,
        traction_residual: Option<&[f64]>,
    ) -> Result<()> {
        let mut s = String::from("# fsi.timeseries.v1\n");
        s.push_str(
            "step,time,kinetic_fluid,kinetic_solid,elastic,viscous_acc,boundary_work_acc,\
             ledger_imbalance,divergence_residual,traction_residual\n",
        );
        for (k, sample) in traj.ledger.iter().enumerate() {
            let trac = traction_residual
                .and_then(|t| t.get(k))
                .map(|v| fmt_full(*v))
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                k,
                fmt_full(sample.time),
                fmt_full(sample.kinetic_fluid),
                fmt_full(sample.kinetic_solid),
                fmt_full(sample.elastic),
                fmt_full(sample.viscous_acc),
                fmt_full(sample.boundary_work_acc),
                fmt_full(sample.imbalance()),
                fmt_full(traj.divergence_residual[k]),
                trac,
            );
        }
        self.write("timeseries.csv", &s)
    }

    pub fn energy_ledger(&self, traj: &TrajectoryState) -> Result<()> {
        let mut s = String::from("# fsi.energy_ledger.v1\n");
        s.push_str(
            "step,time,kinetic_fluid,kinetic_solid,elastic,viscous_acc,det_fluid_acc,\
             det_solid_acc,coeff_rate_acc,coeff_grad_acc,boundary_work_acc,kinetic_initial,\
             imbalance\n",
        );
        for (k, l) in traj.ledger.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                k,
                fmt_full(l.time),
                fmt_full(l.kinetic_fluid),
                fmt_full(l.kinetic_solid),
                fmt_full(l.elastic),
                fmt_full(l.viscous_acc),
                fmt_full(l.det_fluid_acc),
                fmt_full(l.det_solid_acc),
                fmt_full(l.coeff_rate_acc),
                fmt_full(l.coeff_grad_acc),
                fmt_full(l.boundary_work_acc),
                fmt_full(l.kinetic_initial),
                fmt_full(l.imbalance()),
            );
        }
        self.write("energy_ledger.csv", &s)
    }

    /// Header-only ledger files, emitted when a run fails before any step.
    pub fn empty_ledgers(&self) -> Result<()> {
        self.write(
            "energy_ledger.csv",
            "# fsi.energy_ledger.v1\nstep,time,kinetic_fluid,kinetic_solid,elastic,\
             viscous_acc,det_fluid_acc,det_solid_acc,coeff_rate_acc,coeff_grad_acc,\
             boundary_work_acc,kinetic_initial,imbalance\n",
        )?;
        self.write(
            "timeseries.csv",
            "# fsi.timeseries.v1\nstep,time,kinetic_fluid,kinetic_solid,elastic,viscous_acc,\
             boundary_work_acc,ledger_imbalance,divergence_residual,traction_residual\n",
        )
    }

    pub fn contraction_log(&self, outer: &FixedPointLog, inners: &[FixedPointLog]) -> Result<()> {
        let mut s = String::from("# fsi.contraction_log.v1\n");
        s.push_str("loop,iter,update,reference,relative,ratio\n");
        let emit = |name: &str, log: &FixedPointLog, s: &mut String| {
            for it in &log.iters {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    name,
                    it.iter,
                    fmt_full(it.update),
                    fmt_full(it.reference),
                    fmt_full(it.relative),
                    it.ratio.map(fmt_full).unwrap_or_default(),
                );
            }
        };
        emit("outer", outer, &mut s);
        for (k, log) in inners.iter().enumerate() {
            emit(&format!("inner{}", k + 1), log, &mut s);
        }
        self.write("contraction_log.csv", &s)
    }

    pub fn membership(&self, reports: &[MembershipReport]) -> Result<()> {
        let mut s = String::from("# fsi.membership.v1\n");
        s.push_str("outer_iter,velocity_norm,displacement_norm,m_bound,member\n");
        for (k, r) in reports.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                k + 1,
                fmt_full(r.velocity_norm),
                fmt_full(r.displacement_norm),
                fmt_full(r.m_bound),
                r.member,
            );
        }
        self.write("membership_ledger.csv", &s)
    }

    pub fn compat(&self, report: &CompatibilityReport) -> Result<()> {
        let mut s = String::from("# fsi.compat.v1\n");
        s.push_str("condition,domain,residual,scale,tolerance,severity,status\n");
        for c in &report.conditions {
            let severity = match c.severity {
                Severity::Enforced => "enforced",
                Severity::Warn => "warn",
            };
            let status = match c.status {
                ConditionStatus::Pass => "pass",
                ConditionStatus::Fail => "fail",
                ConditionStatus::Skipped => "skipped",
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                c.index,
                c.domain,
                fmt_full(c.residual),
                fmt_full(c.scale),
                fmt_full(c.tolerance),
                severity,
                status,
            );
        }
        self.write("compat_report.csv", &s)
    }

    /// Final-state snapshot of an ambient vector field.
    pub fn field_snapshot(&self, name: &str, disc: &Discretization, values: &[f64]) -> Result<()> {
        let mut s = String::from("# fsi.field.v1\n");
        s.push_str("dof_index,x,y,z,component,value\n");
        for n in 0..disc.space.scalar.n_nodes() {
            let p = disc.space.scalar.node_coords[n];
            for c in 0..3 {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    3 * n + c,
                    fmt_full(p.x),
                    fmt_full(p.y),
                    fmt_full(p.z),
                    c,
                    fmt_full(values[3 * n + c]),
                );
            }
        }
        self.write(name, &s)
    }

    pub fn pressure_snapshot(
        &self,
        name: &str,
        disc: &Discretization,
        field: &PressureField,
    ) -> Result<()> {
        let mut s = String::from("# fsi.field.v1\n");
        s.push_str("dof_index,x,y,z,component,value\n");
        for (k, &n) in field.nodes.iter().enumerate() {
            let p = disc.pressure_space.node_coords[n];
            let _ = writeln!(
                s,
                "{},{},{},{},0,{}",
                n,
                fmt_full(p.x),
                fmt_full(p.y),
                fmt_full(p.z),
                fmt_full(field.values[k]),
            );
        }
        self.write(name, &s)
    }

    pub fn pressure_series(&self, disc: &Discretization, fields: &[PressureField]) -> Result<()> {
        let mut s = String::from("# fsi.pressure_series.v1\n");
        s.push_str("step,time,p_l2,residual_dual_norm,load_dual_norm\n");
        for (k, f) in fields.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                k,
                fmt_full(f.time_stamp),
                fmt_full(f.l2_norm(disc)),
                fmt_full(f.residual_norm),
                fmt_full(f.load_norm),
            );
        }
        self.write("pressure_series.csv", &s)
    }

    pub fn summary(&self, rows: &[(String, String)]) -> Result<()> {
        let mut s = String::from("# fsi.summary.v1\nkey,value\n");
        for (k, v) in rows {
            let _ = writeln!(s, "{k},{v}");
        }
        self.write("run_summary.csv", &s)
    }

    pub fn failure(&self, error: &Error, stage: &str) -> Result<()> {
        let mut s = String::from("# fsi.failure.v1\nkey,value\n");
        let _ = writeln!(s, "stage,{stage}");
        let _ = writeln!(s, "exit_code,{}", error.exit_code());
        let _ = writeln!(s, "error,\"{}\"", error.to_string().replace('"', "'"));
        self.write("failure_report.csv", &s)
    }
}
