//! Run configuration: a flat INI-style key/value file, one section per
//! concern. Parsing is strict: unknown sections or keys are errors that
//! name the offender, so typos never silently fall back to defaults.

use crate::constitutive::MaterialParams;
use crate::error::{Error, Result};
use crate::solver::SolverConfig;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// How initial-data compatibility failures are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompatMode {
    Off,
    Warn,
    Strict,
}

impl CompatMode {
    fn as_str(&self) -> &'static str {
        match self {
            CompatMode::Off => "off",
            CompatMode::Warn => "warn",
            CompatMode::Strict => "strict",
        }
    }
}

/// Analytic presets or per-dof files for one initial field.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Zero,
    /// v0 = (a x2, 0, 0), projected into the divergence-free space.
    Shear(f64),
    /// xi1 = a (x - solid centroid).
    Dilation(f64),
    File(String),
}

impl FieldSpec {
    fn parse(key: &str, s: &str) -> Result<Self> {
        if s == "zero" {
            return Ok(FieldSpec::Zero);
        }
        if let Some(rest) = s.strip_prefix("shear:") {
            return rest
                .parse()
                .map(FieldSpec::Shear)
                .map_err(|_| Error::config(key, format!("bad shear amplitude `{rest}`")));
        }
        if let Some(rest) = s.strip_prefix("dilation:") {
            return rest
                .parse()
                .map(FieldSpec::Dilation)
                .map_err(|_| Error::config(key, format!("bad dilation amplitude `{rest}`")));
        }
        if let Some(rest) = s.strip_prefix("file:") {
            return Ok(FieldSpec::File(rest.to_string()));
        }
        Err(Error::config(
            key,
            format!("unknown field spec `{s}` (expected zero, shear:a, dilation:a or file:path)"),
        ))
    }

    fn canonical(&self) -> String {
        match self {
            FieldSpec::Zero => "zero".into(),
            FieldSpec::Shear(a) => format!("shear:{a:.17e}"),
            FieldSpec::Dilation(a) => format!("dilation:{a:.17e}"),
            FieldSpec::File(p) => format!("file:{p}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mesh_path: String,
    pub degree: usize,
    pub material: MaterialParams,
    pub solver: SolverConfig,
    pub threads: usize,
    pub compat: CompatMode,
    pub recover_pressure: bool,
    pub ledger_tol: f64,
    pub v0: FieldSpec,
    pub xi1: FieldSpec,
    pub p0: FieldSpec,
    pub dp0_dt: Option<String>,
    pub d2p0_dt2: Option<String>,
    /// Project the raw initial pair into the discrete divergence-free
    /// space before solving (analytic presets need this to be interface
    /// compatible).
    pub project_initial: bool,
    pub inflow: String,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh_path: "builtin:two-cube:2".into(),
            degree: 2,
            material: MaterialParams {
                rho_f: 1.0,
                rho_s: 1.1,
                mu: 0.05,
                mu_s: 0.5,
                lambda_s: 0.5,
                c_penalty: 10.0,
            },
            solver: SolverConfig::default(),
            threads: 0,
            compat: CompatMode::Warn,
            recover_pressure: true,
            ledger_tol: 1e-6,
            v0: FieldSpec::Zero,
            xi1: FieldSpec::Zero,
            p0: FieldSpec::Zero,
            dp0_dt: None,
            d2p0_dt2: None,
            project_initial: true,
            inflow: "zero".into(),
            output_dir: "out".into(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(key, format!("expected a boolean, got `{v}`"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                current = line[1..line.len() - 1].trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::config(
                    &format!("line {}", lineno + 1),
                    format!("expected `key = value`, got `{line}`"),
                ));
            };
            if current.is_empty() {
                return Err(Error::config(
                    k.trim(),
                    "key appears before any [section] header",
                ));
            }
            sections
                .get_mut(&current)
                .unwrap()
                .insert(k.trim().to_string(), v.trim().to_string());
        }

        let mut cfg = RunConfig::default();
        for (section, keys) in &sections {
            for (k, v) in keys {
                let full = format!("{section}.{k}");
                match (section.as_str(), k.as_str()) {
                    ("mesh", "path") => cfg.mesh_path = v.clone(),
                    ("space", "degree") => cfg.degree = parse_num(&full, v)?,
                    ("material", "rho_f") => cfg.material.rho_f = parse_num(&full, v)?,
                    ("material", "rho_s") => cfg.material.rho_s = parse_num(&full, v)?,
                    ("material", "mu") => cfg.material.mu = parse_num(&full, v)?,
                    ("material", "mu_s") => cfg.material.mu_s = parse_num(&full, v)?,
                    ("material", "lambda_s") => cfg.material.lambda_s = parse_num(&full, v)?,
                    ("material", "c_penalty") => cfg.material.c_penalty = parse_num(&full, v)?,
                    ("solver", "t_end") => cfg.solver.t_end = parse_num(&full, v)?,
                    ("solver", "dt") => cfg.solver.dt = parse_num(&full, v)?,
                    ("solver", "fp_inner_tol") => cfg.solver.fp_inner_tol = parse_num(&full, v)?,
                    ("solver", "fp_outer_tol") => cfg.solver.fp_outer_tol = parse_num(&full, v)?,
                    ("solver", "max_inner_iters") => {
                        cfg.solver.max_inner_iters = parse_num(&full, v)?
                    }
                    ("solver", "max_outer_iters") => {
                        cfg.solver.max_outer_iters = parse_num(&full, v)?
                    }
                    ("solver", "m_bound") => cfg.solver.m_bound = parse_num(&full, v)?,
                    ("solver", "t_bisect_max") => cfg.solver.t_bisect_max = parse_num(&full, v)?,
                    ("solver", "relaxation") => cfg.solver.relaxation = parse_num(&full, v)?,
                    ("solver", "det_floor") => cfg.solver.det_floor = parse_num(&full, v)?,
                    ("solver", "threads") => cfg.threads = parse_num(&full, v)?,
                    ("solver", "compat") => {
                        cfg.compat = match v.as_str() {
                            "off" => CompatMode::Off,
                            "warn" => CompatMode::Warn,
                            "strict" => CompatMode::Strict,
                            other => {
                                return Err(Error::config(
                                    &full,
                                    format!("expected off|warn|strict, got `{other}`"),
                                ))
                            }
                        }
                    }
                    ("solver", "recover_pressure") => {
                        cfg.recover_pressure = parse_bool(&full, v)?
                    }
                    ("solver", "ledger_tol") => cfg.ledger_tol = parse_num(&full, v)?,
                    ("initial", "v0") => cfg.v0 = FieldSpec::parse(&full, v)?,
                    ("initial", "xi1") => cfg.xi1 = FieldSpec::parse(&full, v)?,
                    ("initial", "p0") => cfg.p0 = FieldSpec::parse(&full, v)?,
                    ("initial", "dp0_dt") => cfg.dp0_dt = Some(v.clone()),
                    ("initial", "d2p0_dt2") => cfg.d2p0_dt2 = Some(v.clone()),
                    ("initial", "project") => cfg.project_initial = parse_bool(&full, v)?,
                    ("inflow", "v_in") => cfg.inflow = v.clone(),
                    ("output", "dir") => cfg.output_dir = v.clone(),
                    _ => {
                        return Err(Error::config(
                            &full,
                            "unknown configuration key".to_string(),
                        ))
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &str) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        self.solver.validate()?;
        if self.degree != 1 && self.degree != 2 {
            return Err(Error::config(
                "space.degree",
                format!("expected 1 or 2, got {}", self.degree),
            ));
        }
        if self.inflow != "zero" {
            return Err(Error::config(
                "inflow.v_in",
                format!(
                    "only the homogeneous inflow `zero` is provided; a nonzero inflow must \
                     enter as a lift field (got `{}`)",
                    self.inflow
                ),
            ));
        }
        match self.v0 {
            FieldSpec::Dilation(_) => {
                return Err(Error::config("initial.v0", "dilation is a displacement preset"))
            }
            _ => {}
        }
        if let FieldSpec::Shear(_) = self.xi1 {
            return Err(Error::config("initial.xi1", "shear is a velocity preset"));
        }
        if !(self.ledger_tol > 0.0) {
            return Err(Error::config("solver.ledger_tol", "must be positive"));
        }
        Ok(())
    }

    /// Canonical serialization; `parse(canonical())` reproduces the
    /// configuration exactly.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[mesh]");
        let _ = writeln!(s, "path = {}", self.mesh_path);
        let _ = writeln!(s, "\n[space]");
        let _ = writeln!(s, "degree = {}", self.degree);
        let _ = writeln!(s, "\n[material]");
        let m = &self.material;
        let _ = writeln!(s, "rho_f = {:.17e}", m.rho_f);
        let _ = writeln!(s, "rho_s = {:.17e}", m.rho_s);
        let _ = writeln!(s, "mu = {:.17e}", m.mu);
        let _ = writeln!(s, "mu_s = {:.17e}", m.mu_s);
        let _ = writeln!(s, "lambda_s = {:.17e}", m.lambda_s);
        let _ = writeln!(s, "c_penalty = {:.17e}", m.c_penalty);
        let _ = writeln!(s, "\n[solver]");
        let c = &self.solver;
        let _ = writeln!(s, "t_end = {:.17e}", c.t_end);
        let _ = writeln!(s, "dt = {:.17e}", c.dt);
        let _ = writeln!(s, "fp_inner_tol = {:.17e}", c.fp_inner_tol);
        let _ = writeln!(s, "fp_outer_tol = {:.17e}", c.fp_outer_tol);
        let _ = writeln!(s, "max_inner_iters = {}", c.max_inner_iters);
        let _ = writeln!(s, "max_outer_iters = {}", c.max_outer_iters);
        let _ = writeln!(s, "m_bound = {:.17e}", c.m_bound);
        let _ = writeln!(s, "t_bisect_max = {}", c.t_bisect_max);
        let _ = writeln!(s, "relaxation = {:.17e}", c.relaxation);
        let _ = writeln!(s, "det_floor = {:.17e}", c.det_floor);
        let _ = writeln!(s, "threads = {}", self.threads);
        let _ = writeln!(s, "compat = {}", self.compat.as_str());
        let _ = writeln!(s, "recover_pressure = {}", self.recover_pressure);
        let _ = writeln!(s, "ledger_tol = {:.17e}", self.ledger_tol);
        let _ = writeln!(s, "\n[initial]");
        let _ = writeln!(s, "v0 = {}", self.v0.canonical());
        let _ = writeln!(s, "xi1 = {}", self.xi1.canonical());
        let _ = writeln!(s, "p0 = {}", self.p0.canonical());
        if let Some(p) = &self.dp0_dt {
            let _ = writeln!(s, "dp0_dt = {p}");
        }
        if let Some(p) = &self.d2p0_dt2 {
            let _ = writeln!(s, "d2p0_dt2 = {p}");
        }
        let _ = writeln!(s, "project = {}", self.project_initial);
        let _ = writeln!(s, "\n[inflow]");
        let _ = writeln!(s, "v_in = {}", self.inflow);
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", self.output_dir);
        s
    }

    /// The solver's compat switch derives from the configured mode.
    pub fn solver_config(&self) -> SolverConfig {
        let mut cfg = self.solver.clone();
        cfg.enforce_compat = self.compat == CompatMode::Strict;
        cfg
    }
}
