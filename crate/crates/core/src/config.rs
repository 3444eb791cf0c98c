//! Run configuration and a line-based `key = value` config file format.

use std::path::PathBuf;

use crate::bench::{self, BenchmarkCase};
use crate::error::{Error, Result};
use crate::fem::MaterialModel;

/// Initial level-set field specification.
#[derive(Debug, Clone)]
pub enum Phi0Spec {
    /// Constant value, clamped to [-1, 1].
    Constant(f64),
    /// 1 minus 2 per covering disk `(cx, cy, r)`, clamped to [-1, 1].
    Disks(Vec<[f64; 3]>),
}

impl Phi0Spec {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let v = match self {
            Phi0Spec::Constant(c) => *c,
            Phi0Spec::Disks(disks) => {
                let mut v = 1.0;
                for d in disks {
                    let (dx, dy) = (x - d[0], y - d[1]);
                    if dx * dx + dy * dy <= d[2] * d[2] {
                        v -= 2.0;
                    }
                }
                v
            }
        };
        v.clamp(-1.0, 1.0)
    }
}

/// Full set of parameters for one optimization run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case: BenchmarkCase,
    pub mesh_cardinality: usize,
    pub material: MaterialModel,
    pub alpha: f64,
    pub chi_min: f64,
    pub dt: f64,
    pub tau: f64,
    pub beta: f64,
    pub ctol: f64,
    pub tol: f64,
    pub atol: f64,
    pub kmax: usize,
    pub k_start: usize,
    pub k_adapt: usize,
    pub grade: bool,
    pub h_iso: f64,
    pub phi0: Phi0Spec,
    pub volume_rate: f64,
    pub out_dir: Option<PathBuf>,
    pub trace: bool,
}

impl RunConfig {
    /// Case defaults matching the built-in benchmark setups.
    pub fn for_case(name: &str) -> Result<RunConfig> {
        let case = bench::by_name(name)
            .ok_or_else(|| Error::Parameter(format!("unknown case '{name}'")))?;
        let material = MaterialModel::new(1000.0, 0.3)?;
        let mut cfg = RunConfig {
            case,
            mesh_cardinality: 0,
            material,
            alpha: 0.5,
            chi_min: 1e-3,
            dt: 0.1,
            tau: 0.0,
            beta: 10.0,
            ctol: 1e-4,
            tol: 0.0,
            atol: 5e-3,
            kmax: 400,
            k_start: 150,
            k_adapt: 15,
            grade: true,
            h_iso: 0.0,
            phi0: Phi0Spec::Constant(1.0),
            volume_rate: crate::levelset::DEFAULT_VOLUME_RATE,
            out_dir: None,
            trace: false,
        };
        match cfg.case.name {
            "CLC" => {
                cfg.mesh_cardinality = 25600;
                cfg.tau = 6e-4;
                cfg.tol = 8e-2;
                cfg.h_iso = 1.0 / 40.0;
                cfg.phi0 = Phi0Spec::Disks(vec![[0.5, 0.5, 0.25], [1.5, 0.5, 0.25]]);
            }
            "CBLB" => {
                cfg.mesh_cardinality = 69120;
                cfg.tau = 5e-1;
                cfg.tol = 3.5e-1;
                cfg.h_iso = 2.0;
                cfg.k_start = 175;
            }
            "CLSC" => {
                cfg.mesh_cardinality = 4960;
                cfg.tau = 1.0;
                cfg.tol = 3.5e-1;
                cfg.h_iso = 2.0;
                cfg.k_start = 175;
            }
            _ => unreachable!(),
        }
        Ok(cfg)
    }

    pub fn target_volume(&self) -> f64 {
        self.alpha * self.case.v0
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("beta", self.beta),
            ("CTOL", self.ctol),
            ("TOL", self.tol),
            ("ATOL", self.atol),
            ("h_iso", self.h_iso),
            ("tau", self.tau),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Parameter(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.chi_min > 0.0 && self.chi_min < 1.0) {
            return Err(Error::Parameter(format!(
                "chi_min must lie in (0, 1), got {}",
                self.chi_min
            )));
        }
        if self.k_adapt == 0 {
            return Err(Error::Parameter("kAdapt must be positive".into()));
        }
        if self.mesh_cardinality < 2 {
            return Err(Error::Parameter("mesh cardinality must be >= 2".into()));
        }
        Ok(())
    }
}

/// Parse a config file. Lines are `key = value`; `#` starts a comment; blank
/// lines are ignored. A `case` key is required and selects the defaults every
/// other key overrides. Unknown keys are errors that carry the line number.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let stripped = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((k, v)) = stripped.split_once('=') else {
            return Err(Error::Parse {
                line,
                msg: format!("expected 'key = value', got '{stripped}'"),
            });
        };
        pairs.push((line, k.trim().to_string(), v.trim().to_string()));
    }

    let case_name = pairs
        .iter()
        .find(|(_, k, _)| k == "case")
        .map(|(_, _, v)| v.clone())
        .ok_or_else(|| Error::Parse {
            line: 0,
            msg: "missing required key 'case'".into(),
        })?;
    let mut cfg = RunConfig::for_case(&case_name)?;
    let (mut e, mut nu) = (cfg.material.young_modulus, cfg.material.poisson_ratio);

    for (line, key, value) in pairs {
        let fval = |v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid number '{v}' for key '{key}'"),
            })
        };
        let uval = |v: &str| -> Result<usize> {
            v.parse::<usize>().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid integer '{v}' for key '{key}'"),
            })
        };
        match key.as_str() {
            "case" => {}
            "mesh" => cfg.mesh_cardinality = uval(&value)?,
            "E" => e = fval(&value)?,
            "nu" => nu = fval(&value)?,
            "alpha" => cfg.alpha = fval(&value)?,
            "chi_min" => cfg.chi_min = fval(&value)?,
            "dt" => cfg.dt = fval(&value)?,
            "tau" => cfg.tau = fval(&value)?,
            "beta" => cfg.beta = fval(&value)?,
            "CTOL" => cfg.ctol = fval(&value)?,
            "TOL" => cfg.tol = fval(&value)?,
            "ATOL" => cfg.atol = fval(&value)?,
            "kmax" => cfg.kmax = uval(&value)?,
            "kStart" => cfg.k_start = uval(&value)?,
            "kAdapt" => cfg.k_adapt = uval(&value)?,
            "grade" => {
                cfg.grade = match value.as_str() {
                    "0" | "false" => false,
                    "1" | "true" => true,
                    other => {
                        return Err(Error::Parse {
                            line,
                            msg: format!("invalid boolean '{other}' for key 'grade'"),
                        })
                    }
                }
            }
            "h_iso" => cfg.h_iso = fval(&value)?,
            "phi0" => cfg.phi0 = parse_phi0(&value, line)?,
            "out" => cfg.out_dir = Some(PathBuf::from(value)),
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown key '{other}'"),
                })
            }
        }
    }
    cfg.material = MaterialModel::new(e, nu)?;
    cfg.validate()?;
    Ok(cfg)
}

/// `phi0 = 1` or `phi0 = disks (cx, cy, r) (cx, cy, r) ...`
fn parse_phi0(value: &str, line: usize) -> Result<Phi0Spec> {
    if let Ok(c) = value.parse::<f64>() {
        return Ok(Phi0Spec::Constant(c));
    }
    let Some(rest) = value.strip_prefix("disks") else {
        return Err(Error::Parse {
            line,
            msg: format!("invalid phi0 spec '{value}'"),
        });
    };
    let mut disks = Vec::new();
    for group in rest.split(')').map(str::trim).filter(|s| !s.is_empty()) {
        let nums: Vec<&str> = group
            .trim_start_matches('(')
            .split(',')
            .map(str::trim)
            .collect();
        if nums.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: format!("disk needs 3 numbers, got '{group}'"),
            });
        }
        let mut d = [0.0; 3];
        for (i, n) in nums.iter().enumerate() {
            d[i] = n.parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid number '{n}' in disk"),
            })?;
        }
        if !(d[2] > 0.0) {
            return Err(Error::Parse {
                line,
                msg: "disk radius must be positive".into(),
            });
        }
        disks.push(d);
    }
    if disks.is_empty() {
        return Err(Error::Parse {
            line,
            msg: "phi0 disks list is empty".into(),
        });
    }
    Ok(Phi0Spec::Disks(disks))
}
