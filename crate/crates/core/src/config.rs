//! Run configuration: a TOML key tree validated into model objects.
//!
//! Units: times (`grid.T`, table `t` columns) in the model's time unit,
//! rates per unit time, `mc.checkpoints` as fractions of `grid.T`.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::jumps::LevyMeasure;
use crate::kernel::Kernel;
use crate::model::{InputCurve, ModelSpec, TestFunction, Theta};
use crate::riccati::SolverConfig;
use crate::simulate::{checkpoint_indices, McSettings};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment variable consulted for the output directory when `output.dir` is unset.
pub const OUTPUT_DIR_ENV: &str = "AFFVOL_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "affvol-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Constant,
    Fractional,
    Exponential,
    Gamma,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(rename = "type")]
    pub kind: KernelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    /// CSV with header `t,value`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub b0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpsKind {
    #[default]
    None,
    Exponential,
    Point,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpsConfig {
    #[serde(rename = "type", default)]
    pub kind: JumpsKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<f64>,
    /// CSV with header `size,weight`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum G0Kind {
    ConstantPlusKTheta,
    MonotoneTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G0Config {
    #[serde(rename = "type")]
    pub kind: G0Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// CSV with header `t,value`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_table: Option<PathBuf>,
    /// CSV with header `t,value`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FKind {
    #[default]
    Zero,
    ImagConst,
    ComplexConst,
    Table,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FConfig {
    #[serde(rename = "type", default)]
    pub kind: FKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<f64>,
    /// CSV with header `t,re,im`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

fn d_paths() -> usize {
    10_000
}
fn d_seed() -> u64 {
    42
}
fn d_checkpoints() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}
fn d_cf_u() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn d_past_paths() -> usize {
    1000
}
fn d_refine() -> Vec<usize> {
    vec![150, 300, 600]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "d_paths")]
    pub paths: usize,
    #[serde(default = "d_seed")]
    pub seed: u64,
    /// Fractions of `grid.T`; each must land on a grid node.
    #[serde(default = "d_checkpoints")]
    pub checkpoints: Vec<f64>,
    /// Extra `f ≡ iu` test functions for the characteristic-function comparison.
    #[serde(default = "d_cf_u")]
    pub cf_u: Vec<f64>,
    /// Paths used by the past/forward comparison and the pathwise bound.
    #[serde(default = "d_past_paths")]
    pub past_paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Step counts of the refinement study.
    #[serde(default = "d_refine")]
    pub refine_n: Vec<usize>,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            paths: d_paths(),
            seed: d_seed(),
            checkpoints: d_checkpoints(),
            cf_u: d_cf_u(),
            past_paths: d_past_paths(),
            workers: None,
            refine_n: d_refine(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub corrector: f64,
    pub comparison: f64,
    pub oracle: f64,
    pub resolvent_analytic: f64,
    pub resolvent_discrete: f64,
    pub second_kind: f64,
    pub envelope: f64,
    pub pi_routes: f64,
    pub gap: f64,
    /// Additive Monte Carlo slack on top of 3 standard errors (at `grid.n = 300`-like resolution).
    pub mc_slack: f64,
    pub two_formula: f64,
    pub classical_reduction: f64,
    pub bound: f64,
    pub forward_mean_routes: f64,
    pub closed_form_mean: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            corrector: 1e-12,
            comparison: 1e-10,
            oracle: 1e-5,
            resolvent_analytic: 1e-3,
            resolvent_discrete: 1e-8,
            second_kind: 1e-8,
            envelope: 1e-8,
            pi_routes: 1e-3,
            gap: 1e-8,
            mc_slack: 0.01,
            two_formula: 1e-2,
            classical_reduction: 1e-8,
            bound: 1e-8,
            forward_mean_routes: 1e-4,
            closed_form_mean: 1e-6,
        }
    }
}

fn d_sweep() -> usize {
    20
}
fn d_gen_samples() -> usize {
    1000
}
fn d_sweep_seed() -> u64 {
    7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "d_sweep")]
    pub sweep_models: usize,
    #[serde(default = "d_gen_samples")]
    pub generator_samples: usize,
    #[serde(default = "d_sweep_seed")]
    pub sweep_seed: u64,
    /// Claim ids to skip; a trailing `*` matches a prefix (`"sim.*"`).
    #[serde(default)]
    pub disable: Vec<String>,
    /// The refinement study re-runs the Monte Carlo suite on every `mc.refine_n`.
    #[serde(default)]
    pub refinement: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            sweep_models: d_sweep(),
            generator_samples: d_gen_samples(),
            sweep_seed: d_sweep_seed(),
            disable: vec![],
            refinement: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub jumps: JumpsConfig,
    pub g0: G0Config,
    pub grid: GridConfig,
    #[serde(default)]
    pub f: FConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory that relative table paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn need(v: Option<f64>, key: &str) -> Result<f64> {
    v.ok_or_else(|| Error::Config(format!("missing key {key}")))
}

/// Reads a headed CSV of numeric columns.
pub fn read_table(path: &Path, columns: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut cols = vec![Vec::new(); columns];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if rec.len() != columns {
            return Err(Error::Config(format!(
                "{}: expected {columns} columns, found {}",
                path.display(),
                rec.len()
            )));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Config(format!("{}: not a number: {field:?}", path.display()))
            })?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

fn set_dotted(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Config(format!("bad override key {key:?}")))?;
    let mut t = root;
    for p in parts {
        t = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: {p} is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parses TOML text and applies `key=value` overrides (values in TOML syntax; bare words become strings).
    pub fn parse(text: &str, overrides: &[String], base_dir: &Path) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(v.to_string()));
            set_dotted(&mut table, k.trim(), value)?;
        }
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, overrides, &base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn table(&self, p: &Option<PathBuf>, key: &str, columns: usize) -> Result<Vec<Vec<f64>>> {
        let p = p
            .as_ref()
            .ok_or_else(|| Error::Config(format!("missing key {key}")))?;
        read_table(&self.resolve(p), columns)
    }

    /// Builds every model object so that preconditions fail before any computation.
    pub fn validate(&self) -> Result<()> {
        self.model_spec()?;
        self.grid()?;
        self.test_function()?;
        self.checkpoints()?;
        for u in &self.mc.cf_u {
            if !u.is_finite() {
                return Err(Error::Config("mc.cf_u entries must be finite".into()));
            }
        }
        if self.mc.refine_n.iter().any(|&n| n < 2) {
            return Err(Error::Config(
                "mc.refine_n entries must be at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<Kernel> {
        let k = &self.kernel;
        match k.kind {
            KernelKind::Constant => Kernel::constant(k.k0.unwrap_or(1.0)),
            KernelKind::Fractional => Kernel::fractional(need(k.alpha, "kernel.alpha")?),
            KernelKind::Exponential => {
                Kernel::exponential(k.k0.unwrap_or(1.0), need(k.rate, "kernel.rate")?)
            }
            KernelKind::Gamma => {
                Kernel::gamma(need(k.alpha, "kernel.alpha")?, need(k.rate, "kernel.rate")?)
            }
            KernelKind::Tabulated => {
                let mut t = self.table(&k.table, "kernel.table", 2)?;
                let v = t.pop().unwrap_or_default();
                Kernel::tabulated(t.pop().unwrap_or_default(), v)
            }
        }
    }

    pub fn jumps(&self) -> Result<LevyMeasure> {
        let j = &self.jumps;
        match j.kind {
            JumpsKind::None => Ok(LevyMeasure::none()),
            JumpsKind::Exponential => LevyMeasure::exponential(
                need(j.lambda, "jumps.lambda")?,
                need(j.beta, "jumps.beta")?,
            ),
            JumpsKind::Point => LevyMeasure::point_mass(
                need(j.lambda, "jumps.lambda")?,
                need(j.size, "jumps.size")?,
            ),
            JumpsKind::Tabulated => {
                let mut t = self.table(&j.table, "jumps.table", 2)?;
                let w = t.pop().unwrap_or_default();
                LevyMeasure::tabulated(t.pop().unwrap_or_default(), w)
            }
        }
    }

    pub fn input_curve(&self) -> Result<InputCurve> {
        let g = &self.g0;
        let c = match g.kind {
            G0Kind::ConstantPlusKTheta => {
                let theta = match (&g.theta_table, g.theta) {
                    (Some(_), Some(_)) => {
                        return Err(Error::Config(
                            "give g0.theta or g0.theta_table, not both".into(),
                        ))
                    }
                    (Some(_), None) => {
                        let mut t = self.table(&g.theta_table, "g0.theta_table", 2)?;
                        let v = t.pop().unwrap_or_default();
                        Theta::Table {
                            times: t.pop().unwrap_or_default(),
                            values: v,
                        }
                    }
                    (None, th) => Theta::Constant(th.unwrap_or(0.0)),
                };
                InputCurve::ConstantPlusKTheta {
                    x0: need(g.x0, "g0.x0")?,
                    theta,
                }
            }
            G0Kind::MonotoneTable => {
                let mut t = self.table(&g.table, "g0.table", 2)?;
                let v = t.pop().unwrap_or_default();
                InputCurve::MonotoneTable {
                    times: t.pop().unwrap_or_default(),
                    values: v,
                }
            }
        };
        c.validate()?;
        Ok(c)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let m = ModelSpec::new(
            self.kernel()?,
            self.model.b,
            self.model.c,
            self.jumps()?,
            self.input_curve()?,
        )?;
        if self.model.b0 != 0.0 {
            return m.with_constant_terms(self.model.b0, 0.0, LevyMeasure::none());
        }
        Ok(m)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.horizon, self.grid.n)
    }

    pub fn test_function(&self) -> Result<TestFunction> {
        let f = &self.f;
        match f.kind {
            FKind::Zero => Ok(TestFunction::zero()),
            FKind::ImagConst => TestFunction::imaginary(need(f.u, "f.u")?),
            FKind::ComplexConst => {
                TestFunction::constant(Complex64::new(need(f.re, "f.re")?, need(f.im, "f.im")?))
            }
            FKind::Table => {
                let t = self.table(&f.table, "f.table", 3)?;
                let vals = t[1]
                    .iter()
                    .zip(&t[2])
                    .map(|(r, i)| Complex64::new(*r, *i))
                    .collect();
                TestFunction::table(t[0].clone(), vals)
            }
        }
    }

    pub fn checkpoints(&self) -> Result<Vec<usize>> {
        checkpoint_indices(&self.grid()?, &self.mc.checkpoints)
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tolerances.corrector,
            positivity_eps: self.tolerances.comparison,
            ..SolverConfig::default()
        }
    }

    pub fn mc_settings(&self) -> Result<McSettings> {
        Ok(McSettings {
            paths: self.mc.paths,
            seed: self.mc.seed,
            checkpoints: self.checkpoints()?,
            workers: self.mc.workers,
            solver: self.solver(),
        })
    }

    /// `output.dir`, else `$AFFVOL_OUTPUT_DIR`, else `affvol-out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ACCEPT: &str = r#"
[kernel]
type = "fractional"
alpha = 0.6

[model]
b = -0.3
c = 0.09

[jumps]
type = "exponential"
lambda = 0.5
beta = 10.0

[g0]
type = "constant-plus-k-theta"
x0 = 0.3
theta = 0.1

[grid]
T = 1.0
n = 300

[f]
type = "imag-const"
u = 1.0
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = RunConfig::parse(ACCEPT, &[], Path::new(".")).unwrap();
        let again = RunConfig::parse(&c.to_toml().unwrap(), &[], Path::new(".")).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.checkpoints().unwrap(), vec![75, 150, 225]);
    }

    #[test]
    fn overrides_apply() {
        let c = RunConfig::parse(
            ACCEPT,
            &[
                "grid.n=100".into(),
                "kernel.alpha = 0.75".into(),
                "f.type=zero".into(),
            ],
            Path::new("."),
        )
        .unwrap();
        assert_eq!(c.grid.n, 100);
        assert_eq!(c.kernel.alpha, Some(0.75));
        assert_eq!(c.f.kind, FKind::Zero);
    }

    #[test]
    fn rejects_small_alpha_with_l2_message() {
        let e = RunConfig::parse(ACCEPT, &["kernel.alpha=0.4".into()], Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("L2_loc"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn rejects_positive_real_f_and_unknown_keys() {
        let e = RunConfig::parse(
            ACCEPT,
            &[
                "f.type=complex-const".into(),
                "f.re=0.5".into(),
                "f.im=0.0".into(),
            ],
            Path::new("."),
        )
        .unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(RunConfig::parse(ACCEPT, &["model.sigma=1".into()], Path::new(".")).is_err());
    }

    #[test]
    fn missing_key_is_config_error() {
        let e = RunConfig::parse(ACCEPT, &["jumps.type=point".into()], Path::new(".")).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }
}
