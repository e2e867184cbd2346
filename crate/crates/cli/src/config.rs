//! Experiment and battery configuration documents (see `docs/config.schema.md`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sure_lab::smoothers::{FamilyDocument, MemberDocument};
use sure_lab::{
    derive_stream, make_theta0, GaussianSequenceModel64, Smoother64, SmootherFamily64,
    SmootherSpec, ThetaKind,
};

use crate::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelConfig,
    pub family: FamilyConfig,
    pub n_reps: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    pub sigma: f64,
    pub theta0: ThetaKind,
}

/// Either `path` alone, or any mix of `members` and `generators`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<MemberDocument>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generators: Vec<Generator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbfKernel {
    pub points: Vec<Vec<f64>>,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// Projections onto the first `k` coordinates, labelled `coord_{k}`.
    CoordinateProjections { sizes: Vec<usize> },
    /// Nested column subsets `0..k` of one Gaussian `n × p` design,
    /// labelled `design_{k}`.
    RandomDesignProjections {
        p: usize,
        sizes: Vec<usize>,
        design_seed: u64,
    },
    /// Kernel ridge smoothers over a `λ` grid, labelled `krr_{λ}`.
    KrrGrid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gram: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rbf: Option<RbfKernel>,
        lambdas: Vec<f64>,
    },
    /// k-NN smoothers, labelled `knn_{k}`; points default to `i/n` on a line.
    KnnGrid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        points: Option<Vec<Vec<f64>>>,
        ks: Vec<usize>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Summary destination; stdout when absent and `--out` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
    /// Per-replicate CSV destination.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<PathBuf>,
    /// Keep per-replicate records above the retention limit.
    #[serde(default)]
    pub force_records: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    /// Stand-in for the unknown constant in the oracle-gap bound.
    #[serde(default = "one")]
    pub c_test: f64,
    #[serde(default = "default_eta_grid")]
    pub eta_grid: Vec<f64>,
    /// Constant in the shell-probability shape `exp(−c 2^l r⋆ / h_op²)`.
    #[serde(default = "one")]
    pub shell_c_test: f64,
}

fn one() -> f64 {
    1.0
}

fn default_eta_grid() -> Vec<f64> {
    vec![0.1, 0.25, 0.5, 1.0]
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            c_test: one(),
            eta_grid: default_eta_grid(),
            shell_c_test: one(),
        }
    }
}

/// Parses JSON, reporting line and column of syntax or schema errors.
pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, origin: &Path) -> Result<T, CliError> {
    serde_json::from_str(text)
        .map_err(|e| CliError::config(format!("{}: {e}", origin.display())))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}

fn check_version(found: u32, what: &str) -> Result<(), CliError> {
    if found == CONFIG_SCHEMA_VERSION {
        Ok(())
    } else {
        Err(CliError::config(format!(
            "schema_version: unsupported {what} schema {found} (expected {CONFIG_SCHEMA_VERSION})"
        )))
    }
}

fn positive_finite(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::config(format!("{name}: must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = parse_json(&read_text(path)?, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Field-level checks that do not need the family to be built.
    pub fn validate(&self) -> Result<(), CliError> {
        check_version(self.schema_version, "config")?;
        if self.n_reps == 0 {
            return Err(CliError::config("n_reps: must be at least 1"));
        }
        if self.model.n == 0 {
            return Err(CliError::config("model.n: must be at least 1"));
        }
        positive_finite("model.sigma", self.model.sigma)?;
        positive_finite("bounds.c_test", self.bounds.c_test)?;
        positive_finite("bounds.shell_c_test", self.bounds.shell_c_test)?;
        for &eta in &self.bounds.eta_grid {
            positive_finite("bounds.eta_grid", eta)?;
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<GaussianSequenceModel64, CliError> {
        let theta0 = make_theta0(&self.model.theta0, self.model.n)
            .map_err(|e| CliError::config(format!("model.theta0: {e}")))?;
        GaussianSequenceModel64::new(theta0, self.model.sigma)
            .map_err(|e| CliError::config(format!("model: {e}")))
    }

    /// Builds the family, resolving a relative `family.path` against `base`.
    pub fn build_family(&self, base: &Path) -> Result<SmootherFamily64, CliError> {
        self.family.build(Some(self.model.n), base)
    }
}

impl FamilyConfig {
    pub fn build(&self, n: Option<usize>, base: &Path) -> Result<SmootherFamily64, CliError> {
        if let Some(path) = &self.path {
            if !self.members.is_empty() || !self.generators.is_empty() {
                return Err(CliError::config(
                    "family: `path` excludes `members` and `generators`",
                ));
            }
            let resolved = base.join(path);
            return load_family_document(&resolved);
        }
        let mut members = Vec::new();
        for m in &self.members {
            members.push(member_from_document(m)?);
        }
        let n = n
            .or_else(|| members.first().map(Smoother64::n))
            .or_else(|| self.generators.iter().find_map(Generator::implied_n));
        for (i, g) in self.generators.iter().enumerate() {
            let n = n.ok_or_else(|| {
                CliError::config(format!(
                    "family.generators[{i}]: dimension unknown; set model.n or give points or a gram matrix"
                ))
            })?;
            members.extend(
                g.generate(n)
                    .map_err(|e| CliError::config(format!("family.generators[{i}]: {e}")))?,
            );
        }
        if members.is_empty() {
            return Err(CliError::config("family: no members"));
        }
        SmootherFamily64::new(members).map_err(|e| CliError::config(format!("family: {e}")))
    }
}

fn member_from_document(m: &MemberDocument) -> Result<Smoother64, CliError> {
    let spec = m
        .to_spec()
        .map_err(|e| CliError::config(format!("family member `{}`: {e}", m.label)))?;
    Smoother64::from_spec(m.label.clone(), &spec)
        .map_err(|e| CliError::config(format!("family member `{}`: {e}", m.label)))
}

pub fn family_from_document(doc: &FamilyDocument) -> Result<SmootherFamily64, CliError> {
    doc.check_version()
        .map_err(|e| CliError::config(format!("family document: {e}")))?;
    let members = doc
        .members
        .iter()
        .map(member_from_document)
        .collect::<Result<Vec<_>, _>>()?;
    SmootherFamily64::new(members).map_err(|e| CliError::config(format!("family: {e}")))
}

pub fn load_family_document(path: &Path) -> Result<SmootherFamily64, CliError> {
    let doc: FamilyDocument = parse_json(&read_text(path)?, path)?;
    family_from_document(&doc)
}

impl Generator {
    /// Dimension fixed by the generator's own data, if any.
    pub fn implied_n(&self) -> Option<usize> {
        match self {
            Generator::KrrGrid { gram: Some(g), .. } => Some(g.len()),
            Generator::KrrGrid { rbf: Some(k), .. } => Some(k.points.len()),
            Generator::KnnGrid { points: Some(p), .. } => Some(p.len()),
            _ => None,
        }
    }

    pub fn generate(&self, n: usize) -> sure_lab::Result<Vec<Smoother64>> {
        match self {
            Generator::CoordinateProjections { sizes } => {
                let design: Vec<Vec<f64>> = (0..n)
                    .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
                    .collect();
                sizes
                    .iter()
                    .map(|&k| {
                        Smoother64::from_spec(
                            format!("coord_{k}"),
                            &SmootherSpec::Projection {
                                design: design.clone(),
                                subset: (0..k).collect(),
                            },
                        )
                    })
                    .collect()
            }
            Generator::RandomDesignProjections {
                p,
                sizes,
                design_seed,
            } => {
                let mut stream = derive_stream(*design_seed, 0);
                let design: Vec<Vec<f64>> =
                    (0..n).map(|_| stream.standard_normal_vec(*p)).collect();
                sizes
                    .iter()
                    .map(|&k| {
                        Smoother64::from_spec(
                            format!("design_{k}"),
                            &SmootherSpec::Projection {
                                design: design.clone(),
                                subset: (0..k).collect(),
                            },
                        )
                    })
                    .collect()
            }
            Generator::KrrGrid { gram, rbf, lambdas } => {
                let gram = match (gram, rbf) {
                    (Some(g), None) => g.clone(),
                    (None, Some(k)) => rbf_gram(k)?,
                    _ => {
                        return Err(sure_lab::Error::Parameter {
                            name: "krr_grid",
                            reason: "give exactly one of `gram` and `rbf`".to_owned(),
                        })
                    }
                };
                lambdas
                    .iter()
                    .map(|&lambda| {
                        Smoother64::from_spec(
                            format!("krr_{lambda:?}"),
                            &SmootherSpec::Krr {
                                gram: gram.clone(),
                                lambda,
                            },
                        )
                    })
                    .collect()
            }
            Generator::KnnGrid { points, ks } => {
                let points = points
                    .clone()
                    .unwrap_or_else(|| (0..n).map(|i| vec![i as f64 / n as f64]).collect());
                ks.iter()
                    .map(|&k| {
                        Smoother64::from_spec(
                            format!("knn_{k}"),
                            &SmootherSpec::Knn {
                                points: points.clone(),
                                k,
                            },
                        )
                    })
                    .collect()
            }
        }
    }
}

/// `G_ij = exp(−‖x_i − x_j‖² / (2h²))`.
fn rbf_gram(kernel: &RbfKernel) -> sure_lab::Result<Vec<Vec<f64>>> {
    let h = kernel.bandwidth;
    if !(h.is_finite() && h > 0.0) {
        return Err(sure_lab::Error::Parameter {
            name: "bandwidth",
            reason: format!("must be positive, got {h}"),
        });
    }
    let pts = &kernel.points;
    Ok(pts
        .iter()
        .map(|a| {
            pts.iter()
                .map(|b| {
                    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                    (-d2 / (2.0 * h * h)).exp()
                })
                .collect()
        })
        .collect())
}

/// Battery for `verify-lemmas`; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryConfig {
    pub schema_version: u32,
    pub master_seed: u64,
    pub quadratic_forms: QuadraticFormBattery,
    pub maxima: MaximaBattery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadraticFormBattery {
    /// `λ = ±f/b` for each fraction `f`, plus `λ = 0`.
    pub lambda_fractions: Vec<f64>,
    /// Absolute `λ` values checked against every matrix in addition.
    pub extra_lambdas: Vec<f64>,
    pub random_matrices: usize,
    pub max_dim: usize,
    pub n_samples: usize,
    pub slack: f64,
    /// Matrices checked with the closed-form MGF only.
    pub exact_matrices: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaximaBattery {
    pub n_vars: Vec<usize>,
    pub k: Vec<f64>,
    pub tau: Vec<f64>,
    pub n_samples: usize,
    /// Constant for the monitored sub-exponential maxima ratio.
    pub c_test: f64,
    pub subexp_samples: usize,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            master_seed: 42,
            quadratic_forms: QuadraticFormBattery::default(),
            maxima: MaximaBattery::default(),
        }
    }
}

impl Default for QuadraticFormBattery {
    fn default() -> Self {
        QuadraticFormBattery {
            lambda_fractions: vec![0.9, 0.5, 0.1],
            extra_lambdas: Vec::new(),
            random_matrices: 20,
            max_dim: 10,
            n_samples: 1_000_000,
            slack: 0.0,
            exact_matrices: vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.0, 1.0], vec![0.0, 0.0]],
                vec![vec![2.0, 0.0, 0.0], vec![0.0, -1.0, 0.0], vec![0.0, 0.0, 0.5]],
            ],
        }
    }
}

impl Default for MaximaBattery {
    fn default() -> Self {
        MaximaBattery {
            n_vars: vec![1, 10, 100],
            k: vec![1.0, 2.0, 4.0],
            tau: vec![1.0, 2.0],
            n_samples: 100_000,
            c_test: sure_lab::concentration::DEFAULT_C_TEST,
            subexp_samples: 20_000,
        }
    }
}

impl BatteryConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let cfg: BatteryConfig = parse_json(&read_text(path)?, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        check_version(self.schema_version, "battery")?;
        let q = &self.quadratic_forms;
        if !(q.slack >= 0.0) {
            return Err(CliError::config(format!(
                "quadratic_forms.slack: must be nonnegative, got {}",
                q.slack
            )));
        }
        if q.random_matrices > 0 && q.n_samples < sure_lab::concentration::MIN_MGF_SAMPLES {
            return Err(CliError::config(format!(
                "quadratic_forms.n_samples: need at least {}",
                sure_lab::concentration::MIN_MGF_SAMPLES
            )));
        }
        if q.max_dim == 0 {
            return Err(CliError::config("quadratic_forms.max_dim: must be at least 1"));
        }
        for &f in &q.lambda_fractions {
            if !(f.is_finite() && f > 0.0 && f <= 0.95) {
                return Err(CliError::config(format!(
                    "quadratic_forms.lambda_fractions: {f} outside (0, 0.95]"
                )));
            }
        }
        let m = &self.maxima;
        if m.n_vars.contains(&0) {
            return Err(CliError::config("maxima.n_vars: entries must be at least 1"));
        }
        if m.k.iter().any(|&k| !(k >= 1.0)) {
            return Err(CliError::config("maxima.k: entries must be at least 1"));
        }
        for &t in &m.tau {
            positive_finite("maxima.tau", t)?;
        }
        positive_finite("maxima.c_test", m.c_test)?;
        if m.n_samples < 2 || m.subexp_samples < 2 {
            return Err(CliError::config("maxima: sample counts must be at least 2"));
        }
        Ok(())
    }
}
