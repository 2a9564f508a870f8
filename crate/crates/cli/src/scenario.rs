//! Scenario files: parsing, conversion into library types, and validation.

use std::collections::BTreeMap;
use std::path::Path;

use fusionkit::advisor::AdvisorTolerances;
use fusionkit::matrixkit::matrix_from_rows;
use fusionkit::model::{validate, GaussianPrior, ValidationReport};
use fusionkit::nonlinear::{LinearMap, NonlinearModel, SineMap, SquareMap};
use fusionkit::{BlockCovariance, LinearModel, Matrix, ModalityPair, SourcePrior, SymMatrix, Vector};
use serde::{Deserialize, Serialize};

use crate::failure::{CliError, Context};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    id: Option<String>,
    sources: SourcesSpec,
    modalities: Vec<ModalitySpec>,
    #[serde(default)]
    cross_cov: Option<OneOrMany<CrossCovSpec>>,
    #[serde(default)]
    tolerances: Option<TolerancesSpec>,
    #[serde(default)]
    mc: Option<McSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum SourcesSpec {
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    InfoOnly {
        #[serde(rename = "J_s")]
        j_s: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModalitySpec {
    name: String,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    noise_cov: Vec<Vec<f64>>,
    #[serde(default)]
    map: MapKind,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CrossCovSpec {
    pair: [usize; 2],
    matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TolerancesSpec {
    dominance: Option<f64>,
    redundancy: Option<f64>,
    regime_eps: Option<f64>,
}

/// Monte-Carlo settings for nonlinear analyses.
#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    #[serde(rename = "N", default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    10_000
}

impl Default for McSpec {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            seed: 0,
        }
    }
}

/// Built-in observation maps selectable from a scenario.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    #[default]
    Linear,
    Square,
    Sine,
}

#[derive(Debug, Clone)]
pub struct Modality {
    pub name: String,
    pub model: LinearModel,
    pub noise: SymMatrix,
    pub map: MapKind,
    pub validation: ValidationReport,
}

impl Modality {
    pub fn nonlinear(&self) -> NonlinearModel {
        let a = self.model.mixing().clone();
        match self.map {
            MapKind::Linear => NonlinearModel::new(LinearMap(a)),
            MapKind::Square => NonlinearModel::new(SquareMap(a)),
            MapKind::Sine => NonlinearModel::new(SineMap(a)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub prior: SourcePrior,
    pub modalities: Vec<Modality>,
    cross: BTreeMap<(usize, usize), Matrix>,
    pub tolerances: AdvisorTolerances,
    pub mc: McSpec,
}

fn rows(what: &str, r: &[Vec<f64>]) -> Result<Matrix, CliError> {
    matrix_from_rows(r).context(what)
}

fn sym_rows(what: &str, r: &[Vec<f64>]) -> Result<SymMatrix, CliError> {
    SymMatrix::new(rows(what, r)?).context(what)
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Scenario(format!("cannot read scenario {}: {e}", path.display())))?;
        let file: ScenarioFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Scenario(format!("malformed scenario {}: {e}", path.display())))?;
        let id = file.id.clone().unwrap_or_else(|| {
            path.file_stem()
                .map_or_else(|| "scenario".to_owned(), |s| s.to_string_lossy().into_owned())
        });
        Self::build(id, file)
    }

    fn build(id: String, file: ScenarioFile) -> Result<Self, CliError> {
        let prior = match &file.sources {
            SourcesSpec::Gaussian { mean, cov } => {
                let cov = sym_rows("sources.gaussian.cov", cov)?;
                SourcePrior::Gaussian(
                    GaussianPrior::new(Vector::from_column_slice(mean), cov).context("sources.gaussian")?,
                )
            }
            SourcesSpec::InfoOnly { j_s } => {
                SourcePrior::info_only(sym_rows("sources.info_only.J_s", j_s)?).context("sources.info_only")?
            }
        };
        if file.modalities.is_empty() {
            return Err(CliError::Scenario("scenario lists no modalities".into()));
        }

        let mut modalities: Vec<Modality> = Vec::with_capacity(file.modalities.len());
        for spec in &file.modalities {
            if modalities.iter().any(|m| m.name == spec.name) {
                return Err(CliError::Scenario(format!("duplicate modality name {:?}", spec.name)));
            }
            let model = LinearModel::new(rows(&format!("modality {:?} A", spec.name), &spec.a)?)
                .context(&format!("modality {:?}", spec.name))?;
            let noise = sym_rows(&format!("modality {:?} noise_cov", spec.name), &spec.noise_cov)?;
            let validation = validate(&model, &prior, &noise);
            if validation.has_errors() {
                let msgs: Vec<&str> = validation.diagnostics.iter().map(|d| d.message.as_str()).collect();
                return Err(CliError::Scenario(format!(
                    "modality {:?} failed validation: {}",
                    spec.name,
                    msgs.join("; ")
                )));
            }
            modalities.push(Modality {
                name: spec.name.clone(),
                model,
                noise,
                map: spec.map,
                validation,
            });
        }

        let mut cross = BTreeMap::new();
        let specs = match file.cross_cov {
            None => Vec::new(),
            Some(OneOrMany::One(c)) => vec![c],
            Some(OneOrMany::Many(v)) => v,
        };
        for c in specs {
            let [i, j] = c.pair;
            if i >= modalities.len() || j >= modalities.len() || i == j {
                return Err(CliError::Scenario(format!("cross_cov pair {:?} does not name two modalities", c.pair)));
            }
            let m = rows("cross_cov matrix", &c.matrix)?;
            let want = (modalities[i].model.n(), modalities[j].model.n());
            if m.shape() != want {
                return Err(CliError::Scenario(format!(
                    "cross_cov for pair {:?} is {}x{}, expected {}x{}",
                    c.pair,
                    m.nrows(),
                    m.ncols(),
                    want.0,
                    want.1
                )));
            }
            let key = if i < j { (i, j) } else { (j, i) };
            if cross.contains_key(&key) {
                return Err(CliError::Scenario(format!("cross_cov for pair {:?} given twice", c.pair)));
            }
            cross.insert(key, if i < j { m } else { m.transpose() });
        }

        let defaults = AdvisorTolerances::default();
        let t = file.tolerances.unwrap_or_default();
        let tolerances = AdvisorTolerances {
            dominance: t.dominance.or(defaults.dominance),
            redundancy: t.redundancy.unwrap_or(defaults.redundancy),
            regime_eps: t.regime_eps.unwrap_or(defaults.regime_eps),
        };

        Ok(Self {
            id,
            prior,
            modalities,
            cross,
            tolerances,
            mc: file.mc.unwrap_or_default(),
        })
    }

    pub fn index_of(&self, name: &str) -> Result<usize, CliError> {
        self.modalities.iter().position(|m| m.name == name).ok_or_else(|| {
            let known: Vec<&str> = self.modalities.iter().map(|m| m.name.as_str()).collect();
            CliError::Scenario(format!("no modality named {name:?} (known: {})", known.join(", ")))
        })
    }

    pub fn modality(&self, name: &str) -> Result<&Modality, CliError> {
        Ok(&self.modalities[self.index_of(name)?])
    }

    /// `Σ_vu` between modalities `i` (rows) and `j` (columns); zero if unspecified.
    pub fn cross_cov(&self, i: usize, j: usize) -> Matrix {
        if i < j {
            self.cross.get(&(i, j)).cloned()
        } else {
            self.cross.get(&(j, i)).map(Matrix::transpose)
        }
        .unwrap_or_else(|| Matrix::zeros(self.modalities[i].model.n(), self.modalities[j].model.n()))
    }

    pub fn noise_blocks(&self, i: usize, j: usize) -> Result<BlockCovariance, CliError> {
        let (a, b) = (&self.modalities[i], &self.modalities[j]);
        BlockCovariance::new(a.noise.clone(), b.noise.clone(), self.cross_cov(i, j))
            .context(&format!("joint noise covariance of {:?} and {:?}", a.name, b.name))
    }

    pub fn pair(&self, first: &str, second: &str) -> Result<ModalityPair, CliError> {
        let (i, j) = (self.index_of(first)?, self.index_of(second)?);
        if i == j {
            return Err(CliError::Scenario(format!("a modality cannot be paired with itself ({first:?})")));
        }
        let (a, b) = (&self.modalities[i], &self.modalities[j]);
        ModalityPair::new(a.model.clone(), b.model.clone(), self.noise_blocks(i, j)?).context("modality pair")
    }

    /// The single modality other than `name`, when there is exactly one.
    pub fn only_other(&self, name: &str) -> Result<&str, CliError> {
        let others: Vec<&str> =
            self.modalities.iter().map(|m| m.name.as_str()).filter(|n| *n != name).collect();
        match others.as_slice() {
            [one] => Ok(one),
            _ => Err(CliError::Usage(format!(
                "scenario has {} other modalities; choose one with --secondary",
                others.len()
            ))),
        }
    }
}

/// Splits `A,B` into two names.
pub fn parse_pair(spec: &str) -> Result<(String, String), CliError> {
    match spec.split(',').map(str::trim).collect::<Vec<_>>().as_slice() {
        [a, b] if !a.is_empty() && !b.is_empty() => Ok(((*a).to_owned(), (*b).to_owned())),
        _ => Err(CliError::Usage(format!("expected two comma-separated modality names, got {spec:?}"))),
    }
}
