//! Repeatability statistics, energy contributions and parameter ablation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constitutive::ConstitutiveParams;
use crate::error::{Error, Result};
use crate::identify::{poisson_rescale, poisson_rescale_inv};
use crate::loss::chamfer_bidirectional;
use crate::sim::{integrated_energy, simulate, Scene};

pub fn mean(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Unbiased sample variance.
pub fn sample_variance(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Stats(format!("need at least 2 samples, got {}", samples.len())));
    }
    let m = mean(samples)?;
    Ok(samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (samples.len() - 1) as f64)
}

/// Sample standard deviation over mean, in percent.
pub fn coefficient_of_variation(samples: &[f64]) -> Result<f64> {
    let var = sample_variance(samples)?;
    let m = mean(samples)?;
    if m == 0.0 {
        return Err(Error::Stats("coefficient of variation of a zero-mean sample".into()));
    }
    Ok(var.sqrt() / m.abs() * 100.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
}

impl Group {
    /// Group statistics with the population (1/N) variance.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let m = mean(samples)?;
        let variance = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / samples.len() as f64;
        Ok(Self {
            count: samples.len(),
            mean: m,
            variance,
        })
    }
}

/// Count-weighted grand mean and pooled variance
/// `(1/N) Σ (N_i V_i + N_i (a_i − a)²)`.
pub fn pooled_variance(groups: &[Group]) -> Result<(f64, f64)> {
    if groups.is_empty() {
        return Err(Error::EmptySet);
    }
    if let Some(i) = groups.iter().position(|g| g.count == 0) {
        return Err(Error::Stats(format!("group {i} is empty")));
    }
    let total: usize = groups.iter().map(|g| g.count).sum();
    let n = total as f64;
    let grand = groups.iter().map(|g| g.count as f64 * g.mean).sum::<f64>() / n;
    let pooled = groups
        .iter()
        .map(|g| {
            let c = g.count as f64;
            c * g.variance + c * (g.mean - grand).powi(2)
        })
        .sum::<f64>()
        / n;
    Ok((grand, pooled))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub groups: Vec<Group>,
    pub total_count: usize,
    pub grand_mean: f64,
    pub pooled_variance: f64,
    /// Over all samples; `None` for fewer than two samples or a zero mean.
    pub cov_percent: Option<f64>,
}

impl StatsSummary {
    pub fn from_groups(groups: &[Vec<f64>]) -> Result<Self> {
        let stats = groups.iter().map(|g| Group::from_samples(g)).collect::<Result<Vec<_>>>()?;
        let (grand_mean, pooled) = pooled_variance(&stats)?;
        let all: Vec<f64> = groups.iter().flatten().copied().collect();
        Ok(Self {
            total_count: all.len(),
            groups: stats,
            grand_mean,
            pooled_variance: pooled,
            cov_percent: coefficient_of_variation(&all).ok(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    #[serde(rename = "E")]
    YoungModulus,
    #[serde(rename = "nu")]
    PoissonRatio,
    #[serde(rename = "k")]
    ContactStiffness,
    #[serde(rename = "gamma")]
    ShearStiffness,
}

impl Parameter {
    pub const ALL: [Parameter; 4] = [
        Parameter::YoungModulus,
        Parameter::PoissonRatio,
        Parameter::ContactStiffness,
        Parameter::ShearStiffness,
    ];

    /// Position in `(E, ν, k, γ)`.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        crate::identify::PARAM_NAMES[self.index()]
    }

    /// `params` with this parameter scaled by `level`. ν is scaled in the
    /// Poisson rescaling coordinate so it stays below 0.5.
    pub fn scaled(self, params: &ConstitutiveParams, level: f64) -> Result<ConstitutiveParams> {
        if !(level > 0.0 && level.is_finite()) {
            return Err(Error::Domain(format!("scale level must be positive, got {level}")));
        }
        let mut a = params.identifiable();
        let i = self.index();
        a[i] = match self {
            Parameter::PoissonRatio => poisson_rescale_inv(level * poisson_rescale(a[i])?)?,
            _ => level * a[i],
        };
        Ok(params.with_identifiable(a))
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Parameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "E" | "e" | "young_modulus" => Ok(Parameter::YoungModulus),
            "nu" | "poisson_ratio" => Ok(Parameter::PoissonRatio),
            "k" | "contact_stiffness" => Ok(Parameter::ContactStiffness),
            "gamma" | "shear_stiffness" => Ok(Parameter::ShearStiffness),
            _ => Err(Error::Domain(format!("unknown parameter '{s}'"))),
        }
    }
}

/// A scripted manipulation: grippers and colliders live in the scene.
#[derive(Clone, Debug)]
pub struct Action {
    pub name: String,
    pub scene: Scene,
    pub horizon: usize,
}

/// Time-integrated energy of one action, split by term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    pub stretch: f64,
    pub area: f64,
    pub contact: f64,
    pub shear: f64,
}

impl EnergyBudget {
    pub fn total(&self) -> f64 {
        self.stretch + self.area + self.contact + self.shear
    }

    /// Total with the terms of `excluded` removed: E drops the whole
    /// corotated part, ν only its λ part, k the contact term, γ the shear term.
    pub fn excluding(&self, excluded: &[Parameter]) -> f64 {
        let has = |p| excluded.contains(&p);
        let mut w = 0.0;
        if !has(Parameter::YoungModulus) {
            w += self.stretch;
            if !has(Parameter::PoissonRatio) {
                w += self.area;
            }
        }
        if !has(Parameter::ContactStiffness) {
            w += self.contact;
        }
        if !has(Parameter::ShearStiffness) {
            w += self.shear;
        }
        w
    }

    /// `(W − W^j) / W` for the exclusion set.
    pub fn contribution(&self, excluded: &[Parameter]) -> Result<f64> {
        let w = self.total();
        if !(w > 0.0) {
            return Err(Error::Stats("action stores no elastic energy".into()));
        }
        Ok((w - self.excluding(excluded)) / w)
    }
}

pub fn energy_budget(action: &Action, params: &ConstitutiveParams) -> Result<EnergyBudget> {
    let m = params.material()?;
    let e = integrated_energy(&action.scene, params, action.horizon, &m)?;
    Ok(EnergyBudget {
        stretch: e.stretch,
        area: e.area,
        contact: e.contact,
        shear: e.shear,
    })
}

/// Energy below which an action counts as static: round-off level relative to
/// `(E + k + γ) · V · T`.
fn energy_floor(action: &Action, params: &ConstitutiveParams) -> f64 {
    let volume: f64 = (0..action.scene.mesh.num_triangles()).map(|t| action.scene.mesh.rest_volume(t)).sum();
    let stiffness = params.young_modulus + params.contact_stiffness + params.shear_stiffness;
    1e-12 * stiffness * volume * action.horizon as f64 * action.scene.grid.dt
}

/// Energy budget of an action that actually deforms the cloth.
fn active_budget(action: &Action, params: &ConstitutiveParams) -> Result<EnergyBudget> {
    let e = energy_budget(action, params)?;
    if e.total() <= energy_floor(action, params) {
        return Err(Error::Stats(format!("action '{}' stores no elastic energy", action.name)));
    }
    Ok(e)
}

pub fn energy_contribution(action: &Action, params: &ConstitutiveParams, parameter: Parameter) -> Result<f64> {
    active_budget(action, params)?.contribution(&[parameter])
}

pub const DEFAULT_LEVELS: [f64; 6] = [0.25, 0.5, 0.75, 1.25, 1.5, 1.75];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub parameter: Parameter,
    pub level: f64,
    /// Parameter value the cell was simulated with.
    pub value: f64,
    /// Bidirectional Chamfer distance of the final vertices to the baseline.
    pub distance: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionAblation {
    pub action: String,
    pub energy: Option<EnergyBudget>,
    /// `C^j` in `(E, ν, k, γ)` order.
    pub contributions: Option<[f64; 4]>,
    pub cells: Vec<AblationCell>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub levels: Vec<f64>,
    pub actions: Vec<ActionAblation>,
}

impl AblationReport {
    pub fn distance(&self, action: &str, parameter: Parameter, level: f64) -> Option<f64> {
        if level == 1.0 {
            return Some(0.0);
        }
        self.actions
            .iter()
            .find(|a| a.action == action)?
            .cells
            .iter()
            .find(|c| c.parameter == parameter && c.level == level)?
            .distance
    }
}

/// Rescales one parameter at a time and measures how far the final shape moves
/// from the unscaled run. Failed cells are recorded and the sweep continues.
pub fn ablation_sweep(actions: &[Action], params: &ConstitutiveParams, levels: &[f64]) -> Result<AblationReport> {
    params.validate()?;
    let mut out = Vec::with_capacity(actions.len());
    for action in actions {
        let baseline = simulate(&action.scene, params, action.horizon, action.horizon.max(1))
            .map(|r| r.final_state().positions.clone());
        let baseline = match baseline {
            Ok(b) => b,
            Err(e) => {
                out.push(ActionAblation {
                    action: action.name.clone(),
                    energy: None,
                    contributions: None,
                    cells: Vec::new(),
                    error: Some(e.to_string()),
                });
                continue;
            }
        };
        let energy = active_budget(action, params).ok();
        let contributions = energy.and_then(|e| {
            let c: Vec<f64> = Parameter::ALL.iter().filter_map(|p| e.contribution(&[*p]).ok()).collect();
            <[f64; 4]>::try_from(c).ok()
        });
        let mut cells = Vec::new();
        for parameter in Parameter::ALL {
            for &level in levels {
                let outcome = parameter.scaled(params, level).and_then(|p| {
                    let value = p.identifiable()[parameter.index()];
                    let r = simulate(&action.scene, &p, action.horizon, action.horizon.max(1))?;
                    Ok((value, chamfer_bidirectional(&r.final_state().positions, &baseline)?))
                });
                cells.push(match outcome {
                    Ok((value, d)) => AblationCell {
                        parameter,
                        level,
                        value,
                        distance: Some(d),
                        error: None,
                    },
                    Err(e) => AblationCell {
                        parameter,
                        level,
                        value: f64::NAN,
                        distance: None,
                        error: Some(e.to_string()),
                    },
                });
            }
        }
        out.push(ActionAblation {
            action: action.name.clone(),
            energy,
            contributions,
            cells,
            error: None,
        });
    }
    Ok(AblationReport {
        levels: levels.to_vec(),
        actions: out,
    })
}
