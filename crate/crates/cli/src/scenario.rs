//! Scenario documents: one JSON object per run, unknown keys rejected.

use std::path::{Path, PathBuf};

use qfc_link::detection::{DetectorParams, FPGA_RESOLUTION_PS};
use qfc_link::qfc::{EfficiencyBudget, QfcStage};
use qfc_link::source::{EmitterParams, PulsedScheduleParams};
use qfc_link::Picos;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Context};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    G2Hbt,
    Lifetime,
    ConversionCurve,
    Budget,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::G2Hbt => "g2_hbt",
            Experiment::Lifetime => "lifetime",
            Experiment::ConversionCurve => "conversion_curve",
            Experiment::Budget => "budget",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emitter {
    Cw(EmitterParams),
    Pulsed(PulsedScheduleParams),
}

/// Where the conversion stages sit in the correlation setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StagePlacement {
    /// Only the photons of arm b pass through the stages.
    #[default]
    ArmB,
    /// All photons are converted before the beam splitter.
    BeforeSplitter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSplitter {
    pub reflectance: f64,
}

impl Default for BeamSplitter {
    fn default() -> Self {
        BeamSplitter { reflectance: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detectors {
    pub a: DetectorParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<DetectorParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSettings {
    pub bin_width_ps: Picos,
    /// Half-width of the correlation window.
    pub tau_range_ps: Picos,
    pub cutoff_ps: Picos,
    /// Bins whose centres fall in this range enter the backscatter fit.
    pub gaussian_range_ps: (Picos, Picos),
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            bin_width_ps: FPGA_RESOLUTION_PS,
            tau_range_ps: 200_000,
            cutoff_ps: 7500,
            gaussian_range_ps: (0, 7500),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversionPoint {
    pub pump_mw: f64,
    pub conversion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(default = "one")]
    pub shards: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emitter: Option<Emitter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ps: Option<Picos>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_triggers: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<QfcStage>,
    #[serde(default)]
    pub stage_placement: StagePlacement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<EfficiencyBudget>,
    #[serde(default)]
    pub beam_splitter: BeamSplitter,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detectors: Option<Detectors>,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conversion_points: Vec<ConversionPoint>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn one() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn missing(field: &str, exp: Experiment) -> CliError {
    CliError::Validation(format!("{field}: required for experiment {}", exp.name()))
}

impl Scenario {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let s: Scenario = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("config: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Checks every present section, then the sections the experiment needs.
    pub fn validate(&self) -> CliResult<()> {
        if self.shards == 0 {
            return Err(CliError::Validation("shards: must be at least 1".into()));
        }
        match &self.emitter {
            Some(Emitter::Cw(p)) => p.validate().at("emitter.cw")?,
            Some(Emitter::Pulsed(p)) => p.validate().at("emitter.pulsed")?,
            None => {}
        }
        for (i, st) in self.stages.iter().enumerate() {
            let path = format!("stages[{i}]");
            st.validate().at(&path)?;
            st.survival().at(&path)?;
        }
        if let Some(b) = &self.budget {
            b.validate().at("budget")?;
        }
        if !(0.0..=1.0).contains(&self.beam_splitter.reflectance) {
            return Err(CliError::Validation(
                "beam_splitter.reflectance: must lie in [0, 1]".into(),
            ));
        }
        if let Some(d) = &self.detectors {
            d.a.validate().at("detectors.a")?;
            if let Some(b) = &d.b {
                b.validate().at("detectors.b")?;
            }
        }
        self.validate_analysis()?;
        self.validate_experiment()
    }

    fn validate_analysis(&self) -> CliResult<()> {
        let a = &self.analysis;
        let bad = |m: &str| Err(CliError::Validation(format!("analysis.{m}")));
        if a.bin_width_ps <= 0 {
            return bad("bin_width_ps: must be positive");
        }
        if a.tau_range_ps <= 0 {
            return bad("tau_range_ps: must be positive");
        }
        if a.gaussian_range_ps.1 <= a.gaussian_range_ps.0 {
            return bad("gaussian_range_ps: upper edge must exceed lower edge");
        }
        if let Some(d) = &self.detectors {
            let res = d.b.map_or(d.a.resolution_ps, |b| b.resolution_ps.max(d.a.resolution_ps));
            if a.bin_width_ps < res {
                return bad("bin_width_ps: must not be finer than the detector resolution");
            }
        }
        Ok(())
    }

    fn validate_experiment(&self) -> CliResult<()> {
        let exp = self.experiment;
        match exp {
            Experiment::G2Hbt => {
                if !matches!(self.emitter, Some(Emitter::Cw(_))) {
                    return Err(missing("emitter.cw", exp));
                }
                match self.duration_ps {
                    Some(d) if d > 0 => {}
                    Some(_) => return Err(CliError::Validation("duration_ps: must be positive".into())),
                    None => return Err(missing("duration_ps", exp)),
                }
                match &self.detectors {
                    Some(Detectors { b: Some(_), .. }) => {}
                    Some(_) => return Err(missing("detectors.b", exp)),
                    None => return Err(missing("detectors", exp)),
                }
            }
            Experiment::Lifetime => {
                let Some(Emitter::Pulsed(sched)) = &self.emitter else {
                    return Err(missing("emitter.pulsed", exp));
                };
                match self.n_triggers {
                    Some(n) if n > 0 => {}
                    Some(_) => return Err(CliError::Validation("n_triggers: must be positive".into())),
                    None => return Err(missing("n_triggers", exp)),
                }
                if self.detectors.is_none() {
                    return Err(missing("detectors", exp));
                }
                let window = sched.measurement_window_ps;
                let w = self.analysis.bin_width_ps;
                if !(0..window).contains(&self.analysis.cutoff_ps) {
                    return Err(CliError::Validation(
                        "analysis.cutoff_ps: must lie inside the measurement window".into(),
                    ));
                }
                if w > window {
                    return Err(CliError::Validation(
                        "analysis.bin_width_ps: must not exceed the measurement window".into(),
                    ));
                }
            }
            Experiment::ConversionCurve => {}
            Experiment::Budget => {
                if self.budget.is_none() && self.stages.is_empty() {
                    return Err(missing("budget", exp));
                }
            }
        }
        Ok(())
    }

    pub fn conversion_pairs(&self) -> Vec<(f64, f64)> {
        self.conversion_points.iter().map(|p| (p.pump_mw, p.conversion)).collect()
    }
}
