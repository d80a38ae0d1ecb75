use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::transforms::TransformSpec;

/// Origin of a piece of content. Machine content carries label 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Machine,
    Human,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Machine => 0,
            Label::Human => 1,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Machine),
            1 => Ok(Label::Human),
            other => Err(Error::InvalidInput(format!(
                "label must be 0 (machine) or 1 (human), got {other}"
            ))),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::from_u8(v).map_err(serde::de::Error::custom)
    }
}

/// Misclassification costs. `alpha` prices calling human content machine,
/// `beta` prices calling machine content human. Correct calls cost nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl LossSpec {
    pub const ZERO_ONE: LossSpec = LossSpec {
        alpha: 1.0,
        beta: 1.0,
    };

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let loss = LossSpec { alpha, beta };
        loss.validate()?;
        Ok(loss)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0 && self.beta.is_finite() && self.beta > 0.0)
        {
            return Err(Error::InvalidInput(format!(
                "loss weights must be positive and finite, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, lambda: f64) -> LossSpec {
        LossSpec {
            alpha: self.alpha * lambda,
            beta: self.beta * lambda,
        }
    }
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec::ZERO_ONE
    }
}

/// Which side of the threshold is called machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Scores below the threshold are labelled machine.
    LowIsMachine,
    /// Scores below the threshold are labelled human.
    LowIsHuman,
}

impl Orientation {
    pub const BOTH: [Orientation; 2] = [Orientation::LowIsMachine, Orientation::LowIsHuman];

    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::LowIsMachine => "low-is-machine",
            Orientation::LowIsHuman => "low-is-human",
        }
    }
}

/// One member of the scalar-threshold classifier family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    #[serde(with = "extended_real")]
    pub threshold: f64,
    pub orientation: Orientation,
}

impl DecisionRule {
    pub fn new(threshold: f64, orientation: Orientation) -> Self {
        DecisionRule {
            threshold,
            orientation,
        }
    }

    pub fn all_human() -> Self {
        DecisionRule::new(f64::NEG_INFINITY, Orientation::LowIsMachine)
    }

    pub fn all_machine() -> Self {
        DecisionRule::new(f64::INFINITY, Orientation::LowIsMachine)
    }
}

/// Classify one score under a rule.
pub fn classify(score: f64, rule: &DecisionRule) -> Result<Label> {
    if !score.is_finite() {
        return Err(Error::InvalidInput(format!("score must be finite, got {score}")));
    }
    let below = score < rule.threshold;
    Ok(match (rule.orientation, below) {
        (Orientation::LowIsMachine, true) | (Orientation::LowIsHuman, false) => Label::Machine,
        _ => Label::Human,
    })
}

/// A scored piece of content: the unit the risk engine consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample_id: String,
    pub label: Label,
    pub score: f64,
}

impl ScoredSample {
    pub fn new(sample_id: impl Into<String>, label: Label, score: f64) -> Self {
        ScoredSample {
            sample_id: sample_id.into(),
            label,
            score,
        }
    }
}

pub const SCALAR_THRESHOLD_FAMILY: &str = "scalar-threshold";

fn default_family() -> String {
    SCALAR_THRESHOLD_FAMILY.to_string()
}

/// The sextuple scoping a detectability claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanDetectionContext {
    pub sample_space_id: String,
    pub human_corpus_ref: String,
    pub pi: f64,
    pub loss: LossSpec,
    pub transform: TransformSpec,
    #[serde(default = "default_family")]
    pub family: String,
}

impl HumanDetectionContext {
    pub fn validate(&self) -> Result<()> {
        validate_pi(self.pi)?;
        self.loss.validate()?;
        self.transform.validate()?;
        if self.family != SCALAR_THRESHOLD_FAMILY {
            return Err(Error::InvalidInput(format!(
                "unsupported classifier family `{}`; only `{SCALAR_THRESHOLD_FAMILY}` is available",
                self.family
            )));
        }
        Ok(())
    }
}

pub(crate) fn validate_pi(pi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::InvalidInput(format!("pi must lie in [0, 1], got {pi}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskPoint {
    pub rule: DecisionRule,
    pub risk: f64,
}

/// Empirical risk of every candidate rule, low-is-machine entries first.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskCurve {
    pub points: Vec<RiskPoint>,
    pub pi: f64,
    pub loss: LossSpec,
}

impl RiskCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn by_orientation(&self, orientation: Orientation) -> impl Iterator<Item = &RiskPoint> {
        self.points
            .iter()
            .filter(move |p| p.rule.orientation == orientation)
    }
}

/// Headline result for one (model, context) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauReport {
    pub context_id: String,
    pub model_id: String,
    pub transform: String,
    pub tau_hat: f64,
    pub risk: f64,
    pub chance_risk: f64,
    #[serde(with = "extended_real")]
    pub threshold: f64,
    pub orientation: Orientation,
    pub n0: usize,
    pub n1: usize,
    pub pi: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sample_space_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_cv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform_spec: Option<TransformSpec>,
}

impl TauReport {
    pub fn best_rule(&self) -> DecisionRule {
        DecisionRule::new(self.threshold, self.orientation)
    }

    pub fn empirical_risk(&self) -> f64 {
        self.risk
    }

    pub fn loss(&self) -> LossSpec {
        LossSpec {
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub fn with_ids(
        mut self,
        context_id: impl Into<String>,
        model_id: impl Into<String>,
        transform: impl Into<String>,
    ) -> Self {
        self.context_id = context_id.into();
        self.sample_space_id = self.context_id.clone();
        self.model_id = model_id.into();
        self.transform = transform.into();
        self
    }
}

/// Finite values as plain numbers, infinities as the strings `"-inf"` / `"inf"`.
pub mod extended_real {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            Err(serde::ser::Error::custom("NaN is not an extended real"))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("bad extended real `{other}`"))),
            },
        }
    }
}
