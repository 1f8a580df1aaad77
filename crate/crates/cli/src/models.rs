use genlearn::autoregressive::{MarkovModel, NeuralArModel, MARKOV_SCHEMA, NEURAL_AR_SCHEMA};
use genlearn::diffusion::{DenoiserNet, DiffusionSchedule, Standardizer, TrainedDiffusion};
use genlearn::elbo_vae::{VaeModel, VAE_SCHEMA};
use genlearn::gan::{GanModel, GAN_SCHEMA};
use genlearn::latent::{GmmParams, PpcaParams, GMM_SCHEMA, PPCA_SCHEMA};
use genlearn::neuralnet::{MlpParams, MLP_SCHEMA};
use genlearn::regression::{LinRegParams, LogRegParams};
use genlearn::score::{ScoreModel, SCORE_SCHEMA};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const LINREG_SCHEMA: &str = "genlearn.linreg/1";
pub const LOGREG_SCHEMA: &str = "genlearn.logreg/1";
pub const DIFFUSION_SCHEMA: &str = "genlearn.diffusion/1";

#[derive(Serialize, Deserialize)]
struct LinregFile {
    schema: String,
    #[serde(flatten)]
    params: LinRegParams,
}

#[derive(Serialize, Deserialize)]
struct LogregFile {
    schema: String,
    classes: usize,
    #[serde(flatten)]
    params: LogRegParams,
}

#[derive(Serialize, Deserialize)]
struct DiffusionFile {
    schema: String,
    denoiser: DenoiserNet,
    schedule: DiffusionSchedule,
    standardizer: Standardizer,
}

pub enum SavedModel {
    Linreg(LinRegParams),
    Logreg(LogRegParams),
    Mlp(MlpParams),
    Markov(MarkovModel),
    NeuralAr(NeuralArModel),
    Gmm(GmmParams),
    Ppca(PpcaParams),
    Vae(VaeModel),
    Diffusion(TrainedDiffusion),
    Gan(GanModel),
    Score(ScoreModel),
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("model serialises");
    s.push('\n');
    s.into_bytes()
}

fn with_newline(s: String) -> Vec<u8> {
    let mut s = s;
    s.push('\n');
    s.into_bytes()
}

impl SavedModel {
    pub fn schema(&self) -> &'static str {
        match self {
            SavedModel::Linreg(_) => LINREG_SCHEMA,
            SavedModel::Logreg(_) => LOGREG_SCHEMA,
            SavedModel::Mlp(_) => MLP_SCHEMA,
            SavedModel::Markov(_) => MARKOV_SCHEMA,
            SavedModel::NeuralAr(_) => NEURAL_AR_SCHEMA,
            SavedModel::Gmm(_) => GMM_SCHEMA,
            SavedModel::Ppca(_) => PPCA_SCHEMA,
            SavedModel::Vae(_) => VAE_SCHEMA,
            SavedModel::Diffusion(_) => DIFFUSION_SCHEMA,
            SavedModel::Gan(_) => GAN_SCHEMA,
            SavedModel::Score(_) => SCORE_SCHEMA,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        Ok(match self {
            SavedModel::Linreg(p) => pretty(&LinregFile { schema: LINREG_SCHEMA.into(), params: p.clone() }),
            SavedModel::Logreg(p) => {
                let classes = if p.is_binary() { 2 } else { p.weights.rows() };
                pretty(&LogregFile { schema: LOGREG_SCHEMA.into(), classes, params: p.clone() })
            }
            SavedModel::Mlp(m) => with_newline(m.to_json()?),
            SavedModel::Markov(m) => with_newline(m.to_json()?),
            SavedModel::NeuralAr(m) => with_newline(m.to_json()?),
            SavedModel::Gmm(m) => with_newline(m.to_json()?),
            SavedModel::Ppca(m) => with_newline(m.to_json()?),
            SavedModel::Vae(m) => with_newline(m.to_json()?),
            SavedModel::Diffusion(d) => pretty(&DiffusionFile {
                schema: DIFFUSION_SCHEMA.into(),
                denoiser: d.net.clone(),
                schedule: d.schedule.clone(),
                standardizer: d.standardizer.clone(),
            }),
            SavedModel::Gan(m) => with_newline(m.to_json()?),
            SavedModel::Score(m) => with_newline(m.to_json()?),
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("model file is not JSON: {e}")))?;
        let schema = value
            .get("schema")
            .and_then(|s| s.as_str())
            .ok_or_else(|| CliError::Usage("model file has no schema field".into()))?;
        let bad = |e: serde_json::Error| CliError::Usage(format!("malformed {schema} model: {e}"));
        Ok(match schema {
            LINREG_SCHEMA => SavedModel::Linreg(serde_json::from_str::<LinregFile>(text).map_err(bad)?.params),
            LOGREG_SCHEMA => SavedModel::Logreg(serde_json::from_str::<LogregFile>(text).map_err(bad)?.params),
            MLP_SCHEMA => SavedModel::Mlp(MlpParams::from_json(text)?),
            MARKOV_SCHEMA => SavedModel::Markov(MarkovModel::from_json(text)?),
            NEURAL_AR_SCHEMA => SavedModel::NeuralAr(NeuralArModel::from_json(text)?),
            GMM_SCHEMA => SavedModel::Gmm(GmmParams::from_json(text)?),
            PPCA_SCHEMA => SavedModel::Ppca(PpcaParams::from_json(text)?),
            VAE_SCHEMA => SavedModel::Vae(VaeModel::from_json(text)?),
            DIFFUSION_SCHEMA => {
                let f: DiffusionFile = serde_json::from_str(text).map_err(bad)?;
                SavedModel::Diffusion(TrainedDiffusion {
                    net: f.denoiser,
                    schedule: f.schedule,
                    standardizer: f.standardizer,
                    trace: Vec::new(),
                })
            }
            GAN_SCHEMA => SavedModel::Gan(GanModel::from_json(text)?),
            SCORE_SCHEMA => SavedModel::Score(ScoreModel::from_json(text)?),
            other => return Err(CliError::Usage(format!("unknown model schema `{other}`"))),
        })
    }
}
