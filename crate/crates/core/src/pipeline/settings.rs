//! Every tunable of the pipeline, read from a plain-text config.

use std::collections::BTreeMap;

use crate::appraisal::{ExponentScale, HeadParams, PerceptionMode, PERCEPTION_A_T, PERCEPTION_MAX_EDGE_AGE};
use crate::appraisal::memory::{MEMORY_A_T, MEMORY_MAX_EDGE_AGE};
use crate::appraisal::mood::{MOOD_A_T, MOOD_MAX_EDGE_AGE};
use crate::cccnn::{TrainParams, DEFAULT_GAMMA_AUDITORY, DEFAULT_GAMMA_VISUAL};
use crate::error::Result;
use crate::gwr::GwrParams;
use crate::nn::SgdL2;
use crate::session::config::{Config, Schema};

const TRAIN_KEYS: &[&str] = &["epochs", "lr", "l2", "batch_size", "augment"];

pub const SCHEMA: Schema = &[
    ("synth", &["layout", "segments", "events_per_topic", "noise", "side", "jitter", "interval_ms"]),
    ("model", &["profile", "gamma_visual", "gamma_auditory"]),
    ("train_visual", TRAIN_KEYS),
    ("train_audio", TRAIN_KEYS),
    ("train_cross", TRAIN_KEYS),
    ("gwr", &["h_t", "eps_b", "eps_n", "tau_b", "tau_n", "kappa", "beta", "alpha"]),
    ("perception", &["a_t", "max_edge_age", "epochs", "mode"]),
    ("heads", &["hidden", "epochs", "lr", "l2", "batch_size"]),
    ("memory", &["a_t", "max_edge_age"]),
    ("mood", &["a_t", "max_edge_age", "strength", "exponent_scale", "inject_memory"]),
    ("replay", &["snapshot_every"]),
    ("state", &["side_file_blobs"]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    /// `acceptance`, `mini` or `custom` (uses `segments`).
    pub layout: String,
    /// `;`-separated `subject:topic:concept*count,...` runs.
    pub segments: String,
    pub events_per_topic: usize,
    pub noise: f64,
    pub side: usize,
    pub jitter: f64,
    pub interval_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub synth: SynthSettings,
    pub profile: String,
    pub gamma_visual: f64,
    pub gamma_auditory: f64,
    pub train_visual: TrainParams,
    pub train_audio: TrainParams,
    pub train_cross: TrainParams,
    pub perception: GwrParams,
    pub perception_epochs: usize,
    pub perception_mode: PerceptionMode,
    pub heads: HeadParams,
    pub memory: GwrParams,
    pub mood: GwrParams,
    pub mood_strength: f64,
    pub exponent_scale: ExponentScale,
    pub inject_memory: bool,
    pub snapshot_every: usize,
    pub side_file_blobs: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self::from_config(&Config::default()).expect("defaults parse")
    }
}

fn train_params(cfg: &Config, section: &str, epochs: usize, lr: f64) -> Result<TrainParams> {
    Ok(TrainParams {
        epochs: cfg.get_or(section, "epochs", epochs)?,
        batch_size: cfg.get_or(section, "batch_size", 8)?,
        sgd: SgdL2 { learning_rate: cfg.get_or(section, "lr", lr)?, l2: cfg.get_or(section, "l2", 1e-4)? },
        seed: 0,
        augment: cfg.get_or(section, "augment", false)?,
    })
}

fn gwr_params(cfg: &Config, section: &str, a_t: f64, max_age: u32) -> Result<GwrParams> {
    let d = GwrParams::default();
    let alpha = match cfg.raw("gwr", "alpha") {
        None => d.alpha.clone(),
        Some(s) => s
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| crate::Error::Validation(format!("config gwr.alpha: cannot parse '{s}'")))
            })
            .collect::<Result<_>>()?,
    };
    let p = GwrParams {
        a_t: cfg.get_or(section, "a_t", a_t)?,
        max_edge_age: cfg.get_or(section, "max_edge_age", max_age)?,
        h_t: cfg.get_or("gwr", "h_t", d.h_t)?,
        eps_b: cfg.get_or("gwr", "eps_b", d.eps_b)?,
        eps_n: cfg.get_or("gwr", "eps_n", d.eps_n)?,
        tau_b: cfg.get_or("gwr", "tau_b", d.tau_b)?,
        tau_n: cfg.get_or("gwr", "tau_n", d.tau_n)?,
        kappa: cfg.get_or("gwr", "kappa", d.kappa)?,
        beta: cfg.get_or("gwr", "beta", d.beta)?,
        h_floor: d.h_floor,
        alpha,
    };
    p.validate()?;
    Ok(p)
}

impl Settings {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let hd = HeadParams::default();
        Ok(Self {
            synth: SynthSettings {
                layout: cfg.get_or("synth", "layout", "acceptance".to_string())?,
                segments: cfg.get_or("synth", "segments", String::new())?,
                events_per_topic: cfg.get_or("synth", "events_per_topic", 12)?,
                noise: cfg.get_or("synth", "noise", 0.1)?,
                side: cfg.get_or("synth", "side", 16)?,
                jitter: cfg.get_or("synth", "jitter", 0.15)?,
                interval_ms: cfg.get_or("synth", "interval_ms", 1000)?,
            },
            profile: cfg.get_or("model", "profile", "desk".to_string())?,
            gamma_visual: cfg.get_or("model", "gamma_visual", DEFAULT_GAMMA_VISUAL)?,
            gamma_auditory: cfg.get_or("model", "gamma_auditory", DEFAULT_GAMMA_AUDITORY)?,
            train_visual: train_params(cfg, "train_visual", 30, 0.02)?,
            train_audio: train_params(cfg, "train_audio", 30, 0.02)?,
            train_cross: train_params(cfg, "train_cross", 20, 0.02)?,
            perception: gwr_params(cfg, "perception", PERCEPTION_A_T, PERCEPTION_MAX_EDGE_AGE)?,
            perception_epochs: cfg.get_or("perception", "epochs", 5)?,
            perception_mode: cfg.get_or("perception", "mode", PerceptionMode::Online)?,
            heads: HeadParams {
                hidden: cfg.get_or("heads", "hidden", hd.hidden)?,
                epochs: cfg.get_or("heads", "epochs", hd.epochs)?,
                batch_size: cfg.get_or("heads", "batch_size", hd.batch_size)?,
                sgd: SgdL2 {
                    learning_rate: cfg.get_or("heads", "lr", hd.sgd.learning_rate)?,
                    l2: cfg.get_or("heads", "l2", hd.sgd.l2)?,
                },
            },
            memory: gwr_params(cfg, "memory", MEMORY_A_T, MEMORY_MAX_EDGE_AGE)?,
            mood: gwr_params(cfg, "mood", MOOD_A_T, MOOD_MAX_EDGE_AGE)?,
            mood_strength: cfg.get_or("mood", "strength", 1.0)?,
            exponent_scale: cfg.get_or("mood", "exponent_scale", ExponentScale::Mapped)?,
            inject_memory: cfg.get_or("mood", "inject_memory", false)?,
            snapshot_every: cfg.get_or("replay", "snapshot_every", 1)?,
            side_file_blobs: cfg.get_or("state", "side_file_blobs", false)?,
        })
    }

    /// Effective value of every key, defaults included.
    pub fn effective(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        let s = &self.synth;
        put("synth.layout", s.layout.clone());
        put("synth.segments", s.segments.clone());
        put("synth.events_per_topic", s.events_per_topic.to_string());
        put("synth.noise", s.noise.to_string());
        put("synth.side", s.side.to_string());
        put("synth.jitter", s.jitter.to_string());
        put("synth.interval_ms", s.interval_ms.to_string());
        put("model.profile", self.profile.clone());
        put("model.gamma_visual", self.gamma_visual.to_string());
        put("model.gamma_auditory", self.gamma_auditory.to_string());
        for (sec, t) in [
            ("train_visual", &self.train_visual),
            ("train_audio", &self.train_audio),
            ("train_cross", &self.train_cross),
        ] {
            put(&format!("{sec}.epochs"), t.epochs.to_string());
            put(&format!("{sec}.lr"), t.sgd.learning_rate.to_string());
            put(&format!("{sec}.l2"), t.sgd.l2.to_string());
            put(&format!("{sec}.batch_size"), t.batch_size.to_string());
            put(&format!("{sec}.augment"), t.augment.to_string());
        }
        let g = &self.perception;
        put("gwr.h_t", g.h_t.to_string());
        put("gwr.eps_b", g.eps_b.to_string());
        put("gwr.eps_n", g.eps_n.to_string());
        put("gwr.tau_b", g.tau_b.to_string());
        put("gwr.tau_n", g.tau_n.to_string());
        put("gwr.kappa", g.kappa.to_string());
        put("gwr.beta", g.beta.to_string());
        put("gwr.alpha", g.alpha.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        for (sec, p) in [("perception", &self.perception), ("memory", &self.memory), ("mood", &self.mood)] {
            put(&format!("{sec}.a_t"), p.a_t.to_string());
            put(&format!("{sec}.max_edge_age"), p.max_edge_age.to_string());
        }
        put("perception.epochs", self.perception_epochs.to_string());
        put("perception.mode", format!("{:?}", self.perception_mode).to_lowercase());
        put("heads.hidden", self.heads.hidden.to_string());
        put("heads.epochs", self.heads.epochs.to_string());
        put("heads.lr", self.heads.sgd.learning_rate.to_string());
        put("heads.l2", self.heads.sgd.l2.to_string());
        put("heads.batch_size", self.heads.batch_size.to_string());
        put("mood.strength", self.mood_strength.to_string());
        put("mood.exponent_scale", format!("{:?}", self.exponent_scale).to_lowercase());
        put("mood.inject_memory", self.inject_memory.to_string());
        put("replay.snapshot_every", self.snapshot_every.to_string());
        put("state.side_file_blobs", self.side_file_blobs.to_string());
        m
    }
}
