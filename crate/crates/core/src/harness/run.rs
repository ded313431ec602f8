use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use super::config::{RunConfig, StepOrder};
use crate::error::{Error, Result};
use crate::metrics::{self, EventLog, MetricRecord, MetricsWriter};
use crate::replay::{MixedSampler, ReplayBuffer, Transition};
use crate::reset::{apply_reset, schedule_check};
use crate::rng::{self, RngStream};
use crate::sac::{ActMode, Policy, SacAgent, UniformPolicy};
use crate::world_model::{rollout, GaussianEnsemble, RolloutStats};

pub const METRICS_FILE: &str = "metrics.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const CONFIG_FILE: &str = "config.toml";
pub const FAILED_FILE: &str = "FAILED";
pub const AGENT_FILE: &str = "agent.pagt";
pub const MODEL_FILE: &str = "model.pmdl";
pub const BUFFER_FILE: &str = "d_env.pbuf";

// Stream tags for `rng::derive_seed(run_seed, [tag, ..])`.
const ENV: u64 = 1;
const ACT: u64 = 2;
const MODEL: u64 = 3;
const ROLLOUT: u64 = 4;
const AGENT: u64 = 5;
const EVAL: u64 = 6;
const METRIC: u64 = 7;
const PROBE: u64 = 8;
const INIT_MODEL: u64 = 9;
const INIT_AGENT: u64 = 10;

/// MMSE on `D_env` immediately before a reset and after the probe delay.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResetProbe {
    pub step: u64,
    pub mmse_before: f64,
    pub mmse_after: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub records: Vec<MetricRecord>,
    pub agent_updates: u64,
    pub model_trainings: u64,
    pub resets: Vec<ResetProbe>,
    pub final_window_return: f64,
    pub final_window_mmse: f64,
    /// Mean evaluation return over every checkpoint.
    pub return_auc: f64,
    pub reserved_mmse: Option<f64>,
}

/// Mean of the last `ceil(10%)` of `xs` (at least one element).
pub fn final_window_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let k = xs.len().div_ceil(10).max(1);
    xs[xs.len() - k..].iter().sum::<f64>() / k as f64
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Runs one training run, writing artifacts to `cfg.out_dir`. On failure a
/// `FAILED` marker holding the error is left next to the partial artifacts.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let marker = cfg.out_dir.join(FAILED_FILE);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    let result = Runner::new(cfg).and_then(|r| r.execute());
    if let Err(e) = &result {
        let _ = fs::write(&marker, format!("{e}\n"));
    }
    result
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    env: Box<dyn crate::envs::Environment>,
    eval_env: Box<dyn crate::envs::Environment>,
    d_env: ReplayBuffer,
    d_model: ReplayBuffer,
    model: GaussianEnsemble,
    agent: SacAgent,
    sampler: MixedSampler,
    metrics: MetricsWriter,
    events: EventLog,
    act_rng: RngStream,
    model_rng: RngStream,
    rollout_rng: RngStream,
    agent_rng: RngStream,
    episode: u64,
    state: Vec<f64>,
    last_member_losses: Vec<f64>,
    records: Vec<MetricRecord>,
    resets: Vec<ResetProbe>,
    agent_updates: u64,
    model_trainings: u64,
    rollouts_added: u64,
    rollouts_truncated: u64,
    started: Instant,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self> {
        let env = cfg.env.build()?;
        let eval_env = cfg.env.build()?;
        let spec = env.spec().clone();
        let capacity = cfg.env_capacity.unwrap_or(cfg.total_steps as usize).max(1);
        let mut d_env = ReplayBuffer::new(capacity, spec.state_dim, spec.action_dim)?;
        if let Some(p) = &cfg.buffer_in {
            let loaded = ReplayBuffer::load(p)?;
            if loaded.state_dim() != spec.state_dim || loaded.action_dim() != spec.action_dim {
                return Err(Error::config(format!("buffer {} does not match the environment", p.display())));
            }
            for t in loaded.iter() {
                d_env.push(t.clone())?;
            }
        }
        let d_model = ReplayBuffer::new(cfg.resolved_model_capacity()?, spec.state_dim, spec.action_dim)?;
        let model = GaussianEnsemble::new(
            spec.state_dim,
            spec.action_dim,
            &cfg.model,
            rng::derive_seed(cfg.seed, &[INIT_MODEL]),
        )?;
        let agent = SacAgent::new(&spec, &cfg.sac, rng::derive_seed(cfg.seed, &[INIT_AGENT]))?;
        let s = |tag| rng::stream(rng::derive_seed(cfg.seed, &[tag]));
        let mut env = env;
        let state = env.reset(rng::derive_seed(cfg.seed, &[ENV, 0]));
        fs::write(cfg.out_dir.join(CONFIG_FILE), cfg.to_toml_string()?)
            .map_err(|e| Error::io(cfg.out_dir.join(CONFIG_FILE), e))?;
        Ok(Self {
            cfg,
            env,
            eval_env,
            d_env,
            d_model,
            model,
            agent,
            sampler: MixedSampler::new(cfg.real_ratio)?,
            metrics: MetricsWriter::create(cfg.out_dir.join(METRICS_FILE))?,
            events: EventLog::create(cfg.out_dir.join(EVENTS_FILE))?,
            act_rng: s(ACT),
            model_rng: s(MODEL),
            rollout_rng: s(ROLLOUT),
            agent_rng: s(AGENT),
            episode: 0,
            state,
            last_member_losses: Vec::new(),
            records: Vec::new(),
            resets: Vec::new(),
            agent_updates: 0,
            model_trainings: 0,
            rollouts_added: 0,
            rollouts_truncated: 0,
            started: Instant::now(),
        })
    }

    fn execute(mut self) -> Result<RunSummary> {
        let cfg = self.cfg;
        let schedule = cfg.model_schedule()?;
        let warmup = if cfg.buffer_in.is_some() { 0 } else { cfg.warmup_steps };
        let warmup_agent = cfg.warmup_agent.as_ref().map(SacAgent::load).transpose()?;
        let spec = self.env.spec().clone();
        let uniform = UniformPolicy {
            low: spec.action_low.clone(),
            high: spec.action_high.clone(),
        };
        self.events.append(&json!({
            "event": "run_start",
            "variant": cfg.variant,
            "seed": cfg.seed,
            "total_steps": cfg.total_steps,
            "warmup_steps": warmup,
            "prefilled": self.d_env.len(),
            "warmup_policy": if cfg.buffer_in.is_some() { "buffer_in" } else if warmup_agent.is_some() { "saved_agent" } else { "uniform" },
        }))?;

        for t in 1..=cfg.total_steps {
            let policy: &dyn Policy = if t <= warmup {
                match &warmup_agent {
                    Some(a) => a,
                    None => &uniform,
                }
            } else {
                &self.agent
            };
            let s = ndarray::aview1(&self.state).insert_axis(ndarray::Axis(0));
            let action = policy.act_batch(s, ActMode::Stochastic, &mut self.act_rng)?.row(0).to_vec();
            self.env_step(action)?;

            if t > warmup {
                let t_post = t - warmup;
                let due = schedule.due(t_post);
                match cfg.order {
                    StepOrder::ModelFirst => {
                        self.train_model(t, due)?;
                        self.step_rollouts()?;
                        self.update_agent()?;
                    }
                    StepOrder::AgentFirst => {
                        self.step_rollouts()?;
                        self.update_agent()?;
                        self.train_model(t, due)?;
                    }
                }
            }

            if t % cfg.checkpoint_interval == 0 {
                self.checkpoint(t)?;
            }
            if let Some(i) = self
                .resets
                .iter()
                .position(|r| r.mmse_after.is_none() && r.step + cfg.reset_probe_delay == t)
            {
                let after = self.probe_mmse(t)?;
                self.resets[i].mmse_after = Some(after);
                self.events.append(&json!({
                    "event": "reset_probe",
                    "step": t,
                    "reset_step": self.resets[i].step,
                    "mmse_before": self.resets[i].mmse_before,
                    "mmse_after": after,
                }))?;
            }
            if schedule_check(&cfg.reset, t) {
                let before = self.probe_mmse(t)?;
                let report = apply_reset(&cfg.reset, &mut self.model, &mut self.agent, t, cfg.seed)?;
                let mut ev = serde_json::to_value(&report).map_err(|e| Error::Usage(e.to_string()))?;
                ev["event"] = json!("reset");
                ev["mmse_before"] = json!(before);
                self.events.append(&ev)?;
                self.resets.push(ResetProbe {
                    step: t,
                    mmse_before: before,
                    mmse_after: None,
                });
            }
        }

        let reserved_mmse = match &cfg.reserved_buffer {
            Some(p) => Some(metrics::reserved_buffer_mmse(
                &self.model,
                p,
                cfg.probe_batch_size,
                &mut rng::stream(rng::derive_seed(cfg.seed, &[METRIC, u64::MAX])),
            )?),
            None => None,
        };
        if cfg.save_checkpoints {
            self.agent.save(cfg.out_dir.join(AGENT_FILE))?;
            self.model.save(cfg.out_dir.join(MODEL_FILE))?;
        }
        if let Some(p) = &cfg.buffer_out {
            self.d_env.save(p)?;
        }
        let returns: Vec<f64> = self.records.iter().map(|r| r.eval_return).collect();
        let mmses: Vec<f64> = self.records.iter().map(|r| r.mmse).collect();
        let summary = RunSummary {
            out_dir: cfg.out_dir.clone(),
            agent_updates: self.agent_updates,
            model_trainings: self.model_trainings,
            resets: self.resets.clone(),
            final_window_return: final_window_mean(&returns),
            final_window_mmse: final_window_mean(&mmses),
            return_auc: mean(&returns),
            reserved_mmse,
            records: self.records,
        };
        self.events.append(&json!({
            "event": "summary",
            "variant": cfg.variant,
            "agent_updates": summary.agent_updates,
            "model_trainings": summary.model_trainings,
            "buffer_size": self.d_env.len(),
            "rollouts_added": self.rollouts_added,
            "rollouts_truncated": self.rollouts_truncated,
            "final_window_return": summary.final_window_return,
            "return_auc": summary.return_auc,
            "reserved_mmse": summary.reserved_mmse,
        }))?;
        Ok(summary)
    }

    fn env_step(&mut self, action: Vec<f64>) -> Result<()> {
        let step = self.env.step(&action)?;
        self.d_env.push(Transition {
            s: std::mem::take(&mut self.state),
            a: action,
            r: step.reward,
            s_next: step.next_state.clone(),
            done: step.done,
        })?;
        if step.done {
            self.episode += 1;
            self.state = self.env.reset(rng::derive_seed(self.cfg.seed, &[ENV, self.episode]));
        } else {
            self.state = step.next_state;
        }
        Ok(())
    }

    fn train_model(&mut self, t: u64, due: usize) -> Result<()> {
        for _ in 0..due {
            let stats = self.model.train(
                &self.d_env,
                self.cfg.model_train_steps,
                self.cfg.model_batch_size,
                &mut self.model_rng,
            )?;
            self.model_trainings += 1;
            self.last_member_losses = stats
                .member_losses
                .iter()
                .map(|l| l.last().copied().unwrap_or(f64::NAN))
                .collect();
            let mut ev = json!({
                "event": "model_train",
                "step": t,
                "loss": stats.final_loss(),
            });
            if !self.cfg.rollout_every_step {
                let r = self.branch_rollouts()?;
                ev["rollouts_added"] = json!(r.added);
                ev["rollouts_truncated"] = json!(r.truncated);
            }
            self.events.append(&ev)?;
        }
        Ok(())
    }

    /// Per-step rollouts once a trained model exists.
    fn step_rollouts(&mut self) -> Result<()> {
        if self.cfg.rollout_every_step && self.model_trainings > 0 {
            self.branch_rollouts()?;
        }
        Ok(())
    }

    fn branch_rollouts(&mut self) -> Result<RolloutStats> {
        let r = rollout(
            &self.model,
            &self.agent,
            &self.d_env,
            &mut self.d_model,
            self.cfg.rollout_starts,
            self.cfg.rollout_length,
            &mut self.rollout_rng,
        )?;
        self.rollouts_added += r.added as u64;
        self.rollouts_truncated += r.truncated as u64;
        Ok(r)
    }

    fn update_agent(&mut self) -> Result<()> {
        let n = self.cfg.agent_utd;
        self.agent.update(
            &self.sampler,
            &self.d_env,
            &self.d_model,
            n,
            self.cfg.batch_size,
            &mut self.agent_rng,
        )?;
        self.agent_updates += n as u64;
        Ok(())
    }

    fn probe_mmse(&self, t: u64) -> Result<f64> {
        let mut r = rng::stream(rng::derive_seed(self.cfg.seed, &[PROBE, t]));
        metrics::mmse(&self.model, &self.d_env, self.cfg.probe_batch_size, &mut r)
    }

    fn checkpoint(&mut self, t: u64) -> Result<()> {
        let cfg = self.cfg;
        let eval_return = self.agent.evaluate(
            self.eval_env.as_mut(),
            cfg.eval_episodes,
            rng::derive_seed(cfg.seed, &[EVAL, t]),
        )?;
        let mut r = rng::stream(rng::derive_seed(cfg.seed, &[METRIC, t]));
        let batch = self.d_env.sample(cfg.metric_batch_size, &mut r)?;
        let mmse = metrics::mmse_on_batch(&self.model, &batch, &mut r)?;
        let vme = metrics::vme_on_batch(&self.model, &self.agent, &batch, &mut r)?;
        let losses = &self.last_member_losses;
        let record = MetricRecord {
            env_step: t,
            eval_return,
            mmse,
            vme,
            model_loss: if losses.is_empty() { f64::NAN } else { mean(losses) },
            member_losses: losses.clone(),
            wall_time: if cfg.record_wall_time {
                self.started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        self.metrics.append(&record)?;
        self.events.append(&json!({
            "event": "checkpoint",
            "step": t,
            "eval_return": eval_return,
            "mmse": mmse,
            "vme": vme,
            "member_losses": losses.iter().map(|x| if x.is_finite() { json!(x) } else { json!(null) }).collect::<Vec<_>>(),
            "alpha": self.agent.alpha(),
        }))?;
        self.records.push(record);
        Ok(())
    }
}

/// Offline MMSE (and VME when an agent is given) of a saved model on the
/// full contents of a saved buffer.
pub fn eval_model(model_ckpt: &Path, buffer: &Path, agent_ckpt: Option<&Path>, seed: u64) -> Result<(f64, Option<f64>)> {
    let model = GaussianEnsemble::load(model_ckpt)?;
    let buf = metrics::load_reserved(buffer)?;
    let batch = buf.to_batch();
    let mut r = rng::stream(seed);
    let mmse = metrics::mmse_on_batch(&model, &batch, &mut r)?;
    let vme = match agent_ckpt {
        Some(p) => {
            let agent = SacAgent::load(p)?;
            Some(metrics::vme_on_batch(&model, &agent, &batch, &mut r)?)
        }
        None => None,
    };
    Ok((mmse, vme))
}
