use std::cell::RefCell;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::closed_loop::{closed_loop, normalized_bounds, ControllerKind, WaterHeaterPlant};
use super::metrics::{run_metrics, RunMetrics};
use super::scenario::ScenarioConfig;
use super::build_controller;
use crate::augment::{design_setpoint, SetpointReport, TuningConfig};
use crate::data::IoSequence;
use crate::deb::MheConfig;
use crate::error::{Error, Result};
use crate::mpc::MpcConfig;
use crate::nnarx::ModelBundle;
use crate::plant::WaterHeater;
use crate::training::{build_dataset, identify, ExperimentConfig, ModelConfig, Records, TrainConfig, TrainReport};

/// Everything a pipeline run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// When set, overrides the experiment and training seeds.
    pub seed: Option<u64>,
    pub plant: WaterHeater,
    pub experiment: ExperimentConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub tuning: TuningConfig,
    pub mpc: MpcConfig,
    /// Disturbance estimator of the comparison controller, which shares
    /// `mpc` and the Newton settings of `tuning`.
    pub mhe: MheConfig,
    pub scenario: ScenarioConfig,
    /// `|e|` band for settling times, K.
    pub settling_band: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            plant: WaterHeater::default(),
            experiment: ExperimentConfig::default(),
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            tuning: TuningConfig::default(),
            mpc: MpcConfig::default(),
            mhe: MheConfig::default(),
            scenario: ScenarioConfig::default(),
            settling_band: 0.1,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        Ok(cfg.resolved())
    }

    /// Applies the seed override.
    pub fn resolved(mut self) -> Self {
        if let Some(seed) = self.seed {
            self.experiment.seed = seed;
            self.training.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.training.validate()?;
        self.mpc.validate()?;
        self.mhe.validate()?;
        self.scenario.validate()?;
        if !(self.settling_band > 0.0) {
            return Err(Error::InvalidArgument("settling band must be positive".into()));
        }
        Ok(())
    }
}

/// Tuning of every setpoint in the scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub setpoints: Vec<SetpointReport>,
}

/// Side-by-side numbers for the two controllers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub offset_free: RunMetrics,
    pub deb: RunMetrics,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    Generate,
    Train,
    Tune,
    Run,
    Compare,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Train => "train",
            Stage::Tune => "tune",
            Stage::Run => "run",
            Stage::Compare => "compare",
            Stage::Report => "report",
        }
    }
}

/// Artifact directory with per-stage caching. A stage is skipped when its
/// recorded key (the configuration it depends on) is unchanged and its
/// outputs exist.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub out: PathBuf,
    pub force: bool,
    done: RefCell<Vec<Stage>>,
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

impl Pipeline {
    pub fn new(config: PipelineConfig, out: impl Into<PathBuf>) -> Result<Self> {
        let config = config.resolved();
        config.validate()?;
        let out = out.into();
        for dir in ["data", "stages", "traces", "metrics"] {
            fs::create_dir_all(out.join(dir))?;
        }
        write_json(&out.join("config.json"), &config)?;
        Ok(Self {
            config,
            out,
            force: false,
            done: RefCell::new(Vec::new()),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn key(&self, stage: Stage) -> Value {
        let c = &self.config;
        match stage {
            Stage::Generate => json!({ "plant": c.plant, "experiment": c.experiment }),
            Stage::Train => json!({ "up": self.key(Stage::Generate), "model": c.model, "training": c.training }),
            Stage::Tune => json!({
                "up": self.key(Stage::Train),
                "tuning": c.tuning,
                "setpoints": c.scenario.setpoint_values(),
                "input_box": c.plant.input_box,
            }),
            Stage::Run | Stage::Compare => json!({
                "up": self.key(Stage::Tune),
                "mpc": c.mpc,
                "mhe": c.mhe,
                "scenario": c.scenario,
                "plant": c.plant,
                "band": c.settling_band,
            }),
            Stage::Report => json!({ "up": self.key(Stage::Compare) }),
        }
    }

    fn outputs(&self, stage: Stage) -> Vec<PathBuf> {
        let files: &[&str] = match stage {
            Stage::Generate => &["data/train.csv", "data/validation.csv", "data/test.csv"],
            Stage::Train => &["model.json", "train_report.json"],
            Stage::Tune => &["tuning.json"],
            Stage::Run => &["traces/offset_free.csv", "metrics/offset_free.json"],
            Stage::Compare => &["traces/deb.csv", "metrics/deb.json", "comparison.json"],
            Stage::Report => &["report.md", "metrics.csv"],
        };
        files.iter().map(|f| self.path(f)).collect()
    }

    fn stage_file(&self, stage: Stage) -> PathBuf {
        self.path(&format!("stages/{}.json", stage.name()))
    }

    fn is_cached(&self, stage: Stage) -> bool {
        if self.done.borrow().contains(&stage) {
            return true;
        }
        if self.force || !self.outputs(stage).iter().all(|p| p.exists()) {
            return false;
        }
        read_json::<Value>(&self.stage_file(stage)).map_or(false, |k| k == self.key(stage))
    }

    /// Runs `body` unless the stage is cached; errors are tagged with the
    /// stage name.
    fn stage(&self, stage: Stage, body: impl FnOnce() -> Result<()>) -> Result<bool> {
        if self.is_cached(stage) {
            if !self.done.borrow().contains(&stage) {
                log::info!("{}: cached", stage.name());
                self.done.borrow_mut().push(stage);
            }
            return Ok(false);
        }
        log::info!("{}: running", stage.name());
        let _ = fs::remove_file(self.stage_file(stage));
        body().map_err(|e| e.in_stage(stage.name()))?;
        write_json(&self.stage_file(stage), &self.key(stage)).map_err(|e| e.in_stage(stage.name()))?;
        self.done.borrow_mut().push(stage);
        Ok(true)
    }

    pub fn generate(&self) -> Result<Records> {
        self.stage(Stage::Generate, || {
            let records = crate::training::generate_records(&self.config.plant, &self.config.experiment)?;
            records.train.write_csv(&self.path("data/train.csv"))?;
            records.validation.write_csv(&self.path("data/validation.csv"))?;
            records.test.write_csv(&self.path("data/test.csv"))?;
            Ok(())
        })?;
        let read = |f: &str| IoSequence::read_csv(&self.path(f)).map_err(|e| e.in_stage("generate"));
        Ok(Records {
            train: read("data/train.csv")?,
            validation: read("data/validation.csv")?,
            test: read("data/test.csv")?,
        })
    }

    pub fn train(&self) -> Result<(ModelBundle<f64>, TrainReport)> {
        let records = self.generate()?;
        self.stage(Stage::Train, || {
            let dataset = build_dataset(&records, &self.config.experiment)?;
            let (bundle, report) = identify::<f64>(&dataset, &self.config.model, &self.config.training)?;
            log::info!(
                "trained: test FIT {:.2}%, contraction margin {:.4}",
                report.test_fit,
                report.contraction_margin
            );
            bundle.save(&self.path("model.json"))?;
            write_json(&self.path("train_report.json"), &report)
        })?;
        let load = || -> Result<_> {
            Ok((
                ModelBundle::load(&self.path("model.json"))?,
                read_json(&self.path("train_report.json"))?,
            ))
        };
        load().map_err(|e| e.in_stage("train"))
    }

    pub fn tune(&self) -> Result<TuningReport> {
        let (bundle, _) = self.train()?;
        self.stage(Stage::Tune, || {
            let bounds = normalized_bounds(&bundle.scaling, &self.config.plant.input_box);
            let guess = (&bounds.lower + &bounds.upper) / 2.0;
            let mut setpoints = Vec::new();
            for y in self.config.scenario.setpoint_values() {
                let y_ref: DVector<f64> = bundle.scaling.normalize_output(&[y]);
                let design = design_setpoint(&bundle.model, &y_ref, &guess, Some(&bounds), &self.config.tuning)?;
                let report = design.report(Some(&bundle.scaling));
                log::info!(
                    "setpoint {y} K: u = {:.5}, rho(A) = {:.4}, mu_max = {:.4}, mu = {:.4}, loop radius {:.4}",
                    report.equilibrium_input[0],
                    report.linearization_radius,
                    report.mu_tilde_max,
                    report.mu_tilde,
                    report.loop_radius
                );
                setpoints.push(report);
            }
            write_json(&self.path("tuning.json"), &TuningReport { setpoints })
        })?;
        read_json(&self.path("tuning.json")).map_err(|e| e.in_stage("tune"))
    }

    fn closed_loop_stage(&self, stage: Stage, kind: ControllerKind) -> Result<RunMetrics> {
        let (bundle, report) = self.train()?;
        self.tune()?;
        let c = &self.config;
        let metrics_path = self.path(&format!("metrics/{}.json", kind.name()));
        self.stage(stage, || {
            let mut controller = build_controller(kind, &bundle, &c.plant.input_box, &c.mpc, &c.tuning, &c.mhe)?;
            let mut plant = WaterHeaterPlant::at_rest(c.plant.clone(), c.scenario.disturbances.clone(), c.scenario.initial_input)?;
            let result = closed_loop(
                &c.scenario,
                &mut plant,
                &mut controller,
                &bundle.scaling,
                &c.plant.input_box,
                c.plant.sample_time,
            )?;
            result.write_csv(&self.path(&format!("traces/{}.csv", kind.name())))?;
            let metrics = run_metrics(&result, &c.plant.input_box, c.settling_band, Some(report.test_fit));
            write_json(&metrics_path, &metrics)?;
            if stage == Stage::Compare {
                let primary: RunMetrics = read_json(&self.path("metrics/offset_free.json"))?;
                write_json(&self.path("comparison.json"), &Comparison { offset_free: primary, deb: metrics })?;
            }
            match &result.aborted {
                Some(reason) => Err(Error::Inconsistent(format!("closed loop aborted: {reason}"))),
                None => Ok(()),
            }
        })?;
        read_json(&metrics_path).map_err(|e| e.in_stage(stage.name()))
    }

    /// Closed loop of the integral-action controller on the plant.
    pub fn run(&self) -> Result<RunMetrics> {
        self.closed_loop_stage(Stage::Run, ControllerKind::OffsetFree)
    }

    /// Closed loop of the disturbance-estimation controller, compared with
    /// the primary run.
    pub fn compare(&self) -> Result<Comparison> {
        self.run()?;
        self.closed_loop_stage(Stage::Compare, ControllerKind::Deb)?;
        read_json(&self.path("comparison.json")).map_err(|e| e.in_stage("compare"))
    }

    /// Writes `report.md` and `metrics.csv` from the stage artifacts.
    pub fn report(&self) -> Result<PathBuf> {
        let cmp = self.compare()?;
        let (_, train) = self.train()?;
        let tuning = self.tune()?;
        self.stage(Stage::Report, || {
            fs::write(self.path("report.md"), render_report(&train, &tuning, &cmp))?;
            let mut w = csv::Writer::from_path(self.path("metrics.csv"))?;
            w.write_record(["controller", "event", "sample", "settling_samples", "steady_offset", "peak_error"])?;
            for m in [&cmp.offset_free, &cmp.deb] {
                for e in &m.events {
                    w.write_record([
                        m.controller.clone(),
                        e.label.clone(),
                        e.sample.to_string(),
                        e.settling_samples.map_or_else(|| "never".into(), |s| s.to_string()),
                        format!("{:e}", e.steady_offset),
                        format!("{:e}", e.peak_error),
                    ])?;
                }
            }
            w.flush()?;
            Ok(())
        })?;
        Ok(self.path("report.md"))
    }

    pub fn all(&self) -> Result<PathBuf> {
        self.report()
    }
}

fn render_report(train: &TrainReport, tuning: &TuningReport, cmp: &Comparison) -> String {
    let mut s = String::new();
    s.push_str("# Closed-loop report\n\n## Identification\n\n");
    s.push_str(&format!(
        "- test FIT: {:.2}%\n- contraction margin: {:.4}\n- epochs: {} (best {}), attempts: {}\n\n",
        train.test_fit, train.contraction_margin, train.epochs_run, train.best_epoch, train.attempts
    ));
    s.push_str("## Tuning\n\n| setpoint K | u | rho(A) | mu_max | mu | loop radius |\n|---|---|---|---|---|---|\n");
    for r in &tuning.setpoints {
        s.push_str(&format!(
            "| {} | {:.5} | {:.4} | {:.4} | {:.4} | {:.4} |\n",
            r.setpoint[0], r.equilibrium_input[0], r.linearization_radius, r.mu_tilde_max, r.mu_tilde, r.loop_radius
        ));
    }
    s.push_str("\n## Closed loop\n\n| controller | event | settling samples | steady offset K | peak error K |\n|---|---|---|---|---|\n");
    for m in [&cmp.offset_free, &cmp.deb] {
        for e in &m.events {
            s.push_str(&format!(
                "| {} | {} | {} | {:.3e} | {:.3} |\n",
                m.controller,
                e.label,
                e.settling_samples.map_or_else(|| "never".into(), |v| v.to_string()),
                e.steady_offset,
                e.peak_error
            ));
        }
    }
    s.push_str("\n| controller | max violation | sum du^2 | solver failures | solve time s |\n|---|---|---|---|---|\n");
    for m in [&cmp.offset_free, &cmp.deb] {
        s.push_str(&format!(
            "| {} | {:.2e} | {:.4e} | {} | {:.2} |\n",
            m.controller, m.max_violation, m.total_squared_increment, m.solver_failures, m.wall_time
        ));
    }
    s
}
