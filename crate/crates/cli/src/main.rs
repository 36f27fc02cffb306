use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use hopkit::geom::HandModel;
use hopkit::grasp::{load_grasp_set, GraspSet, LoadMode};
use hopkit::io::{read_trajectory, synth_batch, validate_path, write_trajectory, BatchRequest, Encoding, ModelSource};
use hopkit::plan::{densify_plan, parse_plan, plan_to_demonstration, DensifyParams};
use hopkit::reward::{score, RewardConfig, SuccessThresholds};
use hopkit::scene::{enumerate_stable_poses, ObjectModel};
use hopkit::synth::{Skill, SkillInputs, SynthConfig};
use hopkit::training::{sampling_probabilities, schedule_csv, CurriculumConfig, SamplingState};

/// Problems with the invocation or the filesystem (exit code 2). Everything
/// else that goes wrong is a content or validation failure (exit code 1).
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

#[derive(Parser)]
#[command(name = "hopkit", version, about = "Synthesize, check, and score hand-object manipulation demonstrations")]
struct Cli {
    /// Print reports as JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// JSON config file; its values take precedence over flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Binary,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset of skill clips (or skill chains) with a manifest.
    Synth {
        /// Skill name; repeat or comma-separate to synthesize chains.
        #[arg(long = "skill", required = true, value_delimiter = ',')]
        skills: Vec<String>,
        /// Built-in object name or object JSON file.
        #[arg(long)]
        object: String,
        /// Grasp set JSON file.
        #[arg(long)]
        grasps: PathBuf,
        /// Built-in hand name or hand JSON file.
        #[arg(long, default_value = "mano")]
        hand: String,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, env = "HOPKIT_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Check trajectory files (or a dataset directory) against every invariant.
    Validate {
        path: PathBuf,
        /// Extra object model files to resolve object ids.
        #[arg(long = "object")]
        objects: Vec<PathBuf>,
        /// Extra hand model files to resolve hand ids.
        #[arg(long = "hand")]
        hands: Vec<PathBuf>,
    },
    /// Score a rollout against a reference trajectory.
    Score {
        rollout: PathBuf,
        reference: PathBuf,
    },
    /// Turn a manipulation plan into a demonstration trajectory.
    Plan {
        plan: PathBuf,
        #[arg(long)]
        grasps: PathBuf,
        #[arg(long)]
        object: String,
        #[arg(long, default_value = "mano")]
        hand: String,
        /// Output file; `.htraj` selects the binary encoding.
        #[arg(long)]
        out: PathBuf,
    },
    /// List the resting poses of an object on the ground.
    StablePoses {
        object: String,
    },
    /// Sampling probabilities from per-clip mean rewards.
    Weights {
        /// JSON array of mean rewards, or a file with one value per line.
        rewards: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        lambda_s: f64,
    },
    /// Dump the distillation schedule as CSV.
    ScheduleDump {
        #[arg(long, default_value_t = 8000)]
        epochs: u64,
        #[arg(long, default_value_t = 250)]
        step: u64,
        /// Explained-variance readings, one per evaluation window.
        #[arg(long, value_delimiter = ',')]
        ev: Vec<f64>,
    },
}

/// Contents of `--config`. Every section is optional and partial.
#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    count: Option<usize>,
    lambda_s: Option<f64>,
    synth: Option<SynthConfig>,
    reward: Option<RewardConfig>,
    thresholds: Option<SuccessThresholds>,
    densify: Option<DensifyParams>,
    curriculum: Option<CurriculumConfig>,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_hand(name: &str) -> Result<HandModel> {
    let p = Path::new(name);
    if p.is_file() {
        return HandModel::from_json(&read_text(p)?).with_context(|| format!("hand model {name}"));
    }
    HandModel::builtin(name).ok_or_else(|| usage(format!("unknown hand {name:?}: not a file or built-in model")))
}

fn load_object(name: &str) -> Result<ObjectModel> {
    let p = Path::new(name);
    if p.is_file() {
        return ObjectModel::from_json(&read_text(p)?).with_context(|| format!("object model {name}"));
    }
    ObjectModel::builtin(name).ok_or_else(|| usage(format!("unknown object {name:?}: not a file or built-in model")))
}

fn load_grasps(path: &Path, hand: &HandModel, obj: &ObjectModel) -> Result<GraspSet> {
    if !path.is_file() {
        bail!(usage(format!("{}: no such file", path.display())));
    }
    let loaded = load_grasp_set(path, hand, obj, LoadMode::Lenient)
        .with_context(|| format!("grasp set {}", path.display()))?;
    for d in &loaded.dropped {
        eprintln!("warning: dropped grasp {d}");
    }
    Ok(loaded.set)
}

fn emit(json_out: bool, value: &Value, text: impl FnOnce() -> String) {
    if json_out {
        println!("{}", serde_json::to_string_pretty(value).unwrap());
    } else {
        print!("{}", text());
    }
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load_config(cli.config.as_deref())?;
    let synth_cfg = cfg.synth.clone().unwrap_or_default();
    match cli.command {
        Command::Synth { skills, object, grasps, hand, count, seed, out, format } => {
            let skills = skills
                .iter()
                .map(|s| s.parse::<Skill>().map_err(usage))
                .collect::<Result<Vec<_>>>()?;
            let seed = cfg.seed.or(seed).ok_or_else(|| usage("no seed: pass --seed or set HOPKIT_SEED"))?;
            let hand = load_hand(&hand)?;
            let obj = load_object(&object)?;
            let set = load_grasps(&grasps, &hand, &obj)?;
            let inputs = SkillInputs::new(&hand, &obj, &set)?;
            let req = BatchRequest {
                skills,
                count: cfg.count.unwrap_or(count),
                root_seed: seed,
                encoding: match format {
                    Format::Json => Encoding::Json,
                    Format::Binary => Encoding::Binary,
                },
            };
            let outcome = synth_batch(&req, &synth_cfg, &inputs, &out)?;
            let report = json!({
                "out": out.display().to_string(),
                "written": outcome.manifest.entries.len(),
                "failed": outcome.failures,
                "root_seed": seed,
            });
            emit(cli.json, &report, || {
                let mut s = format!(
                    "wrote {} trajectories to {} (seed {seed})\n",
                    outcome.manifest.entries.len(),
                    out.display()
                );
                for f in &outcome.failures {
                    s += &format!("item {} (seed {}): {}\n", f.index, f.seed, f.error);
                }
                s
            });
            Ok(outcome.failures.is_empty())
        }
        Command::Validate { path, objects, hands } => {
            if !path.exists() {
                bail!(usage(format!("{}: no such file or directory", path.display())));
            }
            let mut models = ModelSource::default();
            for p in &objects {
                models.objects.push(load_object(&p.display().to_string())?);
            }
            for p in &hands {
                models.hands.push(load_hand(&p.display().to_string())?);
            }
            let report = validate_path(&path, &models, synth_cfg.max_wrist_speed)?;
            emit(cli.json, &serde_json::to_value(&report)?, || {
                let mut s = String::new();
                for f in &report.files {
                    s += &format!("{} {}\n", if f.ok { "ok  " } else { "FAIL" }, f.path);
                    for i in &f.issues {
                        match i.frame {
                            Some(k) => s += &format!("    frame {k}: {}\n", i.message),
                            None => s += &format!("    {}\n", i.message),
                        }
                    }
                }
                let bad = report.files.iter().filter(|f| !f.ok).count();
                s += &format!("{} files, {bad} failed\n", report.files.len());
                s
            });
            Ok(report.ok)
        }
        Command::Score { rollout, reference } => {
            let read = |p: &Path| -> Result<_> {
                if !p.is_file() {
                    bail!(usage(format!("{}: no such file", p.display())));
                }
                read_trajectory(p).with_context(|| p.display().to_string())
            };
            let r = read(&rollout)?;
            let f = read(&reference)?;
            let rep = score(&r, &f, &cfg.reward.unwrap_or_default(), &cfg.thresholds.unwrap_or_default())?;
            emit(cli.json, &serde_json::to_value(&rep)?, || {
                let m = &rep.metrics;
                let mut s = format!(
                    "frames {}\nmean reward {:.6}\nmin reward {:.6}\nSR {:.4}\nE_op {:.3} cm\nE_or {:.3} deg\nE_h {:.3} cm\n",
                    rep.frames, rep.mean_reward, rep.min_reward, m.sr, m.e_op, m.e_or, m.e_h
                );
                for (k, v) in &rep.component_means {
                    s += &format!("  {k} {v:.6}\n");
                }
                s
            });
            Ok(true)
        }
        Command::Plan { plan, grasps, object, hand, out } => {
            let p = parse_plan(&read_text(&plan)?).with_context(|| plan.display().to_string())?;
            let hand = load_hand(&hand)?;
            let obj = load_object(&object)?;
            let set = load_grasps(&grasps, &hand, &obj)?;
            let dense = densify_plan(&p, &cfg.densify.unwrap_or_default())?;
            let t = plan_to_demonstration(&p, &dense, &hand, &set, &obj)?;
            let v = t.violations(&hand, Some(&obj), synth_cfg.max_wrist_speed);
            if let Some(first) = v.first() {
                bail!("planned trajectory fails validation: {first}");
            }
            write_trajectory(&out, &t).map_err(|e| usage(e.to_string()))?;
            let report = json!({
                "out": out.display().to_string(),
                "frames": t.len(),
                "grasp_frame": dense.grasp_sample,
                "release_frame": dense.release_sample,
            });
            emit(cli.json, &report, || {
                format!(
                    "wrote {} frames to {} (grasp at {}, release at {})\n",
                    t.len(),
                    out.display(),
                    dense.grasp_sample,
                    dense.release_sample
                )
            });
            Ok(true)
        }
        Command::StablePoses { object } => {
            let obj = load_object(&object)?;
            let poses = enumerate_stable_poses(&obj)?;
            emit(cli.json, &json!({"object": obj.id, "poses": poses}), || {
                let mut s = String::from("index,support_face,x,y,z,qw,qx,qy,qz\n");
                for (i, sp) in poses.iter().enumerate() {
                    let p = sp.pose.position;
                    let [w, x, y, z] = sp.pose.orientation.to_array();
                    s += &format!("{i},{},{},{},{},{w},{x},{y},{z}\n", sp.support_face, p.x, p.y, p.z);
                }
                s
            });
            Ok(true)
        }
        Command::Weights { rewards, lambda_s } => {
            let text = read_text(&rewards)?;
            let mean_rewards: Vec<f64> = match serde_json::from_str(&text) {
                Ok(v) => v,
                Err(_) => text
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(|l| l.parse::<f64>().with_context(|| format!("bad reward value {l:?}")))
                    .collect::<Result<_>>()?,
            };
            let state = SamplingState {
                mean_rewards,
                lambda_s: cfg.lambda_s.unwrap_or(lambda_s),
            };
            let probs = sampling_probabilities(&state)?;
            emit(cli.json, &json!({"lambda_s": state.lambda_s, "probabilities": probs}), || {
                let mut s = String::from("index,mean_reward,probability\n");
                for (i, (r, p)) in state.mean_rewards.iter().zip(&probs).enumerate() {
                    s += &format!("{i},{r},{p}\n");
                }
                s
            });
            Ok(true)
        }
        Command::ScheduleDump { epochs, step, ev } => {
            let cur = cfg.curriculum.unwrap_or_default();
            cur.validate()?;
            let csv = schedule_csv(&cur.distill, epochs, step, &ev);
            if cli.json {
                let rows: Vec<Value> = csv
                    .lines()
                    .skip(1)
                    .map(|l| {
                        let c: Vec<&str> = l.split(',').collect();
                        let num = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
                        json!({
                            "epoch": c[0].parse::<u64>().unwrap_or(0),
                            "stage": c[1],
                            "teacher_prob": num(c[2]),
                            "expert": num(c[3]),
                            "policy_gradient": num(c[4]),
                            "value": num(c[5]),
                            "boundary": num(c[6]),
                        })
                    })
                    .collect();
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                print!("{csv}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UsageError>() || c.is::<std::io::Error>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
