//! `sscnet`: scene synthesis, voxelization, training, evaluation,
//! profiling and gradient verification in one binary.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;

use ssc_cli::bench::bench_inference;
use ssc_cli::config::{
    grid_from_kv, load_camera, network_from_kv, parse_dims, parse_seed_range, scene_from_kv,
    train_from_kv, KvConfig, TrainConfig,
};
use ssc_cli::eval::{evaluate_samples, ScSource};
use ssc_cli::train_loop::{history_csv, train};
use ssc_cli::{checkpoint, dataset, pgm, vxt};
use ssc_core::gradcheck::{grad_check, DEFAULT_EPSILON};
use ssc_core::net::{backward, forward, init_params, NetworkConfig, ParameterSet};
use ssc_core::optim::joint_loss;
use ssc_core::voxel::{
    compute_visibility, depth_to_tsdf, synth_scene, LabelVolume, VoxelGridSpec, UNLABELED,
};
use ssc_core::Tensor;

#[derive(Parser)]
#[command(
    name = "sscnet",
    about = "Voxel semantic scene completion: synthesis, training, evaluation and profiling",
    version
)]
struct Cli {
    /// Worker threads (default: the SSC_THREADS variable, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct NetOpts {
    /// Network config file (key=value). Defaults apply when omitted.
    #[arg(long)]
    net: Option<PathBuf>,
    /// Override network keys, e.g. --net-set use_ga=false.
    #[arg(long = "net-set", value_name = "KEY=VALUE")]
    net_set: Vec<String>,
}

impl NetOpts {
    fn resolve(&self) -> Result<NetworkConfig> {
        let mut kv = match &self.net {
            Some(path) => KvConfig::load(path)?,
            None => KvConfig::default(),
        };
        kv.apply_overrides(&self.net_set)?;
        network_from_kv(kv)
    }
}

const NET_KEYS_HELP: &str = "Network config keys: num_classes, stem_channels, \
stage_channels=a,b,c, blocks_per_stage=a,b,c, dilation_schedule=a,b,c,d,e,f, \
attention_reduction, agg_channels, use_dilation, use_feature_agg, use_ga, \
use_condition, downsample_factor (2|4), normalization";

const GRID_KEYS_HELP: &str = "Grid config keys: dims=DxHxW, voxel_size, \
origin=x,y,z, truncation, flipped";

const SCENE_KEYS_HELP: &str = "Scene config keys: the grid keys plus num_classes, \
room_min=x,y,z, room_max=x,y,z, ceiling, shell_thickness, box_count=min,max, \
box_size=min,max, box_near_z, fx, fy, cx, cy, size=WxH";

const TRAIN_KEYS_HELP: &str = "Train config keys: batch_size, epochs, lr0, momentum, \
weight_decay, eval_every, seed, data_dir, synth_seeds=A..B, scene_config=PATH";

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic labeled scenes (depth, labels, TSDF, visibility).
    #[command(after_help = SCENE_KEYS_HELP)]
    Synth {
        /// Half-open seed range, e.g. 0..8.
        #[arg(long)]
        seeds: String,
        /// Scene config file (key=value).
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Override scene keys.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Voxelize one depth image into TSDF and visibility volumes.
    #[command(after_help = GRID_KEYS_HELP)]
    Voxelize {
        /// 16-bit PGM depth image.
        #[arg(long)]
        depth: PathBuf,
        /// Camera text file (fx=, fy=, cx=, cy=, size=WxH).
        #[arg(long)]
        camera: PathBuf,
        /// Grid config file; defaults apply when omitted.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Override grid keys.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long = "out-tsdf")]
        out_tsdf: PathBuf,
        #[arg(long = "out-vis")]
        out_vis: PathBuf,
    },
    /// Train on a scene directory and write a checkpoint plus history.
    #[command(after_help = format!("{TRAIN_KEYS_HELP}\n{NET_KEYS_HELP}"))]
    Train {
        /// Train config file (key=value).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override train keys, e.g. --set lr0=0.05.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[command(flatten)]
        net: NetOpts,
        /// Scene directory (overrides data_dir from the config).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a scene directory.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output directory for report.txt / report.csv (stdout only when
        /// omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Score SC from the occupancy head instead of the semantic head.
        #[arg(long)]
        use_occ_head: bool,
    },
    /// Measure inference throughput.
    #[command(after_help = NET_KEYS_HELP)]
    Bench {
        #[command(flatten)]
        net: NetOpts,
        /// Input extents DxHxW.
        #[arg(long, default_value = "60x36x60")]
        dims: String,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
        /// Benchmark the f64 path instead of f32.
        #[arg(long)]
        f64: bool,
        /// Write the report as CSV here as well.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Analytic parameter and FLOP counts.
    #[command(after_help = NET_KEYS_HELP)]
    Flops {
        #[command(flatten)]
        net: NetOpts,
        #[arg(long, default_value = "60x36x60")]
        dims: String,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Finite-difference verification of the whole-network gradients.
    #[command(after_help = NET_KEYS_HELP)]
    Gradcheck {
        #[command(flatten)]
        net: NetOpts,
        #[arg(long, default_value = "8x8x8")]
        dims: String,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        /// Elements sampled per parameter tensor.
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long, default_value_t = 1e-5)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export occupied voxels of a label volume as `x y z class` lines.
    Export {
        /// Label volume (VXT1, u8).
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("SSC_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: building thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Synth {
            seeds,
            scene,
            set,
            out,
        } => {
            let range = parse_seed_range(&seeds)?;
            let mut kv = match scene {
                Some(p) => KvConfig::load(&p)?,
                None => KvConfig::default(),
            };
            kv.apply_overrides(&set)?;
            let cfg = scene_from_kv(kv)?;
            fs::create_dir_all(&out)?;
            for seed in range {
                let sample = synth_scene(seed, &cfg)?;
                dataset::save_sample(&out, seed, &sample, cfg.flipped_tsdf)?;
            }
            println!("wrote scenes to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Voxelize {
            depth,
            camera,
            grid,
            set,
            out_tsdf,
            out_vis,
        } => {
            let depth_img = pgm::load_pgm(&depth)?;
            let cam = load_camera(&camera)?;
            let mut kv = match grid {
                Some(p) => KvConfig::load(&p)?,
                None => KvConfig::default(),
            };
            kv.apply_overrides(&set)?;
            let (grid, flipped) = grid_from_kv(&mut kv)?;
            kv.finish("grid config")?;
            let tsdf = depth_to_tsdf(&depth_img, &cam, &grid, flipped)?;
            let vis = compute_visibility(&depth_img, &cam, &grid)?;
            vxt::save_vxt(
                &out_tsdf,
                &vxt::VxtTensor {
                    shape: grid.dims.to_vec(),
                    data: vxt::VxtData::F32(tsdf.values().to_vec()),
                },
            )?;
            vxt::save_vxt(
                &out_vis,
                &vxt::VxtTensor {
                    shape: grid.dims.to_vec(),
                    data: vxt::VxtData::U8(vis.states().iter().map(|&s| s as u8).collect()),
                },
            )?;
            println!(
                "wrote {} and {}",
                out_tsdf.display(),
                out_vis.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            config: config_path,
            set,
            net,
            data,
            out,
        } => {
            let mut kv = match config_path {
                Some(p) => KvConfig::load(&p)?,
                None => KvConfig::default(),
            };
            kv.apply_overrides(&set)?;
            let mut tc: TrainConfig = train_from_kv(kv)?;
            if let Some(dir) = data {
                tc.data_dir = Some(dir.display().to_string());
            }
            let net_cfg = net.resolve()?;
            let samples = load_train_samples(&tc)?;
            println!(
                "training on {} scenes, {} epochs, batch {}",
                samples.len(),
                tc.epochs,
                tc.batch_size
            );
            let eval_every = tc.eval_every;
            let outcome = train(&samples, &net_cfg, &tc, |row, params, norm| {
                if row.iter % 100 == 0 {
                    println!(
                        "iter {} lr {:.5} loss {:.5} (sem {:.5}, occ {:.5})",
                        row.iter, row.lr, row.loss_total, row.loss_sem, row.loss_occ
                    );
                }
                if eval_every > 0 && (row.iter + 1) % eval_every as u64 == 0 {
                    match evaluate_samples(params, &net_cfg, norm, &samples, ScSource::SemanticHead)
                    {
                        Ok(report) => println!(
                            "iter {} SC-IoU={:.4} SSC-mIoU={:.4}",
                            row.iter, report.sc_iou, report.ssc_miou
                        ),
                        Err(e) => eprintln!("eval at iter {}: {e:#}", row.iter),
                    }
                }
            })?;
            fs::create_dir_all(&out)?;
            let ckpt = out.join("checkpoint.ckpt");
            checkpoint::save(&ckpt, &net_cfg, &outcome.params, outcome.norm.as_ref())?;
            fs::write(out.join("history.csv"), history_csv(&outcome.history))?;
            let report = evaluate_samples(
                &outcome.params,
                &net_cfg,
                outcome.norm.as_ref(),
                &samples,
                ScSource::SemanticHead,
            )?;
            print!("{}", report.to_text());
            println!("wrote {}", ckpt.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            checkpoint: ckpt_path,
            data,
            out,
            use_occ_head,
        } => {
            let ckpt = checkpoint::load(&ckpt_path)?;
            let samples = dataset::load_all(&data)?;
            let source = if use_occ_head {
                ScSource::OccupancyHead
            } else {
                ScSource::SemanticHead
            };
            let report = evaluate_samples(
                &ckpt.params,
                &ckpt.config,
                ckpt.norm.as_ref(),
                &samples,
                source,
            )?;
            print!("{}", report.to_text());
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("report.txt"), report.to_text())?;
                fs::write(dir.join("report.csv"), report.to_csv())?;
                println!("wrote reports to {}", dir.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            net,
            dims,
            iters,
            warmup,
            f64: use_f64,
            csv,
        } => {
            let cfg = net.resolve()?;
            let dims = parse_dims(&dims)?;
            let threads = rayon::current_num_threads();
            let report = bench_inference(&cfg, dims, warmup, iters, threads, use_f64, 0)?;
            print!("{}", report.to_text());
            if let Some(path) = csv {
                fs::write(&path, report.to_csv())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Flops { net, dims, csv } => {
            let cfg = net.resolve()?;
            let dims = parse_dims(&dims)?;
            let report = ssc_core::cost::count_flops(&cfg, dims)?;
            print!("{}", report.to_text());
            if let Some(path) = csv {
                fs::write(&path, report.to_csv())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck {
            net,
            dims,
            epsilon,
            samples,
            threshold,
            seed,
        } => {
            let cfg = net.resolve()?;
            let dims = parse_dims(&dims)?;
            // Gradient checking always runs single-threaded (results are
            // thread-count invariant anyway, but the reference path is
            // the contract).
            let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
            let report = pool.install(|| run_gradcheck(&cfg, dims, epsilon, samples, seed))?;
            let verdict = if report.0 <= threshold { "PASS" } else { "FAIL" };
            println!(
                "gradcheck {verdict}: max rel error {:.3e} (threshold {threshold:.1e}) over {} elements",
                report.0, report.1
            );
            Ok(if report.0 <= threshold {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Export { labels, out } => {
            let t = vxt::load_vxt(&labels)?;
            let (shape, data) = t.to_u8()?;
            if shape.len() != 3 {
                bail!("label volume must be rank 3, got {:?}", shape);
            }
            let mut text = String::new();
            let (dx, dy, dz) = (shape[0], shape[1], shape[2]);
            for ix in 0..dx {
                for iy in 0..dy {
                    for iz in 0..dz {
                        let c = data[(ix * dy + iy) * dz + iz];
                        if c != 0 && c != UNLABELED {
                            text.push_str(&format!("{ix} {iy} {iz} {c}\n"));
                        }
                    }
                }
            }
            fs::write(&out, text)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_train_samples(tc: &TrainConfig) -> Result<Vec<ssc_core::voxel::SceneSample>> {
    if let Some(dir) = &tc.data_dir {
        return dataset::load_all(std::path::Path::new(dir));
    }
    if let Some(range) = &tc.synth_seeds {
        let kv = match &tc.scene_config {
            Some(p) => KvConfig::load(std::path::Path::new(p))?,
            None => KvConfig::default(),
        };
        let cfg = scene_from_kv(kv)?;
        return range
            .clone()
            .map(|s| synth_scene(s, &cfg).map_err(Into::into))
            .collect();
    }
    bail!("train config needs data_dir or synth_seeds")
}

/// Whole-network loss gradient against central differences on every
/// parameter tensor. Runs in f64 with jittered parameters (a fresh init
/// leaves biases exactly at zero, which parks relu pre-activations on
/// their kink and makes the loss non-differentiable at the evaluation
/// point).
fn run_gradcheck(
    cfg: &NetworkConfig,
    dims: [usize; 3],
    epsilon: f64,
    samples_per_tensor: usize,
    seed: u64,
) -> Result<(f64, usize)> {
    let mut params = init_params::<f64>(cfg, seed)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b9);
    for (_, t) in params.iter_mut() {
        for v in t.data_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
    }
    let voxels = dims[0] * dims[1] * dims[2];
    let input_data: Vec<f64> = (0..voxels).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let input = Tensor::from_vec(&[1, dims[0], dims[1], dims[2]], input_data)?;
    let labels_data: Vec<u8> = (0..voxels)
        .map(|_| {
            if rng.gen_bool(0.1) {
                UNLABELED
            } else {
                rng.gen_range(0..=cfg.num_classes) as u8
            }
        })
        .collect();
    let grid = VoxelGridSpec {
        dims,
        voxel_size: 0.08,
        origin: [-0.32, -0.32, 0.08],
        truncation: 0.24,
    };
    let labels = LabelVolume::new(grid, labels_data)?;

    let out = forward(&input, &params, cfg, None, true)?;
    let loss = joint_loss(&out.occ_logits, &out.sem_logits, &labels, cfg.use_condition)?;
    let grads = backward(
        &loss.grad_occ,
        &loss.grad_sem,
        &params,
        cfg,
        None,
        out.cache.as_ref().context("training cache")?,
    )?;

    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    let tensors: Vec<Tensor<f64>> = params.iter().map(|(_, t)| t.clone()).collect();
    let analytic: Vec<Tensor<f64>> = names
        .iter()
        .map(|n| grads.grads.get(n).map(Clone::clone))
        .collect::<std::result::Result<_, _>>()?;
    let cfg2 = cfg.clone();
    let report = grad_check(
        move |xs| {
            let mut p = ParameterSet::<f64>::default();
            for (name, t) in names.iter().zip(xs) {
                p.insert(name, t.clone()).expect("unique");
            }
            let out = forward(&input, &p, &cfg2, None, false).expect("forward");
            joint_loss(&out.occ_logits, &out.sem_logits, &labels, cfg2.use_condition)
                .expect("loss")
                .total
        },
        &tensors,
        &analytic,
        epsilon,
        samples_per_tensor,
        seed,
    );
    println!(
        "checked {} parameter tensors on a 1x{}x{}x{} input",
        tensors.len(),
        dims[0],
        dims[1],
        dims[2]
    );
    Ok((report.max_rel_error, report.checked_elements))
}
