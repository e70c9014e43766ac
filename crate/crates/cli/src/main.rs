//! Experiment runner: offline training, online inference, failure sweeps,
//! brute-force oracle comparison, and gravity traffic generation.

mod config;
mod report;

use clap::{Args, Parser, Subcommand};
use cmrl_core::env::{infer, ActorSet};
use cmrl_core::marl::{log_to_csv, train, TrainMode};
use cmrl_core::nn::{self, MlpParams, Role};
use cmrl_core::oracle::{brute_force_min_mlu, GridSpec};
use cmrl_core::routing::{ospf_flows, utilization};
use cmrl_core::topology::{
    admissible_links, load_topology, shortest_distances, AdmissibleSets, DistanceTable, Topology,
};
use cmrl_core::traffic::{
    gen_gravity_tms, load_tm_series, serialize_tm_series, split_train_test, TmSeries,
};
use config::ExperimentConfig;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cmrl", about = "Hybrid-SDN traffic engineering with multi-agent RL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the training seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train agents offline and write checkpoints.
    Train(Common),
    /// Run online inference on the test traffic matrices.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Directory holding checkpoints from a `train` run.
        #[arg(long)]
        checkpoints: PathBuf,
    },
    /// Single-link failure sweep using trained checkpoints, no retraining.
    Failures {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoints: PathBuf,
    },
    /// Brute-force optimum vs OSPF on the test traffic matrices.
    Oracle(Common),
    /// Generate a gravity-model TMSERIES file.
    GenTm(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(c) => cmd_train(&c),
        Command::Infer { common, checkpoints } => cmd_infer(&common, &checkpoints),
        Command::Failures { common, checkpoints } => cmd_failures(&common, &checkpoints),
        Command::Oracle(c) => cmd_oracle(&c),
        Command::GenTm(c) => cmd_gen_tm(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

/// Everything loaded from the config: topology, routing tables, TM split.
struct Setup {
    config: ExperimentConfig,
    topo: Topology,
    dists: DistanceTable,
    admissible: AdmissibleSets,
    hash: String,
    train_tms: TmSeries,
    test_tms: TmSeries,
}

fn load_setup(common: &Common) -> Result<Setup, String> {
    let config = config::load_config(&common.config)?;
    let base = common.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let topo_path = base.join(&config.topology);
    let text = std::fs::read_to_string(&topo_path)
        .map_err(|e| format!("cannot read topology {}: {e}", topo_path.display()))?;
    let topo = load_topology(&text).map_err(|e| e.to_string())?;
    let dists = shortest_distances(&topo);
    let admissible = admissible_links(&topo, &dists);
    let hash = topo.canonical_hash();
    let series = if let Some(file) = &config.traffic.file {
        let tm_path = base.join(file);
        let text = std::fs::read_to_string(&tm_path)
            .map_err(|e| format!("cannot read TM series {}: {e}", tm_path.display()))?;
        load_tm_series(&text).map_err(|e| e.to_string())?
    } else {
        let g = config.traffic.gravity.as_ref().unwrap();
        gen_gravity_tms(&topo, g.count, g.seed, g.total_volume, g.noise_cv)
    };
    if series.n() != topo.node_count() {
        return Err(format!(
            "TM size {} does not match topology node count {}",
            series.n(),
            topo.node_count()
        ));
    }
    let (train_tms, test_tms) = if series.len() == 1 {
        // single snapshot: train and evaluate on the same TM
        (series.clone(), series)
    } else {
        split_train_test(&series, config.train_fraction).map_err(|e| e.to_string())?
    };
    Ok(Setup { config, topo, dists, admissible, hash, train_tms, test_tms })
}

fn ensure_out(dir: &Path) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))
}

fn write_file(path: &Path, content: &str) -> Result<(), String> {
    std::fs::write(path, content).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn cmd_train(common: &Common) -> Result<(), String> {
    let setup = load_setup(common)?;
    ensure_out(&common.out)?;
    let train_config = setup.config.train.to_train_config(common.seed)?;
    let result = train(&setup.topo, &setup.dists, &setup.admissible, &setup.train_tms, &train_config)
        .map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    match &result.actors {
        ActorSet::PerSwitch(actors) => {
            for (&h, params) in actors {
                let name = format!("actor_{h}.ckpt");
                write_file(&common.out.join(&name), &nn::serialize(params, &setup.hash, &Role::Actor(h)))?;
                files.push(name);
            }
        }
        ActorSet::Single(params) => {
            let name = "actor_single.ckpt".to_string();
            write_file(&common.out.join(&name), &nn::serialize(params, &setup.hash, &Role::SingleActor))?;
            files.push(name);
        }
    }
    write_file(&common.out.join("critic.ckpt"), &nn::serialize(&result.critic, &setup.hash, &Role::Critic))?;
    files.push("critic.ckpt".into());
    write_file(
        &common.out.join("train_log.csv"),
        &log_to_csv(&result.log, result.layout.agent_count()),
    )?;
    files.push("train_log.csv".into());
    write_manifest(common, &setup, &train_config.mode, train_config.seed, &files)?;
    println!(
        "trained {} steps, wrote {} files to {}",
        result.log.len(),
        files.len() + 1,
        common.out.display()
    );
    Ok(())
}

fn write_manifest(
    common: &Common,
    setup: &Setup,
    mode: &TrainMode,
    seed: u64,
    files: &[String],
) -> Result<(), String> {
    let mode = match mode {
        TrainMode::Cmrl => "cmrl",
        TrainMode::Marl => "marl",
        TrainMode::Single => "single",
    };
    let config_text = std::fs::read_to_string(&common.config).map_err(|e| e.to_string())?;
    let mut manifest = format!(
        "topology_hash = \"{}\"\nmode = \"{mode}\"\nseed = {seed}\nfiles = [{}]\n",
        setup.hash,
        files.iter().map(|f| format!("\"{f}\"")).collect::<Vec<_>>().join(", ")
    );
    manifest.push_str(&format!("config_echo = '''\n{config_text}'''\n"));
    write_file(&common.out.join("manifest.toml"), &manifest)
}

fn load_actors(dir: &Path, setup: &Setup) -> Result<(ActorSet, String), String> {
    let single_path = dir.join("actor_single.ckpt");
    let read = |p: &Path| -> Result<MlpParams, String> {
        let text = std::fs::read_to_string(p)
            .map_err(|e| format!("cannot read checkpoint {}: {e}", p.display()))?;
        let (params, _, _) =
            nn::deserialize(&text, Some(&setup.hash)).map_err(|e| format!("{}: {e}", p.display()))?;
        Ok(params)
    };
    let actors = if single_path.exists() {
        (ActorSet::Single(read(&single_path)?), "single".to_string())
    } else {
        let mut map = BTreeMap::new();
        for h in setup.topo.sdn_nodes() {
            map.insert(h, read(&dir.join(format!("actor_{h}.ckpt")))?);
        }
        let label = manifest_mode(dir).unwrap_or_else(|| "cmrl".into());
        (ActorSet::PerSwitch(map), label)
    };
    actors.0.check_shapes(&setup.topo).map_err(|e| e.to_string())?;
    Ok(actors)
}

fn manifest_mode(dir: &Path) -> Option<String> {
    let text = std::fs::read_to_string(dir.join("manifest.toml")).ok()?;
    text.lines()
        .find_map(|l| l.strip_prefix("mode = "))
        .map(|v| v.trim().trim_matches('"').to_string())
}

fn cmd_infer(common: &Common, checkpoints: &Path) -> Result<(), String> {
    let setup = load_setup(common)?;
    ensure_out(&common.out)?;
    let (actors, method) = load_actors(checkpoints, &setup)?;

    let mut per_tm = String::from("tm_index,t_steps,method,mlu,actor_ms\n");
    let mut summary = String::from(
        "method,t_steps,mean,median,p5,p25,p75,p95,improvement_vs_ospf,mean_actor_ms\n",
    );
    let ospf_mlus: Vec<f64> = setup
        .test_tms
        .tms
        .iter()
        .map(|tm| utilization(&ospf_flows(&setup.topo, &setup.dists, tm), &setup.topo).mlu)
        .collect();
    for (i, &mlu) in ospf_mlus.iter().enumerate() {
        per_tm.push_str(&format!("{i},,ospf,{mlu:.12},\n"));
    }
    let a = report::aggregate(&ospf_mlus);
    summary.push_str(&format!(
        "ospf,,{:.12},{:.12},{:.12},{:.12},{:.12},{:.12},0,\n",
        a.mean, a.median, a.p5, a.p25, a.p75, a.p95
    ));
    for &t_steps in &setup.config.eval.t_values {
        let mut mlus = Vec::new();
        let mut actor_ms = Vec::new();
        for (i, tm) in setup.test_tms.tms.iter().enumerate() {
            let out = infer(&setup.topo, &setup.dists, &setup.admissible, &actors, tm, t_steps)
                .map_err(|e| e.to_string())?;
            let ms = out.actor_time.as_secs_f64() * 1000.0;
            per_tm.push_str(&format!("{i},{t_steps},{method},{:.12},{ms:.4}\n", out.mlu));
            mlus.push(out.mlu);
            actor_ms.push(ms);
        }
        let a = report::aggregate(&mlus);
        let improvement = 1.0 - a.mean / report::mean(&ospf_mlus);
        summary.push_str(&format!(
            "{method},{t_steps},{:.12},{:.12},{:.12},{:.12},{:.12},{:.12},{improvement:.12},{:.4}\n",
            a.mean,
            a.median,
            a.p5,
            a.p25,
            a.p75,
            a.p95,
            report::mean(&actor_ms)
        ));
    }
    write_file(&common.out.join("infer_per_tm.csv"), &per_tm)?;
    write_file(&common.out.join("infer_summary.csv"), &summary)?;
    println!("wrote infer_per_tm.csv and infer_summary.csv to {}", common.out.display());
    Ok(())
}

fn cmd_failures(common: &Common, checkpoints: &Path) -> Result<(), String> {
    let setup = load_setup(common)?;
    ensure_out(&common.out)?;
    let (actors, method) = load_actors(checkpoints, &setup)?;
    let t_steps = *setup.config.eval.t_values.first().unwrap_or(&2);

    let mut rows = String::from("edge,tm_index,method,mlu,disconnected\n");
    for edge in 0..setup.topo.edge_count() {
        let failed = setup.topo.apply_failure(edge).map_err(|e| e.to_string())?;
        let dists = shortest_distances(&failed);
        let admissible = admissible_links(&failed, &dists);
        for (i, tm) in setup.test_tms.tms.iter().enumerate() {
            // a failure case is disconnected if any demanded pair loses its path
            let disconnected = (0..failed.node_count()).any(|u| {
                (0..failed.node_count())
                    .any(|v| tm.get(u, v) > 0.0 && !dists.get(v, u).is_finite())
            });
            if disconnected {
                rows.push_str(&format!("{edge},{i},ospf,,disconnected\n"));
                rows.push_str(&format!("{edge},{i},{method},,disconnected\n"));
                continue;
            }
            let ospf = utilization(&ospf_flows(&failed, &dists, tm), &failed).mlu;
            rows.push_str(&format!("{edge},{i},ospf,{ospf:.12},\n"));
            let out = infer(&failed, &dists, &admissible, &actors, tm, t_steps)
                .map_err(|e| e.to_string())?;
            rows.push_str(&format!("{edge},{i},{method},{:.12},\n", out.mlu));
        }
    }
    write_file(&common.out.join("failures_report.csv"), &rows)?;
    println!("wrote failures_report.csv to {}", common.out.display());
    Ok(())
}

fn cmd_oracle(common: &Common) -> Result<(), String> {
    let setup = load_setup(common)?;
    ensure_out(&common.out)?;
    let grid = GridSpec { granularity: setup.config.eval.oracle_granularity };
    let mut rows = String::from("tm_index,granularity,mlu_star,ospf_mlu,gap,action\n");
    for (i, tm) in setup.test_tms.tms.iter().enumerate() {
        let (mlu_star, action) =
            brute_force_min_mlu(&setup.topo, &setup.dists, &setup.admissible, tm, grid)
                .map_err(|e| e.to_string())?;
        let ospf = utilization(&ospf_flows(&setup.topo, &setup.dists, tm), &setup.topo).mlu;
        let action_str = action
            .actions
            .iter()
            .map(|(h, a)| {
                let ratios: Vec<String> = a.ratios.iter().map(|r| format!("{r:.6}")).collect();
                format!("{h}:{}", ratios.join("|"))
            })
            .collect::<Vec<_>>()
            .join(";");
        rows.push_str(&format!(
            "{i},{},{mlu_star:.12},{ospf:.12},{:.12},{action_str}\n",
            grid.granularity,
            ospf - mlu_star
        ));
    }
    write_file(&common.out.join("oracle_report.csv"), &rows)?;
    println!("wrote oracle_report.csv to {}", common.out.display());
    Ok(())
}

fn cmd_gen_tm(common: &Common) -> Result<(), String> {
    let config = config::load_config(&common.config)?;
    let g = config
        .traffic
        .gravity
        .as_ref()
        .ok_or("gen-tm requires [traffic.gravity] in the config")?;
    let base = common.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let topo_path = base.join(&config.topology);
    let text = std::fs::read_to_string(&topo_path)
        .map_err(|e| format!("cannot read topology {}: {e}", topo_path.display()))?;
    let topo = load_topology(&text).map_err(|e| e.to_string())?;
    ensure_out(&common.out)?;
    let seed = common.seed.unwrap_or(g.seed);
    let series = gen_gravity_tms(&topo, g.count, seed, g.total_volume, g.noise_cv);
    write_file(&common.out.join("tms.tmseries"), &serialize_tm_series(&series))?;
    println!("wrote {} TMs to {}", series.len(), common.out.join("tms.tmseries").display());
    Ok(())
}
