//! Command-line surface binding the pipeline end-to-end: scenario
//! generation, rendering, planning, evaluation, the token codec, and the
//! mock wire server.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Args, Parser, Subcommand};

use bevhd::codec::{decode, encode};
use bevhd::config::{Config, PlannerKind};
use bevhd::grid::{read_bft, synth_feature_map, FeatureMap};
use bevhd::metrics::{csv_header, evaluate, EvalConfig, FailurePolicy};
use bevhd::overlay::{compose_bev_hd, render_agent_boxes, render_trajectories};
use bevhd::planner::{
    serve_mock, ConstantVelocityPlanner, LaneFollowPlanner, MockPolicy, OraclePlanner,
    PlanContext, PlanOutput, Planner, RemotePlanner,
};
use bevhd::scene::{ground_truth_trajectory, Scenario, Trajectory};
use bevhd::scenario_gen::standard_suite;
use bevhd::viz::visualize;
use bevhd::{Error, Result};

#[derive(Parser)]
#[command(name = "bevhd", about = "BEV-HD Map planning pipeline", version)]
struct Cli {
    /// Config file (TOML). Falls back to $BEVHD_CONFIG, then defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the standard scenario suite as JSON files.
    Gen(GenArgs),
    /// Render BEV / BEV-HD / trajectory-overlay images for one frame.
    Render(RenderArgs),
    /// Plan one frame and print tokens + waypoints as JSON.
    Plan(PlanArgs),
    /// Evaluate a planner over scenario files and write the report.
    Eval(EvalArgs),
    /// Round-trip waypoints through the token codec.
    Tokenize(TokenizeArgs),
    /// Run the mock planning server until interrupted.
    ServeMock(ServeMockArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    frame: usize,
    /// Precomputed feature file (.bft); synthetic features otherwise.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Also render the trajectory overlay (ground truth + planner).
    #[arg(long)]
    traj: bool,
    /// Draw agent bounding boxes on the BEV-HD image.
    #[arg(long)]
    boxes: bool,
    /// Additionally export PNG next to each PPM.
    #[arg(long)]
    png: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    planner: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    frame: usize,
    #[arg(long)]
    planner: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Scenario JSON files, or directories of them.
    #[arg(required = true)]
    scenarios: Vec<PathBuf>,
    #[arg(long)]
    planner: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Route waypoint-producing planners through encode/decode.
    #[arg(long)]
    route_codec: bool,
    /// Draw agent boxes on the planner's input image.
    #[arg(long)]
    boxes: bool,
    /// Skip failed samples instead of aborting.
    #[arg(long)]
    skip_failures: bool,
    /// Persist measured wall-clock latency (off by default: keeps output
    /// files byte-identical across runs).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TokenizeArgs {
    /// Waypoints as "x,y;x,y;..." in meters (ego frame).
    waypoints: String,
}

#[derive(Args)]
struct ServeMockArgs {
    /// Policy: "constant_velocity", "fixed:T1,T2,...", or "echo:SCENARIO_DIR".
    #[arg(long, default_value = "constant_velocity")]
    policy: String,
    #[arg(long, default_value = "127.0.0.1:0")]
    bind: String,
}

fn build_planner(cfg: &Config) -> Result<Box<dyn Planner>> {
    Ok(match cfg.planner_kind {
        PlannerKind::Oracle => Box::new(OraclePlanner),
        PlannerKind::ConstantVelocity => Box::new(ConstantVelocityPlanner),
        PlannerKind::LaneFollow => Box::new(LaneFollowPlanner),
        PlannerKind::Remote => {
            let endpoint = cfg.endpoint.as_deref().ok_or_else(|| {
                Error::Config("remote planner needs an endpoint (--endpoint or config)".into())
            })?;
            Box::new(RemotePlanner::new(endpoint, cfg.timeout, cfg.retries))
        }
    })
}

fn apply_planner_flags(cfg: &mut Config, planner: Option<&str>, endpoint: Option<String>) -> Result<()> {
    if let Some(k) = planner {
        cfg.planner_kind = k.parse()?;
    }
    if let Some(e) = endpoint {
        cfg.endpoint = Some(e);
    }
    Ok(())
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::from_json(&std::fs::read_to_string(path)?)
}

fn write_image(
    img: &bevhd::viz::RgbImage,
    dir: &Path,
    stem: &str,
    png: bool,
) -> Result<()> {
    std::fs::write(dir.join(format!("{stem}.ppm")), img.to_ppm())?;
    if png {
        img.save_png(&dir.join(format!("{stem}.png")))?;
    }
    Ok(())
}

fn cmd_gen(cfg: &Config, args: &GenArgs) -> Result<()> {
    let _ = cfg;
    std::fs::create_dir_all(&args.out)?;
    for s in standard_suite(args.seed) {
        let path = args.out.join(format!("{}.json", s.name));
        std::fs::write(&path, s.to_json())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn frame_features(
    cfg: &Config,
    scenario: &Scenario,
    frame: usize,
    features: Option<&Path>,
) -> Result<FeatureMap> {
    if frame >= scenario.frames.len() {
        return Err(Error::HorizonOutOfRange {
            frame,
            steps: 0,
            frames: scenario.frames.len(),
        });
    }
    match features {
        Some(p) => read_bft(std::fs::read(p)?.as_slice()),
        None => synth_feature_map(
            &cfg.grid,
            &scenario.frames[frame],
            &scenario.map,
            cfg.channels,
            cfg.seed,
        ),
    }
}

fn cmd_render(cfg: &Config, args: &RenderArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    apply_planner_flags(&mut cfg, args.planner.as_deref(), args.endpoint.clone())?;
    let scenario = load_scenario(&args.scenario)?;
    let fm = frame_features(&cfg, &scenario, args.frame, args.features.as_deref())?;
    let frame = &scenario.frames[args.frame];

    std::fs::create_dir_all(&args.out)?;
    let bev = visualize(&fm)?;
    write_image(&bev, &args.out, "bev", args.png)?;

    let mut bev_hd = compose_bev_hd(&bev, &scenario.map, &frame.ego, &cfg.grid, &cfg.style);
    if args.boxes {
        bev_hd = render_agent_boxes(&bev_hd, &frame.ego, &frame.agents, &cfg.grid, &cfg.style);
    }
    write_image(&bev_hd, &args.out, "bev_hd", args.png)?;

    if args.traj {
        let gt = ground_truth_trajectory(&scenario, args.frame, bevhd::scene::HORIZON_STEPS)?;
        let planner = build_planner(&cfg)?;
        let ctx = PlanContext {
            scenario: &scenario,
            frame_index: args.frame,
            image: &bev_hd,
            grid: &cfg.grid,
            vocab: &cfg.vocab,
            horizon_steps: gt.len(),
        };
        let pred = plan_to_waypoints(planner.plan(&ctx)?, &cfg)?;
        let overlay = render_trajectories(&bev_hd, &pred, &gt, &cfg.grid, &cfg.style);
        write_image(&overlay, &args.out, "overlay", args.png)?;
    }
    println!("rendered frame {} of {}", args.frame, scenario.name);
    Ok(())
}

fn plan_to_waypoints(output: PlanOutput, cfg: &Config) -> Result<Trajectory> {
    Ok(match output {
        PlanOutput::Tokens(tokens) => decode(&tokens, &cfg.vocab)?,
        PlanOutput::Waypoints(traj) => traj,
    })
}

fn cmd_plan(cfg: &Config, args: &PlanArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    apply_planner_flags(&mut cfg, args.planner.as_deref(), args.endpoint.clone())?;
    let scenario = load_scenario(&args.scenario)?;
    let fm = frame_features(&cfg, &scenario, args.frame, None)?;
    let frame = &scenario.frames[args.frame];
    let bev = visualize(&fm)?;
    let image = compose_bev_hd(&bev, &scenario.map, &frame.ego, &cfg.grid, &cfg.style);
    let planner = build_planner(&cfg)?;
    let ctx = PlanContext {
        scenario: &scenario,
        frame_index: args.frame,
        image: &image,
        grid: &cfg.grid,
        vocab: &cfg.vocab,
        horizon_steps: bevhd::scene::HORIZON_STEPS,
    };
    let output = planner.plan(&ctx)?;
    let (tokens, clamped) = match &output {
        PlanOutput::Tokens(t) => (t.clone(), t.clamped),
        PlanOutput::Waypoints(traj) => {
            let t = encode(traj, &cfg.vocab);
            let clamped = t.clamped;
            (t, clamped)
        }
    };
    let waypoints = plan_to_waypoints(output, &cfg)?;
    let doc = serde_json::json!({
        "planner": planner.name(),
        "tokens": tokens.tokens,
        "clamped": clamped,
        "waypoints": waypoints.waypoints,
    });
    println!("{}", serde_json::to_string_pretty(&doc).expect("plan serialization"));
    Ok(())
}

fn collect_scenarios(paths: &[PathBuf]) -> Result<Vec<Scenario>> {
    let mut files: Vec<PathBuf> = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::Config("no scenario files found".into()));
    }
    files.iter().map(|f| load_scenario(f)).collect()
}

fn cmd_eval(cfg: &Config, args: &EvalArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    apply_planner_flags(&mut cfg, args.planner.as_deref(), args.endpoint.clone())?;
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.skip_failures {
        cfg.failure_policy = FailurePolicy::RecordAndSkip;
    }
    let scenarios = collect_scenarios(&args.scenarios)?;
    let planner = build_planner(&cfg)?;
    let eval_cfg = EvalConfig {
        grid: cfg.grid,
        vocab: cfg.vocab,
        style: cfg.style.clone(),
        ego_box: cfg.ego_box,
        horizon_steps: bevhd::scene::HORIZON_STEPS,
        channels: cfg.channels,
        seed: cfg.seed,
        route_through_codec: args.route_codec,
        render_boxes: args.boxes,
        failure_policy: cfg.failure_policy,
        workers: cfg.workers,
    };
    let (mut report, mut records) = evaluate(planner.as_ref(), &scenarios, &eval_cfg)?;
    let measured_latency = report.mean_latency_s;
    if !args.timing {
        // Wall-clock timing is the one nondeterministic field; zero it in
        // persisted artifacts so identical runs produce identical bytes.
        report.mean_latency_s = 0.0;
        for r in &mut records {
            r.latency_s = 0.0;
        }
    }
    print!("{}", report.to_table());
    println!("measured mean latency: {measured_latency:.6} s");

    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from));
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("report.json"), report.to_json())?;
        std::fs::write(dir.join("report.txt"), report.to_table())?;
        let mut csv = String::from(&csv_header(eval_cfg.horizon_steps));
        csv.push('\n');
        for r in &records {
            csv.push_str(&r.to_csv_row());
            csv.push('\n');
        }
        std::fs::write(dir.join("samples.csv"), csv)?;
        println!("wrote report to {}", dir.display());
    }
    Ok(())
}

fn cmd_tokenize(cfg: &Config, args: &TokenizeArgs) -> Result<()> {
    let mut waypoints = Vec::new();
    for part in args.waypoints.split(';').filter(|s| !s.trim().is_empty()) {
        let coords: Vec<&str> = part.split(',').map(str::trim).collect();
        if coords.len() != 2 {
            return Err(Error::InvalidParameter(format!(
                "bad waypoint '{part}' (expected x,y)"
            )));
        }
        let x: f64 = coords[0]
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad number '{}'", coords[0])))?;
        let y: f64 = coords[1]
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad number '{}'", coords[1])))?;
        waypoints.push([x, y]);
    }
    if waypoints.is_empty() {
        return Err(Error::InvalidParameter("no waypoints given".into()));
    }
    let traj = Trajectory::new(waypoints);
    let tokens = encode(&traj, &cfg.vocab);
    if tokens.clamped {
        eprintln!("warning: waypoint(s) outside +/-{} m were clamped", cfg.vocab.range_m);
    }
    let back = decode(&tokens, &cfg.vocab)?;
    for ((w, t), b) in traj.waypoints.iter().zip(&tokens.tokens).zip(&back.waypoints) {
        println!(
            "({}, {}) -> token {} -> ({}, {})  error ({}, {})",
            w[0],
            w[1],
            t,
            b[0],
            b[1],
            (b[0] - w[0]).abs(),
            (b[1] - w[1]).abs()
        );
    }
    Ok(())
}

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_sigint(_: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

fn parse_policy(spec: &str) -> Result<MockPolicy> {
    if spec == "constant_velocity" {
        return Ok(MockPolicy::ConstantVelocity);
    }
    if let Some(rest) = spec.strip_prefix("fixed:") {
        let tokens = rest
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::InvalidParameter(format!("bad token '{t}'")))
            })
            .collect::<Result<Vec<u32>>>()?;
        return Ok(MockPolicy::FixedTokens(tokens));
    }
    if let Some(dir) = spec.strip_prefix("echo:") {
        let scenarios = collect_scenarios(&[PathBuf::from(dir)])?;
        return Ok(MockPolicy::EchoOracle(scenarios));
    }
    Err(Error::InvalidParameter(format!(
        "unknown policy '{spec}' (expected constant_velocity, fixed:..., or echo:DIR)"
    )))
}

fn cmd_serve_mock(args: &ServeMockArgs) -> Result<()> {
    let policy = parse_policy(&args.policy)?;
    let mut handle = serve_mock(policy, &args.bind)?;
    println!("listening on {}", handle.endpoint());
    unsafe {
        libc::signal(libc::SIGINT, on_sigint as *const () as libc::sighandler_t);
        libc::signal(libc::SIGTERM, on_sigint as *const () as libc::sighandler_t);
    }
    while !INTERRUPTED.load(Ordering::SeqCst) {
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    handle.stop();
    println!("shut down");
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let cfg = Config::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Gen(args) => cmd_gen(&cfg, args),
        Command::Render(args) => cmd_render(&cfg, args),
        Command::Plan(args) => cmd_plan(&cfg, args),
        Command::Eval(args) => cmd_eval(&cfg, args),
        Command::Tokenize(args) => cmd_tokenize(&cfg, args),
        Command::ServeMock(args) => cmd_serve_mock(args),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
