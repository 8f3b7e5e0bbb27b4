//! `dai`: certify, search, and simulate DAI frequency control under delays and
//! switching topologies.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use dai_core::certify::{write_witness, InteriorPoint};
use dai_core::config::{load_config, Config, ConfigError};
use dai_core::linalg::min_eigenvalue;
use dai_core::lyapunov::{
    find_epsilon, gamma_bound, hessian_at_eq, nominal_decrease, random_error_states,
    vdot_matrix_nominal,
};
use dai_core::reduction::build_reduction;
use dai_core::simulate::{parallel_map, worker_threads, write_csv_file, Scenario, Verdict};
use dai_core::Error;

#[derive(Parser)]
#[command(
    name = "dai",
    version,
    about = "Delay-robust stability analysis for DAI frequency control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the LMI certificate at one gain and write the witness.
    Certify(Common),
    /// Bisect for the largest certified gain.
    SearchGain(Common),
    /// Simulate one trajectory and write it as CSV.
    Simulate(Common),
    /// Report the strict Lyapunov function checks for the delay-free loop.
    ValidateNominal(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Gain; for search-gain the initial gain of the bracket search.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with the process exit code to report.
struct Failure {
    code: u8,
    message: String,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(c) => c.into(),
            other => Failure {
                code: 2,
                message: other.to_string(),
            },
        }
    }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Certify(c) => run(c, certify),
        Command::SearchGain(c) => run(c, search_gain),
        Command::Simulate(c) => run(c, simulate),
        Command::ValidateNominal(c) => run(c, validate_nominal),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(args: &Common, cmd: fn(&Config, &Common) -> Outcome) -> Outcome {
    let cfg = load_config(&args.config)?;
    cmd(&cfg, args)
}

fn out_path(args: &Common, default: &str) -> PathBuf {
    args.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    std::fs::write(path, text + "\n").map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn certify(cfg: &Config, args: &Common) -> Outcome {
    let kappa = args.kappa.unwrap_or(cfg.comm.kappa);
    let setup = cfg.certify_setup()?;
    let res = setup.check(kappa, &InteriorPoint)?;
    println!("kappa: {kappa}");
    println!("channels: {}", setup.bounds.len());
    println!("feasible: {}", res.feasible);
    println!("margin_variable: {:e}", res.t);
    println!("min_eig_psi: {:e}", res.margin);
    println!("delta: {:e}", res.delta);
    println!(
        "solver: {:?} after {} iterations",
        res.status, res.iterations
    );
    let mut ok = res.feasible;
    if cfg.certify.hull && res.feasible {
        let mid = setup.midpoint_margin(kappa, &res.witness)?;
        let pass = mid >= res.delta / 2.0;
        println!(
            "hull_midpoint_min_eig: {mid:e} ({})",
            if pass { "pass" } else { "fail" }
        );
        ok &= pass;
    }
    let path = out_path(args, "witness.json");
    write_witness(&path, &res, kappa)?;
    println!("witness: {}", path.display());
    Ok(ok)
}

fn search_gain(cfg: &Config, args: &Common) -> Outcome {
    let init = args.kappa.unwrap_or(cfg.certify.kappa_init);
    let setup = cfg.certify_setup()?;
    let search = setup.max_gain(&InteriorPoint, init, cfg.certify.tol_kappa)?;
    for p in &search.probes {
        println!("probe kappa={:.6} feasible={}", p.kappa, p.feasible);
    }
    println!("kappa_feas: {:.6}", search.kappa_feas);
    match search.kappa_infeas {
        Some(k) => println!("kappa_infeas: {k:.6}"),
        None => println!("kappa_infeas: none (capped at {:.6})", search.kappa_feas),
    }
    if let Some(path) = &args.out {
        let probes: Vec<_> = search
            .probes
            .iter()
            .map(|p| json!({"kappa": p.kappa, "feasible": p.feasible}))
            .collect();
        write_json(
            path,
            &json!({
                "kappa_feas": search.kappa_feas,
                "kappa_infeas": search.kappa_infeas,
                "capped": search.capped,
                "tol": cfg.certify.tol_kappa,
                "probes": probes,
            }),
        )?;
    }
    Ok(true)
}

fn scenario(cfg: &Config) -> Result<Scenario, Failure> {
    let mut sc = Scenario::new(
        cfg.network()?,
        cfg.dai(cfg.comm.kappa)?,
        cfg.topologies()?,
        cfg.channel_bounds()?,
        cfg.sim_options(),
    )?;
    sc.pairing = cfg.pairing();
    sc.radius = cfg.sim.radius;
    Ok(sc)
}

fn simulate(cfg: &Config, args: &Common) -> Outcome {
    let kappa = args.kappa.unwrap_or(cfg.comm.kappa);
    let seed = args.seed.unwrap_or(cfg.sim.seed);
    let sc = scenario(cfg)?;
    let traj = sc.trial(kappa, seed)?;
    let path = out_path(args, "trajectory.csv");
    write_csv_file(&traj, &path)?;
    println!("kappa: {kappa}");
    println!("seed: {seed}");
    println!("t_final: {}", traj.times.last().copied().unwrap_or(0.0));
    println!("verdict: {}", traj.verdict);
    println!("trajectory: {}", path.display());
    Ok(traj.verdict == Verdict::Converged)
}

fn validate_nominal(cfg: &Config, args: &Common) -> Outcome {
    let kappa = args.kappa.unwrap_or(cfg.comm.kappa);
    let seed = args.seed.unwrap_or(cfg.sim.seed);
    let sc = scenario(cfg)?;
    let net = &sc.net;
    let dai = cfg.dai(kappa)?;
    let ts = &sc.ts;
    let rs = build_reduction(&dai, ts)?;
    let theta = &sc.theta_star;
    let lyap = find_epsilon(net, &dai, &rs, theta)?;
    println!("kappa: {kappa}");
    println!("epsilon: {:e}", lyap.epsilon);
    println!("gamma: {:e}", gamma_bound(net, &dai));
    let hess = min_eigenvalue(&hessian_at_eq(net, &dai, &rs, &lyap, theta));
    println!("hessian_min_eig: {hess:e}");
    let mut ok = hess > 0.0;
    for ell in 0..ts.len() {
        let v = min_eigenvalue(&vdot_matrix_nominal(net, &dai, &rs, &lyap, theta, ell));
        println!("vdot_min_eig[topology {}]: {v:e}", ell + 1);
        ok &= v > 0.0;
    }
    let starts: Vec<_> = random_error_states(net.n(), cfg.sim.trials, cfg.sim.radius, seed)
        .into_iter()
        .enumerate()
        .map(|(j, x)| (j % ts.len(), x))
        .collect();
    let reports = parallel_map(&starts, worker_threads(), |(ell, x0)| {
        nominal_decrease(
            net,
            &dai,
            &rs,
            ts,
            &lyap,
            theta,
            x0,
            *ell,
            0.01,
            cfg.sim.t_end,
            1e-12,
        )
    });
    let mut decreasing = 0;
    for (j, rep) in reports.into_iter().enumerate() {
        let rep = rep?;
        if rep.monotone {
            decreasing += 1;
        }
        println!(
            "trajectory {j}: V0={:.3e} V_end={:.3e} at t={:.2} monotone={} floor={}",
            rep.v0, rep.v_final, rep.t_final, rep.monotone, rep.reached_floor
        );
        ok &= rep.monotone;
    }
    println!("decreasing: {decreasing}/{}", starts.len());
    Ok(ok)
}
