//! Command-line front end: mesh generation, deck solving, and built-in
//! convergence benchmarks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sbfem_heat::element::{compute_all_elements, Material};
use sbfem_heat::geometry::{
    build_quadtree_mesh, build_structured_quad_mesh, build_voronoi_polygon_mesh, Mesh, Point2D,
    Rect, RefineFeature,
};
use sbfem_heat::io::{
    mesh_to_deck, parse_expr, parse_inp, write_deck, write_manifest, write_time_series,
    write_vtu, ProbeSeries, RunManifest, StepCard,
};
use sbfem_heat::solver::{run_transient, solve_steady, TransientConfig};
use sbfem_heat::verify::benchmarks::{
    self, rate_in_band, steady_plate_quad_study, steady_plate_voronoi_study,
    transient_plate_study, RATE_BAND,
};
use sbfem_heat::verify::{write_convergence_csv, ConvergenceStudy, FieldSampler};
use sbfem_heat::{Error, Result};

/// Polygonal scaled-boundary solver for 2D heat conduction.
#[derive(Parser)]
#[command(
    name = "sbfem-heat",
    version,
    about = "Polygonal scaled-boundary solver for 2D heat conduction",
    long_about = "Generates polygonal meshes, solves steady and transient heat \
conduction from input decks, and runs built-in convergence benchmarks.\n\n\
Configuration precedence: command-line flags override deck cards, which \
override built-in defaults. All randomness flows through --seed (default 0)."
)]
struct Cli {
    /// RNG seed for stochastic mesh generators.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker thread cap; 0 or absent means one per core.
    #[arg(long, global = true, env = "SBFEM_HEAT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a mesh and write it as an input deck.
    Mesh {
        #[command(subcommand)]
        generator: MeshCommand,
    },
    /// Solve an input deck and write VTU/PVD/CSV outputs plus a manifest.
    Solve(SolveArgs),
    /// Run a built-in convergence benchmark; exits 0 iff the fitted rate
    /// lies in the acceptance band.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct MeshCommon {
    /// Domain width.
    #[arg(long)]
    width: f64,

    /// Domain height.
    #[arg(long)]
    height: f64,

    /// Thermal conductivity written to the deck's property card.
    #[arg(long, default_value_t = 1.0)]
    conductivity: f64,

    /// Density written to the deck's property card.
    #[arg(long, default_value_t = 1.0)]
    density: f64,

    /// Specific heat written to the deck's property card.
    #[arg(long, default_value_t = 1.0)]
    specific_heat: f64,

    /// Boundary temperature card TAG=EXPR over (x, y, t), repeatable;
    /// generated tags are left, right, top, bottom.
    #[arg(long = "bc", value_name = "TAG=EXPR")]
    bcs: Vec<String>,

    /// Output deck path.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Structured grid of square cells.
    Quad {
        #[command(flatten)]
        common: MeshCommon,

        /// Cell edge length; must divide both width and height.
        #[arg(long)]
        h: f64,
    },
    /// 2:1-balanced quadtree with hanging nodes, refined near features.
    Quadtree {
        #[command(flatten)]
        common: MeshCommon,

        /// Subdivision depth applied everywhere.
        #[arg(long, default_value_t = 2)]
        min_depth: u32,

        /// Subdivision depth near the refinement features.
        #[arg(long, default_value_t = 4)]
        max_depth: u32,

        /// Refinement point "x,y"; repeatable.
        #[arg(long = "feature", value_name = "X,Y")]
        features: Vec<String>,

        /// Refinement circle "x,y,r"; repeatable.
        #[arg(long = "feature-circle", value_name = "X,Y,R")]
        circles: Vec<String>,
    },
    /// Centroidal Voronoi polygons (Lloyd-relaxed random seeds).
    Voronoi {
        #[command(flatten)]
        common: MeshCommon,

        /// Number of seed points (= cells).
        #[arg(long)]
        cells: usize,

        /// Lloyd relaxation iterations.
        #[arg(long, default_value_t = 100)]
        lloyd: usize,
    },
}

#[derive(Args)]
struct SolveArgs {
    /// Input deck path (.inp).
    deck: PathBuf,

    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,

    /// Override the transient time step from the deck.
    #[arg(long)]
    dt: Option<f64>,

    /// Override the transient end time from the deck.
    #[arg(long)]
    t_end: Option<f64>,

    /// Probe point "x,y" sampled in every output state; repeatable.
    #[arg(long = "probe", value_name = "X,Y")]
    probes: Vec<String>,

    /// Keep every Nth transient step in the outputs (the final step is
    /// always kept).
    #[arg(long, default_value_t = 1)]
    output_every: usize,

    /// Gauss points per boundary element (minimum 2).
    #[arg(long, default_value_t = 2)]
    gauss_order: usize,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Benchmark {
    /// Steady sine-heated plate, refinement ladder of mesh sizes.
    SteadyPlate,
    /// Transient decaying product-sine plate, ladder of grid divisions.
    TransientPlate,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Family {
    Quad,
    Voronoi,
}

#[derive(Args)]
struct VerifyArgs {
    /// Benchmark to run.
    #[arg(value_enum)]
    benchmark: Benchmark,

    /// Mesh family for steady-plate.
    #[arg(long, value_enum, default_value_t = Family::Quad)]
    family: Family,

    /// Mesh size for steady-plate, repeatable (needs >= 3; default
    /// 1 0.5 0.25 0.125).
    #[arg(long = "h", value_name = "H")]
    hs: Vec<f64>,

    /// Grid divisions for transient-plate, repeatable (needs >= 3; default
    /// 4 8 16).
    #[arg(long, value_name = "N")]
    divisions: Vec<usize>,

    /// Time step for transient-plate.
    #[arg(long)]
    dt: Option<f64>,

    /// Directory for the convergence CSVs and manifest.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot build thread pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let t0 = Instant::now();
    match &cli.command {
        Command::Mesh { generator } => cmd_mesh(generator, cli.seed, t0),
        Command::Solve(args) => cmd_solve(args, t0),
        Command::Verify(args) => cmd_verify(args, cli.seed, t0),
    }
}

fn manifest_base(t0: Instant) -> RunManifest {
    let mut m = RunManifest::new(std::env::args().collect());
    m.wall_seconds = t0.elapsed().as_secs_f64();
    m
}

fn parse_point(s: &str) -> Result<Point2D> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() == 2 {
        if let (Ok(x), Ok(y)) = (parts[0].parse(), parts[1].parse()) {
            return Ok(Point2D::new(x, y));
        }
    }
    Err(Error::config(format!("expected a point \"x,y\", got \"{s}\"")))
}

fn parse_circle(s: &str) -> Result<(Point2D, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() == 3 {
        if let (Ok(x), Ok(y), Ok(r)) = (parts[0].parse(), parts[1].parse(), parts[2].parse()) {
            return Ok((Point2D::new(x, y), r));
        }
    }
    Err(Error::config(format!(
        "expected a circle \"x,y,r\", got \"{s}\""
    )))
}

fn cmd_mesh(generator: &MeshCommand, seed: u64, t0: Instant) -> Result<()> {
    let (common, mesh, config) = build_mesh(generator, seed)?;

    let material = Material::new(common.conductivity, common.density, common.specific_heat)?;
    let mut deck = mesh_to_deck(&mesh, &material, None);
    for spec in &common.bcs {
        let (tag, expression) = spec.split_once('=').ok_or_else(|| {
            Error::config(format!("expected TAG=EXPR for --bc, got \"{spec}\""))
        })?;
        parse_expr(expression)?; // surface bad expressions before writing
        deck.boundaries.push(sbfem_heat::io::BoundaryCard {
            tag: tag.trim().to_string(),
            expression: expression.trim().to_string(),
            line: 0,
        });
    }

    std::fs::write(&common.out, write_deck(&deck))
        .map_err(|e| Error::config(format!("cannot write {}: {e}", common.out.display())))?;
    println!(
        "wrote {} ({} nodes, {} cells)",
        common.out.display(),
        mesh.node_count(),
        mesh.cell_count()
    );

    let mut manifest = manifest_base(t0);
    manifest.config = config;
    manifest.outputs = vec![file_name(&common.out)];
    let manifest_path = common.out.with_extension("manifest.json");
    write_manifest(&manifest, &manifest_path)?;
    Ok(())
}

fn build_mesh(
    generator: &MeshCommand,
    seed: u64,
) -> Result<(&MeshCommon, Mesh, serde_json::Value)> {
    let common = match generator {
        MeshCommand::Quad { common, .. }
        | MeshCommand::Quadtree { common, .. }
        | MeshCommand::Voronoi { common, .. } => common,
    };
    let material = serde_json::json!({
        "conductivity": common.conductivity,
        "density": common.density,
        "specific_heat": common.specific_heat,
    });
    match generator {
        MeshCommand::Quad { h, .. } => {
            let mesh = build_structured_quad_mesh(common.width, common.height, *h)?;
            let config = serde_json::json!({
                "generator": "quad",
                "width": common.width,
                "height": common.height,
                "h": h,
                "material": material,
                "bcs": common.bcs,
            });
            Ok((common, mesh, config))
        }
        MeshCommand::Quadtree {
            min_depth,
            max_depth,
            features,
            circles,
            ..
        } => {
            let mut refine = Vec::new();
            for f in features {
                refine.push(RefineFeature::Point(parse_point(f)?));
            }
            for c in circles {
                let (center, radius) = parse_circle(c)?;
                refine.push(RefineFeature::Circle { center, radius });
            }
            let rect = Rect::new(0.0, 0.0, common.width, common.height)?;
            let mesh = build_quadtree_mesh(rect, &refine, *max_depth, *min_depth)?;
            let config = serde_json::json!({
                "generator": "quadtree",
                "width": common.width,
                "height": common.height,
                "min_depth": min_depth,
                "max_depth": max_depth,
                "features": features,
                "circles": circles,
                "material": material,
                "bcs": common.bcs,
            });
            Ok((common, mesh, config))
        }
        MeshCommand::Voronoi { cells, lloyd, .. } => {
            let rect = Rect::new(0.0, 0.0, common.width, common.height)?;
            let mesh = build_voronoi_polygon_mesh(rect, *cells, *lloyd, seed)?;
            let config = serde_json::json!({
                "generator": "voronoi",
                "width": common.width,
                "height": common.height,
                "cells": cells,
                "lloyd": lloyd,
                "seed": seed,
                "material": material,
                "bcs": common.bcs,
            });
            Ok((common, mesh, config))
        }
    }
}

fn cmd_solve(args: &SolveArgs, t0: Instant) -> Result<()> {
    let deck_path = args.deck.display().to_string();
    let text = std::fs::read_to_string(&args.deck)
        .map_err(|e| Error::config(format!("cannot read {deck_path}: {e}")))?;
    let deck = parse_inp(&text, &deck_path)?;
    let case = sbfem_heat::io::deck_to_case(&deck, &deck_path)?;

    let probes: Vec<Point2D> = args
        .probes
        .iter()
        .map(|s| parse_point(s))
        .collect::<Result<_>>()?;

    let elements = compute_all_elements(&case.mesh, &case.materials, args.gauss_order)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let base = args
        .deck
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("solution")
        .to_string();

    let mut manifest = manifest_base(t0);
    manifest.inputs = vec![deck_path.clone()];

    match case.step {
        StepCard::Steady => {
            if args.dt.is_some() || args.t_end.is_some() {
                return Err(Error::config(
                    "--dt/--t-end apply to transient decks; this deck declares a steady step",
                ));
            }
            let nodal = solve_steady(&case.mesh, &elements, &case.bcs)?;
            let vtu = args.out_dir.join(format!("{base}.vtu"));
            write_vtu(&case.mesh, &nodal, &vtu)?;
            manifest.outputs.push(file_name(&vtu));

            if !probes.is_empty() {
                let sampler = FieldSampler::new(&elements);
                let rows: Vec<(Point2D, f64)> = probes
                    .iter()
                    .map(|&p| Ok((p, sampler.sample(&nodal, p)?)))
                    .collect::<Result<_>>()?;
                for (p, v) in &rows {
                    println!("probe ({}, {}): {v:.9}", p.x, p.y);
                }
                let csv_path = args.out_dir.join(format!("{base}_probes.csv"));
                write_steady_probes(&csv_path, &rows)?;
                manifest.outputs.push(file_name(&csv_path));
            }
            println!(
                "steady solve: {} nodes, {} cells -> {}",
                case.mesh.node_count(),
                case.mesh.cell_count(),
                vtu.display()
            );
            manifest.config = serde_json::json!({
                "step": "steady",
                "gauss_order": args.gauss_order,
                "probes": probes.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
            });
        }
        StepCard::Transient { dt, t_end } => {
            let dt = args.dt.unwrap_or(dt);
            let t_end = args.t_end.unwrap_or(t_end);
            let config = TransientConfig {
                dt,
                t_end,
                output_every: args.output_every,
            };
            let initial_expr = case.initial.clone();
            let initial =
                move |x: f64, y: f64| initial_expr.as_ref().map_or(0.0, |e| e.eval(x, y, 0.0));
            let history = run_transient(&case.mesh, &elements, &case.bcs, config, &initial)?;

            let sampler = FieldSampler::new(&elements);
            let mut series = Vec::with_capacity(probes.len());
            for p in &probes {
                let values: Vec<f64> = history
                    .iter()
                    .map(|(_, nodal)| sampler.sample(nodal, *p))
                    .collect::<Result<_>>()?;
                series.push(ProbeSeries {
                    label: format!("T({},{})", p.x, p.y),
                    values,
                });
            }
            let files = write_time_series(&case.mesh, &history, &series, &args.out_dir, &base)?;
            for vtu in &files.vtu {
                manifest.outputs.push(file_name(vtu));
            }
            manifest.outputs.push(file_name(&files.pvd));
            manifest.outputs.push(file_name(&files.csv));
            println!(
                "transient solve: {} nodes, {} kept states (dt = {dt}, t_end = {t_end}) -> {}",
                case.mesh.node_count(),
                history.len(),
                files.pvd.display()
            );
            manifest.config = serde_json::json!({
                "step": "transient",
                "dt": dt,
                "t_end": t_end,
                "output_every": args.output_every,
                "gauss_order": args.gauss_order,
                "probes": probes.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
            });
        }
    }

    manifest.wall_seconds = t0.elapsed().as_secs_f64();
    write_manifest(&manifest, &args.out_dir.join("manifest.json"))?;
    Ok(())
}

fn write_steady_probes(path: &Path, rows: &[(Point2D, f64)]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)
        .map_err(|e| Error::config(format!("cannot write {}: {e}", path.display())))?;
    (|| -> csv::Result<()> {
        w.write_record(["x", "y", "temperature"])?;
        for (p, v) in rows {
            w.write_record([
                format!("{:.16e}", p.x),
                format!("{:.16e}", p.y),
                format!("{v:.16e}"),
            ])?;
        }
        w.flush().map_err(csv::Error::from)
    })()
    .map_err(|e| Error::config(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn cmd_verify(args: &VerifyArgs, seed: u64, t0: Instant) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir)?;
    let mut manifest = manifest_base(t0);
    let mut failures = Vec::new();

    match args.benchmark {
        Benchmark::SteadyPlate => {
            let hs: Vec<f64> = if args.hs.is_empty() {
                benchmarks::STEADY_MESH_SIZES.to_vec()
            } else {
                args.hs.clone()
            };
            if !args.divisions.is_empty() || args.dt.is_some() {
                return Err(Error::config(
                    "--divisions/--dt apply to transient-plate only",
                ));
            }
            let (study, family) = match args.family {
                Family::Quad => (steady_plate_quad_study(&hs)?, "quad"),
                Family::Voronoi => (steady_plate_voronoi_study(&hs, seed)?, "voronoi"),
            };
            print_study(&format!("steady-plate ({family})"), &study);
            let csv = args.out_dir.join(format!("steady_plate_{family}.csv"));
            write_convergence_csv(&csv, &study)?;
            manifest.outputs.push(file_name(&csv));
            check_rate(&study, &format!("steady-plate ({family})"), &mut failures);
            manifest.config = serde_json::json!({
                "benchmark": "steady-plate",
                "family": family,
                "hs": hs,
                "seed": seed,
            });
        }
        Benchmark::TransientPlate => {
            let divisions: Vec<usize> = if args.divisions.is_empty() {
                benchmarks::TRANSIENT_DIVISIONS.to_vec()
            } else {
                args.divisions.clone()
            };
            if !args.hs.is_empty() {
                return Err(Error::config("--h applies to steady-plate only"));
            }
            let dt = args.dt.unwrap_or(benchmarks::TRANSIENT_DT);
            let studies = transient_plate_study(
                &divisions,
                dt,
                benchmarks::TRANSIENT_T_END,
                &benchmarks::TRANSIENT_EVAL_TIMES,
            )?;
            for (t, study) in &studies {
                print_study(&format!("transient-plate at t = {t}"), study);
                let csv = args.out_dir.join(format!("transient_plate_t{t}.csv"));
                write_convergence_csv(&csv, study)?;
                manifest.outputs.push(file_name(&csv));
                check_rate(study, &format!("transient-plate at t = {t}"), &mut failures);
            }
            manifest.config = serde_json::json!({
                "benchmark": "transient-plate",
                "divisions": divisions,
                "dt": dt,
                "t_end": benchmarks::TRANSIENT_T_END,
                "eval_times": benchmarks::TRANSIENT_EVAL_TIMES,
            });
        }
    }

    manifest.wall_seconds = t0.elapsed().as_secs_f64();
    write_manifest(&manifest, &args.out_dir.join("manifest.json"))?;

    if failures.is_empty() {
        println!("PASS: all fitted rates in [{}, {}]", RATE_BAND.0, RATE_BAND.1);
        Ok(())
    } else {
        Err(Error::Verification {
            message: failures.join("; "),
        })
    }
}

fn print_study(label: &str, study: &ConvergenceStudy) {
    println!("{label}:");
    println!("  {:<12} {:>8} {:>14} {:>10} {:>10}", "h", "dof", "error", "rate", "wall_s");
    for r in &study.records {
        println!(
            "  {:<12.6} {:>8} {:>14.6e} {:>10} {:>10.3}",
            r.h,
            r.dof,
            r.error,
            r.rate_local
                .map(|v| format!("{v:.3}"))
                .unwrap_or_else(|| "-".into()),
            r.wall_seconds
        );
    }
    match &study.fit {
        Some(fit) => {
            let note = if fit.is_well_resolved() { "" } else { "  [low R^2]" };
            println!(
                "  fitted rate {:.4} (R^2 {:.4}){note}",
                fit.slope, fit.r_squared
            );
        }
        None => println!("  fitted rate: not fitted (errors at numerical floor)"),
    }
}

fn check_rate(study: &ConvergenceStudy, label: &str, failures: &mut Vec<String>) {
    match &study.fit {
        Some(fit) if rate_in_band(fit.slope) => {}
        Some(fit) => failures.push(format!(
            "{label}: fitted rate {:.4} outside [{}, {}]",
            fit.slope, RATE_BAND.0, RATE_BAND.1
        )),
        None => failures.push(format!("{label}: no rate fit (errors at numerical floor)")),
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
