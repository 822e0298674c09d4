//! `lipgrid` — command-line front end for the grid-sampled Lipschitz
//! toolkit: generation, extension, filtering, modulus encoding, the
//! invariance-breaking perturbation, local-section audits, and a seeded
//! verification suite with CSV reports.

/// Print a line to stdout, ignoring broken-pipe errors so that piping
/// into `head` and friends truncates output instead of panicking.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lipgrid::dynamics::{audit_csv, build_local_section, TorusAction};
use lipgrid::error::Error;
use lipgrid::filter::{apply_filter, build_plan};
use lipgrid::grid::{
    load_lfn_document_path, load_lfn_path, save_lfn_path, save_lfn_with_comments, GridKind,
    GridSpec, SampledFunction,
};
use lipgrid::lipcore::{certify_lipschitz, local_modulus, mcshane_extend, random_lipschitz};
use lipgrid::perturb::{break_invariance, multibump_decode, multibump_encode, BumpLayout};

/// Grid-sampled Lipschitz machinery: extension, filtering, modulus
/// encoding, and equivariant demos.
#[derive(Parser)]
#[command(name = "lipgrid", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random c-Lipschitz function and write it as an LFN file.
    Gen {
        /// Grid as kind,dim,extent,points (e.g. box,2,1,129 or torus,1,4,64).
        #[arg(long, default_value = "box,2,1,129")]
        grid: String,
        /// Lipschitz budget of the generated function.
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        /// Seed for the node subset and values.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output LFN path.
        #[arg(long, default_value = "gen.lfn")]
        out: PathBuf,
    },
    /// Sample seeded anchor nodes from an input and extend them to the
    /// whole grid by the clamped lower envelope.
    Extend {
        /// Input LFN file supplying the anchor values.
        input: PathBuf,
        /// Slope of the extension cones.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// How many anchor nodes to sample.
        #[arg(long, default_value_t = 32)]
        keep: usize,
        /// Seed for the anchor sample.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output LFN path.
        #[arg(long, default_value = "extend.lfn")]
        out: PathBuf,
    },
    /// Smooth a function on a torus grid: the result is c'-Lipschitz,
    /// stays within eps of any c-Lipschitz input, and commutes with grid
    /// shifts bit for bit.
    Filter {
        /// Input LFN file (torus grid).
        input: PathBuf,
        /// Perturbation budget.
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        /// Lipschitz class the input is promised to be in.
        #[arg(long, default_value_t = 0.5)]
        c: f64,
        /// Lipschitz class of the output.
        #[arg(long, default_value_t = 1.0)]
        cprime: f64,
        /// Quadrature sublattice stride.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Output LFN path.
        #[arg(long, default_value = "filter.lfn")]
        out: PathBuf,
    },
    /// Encode a payload vector into the local Lipschitz moduli of a
    /// carrier at the reference anchor layout.
    Encode {
        /// Payload components in [0,1], comma separated (one per anchor).
        #[arg(long, value_delimiter = ',')]
        s: Vec<f64>,
        /// Optional carrier LFN file; defaults to the constant 1/2 on the
        /// reference grid (box,2,1,129).
        input: Option<PathBuf>,
        /// Grid for the default carrier, as kind,dim,extent,points.
        #[arg(long, default_value = "box,2,1,129")]
        grid: String,
        /// Sup-norm perturbation budget.
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        /// Output LFN path (the anchor layout rides in a comment).
        #[arg(long, default_value = "encode.lfn")]
        out: PathBuf,
    },
    /// Recover the payload of an encoded LFN file from its local moduli,
    /// using the layout comment stored in the file.
    Decode {
        /// Encoded LFN file.
        input: PathBuf,
    },
    /// Carve the single invariance-breaking spike into a carrier: the
    /// local modulus at the origin rises to c' while every modulus away
    /// from it stays near (c + c')/2.
    Perturb {
        /// Input LFN file (box grid, values in [0,1], c-Lipschitz).
        input: PathBuf,
        /// Sup-norm perturbation budget.
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        /// Lipschitz class of the carrier.
        #[arg(long, default_value_t = 0.2)]
        c: f64,
        /// Target modulus at the origin.
        #[arg(long, default_value_t = 1.0)]
        cprime: f64,
        /// Output LFN path.
        #[arg(long, default_value = "perturb.lfn")]
        out: PathBuf,
    },
    /// Build and audit a local section of a toy torus action, printing
    /// the audit report as CSV.
    Section {
        /// Which action to audit: "circle" (free flow on the 1-torus) or
        /// "plane" (rank-one action on the 2-torus).
        #[arg(long, default_value = "circle")]
        action: String,
        /// Optional CSV output path (stdout otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full property suite and write report.csv.
    Verify {
        /// Seed threaded through every randomized property.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Report path.
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
    },
    /// Check a single property of one LFN file.
    VerifyOne {
        /// Property to check: "lipschitz" or "range".
        property: String,
        /// LFN file to check.
        input: PathBuf,
        /// Lipschitz bound for the "lipschitz" property.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
    },
}

fn parse_grid(text: &str) -> Result<GridSpec, Error> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 4 {
        return Err(Error::Parameter(format!(
            "grid spec {text:?} is not kind,dim,extent,points"
        )));
    }
    let dim: usize = parts[1]
        .parse()
        .map_err(|_| Error::Parameter(format!("bad grid dimension {:?}", parts[1])))?;
    let extent: f64 = parts[2]
        .parse()
        .map_err(|_| Error::Parameter(format!("bad grid extent {:?}", parts[2])))?;
    let points: usize = parts[3]
        .parse()
        .map_err(|_| Error::Parameter(format!("bad grid point count {:?}", parts[3])))?;
    let kind = match parts[0] {
        "box" => GridKind::Box { radius: extent },
        "torus" => GridKind::Torus { period: extent },
        other => {
            return Err(Error::Parameter(format!(
                "grid kind {other:?} is neither box nor torus"
            )))
        }
    };
    GridSpec::make_grid(dim, kind, points)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Gen { grid, c, seed, out } => {
            let grid = parse_grid(&grid)?;
            let phi = random_lipschitz(&grid, c, seed)?;
            save_lfn_path(&phi, &out)?;
            say!("wrote {} ({} nodes, slope budget {c})", out.display(), grid.num_nodes());
            Ok(ExitCode::SUCCESS)
        }
        Command::Extend {
            input,
            c,
            keep,
            seed,
            out,
        } => {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let phi = load_lfn_path(&input)?;
            let n = phi.grid().num_nodes();
            if keep == 0 || keep > n {
                return Err(Error::Parameter(format!(
                    "anchor count must lie in 1..={n}, got {keep}"
                )));
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut nodes: Vec<usize> = (0..n).collect();
            nodes.shuffle(&mut rng);
            nodes.truncate(keep);
            nodes.sort_unstable();
            let data: Vec<(usize, f64)> = nodes.iter().map(|&u| (u, phi.value(u))).collect();
            let ext = mcshane_extend(phi.grid(), &data, c)?;
            save_lfn_path(&ext, &out)?;
            say!("wrote {} (extended {keep} anchors at slope {c})", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Filter {
            input,
            eps,
            c,
            cprime,
            stride,
            out,
        } => {
            let phi = load_lfn_path(&input)?;
            let GridKind::Torus { period } = phi.grid().kind() else {
                return Err(Error::Grid("the filter needs a torus-grid input".into()));
            };
            let plan = build_plan(eps, c, cprime, phi.grid(), period, stride)?;
            let smoothed = apply_filter(&phi, &plan)?;
            save_lfn_path(&smoothed, &out)?;
            let p = plan.params();
            say!(
                "wrote {} (eps {} takes {}-Lipschitz inputs to {}-Lipschitz; \
                 {} chain slopes, support radius {:.3})",
                out.display(),
                p.epsilon,
                p.c,
                p.c_prime,
                p.chain.len(),
                p.support_radius
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Encode {
            s,
            input,
            grid,
            eps,
            out,
        } => {
            let carrier = match input {
                Some(path) => load_lfn_path(&path)?,
                None => SampledFunction::constant(parse_grid(&grid)?, 0.5)?,
            };
            let layout = BumpLayout::reference(carrier.grid(), eps)?;
            let encoded = multibump_encode(&carrier, &s, &layout, eps)?;
            let mut sink = std::io::BufWriter::new(std::fs::File::create(&out)?);
            save_lfn_with_comments(&encoded, &[layout.to_comment()], &mut sink)?;
            say!(
                "wrote {} ({} anchors, payload {:?})",
                out.display(),
                layout.anchor_count(),
                s
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Decode { input } => {
            let doc = load_lfn_document_path(&input)?;
            let comment = doc
                .comments
                .iter()
                .find(|line| line.trim_start_matches('#').trim_start().starts_with("layout:"))
                .ok_or_else(|| {
                    Error::Format("no layout comment in the input; encode wrote one".into())
                })?;
            let layout = BumpLayout::from_comment(doc.function.grid(), comment)?;
            let payload = multibump_decode(&doc.function, &layout)?;
            for (k, v) in payload.iter().enumerate() {
                say!("s[{k}] = {v}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Perturb {
            input,
            eps,
            c,
            cprime,
            out,
        } => {
            let phi = load_lfn_path(&input)?;
            let (psi, delta) = break_invariance(&phi, eps, c, cprime)?;
            let origin = phi.grid().origin_index();
            let modulus = local_modulus(&psi, origin, delta)?;
            save_lfn_path(&psi, &out)?;
            say!(
                "wrote {} (spike radius {delta}, origin modulus {modulus})",
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Section { action, out } => {
            let (act, grid, p) = match action.as_str() {
                "circle" => {
                    let grid = GridSpec::make_grid(1, GridKind::Torus { period: 4.0 }, 64)?;
                    (TorusAction::from_integer(vec![vec![1]], 4.0)?, grid, 10usize)
                }
                "plane" => {
                    let grid = GridSpec::make_grid(2, GridKind::Torus { period: 4.0 }, 32)?;
                    let p = grid.flat_index(&[8, 8]);
                    (
                        TorusAction::from_integer(vec![vec![1, 0], vec![0, 0]], 4.0)?,
                        grid,
                        p,
                    )
                }
                other => {
                    return Err(Error::Parameter(format!(
                        "unknown action {other:?}; use circle or plane"
                    )))
                }
            };
            let audit = build_local_section(&act, &grid, p, 1.0, 18, None)?;
            let csv = audit_csv(&audit.rows);
            match out {
                Some(path) => std::fs::write(&path, &csv)?,
                None => print!("{csv}"),
            }
            if audit.all_pass() {
                say!("section audit: all {} rows pass", audit.rows.len());
                Ok(ExitCode::SUCCESS)
            } else {
                for row in audit.rows.iter().filter(|r| !r.status) {
                    eprintln!("failed: {} measured {} vs {}", row.name, row.measured, row.tolerance);
                }
                Ok(ExitCode::from(1))
            }
        }
        Command::Verify { seed, out } => {
            let rows = verify::run_suite(seed)?;
            verify::write_report(&rows, &out)?;
            let failures: Vec<_> = rows.iter().filter(|r| !r.status).collect();
            say!(
                "{} properties, {} failed; report at {}",
                rows.len(),
                failures.len(),
                out.display()
            );
            if failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for row in &failures {
                    eprintln!(
                        "FAIL {} measured {} tolerance {} ({})",
                        row.id, row.measured, row.tolerance, row.witness
                    );
                }
                Ok(ExitCode::from(1))
            }
        }
        Command::VerifyOne { property, input, c } => {
            let phi = load_lfn_path(&input)?;
            match property.as_str() {
                "lipschitz" => match certify_lipschitz(&phi, c, 1e-9) {
                    Ok(measured) => {
                        say!("lipschitz: constant {measured} <= {c} + 1e-9");
                        Ok(ExitCode::SUCCESS)
                    }
                    Err(Error::NotLipschitz { measured, .. }) => {
                        eprintln!("lipschitz: constant {measured} exceeds {c} + 1e-9");
                        Ok(ExitCode::from(1))
                    }
                    Err(other) => Err(other),
                },
                "range" => {
                    if phi.range_clamped() {
                        say!("range: all values in [0, 1]");
                        Ok(ExitCode::SUCCESS)
                    } else {
                        eprintln!("range: values escape [0, 1]");
                        Ok(ExitCode::from(1))
                    }
                }
                other => Err(Error::Parameter(format!(
                    "unknown property {other:?}; use lipschitz or range"
                ))),
            }
        }
    }
}
