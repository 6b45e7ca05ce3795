use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use fourier_shapes::contour::default_samples;
use fourier_shapes::export::{save_raw_grid, svg_document, write_pgm, write_png};
use fourier_shapes::optimizer::{init_coefficients, run_optimization, TraceSink};
use fourier_shapes::oracle::{gradcheck_problem, gradcheck_raster, quadrature_winding, FdScheme, FiniteDiffConfig, GradcheckReport};
use fourier_shapes::raster::{polygonize, rasterize};
use fourier_shapes::regularizer::fundamental_and_harmonic_sums;
use fourier_shapes::{reg_loss, winding_number, CanvasSpec, Error, FourierCoefficients, RegularizerConfig, RunConfig};

#[derive(Parser)]
#[command(name = "fshape", version, about = "Fourier-series shapes: rasterize, inspect and optimize")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Pgm,
    Png,
    Raw,
    Svg,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Central,
    Central4,
}

#[derive(Subcommand)]
enum Cmd {
    /// Rasterize a coefficient file to PGM, PNG, raw float grid or SVG outline.
    Render {
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Inferred from the output extension when omitted.
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Square canvas side in pixels.
        #[arg(long, default_value_t = 224)]
        size: usize,
        #[arg(long)]
        samples: Option<usize>,
        /// Write raw winding numbers instead of the normalized mask (raw format only).
        #[arg(long)]
        unnormalized: bool,
        /// Polygon vertices for SVG output.
        #[arg(long, default_value_t = 1024)]
        vertices: usize,
    },
    /// Run an optimization described by a run-config file.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        /// JSON-lines trace destination.
        #[arg(long)]
        trace: PathBuf,
        /// Directory for coefficient checkpoints.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// Final coefficients destination.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Compare analytic gradients with central finite differences.
    ///
    /// With --config, checks the run's full objective at its initial
    /// coefficients (or --coeffs). Otherwise checks the rasterizer alone on
    /// a random upstream field.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        coeffs: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 5e-3)]
        band: f64,
        /// Stencil: two-point central or fourth-order central.
        #[arg(long, value_enum, default_value_t = SchemeArg::Central)]
        scheme: SchemeArg,
        /// Required fraction of agreeing parameters.
        #[arg(long, default_value_t = 0.99)]
        min_pass: f64,
        /// Print every parameter.
        #[arg(long)]
        verbose: bool,
    },
    /// Winding number of a point, with a high-resolution reference.
    Winding {
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["X", "Y"])]
        point: Vec<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Regularizer state and spectrum of a coefficient file.
    Inspect {
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.25)]
        gamma: f64,
    },
}

fn format_for(path: &Path, explicit: Option<Format>) -> Result<Format, Error> {
    if let Some(f) = explicit {
        return Ok(f);
    }
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("pgm") => Ok(Format::Pgm),
        Some("png") => Ok(Format::Png),
        Some("raw") | Some("wndr") | Some("bin") => Ok(Format::Raw),
        Some("svg") => Ok(Format::Svg),
        _ => Err(Error::Config(format!("cannot infer format from {}; pass --format", path.display()))),
    }
}

fn print_report(report: &GradcheckReport, verbose: bool) {
    for p in &report.params {
        if verbose || (!p.excluded && !p.agrees) {
            let tag = if p.excluded { "excluded" } else if p.agrees { "ok" } else { "MISMATCH" };
            println!("  param {:>3}: analytic {:+.9e}  numeric {:+.9e}  {tag}", p.index, p.analytic, p.numeric);
        }
    }
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.cmd {
        Cmd::Render { coeffs, out, format, size, samples, unnormalized, vertices } => {
            let c = FourierCoefficients::load(&coeffs)?;
            let format = format_for(&out, format)?;
            if let Format::Svg = format {
                let poly = polygonize(&c, vertices)?;
                let canvas = CanvasSpec::default();
                let doc = svg_document(&poly, canvas.x_range, canvas.y_range);
                std::fs::write(&out, doc).map_err(|e| format!("{}: {e}", out.display()))?;
                return Ok(true);
            }
            let canvas = CanvasSpec::square(size);
            let n = samples.unwrap_or_else(|| default_samples(c.order()));
            let (raw, mask) = rasterize(&c, &canvas, n)?;
            match format {
                Format::Pgm => write_pgm(&out, &mask)?,
                Format::Png => write_png(&out, &mask)?,
                Format::Raw => save_raw_grid(&out, if unnormalized { &raw } else { &mask })?,
                Format::Svg => unreachable!(),
            }
            Ok(true)
        }
        Cmd::Optimize { config, trace, checkpoints, out, seed, steps } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.optimizer.seed = s;
            }
            if let Some(s) = steps {
                cfg.optimizer.steps = s;
            }
            let mut problem = cfg.build_problem()?;
            let mut sink = TraceSink::to_file(&trace, checkpoints)?;
            let result = run_optimization(&mut problem, &cfg.optimizer, Some(&mut sink));
            let (t, ok) = match result {
                Ok(t) => (t, true),
                Err(f) => {
                    eprintln!("fshape: {}", f);
                    (f.trace, false)
                }
            };
            if let Some(path) = out {
                t.final_coefficients.save(&path)?;
            }
            println!("{}", serde_json::to_string(&t.summary())?);
            Ok(ok)
        }
        Cmd::Gradcheck { config, coeffs, size, samples, seed, h, band, scheme, min_pass, verbose } => {
            let scheme = match scheme {
                SchemeArg::Central => FdScheme::Central,
                SchemeArg::Central4 => FdScheme::Central4,
            };
            let fd = FiniteDiffConfig { h, scheme, kink_exclusion_band: band };
            let load = |order: Option<usize>| -> Result<Option<FourierCoefficients>, Error> {
                let Some(path) = &coeffs else { return Ok(None) };
                let c = FourierCoefficients::load(path)?;
                match order {
                    Some(k) if k != c.order() => {
                        Err(Error::Config(format!("{} holds K = {}, config has K = {k}", path.display(), c.order())))
                    }
                    _ => Ok(Some(c)),
                }
            };
            let report = match config {
                Some(path) => {
                    let mut cfg = RunConfig::load(&path)?;
                    cfg.optimizer.seed = seed;
                    let mut problem = cfg.build_problem()?;
                    let c = match load(Some(cfg.shape.order))? {
                        Some(c) => c,
                        None => init_coefficients(&cfg.optimizer, cfg.shape.order)?,
                    };
                    gradcheck_problem(&mut problem, &c, &fd)?
                }
                None => {
                    let c = load(None)?.ok_or("gradcheck needs --config or --coeffs")?;
                    let canvas = CanvasSpec::square(size);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let upstream: Vec<f64> = (0..canvas.pixel_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let n = samples.unwrap_or_else(|| default_samples(c.order()));
                    gradcheck_raster(&c, &canvas, n, &upstream, &fd)?
                }
            };
            print_report(&report, verbose);
            let checked = report.checked().max(1);
            let frac = report.passed() as f64 / checked as f64;
            let ok = frac >= min_pass;
            println!(
                "{} {}/{} parameters agree ({:.2}%), {} excluded near kinks",
                if ok { "PASS" } else { "FAIL" },
                report.passed(),
                report.checked(),
                100.0 * frac,
                report.excluded()
            );
            Ok(ok)
        }
        Cmd::Winding { coeffs, point, samples } => {
            let c = FourierCoefficients::load(&coeffs)?;
            let p = [point[0], point[1]];
            let n = samples.unwrap_or_else(|| default_samples(c.order()));
            let w = winding_number(&c, p, n)?;
            let reference = quadrature_winding(&c, p, 65536)?;
            println!("{}", json!({ "N": n, "winding": w, "reference": reference }));
            Ok(true)
        }
        Cmd::Inspect { coeffs, lambda, gamma } => {
            let c = FourierCoefficients::load(&coeffs)?;
            let cfg = RegularizerConfig { lambda, gamma, ..Default::default() };
            cfg.validate()?;
            let (s_fund, s_harm) = fundamental_and_harmonic_sums(&c);
            let (reg, _) = reg_loss(&c, &cfg);
            let amplitudes: Vec<_> = c.harmonics().map(|(k, a, b)| json!([k, a.hypot(b)])).collect();
            println!(
                "{}",
                json!({ "K": c.order(), "s_fund": s_fund, "s_harm": s_harm, "reg": reg, "amplitudes": amplitudes })
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("fshape: {e}");
            ExitCode::FAILURE
        }
    }
}
