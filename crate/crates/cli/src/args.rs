use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::report::Format;

#[derive(Debug, Parser)]
#[command(name = "wignerlab", version, about = "Moments of functionals of semicircular sequences and their limits")]
#[command(allow_negative_numbers = true, propagate_version = true)]
pub struct Cli {
    #[arg(long, value_enum, default_value = "csv", global = true)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Worker threads (falls back to WIGNERLAB_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tchebycheff and Hermite polynomials.
    #[command(subcommand)]
    Poly(PolyCmd),
    /// Contraction vectors of a block profile.
    Contractions(ContractionsArgs),
    /// Non-crossing pairings and partitions.
    Nc(NcArgs),
    /// Free probability calculators.
    #[command(subcommand)]
    Free(FreeCmd),
    /// Exact lattice moments and limit moments.
    #[command(subcommand)]
    Moment(MomentCmd),
    /// Central limit theorem constants.
    #[command(subcommand)]
    Clt(CltCmd),
    /// Karamata ratio of a power-law partial sum.
    Karamata(KaramataArgs),
    /// Scaled moments along a grid of n against the non-central limit.
    Converge(ConvergeArgs),
    /// Limit kernels and their operators.
    #[command(subcommand)]
    Kernel(KernelCmd),
    /// Random matrix and sequence simulators.
    #[command(subcommand)]
    Simulate(SimulateCmd),
}

#[derive(Debug, Subcommand)]
pub enum PolyCmd {
    /// Value of the degree-k basis polynomial at x.
    Eval {
        #[arg(long, default_value = "tcheb")]
        basis: String,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        x: f64,
    },
    /// Basis coefficients of a polynomial given by its monomial coefficients.
    Decompose {
        #[arg(long, default_value = "tcheb")]
        basis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        coeffs: Vec<f64>,
    },
}

#[derive(Debug, Args)]
pub struct ContractionsArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub q: Vec<usize>,
    #[arg(long)]
    pub scalar_only: bool,
    /// Largest accepted sum of block orders.
    #[arg(long, default_value_t = wignerlab::combinat::DEFAULT_DOT_BOUND)]
    pub bound: usize,
}

#[derive(Debug, Args)]
pub struct NcArgs {
    #[arg(long, default_value = "pairing")]
    pub kind: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub count_only: bool,
}

#[derive(Debug, Subcommand)]
pub enum FreeCmd {
    /// Joint moment of a semicircular family from its covariance matrix.
    Wick {
        /// CSV file holding the covariance matrix.
        #[arg(long)]
        gamma: PathBuf,
        /// 1-based indices into the family.
        #[arg(long, value_delimiter = ',', required = true)]
        word: Vec<usize>,
    },
    /// Moments from free cumulants.
    Moments {
        #[arg(long, value_delimiter = ',', required = true)]
        cumulants: Vec<f64>,
        #[arg(long)]
        n: usize,
    },
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    #[arg(long, default_value = "mc")]
    pub method: String,
    #[arg(long, default_value = "1e6", value_parser = parse_count)]
    pub samples: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "importance")]
    pub sampler: String,
    /// Tanh-sinh refinement level for the quadrature method.
    #[arg(long, default_value_t = wignerlab::moments::DEFAULT_QUAD_LEVEL)]
    pub level: u32,
}

#[derive(Debug, Subcommand)]
pub enum MomentCmd {
    /// Exact lattice sum of a joint moment.
    Exact {
        #[arg(long, value_delimiter = ',', required = true)]
        q: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
        #[arg(long, value_parser = parse_count)]
        n: u64,
        #[arg(long)]
        rho: String,
        #[arg(long, default_value = "1e9", value_parser = parse_count)]
        budget: u64,
    },
    /// Joint moment of the limit process.
    Limit {
        #[arg(long)]
        q: usize,
        #[arg(long = "H")]
        h: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,1")]
        t: Vec<f64>,
        #[command(flatten)]
        mc: McArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum CltCmd {
    /// Limit variance of the central limit theorem.
    Variance {
        #[arg(long, value_delimiter = ',', required = true)]
        coeffs: Vec<f64>,
        #[arg(long, default_value = "tcheb")]
        basis: String,
        #[arg(long)]
        rho: String,
        #[arg(long, default_value = "1e6", value_parser = parse_count)]
        truncation: u64,
    },
}

#[derive(Debug, Args)]
pub struct KaramataArgs {
    #[arg(long)]
    pub q: usize,
    #[arg(long = "D")]
    pub d: f64,
    #[arg(long, value_parser = parse_count)]
    pub n: u64,
    #[arg(long = "L", default_value = "const")]
    pub l: String,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[arg(long)]
    pub q: usize,
    #[arg(long = "D")]
    pub d: f64,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    #[arg(long, value_delimiter = ',', value_parser = parse_count, required = true)]
    pub n_grid: Vec<u64>,
    #[arg(long = "L", default_value = "const")]
    pub l: String,
    #[arg(long, default_value = "1e9", value_parser = parse_count)]
    pub budget: u64,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OperatorArgs {
    #[arg(long = "H")]
    pub h: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = wignerlab::kernels::DEFAULT_GRID)]
    pub grid: usize,
    /// dual or space.
    #[arg(long, default_value = "dual")]
    pub operator: String,
    #[arg(long, default_value = "auto")]
    pub solver: String,
}

#[derive(Debug, Subcommand)]
pub enum KernelCmd {
    /// Kernel value at one point of the space variables.
    Eval {
        #[arg(long)]
        q: usize,
        #[arg(long = "H")]
        h: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
    },
    /// Squared L2 norm of the kernel on a grid.
    Norm {
        #[arg(long)]
        q: usize,
        #[arg(long = "H")]
        h: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 2048)]
        grid: usize,
    },
    /// Free cumulants of the Rosenblatt-type limit, by trace and by spectrum.
    Cumulants {
        #[command(flatten)]
        op: OperatorArgs,
        #[arg(long, default_value_t = 6)]
        pmax: usize,
    },
    /// Moments of the limit at time t from its free cumulants.
    Moments {
        #[command(flatten)]
        op: OperatorArgs,
        #[arg(long, default_value_t = 4)]
        nmax: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum SimulateCmd {
    /// Moment of a polynomial in matrix Brownian motion.
    Wigner {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// Monomial coefficients.
        #[arg(long, value_delimiter = ',', default_value = "0,0,1")]
        poly: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Alternating centred products over consecutive increments.
    Freeness {
        #[arg(long)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        times: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Monomial coefficients of every factor.
        #[arg(long, value_delimiter = ',', default_value = "0,0,1")]
        poly: Vec<f64>,
        /// Number of alternating factors.
        #[arg(long, default_value_t = 4)]
        factors: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Empirical moments of normalised sums against their limits.
    Limits {
        #[arg(long, default_value = "free")]
        kind: String,
        /// Single basis element of this degree (ignored with --coeffs).
        #[arg(long)]
        q: Option<usize>,
        /// Basis coefficients of Q.
        #[arg(long, value_delimiter = ',')]
        coeffs: Option<Vec<f64>>,
        /// Defaults to Tchebycheff for free runs and Hermite for classical ones.
        #[arg(long)]
        basis: Option<String>,
        #[arg(long)]
        rho: String,
        #[arg(long, default_value = "1000", value_parser = parse_count)]
        ntime: u64,
        #[arg(long)]
        matrix_n: Option<usize>,
        #[arg(long, default_value_t = 50)]
        reps: usize,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        t: Vec<f64>,
        #[arg(long)]
        regime: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Non-negative integer, also accepting exact scientific forms like `1e6`.
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err(format!("`{s}` is not a non-negative integer")),
    }
}

/// Splices the contents of every `--args-file PATH` into `argv`. Each
/// non-empty line holds one flag, optionally followed by its value; lines
/// starting with `#` are comments.
pub fn expand_args_files(argv: Vec<String>) -> std::io::Result<Vec<String>> {
    let mut out = Vec::with_capacity(argv.len());
    let mut it = argv.into_iter();
    while let Some(arg) = it.next() {
        let path = if arg == "--args-file" {
            match it.next() {
                Some(p) => p,
                None => {
                    out.push(arg);
                    continue;
                }
            }
        } else if let Some(p) = arg.strip_prefix("--args-file=") {
            p.to_string()
        } else {
            out.push(arg);
            continue;
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("cannot read args file {path}: {e}")))?;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once(char::is_whitespace) {
                Some((flag, value)) => {
                    out.push(flag.to_string());
                    out.push(value.trim().to_string());
                }
                None => out.push(line.to_string()),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(parse_count("1000"), Ok(1000));
        assert_eq!(parse_count("1e5"), Ok(100_000));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
    }

    #[test]
    fn args_file_is_spliced() {
        let dir = std::env::temp_dir().join(format!("wignerlab-args-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("args.txt");
        std::fs::write(&path, "# comment\n--basis tcheb\n\n--k 3\n--x  2\n").unwrap();
        let argv: Vec<String> =
            ["wignerlab", "poly", "eval", "--args-file", path.to_str().unwrap()].iter().map(|s| s.to_string()).collect();
        let got = expand_args_files(argv).unwrap();
        assert_eq!(got, ["wignerlab", "poly", "eval", "--basis", "tcheb", "--k", "3", "--x", "2"]);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn definitions_are_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
