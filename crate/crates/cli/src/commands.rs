use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use snack_core::eval::{labeling_curve, write_curve_csv, CurveConfig};
use snack_core::io::{
    fmt_f64, load_embedding, load_features, load_ids, load_kernel, load_labels, load_triplets,
    save_embedding, save_kernel, save_triplets,
};
use snack_core::kernels::{assignment_kernel, euclidean_kernel, load_token_lists, load_token_vectors};
use snack_core::optimize::embed;
use snack_core::triplets::{expand_selection, sample_from_labels, split, violation_fraction};
use snack_core::{IdIndex, Lambda, TripletSet};
use snack_service::{AppState, Dataset, DEFAULT_DATASET};

use crate::{Command, EmbedArgs, EmbedCmd, EvalCmd, KernelCmd, SampleCmd, ServeCmd};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] snack_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn run(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Kernel(cmd) => kernel(cmd),
        Command::Embed(cmd) => embed_cmd(cmd, stdout),
        Command::Sample(cmd) => sample(cmd),
        Command::Eval(cmd) => eval(cmd, stdout),
        Command::Serve(cmd) => serve(cmd),
    }
}

fn kernel(cmd: KernelCmd) -> Result<()> {
    match cmd {
        KernelCmd::Euclidean { features, out } => {
            let k = euclidean_kernel(&load_features(&features)?);
            save_kernel(&k, &[], &out)?;
        }
        KernelCmd::Assignment {
            tokens,
            vectors,
            out,
        } => {
            let lists = load_token_lists(&tokens)?;
            let table = load_token_vectors(&vectors)?;
            let ak = assignment_kernel(&lists, &table)?;
            let note = format!(
                "assignment kernel: distance = -(matching weight) - shift, shift = {}",
                fmt_f64(ak.shift)
            );
            save_kernel(&ak.kernel, &[note], &out)?;
        }
    }
    Ok(())
}

/// λ from the flag; without triplets only 0 (or `auto`, which resolves to 0)
/// is meaningful.
fn lambda_for(args: &EmbedArgs, have_triplets: bool) -> Result<Lambda> {
    let lambda = match &args.lambda {
        Some(s) => s.parse::<Lambda>()?,
        None if have_triplets => Lambda::Auto,
        None => Lambda::Fixed(0.0),
    };
    if !have_triplets {
        if let Lambda::Fixed(l) = lambda {
            if l > 0.0 {
                return Err(CliError::Usage(format!(
                    "--lambda {l} needs --triplets; a pure kernel embedding uses --lambda 0"
                )));
            }
        }
    }
    Ok(lambda)
}

fn embed_cmd(cmd: EmbedCmd, stdout: &mut dyn Write) -> Result<()> {
    let lambda = lambda_for(&cmd.embed, cmd.triplets.is_some())?;
    let cfg = cmd.embed.config(lambda);
    cfg.validate()?;
    let k = load_kernel(&cmd.kernel)?;
    let ids = IdIndex::new(k.ids().to_vec())?;
    let t = match &cmd.triplets {
        Some(path) => load_triplets(path, &ids)?,
        None => TripletSet::default(),
    };
    let (y, trace) = embed(&k, &t, &cfg)?;
    save_embedding(&y, &cmd.out)?;
    if let Some(path) = &cmd.trace {
        trace.save(path)?;
    }
    writeln!(stdout, "lambda {:?}", trace.lambda).map_err(io_err(Path::new("<stdout>")))?;
    Ok(())
}

/// One screen of the selection log.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Screen {
    reference: String,
    selected: Vec<String>,
    shown: Vec<String>,
}

fn sample(cmd: SampleCmd) -> Result<()> {
    match cmd {
        SampleCmd::Labels {
            labels,
            ids,
            n,
            cap,
            seed,
            out,
        } => {
            let index = load_ids(ids.as_deref().unwrap_or(&labels))?;
            let labels = load_labels(&labels, &index)?;
            let t = sample_from_labels(&labels, n, cap, seed)?;
            save_triplets(&t, &index, &out)?;
        }
        SampleCmd::Screens { log, ids, out } => {
            let text = std::fs::read_to_string(&log).map_err(io_err(&log))?;
            let screens: Vec<Screen> =
                serde_json::from_str(&text).map_err(|source| CliError::Json {
                    path: log.clone(),
                    source,
                })?;
            let index = match &ids {
                Some(path) => load_ids(path)?,
                None => {
                    // ids in order of first appearance in the log
                    let mut seen = Vec::new();
                    for s in &screens {
                        for id in std::iter::once(&s.reference).chain(&s.shown).chain(&s.selected) {
                            if !seen.contains(id) {
                                seen.push(id.clone());
                            }
                        }
                    }
                    IdIndex::new(seen)?
                }
            };
            let resolve = |id: &str| {
                index
                    .index_of(id)
                    .ok_or_else(|| snack_core::Error::UnknownId(id.to_string()))
            };
            let mut t = TripletSet::default();
            for s in &screens {
                let reference = resolve(&s.reference)?;
                let selected = s.selected.iter().map(|x| resolve(x)).collect::<std::result::Result<Vec<_>, _>>()?;
                let shown = s.shown.iter().map(|x| resolve(x)).collect::<std::result::Result<Vec<_>, _>>()?;
                t.extend(&expand_selection(reference, &selected, &shown)?);
            }
            save_triplets(&t, &index, &out)?;
        }
    }
    Ok(())
}

fn output(path: &Option<PathBuf>, stdout: &mut dyn Write, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut file = BufWriter::new(File::create(p).map_err(io_err(p))?);
            write(&mut file).and_then(|_| file.flush()).map_err(io_err(p))
        }
        None => write(stdout).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn eval(cmd: EvalCmd, stdout: &mut dyn Write) -> Result<()> {
    match cmd {
        EvalCmd::TripletError {
            embedding,
            triplets,
        } => {
            let y = load_embedding(&embedding)?;
            let ids = IdIndex::new(y.ids.clone())?;
            let t = load_triplets(&triplets, &ids)?;
            let err = violation_fraction(y.coords.view(), &t)?;
            writeln!(stdout, "{err:?}").map_err(io_err(Path::new("<stdout>")))?;
        }
        EvalCmd::Labeling {
            kernel,
            labels,
            n_grid,
            seeds,
            cap,
            restarts,
            in_order,
            embed,
            out,
        } => {
            let lambda = lambda_for(&embed, true)?;
            let cfg = embed.config(lambda);
            let k = load_kernel(&kernel)?;
            let index = IdIndex::new(k.ids().to_vec())?;
            let labels = load_labels(&labels, &index)?;
            let curve = CurveConfig {
                n_values: n_grid,
                runs: seeds,
                seed: embed.seed,
                cap,
                restarts,
                shuffle: !in_order,
            };
            let points = labeling_curve(&k, &labels, &cfg, &curve)?;
            output(&out, stdout, |w| write_curve_csv(&points, w))?;
        }
        EvalCmd::LambdaSweep {
            kernel,
            triplets,
            grid,
            holdout,
            embed: args,
            out,
        } => {
            if let Some(bad) = grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
                return Err(CliError::Usage(format!("grid value {bad} outside [0, 1]")));
            }
            let k = load_kernel(&kernel)?;
            let index = IdIndex::new(k.ids().to_vec())?;
            let t = load_triplets(&triplets, &index)?;
            let (train, test) = split(&t, holdout, args.seed)?;
            if train.is_empty() {
                return Err(CliError::Usage("holdout leaves no training triplets".into()));
            }
            let mut rows = Vec::with_capacity(grid.len());
            for &l in &grid {
                let (y, _) = embed(&k, &train, &args.config(Lambda::Fixed(l)))?;
                rows.push((l, violation_fraction(y.coords.view(), &test)?));
            }
            output(&out, stdout, |w| {
                writeln!(w, "lambda,holdout_error")?;
                for (l, e) in &rows {
                    writeln!(w, "{},{}", fmt_f64(*l), fmt_f64(*e))?;
                }
                Ok(())
            })?;
        }
    }
    Ok(())
}

fn serve(cmd: ServeCmd) -> Result<()> {
    let kernel = match (&cmd.kernel, &cmd.features) {
        (Some(k), _) => load_kernel(k)?,
        (None, Some(f)) => euclidean_kernel(&load_features(f)?),
        (None, None) => return Err(CliError::Usage("serve needs --features or --kernel".into())),
    };
    if let Some(dir) = &cmd.static_dir {
        if !dir.is_dir() {
            return Err(CliError::Usage(format!("{}: not a directory", dir.display())));
        }
    }
    let state = Arc::new(AppState::new([Dataset::new(DEFAULT_DATASET, kernel)]));
    let addr = format!("{}:{}", cmd.host, cmd.port);
    let runtime = tokio::runtime::Runtime::new().map_err(io_err(Path::new("<runtime>")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(io_err(Path::new(&addr)))?;
        eprintln!("listening on http://{addr}");
        snack_service::serve(listener, state, cmd.static_dir)
            .await
            .map_err(io_err(Path::new(&addr)))
    })
}
