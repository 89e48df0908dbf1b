//! `loss-curve`: fold one or more loss.csv logs into a downsampled CSV and
//! a self-contained SVG chart (raw and smoothed loss per input).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use lexforge_core::trainer::LogRecord;

use crate::commands::ensure_dir;
use crate::fail::{usage, CliResult, Failure};
use crate::manifest::RunManifest;
use crate::svg::{render_loss_chart, Series};

#[derive(Debug, Args)]
pub struct LossCurveArgs {
    /// One or more loss.csv files from pretrain/finetune runs.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory, or a path ending in .svg to name the chart
    /// directly (the CSV lands beside it).
    #[arg(long)]
    pub out: PathBuf,
    /// Maximum chart points kept per series; longer logs are strided down.
    #[arg(long, default_value_t = 512)]
    pub max_points: usize,
    /// Chart title.
    #[arg(long, default_value = "training loss")]
    pub title: String,
}

/// Parse a training CSV into (step, loss, ema_loss) rows, insisting on the
/// exact header the trainer writes.
fn parse_log(path: &Path) -> Result<Vec<(f64, f64, f64)>, Failure> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let fail = |line: usize, message: String| {
        Failure::Runtime(format!("{}:{}: {message}", path.display(), line + 1))
    };
    match lines.next() {
        Some((_, header)) if header == LogRecord::CSV_HEADER => {}
        Some((n, header)) => {
            return Err(fail(
                n,
                format!(
                    "expected header {:?}, found {header:?}",
                    LogRecord::CSV_HEADER
                ),
            ))
        }
        None => return Err(fail(0, "empty file".into())),
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(fail(n, format!("expected 5 fields, found {}", fields.len())));
        }
        let num = |i: usize| -> Result<f64, Failure> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| fail(n, format!("field {:?} is not a number", fields[i])))
        };
        rows.push((num(0)?, num(1)?, num(2)?));
    }
    if rows.is_empty() {
        return Err(fail(1, "no data rows".into()));
    }
    Ok(rows)
}

/// Keep at most `max_points` rows: every k-th row plus always the last, so
/// the end of training is never dropped.
fn downsample(rows: &[(f64, f64, f64)], max_points: usize) -> Vec<(f64, f64, f64)> {
    assert!(max_points >= 2, "need room for first and last point");
    if rows.len() <= max_points {
        return rows.to_vec();
    }
    let stride = rows.len().div_ceil(max_points);
    let mut out: Vec<(f64, f64, f64)> =
        rows.iter().step_by(stride).copied().collect();
    if out.last() != rows.last() {
        out.push(*rows.last().expect("rows checked non-empty"));
    }
    out
}

fn series_name(path: &Path, taken: &[Series]) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    // Several runs usually all log to "loss.csv"; fall back to the parent
    // directory name to keep legend entries distinguishable.
    if stem != "loss" {
        return stem;
    }
    let parent = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned());
    let name = match parent {
        Some(dir) if !dir.is_empty() => dir,
        _ => stem,
    };
    if taken.iter().any(|s| s.name == name) {
        format!("{name}#{}", taken.len())
    } else {
        name
    }
}

pub fn run(args: &LossCurveArgs) -> CliResult {
    if args.max_points < 2 {
        return Err(usage("--max-points must be at least 2"));
    }

    let mut series: Vec<Series> = Vec::new();
    for input in &args.inputs {
        let rows = downsample(&parse_log(input)?, args.max_points);
        let name = series_name(input, &series);
        series.push(Series {
            name,
            raw: rows.iter().map(|&(s, l, _)| (s, l)).collect(),
            ema: rows.iter().map(|&(s, _, e)| (s, e)).collect(),
        });
    }

    let (svg_path, csv_path, manifest_dir) =
        if args.out.extension().is_some_and(|e| e == "svg") {
            let dir = args
                .out
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or_else(|| Path::new("."))
                .to_path_buf();
            ensure_dir(&dir)?;
            (args.out.clone(), args.out.with_extension("csv"), dir)
        } else {
            ensure_dir(&args.out)?;
            (
                args.out.join("loss-curve.svg"),
                args.out.join("loss-curve.csv"),
                args.out.clone(),
            )
        };

    std::fs::write(&svg_path, render_loss_chart(&series, &args.title))?;

    let mut csv = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    writeln!(csv, "series,step,loss,ema_loss").map_err(|e| Failure::Runtime(e.to_string()))?;
    for s in &series {
        for (&(step, loss), &(_, ema)) in s.raw.iter().zip(&s.ema) {
            writeln!(csv, "{},{step},{loss},{ema}", s.name)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
        }
    }
    csv.flush()?;

    let mut manifest = RunManifest::new("loss-curve");
    for (i, input) in args.inputs.iter().enumerate() {
        manifest.add_input(&format!("log_{i}"), input);
    }
    manifest
        .config
        .insert("max_points".into(), args.max_points.to_string());
    manifest.config.insert("title".into(), args.title.clone());
    for path in [&svg_path, &csv_path] {
        let name = path
            .file_name()
            .expect("output paths end in a file name")
            .to_string_lossy()
            .into_owned();
        manifest.add_artifact(&manifest_dir, &name)?;
    }
    manifest.write(&manifest_dir)?;

    println!(
        "loss-curve: {} series charted to {} (points at {})",
        series.len(),
        svg_path.display(),
        csv_path.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsampling_keeps_first_and_last_rows() {
        let rows: Vec<(f64, f64, f64)> =
            (0..1000).map(|i| (i as f64, 1.0, 1.0)).collect();
        let kept = downsample(&rows, 512);
        assert!(kept.len() <= 513, "stride overshoot: {}", kept.len());
        assert_eq!(kept.first(), rows.first());
        assert_eq!(kept.last(), rows.last());
    }

    #[test]
    fn short_logs_are_kept_verbatim() {
        let rows = vec![(0.0, 2.0, 2.0), (1.0, 1.5, 1.8)];
        assert_eq!(downsample(&rows, 512), rows);
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "step,loss\n1,2\n").unwrap();
        let err = parse_log(&path).unwrap_err();
        assert!(err.message().contains("expected header"), "{}", err.message());
    }

    #[test]
    fn rows_parse_in_header_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        std::fs::write(
            &path,
            format!("{}\n1,4.5,4.5,0.0001,2048\n", LogRecord::CSV_HEADER),
        )
        .unwrap();
        assert_eq!(parse_log(&path).unwrap(), vec![(1.0, 4.5, 4.5)]);
    }
}
