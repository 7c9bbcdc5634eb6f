use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use earlystop::datagen::{
    additive_model, diagonal_design, diagonal_signal, gravity, linear_model, phillips,
    InverseProblemInstance, SignalKind, RNG_ID,
};
use earlystop::linalg::{DenseMatrix, DesignMatrix};
use earlystop::simulation::{
    aggregate, run, write_csv, EstimatorKind, Experiment, SimulationParameters, SimulationRecord,
};
use earlystop::{ConjugateGradients, Error, IterativeEstimator, Landweber, TruncatedSvd};

use crate::args::{
    BenchArgs, CompareArgs, CompareProblem, DatagenKind, EstimatorCommand, InverseArgs, InverseProblem, SingleRun,
    StudyRun,
};

#[derive(Debug)]
pub enum Failure {
    /// Rejected input; exit code 1.
    Validation(String),
    /// Failure while computing or writing; exit code 2.
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::InvalidSize(_) | Error::DimensionMismatch(_) | Error::ZeroMatrix => {
                Failure::Validation(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn header(seed: u64, generator: &str) -> Vec<(String, String)> {
    vec![
        ("seed".into(), seed.to_string()),
        ("rng-id".into(), RNG_ID.into()),
        ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ("generator".into(), generator.into()),
    ]
}

fn write_vectors(path: &Path, metadata: &[(String, String)], vectors: &[(&str, &[f64])]) -> Outcome {
    let mut out = create(path)?;
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}")?;
    }
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(["vector", "index", "value"])?;
    for (name, values) in vectors {
        for (i, v) in values.iter().enumerate() {
            csv.serialize((name, i, v))?;
        }
    }
    csv.flush()?;
    Ok(())
}

fn write_matrix(path: &Path, metadata: &[(String, String)], matrix: &DenseMatrix) -> Outcome {
    let mut out = create(path)?;
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}")?;
    }
    let mut csv = csv::WriterBuilder::new().flexible(true).from_writer(out);
    csv.write_record(["n", "p"])?;
    csv.serialize((matrix.rows(), matrix.cols()))?;
    for i in 0..matrix.rows() {
        csv.serialize(matrix.row(i))?;
    }
    csv.flush()?;
    Ok(())
}

fn inverse_instance_files(
    inst: &InverseProblemInstance,
    metadata: &[(String, String)],
    out: &Path,
    design_out: Option<&Path>,
) -> Outcome {
    let mut vectors: Vec<(&str, &[f64])> = vec![
        ("signal", &inst.true_signal),
        ("noise", &inst.noise),
        ("response", &inst.response),
    ];
    let diagonal;
    match inst.design.as_ref() {
        DesignMatrix::Diagonal(d) => {
            diagonal = d.clone();
            vectors.insert(0, ("singular_values", &diagonal));
            if design_out.is_some() {
                return Err(Failure::Validation(
                    "the diagonal design is written as the singular_values vector; drop --design-out".into(),
                ));
            }
        }
        DesignMatrix::Dense(m) => {
            if let Some(path) = design_out {
                write_matrix(path, metadata, m)?;
            }
        }
    }
    write_vectors(out, metadata, &vectors)
}

pub fn datagen(kind: DatagenKind) -> Outcome {
    match kind {
        DatagenKind::Diagonal {
            n,
            signal,
            delta,
            output,
        } => {
            let design = Arc::new(diagonal_design(n)?);
            let inst = InverseProblemInstance::generate(design, diagonal_signal(n, signal), delta, output.seed)?;
            let mut meta = header(output.seed, "diagonal");
            meta.extend([("n".into(), n.to_string()), ("signal".into(), signal.to_string()), ("delta".into(), delta.to_string())]);
            inverse_instance_files(&inst, &meta, &output.out, output.design_out.as_deref())
        }
        DatagenKind::Phillips { n, delta, output } => {
            let (design, signal) = phillips(n)?;
            let inst = InverseProblemInstance::generate(Arc::new(design), signal, delta, output.seed)?;
            let mut meta = header(output.seed, "phillips");
            meta.extend([("n".into(), n.to_string()), ("delta".into(), delta.to_string())]);
            inverse_instance_files(&inst, &meta, &output.out, output.design_out.as_deref())
        }
        DatagenKind::Gravity { n, depth, delta, output } => {
            let (design, signal) = gravity(n, depth)?;
            let inst = InverseProblemInstance::generate(Arc::new(design), signal, delta, output.seed)?;
            let mut meta = header(output.seed, "gravity");
            meta.extend([
                ("n".into(), n.to_string()),
                ("depth".into(), depth.to_string()),
                ("delta".into(), delta.to_string()),
            ]);
            inverse_instance_files(&inst, &meta, &output.out, output.design_out.as_deref())
        }
        DatagenKind::Linear {
            n,
            p,
            signal,
            sigma,
            output,
        } => {
            let beta = signal.coefficients(p)?;
            let inst = linear_model(n, &beta, sigma, output.seed)?;
            let mut meta = header(output.seed, "linear");
            meta.extend([
                ("n".into(), n.to_string()),
                ("p".into(), p.to_string()),
                ("signal".into(), signal.to_string()),
                ("sigma".into(), sigma.to_string()),
            ]);
            if let Some(path) = &output.design_out {
                write_matrix(path, &meta, &inst.covariates)?;
            }
            write_vectors(
                &output.out,
                &meta,
                &[
                    ("coefficients", &beta),
                    ("true_function", &inst.true_function_values),
                    ("noise", &inst.noise),
                    ("response", &inst.response),
                ],
            )
        }
        DatagenKind::Additive { kind, n, sigma, output } => {
            let inst = additive_model(kind, n, sigma, output.seed)?;
            let mut meta = header(output.seed, "additive");
            meta.extend([("kind".into(), kind.to_string()), ("n".into(), n.to_string()), ("sigma".into(), sigma.to_string())]);
            if let Some(path) = &output.design_out {
                write_matrix(path, &meta, &inst.covariates)?;
            }
            write_vectors(
                &output.out,
                &meta,
                &[
                    ("true_function", &inst.true_function_values),
                    ("noise", &inst.noise),
                    ("response", &inst.response),
                ],
            )
        }
    }
}

fn inverse_experiment(args: &InverseArgs) -> Result<(Experiment, usize), Failure> {
    let (design, signal) = match args.problem {
        InverseProblem::Diagonal => (diagonal_design(args.n)?, diagonal_signal(args.n, args.signal)),
        InverseProblem::Phillips => phillips(args.n)?,
        InverseProblem::Gravity => gravity(args.n, args.depth)?,
    };
    let max = args.max_iter.unwrap_or(args.n);
    Ok((
        Experiment::Inverse {
            design: Arc::new(design),
            true_signal: signal,
            noise_level: args.delta,
        },
        max,
    ))
}

/// Flags controlling how many replications run and where.
pub trait RunFlags {
    fn runs(&self) -> usize;
    fn cores(&self) -> usize;
    fn seed(&self) -> u64;
    fn oracles(&self) -> bool;
    fn timing(&self) -> bool;
}

impl RunFlags for SingleRun {
    fn runs(&self) -> usize {
        1
    }
    fn cores(&self) -> usize {
        1
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn oracles(&self) -> bool {
        true
    }
    fn timing(&self) -> bool {
        false
    }
}

impl RunFlags for StudyRun {
    fn runs(&self) -> usize {
        self.mc_runs
    }
    fn cores(&self) -> usize {
        self.cores
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn oracles(&self) -> bool {
        !self.no_oracles
    }
    fn timing(&self) -> bool {
        self.timing
    }
}

fn study<R: clap::Args + RunFlags>(cmd: &EstimatorCommand<R>) -> Result<(SimulationParameters, EstimatorKind, &R), Failure> {
    let (experiment, max, kappa, kind, run) = match cmd {
        EstimatorCommand::Tsvd { problem, run } => {
            let (e, max) = inverse_experiment(problem)?;
            (e, max, problem.kappa, EstimatorKind::TruncatedSvd, run)
        }
        EstimatorCommand::Landweber {
            problem,
            learning_rate,
            run,
        } => {
            let (e, max) = inverse_experiment(problem)?;
            let kind = EstimatorKind::Landweber {
                learning_rate: *learning_rate,
            };
            (e, max, problem.kappa, kind, run)
        }
        EstimatorCommand::Cg {
            problem,
            interpolate,
            threshold,
            run,
        } => {
            let (e, max) = inverse_experiment(problem)?;
            let kind = EstimatorKind::ConjugateGradients {
                interpolate: *interpolate,
                threshold: *threshold,
            };
            (e, max, problem.kappa, kind, run)
        }
        EstimatorCommand::Boost {
            n,
            p,
            signal,
            sigma,
            rule,
            kappa,
            max_iter,
            run,
        } => {
            let e = Experiment::Linear {
                n: *n,
                coefficients: signal.coefficients(*p)?,
                sigma: *sigma,
            };
            (e, *max_iter, *kappa, EstimatorKind::L2Boost { rule: *rule }, run)
        }
        EstimatorCommand::Tree {
            kind,
            n,
            sigma,
            kappa,
            interpolate,
            max_iter,
            test_size,
            min_samples_split,
            run,
        } => {
            let e = Experiment::Additive {
                kind: *kind,
                n: *n,
                sigma: *sigma,
                test_size: test_size.unwrap_or(*n),
            };
            let est = EstimatorKind::RegressionTree {
                interpolate: *interpolate,
                min_samples_split: *min_samples_split,
            };
            (e, max_iter.unwrap_or(*n), *kappa, est, run)
        }
    };
    let mut params = SimulationParameters::new(experiment, run.runs(), run.cores(), max, run.seed())?;
    if let Some(k) = kappa {
        params = params.with_critical_value(k)?;
    }
    params.oracles = run.oracles();
    params.timing = run.timing();
    Ok((params, kind, run))
}

fn summary_line(r: &SimulationRecord) -> String {
    let mut parts = vec![
        format!("estimator={}", r.estimator),
        format!("rule={}", r.stop_rule),
        format!("stop={}", r.stop_value),
        format!("reached={}", r.reached),
    ];
    let optional = [
        ("residual", r.residual_at_stop),
        ("weak_balanced_oracle", r.weak_balanced_oracle),
        ("strong_balanced_oracle", r.strong_balanced_oracle),
        ("weak_classical_oracle", r.weak_classical_oracle),
        ("strong_classical_oracle", r.strong_classical_oracle),
        ("relative_efficiency_weak", r.relative_efficiency_weak),
        ("relative_efficiency_strong", r.relative_efficiency_strong),
    ];
    parts.extend(optional.iter().filter_map(|(k, v)| v.map(|v| format!("{k}={v}"))));
    parts.join(" ")
}

pub fn estimate(cmd: EstimatorCommand<SingleRun>) -> Outcome {
    let (params, kind, _) = study(&cmd)?;
    let records = run(&params, &kind)?;
    let record = &records[0];
    if let Some(e) = &record.error {
        return Err(Failure::Runtime(e.clone()));
    }
    println!("{}", summary_line(record));
    Ok(())
}

fn write_study(path: &Path, params: &SimulationParameters, kind: &EstimatorKind, records: &[SimulationRecord]) -> Outcome {
    let mut out = create(path)?;
    write_csv(&mut out, &params.metadata(kind), records)?;
    out.flush()?;
    Ok(())
}

fn median_stop(records: &[SimulationRecord]) -> Option<f64> {
    aggregate(records)
        .into_iter()
        .find(|r| r.quantity == "stop_value")
        .map(|r| r.median)
}

pub fn replicate(cmd: EstimatorCommand<StudyRun>) -> Outcome {
    let (params, kind, flags) = study(&cmd)?;
    let records = run(&params, &kind)?;
    write_study(&flags.out, &params, &kind, &records)?;
    if let Some(path) = &flags.summary {
        let mut out = create(path)?;
        write_csv(&mut out, &params.metadata(&kind), &aggregate(&records))?;
        out.flush()?;
    }
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("warning: {failed} replications failed; see the error column");
    }
    println!(
        "wrote {} records to {} (median stop {})",
        records.len(),
        flags.out.display(),
        median_stop(&records).map_or("n/a".into(), |m| m.to_string())
    );
    Ok(())
}

pub fn compare(args: CompareArgs) -> Outcome {
    let (design, signal, name) = match args.problem {
        CompareProblem::Phillips => {
            let (d, s) = phillips(args.n)?;
            (d, s, "phillips")
        }
        CompareProblem::Gravity => {
            let (d, s) = gravity(args.n, earlystop::datagen::GRAVITY_DEFAULT_DEPTH)?;
            (d, s, "gravity")
        }
    };
    std::fs::create_dir_all(&args.out_dir)?;
    let experiment = Experiment::Inverse {
        design: Arc::new(design),
        true_signal: signal,
        noise_level: args.delta,
    };
    let mut params = SimulationParameters::new(experiment, args.mc_runs, args.cores, args.max_iter, args.seed)?;
    if let Some(k) = args.kappa {
        params = params.with_critical_value(k)?;
    }
    params.oracles = false;
    let mut all = Vec::new();
    for kind in [
        EstimatorKind::TruncatedSvd,
        EstimatorKind::Landweber { learning_rate: None },
        EstimatorKind::cg(),
    ] {
        let records = run(&params, &kind)?;
        let path = args.out_dir.join(format!("{name}_{}.csv", kind.name()));
        write_study(&path, &params, &kind, &records)?;
        let mut stops: Vec<f64> = records.iter().map(|r| r.stop_value).filter(|v| v.is_finite()).collect();
        stops.sort_by(f64::total_cmp);
        if let (Some(median), Some(max)) = (median_stop(&records), stops.last()) {
            println!("{name} {}: median stop {median}, max stop {max}", kind.name());
        }
        all.extend(records);
    }
    let mut out = create(&args.out_dir.join("summary.csv"))?;
    write_csv(&mut out, &params.metadata(&EstimatorKind::TruncatedSvd)[..1], &aggregate(&all))?;
    out.flush()?;
    Ok(())
}

/// Seconds for `iters` iterations of each estimator, without oracle tracking.
pub fn bench(args: BenchArgs) -> Outcome {
    if args.iters == 0 || args.n == 0 {
        return Err(Failure::Validation("n and iters must be positive".into()));
    }
    let mut problems: Vec<(String, DesignMatrix, Vec<f64>)> = vec![
        {
            let (d, s) = gravity(args.n, earlystop::datagen::GRAVITY_DEFAULT_DEPTH)?;
            ("gravity".into(), d, s)
        },
        {
            let (d, s) = phillips(args.n)?;
            ("phillips".into(), d, s)
        },
    ];
    for kind in [SignalKind::Smooth, SignalKind::Supersmooth, SignalKind::Rough] {
        problems.push((kind.to_string(), diagonal_design(args.n)?, diagonal_signal(args.n, kind)));
    }
    let mut rows = Vec::new();
    for (name, design, signal) in problems {
        let inst = InverseProblemInstance::generate(Arc::new(design), signal, args.delta, args.seed)?;
        let time = |f: &mut dyn FnMut() -> Result<(), Error>| -> Result<f64, Failure> {
            let start = Instant::now();
            f()?;
            Ok(start.elapsed().as_secs_f64())
        };
        let iters = args.iters;
        let design = inst.design.clone();
        let y = inst.response.clone();
        let tsvd = time(&mut || {
            let mut e = TruncatedSvd::new(design.clone(), y.clone(), None, None)?;
            e.iterate(iters);
            Ok(())
        })?;
        let landweber = time(&mut || {
            let mut e = Landweber::new(design.clone(), y.clone(), None, None, None)?
                .with_storage(earlystop::PathStorage::Latest)?;
            e.iterate(iters);
            Ok(())
        })?;
        let cg = time(&mut || {
            let mut e = ConjugateGradients::new(
                design.clone(),
                y.clone(),
                None,
                earlystop::conjugate_gradients::DEFAULT_COMPUTATION_THRESHOLD,
            )?
            .with_storage(earlystop::PathStorage::Latest)?;
            e.iterate(iters);
            Ok(())
        })?;
        rows.push((name, tsvd, landweber, cg));
    }
    match &args.out {
        Some(path) => {
            let mut out = create(path)?;
            writeln!(out, "# n={}\n# iterations={}", args.n, args.iters)?;
            let mut csv = csv::Writer::from_writer(out);
            csv.write_record(["data", "tsvd", "landweber", "cg"])?;
            for row in &rows {
                csv.serialize(row)?;
            }
            csv.flush()?;
        }
        None => {
            println!("seconds for {} iterations, n = {}", args.iters, args.n);
            println!("{:<12} {:>12} {:>12} {:>12}", "data", "tsvd", "landweber", "cg");
            for (name, a, b, c) in &rows {
                println!("{name:<12} {a:>12.3e} {b:>12.3e} {c:>12.3e}");
            }
        }
    }
    Ok(())
}
