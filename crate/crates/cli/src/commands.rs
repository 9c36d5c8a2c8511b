//! Subcommand implementations. Each one validates everything it can before
//! touching data, then runs and writes results under the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use compresslab::distill::{train_student, DistillConfig};
use compresslab::nn::{
    load_network, parse_arch, save_network, train, Network, TrainConfig, TrainReport,
};
use compresslab::pipeline::{evaluate_top1, kd_then_prune, PipelineSpec, SweepSpec};
use compresslab::pruning::{prune, PruneConfig, PruneStrategy};
use compresslab::report::{
    curve, emit_csv, emit_json, parse_csv, parse_json, CurveField, ReportBundle,
};

use crate::args::{DistillArgs, EvalArgs, PipelineArgs, PruneArgs, ReportArgs, TrainArgs};
use crate::config;
use crate::data::{self, require_file};
use crate::CliError;

fn ensure_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", out.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(format!("serialize: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub fn train_cmd(args: &TrainArgs, seed: u64, out: &Path) -> Result<(), CliError> {
    // validation phase
    let (input_shape, specs) = parse_arch(&args.arch).map_err(CliError::validation_from)?;
    let cfg = TrainConfig::new(
        args.epochs,
        args.batch_size,
        args.lr,
        args.momentum,
        seed,
        !args.no_shuffle,
    )
    .map_err(CliError::validation_from)?;
    data::validate(&args.data)?;

    // run phase
    let resolved = data::load(&args.data, seed)?;
    let mut net = Network::init(&input_shape, &specs, seed).map_err(CliError::runtime_from)?;
    log::info!(
        "training {} ({} params) on {} examples",
        args.arch,
        net.param_count(),
        resolved.train.len()
    );
    let report = train(&mut net, &resolved.train, &cfg).map_err(CliError::runtime_from)?;
    let val_accuracy = evaluate_top1(&net, &resolved.val).map_err(CliError::runtime_from)?;

    ensure_out(out)?;
    let model_path = out.join("model.nncm");
    save_network(&net, &model_path).map_err(CliError::runtime_from)?;
    #[derive(serde::Serialize)]
    struct TrainOutput {
        arch: String,
        params: usize,
        config: String,
        report: TrainReport,
        validation_accuracy: f64,
    }
    let mut echo = resolved.echo.clone();
    let _ = writeln!(echo, "arch = {}", args.arch);
    let _ = writeln!(echo, "epochs = {}", args.epochs);
    let _ = writeln!(echo, "batch_size = {}", args.batch_size);
    let _ = writeln!(echo, "lr = {}", args.lr);
    let _ = writeln!(echo, "momentum = {}", args.momentum);
    let _ = writeln!(echo, "seed = {seed}");
    write_json(
        &out.join("train_report.json"),
        &TrainOutput {
            arch: args.arch.clone(),
            params: net.param_count(),
            config: echo,
            report,
            validation_accuracy: val_accuracy,
        },
    )?;
    log::info!(
        "saved {} (validation top-1 {:.4})",
        model_path.display(),
        val_accuracy
    );
    Ok(())
}

pub fn prune_cmd(args: &PruneArgs, seed: u64, out: &Path) -> Result<(), CliError> {
    // validation phase
    require_file(&args.model)?;
    let strategy: PruneStrategy = args.strategy.parse().map_err(CliError::validation_from)?;
    let fine_tune = if args.fine_tune_epochs > 0 {
        if args.no_data {
            return Err(CliError::validation(
                "--fine-tune-epochs needs a dataset; drop --no-data",
            ));
        }
        Some(
            TrainConfig::new(
                args.fine_tune_epochs,
                args.batch_size,
                args.lr,
                args.momentum,
                seed,
                true,
            )
            .map_err(CliError::validation_from)?,
        )
    } else {
        None
    };
    let cfg = PruneConfig {
        strategy,
        fraction: args.fraction,
        seed,
        cascade: args.cascade,
        fine_tune,
    };
    cfg.validate().map_err(CliError::validation_from)?;
    if !args.no_data {
        data::validate(&args.data)?;
    }

    // run phase
    let net = load_network(&args.model).map_err(CliError::runtime_from)?;
    let resolved = if args.no_data {
        None
    } else {
        Some(data::load(&args.data, seed)?)
    };
    let before = resolved
        .as_ref()
        .map(|d| evaluate_top1(&net, &d.val))
        .transpose()
        .map_err(CliError::runtime_from)?;
    let outcome =
        prune(&net, &cfg, resolved.as_ref().map(|d| &d.train)).map_err(CliError::runtime_from)?;
    let after = resolved
        .as_ref()
        .map(|d| evaluate_top1(&outcome.masked_network, &d.val))
        .transpose()
        .map_err(CliError::runtime_from)?;

    ensure_out(out)?;
    save_network(&outcome.masked_network, &out.join("pruned.nncm"))
        .map_err(CliError::runtime_from)?;
    #[derive(serde::Serialize)]
    struct PruneOutput {
        strategy: String,
        fraction: f64,
        seed: u64,
        cascade: bool,
        fine_tune_epochs: usize,
        total_params: usize,
        effective_params: usize,
        cascaded_extra: usize,
        kept_fraction_per_layer: Vec<f64>,
        accuracy_before: Option<f64>,
        accuracy_after: Option<f64>,
    }
    write_json(
        &out.join("prune_summary.json"),
        &PruneOutput {
            strategy: strategy.name().into(),
            fraction: args.fraction,
            seed,
            cascade: args.cascade,
            fine_tune_epochs: args.fine_tune_epochs,
            total_params: net.param_count(),
            effective_params: outcome.effective_params,
            cascaded_extra: outcome.cascaded_extra,
            kept_fraction_per_layer: outcome.kept_fraction_per_layer.clone(),
            accuracy_before: before,
            accuracy_after: after,
        },
    )?;
    log::info!(
        "pruned to {} effective params ({} extra from cascade)",
        outcome.effective_params,
        outcome.cascaded_extra
    );
    Ok(())
}

pub fn distill_cmd(args: &DistillArgs, seed: u64, out: &Path) -> Result<(), CliError> {
    // validation phase
    require_file(&args.teacher)?;
    let (student_input, student_specs) =
        parse_arch(&args.student_arch).map_err(CliError::validation_from)?;
    let cfg = DistillConfig::new(
        args.temperature,
        args.alpha,
        TrainConfig::new(
            args.epochs,
            args.batch_size,
            args.lr,
            args.momentum,
            seed,
            true,
        )
        .map_err(CliError::validation_from)?,
    )
    .map_err(CliError::validation_from)?;
    data::validate(&args.data)?;

    // run phase
    let teacher = load_network(&args.teacher).map_err(CliError::runtime_from)?;
    if teacher.input_shape() != student_input.as_slice() {
        return Err(CliError::validation(format!(
            "student input shape {:?} does not match teacher {:?}",
            student_input,
            teacher.input_shape()
        )));
    }
    let resolved = data::load(&args.data, seed)?;
    let mut student =
        Network::init(&student_input, &student_specs, seed).map_err(CliError::runtime_from)?;
    let ratio =
        compresslab::distill::param_ratio(&student, &teacher).map_err(CliError::runtime_from)?;
    if ratio < compresslab::distill::RATIO_WARN_THRESHOLD {
        log::warn!(
            "student/teacher parameter ratio {:.1}% is below the recommended 20% floor",
            ratio * 100.0
        );
    }
    let report = train_student(&teacher, &mut student, &resolved.train, &resolved.val, &cfg)
        .map_err(CliError::runtime_from)?;
    let teacher_acc = evaluate_top1(&teacher, &resolved.val).map_err(CliError::runtime_from)?;
    let student_acc = evaluate_top1(&student, &resolved.val).map_err(CliError::runtime_from)?;

    ensure_out(out)?;
    save_network(&student, &out.join("student.nncm")).map_err(CliError::runtime_from)?;
    #[derive(serde::Serialize)]
    struct DistillOutput {
        student_arch: String,
        temperature: f64,
        alpha: f64,
        seed: u64,
        param_ratio: f64,
        ratio_warning: bool,
        teacher_accuracy: f64,
        student_accuracy: f64,
        report: TrainReport,
    }
    write_json(
        &out.join("distill_report.json"),
        &DistillOutput {
            student_arch: args.student_arch.clone(),
            temperature: args.temperature,
            alpha: args.alpha,
            seed,
            param_ratio: ratio,
            ratio_warning: ratio < compresslab::distill::RATIO_WARN_THRESHOLD,
            teacher_accuracy: teacher_acc,
            student_accuracy: student_acc,
            report,
        },
    )?;
    log::info!(
        "student top-1 {:.4} vs teacher {:.4} at {:.1}% of its parameters",
        student_acc,
        teacher_acc,
        ratio * 100.0
    );
    Ok(())
}

pub fn pipeline_cmd(
    args: &PipelineArgs,
    global_seed: u64,
    out: &Path,
    canonical: bool,
    default_data: &crate::args::DataArgs,
) -> Result<(), CliError> {
    // validation phase
    let file = match &args.config {
        Some(path) => config::load_file(path)?,
        None => config::PipelineFile::default(),
    };
    let mut data_args = args.data.clone();
    config::overlay_data(&file, &mut data_args, default_data);
    let cfg = config::resolve(args, file, global_seed)?;
    if let Some(p) = &cfg.teacher_model {
        require_file(p)?;
    }
    let teacher_parsed = cfg
        .teacher_arch
        .as_ref()
        .map(|a| parse_arch(a).map_err(CliError::validation_from))
        .transpose()?;
    let (_, student_specs) = parse_arch(&cfg.student_arch).map_err(CliError::validation_from)?;
    let strategies: Vec<PruneStrategy> = cfg
        .strategies
        .iter()
        .map(|s| s.parse().map_err(CliError::validation_from))
        .collect::<Result<_, _>>()?;
    let train_cfg = TrainConfig::new(
        cfg.distill_epochs,
        cfg.batch_size,
        cfg.learning_rate,
        cfg.momentum,
        cfg.seed,
        true,
    )
    .map_err(CliError::validation_from)?;
    let distill_cfg = DistillConfig::new(cfg.temperature, cfg.alpha, train_cfg)
        .map_err(CliError::validation_from)?;
    let fine_tune = if cfg.fine_tune_epochs > 0 {
        Some(
            TrainConfig::new(
                cfg.fine_tune_epochs,
                cfg.batch_size,
                cfg.fine_tune_lr,
                cfg.momentum,
                cfg.seed,
                true,
            )
            .map_err(CliError::validation_from)?,
        )
    } else {
        None
    };
    let sweep = SweepSpec {
        strategies,
        fractions: cfg.fractions.clone(),
        repeats: cfg.repeats,
        base_seed: cfg.seed,
        fine_tune,
        cascade: cfg.cascade,
    };
    sweep.validate().map_err(CliError::validation_from)?;
    data::validate(&data_args)?;

    // run phase
    let resolved = data::load(&data_args, cfg.seed)?;
    ensure_out(out)?;
    let teacher = match (&cfg.teacher_model, teacher_parsed) {
        (Some(path), _) => load_network(path).map_err(CliError::runtime_from)?,
        (None, Some((input_shape, specs))) => {
            let mut teacher =
                Network::init(&input_shape, &specs, cfg.seed).map_err(CliError::runtime_from)?;
            let tc = TrainConfig::new(
                cfg.teacher_epochs,
                cfg.batch_size,
                cfg.learning_rate,
                cfg.momentum,
                cfg.seed,
                true,
            )
            .map_err(CliError::validation_from)?;
            log::info!(
                "training teacher {} ({} params)",
                cfg.teacher_arch.as_deref().unwrap_or("?"),
                teacher.param_count()
            );
            train(&mut teacher, &resolved.train, &tc).map_err(CliError::runtime_from)?;
            save_network(&teacher, &out.join("teacher.nncm")).map_err(CliError::runtime_from)?;
            teacher
        }
        (None, None) => unreachable!("validated earlier"),
    };

    let spec = PipelineSpec {
        teacher,
        student_arch: student_specs,
        distill: distill_cfg,
        sweep,
    };
    let output =
        kd_then_prune(&spec, &resolved.train, &resolved.val).map_err(CliError::runtime_from)?;
    save_network(&output.student, &out.join("student.nncm")).map_err(CliError::runtime_from)?;

    let echo = format!("{}{}", cfg.echo(), resolved.echo);
    let mut bundle = ReportBundle::new(echo, output.records);
    if canonical {
        bundle = bundle.canonicalized();
    }
    emit_csv(&bundle, &out.join("records.csv")).map_err(CliError::runtime_from)?;
    emit_json(&bundle, &out.join("records.json")).map_err(CliError::runtime_from)?;
    log::info!(
        "pipeline done: {} records, student/teacher ratio {:.2}%",
        bundle.records.len(),
        output.param_ratio * 100.0
    );
    Ok(())
}

pub fn eval_cmd(args: &EvalArgs, seed: u64) -> Result<(), CliError> {
    require_file(&args.model)?;
    data::validate(&args.data)?;
    let net = load_network(&args.model).map_err(CliError::runtime_from)?;
    let accuracy = if args.full {
        let full = data::load_full(&args.data, seed)?;
        evaluate_top1(&net, &full).map_err(CliError::runtime_from)?
    } else {
        let resolved = data::load(&args.data, seed)?;
        evaluate_top1(&net, &resolved.val).map_err(CliError::runtime_from)?
    };
    println!("{accuracy}");
    Ok(())
}

pub fn report_cmd(args: &ReportArgs) -> Result<(), CliError> {
    require_file(&args.records)?;
    let strategy: PruneStrategy = args.strategy.parse().map_err(CliError::validation_from)?;
    let field: CurveField = args.field.parse().map_err(CliError::validation_from)?;
    let bundle = if args.records.extension().is_some_and(|e| e == "csv") {
        let records = parse_csv(&args.records).map_err(CliError::runtime_from)?;
        ReportBundle::new(format!("imported from {}", args.records.display()), records)
    } else {
        parse_json(&args.records).map_err(CliError::runtime_from)?
    };
    let series = curve(&bundle, strategy, field).map_err(CliError::runtime_from)?;
    println!("fraction,median_{}", args.field);
    for (fraction, value) in series {
        println!("{fraction},{value}");
    }
    Ok(())
}
