use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::anyhow;
use regaze::audit::{
    check_gram_equivalence, check_view_uniformity, collect_server_views, compare_mul_simulator,
    compare_with_simulator, holdout_indices, pooled_plaintext, reports_to_csv, reports_to_table,
    run_benchmark, split_parties, BenchConfig, BenchReport, BenchSummary, HyperparamChoice,
    RunSeeds, TestReport, ViewRandomness, DEFAULT_ALPHA,
};
use regaze::eyegen::{generate_dataset, Dataset, EyeModelParams};
use regaze::kernels::{kernel_block, kernel_from_gram, kernel_rows, KernelConfig};
use regaze::protocol::{plaintext_gram, LabelVector};
use regaze::ring::{FixedPointCodec, RingElement, DEFAULT_FRAC_BITS};
use regaze::svr::{
    cross_validate, mean_angular_error, predict_rows, train, Angle, GazeModelPair, Grid,
    SvrHyperparams,
};
use regaze::transport::{
    run_alice, run_bob, run_server, run_session, session_id_from_seed, timeout_from_env,
    PartyInput, RandomnessSource, ServerOutput, SessionParams, TcpLink, TransportKind,
};
use regaze::{DenseMatrix, Error};

use crate::config::RunConfig;
use crate::{
    AuditArgs, BenchArgs, CommonArgs, CvArgs, GenArgs, KernelKind, PartyArgs, PartyRole,
    PredictArgs, RunLocalArgs, ServerArgs, SvrArgs, TransportArg,
};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_PROTOCOL: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

const DEFAULT_HOLDOUT: f64 = 0.2;

/// An error paired with the process exit code it maps to.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(msg: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_CONFIG,
            error: anyhow!("{msg}"),
        }
    }

    fn numerical(msg: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_NUMERICAL,
            error: anyhow!("{msg}"),
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_)
        | Error::GridEmpty
        | Error::TooFewSamples { .. }
        | Error::InsufficientTrials { .. }
        | Error::DimensionMismatch(_) => EXIT_CONFIG,
        Error::OutOfRange { .. } | Error::OverflowDetected(_) | Error::BadKernel(_) => {
            EXIT_NUMERICAL
        }
        Error::BadMagic(_)
        | Error::UnknownType(_)
        | Error::LengthMismatch(_)
        | Error::Truncated { .. }
        | Error::Malformed(_)
        | Error::Timeout(..)
        | Error::PeerError { .. }
        | Error::Protocol(_)
        | Error::ChannelClosed
        | Error::RoleConflict(_)
        | Error::EntropyUnavailable(_)
        | Error::Io(_) => EXIT_PROTOCOL,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            error: e.into(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

impl RunConfig {
    pub fn load_optional(path: Option<&Path>) -> Result<Self, String> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }
}

// ---------------------------------------------------------------------------
// shared helpers

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    if !path.exists() {
        return Err(Failure::config(format!(
            "dataset not found: {}",
            path.display()
        )));
    }
    Dataset::load(path).map_err(|e| Failure::config(format!("cannot load {}: {e}", path.display())))
}

fn required(flag: Option<PathBuf>, cfg: Option<&PathBuf>, what: &str) -> CliResult<PathBuf> {
    flag.or_else(|| cfg.cloned())
        .ok_or_else(|| Failure::config(format!("missing {what}")))
}

fn create_file(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text)
        .map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))
}

fn codec(frac_bits: Option<u32>, cfg: &RunConfig) -> CliResult<FixedPointCodec> {
    let f = frac_bits.or(cfg.frac_bits).unwrap_or(DEFAULT_FRAC_BITS);
    if f > 31 {
        return Err(Failure::config(format!(
            "frac_bits must be in 0..=31, got {f}"
        )));
    }
    Ok(FixedPointCodec::new(f))
}

fn timeout(common: &CommonArgs, cfg: &RunConfig) -> Duration {
    common
        .timeout_secs
        .or(cfg.timeout_secs)
        .map(Duration::from_secs)
        .unwrap_or_else(timeout_from_env)
}

fn holdout(flag: Option<f64>, cfg: &RunConfig) -> CliResult<f64> {
    let h = flag.or(cfg.holdout).unwrap_or(DEFAULT_HOLDOUT);
    if !(0.0..1.0).contains(&h) {
        return Err(Failure::config(format!(
            "holdout must be in [0, 1), got {h}"
        )));
    }
    Ok(h)
}

fn seeds(common: &CommonArgs, cfg: &RunConfig) -> (u64, RunSeeds) {
    let seed = common.seed.or(cfg.seed).unwrap_or(0);
    (seed, RunSeeds::derive(seed))
}

fn session_params(
    seeds: &RunSeeds,
    session_seed: Option<u64>,
    codec: FixedPointCodec,
    timeout: Duration,
) -> SessionParams {
    SessionParams {
        session_id: session_id_from_seed(session_seed.unwrap_or(seeds.session)),
        codec,
        timeout,
    }
}

fn party_input(data: Dataset, shuffle_seed: u64) -> PartyInput {
    PartyInput {
        samples: data.features,
        labels: data.labels,
        shuffle_seed,
    }
}

enum SvrChoice {
    Fixed(SvrHyperparams),
    Cv(Grid),
}

fn svr_choice(args: &SvrArgs, cfg: &RunConfig) -> CliResult<SvrChoice> {
    let s = &cfg.svr;
    if args.cv || s.cv == Some(true) {
        return Ok(SvrChoice::Cv(Grid::default_rbf()));
    }
    let kind = match (args.kernel, s.kernel.as_deref()) {
        (Some(k), _) => k,
        (None, None) | (None, Some("rbf")) => KernelKind::Rbf,
        (None, Some("linear")) => KernelKind::Linear,
        (None, Some("poly")) => KernelKind::Poly,
        (None, Some(other)) => {
            return Err(Failure::config(format!(
                "unknown kernel {other:?} (expected rbf, linear or poly)"
            )))
        }
    };
    let kernel = match kind {
        KernelKind::Rbf => KernelConfig::rbf(args.gamma.or(s.gamma).unwrap_or(1.0)),
        KernelKind::Linear => KernelConfig::Linear,
        KernelKind::Poly => KernelConfig::Polynomial {
            degree: args.degree.or(s.degree).unwrap_or(2),
            offset: args.offset.or(s.offset).unwrap_or(1.0),
        },
    };
    let hp = SvrHyperparams::new(
        args.c.or(s.c).unwrap_or(8.0),
        args.epsilon.or(s.epsilon).unwrap_or(0.005),
        kernel,
    );
    hp.validate()?;
    Ok(SvrChoice::Fixed(hp))
}

fn describe_kernel(k: &KernelConfig) -> String {
    match k {
        KernelConfig::Linear => "linear".into(),
        KernelConfig::Polynomial { degree, offset } => format!("poly(d={degree}, c0={offset})"),
        KernelConfig::Rbf { gamma } => format!("rbf(gamma={gamma})"),
    }
}

fn describe_hp(hp: &SvrHyperparams) -> String {
    format!(
        "{} C={} eps={}",
        describe_kernel(&hp.kernel),
        hp.c,
        hp.epsilon
    )
}

struct Fitted {
    models: GazeModelPair,
    hp: [SvrHyperparams; 2],
    pred: Vec<[f64; 2]>,
    train_secs: f64,
    predict_secs: f64,
}

/// Trains both angle models on `train_idx` and predicts `test_idx`.
fn fit(
    gram: &DenseMatrix,
    labels: &LabelVector,
    train_idx: &[usize],
    test_idx: &[usize],
    hp: [SvrHyperparams; 2],
) -> CliResult<Fitted> {
    let g_train = gram.select(train_idx, train_idx);
    let y = labels.select(train_idx);
    let mut pred = vec![[0.0; 2]; test_idx.len()];
    let mut train_secs = 0.0;
    let mut predict_secs = 0.0;
    let mut models = Vec::with_capacity(2);
    for angle in Angle::BOTH {
        let a = angle.index();
        let t = Instant::now();
        let k = kernel_from_gram(&g_train, &hp[a].kernel)?;
        let model = train(&k, &y.angle(a), &hp[a], angle)?;
        train_secs += t.elapsed().as_secs_f64();
        if !model.converged {
            eprintln!("warning: {} model hit the iteration cap", angle.name());
        }
        let t = Instant::now();
        let k_test = kernel_block(gram, test_idx, train_idx, &hp[a].kernel)?;
        for (dst, v) in pred.iter_mut().zip(predict_rows(&model, &k_test)?) {
            dst[a] = v;
        }
        predict_secs += t.elapsed().as_secs_f64();
        models.push(model);
    }
    let yaw_model = models.pop().expect("two models");
    let pitch_model = models.pop().expect("two models");
    Ok(Fitted {
        models: GazeModelPair {
            pitch_model,
            yaw_model,
        },
        hp,
        pred,
        train_secs,
        predict_secs,
    })
}

fn choose_hp(
    choice: &SvrChoice,
    gram: &DenseMatrix,
    labels: &LabelVector,
    train_idx: &[usize],
) -> CliResult<[SvrHyperparams; 2]> {
    Ok(match choice {
        SvrChoice::Fixed(hp) => [*hp, *hp],
        SvrChoice::Cv(grid) => {
            let t = Instant::now();
            let g = gram.select(train_idx, train_idx);
            let cv = cross_validate(&g, &labels.select(train_idx), grid)?;
            println!(
                "cross-validated {} grid points in {:.1} s",
                grid.len(),
                t.elapsed().as_secs_f64()
            );
            cv.best
        }
    })
}

fn save_model(path: &Path, fitted: &Fitted) -> CliResult {
    let mut w = create_file(path)?;
    fitted.models.write_to(&fitted.hp, &mut w)?;
    w.flush()
        .map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))?;
    println!("model written to {}", path.display());
    Ok(())
}

fn print_fit(fitted: &Fitted, truth: &[[f64; 2]]) -> CliResult<Option<f64>> {
    for angle in Angle::BOTH {
        println!(
            "{} hyperparameters: {}",
            angle.name(),
            describe_hp(&fitted.hp[angle.index()])
        );
    }
    println!("training time {:.3} s", fitted.train_secs);
    if truth.is_empty() {
        println!("no held-out samples; MAE not computed");
        return Ok(None);
    }
    let mae = mean_angular_error(&fitted.pred, truth)?;
    println!(
        "held-out MAE {mae:.4} deg over {} samples ({:.4} ms per sample)",
        truth.len(),
        fitted.predict_secs * 1000.0 / truth.len() as f64
    );
    Ok(Some(mae))
}

// ---------------------------------------------------------------------------
// commands

pub fn gen(args: GenArgs) -> CliResult {
    let params = EyeModelParams {
        landmark_noise_std: args.noise_std,
        ..EyeModelParams::with_seed(args.seed)
    };
    params.validate()?;
    let data = generate_dataset(args.n, &params)?;
    let mut w = create_file(&args.out)?;
    data.write_to(&mut w)?;
    w.flush()
        .map_err(|e| Failure::config(format!("cannot write {}: {e}", args.out.display())))?;
    if let Some(csv) = &args.csv {
        let mut w = create_file(csv)?;
        data.write_csv(&mut w)?;
        w.flush()
            .map_err(|e| Failure::config(format!("cannot write {}: {e}", csv.display())))?;
    }
    println!(
        "wrote {} samples ({} features) to {}",
        data.len(),
        data.n_f(),
        args.out.display()
    );
    println!("dataset checksum {}", data.checksum());
    Ok(())
}

pub fn run_local(args: RunLocalArgs, cfg: &RunConfig) -> CliResult {
    let alice_path = required(
        args.alice,
        cfg.alice_data.as_ref(),
        "Alice's dataset (--alice)",
    )?;
    let bob_path = required(args.bob, cfg.bob_data.as_ref(), "Bob's dataset (--bob)")?;
    let alice_data = load_dataset(&alice_path)?;
    let bob_data = load_dataset(&bob_path)?;
    let codec = codec(args.common.frac_bits, cfg)?;
    let holdout = holdout(args.holdout, cfg)?;
    let choice = svr_choice(&args.svr, cfg)?;
    let (_, seeds) = seeds(&args.common, cfg);
    let params = session_params(&seeds, None, codec, timeout(&args.common, cfg));
    let alice = party_input(alice_data, seeds.alice_shuffle);
    let bob = party_input(bob_data, seeds.bob_shuffle);
    let kind = match args.transport {
        TransportArg::InProcess => TransportKind::InProcess,
        TransportArg::Tcp => TransportKind::TcpLoopback,
    };

    let out = run_session(
        kind,
        &alice,
        RandomnessSource::Seeded(seeds.masks),
        &bob,
        &params,
        false,
    )?;
    let gram = &out.server.gram;
    println!("gram checksum {}", gram.checksum());
    println!(
        "n_a={} n_b={} protocol bytes {} auxiliary bytes {}",
        gram.n_a,
        gram.n_b,
        out.protocol_bytes(),
        out.auxiliary_bytes()
    );

    let (train_idx, test_idx) = holdout_indices(gram.n_a, gram.n_b, holdout);
    let labels = &out.server.labels;
    let hp = choose_hp(&choice, &gram.k, labels, &train_idx)?;
    let fitted = fit(&gram.k, labels, &train_idx, &test_idx, hp)?;
    let truth = labels.select(&test_idx).targets;
    let mae = print_fit(&fitted, &truth)?;

    let mae_plaintext = if args.insecure_plaintext {
        let (plain, plain_labels) = pooled_plaintext(&alice, &bob, &codec)?;
        let p = fit(
            &plaintext_gram(&plain),
            &plain_labels,
            &train_idx,
            &test_idx,
            hp,
        )?;
        let m = if test_idx.is_empty() {
            None
        } else {
            Some(mean_angular_error(
                &p.pred,
                &plain_labels.select(&test_idx).targets,
            )?)
        };
        if let Some(m) = m {
            println!(
                "plaintext MAE {m:.4} deg (equal to private: {})",
                Some(m) == mae
            );
        }
        m
    } else {
        None
    };

    if let Some(path) = args.model_out.as_ref().or(cfg.model_out.as_ref()) {
        save_model(path, &fitted)?;
    }
    if let Some(path) = args.report_csv.as_ref().or(cfg.report_csv.as_ref()) {
        let n_test = test_idx.len();
        let report = BenchReport {
            repetition: 0,
            alice_encode: out.alice.encode_time.as_secs_f64(),
            bob_encode: out.bob.encode_time.as_secs_f64(),
            server_assemble: out.server.assemble_time.as_secs_f64(),
            server_train: fitted.train_secs,
            server_predict_total: fitted.predict_secs,
            per_sample_predict_ms: if n_test == 0 {
                f64::NAN
            } else {
                fitted.predict_secs * 1000.0 / n_test as f64
            },
            protocol_bytes: out.protocol_bytes(),
            auxiliary_bytes: out.auxiliary_bytes(),
            mae_private: mae.unwrap_or(f64::NAN),
            mae_plaintext,
            n_a: gram.n_a,
            n_b: gram.n_b,
            n_f: alice.samples.first().map_or(0, Vec::len),
            n_test,
            frac_bits: codec.frac_bits(),
            hyperparams: hp,
            gram_checksum: gram.checksum(),
        };
        let summary = BenchSummary {
            size: gram.n(),
            runs: vec![report],
        };
        write_text(path, &reports_to_csv(&[summary]))?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

pub fn party(args: PartyArgs, cfg: &RunConfig) -> CliResult {
    let default_data = match args.role {
        PartyRole::Alice => cfg.alice_data.as_ref(),
        PartyRole::Bob => cfg.bob_data.as_ref(),
    };
    let data = load_dataset(&required(args.data, default_data, "dataset (--data)")?)?;
    let server = args
        .server
        .or_else(|| cfg.server_addr.clone())
        .ok_or_else(|| Failure::config("missing server address (--server)"))?;
    let peer = args
        .peer
        .or_else(|| cfg.bob_addr.clone())
        .ok_or_else(|| Failure::config("missing Bob's address (--peer)"))?;
    let codec = codec(args.common.frac_bits, cfg)?;
    let (_, seeds) = seeds(&args.common, cfg);
    let params = session_params(&seeds, args.session_seed, codec, timeout(&args.common, cfg));

    let report = match args.role {
        PartyRole::Alice => {
            let input = party_input(data, seeds.alice_shuffle);
            let mut bob = TcpLink::connect(peer.as_str(), params.timeout)?;
            let mut srv = TcpLink::connect(server.as_str(), params.timeout)?;
            run_alice(&input, RandomnessSource::Os, &params, &mut bob, &mut srv)?
        }
        PartyRole::Bob => {
            let input = party_input(data, seeds.bob_shuffle);
            let listener = TcpListener::bind(peer.as_str())
                .map_err(|e| Failure::config(format!("cannot listen on {peer}: {e}")))?;
            let mut srv = TcpLink::connect(server.as_str(), params.timeout)?;
            let mut alice = TcpLink::accept(&listener, params.timeout)?;
            run_bob(&input, &params, &mut alice, &mut srv)?
        }
    };
    println!(
        "uploaded {} samples, encoding took {:.3} s",
        report.n,
        report.encode_time.as_secs_f64()
    );
    Ok(())
}

fn serve(listen: &str, params: &SessionParams) -> CliResult<ServerOutput> {
    let listener = TcpListener::bind(listen)
        .map_err(|e| Failure::config(format!("cannot listen on {listen}: {e}")))?;
    // parties may connect for a while; each message still has its own timeout
    let accept_window = params.timeout.max(Duration::from_secs(60));
    let mut first = TcpLink::accept(&listener, accept_window)?;
    let mut second = TcpLink::accept(&listener, accept_window)?;
    Ok(run_server(params, &mut first, &mut second)?)
}

pub fn server(args: ServerArgs, cfg: &RunConfig) -> CliResult {
    let listen = args
        .listen
        .map(|a| a.to_string())
        .or_else(|| cfg.server_addr.clone())
        .ok_or_else(|| Failure::config("missing listen address (--listen)"))?;
    let codec = codec(args.common.frac_bits, cfg)?;
    let holdout = holdout(args.holdout, cfg)?;
    let choice = svr_choice(&args.svr, cfg)?;
    let (_, seeds) = seeds(&args.common, cfg);
    let params = session_params(&seeds, args.session_seed, codec, timeout(&args.common, cfg));

    let out = serve(&listen, &params)?;
    let gram = &out.gram;
    println!("gram checksum {}", gram.checksum());
    println!("n_a={} n_b={}", gram.n_a, gram.n_b);
    let (train_idx, test_idx) = holdout_indices(gram.n_a, gram.n_b, holdout);
    let hp = choose_hp(&choice, &gram.k, &out.labels, &train_idx)?;
    let fitted = fit(&gram.k, &out.labels, &train_idx, &test_idx, hp)?;
    print_fit(&fitted, &out.labels.select(&test_idx).targets)?;
    if let Some(path) = args.model_out.as_ref().or(cfg.model_out.as_ref()) {
        save_model(path, &fitted)?;
    }
    Ok(())
}

pub fn predict(args: PredictArgs, cfg: &RunConfig) -> CliResult {
    let file = File::open(&args.model)
        .map_err(|e| Failure::config(format!("cannot open model {}: {e}", args.model.display())))?;
    let (models, hp) = GazeModelPair::read_from(std::io::BufReader::new(file))
        .map_err(|e| Failure::config(format!("cannot read model {}: {e}", args.model.display())))?;
    let test = load_dataset(&args.test)?;
    let alice_path = required(
        args.alice,
        cfg.alice_data.as_ref(),
        "Alice's dataset (--alice)",
    )?;
    let bob_path = required(args.bob, cfg.bob_data.as_ref(), "Bob's dataset (--bob)")?;
    let codec = codec(args.common.frac_bits, cfg)?;
    let holdout = holdout(args.holdout, cfg)?;
    let (_, seeds) = seeds(&args.common, cfg);
    let alice = party_input(load_dataset(&alice_path)?, seeds.alice_shuffle);
    let bob = party_input(load_dataset(&bob_path)?, seeds.bob_shuffle);

    // the server's training order, rebuilt from the parties' files and seed
    let (pooled, _) = pooled_plaintext(&alice, &bob, &codec)?;
    let (train_idx, _) = holdout_indices(alice.samples.len(), bob.samples.len(), holdout);
    let train_x: Vec<Vec<f64>> = train_idx.iter().map(|&i| pooled[i].clone()).collect();
    if models.pitch_model.n_train() != train_x.len() || models.yaw_model.n_train() != train_x.len()
    {
        return Err(Failure::config(format!(
            "model was trained on {} samples but the given parties, seed and holdout yield {}",
            models.pitch_model.n_train(),
            train_x.len()
        )));
    }
    let queries = test
        .features
        .iter()
        .map(|x| {
            x.iter()
                .map(|&v| codec.quantize(v))
                .collect::<Result<Vec<f64>, Error>>()
        })
        .collect::<Result<Vec<_>, Error>>()?;

    let t = Instant::now();
    let mut pred = vec![[0.0; 2]; queries.len()];
    for angle in Angle::BOTH {
        let a = angle.index();
        let k = kernel_rows(&queries, &train_x, &hp[a].kernel)?;
        for (dst, v) in pred.iter_mut().zip(predict_rows(models.model(angle), &k)?) {
            dst[a] = v;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let mae = mean_angular_error(&pred, &test.labels.targets)?;
    println!(
        "MAE {mae:.4} deg over {} samples ({:.4} ms per sample)",
        test.len(),
        secs * 1000.0 / test.len().max(1) as f64
    );
    Ok(())
}

pub fn cv(args: CvArgs) -> CliResult {
    let data = load_dataset(&args.data)?;
    let codec = codec(args.frac_bits, &RunConfig::default())?;
    let quantized = data
        .features
        .iter()
        .map(|x| {
            x.iter()
                .map(|&v| codec.quantize(v))
                .collect::<Result<Vec<f64>, Error>>()
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mut grid = Grid::default_rbf();
    if let Some(g) = args.gammas {
        grid.kernels = g.into_iter().map(KernelConfig::rbf).collect();
    }
    if let Some(c) = args.cs {
        grid.cs = c;
    }
    if let Some(e) = args.epsilons {
        grid.epsilons = e;
    }
    let t = Instant::now();
    let cv = cross_validate(&plaintext_gram(&quantized), &data.labels, &grid)?;
    println!(
        "{} grid points, {} samples, {:.1} s",
        grid.len(),
        data.len(),
        t.elapsed().as_secs_f64()
    );
    for angle in Angle::BOTH {
        let a = angle.index();
        println!(
            "{}: {} (CV MAE {:.4} deg)",
            angle.name(),
            describe_hp(&cv.best[a]),
            cv.best_mae[a].to_degrees()
        );
    }
    Ok(())
}

pub fn bench(args: BenchArgs) -> CliResult {
    let hyperparams = match svr_choice(&args.svr, &RunConfig::default())? {
        SvrChoice::Fixed(hp) => HyperparamChoice::Fixed { pitch: hp, yaw: hp },
        SvrChoice::Cv(grid) => HyperparamChoice::CrossValidate(grid),
    };
    let cfg = BenchConfig {
        frac_bits: codec(args.frac_bits, &RunConfig::default())?.frac_bits(),
        hyperparams,
        repetitions: args.repetitions,
        warmup: !args.no_warmup,
        seed: args.seed,
        transport: match args.transport {
            TransportArg::InProcess => TransportKind::InProcess,
            TransportArg::Tcp => TransportKind::TcpLoopback,
        },
        parallel: args.parallel,
        ..BenchConfig::default()
    };
    let summaries = run_benchmark(&args.sizes, &EyeModelParams::with_seed(args.seed), &cfg)?;
    print!("{}", reports_to_table(&summaries));
    if let Some(path) = &args.csv {
        write_text(path, &reports_to_csv(&summaries))?;
        println!("csv written to {}", path.display());
    }
    Ok(())
}

pub fn audit(args: AuditArgs) -> CliResult {
    let codec = FixedPointCodec::default();
    let data = generate_dataset(4, &EyeModelParams::with_seed(args.seed))?;
    let (alice, bob) = split_parties(&data, &RunSeeds::derive(args.seed));
    let mut ok = true;
    let mut show = |r: &TestReport, want_pass: bool| {
        let good = if want_pass {
            r.passes()
        } else {
            r.leak_flagged()
        };
        ok &= good;
        println!("{} [{}]", r.summary(), if good { "ok" } else { "FAILED" });
    };

    let (views, gram) = collect_server_views(
        &alice,
        &bob,
        args.trials,
        ViewRandomness::Fresh { seed: args.seed },
        codec,
    )?;
    show(&check_view_uniformity(&views, DEFAULT_ALPHA)?, true);
    show(
        &compare_with_simulator(&views, &gram, &codec, DEFAULT_ALPHA, args.seed)?,
        true,
    );
    let inputs: Vec<(RingElement, RingElement)> = (0..8)
        .map(|i| {
            let x = codec.encode(i as f64 * 0.37 - 1.2)?;
            let y = codec.encode(2.5 - i as f64 * 0.61)?;
            Ok((x, y))
        })
        .collect::<Result<_, Error>>()?;
    show(
        &compare_mul_simulator(&inputs, args.trials, DEFAULT_ALPHA, args.seed)?,
        true,
    );
    let (zero, _) = collect_server_views(&alice, &bob, args.trials, ViewRandomness::Zero, codec)?;
    print!("zero-mask hook: ");
    show(&check_view_uniformity(&zero, DEFAULT_ALPHA)?, false);

    let eq_data = generate_dataset(200, &EyeModelParams::with_seed(args.seed))?;
    for (name, source) in [
        ("seeded", RandomnessSource::Seeded(args.seed)),
        ("os", RandomnessSource::Os),
        ("zero", RandomnessSource::Zero),
    ] {
        let diff = check_gram_equivalence(&eq_data, args.seed, source, codec)?;
        let good = diff == 0.0;
        ok &= good;
        println!(
            "gram equivalence ({name} masks): max |diff| {diff:e} [{}]",
            if good { "ok" } else { "FAILED" }
        );
    }
    if ok {
        println!("audit passed");
        Ok(())
    } else {
        Err(Failure::numerical("audit failed"))
    }
}
