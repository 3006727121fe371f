//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always reach the terminal; exits non-zero
//! if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mtlf_cli::{cmd_backtest, cmd_forecast, CliConfig, FORECASTS, METRICS};
use mtlf_core::autodiff::{Param, Tape, Var};
use mtlf_core::dataset::{write_corpus, MonthlyDemandSeries, YearlyVector};
use mtlf_core::ensemble::{aggregate, run_ensemble, EnsembleConfig, EnsembleForecast};
use mtlf_core::ets::{fit_all, forecast_one, select_by_aic, TrendKind};
use mtlf_core::pipeline::{run_pipeline, PipelineConfig};
use mtlf_core::preprocess::{denormalize, normalize, normalize_series, NormalizedSeries};
use mtlf_core::rdlstm::{
    init_network, lstm_step_detailed, network_step, LayerState, RdLstmNetwork, RecurrentState,
    LAYER_COUNT, WINDOW,
};
use mtlf_core::seasonal::{deseasonalize, reseasonalize, SeasonalState};
use mtlf_core::synthetic::trend_seasonal_corpus;
use mtlf_core::training::{
    forecast_replica, pinball_loss, series_gradients, series_loss, train_replica, TrainConfig,
};
use mtlf_testkit::{fd_gradient, max_rel_err, RefLayer, StackedLstm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// 1 ---------------------------------------------------------------------

fn backtest_on_user_corpus() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(err)?;
    let data = tmp.path().join("entsoe_like.csv");
    let corpus = trend_seasonal_corpus(6, 6, 0.02, 101);
    write_corpus(&corpus, std::fs::File::create(&data).map_err(err)?).map_err(err)?;
    let config = CliConfig {
        data_path: Some(data),
        output_dir: tmp.path().join("out"),
        subsets: 2,
        runs: 1,
        ..CliConfig::default()
    };
    let outcome = cmd_backtest(&config).map_err(err)?;
    let text = std::fs::read_to_string(config.output_dir.join(METRICS)).map_err(err)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    ensure(
        header == "series_id,median_ape,mape,ape_iqr,rmse,mpe",
        || format!("header {header}"),
    )?;
    let rows: Vec<&str> = lines.collect();
    ensure(rows.len() == 7, || format!("{} rows", rows.len()))?;
    ensure(rows[6].starts_with("POOLED,"), || {
        "missing pooled row".into()
    })?;
    for row in &rows {
        for cell in row.split(',').skip(1) {
            let v: f64 = cell.parse().map_err(err)?;
            ensure(v.is_finite(), || format!("non-finite cell in {row}"))?;
        }
    }
    let pooled = outcome.report.ok_or("no report")?.pooled;
    Ok(format!(
        "6 series, pooled MAPE {:.2}, RMSE {:.1}, MPE {:.2}",
        pooled.mape, pooled.rmse, pooled.mpe
    ))
}

// 2 ---------------------------------------------------------------------

fn round_trips() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let scale = 10f64.powf(rng.gen_range(-3.0..6.0));
        let values: [f64; 12] = std::array::from_fn(|_| scale * rng.gen_range(0.1..10.0));
        let n = normalize(&YearlyVector {
            year_index: 0,
            values,
        })
        .map_err(err)?;
        let back = denormalize(&n.values, n.mean, n.dispersion);
        for (a, b) in values.iter().zip(&back) {
            worst = worst.max((a - b).abs() / a.abs());
        }

        let y: Vec<f64> = (0..36).map(|_| rng.gen_range(0.01..5.0)).collect();
        let s: Vec<f64> = (0..36).map(|_| rng.gen_range(0.05..5.0)).collect();
        let x = deseasonalize(&y, &s).map_err(err)?;
        let y2 = reseasonalize(&x, &s).map_err(err)?;
        for (a, b) in y.iter().zip(&y2) {
            worst = worst.max((a - b).abs() / a.abs());
        }
    }
    ensure(worst <= 1e-10, || format!("max relative error {worst:e}"))?;
    within(start, Duration::from_secs(1))?;
    Ok(format!("1000 inputs each, max relative error {worst:.1e}"))
}

// 3 ---------------------------------------------------------------------

const H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
const GRAD_FLOOR: f64 = 1e-8;

fn weights(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.6 + 0.4 * ((i as f64) * 2.1).cos())
        .collect()
}

fn weighted_sum(tape: &mut Tape, out: Var) -> Var {
    let w = tape.constant(weights(tape.value(out).len()));
    let p = tape.mul(out, w).expect("same shape");
    tape.sum(p)
}

type Op = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;

fn primitive_error(inputs: &[Param], op: &Op) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|p| tape.param(p)).collect();
    let out = op(&mut tape, &vars);
    let loss = weighted_sum(&mut tape, out);
    let grads = tape.backward(loss).expect("backward");
    let analytic: Vec<f64> = vars
        .iter()
        .flat_map(|v| grads.get(*v).into_owned())
        .collect();
    let flat: Vec<f64> = inputs.iter().flat_map(|p| p.value.clone()).collect();
    let numeric = fd_gradient(
        |x| {
            let mut tape = Tape::new();
            let mut at = 0;
            let vars: Vec<Var> = inputs
                .iter()
                .map(|p| {
                    let q = Param::new("p", p.rows, p.cols, x[at..at + p.len()].to_vec());
                    at += p.len();
                    tape.param(&q)
                })
                .collect();
            let out = op(&mut tape, &vars);
            let loss = weighted_sum(&mut tape, out);
            tape.scalar(loss)
        },
        &flat,
        H,
    );
    max_rel_err(&analytic, &numeric, GRAD_FLOOR).0
}

fn network_gradient_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut net = init_network(4, 30).expect("network");
    for p in net.params_mut() {
        p.value
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(-0.9..0.9));
    }
    let inputs: Vec<[f64; WINDOW]> = (0..30)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-0.5..0.5)))
        .collect();

    let mut tape = Tape::new();
    let vars = net.register(&mut tape);
    let mut states = RecurrentState::zeros(&mut tape, &vars);
    let mut terms = Vec::new();
    for x in &inputs {
        let xv = tape.constant(x.to_vec());
        let out = network_step(&mut tape, &vars, xv, &mut states).expect("step");
        terms.push(weighted_sum(&mut tape, out));
    }
    let loss = tape.add_n(&terms).expect("sum");
    let grads = tape.backward(loss).expect("backward");
    net.params_mut().into_iter().for_each(Param::zero_grad);
    vars.accumulate_into(&grads, &mut net);
    let analytic: Vec<f64> = net.params().iter().flat_map(|p| p.grad.clone()).collect();
    let flat: Vec<f64> = net.params().iter().flat_map(|p| p.value.clone()).collect();
    let w = weights(WINDOW);
    let numeric = fd_gradient(
        |x| {
            let mut probe = net.clone();
            let mut at = 0;
            for p in probe.params_mut() {
                let n = p.len();
                p.value.copy_from_slice(&x[at..at + n]);
                at += n;
            }
            probe
                .run(&inputs)
                .expect("run")
                .iter()
                .map(|o| o.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
                .sum()
        },
        &flat,
        H,
    );
    max_rel_err(&analytic, &numeric, GRAD_FLOOR).0
}

fn seasonal_gradient_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let values = (0..60)
        .map(|t| {
            1.0 + 0.3 * (t as f64 * std::f64::consts::PI / 6.0).sin() + rng.gen_range(-0.05..0.05)
        })
        .collect();
    let y = NormalizedSeries {
        series_id: "g".into(),
        values,
    };
    let net = init_network(4, 31).expect("network");
    let mut state = SeasonalState::warm_start(&y);
    series_gradients(&mut net.clone(), &mut state, &y, 0.4).expect("gradients");
    let mut analytic = state.initial.grad.clone();
    analytic.extend(&state.beta_raw.grad);
    let mut x = state.initial.value.clone();
    x.extend(&state.beta_raw.value);
    let numeric = fd_gradient(
        |p| {
            let mut probe = state.clone();
            probe.initial.value.copy_from_slice(&p[..12]);
            probe.beta_raw.value[0] = p[12];
            series_loss(&net, &probe, &y, 0.4).expect("loss")
        },
        &x,
        H,
    );
    max_rel_err(&analytic, &numeric, GRAD_FLOOR).0
}

fn gradients() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut vec =
        |lo: f64, hi: f64| Param::vector("v", (0..5).map(|_| rng.gen_range(lo..hi)).collect());
    let (a, b, pos) = (vec(-2.0, 2.0), vec(-2.0, 2.0), vec(0.5, 3.0));
    let above = vec(0.2, 1.0);
    let mat = Param::new(
        "m",
        3,
        5,
        (0..15).map(|i| (i as f64 * 0.37).sin()).collect(),
    );
    let s = Param::vector("s", vec![1.3]);
    let off = Param::vector(
        "p",
        pos.value
            .iter()
            .enumerate()
            .map(|(i, v)| v + [0.3, -0.4][i % 2])
            .collect(),
    );
    let ops: Vec<(&str, Vec<Param>, Op)> = vec![
        (
            "add",
            vec![a.clone(), b.clone()],
            Box::new(|t, v| t.add(v[0], v[1]).unwrap()),
        ),
        (
            "sub",
            vec![a.clone(), s.clone()],
            Box::new(|t, v| t.sub(v[0], v[1]).unwrap()),
        ),
        (
            "mul",
            vec![a.clone(), b.clone()],
            Box::new(|t, v| t.mul(v[0], v[1]).unwrap()),
        ),
        (
            "div",
            vec![a.clone(), pos.clone()],
            Box::new(|t, v| t.div(v[0], v[1]).unwrap()),
        ),
        (
            "scale",
            vec![a.clone()],
            Box::new(|t, v| t.scale(v[0], 2.5)),
        ),
        (
            "shift",
            vec![a.clone()],
            Box::new(|t, v| t.shift(v[0], -1.0)),
        ),
        (
            "matvec",
            vec![mat, a.clone()],
            Box::new(|t, v| t.matvec(v[0], v[1]).unwrap()),
        ),
        ("sigmoid", vec![a.clone()], Box::new(|t, v| t.sigmoid(v[0]))),
        ("tanh", vec![a.clone()], Box::new(|t, v| t.tanh(v[0]))),
        (
            "log",
            vec![pos.clone()],
            Box::new(|t, v| t.log(v[0]).unwrap()),
        ),
        ("exp", vec![a.clone()], Box::new(|t, v| t.exp(v[0]))),
        (
            "clamp_min",
            vec![above],
            Box::new(|t, v| t.clamp_min(v[0], 0.05)),
        ),
        (
            "concat",
            vec![a.clone(), s.clone()],
            Box::new(|t, v| t.concat(v)),
        ),
        (
            "slice",
            vec![a.clone()],
            Box::new(|t, v| t.slice(v[0], 2, 3).unwrap()),
        ),
        ("sum", vec![a.clone()], Box::new(|t, v| t.sum(v[0]))),
        (
            "add_n",
            vec![a.clone(), b.clone(), pos.clone()],
            Box::new(|t, v| t.add_n(v).unwrap()),
        ),
        (
            "pinball",
            vec![pos.clone(), off],
            Box::new(|t, v| t.pinball(v[0], v[1], 0.3).unwrap()),
        ),
    ];
    let mut worst_primitive = 0.0f64;
    for (name, inputs, op) in &ops {
        let e = primitive_error(inputs, op);
        ensure(e < GRAD_TOL, || format!("{name}: relative error {e:e}"))?;
        worst_primitive = worst_primitive.max(e);
    }
    let net = network_gradient_error();
    ensure(net < GRAD_TOL, || {
        format!("RD-LSTM m=4, 30 steps: relative error {net:e}")
    })?;
    let seasonal = seasonal_gradient_error();
    ensure(seasonal < GRAD_TOL, || {
        format!("seasonal path: relative error {seasonal:e}")
    })?;
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "{} primitives {worst_primitive:.1e}, network {net:.1e}, seasonal {seasonal:.1e}",
        ops.len()
    ))
}

// 4 ---------------------------------------------------------------------

fn rows(p: &Param) -> Vec<Vec<f64>> {
    p.value.chunks(p.cols).map(<[f64]>::to_vec).collect()
}

fn plain_lstm_reduction() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for draw in 0..100 {
        let m = rng.gen_range(2..=8);
        let mut net =
            RdLstmNetwork::with_structure(m, draw, [1; LAYER_COUNT], [false; LAYER_COUNT])
                .map_err(err)?;
        for p in net.params_mut() {
            p.value
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-1.5..1.5));
        }
        let inputs: Vec<[f64; WINDOW]> = (0..15)
            .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
            .collect();
        let reference = StackedLstm {
            layers: net
                .layers
                .iter()
                .map(|l| RefLayer {
                    w: l.w.each_ref().map(rows),
                    u: l.v.each_ref().map(rows),
                    b: l.b.each_ref().map(|p| p.value.clone()),
                })
                .collect(),
            out_w: rows(&net.lu_weights),
            out_b: net.lu_bias.value.clone(),
        };
        let ours = net.run(&inputs).map_err(err)?;
        let theirs = reference.run(&inputs.iter().map(|x| x.to_vec()).collect::<Vec<_>>());
        for (a, b) in ours.iter().zip(&theirs) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max abs difference {worst:e}"))?;
    within(start, Duration::from_secs(10))?;
    Ok(format!("100 draws, max abs difference {worst:.1e}"))
}

// 5 ---------------------------------------------------------------------

fn zero_parameter_fixtures() -> Result<String, String> {
    let m = 5;
    let mut net = init_network(m, 0).map_err(err)?;
    for p in net.params_mut() {
        p.value.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut tape = Tape::new();
    let vars = net.register(&mut tape);
    let mut checked = 0;
    for (l, layer) in vars.layers.iter().enumerate() {
        let d = layer.dilation;
        let input_dim = if l == 0 { WINDOW } else { m };
        // Lagged states with known non-zero cells.
        let mut state = LayerState::zeros(&mut tape, d, m);
        let lag_c: Vec<Vec<f64>> = (0..d)
            .map(|k| (0..m).map(|j| 0.3 + 0.1 * (k + j) as f64).collect())
            .collect();
        for c in &lag_c {
            let h = tape.constant(vec![0.7; m]);
            let cv = tape.constant(c.clone());
            state.push(h, cv);
        }
        for step in 0..d + 2 {
            let u: Vec<f64> = (0..input_dim)
                .map(|j| ((step * 7 + j) as f64 * 0.3).sin())
                .collect();
            let input = tape.constant(u.clone());
            let expected_c: Vec<f64> = tape
                .value(state.lagged().1)
                .iter()
                .map(|c| 0.5 * c)
                .collect();
            let out = lstm_step_detailed(&mut tape, layer, input, &mut state).map_err(err)?;
            for g in out
                .gates
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != 2)
                .map(|(_, g)| g)
            {
                ensure(tape.value(*g).iter().all(|v| *v == 0.5), || {
                    format!("layer {}: gate not 0.5", l + 1)
                })?;
            }
            ensure(tape.value(out.gates[2]).iter().all(|v| *v == 0.0), || {
                "candidate not 0".into()
            })?;
            ensure(tape.value(out.c) == expected_c.as_slice(), || {
                format!("layer {}: c != 0.5 c_lag", l + 1)
            })?;
            let c = tape.value(out.c).to_vec();
            let expected_h: Vec<f64> = if layer.residual {
                c.iter()
                    .zip(&u)
                    .map(|(c, u)| 0.5 * (c.tanh() + u))
                    .collect()
            } else {
                c.iter().map(|c| 0.5 * c.tanh()).collect()
            };
            ensure(tape.value(out.h) == expected_h.as_slice(), || {
                format!("layer {}: h mismatch", l + 1)
            })?;
            checked += 1;
        }
    }
    // From zero state every cell stays zero, so residual layers pass exactly
    // half of their input through.
    let mut states = RecurrentState::zeros(&mut tape, &vars);
    let x = tape.constant((0..WINDOW).map(|j| j as f64 * 0.1 - 0.5).collect());
    let mut below = x;
    for (layer, state) in vars.layers.iter().zip(states.layers.iter_mut()) {
        let out = lstm_step_detailed(&mut tape, layer, below, state).map_err(err)?;
        ensure(tape.value(out.c).iter().all(|c| *c == 0.0), || {
            "cell not zero".into()
        })?;
        if layer.residual {
            let half: Vec<f64> = tape.value(below).iter().map(|u| 0.5 * u).collect();
            ensure(tape.value(out.h) == half.as_slice(), || {
                "residual h != 0.5 u".into()
            })?;
        }
        below = out.h;
    }
    Ok(format!(
        "{checked} layer steps plus a zero-state pass, exact equality"
    ))
}

// 6 ---------------------------------------------------------------------

fn pinball_properties() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let (x, xh, tau) = (
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(0.01..0.99),
        );
        let sum = pinball_loss(x, xh, tau).map_err(err)? + pinball_loss(xh, x, tau).map_err(err)?;
        ensure(
            (sum - (x - xh).abs()).abs() <= 1e-12 * (1.0 + (x - xh).abs()),
            || format!("exchange identity fails at {x}, {xh}, {tau}"),
        )?;
        let half = pinball_loss(x, xh, 0.5).map_err(err)?;
        ensure((half - 0.5 * (x - xh).abs()).abs() <= 1e-12, || {
            "tau = 0.5 is not half the absolute error".into()
        })?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let values = (0..120)
        .map(|_| 1000.0 + rng.gen_range(-30.0..30.0))
        .collect();
    let series = MonthlyDemandSeries::new("flat", 2000, values).map_err(err)?;
    let (y, _) = normalize_series(&series).map_err(err)?;
    let mut levels = Vec::new();
    for tau in [0.2, 0.5, 0.8] {
        let config = TrainConfig {
            tau,
            ..TrainConfig::default()
        };
        let replica = train_replica(std::slice::from_ref(&y), &config, 0, 6).map_err(err)?;
        let f = forecast_replica(&replica, &y).map_err(err)?;
        levels.push(f.iter().sum::<f64>() / 12.0);
    }
    ensure(levels[0] <= levels[1] && levels[1] <= levels[2], || {
        format!("levels {levels:?}")
    })?;
    within(start, Duration::from_secs(300))?;
    Ok(format!(
        "identities on 1000 draws; levels {:.6} <= {:.6} <= {:.6}",
        levels[0], levels[1], levels[2]
    ))
}

// 7 ---------------------------------------------------------------------

fn synthetic_benchmark() -> Result<String, String> {
    let start = Instant::now();
    let corpus = trend_seasonal_corpus(20, 10, 0.02, 2024);
    let mut config = PipelineConfig::default();
    config.ensemble.subsets = 2;
    config.ensemble.runs = 2;
    let out = run_pipeline(&corpus, &config).map_err(err)?;
    let report = out.report.ok_or("no report")?;
    let baseline = out.baseline_report.ok_or("no baseline")?;
    let wins = report
        .rows
        .iter()
        .zip(&baseline.rows)
        .filter(|((_, ours), (_, base))| ours.mape < base.mape)
        .count();
    ensure(wins >= 16, || {
        format!("pipeline beat seasonal-naive on {wins}/20")
    })?;
    within(start, Duration::from_secs(600))?;
    Ok(format!(
        "beats seasonal-naive on {wins}/20; pooled MAPE {:.2} vs {:.2}",
        report.pooled.mape, baseline.pooled.mape
    ))
}

// 8 ---------------------------------------------------------------------

fn ensemble_algebra() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // Integer-valued members: the mean is exactly representable.
    let ints: Vec<[f64; 12]> = (0..8)
        .map(|_| std::array::from_fn(|_| rng.gen_range(0..1000) as f64))
        .collect();
    let agg = aggregate(&ints);
    for j in 0..12 {
        let exact = ints.iter().map(|m| m[j]).sum::<f64>() / 8.0;
        ensure(agg[j] == exact, || {
            format!("month {j}: {} vs {exact}", agg[j])
        })?;
    }
    let members: Vec<[f64; 12]> = (0..9)
        .map(|_| std::array::from_fn(|_| rng.gen_range(0.5..1.5)))
        .collect();
    let base = aggregate(&members);
    for rot in 1..9 {
        let mut permuted = members.clone();
        permuted.rotate_left(rot);
        permuted.swap(0, 8 - rot);
        ensure(aggregate(&permuted) == base, || {
            "aggregate depends on member order".into()
        })?;
    }

    let data: Vec<NormalizedSeries> = trend_seasonal_corpus(5, 4, 0.02, 8)
        .series()
        .iter()
        .map(|s| normalize_series(s).map(|(y, _)| y).map_err(err))
        .collect::<Result<_, _>>()?;
    let train = TrainConfig {
        epochs: 3,
        state_size: 6,
        ..TrainConfig::default()
    };
    let config = EnsembleConfig {
        snapshots: 2,
        subsets: 3,
        runs: 2,
        coverage: 2,
        master_seed: 88,
    };
    let on = |threads: usize| -> Result<EnsembleForecast, String> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(err)?
            .install(|| run_ensemble(&data, &train, &config).map_err(err))
    };
    let serial = format!("{:?}", on(1)?);
    let parallel = format!("{:?}", on(4)?);
    ensure(serial == parallel, || {
        "serial and parallel ensembles differ".into()
    })?;
    Ok("exact mean, order-invariant, serial == parallel byte for byte".into())
}

// 9 ---------------------------------------------------------------------

fn ets_sanity() -> Result<String, String> {
    let constant = select_by_aic(&[7.5; 8]).map_err(err)?;
    ensure(constant.spec.trend == TrendKind::None, || {
        format!("constant series chose {}", constant.spec)
    })?;

    let line: Vec<f64> = (0..10).map(|i| 3.0 + 0.7 * i as f64).collect();
    let fit = select_by_aic(&line).map_err(err)?;
    let next = forecast_one(&fit);
    ensure((next - 10.0).abs() < 1e-6, || {
        format!("line continues to {next}, expected 10")
    })?;

    let mut fitted = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..40 {
        let n = rng.gen_range(4..15);
        let slope = rng.gen_range(-0.5..1.0);
        let series: Vec<f64> = (0..n)
            .map(|t| 20.0 + slope * t as f64 + rng.gen_range(-1.0..1.0))
            .collect();
        let best = select_by_aic(&series).map_err(err)?;
        let min = fit_all(&series)
            .iter()
            .filter_map(|(_, r)| r.as_ref().ok().map(|f| f.aic))
            .fold(f64::INFINITY, f64::min);
        ensure(best.aic == min, || {
            format!("selected AIC {} but minimum is {min}", best.aic)
        })?;
        fitted += 1;
    }
    Ok(format!(
        "constant -> {}, line forecast {next:.9}, AIC minimal on {fitted} series",
        constant.spec
    ))
}

// 10 --------------------------------------------------------------------

fn determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(err)?;
    let data = tmp.path().join("d.csv");
    write_corpus(
        &trend_seasonal_corpus(4, 5, 0.02, 10),
        std::fs::File::create(&data).map_err(err)?,
    )
    .map_err(err)?;
    let run = |name: &str| -> Result<Vec<u8>, String> {
        let config = CliConfig {
            data_path: Some(data.clone()),
            output_dir: tmp.path().join(name),
            seed: 1234,
            subsets: 2,
            runs: 2,
            state_size: 16,
            ..CliConfig::default()
        };
        cmd_forecast(&config).map_err(err)?;
        std::fs::read(config.output_dir.join(FORECASTS)).map_err(err)
    };
    let (a, b) = (run("a")?, run("b")?);
    ensure(a == b, || "forecast files differ".into())?;
    Ok(format!("two runs, {} identical bytes", a.len()))
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        (
            "backtest on a user-supplied corpus emits the full metric set",
            backtest_on_user_corpus,
        ),
        ("normalization and seasonal round trips", round_trips),
        ("analytic vs finite-difference gradients", gradients),
        ("plain stacked-LSTM reduction", plain_lstm_reduction),
        ("zero-parameter forward fixtures", zero_parameter_fixtures),
        (
            "pinball properties and tau monotonicity",
            pinball_properties,
        ),
        ("end-to-end synthetic benchmark", synthetic_benchmark),
        ("ensemble algebra", ensemble_algebra),
        ("ETS sanity", ets_sanity),
        ("forecast determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (status, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "criterion {:>2} {status} {name}: {detail} ({:.2?})",
            i + 1,
            start.elapsed()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
