//! Acceptance suite. Prints one line per criterion. Failing criteria are
//! reported but only fail the process when `SFC_ACCEPTANCE_STRICT=1`.
//! Tolerances are pinned below.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfc_core::harness::{
    case_study_1, case_study_surrogate_config, generate_data, open_vs_closed_loop, test_metrics, tracking_scenario, train_models,
    CaseStudyReport, DataGenConfig, ScenarioConfig,
};
use sfc_core::mpc::{solve, MpcConfig, NarxState, UncertaintyMode};
use sfc_core::par::Execution;
use sfc_core::sim::population::{mc_population_step, slug_ode_step};
use sfc_core::sim::tempering::{advection_rhs, heat_split, integrate, Boundary};
use sfc_core::sim::{GridIntegrator, Inputs, Physics, PlantParams, SimConfig, Simulator, Slug, Trajectory};
use sfc_core::surrogate::{Metrics, Model, ModelKind, NarxDataset, Objective, Surrogate};

const DT_REL_TOL: f64 = 0.004;
const TRANSPORT_CASES: u64 = 24;
const MASS_TOL: f64 = 1e-9;
const VOLUME_TOL: f64 = 1e-12;
const SPLIT_TOL: f64 = 1e-12;
const WENO_MIN_ORDER: f64 = 4.0;
const DESK_SAMPLES: usize = 12_000;
const MIN_TRAIN: usize = 5_000;
const MIN_CAL: usize = 1_000;
const MIN_TEST: usize = 2_000;
const CQR_TARGET: f64 = 0.95;
const CQR_TOL: f64 = 0.03;
const BLL_RANGE: (f64, f64) = (0.92, 0.99);
const MSE_MAX: f64 = 1e-2;
const GRAD_TOL: f64 = 1e-4;
const CQR_VIOLATION_RATIO: f64 = 0.5;
const CASE_SEEDS: u64 = 4;
const DEGENERATE_STATES: usize = 20;
const DEGENERATE_TOL: f64 = 1e-6;
const QP_TOL: f64 = 1e-6;
const TRACKING_SEEDS: u64 = 4;
const CONTROL_PERIOD: f64 = 50.0;

struct Line {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn line(id: u8, name: &'static str, pass: bool, detail: String) -> Line {
    let l = Line { id, name, pass, detail };
    println!(
        "criterion {:>2} {:<32} {}  {}",
        l.id,
        l.name,
        if l.pass { "PASS" } else { "FAIL" },
        l.detail
    );
    l
}

fn mid_range_inputs() -> Inputs {
    Inputs {
        q_pm: 1.1e-7,
        q_air: 1.1e-7,
        q_tm: 3.5e-6,
        w_cryst: 0.005,
    }
}

fn criterion_1() -> Line {
    let u = mid_range_inputs();
    let outlet = |dt: f64| {
        let mut sim = Simulator::new(PlantParams::default(), SimConfig { dt, ..SimConfig::default() }).unwrap();
        sim.run_for(&u, 8000.0).unwrap();
        // average over the last 20 samples
        let mut acc = [0.0; 2];
        for _ in 0..20 {
            let m = sim.run_sample(&u).unwrap();
            acc[0] += m.t_pm / 20.0;
            acc[1] += m.t_tm / 20.0;
        }
        acc
    };
    let (coarse, fine) = (outlet(5.0), outlet(1.0));
    let rel_k = (0..2).map(|i| ((coarse[i] - fine[i]) / fine[i]).abs()).fold(0.0, f64::max);
    // the same differences relative to Celsius readings
    let rel_c = (0..2)
        .map(|i| ((coarse[i] - fine[i]) / (fine[i] - 273.15)).abs())
        .fold(0.0, f64::max);
    line(
        1,
        "dt sensitivity (5 s vs 1 s)",
        rel_k < DT_REL_TOL && rel_c < DT_REL_TOL,
        format!(
            "max rel diff {:.3e} (K) {:.3e} (degC) < {DT_REL_TOL}; T_PM {:.3}/{:.3} K, T_TM {:.3}/{:.3} K",
            rel_k, rel_c, coarse[0], fine[0], coarse[1], fine[1]
        ),
    )
}

fn criterion_2() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0usize;
    let mut ok = true;
    for case in 0..TRANSPORT_CASES {
        let u = Inputs {
            q_pm: rng.random_range(0.6e-7..1.6e-7),
            q_air: rng.random_range(0.6e-7..1.6e-7),
            q_tm: 3.5e-6,
            w_cryst: 0.0,
        };
        let switch = rng.random_range(5..60);
        let c2 = rng.random_range(0.05..0.2);
        let mut sim = Simulator::new(PlantParams::default(), SimConfig { seed: case, ..SimConfig::default() })
            .unwrap()
            .with_physics(Physics {
                heat_transfer: false,
                growth: false,
                agglomeration: false,
            });
        let c1 = sim.params().c_in;
        let mut exits = Vec::new();
        for k in 0..5000 {
            if k == switch {
                sim.params_mut().c_in = c2;
            }
            exits.extend(sim.step(&u).unwrap().outlet.into_iter().map(|e| e.slug.conc));
            if exits.len() > switch + 5 {
                break;
            }
        }
        let smeared = exits
            .iter()
            .enumerate()
            .filter(|(i, c)| **c != if *i < switch { c1 } else { c2 })
            .count();
        worst = worst.max(smeared);
        ok &= smeared == 0 && exits.len() > switch + 5;
    }
    line(
        2,
        "diffusion-free transport",
        ok,
        format!("{TRANSPORT_CASES} random steps, max smeared slugs {worst} (must be 0)"),
    )
}

fn criterion_3() -> Line {
    let p = PlantParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut mass, mut volume, mut split) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.random_range(1..200);
        let mean = rng.random_range(50e-6..400e-6);
        let temp = rng.random_range(283.0..313.0);
        let particles: Vec<f64> = (0..n).map(|i| mean * (0.5 + i as f64 / n as f64)).collect();
        let mut slug = Slug {
            z: 0.5,
            mass: 5e-4,
            conc: rng.random_range(0.12..0.2),
            temp,
            particles,
        };
        let before = slug.conc * slug.mass + slug.crystal_mass(&p);
        let out = slug_ode_step(&mut slug, &p, temp, 0.0, 5.0).unwrap();
        mc_population_step(&mut slug, &p, out.growth, 0.0, 5.0, &mut rng);
        let after = slug.conc * slug.mass + slug.crystal_mass(&p);
        mass = mass.max(((after - before) / before).abs());

        let n = rng.random_range(2..300);
        let mut slug = Slug {
            z: 0.5,
            mass: 5e-4,
            conc: 0.14,
            temp: 300.0,
            particles: (0..n).map(|_| rng.random_range(1e-5..5e-4)).collect(),
        };
        let cube = |s: &Slug| s.particles.iter().map(|l| l * l * l).sum::<f64>();
        let before = cube(&slug);
        mc_population_step(&mut slug, &p, 0.0, rng.random_range(1e-3..1e-1), 5.0, &mut rng);
        volume = volume.max(((cube(&slug) - before) / before).abs());

        let cells = rng.random_range(10..200);
        let a = rng.random_range(-0.5..36.0);
        let q = rng.random_range(-50.0..50.0);
        let parts = heat_split(a, a + rng.random_range(0.0..8.0), q, 36.0 / cells as f64, cells).unwrap();
        let sum: f64 = parts.iter().map(|(_, v)| v).sum();
        split = split.max((sum - q).abs() / f64::abs(q));
    }
    line(
        3,
        "conservation suite",
        mass <= MASS_TOL && volume <= VOLUME_TOL && split <= SPLIT_TOL,
        format!(
            "mass {mass:.1e} <= {MASS_TOL:.0e}, sum L^3 {volume:.1e} <= {VOLUME_TOL:.0e}, heat split {split:.1e} <= {SPLIT_TOL:.0e}"
        ),
    )
}

/// L1 error of periodic advection of a Gaussian after a quarter period,
/// against exact cell averages.
fn weno_error(n: usize) -> f64 {
    let dz = 1.0 / n as f64;
    let width = 0.1;
    let avg = |a: f64, b: f64, shift: f64| {
        // exact mean of exp(-((x - 0.5 - shift) / w)^2) over [a, b], periodic images included
        let mut s = 0.0;
        for image in -2..=2 {
            let c = 0.5 + shift + image as f64;
            s += libm::erf((b - c) / width) - libm::erf((a - c) / width);
        }
        s * width * std::f64::consts::PI.sqrt() / 2.0 / (b - a)
    };
    let mut u: Vec<f64> = (0..n).map(|i| avg(i as f64 * dz, (i + 1) as f64 * dz, 0.0)).collect();
    let t_end = 0.25;
    // time step shrinks like dz^(5/3) so the RK3 error stays below the spatial error
    let dt_target = 0.2 * dz * (dz / (1.0 / 40.0)).powf(2.0 / 3.0);
    let steps = (t_end / dt_target).ceil() as usize;
    let dt = t_end / steps as f64;
    for _ in 0..steps {
        integrate(&mut u, dt, GridIntegrator::SspRk3, |v, out| advection_rhs(v, 1.0, dz, Boundary::Periodic, out));
    }
    (0..n)
        .map(|i| (u[i] - avg(i as f64 * dz, (i + 1) as f64 * dz, t_end)).abs() * dz)
        .sum()
}

fn criterion_4() -> Line {
    let grids = [40, 80, 160, 320];
    let errors: Vec<f64> = grids.iter().map(|&n| weno_error(n)).collect();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let min = orders.iter().copied().fold(f64::INFINITY, f64::min);
    line(
        4,
        "WENO5 convergence order",
        min >= WENO_MIN_ORDER,
        format!(
            "orders {} over N = {grids:?}, min {min:.2} >= {WENO_MIN_ORDER}",
            orders.iter().map(|o| format!("{o:.2}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

struct Desk {
    trajectories: Vec<Trajectory>,
    dataset: NarxDataset,
    models: Vec<Surrogate>,
    metrics: Vec<(ModelKind, Metrics, Metrics)>,
    seconds: f64,
}

impl Desk {
    fn model(&self, kind: ModelKind) -> &Surrogate {
        self.models.iter().find(|m| m.kind() == kind).unwrap()
    }

    fn prediction(&self, kind: ModelKind) -> &Metrics {
        &self.metrics.iter().find(|m| m.0 == kind).unwrap().1
    }
}

fn desk_pipeline() -> Desk {
    let start = Instant::now();
    let cfg = DataGenConfig {
        n_samples: DESK_SAMPLES,
        n_runs: 10,
        seed: 0,
        ..DataGenConfig::default()
    };
    let data = generate_data(&PlantParams::default(), &SimConfig::default(), &cfg).unwrap();
    assert!(data.errors.is_empty(), "data generation failed: {:?}", data.errors);
    let (dataset, models) = train_models(&data.trajectories, &case_study_surrogate_config(), &ModelKind::ALL).unwrap();
    let metrics = test_metrics(&dataset, &models);
    Desk {
        trajectories: data.trajectories,
        dataset,
        models,
        metrics,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn split_sizes(desk: &Desk) -> (usize, usize, usize, bool) {
    let s = &desk.dataset.splits;
    let (tr, cal, te) = (s.train.len(), s.calibration.len(), s.test.len());
    (tr, cal, te, tr >= MIN_TRAIN && cal >= MIN_CAL && te >= MIN_TEST)
}

fn criterion_5(desk: &Desk) -> Line {
    let (tr, cal, te, sized) = split_sizes(desk);
    let cov = desk.prediction(ModelKind::Cqr).coverage.unwrap();
    line(
        5,
        "CQR test coverage",
        sized && (cov - CQR_TARGET).abs() <= CQR_TOL,
        format!(
            "{:.2}% in 95 +/- 3; train/cal/test {tr}/{cal}/{te}; data + training {:.0} s",
            100.0 * cov,
            desk.seconds
        ),
    )
}

fn criterion_6(desk: &Desk) -> Line {
    let (.., sized) = split_sizes(desk);
    let cov = desk.prediction(ModelKind::Bll).coverage.unwrap();
    line(
        6,
        "BLL m = 2 test coverage",
        sized && cov >= BLL_RANGE.0 && cov <= BLL_RANGE.1,
        format!("{:.2}% in [92, 99]", 100.0 * cov),
    )
}

fn criterion_7(desk: &Desk) -> Line {
    let per: Vec<String> = ModelKind::ALL
        .iter()
        .map(|&k| format!("{} {:.2e}", k.name(), desk.prediction(k).mse))
        .collect();
    let worst = ModelKind::ALL.iter().map(|&k| desk.prediction(k).mse).fold(0.0, f64::max);
    line(
        7,
        "one-step normalized MSE",
        worst <= MSE_MAX,
        format!("{} (all <= {MSE_MAX:.0e})", per.join(", ")),
    )
}

fn criterion_8() -> Line {
    let mut worst = 0.0f64;
    for seed in 0..3 {
        for objective in [
            Objective::Mse,
            Objective::Pinball { tau: 0.025 },
            Objective::Pinball { tau: 0.5 },
            Objective::Pinball { tau: 0.975 },
        ] {
            worst = worst.max(network_gradient_error(objective, seed));
        }
        worst = worst.max(evidence_gradient_error(seed));
        for (model, mode) in [
            (random_nn(seed), UncertaintyMode::Nominal),
            (random_cqr(seed), UncertaintyMode::Cqr),
            (random_bll(seed), UncertaintyMode::Bll),
        ] {
            for tracking in [false, true] {
                worst = worst.max(rollout_gradient_error(&model, mode, seed, tracking).0);
            }
        }
    }
    line(
        8,
        "gradient oracles",
        worst < GRAD_TOL,
        format!("MSE, pinball, evidence, rollout: max rel error {worst:.1e} < {GRAD_TOL:.0e}"),
    )
}

struct CaseRuns {
    reports: Vec<Vec<CaseStudyReport>>,
}

impl CaseRuns {
    fn mean(&self, kind: ModelKind, f: impl Fn(&CaseStudyReport) -> f64) -> f64 {
        let v: Vec<f64> = self.reports.iter().flatten().filter(|r| r.model == kind).map(&f).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn case_study_runs(desk: &Desk) -> CaseRuns {
    let reports = (0..CASE_SEEDS)
        .map(|seed| {
            let sc = ScenarioConfig {
                seed,
                ..ScenarioConfig::default()
            };
            case_study_1(&desk.models, &PlantParams::default(), &SimConfig::default(), &sc, Execution::Parallel).unwrap()
        })
        .collect();
    CaseRuns { reports }
}

fn criterion_9(runs: &CaseRuns) -> Line {
    let viol = |k| runs.mean(k, |r| r.metrics.violation_fraction_pct);
    let rel = |k| runs.mean(k, |r| r.metrics.avg_relative_violation_pct);
    let cost = |k| runs.mean(k, |r| r.metrics.avg_cost);
    let (vn, vc, vb) = (viol(ModelKind::Nn), viol(ModelKind::Cqr), viol(ModelKind::Bll));
    let (rn, rc) = (rel(ModelKind::Nn), rel(ModelKind::Cqr));
    line(
        9,
        "case study 1 violation ordering",
        vc <= CQR_VIOLATION_RATIO * vn && rc < rn,
        format!(
            "violations NN {vn:.1}% CQR {vc:.1}% BLL {vb:.1}%; rel. violation NN {rn:.3}% CQR {rc:.3}%; cost NN {:.3} CQR {:.3} BLL {:.3}; {CASE_SEEDS} plant seeds",
            cost(ModelKind::Nn),
            cost(ModelKind::Cqr),
            cost(ModelKind::Bll)
        ),
    )
}

/// Controller state taken from a logged window of plant data.
fn logged_state(traj: &Trajectory, k: usize, lag: usize, spec: sfc_core::surrogate::NarxSpec) -> (NarxState, Inputs, f64) {
    let mut st = NarxState::new(spec);
    for row in &traj.rows[k - lag..k] {
        st.observe(row.y, row.inputs);
    }
    st.push_measurement(traj.rows[k].y);
    (st, traj.rows[k - 1].inputs, traj.rows[k].inputs.w_cryst)
}

fn criterion_10(desk: &Desk) -> Line {
    let bll = desk.model(ModelKind::Bll);
    let degenerate = match &bll.model {
        Model::Bll { bll: inner, .. } => Surrogate {
            model: Model::Bll { bll: inner.clone(), m: 0.0 },
            ..bll.clone()
        },
        _ => unreachable!(),
    };
    let spec = bll.spec;
    let nominal = MpcConfig::default();
    let multi = MpcConfig {
        mode: UncertaintyMode::Bll,
        m: 0.0,
        ..nominal
    };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..DEGENERATE_STATES {
        let traj = &desk.trajectories[rng.random_range(0..desk.trajectories.len())];
        let k = rng.random_range(spec.lag + 1..traj.len());
        let (state, prev, w) = logged_state(traj, k, spec.lag, spec);
        let a = solve(&degenerate, &state, &nominal, &prev, w, None).unwrap();
        let b = solve(&degenerate, &state, &multi, &prev, w, None).unwrap();
        let du = a.decision[..3].iter().zip(&b.decision[..3]).fold(0.0f64, |e, (x, y)| e.max((x - y).abs()));
        worst = worst.max(du);
    }
    line(
        10,
        "degenerate tree equivalence",
        worst <= DEGENERATE_TOL,
        format!("{DEGENERATE_STATES} logged states, max first-input gap {worst:.1e} <= {DEGENERATE_TOL:.0e} (box units)"),
    )
}

fn criterion_11() -> Line {
    let (dev, obj) = qp_oracle_mismatch();
    line(
        11,
        "MPC quadratic-program oracle",
        dev < QP_TOL,
        format!("max decision deviation {dev:.1e} < {QP_TOL:.0e}; objective rel. mismatch {obj:.1e}"),
    )
}

fn criterion_12(desk: &Desk) -> (Line, Vec<f64>) {
    let nn = desk.model(ModelKind::Nn);
    let (mut open, mut closed) = (0.0, 0.0);
    let mut times = Vec::new();
    let mut per = Vec::new();
    for seed in 0..TRACKING_SEEDS {
        let sc = ScenarioConfig {
            seed,
            ..tracking_scenario()
        };
        let c = open_vs_closed_loop(nn, &PlantParams::default(), &SimConfig::default(), &sc, None).unwrap();
        open += c.open_loop_rms / TRACKING_SEEDS as f64;
        closed += c.closed_loop_rms / TRACKING_SEEDS as f64;
        per.push(format!("{:.0}/{:.0}", c.open_loop_rms * 1e6, c.closed_loop_rms * 1e6));
        times.extend(c.closed_loop.samples.iter().filter_map(|s| s.record.as_ref().map(|r| r.solve_time_s)));
    }
    (
        line(
            12,
            "open vs closed loop tracking",
            closed < open,
            format!(
                "mean RMS d50 error open {:.1} um, closed {:.1} um; per seed open/closed {}",
                open * 1e6,
                closed * 1e6,
                per.join(" ")
            ),
        ),
        times,
    )
}

fn criterion_13(runs: &CaseRuns, tracking_times: &[f64]) -> Line {
    let mut times: Vec<f64> = runs
        .reports
        .iter()
        .flatten()
        .flat_map(|r| r.trajectory.samples.iter().filter_map(|s| s.record.as_ref().map(|x| x.solve_time_s)))
        .collect();
    times.extend_from_slice(tracking_times);
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let max = times.iter().copied().fold(0.0, f64::max);
    line(
        13,
        "MPC solve-time budget",
        mean < CONTROL_PERIOD,
        format!("{} solves, mean {mean:.4} s, max {max:.4} s < {CONTROL_PERIOD} s period", times.len()),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut lines = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4()];
    let desk = desk_pipeline();
    lines.push(criterion_5(&desk));
    lines.push(criterion_6(&desk));
    lines.push(criterion_7(&desk));
    lines.push(criterion_8());
    let runs = case_study_runs(&desk);
    lines.push(criterion_9(&runs));
    lines.push(criterion_10(&desk));
    lines.push(criterion_11());
    let (l12, tracking_times) = criterion_12(&desk);
    lines.push(l12);
    lines.push(criterion_13(&runs, &tracking_times));
    let failed: Vec<String> = lines.iter().filter(|l| !l.pass).map(|l| format!("{} ({})", l.id, l.name)).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        lines.len() - failed.len(),
        lines.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        return ExitCode::SUCCESS;
    }
    println!("failed: {}", failed.join(", "));
    if std::env::var("SFC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
