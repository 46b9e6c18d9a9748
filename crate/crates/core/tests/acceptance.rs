//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ir_core::cli::{cmd_plot, PlotArgs};
use ir_core::divergence::{
    ir_value, js_divergence_bits, point_mass_jsd_bits, ActionDistribution, ActionId, Agent, DivergenceError,
};
use ir_core::envs::{
    apply_intervention, initial_state, intervention_catalog, step, GridConfig, GridState, InterventionKind,
    ACTION_COUNT,
};
use ir_core::harness::{
    normalize_matrix, run_experiment, summarize, IrMatrix, MatrixGrid, MatrixMeta, RunConfig,
};
use ir_core::render::{render_matrix, RenderSpec};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_config(name: &str) -> RunConfig {
    let path = configs_dir().join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    RunConfig::from_toml(&text).unwrap()
}

fn meta() -> MatrixMeta {
    MatrixMeta {
        pipeline: "fixture".into(),
        algorithm: "fixture".into(),
        checkpoint: 0,
        agents: 10,
        trials: 1,
        spotter_seed: 0,
        sampling_seed: 0,
    }
}

fn grid(rows: Vec<Vec<Option<f64>>>) -> MatrixGrid {
    MatrixGrid {
        intervention_ids: (0..rows.len()).collect(),
        rows,
    }
}

// Agents with a fixed action or a fixed distribution.

struct Fixed {
    action: usize,
    actions: usize,
}

impl Agent<()> for Fixed {
    fn action_count(&self) -> usize {
        self.actions
    }
    fn is_deterministic(&self) -> bool {
        true
    }
    fn sample_action(&self, _: &(), _: &mut dyn RngCore) -> Result<ActionId, DivergenceError> {
        Ok(ActionId(self.action))
    }
}

struct Mixed(ActionDistribution);

impl Agent<()> for Mixed {
    fn action_count(&self) -> usize {
        self.0.action_count()
    }
    fn is_deterministic(&self) -> bool {
        false
    }
    fn sample_action(&self, _: &(), rng: &mut dyn RngCore) -> Result<ActionId, DivergenceError> {
        Ok(self.0.sample(rng))
    }
}

fn divergence_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut cases = 0;
    let mut worst = 0.0f64;
    for n in 2..=4u32 {
        for c in 2..=4usize {
            for code in 0..c.pow(n) {
                let actions: Vec<ActionId> = (0..n).map(|i| ActionId(code / c.pow(i) % c)).collect();
                let lifted: Vec<ActionDistribution> = actions
                    .iter()
                    .map(|a| ActionDistribution::point_mass(*a, c).unwrap())
                    .collect();
                let fast = point_mass_jsd_bits(&actions, c).unwrap();
                let generic = js_divergence_bits(&lifted).unwrap();
                worst = worst.max((fast - generic).abs());
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-12 && elapsed < Duration::from_secs(1),
        format!("{cases} cases, max |diff| {worst:.1e}, {elapsed:.2?}"),
    )
}

fn bounds_and_extremes() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut problems = Vec::new();
    for set in 0..1000 {
        let n = rng.gen_range(2..=12);
        let c = rng.gen_range(2..=6);
        let agents: Vec<Fixed> = (0..n)
            .map(|_| Fixed {
                action: rng.gen_range(0..c),
                actions: c,
            })
            .collect();
        let r = ir_value(&(), &agents, 30, set).unwrap();
        if !(0.0..=1.0).contains(&r.value) || r.samples_used != 1 {
            problems.push(format!("set {set}: {r:?}"));
        }
        let a = agents[0].action;
        let unanimous: Vec<Fixed> = (0..n).map(|_| Fixed { action: a, actions: c }).collect();
        let u = ir_value(&(), &unanimous, 30, set).unwrap().value;
        if u != 1.0 {
            problems.push(format!("set {set}: unanimity gave {u}"));
        }
        let b = (a + 1 + rng.gen_range(0..c - 1)) % c;
        let split = [Fixed { action: a, actions: c }, Fixed { action: b, actions: c }];
        let z = ir_value(&(), &split, 30, set).unwrap().value;
        if z != 0.0 {
            problems.push(format!("set {set}: two-agent disagreement gave {z}"));
        }
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            "1000 sets in [0,1]; unanimity = 1.0; two-agent disagreement = 0.0".into()
        } else {
            problems[..problems.len().min(3)].join("; ")
        },
    )
}

fn stochastic_convergence() -> Outcome {
    let start = Instant::now();
    let coin = || Mixed(ActionDistribution::uniform(2).unwrap());
    let r = ir_value(&(), &[coin(), coin()], 100_000, 0x5eed).unwrap();
    let elapsed = start.elapsed();
    // Agreement (prob 1/2) scores 1, disagreement scores 0.
    check(
        (r.value - 0.5).abs() <= 0.01 && r.samples_used == 100_000 && elapsed < Duration::from_secs(5),
        format!("mean {:.4} over {} trials, {elapsed:.2?}", r.value, r.samples_used),
    )
}

fn summary_identity_and_fixtures() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (m, k) = (rng.gen_range(2..12), rng.gen_range(1..40));
        let rows = (0..m).map(|_| (0..k).map(|_| Some(rng.gen::<f64>())).collect()).collect();
        let s = summarize(&IrMatrix::from_grid(grid(rows), meta()).unwrap());
        worst = worst.max((s.normalized - (s.intervened - s.original)).abs());
    }

    // Matrices whose row means hit the published table rows; values spread
    // symmetrically around each mean.
    let fixtures = [
        ("a2c 5e4", 0.347, 0.352, "0.347 0.352 0.005"),
        ("dqn 3e6", 0.446, 0.791, "0.446 0.791 0.345"),
        ("rainbow 5e6", 0.534, 0.676, "0.534 0.676 0.142"),
    ];
    let mut mismatches = Vec::new();
    for (name, original, intervened, expected) in fixtures {
        let spread = |mean: f64, k: usize| Some(mean + if k % 2 == 0 { 0.125 } else { -0.125 });
        let mut rows: Vec<Vec<Option<f64>>> = vec![(0..30).map(|k| spread(original, k)).collect()];
        rows.extend((1..23).map(|m| (0..30).map(|k| spread(intervened, k + m)).collect()));
        let s = summarize(&IrMatrix::from_grid(grid(rows), meta()).unwrap());
        let got = format!("{:.3} {:.3} {:.3}", s.original, s.intervened, s.normalized);
        if got != expected {
            mismatches.push(format!("{name}: {got} != {expected}"));
        }
    }
    check(
        worst <= 1e-12 && mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("identity max |diff| {worst:.1e}; 3 table rows reproduced")
        } else {
            mismatches.join("; ")
        },
    )
}

fn determinism() -> Outcome {
    let base = load_config("default.toml");
    if base != RunConfig::default() {
        return Err("configs/default.toml differs from the built-in default".into());
    }
    let run = |workers: Option<usize>| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base.clone();
        cfg.workers = workers;
        let start = Instant::now();
        let report = run_experiment(&cfg, dir.path()).unwrap();
        (report.manifest_sha256, report.summaries.len(), start.elapsed())
    };
    let (a, matrices, elapsed) = run(None);
    let (b, _, _) = run(None);
    let (one, _, _) = run(Some(1));
    let (eight, _, _) = run(Some(8));
    check(
        a == b && one == eight && a == one && matrices == 16 && elapsed < Duration::from_secs(600),
        format!(
            "{matrices} matrices; hashes rerun {} / 1 vs 8 workers {}; full run {elapsed:.1?}",
            if a == b { "equal" } else { "differ" },
            if one == eight { "equal" } else { "differ" },
        ),
    )
}

fn untrained_robustness() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.include_untrained = true;
    cfg.pipelines.retain(|p| p.algorithm.to_string() != "softmax_q");
    for p in &mut cfg.pipelines {
        p.checkpoints = Some(vec![100]);
    }
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&cfg, dir.path()).unwrap();
    let mut cells = 0;
    let mut bad = 0;
    for (raw, _) in report.matrices.iter().filter(|(m, _)| m.meta.checkpoint == 0) {
        for v in raw.grid.rows.iter().flatten().flatten() {
            cells += 1;
            if *v != 1.0 {
                bad += 1;
            }
        }
    }
    check(
        cells > 0 && bad == 0,
        format!("{cells} checkpoint-0 cells across 3 greedy pipelines, {bad} differ from 1.0"),
    )
}

fn performance_without_robustness() -> Outcome {
    let cfg = load_config("symmetric.toml");
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&cfg, dir.path()).unwrap();
    let final_ckpt = report.summaries.iter().map(|s| s.checkpoint).max().unwrap();
    let summary = report.summaries.iter().find(|s| s.checkpoint == final_ckpt).unwrap();
    let perf = std::fs::read_to_string(dir.path().join("performance.csv")).unwrap();
    let returns: Vec<f64> = perf
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|f| f[2].parse::<u64>().unwrap() == final_ckpt)
        .map(|f| f[4].parse().unwrap())
        .collect();
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    let spread = returns.iter().map(|r| (r - mean).abs()).fold(0.0, f64::max);
    check(
        returns.len() == 10 && spread <= 0.05 * mean.abs() && summary.intervened < 0.7,
        format!(
            "checkpoint {final_ckpt}: mean return {mean:.2} (max deviation {spread:.2}), mean intervened R {:.3}",
            summary.intervened
        ),
    )
}

/// Static feature an intervention sets; must hold at every later step.
fn feature_holds(kind: &InterventionKind, s: &GridState) -> bool {
    match kind {
        InterventionKind::Null | InterventionKind::MoveAgent { .. } => true,
        InterventionKind::RemoveWall { cell } => !s.walls().contains(cell),
        InterventionKind::AddWall { cell } => s.walls().contains(cell),
        InterventionKind::RemoveHazard { cell } => !s.hazards().contains(cell),
        InterventionKind::MoveHazard { from, to } => !s.hazards().contains(from) && s.hazards().contains(to),
        InterventionKind::MoveGoal { to } => s.goal() == *to,
        InterventionKind::SetTag { tag } => s.tag() == *tag,
    }
}

/// 50 random actions from `start`, restarting from `start` after each
/// terminal transition.
fn rollout(start: &GridState, seed: u64) -> Vec<ir_core::envs::StepOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = start.clone();
    let mut out = Vec::new();
    for _ in 0..50 {
        let o = step(&state, ActionId(rng.gen_range(0..ACTION_COUNT))).unwrap();
        state = if o.terminal { start.clone() } else { o.next_state.clone() };
        out.push(o);
    }
    out
}

fn intervention_persistence() -> Outcome {
    let mut checked = 0;
    let mut problems = Vec::new();
    for (layout, cfg) in [("default", GridConfig::default()), ("symmetric", GridConfig::symmetric())] {
        let s0 = initial_state(&cfg).unwrap();
        for iv in intervention_catalog(&cfg) {
            let Ok(s) = apply_intervention(&s0, &iv) else { continue };
            checked += 1;
            let outcomes = rollout(&s, iv.id as u64);
            if !outcomes.iter().all(|o| feature_holds(&iv.kind, &o.next_state)) {
                problems.push(format!("{layout}: `{}` not persistent", iv.label));
            }
            if let InterventionKind::SetTag { .. } = iv.kind {
                let plain = rollout(&s0, iv.id as u64);
                let same = plain.iter().zip(&outcomes).all(|(p, o)| {
                    p.reward == o.reward
                        && p.terminal == o.terminal
                        && p.truncated == o.truncated
                        && p.next_state.agent() == o.next_state.agent()
                        && p.next_state.step_count() == o.next_state.step_count()
                        && p.next_state.observation_key() == o.next_state.observation_key()
                        && p.next_state.tag() != o.next_state.tag()
                });
                if !same {
                    problems.push(format!("{layout}: cosmetic intervention changed outcomes"));
                }
            }
        }
    }
    check(
        problems.is_empty() && checked > 0,
        if problems.is_empty() {
            format!("{checked} interventions persisted over 50 steps; cosmetic rollout identical")
        } else {
            problems.join("; ")
        },
    )
}

fn null_row_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut nonzero = 0;
    for _ in 0..200 {
        let (m, k) = (rng.gen_range(1..10), rng.gen_range(1..30));
        let mut rows: Vec<Vec<Option<f64>>> = vec![(0..k).map(|_| Some(rng.gen::<f64>())).collect()];
        rows.extend((1..m).map(|_| (0..k).map(|_| rng.gen_bool(0.8).then(|| rng.gen::<f64>())).collect::<Vec<_>>()));
        let rel = normalize_matrix(&IrMatrix::from_grid(grid(rows), meta()).unwrap()).unwrap();
        nonzero += rel.grid.rows[0].iter().filter(|v| **v != Some(0.0)).count();
    }

    // Constructed fixtures: baseline b, offsets chosen well away from the bound.
    let offsets: [f64; 10] = [0.0, 0.1, -0.3, 0.45, -0.55, 0.6, -0.75, 0.8, 0.2, -0.49];
    let mut mismatches = Vec::new();
    for (f, bound) in [(0usize, 0.5), (1, 0.5), (2, 0.25)] {
        let base = [0.1, 0.15, 0.9, 0.5, 0.2];
        let mut rows = vec![base.iter().map(|b| Some(*b)).collect::<Vec<_>>()];
        let mut expected = 0;
        for m in 1..7 {
            let mut row = Vec::new();
            for (k, b) in base.iter().enumerate() {
                let d = offsets[(m * 3 + k + f) % offsets.len()];
                let v = b + d;
                if !(0.0..=1.0).contains(&v) || (m + k) % 5 == f {
                    row.push(None);
                    continue;
                }
                if d.abs() > bound {
                    expected += 1;
                }
                row.push(Some(v));
            }
            rows.push(row);
        }
        let g = grid(rows);
        let spec = RenderSpec {
            bound,
            ..RenderSpec::relative()
        };
        let rendered = render_matrix(&g, &spec).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("raw.csv");
        std::fs::write(&input, g.to_csv()).unwrap();
        let mut out = Vec::new();
        let args = PlotArgs {
            input,
            mode: "relative".into(),
            bound,
            colormap: None,
            scale: 1,
            output: None,
        };
        cmd_plot(&args, &mut out).unwrap();
        let report = String::from_utf8(out).unwrap();
        let line = format!("truncated {expected}/{} cells", g.row_count() * g.column_count());
        if rendered.truncated != expected || !report.contains(&line) {
            mismatches.push(format!("fixture {f}: counted {} expected {expected}", rendered.truncated));
        }
    }
    check(
        nonzero == 0 && mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("null row zero in 200 random matrices ({nonzero} nonzero); 3 truncation fixtures exact")
        } else {
            mismatches.join("; ")
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("divergence oracle equivalence", divergence_oracle_equivalence),
        ("IR bounds and extremes", bounds_and_extremes),
        ("stochastic estimator convergence", stochastic_convergence),
        ("summary identity and table fixtures", summary_identity_and_fixtures),
        ("determinism", determinism),
        ("untrained robustness / performance without robustness", || {
            let a = untrained_robustness();
            let b = performance_without_robustness();
            let text = |o: &Outcome| match o {
                Ok(s) => format!("(a) ok: {s}"),
                Err(s) => format!("(a) FAILED: {s}"),
            };
            let joined = format!("{}; {}", text(&a), text(&b).replacen("(a)", "(b)", 1));
            check(a.is_ok() && b.is_ok(), joined)
        }),
        ("intervention persistence", intervention_persistence),
        ("null-row contract", null_row_contract),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
