//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Reference values come from closed forms or from brute-force code written here,
//! independent of the solvers and selectors under test.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use osp_cli::{run_pipeline, DatasetSource, MetricsRecord, RunConfig};
use osp_core::eval::{osp_overlap, sr_baseline};
use osp_core::net::{
    backward, loss_value, softmax, Activation, BackboneSpec, BatchLoss, CrossEntropy, SelectiveModel,
};
use osp_core::oracle::{
    analytic_example_coverage, analytic_one_sided_value, sample_analytic_example, solve_osp_decoupled, solve_osp_exact,
    solve_sc_exact, AlphaAllocation, FiniteHypothesisClass,
};
use osp_core::select::{
    default_thresholds, desk_mu_grid, harden, select_coverage_constrained, select_error_constrained, GridCell,
    SelectionCriterion, SelectionGrid,
};
use osp_core::synth::{SyntheticKind, SyntheticSpec};
use osp_core::train::{ConstraintLoss, DgLoss, LagrangianState, OspLagrangian, RestrictedLoss};
use osp_core::{LabeledDataset, Region};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = (bool, String);

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn random_model(rng: &mut ChaCha8Rng, input: usize, outputs: usize) -> SelectiveModel {
    let depth = rng.random_range(1..=2);
    let mut widths = vec![input];
    widths.extend((0..depth).map(|_| rng.random_range(2..=6)));
    let act = [Activation::Relu, Activation::Tanh, Activation::Identity][rng.random_range(0..3)];
    let spec = BackboneSpec::new(widths, act).unwrap();
    let mut m = SelectiveModel::new(spec, outputs, rng.random()).unwrap();
    // Spread the Glorot draws so scores are not all near uniform.
    let scale = rng.random_range(0.5..3.0);
    let p: Vec<f64> = m.parameters().iter().map(|w| w * scale + rng.random_range(-0.1..0.1)).collect();
    m.set_parameters(&p).unwrap();
    m
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize, spread: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-spread..spread)).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// 1, 2, 10: the uniform example where class 0 has probability x.

fn c01_analytic_exact() -> Check {
    let mut worst: f64 = 0.0;
    for eps in [0.0025, 0.01, 0.04, 0.09] {
        let (c, _, _) = analytic_example_coverage(eps).unwrap();
        worst = worst.max((c - 2.0 * f64::sqrt(eps)).abs());
    }
    (worst <= 1e-12, format!("max |C(ε) − 2√ε| = {worst:.1e} over 4 levels"))
}

fn c02_analytic_empirical() -> Check {
    let cuts: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
    let class = FiniteHypothesisClass::thresholds(0, &cuts);
    let mut ok = true;
    let mut parts = Vec::new();
    for eps in [0.01, 0.04] {
        let covs: Vec<f64> = (0..5)
            .map(|s| {
                let d = sample_analytic_example(100_000, 1000 + s).unwrap();
                solve_sc_exact(&d, &class, eps).unwrap().value
            })
            .collect();
        let med = median(covs);
        let target = 2.0 * f64::sqrt(eps);
        ok &= (med - target).abs() <= 0.02;
        parts.push(format!("ε={eps}: median {med:.4} vs {target:.4}"));
    }
    (ok, parts.join("; "))
}

/// Population mass and class-1 mass of an axis interval inside [0, 1].
fn analytic_masses(r: &Region) -> (f64, f64) {
    let (_, lo, hi) = r.as_axis_interval().expect("threshold sets are axis intervals");
    let (a, b) = (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0));
    let mass = (b - a).max(0.0);
    let class0 = (b * b - a * a) / 2.0;
    (mass, mass - class0)
}

/// Seeds per sample size. At 30 the two larger medians both sit within noise of zero and
/// their order flips between seed batches; 1000 resolves it.
const ERM_SEEDS: u64 = 1000;

fn c10_erm_trend() -> Check {
    let eps = 0.04;
    let truth = f64::sqrt(2.0 * eps);
    let truth_module = analytic_one_sided_value(eps).unwrap();
    let mut devs = Vec::new();
    let mut vios = Vec::new();
    for n in [100usize, 1000, 10_000] {
        let mut dev = Vec::new();
        let mut vio = Vec::new();
        for s in 0..ERM_SEEDS {
            let d = sample_analytic_example(n, 77_000 + 131 * n as u64 + s).unwrap();
            let class = FiniteHypothesisClass::thresholds(0, &FiniteHypothesisClass::data_cuts(&d, 0));
            let sol = solve_osp_exact(&d, &class, 0, eps).unwrap();
            let (mass, err) = match sol.choice[0] {
                Some(c) => analytic_masses(&class.candidates()[c]),
                None => (0.0, 0.0),
            };
            dev.push((mass - truth).abs());
            vio.push((err - eps).max(0.0));
        }
        devs.push(median(dev));
        vios.push(median(vio));
    }
    let mono = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
    let ok = mono(&devs) && mono(&vios) && (truth - truth_module).abs() < 1e-15;
    (
        ok,
        format!(
            "n=10²,10³,10⁴ ({ERM_SEEDS} seeds): deviation {:.4} {:.4} {:.4}; violation {:.4} {:.4} {:.4}",
            devs[0], devs[1], devs[2], vios[0], vios[1], vios[2]
        ),
    )
}

// ---------------------------------------------------------------------------
// 3, 4: random finite instances against a brute-force selective oracle.

struct Instance {
    data: LabeledDataset,
    class: FiniteHypothesisClass,
    eps: f64,
}

fn instance(i: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(0xace0 + i as u64);
    let k = 2 + i % 3;
    let eps = [0.02, 0.05, 0.1][(i / 3) % 3];
    let n = rng.random_range(50..=200);
    let centres: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random();
        let nearest = (0..k)
            .min_by(|&a, &b| (centres[a] - x).abs().total_cmp(&(centres[b] - x).abs()))
            .unwrap();
        let y = if rng.random::<f64>() < 0.8 { nearest } else { rng.random_range(0..k) };
        xs.push(vec![x]);
        ys.push(y);
    }
    let m = [20, 10, 6][k - 2];
    let mut cuts: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
    cuts.sort_by(f64::total_cmp);
    let mut sets = FiniteHypothesisClass::thresholds(0, &cuts).candidates().to_vec();
    sets.extend_from_slice(FiniteHypothesisClass::intervals(0, &cuts).candidates());
    Instance {
        data: LabeledDataset::from_parts(xs, ys, k).unwrap(),
        class: FiniteHypothesisClass::explicit(sets),
        eps,
    }
}

/// Membership of every point in every candidate.
fn membership(inst: &Instance) -> Vec<Vec<bool>> {
    inst.class
        .candidates()
        .iter()
        .map(|r| inst.data.iter().map(|e| r.contains(&e.features)).collect())
        .collect()
}

/// Largest accepted count over all K-tuples of pairwise point-disjoint candidates (or empty
/// slots) whose wrong-label count is within ε n.
fn brute_force_sc(inst: &Instance, member: &[Vec<bool>]) -> usize {
    let n = inst.data.len();
    let k = inst.data.num_classes();
    let labels: Vec<usize> = inst.data.labels().collect();
    let c = member.len();
    let size: Vec<usize> = member.iter().map(|m| m.iter().filter(|&&b| b).count()).collect();
    let wrong: Vec<Vec<usize>> = member
        .iter()
        .map(|m| {
            (0..k)
                .map(|slot| (0..n).filter(|&i| m[i] && labels[i] != slot).count())
                .collect()
        })
        .collect();
    let disjoint: Vec<Vec<bool>> = (0..c)
        .map(|a| (0..c).map(|b| (0..n).all(|i| !(member[a][i] && member[b][i]))).collect())
        .collect();
    let limit = inst.eps * n as f64 + 1e-9;
    let mut best = 0;
    let mut tuple = vec![usize::MAX; k];
    fn rec(
        slot: usize,
        cov: usize,
        err: usize,
        tuple: &mut Vec<usize>,
        ctx: &(usize, &[usize], &[Vec<usize>], &[Vec<bool>], f64),
        best: &mut usize,
    ) {
        let (c, size, wrong, disjoint, limit) = *ctx;
        if slot == tuple.len() {
            *best = (*best).max(cov);
            return;
        }
        tuple[slot] = usize::MAX;
        rec(slot + 1, cov, err, tuple, ctx, best);
        for cand in 0..c {
            let e = err + wrong[cand][slot];
            if e as f64 > limit || !tuple[..slot].iter().all(|&o| o == usize::MAX || disjoint[o][cand]) {
                continue;
            }
            tuple[slot] = cand;
            rec(slot + 1, cov + size[cand], e, tuple, ctx, best);
        }
        tuple[slot] = usize::MAX;
    }
    rec(0, 0, 0, &mut tuple, &(c, &size, &wrong, &disjoint, limit), &mut best);
    best
}

/// Accepted count, error count and overlap count of the decoupled sets built from raw picks.
fn decoupled_counts(inst: &Instance, member: &[Vec<bool>], raw: &[Option<usize>]) -> (usize, usize, usize) {
    let (mut acc, mut err, mut over) = (0, 0, 0);
    for (i, e) in inst.data.iter().enumerate() {
        let hits: Vec<usize> = raw
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_some_and(|c| member[c][i]))
            .map(|(k, _)| k)
            .collect();
        if let Some(&first) = hits.first() {
            acc += 1;
            err += usize::from(e.label != first);
        }
        over += usize::from(hits.len() >= 2);
    }
    (acc, err, over)
}

struct PropSuite {
    instances: usize,
    gap_violations: usize,
    infeasible: usize,
    not_disjoint: usize,
    solver_mismatch: usize,
    worst_gap_over_eps: f64,
    uniform_gap_violations: usize,
    overlap_violations: usize,
    worst_overlap_over_eps: f64,
    allocations: usize,
}

fn prop_suite() -> PropSuite {
    let mut s = PropSuite {
        instances: 300,
        gap_violations: 0,
        infeasible: 0,
        not_disjoint: 0,
        solver_mismatch: 0,
        worst_gap_over_eps: f64::NEG_INFINITY,
        uniform_gap_violations: 0,
        overlap_violations: 0,
        worst_overlap_over_eps: 0.0,
        allocations: 0,
    };
    for i in 0..s.instances {
        let inst = instance(i);
        let member = membership(&inst);
        let n = inst.data.len() as f64;
        let best = brute_force_sc(&inst, &member);
        let exact = solve_sc_exact(&inst.data, &inst.class, inst.eps).unwrap();
        if (exact.value * n).round() as usize != best {
            s.solver_mismatch += 1;
        }
        let c_opt = best as f64 / n;

        let k = inst.data.num_classes();
        let count_grid = AlphaAllocation::count_grid(k, inst.eps, inst.data.len());
        let uniform = AlphaAllocation::default_grid(k);
        for (grid, counted) in [(&count_grid, true), (&uniform, false)] {
            let sol = solve_osp_decoupled(&inst.data, &inst.class, inst.eps, grid).unwrap();
            let (acc, err, _) = decoupled_counts(&inst, &member, &sol.outcomes[sol.best_index].raw);
            let gap_ok = acc as f64 / n >= c_opt - 2.0 * inst.eps - 1e-12;
            if counted {
                s.worst_gap_over_eps = s.worst_gap_over_eps.max((c_opt - acc as f64 / n) / inst.eps);
                s.gap_violations += usize::from(!gap_ok);
                s.infeasible += usize::from(err as f64 / n > inst.eps + 1e-12);
                s.not_disjoint += usize::from(!sol.best.family.is_empirically_disjoint(&inst.data).unwrap());
            } else {
                s.uniform_gap_violations += usize::from(!gap_ok);
            }
            for o in &sol.outcomes {
                s.allocations += 1;
                let (_, _, over) = decoupled_counts(&inst, &member, &o.raw);
                let mass = over as f64 / n;
                s.worst_overlap_over_eps = s.worst_overlap_over_eps.max(mass / inst.eps);
                if mass > 2.0 * inst.eps + 1e-12 || (mass - o.overlap).abs() > 1e-12 {
                    s.overlap_violations += 1;
                }
            }
        }
    }
    s
}

fn c03_prop_gap(s: &PropSuite) -> Check {
    let ok = s.gap_violations == 0 && s.infeasible == 0 && s.not_disjoint == 0 && s.solver_mismatch == 0;
    (
        ok,
        format!(
            "{} instances: gap violations {}, infeasible {}, overlapping {}, exact-solver mismatches {}; worst gap {:.2}ε (uniform α grid, informational: {} violations)",
            s.instances, s.gap_violations, s.infeasible, s.not_disjoint, s.solver_mismatch, s.worst_gap_over_eps, s.uniform_gap_violations
        ),
    )
}

fn c04_lemma_overlap(s: &PropSuite) -> Check {
    (
        s.overlap_violations == 0,
        format!(
            "{} allocations over {} instances: violations {}, worst overlap {:.2}ε",
            s.allocations, s.instances, s.overlap_violations, s.worst_overlap_over_eps
        ),
    )
}

// ---------------------------------------------------------------------------
// 5, 6, 9, 11: networks.

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn c05_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let names = ["cross-entropy", "restricted", "constraint", "lagrangian", "gamblers"];
    let mut worst = [0.0f64; 5];
    let per_loss = 25;
    for (li, _) in names.iter().enumerate() {
        for _ in 0..per_loss {
            let k = rng.random_range(2..=5);
            let dim = rng.random_range(1..=4);
            let outputs = if li == 4 { k + 1 } else { k };
            let mut model = random_model(&mut rng, dim, outputs);
            let rows = rng.random_range(3..=12);
            let xs = random_points(&mut rng, rows, dim, 2.0);
            let ys: Vec<usize> = (0..rows).map(|_| rng.random_range(0..k)).collect();
            let batch = LabeledDataset::from_parts(xs, ys, outputs).unwrap();
            let target = rng.random_range(0..k);
            let loss: Box<dyn BatchLoss> = match li {
                0 => Box::new(CrossEntropy),
                1 => Box::new(RestrictedLoss { k: target }),
                2 => Box::new(ConstraintLoss { k: target }),
                3 => {
                    let mut state = LagrangianState::new(k, rng.random_range(0.0..4.0)).unwrap();
                    for v in state.lambdas.iter_mut().chain(state.phis.iter_mut()) {
                        *v = rng.random_range(0.0..3.0);
                    }
                    Box::new(OspLagrangian {
                        state,
                        unrestricted: rng.random(),
                    })
                }
                _ => Box::new(DgLoss::new(rng.random_range(1.0..k as f64), k).unwrap()),
            };
            let (_, g) = backward(&model, &batch, loss.as_ref()).unwrap();
            let analytic = g.flat();
            let p0 = model.parameters();
            let h = 1e-5;
            let mut numeric = vec![0.0; p0.len()];
            for j in 0..p0.len() {
                let mut p = p0.clone();
                p[j] = p0[j] + h;
                model.set_parameters(&p).unwrap();
                let up = loss_value(&model, &batch, loss.as_ref()).unwrap();
                p[j] = p0[j] - h;
                model.set_parameters(&p).unwrap();
                let down = loss_value(&model, &batch, loss.as_ref()).unwrap();
                numeric[j] = (up - down) / (2.0 * h);
            }
            model.set_parameters(&p0).unwrap();
            worst[li] = worst[li].max(rel_err(&analytic, &numeric));
        }
    }
    let ok = worst.iter().all(|w| *w < 1e-4);
    let detail = names
        .iter()
        .zip(worst)
        .map(|(n, w)| format!("{n} {w:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    (ok, format!("{per_loss} pairs per loss, worst relative error: {detail}"))
}

fn c06_softmax() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mut worst_sum, mut worst_shift, mut worst_ref) = (0.0f64, 0.0f64, 0.0f64);
    let mut nonpositive = 0;
    let mut model = random_model(&mut rng, 3, 4);
    for i in 0..10_000 {
        if i % 10 == 0 {
            let k = rng.random_range(2..=8);
            let dim = rng.random_range(1..=5);
            model = random_model(&mut rng, dim, k);
        }
        let x: Vec<f64> = (0..model.input_dim()).map(|_| rng.random_range(-5.0..5.0)).collect();
        let f = model.forward(&x).unwrap();
        nonpositive += f.iter().filter(|&&v| !(v > 0.0)).count();
        worst_sum = worst_sum.max((f.iter().sum::<f64>() - 1.0).abs());
        let z = model.logits(&x).unwrap();
        let c = rng.random_range(-50.0..50.0);
        let shifted = softmax(&z.iter().map(|v| v + c).collect::<Vec<_>>());
        worst_shift = worst_shift.max(f.iter().zip(&shifted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        worst_ref = worst_ref.max(f.iter().zip(&e).map(|(a, b)| (a - b / s).abs()).fold(0.0, f64::max));
    }
    let ok = nonpositive == 0 && worst_sum <= 1e-9 && worst_shift <= 1e-9 && worst_ref <= 1e-9;
    (
        ok,
        format!(
            "10⁴ pairs: nonpositive {nonpositive}, max |Σf−1| {worst_sum:.1e}, max shift change {worst_shift:.1e}, max vs direct formula {worst_ref:.1e}"
        ),
    )
}

fn c09_sr_harden() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut mismatches = 0;
    let mut compared = 0;
    for _ in 0..20 {
        let k = rng.random_range(2..=6);
        let dim = rng.random_range(1..=4);
        let model = Arc::new(random_model(&mut rng, dim, k));
        let pts = random_points(&mut rng, 500, dim, 4.0);
        let mut ts: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
        // Thresholds sitting exactly on attained maxima exercise the boundary.
        ts.push(model.forward(&pts[0]).unwrap().into_iter().fold(0.0, f64::max));
        ts.extend([0.0, 1.0 / k as f64, 1.0]);
        for t in ts {
            let sr = sr_baseline(Arc::clone(&model), t);
            let hd = harden(Arc::clone(&model), t);
            for x in &pts {
                compared += 1;
                if sr.classify(x).unwrap() != hd.classify(x).unwrap() {
                    mismatches += 1;
                }
            }
        }
    }
    (
        mismatches == 0 && compared >= 10_000,
        format!("{compared} decisions compared, {mismatches} mismatches"),
    )
}

fn c11_pigeonhole() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut positive = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.random_range(2..=6);
        let dim = rng.random_range(1..=4);
        let model = random_model(&mut rng, dim, k);
        let pts = random_points(&mut rng, 10, dim, 4.0);
        let d = LabeledDataset::from_parts(pts, vec![0; 10], k).unwrap();
        for t in [0.5, rng.random_range(0.5..1.0), 1.0] {
            let o = osp_overlap(&model, t, &d).unwrap();
            worst = worst.max(o);
            positive += usize::from(o != 0.0);
        }
    }
    (positive == 0, format!("1000 models × 10 points × 3 thresholds ≥ 0.5: nonzero overlaps {positive}, max {worst}"))
}

// ---------------------------------------------------------------------------
// 7: selection against an exhaustive re-scan.

/// Exhaustive re-implementation of the selection rules over a cell list.
fn rescan(cells: &[GridCell], criterion: SelectionCriterion) -> (usize, bool) {
    let tol = 1e-12;
    let ok = |c: &GridCell| match criterion {
        SelectionCriterion::ErrorConstrained(e) => c.error <= e + tol,
        SelectionCriterion::CoverageConstrained(r) => c.coverage >= r - tol,
    };
    let feasible = cells.iter().any(ok);
    // Sort keys, all oriented so that smaller is better.
    let key = |c: &GridCell| -> Vec<f64> {
        match (criterion, feasible) {
            (SelectionCriterion::ErrorConstrained(_), true) => vec![-c.coverage, -c.t, c.mu],
            (SelectionCriterion::ErrorConstrained(_), false) => vec![c.error, -c.coverage, -c.t, c.mu],
            (SelectionCriterion::CoverageConstrained(_), true) => vec![c.error, -c.coverage, -c.t, c.mu],
            (SelectionCriterion::CoverageConstrained(_), false) => vec![-c.coverage, c.error, -c.t, c.mu],
        }
    };
    let mut pool: Vec<usize> = (0..cells.len()).filter(|&i| !feasible || ok(&cells[i])).collect();
    pool.sort_by(|&a, &b| {
        let (ka, kb) = (key(&cells[a]), key(&cells[b]));
        ka.iter()
            .zip(&kb)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    (pool[0], feasible)
}

fn c07_selection() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let grids = 40;
    let mut mismatches = 0;
    let mut cells_total = 0;
    for g in 0..grids {
        let k = rng.random_range(2..=4);
        let dim = 2;
        let models: Vec<(f64, Arc<SelectiveModel>)> = (0..rng.random_range(1..=5))
            .map(|i| ((i as f64 + 1.0) * 0.5, Arc::new(random_model(&mut rng, dim, k))))
            .collect();
        // Small validation sets make ties between cells common.
        let n = rng.random_range(8..=40);
        let xs = random_points(&mut rng, n, dim, 3.0);
        let ys: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let val = LabeledDataset::from_parts(xs, ys, k).unwrap();
        let t_values: Vec<f64> = if g % 2 == 0 {
            default_thresholds()
        } else {
            (0..rng.random_range(1..=15)).map(|_| rng.random::<f64>()).collect()
        };
        let grid_ref = SelectionGrid::build(&models, &t_values, &val).unwrap();
        cells_total += grid_ref.cells.len();
        let mut targets: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..0.6)).collect();
        // Targets equal to attained values sit exactly on the feasibility boundary.
        targets.push(grid_ref.cells[rng.random_range(0..grid_ref.cells.len())].error);
        targets.push(0.0);
        for eps in targets {
            let (sel, grid) = select_error_constrained(&models, &t_values, &val, eps).unwrap();
            let (idx, feas) = rescan(&grid.cells, SelectionCriterion::ErrorConstrained(eps));
            mismatches += usize::from(sel.index != idx || sel.feasible != feas || sel.cell != grid.cells[idx]);
        }
        let mut rhos: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
        rhos.push(grid_ref.cells[rng.random_range(0..grid_ref.cells.len())].coverage);
        rhos.push(1.0);
        for rho in rhos {
            let (sel, grid) = select_coverage_constrained(&models, &t_values, &val, rho).unwrap();
            let (idx, feas) = rescan(&grid.cells, SelectionCriterion::CoverageConstrained(rho));
            mismatches += usize::from(sel.index != idx || sel.feasible != feas || sel.cell != grid.cells[idx]);
        }
    }
    (
        mismatches == 0,
        format!("{grids} grids ({cells_total} cells), 10 targets each: {mismatches} mismatches"),
    )
}

// ---------------------------------------------------------------------------
// 8, 12: end to end on a two-Gaussian mixture.

const MEANS: [[f64; 2]; 2] = [[-1.0, 0.0], [1.0, 0.0]];

/// Best coverage at raw error ε for the unit-variance pair at (±1, 0), by integrating the
/// known density on a grid and accepting cells in decreasing order of max posterior.
fn mixture_oracle_coverage(eps: f64) -> f64 {
    let step = 0.01;
    let half = 8.0;
    let m = (2.0 * half / step) as usize;
    let norm = 1.0 / (2.0 * std::f64::consts::PI);
    let mut cells = Vec::with_capacity(m * m);
    for i in 0..m {
        let x = -half + (i as f64 + 0.5) * step;
        for j in 0..m {
            let y = -half + (j as f64 + 0.5) * step;
            let dens: Vec<f64> = MEANS
                .iter()
                .map(|c| 0.5 * norm * (-0.5 * ((x - c[0]).powi(2) + (y - c[1]).powi(2))).exp())
                .collect();
            let p = dens[0] + dens[1];
            if p <= 0.0 {
                continue;
            }
            let eta = dens[0].max(dens[1]) / p;
            cells.push((eta, p * step * step));
        }
    }
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut cov, mut err) = (0.0, 0.0);
    for (eta, mass) in cells {
        let e = (1.0 - eta) * mass;
        if err + e > eps {
            // Take the fraction of this cell that exactly spends the remaining budget.
            cov += mass * (eps - err) / e;
            break;
        }
        cov += mass;
        err += e;
    }
    cov
}

fn mixture_config(seed: u64, out: &Path) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        split_seed: 100 + seed,
        dataset: DatasetSource::Synthetic(SyntheticSpec {
            kind: SyntheticKind::GaussianMixture {
                means: MEANS.iter().map(|m| m.to_vec()).collect(),
                covariances: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 2],
                priors: vec![0.5, 0.5],
            },
            n: 10_000,
            seed: 200 + seed,
        }),
        criterion: SelectionCriterion::ErrorConstrained(0.02),
        mu_grid: desk_mu_grid(),
        output_dir: out.to_path_buf(),
        ..RunConfig::default()
    };
    cfg.backbone.hidden = vec![32, 32];
    cfg.train.epochs = 40;
    cfg.train.warm_start_epochs = 30;
    cfg
}

fn c08_end_to_end(records: &[MetricsRecord], oracle: f64) -> Check {
    let val_err = median(records.iter().map(|r| r.val_error).collect());
    let test_err = median(records.iter().map(|r| r.error).collect());
    let cov = median(records.iter().map(|r| r.coverage).collect());
    let ok = val_err <= 0.02 && test_err <= 0.03 && cov >= 0.85 * oracle;
    let per_seed = records
        .iter()
        .map(|r| format!("({:.4},{:.4},{:.4})", r.val_error, r.error, r.coverage))
        .collect::<Vec<_>>()
        .join(" ");
    (
        ok,
        format!(
            "median val error {val_err:.4} ≤ 0.02, test error {test_err:.4} ≤ 0.03, coverage {cov:.4} ≥ 0.85×{oracle:.4}={:.4}; per seed {per_seed}",
            0.85 * oracle
        ),
    )
}

// ---------------------------------------------------------------------------

struct Line {
    id: u32,
    name: &'static str,
    check: Check,
    secs: f64,
}

fn timed(id: u32, name: &'static str, f: impl FnOnce() -> Check) -> Line {
    let start = Instant::now();
    let check = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        (false, format!("panicked: {msg}"))
    });
    let line = Line {
        id,
        name,
        check,
        secs: start.elapsed().as_secs_f64(),
    };
    println!(
        "[{}] {:02} {}: {} ({:.1}s)",
        if line.check.0 { "PASS" } else { "FAIL" },
        line.id,
        line.name,
        line.check.1,
        line.secs
    );
    line
}

fn main() -> ExitCode {
    let mut lines = vec![
        timed(1, "analytic coverage closed form", c01_analytic_exact),
        timed(2, "analytic coverage from samples", c02_analytic_empirical),
    ];
    let mut suite = None;
    lines.push(timed(3, "decoupled sweep optimality gap", || {
        let s = prop_suite();
        let c = c03_prop_gap(&s);
        suite = Some(s);
        c
    }));
    lines.push(timed(4, "raw one-sided overlap", || match &suite {
        Some(s) => c04_lemma_overlap(s),
        None => (false, "instance suite did not run".into()),
    }));
    lines.push(timed(5, "gradient finite differences", c05_gradients));
    lines.push(timed(6, "softmax invariants", c06_softmax));
    lines.push(timed(7, "selection exhaustive re-scan", c07_selection));

    let dir = tempfile::tempdir().expect("temporary directory");
    let mut records = Vec::new();
    lines.push(timed(8, "end-to-end mixture pipeline", || {
        let oracle = mixture_oracle_coverage(0.02);
        for seed in 0..3 {
            let cfg = mixture_config(seed, &dir.path().join(format!("seed{seed}")));
            records.push(run_pipeline(&cfg).expect("pipeline runs").metrics);
        }
        c08_end_to_end(&records, oracle)
    }));
    lines.push(timed(9, "softmax response equals hardening", c09_sr_harden));
    lines.push(timed(10, "one-sided ERM trend", c10_erm_trend));
    lines.push(timed(11, "overlap pigeonhole", c11_pigeonhole));
    lines.push(timed(12, "pipeline determinism", || {
        let first = dir.path().join("seed0");
        let again = dir.path().join("seed0-again");
        run_pipeline(&mixture_config(0, &again)).expect("pipeline reruns");
        let same_bytes = std::fs::read(first.join("metrics.csv")).ok()
            == std::fs::read(again.join("metrics.csv")).ok();
        let same_grid = std::fs::read(first.join("grid.csv")).ok() == std::fs::read(again.join("grid.csv")).ok();
        let rec = MetricsRecord::from_csv(&std::fs::read(again.join("metrics.csv")).unwrap()).unwrap();
        let same_record = records.first() == Some(&rec);
        (
            same_bytes && same_grid && same_record,
            format!("metrics.csv identical: {same_bytes}, grid.csv identical: {same_grid}, record equal: {same_record}"),
        )
    }));

    let failed: Vec<u32> = lines.iter().filter(|l| !l.check.0).map(|l| l.id).collect();
    let total: f64 = lines.iter().map(|l| l.secs).sum();
    println!(
        "acceptance: {}/{} criteria passed in {total:.1}s{}",
        lines.len() - failed.len(),
        lines.len(),
        if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
