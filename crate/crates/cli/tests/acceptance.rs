//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use depbound::analysis::{calibrate_constants, fit_power_law};
use depbound::blocking::{make_blocks, optimal_delay};
use depbound::ingest::bandpass;
use depbound::mixing::rng_from_seed;
use depbound::Series;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;
use statrs::distribution::{ContinuousCDF, StudentsT};

const BIN: &str = env!("CARGO_BIN_EXE_depbound");

fn depbound(args: &[&str]) -> Output {
    let out = Command::new(BIN).args(args).output().expect("spawn depbound");
    assert!(
        out.status.success(),
        "depbound {} exited {:?}\n{}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Header-keyed rows of a comma-separated file without quoting.
fn read_csv(text: &str) -> Vec<BTreeMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            header
                .iter()
                .map(|h| h.to_string())
                .zip(l.split(',').map(str::to_string))
                .collect()
        })
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key]
        .parse()
        .unwrap_or_else(|_| panic!("column {key}: {:?}", row[key]))
}

fn within_time(start: Instant, limit: Duration) -> String {
    let took = start.elapsed();
    assert!(took < limit, "took {took:.1?}, limit {limit:?}");
    format!("{:.2}s", took.as_secs_f64())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Slope and intercept of an ordinary least-squares line.
fn ols(points: &[(f64, f64)]) -> (f64, f64) {
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Desk-scale fair sweep shared by the compliance, contrast and
/// determinism criteria.
struct DeskSweep {
    _root: tempfile::TempDir,
    manifest: PathBuf,
    store: PathBuf,
    elapsed: Duration,
}

impl DeskSweep {
    fn run() -> Self {
        let root = tempfile::tempdir().unwrap();
        let plan_dir = root.path().join("plan");
        depbound(&[
            "plan",
            "fair",
            "--targets",
            "500,1000,2000",
            "--rhos",
            "0.2,0.8",
            "--depths",
            "2,4",
            "--trials",
            "3",
            "--format",
            "csv",
            "--out",
            path_arg(&plan_dir),
        ]);
        let manifest = plan_dir.join("manifest.json");
        let store = root.path().join("p1");
        let start = Instant::now();
        sweep(&manifest, &store, 1);
        DeskSweep {
            manifest,
            store,
            elapsed: start.elapsed(),
            _root: root,
        }
    }

    fn records(&self) -> Vec<Value> {
        fs::read_to_string(self.store.join("results.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }
}

fn sweep(manifest: &Path, out: &Path, parallelism: usize) -> Value {
    let p = parallelism.to_string();
    let o = depbound(&[
        "sweep",
        "--config",
        path_arg(manifest),
        "--out",
        path_arg(out),
        "--parallelism",
        &p,
    ]);
    serde_json::from_str(stdout(&o).trim()).unwrap()
}

fn table_lengths() -> String {
    let start = Instant::now();
    let out = depbound(&["plan", "fair", "--format", "csv"]);
    let timing = within_time(start, Duration::from_secs(1));
    let expected: [(u64, [u64; 4]); 6] = [
        (500, [749, 1166, 2000, 4500]),
        (1000, [1499, 2333, 4000, 9000]),
        (2000, [2999, 4666, 8000, 18000]),
        (4000, [5999, 9333, 16000, 36000]),
        (8000, [11999, 18666, 32000, 72000]),
        (16000, [23999, 37333, 64000, 144000]),
    ];
    let rows = read_csv(&stdout(&out));
    assert_eq!(rows.len(), 24);
    for (target, lengths) in expected {
        for (rho, n_raw) in ["0.2", "0.4", "0.6", "0.8"].iter().zip(lengths) {
            let row = rows
                .iter()
                .find(|r| r["n_eff"] == target.to_string() && r["rho"] == *rho)
                .unwrap_or_else(|| panic!("no row for {target} at rho={rho}"));
            assert_eq!(row["n_raw"], n_raw.to_string(), "N_eff={target} rho={rho}");
        }
    }
    format!("24/24 raw lengths exact, 749 and 1499 included ({timing})")
}

fn delay_arithmetic() -> String {
    let start = Instant::now();
    assert_eq!(optimal_delay(16384, 0.5).unwrap(), 20);
    assert_eq!(((16384f64).ln() / 0.5).ceil(), 20.0);
    let plan = make_blocks(16384, 20).unwrap();
    assert_eq!((plan.n_blocks, plan.remainder), (780, 4));
    assert_eq!(plan.n_blocks * plan.block_width() + plan.remainder, 16384);
    assert!((plan.independent_fraction() - 1.0 / 21.0).abs() < 1e-15);
    assert!((100.0f64 / 21.0 - 4.76).abs() < 0.005);
    let table = stdout(&depbound(&[
        "bound", "--D", "2", "--p", "5", "--R", "1", "--N", "16384", "--rate", "0.5", "--format", "table",
    ]));
    assert!(table.contains("d*=20 B=780 r=4 block-first share ≈ 4.8%"), "{table}");

    assert_eq!(optimal_delay(1_000_000, 0.5).unwrap(), 28);
    assert_eq!(((1e6f64).ln() / 0.5).ceil(), 28.0);
    let table = stdout(&depbound(&[
        "bound", "--D", "2", "--p", "5", "--R", "1", "--N", "1000000", "--rate", "0.5", "--format", "table",
    ]));
    assert!(table.contains("d*=28") && table.contains("≈ 3.4%"), "{table}");
    let timing = within_time(start, Duration::from_secs(1));
    format!("d*=20, B=780, 1/21 ≈ 4.8%; d*=28 at 10^6, ≈ 3.4% ({timing})")
}

fn blocking_oracle(dir: &Path) -> String {
    let start = Instant::now();
    depbound(&["verify", "blocking", "--chains", "50", "--out", path_arg(dir)]);
    let timing = within_time(start, Duration::from_secs(60));
    let rows = read_csv(&fs::read_to_string(dir.join("blocking.csv")).unwrap());
    let mut chains = std::collections::BTreeSet::new();
    let mut plans = 0;
    for r in &rows {
        chains.insert(r["chain_id"].clone());
        let (b, d, states) = (num(r, "B"), num(r, "d"), num(r, "states"));
        assert!((1.0..=6.0).contains(&b) && (1.0..=5.0).contains(&d));
        assert!(states == 2.0 || states == 3.0);
        assert!(num(r, "tv_exact") <= num(r, "tv_bound") + 1e-12, "{r:?}");
        assert_eq!(r["pass"], "true");
        plans += 1;
    }
    assert_eq!(chains.len(), 50);
    assert_eq!(plans, 50 * 6 * 5);
    format!("50 chains, {plans} plans, 0 violations ({timing})")
}

fn rademacher_oracle(dir: &Path) -> String {
    let start = Instant::now();
    depbound(&[
        "verify",
        "rademacher",
        "--hypotheses",
        "500",
        "--trials",
        "1000",
        "--out",
        path_arg(dir),
    ]);
    let timing = within_time(start, Duration::from_secs(300));
    let rows = read_csv(&fs::read_to_string(dir.join("rademacher.csv")).unwrap());
    assert_eq!(rows.len(), 3 * 3 * 2 * 3);
    let mut tightest = f64::INFINITY;
    for r in &rows {
        let (d, p, radius, m) = (num(r, "D"), num(r, "p"), num(r, "R"), num(r, "m"));
        let formula = 4.0 * radius * (d * p * (2.0 * m).ln() / m).sqrt();
        assert!(close(num(r, "bound"), formula, 1e-12), "{r:?}");
        let se = num(r, "std_error");
        assert!(se > 0.0);
        let margin = (formula - num(r, "estimate")) / se;
        assert!(margin >= 3.0, "{r:?}");
        tightest = tightest.min(margin);
    }
    format!(
        "{} cells below the formula, smallest margin {tightest:.1} SE ({timing})",
        rows.len()
    )
}

fn gradients(dir: &Path) -> String {
    let start = Instant::now();
    depbound(&["verify", "grad", "--instances", "20", "--out", path_arg(dir)]);
    let timing = within_time(start, Duration::from_secs(30));
    let rows = read_csv(&fs::read_to_string(dir.join("grad.csv")).unwrap());
    assert_eq!(rows.len(), 20);
    let worst = rows.iter().map(|r| num(r, "max_rel_error")).fold(0.0, f64::max);
    assert!(worst < 1e-4);
    let total = |k: &str| rows.iter().map(|r| num(r, k)).sum::<f64>();
    for k in ["active", "inactive", "unclipped", "clipped"] {
        assert!(total(k) > 0.0, "no {k} samples");
    }
    format!("20 instances, worst relative error {worst:.1e}, both ReLU branches and both loss regimes ({timing})")
}

fn compliance(desk: &DeskSweep) -> String {
    assert!(desk.elapsed < Duration::from_secs(15 * 60));
    let records = desk.records();
    assert_eq!(records.len(), 36);
    let mut worst = 0.0f64;
    for r in &records {
        let s = &r["spec"];
        let gap = r["result"]["gap"].as_f64().unwrap();
        let n = r["result"]["n_train"].as_f64().unwrap();
        let (d, p, radius) = (
            s["depth"].as_f64().unwrap(),
            s["p"].as_f64().unwrap(),
            s["R"].as_f64().unwrap(),
        );
        // C1 = 8, C0 = 1, delta = 0.05
        let bound = 8.0 * radius * (d * p * n.ln() / n).sqrt() + 1.0 + ((1.0f64 / 0.05).ln() / n).sqrt();
        assert!(close(r["bound"]["total"].as_f64().unwrap(), bound, 1e-12), "{s}");
        assert!(gap <= bound, "{s}: gap {gap} > bound {bound}");
        let ratio = gap / bound;
        assert!(close(r["bound"]["ratio"].as_f64().unwrap(), ratio, 1e-12));
        assert!(ratio < 1.0);
        worst = worst.max(ratio);
    }
    format!(
        "36/36 gaps within the bound, largest ratio {worst:.4} ({:.1}s)",
        desk.elapsed.as_secs_f64()
    )
}

fn contrast_report(desk: &DeskSweep) -> String {
    let out = desk.store.parent().unwrap().join("analysis");
    depbound(&["analyze", "--results", path_arg(&desk.store), "--out", path_arg(&out)]);
    let contrasts = read_csv(&fs::read_to_string(out.join("contrasts.csv")).unwrap());
    let scaling = read_csv(&fs::read_to_string(out.join("scaling.csv")).unwrap());
    let calibration: Value = serde_json::from_str(&fs::read_to_string(out.join("calibration.json")).unwrap()).unwrap();
    assert!(calibration["c1_hat"].is_f64());

    let mut gaps: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for r in desk.records() {
        let key = (r["spec"]["rho"].to_string(), r["spec"]["n_eff"].as_u64().unwrap());
        gaps.entry(key).or_default().push(r["result"]["gap"].as_f64().unwrap());
    }
    assert_eq!(contrasts.len(), 3);
    let row = contrasts
        .iter()
        .find(|r| r["n_eff"] == "2000")
        .expect("contrast at N_eff = 2000");
    assert_eq!(row["pairing"], "rho=0.8 vs rho=0.2");
    let a = &gaps[&("0.8".to_string(), 2000)];
    let b = &gaps[&("0.2".to_string(), 2000)];
    let (va, vb) = (var(a) / a.len() as f64, var(b) / b.len() as f64);
    let t = (mean(a) - mean(b)) / (va + vb).sqrt();
    let dof = (va + vb).powi(2) / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    let p = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, dof).unwrap().cdf(t.abs()));
    let p_adj = (p * contrasts.len() as f64).min(1.0);
    let pooled =
        (((a.len() - 1) as f64 * var(a) + (b.len() - 1) as f64 * var(b)) / (a.len() + b.len() - 2) as f64).sqrt();
    let checks = [
        ("mean_a", mean(a), 1e-12),
        ("mean_b", mean(b), 1e-12),
        ("reduction", 1.0 - mean(a) / mean(b), 1e-12),
        ("t", t, 1e-10),
        ("dof", dof, 1e-10),
        ("p", p, 1e-8),
        ("p_adj", p_adj, 1e-8),
        ("d", (mean(a) - mean(b)) / pooled, 1e-10),
    ];
    for (k, want, tol) in checks {
        assert!(
            close(num(row, k), want, tol),
            "{k}: report {} vs recomputed {want}",
            row[k]
        );
    }

    for rho in ["0.2", "0.8"] {
        let pts: Vec<(f64, f64)> = [500u64, 1000, 2000]
            .iter()
            .map(|&n| ((n as f64).ln(), mean(&gaps[&(rho.to_string(), n)]).ln()))
            .collect();
        let (slope, _) = ols(&pts);
        let pooled_row = scaling
            .iter()
            .find(|r| r["rho"] == rho && r["group"] == "pooled")
            .unwrap();
        assert!(close(num(pooled_row, "exponent"), slope, 1e-9), "rho={rho}");
    }
    for r in &scaling {
        assert!(num(r, "exponent") < 0.0, "non-negative exponent {r:?}");
    }
    let exps: Vec<String> = scaling
        .iter()
        .filter(|r| r["group"] == "pooled")
        .map(|r| format!("{:.2} at rho={}", num(r, "exponent"), r["rho"]))
        .collect();
    format!(
        "N_eff=2000: mean gap {:.4} vs {:.4} ({:.0}% lower), t={:.2}, p_adj={:.3}; exponents {} ; recomputed from the store",
        mean(a),
        mean(b),
        100.0 * (1.0 - mean(a) / mean(b)),
        t,
        p_adj,
        exps.join(", ")
    )
}

fn analysis_correctness() -> String {
    let start = Instant::now();
    let xs = [500.0, 1000.0, 2000.0, 4000.0, 8000.0, 16000.0];
    let exact: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 3.0 * f64::powf(x, -0.5))).collect();
    let fit = fit_power_law(&exact).unwrap();
    assert!((fit.exponent + 0.5).abs() < 1e-9);

    let mut rng = rng_from_seed(8);
    let mut total = 0.0;
    for _ in 0..20 {
        let noisy: Vec<(f64, f64)> = xs
            .iter()
            .map(|&x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (x, 0.8 * f64::powf(x, -1.21) * (0.05 * z).exp())
            })
            .collect();
        total += fit_power_law(&noisy).unwrap().exponent;
    }
    let recovered = total / 20.0;
    assert!((recovered + 1.21).abs() < 0.05, "mean exponent {recovered}");

    let regressors: Vec<f64> = (0..24).map(|i| 0.05 + 0.04 * i as f64).collect();
    let clean: Vec<(f64, f64)> = regressors.iter().map(|&x| (x, 0.43 * x + 2.57)).collect();
    let cal = calibrate_constants(&clean).unwrap();
    assert!((cal.c0_hat - 2.57).abs() < 1e-9 && (cal.c1_hat - 0.43).abs() < 1e-9);

    let (mut cover_c0, mut cover_c1) = (0, 0);
    for _ in 0..200 {
        let pts: Vec<(f64, f64)> = regressors
            .iter()
            .map(|&x| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (x, 0.43 * x + 2.57 + 0.05 * z)
            })
            .collect();
        let c = calibrate_constants(&pts).unwrap();
        cover_c0 += usize::from(c.ci95_c0[0] <= 2.57 && 2.57 <= c.ci95_c0[1]);
        cover_c1 += usize::from(c.ci95_c1[0] <= 0.43 && 0.43 <= c.ci95_c1[1]);
    }
    assert!(
        cover_c0 >= 180 && cover_c1 >= 180,
        "coverage {cover_c0}/200, {cover_c1}/200"
    );
    let timing = within_time(start, Duration::from_secs(60));
    format!(
        "noiseless exponent exact, noisy mean {recovered:.3}; calibration exact, coverage {cover_c0}/200 and {cover_c1}/200 ({timing})"
    )
}

fn determinism(desk: &DeskSweep) -> String {
    let root = desk.store.parent().unwrap();
    let reference = fs::read(desk.store.join("results.jsonl")).unwrap();
    let p1 = root.join("again-p1");
    let p8 = root.join("again-p8");
    sweep(&desk.manifest, &p1, 1);
    sweep(&desk.manifest, &p8, 8);
    assert_eq!(fs::read(p1.join("results.jsonl")).unwrap(), reference);
    assert_eq!(fs::read(p8.join("results.jsonl")).unwrap(), reference);
    let resumed = sweep(&desk.manifest, &p8, 8);
    assert_eq!(resumed["executed"], 0);
    assert_eq!(fs::read(p8.join("results.jsonl")).unwrap(), reference);
    format!(
        "{} bytes identical across three sweeps at parallelism 1, 1 and 8",
        reference.len()
    )
}

/// Amplitude of the `freq` component by least squares on sine and cosine.
fn tone_amplitude(x: &[f64], freq: f64, fs: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * freq / fs;
    let (mut ss, mut cc, mut sc, mut sy, mut cy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let (s, c) = (w * i as f64).sin_cos();
        ss += s * s;
        cc += c * c;
        sc += s * c;
        sy += s * v;
        cy += c * v;
    }
    let det = ss * cc - sc * sc;
    let a = (sy * cc - cy * sc) / det;
    let b = (cy * ss - sy * sc) / det;
    a.hypot(b)
}

fn ingestion() -> String {
    let start = Instant::now();
    let fs_hz = 250.0;
    let n = 10_000;
    let trim = 1_000;
    let tone = |freq: f64| {
        let v = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs_hz).sin())
            .collect();
        Series::new(v).unwrap().with_sampling_rate(fs_hz).unwrap()
    };
    let dc = Series::new(vec![2.5; n]).unwrap().with_sampling_rate(fs_hz).unwrap();
    let residual = bandpass(&dc, 0.5, 40.0).unwrap().values()[trim..n - trim]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(residual < 1e-3, "DC residual {residual}");
    let mut kept = Vec::new();
    for f in [5.0, 10.0, 20.0] {
        let y = bandpass(&tone(f), 0.5, 40.0).unwrap();
        let a = tone_amplitude(&y.values()[trim..n - trim], f, fs_hz);
        assert!((a - 1.0).abs() <= 0.05, "{f} Hz amplitude {a}");
        kept.push(a);
    }
    let mut cut = Vec::new();
    for f in [80.0, 100.0] {
        let y = bandpass(&tone(f), 0.5, 40.0).unwrap();
        let a = tone_amplitude(&y.values()[trim..n - trim], f, fs_hz);
        assert!(a <= 0.1, "{f} Hz amplitude {a}");
        cut.push(a);
    }
    let timing = within_time(start, Duration::from_secs(10));
    format!("DC residual {residual:.1e}, in-band gains {kept:.3?}, out-of-band gains {cut:.4?} ({timing})")
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let desk = std::sync::OnceLock::<DeskSweep>::new();
    let desk = || desk.get_or_init(DeskSweep::run);
    type Check<'a> = Box<dyn Fn() -> String + 'a>;
    let criteria: Vec<(&str, Check)> = vec![
        ("fair-grid lengths", Box::new(table_lengths)),
        ("delay arithmetic", Box::new(delay_arithmetic)),
        (
            "blocking inequality oracle",
            Box::new(|| blocking_oracle(scratch.path())),
        ),
        ("Rademacher oracle", Box::new(|| rademacher_oracle(scratch.path()))),
        ("gradient correctness", Box::new(|| gradients(scratch.path()))),
        ("bound compliance", Box::new(|| compliance(desk()))),
        ("fair-comparison contrast", Box::new(|| contrast_report(desk()))),
        ("analysis correctness", Box::new(analysis_correctness)),
        ("determinism", Box::new(|| determinism(desk()))),
        ("ingestion filter", Box::new(ingestion)),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL {:>2} {name}: {msg}", i + 1);
            }
        }
    }
    let _ = panic::take_hook();
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
