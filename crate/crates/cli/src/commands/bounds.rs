//! Inequality-certification sweeps: ratio reports for the
//! exponential-approximation and regularity bounds.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use sphere_spde::bounds::{Proposition, SweepGrid};

use crate::config::Config;
use crate::output::fmt_f64;

const KEYS: [&str; 6] = [
    "propositions",
    "mus",
    "x_min",
    "points",
    "k_max_log2",
    "refinements",
];

pub fn run(cfg: &mut Config, out: &Path) -> Result<()> {
    cfg.restrict_keys(&KEYS)?;
    let names = cfg.get_str_list(
        "propositions",
        &Proposition::all()
            .iter()
            .map(|p| p.name())
            .collect::<Vec<_>>(),
    );
    if names.iter().all(|n| n.is_empty()) {
        bail!(
            "empty proposition list; choose from: {}",
            Proposition::all()
                .iter()
                .map(|p| p.name())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    let props: Vec<Proposition> = names
        .iter()
        .map(|n| Proposition::parse(n).map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;
    let x_min = cfg.get_f64("x_min", 1e-8)?;
    let points = cfg.get_usize("points", 65)?;
    let k_max_log2 = cfg.get_u32("k_max_log2", 14)?;
    let refinements = cfg.get_usize("refinements", 2)?;

    let mut csv = String::from("proposition,variant,mu,lambda_h,k,gap,envelope,ratio\n");
    let mut all_finite = true;
    for prop in &props {
        let variant = match prop {
            Proposition::Regularity(v) => v.name(),
            _ => "-",
        };
        let mus = if cfg.has("mus") {
            cfg.get_f64_list("mus", &[])?
        } else {
            prop.mu_fixture()
        };
        for mu in mus {
            let mut grid = SweepGrid::geometric(x_min, prop.lambda_h_max(), points, k_max_log2)?;
            let mut sups = Vec::new();
            for _ in 0..=refinements {
                let report = prop.sweep(mu, &grid)?;
                sups.push(report.max_ratio);
                grid = grid.refined();
            }
            // rows from the coarsest sweep (the nested refinements only
            // re-certify the supremum)
            let base = SweepGrid::geometric(x_min, prop.lambda_h_max(), points, k_max_log2)?;
            let report = prop.sweep(mu, &base)?;
            for p in &report.points {
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{}",
                    prop.name(),
                    variant,
                    mu,
                    fmt_f64(p.lambda_h),
                    p.steps,
                    fmt_f64(p.gap),
                    fmt_f64(p.envelope),
                    fmt_f64(p.ratio),
                )?;
            }
            all_finite &= sups.iter().all(|s| s.is_finite());
            let growth: Vec<String> = sups
                .windows(2)
                .map(|w| format!("{:+.2}%", (w[1] / w[0] - 1.0) * 100.0))
                .collect();
            println!(
                "{} mu={mu}: certified constant {:.6e} (refinement growth: {})",
                prop.name(),
                sups.last().unwrap(),
                if growth.is_empty() {
                    "n/a".into()
                } else {
                    growth.join(", ")
                },
            );
        }
    }
    let path = out.join("bounds_sweep.csv");
    std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote bounds_sweep.csv");
    if !all_finite {
        bail!("at least one sweep produced a non-finite ratio");
    }
    Ok(())
}
