//! Static field snapshots: solution fields evaluated on an equiangular
//! grid, exported as P6 PPM images (with `.meta` sidecars) and value CSVs.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use sphere_spde::noise::BrownianLattice;
use sphere_spde::solver_em::{em_solve, DEFAULT_STABILITY_BOUND};
use sphere_spde::solver_exact::spectral_solve;
use sphere_spde::CoefficientField;

use super::{gate_expensive, spectrum_from, x0_mean_from, SPECTRUM_KEYS, X0_KEYS};
use crate::config::Config;
use crate::output::{config_hash, fmt_f64, write_ppm, ColorMap};

const KEYS: [&str; 9] = [
    "solver",
    "kappa",
    "times",
    "level",
    "grid_theta",
    "grid_phi",
    "seed",
    "colormap",
    "alpha",
];

pub fn run(cfg: &mut Config, out: &Path, allow_expensive: bool, canonical: &str) -> Result<()> {
    let mut keys: Vec<&'static str> = KEYS.to_vec();
    keys.extend(SPECTRUM_KEYS);
    keys.extend(X0_KEYS);
    keys.sort_unstable();
    keys.dedup();
    cfg.restrict_keys(&keys)?;

    let solver = cfg.get_str("solver", "exact");
    let kappa = cfg.get_u32("kappa", 32)?;
    let times = cfg.get_f64_list("times", &[0.5])?;
    ensure!(!times.is_empty(), "need at least one snapshot time");
    ensure!(
        times.windows(2).all(|w| w[0] < w[1]) && times[0] >= 0.0,
        "times must be nonnegative and strictly increasing"
    );
    let n_theta = cfg.get_usize("grid_theta", 128)?;
    let n_phi = cfg.get_usize("grid_phi", 256)?;
    ensure!(n_theta >= 2 && n_phi >= 1, "grid too small");
    let seed = cfg.get_u64("seed", 42)?;
    let colormap = ColorMap::parse(&cfg.get_str("colormap", "gray"))?;
    let alpha = cfg.get_f64("alpha", 2.0)?;
    let spec = spectrum_from(cfg, alpha)?;
    let x0 = x0_mean_from(cfg, kappa)?;

    gate_expensive(
        allow_expensive,
        "snapshot grid evaluation",
        0,
        (n_theta * n_phi) as u128 * (kappa as u128 + 1).pow(2) * times.len() as u128 / 512,
        false,
    )?;

    // fields at the requested times
    let fields: Vec<CoefficientField> = match solver.as_str() {
        "exact" => {
            let positive: Vec<f64> = times.iter().copied().filter(|&t| t > 0.0).collect();
            let mut traj_fields = if positive.is_empty() {
                Vec::new()
            } else {
                spectral_solve(&x0, &spec, kappa, &positive, seed)?.fields
            };
            let mut all = Vec::new();
            let mut iter = traj_fields.drain(..);
            for &t in &times {
                if t == 0.0 {
                    all.push(x0.resized(kappa));
                } else {
                    all.push(iter.next().expect("one field per positive time"));
                }
            }
            all
        }
        "forward" | "backward" => {
            let scheme = if solver == "forward" {
                sphere_spde::Scheme::Forward
            } else {
                sphere_spde::Scheme::Backward
            };
            let level = cfg.get_u32("level", 10)?;
            let t_final = *times.last().expect("nonempty");
            ensure!(t_final > 0.0, "EM snapshots need a positive final time");
            let lattice = BrownianLattice::sample(kappa, t_final, level, seed)?;
            let traj = em_solve(
                scheme,
                &x0,
                &spec,
                kappa,
                level,
                &lattice,
                DEFAULT_STABILITY_BOUND,
            )?;
            let h = t_final / (1u64 << level) as f64;
            times
                .iter()
                .map(|&t| {
                    let k = (t / h).round() as usize;
                    ensure!(
                        (k as f64 * h - t).abs() < 1e-9,
                        "time {t} does not lie on the level-{level} grid (h = {h})"
                    );
                    Ok(traj.fields[k].clone())
                })
                .collect::<Result<_>>()?
        }
        other => bail!("unknown solver {other:?} (exact | forward | backward)"),
    };

    // equiangular grid, rows from theta = 0
    let mut grid = Vec::with_capacity(n_theta * n_phi);
    for i in 0..n_theta {
        let theta = std::f64::consts::PI * i as f64 / (n_theta - 1) as f64;
        for j in 0..n_phi {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / n_phi as f64;
            grid.push((theta.min(std::f64::consts::PI), phi));
        }
    }

    let hash = config_hash(canonical);
    for (idx, field) in fields.iter().enumerate() {
        let values = field.evaluate(&grid)?;
        let stem = format!("snapshot_t{idx}");
        write_ppm(
            &out.join(format!("{stem}.ppm")),
            &values,
            n_phi,
            n_theta,
            colormap,
            &hash,
        )?;
        let mut csv = String::from("theta,phi,value\n");
        for (p, v) in grid.iter().zip(&values) {
            writeln!(csv, "{},{},{}", fmt_f64(p.0), fmt_f64(p.1), fmt_f64(*v))?;
        }
        let csv_path = out.join(format!("{stem}.csv"));
        std::fs::write(&csv_path, csv)
            .with_context(|| format!("writing {}", csv_path.display()))?;
        println!("wrote {stem}.ppm / .meta / .csv (t = {})", times[idx]);
    }
    Ok(())
}
