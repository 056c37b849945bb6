//! Closed-form moment time series: expectation norm and second moment of
//! the truncated solution, optionally alongside the Euler-Maruyama
//! second-moment recursion.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use sphere_spde::moments::{em_second_moment, spectral_expectation, spectral_second_moment};
use sphere_spde::Scheme;

use super::{spectrum_from, x0_mean_from, SPECTRUM_KEYS, X0_KEYS};
use crate::config::Config;
use crate::output::fmt_f64;

const KEYS: [&str; 5] = ["kappa", "t_max", "level", "points", "schemes"];

pub fn run(cfg: &mut Config, out: &Path) -> Result<()> {
    let mut keys: Vec<&'static str> = KEYS.to_vec();
    keys.extend(SPECTRUM_KEYS);
    keys.extend(X0_KEYS);
    keys.push("alpha");
    keys.sort_unstable();
    keys.dedup();
    cfg.restrict_keys(&keys)?;

    let kappa = cfg.get_u32("kappa", 16)?;
    let t_max = cfg.get_f64("t_max", 1.0)?;
    let level = cfg.get_u32("level", 8)?;
    let points = cfg.get_usize("points", 64)?;
    let alpha = cfg.get_f64("alpha", 2.0)?;
    let spec = spectrum_from(cfg, alpha)?;
    let x0_mean = x0_mean_from(cfg, kappa)?;
    let x0_msq = {
        let mut msq = x0_mean.clone();
        for v in msq.as_mut_slice() {
            *v = *v * *v;
        }
        msq
    };
    let schemes: Vec<Scheme> = cfg
        .get_str_list("schemes", &[])
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| match s.as_str() {
            "forward" => Ok(Scheme::Forward),
            "backward" => Ok(Scheme::Backward),
            other => bail!("unknown scheme {other:?}"),
        })
        .collect::<Result<_>>()?;

    let k_total = 1u64 << level;
    let h = t_max / k_total as f64;
    let stride = (k_total / points as u64).max(1);

    let mut header = String::from("t,expectation_norm,second_moment");
    for s in &schemes {
        write!(header, ",second_moment_{}", s.name())?;
    }
    let mut csv = header + "\n";
    let mut k = 0u64;
    while k <= k_total {
        let t = k as f64 * h;
        let mean = spectral_expectation(&x0_mean, kappa, t);
        let sm = spectral_second_moment(&x0_msq, &spec, kappa, t);
        write!(
            csv,
            "{},{},{}",
            fmt_f64(t),
            fmt_f64(mean.l2_norm_sq().sqrt()),
            fmt_f64(sm)
        )?;
        for &scheme in &schemes {
            let v = em_second_moment(scheme, &x0_msq, &spec, kappa, h, k)?;
            write!(csv, ",{}", fmt_f64(v))?;
        }
        csv.push('\n');
        k += stride;
    }
    let path = out.join("moments.csv");
    std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote moments.csv ({} rows)", k_total / stride + 1);
    Ok(())
}
