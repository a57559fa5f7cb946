//! Versioned CSV writers. Every file has a header row; numbers use the shortest
//! round-trip decimal form, so output bytes are a pure function of the inputs.
//!
//! | file | columns |
//! |---|---|
//! | `riccati.v1.csv` | `t,re_psi,im_psi,psi_bar,re_phi,im_phi,l,u` |
//! | `resolvent.v1.csv` | `t,density,atom_flag` — first row is the atom at 0 (`density` = its mass, `atom_flag` = 1) |
//! | `paths.v1.csv` | `path,t,x,x_clipped` |
//! | `transform_summary.v1.csv` | `label,estimate_re,estimate_im,stderr,theory_re,theory_im,error,tolerance,status` |
//! | `transform_flatness.v1.csv` | `label,system,t,estimate_re,estimate_im,stderr,deviation,tolerance,status` |
//! | `forward_mean.v1.csv` | `t,formula,mc,stderr` |
//! | `pastcheck.v1.csv` | `t,re_v,im_v,v_bar,abs_exp_v,c_exp_v_bar` — rows path-major, checkpoints inner |
//! | `pastcheck_forward.v1.csv` | `path,t,re_v_past,im_v_past,re_v_forward,im_v_forward,gap` |
//! | `verify_report.v1.csv` | `claim,status,magnitude,tolerance,runtime_s` |

use crate::error::Result;
use crate::resolvent::FirstKindResolvent;
use crate::riccati::{EnvelopeBounds, RiccatiSolution};
use crate::simulate::{PastCheckReport, PathEnsemble, TransformReport};
use crate::verify::PropertyReport;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

fn num(v: f64) -> String {
    format!("{v}")
}

fn write(
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(path)
}

fn status(pass: bool) -> String {
    if pass { "pass" } else { "fail" }.to_string()
}

pub fn write_riccati(dir: &Path, sol: &RiccatiSolution, env: &EnvelopeBounds) -> Result<PathBuf> {
    let g = &sol.grid;
    write(
        dir,
        "riccati.v1.csv",
        &[
            "t", "re_psi", "im_psi", "psi_bar", "re_phi", "im_phi", "l", "u",
        ],
        (0..g.len()).map(|i| {
            vec![
                num(g.node(i)),
                num(sol.psi[i].re),
                num(sol.psi[i].im),
                num(sol.psi_bar[i]),
                num(sol.phi[i].re),
                num(sol.phi[i].im),
                num(env.lower[i]),
                num(env.upper[i]),
            ]
        }),
    )
}

pub fn write_resolvent(dir: &Path, l: &FirstKindResolvent) -> Result<PathBuf> {
    let g = *l.grid();
    let atom = vec![num(0.0), num(l.atom()), "1".into()];
    let dens = l.density_samples();
    write(
        dir,
        "resolvent.v1.csv",
        &["t", "density", "atom_flag"],
        std::iter::once(atom).chain(
            dens.into_iter()
                .enumerate()
                .map(|(k, d)| vec![num(g.node(k + 1)), num(d), "0".into()]),
        ),
    )
}

pub fn write_paths(dir: &Path, ens: &PathEnsemble) -> Result<PathBuf> {
    let g = ens.grid;
    write(
        dir,
        "paths.v1.csv",
        &["path", "t", "x", "x_clipped"],
        ens.paths.iter().enumerate().flat_map(|(p, path)| {
            path.x
                .iter()
                .enumerate()
                .map(move |(i, x)| vec![p.to_string(), num(g.node(i)), num(*x), num(x.max(0.0))])
        }),
    )
}

/// Summary, flatness and forward-mean files; `slack` is the additive tolerance on top of 3 stderr.
pub fn write_transform(dir: &Path, rep: &TransformReport, slack: f64) -> Result<Vec<PathBuf>> {
    let summary = write(
        dir,
        "transform_summary.v1.csv",
        &[
            "label",
            "estimate_re",
            "estimate_im",
            "stderr",
            "theory_re",
            "theory_im",
            "error",
            "tolerance",
            "status",
        ],
        rep.functions.iter().map(|f| {
            let tol = 3.0 * f.stderr + slack;
            vec![
                f.label.clone(),
                num(f.estimate.re),
                num(f.estimate.im),
                num(f.stderr),
                num(f.theory.re),
                num(f.theory.im),
                num(f.error()),
                num(tol),
                status(f.error() <= tol),
            ]
        }),
    )?;
    let flat = write(
        dir,
        "transform_flatness.v1.csv",
        &[
            "label",
            "system",
            "t",
            "estimate_re",
            "estimate_im",
            "stderr",
            "deviation",
            "tolerance",
            "status",
        ],
        rep.functions.iter().flat_map(|f| {
            let c = f.flatness.iter().map(move |r| ("complex", r));
            let re = f.flatness_real.iter().map(move |r| ("real", r));
            c.chain(re).map(move |(sys, r)| {
                let tol = 3.0 * r.stderr + slack;
                vec![
                    f.label.clone(),
                    sys.to_string(),
                    num(r.t),
                    num(r.estimate.re),
                    num(r.estimate.im),
                    num(r.stderr),
                    num(r.deviation),
                    num(tol),
                    status(r.deviation <= tol),
                ]
            })
        }),
    )?;
    let mean = write(
        dir,
        "forward_mean.v1.csv",
        &["t", "formula", "mc", "stderr"],
        (0..rep.times.len()).map(|i| {
            vec![
                num(rep.times[i]),
                num(rep.mean_formula[i]),
                num(rep.mean_mc[i]),
                num(rep.mean_stderr[i]),
            ]
        }),
    )?;
    Ok(vec![summary, flat, mean])
}

pub fn write_pastcheck(dir: &Path, rep: &PastCheckReport) -> Result<Vec<PathBuf>> {
    let main = write(
        dir,
        "pastcheck.v1.csv",
        &["t", "re_v", "im_v", "v_bar", "abs_exp_v", "c_exp_v_bar"],
        rep.rows.iter().map(|r| {
            vec![
                num(r.t),
                num(r.v_past.re),
                num(r.v_past.im),
                num(r.v_bar),
                num(r.v_past.re.exp()),
                num((rep.bound.ln_c + r.v_bar).exp()),
            ]
        }),
    )?;
    let fwd = write(
        dir,
        "pastcheck_forward.v1.csv",
        &[
            "path",
            "t",
            "re_v_past",
            "im_v_past",
            "re_v_forward",
            "im_v_forward",
            "gap",
        ],
        rep.rows.iter().map(|r| {
            vec![
                r.path.to_string(),
                num(r.t),
                num(r.v_past.re),
                num(r.v_past.im),
                num(r.v_forward.re),
                num(r.v_forward.im),
                num((r.v_past - r.v_forward).norm()),
            ]
        }),
    )?;
    Ok(vec![main, fwd])
}

pub fn write_verify(dir: &Path, reports: &[PropertyReport]) -> Result<PathBuf> {
    write(
        dir,
        "verify_report.v1.csv",
        &["claim", "status", "magnitude", "tolerance", "runtime_s"],
        reports.iter().map(|r| {
            vec![
                r.claim.clone(),
                r.status.as_str().into(),
                num(r.magnitude),
                num(r.tolerance),
                format!("{:.3}", r.runtime.as_secs_f64()),
            ]
        }),
    )
}

/// One line per claim, e.g. `PASS riccati.comparison  magnitude=0 tolerance=1e-10 (0.12s)`.
pub fn verify_log(reports: &[PropertyReport]) -> String {
    let width = reports.iter().map(|r| r.claim.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in reports {
        let _ = write!(
            s,
            "{:<4} {:<width$}  magnitude={:.3e} tolerance={:.3e} ({:.2}s)",
            r.status.as_str().to_uppercase(),
            r.claim,
            r.magnitude,
            r.tolerance,
            r.runtime.as_secs_f64()
        );
        if !r.detail.is_empty() {
            let _ = write!(s, "  {}", r.detail);
        }
        s.push('\n');
    }
    s
}
