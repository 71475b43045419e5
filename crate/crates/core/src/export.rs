//! CSV and JSON writers.
//!
//! Numbers use Rust's shortest round-trip formatting, so identical inputs
//! always produce byte-identical files.

use std::io::Write;

use num_complex::Complex;
use serde::Serialize;

use crate::estimator::{AcfEstimate, PpoEstimate};
use crate::geometry::ProductArray;
use crate::multidim::{DirectionCosine3, LagTensor3};
use crate::signal::SnapshotBatch;
use crate::spectral::{LagSequence, Spectrum};
use crate::tapering::TaperedWeights;
use crate::theory::CovarianceCurve;
use crate::{Real, Result};

/// Quotes a text field when it holds a separator, quote or line break.
fn field(s: &str) -> std::borrow::Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\"")).into()
    } else {
        s.into()
    }
}

fn db<T: Real>(v: Complex<T>) -> T {
    T::lit(10.0) * v.norm().log10()
}

/// `u,re,im,power_db`.
pub fn write_spectrum_csv<T: Real, W: Write>(mut w: W, spec: &Spectrum<T>) -> Result<()> {
    writeln!(w, "u,re,im,power_db")?;
    for (u, v) in spec.u().iter().zip(spec.values()) {
        writeln!(w, "{u},{},{},{}", v.re, v.im, db(*v))?;
    }
    Ok(())
}

/// Several spectra in long format: `curve,u,re,im,power_db`.
pub fn write_curves_csv<T: Real, W: Write>(
    mut w: W,
    curves: &[(String, Spectrum<T>)],
) -> Result<()> {
    writeln!(w, "curve,u,re,im,power_db")?;
    for (name, spec) in curves {
        let name = field(name);
        for (u, v) in spec.u().iter().zip(spec.values()) {
            writeln!(w, "{name},{u},{},{},{}", v.re, v.im, db(*v))?;
        }
    }
    Ok(())
}

/// `u,re,im,power_db,trials`.
pub fn write_ppo_csv<T: Real, W: Write>(mut w: W, est: &PpoEstimate<T>) -> Result<()> {
    writeln!(w, "u,re,im,power_db,trials")?;
    for (u, v) in est.spectrum.u().iter().zip(est.spectrum.values()) {
        writeln!(
            w,
            "{u},{},{},{},{}",
            v.re,
            v.im,
            db(*v),
            est.trials_averaged
        )?;
    }
    Ok(())
}

/// `taper,index,re,im` over each subarray extent, zeros included.
pub fn write_tapers_csv<T: Real, W: Write>(
    mut w: W,
    tapers: &[(String, TaperedWeights<T>)],
) -> Result<()> {
    writeln!(w, "taper,index,re,im")?;
    for (name, taper) in tapers {
        let name = field(name);
        for (i, v) in taper.values().iter().enumerate() {
            writeln!(w, "{name},{i},{},{}", v.re, v.im)?;
        }
    }
    Ok(())
}

/// `k,re,im`.
pub fn write_lags_csv<T: Real, W: Write>(mut w: W, seq: &LagSequence<T>) -> Result<()> {
    writeln!(w, "k,re,im")?;
    for (k, v) in seq.iter() {
        writeln!(w, "{k},{},{}", v.re, v.im)?;
    }
    Ok(())
}

pub fn write_acf_csv<T: Real, W: Write>(w: W, acf: &AcfEstimate<T>) -> Result<()> {
    write_lags_csv(w, &acf.lags)
}

/// `curve,delta_u,re,im` for one or more covariance curves.
pub fn write_covariance_csv<T: Real, W: Write>(
    mut w: W,
    curves: &[(String, CovarianceCurve<T>)],
) -> Result<()> {
    writeln!(w, "curve,delta_u,re,im")?;
    for (name, curve) in curves {
        let name = field(name);
        for (du, v) in curve.delta_u.iter().zip(&curve.values) {
            writeln!(w, "{name},{du},{},{}", v.re, v.im)?;
        }
    }
    Ok(())
}

/// `array,index,a,b` occupancy over each array's union aperture.
pub fn write_geometry_csv<W: Write>(mut w: W, arrays: &[ProductArray]) -> Result<()> {
    writeln!(w, "array,index,a,b")?;
    for arr in arrays {
        let (a, b) = (arr.subarray_a(), arr.subarray_b());
        let label = field(arr.label());
        for i in 0..arr.span() {
            writeln!(
                w,
                "{label},{i},{},{}",
                (i < a.extent() && a.is_occupied(i)) as u8,
                (i < b.extent() && b.is_occupied(i)) as u8
            )?;
        }
    }
    Ok(())
}

/// `kx,ky,kz,re,im`, x-fastest.
pub fn write_lag3_csv<T: Real, W: Write>(mut w: W, lags: &LagTensor3<T>) -> Result<()> {
    writeln!(w, "kx,ky,kz,re,im")?;
    let (first, last) = (lags.first_lag(), lags.last_lag());
    for kz in first[2]..=last[2] {
        for ky in first[1]..=last[1] {
            for kx in first[0]..=last[0] {
                let v = lags.get([kx, ky, kz]);
                writeln!(w, "{kx},{ky},{kz},{},{}", v.re, v.im)?;
            }
        }
    }
    Ok(())
}

/// `ux,uy,uz,power_db`.
pub fn write_spectrum3_csv<T: Real, W: Write>(
    mut w: W,
    points: &[(DirectionCosine3<T>, Complex<T>)],
) -> Result<()> {
    writeln!(w, "ux,uy,uz,power_db")?;
    for (d, v) in points {
        writeln!(w, "{},{},{},{}", d.u[0], d.u[1], d.u[2], db(*v))?;
    }
    Ok(())
}

/// Raw sensor data, one row per sample: `trial,subarray,index,re,im`.
pub fn write_snapshots_csv<T: Real, W: Write>(mut w: W, batch: &SnapshotBatch<T>) -> Result<()> {
    writeln!(w, "trial,subarray,index,re,im")?;
    for t in 0..batch.trials() {
        let trial = batch.first_trial + t;
        for (name, x) in [("a", &batch.x1), ("b", &batch.x2)] {
            for (i, v) in x.row(t).iter().enumerate() {
                writeln!(w, "{trial},{name},{i},{},{}", v.re, v.im)?;
            }
        }
    }
    Ok(())
}

/// Pretty JSON followed by a newline.
pub fn write_json<S: Serialize, W: Write>(mut w: W, value: &S) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    writeln!(w)?;
    Ok(())
}
