//! Binary loss and gradient surfaces over the open unit square.

use std::fmt::Write;
use std::str::FromStr;

use ttalab_core::losses::{binary_ce_grad, binary_ce_value, binary_sce_grad, binary_sce_value};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceLoss {
    Ce,
    Sce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceWhat {
    Value,
    Grad,
}

impl FromStr for SurfaceLoss {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(SurfaceLoss::Ce),
            "sce" => Ok(SurfaceLoss::Sce),
            _ => Err(HarnessError::Config(format!("unknown loss `{s}` (ce, sce)"))),
        }
    }
}

impl FromStr for SurfaceWhat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "value" => Ok(SurfaceWhat::Value),
            "grad" => Ok(SurfaceWhat::Grad),
            _ => Err(HarnessError::Config(format!("unknown quantity `{s}` (value, grad)"))),
        }
    }
}

/// One grid point: student probability `p`, teacher probability `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub p: f64,
    pub q: f64,
    pub f: f64,
}

/// Grid coordinates `k·step` strictly inside (0, 1), rounded to 12 decimals.
pub fn grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step < 0.5) {
        return Err(HarnessError::Config(format!("grid step must lie in (0, 0.5), got {step}")));
    }
    let round = |v: f64| (v * 1e12).round() / 1e12;
    Ok((1..).map(|k| round(k as f64 * step)).take_while(|&v| v < 1.0).collect())
}

/// Evaluates the closed-form binary loss or its `∂/∂p` on the grid, `p` outer.
pub fn emit_surface(loss: SurfaceLoss, what: SurfaceWhat, step: f64) -> Result<Vec<SurfacePoint>> {
    let axis = grid(step)?;
    let f = match (loss, what) {
        (SurfaceLoss::Ce, SurfaceWhat::Value) => binary_ce_value,
        (SurfaceLoss::Ce, SurfaceWhat::Grad) => binary_ce_grad,
        (SurfaceLoss::Sce, SurfaceWhat::Value) => binary_sce_value,
        (SurfaceLoss::Sce, SurfaceWhat::Grad) => binary_sce_grad,
    };
    let mut out = Vec::with_capacity(axis.len() * axis.len());
    for &p in &axis {
        for &q in &axis {
            out.push(SurfacePoint { p, q, f: f(p, q)? });
        }
    }
    Ok(out)
}

/// `p,q,f` with LF endings and fixed 12-decimal values.
pub fn surface_csv(points: &[SurfacePoint]) -> String {
    let mut s = String::from("p,q,f\n");
    for pt in points {
        writeln!(s, "{},{},{:.12}", pt.p, pt.q, pt.f).unwrap();
    }
    s
}
