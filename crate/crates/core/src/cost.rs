//! Analytic network cost.
//!
//! ```text
//! lambda_eff = lambda0 / max(d_s, d_min)^2
//! travel     = lambda_eff * (2 d_h + d_s)
//! time       = lambda_eff * ((2 d_h + d_s) / speed + 1 / mu)
//! congestion = lambda_eff * W_q,   W_q = lambda_eff / (mu (mu - lambda_eff))
//! total      = alpha * travel + beta * time + gamma * congestion
//! ```
//!
//! Congestion is only defined while `lambda_eff < mu`; beyond that the cell is
//! reported as unstable rather than clipped.
//!
//! [`classify_grid`] evaluates the total over a `(d_s, d_h)` grid and labels
//! each interior cell. A cell is critical when the discrete gradient changes
//! sign (or vanishes) along both axes; critical cells are typed by the signs
//! of the eigenvalues of the discrete Hessian built from index-space second
//! differences. Non-critical cells are `Regular`.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::DEFAULT_SPEED_KMH;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("axis {axis} needs at least 3 points, got {len}")]
    AxisTooShort { axis: &'static str, len: usize },
    #[error("axis {axis} must be finite and strictly ascending")]
    AxisNotAscending { axis: &'static str },
    #[error("invalid cost parameter {field}: {reason}")]
    InvalidParams { field: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Demand scale, mail·km²/h.
    pub lambda0: f64,
    /// Hub capacity, mail/h.
    pub mu: f64,
    pub speed: f64,
    /// Floor applied to `d_s` before the inverse-square law, km.
    pub d_min: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            lambda0: 100.0,
            mu: 10.0,
            speed: DEFAULT_SPEED_KMH,
            d_min: 0.1,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), CostError> {
        let bad = |field, reason: &str| {
            Err(CostError::InvalidParams {
                field,
                reason: reason.to_string(),
            })
        };
        for (field, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(field, "must be finite and >= 0");
            }
        }
        if self.alpha + self.beta + self.gamma <= 0.0 {
            return bad("alpha+beta+gamma", "must be > 0");
        }
        if !(self.lambda0.is_finite() && self.lambda0 >= 0.0) {
            return bad("lambda0", "must be finite and >= 0");
        }
        for (field, v) in [("mu", self.mu), ("speed", self.speed), ("d_min", self.d_min)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(field, "must be finite and > 0");
            }
        }
        Ok(())
    }

    /// Smallest `d_s` whose demand the hub can absorb (`lambda_eff < mu`).
    pub fn stability_edge_km(&self) -> f64 {
        (self.lambda0 / self.mu).sqrt().max(self.d_min)
    }
}

/// Inverse-square demand with the `d_min` clamp.
pub fn demand_rate(d_s_km: f64, params: &CostParams) -> f64 {
    let d = d_s_km.max(params.d_min);
    params.lambda0 / (d * d)
}

pub fn travel_cost(d_s_km: f64, d_h_km: f64, lambda_eff: f64) -> f64 {
    lambda_eff * (2.0 * d_h_km + d_s_km)
}

pub fn time_cost(d_s_km: f64, d_h_km: f64, lambda_eff: f64, params: &CostParams) -> f64 {
    lambda_eff * ((2.0 * d_h_km + d_s_km) / params.speed + 1.0 / params.mu)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Congestion {
    Stable(f64),
    /// `lambda_eff >= mu`: the queue grows without bound.
    Unstable,
}

impl Congestion {
    pub fn value(self) -> Option<f64> {
        match self {
            Congestion::Stable(v) => Some(v),
            Congestion::Unstable => None,
        }
    }
}

/// `lambda_eff * W_q` for an M/M/1 hub. Hub distance does not enter.
pub fn congestion_cost(lambda_eff: f64, params: &CostParams) -> Congestion {
    let mu = params.mu;
    if lambda_eff >= mu {
        return Congestion::Unstable;
    }
    let wait = lambda_eff / (mu * (mu - lambda_eff));
    Congestion::Stable(lambda_eff * wait)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub lambda_eff: f64,
    pub travel: f64,
    pub time: f64,
    pub congestion: Congestion,
    /// `None` when congestion is unstable.
    pub total: Option<f64>,
}

pub fn total_cost(d_s_km: f64, d_h_km: f64, params: &CostParams) -> CostBreakdown {
    let lambda_eff = demand_rate(d_s_km, params);
    let travel = travel_cost(d_s_km, d_h_km, lambda_eff);
    let time = time_cost(d_s_km, d_h_km, lambda_eff, params);
    let congestion = congestion_cost(lambda_eff, params);
    let total = congestion
        .value()
        .map(|c| params.alpha * travel + params.beta * time + params.gamma * c);
    CostBreakdown {
        lambda_eff,
        travel,
        time,
        congestion,
        total,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellClass {
    Min,
    Max,
    Saddle,
    /// Critical, but a principal curvature is below tolerance.
    Flat,
    /// Not a critical cell.
    Regular,
    /// The hub queue is unstable here; the cost is undefined.
    Unstable,
    /// Grid edge, or next to an unstable cell; has no full neighbourhood.
    Boundary,
}

impl CellClass {
    pub fn label(self) -> &'static str {
        match self {
            CellClass::Min => "min",
            CellClass::Max => "max",
            CellClass::Saddle => "saddle",
            CellClass::Flat => "flat",
            CellClass::Regular => "regular",
            CellClass::Unstable => "unstable",
            CellClass::Boundary => "boundary",
        }
    }

    pub fn is_critical(self) -> bool {
        matches!(
            self,
            CellClass::Min | CellClass::Max | CellClass::Saddle | CellClass::Flat
        )
    }
}

impl fmt::Display for CellClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone)]
pub struct GridSurface {
    pub d_s_km: Vec<f64>,
    pub d_h_km: Vec<f64>,
    /// Row-major: index `i * d_h_km.len() + j`.
    pub cells: Vec<CostBreakdown>,
    pub classes: Vec<CellClass>,
}

impl GridSurface {
    pub fn cell(&self, i: usize, j: usize) -> &CostBreakdown {
        &self.cells[i * self.d_h_km.len() + j]
    }

    pub fn class(&self, i: usize, j: usize) -> CellClass {
        self.classes[i * self.d_h_km.len() + j]
    }

    pub fn totals(&self) -> Vec<Option<f64>> {
        self.cells.iter().map(|c| c.total).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["d_s_km", "d_h_km", "travel", "time", "congestion", "total", "class"])?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for (i, d_s) in self.d_s_km.iter().enumerate() {
            for (j, d_h) in self.d_h_km.iter().enumerate() {
                let c = self.cell(i, j);
                w.write_record([
                    d_s.to_string(),
                    d_h.to_string(),
                    c.travel.to_string(),
                    c.time.to_string(),
                    opt(c.congestion.value()),
                    opt(c.total),
                    self.class(i, j).label().to_string(),
                ])?;
            }
        }
        w.flush()
    }
}

fn check_axis(axis: &'static str, values: &[f64]) -> Result<(), CostError> {
    if values.len() < 3 {
        return Err(CostError::AxisTooShort {
            axis,
            len: values.len(),
        });
    }
    let ascending = values.iter().all(|v| v.is_finite()) && values.windows(2).all(|w| w[0] < w[1]);
    if !ascending {
        return Err(CostError::AxisNotAscending { axis });
    }
    Ok(())
}

/// Evaluates and classifies the total cost over the grid.
pub fn classify_grid(params: &CostParams, d_s_km: &[f64], d_h_km: &[f64]) -> Result<GridSurface, CostError> {
    check_axis("d_s", d_s_km)?;
    check_axis("d_h", d_h_km)?;
    let cols = d_h_km.len();
    let cells: Vec<CostBreakdown> = (0..d_s_km.len() * cols)
        .into_par_iter()
        .map(|k| total_cost(d_s_km[k / cols], d_h_km[k % cols], params))
        .collect();
    let totals: Vec<Option<f64>> = cells.iter().map(|c| c.total).collect();
    let classes = classify_cells(d_s_km.len(), cols, &totals);
    Ok(GridSurface {
        d_s_km: d_s_km.to_vec(),
        d_h_km: d_h_km.to_vec(),
        cells,
        classes,
    })
}

/// Flat tolerance for a surface: `1e-9 * max |cell|` over defined cells.
pub fn flat_tolerance(values: &[Option<f64>]) -> f64 {
    1e-9 * values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Classifies a row-major `rows x cols` surface. `None` marks undefined cells.
pub fn classify_cells(rows: usize, cols: usize, values: &[Option<f64>]) -> Vec<CellClass> {
    assert_eq!(values.len(), rows * cols, "surface shape mismatch");
    let tol = flat_tolerance(values);
    (0..rows * cols)
        .into_par_iter()
        .map(|k| classify_one(rows, cols, values, k / cols, k % cols, tol))
        .collect()
}

fn classify_one(rows: usize, cols: usize, values: &[Option<f64>], i: usize, j: usize, tol: f64) -> CellClass {
    let at = |r: usize, c: usize| values[r * cols + c];
    if at(i, j).is_none() {
        return CellClass::Unstable;
    }
    if i == 0 || j == 0 || i + 1 == rows || j + 1 == cols {
        return CellClass::Boundary;
    }
    let mut f = [[0.0; 3]; 3];
    for (di, row) in f.iter_mut().enumerate() {
        for (dj, v) in row.iter_mut().enumerate() {
            match at(i + di - 1, j + dj - 1) {
                Some(x) => *v = x,
                None => return CellClass::Boundary,
            }
        }
    }
    let snap = |d: f64| if d.abs() <= tol { 0.0 } else { d };
    let changes_sign = |back: f64, fwd: f64| {
        let (b, a) = (snap(back), snap(fwd));
        !(b > 0.0 && a > 0.0) && !(b < 0.0 && a < 0.0)
    };
    let c = f[1][1];
    let critical_s = changes_sign(c - f[0][1], f[2][1] - c);
    let critical_h = changes_sign(c - f[1][0], f[1][2] - c);
    if !(critical_s && critical_h) {
        return CellClass::Regular;
    }

    let hss = f[2][1] - 2.0 * c + f[0][1];
    let hhh = f[1][2] - 2.0 * c + f[1][0];
    let hsh = (f[2][2] - f[2][0] - f[0][2] + f[0][0]) / 4.0;
    let mid = (hss + hhh) / 2.0;
    let rad = (((hss - hhh) / 2.0).powi(2) + hsh * hsh).sqrt();
    let (lo, hi) = (mid - rad, mid + rad);
    if lo.abs() <= tol || hi.abs() <= tol {
        CellClass::Flat
    } else if lo > 0.0 {
        CellClass::Min
    } else if hi < 0.0 {
        CellClass::Max
    } else {
        CellClass::Saddle
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::KM_PER_MILE;

    fn params() -> CostParams {
        CostParams::default()
    }

    #[test]
    fn demand_follows_inverse_square_with_clamp() {
        let p = CostParams {
            lambda0: 100.0,
            d_min: 0.1,
            ..params()
        };
        assert_eq!(demand_rate(10.0, &p), 1.0);
        assert!((demand_rate(0.0, &p) - 1e4).abs() < 1e-9);
        for d in [0.1, 0.5, 3.0, 17.0] {
            let ratio = demand_rate(d, &p) / demand_rate(2.0 * d, &p);
            assert!((ratio - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn travel_cost_examples() {
        let (d_s, d_h) = (5.0 * KM_PER_MILE, 50.0 * KM_PER_MILE);
        assert!((travel_cost(d_s, d_h, 1.0) - 168.98).abs() < 0.01);
        assert_eq!(travel_cost(d_s, d_h, 0.0), 0.0);
        assert_eq!(travel_cost(7.0, 0.0, 3.0), 21.0);
    }

    #[test]
    fn time_cost_examples() {
        let fast = CostParams {
            speed: f64::MAX,
            mu: 2.0,
            ..params()
        };
        assert!((time_cost(10.0, 10.0, 1.0, &fast) - 0.5).abs() < 1e-12);
        let slow_hub = CostParams {
            speed: 30.0 * KM_PER_MILE,
            mu: f64::MAX,
            ..params()
        };
        let t = time_cost(5.0 * KM_PER_MILE, 50.0 * KM_PER_MILE, 1.0, &slow_hub);
        assert!((t - 3.5).abs() < 1e-12);
        let unit = CostParams { mu: 1.0, ..params() };
        assert_eq!(time_cost(0.0, 0.0, 1.0, &unit), 1.0);
    }

    #[test]
    fn congestion_examples() {
        let p = CostParams { mu: 1.0, ..params() };
        // W_q = 0.5 / (1 * 0.5) = 1
        assert_eq!(congestion_cost(0.5, &p), Congestion::Stable(0.5));
        assert_eq!(congestion_cost(0.0, &p), Congestion::Stable(0.0));
        assert_eq!(congestion_cost(1.0, &p), Congestion::Unstable);
        assert_eq!(congestion_cost(3.0, &p), Congestion::Unstable);
    }

    #[test]
    fn total_cost_weights() {
        let zero = CostParams {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            ..params()
        };
        assert_eq!(total_cost(20.0, 30.0, &zero).total, Some(0.0));
        assert!(zero.validate().is_err());
        let travel_only = CostParams {
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
            ..params()
        };
        let b = total_cost(20.0, 30.0, &travel_only);
        assert_eq!(b.total, Some(b.travel));
        let unstable = total_cost(1.0, 30.0, &params());
        assert_eq!(unstable.congestion, Congestion::Unstable);
        assert_eq!(unstable.total, None);
    }

    #[test]
    fn travel_component_eventually_falls_with_spoke_distance() {
        let p = params();
        let d_h = 40.0;
        let travel: Vec<f64> = (1..=200)
            .map(|k| {
                let d_s = k as f64;
                travel_cost(d_s, d_h, demand_rate(d_s, &p))
            })
            .collect();
        let tail = &travel[50..];
        assert!(tail.windows(2).all(|w| w[1] < w[0]));
        assert!(travel.last().unwrap() < &travel[0]);
    }

    #[test]
    fn rejects_short_or_unsorted_axes() {
        let p = params();
        assert_eq!(
            classify_grid(&p, &[1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap_err(),
            CostError::AxisTooShort { axis: "d_s", len: 2 }
        );
        assert_eq!(
            classify_grid(&p, &[5.0, 6.0, 7.0], &[3.0, 2.0, 1.0]).unwrap_err(),
            CostError::AxisNotAscending { axis: "d_h" }
        );
    }

    fn canonical(f: impl Fn(f64, f64) -> f64) -> (usize, Vec<CellClass>) {
        let axis: Vec<f64> = (-5..=5).map(|k| k as f64).collect();
        let n = axis.len();
        let values: Vec<Option<f64>> = axis
            .iter()
            .flat_map(|&x| axis.iter().map(move |&y| (x, y)))
            .map(|(x, y)| Some(f(x, y)))
            .collect();
        (n, classify_cells(n, n, &values))
    }

    #[test]
    fn bowl_has_single_minimum_at_origin() {
        let (n, classes) = canonical(|x, y| x * x + y * y);
        let mins: Vec<usize> = (0..classes.len()).filter(|&k| classes[k] == CellClass::Min).collect();
        assert_eq!(mins, vec![(n / 2) * n + n / 2]);
        assert!(!classes.contains(&CellClass::Saddle));
    }

    #[test]
    fn canonical_saddle_at_center() {
        let (n, classes) = canonical(|x, y| x * x - y * y);
        assert_eq!(classes[(n / 2) * n + n / 2], CellClass::Saddle);
        assert_eq!(classes.iter().filter(|c| c.is_critical()).count(), 1);
    }

    #[test]
    fn cap_is_a_maximum_and_plane_is_regular() {
        let (n, classes) = canonical(|x, y| -(x * x) - 2.0 * y * y);
        assert_eq!(classes[(n / 2) * n + n / 2], CellClass::Max);
        let (_, plane) = canonical(|x, y| 3.0 * x - y + 100.0);
        assert!(plane
            .iter()
            .all(|c| matches!(c, CellClass::Regular | CellClass::Boundary)));
    }

    #[test]
    fn unstable_cells_are_labelled() {
        let p = params();
        let d_s: Vec<f64> = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let d_h: Vec<f64> = vec![0.0, 10.0, 20.0];
        let surface = classify_grid(&p, &d_s, &d_h).unwrap();
        // lambda_eff = 100/d_s^2 >= 10 for d_s <= sqrt(10)
        assert_eq!(surface.class(0, 1), CellClass::Unstable);
        assert_eq!(surface.class(2, 1), CellClass::Unstable);
        assert!(surface.cell(3, 1).total.is_some());
        assert_eq!(surface.class(3, 1), CellClass::Boundary);
        let mut buf = Vec::new();
        surface.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("d_s_km,d_h_km,travel,time,congestion,total,class\n"));
        assert_eq!(text.lines().count(), 1 + 15);
        assert!(text.lines().nth(1).unwrap().ends_with(",,,unstable"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn components_are_non_negative(d_s in 0.0f64..500.0, d_h in 0.0f64..500.0) {
                let b = total_cost(d_s, d_h, &params());
                prop_assert!(b.travel >= 0.0 && b.time >= 0.0);
                if let Congestion::Stable(c) = b.congestion {
                    prop_assert!(c >= 0.0);
                }
            }

            #[test]
            fn breakdown_identity(d_s in 3.2f64..500.0, d_h in 0.0f64..500.0,
                                  a in 0.0f64..5.0, b in 0.0f64..5.0, g in 0.0f64..5.0) {
                let p = CostParams { alpha: a, beta: b, gamma: g, ..params() };
                let c = total_cost(d_s, d_h, &p);
                let expect = a * c.travel + b * c.time + g * c.congestion.value().unwrap();
                let total = c.total.unwrap();
                prop_assert!((total - expect).abs() <= 1e-12 * expect.abs().max(f64::MIN_POSITIVE));
            }

            #[test]
            fn travel_increases_with_hub_distance(d_s in 0.0f64..100.0, d_h in 0.0f64..100.0,
                                                  step in 0.01f64..10.0, lambda in 0.01f64..50.0) {
                prop_assert!(travel_cost(d_s, d_h + step, lambda) > travel_cost(d_s, d_h, lambda));
            }

            #[test]
            fn congestion_increases_toward_capacity(x in 0.0f64..0.98, dx in 0.001f64..0.01) {
                let p = params();
                let lo = congestion_cost(x * p.mu, &p).value().unwrap();
                let hi = congestion_cost((x + dx) * p.mu, &p).value().unwrap();
                prop_assert!(hi > lo);
            }

            #[test]
            fn detour_ratio_falls_with_spoke_distance(d_s in 0.1f64..100.0, step in 0.01f64..10.0,
                                                      d_h in 0.01f64..100.0) {
                let ratio = |s: f64| (2.0 * d_h + s) / s;
                prop_assert!(ratio(d_s + step) < ratio(d_s));
            }
        }
    }
}
