//! Eulerian finite-volume model of the tempering medium in the outer tube.
//!
//! Convective fluxes use fifth-order WENO reconstruction (Jiang-Shu
//! smoothness indicators), diffusion uses second-order central differences.
//! Heat from the slugs enters as a per-cell source; losses to the
//! environment act through the outer wall.

use std::f64::consts::PI;

use super::params::{GridIntegrator, PlantParams};
use crate::error::{Error, Result};

const WENO_EPS: f64 = 1e-6;
const GHOSTS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TemperingGrid {
    pub dz: f64,
    pub temps: Vec<f64>,
    pub velocity: f64,
    pub diffusivity: f64,
}

/// Boundary treatment for the convection-diffusion operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    Periodic,
    /// Fixed inlet temperature upstream, zero gradient downstream.
    InletOutlet { inlet: f64 },
}

impl TemperingGrid {
    pub fn uniform(length: f64, n_cells: usize, temp: f64, diffusivity: f64) -> Result<Self> {
        if n_cells < 10 {
            return Err(Error::invalid("n_cells", "must be at least 10"));
        }
        Ok(Self {
            dz: length / n_cells as f64,
            temps: vec![temp; n_cells],
            velocity: 0.0,
            diffusivity,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.temps.len()
    }

    pub fn length(&self) -> f64 {
        self.dz * self.temps.len() as f64
    }

    /// Index of the cell containing `z`, clamped to the grid.
    pub fn cell_index(&self, z: f64) -> usize {
        let k = (z / self.dz).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.temps.len() - 1)
        }
    }

    pub fn temperature_at(&self, z: f64) -> f64 {
        self.temps[self.cell_index(z)]
    }

    pub fn outlet_temperature(&self) -> f64 {
        *self.temps.last().unwrap()
    }

    /// Distributes `q` over [`heat_split`] into `sources`.
    pub fn deposit_heat(&self, z_start: f64, z_end: f64, q: f64, sources: &mut [f64]) -> Result<()> {
        for (k, part) in heat_split(z_start, z_end, q, self.dz, self.temps.len())? {
            sources[k] += part;
        }
        Ok(())
    }
}

/// Fifth-order WENO value at the right face of the centre cell of `s`
/// (cells `i-2 ..= i+2`, upwind side on the left).
pub fn weno5_face(s: [f64; 5]) -> f64 {
    let [a, b, c, d, e] = s;
    let p0 = (2.0 * a - 7.0 * b + 11.0 * c) / 6.0;
    let p1 = (-b + 5.0 * c + 2.0 * d) / 6.0;
    let p2 = (2.0 * c + 5.0 * d - e) / 6.0;

    let b0 = 13.0 / 12.0 * (a - 2.0 * b + c).powi(2) + 0.25 * (a - 4.0 * b + 3.0 * c).powi(2);
    let b1 = 13.0 / 12.0 * (b - 2.0 * c + d).powi(2) + 0.25 * (b - d).powi(2);
    let b2 = 13.0 / 12.0 * (c - 2.0 * d + e).powi(2) + 0.25 * (3.0 * c - 4.0 * d + e).powi(2);

    let w0 = 0.1 / (WENO_EPS + b0).powi(2);
    let w1 = 0.6 / (WENO_EPS + b1).powi(2);
    let w2 = 0.3 / (WENO_EPS + b2).powi(2);
    (w0 * p0 + w1 * p1 + w2 * p2) / (w0 + w1 + w2)
}

fn padded(values: &[f64], boundary: Boundary) -> Vec<f64> {
    let n = values.len();
    let mut out = Vec::with_capacity(n + 2 * GHOSTS);
    match boundary {
        Boundary::Periodic => {
            out.extend_from_slice(&values[n - GHOSTS..]);
            out.extend_from_slice(values);
            out.extend_from_slice(&values[..GHOSTS]);
        }
        Boundary::InletOutlet { inlet } => {
            out.extend(std::iter::repeat_n(inlet, GHOSTS));
            out.extend_from_slice(values);
            out.extend(std::iter::repeat_n(values[n - 1], GHOSTS));
        }
    }
    out
}

/// Semi-discrete convection operator `-d(v T)/dz` in flux form.
pub fn advection_rhs(values: &[f64], velocity: f64, dz: f64, boundary: Boundary, out: &mut [f64]) {
    let n = values.len();
    let p = padded(values, boundary);
    // face f sits between cells f-1 and f, f = 0..=n
    let face = |f: usize| -> f64 {
        let c = f + GHOSTS; // padded index of cell f
        if velocity >= 0.0 {
            weno5_face([p[c - 3], p[c - 2], p[c - 1], p[c], p[c + 1]])
        } else {
            weno5_face([p[c + 2], p[c + 1], p[c], p[c - 1], p[c - 2]])
        }
    };
    let mut left = velocity * face(0);
    for i in 0..n {
        let right = velocity * face(i + 1);
        out[i] = -(right - left) / dz;
        left = right;
    }
}

/// Adds the central-difference diffusion term `D d2T/dz2` to `out`.
pub fn add_diffusion_rhs(values: &[f64], diffusivity: f64, dz: f64, boundary: Boundary, out: &mut [f64]) {
    if diffusivity == 0.0 {
        return;
    }
    let p = padded(values, boundary);
    let k = diffusivity / (dz * dz);
    for i in 0..values.len() {
        let c = i + GHOSTS;
        out[i] += k * (p[c - 1] - 2.0 * p[c] + p[c + 1]);
    }
}

/// Splits heat flow `q` over the cells overlapped by `[z_start, z_end]`,
/// proportionally to overlap length. The interval is clipped to the grid.
/// The contributions sum to `q` up to one rounding.
pub fn heat_split(z_start: f64, z_end: f64, q: f64, dz: f64, n_cells: usize) -> Result<Vec<(usize, f64)>> {
    if !(z_start <= z_end) {
        return Err(Error::invalid(
            "z_start",
            format!("interval [{z_start}, {z_end}] is reversed"),
        ));
    }
    let length = dz * n_cells as f64;
    let a = z_start.clamp(0.0, length);
    let b = z_end.clamp(0.0, length);
    let cell_of = |z: f64| ((z / dz).floor().max(0.0) as usize).min(n_cells - 1);
    if b - a <= 0.0 {
        return Ok(vec![(cell_of(b), q)]);
    }
    let first = cell_of(a);
    let last = cell_of(b);
    // an endpoint exactly on a face contributes nothing to the next cell
    let last = if last > first && (b - last as f64 * dz) <= 0.0 { last - 1 } else { last };

    let span = b - a;
    let mut parts = Vec::with_capacity(last - first + 1);
    let mut sum = 0.0;
    let mut comp = 0.0;
    for k in first..last {
        let lo = (k as f64 * dz).max(a);
        let hi = ((k + 1) as f64 * dz).min(b);
        let part = q * ((hi - lo) / span);
        parts.push((k, part));
        // Neumaier summation
        let t = sum + part;
        if sum.abs() >= part.abs() {
            comp += (sum - t) + part;
        } else {
            comp += (part - t) + sum;
        }
        sum = t;
    }
    parts.push((last, q - (sum + comp)));
    Ok(parts)
}

/// Per-cell constants for the source term.
#[derive(Debug, Clone, Copy)]
struct CellThermal {
    heat_capacity: f64,
    env_conductance: f64,
    t_env: f64,
}

impl CellThermal {
    fn new(params: &PlantParams, dz: f64) -> Self {
        Self {
            heat_capacity: params.tm_density * params.tm_heat_capacity * params.tm_annulus() * dz,
            env_conductance: params.u_tm_env * PI * params.d_tm_outer * dz,
            t_env: params.t_env,
        }
    }
}

/// Advances the tempering field by one step of `dt`.
///
/// `sources` is the heat flow from the slugs into each cell (W). Rejects
/// steps where the convective Courant number or twice the diffusion number
/// exceeds one.
pub fn tm_grid_step(
    grid: &mut TemperingGrid,
    sources: &[f64],
    params: &PlantParams,
    dt: f64,
    integrator: GridIntegrator,
) -> Result<()> {
    let courant = stability_number(grid, dt);
    if courant > 1.0 {
        return Err(Error::Cfl { courant });
    }
    let thermal = CellThermal::new(params, grid.dz);
    let boundary = Boundary::InletOutlet { inlet: params.t_tm_in };
    let (v, d, dz) = (grid.velocity, grid.diffusivity, grid.dz);
    let rhs = |t: &[f64], out: &mut [f64]| {
        advection_rhs(t, v, dz, boundary, out);
        add_diffusion_rhs(t, d, dz, boundary, out);
        for i in 0..t.len() {
            out[i] += (sources[i] - thermal.env_conductance * (t[i] - thermal.t_env)) / thermal.heat_capacity;
        }
    };
    integrate(&mut grid.temps, dt, integrator, rhs);
    if grid.temps.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("tempering temperature field".into()));
    }
    Ok(())
}

/// Largest of the convective Courant number and twice the diffusion number.
pub fn stability_number(grid: &TemperingGrid, dt: f64) -> f64 {
    let conv = grid.velocity.abs() * dt / grid.dz;
    let diff = 2.0 * grid.diffusivity * dt / (grid.dz * grid.dz);
    conv.max(diff)
}

/// One explicit step of `du/dt = rhs(u)`.
pub fn integrate<F>(u: &mut [f64], dt: f64, integrator: GridIntegrator, rhs: F)
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = u.len();
    let mut k = vec![0.0; n];
    match integrator {
        GridIntegrator::Euler => {
            rhs(u, &mut k);
            for i in 0..n {
                u[i] += dt * k[i];
            }
        }
        GridIntegrator::SspRk3 => {
            let u0 = u.to_vec();
            rhs(&u0, &mut k);
            let mut stage: Vec<f64> = (0..n).map(|i| u0[i] + dt * k[i]).collect();
            rhs(&stage, &mut k);
            for i in 0..n {
                stage[i] = 0.75 * u0[i] + 0.25 * (stage[i] + dt * k[i]);
            }
            rhs(&stage, &mut k);
            for i in 0..n {
                u[i] = u0[i] / 3.0 + 2.0 / 3.0 * (stage[i] + dt * k[i]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weno_reproduces_constants_and_smooth_polynomials() {
        assert!((weno5_face([2.0; 5]) - 2.0).abs() < 1e-15);
        // cell averages of f(x) = x on unit cells centred at -2..2; face at 0.5
        let s = [-2.0, -1.0, 0.0, 1.0, 2.0];
        assert!((weno5_face(s) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn uniform_field_is_preserved() {
        let p = PlantParams {
            t_tm_in: 290.0,
            t_env: 290.0,
            ..PlantParams::default()
        };
        let mut g = TemperingGrid::uniform(p.length, 48, 290.0, p.tm_diffusivity).unwrap();
        g.velocity = 0.03;
        let sources = vec![0.0; 48];
        for _ in 0..20 {
            tm_grid_step(&mut g, &sources, &p, 5.0, GridIntegrator::SspRk3).unwrap();
        }
        assert!(g.temps.iter().all(|&t| (t - 290.0).abs() < 1e-12));
    }

    #[test]
    fn isolated_cell_energy_balance() {
        let p = PlantParams::default();
        for integ in [GridIntegrator::Euler, GridIntegrator::SspRk3] {
            let mut g = TemperingGrid::uniform(p.length, 24, p.t_env, 0.0).unwrap();
            let mut sources = vec![0.0; 24];
            sources[7] = 3.0;
            tm_grid_step(&mut g, &sources, &p, 5.0, integ).unwrap();
            let v_cell = p.tm_annulus() * g.dz;
            let expected = 5.0 * 3.0 / (p.tm_density * p.tm_heat_capacity * v_cell);
            let rise = g.temps[7] - p.t_env;
            // Euler sees T = T_env only; RK3 stages already lose heat to the environment
            let tol = match integ {
                GridIntegrator::Euler => 1e-12,
                GridIntegrator::SspRk3 => 1e-2,
            };
            assert!((rise - expected).abs() / expected < tol, "{integ:?}: {rise} vs {expected}");
            assert_eq!(g.temps[6], p.t_env);
        }
    }

    #[test]
    fn cfl_violation_rejected() {
        let p = PlantParams::default();
        let mut g = TemperingGrid::uniform(p.length, 48, 290.0, 0.0).unwrap();
        g.velocity = 1.0;
        let err = tm_grid_step(&mut g, &[0.0; 48], &p, 5.0, GridIntegrator::Euler).unwrap_err();
        assert!(matches!(err, Error::Cfl { .. }));
    }

    #[test]
    fn split_inside_one_cell() {
        let parts = heat_split(1.1, 1.4, 2.5, 0.5, 48).unwrap();
        assert_eq!(parts, vec![(2, 2.5)]);
    }

    #[test]
    fn split_quarter_three_quarters() {
        let parts = heat_split(0.875, 1.375, 4.0, 0.5, 48).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].0, 1);
        assert!((parts[0].1 - 1.0).abs() < 1e-14);
        assert!((parts[1].1 - 3.0).abs() < 1e-14);
    }

    #[test]
    fn split_traverses_several_cells() {
        let parts = heat_split(0.25, 1.75, 3.0, 0.5, 48).unwrap();
        let expected = [(0, 0.5), (1, 1.0), (2, 1.0), (3, 0.5)];
        for ((k, q), (ek, eq)) in parts.iter().zip(expected) {
            assert_eq!(*k, ek);
            assert!((q - eq).abs() < 1e-14);
        }
    }

    #[test]
    fn split_clips_to_grid() {
        let parts = heat_split(23.9, 25.0, 1.0, 0.5, 48).unwrap();
        assert_eq!(parts, vec![(47, 1.0)]);
        assert!(heat_split(2.0, 1.0, 1.0, 0.5, 48).is_err());
    }
}
