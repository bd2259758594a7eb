//! Measurement model `y = T_c0 · f*(q)_{r,l} · [p_r, p_l]` and the stacked,
//! whitened residual vector of the MAP identification problem.

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::{ActiveMask, CalibrationParams, ClosureFrames, Prior};
use crate::elastic::{SolverSettings, Workspace};
use crate::error::{Error, Result};
use crate::kinematics::{Configuration, DhParams, FrameSet};
use crate::model::RobotModel;

/// One measurement: a configuration and the marker positions observed in
/// the camera-system frame (m). At least one marker must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub q: Configuration,
    pub y_right: Option<Vector3<f64>>,
    pub y_left: Option<Vector3<f64>>,
}

impl Sample {
    pub fn markers(&self) -> [Option<Vector3<f64>>; 2] {
        [self.y_right, self.y_left]
    }

    pub fn n_markers(&self) -> usize {
        self.markers().iter().flatten().count()
    }
}

pub(crate) fn markers_from_frames(model: &RobotModel, frames: &FrameSet, closure: &ClosureFrames) -> [Vector3<f64>; 2] {
    let t_c0 = closure.camera_frame();
    [
        t_c0.transform_point(&frames.frames[model.tcp.right].transform_point(&closure.marker_right)),
        t_c0.transform_point(&frames.frames[model.tcp.left].transform_point(&closure.marker_left)),
    ]
}

/// Predicted right and left marker positions in the camera-system frame.
pub fn measure(model: &RobotModel, q: &[f64], theta: &CalibrationParams, settings: &SolverSettings) -> Result<[Vector3<f64>; 2]> {
    let eq = crate::elastic::solve_equilibrium(model, q, &theta.rho0, &theta.compliance, &theta.masses, settings)?;
    Ok(markers_from_frames(model, &eq.frames, &theta.closure))
}

/// `Σₙ |y⁽ⁿ⁾ − h(q⁽ⁿ⁾, Θ)|² / σ_m² + (Θ − Θ_p)ᵀ Λ_p⁻¹ (Θ − Θ_p)`, the prior
/// term restricted to active parameters.
pub fn objective(
    model: &RobotModel,
    dataset: &[Sample],
    theta: &CalibrationParams,
    prior: &Prior,
    mask: &ActiveMask,
    settings: &SolverSettings,
) -> Result<f64> {
    let mut data = 0.0;
    for s in dataset {
        let h = measure(model, &s.q, theta, settings)?;
        for (y, h) in s.markers().iter().zip(h) {
            if let Some(y) = y {
                data += (y - h).norm_squared();
            }
        }
    }
    Ok(data / prior.sigma_m.powi(2) + prior.quadratic(theta, mask))
}

/// The identification problem in whitened coordinates
/// `zₖ = (Θₖ − Θ_p,ₖ)/σ_p,ₖ` over the active entries. The residual vector is
/// `[(y − h)/σ_m ; z]`, so its squared norm equals [`objective`].
pub struct CalibrationProblem<'a> {
    model: &'a RobotModel,
    dataset: &'a [Sample],
    prior: &'a Prior,
    active: Vec<usize>,
    mean: Vec<f64>,
    template: CalibrationParams,
    solver: SolverSettings,
    fd_step: f64,
    n_closure_start: usize,
}

impl<'a> CalibrationProblem<'a> {
    /// `solver` is used for every equilibrium solve; it should be much tighter
    /// than `fd_step` for the finite-difference Jacobian to be meaningful.
    pub fn new(
        model: &'a RobotModel,
        dataset: &'a [Sample],
        prior: &'a Prior,
        mask: &ActiveMask,
        solver: SolverSettings,
        fd_step: f64,
    ) -> Result<Self> {
        prior.validate(mask)?;
        solver.validate()?;
        let nj = model.n_joints();
        if let Some(s) = dataset.iter().find(|s| s.q.len() != nj || s.n_markers() == 0) {
            return Err(Error::InvalidInput(format!(
                "sample with {} joints and {} markers (model has {nj} joints)",
                s.q.len(),
                s.n_markers()
            )));
        }
        let template = prior.mean.clone();
        Ok(Self {
            model,
            dataset,
            prior,
            active: mask.active_indices(),
            mean: template.flatten(),
            n_closure_start: template.len() - 12,
            template,
            solver,
            fd_step,
        })
    }

    pub fn n_params(&self) -> usize {
        self.active.len()
    }

    pub fn n_residuals(&self) -> usize {
        self.dataset.iter().map(|s| 3 * s.n_markers()).sum::<usize>() + self.active.len()
    }

    pub fn n_measurements(&self) -> usize {
        self.dataset.iter().map(|s| 3 * s.n_markers()).sum()
    }

    pub fn params_from_z(&self, z: &[f64]) -> CalibrationParams {
        let mut v = self.mean.clone();
        for (k, &i) in self.active.iter().enumerate() {
            v[i] = self.mean[i] + self.prior.sigma[i] * z[k];
        }
        self.template.with_values(&v).expect("layout is fixed")
    }

    pub fn z_from_params(&self, theta: &CalibrationParams) -> Vec<f64> {
        let v = theta.flatten();
        self.active
            .iter()
            .map(|&i| (v[i] - self.mean[i]) / self.prior.sigma[i])
            .collect()
    }

    fn sample_rows(&self, s: &Sample, h: &[Vector3<f64>; 2], out: &mut Vec<f64>) {
        for (y, h) in s.markers().iter().zip(h) {
            if let Some(y) = y {
                out.extend((y - h).iter().map(|e| e / self.prior.sigma_m));
            }
        }
    }

    pub fn residuals(&self, z: &[f64]) -> Result<DVector<f64>> {
        let theta = self.params_from_z(z);
        let per_sample: Vec<Vec<f64>> = self
            .dataset
            .par_iter()
            .map_init(Workspace::default, |ws, s| {
                ws.start(&theta.rho0, None);
                ws.solve(self.model, &s.q, &theta.rho0, &theta.compliance, &theta.masses, &self.solver, |_, _| {})?;
                let mut rows = Vec::with_capacity(6);
                self.sample_rows(s, &markers_from_frames(self.model, &ws.frames, &theta.closure), &mut rows);
                Ok(rows)
            })
            .collect::<Result<_>>()?;
        let mut r: Vec<f64> = per_sample.into_iter().flatten().collect();
        r.extend_from_slice(z);
        Ok(DVector::from_vec(r))
    }

    /// Jacobian of [`residuals`](Self::residuals).
    ///
    /// Geometry and compliance columns differentiate the fixed point
    /// implicitly: with `x = ρ*`, `(I − C·∂τ/∂x_r)·dx_r = dρ₀_r + C·∂τ/∂x_o·dρ₀_o + diag(τ)·dc`,
    /// where the partial derivatives at fixed `x` are forward differences of
    /// plain forward kinematics. Mass columns are forward differences of full
    /// solves warm-started at `ρ*`; closure columns reuse the frames.
    pub fn jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        let theta = self.params_from_z(z);
        let base = theta.flatten();
        let n_p = self.active.len();
        let blocks: Vec<Vec<Vec<f64>>> = self
            .dataset
            .par_iter()
            .map_init(
                || (Workspace::default(), Workspace::default()),
                |(base_ws, ws), s| self.sample_jacobian(s, &theta, &base, base_ws, ws),
            )
            .collect::<Result<_>>()?;
        debug_assert!(blocks.iter().all(|b| b.len() == n_p));
        let n_meas = self.n_measurements();
        let mut jac = DMatrix::zeros(n_meas + n_p, n_p);
        let mut row = 0;
        for (cols, s) in blocks.into_iter().zip(self.dataset) {
            let rows = 3 * s.n_markers();
            for (k, col) in cols.iter().enumerate() {
                for (r, val) in col.iter().enumerate() {
                    jac[(row + r, k)] = *val;
                }
            }
            row += rows;
        }
        for k in 0..n_p {
            jac[(n_meas + k, k)] = 1.0;
        }
        Ok(jac)
    }

    fn sample_jacobian(
        &self,
        s: &Sample,
        theta: &CalibrationParams,
        base: &[f64],
        base_ws: &mut Workspace,
        ws: &mut Workspace,
    ) -> Result<Vec<Vec<f64>>> {
        let model = self.model;
        let n = model.n_links();
        let (n_dh, n_rot) = (5 * n, 3 * n);
        let compliance_end = 8 * n;
        base_ws.start(&theta.rho0, None);
        base_ws.solve(model, &s.q, &theta.rho0, &theta.compliance, &theta.masses, &self.solver, |_, _| {})?;
        let h0 = markers_from_frames(model, &base_ws.frames, &theta.closure);
        let mut r0 = Vec::with_capacity(6);
        self.sample_rows(s, &h0, &mut r0);
        let present = [s.y_right.is_some(), s.y_left.is_some()];

        let needs_geometry = self.active.iter().any(|&i| i < compliance_end);
        let mut hx = DMatrix::<f64>::zeros(6, n_dh);
        let mut gx = DMatrix::<f64>::zeros(n_rot, n_dh);
        let mut w = DMatrix::<f64>::zeros(6, n_rot);
        let tau0: Vec<f64> = base_ws.torques.iter().flat_map(|t| t.iter().copied()).collect();
        let c: Vec<f64> = theta.compliance.iter().flat_map(|c| [c.alpha, c.beta, c.theta]).collect();
        if needs_geometry {
            let mut x = base_ws.rho.clone();
            for j in 0..n_dh {
                let eps = self.fd_step * self.prior.sigma[j];
                let (link, comp) = (j / 5, j % 5);
                let orig = x[link];
                let mut arr = orig.to_array();
                arr[comp] += eps;
                x[link] = DhParams::from_array(arr);
                ws.evaluate_with(model, &s.q, &x, &theta.masses);
                x[link] = orig;
                let h = markers_from_frames(model, &ws.frames, &theta.closure);
                for m in 0..2 {
                    for a in 0..3 {
                        hx[(3 * m + a, j)] = (h[m][a] - h0[m][a]) / eps;
                    }
                }
                for (k, t) in ws.torques.iter().flat_map(|t| t.iter()).enumerate() {
                    gx[(k, j)] = (t - tau0[k]) / eps;
                }
            }
            // W = H_r·K⁻¹ with K = I − C·∂τ/∂x_r
            let rot = |k: usize| 5 * (k / 3) + 2 + k % 3;
            let kt = DMatrix::from_fn(n_rot, n_rot, |a, b| {
                // transposed: row a of Kᵀ is column a of K
                let v = -c[b] * gx[(b, rot(a))];
                if a == b {
                    1.0 + v
                } else {
                    v
                }
            });
            let hr_t = DMatrix::from_fn(n_rot, 6, |k, m| hx[(m, rot(k))]);
            let wt = kt.lu().solve(&hr_t).ok_or_else(|| Error::EquilibriumNotConverged {
                iterations: 0,
                residual: f64::NAN,
                trace: vec![],
            })?;
            w = wt.transpose();
        }

        let scale = -1.0 / self.prior.sigma_m;
        let mut cols = Vec::with_capacity(self.active.len());
        let mut pert = theta.clone();
        let mut v = base.to_vec();
        let mut r1 = Vec::with_capacity(6);
        for &i in &self.active {
            let sigma = self.prior.sigma[i];
            let dh: Option<DVector<f64>> = if i < n_dh {
                let comp = i % 5;
                Some(if comp >= 2 {
                    w.column(3 * (i / 5) + comp - 2).into_owned()
                } else {
                    let cg = DVector::from_fn(n_rot, |k, _| c[k] * gx[(k, i)]);
                    hx.column(i) + &w * cg
                })
            } else if i < compliance_end {
                let k = i - n_dh;
                Some(w.column(k) * tau0[k])
            } else {
                None
            };
            if let Some(dh) = dh {
                let mut col = Vec::with_capacity(6);
                for m in 0..2 {
                    if present[m] {
                        col.extend((0..3).map(|a| scale * sigma * dh[3 * m + a]));
                    }
                }
                cols.push(col);
                continue;
            }
            let h = self.fd_step;
            v[i] = base[i] + h * sigma;
            pert.assign(&v).expect("layout is fixed");
            let markers = if i >= self.n_closure_start {
                markers_from_frames(model, &base_ws.frames, &pert.closure)
            } else {
                ws.start(&pert.rho0, Some(&base_ws.rho));
                ws.solve(model, &s.q, &pert.rho0, &pert.compliance, &pert.masses, &self.solver, |_, _| {})?;
                markers_from_frames(model, &ws.frames, &pert.closure)
            };
            v[i] = base[i];
            r1.clear();
            self.sample_rows(s, &markers, &mut r1);
            cols.push(r1.iter().zip(&r0).map(|(a, b)| (a - b) / h).collect());
        }
        Ok(cols)
    }
}
