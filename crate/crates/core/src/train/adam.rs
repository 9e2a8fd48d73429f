use serde::{Deserialize, Serialize};

use crate::gaussian::GaussianSet;
use crate::raster::Gradients;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("non-finite gradient in {group} at element {index}")]
pub struct NonFiniteGradient {
    pub group: &'static str,
    pub index: usize,
}

/// First and second moments of one parameter group, stored row-major with
/// `width` values per Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub width: usize,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(rows: usize, width: usize) -> Self {
        Self {
            width,
            step: 0,
            m: vec![0.0; rows * width],
            v: vec![0.0; rows * width],
        }
    }

    pub fn rows(&self) -> usize {
        self.m.len() / self.width.max(1)
    }

    /// One Adam update. `lr` holds one rate per column of a row.
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        lr: &[f64],
        group: &'static str,
    ) -> Result<(), NonFiniteGradient> {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        assert_eq!(lr.len(), self.width);
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NonFiniteGradient { group, index });
        }
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for (k, ((p, g), (m, v))) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .enumerate()
        {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr[k % self.width] * m_hat / (v_hat.sqrt() + EPSILON);
        }
        Ok(())
    }

    /// Rebuilds the rows: `Some(i)` copies row `i`, `None` inserts zeros.
    pub fn remap(&mut self, rows: &[Option<usize>]) {
        let w = self.width;
        let mut m = Vec::with_capacity(rows.len() * w);
        let mut v = Vec::with_capacity(rows.len() * w);
        for r in rows {
            match r {
                Some(i) => {
                    m.extend_from_slice(&self.m[i * w..(i + 1) * w]);
                    v.extend_from_slice(&self.v[i * w..(i + 1) * w]);
                }
                None => {
                    m.extend(std::iter::repeat_n(0.0, w));
                    v.extend(std::iter::repeat_n(0.0, w));
                }
            }
        }
        self.m = m;
        self.v = v;
    }

    pub fn zero_moments(&mut self) {
        self.m.fill(0.0);
        self.v.fill(0.0);
    }
}

/// Learning rates for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupRates {
    pub position: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
}

/// Adam over every parameter group of a [`GaussianSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianAdam {
    pub centers: AdamState,
    pub log_scales: AdamState,
    pub rotations: AdamState,
    pub opacity: AdamState,
    pub sh: AdamState,
}

impl GaussianAdam {
    pub fn new(g: &GaussianSet) -> Self {
        let n = g.len();
        Self {
            centers: AdamState::new(n, 3),
            log_scales: AdamState::new(n, 3),
            rotations: AdamState::new(n, 4),
            opacity: AdamState::new(n, 1),
            sh: AdamState::new(n, g.sh_stride()),
        }
    }

    /// Updates `g` in place; quaternions are renormalized afterwards. On a
    /// non-finite gradient nothing is modified.
    pub fn step(
        &mut self,
        g: &mut GaussianSet,
        grads: &Gradients,
        r: &GroupRates,
    ) -> Result<(), NonFiniteGradient> {
        let groups: [(&'static str, &[f64]); 5] = [
            ("centers", grads.centers.as_flattened()),
            ("log_scales", grads.log_scales.as_flattened()),
            ("rotations", grads.rotations.as_flattened()),
            ("opacity", &grads.opacity_logits),
            ("sh", &grads.sh),
        ];
        for (group, values) in groups {
            if let Some(index) = values.iter().position(|v| !v.is_finite()) {
                return Err(NonFiniteGradient { group, index });
            }
        }
        let mut sh_lr = vec![r.sh_rest; g.sh_stride()];
        sh_lr[..3].fill(r.sh_dc);
        self.centers.step(
            g.centers.as_flattened_mut(),
            grads.centers.as_flattened(),
            &[r.position; 3],
            "centers",
        )?;
        self.log_scales.step(
            g.log_scales.as_flattened_mut(),
            grads.log_scales.as_flattened(),
            &[r.scale; 3],
            "log_scales",
        )?;
        self.rotations.step(
            g.rotations.as_flattened_mut(),
            grads.rotations.as_flattened(),
            &[r.rotation; 4],
            "rotations",
        )?;
        self.opacity.step(
            &mut g.opacity_logits,
            &grads.opacity_logits,
            &[r.opacity],
            "opacity",
        )?;
        self.sh.step(&mut g.sh, &grads.sh, &sh_lr, "sh")?;
        g.normalize_rotations();
        Ok(())
    }

    pub fn remap(&mut self, rows: &[Option<usize>]) {
        for s in [
            &mut self.centers,
            &mut self.log_scales,
            &mut self.rotations,
            &mut self.opacity,
            &mut self.sh,
        ] {
            s.remap(rows);
        }
    }

    pub fn rows(&self) -> usize {
        self.centers.rows()
    }
}
