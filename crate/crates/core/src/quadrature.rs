//! One-dimensional quadrature against the standard normal weight.
//!
//! Every rule here approximates `∫ φ(z) f(z) dz` restricted to `[lo, hi]`
//! (intersected with `[-tail, tail]`). Integrands handed in by the searchers
//! are products of normal CDFs, so `f` is bounded in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::normal;

/// Quadrature family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Fixed Gauss–Hermite rule in the standardized variable.
    GaussHermite,
    /// Adaptive 7/15-point Gauss–Kronrod bisection on a uniform starting mesh.
    GaussKronrod,
    /// Adaptive Simpson bisection on a uniform starting mesh.
    AdaptiveSimpson,
}

/// User-facing quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    /// Rule size for Gauss–Hermite; starting-mesh size for the adaptive schemes.
    pub nodes: usize,
    /// Integration is cut at ±`tail_halfwidth` standard deviations.
    pub tail_halfwidth: f64,
    /// Absolute error target for the adaptive schemes.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-10
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            scheme: Scheme::GaussKronrod,
            nodes: 61,
            tail_halfwidth: 8.0,
            tolerance: default_tolerance(),
        }
    }
}

impl QuadratureSpec {
    pub fn gauss_hermite(nodes: usize) -> Self {
        Self {
            scheme: Scheme::GaussHermite,
            nodes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.nodes < 15 {
            return Err(format!(
                "quadrature needs at least 15 nodes, got {}",
                self.nodes
            ));
        }
        if !(self.tail_halfwidth >= 6.0) {
            return Err(format!(
                "quadrature tail half-width must be at least 6 sd, got {}",
                self.tail_halfwidth
            ));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1e-3) {
            return Err(format!(
                "quadrature tolerance must lie in (0, 1e-3), got {}",
                self.tolerance
            ));
        }
        Ok(())
    }

    /// The same spec with the node count doubled (n → 2n − 1).
    pub fn doubled(&self) -> Self {
        Self {
            nodes: 2 * self.nodes - 1,
            ..*self
        }
    }
}

/// Adaptive refinement ran out of depth before meeting the tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unconverged {
    pub lo: f64,
    pub hi: f64,
    pub error_estimate: f64,
}

/// A ready-to-use rule built from a [`QuadratureSpec`].
#[derive(Debug, Clone)]
pub struct Quadrature {
    spec: QuadratureSpec,
    hermite: Option<HermiteRule>,
}

const MAX_DEPTH: u32 = 40;

impl Quadrature {
    pub fn new(spec: QuadratureSpec) -> Result<Self, String> {
        spec.validate()?;
        let hermite = match spec.scheme {
            Scheme::GaussHermite => {
                Some(HermiteRule::new(spec.nodes).truncated(spec.tail_halfwidth))
            }
            _ => None,
        };
        Ok(Self { spec, hermite })
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    pub fn tail(&self) -> f64 {
        self.spec.tail_halfwidth
    }

    /// `∫_{lo}^{hi} φ(z) f(z) dz` with `[lo, hi]` clipped to the tail window.
    ///
    /// The Gauss–Hermite rule ignores `hi` and treats nodes below `lo` as
    /// contributing zero; callers only pass a `lo` below which `f` vanishes.
    pub fn integrate<F: FnMut(f64) -> f64>(
        &self,
        lo: f64,
        hi: f64,
        mut f: F,
    ) -> Result<f64, Unconverged> {
        let t = self.spec.tail_halfwidth;
        let lo = lo.max(-t);
        let hi = hi.min(t);
        if lo >= hi {
            return Ok(0.0);
        }
        match self.spec.scheme {
            Scheme::GaussHermite => {
                let rule = self.hermite.as_ref().expect("hermite rule built in new()");
                Ok(rule
                    .z
                    .iter()
                    .zip(&rule.w)
                    .filter(|(&z, _)| z >= lo)
                    .map(|(&z, &w)| w * f(z))
                    .sum())
            }
            Scheme::GaussKronrod => {
                let panels = (self.spec.nodes / 15).max(1);
                let mut g = |z: f64| normal::pdf(z) * f(z);
                let tol = self.spec.tolerance / panels as f64;
                let h = (hi - lo) / panels as f64;
                let mut total = 0.0;
                for p in 0..panels {
                    let a = lo + h * p as f64;
                    let b = if p + 1 == panels { hi } else { a + h };
                    total += kronrod_adaptive(&mut g, a, b, tol, MAX_DEPTH)?;
                }
                Ok(total)
            }
            Scheme::AdaptiveSimpson => {
                let panels = ((self.spec.nodes - 1) / 2).max(1);
                let mut g = |z: f64| normal::pdf(z) * f(z);
                let tol = self.spec.tolerance / panels as f64;
                let h = (hi - lo) / panels as f64;
                let mut total = 0.0;
                let mut fa = g(lo);
                for p in 0..panels {
                    let a = lo + h * p as f64;
                    let b = if p + 1 == panels { hi } else { a + h };
                    let m = 0.5 * (a + b);
                    let fm = g(m);
                    let fb = g(b);
                    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
                    total += simpson_adaptive(&mut g, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)?;
                    fa = fb;
                }
                Ok(total)
            }
        }
    }

    /// Unweighted `∫_{lo}^{hi} f(x) dx` with the adaptive scheme of this spec.
    ///
    /// Gauss–Hermite has no unweighted form, so it falls back to Gauss–Kronrod
    /// with the same starting mesh.
    pub fn integrate_dx<F: FnMut(f64) -> f64>(
        &self,
        lo: f64,
        hi: f64,
        mut f: F,
    ) -> Result<f64, Unconverged> {
        if lo >= hi {
            return Ok(0.0);
        }
        let tol = self.spec.tolerance;
        match self.spec.scheme {
            Scheme::GaussHermite | Scheme::GaussKronrod => {
                let panels = (self.spec.nodes / 15).max(1);
                let h = (hi - lo) / panels as f64;
                let mut total = 0.0;
                for p in 0..panels {
                    let a = lo + h * p as f64;
                    let b = if p + 1 == panels { hi } else { a + h };
                    total += kronrod_adaptive(&mut f, a, b, tol / panels as f64, MAX_DEPTH)?;
                }
                Ok(total)
            }
            Scheme::AdaptiveSimpson => {
                let panels = ((self.spec.nodes - 1) / 2).max(1);
                let h = (hi - lo) / panels as f64;
                let mut total = 0.0;
                let mut fa = f(lo);
                for p in 0..panels {
                    let a = lo + h * p as f64;
                    let b = if p + 1 == panels { hi } else { a + h };
                    let fm = f(0.5 * (a + b));
                    let fb = f(b);
                    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
                    total += simpson_adaptive(
                        &mut f,
                        a,
                        b,
                        fa,
                        fm,
                        fb,
                        whole,
                        tol / panels as f64,
                        MAX_DEPTH,
                    )?;
                    fa = fb;
                }
                Ok(total)
            }
        }
    }
}

/// Gauss–Hermite rule normalized to the standard normal weight: `Σ w f(z) ≈ E[f(Z)]`.
#[derive(Debug, Clone)]
pub struct HermiteRule {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
}

impl HermiteRule {
    /// Newton iteration on the orthonormal Hermite recurrence, with the
    /// usual asymptotic starting guesses for the roots.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        const PIM4: f64 = 0.751_125_544_464_942_5; // π^(-1/4)
        let nf = n as f64;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = PIM4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let norm = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = x
            .iter()
            .zip(&w)
            .map(|(&xi, &wi)| (xi * std::f64::consts::SQRT_2, wi / norm))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            z: pairs.iter().map(|p| p.0).collect(),
            w: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Drops nodes beyond ±`tail`.
    pub fn truncated(mut self, tail: f64) -> Self {
        let keep: Vec<bool> = self.z.iter().map(|z| z.abs() <= tail).collect();
        let mut k = keep.iter();
        self.z.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        self.w.retain(|_| *k.next().unwrap());
        self
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel; returns (kronrod, |kronrod − gauss|).
fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn kronrod_adaptive<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, Unconverged> {
    let (k, err) = kronrod15(f, a, b);
    if err <= tol {
        return Ok(k);
    }
    if depth == 0 {
        return Err(Unconverged {
            lo: a,
            hi: b,
            error_estimate: err,
        });
    }
    let m = 0.5 * (a + b);
    Ok(kronrod_adaptive(f, a, m, 0.5 * tol, depth - 1)?
        + kronrod_adaptive(f, m, b, 0.5 * tol, depth - 1)?)
}

#[allow(clippy::too_many_arguments)]
fn simpson_adaptive<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, Unconverged> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Unconverged {
            lo: a,
            hi: b,
            error_estimate: delta.abs(),
        });
    }
    Ok(
        simpson_adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + simpson_adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
    )
}
