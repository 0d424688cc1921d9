//! The decay benchmark `F(x) = ∫ₓ¹ du/f(u)`, its inverse and `f∘F⁻¹`.
//!
//! For the pure power law with no crossover below 1 everything is closed
//! form. Otherwise `F` is evaluated by quadrature: below the crossover the
//! integral is rewritten in the log variable `s = log(1/u)` and the
//! exponential growth of `1/f` is factored out, so the remaining integrand
//! decays smoothly; above the crossover the linear extension integrates to
//! a logarithm. `F⁻¹` brackets on a cached monotone grid and then runs a
//! safeguarded Newton iteration using `F'(x) = -1/f(x)`.

use crate::error::{domain, Error, Result};
use crate::nonlinearity::{Family, NonlinearityModel};
use crate::quad::{integrate, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMode {
    ClosedForm,
    Numeric,
}

pub const DEFAULT_X_MIN: f64 = 1e-12;
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;
const GRID_PER_DECADE: usize = 8;

#[derive(Debug, Clone)]
pub struct DecayScale {
    model: NonlinearityModel,
    mode: ScaleMode,
    quad_tol: f64,
    // ascending x, descending F(x); last entry is (1, 0)
    grid: Vec<(f64, f64)>,
}

/// Asymptotic approximation of `F⁻¹(t)` with its validity flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticValue {
    pub value: f64,
    /// `t` is below the heuristic floor 10, or the argument of `ℓ` lies
    /// outside the region where the asymptotic form of `f` is in force.
    pub outside_validity: bool,
}

impl DecayScale {
    /// Closed form when available, numeric otherwise.
    pub fn new(model: NonlinearityModel) -> Result<Self> {
        let mode = if Self::closed_form_available(&model) {
            ScaleMode::ClosedForm
        } else {
            ScaleMode::Numeric
        };
        Self::with_options(model, mode, DEFAULT_X_MIN, DEFAULT_QUAD_TOL)
    }

    pub fn with_mode(model: NonlinearityModel, mode: ScaleMode) -> Result<Self> {
        Self::with_options(model, mode, DEFAULT_X_MIN, DEFAULT_QUAD_TOL)
    }

    pub fn closed_form_available(model: &NonlinearityModel) -> bool {
        model.family() == Family::PurePower && model.crossover() >= 1.0
    }

    pub fn with_options(
        model: NonlinearityModel,
        mode: ScaleMode,
        x_min: f64,
        quad_tol: f64,
    ) -> Result<Self> {
        if mode == ScaleMode::ClosedForm && !Self::closed_form_available(&model) {
            return Err(Error::InvalidModel(
                "closed form needs the pure power family with crossover >= 1".into(),
            ));
        }
        if !(x_min > 0.0 && x_min < 1.0) {
            return Err(domain(format!("x_min must lie in (0, 1), got {x_min}")));
        }
        if !(quad_tol > 0.0 && quad_tol < 1e-2) {
            return Err(domain(format!("quad_tol out of range: {quad_tol}")));
        }
        let mut scale = Self {
            model,
            mode,
            quad_tol,
            grid: Vec::new(),
        };
        scale.build_grid(x_min);
        Ok(scale)
    }

    fn build_grid(&mut self, x_min: f64) {
        let decades = -x_min.log10();
        let n = (decades * GRID_PER_DECADE as f64).ceil().max(1.0) as usize;
        let xs: Vec<f64> = (0..=n)
            .map(|k| {
                if k == n {
                    1.0
                } else {
                    10f64.powf(-decades * (1.0 - k as f64 / n as f64))
                }
            })
            .collect();
        let mut grid = vec![(1.0, 0.0); n + 1];
        let mut acc = 0.0;
        for k in (0..n).rev() {
            acc += match self.mode {
                ScaleMode::ClosedForm => {
                    self.closed_form_f_big(xs[k]) - self.closed_form_f_big(xs[k + 1])
                }
                ScaleMode::Numeric => self.integral_inv_f(xs[k], xs[k + 1]),
            };
            grid[k] = (xs[k], acc);
        }
        self.grid = grid;
    }

    pub fn model(&self) -> &NonlinearityModel {
        &self.model
    }
    pub fn mode(&self) -> ScaleMode {
        self.mode
    }
    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }
    pub fn x_min(&self) -> f64 {
        self.grid[0].0
    }

    fn closed_form_f_big(&self, x: f64) -> f64 {
        let b1 = self.model.beta() - 1.0;
        ((1.0 - self.model.beta()) * x.ln()).exp_m1() / (self.model.a() * b1)
    }

    /// `∫_lo^hi du/f(u)` for `0 < lo <= hi`.
    fn integral_inv_f(&self, lo: f64, hi: f64) -> f64 {
        if lo >= hi {
            return 0.0;
        }
        let c = self.model.crossover();
        let mut total = 0.0;
        if lo < c {
            total += self.integral_asym(lo, hi.min(c));
        }
        if hi > c {
            // linear extension: f(u) = f(c) + s (u - c)
            let a = lo.max(c);
            let fa = self.model.f(a);
            let slope = self.model.derivative(c);
            total += (slope * (hi - a) / fa).ln_1p() / slope;
        }
        total
    }

    /// `∫_lo^hi du/f(u)` with `hi <= crossover`, in the variable
    /// `r = log(1/lo) - log(1/u)`:
    /// `e^{(β-1) S}/a ∫_0^R e^{-(β-1) r} / L(S - r) dr`.
    fn integral_asym(&self, lo: f64, hi: f64) -> f64 {
        let b1 = self.model.beta() - 1.0;
        let s_top = -lo.ln();
        let r_max = hi.ln() - lo.ln();
        let model = &self.model;
        let res = integrate(
            |r| (-b1 * r).exp() / model.log_factor_in_s(s_top - r),
            0.0,
            r_max,
            QuadOptions {
                abs_tol: 0.0,
                rel_tol: self.quad_tol * 1e-3,
                max_intervals: 500,
            },
        );
        (b1 * s_top).exp() / model.a() * res.value
    }

    /// `F(x)`; negative for `x > 1`.
    pub fn eval_f_big(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(domain(format!("F is defined for x > 0 only, got {x}")));
        }
        Ok(self.f_big(x))
    }

    pub(crate) fn f_big(&self, x: f64) -> f64 {
        if x == 1.0 {
            return 0.0;
        }
        if self.mode == ScaleMode::ClosedForm {
            return self.closed_form_f_big(x);
        }
        if x > 1.0 {
            return -self.integral_inv_f(1.0, x);
        }
        // anchor at the nearest grid node above x
        let idx = self.grid.partition_point(|&(gx, _)| gx < x);
        if idx >= self.grid.len() {
            return 0.0;
        }
        let (gx, gf) = self.grid[idx];
        gf + self.integral_inv_f(x, gx)
    }

    /// `F(x)` for `x` below the cached grid, anchored at `x_min`.
    fn f_big_below_grid(&self, x: f64) -> f64 {
        let (x0, f0) = self.grid[0];
        match self.mode {
            ScaleMode::ClosedForm => self.closed_form_f_big(x),
            ScaleMode::Numeric => f0 + self.integral_inv_f(x, x0),
        }
    }

    /// `F⁻¹(t)` for `t >= 0`.
    pub fn eval_f_inv(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(domain(format!("F^-1 needs finite t >= 0, got {t}")));
        }
        Ok(self.f_inv(t))
    }

    pub(crate) fn f_inv(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 1.0;
        }
        if self.mode == ScaleMode::ClosedForm {
            let b1 = self.model.beta() - 1.0;
            return (-(self.model.a() * b1 * t).ln_1p() / b1).exp();
        }
        let (mut lo, mut hi);
        let f_lo_anchor;
        if t > self.grid[0].1 {
            // beyond the cached grid: walk down geometrically
            hi = self.grid[0].0;
            lo = hi;
            loop {
                hi = lo;
                lo *= 1e-3;
                if lo < 1e-300 {
                    return 0.0;
                }
                if self.f_big_below_grid(lo) >= t {
                    break;
                }
            }
            f_lo_anchor = None;
        } else {
            // grid is ascending in x, descending in F
            let idx = self.grid.partition_point(|&(_, gf)| gf >= t);
            lo = self.grid[idx - 1].0;
            hi = self.grid[idx].0;
            f_lo_anchor = Some(self.grid[idx]);
        }
        let eval = |x: f64| -> f64 {
            match f_lo_anchor {
                Some((gx, gf)) => gf + self.integral_inv_f(x, gx),
                None => self.f_big_below_grid(x),
            }
        };
        // safeguarded Newton on F(x) = t, F' = -1/f
        let mut x = (lo * hi).sqrt();
        let tol = 1e-12 * t.max(1.0);
        for _ in 0..200 {
            let resid = eval(x) - t;
            if resid.abs() <= tol {
                return x;
            }
            if resid > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x + resid * self.model.f(x);
            x = if newton > lo && newton < hi {
                newton
            } else {
                (lo * hi).sqrt()
            };
            if (hi - lo) <= 4.0 * f64::EPSILON * hi {
                return x;
            }
        }
        x
    }

    /// `f(F⁻¹(t)) = -(F⁻¹)'(t)`.
    pub fn eval_ff_inv(&self, t: f64) -> Result<f64> {
        let x = self.eval_f_inv(t)?;
        Ok(self.model.f(x))
    }

    pub(crate) fn ff_inv(&self, t: f64) -> f64 {
        self.model.f(self.f_inv(t))
    }

    /// `(1/(β-1))^{1/(β-1)} t^{-1/(β-1)} ℓ(t^{-1/(β-1)})`.
    pub fn asymptotic_f_inv(&self, t: f64) -> Result<AsymptoticValue> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(domain(format!("asymptotic F^-1 needs t > 0, got {t}")));
        }
        let b1 = self.model.beta() - 1.0;
        let u = t.powf(-1.0 / b1);
        if u >= 1.0 {
            return Err(domain(format!(
                "asymptotic F^-1 undefined at t = {t}: t^(-1/(beta-1)) >= 1"
            )));
        }
        let ell = self.model.ell_formula(u);
        if !ell.is_finite() || ell <= 0.0 {
            return Err(domain(format!("slowly varying factor undefined at u = {u}")));
        }
        let value = (1.0 / b1).powf(1.0 / b1) * u * ell;
        Ok(AsymptoticValue {
            value,
            outside_validity: t < 10.0 || u >= self.model.crossover(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cube() -> NonlinearityModel {
        NonlinearityModel::pure_power(1.0, 3.0).unwrap()
    }

    #[test]
    fn closed_form_values() {
        let s = DecayScale::new(cube()).unwrap();
        assert_eq!(s.mode(), ScaleMode::ClosedForm);
        assert_relative_eq!(s.eval_f_big(0.5).unwrap(), 1.5, max_relative = 1e-14);
        assert_eq!(s.eval_f_big(1.0).unwrap(), 0.0);
        assert_eq!(s.eval_f_inv(0.0).unwrap(), 1.0);
        assert_relative_eq!(s.eval_f_inv(4.0).unwrap(), 1.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(s.eval_f_inv(1.5).unwrap(), 0.5, max_relative = 1e-14);
        assert_relative_eq!(s.eval_ff_inv(0.0).unwrap(), 1.0);
        assert_relative_eq!(s.eval_ff_inv(4.0).unwrap(), 1.0 / 27.0, max_relative = 1e-13);
        assert_relative_eq!(s.eval_ff_inv(1.5).unwrap(), 0.125, max_relative = 1e-13);
        let sq = DecayScale::new(NonlinearityModel::pure_power(1.0, 2.0).unwrap()).unwrap();
        assert_relative_eq!(sq.eval_f_big(0.25).unwrap(), 3.0, max_relative = 1e-14);
    }

    #[test]
    fn numeric_matches_closed_form_values() {
        let s = DecayScale::with_mode(cube(), ScaleMode::Numeric).unwrap();
        assert_relative_eq!(s.eval_f_big(0.5).unwrap(), 1.5, max_relative = 1e-10);
        assert_relative_eq!(s.eval_f_inv(4.0).unwrap(), 1.0 / 3.0, max_relative = 1e-10);
        let sq = DecayScale::with_mode(
            NonlinearityModel::pure_power(1.0, 2.0).unwrap(),
            ScaleMode::Numeric,
        )
        .unwrap();
        assert_relative_eq!(sq.eval_f_big(0.25).unwrap(), 3.0, max_relative = 1e-10);
    }

    #[test]
    fn domain_errors() {
        let s = DecayScale::new(cube()).unwrap();
        assert!(s.eval_f_big(0.0).is_err());
        assert!(s.eval_f_big(-1.0).is_err());
        assert!(s.eval_f_inv(-1e-3).is_err());
        assert!(s.eval_f_big(2.0).unwrap() < 0.0);
        let log = NonlinearityModel::power_log_loglog(1.0, 3.0, 1.0, 0.0).unwrap();
        assert!(DecayScale::with_mode(log, ScaleMode::ClosedForm).is_err());
    }

    #[test]
    fn above_one_matches_closed_form() {
        let n = DecayScale::with_mode(cube(), ScaleMode::Numeric).unwrap();
        assert_relative_eq!(n.eval_f_big(2.0).unwrap(), -(1.0 - 0.25) / 2.0, max_relative = 1e-10);
    }

    #[test]
    fn asymptotic_examples() {
        let s = DecayScale::new(cube()).unwrap();
        let v = s.asymptotic_f_inv(1e6).unwrap();
        assert!(!v.outside_validity);
        assert_relative_eq!(v.value, 0.5f64.sqrt() * 1e-3, max_relative = 1e-12);
        let exact = s.eval_f_inv(1e6).unwrap();
        assert_relative_eq!(exact, (1.0f64 + 2e6).powf(-0.5), max_relative = 1e-14);

        let s2 = DecayScale::new(NonlinearityModel::pure_power(2.0, 3.0).unwrap()).unwrap();
        assert_relative_eq!(s2.asymptotic_f_inv(1e6).unwrap().value, 5e-4, max_relative = 1e-12);

        assert!(s.asymptotic_f_inv(5.0).unwrap().outside_validity);
    }

    #[test]
    fn asymptotic_log_family_matches_explicit_display() {
        let (a, beta, beta1) = (1.0, 3.0, 1.0);
        let s = DecayScale::new(NonlinearityModel::power_log_loglog(a, beta, beta1, 0.0).unwrap())
            .unwrap();
        let t: f64 = 1e8;
        let b1 = beta - 1.0;
        let display = (1.0 / (a * b1)).powf(1.0 / b1)
            * t.powf(-1.0 / b1)
            * (t.ln() / b1).powf(-beta1 / b1);
        assert_relative_eq!(s.asymptotic_f_inv(t).unwrap().value, display, max_relative = 1e-12);
        // and the numeric inverse approaches it
        let exact = s.eval_f_inv(t).unwrap();
        assert!((exact / display - 1.0).abs() < 0.1);
    }

    #[test]
    fn log_family_numeric_invariants() {
        let s = DecayScale::new(NonlinearityModel::power_log_loglog(1.0, 2.5, 1.0, 1.0).unwrap())
            .unwrap();
        assert_eq!(s.mode(), ScaleMode::Numeric);
        assert_eq!(s.eval_f_big(1.0).unwrap(), 0.0);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=36 {
            let x = 10f64.powf(-k as f64 / 3.0);
            let v = s.eval_f_big(x).unwrap();
            assert!(v > prev || k == 0);
            prev = v;
        }
        assert!(s.eval_f_big(1e-12).unwrap() > 1e10);
        for t in [0.3, 3.0, 1e2, 1e5, 1e9, 1e14] {
            let x = s.eval_f_inv(t).unwrap();
            assert_relative_eq!(s.eval_f_big(x).unwrap(), t, max_relative = 1e-9);
        }
    }

    #[test]
    fn lazy_extension_beyond_grid() {
        let m = NonlinearityModel::new(Family::PurePower, 1.0, 1.5, 0.0, 0.0, 0.5).unwrap();
        let s = DecayScale::new(m).unwrap();
        assert_eq!(s.mode(), ScaleMode::Numeric);
        let t = 1e9;
        assert!(t > s.eval_f_big(s.x_min()).unwrap());
        let x = s.eval_f_inv(t).unwrap();
        assert!(x < s.x_min());
        assert_relative_eq!(s.eval_f_big(x).unwrap(), t, max_relative = 1e-10);
    }

    proptest! {
        #[test]
        fn inverse_round_trip(beta in 1.2f64..6.0, t in 0.0f64..1e8) {
            let m = NonlinearityModel::pure_power(0.7, beta).unwrap();
            let scale = DecayScale::with_mode(m, ScaleMode::Numeric).unwrap();
            let x = scale.eval_f_inv(t).unwrap();
            prop_assert!(x > 0.0 && x <= 1.0);
            let back = scale.eval_f_big(x).unwrap();
            prop_assert!((back - t).abs() <= 1e-8 * t.max(1.0));
        }

        #[test]
        fn f_inv_decreasing(beta in 1.2f64..6.0, b1 in -0.5f64..1.0, t in 0.0f64..1e6) {
            let m = NonlinearityModel::power_log_loglog(1.0, beta, b1, 0.0).unwrap();
            let scale = DecayScale::new(m).unwrap();
            prop_assert!(scale.eval_f_inv(t * 1.5 + 1.0).unwrap() < scale.eval_f_inv(t).unwrap());
        }
    }
}
