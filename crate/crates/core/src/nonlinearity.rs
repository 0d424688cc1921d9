//! Mean-reversion nonlinearities regularly varying at zero.
//!
//! Two odd families are provided:
//!
//! * `PurePower`: `f(x) = a |x|^β sgn(x)`
//! * `PowerLogLoglog`: `f(x) = a |x|^β log^{β₁}(1/|x|) (log log(1/|x|))^{β₂} sgn(x)`
//!
//! Both are used in their asymptotic form for `|x| <= crossover`. Beyond the
//! crossover radius `f` continues as a straight line matching value and slope,
//! which keeps `f` locally Lipschitz and bounded away from zero at infinity.
//! All logarithms are natural.

use crate::error::{domain, Error, Result};

/// exp(-e): below this radius `log log(1/x) > 1`.
pub const LOGLOG_RADIUS: f64 = 0.065_988_035_845_312_53;

pub const DEFAULT_LOG_CROSSOVER: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    PurePower,
    PowerLogLoglog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearityModel {
    family: Family,
    a: f64,
    beta: f64,
    beta1: f64,
    beta2: f64,
    crossover: f64,
    // value and slope of the asymptotic form at the crossover
    f_cross: f64,
    slope_cross: f64,
    int_beta: Option<i32>,
}

impl NonlinearityModel {
    /// `a |x|^β sgn(x)` on the whole line.
    pub fn pure_power(a: f64, beta: f64) -> Result<Self> {
        Self::new(Family::PurePower, a, beta, 0.0, 0.0, f64::INFINITY)
    }

    pub fn power_log_loglog(a: f64, beta: f64, beta1: f64, beta2: f64) -> Result<Self> {
        Self::new(
            Family::PowerLogLoglog,
            a,
            beta,
            beta1,
            beta2,
            DEFAULT_LOG_CROSSOVER,
        )
    }

    pub fn new(
        family: Family,
        a: f64,
        beta: f64,
        beta1: f64,
        beta2: f64,
        crossover: f64,
    ) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidModel(format!("scale a must be positive, got {a}")));
        }
        if !(beta.is_finite() && beta > 1.0) {
            return Err(Error::InvalidModel(format!("beta must exceed 1, got {beta}")));
        }
        if !(crossover > 0.0) {
            return Err(Error::InvalidModel(format!(
                "crossover must be positive, got {crossover}"
            )));
        }
        if !(beta1.is_finite() && beta2.is_finite()) {
            return Err(Error::InvalidModel("log exponents must be finite".into()));
        }
        match family {
            Family::PurePower => {
                if beta1 != 0.0 || beta2 != 0.0 {
                    return Err(Error::InvalidModel(
                        "pure power family takes no log exponents".into(),
                    ));
                }
            }
            Family::PowerLogLoglog => {
                if crossover >= 1.0 {
                    return Err(Error::InvalidModel(
                        "log family needs crossover < 1 so that log(1/x) > 0".into(),
                    ));
                }
                if beta2 != 0.0 && crossover > LOGLOG_RADIUS {
                    return Err(Error::InvalidModel(format!(
                        "log-log factor needs crossover <= exp(-e) = {LOGLOG_RADIUS:.6}"
                    )));
                }
            }
        }
        let int_beta = (beta.fract() == 0.0 && beta <= 32.0).then_some(beta as i32);
        let mut model = Self {
            family,
            a,
            beta,
            beta1,
            beta2,
            crossover,
            f_cross: f64::NAN,
            slope_cross: f64::NAN,
            int_beta,
        };
        if crossover.is_finite() {
            model.f_cross = model.asym(crossover);
            model.slope_cross = model.asym_derivative(crossover);
        }
        model.check_monotone()?;
        Ok(model)
    }

    /// Strict monotonicity of the asymptotic form on (0, crossover): the
    /// logarithmic derivative bracket must stay positive.
    fn check_monotone(&self) -> Result<()> {
        if self.family == Family::PurePower {
            return Ok(());
        }
        let top = self.crossover.ln();
        // geometric grid from the crossover down to 1e-300
        for k in 0..=400 {
            let lx = top + (-690.0 - top) * k as f64 / 400.0;
            let b = self.log_bracket(lx.exp());
            if !(b > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "f is not increasing near x = {:e}; choose a smaller crossover",
                    lx.exp()
                )));
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        self.family
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn beta1(&self) -> f64 {
        self.beta1
    }
    pub fn beta2(&self) -> f64 {
        self.beta2
    }
    pub fn crossover(&self) -> f64 {
        self.crossover
    }

    /// Slowly varying part in the log variable `s = log(1/u)`:
    /// `s^{β₁} (log s)^{β₂}`.
    pub(crate) fn log_factor_in_s(&self, s: f64) -> f64 {
        match self.family {
            Family::PurePower => 1.0,
            Family::PowerLogLoglog => {
                let mut v = 1.0;
                if self.beta1 != 0.0 {
                    v *= s.powf(self.beta1);
                }
                if self.beta2 != 0.0 {
                    v *= s.ln().powf(self.beta2);
                }
                v
            }
        }
    }

    #[inline]
    fn power(&self, u: f64) -> f64 {
        match self.int_beta {
            Some(k) => u.powi(k),
            None => u.powf(self.beta),
        }
    }

    /// Asymptotic form for `0 < u`, no extension.
    #[inline]
    fn asym(&self, u: f64) -> f64 {
        match self.family {
            Family::PurePower => self.a * self.power(u),
            Family::PowerLogLoglog => self.a * self.power(u) * self.log_factor_in_s(-u.ln()),
        }
    }

    /// `u f'(u) / f(u)` for the asymptotic form.
    fn log_bracket(&self, u: f64) -> f64 {
        match self.family {
            Family::PurePower => self.beta,
            Family::PowerLogLoglog => {
                let s = -u.ln();
                self.beta - self.beta1 / s - self.beta2 / (s * s.ln())
            }
        }
    }

    fn asym_derivative(&self, u: f64) -> f64 {
        self.asym(u) / u * self.log_bracket(u)
    }

    /// `f(x)`.
    pub fn eval_f(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(domain(format!("f evaluated at non-finite x = {x}")));
        }
        Ok(self.f(x))
    }

    /// Unchecked evaluation for hot loops; `x` must be finite.
    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let u = x.abs();
        let v = if u <= self.crossover {
            self.asym(u)
        } else {
            self.f_cross + self.slope_cross * (u - self.crossover)
        };
        v.copysign(x)
    }

    /// `f'(x)`; even in `x`.
    pub fn derivative(&self, x: f64) -> f64 {
        let u = x.abs();
        if u == 0.0 {
            0.0
        } else if u <= self.crossover {
            self.asym_derivative(u)
        } else {
            self.slope_cross
        }
    }

    /// `f(x)/x` for `x != 0`, the linearised rate.
    #[inline]
    pub fn rate(&self, x: f64) -> f64 {
        if x == 0.0 {
            0.0
        } else {
            self.f(x) / x
        }
    }

    /// `ℓ(x) = (f(x)/x^β)^{-1/(β-1)}` on `(0, crossover)`.
    pub fn slowly_varying_ell(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x < self.crossover) {
            return Err(domain(format!(
                "slowly varying factor needs 0 < x < crossover = {}, got {x}",
                self.crossover
            )));
        }
        Ok(self.ell_formula(x))
    }

    /// ℓ from the asymptotic form, without the crossover restriction.
    pub(crate) fn ell_formula(&self, x: f64) -> f64 {
        let l = self.a * self.log_factor_in_s(-x.ln());
        l.powf(-1.0 / (self.beta - 1.0))
    }
}
