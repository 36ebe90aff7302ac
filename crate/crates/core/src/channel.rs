//! Scenario configuration, drop geometry and channel realizations.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, C64, CVector, ComplexMatrix};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * db_to_linear(dbm)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w / 1e-3)
}

/// Where primary receivers are dropped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PuPlacement {
    /// Uniform in the service annulus of the secondary base station.
    AroundBs,
    /// Uniform in the same annulus centred on the primary transmitter.
    AroundPrimaryTx,
}

/// Every scenario constant. Per-user quantities are shared by all users of a kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub k: usize,
    pub j: usize,
    pub r: usize,
    pub n_t: usize,
    /// watts
    pub p_dl_max: f64,
    /// watts, per uplink user
    pub p_ul_max: f64,
    /// watts, per downlink user
    pub sigma2_dl: f64,
    /// watts
    pub sigma2_ul: f64,
    pub rho: f64,
    /// linear
    pub gamma_dl: f64,
    /// linear
    pub gamma_ul: f64,
    pub kappa2: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub pathloss_exponent: f64,
    pub antenna_gain_dbi: f64,
    pub rician_factor_db: f64,
    pub d_ref_m: f64,
    pub d_max_m: f64,
    pub primary_tx_distance_m: f64,
    pub pu_placement: PuPlacement,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            k: 3,
            j: 5,
            r: 2,
            n_t: 9,
            p_dl_max: 1.0,
            p_ul_max: 10e-3,
            sigma2_dl: 1e-12,
            sigma2_ul: 1e-12,
            rho: 1e-8,
            gamma_dl: db_to_linear(10.0),
            gamma_ul: db_to_linear(6.0),
            kappa2: 0.05,
            carrier_hz: 1.9e9,
            bandwidth_hz: 200e3,
            pathloss_exponent: 3.6,
            antenna_gain_dbi: 10.0,
            rician_factor_db: 5.0,
            d_ref_m: 5.0,
            d_max_m: 50.0,
            primary_tx_distance_m: 100.0,
            pu_placement: PuPlacement::AroundPrimaryTx,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_t < 2 {
            return bad("n_t must exceed 1");
        }
        if self.n_t < self.j {
            return bad("n_t must be at least the number of uplink users");
        }
        if self.k == 0 || self.r == 0 {
            return bad("need at least one downlink user and one primary receiver");
        }
        let positive = [
            ("p_dl_max", self.p_dl_max),
            ("p_ul_max", self.p_ul_max),
            ("sigma2_dl", self.sigma2_dl),
            ("sigma2_ul", self.sigma2_ul),
            ("gamma_dl", self.gamma_dl),
            ("gamma_ul", self.gamma_ul),
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("pathloss_exponent", self.pathloss_exponent),
            ("d_ref_m", self.d_ref_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.kappa2) {
            return bad("kappa2 must lie in [0, 1)");
        }
        if !(self.d_max_m >= self.d_ref_m) {
            return bad("d_max_m must be at least d_ref_m");
        }
        if !self.antenna_gain_dbi.is_finite() || !self.rician_factor_db.is_finite() {
            return bad("antenna gain and Rician factor must be finite");
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.kappa2.sqrt()
    }
}

/// Log-distance path loss: free space up to `d_ref`, exponent roll-off beyond.
pub fn path_loss_db(d: f64, cfg: &SystemConfig) -> Result<f64> {
    if !(d >= cfg.d_ref_m) {
        return Err(Error::Domain(format!("distance {d} m is below the reference distance {} m", cfg.d_ref_m)));
    }
    let fspl = 20.0 * (4.0 * PI * cfg.d_ref_m * cfg.carrier_hz / SPEED_OF_LIGHT).log10();
    Ok(fspl + 10.0 * cfg.pathloss_exponent * (d / cfg.d_ref_m).log10())
}

/// Linear power gain of a link, with the BS antenna gain when `bs_link`.
pub fn path_gain(d: f64, bs_link: bool, cfg: &SystemConfig) -> Result<f64> {
    let g = if bs_link { cfg.antenna_gain_dbi } else { 0.0 };
    Ok(db_to_linear(g - path_loss_db(d, cfg)?))
}

/// Node positions in metres with the secondary BS at the origin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Geometry {
    pub dl_users: Vec<[f64; 2]>,
    pub ul_users: Vec<[f64; 2]>,
    pub primary_rx: Vec<[f64; 2]>,
    pub primary_tx: [f64; 2],
    pub d_bs_dl: Vec<f64>,
    pub d_bs_ul: Vec<f64>,
    pub d_bs_pu: Vec<f64>,
    /// `[j][k]`
    pub d_ul_dl: Vec<Vec<f64>>,
    /// `[j][r]`
    pub d_ul_pu: Vec<Vec<f64>>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Radius with uniform areal density on the annulus `[a, b]`.
fn annulus_point(a: f64, b: f64, rng: &mut ChaCha20Rng) -> (f64, [f64; 2]) {
    let u: f64 = rng.random();
    let d = (u * (b * b - a * a) + a * a).sqrt().clamp(a, b);
    let phi = 2.0 * PI * rng.random::<f64>();
    (d, [d * phi.cos(), d * phi.sin()])
}

/// CDF of the distance of a point drawn uniformly on the annulus `[a, b]`.
pub fn annulus_distance_cdf(d: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return if d >= a { 1.0 } else { 0.0 };
    }
    ((d * d - a * a) / (b * b - a * a)).clamp(0.0, 1.0)
}

pub fn draw_geometry(cfg: &SystemConfig, rng: &mut ChaCha20Rng) -> Geometry {
    let (a, b) = (cfg.d_ref_m, cfg.d_max_m);
    let mut d_bs_dl = Vec::with_capacity(cfg.k);
    let mut dl_users = Vec::with_capacity(cfg.k);
    for _ in 0..cfg.k {
        let (d, p) = annulus_point(a, b, rng);
        d_bs_dl.push(d);
        dl_users.push(p);
    }
    let mut d_bs_ul = Vec::with_capacity(cfg.j);
    let mut ul_users = Vec::with_capacity(cfg.j);
    for _ in 0..cfg.j {
        let (d, p) = annulus_point(a, b, rng);
        d_bs_ul.push(d);
        ul_users.push(p);
    }
    let primary_tx = [cfg.primary_tx_distance_m, 0.0];
    let mut primary_rx = Vec::with_capacity(cfg.r);
    let mut d_bs_pu = Vec::with_capacity(cfg.r);
    for _ in 0..cfg.r {
        let (d, p) = annulus_point(a, b, rng);
        match cfg.pu_placement {
            PuPlacement::AroundBs => {
                d_bs_pu.push(d);
                primary_rx.push(p);
            }
            PuPlacement::AroundPrimaryTx => {
                let q = [p[0] + primary_tx[0], p[1] + primary_tx[1]];
                d_bs_pu.push(dist(q, [0.0, 0.0]).max(a));
                primary_rx.push(q);
            }
        }
    }
    let d_ul_dl = ul_users.iter().map(|u| dl_users.iter().map(|v| dist(*u, *v).max(a)).collect()).collect();
    let d_ul_pu = ul_users.iter().map(|u| primary_rx.iter().map(|v| dist(*u, *v).max(a)).collect()).collect();
    Geometry { dl_users, ul_users, primary_rx, primary_tx, d_bs_dl, d_bs_ul, d_bs_pu, d_ul_dl, d_ul_pu }
}

/// One draw of every channel, true and estimated.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    pub h: Vec<CVector>,
    pub g: Vec<CVector>,
    /// `[j][k]`
    pub f: Vec<Vec<C64>>,
    pub h_si: ComplexMatrix,
    pub l_true: Vec<CVector>,
    pub l_hat: Vec<CVector>,
    /// `[j][r]`
    pub e_true: Vec<Vec<C64>>,
    /// `[j][r]`
    pub e_hat: Vec<Vec<C64>>,
    pub eps_dl: Vec<f64>,
    /// `[j][r]`
    pub eps_ul: Vec<Vec<f64>>,
}

/// What the resource allocator is allowed to see: secondary channels plus
/// estimates and error radii of the primary-network channels.
#[derive(Clone, Debug)]
pub struct EstimatedCsi {
    pub h: Vec<CVector>,
    pub g: Vec<CVector>,
    pub f: Vec<Vec<C64>>,
    pub h_si: ComplexMatrix,
    pub l_hat: Vec<CVector>,
    pub e_hat: Vec<Vec<C64>>,
    pub eps_dl: Vec<f64>,
    pub eps_ul: Vec<Vec<f64>>,
}

impl EstimatedCsi {
    pub fn n_t(&self) -> usize {
        self.h_si.rows()
    }
    pub fn k(&self) -> usize {
        self.h.len()
    }
    pub fn j(&self) -> usize {
        self.g.len()
    }
    pub fn r(&self) -> usize {
        self.l_hat.len()
    }

    /// `ê_r = [ê_{1,r}, …, ê_{J,r}]ᵀ`
    pub fn e_hat_vec(&self, r: usize) -> CVector {
        self.e_hat.iter().map(|row| row[r]).collect()
    }

    /// Radius of the stacked uplink error ball of receiver `r`.
    pub fn eps_ul_stacked(&self, r: usize) -> f64 {
        self.eps_ul.iter().map(|row| row[r] * row[r]).sum::<f64>().sqrt()
    }
}

impl ChannelRealization {
    pub fn estimated(&self) -> EstimatedCsi {
        EstimatedCsi {
            h: self.h.clone(),
            g: self.g.clone(),
            f: self.f.clone(),
            h_si: self.h_si.clone(),
            l_hat: self.l_hat.clone(),
            e_hat: self.e_hat.clone(),
            eps_dl: self.eps_dl.clone(),
            eps_ul: self.eps_ul.clone(),
        }
    }

    pub fn e_true_vec(&self, r: usize) -> CVector {
        self.e_true.iter().map(|row| row[r]).collect()
    }

    pub fn is_finite(&self) -> bool {
        let vecs = self.h.iter().chain(&self.g).chain(&self.l_true).chain(&self.l_hat);
        let mut ok = self.h_si.is_finite();
        for v in vecs {
            ok &= v.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        }
        for row in self.f.iter().chain(&self.e_true).chain(&self.e_hat) {
            ok &= row.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        }
        ok && self.eps_dl.iter().chain(self.eps_ul.iter().flatten()).all(|e| e.is_finite() && *e >= 0.0)
    }
}

/// `CN(0, 1)` sample.
pub fn complex_normal(rng: &mut ChaCha20Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn rayleigh_vector(n: usize, gain: f64, rng: &mut ChaCha20Rng) -> CVector {
    let s = gain.sqrt();
    (0..n).map(|_| complex_normal(rng) * s).collect()
}

/// Uniform sample from the closed unit ball of `Cⁿ`.
pub fn unit_ball_sample(n: usize, rng: &mut ChaCha20Rng) -> CVector {
    let dir: CVector = (0..n).map(|_| complex_normal(rng)).collect();
    let nd = norm(&dir);
    let radius = rng.random::<f64>().powf(1.0 / (2 * n) as f64);
    dir.into_iter().map(|z| z * (radius / nd)).collect()
}

/// Uniform sample from the unit sphere of `Cⁿ`.
pub fn unit_sphere_sample(n: usize, rng: &mut ChaCha20Rng) -> CVector {
    loop {
        let dir: CVector = (0..n).map(|_| complex_normal(rng)).collect();
        let nd = norm(&dir);
        if nd > 1e-300 {
            return dir.into_iter().map(|z| z / nd).collect();
        }
    }
}

/// Draws every channel of one trial. Estimation-error samples are drawn last,
/// so the true channels of a seed do not depend on `kappa2`.
pub fn draw_realization(cfg: &SystemConfig, geo: &Geometry, rng: &mut ChaCha20Rng) -> Result<ChannelRealization> {
    let n = cfg.n_t;
    let mut h = Vec::with_capacity(cfg.k);
    for &d in &geo.d_bs_dl {
        h.push(rayleigh_vector(n, path_gain(d, true, cfg)?, rng));
    }
    let mut g = Vec::with_capacity(cfg.j);
    for &d in &geo.d_bs_ul {
        g.push(rayleigh_vector(n, path_gain(d, true, cfg)?, rng));
    }
    let mut f = Vec::with_capacity(cfg.j);
    for row in &geo.d_ul_dl {
        let mut out = Vec::with_capacity(row.len());
        for &d in row {
            out.push(complex_normal(rng) * path_gain(d, false, cfg)?.sqrt());
        }
        f.push(out);
    }
    let kr = db_to_linear(cfg.rician_factor_db);
    let los = (kr / (kr + 1.0)).sqrt();
    let nlos = (1.0 / (kr + 1.0)).sqrt();
    let h_si = ComplexMatrix::from_fn(n, n, |_, _| C64::new(los, 0.0) + complex_normal(rng) * nlos);
    let mut l_true = Vec::with_capacity(cfg.r);
    for &d in &geo.d_bs_pu {
        l_true.push(rayleigh_vector(n, path_gain(d, true, cfg)?, rng));
    }
    let mut e_true = Vec::with_capacity(cfg.j);
    for row in &geo.d_ul_pu {
        let mut out = Vec::with_capacity(row.len());
        for &d in row {
            out.push(complex_normal(rng) * path_gain(d, false, cfg)?.sqrt());
        }
        e_true.push(out);
    }

    with_estimates(h, g, f, h_si, l_true, e_true, cfg.kappa(), rng)
}

#[allow(clippy::too_many_arguments)]
fn with_estimates(
    h: Vec<CVector>,
    g: Vec<CVector>,
    f: Vec<Vec<C64>>,
    h_si: ComplexMatrix,
    l_true: Vec<CVector>,
    e_true: Vec<Vec<C64>>,
    kappa: f64,
    rng: &mut ChaCha20Rng,
) -> Result<ChannelRealization> {
    let n = h_si.rows();
    let eps_dl: Vec<f64> = l_true.iter().map(|l| kappa * norm(l)).collect();
    let eps_ul: Vec<Vec<f64>> = e_true.iter().map(|row| row.iter().map(|e| kappa * e.norm()).collect()).collect();
    let mut l_hat = Vec::with_capacity(l_true.len());
    for (l, eps) in l_true.iter().zip(&eps_dl) {
        let u = unit_ball_sample(n, rng);
        l_hat.push(l.iter().zip(&u).map(|(a, b)| a - b * eps).collect());
    }
    let mut e_hat = Vec::with_capacity(e_true.len());
    for (row, eps_row) in e_true.iter().zip(&eps_ul) {
        let mut out = Vec::with_capacity(row.len());
        for (e, eps) in row.iter().zip(eps_row) {
            let u = unit_ball_sample(1, rng)[0];
            out.push(e - u * *eps);
        }
        e_hat.push(out);
    }
    let real = ChannelRealization { h, g, f, h_si, l_true, l_hat, e_true, e_hat, eps_dl, eps_ul };
    if !real.is_finite() {
        return Err(Error::NonFinite("channel realization".into()));
    }
    Ok(real)
}

impl ChannelRealization {
    /// The true channels of the first `n` antennas with fresh estimates drawn
    /// for error level `kappa`.
    pub fn truncated(&self, n: usize, kappa: f64, rng: &mut ChaCha20Rng) -> Result<ChannelRealization> {
        if n == 0 || n > self.h_si.rows() {
            return Err(Error::InvalidConfig(format!("cannot keep {n} of {} antennas", self.h_si.rows())));
        }
        let cut = |v: &CVector| v[..n].to_vec();
        with_estimates(
            self.h.iter().map(cut).collect(),
            self.g.iter().map(cut).collect(),
            self.f.clone(),
            ComplexMatrix::from_fn(n, n, |i, j| self.h_si[(i, j)]),
            self.l_true.iter().map(cut).collect(),
            self.e_true.clone(),
            kappa,
            rng,
        )
    }
}
