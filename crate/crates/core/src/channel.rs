//! mmWave link model: close-in path loss, distance-dependent LoS
//! probabilities, ULA multipath channels and their reduction to scalar
//! beamforming gains under MRT/MRC.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::ChannelError;
use crate::topology::{Dims, ScenarioConfig, Topology};
use crate::units::{db_to_linear, SPEED_OF_LIGHT};

/// Free-space loss at the 1 m reference distance, in dB.
pub fn reference_loss_db(carrier_freq_hz: f64) -> f64 {
    20.0 * (4.0 * PI * carrier_freq_hz / SPEED_OF_LIGHT).log10()
}

/// Close-in path loss `a + 10 beta log10(d) + shadow` in dB.
pub fn path_loss(beta: f64, d: f64, carrier_freq_hz: f64, shadow_db: f64) -> Result<f64, ChannelError> {
    if !(d >= 1.0) {
        return Err(ChannelError::BelowReferenceDistance(d));
    }
    Ok(reference_loss_db(carrier_freq_hz) + 10.0 * beta * d.log10() + shadow_db)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    /// MBS-SBS or SBS-SBS.
    Backhaul,
    MbsUe,
    SbsUe,
}

impl LinkKind {
    pub fn of(dims: &Dims, b: usize, i: usize) -> Self {
        if dims.is_bs(i) {
            LinkKind::Backhaul
        } else if b == 0 {
            LinkKind::MbsUe
        } else {
            LinkKind::SbsUe
        }
    }
}

/// LoS probability at distance `d` metres for the given link class.
pub fn los_probability(kind: LinkKind, d: f64) -> f64 {
    let p = match kind {
        LinkKind::Backhaul => {
            let e = (-d / 72.0).exp();
            (18.0 / d).min(1.0) * (1.0 - e) + e
        }
        LinkKind::MbsUe => {
            let e = (-d / 63.0).exp();
            (18.0 / d).min(1.0) * (1.0 - e) + e
        }
        LinkKind::SbsUe => {
            0.5 - (5.0 * (-156.0 / d).exp()).min(0.5) + (5.0 * (-d / 30.0).exp()).min(0.5)
        }
    };
    p.clamp(0.0, 1.0)
}

/// ULA response with `spacing` in wavelengths, normalised to unit norm.
pub fn array_response(n: usize, angle: f64, spacing: f64) -> DVector<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    let phase = 2.0 * PI * spacing * angle.sin();
    DVector::from_iterator(n, (0..n).map(|k| Complex64::from_polar(scale, phase * k as f64)))
}

/// Half-wavelength element spacing.
pub const ANTENNA_SPACING: f64 = 0.5;

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn outer(rx: &DVector<Complex64>, tx: &DVector<Complex64>) -> DMatrix<Complex64> {
    rx * tx.adjoint()
}

/// Unit-power NLoS small-scale matrix: `sqrt(nt nr / L) sum_l a_r a_t^H`.
pub fn nlos_small_scale<R: Rng + ?Sized>(
    nt: usize,
    nr: usize,
    paths: usize,
    rng: &mut R,
) -> DMatrix<Complex64> {
    let mut h = DMatrix::zeros(nr, nt);
    for _ in 0..paths {
        let aod = rng.gen_range(-PI / 2.0..PI / 2.0);
        let aoa = rng.gen_range(-PI / 2.0..PI / 2.0);
        let g = complex_gaussian(rng);
        h += outer(&array_response(nr, aoa, ANTENNA_SPACING), &array_response(nt, aod, ANTENNA_SPACING)) * g;
    }
    h * Complex64::from(((nt * nr) as f64 / paths as f64).sqrt())
}

/// Large-scale draws and per-subchannel matrices of one directed link.
#[derive(Debug, Clone)]
pub struct LinkState {
    pub tx: usize,
    pub rx: usize,
    pub distance_m: f64,
    pub los: bool,
    pub path_loss_los_db: f64,
    pub path_loss_nlos_db: f64,
    pub shadow_los_db: f64,
    pub shadow_nlos_db: f64,
    pub aod: f64,
    pub aoa: f64,
    pub nlos_aod: Vec<f64>,
    pub nlos_aoa: Vec<f64>,
    /// `PL_LoS^{-1/2} H^LoS` per subchannel, before LoS gating.
    pub los_part: Vec<DMatrix<Complex64>>,
    /// `PL_NLoS^{-1/2} H^NLoS` per subchannel.
    pub nlos_part: Vec<DMatrix<Complex64>>,
}

impl LinkState {
    /// Composite channel on subchannel `m`; the LoS part enters only when
    /// the link is LoS.
    pub fn channel(&self, m: usize) -> DMatrix<Complex64> {
        if self.los {
            &self.los_part[m] + &self.nlos_part[m]
        } else {
            self.nlos_part[m].clone()
        }
    }

    fn transposed(&self) -> LinkState {
        let flip = |v: &Vec<DMatrix<Complex64>>| v.iter().map(|h| h.transpose()).collect();
        LinkState {
            tx: self.rx,
            rx: self.tx,
            aod: self.aoa,
            aoa: self.aod,
            nlos_aod: self.nlos_aoa.clone(),
            nlos_aoa: self.nlos_aod.clone(),
            los_part: flip(&self.los_part),
            nlos_part: flip(&self.nlos_part),
            ..self.clone()
        }
    }
}

/// All directed links of one channel draw, indexed by `dims.pair(b, i)`.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub dims: Dims,
    pub links: Vec<Option<LinkState>>,
}

impl ChannelRealization {
    pub fn link(&self, b: usize, i: usize) -> Option<&LinkState> {
        self.links[self.dims.pair(b, i)].as_ref()
    }
}

fn antennas(config: &ScenarioConfig, dims: &Dims, node: usize) -> usize {
    if node == 0 {
        config.antennas_mbs
    } else if dims.is_sbs(node) {
        config.antennas_sbs
    } else {
        config.antennas_ue
    }
}

fn draw_link<R: Rng + ?Sized>(
    topology: &Topology,
    config: &ScenarioConfig,
    b: usize,
    i: usize,
    rng: &mut R,
) -> LinkState {
    let dims = &topology.dims;
    let d = topology.distance(b, i).expect("valid link").max(1.0);
    let kind = LinkKind::of(dims, b, i);
    let p_los = los_probability(kind, d);
    let draws = if kind == LinkKind::Backhaul {
        config.site_candidates
    } else {
        1
    };
    let mut los = false;
    for _ in 0..draws {
        los |= rng.gen::<f64>() < p_los;
    }
    let shadow_los_db = Normal::new(0.0, config.shadowing_std_los_db).unwrap().sample(rng);
    let shadow_nlos_db = Normal::new(0.0, config.shadowing_std_nlos_db).unwrap().sample(rng);
    let fc = config.carrier_freq_hz;
    let pl_los = path_loss(config.pathloss_exp_los, d, fc, shadow_los_db).unwrap();
    let pl_nlos = path_loss(config.pathloss_exp_nlos, d, fc, shadow_nlos_db).unwrap();

    let nt = antennas(config, dims, b);
    let nr = antennas(config, dims, i);
    let l = config.nlos_paths;
    let aod = rng.gen_range(-PI / 2.0..PI / 2.0);
    let aoa = rng.gen_range(-PI / 2.0..PI / 2.0);
    let nlos_aod: Vec<f64> = (0..l).map(|_| rng.gen_range(-PI / 2.0..PI / 2.0)).collect();
    let nlos_aoa: Vec<f64> = (0..l).map(|_| rng.gen_range(-PI / 2.0..PI / 2.0)).collect();

    let los_outer = outer(&array_response(nr, aoa, ANTENNA_SPACING), &array_response(nt, aod, ANTENNA_SPACING));
    let path_outers: Vec<_> = nlos_aod
        .iter()
        .zip(&nlos_aoa)
        .map(|(&t, &r)| outer(&array_response(nr, r, ANTENNA_SPACING), &array_response(nt, t, ANTENNA_SPACING)))
        .collect();
    let los_scale = ((nt * nr) as f64).sqrt() / db_to_linear(pl_los).sqrt();
    let nlos_scale = ((nt * nr) as f64 / l as f64).sqrt() / db_to_linear(pl_nlos).sqrt();

    let m_count = dims.num_subchannels;
    let mut los_part = Vec::with_capacity(m_count);
    let mut nlos_part = Vec::with_capacity(m_count);
    for _ in 0..m_count {
        let g = complex_gaussian(rng);
        los_part.push(&los_outer * (g * los_scale));
        let mut h = DMatrix::zeros(nr, nt);
        for o in &path_outers {
            h += o * (complex_gaussian(rng) * nlos_scale);
        }
        nlos_part.push(h);
    }

    LinkState {
        tx: b,
        rx: i,
        distance_m: d,
        los,
        path_loss_los_db: pl_los,
        path_loss_nlos_db: pl_nlos,
        shadow_los_db,
        shadow_nlos_db,
        aod,
        aoa,
        nlos_aod,
        nlos_aoa,
        los_part,
        nlos_part,
    }
}

/// Draws every directed BS-to-node link. Links between two base stations
/// are drawn once and reused transposed for the reverse direction.
pub fn realize_channels<R: Rng + ?Sized>(
    topology: &Topology,
    config: &ScenarioConfig,
    rng: &mut R,
) -> ChannelRealization {
    let dims = topology.dims;
    let mut links: Vec<Option<LinkState>> = vec![None; dims.pair_len()];
    for b in dims.bs() {
        for i in dims.receivers() {
            if i == b {
                continue;
            }
            let state = if dims.is_bs(i) && i < b {
                links[dims.pair(i, b)].as_ref().expect("drawn earlier").transposed()
            } else {
                draw_link(topology, config, b, i, rng)
            };
            links[dims.pair(b, i)] = Some(state);
        }
    }
    ChannelRealization { dims, links }
}

/// Scalar gains after MRT/MRC, plus the beamformers that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    pub dims: Dims,
    /// `alpha_{b,i,m}` indexed by `dims.link(b, i, m)`.
    pub direct: Vec<f64>,
    /// `alpha_{b,b',i,i',m}`, see [`GainTable::cross_index`].
    pub cross: Vec<f64>,
    /// LoS indicator per `dims.pair(b, i)`.
    pub los: Vec<bool>,
    pub precoders: Vec<DVector<Complex64>>,
    pub combiners: Vec<DVector<Complex64>>,
}

impl GainTable {
    /// All-zero table without beamformers, for hand-built instances.
    pub fn zeros(dims: Dims) -> Self {
        let n = dims.num_nodes();
        let nb = dims.num_bs();
        Self {
            dims,
            direct: vec![0.0; dims.link_len()],
            cross: vec![0.0; nb * n * nb * n * dims.num_subchannels],
            los: vec![false; dims.pair_len()],
            precoders: Vec::new(),
            combiners: Vec::new(),
        }
    }

    #[inline]
    pub fn cross_index(&self, b: usize, bp: usize, i: usize, ip: usize, m: usize) -> usize {
        let d = &self.dims;
        let n = d.num_nodes();
        (((b * n + i) * d.num_bs() + bp) * n + ip) * d.num_subchannels + m
    }

    #[inline]
    pub fn direct(&self, b: usize, i: usize, m: usize) -> f64 {
        self.direct[self.dims.link(b, i, m)]
    }

    /// Gain at node `i` (combined for link b->i) of BS `bp` transmitting
    /// towards `ip`, on subchannel `m`.
    #[inline]
    pub fn cross(&self, b: usize, bp: usize, i: usize, ip: usize, m: usize) -> f64 {
        self.cross[self.cross_index(b, bp, i, ip, m)]
    }

    pub fn set_direct(&mut self, b: usize, i: usize, m: usize, v: f64) {
        let k = self.dims.link(b, i, m);
        self.direct[k] = v;
    }

    pub fn set_cross(&mut self, b: usize, bp: usize, i: usize, ip: usize, m: usize, v: f64) {
        let k = self.cross_index(b, bp, i, ip, m);
        self.cross[k] = v;
    }

    pub fn is_los(&self, b: usize, i: usize) -> bool {
        self.los[self.dims.pair(b, i)]
    }
}

/// Dominant singular triple `(w, v, s)` of `h`. A zero matrix yields the
/// first basis vectors and `s = 0`.
pub fn dominant_singular(h: &DMatrix<Complex64>) -> (DVector<Complex64>, DVector<Complex64>, f64) {
    let (nr, nt) = h.shape();
    let basis = |n: usize| {
        let mut e = DVector::zeros(n);
        e[0] = Complex64::from(1.0);
        e
    };
    if h.iter().all(|z| z.norm_sqr() == 0.0) {
        return (basis(nr), basis(nt), 0.0);
    }
    let svd = h.clone().svd(true, true);
    let (k, s) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, s)| if s > acc.1 { (k, s) } else { acc });
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let w = u.column(k).into_owned();
    let v = v_t.row(k).adjoint();
    (w, v, s)
}

/// MRT/MRC beamformers per link and the direct and cross gains they induce.
pub fn beamform_and_gain(realization: &ChannelRealization) -> GainTable {
    let dims = realization.dims;
    let n = dims.num_nodes();
    let nb = dims.num_bs();
    let mm = dims.num_subchannels;
    let mut table = GainTable::zeros(dims);
    table.precoders = vec![DVector::zeros(0); dims.link_len()];
    table.combiners = vec![DVector::zeros(0); dims.link_len()];

    for b in dims.bs() {
        for i in dims.receivers() {
            let Some(state) = realization.link(b, i) else {
                continue;
            };
            table.los[dims.pair(b, i)] = state.los;
            for m in 0..mm {
                let (w, v, s) = dominant_singular(&state.channel(m));
                let k = dims.link(b, i, m);
                table.direct[k] = s * s;
                table.precoders[k] = v;
                table.combiners[k] = w;
            }
        }
    }

    for i in dims.receivers() {
        for bp in dims.bs() {
            if bp == i {
                continue;
            }
            let state = realization.link(bp, i).expect("complete realization");
            for m in 0..mm {
                let h = state.channel(m);
                for ip in dims.receivers() {
                    if ip == bp {
                        continue;
                    }
                    let u = &h * &table.precoders[dims.link(bp, ip, m)];
                    for b in dims.bs() {
                        if b == i {
                            continue;
                        }
                        let w = &table.combiners[dims.link(b, i, m)];
                        let g = w.dotc(&u).norm_sqr();
                        let idx = (((b * n + i) * nb + bp) * n + ip) * mm + m;
                        table.cross[idx] = g;
                    }
                }
            }
        }
    }
    table
}

/// Writes one CSV row per (b, i, m): link ids, LoS flag, path losses and
/// the direct gain.
pub fn write_channel_csv<W: Write>(
    out: W,
    realization: &ChannelRealization,
    gains: &GainTable,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["b", "i", "m", "los", "pl_los_db", "pl_nlos_db", "alpha"])?;
    let dims = realization.dims;
    for b in dims.bs() {
        for i in dims.receivers() {
            let Some(s) = realization.link(b, i) else {
                continue;
            };
            for m in 0..dims.num_subchannels {
                w.write_record([
                    b.to_string(),
                    i.to_string(),
                    m.to_string(),
                    u8::from(s.los).to_string(),
                    format!("{:.6}", s.path_loss_los_db),
                    format!("{:.6}", s.path_loss_nlos_db),
                    format!("{:.9e}", gains.direct(b, i, m)),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{deploy, stream_rng, DeploymentMode};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn reference_loss_at_28ghz() {
        let a = path_loss(2.1, 1.0, 28e9, 0.0).unwrap();
        assert!((a - 61.38).abs() < 0.02, "{a}");
        let ten = path_loss(2.1, 10.0, 28e9, 0.0).unwrap();
        assert!((ten - a - 21.0).abs() < 1e-9);
        assert!(path_loss(3.17, 40.0, 28e9, 0.0).unwrap() > path_loss(2.1, 40.0, 28e9, 0.0).unwrap());
        assert_eq!(
            path_loss(2.1, 0.5, 28e9, 0.0),
            Err(ChannelError::BelowReferenceDistance(0.5))
        );
    }

    #[test]
    fn los_probability_cases() {
        assert_eq!(los_probability(LinkKind::Backhaul, 18.0), 1.0);
        let e = (-1.0f64).exp();
        let expected = 0.25 * (1.0 - e) + e;
        assert!((los_probability(LinkKind::Backhaul, 72.0) - expected).abs() < 1e-12);
        assert!((expected - 0.5259).abs() < 1e-4);
        assert!((los_probability(LinkKind::SbsUe, 1e-3) - 1.0).abs() < 1e-12);
        for d in [1.0, 10.0, 100.0, 1000.0] {
            for k in [LinkKind::Backhaul, LinkKind::MbsUe, LinkKind::SbsUe] {
                let p = los_probability(k, d);
                assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn array_response_values() {
        let a = array_response(4, 0.0, 0.5);
        for z in a.iter() {
            assert!((z - c(0.5, 0.0)).norm() < 1e-15);
        }
        let a = array_response(2, PI / 2.0, 0.5);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((a[0] - c(s, 0.0)).norm() < 1e-12);
        assert!((a[1] - c(-s, 0.0)).norm() < 1e-12);
        let mut rng = stream_rng(11, 0, 0);
        for _ in 0..100 {
            let theta = rng.gen_range(-PI..PI);
            let n = rng.gen_range(1..65);
            assert!((array_response(n, theta, 0.5).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nlos_energy_normalisation() {
        let mut rng = stream_rng(5, 0, 0);
        let (nt, nr, l) = (16, 2, 6);
        let draws = 10_000;
        let mean = (0..draws)
            .map(|_| nlos_small_scale(nt, nr, l, &mut rng).norm_squared())
            .sum::<f64>()
            / draws as f64;
        let target = (nt * nr) as f64;
        assert!((mean - target).abs() / target < 0.05, "{mean}");
    }

    #[test]
    fn single_path_los_channel_is_rank_one() {
        let (nt, nr) = (8, 4);
        let h = outer(&array_response(nr, 0.3, 0.5), &array_response(nt, -0.7, 0.5)) * c(0.4, -1.1);
        let svd = h.svd(false, false);
        let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(s[0] > 0.1);
        assert!(s[1] < 1e-12 * s[0]);
    }

    #[test]
    fn hand_svd_of_diagonal_channel() {
        let h = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let (w, v, s) = dominant_singular(&h);
        assert!((s * s - 4.0).abs() < 1e-12);
        // Singular vectors are unique up to a common phase.
        assert!((w[0].norm() - 1.0).abs() < 1e-12 && w[1].norm() < 1e-12);
        assert!((v[0].norm() - 1.0).abs() < 1e-12 && v[1].norm() < 1e-12);
        assert!(((w.adjoint() * &h * &v)[0].norm_sqr() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_channel_gets_basis_beamformers() {
        let h = DMatrix::<Complex64>::zeros(2, 3);
        let (w, v, s) = dominant_singular(&h);
        assert_eq!(s, 0.0);
        assert_eq!(w[0], c(1.0, 0.0));
        assert_eq!(v[0], c(1.0, 0.0));
        assert_eq!(v.len(), 3);
    }

    fn small_realization(seed: u64) -> (ScenarioConfig, ChannelRealization) {
        let cfg = ScenarioConfig {
            num_sbs: 2,
            num_ues: 3,
            num_subchannels: 3,
            antennas_mbs: 8,
            antennas_sbs: 4,
            rng_seed: seed,
            ..ScenarioConfig::default()
        };
        let topo = deploy(&cfg, DeploymentMode::Random).unwrap();
        let mut rng = stream_rng(seed, 0, 2);
        let real = realize_channels(&topo, &cfg, &mut rng);
        (cfg, real)
    }

    #[test]
    fn realization_shapes_and_determinism() {
        let (cfg, real) = small_realization(3);
        let dims = real.dims;
        for b in dims.bs() {
            for i in dims.receivers() {
                let link = real.link(b, i);
                if b == i {
                    assert!(link.is_none());
                    continue;
                }
                let h = link.unwrap().channel(0);
                let nt = if b == 0 { cfg.antennas_mbs } else { cfg.antennas_sbs };
                let nr = if dims.is_sbs(i) { cfg.antennas_sbs } else { cfg.antennas_ue };
                assert_eq!(h.shape(), (nr, nt));
            }
        }
        let (_, again) = small_realization(3);
        for (a, b) in real.links.iter().zip(&again.links) {
            match (a, b) {
                (Some(a), Some(b)) => {
                    assert_eq!(a.los, b.los);
                    assert_eq!(a.channel(2), b.channel(2));
                }
                (None, None) => {}
                _ => panic!("link sets differ"),
            }
        }
        // Backhaul reciprocity.
        let fwd = real.link(1, 2).unwrap();
        let rev = real.link(2, 1).unwrap();
        assert_eq!(fwd.channel(1).transpose(), rev.channel(1));
        assert_eq!(fwd.los, rev.los);
    }

    #[test]
    fn nlos_link_ignores_los_component() {
        let (_, real) = small_realization(9);
        let mut link = real.link(0, 3).unwrap().clone();
        link.los = false;
        let before = link.channel(0);
        for h in link.los_part.iter_mut() {
            *h *= c(7.0, -3.0);
        }
        assert_eq!(before, link.channel(0));
    }

    #[test]
    fn gain_table_invariants() {
        let (_, real) = small_realization(4);
        let g = beamform_and_gain(&real);
        let dims = g.dims;
        for b in dims.bs() {
            for i in dims.receivers() {
                if b == i {
                    continue;
                }
                for m in 0..dims.num_subchannels {
                    let k = dims.link(b, i, m);
                    assert!((g.precoders[k].norm() - 1.0).abs() < 1e-12);
                    assert!((g.combiners[k].norm() - 1.0).abs() < 1e-12);
                    let h = real.link(b, i).unwrap().channel(m);
                    let direct = (g.combiners[k].adjoint() * &h * &g.precoders[k])[0].norm_sqr();
                    assert!((direct - g.direct(b, i, m)).abs() <= 1e-9 * direct.max(1e-300));
                }
            }
        }
        for b in dims.bs() {
            for i in dims.receivers() {
                for bp in dims.bs() {
                    if b == i || bp == i {
                        continue;
                    }
                    let h = real.link(bp, i).unwrap();
                    for m in 0..dims.num_subchannels {
                        let op = h.channel(m).svd(false, false).singular_values.max();
                        for ip in dims.receivers() {
                            if ip == bp {
                                continue;
                            }
                            let x = g.cross(b, bp, i, ip, m);
                            assert!(x >= 0.0);
                            assert!(x <= op * op * (1.0 + 1e-9));
                        }
                        if b == bp {
                            // The victim's own link reproduces the direct gain.
                            let same = g.cross(b, b, i, i, m);
                            assert!((same - g.direct(b, i, m)).abs() <= 1e-9 * g.direct(b, i, m));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn gains_ignore_global_phase() {
        let (_, mut real) = small_realization(6);
        let g1 = beamform_and_gain(&real);
        let rot = Complex64::from_polar(1.0, 1.234);
        for link in real.links.iter_mut().flatten() {
            for h in link.los_part.iter_mut().chain(link.nlos_part.iter_mut()) {
                *h *= rot;
            }
        }
        let g2 = beamform_and_gain(&real);
        for (a, b) in g1.direct.iter().zip(&g2.direct) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn backhaul_los_frequency_matches_model() {
        // One candidate site: the empirical rate must track the formula.
        let cfg = ScenarioConfig {
            num_sbs: 1,
            num_ues: 1,
            num_subchannels: 1,
            antennas_mbs: 2,
            antennas_sbs: 2,
            nlos_paths: 1,
            site_candidates: 1,
            ..ScenarioConfig::default()
        };
        let topo = Topology {
            dims: cfg.dims(),
            positions: vec![[0.0, 0.0], [120.0, 0.0], [10.0, 10.0]],
            cell_radius_m: 350.0,
        };
        let mut rng = stream_rng(21, 0, 0);
        let trials = 4000;
        let hits = (0..trials)
            .filter(|_| draw_link(&topo, &cfg, 0, 1, &mut rng).los)
            .count() as f64;
        let p = los_probability(LinkKind::Backhaul, 120.0);
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((hits / trials as f64 - p).abs() < 3.0 * sigma);

        // Three candidate sites: 1 - (1 - p)^3.
        let cfg3 = ScenarioConfig { site_candidates: 3, ..cfg };
        let hits = (0..trials)
            .filter(|_| draw_link(&topo, &cfg3, 0, 1, &mut rng).los)
            .count() as f64;
        let p3 = 1.0 - (1.0 - p).powi(3);
        let sigma = (p3 * (1.0 - p3) / trials as f64).sqrt();
        assert!((hits / trials as f64 - p3).abs() < 3.0 * sigma);
    }

    #[test]
    fn channel_csv_has_one_row_per_link() {
        let (_, real) = small_realization(2);
        let g = beamform_and_gain(&real);
        let mut buf = Vec::new();
        write_channel_csv(&mut buf, &real, &g).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let dims = real.dims;
        let links = dims.num_bs() * (dims.num_nodes() - 1) - dims.num_sbs;
        assert_eq!(text.lines().count(), 1 + links * dims.num_subchannels);
    }
}
