//! Straight-line recomputation of a 3-region episode.

#![allow(clippy::needless_range_loop)]

/// Values recorded for one region in one step.
#[derive(Debug, Clone, Default)]
pub struct OracleRegion {
    pub labor: f64,
    pub technology: f64,
    pub capital: f64,
    pub sigma: f64,
    pub production: f64,
    pub gross_output: f64,
    pub exports: f64,
    pub imports: f64,
    pub domestic_consumption: f64,
    pub consumption: f64,
    pub utility: f64,
    pub emissions: f64,
}

#[derive(Debug, Clone, Default)]
pub struct OracleStep {
    pub regions: Vec<OracleRegion>,
    pub temp_atmosphere: f64,
    pub temp_ocean: f64,
    pub carbon_mass_atm: f64,
    pub emissions: f64,
}

/// One region's constant scripted decisions.
#[derive(Debug, Clone)]
pub struct Script {
    pub savings: f64,
    pub mitigation: f64,
    pub export_cap: f64,
    pub bids: [f64; 3],
    pub tariffs: [f64; 3],
}

/// Scripted decisions exercising partial trade, a binding export cap and tariffs.
pub fn scripts() -> [Script; 3] {
    [
        Script {
            savings: 0.25,
            mitigation: 0.3,
            export_cap: 0.05,
            bids: [0.0, 0.02, 0.03],
            tariffs: [0.0, 0.1, 0.05],
        },
        Script {
            savings: 0.2,
            mitigation: 0.1,
            export_cap: 0.01,
            bids: [0.04, 0.0, 0.01],
            tariffs: [0.2, 0.0, 0.0],
        },
        Script {
            savings: 0.3,
            mitigation: 0.5,
            export_cap: 0.5,
            bids: [0.01, 0.02, 0.0],
            tariffs: [0.0, 0.3, 0.0],
        },
    ]
}

/// The first three rows of the shipped region table:
/// A0, K0, L0, L_a, delta_A, g_A, l_g, sigma0.
const REGIONS: [[f64; 8]; 3] = [
    [1.872, 0.239, 476.878, 669.594, 0.139, 0.122, 0.034, 0.456],
    [8.405, 3.304, 68.395, 93.497, 0.188, 0.103, 0.058, 0.529],
    [3.558, 0.109, 64.122, 135.074, 0.161, 0.127, 0.026, 0.816],
];

pub fn run(steps: usize) -> Vec<OracleStep> {
    let s = scripts();

    let mut labor = [0.0; 3];
    let mut tech = [0.0; 3];
    let mut capital = [0.0; 3];
    let mut sigma = [0.0; 3];
    for i in 0..3 {
        tech[i] = REGIONS[i][0];
        capital[i] = REGIONS[i][1];
        labor[i] = REGIONS[i][2];
        sigma[i] = REGIONS[i][7];
    }
    let mut m_at = 851.0;
    let mut m_up = 460.0;
    let mut m_lo = 1740.0;
    let mut t_at: f64 = 0.85;
    let mut t_lo = 0.0068;

    let b12 = 0.12;
    let b23 = 0.007;
    let b21 = b12 * 588.0 / 360.0;
    let b32 = b23 * 360.0 / 1720.0;

    let mut out = Vec::new();
    for t in 0..steps {
        let mut rec = vec![OracleRegion::default(); 3];

        let mut y = [0.0; 3];
        for i in 0..3 {
            let prod = tech[i] * capital[i].powf(0.3) * (labor[i] / 1000.0).powf(0.7);
            let damage = 1.0 / (1.0 + 0.0 * t_at + 0.00236 * t_at.powf(2.0));
            let cost = 550.0 / (1000.0 * 2.6) * sigma[i] * s[i].mitigation.powf(2.6);
            y[i] = damage * (1.0 - cost) * prod;
            rec[i].production = prod;
            rec[i].gross_output = y[i];
        }

        // shipped[i][j]: from i to j
        let mut shipped = [[0.0; 3]; 3];
        for i in 0..3 {
            let mut demand = 0.0;
            for j in 0..3 {
                if j != i {
                    demand += s[j].bids[i];
                }
            }
            let mut cap = s[i].export_cap;
            let room = y[i] - s[i].savings * y[i];
            if room < cap {
                cap = room;
            }
            for j in 0..3 {
                if j != i {
                    shipped[i][j] = if demand > cap {
                        s[j].bids[i] * cap / demand
                    } else {
                        s[j].bids[i]
                    };
                }
            }
        }

        let mut total_e = 0.0;
        for i in 0..3 {
            let exports = shipped[i][0] + shipped[i][1] + shipped[i][2];
            let mut c_dom = y[i] - s[i].savings * y[i] - exports;
            if c_dom < 0.0 {
                c_dom = 0.0;
            }
            let mut inner = 0.5 * c_dom.sqrt();
            let mut imports = 0.0;
            for k in 0..3 {
                if k != i {
                    let got = shipped[k][i] * (1.0 - s[i].tariffs[k]);
                    imports += got;
                    inner += 0.25 * got.sqrt();
                }
            }
            let c = inner * inner;
            let pop = labor[i] / 1000.0;
            let u = pop * ((c / pop + 1e-5).sqrt() - 1.0) / 0.5;
            let e = sigma[i] * (1.0 - s[i].mitigation) * rec[i].production * 5.0;
            total_e += e;

            rec[i].labor = labor[i];
            rec[i].technology = tech[i];
            rec[i].capital = capital[i];
            rec[i].sigma = sigma[i];
            rec[i].exports = exports;
            rec[i].imports = imports;
            rec[i].domestic_consumption = c_dom;
            rec[i].consumption = c;
            rec[i].utility = u;
            rec[i].emissions = e;
        }

        for i in 0..3 {
            let p = REGIONS[i];
            let l_next = labor[i] * ((1.0 + p[3]) / (1.0 + labor[i])).powf(p[6]);
            let a_next = ((0.0033f64).exp() + p[5] * (-p[4] * 5.0 * t as f64).exp()) * tech[i];
            let k_next = 0.9f64.powf(5.0) * capital[i] + 5.0 * s[i].savings * y[i];
            labor[i] = l_next;
            tech[i] = a_next;
            capital[i] = k_next;
            sigma[i] *= (-0.01 * 5.0f64).exp();
        }

        let at = (1.0 - b12) * m_at + b21 * m_up + total_e;
        let up = b12 * m_at + (1.0 - b21 - b23) * m_up + b32 * m_lo;
        let lo = b23 * m_up + (1.0 - b32) * m_lo;
        m_at = at;
        m_up = up;
        m_lo = lo;
        let forcing = 3.6813 * (m_at / 588.0).ln() / 2f64.ln() + 0.5 + 0.5 / 17.0 * t as f64;
        let t_at_next = t_at + 0.1005 * (forcing - 3.6813 / 3.1 * t_at - 0.088 * (t_at - t_lo));
        let t_lo_next = t_lo + 0.025 * (t_at - t_lo);
        t_at = t_at_next;
        t_lo = t_lo_next;

        out.push(OracleStep {
            regions: rec,
            temp_atmosphere: t_at,
            temp_ocean: t_lo,
            carbon_mass_atm: m_at,
            emissions: total_e,
        });
    }
    out
}
