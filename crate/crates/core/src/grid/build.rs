//! Construction of the admittance matrices and the quadratic-form model.

use super::{
    AdmittanceModel, EqualityRow, GridError, InequalityRow, LinComb, NetworkCase, QuadForm,
    QuadraticFormModel,
};

/// Standard bus-admittance construction, including line charging and bus
/// shunts, in per-unit on the case base.
pub fn build_admittance(case: &NetworkCase) -> Result<AdmittanceModel, GridError> {
    let n = case.n_buses();
    let mut g = vec![vec![0.0; n]; n];
    let mut b = vec![vec![0.0; n]; n];
    let mut branch_y = Vec::with_capacity(case.n_branches());

    for (k, br) in case.branches.iter().enumerate() {
        let z2 = br.r * br.r + br.x * br.x;
        if z2 == 0.0 {
            return Err(GridError::ZeroImpedance(k + 1));
        }
        let ys_g = br.r / z2;
        let ys_b = -br.x / z2;
        branch_y.push((ys_g, ys_b));
        let f = case.bus_index(br.from_bus).expect("validated");
        let t = case.bus_index(br.to_bus).expect("validated");
        g[f][f] += ys_g;
        g[t][t] += ys_g;
        b[f][f] += ys_b + br.b_charging / 2.0;
        b[t][t] += ys_b + br.b_charging / 2.0;
        g[f][t] -= ys_g;
        g[t][f] -= ys_g;
        b[f][t] -= ys_b;
        b[t][f] -= ys_b;
    }

    // shunts are given in MW / MVAr consumed at 1.0 p.u. voltage
    for (i, bus) in case.buses.iter().enumerate() {
        g[i][i] += bus.shunt_g / case.base_mva;
        b[i][i] += bus.shunt_b / case.base_mva;
    }

    Ok(AdmittanceModel { g, b, branch_y })
}

/// Builds every per-bus/per-branch quadratic form and assembles the compact
/// equality and inequality rows.
pub fn build_quadratic_forms(
    case: &NetworkCase,
    adm: &AdmittanceModel,
) -> Result<QuadraticFormModel, GridError> {
    let n_b = case.n_buses();
    let n_g = case.n_generators();
    let n_l = case.n_branches();
    let dim = 2 * n_b;
    let base = case.base_mva;
    let slack = case.slack_bus();
    let load_buses = case.load_buses();
    let n_d = load_buses.len();

    // injection forms from p_n = sum_k vr_n(vr_k G - vi_k B) + vi_n(vi_k G + vr_k B)
    let mut m_p = Vec::with_capacity(n_b);
    let mut m_q = Vec::with_capacity(n_b);
    for n in 0..n_b {
        let mut mp = QuadForm::new(dim);
        let mut mq = QuadForm::new(dim);
        for k in 0..n_b {
            let gnk = adm.g[n][k];
            let bnk = adm.b[n][k];
            if gnk == 0.0 && bnk == 0.0 {
                continue;
            }
            let (rn, ik, rk, in_) = (n, n_b + k, k, n_b + n);
            if gnk != 0.0 {
                mp.add_term(rn, rk, gnk);
                mp.add_term(in_, ik, gnk);
                mq.add_term(in_, rk, gnk);
                mq.add_term(rn, ik, -gnk);
            }
            if bnk != 0.0 {
                mp.add_term(rn, ik, -bnk);
                mp.add_term(in_, rk, bnk);
                mq.add_term(in_, ik, -bnk);
                mq.add_term(rn, rk, -bnk);
            }
        }
        m_p.push(mp);
        m_q.push(mq);
    }

    // voltage magnitude squared: two unit diagonal entries
    let mut m_v = Vec::with_capacity(n_b);
    for n in 0..n_b {
        let mut mv = QuadForm::new(dim);
        mv.add_entry(n, n, 1.0);
        mv.add_entry(n_b + n, n_b + n, 1.0);
        m_v.push(mv);
    }

    // from-end squared series current: |y|^2 ((vr_m - vr_n)^2 + (vi_m - vi_n)^2)
    let mut m_i = Vec::with_capacity(n_l);
    for (k, br) in case.branches.iter().enumerate() {
        let (yg, yb) = adm.branch_y[k];
        let y2 = yg * yg + yb * yb;
        let m = case.bus_index(br.from_bus).expect("validated");
        let n = case.bus_index(br.to_bus).expect("validated");
        let mut mi = QuadForm::new(dim);
        for (a, b) in [(m, n), (n_b + m, n_b + n)] {
            mi.add_entry(a, a, y2);
            mi.add_entry(b, b, y2);
            mi.add_entry(a, b, -y2);
        }
        m_i.push(mi);
    }

    let mut slack_ref = QuadForm::new(dim);
    slack_ref.add_entry(n_b + slack, n_b + slack, 1.0);

    // demand-column lookup: load position of a bus index, if it is a load
    let load_pos = |bus: usize| load_buses.iter().position(|&b| b == bus);

    // equality rows: P injections, Q injections, slack reference
    let mut equalities = Vec::with_capacity(2 * n_b + 1);
    for n in 0..n_b {
        let a: LinComb = case
            .generators
            .iter()
            .enumerate()
            .filter(|(_, g)| case.bus_index(g.bus_id) == Some(n))
            .map(|(gi, _)| (gi, 1.0))
            .collect();
        let b: LinComb = match load_pos(n) {
            Some(p) => vec![(p, -1.0)],
            None => Vec::new(),
        };
        equalities.push(EqualityRow {
            l: m_p[n].clone(),
            a,
            b,
        });
    }
    for n in 0..n_b {
        let a: LinComb = case
            .generators
            .iter()
            .enumerate()
            .filter(|(_, g)| case.bus_index(g.bus_id) == Some(n))
            .map(|(gi, _)| (n_g + gi, 1.0))
            .collect();
        let b: LinComb = match load_pos(n) {
            Some(p) => vec![(n_d + p, -1.0)],
            None => Vec::new(),
        };
        equalities.push(EqualityRow {
            l: m_q[n].clone(),
            a,
            b,
        });
    }
    equalities.push(EqualityRow {
        l: slack_ref.clone(),
        a: Vec::new(),
        b: Vec::new(),
    });

    // inequality rows: gen P upper, P lower, Q upper, Q lower, then voltage
    // upper/lower, then branch currents. Generator rows bound the bus net
    // injection (plus demand) by the generator's own limit.
    let mut inequalities = Vec::with_capacity(4 * n_g + 2 * n_b + n_l);
    let gen_row = |gi: usize, reactive: bool, upper: bool| -> InequalityRow {
        let bus = case.bus_index(case.generators[gi].bus_id).expect("validated");
        let form = if reactive { &m_q[bus] } else { &m_p[bus] };
        let gen = &case.generators[gi];
        let limit = match (reactive, upper) {
            (false, true) => gen.p_max,
            (false, false) => gen.p_min,
            (true, true) => gen.q_max,
            (true, false) => gen.q_min,
        } / base;
        let d: LinComb = match load_pos(bus) {
            Some(p) => {
                let idx = if reactive { n_d + p } else { p };
                vec![(idx, if upper { -1.0 } else { 1.0 })]
            }
            None => Vec::new(),
        };
        if upper {
            // v^T M v + D <= limit
            InequalityRow {
                m: form.clone(),
                d,
                f: limit,
            }
        } else {
            // v^T M v + D >= limit  =>  -v^T M v - D <= -limit
            InequalityRow {
                m: form.negated(),
                d,
                f: -limit,
            }
        }
    };
    for gi in 0..n_g {
        inequalities.push(gen_row(gi, false, true));
    }
    for gi in 0..n_g {
        inequalities.push(gen_row(gi, false, false));
    }
    for gi in 0..n_g {
        inequalities.push(gen_row(gi, true, true));
    }
    for gi in 0..n_g {
        inequalities.push(gen_row(gi, true, false));
    }
    for n in 0..n_b {
        let vmax = case.buses[n].v_max;
        inequalities.push(InequalityRow {
            m: m_v[n].clone(),
            d: Vec::new(),
            f: vmax * vmax,
        });
    }
    for n in 0..n_b {
        let vmin = case.buses[n].v_min;
        inequalities.push(InequalityRow {
            m: m_v[n].negated(),
            d: Vec::new(),
            f: -vmin * vmin,
        });
    }
    for (k, br) in case.branches.iter().enumerate() {
        let f = if br.rating > 0.0 {
            let r = br.rating / base;
            r * r
        } else {
            f64::INFINITY // MATPOWER convention: rating 0 = unlimited
        };
        inequalities.push(InequalityRow {
            m: m_i[k].clone(),
            d: Vec::new(),
            f,
        });
    }

    let mut cost = vec![0.0; 2 * n_g];
    for (gi, g) in case.generators.iter().enumerate() {
        // currency/MWh on MW becomes currency/h per unit of p.u. power
        cost[gi] = g.cost_linear * base;
    }

    let mut g_lower = vec![0.0; 2 * n_g];
    let mut g_upper = vec![0.0; 2 * n_g];
    for (gi, g) in case.generators.iter().enumerate() {
        g_lower[gi] = g.p_min / base;
        g_upper[gi] = g.p_max / base;
        g_lower[n_g + gi] = g.q_min / base;
        g_upper[n_g + gi] = g.q_max / base;
    }

    let mut nominal_demand = vec![0.0; 2 * n_d];
    for (p, &bus) in load_buses.iter().enumerate() {
        nominal_demand[p] = case.buses[bus].p_demand_nominal / base;
        nominal_demand[n_d + p] = case.buses[bus].q_demand_nominal / base;
    }

    Ok(QuadraticFormModel {
        n_buses: n_b,
        n_generators: n_g,
        n_loads: n_d,
        n_branches: n_l,
        slack,
        load_buses,
        m_p,
        m_q,
        m_v,
        m_i,
        slack_ref,
        equalities,
        inequalities,
        cost,
        g_lower,
        g_upper,
        nominal_demand,
        base_mva: base,
    })
}
