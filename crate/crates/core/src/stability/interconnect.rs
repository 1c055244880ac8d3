use nalgebra::DMatrix;
use serde::Serialize;

use super::hinf::{hinf_norm_poly, run_of_terms, PolyTerms, DEFAULT_GRID};
use crate::delay::DelayBounds;
use crate::error::{Error, Result};
use crate::linalg;
use crate::predictor::{Gains, PowerTable};
use crate::vehicle::{DiscreteLti, UncertaintyModel};

/// Nominal part `M_s` of an interconnection
/// `X(k+1) = A X + B W`, `Y = C X + D W`, closed by `W = Delta Y` with
/// `||Delta|| <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackForm {
    pub a_bar: DMatrix<f64>,
    pub b_bar: DMatrix<f64>,
    pub c_bar: DMatrix<f64>,
    pub d_bar: DMatrix<f64>,
}

impl FeedbackForm {
    pub fn new(a_bar: DMatrix<f64>, b_bar: DMatrix<f64>, c_bar: DMatrix<f64>, d_bar: DMatrix<f64>) -> Result<Self> {
        let n = a_bar.nrows();
        if !a_bar.is_square()
            || b_bar.nrows() != n
            || c_bar.ncols() != n
            || d_bar.nrows() != c_bar.nrows()
            || d_bar.ncols() != b_bar.ncols()
        {
            return Err(Error::Dimension(format!(
                "interconnection: A {:?}, B {:?}, C {:?}, D {:?}",
                a_bar.shape(),
                b_bar.shape(),
                c_bar.shape(),
                d_bar.shape()
            )));
        }
        Ok(Self {
            a_bar,
            b_bar,
            c_bar,
            d_bar,
        })
    }

    pub fn states(&self) -> usize {
        self.a_bar.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b_bar.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c_bar.nrows()
    }

    /// `||D||_2`. The matrix inequality needs this below one.
    pub fn feedthrough_norm(&self) -> f64 {
        linalg::spectral_norm(&self.d_bar)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Block {
    pub name: &'static str,
    pub offset: usize,
    pub size: usize,
}

fn stack(parts: &[(&'static str, usize)]) -> Vec<Block> {
    let mut offset = 0;
    parts
        .iter()
        .map(|&(name, size)| {
            let b = Block { name, offset, size };
            offset += size;
            b
        })
        .collect()
}

/// Where each signal sits inside `X`, `W` and `Y`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockLayout {
    pub state: Vec<Block>,
    pub input: Vec<Block>,
    pub output: Vec<Block>,
}

impl BlockLayout {
    /// `X = [Z; x(k-1); u(k-1); e]`,
    /// `W = [w_delta; w_d; w~_d; w_p; w1..w7]`,
    /// `Y = [y_delta; v; v~; y_p; v x6; q]`.
    pub fn new(n: usize, m: usize, r: usize, r_tilde: usize, q: usize) -> Self {
        Self {
            state: stack(&[("z", n), ("x_prev", n), ("u_prev", m), ("e", n)]),
            input: stack(&[
                ("w_delta", r),
                ("w_d", m),
                ("w_d_tilde", n),
                ("w_p", r_tilde),
                ("w1", m),
                ("w2", n),
                ("w3", n),
                ("w4", n),
                ("w5", n),
                ("w6", n),
                ("w7", n),
            ]),
            output: stack(&[
                ("y_delta", q),
                ("v", m),
                ("v_tilde", n),
                ("y_p", n),
                ("v1", m),
                ("v2", m),
                ("v3", m),
                ("v4", m),
                ("v5", m),
                ("v6", m),
                ("q", n),
            ]),
        }
    }

    fn total(blocks: &[Block]) -> usize {
        blocks.last().map_or(0, |b| b.offset + b.size)
    }

    pub fn state_dim(&self) -> usize {
        Self::total(&self.state)
    }

    pub fn input_dim(&self) -> usize {
        Self::total(&self.input)
    }

    pub fn output_dim(&self) -> usize {
        Self::total(&self.output)
    }
}

/// Delay-free interconnected model of the predictor-observer loop for one
/// output-delay value.
#[derive(Debug, Clone, PartialEq)]
pub struct InterconnectedSystem {
    pub form: FeedbackForm,
    pub layout: BlockLayout,
    /// `mu_1 .. mu_7`.
    pub mu: [f64; 7],
    pub beta1: DMatrix<f64>,
    pub beta2: DMatrix<f64>,
    pub beta3: DMatrix<f64>,
    pub upsilon: DMatrix<f64>,
    pub d_o: usize,
}

/// `1/2 sum_j sum_{i=0}^{h_j} A^{-i-1} B`.
pub fn upsilon(powers: &PowerTable, b: &DMatrix<f64>, h1: usize, h2: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(b.nrows(), b.ncols());
    for h in [h1, h2] {
        for i in 0..=h {
            acc += powers.pow(-(i as i64) - 1) * b;
        }
    }
    acc * 0.5
}

pub fn build_interconnected(
    model: &DiscreteLti,
    unc: &UncertaintyModel,
    gains: &Gains,
    bounds: &DelayBounds,
    d_o: usize,
) -> Result<InterconnectedSystem> {
    build_interconnected_with_grid(model, unc, gains, bounds, d_o, DEFAULT_GRID)
}

struct Mus {
    mu: [f64; 7],
}

fn compute_mus(
    powers: &PowerTable,
    b: &DMatrix<f64>,
    unc: &UncertaintyModel,
    bounds: &DelayBounds,
    d_o: usize,
    grid: usize,
) -> Result<Mus> {
    let (h1, h2) = (bounds.h1_i, bounds.h2_i);
    let d = d_o as i64;
    let one = DMatrix::from_element(1, 1, 1.0);
    let half = DMatrix::from_element(1, 1, 0.5);

    let mut t1 = PolyTerms::new();
    let mut t2 = PolyTerms::new();
    for h in [h1 as i64, h2 as i64] {
        t1.extend(run_of_terms(&half, 1, h - 1));
        for i in 0..=h {
            t2.extend(run_of_terms(&(powers.pow(-i - 1) * b * 0.5), 1, h - i - 1));
        }
    }

    let h_a_b = &unc.h_a * b;
    let poly_over_output = |h: i64, coef: &dyn Fn(i64) -> DMatrix<f64>| -> PolyTerms {
        let mut terms = PolyTerms::new();
        for i in 0..d {
            terms.extend(run_of_terms(&coef(i), 1, d + h - i - 1));
        }
        terms
    };
    let with_h_b = |i: i64| powers.pow(d - i - 1) * &unc.h_b;
    let with_h_a_b = |i: i64| powers.pow(d - i - 2) * &h_a_b;
    let t3 = poly_over_output(h1 as i64, &with_h_b);
    let t4 = poly_over_output(h1 as i64, &with_h_a_b);
    let t5 = poly_over_output(h2 as i64, &with_h_b);
    let t6 = poly_over_output(h2 as i64, &with_h_a_b);
    let t7 = run_of_terms(&one, 0, d - 1);

    let mut mu = [0.0; 7];
    for (slot, terms) in mu.iter_mut().zip([t1, t2, t3, t4, t5, t6, t7]) {
        *slot = hinf_norm_poly(&terms, grid)?;
    }
    Ok(Mus { mu })
}

pub fn build_interconnected_with_grid(
    model: &DiscreteLti,
    unc: &UncertaintyModel,
    gains: &Gains,
    bounds: &DelayBounds,
    d_o: usize,
    grid: usize,
) -> Result<InterconnectedSystem> {
    if !bounds.contains_output(d_o) {
        return Err(Error::DelayOutOfBounds {
            delay: d_o,
            lo: bounds.h1_o,
            hi: bounds.h2_o,
        });
    }
    unc.check_against(model)?;
    let (n, m) = (model.n(), model.m());
    if unc.h_a.nrows() != n || unc.e_tilde.nrows() != n {
        return Err(Error::Dimension(format!(
            "the interconnection needs H_A with n={n} rows, got {}",
            unc.h_a.nrows()
        )));
    }
    if gains.k.shape() != (m, n) || gains.f.shape() != (n, m) || gains.l.shape() != (n, model.p()) {
        return Err(Error::Dimension("gain shapes do not fit the plant".into()));
    }

    let (a, b, c) = (model.a(), model.b(), model.c());
    let (k, l, f) = (&gains.k, &gains.l, &gains.f);
    let depth = d_o.max(bounds.h2_i + 1) + 1;
    let powers = PowerTable::new(a, depth)?;
    let d = d_o as i64;
    let dd = d_o as f64;
    let tau = bounds.tau() as f64;

    let Mus { mu } = compute_mus(&powers, b, unc, bounds, d_o, grid)?;
    let beta1 = if d_o == 0 {
        DMatrix::zeros(n, n)
    } else {
        powers.pow(d - 1) * dd
    };
    let mut beta2 = DMatrix::zeros(n, n);
    let mut beta3 = DMatrix::zeros(n, n);
    for i in 0..d {
        beta2 += powers.pow(d - i - 1);
        beta3 += powers.pow(d - i - 2) * dd;
    }
    let ups = upsilon(&powers, b, bounds.h1_i, bounds.h2_i);

    let layout = BlockLayout::new(n, m, unc.delta_rows(), unc.e_tilde.ncols(), unc.h_a.nrows());
    let (ns, nw, ny) = (layout.state_dim(), layout.input_dim(), layout.output_dim());
    let mut a_bar = DMatrix::zeros(ns, ns);
    let mut b_bar = DMatrix::zeros(ns, nw);
    let mut c_bar = DMatrix::zeros(ny, ns);
    let mut d_bar = DMatrix::zeros(ny, nw);

    let put = |dst: &mut DMatrix<f64>, rows: &Block, cols: &Block, v: &DMatrix<f64>| {
        debug_assert_eq!((rows.size, cols.size), v.shape(), "{} / {}", rows.name, cols.name);
        dst.view_mut((rows.offset, cols.offset), (rows.size, cols.size))
            .copy_from(v);
    };
    let xs = &layout.state;
    let ws = &layout.input;
    let ys = &layout.output;
    let (sz, sx, su, se) = (&xs[0], &xs[1], &xs[2], &xs[3]);
    let eye_n = DMatrix::<f64>::identity(n, n);
    let eye_m = DMatrix::<f64>::identity(m, m);
    let fk = f * k;
    let obs = &(l * powers.pow(d) * c * powers.pow(-d));

    put(&mut a_bar, sz, sz, &(a + &fk));
    put(&mut a_bar, sz, se, &(-&fk));
    put(&mut a_bar, sx, sz, &eye_n);
    put(&mut a_bar, sx, su, &(-&ups));
    put(&mut a_bar, su, sz, k);
    put(&mut a_bar, su, se, &(-k));
    put(&mut a_bar, se, se, &(a - obs));

    let gamma_e = &unc.e * unc.gamma;
    let half_tau_b = b * (tau / 2.0);
    put(&mut b_bar, sz, &ws[0], &gamma_e);
    put(&mut b_bar, sz, &ws[1], &half_tau_b);
    put(&mut b_bar, sx, &ws[5], &(&eye_n * mu[1]));
    put(&mut b_bar, se, &ws[0], &gamma_e);
    put(&mut b_bar, se, &ws[1], &half_tau_b);
    put(&mut b_bar, se, &ws[3], &(obs * &unc.e_tilde * unc.gamma_tilde));

    let v_row = |c_bar: &mut DMatrix<f64>, row: &Block| {
        put(c_bar, row, sz, k);
        put(c_bar, row, su, &(-&eye_m));
        put(c_bar, row, se, &(-k));
    };
    put(&mut c_bar, &ys[0], sz, &unc.h_a);
    put(&mut c_bar, &ys[0], su, &(&unc.h_b - &unc.h_a * &ups));
    v_row(&mut c_bar, &ys[1]);
    let b2b = &beta2 * b;
    put(&mut c_bar, &ys[2], sz, &(&b2b * k));
    put(&mut c_bar, &ys[2], su, &(-&b2b));
    put(&mut c_bar, &ys[2], se, &(-(&b2b * k)));
    put(&mut c_bar, &ys[3], sx, &(&beta1 * &unc.h_a));
    put(&mut c_bar, &ys[3], su, &(&beta2 * &unc.h_b + &beta3 * &unc.h_a * b));
    for row in &ys[4..10] {
        v_row(&mut c_bar, row);
    }
    put(&mut c_bar, &ys[10], sz, &eye_n);
    put(&mut c_bar, &ys[10], sx, &(-&eye_n));
    put(&mut c_bar, &ys[10], su, &(-&ups));

    put(&mut d_bar, &ys[0], &ws[1], &(&unc.h_b * (tau / 2.0)));
    put(&mut d_bar, &ys[0], &ws[4], &(&unc.h_b * -mu[0]));
    put(&mut d_bar, &ys[0], &ws[5], &(&unc.h_a * mu[1]));
    // w~_d is an empty sum when d_O = 0.
    if d_o > 0 {
        put(&mut d_bar, &ys[3], &ws[2], &eye_n);
    }
    put(&mut d_bar, &ys[3], &ws[6], &(&eye_n * (-0.5 * mu[2])));
    put(&mut d_bar, &ys[3], &ws[7], &(&eye_n * (-0.5 * dd * mu[3])));
    put(&mut d_bar, &ys[3], &ws[8], &(&eye_n * (-0.5 * mu[4])));
    put(&mut d_bar, &ys[3], &ws[9], &(&eye_n * (-0.5 * dd * mu[5])));
    put(&mut d_bar, &ys[3], &ws[10], &(&beta1 * &unc.h_a * -mu[6]));
    put(&mut d_bar, &ys[10], &ws[5], &(&eye_n * mu[1]));

    Ok(InterconnectedSystem {
        form: FeedbackForm::new(a_bar, b_bar, c_bar, d_bar)?,
        layout,
        mu,
        beta1,
        beta2,
        beta3,
        upsilon: ups,
        d_o,
    })
}

/// One instance per output delay in `[h1_O, h2_O]`.
pub fn build_all_output_delays(
    model: &DiscreteLti,
    unc: &UncertaintyModel,
    gains: &Gains,
    bounds: &DelayBounds,
    grid: usize,
) -> Result<Vec<InterconnectedSystem>> {
    bounds
        .output_range()
        .map(|d| build_interconnected_with_grid(model, unc, gains, bounds, d, grid))
        .collect()
}
