//! Fused pull-stream + collide sweep and half-way bounce-back.
//!
//! The sweep reads neighbor PDFs from `src` (a cell pulls `f~_i(x - e_i)`),
//! collides with the single-relaxation-time operator and writes `dst`; buffer
//! roles swap afterwards. `src` therefore always holds the post-collision
//! state between sweeps, which is what ghost exchange and bounce-back operate
//! on.
//!
//! Bounce-back is realized at the pull site: before a sweep, every wall cell
//! slot that some interior fluid cell will pull from is populated with the
//! reflected post-collision value plus the moving-wall term
//! `6 w_i rho0 (e_i . u_w)`, `e_i` being the delivered direction (wall toward
//! fluid). The sweep itself then needs no boundary branches.

use crate::field::{CellKind, FieldError, PdfField};
use crate::params::LbmParams;
use crate::scalar::Scalar;
use crate::stencil::{DIRECTIONS, OPPOSITE, Q, WEIGHTS};

/// One fused pull + collide sweep over the interior; swaps the grids.
/// Ghost slots of `src` must have been filled by communication and
/// `bounce_back` beforehand. Results are identical for AoS and SoA layouts.
pub fn collide_stream_pull<T: Scalar>(
    field: &mut PdfField<T>,
    params: &LbmParams<T>,
) -> Result<(), FieldError> {
    let extent = field.extent();
    if extent.iter().any(|&e| e == 0) {
        return Err(FieldError::EmptyExtent(extent));
    }
    let layout = field.layout();
    let (src, dst, kinds) = field.parts_mut();
    sweep_raw(extent, layout, src, dst, kinds, params);
    field.swap_buffers();
    Ok(())
}

/// Sweep core over raw arrays; the staged backend runs the same code on
/// arena-resident buffers, so host and staged results agree bit for bit.
pub fn sweep_raw<T: Scalar>(
    extent: [usize; 3],
    layout: crate::field::Layout,
    src: &[T],
    dst: &mut [T],
    kinds: &[CellKind<T>],
    params: &LbmParams<T>,
) {
    let [nx, ny, nz] = extent;
    let nx_tot = (nx + 2) as i64;
    let ny_tot = (ny + 2) as i64;
    let cells_tot = (nx + 2) * (ny + 2) * (nz + 2);

    // Per-direction strides; the pull offset in pdf-index units is constant
    // across cells for a fixed layout.
    let mut pull = [0i64; Q];
    let mut stride = [0usize; Q];
    for i in 0..Q {
        let e = DIRECTIONS[i];
        let cell_off = e[0] as i64 + e[1] as i64 * nx_tot + e[2] as i64 * nx_tot * ny_tot;
        match layout {
            crate::field::Layout::Aos => {
                pull[i] = -cell_off * Q as i64;
                stride[i] = 1;
            }
            crate::field::Layout::Soa => {
                pull[i] = -cell_off;
                stride[i] = cells_tot;
            }
        }
    }
    let cell_to_base = |cell: usize| match layout {
        crate::field::Layout::Aos => cell * Q,
        crate::field::Layout::Soa => cell,
    };

    let omega = params.omega();
    let rho0 = params.rho0();
    let inv_rho0 = T::one() / rho0;
    let c3 = T::from_f64(3.0);
    let c45 = T::from_f64(4.5);
    let c15 = T::from_f64(1.5);
    let mut w = [T::zero(); Q];
    for i in 0..Q {
        w[i] = T::from_f64(WEIGHTS[i]);
    }

    for z in 0..nz as i64 {
        for y in 0..ny as i64 {
            for x in 0..nx as i64 {
                let cell = (((z + 1) * ny_tot + (y + 1)) * nx_tot + (x + 1)) as usize;
                let base = cell_to_base(cell);
                if !matches!(kinds[cell], CellKind::Fluid) {
                    // Interior obstacles keep a clean zero state; their pull
                    // slots are repopulated by bounce_back each step.
                    for i in 0..Q {
                        dst[base + i * stride[i]] = T::zero();
                    }
                    continue;
                }
                let mut g = [T::zero(); Q];
                let mut drho = T::zero();
                let mut mx = T::zero();
                let mut my = T::zero();
                let mut mz = T::zero();
                for i in 0..Q {
                    let f = src[(base as i64 + i as i64 * stride[i] as i64 + pull[i]) as usize];
                    g[i] = f;
                    drho += f;
                    let e = DIRECTIONS[i];
                    if e[0] == 1 {
                        mx += f;
                    } else if e[0] == -1 {
                        mx -= f;
                    }
                    if e[1] == 1 {
                        my += f;
                    } else if e[1] == -1 {
                        my -= f;
                    }
                    if e[2] == 1 {
                        mz += f;
                    } else if e[2] == -1 {
                        mz -= f;
                    }
                }
                let ux = mx * inv_rho0;
                let uy = my * inv_rho0;
                let uz = mz * inv_rho0;
                let usq = ux * ux + uy * uy + uz * uz;
                for i in 0..Q {
                    let e = DIRECTIONS[i];
                    let eu = T::from_f64(e[0] as f64) * ux
                        + T::from_f64(e[1] as f64) * uy
                        + T::from_f64(e[2] as f64) * uz;
                    let feq = w[i] * (drho + rho0 * (c3 * eu + c45 * eu * eu - c15 * usq));
                    dst[base + i * stride[i]] = g[i] - omega * (g[i] - feq);
                }
            }
        }
    }
}

/// Populate the pull slots of every wall cell (interior or ghost) that has an
/// interior fluid neighbor. The delivered value in direction `i` is the fluid
/// cell's own post-collision opposite PDF plus the moving-wall term.
pub fn bounce_back<T: Scalar>(field: &mut PdfField<T>, params: &LbmParams<T>) {
    let [nx, ny, nz] = field.extent();
    let rho0 = params.rho0();
    let six = T::from_f64(6.0);
    for z in -1..=nz as i64 {
        for y in -1..=ny as i64 {
            for x in -1..=nx as i64 {
                let wall = [x, y, z];
                let u_w = match field.kind(wall) {
                    CellKind::Wall(u) => u,
                    CellKind::Fluid => continue,
                };
                for i in 1..Q {
                    let e = DIRECTIONS[i];
                    let fc = [x + e[0] as i64, y + e[1] as i64, z + e[2] as i64];
                    let interior = fc[0] >= 0
                        && fc[0] < nx as i64
                        && fc[1] >= 0
                        && fc[1] < ny as i64
                        && fc[2] >= 0
                        && fc[2] < nz as i64;
                    if !interior || !matches!(field.kind(fc), CellKind::Fluid) {
                        continue;
                    }
                    let eu = T::from_f64(e[0] as f64) * u_w[0]
                        + T::from_f64(e[1] as f64) * u_w[1]
                        + T::from_f64(e[2] as f64) * u_w[2];
                    let reflected = field.get(fc, OPPOSITE[i]) + six * T::from_f64(WEIGHTS[i]) * rho0 * eu;
                    field.set(wall, i, reflected);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::exchange_self_periodic;
    use crate::field::Layout;
    use crate::stencil::CS2;

    fn params(tau: f64) -> LbmParams<f64> {
        LbmParams::new(tau, 1.0).unwrap()
    }

    #[test]
    fn rest_field_is_a_fixed_point() {
        let mut f = PdfField::<f64>::new([4, 4, 4], Layout::Aos).unwrap();
        let p = params(0.7);
        for _ in 0..5 {
            exchange_self_periodic(&mut f, [true, true, true]);
            collide_stream_pull(&mut f, &p).unwrap();
        }
        assert!(f.src().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tau_one_collapses_to_equilibrium_of_pulled_moments() {
        let p = params(1.0);
        let mut f = PdfField::<f64>::new([3, 3, 3], Layout::Aos).unwrap();
        for z in 0..3 {
            for y in 0..3 {
                for x in 0..3 {
                    for i in 0..Q {
                        let v = 1e-3 * ((x * 5 + y * 3 + z * 7 + i as i64 * 11) % 13 - 6) as f64;
                        f.set([x, y, z], i, v);
                    }
                }
            }
        }
        // Oracle: explicit pull with periodic wrap, then equilibrium.
        let mut expected = vec![[0.0; Q]; 27];
        for z in 0..3i64 {
            for y in 0..3i64 {
                for x in 0..3i64 {
                    let mut g = [0.0; Q];
                    for i in 0..Q {
                        let e = DIRECTIONS[i];
                        let sx = (x - e[0] as i64).rem_euclid(3);
                        let sy = (y - e[1] as i64).rem_euclid(3);
                        let sz = (z - e[2] as i64).rem_euclid(3);
                        g[i] = f.get([sx, sy, sz], i);
                    }
                    let m = p.moments(&g);
                    expected[(z * 9 + y * 3 + x) as usize] = p.equilibrium(m.rho, m.u);
                }
            }
        }
        exchange_self_periodic(&mut f, [true, true, true]);
        collide_stream_pull(&mut f, &p).unwrap();
        for z in 0..3i64 {
            for y in 0..3i64 {
                for x in 0..3i64 {
                    let e = &expected[(z * 9 + y * 3 + x) as usize];
                    for i in 0..Q {
                        assert!((f.get([x, y, z], i) - e[i]).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn equilibrium_initialization_is_invariant_under_sweeps() {
        let p = params(0.62);
        let mut f = PdfField::<f64>::new([5, 4, 3], Layout::Soa).unwrap();
        let eq = p.equilibrium(1.002, [0.03, -0.01, 0.02]);
        for z in 0..3 {
            for y in 0..4 {
                for x in 0..5 {
                    f.set_equilibrium([x, y, z], &eq);
                }
            }
        }
        let before = f.interior_aos();
        for _ in 0..10 {
            exchange_self_periodic(&mut f, [true, true, true]);
            collide_stream_pull(&mut f, &p).unwrap();
        }
        let after = f.interior_aos();
        let max = before
            .iter()
            .zip(&after)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max < 1e-13, "drift {max}");
    }

    #[test]
    fn periodic_conservation_of_mass_and_momentum() {
        let p = params(0.9);
        let mut f = PdfField::<f64>::new([6, 5, 4], Layout::Aos).unwrap();
        for z in 0..4 {
            for y in 0..5 {
                for x in 0..6 {
                    let h = crate::util::splitmix64((x + 31 * y + 977 * z) as u64);
                    let drho = 1e-3 * ((h % 1000) as f64 / 500.0 - 1.0);
                    let u = [
                        0.02 + 1e-3 * ((h >> 10) % 100) as f64 / 100.0,
                        0.01,
                        -0.005,
                    ];
                    let eq = p.equilibrium(1.0 + drho, u);
                    f.set_equilibrium([x, y, z], &eq);
                }
            }
        }
        let (m0, mom0) = f.interior_sums();
        for _ in 0..100 {
            exchange_self_periodic(&mut f, [true, true, true]);
            collide_stream_pull(&mut f, &p).unwrap();
        }
        let (m1, mom1) = f.interior_sums();
        let cells = 6.0 * 5.0 * 4.0;
        assert!((m1 - m0).abs() / cells < 1e-12);
        for a in 0..3 {
            assert!((mom1[a] - mom0[a]).abs() / mom0[0].abs().max(1e-3) < 1e-12);
        }
    }

    #[test]
    fn layouts_agree_after_many_sweeps() {
        let p = params(0.73);
        let mut aos = PdfField::<f64>::new([5, 5, 5], Layout::Aos).unwrap();
        for z in 0..5 {
            for y in 0..5 {
                for x in 0..5 {
                    let h = crate::util::splitmix64((x * 131 + y * 17 + z) as u64);
                    let eq = p.equilibrium(
                        1.0 + 1e-3 * ((h % 100) as f64 / 50.0 - 1.0),
                        [0.01, -0.02, 0.015],
                    );
                    aos.set_equilibrium([x, y, z], &eq);
                }
            }
        }
        let mut soa = aos.layout_convert(Layout::Soa);
        for _ in 0..10 {
            exchange_self_periodic(&mut aos, [true, true, true]);
            collide_stream_pull(&mut aos, &p).unwrap();
            exchange_self_periodic(&mut soa, [true, true, true]);
            collide_stream_pull(&mut soa, &p).unwrap();
        }
        let a = aos.interior_aos();
        let b = soa.interior_aos();
        let max = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert!(max <= 1e-13, "layout divergence {max}");
    }

    #[test]
    fn bounce_back_no_slip_reflects_opposite_pdf() {
        let p = params(0.8);
        let mut f = PdfField::<f64>::new([3, 3, 3], Layout::Aos).unwrap();
        // Wall shell above +y.
        for z in -1..=3 {
            for x in -1..=3 {
                f.set_kind([x, 3, z], CellKind::Wall([0.0; 3]));
            }
        }
        for i in 0..Q {
            f.set([1, 2, 1], i, 1e-3 * (i as f64 + 1.0));
        }
        bounce_back(&mut f, &p);
        // Cell (1,2,1) pulls direction (0,-1,0) (index 4) from wall (1,3,1);
        // delivered value must equal its own opposite PDF (index 3).
        assert_eq!(f.get([1, 3, 1], 4), f.get([1, 2, 1], 3));
        // Edge pull (1,-1,0) = index 9 from wall (0,3,1).
        assert_eq!(f.get([0, 3, 1], 9), f.get([1, 2, 1], 10));
    }

    #[test]
    fn moving_wall_term_direct_evaluation() {
        // Top wall with u_w = (0.05, 0, 0); delivered direction (+1,-1,0)
        // gains 6 * (1/36) * rho0 * 0.05 = rho0 / 120.
        let p = params(0.8);
        let mut f = PdfField::<f64>::new([3, 3, 3], Layout::Aos).unwrap();
        for z in -1..=3 {
            for x in -1..=3 {
                f.set_kind([x, 3, z], CellKind::Wall([0.05, 0.0, 0.0]));
            }
        }
        for i in 0..Q {
            f.set([1, 2, 1], i, 1e-3 * (i as f64 + 1.0));
        }
        bounce_back(&mut f, &p);
        let dir_down_px = 9; // (1,-1,0)
        let opp = OPPOSITE[dir_down_px]; // (-1,1,0)
        let delivered = f.get([0, 3, 1], dir_down_px);
        let term = delivered - f.get([1, 2, 1], opp);
        assert!((term - 1.0 / 120.0).abs() < 1e-15);
    }

    #[test]
    fn tangential_wall_adds_no_mass() {
        let p = params(0.8);
        let mut f = PdfField::<f64>::new([4, 3, 4], Layout::Aos).unwrap();
        for z in -1..=4 {
            for x in -1..=4 {
                f.set_kind([x, 3, z], CellKind::Wall([0.07, 0.0, 0.0]));
            }
        }
        // Mass delivered from the wall to each adjacent fluid cell equals the
        // mass that left toward it: the +/- tangential terms cancel pairwise.
        for i in 0..Q {
            for z in 0..4 {
                for x in 0..4 {
                    f.set([x, 2, z], i, 1e-3 * ((x + z + i as i64) as f64));
                }
            }
        }
        bounce_back(&mut f, &p);
        for z in 0..4i64 {
            for x in 1..3i64 {
                let mut delivered = 0.0;
                let mut outgoing = 0.0;
                for i in 1..Q {
                    let e = DIRECTIONS[i];
                    let wall = [x - e[0] as i64, 2 + 1, z - e[2] as i64];
                    if e[1] == -1 {
                        delivered += f.get(wall, i);
                        outgoing += f.get([x, 2, z], OPPOSITE[i]);
                    }
                }
                assert!((delivered - outgoing).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pressure_is_cs2_times_density() {
        let p = params(0.8);
        let m = p.moments(&p.equilibrium(1.004, [0.02, 0.0, -0.01]));
        assert_eq!(m.p, CS2 * m.rho);
    }
}
