//! Exercises the C ABI exactly as a C caller would: raw pointers, status
//! codes, and the per-thread error message.

use std::ffi::c_char;
use std::ptr;

use granular_kinetics_ffi::*;

fn last_error() -> String {
    unsafe {
        let needed = gk_last_error_message(ptr::null_mut(), 0);
        let mut buf = vec![0u8; needed + 1];
        let written = gk_last_error_message(buf.as_mut_ptr().cast::<c_char>(), buf.len());
        assert_eq!(written, needed);
        buf.truncate(needed);
        String::from_utf8(buf).unwrap()
    }
}

#[test]
fn roadworks_fills_from_the_inflow() {
    unsafe {
        let mut sim: *mut GkSim = ptr::null_mut();
        assert_eq!(gk_sim_roadworks(0.4, &mut sim), GkStatus::Ok);
        let (mut m, mut n) = (0usize, 0usize);
        assert_eq!(gk_sim_dims(sim, &mut m, &mut n), GkStatus::Ok);
        assert_eq!((m, n), (10, 6));

        let mut mass0 = f64::NAN;
        assert_eq!(gk_sim_total_mass(sim, &mut mass0), GkStatus::Ok);
        assert_eq!(mass0, 0.0);

        assert_eq!(gk_sim_step(sim, 50), GkStatus::Ok);
        let mut t = 0.0;
        let mut dt = 0.0;
        assert_eq!(gk_sim_time(sim, &mut t), GkStatus::Ok);
        assert_eq!(gk_sim_dt(sim, &mut dt), GkStatus::Ok);
        assert!((t - 50.0 * dt).abs() < 1e-12);

        let mut rho = vec![0.0; m];
        assert_eq!(gk_sim_density(sim, rho.as_mut_ptr(), m), GkStatus::Ok);
        assert!(rho[0] > 0.0, "inflow did not enter: {rho:?}");
        let mut f = vec![0.0; m * n];
        assert_eq!(
            gk_sim_distribution(sim, f.as_mut_ptr(), m * n),
            GkStatus::Ok
        );
        let sum0: f64 = f[..n].iter().sum();
        assert!((sum0 - rho[0]).abs() < 1e-12);

        // wrong buffer length is an argument error, not a crash
        assert_eq!(
            gk_sim_density(sim, rho.as_mut_ptr(), m - 1),
            GkStatus::InvalidArgument
        );
        gk_sim_free(sim);
    }
}

#[test]
fn traffic_light_mass_never_grows_and_empty_cells_have_nan_speed() {
    unsafe {
        let mut sim: *mut GkSim = ptr::null_mut();
        assert_eq!(gk_sim_traffic_light(5, &mut sim), GkStatus::Ok);
        let mut u = vec![0.0; 10];
        assert_eq!(gk_sim_mean_speed(sim, u.as_mut_ptr(), 10), GkStatus::Ok);
        assert!(u[9].is_nan(), "empty cell must have NaN mean speed");
        assert_eq!(u[4], 0.0, "standing queue has zero mean speed");

        let mut prev = f64::NAN;
        assert_eq!(gk_sim_total_mass(sim, &mut prev), GkStatus::Ok);
        assert_eq!(prev, 5.0);
        for _ in 0..40 {
            assert_eq!(gk_sim_step(sim, 5), GkStatus::Ok);
            let mut mass = f64::NAN;
            assert_eq!(gk_sim_total_mass(sim, &mut mass), GkStatus::Ok);
            assert!(mass <= prev + 1e-12, "no inflow, mass must not grow");
            prev = mass;
        }
        assert!(prev < 5.0, "the queue must drain through the exit");
        gk_sim_free(sim);
    }
}

#[test]
fn diagram_reports_free_flow_and_the_calibrated_variance_peak() {
    unsafe {
        let mut d: *mut GkDiagram = ptr::null_mut();
        assert_eq!(
            gk_diagram_compute(1.0, 0.2, 0.2, 0.1, 6, 1.0, &mut d),
            GkStatus::Ok
        );
        let mut len = 0usize;
        assert_eq!(gk_diagram_len(d, &mut len), GkStatus::Ok);
        assert_eq!(len, 1);
        let (mut rho, mut q, mut u, mut theta) = (0.0, 0.0, 0.0, 0.0);
        assert_eq!(
            gk_diagram_row(d, 0, &mut rho, &mut q, &mut u, &mut theta),
            GkStatus::Ok
        );
        // the row reports the achieved steady mass, one rounding cluster
        // away from the nominal grid value
        assert!((rho - 0.2).abs() < 1e-12, "{rho}");
        assert!((u - 1.0).abs() < 1e-6, "clear road speed {u}");
        assert!((q - 0.2).abs() < 1e-6);
        assert!(theta < 1e-6);
        assert_eq!(
            gk_diagram_row(d, 1, &mut rho, &mut q, &mut u, &mut theta),
            GkStatus::IndexOutOfRange
        );
        gk_diagram_free(d);

        let mut rc = f64::NAN;
        assert_eq!(gk_critical_density(0.61, 0.01, &mut rc), GkStatus::Ok);
        assert!((0.12..=0.18).contains(&rc), "rho_c = {rc}");
    }
}

#[test]
fn errors_set_statuses_and_messages() {
    unsafe {
        // null handles
        assert_eq!(gk_sim_step(ptr::null_mut(), 1), GkStatus::NullPointer);
        let mut x = 0.0;
        assert_eq!(gk_sim_time(ptr::null(), &mut x), GkStatus::NullPointer);
        assert_eq!(
            gk_sim_roadworks(0.4, ptr::null_mut()),
            GkStatus::NullPointer
        );

        // invalid arguments leave a retrievable message
        let mut sim: *mut GkSim = ptr::null_mut();
        assert_eq!(gk_sim_roadworks(2.0, &mut sim), GkStatus::InvalidArgument);
        assert!(sim.is_null());
        let msg = last_error();
        assert!(msg.contains("2"), "{msg}");

        // unstable custom setups are stability errors at construction time
        let status = gk_sim_custom(3, 4, 0.5, 0.0, -1.0, 0.2, 0.2, 1.0, &mut sim);
        assert_eq!(status, GkStatus::InvalidArgument);

        // frees of null are no-ops
        gk_sim_free(ptr::null_mut());
        gk_diagram_free(ptr::null_mut());
    }
}
