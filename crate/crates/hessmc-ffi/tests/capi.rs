//! Exercises the C ABI exactly as a foreign caller would: through the
//! exported extern "C" functions, opaque handles, and status codes.

use hessmc_ffi::*;
use std::ffi::CString;
use std::ptr;

fn last_error() -> String {
    let mut buf = vec![0i8; 256];
    let n = hm_last_error_message(buf.as_mut_ptr(), buf.len());
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

#[test]
fn gaussian_target_roundtrip() {
    unsafe {
        let mean = [0.5f64];
        let cov = [2.0f64];
        let mut target: *mut HmTarget = ptr::null_mut();
        assert_eq!(
            hm_gaussian_target_new(1, mean.as_ptr(), cov.as_ptr(), &mut target),
            HmStatus::Ok
        );
        assert_eq!(hm_target_dim(target), 1);

        let psi = [1.5f64];
        let mut j = 0.0;
        let mut grad = [0.0f64];
        assert_eq!(
            hm_target_j_grad(target, psi.as_ptr(), &mut j, grad.as_mut_ptr()),
            HmStatus::Ok
        );
        assert!((j - 0.25).abs() < 1e-14);
        assert!((grad[0] - 0.5).abs() < 1e-14);
        hm_target_free(target);
    }
}

#[test]
fn null_and_invalid_arguments_report_errors() {
    unsafe {
        let mut target: *mut HmTarget = ptr::null_mut();
        assert_eq!(
            hm_gaussian_target_new(1, ptr::null(), ptr::null(), &mut target),
            HmStatus::NullPointer
        );
        assert!(last_error().contains("null"));

        // indefinite covariance
        let mean = [0.0f64; 2];
        let bad = [1.0f64, 2.0, 2.0, 1.0];
        assert_eq!(
            hm_gaussian_target_new(2, mean.as_ptr(), bad.as_ptr(), &mut target),
            HmStatus::NotPositiveDefinite
        );
        assert!(!last_error().is_empty());

        // out-of-support gradient on a log-normal
        let m = [0.0f64];
        let s = [1.0f64];
        assert_eq!(
            hm_lognormal_target_new(1, m.as_ptr(), s.as_ptr(), 0.0, &mut target),
            HmStatus::Ok
        );
        let psi = [-1.0f64];
        let mut j = 0.0;
        let mut g = [0.0f64];
        assert_eq!(
            hm_target_j_grad(target, psi.as_ptr(), &mut j, g.as_mut_ptr()),
            HmStatus::OutOfSupport
        );
        // j() itself reports +inf with Ok status
        assert_eq!(hm_target_j(target, psi.as_ptr(), &mut j), HmStatus::Ok);
        assert!(j.is_infinite());
        hm_target_free(target);
    }
}

#[test]
fn find_map_recovers_lognormal_mode() {
    unsafe {
        let m = [0.5f64];
        let s = [2.0f64];
        let mut target: *mut HmTarget = ptr::null_mut();
        assert_eq!(
            hm_lognormal_target_new(1, m.as_ptr(), s.as_ptr(), 0.0, &mut target),
            HmStatus::Ok
        );
        let psi0 = [1.0f64];
        let mut out = [0.0f64];
        let mut report = HmOptReport {
            j_final: 0.0,
            grad_norm_final: 0.0,
            iterations: 0,
            converged: false,
            line_search_failures: 0,
        };
        assert_eq!(
            hm_find_map(target, psi0.as_ptr(), 1e-9, 200, out.as_mut_ptr(), &mut report),
            HmStatus::Ok
        );
        assert!((out[0] - (-1.5f64).exp()).abs() <= 1e-6);
        hm_target_free(target);
    }
}

#[test]
fn sample_chain_through_c_abi() {
    unsafe {
        let mean = [0.5f64, 0.5];
        let cov = [2.0f64, 0.0, 0.0, 2.0];
        let mut target: *mut HmTarget = ptr::null_mut();
        assert_eq!(
            hm_gaussian_target_new(2, mean.as_ptr(), cov.as_ptr(), &mut target),
            HmStatus::Ok
        );

        // exact precision as preconditioner: SN-MAP accepts everything
        let mut h: *mut HmSpd = ptr::null_mut();
        assert_eq!(hm_preconditioner_at(target, mean.as_ptr(), &mut h), HmStatus::Ok);

        let cfg = HmSamplerConfig {
            method: HmMethod::SnMap,
            dt: 1.0,
            tau: 0.5,
            leapfrog_steps: 1,
            gamma_max: 0.0,
            n_samples: 500,
            seed: 42,
            thinning: 1,
        };
        let mut chain: *mut HmChain = ptr::null_mut();
        assert_eq!(
            hm_sample(target, &cfg, mean.as_ptr(), h, ptr::null(), &mut chain),
            HmStatus::Ok
        );
        assert_eq!(hm_chain_len(chain), 500);
        assert_eq!(hm_chain_dim(chain), 2);
        assert_eq!(hm_chain_acceptance_rate(chain), 1.0);

        let mut samples = vec![0.0f64; 500 * 2];
        assert_eq!(hm_chain_samples(chain, samples.as_mut_ptr()), HmStatus::Ok);
        let mut logj = vec![0.0f64; 500];
        assert_eq!(hm_chain_logj(chain, logj.as_mut_ptr()), HmStatus::Ok);

        // determinism across calls with the same seed
        let mut chain2: *mut HmChain = ptr::null_mut();
        assert_eq!(
            hm_sample(target, &cfg, mean.as_ptr(), h, ptr::null(), &mut chain2),
            HmStatus::Ok
        );
        let mut samples2 = vec![0.0f64; 500 * 2];
        assert_eq!(hm_chain_samples(chain2, samples2.as_mut_ptr()), HmStatus::Ok);
        assert_eq!(samples, samples2);

        // diagnostics over the domain-average series
        let avg: Vec<f64> = samples.chunks(2).map(|r| 0.5 * (r[0] + r[1])).collect();
        let (mut tau, mut n_eff, mut se, mut se_sqrt) = (0.0, 0.0, 0.0, 0.0);
        assert_eq!(
            hm_iact_ess_se(avg.as_ptr(), avg.len(), -1.0, &mut tau, &mut n_eff, &mut se, &mut se_sqrt),
            HmStatus::Ok
        );
        assert!((0.5..=1.5).contains(&tau), "tau {tau}");
        assert!(se_sqrt > se); // n_eff > 1 ⇒ dividing by n_eff shrinks faster

        let mut rho = vec![0.0f64; 5];
        assert_eq!(
            hm_autocorrelation(avg.as_ptr(), avg.len(), 5, rho.as_mut_ptr()),
            HmStatus::Ok
        );
        assert!(rho[0].abs() < 0.2);

        let mut lo = vec![0.0f64; 2];
        let mut hi = vec![0.0f64; 2];
        assert_eq!(
            hm_credible_interval(samples.as_ptr(), 500, 2, 0.95, lo.as_mut_ptr(), hi.as_mut_ptr()),
            HmStatus::Ok
        );
        assert!(lo[0] < 0.5 && hi[0] > 0.5);

        hm_chain_free(chain);
        hm_chain_free(chain2);
        hm_spd_free(h);
        hm_target_free(target);
    }
}

#[test]
fn spd_handle_actions() {
    unsafe {
        let m = [4.0f64, 1.0, 1.0, 3.0];
        let mut h: *mut HmSpd = ptr::null_mut();
        assert_eq!(hm_spd_cholesky_new(2, m.as_ptr(), &mut h), HmStatus::Ok);
        let v = [1.0f64, -2.0];
        let mut mv = [0.0f64; 2];
        assert_eq!(hm_spd_apply(h, v.as_ptr(), mv.as_mut_ptr()), HmStatus::Ok);
        assert!((mv[0] - 2.0).abs() < 1e-14 && (mv[1] + 5.0).abs() < 1e-14);
        let mut back = [0.0f64; 2];
        assert_eq!(hm_spd_solve(h, mv.as_ptr(), back.as_mut_ptr()), HmStatus::Ok);
        assert!((back[0] - 1.0).abs() < 1e-12 && (back[1] + 2.0).abs() < 1e-12);
        hm_spd_free(h);
    }
}

#[test]
fn kld_closed_form_through_abi() {
    unsafe {
        // 1-D tiny-variance log-normal against its moment-matched normal:
        // divergence is small and nonnegative
        let m_q = [0.0f64];
        let s_q = [0.01f64];
        let m_tilde = [(0.005f64).exp()];
        let s_tilde = [(0.01f64).exp() * ((0.01f64).exp() - 1.0)];
        let mut d = -1.0;
        assert_eq!(
            hm_kld_lognormal_normal(
                1,
                m_q.as_ptr(),
                s_q.as_ptr(),
                m_tilde.as_ptr(),
                s_tilde.as_ptr(),
                &mut d
            ),
            HmStatus::Ok
        );
        assert!(d >= -1e-10 && d < 0.01, "D = {d}");
    }
}

#[test]
fn target_from_config_file() {
    unsafe {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .parent()
            .unwrap()
            .join("hessmc/presets/gauss1d.toml");
        let c_path = CString::new(dir.to_str().unwrap()).unwrap();
        let mut target: *mut HmTarget = ptr::null_mut();
        assert_eq!(hm_target_from_config(c_path.as_ptr(), &mut target), HmStatus::Ok);
        assert_eq!(hm_target_dim(target), 1);
        hm_target_free(target);

        let bad = CString::new("/nonexistent/nope.toml").unwrap();
        assert_eq!(
            hm_target_from_config(bad.as_ptr(), &mut target),
            HmStatus::ConfigError
        );
    }
}
