//! Behavior tests for the C ABI plus a consistency check that the
//! handwritten header matches the exported symbol list.

use ibs_risk_capi::*;
use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(ibs_last_error_message())
            .to_string_lossy()
            .into_owned()
    }
}

#[test]
fn mse_lifecycle_risk_and_optimum() {
    unsafe {
        let mut loss: *mut IbsLoss = ptr::null_mut();
        assert_eq!(ibs_loss_new_mse(&mut loss), IbsStatus::Ok);
        assert!(!loss.is_null());

        // eta_bar(mse, r=5, omega=3) = 1/4 exactly.
        let (mut eta, mut err) = (0.0f64, 0.0f64);
        assert_eq!(
            ibs_asymptotic_risk(loss, 5, 3.0, &mut eta, &mut err),
            IbsStatus::Ok
        );
        assert!((eta - 0.25).abs() < 1e-12, "eta={eta}");
        assert!((0.0..1e-10).contains(&err));

        let mut deriv = f64::NAN;
        assert_eq!(
            ibs_asymptotic_risk_derivative(loss, 5, 3.0, &mut deriv),
            IbsStatus::Ok
        );
        assert!(deriv.abs() < 1e-10, "derivative at the optimum: {deriv}");

        let mut opt = IbsOptimum {
            omega_star: 0.0,
            eta_star: 0.0,
            bracket_lo: 0.0,
            bracket_hi: 0.0,
            iterations: 0,
            unchecked_hypothesis_count: 0,
            stationarity_residual: 0.0,
            multiplicity_warning: true,
        };
        assert_eq!(ibs_find_optimum(loss, 5, &mut opt), IbsStatus::Ok);
        assert!((opt.omega_star - 3.0).abs() < 1e-6);
        assert!((opt.eta_star - 0.25).abs() < 1e-10);
        assert!(!opt.multiplicity_warning);
        assert!(opt.unchecked_hypothesis_count >= 1);
        assert!(opt.iterations > 0);
        assert!(opt.bracket_lo <= opt.omega_star && opt.omega_star <= opt.bracket_hi);

        ibs_loss_free(loss);
    }
}

#[test]
fn exact_and_simulated_risk_agree_with_the_rust_api() {
    unsafe {
        let mut loss: *mut IbsLoss = ptr::null_mut();
        assert_eq!(ibs_loss_new_mae(&mut loss), IbsStatus::Ok);

        let (mut eta, mut bound) = (0.0f64, 0.0f64);
        assert_eq!(
            ibs_exact_risk(loss, 4, 0.2, 2.6741228861, 1, 1e-10, &mut eta, &mut bound),
            IbsStatus::Ok
        );
        let rust_loss = ibs_risk::Loss::mae();
        let est = ibs_risk::EstimatorSpec::ShiftedReciprocal {
            omega: 2.6741228861,
            c: 1,
        };
        let (expect, expect_bound) = ibs_risk::exact_risk(&rust_loss, &est, 4, 0.2, 1e-10).unwrap();
        assert_eq!(eta, expect);
        assert_eq!(bound, expect_bound);
        assert!(bound <= 1e-10);

        let (mut mean, mut stderr) = (0.0f64, 0.0f64);
        assert_eq!(
            ibs_simulate_risk(
                loss,
                4,
                0.2,
                2.6741228861,
                1,
                20_000,
                7,
                &mut mean,
                &mut stderr
            ),
            IbsStatus::Ok
        );
        assert!(
            (mean - expect).abs() < 5.0 * stderr,
            "mean={mean} expect={expect}"
        );

        // Fixed seed reproduces bitwise.
        let (mut mean2, mut stderr2) = (0.0f64, 0.0f64);
        assert_eq!(
            ibs_simulate_risk(
                loss,
                4,
                0.2,
                2.6741228861,
                1,
                20_000,
                7,
                &mut mean2,
                &mut stderr2
            ),
            IbsStatus::Ok
        );
        assert_eq!(mean.to_bits(), mean2.to_bits());
        assert_eq!(stderr.to_bits(), stderr2.to_bits());

        ibs_loss_free(loss);
    }
}

#[test]
fn error_paths_set_codes_and_messages() {
    unsafe {
        // Null out-pointer.
        assert_eq!(ibs_loss_new_mse(ptr::null_mut()), IbsStatus::NullArgument);
        assert!(last_error().contains("NULL"));

        // Divergent integral: squared error needs r > 2.
        let mut loss: *mut IbsLoss = ptr::null_mut();
        assert_eq!(ibs_loss_new_mse(&mut loss), IbsStatus::Ok);
        let (mut eta, mut err) = (0.0f64, 0.0f64);
        assert_eq!(
            ibs_asymptotic_risk(loss, 2, 1.0, &mut eta, &mut err),
            IbsStatus::Divergence
        );
        assert!(!last_error().is_empty());
        ibs_loss_free(loss);

        // Invalid parameters for the interval loss.
        let mut bad: *mut IbsLoss = ptr::null_mut();
        assert_eq!(
            ibs_loss_new_generalized_interval(1.0, 1.0, 0.5, 2.0, &mut bad),
            IbsStatus::Domain
        );
        assert!(bad.is_null());

        // Monotone risk: no finite minimizer.
        let mut mono: *mut IbsLoss = ptr::null_mut();
        assert_eq!(
            ibs_loss_new_generalized_interval(20.0, 1.0, 2.0, 2.0, &mut mono),
            IbsStatus::Ok
        );
        let mut opt = IbsOptimum {
            omega_star: 0.0,
            eta_star: 0.0,
            bracket_lo: 0.0,
            bracket_hi: 0.0,
            iterations: 0,
            unchecked_hypothesis_count: 0,
            stationarity_residual: 0.0,
            multiplicity_warning: false,
        };
        assert_eq!(ibs_find_optimum(mono, 2, &mut opt), IbsStatus::NoOptimum);
        ibs_loss_free(mono);

        // Unknown spec string falls through to the filesystem.
        let spec = CString::new("/definitely/not/a/file.json").unwrap();
        let mut from_file: *mut IbsLoss = ptr::null_mut();
        assert_eq!(
            ibs_loss_from_spec(spec.as_ptr(), &mut from_file),
            IbsStatus::Io
        );

        // Freeing NULL is a no-op.
        ibs_loss_free(ptr::null_mut());
    }
}

#[test]
fn spec_strings_build_builtin_and_inline_losses() {
    unsafe {
        for (spec, r, omega, expect) in [
            ("mse", 5u32, 3.0f64, 0.25f64),
            (
                "generalized_interval:a1=1,a2=1,mu1=2,mu2=2",
                3,
                2.0 * 4.0f64.ln(),
                -1.0,
            ),
        ] {
            let c_spec = CString::new(spec).unwrap();
            let mut loss: *mut IbsLoss = ptr::null_mut();
            assert_eq!(
                ibs_loss_from_spec(c_spec.as_ptr(), &mut loss),
                IbsStatus::Ok
            );
            let (mut eta, mut err) = (0.0f64, 0.0f64);
            assert_eq!(
                ibs_asymptotic_risk(loss, r, omega, &mut eta, &mut err),
                IbsStatus::Ok
            );
            if expect >= 0.0 {
                assert!((eta - expect).abs() < 1e-12);
            } else {
                assert!(eta.is_finite() && eta > 0.0);
            }
            ibs_loss_free(loss);
        }
    }
}

// ---------------------------------------------------------------------------
// Header consistency

fn exported_symbols(source: &str) -> Vec<String> {
    let mut names = Vec::new();
    for line in source.lines() {
        let line = line.trim_start();
        for prefix in ["pub unsafe extern \"C\" fn ", "pub extern \"C\" fn "] {
            if let Some(rest) = line.strip_prefix(prefix) {
                let name: String = rest
                    .chars()
                    .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
                    .collect();
                names.push(name);
            }
        }
    }
    names.sort();
    names
}

fn declared_symbols(header: &str) -> Vec<String> {
    // Function declarations are the identifiers starting with `ibs_`
    // immediately followed by `(`.
    let mut names = Vec::new();
    let bytes = header.as_bytes();
    let mut i = 0;
    while let Some(pos) = header[i..].find("ibs_") {
        let start = i + pos;
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
            end += 1;
        }
        if end < bytes.len() && bytes[end] == b'(' {
            names.push(header[start..end].to_string());
        }
        i = end;
    }
    names.sort();
    names.dedup();
    names
}

#[test]
fn header_lists_exactly_the_exported_symbols() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let source = std::fs::read_to_string(root.join("src/lib.rs")).unwrap();
    let header = std::fs::read_to_string(root.join("include/ibs_risk.h")).unwrap();
    let exported = exported_symbols(&source);
    let declared = declared_symbols(&header);
    assert!(!exported.is_empty());
    assert_eq!(
        exported, declared,
        "exported C symbols and header declarations diverge"
    );
}

#[test]
fn header_compiles_as_c99_and_as_cxx() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include/ibs_risk.h");
    for (compiler, std, lang) in [("gcc", "-std=c99", "c"), ("g++", "-std=c++11", "c++")] {
        match std::process::Command::new(compiler)
            .args([std, "-Wall", "-Werror", "-fsyntax-only", "-x", lang])
            .arg(&header)
            .output()
        {
            Ok(out) => assert!(
                out.status.success(),
                "{compiler} rejected the header:\n{}",
                String::from_utf8_lossy(&out.stderr)
            ),
            // No compiler in this environment: nothing to check.
            Err(_) => continue,
        }
    }
}
