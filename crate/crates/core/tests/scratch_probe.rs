use tubelab_core::lab::{preset, run_study, RowOutcome};

#[test]
#[ignore]
fn probe_remaining_presets() {
    for name in ["sawtooth-2d", "oscillating-counterexample"] {
        let config = preset(name).unwrap();
        let t = std::time::Instant::now();
        let report = run_study(&config).expect(name);
        eprintln!("== {} ({:.1?})", name, t.elapsed());
        for row in &report.rows {
            match &row.outcome {
                RowOutcome::Ok { gap, min_eig, perp_floor } => eprintln!(
                    "   eps {:<7} n_s {:<6} eig {:?} res {:.3e} mode {:?} bracket {:.3e} min {:.4} perp {:?}",
                    row.eps,
                    row.n_s,
                    gap.eig_gap,
                    gap.resolvent_gap,
                    gap.mode_gap,
                    gap.bound_bracket,
                    min_eig,
                    perp_floor
                ),
                RowOutcome::RateOnly { components } => eprintln!(
                    "   eps {:<7} n_s {:<6} bracket {:.3e} sigma_k {:.3e} sigma_th {:.3e} deriv {:.3e}",
                    row.eps,
                    row.n_s,
                    components.total,
                    components.sigma_k,
                    components.sigma_theta,
                    components.steklov_deriv
                ),
                RowOutcome::Failed { error } => eprintln!("   eps {:<7} FAILED {error}", row.eps),
            }
        }
        eprintln!("   fits: {:?}", report.fits);
        for a in &report.assertions {
            eprintln!(
                "   [{}] {}: {}",
                if a.passed { "pass" } else { "FAIL" },
                a.name,
                a.detail
            );
        }
    }
}
