use gibc_core::assembly::{ImpedanceKind, QuadratureConfig};
use gibc_core::calderon::{condition_report, SystemBuilder};
use gibc_core::cq::{build_context, radau_tableau};
use gibc_harness::config::{ScenarioConfig, Shape};
use gibc_harness::study::{build_space, run_condition_sweep, run_scattering, run_time_convergence, FieldSeries};
use gibc_core::scattering::Impedance;

#[test]
fn time_order_approaches_three_on_a_fine_ladder() {
    let mut config = ScenarioConfig::default();
    config.mesh.level = 0;
    config.study.time_ladder = vec![64, 128, 256];
    config.study.reference_steps = 1024;
    let report = run_time_convergence(&config, None).unwrap();
    let orders = report.local_orders();
    assert!(orders.windows(2).all(|w| w[1] > w[0]), "{orders:?}");
    assert!((2.5..=3.5).contains(orders.last().unwrap()), "{orders:?}");
}

#[test]
fn mirrored_condition_rows_match_conjugate_frequencies() {
    let mut config = ScenarioConfig::default();
    config.mesh.level = 0;
    config.time.stages = 2;
    config.time.steps = 5;
    config.solver.kind = "gmres".into();
    let sweep = run_condition_sweep(&config).unwrap();
    assert_eq!(sweep.rows.len(), 6 * 2);
    assert!(sweep.all_converged());
    let ctx = build_context(&radau_tableau(2).unwrap(), 5, config.time.final_time).unwrap();
    let builder = SystemBuilder::new(build_space(&config.mesh, 0).unwrap(), QuadratureConfig::default()).unwrap();
    for row in sweep.rows.iter().filter(|r| r.mirrored) {
        let s = ctx.points[row.l].frequencies[row.stage];
        assert!((s.re - row.s_re).abs() < 1e-9 * s.norm() && (s.im - row.s_im).abs() < 1e-9 * s.norm());
        let direct = condition_report(&builder.build(s, ImpedanceKind::Absorbing, 0.1).unwrap()).unwrap();
        assert!((direct.condition - row.condition).abs() < 1e-6 * direct.condition, "{row:?} vs {direct:?}");
    }
}

#[test]
fn torus_sweep_respects_the_dense_limit() {
    let mut config = ScenarioConfig::default();
    config.mesh.shape = Shape::Torus;
    config.mesh.level = 2;
    assert!(run_condition_sweep(&config).is_err());
}

#[test]
fn field_series_round_trips_through_csv() {
    let mut config = ScenarioConfig::default();
    config.mesh.level = 0;
    config.evaluation.points = vec![[2.0, 0.0, 0.0], [0.0, -1.5, 1.5]];
    let imp = Impedance { kind: ImpedanceKind::ThinLayer, delta: 1.0 };
    let run = run_scattering(&config, 0, 8, &[imp]).unwrap().remove(0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    run.fields.write(&path).unwrap();
    let back = FieldSeries::read(&path).unwrap();
    assert_eq!(back.values.len(), 2);
    assert_eq!(back.max_error(&run.fields).unwrap(), 0.0);
    assert!(run.fields.peak() > 0.0);
    std::fs::write(&path, "point,step,t\n0,0,nope\n").unwrap();
    assert!(FieldSeries::read(&path).is_err());
}
