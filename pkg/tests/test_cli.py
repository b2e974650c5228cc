import pytest

from stefanbench.cli import main
from stefanbench.config import ConfigError, parse_config
from stefanbench.experiments import SweepRecord, read_records


def test_mesh_check_prints_counts(capsys):
    assert main(["mesh", "--level", "2", "--check"]) == 0
    assert capsys.readouterr().out.strip() == "224 352 129"


def test_mesh_dump_and_reload(tmp_path, capsys):
    path = tmp_path / "m1.txt"
    assert main(["mesh", "--level", "1", "--dump", str(path), "--load", str(path)]) == 0
    assert path.exists()
    out = capsys.readouterr().out
    assert "matches: True" in out


def test_mesh_invalid_level_is_config_error():
    assert main(["mesh", "--level", "9", "--check"]) == 2


def test_run_missing_config_exits_2(capsys):
    assert main(["run", "--config", "/nonexistent/x.cfg"]) == 2
    assert "config error" in capsys.readouterr().err


def test_run_bad_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("mesh.size=3\n")
    assert main(["run", "--config", str(cfg)]) == 2


def test_run_writes_outputs(tmp_path, capsys):
    outdir = tmp_path / "out"
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "mesh.level=1\n"
        "time.steps=5\n"
        "time.T=0.5\n"
        "solver.strategy=l_scheme\n"
        "run.realisations=2\n"
        "noise.mode=multiplicative_zeta\n"
        "noise.intensity=0.5\n"
        f"output.dir={outdir}\n"
    )
    assert main(["run", "--config", str(cfg)]) == 0
    assert (outdir / "final_r0.csv").exists()
    assert (outdir / "final_r1.csv").exists()
    report = (outdir / "report_r0.csv").read_text().splitlines()
    assert report[0] == "step,iterations,final_residual,assembly_count,factorisation_count,wall_ns"
    assert len(report) == 6
    first = (outdir / "final_r0.csv").read_text().splitlines()
    assert first[0] == "vertex_index,x,y,value"
    assert len(first) == 38  # 37 vertices


def test_run_audit_dumps_noise_fields(tmp_path):
    outdir = tmp_path / "audit"
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "mesh.level=1\ntime.steps=3\ntime.T=0.3\nsolver.strategy=l_scheme\n"
        "noise.mode=multiplicative_zeta\nnoise.intensity=0.5\n"
        f"output.dir={outdir}\noutput.audit=1\n"
    )
    assert main(["run", "--config", str(cfg)]) == 0
    assert (outdir / "noise_r0_step1.csv").exists()
    assert (outdir / "noise_r0_step3.csv").exists()


def test_run_strict_flags_nonconvergence(tmp_path):
    cfg = tmp_path / "strict.cfg"
    cfg.write_text(
        "mesh.level=1\ntime.steps=5\ntime.T=0.5\nsolver.strategy=l_scheme\n"
        "solver.max_iterations=1\nsolver.C_tol=10000\n"
    )
    assert main(["run", "--config", str(cfg), "--strict"]) == 1
    assert main(["run", "--config", str(cfg)]) == 0


def test_sweep_writes_csv(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code = main([
        "sweep", "--strategies", "newton", "--levels", "1", "--steps", "10",
        "--ctol", "100,1000", "--ceps", "1", "--out", str(out),
    ])
    assert code == 0
    records = read_records(SweepRecord, out)
    assert len(records) == 2
    header = out.read_text().splitlines()[0]
    assert header == (
        "strategy,mesh_level,h,dt,C_tol,C_eps,tol,epsilon,"
        "E_zeta,E_grad_zeta,iters_total,flagged_steps,cpu_ns_min"
    )


def test_sweep_unknown_strategy_exits_2(tmp_path):
    assert main(["sweep", "--strategies", "bogus", "--out", str(tmp_path / "x.csv")]) == 2


def test_bench_writes_csv(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    code = main([
        "bench", "--strategies", "l_scheme", "--levels", "1", "--steps", "5",
        "--repetitions", "2", "--out", str(out),
    ])
    assert code == 0
    header = out.read_text().splitlines()[0]
    assert header == "strategy,sn,mesh_level,dt,cpu_ns_min,cpu_ns_cumulative"


def test_verify_module_passes(capsys):
    assert main(["verify", "--module", "mesh", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert "[pass]" in out and "properties passed" in out


def test_config_defaults_and_unknown_keys():
    cfg = parse_config("mesh.level=3\nnoise.mode=multiplicative_zeta\n")
    assert cfg.spec.problem == "stochastic_homogeneous"
    cfg = parse_config("mesh.level=3\n")
    assert cfg.spec.problem == "exact_dirichlet"
    with pytest.raises(ConfigError):
        parse_config("bogus.key=1\n")
    with pytest.raises(ConfigError):
        parse_config("mesh.level=abc\n")
    with pytest.raises(ConfigError):
        parse_config("just some text\n")
