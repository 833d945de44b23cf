import shutil
import subprocess
from pathlib import Path

import pytest

from aopfigures import FigureJob, SchemaError, render
from aopfigures.cli import main

SUMMARY = "policy,n,seed,avg_aop_ratio_of_sums_ms,avg_aop_mean_of_ratios_ms,avg_cycle_ms"

VALID = {
    "lambda_trace": "iteration,lambda,avg_cycle_ms\n1,0.0,875.0\n2,0.325,883.5\n3,0.48,1134.9\n",
    "ratio": "n_prefix,q_bar_ms,q_tilde_ms,ratio\n1,1500.0,1500.0,1.0\n10,1550.0,1470.0,1.054\n100,1565.0,1475.0,1.061\n",
    "bench_bar": SUMMARY + "\noptimal,1000,42,1565.0,1475.0,1219.0\naezw,1000,42,2253.0,1823.0,1215.0\nalcw,1000,42,1600.0,1600.0,1200.0\n",
    "sweep_tx": "medium_tx_ms," + SUMMARY + "\n600.0,optimal,100,1,1500.0,1283.0,1202.0\n600.0,aezw,100,1,1375.0,1124.0,749.0\n700.0,optimal,100,1,1551.0,1333.0,1194.0\n700.0,aezw,100,1,1594.0,1308.0,866.0\n",
    "sweep_cycles": "cycles_gigacycles," + SUMMARY + "\n1.0,optimal,100,1,1565.0,1475.0,1219.0\n2.0,optimal,100,1,2310.0,1896.0,1278.0\n1.0,aezw,100,1,2253.0,1823.0,1215.0\n2.0,aezw,100,1,2311.0,1898.0,1266.0\n",
    "policy_3d": (
        "state,prev_age_ms,prev_wait_ms,cur_origin,channel,cur_age_ms,wait_ms,origin\n"
        "0,1000.0,0.0,edge,good,550.0,0.0,edge\n"
        "1,1000.0,200.0,edge,good,550.0,200.0,edge\n"
        "2,1000.0,0.0,local,medium,1000.0,0.0,local\n"
        "3,1000.0,400.0,local,medium,1000.0,400.0,local\n"
    ),
}


def write_input(tmp_path: Path, figure_id: str, text: "str | None" = None) -> Path:
    path = tmp_path / f"{figure_id}.csv"
    path.write_text(text if text is not None else VALID[figure_id])
    return path


@pytest.mark.parametrize("figure_id", sorted(VALID))
def test_render_produces_nonempty_image(tmp_path, figure_id):
    source = write_input(tmp_path, figure_id)
    output = tmp_path / f"{figure_id}.png"
    render(FigureJob(figure_id, (source,), output))
    assert output.exists()
    assert output.stat().st_size > 0


@pytest.mark.parametrize("figure_id", sorted(VALID))
def test_missing_column_fails_without_output(tmp_path, figure_id):
    lines = VALID[figure_id].splitlines()
    header = lines[0].split(",")
    dropped = ",".join(header[:-1])
    body = "\n".join(",".join(line.split(",")[:-1]) for line in lines[1:])
    source = write_input(tmp_path, figure_id, dropped + "\n" + body + "\n")
    output = tmp_path / "out.png"
    with pytest.raises(SchemaError, match="columns"):
        render(FigureJob(figure_id, (source,), output))
    assert not output.exists()


def test_empty_input_fails_without_output(tmp_path):
    source = write_input(tmp_path, "ratio", VALID["ratio"].splitlines()[0] + "\n")
    output = tmp_path / "out.png"
    with pytest.raises(SchemaError, match="no data rows"):
        render(FigureJob("ratio", (source,), output))
    assert not output.exists()


def test_missing_file_fails(tmp_path):
    with pytest.raises(SchemaError, match="does not exist"):
        render(FigureJob("ratio", (tmp_path / "absent.csv",), tmp_path / "out.png"))


def test_unknown_figure_id(tmp_path):
    with pytest.raises(SchemaError, match="unknown figure id"):
        FigureJob("donut", (tmp_path / "x.csv",), tmp_path / "out.png")


def test_single_input_figures_reject_multiple(tmp_path):
    a = write_input(tmp_path, "ratio")
    with pytest.raises(SchemaError, match="exactly one"):
        FigureJob("ratio", (a, a), tmp_path / "out.png")


def test_lambda_trace_accepts_multiple_inputs(tmp_path):
    a = write_input(tmp_path, "lambda_trace")
    b = tmp_path / "second.csv"
    b.write_text(VALID["lambda_trace"])
    output = tmp_path / "out.png"
    render(FigureJob("lambda_trace", (a, b), output))
    assert output.stat().st_size > 0


def test_non_numeric_value_fails(tmp_path):
    bad = VALID["ratio"].replace("1550.0", "oops")
    source = write_input(tmp_path, "ratio", bad)
    with pytest.raises(SchemaError, match="non-numeric"):
        render(FigureJob("ratio", (source,), tmp_path / "out.png"))


def test_cli_success_and_schema_failure(tmp_path):
    source = write_input(tmp_path, "bench_bar")
    output = tmp_path / "bench.png"
    assert main(["bench_bar", str(source), "--out", str(output)]) == 0
    assert output.stat().st_size > 0

    broken = tmp_path / "broken.csv"
    broken.write_text("policy,avg_cycle_ms\nx,1.0\n")
    assert main(["bench_bar", str(broken), "--out", str(tmp_path / "b.png")]) == 1
    assert not (tmp_path / "b.png").exists()
    assert main(["not-a-figure", str(source), "--out", str(output)]) == 1


@pytest.mark.skipif(shutil.which("aop") is None, reason="aopsolver CLI not installed")
def test_renders_real_solver_outputs(tmp_path):
    """End-to-end: produce CSVs through the solver CLI, render every figure."""
    def aop(*argv):
        proc = subprocess.run(
            ("aop",) + argv, capture_output=True, text=True, timeout=600
        )
        assert proc.returncode == 0, proc.stderr
        return proc

    fast = ("--set", "stop_tol=1e-3", "--set", "max_outer_iters=3000")
    out = tmp_path
    aop("solve", "--out", str(out / "solve"), "--step-rule", "both", *fast)
    aop("ratio-check", "--out", str(out / "ratio"), "--n-updates", "20000", *fast)
    aop("bench", "--out", str(out / "bench"), "--n-updates", "20000", *fast)
    aop("policy-dump", "--out", str(out / "dump"), *fast)
    aop("sweep-tx", "--out", str(out / "tx"), "--n-updates", "5000", "--workers", "2", *fast)
    aop("sweep-cycles", "--out", str(out / "cyc"), "--n-updates", "5000", "--workers", "2", *fast)

    jobs = [
        ("lambda_trace", (out / "solve" / "lambda_trace_harmonic.csv",
                          out / "solve" / "lambda_trace_scaled.csv")),
        ("ratio", (out / "ratio" / "ratio.csv",)),
        ("bench_bar", (out / "bench" / "bench.csv",)),
        ("sweep_tx", (out / "tx" / "sweep_tx.csv",)),
        ("sweep_cycles", (out / "cyc" / "sweep_cycles.csv",)),
        ("policy_3d", (out / "dump" / "policy_star.csv",)),
    ]
    for figure_id, inputs in jobs:
        output = out / f"{figure_id}.png"
        render(FigureJob(figure_id, tuple(inputs), output))
        assert output.stat().st_size > 0, figure_id
