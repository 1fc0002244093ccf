from fractions import Fraction
from pathlib import Path

import pytest

import gflow

EXAMPLES = Path(__file__).resolve().parents[2] / "examples_wf"


def test_machine_shapes():
    assert gflow.machine_shape("e2-standard-16") == ("e2", "standard", 16, 64)
    assert gflow.machine_shape("n2-highmem-16")[2:] == (16, 128)
    with pytest.raises(gflow.GflowError, match="UnsupportedSeries"):
        gflow.machine_shape("z9-standard-4")


def test_compare_costs():
    pct = gflow.compare_costs(7.34, 1.72)
    assert abs(float(pct) - 76.57) < 0.01
    assert gflow.render_percent(pct) == "77%"
    assert gflow.render_money(Fraction(3, 25)) == "$0.12"
    with pytest.raises(gflow.GflowError, match="NonpositiveBaseline"):
        gflow.compare_costs(0, 1)


def test_parse_and_plan():
    text = (EXAMPLES / "fastq_to_bam.smk").read_text()
    assert "rule refine:" in gflow.parse_workflow(text)
    with pytest.raises(gflow.GflowError, match="UnknownKeyword"):
        gflow.parse_workflow("rule a:\n    gpu: 1\n    shell: \"x\"\n")
    doc = gflow.plan(EXAMPLES / "fastq_to_bam.smk", sample="S7")
    assert doc["rules"] == 3
    assert [s["rule"] for s in doc["plan"]["steps"]] == ["download", "align", "refine"]


def test_recommend_case_two():
    rec = gflow.recommend({"call": {"peak_cpu": 3.5, "peak_mem_gb": 12, "peak_disk_gb": 180}})
    assert rec["rules"]["call"] == {"machine": "e2-standard-4", "disk_gb": 200, "disk_class": "balanced"}


def test_sim_lifecycle(tmp_path):
    config = dict(
        backend="sim",
        store_root=tmp_path / "store",
        samples=EXAMPLES / "rnaseq_samples.txt",
        workload=EXAMPLES / "rnaseq_workload.json",
    )
    env = gflow.create(EXAMPLES / "rnaseq_one_step.smk", project="rna", **config)
    assert env["project_id"] == "rna"
    with pytest.raises(gflow.GflowError, match="AlreadyExists"):
        gflow.create(EXAMPLES / "rnaseq_one_step.smk", project="rna", **config)
    opt = gflow.optimize("rna", **config)
    assert opt["recommendation"]["rules"]["quantify"]["machine"] == "e2-standard-4"
    result = gflow.run("rna", optparams=opt["optparams"], **config)
    assert result["exhausted"] == []
    assert len(result["cost"]["samples"]) == 17
    assert result["cost"]["comparison"]["reduction_display"] == "82%"
    assert "Succeeded" in gflow.status(result["job_id"], tmp_path / "store")
    copied, skipped = gflow.fetch("store://rna-results", tmp_path / "out", tmp_path / "store")
    assert (copied, skipped) == (20, 0)
    assert gflow.fetch("store://rna-results", tmp_path / "out", tmp_path / "store") == (0, 20)
    removed = gflow.teardown("rna", tmp_path / "store")
    assert removed["record_kept"]
    assert "final_cost" in gflow.project_record("rna", tmp_path / "store")
