"""Sample-parallel workflows on simulated or local workers, with machine-type sizing."""

import json
from fractions import Fraction
from pathlib import Path

from . import _core
from ._core import GflowError

__all__ = [
    "GflowError",
    "compare_costs",
    "create",
    "fetch",
    "machine_shape",
    "optimize",
    "parse_workflow",
    "plan",
    "project_record",
    "recommend",
    "render_money",
    "render_percent",
    "run",
    "sample_catalog_path",
    "status",
    "teardown",
]


def sample_catalog_path():
    return Path(__file__).parent / "data" / "sample_catalog.json"


def _num(value):
    # Floats go through their shortest repr so 7.34 stays 7.34.
    return repr(value) if isinstance(value, float) else str(value)


def _config(**options):
    doc = {k: (str(v) if isinstance(v, Path) else v) for k, v in options.items() if v is not None}
    doc.setdefault("catalog", str(sample_catalog_path()))
    return json.dumps(doc)


def machine_shape(name):
    """(series, family, vcpu, mem_gb) for a `<series>-<family>-<vcpu>` name."""
    series, family, vcpu, mem = _core.parse_machine_name(name)
    return series, family, vcpu, Fraction(mem)


def compare_costs(baseline, optimized):
    """Percent reduction of `optimized` against `baseline`, exact."""
    return Fraction(_core.compare_costs(_num(baseline), _num(optimized)))


def render_percent(percent):
    return _core.render_percent(_num(percent))


def render_money(amount, currency="USD"):
    return _core.render_money(_num(amount), currency)


def parse_workflow(text, name="workflow"):
    """Canonical source text of a workflow; raises GflowError on a language error."""
    return _core.parse_workflow(text, name)


def plan(workflow, sample="SAMPLE", **config):
    return json.loads(_core.plan(Path(workflow), sample, _config(**config)))


def recommend(profile, catalog=None, headroom=1.1):
    """profile: {rule: {peak_cpu, peak_mem_gb, peak_disk_gb}} -> {"headroom", "rules": {...}}."""
    peaks = {rule: {k: _num(v) for k, v in p.items()} for rule, p in profile.items()}
    path = Path(catalog) if catalog else sample_catalog_path()
    return json.loads(_core.recommend(json.dumps(peaks), path, _num(headroom)))


def create(workflow, project=None, **config):
    return json.loads(_core.create(Path(workflow), _config(**config), project))


def optimize(project, **config):
    return json.loads(_core.optimize(project, _config(**config)))


def run(project, optparams=None, rerun_tested=False, **config):
    return json.loads(_core.run(project, _config(**config), Path(optparams) if optparams else None, rerun_tested))


def teardown(project, store_root, all=False):
    buckets, record_kept = _core.teardown(Path(store_root), project, all)
    return {"buckets_removed": buckets, "record_kept": record_kept}


def project_record(project, store_root):
    return json.loads(_core.project_record(Path(store_root), project))


def status(job_id, store_root):
    return _core.status(Path(store_root), job_id)


def fetch(uri, dst, store_root):
    """No-clobber copy of `store://bucket[/prefix]` into `dst`; returns (copied, skipped)."""
    return tuple(_core.fetch(Path(store_root), uri, Path(dst)))
