import hashlib
import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bnlab.cli import RunManifest, format_report, load_manifest, main
from bnlab.config import ConfigSyntaxError, GridSpec, RunConfig, parse_config
from bnlab.errors import ConfigurationError


# config parsing

def test_parse_defaults_and_comments():
    cfg = parse_config("# comment\nN = 5   # dimension\n\nstages = reduce, constants\n")
    assert cfg.N == 5 and cfg.stages == ("reduce", "constants")
    assert cfg.eps_grid.eps() == pytest.approx(list(__import__("numpy").geomspace(0.1, 0.001, 9)))


@pytest.mark.parametrize("text, line, fragment", [
    ("N = 5\nrho = -1\n", 2, "rho must be positive"),
    ("N = 5\n\nfoo = 1\n", 3, "unknown key"),
    ("N = six\n", 1, "bad value for N"),
    ("N = 5\nN = 4\n", 2, "duplicate key"),
    ("just text\n", 1, "expected 'key = value'"),
    ("stages = reduce, fly\n", 1, "unknown stage"),
    ("N = 5\neps_grid = mu 1e-2 1e-6 7\n", 2, "only meaningful for N=4"),
    ("domain = ball\nsides = 3\n", 2, "sides only applies"),
    ("probes = 1e-2, 4e-3, 2e-3\n", 1, "halvings"),
])
def test_parse_errors_are_line_anchored(text, line, fragment):
    with pytest.raises(ConfigSyntaxError, match=fragment) as ei:
        parse_config(text, "cfg.txt")
    assert ei.value.line == line
    assert str(ei.value).startswith(f"cfg.txt:{line}: ")


def test_grid_spec():
    g = GridSpec.parse("list 0.1, 0.05 0.02")
    assert g.eps() == [0.1, 0.05, 0.02]
    assert GridSpec.parse("0.1 0.05").kind == "list"
    mu = GridSpec.parse("mu 1e-2 1e-6 3")
    assert mu.eps(12.0) == pytest.approx([12 / 4.60517018598809, 12 / 9.210340371976182, 12 / 13.815510557964274])
    with pytest.raises(ConfigurationError):
        mu.eps()
    with pytest.raises(ValueError):
        GridSpec.parse("geom 0.1 0.01")
    assert GridSpec.parse(str(mu)) == mu


@settings(max_examples=30, deadline=None)
@given(N=st.sampled_from([4, 5]), kappa=st.integers(1, 4), rho=st.floats(1e-3, 0.5), seed=st.integers(0, 2**31),
       stages=st.lists(st.sampled_from(["eigens", "constants", "reduce", "shoot"]), min_size=1, unique=True))
def test_config_roundtrip(N, kappa, rho, seed, stages):
    cfg = RunConfig(N=N, kappa=kappa, rho=rho, seed=seed, stages=tuple(stages))
    back = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg and back.digest() == cfg.digest()
    text = "\n".join(f"{k} = {', '.join(map(str, v)) if isinstance(v, list) else v}"
                     for k, v in cfg.to_dict().items() if k not in ("sides", "output_dir"))
    assert parse_config(text) == cfg


def test_overrides():
    cfg = RunConfig(stages=("reduce", "constants", "shoot"))
    o = cfg.with_overrides(seed=7, stages=["shoot", "constants"])
    assert o.seed == 7 and o.stages == ("constants", "shoot")


# command line

def _write(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _tree_hash(d: Path):
    h = hashlib.sha256()
    for f in sorted(d.rglob("*")):
        h.update(str(f.relative_to(d)).encode())
        if f.is_file():
            h.update(f.read_bytes())
            h.update(str(f.stat().st_mtime_ns).encode())
    return h.hexdigest()


def _only_run(root: Path):
    runs = [d for d in root.iterdir() if d.is_dir()]
    assert len(runs) == 1
    return runs[0]


def test_minimal_run_and_report(tmp_path, capsys):
    cfg = _write(tmp_path, "domain = ball\nN = 5\nkappa = 1\nm = 1\nk = 1\nstages = eigens, reduce\n")
    root = tmp_path / "out"
    assert main(["run", cfg, "--output-root", str(root)]) == 0
    run = _only_run(root)
    man = load_manifest(run)
    assert man.status == "complete" and man.reduced["N"] == 5
    assert (run / "reduced.csv").exists() and (run / "eigens.csv").exists()
    assert RunManifest.from_json(man.to_json()) == man
    before = _tree_hash(run)
    capsys.readouterr()
    assert main(["report", str(run)]) == 0
    out = capsys.readouterr().out
    assert "reduced: N=5" in out and "stationarity" in out and "PASS" in out
    assert _tree_hash(run) == before


def test_rerun_is_bit_identical(tmp_path, monkeypatch):
    cfg = _write(tmp_path, "N = 5\nstages = reduce, residual-sweep\neps_grid = list 0.1 0.05 0.025\n"
                           "samples = 20000\nrel_tol = 0.2\n")
    monkeypatch.setenv("BNLAB_OUTPUT_ROOT", str(tmp_path / "env"))
    assert main(["run", cfg]) in (0, 1)
    assert main(["run", cfg, "--workers", "2"]) in (0, 1)
    runs = sorted((tmp_path / "env").iterdir())
    assert len(runs) == 2
    for name in ("residual.csv", "reduced.csv"):
        assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes()
    a, b = (json.loads((r / "manifest.json").read_text()) for r in runs)
    for m in (a, b):
        m.pop("timings")
    assert a == b


def test_m_exceeding_multiplicity_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, "N = 5\nkappa = 1\nm = 2\n")
    root = tmp_path / "out"
    assert main(["run", cfg, "--output-root", str(root)]) == 2
    assert "multiplicity" in capsys.readouterr().err
    assert main(["validate", cfg]) == 2


def test_schema_error_exit_2_no_run_dir(tmp_path, capsys):
    cfg = _write(tmp_path, "N = 5\nrho = -0.1\n")
    root = tmp_path / "out"
    assert main(["run", cfg, "--output-root", str(root)]) == 2
    assert f"{cfg}:2:" in capsys.readouterr().err
    assert not root.exists()


def test_stage_failure_exit_3_keeps_partial(tmp_path, capsys):
    # eps far below the usable window for N=4 underflows mu
    cfg = _write(tmp_path, "N = 4\nstages = reduce, residual-sweep\neps_grid = list 0.01 0.005 0.002\n")
    root = tmp_path / "out"
    assert main(["run", cfg, "--output-root", str(root)]) == 3
    assert "residual-sweep" in capsys.readouterr().err
    man = load_manifest(_only_run(root))
    assert man.status == "partial" and man.failed_stage == "residual-sweep"
    assert man.reduced is not None and man.reduced["N"] == 4


def test_validate_messages(tmp_path, capsys):
    assert main(["validate", _write(tmp_path, "N = 5\n")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("ok") and "n_kappa=1" in out
    assert main(["validate", _write(tmp_path, "N = 4\n", "n4.cfg")]) == 0
    assert "eps window" in capsys.readouterr().out
    assert main(["validate", _write(tmp_path, "N = 5\nk = 99\n", "k.cfg")]) == 2
    assert "n_kappa=1" in capsys.readouterr().err
    assert main(["validate", _write(tmp_path, "N = 5\nrho = -1\n", "r.cfg")]) == 2


def test_report_errors(tmp_path):
    assert main(["report", str(tmp_path)]) == 2
    (tmp_path / "manifest.json").write_text("{not json")
    assert main(["report", str(tmp_path)]) == 2


def test_format_report_shows_targets():
    man = RunManifest(config={}, version="x", seed=0, status="complete",
                      checks=[{"name": "slope(|E|)", "value": 1.74, "target": "1.75 +- 0.15", "passed": True}])
    assert "slope(|E|) = 1.74 target 1.75 +- 0.15 PASS" in format_report(man)
