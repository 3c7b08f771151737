import json
import os
import subprocess
import sys

import numpy as np
import pytest

from brisk import cache
from brisk.cli import main
from brisk.gaussian import equicorrelated_model, tail_probability

BASE = {
    "schema_version": 1,
    "model": {"equicorr": {"dim": 2, "rho": 0.5}},
    "barrier": [1.0, 0.8],
    "levels": [2.0, 4.0],
    "budgets": {"n_steps": 256, "n_paths": 2000, "tail_budget": 20000, "ia_paths": 1000, "ia_lambda": 5.0},
    "master_seed": 3,
}


def write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_qp_two_dim_examples(tmp_path, capsys):
    code, out, _ = run(capsys, "qp", write(tmp_path, BASE), "--json")
    assert code == 0
    sol = json.loads(out)["solution"]
    assert sol["I"] == [1, 2]
    np.testing.assert_allclose(sol["lambda"], [0.8, 0.4], atol=1e-12)
    doc = dict(BASE, model={"mixing": [[1, 0], [0, 1]]}, barrier=[1, 1])
    code, out, _ = run(capsys, "qp", write(tmp_path, doc))
    assert code == 0 and "lambda: [1.0, 1.0]" in out


def test_exit_codes(tmp_path, capsys):
    assert run(capsys, "qp", str(tmp_path / "missing.json"))[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "qp", str(bad))[0] == 2
    code, _, err = run(capsys, "qp", write(tmp_path, dict(BASE, n_path=5)))
    assert code == 2 and "n_path" in err
    code, _, err = run(capsys, "qp", write(tmp_path, dict(BASE, budgets={"n_path": 5})))
    assert code == 2 and "budgets" in err
    code, _, err = run(capsys, "qp", write(tmp_path, dict(BASE, barrier=[-1.0, -1.0])))
    assert code == 3 and "InvalidBarrier" in err
    code, _, err = run(capsys, "qp", write(tmp_path, dict(BASE, model={"equicorr": {"dim": 2, "rho": 1.5}})))
    assert code == 3
    code, _, _ = run(capsys, "validate", write(tmp_path, dict(BASE, levels=[2.0, 2.1])))
    assert code == 4
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_io_error_exit(tmp_path, capsys, monkeypatch):
    blocker = tmp_path / "not-a-dir"
    blocker.write_text("x")
    monkeypatch.setenv("BRISK_CACHE_DIR", str(blocker / "sub"))
    code, _, err = run(capsys, "asym", write(tmp_path, BASE))
    assert code == 5 and "I/O" in err


def test_parse_messages_name_field(tmp_path, capsys):
    cases = [(dict(BASE, levels=[4.0, 2.0]), "levels"), (dict(BASE, schema_version=2), "schema_version"),
             (dict(BASE, barrier=[1.0]), "barrier"), (dict(BASE, master_seed=-1), "master_seed"),
             (dict(BASE, trend={"kind": "gamma"}), "trend.kind")]
    for doc, field in cases:
        code, _, err = run(capsys, "qp", write(tmp_path, doc))
        assert code == 2 and field in err
    (tmp_path / "nan.json").write_text(json.dumps(BASE).replace("0.8", "NaN"))
    assert run(capsys, "qp", str(tmp_path / "nan.json"))[0] == 2


def test_simulate_csv(tmp_path, capsys):
    doc = dict(BASE, model={"mixing": [[1.0]]}, barrier=[1.0], levels=[1.0],
               budgets={"n_steps": 4096, "n_paths": 20000})
    path = write(tmp_path, doc)
    code, out, _ = run(capsys, "simulate", path)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "u,psi_hat,stderr,n_paths,n_steps,seed"
    row = lines[1].split(",")
    assert abs(float(row[1]) - 0.3173) < 0.015
    csv = tmp_path / "out.csv"
    assert run(capsys, "simulate", path, "--csv", str(csv))[0] == 0
    assert csv.read_text() == out
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".tmp-")]


def test_levels_and_seed_override(tmp_path, capsys):
    path = write(tmp_path, BASE)
    _, out, _ = run(capsys, "simulate", path, "--levels", "1,1.5", "--seed", "11")
    rows = [l.split(",") for l in out.splitlines()[1:]]
    assert [r[0] for r in rows] == ["1.0", "1.5"] and rows[0][5] == "11"
    assert run(capsys, "simulate", path, "--levels", "1,x")[0] == 2


def test_determinism_all_commands(tmp_path, capsys):
    path = write(tmp_path, dict(BASE, levels=[2.0, 4.0]))
    for cmd in (["qp"], ["qp", "--json"], ["simulate"], ["simulate", "--json"], ["asym"], ["asym", "--json"],
                ["tail"], ["validate"], ["validate", "--json"]):
        first = run(capsys, cmd[0], path, *cmd[1:])
        cache.clear()
        second = run(capsys, cmd[0], path, *cmd[1:])
        assert first[0] == 0 and first[1] == second[1], cmd


def test_timing_flag(tmp_path, capsys):
    _, out, _ = run(capsys, "tail", write(tmp_path, BASE), "--json", "--timing")
    assert all("wall_time_ms" in r for r in json.loads(out)["rows"])
    _, out, _ = run(capsys, "tail", write(tmp_path, BASE), "--json")
    assert not any("wall_time_ms" in r for r in json.loads(out)["rows"])


def test_asym_cache_cycle(tmp_path, capsys):
    path = write(tmp_path, BASE)
    code, first, err = run(capsys, "asym", path)
    assert code == 0 and "cache hit" not in err
    _, second, err = run(capsys, "asym", path)
    assert "cache hit" in err and second == first
    _, listing, _ = run(capsys, "cache", "list")
    assert listing.strip().endswith("-ia.json")
    _, msg, _ = run(capsys, "cache", "clear")
    assert msg.startswith("removed 1")
    _, third, err = run(capsys, "asym", path)
    assert "cache hit" not in err and third == first


def test_corrupted_cache_entry(tmp_path, capsys):
    path = write(tmp_path, BASE)
    _, first, _ = run(capsys, "asym", path)
    (entry,) = cache.entries()
    entry.write_text("{garbage")
    code, again, err = run(capsys, "asym", path)
    assert code == 0 and "warning" in err and again == first
    assert json.loads(entry.read_text())["estimate"] > 0


def test_stale_cache_entry_ignored(tmp_path, capsys):
    path = write(tmp_path, BASE)
    run(capsys, "asym", path)
    (entry,) = cache.entries()
    rec = json.loads(entry.read_text())
    rec["tool_version"] = "0.0.0"
    rec["estimate"] = 123.0
    entry.write_text(json.dumps(rec))
    _, out, err = run(capsys, "asym", path)
    assert "cache hit" not in err and "123.0" not in out


def test_cache_path(capsys, tmp_path):
    _, out, _ = run(capsys, "cache", "path")
    assert out.strip() == os.environ["BRISK_CACHE_DIR"]


def test_asym_single_active_and_tail_column(tmp_path, capsys):
    doc = dict(BASE, barrier=[1.0, 0.3], budgets=dict(BASE["budgets"], ia_paths=4000, ia_lambda=20.0))
    path = write(tmp_path, doc)
    _, out, _ = run(capsys, "asym", path, "--json")
    rows = json.loads(out)["rows"]
    assert all(r["lambda_product"] == pytest.approx(1.0) for r in rows)
    assert abs(rows[0]["ia"] - 2.0) < 3 * rows[0]["ia_stderr"] + 0.06
    _, tail_out, _ = run(capsys, "tail", path, "--json")
    assert [r["tail"] for r in json.loads(tail_out)["rows"]] == [r["tail"] for r in rows]
    model = equicorrelated_model(2, 0.5)
    assert rows[-1]["tail"] == tail_probability(model, [4.0, 1.2], 20000, 3).point


def test_asym_bernoulli(tmp_path, capsys):
    doc = dict(BASE, model={"mixing": [[1, 0], [0, 1]]}, barrier=[1, 1], levels=[3.0, 5.0],
               trend={"kind": "bernoulli", "p": [0.5, 0.5]})
    _, out, _ = run(capsys, "asym", write(tmp_path, doc), "--json")
    last = json.loads(out)["rows"][-1]
    from brisk.gaussian import univariate_phibar
    assert last["tail"] / univariate_phibar(5.0) ** 2 == pytest.approx(0.25, rel=0.05)


def test_validate_exact_1d(tmp_path, capsys):
    doc = {"schema_version": 1, "model": {"mixing": [[1.0]]}, "barrier": [1.0], "levels": [1.0, 2.0],
           "trend": {"kind": "point_mass", "c": [0.5]},
           "budgets": {"n_steps": 4096, "n_paths": 20000}, "master_seed": 4}
    code, out, _ = run(capsys, "validate", write(tmp_path, doc))
    assert code == 0 and out.splitlines()[0].startswith("u,psi_hat,psi_hat_stderr,psi_ref")
    assert out.splitlines()[-1].startswith("verdict: PASS")
    assert ",exact" in out


def test_validate_bad_band(tmp_path, capsys):
    assert run(capsys, "validate", write(tmp_path, BASE), "--band", "1.1,1.2")[0] == 2


def test_entry_point_subprocess(tmp_path):
    path = write(tmp_path, BASE)
    res = subprocess.run([sys.executable, "-m", "brisk.cli", "qp", path], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("a_tilde:")
    res = subprocess.run([sys.executable, "-m", "brisk.cli", "qp", str(tmp_path / "nope.json")],
                         capture_output=True, text=True)
    assert res.returncode == 2
