import json
import os
from pathlib import Path

import numpy as np
import pytest

import ewfsqd

FIXTURES = Path(os.environ["EWFSQD_FIXTURE_DIR"])
REFS = json.loads((FIXTURES / "references.json").read_text())


def test_fci_matches_reference():
    ham = ewfsqd.read_fcidump(str(FIXTURES / "h4_chain.fcidump"))
    assert (ham.norb, ham.n_alpha, ham.n_beta) == (4, 2, 2)
    e, gamma = ewfsqd.fci(ham)
    assert abs(e - REFS["h4_chain"]["e_fci"]) < 1e-8
    assert gamma.shape == (4, 4)
    assert abs(np.trace(gamma) - 4.0) < 1e-10
    assert ham.eri(0, 1, 2, 3) == ham.eri(1, 0, 3, 2)


def test_sampled_sqd_is_variational():
    ham = ewfsqd.read_fcidump(str(FIXTURES / "h6_chain.fcidump"))
    counts = ewfsqd.lucj_samples(ham, shots=20000, seed=3)
    assert sum(counts.values()) == 20000
    assert all(len(b) == 12 for b in counts)
    out = ewfsqd.sqd(ham, counts, seed=1)
    e_fci = REFS["h6_chain"]["e_fci"]
    assert REFS["h6_chain"]["e_hf"] >= out["e_sqd"] >= out["e_ext"] >= e_fci - 1e-10
    assert out["full_dim"] == 400
    assert out["sqd_dim"] <= out["ext_dim"] <= out["full_dim"]


def test_dimensions_and_dispatch():
    assert ewfsqd.sector_dimension(12, 6, 6) == 853776
    assert ewfsqd.dispatch_solver(14) == "fci"
    assert ewfsqd.dispatch_solver(15) == "sqd"


def test_pipeline_and_config(tmp_path):
    cfg = {"bundle": str(FIXTURES / "h4_chain.bundle"), "workdir": str(tmp_path / "w")}
    full = ewfsqd.validate_config(cfg)
    assert full["eta"] == 1e-5 and full["dispatch_threshold"] == 15
    rep = ewfsqd.run(cfg)
    assert len(rep["a"]["clusters"]) == 4
    assert abs(rep["a"]["energy"] - REFS["h4_chain"]["e_fci"]) < 1e-3
    with pytest.raises(ewfsqd.ValidationError):
        ewfsqd.validate_config({"etta": 1})
    with pytest.raises(ewfsqd.IoError):
        ewfsqd.run({"bundle": str(tmp_path / "none.bundle"), "workdir": str(tmp_path / "x")})


def test_relative_energy():
    de, table = ewfsqd.relative_energy(-7354.1372, -7354.2256, "unfolded", "folded")
    assert de == pytest.approx(55.47, abs=5e-3)
    assert "E_folded [Eh]" in table
