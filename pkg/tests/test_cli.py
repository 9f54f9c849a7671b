import json
import math

import pytest

from pd_limits.cli import main


def run(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_dickman_csv(capsys):
    rc, out, _ = run(capsys, "dickman", "--tmax", "3")
    assert rc == 0
    rows = dict(line.split(",") for line in out.splitlines()[1:])
    assert float(rows["2"]) == pytest.approx(1 - math.log(2), abs=1e-10)


def test_gtheta_json_has_null_at_origin(capsys):
    rc, out, _ = run(capsys, "gtheta", "--theta", "0.5", "--tmax", "2", "--format", "json")
    rec = json.loads(out)
    assert rc == 0 and rec["value"][0] is None and rec["theta"] == 0.5


def test_coeffs(capsys):
    rc, out, _ = run(capsys, "coeffs", "--family", "polynomial-multiset-F2", "--N", "5")
    assert rc == 0
    assert out.splitlines()[-1] == "5,32"
    rc, out, _ = run(capsys, "coeffs", "--family", "permutation", "--phi", "1/2", "--N", "3",
                     "--format", "json")
    assert json.loads(out)["family"]["phi"] == "1/2"


def test_moments(capsys):
    rc, out, _ = run(capsys, "moments", "--n", "10", "--indices", "3,7")
    rec = json.loads(out)
    assert rc == 0 and rec["exact"] == "1/21"
    rc, out, _ = run(capsys, "moments", "--n", "8", "--indices", "1", "--phi", "2", "--brute")
    rec = json.loads(out)
    # Ewens: E C_1 = theta n / (theta + n - 1)
    assert rec["brute_force_matches"] is True and rec["exact"] == "16/9"


def test_sample_reruns_identical(capsys):
    args = ("sample", "--family", "polynomial-selection-F2", "--n", "200", "--replicates",
            "5000", "--seed", "4", "--pad", "3")
    _, a, _ = run(capsys, *args, "--threads", "1")
    _, b, _ = run(capsys, *args, "--threads", "4")
    assert a == b
    assert a.splitlines()[0] == "replicate,L_1,L_2,L_3"
    assert len(a.splitlines()) == 5001


def test_sparse_sample(capsys):
    rc, out, _ = run(capsys, "sample", "--n", "6", "--replicates", "3", "--seed", "1", "--sparse")
    lines = out.splitlines()
    assert rc == 0 and lines[0] == "replicate,i,C_i"
    for r in range(3):
        tot = sum(int(i) * int(c) for rep, i, c in (ln.split(",") for ln in lines[1:])
                  if int(rep) == r)
        assert tot == 6


def test_intensity_json(capsys, tmp_path):
    dest = tmp_path / "i.json"
    rc, _, _ = run(capsys, "intensity", "--n", "200", "--intervals", "0.2:0.5",
                   "--replicates", "2000", "--seed", "1", "--out", str(dest))
    rec = json.loads(dest.read_text())
    assert rc == 0 and rec["n"] == 200 and rec["exact"] is not None
    rc, out, _ = run(capsys, "intensity", "--family", "pd", "--theta", "2",
                     "--intervals", "0.2:0.5", "--replicates", "2000", "--seed", "1",
                     "--format", "csv")
    assert rc == 0 and out.startswith("n,k,intervals")


def test_ks_and_billingsley(capsys):
    rc, out, _ = run(capsys, "ks", "--family", "pd", "--replicates", "2000", "--seed", "2")
    assert rc == 0 and json.loads(out)["statistic"] < 0.05
    rc, out, _ = run(capsys, "billingsley", "--seed", "1", "--n", "100000",
                     "--replicates", "2000")
    rec = json.loads(out)
    assert rc == 0 and rec["rho_inv_t"] == pytest.approx(1 - math.log(2), abs=1e-8)


@pytest.mark.parametrize("argv", [
    ["moments", "--n", "10", "--indices", "3,3"],
    ["moments", "--n", "10", "--indices", "a"],
    ["moments", "--n", "10", "--indices", "2", "--phi", "x"],
    ["coeffs", "--family", "polynomial-multiset-F2", "--phi", "2", "--N", "4"],
    ["intensity", "--intervals", "0.5:0.2", "--n", "10", "--seed", "1"],
    ["intensity", "--intervals", "0.2:0.5", "--seed", "1"],
    ["billingsley", "--seed", "1", "--intervals", "0.1:0.2,0.3:0.4"],
    ["sample", "--family", "pd", "--seed", "1", "--sparse"],
])
def test_domain_errors_exit_2(capsys, argv):
    rc, _, err = run(capsys, *argv)
    assert rc == 2 and err.startswith("pd-limits: error")


def test_missing_seed_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sample", "--n", "5"])
    assert exc.value.code == 2


def test_guard_exit_3(capsys):
    rc, _, err = run(capsys, "sample", "--n", "20000", "--seed", "1", "--replicates", "1")
    assert rc == 3 and "refused" in err
    rc, _, _ = run(capsys, "moments", "--n", "12", "--indices", "1", "--brute")
    assert rc == 3
