import json
import os

import pytest
from fastapi.testclient import TestClient

from blochhom import cli
from blochhom.service import app

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")
LAMINATE = os.path.abspath(os.path.join(CONFIG_DIR, "coefficients",
                                        "laminate_1d.toml"))


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


def properties_payload(out_dir):
    return {
        "kind": "properties",
        "space": {"d": 1, "n": 1, "n_trunc": 8},
        "coefficients": {"a": LAMINATE},
        "theta_points": [3],
        "out_dir": str(out_dir),
    }


def test_run_properties_endpoint(client, tmp_path):
    response = client.post("/v1/run/properties",
                           json=properties_payload(tmp_path / "svc"))
    assert response.status_code == 200
    body = response.json()
    assert body["all_pass"] is True
    assert body["rows"] > 0
    assert os.path.exists(body["csv_path"])
    assert os.path.exists(body["summary_path"])
    summary = json.load(open(body["summary_path"]))
    assert summary["config_digest"] == body["config_digest"]
    assert "wall_time" not in summary  # timing never enters the artifacts


def test_endpoint_error_handling(client, tmp_path):
    payload = properties_payload(tmp_path / "x")
    mismatched = dict(payload, kind="elliptic")
    assert client.post("/v1/run/properties", json=mismatched).status_code == 400
    assert client.post("/v1/run/unknown", json=payload).status_code == 404
    bad_space = dict(payload, space={"d": 7})
    assert client.post("/v1/run/properties", json=bad_space).status_code == 422
    missing_coef = dict(payload, coefficients={"a": "/nonexistent.toml"})
    assert client.post("/v1/run/properties",
                       json=missing_coef).status_code == 400


def test_elliptic_endpoint_summary_fields(client, tmp_path):
    payload = {
        "kind": "elliptic",
        "space": {"d": 1, "n": 1, "n_trunc": 10},
        "coefficients": {
            "a": LAMINATE,
            "s": os.path.abspath(os.path.join(CONFIG_DIR, "coefficients",
                                              "unit_s_1d.toml")),
        },
        "theta_points": [3],
        "eps": {"start": 0.1, "stop": 1e-3, "count": 4},
        "out_dir": str(tmp_path / "ell"),
        "options": {"doubling_check": False},
    }
    response = client.post("/v1/run/elliptic-sweep", json=payload)
    assert response.status_code == 200
    body = response.json()
    assert body["all_pass"] is True
    assert 0.85 <= body["slope"] <= 1.3
    assert body["max_err_ratio"] <= 1.0


def test_cli_pass_and_exit_codes(tmp_path, capsys):
    rc = cli.main(["properties",
                   "--config", os.path.join(CONFIG_DIR,
                                            "properties_laminate.toml"),
                   "--out", str(tmp_path / "cli")])
    out = capsys.readouterr().out
    assert rc == 0
    assert "all pass" in out
    assert os.path.exists(tmp_path / "cli" / "results.csv")


def test_cli_config_errors(tmp_path, capsys):
    rc = cli.main(["properties", "--config", str(tmp_path / "missing.toml")])
    assert rc == 2
    assert "error" in capsys.readouterr().err
    # kind mismatch between config and subcommand
    rc2 = cli.main(["maxwell-sweep",
                    "--config", os.path.join(CONFIG_DIR,
                                             "properties_laminate.toml")])
    assert rc2 == 2


def test_cli_parser_has_all_commands():
    parser = cli.build_parser()
    text = parser.format_help()
    for name in ("ahom", "elliptic-sweep", "maxwell-sweep", "abstract-check",
                 "properties", "serve"):
        assert name in text


def test_abstract_endpoint_needs_no_coefficients(client, tmp_path):
    payload = {
        "kind": "abstract",
        "out_dir": str(tmp_path / "abs"),
        "options": {"families": 2, "fibres_per_family": 2, "dim_min": 4,
                    "dim_max": 6, "eps_points": 4},
    }
    response = client.post("/v1/run/abstract-check", json=payload)
    assert response.status_code == 200
    assert response.json()["all_pass"] is True
