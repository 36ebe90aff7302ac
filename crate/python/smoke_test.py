"""Smoke test for the fdcr Python extension.

Build and install first:
    maturin build --release -m crates/py/Cargo.toml -o dist && pip install dist/fdcr-*.whl
"""

import math

import fdcr


def main():
    gamma = fdcr.db_to_linear(6.0)
    hd = fdcr.linear_to_db(fdcr.hd_sinr_target(gamma))
    assert abs(hd - 13.77) < 0.01, hd

    # zero-radius ball reduces to the quadratic form itself
    a = [[2.0 + 0j, 0j], [0j, 1.0 + 0j]]
    x = [1.0 + 0j, 0j]
    assert abs(fdcr.worst_case_quadratic(a, x, 0.0) - 2.0) < 1e-12
    assert fdcr.worst_case_quadratic(a, x, 0.5) >= 2.0

    cfg = fdcr.SystemConfig(n_t=6, gamma_dl=gamma)
    assert cfg.n_t == 6
    res = fdcr.run_trial(cfg, seed=3, trial=0, schemes=["proposed", "baseline1"])
    outcomes = {o["scheme"]: o for o in res["outcomes"]}
    p, b1 = outcomes["proposed"], outcomes["baseline1"]
    if p["status"] == "feasible" and b1["status"] == "feasible":
        assert p["leakage"] <= b1["leakage"] * (1 + 1e-6)
    for o in res["outcomes"]:
        for audit in o["audits"]:
            assert audit["worst_total"] <= audit["tau"] * (1 + 1e-6)

    s = fdcr.Scenario.fig3(trials=2, seed=7, values=[0.02, 0.1], record_timing=False, schemes=["proposed"])
    out = s.run(jobs=1)
    csv = out.to_csv().splitlines()
    assert csv[0].startswith("scheme,axis_name,axis_value,nt")
    assert len(csv) == 3
    assert out.audit_failures() == 0
    for pt in out.points():
        if pt["feasible"]:
            assert math.isfinite(pt["mean_leakage_dbm"])

    try:
        fdcr.Scenario(trials=0)
    except ValueError:
        pass
    else:
        raise AssertionError("trials=0 accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
