"""Smoke test for the Python bindings.

Build and install the extension first, e.g.

    pip install maturin
    maturin build -m crates/py/Cargo.toml --offline -o dist && pip install dist/fnch-*.whl

then run `python python/smoke.py`.
"""

import json
import math

import fnch


def main():
    p = fnch.pmf(2, 2, 2, 1, w=1.0)
    assert abs(p - 2 / 3) < 1e-15, p
    assert math.isinf(fnch.log_pmf(2, 2, 2, 3))
    total = sum(fnch.pmf(7, 5, 6, y, log_w=-0.4) for y in range(7))
    assert abs(total - 1.0) < 1e-12, total
    assert abs(math.exp(fnch.log_pmf_groups([2, 3, 1], [1, 1, 0])) - 0.4) < 1e-14

    draws = fnch.sample(10, 4, 8, size=500, seed=3, w=3.0)
    assert all(4 <= d <= 8 for d in draws)
    assert draws == fnch.sample(10, 4, 8, size=500, seed=3, w=3.0)

    prior = fnch.Prior(json.dumps({"family": "discrete_uniform", "a": 3, "b": 8}))
    assert prior.mean() == 5.5
    assert all(3 <= v <= 8 for v in prior.sample(100, seed=1))

    priors = json.dumps([
        {"family": "discrete_uniform", "a": 3, "b": 8},
        {"family": "discrete_uniform", "a": 3, "b": 8},
        {"family": "discrete_uniform", "a": 2, "b": 8},
    ])
    chain = fnch.fit_mcmc([2, 2, 1], priors, [0.0, 0.0, 0.0], json.dumps({"iterations": 4000, "burn_in": 1000}))
    assert chain.names == ["M1", "M2", "M3", "N"]
    assert len(chain) == 3000
    s = chain.summary()
    assert 2 <= s["M3"]["hpd_lo"] <= s["M3"]["mean"] <= s["M3"]["hpd_hi"] <= 8

    abc = fnch.fit_abc([2, 2, 1], priors, [0.0, 0.0, 0.0],
                       json.dumps({"iterations": 2000, "burn_in": 200, "epsilon": [0, 0, 0]}))
    assert min(abc.column("N")) >= 8
    assert abc.to_csv().startswith("draw,M1,M2,M3,N")

    try:
        fnch.pmf(2, 2, 9, 1)
    except ValueError as e:
        assert "empty support" in str(e)
    else:
        raise AssertionError("expected ValueError")

    run = fnch.run_pipeline(json.dumps({"seed": 1, "mcmc": {"iterations": 3000, "burn_in": 500}, "alphas": []}))
    assert len(run["step2"]["cells"]) == 20
    law_f = next(c for c in run["step2"]["cells"]
                 if c["key"]["program"] == "law_legal_sciences" and c["key"]["gender"] == "F")
    assert law_f["prob_w_above_one"] < 0.5

    print("smoke ok, fnch", fnch.__version__)


if __name__ == "__main__":
    main()
