"""Smoke test for the `franson` extension module.

Build and install first:  pip install --no-build-isolation crates/py
"""

import math

import franson


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    p = franson.ModelParams(gamma_a=1.0, gamma_b=1.0, dt=0.05, n_steps=60, n_t=10)
    print(p)
    rec = franson.evolve(p)
    assert len(rec.times) == len(rec.pop_a) == p.n_steps + 1
    assert rec.norm_drift < 1e-8
    for t, a in zip(rec.times, rec.pop_a):
        assert close(a, math.exp(-t), 0.01), (t, a)
    _, b_exact = franson.ww_populations(rec.times[-1], 1.0, 1.0)
    assert close(rec.pop_b[-1], b_exact, 0.01)

    bad = franson.ModelParams(gamma_a=-1.0, gamma_b=1.0, dt=0.05, n_steps=10, n_t=0)
    try:
        bad.validate()
    except ValueError as e:
        assert "gamma_a" in str(e) and "n_t" in str(e)
    else:
        raise AssertionError("invalid parameters accepted")

    fb = franson.ModelParams.feedback_visibility()
    curve = franson.g2(fb)
    assert len(curve.tau) == len(curve.g2) == 2 * curve.n_det - 1
    assert close(curve.central_peak_tau, -fb.feedback_delay(), fb.dt + 1e-9)

    v_fb = franson.visibility(fb).visibility
    fb.feedback_enabled = False
    v_no = franson.visibility(fb).visibility
    exact = franson.visibility_closed_form(4.0, 4.0)
    print(f"V without feedback {v_no:.4f} (closed form {exact:.4f}), with feedback {v_fb:.4f}")
    assert close(v_no, exact, 0.02)
    assert close(v_fb, 0.51, 0.03)

    g = franson.g2_closed_form([-3.0, -2.0], 1.0, 1.0, 2.0, 0.0)
    assert g[0] == 0.0 and close(g[1], 0.25, 1e-12)

    m = franson.visibility_sweep([2.0], [2.0], dt=0.125)
    assert not m.failures and m.v_fb[0][0] > m.v_no_fb[0][0]
    print("python smoke test passed")


if __name__ == "__main__":
    main()
