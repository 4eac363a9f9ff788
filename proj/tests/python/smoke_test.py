"""Smoke checks of the python bindings against plain numpy oracles.

Run with PYTHONPATH pointing at the built package directory.
"""

import numpy as np

import aptkit


def softmax_rows(s):
    z = np.exp(s - s.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def sa_oracle(x, wq, wk, wv, wo, heads=1):
    d = x.shape[1]
    hd = d // heads
    outs = []
    q, k, v = x @ wq, x @ wk, x @ wv
    for h in range(heads):
        cols = slice(h * hd, (h + 1) * hd)
        a = softmax_rows((q[:, cols] / np.sqrt(hd)) @ k[:, cols].T)
        outs.append(a @ v[:, cols])
    return np.concatenate(outs, axis=1) @ wo


def random_instance(rng, n=9, d=12, p=5):
    x = rng.standard_normal((n, d))
    prompt = rng.standard_normal((p, d))
    weights = [0.2 * rng.standard_normal((d, d)) for _ in range(4)]
    return x, prompt, weights


def check_self_attention(rng):
    x, _, (wq, wk, wv, wo) = random_instance(rng)
    for heads in (1, 2, 3):
        got = aptkit.self_attention(x, wq, wk, wv, wo, heads=heads)
        want = sa_oracle(x, wq, wk, wv, wo, heads=heads)
        assert np.allclose(got, want, rtol=0, atol=1e-12), f"heads={heads}"


def check_prompt_extension(rng):
    x, prompt, (wq, wk, wv, wo) = random_instance(rng)
    x_out, p_out = aptkit.prompt_extended_attention(x, prompt, wq, wk, wv, wo)
    joint = sa_oracle(np.vstack([prompt, x]), wq, wk, wv, wo)
    p = prompt.shape[0]
    assert np.allclose(p_out, joint[:p], atol=1e-12)
    assert np.allclose(x_out, joint[p:], atol=1e-12)


def check_blocks(rng):
    x, prompt, (wq, wk, wv, wo) = random_instance(rng)
    blocks = aptkit.decompose_attention(x, prompt, wq, wk, wv, wo)
    a_i = blocks["input_input"]
    a_ip = blocks["input_prompt"]
    row_mass = a_i.sum(axis=1) + a_ip.sum(axis=1)
    assert np.allclose(row_mass, 1.0, atol=1e-12)
    g_i = np.asarray(blocks["gamma_input"])
    g_p = np.asarray(blocks["gamma_prompt"])
    assert np.allclose(a_ip.sum(axis=1), g_p / (g_i + g_p), atol=1e-12)

    # Input rows of the joint pass decompose into the standalone attention
    # rows, deflated by the prompt mass share, plus the diffusion term.
    share = (g_p / (g_i + g_p))[:, None]
    d = x.shape[1]
    ctx = softmax_rows(((x @ wq) / np.sqrt(d)) @ (x @ wk).T) @ (x @ wv)
    diffusion = aptkit.exact_diffusion(x, prompt, wq, wk, wv, wo)
    x_out, _ = aptkit.prompt_extended_attention(x, prompt, wq, wk, wv, wo)
    assert np.allclose(((1.0 - share) * ctx + diffusion) @ wo, x_out, atol=1e-11)


def check_module(rng):
    x, _, (wq, wk, wv, wo) = random_instance(rng)
    d = x.shape[1]
    p, r = 5, 3
    p_v = 0.3 * rng.standard_normal((p, d))
    w1 = 0.3 * rng.standard_normal((d, r))
    w2 = 0.3 * rng.standard_normal((r, d))

    keys = p_v @ w1 @ w2 + p_v
    assert np.allclose(aptkit.approx_keys(p_v, w1, w2), keys, atol=1e-13)
    want = keys.max() * np.maximum(x @ keys.T, 0.0) @ p_v
    assert np.allclose(aptkit.apt_delta(x, p_v, w1, w2), want, atol=1e-12)

    # A zero value table is an exact no-op on the attention output.
    dead = np.zeros((p, d))
    out = aptkit.apt_attention(x, wq, wk, wv, wo, dead, w1, np.zeros((r, d)))
    assert np.array_equal(out, aptkit.self_attention(x, wq, wk, wv, wo))

    gap = aptkit.vk_transform_gap(p_v, wq, wk, wv, wo)
    assert np.allclose(gap, p_v @ (wk @ wq.T - wv), atol=1e-13)


def check_cost_model():
    vilt = aptkit.cost_preset("vilt")
    assert aptkit.params_deep_prompt(vilt) == 1843200
    assert aptkit.params_shallow_prompt(vilt) == 153600
    assert aptkit.params_apt(vilt) == 1916940
    assert aptkit.params_apt(aptkit.cost_preset("meter-both")) == 3833880

    n, residual = aptkit.fit_sequence_length(vilt, 5.14e9)
    assert n > 0 and residual <= 1e-3
    assert aptkit.flops_apt(vilt) < aptkit.flops_deep_prompt(vilt)
    saving = aptkit.apt_saving_vs_deep(vilt)
    assert 0.7 < saving < 0.9

    spec = aptkit.CostSpec(name="desk", layers=2, d=16, n=12, p=6, r=3, sites=2)
    table = aptkit.cost_table_markdown(spec)
    for method in ("shallow", "deep", "apt"):
        assert method in table

    names = aptkit.cost_preset_names()
    assert "vilt" in names and "meter-both" in names


def check_identity_suite():
    checks = aptkit.run_identity_suite(instances=5)
    assert len(checks) == 5
    for check in checks:
        assert check["pass"], check
    broken = aptkit.run_identity_suite(instances=3, perturb=1e-3)
    assert not all(c["pass"] for c in broken)


def main():
    rng = np.random.default_rng(11)
    for fn in (
        check_self_attention,
        check_prompt_extension,
        check_blocks,
        check_module,
    ):
        fn(rng)
        print(f"ok: {fn.__name__}")
    check_cost_model()
    print("ok: check_cost_model")
    check_identity_suite()
    print("ok: check_identity_suite")
    print(f"python smoke: all checks passed (aptkit {aptkit.__version__})")


if __name__ == "__main__":
    main()
