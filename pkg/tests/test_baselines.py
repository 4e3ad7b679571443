"""Baseline backward-engine tests: gradient correctness, gating rules, linearity."""

import numpy as np
import pytest

import fbinet as fb
from fbinet.errors import ValidationError

import reference as ref
from conftest import build_net, tiny_conv_net

# Seeds are pinned to fixtures whose pre-activations stay clear of ReLU kinks
# at the finite-difference step size (h=1e-3), so central differences are valid.
FD_SEEDS = (101, 102, 103)


def fd_matches(arch, weights, x, class_index, rtol=1e-3, h=1e-3):
    """Per-pixel relative comparison of plain backprop against central differences."""
    trace, _ = fb.forward_trace(arch, weights, x)
    got = fb.backward_pass(trace, arch, weights, class_index, "plain").values.astype(np.float64)
    want = ref.fd_gradient_f64(arch, weights, x, class_index, h=h)
    scale = np.abs(want).max()
    floor = 1e-8 * max(scale, 1.0)
    denom = np.maximum(np.abs(want), np.abs(got))
    ok = (denom < floor) | (np.abs(got - want) <= rtol * denom)
    return bool(np.all(ok))


class TestBackwardPass:
    def test_scalar_chain_rule(self):
        # z = softmax-input of relu(2x) routed to class 0; d z0 / d x = 2 at x = 3
        arch, weights = build_net(
            (1, 1, 1),
            [("flatten", "flat"), ("dense", "fc1", 1, "relu"), ("dense", "fc2", 2, "softmax")],
        )
        weights.entries["fc1.weight"] = np.array([[2.0]], dtype=np.float32)
        weights.entries["fc1.bias"] = np.zeros(1, dtype=np.float32)
        weights.entries["fc2.weight"] = np.array([[1.0], [0.0]], dtype=np.float32)
        weights.entries["fc2.bias"] = np.zeros(2, dtype=np.float32)
        trace, _ = fb.forward_trace(arch, weights, fb.tensor([3.0], (1, 1, 1)))
        s = fb.backward_pass(trace, arch, weights, 0, "plain")
        np.testing.assert_array_equal(s.values, [[[2.0]]])

    @pytest.mark.parametrize("seed", FD_SEEDS)
    def test_finite_difference_oracle(self, seed):
        arch, weights = tiny_conv_net(seed=seed)
        rng = np.random.default_rng(seed + 1000)
        x = rng.standard_normal(arch.input_shape, dtype=np.float32)
        assert fd_matches(arch, weights, x, class_index=int(seed) % 3)

    def test_all_positive_weights_rules_agree(self, rng):
        arch, weights = tiny_conv_net(seed=7)
        for name, arr in weights.entries.items():
            weights.entries[name] = np.abs(arr) + np.float32(0.01)
        x = np.abs(rng.standard_normal(arch.input_shape, dtype=np.float32)) + 0.1
        trace, pred = fb.forward_trace(arch, weights, x)
        outs = [fb.backward_pass(trace, arch, weights, pred.top_class, rule).values
                for rule in ("plain", "guided", "deconvnet")]
        np.testing.assert_array_equal(outs[0], outs[1])
        np.testing.assert_array_equal(outs[0], outs[2])

    def test_relu_free_deconvnet_equals_plain(self, rng):
        arch, weights = tiny_conv_net(seed=9, relu=False)
        x = rng.standard_normal(arch.input_shape, dtype=np.float32)
        trace, pred = fb.forward_trace(arch, weights, x)
        a = fb.backward_pass(trace, arch, weights, pred.top_class, "deconvnet")
        b = fb.backward_pass(trace, arch, weights, pred.top_class, "plain")
        np.testing.assert_array_equal(a.values, b.values)

    def test_zero_input_zero_bias_guided_is_zero(self):
        arch, weights = tiny_conv_net(seed=13)
        for name, arr in weights.entries.items():
            if name.endswith(".bias"):
                weights.entries[name] = np.zeros_like(arr)
        x = np.zeros(arch.input_shape, dtype=np.float32)
        trace, pred = fb.forward_trace(arch, weights, x)
        s = fb.explain_guided(trace, arch, weights, pred.top_class)
        assert not s.values.any()

    def test_guided_support_subset_of_plain(self, rng):
        for seed in (17, 19, 23):
            arch, weights = tiny_conv_net(seed=seed)
            x = rng.standard_normal(arch.input_shape, dtype=np.float32)
            trace, pred = fb.forward_trace(arch, weights, x)
            guided = fb.explain_guided(trace, arch, weights, pred.top_class)
            plain = fb.backward_pass(trace, arch, weights, pred.top_class, "plain")
            assert np.all(plain.support | ~guided.support.astype(bool))

    def test_gate_masks_subset_per_relu_site(self, rng):
        # at every relu site: guided gate = plain gate AND positive-signal gate
        arch, weights = tiny_conv_net(seed=29)
        x = rng.standard_normal(arch.input_shape, dtype=np.float32)
        trace, pred = fb.forward_trace(arch, weights, x)
        log = []
        fb.explain_guided(trace, arch, weights, pred.top_class, op_log=log)
        gates = [e for e in log if e["op"] == "relu_gate"]
        assert gates
        z_by_name = {rec.name: rec.z for rec in trace.layers}
        for e in gates:
            z = z_by_name[e["layer"]]
            incoming = e["incoming"]
            guided_gate = (z > 0) & (incoming > 0)
            assert np.all((z > 0) | ~guided_gate)
            assert np.all((incoming > 0) | ~guided_gate)

    def test_seed_linearity(self, rng):
        # doubling the seed is exact in f32 and leaves every gate decision alone
        arch, weights = tiny_conv_net(seed=31)
        x = rng.standard_normal(arch.input_shape, dtype=np.float32)
        trace, pred = fb.forward_trace(arch, weights, x)
        for rule in ("plain", "guided", "deconvnet"):
            one = fb.backward_pass(trace, arch, weights, pred.top_class, rule)
            four = fb.backward_pass(trace, arch, weights, pred.top_class, rule, seed_scale=4.0)
            np.testing.assert_array_equal(four.values, np.float32(4.0) * one.values)

    def test_bad_rule(self, rng):
        arch, weights = tiny_conv_net(seed=37)
        x = rng.standard_normal(arch.input_shape, dtype=np.float32)
        trace, _ = fb.forward_trace(arch, weights, x)
        with pytest.raises(ValidationError):
            fb.backward_pass(trace, arch, weights, 0, "gradcam")


class TestUnpoolSwitches:
    def test_scatter_add_on_shared_argmax(self):
        # stride 1 windows share the single maximum; contributions add up
        x = np.zeros((1, 2, 3), dtype=np.float32)
        x[0, 0, 1] = 5.0
        _, switches = fb.maxpool2d(x, (2, 2), (1, 1))
        backward = fb.tensor([1.0, 2.0], (1, 1, 2))
        out = fb.unpool_switches(switches, backward, (2, 3))
        want = np.zeros((1, 2, 3), dtype=np.float32)
        want[0, 0, 1] = 3.0
        np.testing.assert_array_equal(out, want)

    def test_routes_to_recorded_positions(self, rng):
        x = rng.standard_normal((2, 6, 6), dtype=np.float32)
        pooled, switches = fb.maxpool2d(x, (2, 2), (2, 2))
        backward = rng.standard_normal(pooled.shape, dtype=np.float32)
        out = fb.unpool_switches(switches, backward, (6, 6))
        # non-switch positions are zero, switch positions carry the signal
        for c in range(2):
            flat = out[c].reshape(-1)
            np.testing.assert_array_equal(flat[switches[c].reshape(-1)],
                                          backward[c].reshape(-1))
            mask = np.ones(36, dtype=bool)
            mask[switches[c].reshape(-1)] = False
            assert not flat[mask].any()
