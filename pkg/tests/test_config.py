import pytest

from abpsim.config import parse_config
from abpsim.errors import ConfigError

MINIMAL = "model:\n  potential: {preset: double_well1d}\nt_final: 10\n"


def rejects(text, key, match=None):
    with pytest.raises(ConfigError, match=match) as info:
        parse_config(text)
    assert info.value.key == key
    return info.value


class TestDefaults:
    def test_minimal(self):
        cfg = parse_config(MINIMAL)
        sim, setup = cfg.sim(), cfg.setup()
        assert sim.dt == 1e-3 and sim.t_final == 10.0
        assert setup.grid_size == 256
        assert setup.kernel.epsilon == 0.05 and setup.kernel.alpha == 0.9
        assert setup.norm.kind == "l1"

    def test_echo_is_resolved(self):
        cfg = parse_config(MINIMAL)
        assert '"t_final": 10.0' in cfg.echo()
        assert "refresh_stride" in cfg.echo()

    def test_custom_terms(self):
        text = ("model:\n  potential:\n    d: 2\n    terms: [[2.0, [1, 0]], [0.5, [0, 1], sin]]\n"
                "  xi: {m: 1}\nt_final: 1\n")
        pot = parse_config(text).potential()
        assert pot.d == 2 and len(pot.terms) == 2

    def test_mixture_kernel(self):
        text = MINIMAL + ("kernel:\n  family: mixture\n  components:\n"
                          "    - {epsilon: 0.05, center: 0.0}\n    - {epsilon: 0.1, center: 0.5}\n")
        assert parse_config(text).kernel().family == "mixture"

    def test_spde_document(self):
        cfg = parse_config("spde: {nonlinearity: none}\nt_final: 5\n")
        assert cfg.spde_model().nonlinearity == "none"


class TestErrors:
    def test_alpha(self):
        rejects(MINIMAL + "kernel: {alpha: 1.5}\n", "kernel.alpha", r"alpha must lie in \(0,1\]")

    def test_spde_curvature(self):
        with pytest.raises(ConfigError, match=r"pi\^2") as info:
            parse_config("spde: {c: 10}\nt_final: 5\n")
        assert info.value.key == "spde.c"

    def test_unknown_key(self):
        rejects(MINIMAL + "kernel: {width: 2}\n", "kernel.width", "unknown key")

    def test_type_mismatch(self):
        rejects(MINIMAL + "grid: {size: big}\n", "grid.size", "expected int")

    def test_boolean_is_not_a_number(self):
        rejects(MINIMAL + "sim: {dt: true}\n", "sim.dt", "boolean")

    def test_unknown_preset(self):
        rejects("model:\n  potential: {preset: banana}\nt_final: 1\n", "model.potential.preset")

    def test_missing_t_final(self):
        rejects("model:\n  potential: {preset: zero}\n", "sim.t_final")

    def test_step_cap(self):
        rejects(MINIMAL + "sim: {max_steps: 1000}\n", "sim.t_final", "exceed")

    def test_refresh_stride(self):
        rejects(MINIMAL + "grid: {refresh_stride: 4}\n", "grid.refresh_stride")

    def test_bad_yaml(self):
        rejects("model: [unclosed\n", "<document>")

    def test_missing_model(self):
        rejects("t_final: 3\n", "model")

    def test_variance_formula(self):
        rejects(MINIMAL + "variance: {formula: other}\n", "variance.formula")

    def test_malformed_term(self):
        rejects("model:\n  potential:\n    d: 1\n    terms: [[1.0, [1, 2]]]\nt_final: 1\n",
                "model.potential.terms[0]")
