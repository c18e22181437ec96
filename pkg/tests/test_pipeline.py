import itertools
import json
from dataclasses import replace

import numpy as np
import pytest

from effops.evalbench import predict
from effops.operators import apply_quantize
from effops.pipeline import (CheckpointError, MissingBaseError, PipelineError, PipelineParseError,
                             Registry, execute, is_valid, load, parse, save, validate)
from effops.pipeline import checkpoint


def rule_oracle(s: str) -> bool:
    """Group I (D, P, E) strictly before Group II (L, Q); D never after P."""
    last_g1 = max((i for i, c in enumerate(s) if c in "DPE"), default=-1)
    first_g2 = min((i for i, c in enumerate(s) if c in "LQ"), default=len(s))
    d_after_p = "D" in s and "P" in s and s.index("D") > s.index("P")
    return last_g1 < first_g2 and not d_after_p


def all_pipelines():
    for r in range(1, 6):
        for combo in itertools.combinations("DPELQ", r):
            for perm in itertools.permutations(combo):
                yield "".join(perm)


class TestParse:
    def test_worked_example(self):
        assert parse("DEPLQ").ops == ("D", "E", "P", "L", "Q")

    def test_empty(self):
        spec = parse("O")
        assert spec.ops == () and spec.to_string() == "O"

    @pytest.mark.parametrize("bad", ["DD", "X", "OD", "", "dq"])
    def test_rejects(self, bad):
        with pytest.raises(PipelineParseError):
            parse(bad)

    def test_roundtrip(self):
        for s in all_pipelines():
            assert parse(s).to_string() == s

    def test_prefixes(self):
        assert parse("EDP").prefixes() == ["E", "ED", "EDP"]


class TestValidate:
    def test_examples(self):
        assert validate(parse("DEPLQ")) == []
        assert any("D after P" in v for v in validate(parse("PD")))
        assert validate(parse("QD"))
        assert validate(parse("O")) == []

    def test_exhaustive_against_oracle(self):
        count = 0
        for s in all_pipelines():
            assert is_valid(s) == rule_oracle(s), s
            count += 1
        assert count == 325

    def test_is_valid_on_garbage(self):
        assert not is_valid("DXQ")


class TestCheckpoint:
    def _roundtrip(self, art, tmp_path):
        save(art, tmp_path / "ck")
        back = load(tmp_path / "ck")
        assert set(back.model.params) == set(art.model.params)
        for k, v in art.model.params.items():
            w = back.model.params[k]
            if hasattr(v, "qdata"):
                np.testing.assert_array_equal(w.qdata, v.qdata)
                assert w.scale == v.scale and w.qdata.dtype == np.int8
            else:
                np.testing.assert_array_equal(w.data, v.data)
                assert w.data.dtype == v.data.dtype
        assert (back.pipeline, back.seed, back.task_id, back.l_flag) == \
            (art.pipeline, art.seed, art.task_id, art.l_flag)
        assert back.model.has_exits == art.model.has_exits
        return back

    def test_float_roundtrip(self, small_lab, tmp_path):
        self._roundtrip(small_lab.artifact("E", 1), tmp_path)

    def test_quantized_roundtrip(self, small_lab, tmp_path):
        art = apply_quantize(small_lab.base(1))
        back = self._roundtrip(art, tmp_path)
        a = predict(art, small_lab.data.test)["logits"]
        np.testing.assert_array_equal(a, predict(back, small_lab.data.test)["logits"])

    def test_truncated_weights(self, small_lab, tmp_path):
        p = save(small_lab.base(1), tmp_path / "ck")
        w = p / checkpoint.WEIGHTS
        w.write_bytes(w.read_bytes()[:-10])
        with pytest.raises(CheckpointError):
            load(p)

    def test_flipped_byte(self, small_lab, tmp_path):
        p = save(small_lab.base(1), tmp_path / "ck")
        w = p / checkpoint.WEIGHTS
        raw = bytearray(w.read_bytes())
        raw[100] ^= 0xFF
        w.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            load(p)

    def test_version_mismatch(self, small_lab, tmp_path):
        p = save(small_lab.base(1), tmp_path / "ck")
        m = json.loads((p / checkpoint.MANIFEST).read_text())
        m["format_version"] = 99
        (p / checkpoint.MANIFEST).write_text(json.dumps(m))
        with pytest.raises(CheckpointError):
            load(p)

    def test_corrupt_manifest(self, small_lab, tmp_path):
        p = save(small_lab.base(1), tmp_path / "ck")
        (p / checkpoint.MANIFEST).write_text("{not json")
        with pytest.raises(CheckpointError):
            load(p)


class TestExecute:
    def test_empty_pipeline_is_identity(self, small_lab):
        base = small_lab.base(1)
        assert execute("O", base, small_lab.data) is base

    def test_invalid_spec(self, small_lab):
        with pytest.raises(PipelineError, match="D after P"):
            execute("PD", small_lab.base(1), small_lab.data)

    def test_missing_base(self, small_lab):
        with pytest.raises(MissingBaseError):
            execute("Q", None, small_lab.data)

    def test_failure_reports_position(self, small_lab):
        # a base that already carries exits makes E fail at its first position
        base = replace(small_lab.artifact("E", 1), pipeline="O")
        with pytest.raises(PipelineError, match="operator E at position 0"):
            execute("EQ", base, small_lab.data, small_lab.cfg.operators)

    def test_structure_of_full_pipeline(self, small_lab):
        art = small_lab.artifact("DEPLQ", 1)
        m = art.model
        assert art.pipeline == "DEPLQ" and art.l_flag
        assert m.n_layers == 2 and m.has_exits and m.quantized
        assert all(m.heads_kept(i) == 3 and m.ff_kept(i) == 32 for i in range(2))

    def test_prefix_cache_bit_identical(self, small_lab, small_cfg, tmp_path):
        base = small_lab.base(2)
        fresh = execute("EDP", base, small_lab.data, small_cfg.operators, Registry(tmp_path / "a"))
        reg = Registry(tmp_path / "b")
        execute("ED", base, small_lab.data, small_cfg.operators, reg)
        misses = reg.misses
        cached = execute("EDP", base, small_lab.data, small_cfg.operators, reg)
        assert reg.hits == 1 and reg.misses == misses + 1
        for k, v in fresh.model.params.items():
            np.testing.assert_array_equal(cached.model.params[k].data, v.data)

    def test_registry_layout(self, small_lab):
        small_lab.artifact("E", 1)
        p = small_lab.registry.path(small_lab.task_id, 1, "E")
        assert (p / "manifest.json").exists() and (p / "weights.bin").exists()
