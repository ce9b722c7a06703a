"""Tests for core.plugin.generator module and the shipped catalog built on it."""
import pytest

from core.plugin import CanonicalOp, DialectVariant, dialect_descriptor, render_plugin_document, shipped_dialects
from core.simsensor.catalog import REFERENCE_MODELS, SHIPPED_MODELS, find_model


class TestDialectVariant:
    """Tests for DialectVariant."""

    def test_parse(self):
        variant = DialectVariant.parse("cfg-07")
        assert variant.family == "cfg"
        assert variant.index == 7
        assert variant.dialect_id == "cfg-07"

    @pytest.mark.parametrize("dialect", ["xml-00", "hello-13", "hello-1", "HELLO-01"])
    def test_parse_rejects_unknown(self, dialect):
        with pytest.raises(ValueError):
            DialectVariant.parse(dialect)

    def test_base_variant_has_no_knobs(self):
        variant = DialectVariant.parse("at-00")
        assert variant.revision == ""
        assert not variant.preamble
        assert not variant.renamed
        assert not variant.reverse_acks

    def test_knobs_follow_the_index(self):
        variant = DialectVariant.parse("reg-07")
        assert variant.revision == "07"
        assert variant.preamble
        assert variant.renamed
        assert variant.reverse_acks


class TestShippedDialects:
    """Tests for the 52 shipped dialects."""

    def test_count_and_uniqueness(self):
        dialects = shipped_dialects()
        assert len(dialects) == 52
        assert len(set(dialects)) == 52

    def test_every_dialect_parses(self):
        for dialect in shipped_dialects():
            parsed = dialect_descriptor(f"acme.{dialect}.v1", "Gauge", "acme", dialect)
            assert set(parsed.sequences) == set(CanonicalOp)

    def test_dialects_differ_in_exchanged_messages(self):
        """Test that no two dialects produce the same handshake exchange."""
        handshakes = set()
        for dialect in shipped_dialects():
            parsed = dialect_descriptor("acme.gauge.v1", "Gauge", "acme", dialect)
            script = parsed.script(CanonicalOp.HANDSHAKE)
            handshakes.add(tuple((step.send, step.expect) for step in script.steps))
        assert len(handshakes) == 52

    def test_render_is_deterministic(self):
        first = render_plugin_document("acme.gauge.v1", "Gauge", "acme", "hello-04")
        assert first == render_plugin_document("acme.gauge.v1", "Gauge", "acme", "hello-04")
        assert first.startswith("# Gauge by acme (hello dialect, variant hello-04)")

    def test_preamble_variant_starts_with_ping(self):
        parsed = dialect_descriptor("acme.gauge.v1", "Gauge", "acme", "at-01")
        first = parsed.script(CanonicalOp.HANDSHAKE).steps[0]
        assert first.send.verb == "PING"
        assert first.expect.verb == "PONG"

    def test_revision_is_sent_in_handshake(self):
        parsed = dialect_descriptor("acme.gauge.v1", "Gauge", "acme", "hello-02")
        assert parsed.script(CanonicalOp.HANDSHAKE).steps[-1].send.get("rev") == "02"

    def test_unknown_dialect_rejected(self):
        with pytest.raises(ValueError):
            render_plugin_document("acme.gauge.v1", "Gauge", "acme", "smtp-00")


class TestCatalog:
    """Tests that the catalog and the dialects line up."""

    def test_one_model_per_dialect(self):
        assert len(SHIPPED_MODELS) == 52
        assert sorted(m.dialect for m in SHIPPED_MODELS) == sorted(shipped_dialects())

    def test_model_names_unique(self):
        assert len({m.model for m in SHIPPED_MODELS}) == 52

    def test_plugin_ids(self):
        assert find_model("WaspTemp3").plugin_id == "libelium.wasptemp3.v1"

    def test_reference_models_are_base_variants(self):
        dialects = [find_model(name).dialect for name in REFERENCE_MODELS]
        assert dialects == ["hello-00", "at-00", "cfg-00"]

    def test_find_model_is_case_sensitive(self):
        assert find_model("wasptemp3") is None
        assert find_model("WaspTemp3", "other") is None

    def test_epc_only_for_epc_models(self):
        assert find_model("WaspTemp3").epc_for("a1b2c3d4e5f60708") is None
        epc = find_model("WaspAirTemp").epc_for("a1b2c3d4e5f60708")
        assert epc.startswith("urn:epc:id:sgtin:")
        assert epc.endswith(".waspairtemp.a1b2c3d4e5f60708")

    def test_ranges_are_valid(self):
        for model in SHIPPED_MODELS:
            assert model.sampling_range.min_s <= model.sampling_range.max_s
