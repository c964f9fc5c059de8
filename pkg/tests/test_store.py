"""Tests for the fingerprint/matrix/pattern stores: lifecycle transitions,
section exclusivity, persistence round trips and crash atomicity."""

import json

import numpy as np
import pytest

from cogwlan.behavior import BehaviorPattern, OperationalMatrix
from cogwlan.errors import (
    ConflictError,
    NotFoundError,
    PersistenceError,
    ValidationError,
)
from cogwlan.mlp import LayerSpec, weights_equal, zero_weights
from cogwlan.store import NodeStatus, NodeStore, PadlFingerprint, PatternHistory


def make_padl(tag="a"):
    return PadlFingerprint(
        attributes=(
            ("hardware_address", f"02:00:00:00:00:{tag}"),
            ("chipset", "ath9k"),
            ("radio_bands", "bg|n"),
            ("rf_cal_0", 0.125),
        )
    )


def make_om():
    return OperationalMatrix(generator_net=zero_weights(LayerSpec((4, 3, 2))), issued_at=1.0)


def make_pattern(t=1.0, fill=0.5):
    return BehaviorPattern(values=np.full(2, fill), produced_at=t)


class TestPadlFingerprint:
    def test_digest_ignores_attribute_order(self):
        a = PadlFingerprint(attributes=(("x", "1"), ("y", 2.0)))
        b = PadlFingerprint(attributes=(("y", 2.0), ("x", "1")))
        assert a.canonical_digest == b.canonical_digest

    def test_digest_differs_for_different_attributes(self):
        assert make_padl("a").canonical_digest != make_padl("b").canonical_digest

    def test_digest_is_fixed_length(self):
        assert len(make_padl().canonical_digest) == 64

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            PadlFingerprint(attributes=())

    def test_round_trip(self):
        p = make_padl()
        assert PadlFingerprint.from_obj(p.to_obj()) == p


class TestClassify:
    def test_empty_store_is_new(self):
        store = NodeStore()
        assert store.classify_padl(make_padl()) is NodeStatus.NEW

    def test_registered_is_authorized(self):
        store = NodeStore()
        store.register_node(make_padl(), make_om(), at=1.0)
        assert store.classify_padl(make_padl()) is NodeStatus.AUTHORIZED

    def test_denied_is_unauthorized(self):
        store = NodeStore()
        store.deny_node(make_padl(), at=1.0)
        assert store.classify_padl(make_padl()) is NodeStatus.UNAUTHORIZED


class TestRegister:
    def test_creates_empty_history_and_stores_om(self):
        store = NodeStore()
        rec = store.register_node(make_padl(), make_om(), at=2.0)
        assert rec.status is NodeStatus.AUTHORIZED
        assert len(store.training_set(rec.node_id)) == 0
        assert weights_equal(store.get_om(rec.node_id).generator_net, make_om().generator_net)

    def test_duplicate_registration_conflicts(self):
        store = NodeStore()
        store.register_node(make_padl(), make_om(), at=1.0)
        with pytest.raises(ConflictError):
            store.register_node(make_padl(), make_om(), at=2.0)

    def test_register_known_unauthorized_conflicts(self):
        store = NodeStore()
        store.deny_node(make_padl(), at=1.0)
        with pytest.raises(ConflictError):
            store.register_node(make_padl(), make_om(), at=2.0)


class TestRevoke:
    def test_purges_derived_data_and_moves_section(self):
        store = NodeStore()
        rec = store.register_node(make_padl(), make_om(), at=1.0)
        store.append_pattern(rec.node_id, make_pattern())
        store.revoke_node(rec.node_id, at=2.0)
        assert store.classify_padl(make_padl()) is NodeStatus.UNAUTHORIZED
        with pytest.raises(NotFoundError):
            store.get_om(rec.node_id)
        with pytest.raises(NotFoundError):
            store.training_set(rec.node_id)
        store.check_invariants()

    def test_double_revoke_not_found(self):
        store = NodeStore()
        rec = store.register_node(make_padl(), make_om(), at=1.0)
        store.revoke_node(rec.node_id, at=2.0)
        with pytest.raises(NotFoundError):
            store.revoke_node(rec.node_id, at=3.0)

    def test_revoked_padl_cannot_silently_reregister(self):
        store = NodeStore()
        rec = store.register_node(make_padl(), make_om(), at=1.0)
        store.revoke_node(rec.node_id, at=2.0)
        with pytest.raises(ConflictError):
            store.register_node(make_padl(), make_om(), at=3.0)


class TestReadmit:
    def test_restores_authorization_with_fresh_state(self):
        store = NodeStore()
        rec = store.register_node(make_padl(), make_om(), at=1.0)
        store.append_pattern(rec.node_id, make_pattern())
        store.revoke_node(rec.node_id, at=2.0)
        store.readmit_node(rec.node_id, make_om(), at=3.0)
        assert store.classify_padl(make_padl()) is NodeStatus.AUTHORIZED
        assert len(store.training_set(rec.node_id)) == 0

    def test_readmit_registered_is_validation_error(self):
        store = NodeStore()
        rec = store.register_node(make_padl(), make_om(), at=1.0)
        with pytest.raises(ValidationError):
            store.readmit_node(rec.node_id, make_om(), at=2.0)

    def test_readmit_unknown_not_found(self):
        store = NodeStore()
        with pytest.raises(NotFoundError):
            store.readmit_node("deadbeef", make_om(), at=1.0)


class TestOmAccess:
    def test_put_get_round_trip(self):
        store = NodeStore()
        rec = store.register_node(make_padl(), make_om(), at=1.0)
        om = make_om()
        om.generator_net.weights[0][:] = 0.25
        store.put_om(rec.node_id, om)
        assert weights_equal(store.get_om(rec.node_id).generator_net, om.generator_net)

    def test_get_unregistered_not_found(self):
        store = NodeStore()
        with pytest.raises(NotFoundError):
            store.get_om("deadbeef")

    def test_last_writer_wins(self):
        store = NodeStore()
        rec = store.register_node(make_padl(), make_om(), at=1.0)
        first = make_om()
        first.generator_net.weights[0][:] = 0.1
        second = make_om()
        second.generator_net.weights[0][:] = 0.9
        store.put_om(rec.node_id, first)
        store.put_om(rec.node_id, second)
        assert store.get_om(rec.node_id).generator_net.weights[0][0, 0] == 0.9


class TestPatternHistory:
    def test_appends_preserve_order(self):
        store = NodeStore()
        rec = store.register_node(make_padl(), make_om(), at=0.0)
        for t in (1.0, 2.0, 3.0):
            store.append_pattern(rec.node_id, make_pattern(t))
        hist = store.training_set(rec.node_id)
        assert [p.produced_at for p in hist.as_list()] == [1.0, 2.0, 3.0]

    def test_capacity_evicts_oldest(self):
        store = NodeStore(history_capacity=3)
        rec = store.register_node(make_padl(), make_om(), at=0.0)
        for t in (1.0, 2.0, 3.0, 4.0):
            store.append_pattern(rec.node_id, make_pattern(t))
        hist = store.training_set(rec.node_id)
        assert len(hist) == 3
        assert [p.produced_at for p in hist.as_list()] == [2.0, 3.0, 4.0]

    def test_fresh_history_is_empty(self):
        store = NodeStore()
        rec = store.register_node(make_padl(), make_om(), at=0.0)
        assert store.training_set(rec.node_id).as_list() == []

    def test_out_of_order_append_rejected(self):
        store = NodeStore()
        rec = store.register_node(make_padl(), make_om(), at=0.0)
        store.append_pattern(rec.node_id, make_pattern(5.0))
        with pytest.raises(ValidationError):
            store.append_pattern(rec.node_id, make_pattern(4.0))

    def test_append_unknown_not_found(self):
        store = NodeStore()
        with pytest.raises(NotFoundError):
            store.append_pattern("deadbeef", make_pattern())

    def test_clear_history(self):
        store = NodeStore()
        rec = store.register_node(make_padl(), make_om(), at=0.0)
        store.append_pattern(rec.node_id, make_pattern())
        store.clear_history(rec.node_id)
        assert len(store.training_set(rec.node_id)) == 0

    def test_history_capacity_validation(self):
        with pytest.raises(ValidationError):
            PatternHistory(node_id="x", capacity=0)


def populate(store):
    rec_a = store.register_node(make_padl("a"), make_om(), at=1.0)
    store.append_pattern(rec_a.node_id, make_pattern(2.0, 0.4))
    store.append_pattern(rec_a.node_id, make_pattern(3.0, 0.6))
    rec_b = store.register_node(make_padl("b"), make_om(), at=4.0)
    store.revoke_node(rec_b.node_id, at=5.0)
    store.deny_node(make_padl("c"), at=6.0)
    return rec_a


class TestPersistence:
    def test_reload_reproduces_state(self, tmp_path):
        store = NodeStore(tmp_path / "state")
        populate(store)
        want = store.snapshot_bytes()
        store.close()
        reloaded = NodeStore(tmp_path / "state")
        assert reloaded.snapshot_bytes() == want
        reloaded.check_invariants()

    def test_checkpoint_then_reload(self, tmp_path):
        store = NodeStore(tmp_path / "state")
        rec = populate(store)
        store.checkpoint()
        store.append_pattern(rec.node_id, make_pattern(9.0))
        want = store.snapshot_bytes()
        store.close()
        reloaded = NodeStore(tmp_path / "state")
        assert reloaded.snapshot_bytes() == want

    def test_torn_trailing_journal_line_discards_op(self, tmp_path):
        store = NodeStore(tmp_path / "state")
        rec_a = store.register_node(make_padl("a"), make_om(), at=1.0)
        store.register_node(make_padl("b"), make_om(), at=2.0)
        store.close()
        jpath = next((tmp_path / "state").glob("journal-*.jsonl"))
        raw = jpath.read_bytes()
        jpath.write_bytes(raw[: len(raw) // 2 + len(raw) // 4])  # tear the second record
        reloaded = NodeStore(tmp_path / "state")
        reloaded.check_invariants()
        assert reloaded.classify_padl(make_padl("a")) is NodeStatus.AUTHORIZED
        assert reloaded.classify_padl(make_padl("b")) is NodeStatus.NEW
        assert reloaded.get_om(rec_a.node_id) is not None

    def test_failed_journal_write_leaves_memory_unchanged(self, tmp_path):
        store = NodeStore(tmp_path / "state")

        class Boom:
            def write(self, _):
                raise OSError("disk full")

            def flush(self):
                pass

            def fileno(self):
                raise OSError("gone")

            def close(self):
                pass

        store._journal = Boom()
        with pytest.raises(PersistenceError):
            store.register_node(make_padl("a"), make_om(), at=1.0)
        assert store.classify_padl(make_padl("a")) is NodeStatus.NEW
        store.check_invariants()

    def test_interrupted_register_is_all_or_nothing(self, tmp_path):
        # simulate a crash at every byte boundary of the register record
        probe = NodeStore(tmp_path / "probe")
        probe.register_node(make_padl("a"), make_om(), at=1.0)
        probe.close()
        full = next((tmp_path / "probe").glob("journal-*.jsonl")).read_bytes()

        for cut in (1, len(full) // 3, len(full) - 2, len(full)):
            root = tmp_path / f"crash-{cut}"
            root.mkdir()
            (root / f"journal-{0:06d}.jsonl").write_bytes(full[:cut])
            store = NodeStore(root)
            store.check_invariants()
            status = store.classify_padl(make_padl("a"))
            if cut == len(full):
                assert status is NodeStatus.AUTHORIZED
                assert len(store.training_set(make_padl("a").canonical_digest)) == 0
            else:
                assert status is NodeStatus.NEW
            store.close()

    def test_interrupted_revoke_is_all_or_nothing(self, tmp_path):
        probe = NodeStore(tmp_path / "probe")
        rec = probe.register_node(make_padl("a"), make_om(), at=1.0)
        probe.append_pattern(rec.node_id, make_pattern(2.0))
        probe.checkpoint()
        probe.revoke_node(rec.node_id, at=3.0)
        probe.close()
        snap = (tmp_path / "probe" / "snapshot.json").read_bytes()
        gen = json.loads(snap)["journal_gen"]
        full = (tmp_path / "probe" / f"journal-{gen:06d}.jsonl").read_bytes()

        for cut in (0, len(full) // 2, len(full)):
            root = tmp_path / f"crash-{cut}"
            root.mkdir()
            (root / "snapshot.json").write_bytes(snap)
            (root / f"journal-{gen:06d}.jsonl").write_bytes(full[:cut])
            store = NodeStore(root)
            store.check_invariants()
            if cut == len(full):
                assert store.classify_padl(make_padl("a")) is NodeStatus.UNAUTHORIZED
                with pytest.raises(NotFoundError):
                    store.get_om(rec.node_id)
            else:
                assert store.classify_padl(make_padl("a")) is NodeStatus.AUTHORIZED
                assert len(store.training_set(rec.node_id)) == 1
            store.close()

    def test_snapshot_bytes_canonical_across_stores(self):
        a, b = NodeStore(), NodeStore()
        for s in (a, b):
            populate(s)
        assert a.snapshot_bytes() == b.snapshot_bytes()

    def test_mutation_after_close_rejected(self, tmp_path):
        store = NodeStore(tmp_path / "state")
        store.close()
        with pytest.raises(PersistenceError):
            store.register_node(make_padl(), make_om(), at=1.0)
