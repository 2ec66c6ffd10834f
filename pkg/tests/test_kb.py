import datetime as dt
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from canopy import testkit
from canopy.errors import PersistenceError, ValidationError
from canopy.kb import (
    KBConfig,
    KnowledgeBase,
    default_similarity,
    load_kb,
    save_kb,
)

D1 = dt.date(2024, 1, 1)
D2 = dt.date(2024, 1, 2)


def state(kb):
    return sorted(
        (e.date.isoformat(), e.location, e.description, e.confidence)
        for e in kb.entries()
    )


class TestUpsertBranches:
    """The four update branches, with reinforcement taking precedence over
    conflict, and conflicts restricted to the same (date, location)."""

    def test_novel_entry_inserted_at_confidence_one(self):
        kb = KnowledgeBase()
        result = kb.upsert(D1, "Lab", "person P1 enters room")
        assert result.action == "inserted"
        assert result.entry.confidence == 1

    def test_exact_duplicate_reinforces(self):
        kb = KnowledgeBase()
        for _ in range(4):
            kb.upsert(D1, "Lab", "person P1 enters room")
        result = kb.upsert(D1, "Lab", "person P1 enters room")
        assert result.action == "reinforced"
        assert result.entry.confidence == 5

    def test_conflict_with_confident_entry_decays_and_discards(self):
        kb = KnowledgeBase()
        for _ in range(3):
            kb.upsert(D1, "Lab", "person P1 enters room")  # c=3
        result = kb.upsert(D1, "Lab", "person P1 exits room")
        assert result.action == "decayed"
        assert state(kb) == [("2024-01-01", "Lab", "person P1 enters room", 2)]

    def test_conflict_with_weak_entry_replaces(self):
        kb = KnowledgeBase()
        kb.upsert(D1, "Lab", "person P1 enters room")
        kb.upsert(D1, "Lab", "person P1 enters room")  # c=2
        result = kb.upsert(D1, "Lab", "person P1 exits room")
        assert result.action == "replaced"
        assert state(kb) == [("2024-01-01", "Lab", "person P1 exits room", 1)]

    def test_conflict_requires_matching_context(self):
        kb = KnowledgeBase()
        kb.upsert(D1, "Lab", "person P1 enters room")
        kb.upsert(D1, "Lab", "person P1 enters room")
        # same description pair but different location: no conflict, inserted
        result = kb.upsert(D1, "Lobby", "person P1 exits room")
        assert result.action == "inserted"
        assert len(kb) == 2

    def test_low_similarity_is_not_a_conflict(self):
        kb = KnowledgeBase()
        kb.upsert(D1, "Lab", "alpha beta gamma delta")
        result = kb.upsert(D1, "Lab", "epsilon zeta")
        assert result.action == "inserted"

    def test_tie_breaks_by_similarity_then_insertion_order(self):
        # the two stored entries have sim 1/3 to each other (so they coexist)
        # and both sit at sim 3/5 to the incoming entry: a tie
        kb = KnowledgeBase()
        kb.upsert(D1, "Lab", "a b c x")
        kb.upsert(D1, "Lab", "a b d y")
        result = kb.upsert(D1, "Lab", "a b c d")
        # ties resolve to the earlier-inserted candidate
        assert result.action == "replaced"
        descriptions = [e.description for e in kb.entries()]
        assert "a b c x" not in descriptions
        assert "a b d y" in descriptions
        assert "a b c d" in descriptions

    def test_higher_similarity_wins_over_order(self):
        # stored entries at sim 0.5 to each other coexist (threshold is
        # strict); the later one is closer to the incoming entry and wins
        kb = KnowledgeBase()
        kb.upsert(D1, "Lab", "a b c x")    # sim 3/5 to new
        kb.upsert(D1, "Lab", "a b c d e")  # sim 4/5 to new: strongest conflict
        result = kb.upsert(D1, "Lab", "a b c d")
        assert result.action == "replaced"
        descriptions = [e.description for e in kb.entries()]
        assert "a b c d e" not in descriptions
        assert "a b c x" in descriptions

    def test_malformed_entry_rejected(self):
        kb = KnowledgeBase()
        with pytest.raises(ValidationError):
            kb.upsert(D1, "", "something")
        with pytest.raises(ValidationError):
            kb.upsert(D1, "Lab", "  ")
        with pytest.raises(ValidationError):
            kb.upsert("2024-01-01", "Lab", "something")


class TestConfidenceProperties:
    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.sampled_from([D1, D2]),
                st.sampled_from(["Lab", "Lobby"]),
                st.sampled_from(
                    ["a b", "a c", "b c", "a b c", "d e", "a b d", "c d e"]
                ),
            ),
            max_size=60,
        )
    )
    def test_confidence_always_within_bounds(self, ops):
        kb = KnowledgeBase(KBConfig(c_max=5))
        for date, loc, desc in ops:
            kb.upsert(date, loc, desc)
        assert all(1 <= e.confidence <= 5 for e in kb.entries())

    def test_reinforcement_caps_at_c_max(self):
        kb = KnowledgeBase(KBConfig(c_max=10))
        for _ in range(25):
            kb.upsert(D1, "Lab", "person P1 enters room")
        assert [e.confidence for e in kb.entries()] == [10]

    def test_self_correction_converges(self):
        kb = KnowledgeBase(KBConfig(c_max=10))
        for _ in range(10):
            kb.upsert(D1, "Lab", "person P1 enters room")  # A at c_max
        upserts_of_b = 0
        for _ in range(2 * 10):
            kb.upsert(D1, "Lab", "person P1 exits room")
            upserts_of_b += 1
            if any(e.description == "person P1 exits room" for e in kb.entries()):
                break
        assert upserts_of_b <= 2 * 10
        assert any(e.description == "person P1 exits room" for e in kb.entries())

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            KBConfig(c_max=2)
        with pytest.raises(ValidationError):
            KBConfig(tau_sim=1.0)


class TestOracleEquivalence:
    DESCS = ["a b", "a c", "b c", "a b c", "d"]

    def run_both(self, ops, c_max=10, tau_sim=0.5):
        kb = KnowledgeBase(KBConfig(c_max=c_max, tau_sim=tau_sim))
        for d, l, s in ops:
            kb.upsert(dt.date.fromisoformat(d), l, s)
        expected = sorted(testkit.oracle_kb(ops, c_max, tau_sim, default_similarity))
        assert state(kb) == expected

    def test_exhaustive_short_sequences(self):
        # every sequence of up to 3 upserts over a reduced alphabet
        atoms = [("2024-01-01", "Lab", s) for s in self.DESCS[:3]]
        for n in (1, 2, 3):
            for ops in itertools.product(atoms, repeat=n):
                self.run_both(list(ops))

    def test_random_long_sequences(self):
        rng = np.random.default_rng(11)
        for _ in range(150):
            n = int(rng.integers(1, 51))
            ops = [
                (
                    str(rng.choice(["2024-01-01", "2024-01-02"])),
                    str(rng.choice(["Lab", "Lobby"])),
                    str(rng.choice(self.DESCS)),
                )
                for _ in range(n)
            ]
            self.run_both(ops)


class TestRetrieve:
    def test_empty_kb(self):
        kb = KnowledgeBase()
        assert kb.retrieve() == ([], [])

    def test_priority_tier_ordering(self):
        kb = KnowledgeBase(KBConfig(tau_conf=3))
        for _ in range(5):
            kb.upsert(D1, "Lab", "high confidence fact")
        kb.upsert(D1, "Lab", "new fact")
        priority, rest = kb.retrieve(date_range=(D1, D1))
        assert [e.description for e in priority] == ["high confidence fact"]
        assert [e.description for e in rest] == ["new fact"]

    def test_filters_apply(self):
        kb = KnowledgeBase()
        kb.upsert(D1, "Lab", "fact lab")
        kb.upsert(D2, "Lobby", "fact lobby")
        priority, rest = kb.retrieve(locations={"Lobby"})
        assert [e.description for e in priority + rest] == ["fact lobby"]
        priority, rest = kb.retrieve(date_range=(D1, D1))
        assert [e.description for e in priority + rest] == ["fact lab"]

    def test_random_cases_match_filter_sort_oracle(self):
        rng = np.random.default_rng(23)
        descs = ["a b", "a c", "b c d", "d e", "a e"]
        for _ in range(100):
            kb = KnowledgeBase(KBConfig(tau_conf=int(rng.integers(1, 5))))
            for _ in range(int(rng.integers(0, 30))):
                kb.upsert(
                    dt.date.fromisoformat(str(rng.choice(["2024-01-01", "2024-01-02"]))),
                    str(rng.choice(["Lab", "Lobby"])),
                    str(rng.choice(descs)),
                )
            date_range = (D1, D1) if rng.random() < 0.5 else None
            locations = {"Lab"} if rng.random() < 0.5 else None
            query = str(rng.choice(descs)) if rng.random() < 0.5 else None
            priority, rest = kb.retrieve(date_range, locations, query)

            # brute-force reference: filter then stable sort
            matched = [
                e
                for e in kb.entries()
                if (date_range is None or date_range[0] <= e.date <= date_range[1])
                and (locations is None or e.location in locations)
            ]
            sim = (
                (lambda e: default_similarity(query, e.description))
                if query
                else (lambda e: 0.0)
            )
            expected = sorted(matched, key=lambda e: (-e.confidence, -sim(e), e.seq))
            expected_priority = [e for e in expected if e.confidence >= kb.cfg.tau_conf]
            expected_rest = [e for e in expected if e.confidence < kb.cfg.tau_conf]
            assert priority == expected_priority
            assert rest == expected_rest


class TestDefaultSimilarity:
    def test_identical(self):
        assert default_similarity("P1 enters the room", "P1 enters the room") == 1.0

    def test_disjoint(self):
        assert default_similarity("alpha beta", "gamma delta") == 0.0

    def test_worked_example(self):
        assert default_similarity("person A enters room", "person A exits room") == 0.6

    def test_case_and_punctuation_folded(self):
        assert default_similarity("P1 Enters, Room!", "p1 enters room") == 1.0


class TestPersistence:
    def test_round_trip(self, tmp_path):
        kb = KnowledgeBase(KBConfig(c_max=7, tau_sim=0.4, tau_conf=2))
        kb.upsert(D1, "Lab", "person P1 enters room")
        kb.upsert(D1, "Lab", "person P1 enters room")
        kb.upsert(D2, "Lobby", "P2 waits")
        path = tmp_path / "kb.jsonl"
        save_kb(kb, path)
        loaded = load_kb(path)
        assert state(loaded) == state(kb)
        assert loaded.cfg == kb.cfg

    def test_empty_file_is_empty_kb(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        path.write_text("")
        kb = load_kb(path)
        assert len(kb) == 0

    def test_thousand_entries_count_preserved(self, tmp_path):
        kb = KnowledgeBase()
        for i in range(1000):
            kb.upsert(D1, f"loc{i}", f"fact number {i}")
        assert len(kb) == 1000
        path = tmp_path / "kb.jsonl"
        save_kb(kb, path)
        assert len(load_kb(path)) == 1000

    def test_corrupt_file_rejected(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        path.write_text('{"type":"kb_config","version":1,"c_max":10,"tau_sim":0.5,'
                        '"tau_conf":3}\n{broken\n')
        with pytest.raises(PersistenceError, match="line 2"):
            load_kb(path)

    def test_version_mismatch_rejected(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        path.write_text('{"type":"kb_config","version":9,"c_max":10,"tau_sim":0.5,'
                        '"tau_conf":3}\n')
        with pytest.raises(PersistenceError, match="version"):
            load_kb(path)

    def test_out_of_range_confidence_rejected(self, tmp_path):
        path = tmp_path / "kb.jsonl"
        path.write_text(
            '{"type":"kb_config","version":1,"c_max":10,"tau_sim":0.5,"tau_conf":3}\n'
            '{"d":"2024-01-01","l":"Lab","s":"x","c":0}\n'
        )
        with pytest.raises(PersistenceError, match="confidence"):
            load_kb(path)

    def test_compact_drops_unreinforced(self, tmp_path):
        kb = KnowledgeBase()
        kb.upsert(D1, "Lab", "keep me")
        kb.upsert(D1, "Lab", "keep me")
        kb.upsert(D1, "Lobby", "drop me")
        assert kb.compact() == 1
        assert [e.description for e in kb.entries()] == ["keep me"]
