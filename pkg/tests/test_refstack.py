from __future__ import annotations

import random

import numpy as np
import pytest

from cparchive.carvpath import ByteSet, Entity, Fragment, byte_set, parse_token
from cparchive.errors import EmptyByteSet, UnknownEntity
from cparchive.refstack import RefStack

from oracles import ByteCounter, intervals_of, random_fragments, token_of

UNIVERSE = 1 << 16


def test_merge_unmerge_worked_case():
    stack = RefStack()
    stack.add_entity(parse_token("0+5"))
    merged = stack.add_entity(parse_token("0+10"))
    assert stack.level(0) == ByteSet([(0, 10)])
    assert stack.level(1) == ByteSet([(0, 5)])
    assert merged.newly_hot == ByteSet([(5, 10)])
    unmerged = stack.remove_entity(parse_token("0+10"))
    assert stack.snapshot() == [ByteSet([(0, 5)])]
    assert unmerged.newly_cold == ByteSet([(5, 10)])


def test_second_reference_is_fully_overlapped():
    stack = RefStack()
    e = parse_token("0+10")
    stack.add_entity(e)
    again = stack.add_entity(e)
    assert again.fully_overlapped and not again.newly_hot
    assert len(stack) == 1
    assert not stack.remove_entity(e).newly_cold
    assert stack.remove_entity(e).newly_cold == ByteSet([(0, 10)])
    assert len(stack) == 0


def test_remove_unknown():
    with pytest.raises(UnknownEntity):
        RefStack().remove_entity(parse_token("0+1"))


def test_sparse_only_entity_changes_nothing():
    stack = RefStack()
    r = stack.add_entity(Entity.of([Fragment.sparse(100)]))
    assert not r.newly_hot and len(stack) == 0
    with pytest.raises(EmptyByteSet):
        stack.refcount_range(Entity.of([Fragment.sparse(100)]))


def test_disk_image_mailbox_mail_ranges():
    # a disk image holding a mailbox holding one mail; each level of nesting adds one reference
    image, mailbox, mail = parse_token("0+1000"), parse_token("100+500"), parse_token("200+50")
    stack = RefStack()
    for e in (image, mailbox, mail):
        stack.add_entity(e)
    assert stack.refcount_range(image) == (1, 3)
    assert stack.refcount_range(mailbox) == (2, 3)
    assert stack.refcount_range(mail) == (3, 3)


def test_count_stats():
    stack = RefStack()
    for t in ("0+100", "50+100", "60+10"):
        stack.add_entity(parse_token(t))
    st = stack.count_stats(parse_token("0+100"))
    assert st.bytes_at_count_1 == 50
    assert st.bytes_at_global_max_count == 10
    assert st.bytes_not_count_1 == 50
    assert st.weighted_count_sum == 100 + 50 + 10
    assert st.data_bytes == 100 and st.min_data_offset == 0 and st.max_count == 3


def test_whatif_matches_actual_growth():
    rng = random.Random(2)
    stack = RefStack()
    for _ in range(300):
        e = parse_token(token_of(random_fragments(rng, UNIVERSE, 6, 2048)))
        before = stack.pressure()
        predicted = stack.whatif(e)
        fresh = stack.count(e) == 0
        stack.add_entity(e)
        assert stack.pressure() - before == (predicted if fresh else 0)


def run_sequence(rng: random.Random, ops: int = 64) -> None:
    stack, oracle = RefStack(), ByteCounter(UNIVERSE)
    live: list[Entity] = []
    pool = [parse_token(token_of(random_fragments(rng, UNIVERSE, 8, 4096))) for _ in range(24)]
    for _ in range(ops):
        if live and rng.random() < 0.45:
            e = live.pop(rng.randrange(len(live)))
            ivs = byte_set(e).intervals
            got = stack.remove_entity(e).newly_cold
            want = oracle.remove(e.token, ivs)
        else:
            e = rng.choice(pool)
            live.append(e)
            ivs = byte_set(e).intervals
            got = stack.add_entity(e).newly_hot
            want = oracle.add(e.token, ivs)
        assert got.intervals == intervals_of(want)
        assert len(stack) == oracle.depth()
        for i in range(oracle.depth() + 1):
            assert stack.level(i).intervals == oracle.level(i)
        assert stack.pressure() == int(np.count_nonzero(oracle.counts))


def test_random_sequences_match_byte_counter():
    rng = random.Random(17)
    for _ in range(40):
        run_sequence(rng)
